//! Column-pivoted QR least squares.
//!
//! All estimators solve through this routine: it is rank-revealing, it never
//! forms the normal equations, and on rank deficiency it can name the column
//! the pivoting pushed past the numerical rank.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug)]
pub(crate) struct LeastSquaresFit {
    pub coef: Vec<f64>,
    /// (X'X)^{-1}, in original column order.
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

pub(crate) fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<LeastSquaresFit> {
    let n = x.nrows();
    let p = x.ncols();
    debug_assert_eq!(names.len(), p);
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot identify {p} coefficients (need at least {})",
            p + 1
        )));
    }

    let qr = x.clone().col_piv_qr();
    let r = qr.r();

    // Column order after pivoting: pivoted column c came from original
    // column perm[c]. The sequence records the same swaps the factorization
    // applied to the columns, in order.
    let mut perm_vec = DVector::<usize>::from_iterator(p, 0..p);
    qr.p().permute_rows(&mut perm_vec);
    let perm: Vec<usize> = perm_vec.iter().copied().collect();

    let r00 = r[(0, 0)].abs();
    let tol = f64::EPSILON * (n.max(p) as f64) * r00.max(f64::MIN_POSITIVE);
    let rank = (0..p).take_while(|&k| r[(k, k)].abs() > tol).count();
    if rank < p {
        return Err(Error::IllConditioned {
            column: names[perm[rank]].clone(),
        });
    }

    // gamma solves R gamma = (Q' y)[..p]; scatter back through the pivots.
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let qty_top = DVector::from_fn(p, |i, _| qty[i]);
    let gamma = r
        .solve_upper_triangular(&qty_top)
        .ok_or_else(|| Error::IllConditioned {
            column: names[perm[rank.saturating_sub(1)]].clone(),
        })?;
    let mut coef = vec![0.0; p];
    for c in 0..p {
        coef[perm[c]] = gamma[c];
    }

    // (X'X)^{-1} = P R^{-1} R^{-T} P'
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .expect("R invertible at this rank");
    let m = &r_inv * r_inv.transpose();
    let mut xtx_inv = DMatrix::zeros(p, p);
    for c in 0..p {
        for d in 0..p {
            xtx_inv[(perm[c], perm[d])] = m[(c, d)];
        }
    }

    let coef_vec = DVector::from_column_slice(&coef);
    let residuals = y - x * &coef_vec;
    let rss = residuals.iter().map(|e| e * e).sum();

    Ok(LeastSquaresFit {
        coef,
        xtx_inv,
        residuals,
        rss,
    })
}
