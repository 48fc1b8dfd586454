//! Rendering of estimation results as CSV and as the messages-received
//! comparison table (coefficient with SE in parentheses, significance stars,
//! R-squared rows, F row).

use super::{EstimationResult, TwoStageResult};

/// Significance stars: *p<0.05; **p<0.01; ***p<0.001.
pub fn significance_stars(p_value: f64) -> &'static str {
    if p_value < 0.001 {
        "***"
    } else if p_value < 0.01 {
        "**"
    } else if p_value < 0.05 {
        "*"
    } else {
        ""
    }
}

/// One row per coefficient: `model,term,coefficient,std_error,t_stat,p_value`.
pub fn results_to_csv(results: &[&EstimationResult]) -> String {
    let mut out = String::from("model,term,coefficient,std_error,t_stat,p_value\n");
    for r in results {
        for c in &r.coefficients {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.model_tag, c.name, c.estimate, c.std_error, c.t_stat, c.p_value
            ));
        }
    }
    out
}

/// One column of the comparison table.
pub struct ComparisonColumn<'a> {
    pub title: String,
    pub result: &'a EstimationResult,
    pub includes_controls: bool,
    pub includes_user_fe: bool,
    pub includes_time_fe: bool,
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "Yes"
    } else {
        "No"
    }
}

/// Markdown table comparing the messages-received coefficient across models,
/// in the usual regression-table layout.
pub fn comparison_markdown(dependent: &str, term: &str, columns: &[ComparisonColumn]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "| Dependent variable: {dependent} |{}\n",
        " |".repeat(columns.len())
    ));
    out.push_str(&format!("|---{}\n", "|---".repeat(columns.len())));

    let row = |label: &str, cells: Vec<String>| {
        let mut line = format!("| {label} |");
        for c in cells {
            line.push_str(&format!(" {c} |"));
        }
        line.push('\n');
        line
    };

    out.push_str(&row(
        "",
        columns.iter().map(|c| c.title.clone()).collect(),
    ));
    out.push_str(&row(
        "Messages Received",
        columns
            .iter()
            .map(|c| match c.result.coefficient(term) {
                Some(coef) => format!(
                    "{:.3}{} ({:.3})",
                    coef.estimate,
                    significance_stars(coef.p_value),
                    coef.std_error
                ),
                None => "-".to_string(),
            })
            .collect(),
    ));
    out.push_str(&row(
        "Includes Controls",
        columns
            .iter()
            .map(|c| yes_no(c.includes_controls).to_string())
            .collect(),
    ));
    out.push_str(&row(
        "Includes User FE",
        columns
            .iter()
            .map(|c| yes_no(c.includes_user_fe).to_string())
            .collect(),
    ));
    out.push_str(&row(
        "Includes Time FE",
        columns
            .iter()
            .map(|c| yes_no(c.includes_time_fe).to_string())
            .collect(),
    ));
    out.push_str(&row(
        "R²",
        columns
            .iter()
            .map(|c| format!("{:.3}", c.result.r_squared))
            .collect(),
    ));
    out.push_str(&row(
        "Adjusted R²",
        columns
            .iter()
            .map(|c| format!("{:.3}", c.result.adj_r_squared))
            .collect(),
    ));
    out.push_str(&row(
        "F-Statistic",
        columns
            .iter()
            .map(|c| {
                if c.result.f_statistic.is_finite() {
                    format!(
                        "{:.4}{}",
                        c.result.f_statistic,
                        significance_stars(c.result.f_p_value)
                    )
                } else {
                    "-".to_string()
                }
            })
            .collect(),
    ));
    out.push_str(&row(
        "Observations",
        columns
            .iter()
            .map(|c| c.result.n_observations.to_string())
            .collect(),
    ));
    out.push_str(&format!(
        "\nNote: *p<0.05; **p<0.01; ***p<0.001\n"
    ));
    out
}

/// Stage-1 markdown table for one or more experiments (columns).
pub fn first_stage_markdown(columns: &[(String, &TwoStageResult)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "| Dependent variable: Messages Received |{}\n",
        " |".repeat(columns.len())
    ));
    out.push_str(&format!("|---{}\n", "|---".repeat(columns.len())));
    let mut title_row = String::from("| |");
    let mut coef_row = String::from("| Peer treatment |");
    let mut r2_row = String::from("| R² |");
    let mut f_row = String::from("| First-stage F |");
    for (title, ts) in columns {
        let gamma = ts
            .first_stage
            .coefficient("peer_treatment")
            .expect("stage-1 coefficient");
        title_row.push_str(&format!(" {title} |"));
        coef_row.push_str(&format!(
            " {:.3}{} ({:.3}) |",
            gamma.estimate,
            significance_stars(gamma.p_value),
            gamma.std_error
        ));
        r2_row.push_str(&format!(" {:.4} |", ts.first_stage.r_squared));
        f_row.push_str(&format!(" {:.1} |", ts.first_stage_f));
    }
    out.push_str(&title_row);
    out.push('\n');
    out.push_str(&coef_row);
    out.push('\n');
    out.push_str(&r2_row);
    out.push('\n');
    out.push_str(&f_row);
    out.push('\n');
    out.push_str("\nNote: *p<0.05; **p<0.01; ***p<0.001\n");
    out
}
