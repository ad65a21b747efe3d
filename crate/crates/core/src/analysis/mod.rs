//! Analyses over dataset summaries: pairwise NLL ratio matrices and
//! mixed-effects regressions of metric averages on model size and training
//! budget.

mod regression;

pub use regression::{
    center_predictors, fit_mixed_model, fit_with_variance_ratios, residual_diagnostics,
    residuals_to_csv, Coefficient, RegressionFit, RegressionRow, ResidualPoint,
    VarianceComponent, REFERENCE_BUDGET_T, REFERENCE_PARAMS_B,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DatasetSummary;

/// Pairwise NLL ratios: `cells[r][c]` is mean_nll(column dataset) divided by
/// mean_nll(row dataset), so a large value means the column dataset looks far
/// less familiar to the model than the row dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMatrix {
    pub datasets: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

impl RatioMatrix {
    pub fn cell(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.datasets.iter().position(|d| d == row)?;
        let c = self.datasets.iter().position(|d| d == col)?;
        Some(self.cells[r][c])
    }

    /// CSV with dataset headers, one row per dataset, cells at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (r, d) in self.datasets.iter().enumerate() {
            out.push_str(d);
            for c in 0..self.datasets.len() {
                out.push_str(&format!(",{}", self.cells[r][c]));
            }
            out.push('\n');
        }
        out
    }
}

/// Build the ratio matrix for one model's summaries; dataset order follows
/// input order.
pub fn ratio_matrix(summaries: &[DatasetSummary]) -> Result<RatioMatrix> {
    if summaries.is_empty() {
        return Err(Error::Validation("no summaries".to_string()));
    }
    let mut seen = BTreeSet::new();
    for s in summaries {
        if !seen.insert(s.dataset.as_str()) {
            return Err(Error::Validation(format!(
                "more than one summary for dataset {:?}",
                s.dataset
            )));
        }
        if !(s.mean_nll > 0.0) {
            return Err(Error::Domain(format!(
                "mean_nll for {:?} must be positive, got {}",
                s.dataset, s.mean_nll
            )));
        }
    }
    let datasets: Vec<String> = summaries.iter().map(|s| s.dataset.clone()).collect();
    let cells = summaries
        .iter()
        .map(|row| {
            summaries
                .iter()
                .map(|col| col.mean_nll / row.mean_nll)
                .collect()
        })
        .collect();
    Ok(RatioMatrix { datasets, cells })
}

/// Static model metadata joined onto summaries for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model: String,
    pub family: String,
    pub parameters_b: f64,
    /// Pretraining token budget in trillions; absent when unpublished.
    pub budget_t: Option<f64>,
}

/// Parse "model,family,parameters_b,budget_t[,notes]" CSV.
pub fn parse_model_info_csv(text: &str) -> Result<Vec<ModelInfo>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(Error::Parse {
                path: "<model-info>".to_string(),
                line: idx + 1,
                reason: format!("expected at least 4 fields, got {}", fields.len()),
            });
        }
        let parameters_b: f64 = fields[2].parse().map_err(|_| Error::Parse {
            path: "<model-info>".to_string(),
            line: idx + 1,
            reason: format!("bad parameters_b: {:?}", fields[2]),
        })?;
        let budget_t = if fields[3].trim().is_empty() {
            None
        } else {
            Some(fields[3].parse().map_err(|_| Error::Parse {
                path: "<model-info>".to_string(),
                line: idx + 1,
                reason: format!("bad budget_t: {:?}", fields[3]),
            })?)
        };
        out.push(ModelInfo {
            model: fields[0].to_string(),
            family: fields[1].to_string(),
            parameters_b,
            budget_t,
        });
    }
    Ok(out)
}

/// One cell of a model-by-dataset average table.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgCell {
    pub model: String,
    pub dataset: String,
    pub value: f64,
}

/// Parse a wide table: header "model,<dataset>,<dataset>,...", one row per
/// model.
pub fn parse_avg_table_csv(text: &str) -> Result<Vec<AvgCell>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: "<avg-table>".to_string(),
        line: 1,
        reason: "empty table".to_string(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"model") {
        return Err(Error::Parse {
            path: "<avg-table>".to_string(),
            line: 1,
            reason: "first column must be \"model\"".to_string(),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                path: "<avg-table>".to_string(),
                line: idx + 1,
                reason: format!(
                    "expected {} fields, got {}",
                    columns.len(),
                    fields.len()
                ),
            });
        }
        for (col, field) in columns.iter().zip(&fields).skip(1) {
            out.push(AvgCell {
                model: fields[0].to_string(),
                dataset: col.to_string(),
                value: field.parse().map_err(|_| Error::Parse {
                    path: "<avg-table>".to_string(),
                    line: idx + 1,
                    reason: format!("bad value {field:?}"),
                })?,
            });
        }
    }
    Ok(out)
}

/// Join average cells with model metadata into regression rows (uncentered).
pub fn build_regression_rows(cells: &[AvgCell], info: &[ModelInfo]) -> Result<Vec<RegressionRow>> {
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let meta = info
            .iter()
            .find(|m| m.model == cell.model)
            .ok_or_else(|| {
                Error::Validation(format!("no model metadata for {:?}", cell.model))
            })?;
        rows.push(RegressionRow {
            model: cell.model.clone(),
            parameters_b: meta.parameters_b,
            budget_t: meta.budget_t,
            dataset: cell.dataset.clone(),
            tokenizer_family: meta.family.clone(),
            response: cell.value,
        });
    }
    Ok(rows)
}

/// Side-by-side coefficient block for a set of fits: one column per response,
/// estimates with standard errors in parentheses and significance stars.
pub fn fits_to_text(fits: &[RegressionFit]) -> String {
    let terms = ["Intercept", "Parameters", "Training budget"];
    let mut out = String::new();
    out.push_str(&format!("{:<18}", ""));
    for fit in fits {
        out.push_str(&format!("{:<24}", fit.response));
    }
    out.push('\n');
    for (i, term) in terms.iter().enumerate() {
        out.push_str(&format!("{term:<18}"));
        for fit in fits {
            let c = &fit.coefficients[i];
            out.push_str(&format!(
                "{:<24}",
                format!("{:.3} ({:.3}) {}", c.estimate, c.std_error, c.stars)
            ));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<18}", "Random intercepts"));
    for fit in fits {
        let vars: Vec<String> = fit
            .random
            .iter()
            .map(|v| format!("{}={:.4}", v.group, v.variance))
            .collect();
        out.push_str(&format!("{:<24}", vars.join(" ")));
    }
    out.push('\n');
    out.push_str("*** p < 0.001, ** p < 0.01, * p < 0.05\n");
    out
}

/// Per-coefficient CSV rows across fits.
pub fn fits_to_csv(fits: &[RegressionFit]) -> String {
    let mut out = String::from("response,term,estimate,std_error,z,p_value,stars\n");
    for fit in fits {
        for c in &fit.coefficients {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fit.response, c.term, c.estimate, c.std_error, c.z, c.p_value, c.stars
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(dataset: &str, nll: f64) -> DatasetSummary {
        DatasetSummary {
            dataset: dataset.to_string(),
            model: "m".to_string(),
            mean_nll: nll,
            mean_ngram: 0.5,
            doc_count: 1,
        }
    }

    #[test]
    fn diagonal_is_one() {
        let m = ratio_matrix(&[summary("a", 0.4), summary("b", 0.8)]).unwrap();
        assert_eq!(m.cell("a", "a"), Some(1.0));
        assert_eq!(m.cell("b", "b"), Some(1.0));
    }

    #[test]
    fn reciprocal_symmetry() {
        let m = ratio_matrix(&[summary("a", 0.15), summary("b", 0.85), summary("c", 0.58)])
            .unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let prod = m.cells[r][c] * m.cells[c][r];
                assert!((prod - 1.0).abs() < 1e-9, "cells[{r}][{c}]");
            }
        }
    }

    #[test]
    fn column_over_row_orientation() {
        // column dataset NLL / row dataset NLL
        let m = ratio_matrix(&[summary("defects4j", 0.15), summary("new-java", 0.85)]).unwrap();
        let ratio = m.cell("defects4j", "new-java").unwrap();
        assert!((ratio - 0.85 / 0.15).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_nll_rejected() {
        assert!(ratio_matrix(&[summary("a", 0.0)]).is_err());
        assert!(ratio_matrix(&[summary("a", -0.2)]).is_err());
    }

    #[test]
    fn duplicate_dataset_rejected() {
        assert!(ratio_matrix(&[summary("a", 0.1), summary("a", 0.2)]).is_err());
    }

    #[test]
    fn model_info_csv_parses_missing_budget() {
        let csv = "model,family,parameters_b,budget_t\nm1,f1,7,2.5\nm2,f2,7,\n";
        let info = parse_model_info_csv(csv).unwrap();
        assert_eq!(info[0].budget_t, Some(2.5));
        assert_eq!(info[1].budget_t, None);
    }

    #[test]
    fn avg_table_parses_wide_format() {
        let csv = "model,d1,d2\nm1,0.15,0.38\nm2,0.44,0.57\n";
        let cells = parse_avg_table_csv(csv).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].model, "m1");
        assert_eq!(cells[1].dataset, "d2");
        assert_eq!(cells[3].value, 0.57);
    }
}
