//! Mixed-effects linear regression of a metric average on model parameters
//! and training budget, with crossed random intercepts for dataset and
//! tokenizer family.
//!
//! The model is y = b0 + b1*parameters' + b2*budget' + u_dataset + v_family
//! + e, with independent random intercepts. Variance components are
//! estimated by profiled restricted maximum likelihood over the two
//! variance ratios (component variance over residual variance), using a
//! coarse grid followed by cyclic golden-section refinement; ordinary least
//! squares is the exact-fit and zero-variance fallback. The dataset here is
//! tiny (tens of rows), so robustness is worth more than speed.
//!
//! Wald z statistics give p-values; stars follow the usual thresholds
//! (0.001, 0.01, 0.05). Rows with an unknown training budget are excluded
//! from the fit and listed on the result.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictor reference point: centering subtracts these so the intercept is
/// the predicted response at a 6B-parameter model trained on 1T tokens.
pub const REFERENCE_PARAMS_B: f64 = 6.0;
pub const REFERENCE_BUDGET_T: f64 = 1.0;

/// One model-by-dataset observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub model: String,
    pub parameters_b: f64,
    /// Trillions of pretraining tokens; `None` excludes the row from fits.
    pub budget_t: Option<f64>,
    pub dataset: String,
    pub tokenizer_family: String,
    pub response: f64,
}

/// Shift predictors to the reference point (parameters - 6, budget - 1).
pub fn center_predictors(rows: &[RegressionRow]) -> Vec<RegressionRow> {
    rows.iter()
        .map(|r| RegressionRow {
            parameters_b: r.parameters_b - REFERENCE_PARAMS_B,
            budget_t: r.budget_t.map(|b| b - REFERENCE_BUDGET_T),
            ..r.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponent {
    pub group: String,
    pub variance: f64,
    /// True when the estimate hit the zero boundary.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub response: String,
    /// Intercept, parameters, budget — in that order.
    pub coefficients: Vec<Coefficient>,
    pub random: Vec<VarianceComponent>,
    pub residual_variance: f64,
    pub reml_log_likelihood: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub n_rows: usize,
    /// Models dropped for lacking a training budget.
    pub excluded_models: Vec<String>,
    /// Random-intercept predictions per group level, for diagnostics.
    pub dataset_effects: BTreeMap<String, f64>,
    pub family_effects: BTreeMap<String, f64>,
}

fn stars_for(p: f64) -> String {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
    .to_string()
}

/// Complementary error function, fractional error below 1.2e-7.
fn erfc_approx(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Two-sided normal p-value for a Wald z statistic.
fn wald_p(z: f64) -> f64 {
    erfc_approx(z.abs() / std::f64::consts::SQRT_2)
}

struct Design {
    x: DMatrix<f64>,
    y: DVector<f64>,
    /// Z Z^T gram matrices for each random effect.
    dataset_gram: DMatrix<f64>,
    family_gram: DMatrix<f64>,
    dataset_levels: Vec<String>,
    family_levels: Vec<String>,
    dataset_index: Vec<usize>,
    family_index: Vec<usize>,
    excluded: Vec<String>,
}

fn build_design(rows: &[RegressionRow]) -> Result<Design> {
    let mut excluded: Vec<String> = rows
        .iter()
        .filter(|r| r.budget_t.is_none())
        .map(|r| r.model.clone())
        .collect();
    excluded.sort();
    excluded.dedup();
    let usable: Vec<RegressionRow> = rows
        .iter()
        .filter(|r| r.budget_t.is_some())
        .cloned()
        .collect();

    let n = usable.len();
    let mut models: Vec<&str> = usable.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    if models.len() < 3 {
        return Err(Error::Validation(format!(
            "mixed model needs at least 3 distinct models, got {}",
            models.len()
        )));
    }

    let mut dataset_levels: Vec<String> = usable.iter().map(|r| r.dataset.clone()).collect();
    dataset_levels.sort();
    dataset_levels.dedup();
    let mut family_levels: Vec<String> =
        usable.iter().map(|r| r.tokenizer_family.clone()).collect();
    family_levels.sort();
    family_levels.dedup();
    if dataset_levels.len() < 2 || family_levels.len() < 2 {
        return Err(Error::Validation(
            "each random effect needs at least 2 grouping levels".to_string(),
        ));
    }

    let mut x = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    let mut dataset_index = Vec::with_capacity(n);
    let mut family_index = Vec::with_capacity(n);
    for (i, row) in usable.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = row.parameters_b;
        x[(i, 2)] = row.budget_t.expect("filtered");
        y[i] = row.response;
        dataset_index.push(
            dataset_levels
                .iter()
                .position(|d| *d == row.dataset)
                .expect("level present"),
        );
        family_index.push(
            family_levels
                .iter()
                .position(|f| *f == row.tokenizer_family)
                .expect("level present"),
        );
    }

    let mut dataset_gram = DMatrix::zeros(n, n);
    let mut family_gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if dataset_index[i] == dataset_index[j] {
                dataset_gram[(i, j)] = 1.0;
            }
            if family_index[i] == family_index[j] {
                family_gram[(i, j)] = 1.0;
            }
        }
    }

    Ok(Design {
        x,
        y,
        dataset_gram,
        family_gram,
        dataset_levels,
        family_levels,
        dataset_index,
        family_index,
        excluded,
    })
}

struct GlsSolution {
    beta: DVector<f64>,
    cov_unscaled: DMatrix<f64>,
    rss_w: f64,
    log_det_w: f64,
    log_det_xtwx: f64,
    w_inv_r: DVector<f64>,
}

fn solve_gls(design: &Design, gamma_d: f64, gamma_f: f64) -> Result<GlsSolution> {
    let n = design.y.len();
    let mut w = DMatrix::identity(n, n);
    w += &design.dataset_gram * gamma_d;
    w += &design.family_gram * gamma_f;
    let chol = Cholesky::new(w)
        .ok_or_else(|| Error::Domain("covariance matrix not positive definite".to_string()))?;
    let log_det_w = 2.0 * chol.l().diagonal().map(f64::ln).sum();

    let w_inv_x = chol.solve(&design.x);
    let w_inv_y = chol.solve(&design.y);
    let xtwx = design.x.transpose() * &w_inv_x;
    let xtwx_chol = Cholesky::new(xtwx.clone())
        .ok_or_else(|| Error::Domain("design matrix is rank deficient".to_string()))?;
    let log_det_xtwx = 2.0 * xtwx_chol.l().diagonal().map(f64::ln).sum();
    let cov_unscaled = xtwx
        .try_inverse()
        .ok_or_else(|| Error::Domain("design matrix is rank deficient".to_string()))?;
    let beta = &cov_unscaled * (design.x.transpose() * &w_inv_y);
    let r = &design.y - &design.x * &beta;
    let w_inv_r = chol.solve(&r);
    let rss_w = r.dot(&w_inv_r);
    Ok(GlsSolution {
        beta,
        cov_unscaled,
        rss_w,
        log_det_w,
        log_det_xtwx,
        w_inv_r,
    })
}

/// Profiled REML criterion (lower is better).
fn reml_criterion(design: &Design, gamma_d: f64, gamma_f: f64) -> f64 {
    let n = design.y.len() as f64;
    let p = 3.0;
    match solve_gls(design, gamma_d, gamma_f) {
        Ok(sol) => {
            sol.log_det_w + sol.log_det_xtwx + (n - p) * sol.rss_w.max(f64::MIN_POSITIVE).ln()
        }
        Err(_) => f64::INFINITY,
    }
}

const GAMMA_MAX: f64 = 1e5;
const GRID: [f64; 13] = [
    0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0,
];

fn golden_min(mut eval: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    0.5 * (a + b)
}

fn optimize_gammas(design: &Design) -> (f64, f64, usize, bool) {
    let mut best = (0.0, 0.0);
    let mut best_val = f64::INFINITY;
    for &gd in &GRID {
        for &gf in &GRID {
            let v = reml_criterion(design, gd, gf);
            if v < best_val {
                best_val = v;
                best = (gd, gf);
            }
        }
    }
    let (mut gd, mut gf) = best;
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..200 {
        sweeps = sweep + 1;
        let mut gd_new = golden_min(|g| reml_criterion(design, g, gf), 0.0, GAMMA_MAX);
        // golden search never lands exactly on the boundary; snap so the
        // zero-variance fixed point is exact
        if reml_criterion(design, 0.0, gf) <= reml_criterion(design, gd_new, gf) {
            gd_new = 0.0;
        }
        let mut gf_new = golden_min(|g| reml_criterion(design, gd_new, g), 0.0, GAMMA_MAX);
        if reml_criterion(design, gd_new, 0.0) <= reml_criterion(design, gd_new, gf_new) {
            gf_new = 0.0;
        }
        let moved = (gd_new - gd).abs() + (gf_new - gf).abs();
        let val = reml_criterion(design, gd_new, gf_new);
        let stalled = (best_val - val).abs() < 1e-12 * (1.0 + val.abs());
        best_val = val;
        gd = gd_new;
        gf = gf_new;
        if moved < 1e-9 * (1.0 + gd + gf) || stalled {
            converged = true;
            break;
        }
    }
    (gd, gf, sweeps, converged)
}

fn assemble_fit(
    design: &Design,
    response_name: &str,
    gamma_d: f64,
    gamma_f: f64,
    sweeps: usize,
    converged: bool,
) -> Result<RegressionFit> {
    let sol = solve_gls(design, gamma_d, gamma_f)?;
    let n = design.y.len();
    let p = 3usize;
    let sigma2 = sol.rss_w / (n - p) as f64;

    let terms = ["intercept", "parameters", "budget"];
    let coefficients = (0..p)
        .map(|j| {
            let estimate = sol.beta[j];
            let std_error = (sigma2 * sol.cov_unscaled[(j, j)]).max(0.0).sqrt();
            let z = if std_error > 0.0 {
                estimate / std_error
            } else {
                f64::INFINITY
            };
            let p_value = wald_p(z);
            Coefficient {
                term: terms[j].to_string(),
                estimate,
                std_error,
                z,
                p_value,
                stars: stars_for(p_value),
            }
        })
        .collect();

    let random = vec![
        VarianceComponent {
            group: "dataset".to_string(),
            variance: gamma_d * sigma2,
            clamped: gamma_d == 0.0,
        },
        VarianceComponent {
            group: "tokenizer_family".to_string(),
            variance: gamma_f * sigma2,
            clamped: gamma_f == 0.0,
        },
    ];

    // random-intercept predictions u = gamma * Z^T W^{-1} r
    let mut dataset_effects = BTreeMap::new();
    for (level_idx, level) in design.dataset_levels.iter().enumerate() {
        let total: f64 = design
            .dataset_index
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == level_idx)
            .map(|(i, _)| sol.w_inv_r[i])
            .sum();
        dataset_effects.insert(level.clone(), gamma_d * total);
    }
    let mut family_effects = BTreeMap::new();
    for (level_idx, level) in design.family_levels.iter().enumerate() {
        let total: f64 = design
            .family_index
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == level_idx)
            .map(|(i, _)| sol.w_inv_r[i])
            .sum();
        family_effects.insert(level.clone(), gamma_f * total);
    }

    let nm_p = (n - p) as f64;
    let reml_log_likelihood = -0.5
        * (sol.log_det_w
            + sol.log_det_xtwx
            + nm_p * (1.0 + (2.0 * std::f64::consts::PI * sigma2.max(f64::MIN_POSITIVE)).ln()));

    Ok(RegressionFit {
        response: response_name.to_string(),
        coefficients,
        random,
        residual_variance: sigma2,
        reml_log_likelihood,
        converged,
        sweeps,
        n_rows: n,
        excluded_models: design.excluded.clone(),
        dataset_effects,
        family_effects,
    })
}

/// Fit with the variance ratios held fixed (0, 0 gives exactly ordinary
/// least squares). Diagnostic surface; [`fit_mixed_model`] estimates the
/// ratios by REML.
pub fn fit_with_variance_ratios(
    rows: &[RegressionRow],
    response_name: &str,
    gamma_dataset: f64,
    gamma_family: f64,
) -> Result<RegressionFit> {
    let design = build_design(rows)?;
    assemble_fit(&design, response_name, gamma_dataset, gamma_family, 0, true)
}

/// REML fit of response ~ intercept + parameters + budget with crossed
/// random intercepts for dataset and tokenizer family.
pub fn fit_mixed_model(rows: &[RegressionRow], response_name: &str) -> Result<RegressionFit> {
    let design = build_design(rows)?;

    // exact-fit guard: zero-noise data sends the REML criterion to -inf
    // everywhere, so fall straight back to ordinary least squares
    let ols = solve_gls(&design, 0.0, 0.0)?;
    let scale: f64 = design.y.dot(&design.y);
    if ols.rss_w <= 1e-20 * (1.0 + scale) {
        return assemble_fit(&design, response_name, 0.0, 0.0, 0, true);
    }

    let (gd, gf, sweeps, converged) = optimize_gammas(&design);
    if !converged {
        return Err(Error::NonConvergence {
            iterations: sweeps,
            reason: format!("variance-ratio search stalled at ({gd:.6}, {gf:.6})"),
        });
    }
    assemble_fit(&design, response_name, gd, gf, sweeps, converged)
}

/// Fitted value and residual per row, using the conditional fit (fixed
/// effects plus predicted random intercepts). Rows without a budget are
/// skipped, matching the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub model: String,
    pub dataset: String,
    pub fitted: f64,
    pub residual: f64,
}

pub fn residual_diagnostics(fit: &RegressionFit, rows: &[RegressionRow]) -> Vec<ResidualPoint> {
    rows.iter()
        .filter_map(|row| {
            let budget = row.budget_t?;
            let b = &fit.coefficients;
            let fitted = b[0].estimate
                + b[1].estimate * row.parameters_b
                + b[2].estimate * budget
                + fit.dataset_effects.get(&row.dataset).copied().unwrap_or(0.0)
                + fit
                    .family_effects
                    .get(&row.tokenizer_family)
                    .copied()
                    .unwrap_or(0.0);
            Some(ResidualPoint {
                model: row.model.clone(),
                dataset: row.dataset.clone(),
                fitted,
                residual: row.response - fitted,
            })
        })
        .collect()
}

/// Residual-vs-fitted pairs as CSV.
pub fn residuals_to_csv(points: &[ResidualPoint]) -> String {
    let mut out = String::from("model,dataset,fitted,residual\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.model, p.dataset, p.fitted, p.residual
        ));
    }
    out
}
