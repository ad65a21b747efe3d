//! Mixed-model and ratio-matrix replays over the bundled reference tables.

use leakaudit_core::analysis::{
    center_predictors, fit_mixed_model, ratio_matrix, residual_diagnostics,
};
use leakaudit_core::fixtures;

#[test]
fn nll_regression_matches_reference_fit() {
    let rows = center_predictors(&fixtures::nll_regression_rows());
    let fit = fit_mixed_model(&rows, "nll").unwrap();

    assert_eq!(fit.excluded_models, vec!["mistral-7b-v0.3".to_string()]);
    assert_eq!(fit.n_rows, 56);

    let [intercept, params, budget] = [&fit.coefficients[0], &fit.coefficients[1], &fit.coefficients[2]];
    assert!(
        (intercept.estimate - 0.744).abs() < 0.10,
        "intercept {}",
        intercept.estimate
    );
    assert!(params.estimate < 0.0, "params slope {}", params.estimate);
    assert!(budget.estimate < 0.0, "budget slope {}", budget.estimate);
    assert!(fit.coefficients.iter().all(|c| c.std_error > 0.0));
    eprintln!(
        "nll fit: beta = [{:.6}, {:.6}, {:.6}], se = [{:.6}, {:.6}, {:.6}], vc = [{:.6}, {:.6}], sigma2 = {:.6}, reml_ll = {:.4}",
        intercept.estimate,
        params.estimate,
        budget.estimate,
        intercept.std_error,
        params.std_error,
        budget.std_error,
        fit.random[0].variance,
        fit.random[1].variance,
        fit.residual_variance,
        fit.reml_log_likelihood,
    );
}

#[test]
fn ngram_regression_matches_reference_fit() {
    let rows = center_predictors(&fixtures::ngram_regression_rows());
    let fit = fit_mixed_model(&rows, "5-gram").unwrap();

    let [intercept, params, budget] = [&fit.coefficients[0], &fit.coefficients[1], &fit.coefficients[2]];
    assert!(
        (intercept.estimate - 0.465).abs() < 0.10,
        "intercept {}",
        intercept.estimate
    );
    assert!(params.estimate > 0.0, "params slope {}", params.estimate);
    assert!(budget.estimate > 0.0, "budget slope {}", budget.estimate);
    eprintln!(
        "5-gram fit: beta = [{:.6}, {:.6}, {:.6}], se = [{:.6}, {:.6}, {:.6}], vc = [{:.6}, {:.6}], sigma2 = {:.6}",
        intercept.estimate,
        params.estimate,
        budget.estimate,
        intercept.std_error,
        params.std_error,
        budget.std_error,
        fit.random[0].variance,
        fit.random[1].variance,
        fit.residual_variance,
    );
}

#[test]
fn residuals_on_reference_fit_are_centered_and_finite() {
    let rows = center_predictors(&fixtures::nll_regression_rows());
    let fit = fit_mixed_model(&rows, "nll").unwrap();
    let points = residual_diagnostics(&fit, &rows);
    assert_eq!(points.len(), 56);
    let sum: f64 = points.iter().map(|p| p.residual).sum();
    assert!(sum.abs() < 1e-8, "residual sum {sum}");
    assert!(points.iter().all(|p| p.fitted.is_finite() && p.residual.is_finite()));
    let spread = points
        .iter()
        .map(|p| p.residual.abs())
        .fold(0.0f64, f64::max);
    assert!(spread > 0.0 && spread < 1.0, "residual spread {spread}");
}

#[test]
fn ratio_matrix_reproduces_reference_ratios() {
    let m = ratio_matrix(&fixtures::summaries_for_model("codegen-6b-multi")).unwrap();
    let new_java_over_d4j = m.cell("defects4j", "new-java").unwrap();
    assert!(
        (new_java_over_d4j - 5.63).abs() < 0.10,
        "new-java/defects4j = {new_java_over_d4j}"
    );
    let gitbug_over_d4j = m.cell("defects4j", "gitbug-java").unwrap();
    assert!(
        (gitbug_over_d4j - 3.82).abs() < 0.10,
        "gitbug-java/defects4j = {gitbug_over_d4j}"
    );

    let llama = ratio_matrix(&fixtures::summaries_for_model("llama-3.1-70b")).unwrap();
    let gitbug_ratio = llama.cell("defects4j", "gitbug-java").unwrap();
    assert!(
        (gitbug_ratio - 1.27).abs() < 0.02,
        "llama-3.1-70b gitbug/defects4j = {gitbug_ratio}"
    );

    for d in &m.datasets {
        assert_eq!(m.cell(d, d), Some(1.0));
    }
}
