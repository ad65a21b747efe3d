//! Bundled reference tables: model-by-dataset averages for both leakage
//! signals, plus model metadata. Analysis replays and calibration tests run
//! against these; the CLI accepts user files in the same formats.

use crate::analysis::{
    build_regression_rows, parse_avg_table_csv, parse_model_info_csv, ModelInfo, RegressionRow,
};
use crate::metrics::DatasetSummary;

pub const AVG_NLL_CSV: &str = include_str!("fixtures/avg_nll.csv");
pub const AVG_5GRAM_CSV: &str = include_str!("fixtures/avg_5gram.csv");
pub const MODEL_INFO_CSV: &str = include_str!("fixtures/model_info.csv");

pub fn model_info() -> Vec<ModelInfo> {
    parse_model_info_csv(MODEL_INFO_CSV).expect("bundled model info parses")
}

/// Merged summaries for every bundled model and dataset. Document counts are
/// not part of the reference tables and are recorded as 1.
pub fn summaries() -> Vec<DatasetSummary> {
    let nll = parse_avg_table_csv(AVG_NLL_CSV).expect("bundled NLL table parses");
    let ngram = parse_avg_table_csv(AVG_5GRAM_CSV).expect("bundled 5-gram table parses");
    nll.iter()
        .map(|cell| {
            let acc = ngram
                .iter()
                .find(|g| g.model == cell.model && g.dataset == cell.dataset)
                .expect("tables cover the same cells");
            DatasetSummary {
                dataset: cell.dataset.clone(),
                model: cell.model.clone(),
                mean_nll: cell.value,
                mean_ngram: acc.value,
                doc_count: 1,
            }
        })
        .collect()
}

/// Summaries for one model, in table column order.
pub fn summaries_for_model(model: &str) -> Vec<DatasetSummary> {
    summaries().into_iter().filter(|s| s.model == model).collect()
}

/// Uncentered regression rows with the NLL average as response.
pub fn nll_regression_rows() -> Vec<RegressionRow> {
    let cells = parse_avg_table_csv(AVG_NLL_CSV).expect("bundled NLL table parses");
    build_regression_rows(&cells, &model_info()).expect("metadata covers every model")
}

/// Uncentered regression rows with the 5-gram accuracy average as response.
pub fn ngram_regression_rows() -> Vec<RegressionRow> {
    let cells = parse_avg_table_csv(AVG_5GRAM_CSV).expect("bundled 5-gram table parses");
    build_regression_rows(&cells, &model_info()).expect("metadata covers every model")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables_are_complete() {
        let s = summaries();
        assert_eq!(s.len(), 9 * 7);
        assert_eq!(model_info().len(), 9);
        let mistral = model_info()
            .into_iter()
            .find(|m| m.model == "mistral-7b-v0.3")
            .unwrap();
        assert_eq!(mistral.budget_t, None);
    }

    #[test]
    fn known_cells_present() {
        let s = summaries_for_model("codegen-6b-multi");
        let d4j = s.iter().find(|x| x.dataset == "defects4j").unwrap();
        assert_eq!(d4j.mean_nll, 0.15);
        assert_eq!(d4j.mean_ngram, 0.82);
    }
}
