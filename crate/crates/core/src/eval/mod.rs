//! Evaluation: prediction records, RMSE reports, ensembles and the paired
//! Wilcoxon signed-rank test.

mod ranking;
mod records;
mod report;
mod wilcoxon;

pub use ranking::{ranking_table, Pairing, RankingRow, RankingTable};
pub use records::{read_records, validate_records, write_records, ErrorMetric, PredictionRecord};
pub use report::{
    constant_predictor_rmse, ensemble, evaluate, mean_rmse, rmse, rmse_of, select_best_on_dev,
    summarize_runs, EvalReport, PartitionScore, RunSummary, TestSet,
};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, TestMethod, WilcoxonResult, ZeroMethod};
