//! Evaluation: per-episode clustering metrics, paired runs across
//! algorithms, confidence intervals, signed-rank tests and report tables.

mod harness;
pub mod metrics;
mod report;
pub mod stats;

pub use harness::{run_evaluation, MetricsReport, PolicyFactory, CI_LEVEL};
pub use metrics::{
    ch_change_count, cluster_lifetime, connectivity_ratio, connectivity_series, episode_metrics, final_jain, jain_index,
    network_lifetime, EpisodeMetrics, Metric, METRICS,
};
pub use report::{category_plot, compare, compare_table, marks, plot_csv, Cell, CompareTable, Comparison, Mark, PlotRow, TableRow};
pub use stats::{mean_ci, wilcoxon_signed_rank, Summary, Wilcoxon};
