//! Accuracy, comprehension and the effect of interventions on them.

mod analysis;
mod answer;
mod collateral;
mod export;
mod metrics;
mod report;

pub use analysis::{balanced_selection, common_neurons, cross_task, layer_histogram, task_specific, CommonNeurons, CrossTaskCell, CrossTaskMatrix, LayerHistogram};
pub use answer::{answer, answer_from_logits, choose, evaluate_questions, evaluate_sets, Answer, QuestionRecord};
pub use collateral::{collateral_counts, collateral_report, CollateralQuestion, CollateralReport};
pub use export::{write_histogram_csv, write_matrix_csv, write_summary_csv, write_sweep_csv, SummaryRow};
pub use metrics::{accuracy, comprehends, comprehension, flip_rate, metric_change, proxy_tally, rac_rcc, MetricChange, Relative};
pub use report::{evaluate_plan, sweep_report, EvalReport, PlanSummary, SweepReport};
