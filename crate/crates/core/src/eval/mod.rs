//! Task metrics, answer-space upper bounds and report formatting.

pub mod bounds;
pub mod metrics;
pub mod report;

pub use bounds::{composable, upper_bounds, UpperBoundReport};
pub use metrics::{anls, answer_accuracy, edit_distance, nls, normalize_answer, vqa_accuracy, EvalRecord};
pub use report::{read_predictions, write_predictions, EvalReport, PredictionLine};
