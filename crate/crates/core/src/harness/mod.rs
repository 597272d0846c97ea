//! Repeated grouped train/test splits, fitting of the model roster,
//! evaluation and tabular outputs.

mod config;
mod model;
mod run;
mod splits;

pub use config::{
    parse_landmarks, parse_models, Config, DataSection, ExperimentSection, ModelKind, RmtlSection,
    SimulationSection,
};
pub use model::{fit_model, FitDiagnostic, Fitted, ModelSettings, Prediction, Preprocessor, TrainedModel};
pub use run::{
    evaluate_predictions, load_data, run_experiment, run_split, transform_config, ConvergenceRow,
    ExperimentResults, FailureRow, MetricRow, SplitOutcome,
};
pub use splits::{make_splits, train_count, SplitAssignment};
