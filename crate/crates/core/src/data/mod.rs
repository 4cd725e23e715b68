//! Flow-CSV ingestion and the preprocessing pipeline: merge, dedup, null
//! handling, correlation pruning, feature selection, label binarization,
//! stratified splitting, and min-max scaling — plus synthetic desk-scale
//! data generation.

pub mod clean;
pub mod corr;
pub mod dataset;
pub mod pareto;
pub mod pipeline;
pub mod report;
pub mod scale;
pub mod split;
pub mod synth;
pub mod table;

pub use clean::{drop_duplicates, sanitize_nulls};
pub use corr::{correlation_matrix, prune_correlated};
pub use dataset::Dataset;
pub use pareto::{pareto_summary, ParetoRow};
pub use pipeline::{preprocess, FeatureSelection, PipelineConfig, PreprocessOutput};
pub use report::PreprocessReport;
pub use scale::MinMaxScaler;
pub use split::train_test_split;
pub use synth::{synth_generate, SynthOutput, SynthSpec};
pub use table::{label_binarize, load_flow_csv, merge_tables, select_features, Cell, RawTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{source_name}: row {row}: expected {expected} columns, got {got}")]
    RowWidth {
        source_name: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{source_name}: duplicate header '{header}' after trimming")]
    DuplicateHeader { source_name: String, header: String },
    #[error("{source_name}: missing or empty header row")]
    MissingHeader { source_name: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("column '{column}' not found")]
    MissingColumn { column: String },
    #[error("column '{column}' was dropped during {stage} ({detail})")]
    ColumnWasDropped {
        column: String,
        stage: String,
        detail: String,
    },
    #[error("feature selection list is empty")]
    EmptySelection,
    #[error("column '{0}' is not numeric and cannot be a model feature")]
    NonNumericFeature(String),
    #[error("empty label at row {row} (source {source_name})")]
    EmptyLabel { source_name: String, row: usize },
    #[error("need at least {need} rows, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("dataset file corrupt: {0}")]
    Format(String),
}
