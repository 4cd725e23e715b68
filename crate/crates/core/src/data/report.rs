//! Provenance record of everything the preprocessing pipeline did.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub duplicates_removed: usize,
    pub rows_out: usize,
    /// Unparseable or NaN cells in numeric columns, nulled at load.
    pub cells_nulled_at_load: Vec<ColumnCount>,
    pub infinities_replaced: usize,
    pub nulls_imputed: Vec<ColumnCount>,
    pub columns_dropped: Vec<DroppedColumn>,
    pub features_selected: Vec<String>,
    pub split: Option<SplitSummary>,
    pub scaling: Option<ScaleSummary>,
    pub synth: Option<SynthSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCount {
    pub column: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub column: String,
    /// Pipeline stage that removed it ("sanitize_nulls", "prune_correlated").
    pub stage: String,
    /// E.g. "all values null" or "|r|=0.998 against 'Flow Bytes/s'".
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub fraction: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub degenerate_features: Vec<String>,
    pub test_out_of_range: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub separation: f64,
    pub noise: f64,
    pub class_balance: f64,
    pub bayes_error: f64,
    pub seed: u64,
}
