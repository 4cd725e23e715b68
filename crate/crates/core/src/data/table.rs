//! In-memory flow tables: CSV loading with header trimming and column
//! typing, merging, projection, and label binarization.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use super::report::{ColumnCount, DroppedColumn};
use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Null,
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    /// Hash/equality key; numeric cells compare by bit pattern.
    pub(crate) fn key(&self) -> CellKey<'_> {
        match self {
            Cell::Num(v) => CellKey::Num(v.to_bits()),
            Cell::Text(s) => CellKey::Text(s),
            Cell::Null => CellKey::Null,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => write!(f, "{s}"),
            Cell::Null => write!(f, "<null>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum CellKey<'a> {
    Num(u64),
    Text(&'a str),
    Null,
}

/// Where a row came from, for error messages and audit.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub row: usize,
}

/// A rectangular table of flow records. Header names are whitespace-trimmed
/// and unique; every row has one cell per column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Vec<Provenance>,
    pub label_column: String,
    /// Numeric columns, by index into `columns`.
    pub numeric: Vec<bool>,
    /// Columns removed by earlier stages, kept for error messages.
    pub dropped: Vec<DroppedColumn>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Lookup that reports the dropping stage when the column used to exist.
    pub fn require_column(&self, name: &str) -> Result<usize, DataError> {
        if let Some(idx) = self.column_index(name) {
            return Ok(idx);
        }
        if let Some(d) = self.dropped.iter().find(|d| d.column == name) {
            return Err(DataError::ColumnWasDropped {
                column: name.to_string(),
                stage: d.stage.clone(),
                detail: d.detail.clone(),
            });
        }
        Err(DataError::MissingColumn {
            column: name.to_string(),
        })
    }
}

/// Reads a comma-separated flow CSV with a header row.
///
/// Headers are trimmed of surrounding whitespace. A column is treated as
/// numeric when at least half of its non-empty cells parse as reals; in
/// numeric columns, unparseable and NaN cells become null and are counted in
/// `nulled_counts`. "Infinity"/"inf" cells parse to the IEEE infinity
/// sentinel and survive until `sanitize_nulls`.
pub fn load_flow_csv(path: &Path, label_column: &str) -> Result<(RawTable, Vec<ColumnCount>), DataError> {
    let file = std::fs::File::open(path)?;
    let source_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    load_flow_reader(file, &source_name, label_column)
}

pub fn load_flow_reader<R: Read>(
    reader: R,
    source_name: &str,
    label_column: &str,
) -> Result<(RawTable, Vec<ColumnCount>), DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(DataError::MissingHeader {
            source_name: source_name.to_string(),
        });
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.clone()) {
            return Err(DataError::DuplicateHeader {
                source_name: source_name.to_string(),
                header: h.clone(),
            });
        }
    }

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(DataError::RowWidth {
                source_name: source_name.to_string(),
                row: i,
                expected: headers.len(),
                got: record.len(),
            });
        }
        raw_rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }

    // Column typing: majority of non-empty cells must parse as reals.
    let label_idx = headers.iter().position(|h| h == label_column);
    let mut numeric = vec![false; headers.len()];
    for (j, numeric_flag) in numeric.iter_mut().enumerate() {
        if Some(j) == label_idx {
            continue;
        }
        let mut parsed = 0usize;
        let mut unparsed = 0usize;
        for row in &raw_rows {
            let cell = &row[j];
            if cell.is_empty() {
                continue;
            }
            if cell.parse::<f64>().is_ok() {
                parsed += 1;
            } else {
                unparsed += 1;
            }
        }
        *numeric_flag = parsed >= 1 && parsed >= unparsed;
    }

    let mut nulled = vec![0usize; headers.len()];
    let mut rows = Vec::with_capacity(raw_rows.len());
    let mut provenance = Vec::with_capacity(raw_rows.len());
    for (i, raw) in raw_rows.into_iter().enumerate() {
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in raw.into_iter().enumerate() {
            let typed = if cell.is_empty() {
                if numeric[j] {
                    nulled[j] += 1;
                }
                Cell::Null
            } else if numeric[j] {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_nan() => {
                        nulled[j] += 1;
                        Cell::Null
                    }
                    Ok(v) => Cell::Num(v),
                    Err(_) => {
                        nulled[j] += 1;
                        Cell::Null
                    }
                }
            } else {
                Cell::Text(cell)
            };
            row.push(typed);
        }
        rows.push(row);
        provenance.push(Provenance {
            source: source_name.to_string(),
            row: i,
        });
    }

    let nulled_counts = headers
        .iter()
        .zip(&nulled)
        .filter(|(_, &c)| c > 0)
        .map(|(column, &count)| ColumnCount {
            column: column.clone(),
            count,
        })
        .collect();
    Ok((
        RawTable {
            columns: headers,
            rows,
            provenance,
            label_column: label_column.to_string(),
            numeric,
            dropped: Vec::new(),
        },
        nulled_counts,
    ))
}

/// Concatenates tables row-wise. Column sets must be identical; order may
/// differ and is aligned to the first table's order.
pub fn merge_tables(tables: Vec<RawTable>) -> Result<RawTable, DataError> {
    let mut iter = tables.into_iter();
    let mut base = iter.next().ok_or_else(|| DataError::Schema("no tables to merge".into()))?;
    for table in iter {
        let base_set: HashSet<&String> = base.columns.iter().collect();
        let other_set: HashSet<&String> = table.columns.iter().collect();
        if base_set != other_set {
            let missing: Vec<_> = base_set.difference(&other_set).collect();
            let extra: Vec<_> = other_set.difference(&base_set).collect();
            let mut missing: Vec<String> = missing.iter().map(|s| s.to_string()).collect();
            let mut extra: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
            missing.sort();
            extra.sort();
            return Err(DataError::Schema(format!(
                "column sets differ: missing {missing:?}, unexpected {extra:?}"
            )));
        }
        // Map base column position -> position in the incoming table.
        let positions: Vec<usize> = base
            .columns
            .iter()
            .map(|c| table.column_index(c).expect("set equality checked"))
            .collect();
        for (row, prov) in table.rows.into_iter().zip(table.provenance) {
            let aligned: Vec<Cell> = positions.iter().map(|&p| row[p].clone()).collect();
            base.rows.push(aligned);
            base.provenance.push(prov);
        }
        // A column counts as numeric only if every contributing table
        // classified it numeric.
        for (j, name) in base.columns.iter().enumerate() {
            let other_j = table.columns.iter().position(|c| c == name).unwrap();
            base.numeric[j] = base.numeric[j] && table.numeric[other_j];
        }
    }
    Ok(base)
}

/// Projects to the requested feature columns plus the label column, in the
/// requested order.
pub fn select_features(table: &RawTable, names: &[String]) -> Result<RawTable, DataError> {
    if names.is_empty() {
        return Err(DataError::EmptySelection);
    }
    let mut indices = Vec::with_capacity(names.len() + 1);
    for name in names {
        indices.push(table.require_column(name)?);
    }
    let label_idx = table.require_column(&table.label_column)?;
    if !indices.contains(&label_idx) {
        indices.push(label_idx);
    }
    let columns: Vec<String> = indices.iter().map(|&i| table.columns[i].clone()).collect();
    let numeric: Vec<bool> = indices.iter().map(|&i| table.numeric[i]).collect();
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|row| indices.iter().map(|&i| row[i].clone()).collect())
        .collect();
    Ok(RawTable {
        columns,
        rows,
        provenance: table.provenance.clone(),
        label_column: table.label_column.clone(),
        numeric,
        dropped: table.dropped.clone(),
    })
}

/// "BENIGN" (case-insensitive, trimmed) maps to 0; any other non-empty label
/// maps to 1. Empty labels are an error naming the offending row.
pub fn label_binarize(table: &RawTable) -> Result<Vec<f64>, DataError> {
    let label_idx = table.require_column(&table.label_column)?;
    let mut y = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let value = match &row[label_idx] {
            Cell::Text(s) => {
                let normalized = s.trim();
                if normalized.is_empty() {
                    return Err(empty_label(table, i));
                }
                f64::from(!normalized.eq_ignore_ascii_case("BENIGN"))
            }
            Cell::Num(_) => 1.0,
            Cell::Null => return Err(empty_label(table, i)),
        };
        y.push(value);
    }
    Ok(y)
}

fn empty_label(table: &RawTable, i: usize) -> DataError {
    let prov = table.provenance.get(i);
    DataError::EmptyLabel {
        source_name: prov.map_or_else(|| "<memory>".into(), |p| p.source.clone()),
        row: prov.map_or(i, |p| p.row),
    }
}

/// Builds tables directly from cells, mainly for tests and synthesis.
pub fn table_from_cells(
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    label_column: &str,
) -> RawTable {
    let numeric = (0..columns.len())
        .map(|j| {
            columns[j] != label_column
                && rows
                    .iter()
                    .any(|r| matches!(r[j], Cell::Num(_)))
                && rows
                    .iter()
                    .all(|r| !matches!(r[j], Cell::Text(_)))
        })
        .collect();
    let provenance = (0..rows.len())
        .map(|row| Provenance {
            source: "<memory>".into(),
            row,
        })
        .collect();
    RawTable {
        columns,
        rows,
        provenance,
        label_column: label_column.to_string(),
        numeric,
        dropped: Vec::new(),
    }
}

/// Column-count histogram used by merge tests and the pareto summary.
pub(crate) fn value_counts(table: &RawTable, col: usize) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for row in &table.rows {
        *counts.entry(row[col].to_string()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> (RawTable, Vec<ColumnCount>) {
        load_flow_reader(text.as_bytes(), "test.csv", "Label").unwrap()
    }

    #[test]
    fn headers_are_trimmed() {
        let (table, _) = load(" Source Port, Protocol,Label\n80,6,BENIGN\n81,6,DDoS\n443,17,BENIGN\n");
        assert_eq!(table.columns, vec!["Source Port", "Protocol", "Label"]);
        assert_eq!(table.n_rows(), 3);
        assert_eq!(table.rows[0][0], Cell::Num(80.0));
    }

    #[test]
    fn infinity_cells_become_inf_sentinels() {
        let (table, nulled) = load("Rate,Label\nInfinity,BENIGN\n3,DDoS\n5,BENIGN\n");
        assert_eq!(table.rows[0][0], Cell::Num(f64::INFINITY));
        assert!(nulled.is_empty());
    }

    #[test]
    fn unparseable_numeric_cells_are_nulled_and_counted() {
        let (table, nulled) = load("Rate,Label\n1.5,BENIGN\nxx,DDoS\nNaN,BENIGN\n2.5,DDoS\n");
        assert!(table.numeric[0]);
        assert_eq!(table.rows[1][0], Cell::Null);
        assert_eq!(table.rows[2][0], Cell::Null);
        assert_eq!(nulled, vec![ColumnCount { column: "Rate".into(), count: 2 }]);
    }

    #[test]
    fn wrong_column_count_is_rejected_with_row_index() {
        let err = load_flow_reader("A,B,Label\n1,2,x\n3,4\n".as_bytes(), "t.csv", "Label")
            .unwrap_err();
        match err {
            DataError::RowWidth { row, expected, got, .. } => {
                assert_eq!((row, expected, got), (1, 3, 2));
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn duplicate_headers_are_rejected() {
        let err =
            load_flow_reader("A, A,Label\n1,2,x\n".as_bytes(), "t.csv", "Label").unwrap_err();
        assert!(matches!(err, DataError::DuplicateHeader { .. }));
    }

    #[test]
    fn merge_concatenates_rows() {
        let (a, _) = load("A,Label\n1,x\n2,y\n");
        let (b, _) = load("A,Label\n3,z\n4,w\n");
        let merged = merge_tables(vec![a, b]).unwrap();
        assert_eq!(merged.n_rows(), 4);
        assert_eq!(merged.rows[3][0], Cell::Num(4.0));
    }

    #[test]
    fn merge_with_itself_keeps_duplicates() {
        let (a, _) = load("A,Label\n1,x\n");
        let merged = merge_tables(vec![a.clone(), a]).unwrap();
        assert_eq!(merged.n_rows(), 2);
        assert_eq!(merged.rows[0], merged.rows[1]);
    }

    #[test]
    fn merge_aligns_permuted_columns_by_name() {
        let (a, _) = load("A,B,Label\n1,10,x\n");
        let (b, _) = load("B,A,Label\n20,2,y\n");
        let merged = merge_tables(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(merged.columns, vec!["A", "B", "Label"]);
        // Cell-by-cell oracle: every (row, name) pair keeps its value.
        for (orig, merged_row) in [(&a, &merged.rows[0]), (&b, &merged.rows[1])] {
            for (j, name) in merged.columns.iter().enumerate() {
                let src = orig.column_index(name).unwrap();
                assert_eq!(orig.rows[0][src], merged_row[j], "column {name}");
            }
        }
    }

    #[test]
    fn merge_rejects_differing_column_sets() {
        let (a, _) = load("A,Label\n1,x\n");
        let (b, _) = load("B,Label\n1,x\n");
        let err = merge_tables(vec![a, b]).unwrap_err();
        match err {
            DataError::Schema(msg) => {
                assert!(msg.contains('A') && msg.contains('B'), "{msg}");
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn select_projects_requested_columns_plus_label() {
        let (t, _) = load("A,B,C,Label\n1,2,3,x\n");
        let s = select_features(&t, &["C".into(), "A".into()]).unwrap();
        assert_eq!(s.columns, vec!["C", "A", "Label"]);
        assert_eq!(s.rows[0], vec![Cell::Num(3.0), Cell::Num(1.0), Cell::Text("x".into())]);
    }

    #[test]
    fn select_missing_column_names_it() {
        let (t, _) = load("A,Label\n1,x\n");
        let err = select_features(&t, &["B".into()]).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { column } if column == "B"));
        assert!(matches!(
            select_features(&t, &[]).unwrap_err(),
            DataError::EmptySelection
        ));
    }

    #[test]
    fn select_single_feature_is_accepted() {
        let (t, _) = load("A,B,Label\n1,2,x\n");
        let s = select_features(&t, &["B".into()]).unwrap();
        assert_eq!(s.columns, vec!["B", "Label"]);
    }

    #[test]
    fn binarize_follows_the_benign_rule() {
        let (t, _) = load("A,Label\n1,BENIGN\n2,DrDoS_LDAP\n3, benign \n");
        assert_eq!(label_binarize(&t).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn binarize_rejects_empty_labels_with_row() {
        let (t, _) = load("A,Label\n1,BENIGN\n2,\n");
        match label_binarize(&t).unwrap_err() {
            DataError::EmptyLabel { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected: {other}"),
        }
    }
}
