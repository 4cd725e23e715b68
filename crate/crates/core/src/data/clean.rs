//! Duplicate elimination and statistical null handling.

use std::collections::HashSet;

use super::report::{ColumnCount, DroppedColumn};
use super::table::{Cell, RawTable};

/// Removes exact full-row duplicates, keeping the first occurrence.
pub fn drop_duplicates(table: &RawTable) -> (RawTable, usize) {
    let mut seen = HashSet::with_capacity(table.rows.len());
    let mut out = table.clone();
    out.rows.clear();
    out.provenance.clear();
    let mut removed = 0;
    for (row, prov) in table.rows.iter().zip(&table.provenance) {
        let key: Vec<_> = row.iter().map(Cell::key).collect();
        // Keys borrow from `row`, so hash them into owned u64s.
        let owned: Vec<String> = key.iter().map(|k| format!("{k:?}")).collect();
        if seen.insert(owned) {
            out.rows.push(row.clone());
            out.provenance.push(prov.clone());
        } else {
            removed += 1;
        }
    }
    (out, removed)
}

pub struct SanitizeOutcome {
    pub table: RawTable,
    pub infinities_replaced: usize,
    pub nulls_imputed: Vec<ColumnCount>,
    pub dropped_all_null: Vec<String>,
}

/// Replaces infinities with nulls, imputes each numeric column's nulls with
/// the column median of its finite values, and drops columns that are
/// entirely null.
pub fn sanitize_nulls(table: &RawTable) -> SanitizeOutcome {
    let mut table = table.clone();
    let mut infinities = 0usize;
    let mut imputed: Vec<ColumnCount> = Vec::new();
    let mut drop_indices = Vec::new();

    for j in 0..table.columns.len() {
        if !table.numeric[j] {
            continue;
        }
        let mut finite: Vec<f64> = Vec::new();
        for row in &mut table.rows {
            match row[j] {
                Cell::Num(v) if v.is_infinite() => {
                    infinities += 1;
                    row[j] = Cell::Null;
                }
                Cell::Num(v) => finite.push(v),
                _ => {}
            }
        }
        if finite.is_empty() {
            drop_indices.push(j);
            continue;
        }
        let med = median(&mut finite);
        let mut count = 0;
        for row in &mut table.rows {
            if row[j].is_null() {
                row[j] = Cell::Num(med);
                count += 1;
            }
        }
        if count > 0 {
            imputed.push(ColumnCount {
                column: table.columns[j].clone(),
                count,
            });
        }
    }

    let mut dropped_all_null = Vec::new();
    for &j in drop_indices.iter().rev() {
        let name = table.columns.remove(j);
        table.numeric.remove(j);
        for row in &mut table.rows {
            row.remove(j);
        }
        table.dropped.push(DroppedColumn {
            column: name.clone(),
            stage: "sanitize_nulls".into(),
            detail: "all values null".into(),
        });
        dropped_all_null.push(name);
    }
    dropped_all_null.reverse();

    SanitizeOutcome {
        table,
        infinities_replaced: infinities,
        nulls_imputed: imputed,
        dropped_all_null,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
