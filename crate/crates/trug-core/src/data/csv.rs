//! Numeric CSV regression tables: comma-separated, dot decimal, optional
//! single header line. Rows are shuffled and split by seed; per-column
//! standardization statistics come from the training split only and are
//! kept for de-standardizing predictions.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrugError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn destandardize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    /// Standardized feature rows, constant columns removed.
    pub inputs: Vec<Vec<f64>>,
    /// Standardized target rows.
    pub targets: Vec<Vec<f64>>,
    pub feature_stats: Vec<ColumnStats>,
    pub target_stats: Vec<ColumnStats>,
    /// Original column indices of features dropped for being constant on
    /// the training split.
    pub dropped_features: Vec<usize>,
}

impl RegressionDataset {
    pub fn n_examples(&self) -> usize {
        self.inputs.len()
    }

    /// Map standardized predictions back to original target units.
    pub fn destandardize_targets(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(&self.target_stats)
                    .map(|(v, s)| s.destandardize(*v))
                    .collect()
            })
            .collect()
    }
}

fn parse_rows(text: &str, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if has_header && line_idx == 0 {
            continue;
        }
        let mut row = Vec::new();
        for (col_idx, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| TrugError::CsvParse {
                row: line_idx + 1,
                column: col_idx + 1,
                message: format!("non-numeric cell '{}'", cell.trim()),
            })?;
            row.push(v);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(TrugError::CsvParse {
                    row: line_idx + 1,
                    column: row.len(),
                    message: format!("expected {w} columns, found {}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TrugError::Contract("CSV contains no data rows".into()));
    }
    Ok(rows)
}

fn column_stats(rows: &[Vec<f64>], col: usize) -> ColumnStats {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[col]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[col] - mean) * (r[col] - mean)).sum::<f64>() / n;
    ColumnStats { mean, std: var.sqrt() }
}

fn build_split(
    rows: &[&Vec<f64>],
    feature_cols: &[usize],
    target_cols: &[usize],
    feature_stats: &[ColumnStats],
    target_stats: &[ColumnStats],
    dropped: &[usize],
) -> RegressionDataset {
    let kept: Vec<usize> = feature_cols.iter().copied().filter(|c| !dropped.contains(c)).collect();
    let inputs = rows
        .iter()
        .map(|r| {
            kept.iter()
                .zip(feature_stats)
                .map(|(&c, s)| s.standardize(r[c]))
                .collect()
        })
        .collect();
    let targets = rows
        .iter()
        .map(|r| {
            target_cols
                .iter()
                .zip(target_stats)
                .map(|(&c, s)| s.standardize(r[c]))
                .collect()
        })
        .collect();
    RegressionDataset {
        inputs,
        targets,
        feature_stats: feature_stats.to_vec(),
        target_stats: target_stats.to_vec(),
        dropped_features: dropped.to_vec(),
    }
}

pub fn load_regression_csv(
    path: &Path,
    target_columns: &[usize],
    has_header: bool,
    split_seed: u64,
    test_fraction: f64,
) -> Result<(RegressionDataset, RegressionDataset)> {
    if target_columns.is_empty() {
        return Err(TrugError::Contract("at least one target column required".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(TrugError::Contract(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let text = fs::read_to_string(path)?;
    let rows = parse_rows(&text, has_header)?;
    let width = rows[0].len();
    if let Some(&bad) = target_columns.iter().find(|&&c| c >= width) {
        return Err(TrugError::Contract(format!(
            "target column {bad} out of range for {width} columns"
        )));
    }
    let feature_cols: Vec<usize> = (0..width).filter(|c| !target_columns.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(TrugError::Contract("no feature columns remain".into()));
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    order.shuffle(&mut rng);
    let n_test = ((rows.len() as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= rows.len() {
        return Err(TrugError::Contract(format!(
            "split leaves an empty side ({} test of {} rows)",
            n_test,
            rows.len()
        )));
    }
    let (test_idx, train_idx) = order.split_at(n_test);
    let train_rows: Vec<&Vec<f64>> = train_idx.iter().map(|&i| &rows[i]).collect();
    let test_rows: Vec<&Vec<f64>> = test_idx.iter().map(|&i| &rows[i]).collect();

    // Statistics on the training split only; constant features dropped.
    let mut dropped = Vec::new();
    let mut feature_stats = Vec::new();
    for &c in &feature_cols {
        let st = column_stats_ref(&train_rows, c);
        if st.std < 1e-12 {
            dropped.push(c);
        } else {
            feature_stats.push(st);
        }
    }
    if feature_stats.is_empty() {
        return Err(TrugError::Contract("all feature columns are constant".into()));
    }
    let mut target_stats = Vec::new();
    for &c in target_columns {
        let st = column_stats_ref(&train_rows, c);
        if st.std < 1e-12 {
            return Err(TrugError::Contract(format!(
                "target column {c} is constant on the training split"
            )));
        }
        target_stats.push(st);
    }

    let train = build_split(&train_rows, &feature_cols, target_columns, &feature_stats, &target_stats, &dropped);
    let test = build_split(&test_rows, &feature_cols, target_columns, &feature_stats, &target_stats, &dropped);
    Ok((train, test))
}

fn column_stats_ref(rows: &[&Vec<f64>], col: usize) -> ColumnStats {
    let owned: Vec<Vec<f64>> = rows.iter().map(|r| (*r).clone()).collect();
    column_stats(&owned, col)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    fn ten_rows() -> String {
        (0..10)
            .map(|i| format!("{},{},{}\n", i, 2 * i, 3 * i + 1))
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (_d, path) = write_csv(&ten_rows());
        let (train, test) = load_regression_csv(&path, &[2], false, 11, 0.2).unwrap();
        assert_eq!(train.n_examples(), 8);
        assert_eq!(test.n_examples(), 2);
        let (train2, test2) = load_regression_csv(&path, &[2], false, 11, 0.2).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (train3, _) = load_regression_csv(&path, &[2], false, 12, 0.2).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn split_is_disjoint_and_covers_all_rows() {
        let (_d, path) = write_csv(&ten_rows());
        let (train, test) = load_regression_csv(&path, &[2], false, 5, 0.3).unwrap();
        // Feature column 0 is the row id 0..9 before standardization.
        let st = train.feature_stats[0];
        let mut ids: Vec<i64> = train
            .inputs
            .iter()
            .chain(&test.inputs)
            .map(|r| st.destandardize(r[0]).round() as i64)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn constant_feature_dropped_and_recorded() {
        let content: String = (0..10).map(|i| format!("{},7.5,{}\n", i, i * i)).collect();
        let (_d, path) = write_csv(&content);
        let (train, test) = load_regression_csv(&path, &[2], false, 1, 0.2).unwrap();
        assert_eq!(train.dropped_features, vec![1]);
        assert_eq!(train.inputs[0].len(), 1);
        assert_eq!(test.inputs[0].len(), 1);
    }

    #[test]
    fn standardization_round_trip() {
        let (_d, path) = write_csv(&ten_rows());
        let (train, _) = load_regression_csv(&path, &[2], false, 3, 0.2).unwrap();
        let restored = train.destandardize_targets(&train.targets);
        for row in &restored {
            let v = row[0];
            let back = train.target_stats[0].standardize(v);
            assert!((train.target_stats[0].destandardize(back) - v).abs() < 1e-12);
            // Targets were 3i + 1 for integer i.
            assert!(((v - 1.0) / 3.0 - ((v - 1.0) / 3.0).round()).abs() < 1e-9);
        }
        let mean = train.targets.iter().map(|r| r[0]).sum::<f64>() / train.n_examples() as f64;
        assert!(mean.abs() < 1e-12, "train targets not centered: {mean}");
    }

    #[test]
    fn non_numeric_cell_reported_with_position() {
        let (_d, path) = write_csv("1,2,3\n4,oops,6\n7,8,9\n");
        match load_regression_csv(&path, &[2], false, 0, 0.34) {
            Err(TrugError::CsvParse { row, column, .. }) => {
                assert_eq!((row, column), (2, 2));
            }
            other => panic!("expected csv parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_skipped_when_flagged() {
        let (_d, path) = write_csv(&format!("a,b,target\n{}", ten_rows()));
        let (train, test) = load_regression_csv(&path, &[2], true, 11, 0.2).unwrap();
        assert_eq!(train.n_examples() + test.n_examples(), 10);
    }
}
