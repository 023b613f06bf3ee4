//! Tabular datasets: CSV loading with one-hot encoding, standardization,
//! stratified splitting, balanced resampling, and controlled distribution
//! shifts over a (label, sensitive) cell.
//!
//! A [`Dataset`] is immutable after construction and safe to share across
//! concurrent training runs. Every operation that samples takes an explicit
//! seed and uses a counter-based generator, so results are reproducible
//! across platforms.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Achievable resampling tolerance on a conditional rate; cell resampling
/// is integer-granular so exact targets are not generally reachable.
pub const SHIFT_TOLERANCE: f64 = 0.005;

/// Encoded tabular dataset.
///
/// `labels` take values in `0..m`, `sensitive` in `0..k`. Construction
/// validates that every sensitive level actually appears: the dependence
/// measures divide by the sensitive marginal, so an empty level is not
/// representable.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major feature matrix, n rows by d columns.
    pub features: Array2<f64>,
    /// Class index per row, in `0..m`.
    pub labels: Vec<usize>,
    /// Sensitive-attribute index per row, in `0..k`.
    pub sensitive: Vec<usize>,
    /// Label cardinality.
    pub m: usize,
    /// Sensitive-attribute cardinality.
    pub k: usize,
}

impl Dataset {
    /// Build a dataset with explicit cardinalities, validating every
    /// invariant.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        sensitive: Vec<usize>,
        m: usize,
        k: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Validation("dataset has no rows".to_string()));
        }
        if labels.len() != n || sensitive.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} labels / {} sensitive values",
                n,
                labels.len(),
                sensitive.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= m) {
            return Err(Error::Validation(format!(
                "label value {bad} out of range for cardinality {m}"
            )));
        }
        if let Some(&bad) = sensitive.iter().find(|&&s| s >= k) {
            return Err(Error::Validation(format!(
                "sensitive value {bad} out of range for cardinality {k}"
            )));
        }
        let mut seen = vec![false; k];
        for &s in &sensitive {
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|present| !present) {
            return Err(Error::Validation(format!(
                "sensitive level {missing} has no rows; its marginal must be positive"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(
                "features contain non-finite values".to_string(),
            ));
        }
        Ok(Dataset {
            features,
            labels,
            sensitive,
            m,
            k,
        })
    }

    /// Build a dataset inferring cardinalities from the data.
    pub fn infer(features: Array2<f64>, labels: Vec<usize>, sensitive: Vec<usize>) -> Result<Self> {
        let m = labels.iter().max().map_or(0, |&v| v + 1);
        let k = sensitive.iter().max().map_or(0, |&v| v + 1);
        Dataset::new(features, labels, sensitive, m, k)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Empirical sensitive marginal, counts / n.
    pub fn sensitive_marginal(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.k];
        for &s in &self.sensitive {
            counts[s] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.n() as f64)
            .collect()
    }

    /// Empirical P(s = sensitive | y = label); None when the label has no rows.
    pub fn conditional_rate(&self, label: usize, sensitive: usize) -> Option<f64> {
        let mut label_rows = 0usize;
        let mut cell_rows = 0usize;
        for i in 0..self.n() {
            if self.labels[i] == label {
                label_rows += 1;
                if self.sensitive[i] == sensitive {
                    cell_rows += 1;
                }
            }
        }
        if label_rows == 0 {
            None
        } else {
            Some(cell_rows as f64 / label_rows as f64)
        }
    }

    /// New dataset from the given rows (duplicates allowed), keeping the
    /// parent cardinalities.
    pub fn take_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let d = self.d();
        let mut features = Array2::<f64>::zeros((rows.len(), d));
        let mut labels = Vec::with_capacity(rows.len());
        let mut sensitive = Vec::with_capacity(rows.len());
        for (dst, &src) in rows.iter().enumerate() {
            if src >= self.n() {
                return Err(Error::Validation(format!("row index {src} out of range")));
            }
            for c in 0..d {
                features[[dst, c]] = self.features[[src, c]];
            }
            labels.push(self.labels[src]);
            sensitive.push(self.sensitive[src]);
        }
        Dataset::new(features, labels, sensitive, self.m, self.k)
    }
}

/// Column roles for loading a CSV: one label column, one sensitive column,
/// and which of the remaining feature columns are categorical.
#[derive(Debug, Clone)]
pub struct SchemaSpec {
    pub label: String,
    pub sensitive: String,
    pub categorical: Vec<String>,
}

/// How raw column values were turned into encoded integers and feature
/// columns. Stored in checkpoints so evaluation files are encoded
/// identically to the training file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncodingMap {
    pub label_column: String,
    /// Distinct label values, in code order.
    pub label_levels: Vec<String>,
    pub sensitive_column: String,
    /// Distinct sensitive values, in code order.
    pub sensitive_levels: Vec<String>,
    /// Source feature columns, in header order.
    pub features: Vec<FeatureColumn>,
}

/// One source feature column; `levels` present means one-hot encoded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub levels: Option<Vec<String>>,
}

impl EncodingMap {
    /// Names of the expanded feature columns, in matrix-column order.
    pub fn expanded_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for col in &self.features {
            match &col.levels {
                None => out.push(col.name.clone()),
                Some(levels) => {
                    for level in levels {
                        out.push(format!("{}={}", col.name, level));
                    }
                }
            }
        }
        out
    }

    /// Indices of expanded columns that came from numeric source columns
    /// (the ones standardization applies to).
    pub fn numeric_feature_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut idx = 0usize;
        for col in &self.features {
            match &col.levels {
                None => {
                    out.push(idx);
                    idx += 1;
                }
                Some(levels) => idx += levels.len(),
            }
        }
        out
    }
}

/// Sort distinct level strings into code order: numerically when every
/// value parses as an integer (so integer-coded files round-trip), else
/// lexicographically.
fn sort_levels(values: BTreeSet<String>) -> Vec<String> {
    let mut vals: Vec<String> = values.into_iter().collect();
    if vals.iter().all(|v| v.trim().parse::<i64>().is_ok()) {
        vals.sort_by_key(|v| v.trim().parse::<i64>().unwrap());
    } else {
        vals.sort();
    }
    vals
}

fn level_code(levels: &[String], value: &str) -> Option<usize> {
    levels.iter().position(|l| l == value)
}

/// Read a CSV with a header row, returning raw string records.
fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(|f| f.to_string()).collect());
    }
    Ok((header, rows))
}

fn column_index(header: &[String], name: &str, role: &str) -> Result<usize> {
    let hits: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.as_str() == name)
        .map(|(i, _)| i)
        .collect();
    match hits.len() {
        0 => Err(Error::Schema(format!("{role} column '{name}' not found"))),
        1 => Ok(hits[0]),
        _ => Err(Error::Schema(format!(
            "{role} column '{name}' appears {} times",
            hits.len()
        ))),
    }
}

/// Load and encode a CSV under the given schema.
///
/// Label and sensitive values are re-encoded to dense 0-based integers in
/// level-sorted order; categorical feature columns are one-hot expanded;
/// the returned [`EncodingMap`] records every assignment for reporting and
/// for encoding evaluation files the same way.
pub fn load_csv(path: &Path, schema: &SchemaSpec) -> Result<(Dataset, EncodingMap)> {
    let (header, rows) = read_records(path)?;
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }

    let label_idx = column_index(&header, &schema.label, "label")?;
    let sensitive_idx = column_index(&header, &schema.sensitive, "sensitive")?;
    if label_idx == sensitive_idx {
        return Err(Error::Schema(
            "label and sensitive roles name the same column".to_string(),
        ));
    }
    let mut categorical_idx = Vec::new();
    for name in &schema.categorical {
        let idx = column_index(&header, name, "categorical")?;
        if idx == label_idx || idx == sensitive_idx {
            return Err(Error::Schema(format!(
                "column '{name}' cannot be both categorical feature and label/sensitive"
            )));
        }
        categorical_idx.push(idx);
    }

    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&i| i != label_idx && i != sensitive_idx)
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::Schema(
            "schema leaves no feature columns".to_string(),
        ));
    }

    let mut label_set = BTreeSet::new();
    let mut sensitive_set = BTreeSet::new();
    let mut categorical_sets: Vec<BTreeSet<String>> =
        vec![BTreeSet::new(); categorical_idx.len()];
    for row in &rows {
        label_set.insert(row[label_idx].clone());
        sensitive_set.insert(row[sensitive_idx].clone());
        for (ci, &col) in categorical_idx.iter().enumerate() {
            categorical_sets[ci].insert(row[col].clone());
        }
    }
    let label_levels = sort_levels(label_set);
    let sensitive_levels = sort_levels(sensitive_set);
    if label_levels.len() < 2 {
        return Err(Error::Validation(format!(
            "label column '{}' has a single value; need at least two classes",
            schema.label
        )));
    }
    if sensitive_levels.len() < 2 {
        return Err(Error::Validation(format!(
            "sensitive column '{}' has a single value; dependence on it is undefined",
            schema.sensitive
        )));
    }

    let mut features = Vec::with_capacity(feature_idx.len());
    for &col in &feature_idx {
        let levels = categorical_idx
            .iter()
            .position(|&c| c == col)
            .map(|ci| sort_levels(categorical_sets[ci].clone()));
        features.push(FeatureColumn {
            name: header[col].clone(),
            levels,
        });
    }
    let map = EncodingMap {
        label_column: schema.label.clone(),
        label_levels,
        sensitive_column: schema.sensitive.clone(),
        sensitive_levels,
        features,
    };
    let data = encode_rows(&header, &rows, &map)?;
    Ok((data, map))
}

/// Encode a CSV with a previously-recorded [`EncodingMap`] (evaluation
/// path). Values unseen at training time are data errors, not new levels.
pub fn encode_csv(path: &Path, map: &EncodingMap) -> Result<Dataset> {
    let (header, rows) = read_records(path)?;
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }
    encode_rows(&header, &rows, map)
}

fn encode_rows(header: &[String], rows: &[Vec<String>], map: &EncodingMap) -> Result<Dataset> {
    let label_idx = column_index(header, &map.label_column, "label")?;
    let sensitive_idx = column_index(header, &map.sensitive_column, "sensitive")?;
    let mut column_plan = Vec::new();
    let mut d = 0usize;
    for col in &map.features {
        let idx = column_index(header, &col.name, "feature")?;
        let width = col.levels.as_ref().map_or(1, Vec::len);
        column_plan.push((idx, col, d));
        d += width;
    }

    let n = rows.len();
    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        let rownum = i + 1;
        if row.len() != header.len() {
            return Err(Error::Data {
                row: rownum,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let lv = &row[label_idx];
        labels.push(level_code(&map.label_levels, lv).ok_or_else(|| Error::Data {
            row: rownum,
            message: format!("label value '{lv}' not in the training encoding"),
        })?);
        let sv = &row[sensitive_idx];
        sensitive.push(
            level_code(&map.sensitive_levels, sv).ok_or_else(|| Error::Data {
                row: rownum,
                message: format!("sensitive value '{sv}' not in the training encoding"),
            })?,
        );
        for &(idx, col, offset) in &column_plan {
            let raw = &row[idx];
            match &col.levels {
                None => {
                    let value: f64 = raw.parse().map_err(|_| Error::Data {
                        row: rownum,
                        message: format!("column '{}': cannot parse '{raw}' as a number", col.name),
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Data {
                            row: rownum,
                            message: format!("column '{}': non-finite value '{raw}'", col.name),
                        });
                    }
                    features[[i, offset]] = value;
                }
                Some(levels) => {
                    let code = level_code(levels, raw).ok_or_else(|| Error::Data {
                        row: rownum,
                        message: format!(
                            "column '{}': value '{raw}' not in the training encoding",
                            col.name
                        ),
                    })?;
                    features[[i, offset + code]] = 1.0;
                }
            }
        }
    }
    Dataset::new(
        features,
        labels,
        sensitive,
        map.label_levels.len(),
        map.sensitive_levels.len(),
    )
}

/// Write an encoded dataset back to CSV: features in full-precision
/// decimal, label and sensitive as their integer codes. Headers are
/// `f0..f{d-1},label,sensitive`, so a reload with that schema round-trips
/// the integer columns bit-exactly.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.d()).map(|c| format!("f{c}")).collect();
    header.push("label".to_string());
    header.push("sensitive".to_string());
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut record: Vec<String> = (0..data.d())
            .map(|c| format!("{}", data.features[[i, c]]))
            .collect();
        record.push(data.labels[i].to_string());
        record.push(data.sensitive[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Zero-mean unit-variance scaling fitted on a training split and applied
/// unchanged to evaluation data. Columns with (near-)zero variance are
/// centered but not scaled.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Which feature columns the transform touches; one-hot columns are
    /// left as 0/1 indicators.
    pub columns: Vec<usize>,
}

impl Standardizer {
    /// Fit on the given columns of a training split (population standard
    /// deviation).
    pub fn fit(data: &Dataset, columns: &[usize]) -> Result<Standardizer> {
        let n = data.n() as f64;
        let mut means = Vec::with_capacity(columns.len());
        let mut scales = Vec::with_capacity(columns.len());
        for &c in columns {
            if c >= data.d() {
                return Err(Error::Validation(format!("column index {c} out of range")));
            }
            let mean: f64 = (0..data.n()).map(|i| data.features[[i, c]]).sum::<f64>() / n;
            let var: f64 = (0..data.n())
                .map(|i| (data.features[[i, c]] - mean).powi(2))
                .sum::<f64>()
                / n;
            means.push(mean);
            scales.push(if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 });
        }
        Ok(Standardizer {
            means,
            scales,
            columns: columns.to_vec(),
        })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let mut features = data.features.clone();
        for (j, &c) in self.columns.iter().enumerate() {
            if c >= data.d() {
                return Err(Error::Validation(format!("column index {c} out of range")));
            }
            for i in 0..data.n() {
                features[[i, c]] = (features[[i, c]] - self.means[j]) / self.scales[j];
            }
        }
        Dataset::new(
            features,
            data.labels.clone(),
            data.sensitive.clone(),
            data.m,
            data.k,
        )
    }
}

/// A controlled shift of one (label, sensitive) cell to a target
/// conditional rate P(s = target_sensitive | y = target_label).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftRequest {
    pub target_label: usize,
    pub target_sensitive: usize,
    /// Desired conditional rate, strictly inside (0, 1).
    pub target_conditional: f64,
    pub mode: ShiftMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Remove rows from the target cell (can only lower the rate).
    Undersample,
    /// Duplicate rows from the target cell, sampling with replacement
    /// (can only raise the rate).
    Oversample,
}

/// Row plan realizing a shift: original row indices to keep, in order,
/// with any duplicated rows appended at the end. Works on bare label /
/// sensitive vectors so the same plan can be applied to an encoded
/// dataset or to raw CSV records.
pub fn shift_plan(labels: &[usize], sensitive: &[usize], req: &ShiftRequest) -> Result<Vec<usize>> {
    if !(req.target_conditional > 0.0 && req.target_conditional < 1.0) {
        return Err(Error::Validation(format!(
            "target conditional {} must lie strictly inside (0, 1)",
            req.target_conditional
        )));
    }
    let n = labels.len();
    let cell: Vec<usize> = (0..n)
        .filter(|&i| labels[i] == req.target_label && sensitive[i] == req.target_sensitive)
        .collect();
    let label_total = (0..n).filter(|&i| labels[i] == req.target_label).count();
    if cell.is_empty() {
        return Err(Error::Validation(format!(
            "cell (y={}, s={}) is empty",
            req.target_label, req.target_sensitive
        )));
    }
    let c = cell.len() as f64;
    let nl = label_total as f64;
    let r = req.target_conditional;
    let current = c / nl;

    // The achieved rate is monotone in the resample count for both modes,
    // so the best integer count is a neighbor of the real-valued solution.
    let (ideal, max_count) = match req.mode {
        ShiftMode::Undersample => ((c - r * nl) / (1.0 - r), cell.len()),
        ShiftMode::Oversample => ((r * nl - c) / (1.0 - r), usize::MAX),
    };
    let eval = |t: usize| -> f64 {
        match req.mode {
            ShiftMode::Undersample => {
                let remaining = nl - t as f64;
                if remaining <= 0.0 {
                    f64::NAN
                } else {
                    (c - t as f64) / remaining
                }
            }
            ShiftMode::Oversample => (c + t as f64) / (nl + t as f64),
        }
    };
    let lo = ideal.floor().max(0.0) as usize;
    let mut best: Option<(usize, f64)> = None;
    for t in [lo, lo.saturating_add(1)] {
        if t > max_count {
            continue;
        }
        let achieved = eval(t);
        if !achieved.is_finite() {
            continue;
        }
        let better = match best {
            Some((_, prev)) => (achieved - r).abs() < (prev - r).abs(),
            None => true,
        };
        if better {
            best = Some((t, achieved));
        }
    }
    let (count, achieved) = best.ok_or_else(|| {
        Error::InfeasibleShift(format!(
            "cell (y={}, s={}) cannot be resampled toward {r:.4}",
            req.target_label, req.target_sensitive
        ))
    })?;
    if (achieved - r).abs() > SHIFT_TOLERANCE {
        let message = match req.mode {
            ShiftMode::Undersample if r > current + SHIFT_TOLERANCE => format!(
                "undersampling cannot raise the rate from {current:.4} to {r:.4}"
            ),
            ShiftMode::Oversample if r < current - SHIFT_TOLERANCE => format!(
                "oversampling cannot lower the rate from {current:.4} to {r:.4}"
            ),
            _ => format!(
                "cell granularity only reaches {achieved:.4}, target {r:.4} needs more rows"
            ),
        };
        return Err(Error::InfeasibleShift(message));
    }
    if count == 0 {
        return Ok((0..n).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    match req.mode {
        ShiftMode::Undersample => {
            let mut pool = cell.clone();
            pool.shuffle(&mut rng);
            let drop: BTreeSet<usize> = pool.into_iter().take(count).collect();
            Ok((0..n).filter(|i| !drop.contains(i)).collect())
        }
        ShiftMode::Oversample => {
            let mut plan: Vec<usize> = (0..n).collect();
            for _ in 0..count {
                plan.push(cell[rng.gen_range(0..cell.len())]);
            }
            Ok(plan)
        }
    }
}

/// Apply a shift request to an encoded dataset.
///
/// Undersampling removes seeded-random rows from the target cell only;
/// oversampling appends seeded with-replacement duplicates of target-cell
/// rows. Every other cell is untouched. The achieved conditional rate is
/// within [`SHIFT_TOLERANCE`] of the request or the call fails.
pub fn apply_shift(data: &Dataset, req: &ShiftRequest) -> Result<Dataset> {
    if req.target_label >= data.m || req.target_sensitive >= data.k {
        return Err(Error::Validation(format!(
            "cell (y={}, s={}) outside cardinalities (m={}, k={})",
            req.target_label, req.target_sensitive, data.m, data.k
        )));
    }
    let plan = shift_plan(&data.labels, &data.sensitive, req)?;
    if plan.len() == data.n() && plan.iter().enumerate().all(|(i, &r)| i == r) {
        return Ok(data.clone());
    }
    data.take_rows(&plan)
}

/// Seeded row split. `fraction` is the share of the first side; with
/// `stratify`, each (label, sensitive) cell is split separately so cell
/// proportions are preserved within one row.
pub fn split(
    data: &Dataset,
    fraction: f64,
    stratify: bool,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (first, second) = split_plan(
        &data.labels,
        &data.sensitive,
        data.m,
        data.k,
        fraction,
        stratify,
        seed,
    )?;
    Ok((data.take_rows(&first)?, data.take_rows(&second)?))
}

/// Row-index form of [`split`]: which rows land in each side. Lets
/// callers that hold raw records split them without re-encoding.
pub fn split_plan(
    labels: &[usize],
    sensitive: &[usize],
    m: usize,
    k: usize,
    fraction: f64,
    stratify: bool,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Validation(format!(
            "split fraction {fraction} must lie strictly inside (0, 1)"
        )));
    }
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first: Vec<usize> = Vec::new();
    let mut second: Vec<usize> = Vec::new();
    if stratify {
        // Deterministic cell order, seeded shuffle inside each cell.
        for label in 0..m {
            for sens in 0..k {
                let mut cell: Vec<usize> = (0..n)
                    .filter(|&i| labels[i] == label && sensitive[i] == sens)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                cell.shuffle(&mut rng);
                let take = (fraction * cell.len() as f64).round() as usize;
                let take = take.min(cell.len());
                first.extend_from_slice(&cell[..take]);
                second.extend_from_slice(&cell[take..]);
            }
        }
        first.sort_unstable();
        second.sort_unstable();
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let take = (fraction * n as f64).round() as usize;
        let take = take.min(n);
        first = order[..take].to_vec();
        second = order[take..].to_vec();
        first.sort_unstable();
        second.sort_unstable();
    }
    if first.is_empty() || second.is_empty() {
        return Err(Error::Validation(format!(
            "fraction {fraction} leaves an empty split side for n={n}"
        )));
    }
    Ok((first, second))
}

/// Equalize sensitive-level counts by duplicating seeded with-replacement
/// rows within each minority level, keeping all original rows. Supports
/// the validation protocol that oversamples minority groups when no
/// target-domain data is available.
pub fn oversample_balanced(data: &Dataset, seed: u64) -> Result<Dataset> {
    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); data.k];
    for i in 0..data.n() {
        by_level[data.sensitive[i]].push(i);
    }
    let target = by_level.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan: Vec<usize> = (0..data.n()).collect();
    for level_rows in &by_level {
        let deficit = target - level_rows.len();
        for _ in 0..deficit {
            plan.push(level_rows[rng.gen_range(0..level_rows.len())]);
        }
    }
    data.take_rows(&plan)
}
