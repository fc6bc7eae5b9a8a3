//! Dataset ingestion and featurization.
//!
//! A dataset is a CSV table (header row, UTF-8, `.` decimal separator)
//! paired with a modality configuration that groups columns into ordered,
//! cost-annotated acquisition units and names each column's encoding:
//! numeric pass-through, one-hot for categoricals, or k-mer frequencies for
//! DNA sequences. Loading is order-stable: the same input files always
//! produce an identical feature table.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alfa::{ModalityMode, ModalitySpec};
use crate::belief::Frame;
use crate::seeding;

/// Supported modality-config schema version.
pub const MODALITY_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("modality config is invalid: {0}")]
    InvalidConfig(String),
    #[error("unsupported modality config version {0}, expected {MODALITY_CONFIG_VERSION}")]
    UnsupportedVersion(u32),
    #[error("column `{0}` not present in the table")]
    UnknownColumn(String),
    #[error("column `{0}` referenced by more than one modality")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not numeric")]
    NonNumericValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: {source}")]
    BadSequence {
        row: usize,
        column: String,
        source: Box<DataError>,
    },
    #[error("sequence has no window of {k} contiguous unambiguous bases")]
    TooShort { k: usize },
    #[error("k must be at least 1")]
    KmerZero,
    #[error("table has no data rows")]
    EmptyTable,
    #[error("labels do not form a usable frame: {0}")]
    InvalidLabels(String),
    #[error("split ratios must be non-negative and sum to at most 1 (got {0})")]
    RatioOverflow(f64),
    #[error("scaler blob is corrupt: {0}")]
    CorruptScaler(String),
}

/// Column encoding named in the modality config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Numeric,
    OneHot,
    Kmer {
        k: usize,
    },
}

/// A column reference in the config: either a bare name (numeric) or a
/// name with an explicit encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnConfig {
    Plain(String),
    Spec {
        name: String,
        #[serde(default)]
        encoding: Encoding,
    },
}

impl ColumnConfig {
    pub fn name(&self) -> &str {
        match self {
            ColumnConfig::Plain(name) => name,
            ColumnConfig::Spec { name, .. } => name,
        }
    }

    pub fn encoding(&self) -> Encoding {
        match self {
            ColumnConfig::Plain(_) => Encoding::Numeric,
            ColumnConfig::Spec { encoding, .. } => encoding.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalityGroupConfig {
    pub name: String,
    pub cost: f64,
    #[serde(default)]
    pub mode: ModalityMode,
    pub columns: Vec<ColumnConfig>,
}

/// Versioned description of how table columns map onto modalities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalityConfig {
    pub version: u32,
    pub label_column: String,
    pub modalities: Vec<ModalityGroupConfig>,
}

impl ModalityConfig {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let config: ModalityConfig =
            serde_json::from_str(text).map_err(|e| DataError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.version != MODALITY_CONFIG_VERSION {
            return Err(DataError::UnsupportedVersion(self.version));
        }
        if self.modalities.is_empty() {
            return Err(DataError::InvalidConfig("no modalities declared".into()));
        }
        let mut seen = BTreeSet::new();
        for group in &self.modalities {
            if group.cost < 0.0 {
                return Err(DataError::InvalidConfig(format!(
                    "modality `{}` has negative cost",
                    group.name
                )));
            }
            if group.columns.is_empty() {
                return Err(DataError::InvalidConfig(format!(
                    "modality `{}` lists no columns",
                    group.name
                )));
            }
            for column in &group.columns {
                if column.name() == self.label_column {
                    return Err(DataError::InvalidConfig(format!(
                        "label column `{}` cannot be a feature",
                        self.label_column
                    )));
                }
                if !seen.insert(column.name().to_string()) {
                    return Err(DataError::DuplicateColumn(column.name().to_string()));
                }
                if let Encoding::Kmer { k: 0 } = column.encoding() {
                    return Err(DataError::KmerZero);
                }
            }
        }
        Ok(())
    }
}

/// Provenance of one encoded feature column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMeta {
    /// Encoded column name (`hue`, `country=FR`, `dna:ACG`, ...).
    pub name: String,
    /// Source table column.
    pub source: String,
    pub encoding: Encoding,
}

/// Encoded feature table with its label frame and modality layout.
#[derive(Debug, Clone)]
pub struct MultiModalDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub frame: Frame,
    pub modalities: Vec<ModalitySpec>,
    pub columns: Vec<ColumnMeta>,
}

impl MultiModalDataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Encoded column indices visible at modality prefix `j` (1-based).
    pub fn view_columns(&self, prefix: usize) -> Vec<usize> {
        crate::alfa::modality_view(&self.modalities, prefix)
    }

    pub fn modality_names(&self) -> Vec<&str> {
        self.modalities.iter().map(|m| m.name.as_str()).collect()
    }
}

/// Loads a dataset from a CSV table and a modality config file.
pub fn load_dataset(table: &Path, config: &Path) -> Result<MultiModalDataset, DataError> {
    let config = ModalityConfig::from_path(config)?;
    let file = File::open(table).map_err(|source| DataError::Io {
        path: table.display().to_string(),
        source,
    })?;
    load_dataset_reader(file, &config)
}

/// Loads a dataset from any CSV reader and a parsed config.
pub fn load_dataset_reader<R: Read>(
    table: R,
    config: &ModalityConfig,
) -> Result<MultiModalDataset, DataError> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(table);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };

    let label_index = find(&config.label_column)?;
    for group in &config.modalities {
        for column in &group.columns {
            find(column.name())?;
        }
    }

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record?);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyTable);
    }

    // labels: sorted distinct values fix the frame order
    let raw_labels: Vec<&str> = rows.iter().map(|r| r.get(label_index).unwrap_or("")).collect();
    let classes: BTreeSet<&str> = raw_labels.iter().copied().collect();
    let frame = Frame::new(classes.iter().copied())
        .map_err(|e| DataError::InvalidLabels(e.to_string()))?;
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| frame.index_of(l).expect("label came from the frame"))
        .collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut metas: Vec<ColumnMeta> = Vec::new();
    let mut modalities: Vec<ModalitySpec> = Vec::new();

    for group in &config.modalities {
        let start = columns.len();
        for column in &group.columns {
            let source_index = find(column.name())?;
            let values: Vec<&str> = rows
                .iter()
                .map(|r| r.get(source_index).unwrap_or(""))
                .collect();
            encode_column(column, &values, &mut columns, &mut metas)?;
        }
        modalities.push(ModalitySpec {
            name: group.name.clone(),
            columns: (start..columns.len()).collect(),
            cost: group.cost,
            mode: group.mode,
        });
    }

    let n = rows.len();
    let p = columns.len();
    let features = Array2::from_shape_fn((n, p), |(i, j)| columns[j][i]);
    Ok(MultiModalDataset {
        features,
        labels,
        frame,
        modalities,
        columns: metas,
    })
}

fn encode_column(
    column: &ColumnConfig,
    values: &[&str],
    out: &mut Vec<Vec<f64>>,
    metas: &mut Vec<ColumnMeta>,
) -> Result<(), DataError> {
    let name = column.name();
    match column.encoding() {
        Encoding::Numeric => {
            let mut parsed = Vec::with_capacity(values.len());
            for (row, value) in values.iter().enumerate() {
                let v: f64 = value.trim().parse().map_err(|_| DataError::NonNumericValue {
                    row: row + 1,
                    column: name.to_string(),
                    value: value.to_string(),
                })?;
                parsed.push(v);
            }
            out.push(parsed);
            metas.push(ColumnMeta {
                name: name.to_string(),
                source: name.to_string(),
                encoding: Encoding::Numeric,
            });
        }
        Encoding::OneHot => {
            let levels: BTreeSet<&str> = values.iter().map(|v| v.trim()).collect();
            for level in &levels {
                out.push(
                    values
                        .iter()
                        .map(|v| if v.trim() == *level { 1.0 } else { 0.0 })
                        .collect(),
                );
                metas.push(ColumnMeta {
                    name: format!("{name}={level}"),
                    source: name.to_string(),
                    encoding: Encoding::OneHot,
                });
            }
        }
        Encoding::Kmer { k } => {
            let width = 4usize.pow(k as u32);
            let mut encoded: Vec<Vec<f64>> = vec![Vec::with_capacity(values.len()); width];
            for (row, value) in values.iter().enumerate() {
                let freqs =
                    kmer_features(value, k).map_err(|source| DataError::BadSequence {
                        row: row + 1,
                        column: name.to_string(),
                        source: Box::new(source),
                    })?;
                for (slot, f) in encoded.iter_mut().zip(&freqs) {
                    slot.push(*f);
                }
            }
            for (index, slot) in encoded.into_iter().enumerate() {
                out.push(slot);
                metas.push(ColumnMeta {
                    name: format!("{name}:{}", kmer_name(index, k)),
                    source: name.to_string(),
                    encoding: Encoding::Kmer { k },
                });
            }
        }
    }
    Ok(())
}

const BASES: [char; 4] = ['A', 'C', 'G', 'T'];

fn kmer_name(mut index: usize, k: usize) -> String {
    let mut out = vec!['A'; k];
    for pos in (0..k).rev() {
        out[pos] = BASES[index % 4];
        index /= 4;
    }
    out.into_iter().collect()
}

fn base_index(b: u8) -> Option<usize> {
    match b.to_ascii_uppercase() {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

/// Normalized k-mer frequencies of a DNA string, in lexicographic feature
/// order (AA..A first). Windows containing a symbol outside {A, C, G, T}
/// are skipped; the counts are divided by the number of counted windows.
pub fn kmer_features(sequence: &str, k: usize) -> Result<Vec<f64>, DataError> {
    if k == 0 {
        return Err(DataError::KmerZero);
    }
    let bytes = sequence.as_bytes();
    let width = 4usize.pow(k as u32);
    let mut counts = vec![0u64; width];
    let mut total = 0u64;
    if bytes.len() >= k {
        'windows: for start in 0..=bytes.len() - k {
            let mut index = 0usize;
            for &b in &bytes[start..start + k] {
                match base_index(b) {
                    Some(d) => index = index * 4 + d,
                    None => continue 'windows,
                }
            }
            counts[index] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(DataError::TooShort { k });
    }
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

/// Per-column location/scale transform fitted on training data
/// (population standard deviation; zero-variance columns map to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    stats: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn fit(view: ArrayView2<'_, f64>) -> Self {
        let n = view.nrows().max(1) as f64;
        let stats = view
            .columns()
            .into_iter()
            .map(|col| {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .collect();
        Scaler { stats }
    }

    pub fn dim(&self) -> usize {
        self.stats.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.stats.iter().map(|(m, _)| *m).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.stats.iter().map(|(_, s)| *s).collect()
    }

    fn scale(&self, j: usize, v: f64) -> f64 {
        let (mean, std) = self.stats[j];
        if std == 0.0 {
            0.0
        } else {
            (v - mean) / std
        }
    }

    pub fn transform(&self, view: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(view.ncols(), self.dim(), "scaler dimension mismatch");
        Array2::from_shape_fn((view.nrows(), view.ncols()), |(i, j)| {
            self.scale(j, view[(i, j)])
        })
    }

    pub fn transform_row(&self, row: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(row.len(), self.dim(), "scaler dimension mismatch");
        Array1::from_shape_fn(row.len(), |j| self.scale(j, row[j]))
    }

    /// Writes `column,mean,std` records.
    pub fn save_csv<W: Write>(&self, names: &[String], w: &mut W) -> Result<(), DataError> {
        assert_eq!(names.len(), self.dim(), "one name per column");
        let mut writer = csv::Writer::from_writer(w);
        writer
            .write_record(["column", "mean", "std"])
            .map_err(DataError::Csv)?;
        for (name, (mean, std)) in names.iter().zip(&self.stats) {
            writer
                .write_record([name.as_str(), &format!("{mean:e}"), &format!("{std:e}")])
                .map_err(DataError::Csv)?;
        }
        writer.flush().map_err(|e| DataError::CorruptScaler(e.to_string()))?;
        Ok(())
    }

    pub fn load_csv<R: Read>(r: R) -> Result<(Vec<String>, Scaler), DataError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut names = Vec::new();
        let mut stats = Vec::new();
        for record in reader.records() {
            let record = record?;
            let name = record
                .get(0)
                .ok_or_else(|| DataError::CorruptScaler("missing column field".into()))?;
            let mean: f64 = record
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| DataError::CorruptScaler("bad mean".into()))?;
            let std: f64 = record
                .get(2)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| DataError::CorruptScaler("bad std".into()))?;
            names.push(name.to_string());
            stats.push((mean, std));
        }
        Ok((names, Scaler { stats }))
    }
}

/// Standardizes the training view and any sibling views (validation, test)
/// with the training statistics.
pub fn standardize(
    train: ArrayView2<'_, f64>,
    others: &[ArrayView2<'_, f64>],
) -> (Array2<f64>, Vec<Array2<f64>>, Scaler) {
    let scaler = Scaler::fit(train);
    let train_out = scaler.transform(train);
    let others_out = others.iter().map(|v| scaler.transform(*v)).collect();
    (train_out, others_out, scaler)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    #[serde(default)]
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn sum(&self) -> f64 {
        self.train + self.validation + self.test
    }
}

/// Reproducible index split: a seeded shuffle with contiguous assignment at
/// cumulative-ratio boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

pub fn split(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitPlan, DataError> {
    if ratios.train < 0.0 || ratios.validation < 0.0 || ratios.test < 0.0 {
        return Err(DataError::RatioOverflow(ratios.sum()));
    }
    if ratios.sum() > 1.0 + 1e-9 {
        return Err(DataError::RatioOverflow(ratios.sum()));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let b1 = ((n as f64) * ratios.train).floor() as usize;
    let b2 = ((n as f64) * (ratios.train + ratios.validation)).floor() as usize;
    let b3 = ((n as f64) * ratios.sum()).floor() as usize;
    Ok(SplitPlan {
        train: indices[..b1].to_vec(),
        validation: indices[b1..b2].to_vec(),
        test: indices[b2..b3].to_vec(),
        seed,
        ratios,
    })
}

/// Up to `per_class` indices of each class, chosen by seeded shuffle within
/// the class and returned in ascending order.
pub fn stratified_subset(labels: &[usize], per_class: usize, seed: u64) -> Vec<usize> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut chosen = Vec::new();
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, class as u64));
        members.shuffle(&mut rng);
        members.truncate(per_class);
        chosen.extend(members);
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic_config() -> ModalityConfig {
        ModalityConfig::from_json(
            r#"{
                "version": 1,
                "label_column": "class",
                "modalities": [
                    {"name": "cheap", "cost": 1.0, "columns": ["a", "b"]},
                    {"name": "rich", "cost": 5.0, "columns": [
                        {"name": "color", "encoding": "one_hot"}
                    ]}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn loads_numeric_and_one_hot_columns() {
        let csv = "a,b,color,class\n1.0,2.0,red,x\n3.0,4.0,blue,y\n5.0,6.0,green,x\n";
        let ds = load_dataset_reader(csv.as_bytes(), &basic_config()).unwrap();
        assert_eq!(ds.n(), 3);
        // a, b + 3 one-hot levels
        assert_eq!(ds.dim(), 5);
        assert_eq!(ds.frame.labels(), &["x".to_string(), "y".to_string()]);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        // levels sorted: blue, green, red
        let names: Vec<&str> = ds.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "color=blue", "color=green", "color=red"]);
        assert_eq!(ds.features.row(0).to_vec(), vec![1.0, 2.0, 0.0, 0.0, 1.0]);
        assert_eq!(ds.modalities[0].columns, vec![0, 1]);
        assert_eq!(ds.modalities[1].columns, vec![2, 3, 4]);
        assert_eq!(ds.view_columns(1), vec![0, 1]);
        assert_eq!(ds.view_columns(2), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "a,class\n1.0,x\n2.0,y\n";
        let err = load_dataset_reader(csv.as_bytes(), &basic_config()).unwrap_err();
        assert!(matches!(err, DataError::UnknownColumn(c) if c == "b"));
    }

    #[test]
    fn non_numeric_value_is_located() {
        let csv = "a,b,color,class\n1.0,2.0,red,x\n3.0,oops,blue,y\n";
        let err = load_dataset_reader(csv.as_bytes(), &basic_config()).unwrap_err();
        match err {
            DataError::NonNumericValue { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "oops"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_column_and_version_checks() {
        let dup = r#"{
            "version": 1,
            "label_column": "class",
            "modalities": [
                {"name": "m1", "cost": 0.0, "columns": ["a"]},
                {"name": "m2", "cost": 0.0, "columns": ["a"]}
            ]
        }"#;
        assert!(matches!(
            ModalityConfig::from_json(dup),
            Err(DataError::DuplicateColumn(_))
        ));

        let future = r#"{"version": 9, "label_column": "c", "modalities": [
            {"name": "m", "cost": 0.0, "columns": ["a"]}
        ]}"#;
        assert!(matches!(
            ModalityConfig::from_json(future),
            Err(DataError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn kmer_single_window() {
        let v = kmer_features("AAA", 3).unwrap();
        assert_eq!(v.len(), 64);
        assert_eq!(v[0], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn kmer_two_windows() {
        let v = kmer_features("ACGT", 3).unwrap();
        // ACG = 0*16 + 1*4 + 2 = 6, CGT = 1*16 + 2*4 + 3 = 27
        assert_eq!(v[6], 0.5);
        assert_eq!(v[27], 0.5);
        assert_eq!(v.iter().filter(|x| **x > 0.0).count(), 2);
    }

    #[test]
    fn kmer_ambiguous_bases_skip_windows() {
        // every 3-window of ACNGT touches the N
        assert!(matches!(
            kmer_features("ACNGT", 3),
            Err(DataError::TooShort { k: 3 })
        ));
        // lowercase accepted, gaps skipped
        let v = kmer_features("acgtNacg", 2).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kmer_name_order_is_lexicographic() {
        assert_eq!(kmer_name(0, 3), "AAA");
        assert_eq!(kmer_name(1, 3), "AAC");
        assert_eq!(kmer_name(63, 3), "TTT");
    }

    #[test]
    fn standardize_uses_train_statistics_only() {
        let train = ndarray::array![[0.0, 5.0], [2.0, 5.0]];
        let test = ndarray::array![[4.0, 7.0]];
        let (train_std, others, scaler) = standardize(train.view(), &[test.view()]);
        // mean 1, population std 1
        assert_eq!(train_std.column(0).to_vec(), vec![-1.0, 1.0]);
        // constant column maps to zero
        assert_eq!(train_std.column(1).to_vec(), vec![0.0, 0.0]);
        // the test value is transformed with train stats, never its own
        assert_eq!(others[0][(0, 0)], 3.0);
        assert_eq!(others[0][(0, 1)], 0.0);
        assert_eq!(scaler.means(), vec![1.0, 5.0]);
    }

    #[test]
    fn scaler_round_trips_through_csv() {
        let train = ndarray::array![[0.0, 5.0], [2.0, 6.0], [4.0, 7.5]];
        let scaler = Scaler::fit(train.view());
        let names = vec!["a".to_string(), "b".to_string()];
        let mut blob = Vec::new();
        scaler.save_csv(&names, &mut blob).unwrap();
        let (loaded_names, loaded) = Scaler::load_csv(blob.as_slice()).unwrap();
        assert_eq!(loaded_names, names);
        for j in 0..2 {
            assert!((loaded.means()[j] - scaler.means()[j]).abs() <= 1e-15);
            assert!((loaded.stds()[j] - scaler.stds()[j]).abs() <= 1e-15);
        }
    }

    #[test]
    fn split_sizes_and_reproducibility() {
        let ratios = SplitRatios {
            train: 0.7,
            validation: 0.0,
            test: 0.3,
        };
        let plan = split(10, ratios, 5).unwrap();
        assert_eq!((plan.train.len(), plan.test.len()), (7, 3));
        assert_eq!(split(10, ratios, 5).unwrap(), plan);
        assert_ne!(split(10, ratios, 6).unwrap().train, plan.train);

        let wine = split(178, ratios, 0).unwrap();
        assert_eq!((wine.train.len(), wine.test.len()), (124, 54));

        let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_ratio_overflow() {
        let ratios = SplitRatios {
            train: 0.8,
            validation: 0.3,
            test: 0.3,
        };
        assert!(matches!(split(10, ratios, 0), Err(DataError::RatioOverflow(_))));
    }

    #[test]
    fn three_way_split_partitions() {
        let ratios = SplitRatios {
            train: 0.56,
            validation: 0.14,
            test: 0.3,
        };
        let plan = split(178, ratios, 3).unwrap();
        assert_eq!(plan.train.len(), 99);
        assert_eq!(plan.validation.len(), 25);
        assert_eq!(plan.test.len(), 54);
    }

    #[test]
    fn stratified_subset_caps_per_class() {
        let labels = vec![0, 0, 0, 1, 1, 2];
        let subset = stratified_subset(&labels, 2, 9);
        let count = |class: usize| subset.iter().filter(|&&i| labels[i] == class).count();
        assert_eq!(count(0), 2);
        assert_eq!(count(1), 2);
        assert_eq!(count(2), 1);
        assert!(subset.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn loading_is_order_stable() {
        let csv = "a,b,color,class\n1.5,2.0,red,x\n3.25,4.0,blue,y\n5.0,6.125,green,x\n";
        let a = load_dataset_reader(csv.as_bytes(), &basic_config()).unwrap();
        let b = load_dataset_reader(csv.as_bytes(), &basic_config()).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.columns, b.columns);
    }
}
