//! CSV ingestion, seeded train/validation/test splits and z-score
//! normalization.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// Standard deviations below this are treated as zero.
const DEGENERATE_STD: f64 = 1e-12;

/// Selects which CSV column carries the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".to_owned())
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_owned()),
        })
    }
}

/// A labelled classification dataset: `L` rows of `I` real features and a
/// dense class index in `[0, K)` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from in-memory parts, validating its invariants.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let names = (0..class_count).map(|k| k.to_string()).collect();
        let feature_names = (0..features.ncols()).map(|i| format!("x{i}")).collect();
        let ds = Dataset {
            features,
            labels,
            class_names: names,
            feature_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn sample_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    fn validate(&self) -> Result<()> {
        let (l, i, k) = (
            self.sample_count(),
            self.feature_count(),
            self.class_count(),
        );
        if self.labels.len() != l {
            return Err(Error::Dimension(format!(
                "{} labels for {l} feature rows",
                self.labels.len()
            )));
        }
        if i == 0 {
            return Err(Error::NoFeatures);
        }
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if l < k {
            return Err(Error::TooFewRows {
                rows: l,
                required: k,
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= k) {
            return Err(Error::Dimension(format!("label {bad} outside [0, {k})")));
        }
        for ((row, column), v) in self.features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
        }
        Ok(())
    }

    /// Gathers the given rows into a self-contained partition.
    pub fn partition(&self, rows: &[usize]) -> Partition {
        let x = self.features.select(Axis(0), rows);
        let labels: Vec<usize> = rows.iter().map(|&r| self.labels[r]).collect();
        let targets = one_hot(&labels, self.class_count());
        Partition { x, labels, targets }
    }
}

/// Feature rows, labels and one-hot targets for one subset of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub targets: Array2<f64>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-feature mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits population mean and standard deviation over the given rows.
    pub fn fit(features: &Array2<f64>, rows: &[usize]) -> Self {
        let sub = features.select(Axis(0), rows);
        let n = sub.nrows() as f64;
        let mean: Array1<f64> = sub.sum_axis(Axis(0)) / n;
        let std = sub
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &m)| (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        NormStats {
            mean: mean.to_vec(),
            std,
        }
    }
}

/// Disjoint train/validation/test row indices plus the normalization
/// statistics fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub norm_stats: NormStats,
}

/// Partition sizes for `l` rows: half for training, half of the remainder
/// for validation, the rest for testing.
pub fn split_sizes(l: usize) -> (usize, usize, usize) {
    let train = l / 2;
    let validation = (l - train) / 2;
    (train, validation, l - train - validation)
}

/// Shuffles the rows with a seeded generator and cuts them 50/25/25.
pub fn split(ds: &Dataset, seed: u64) -> Result<SplitSet> {
    let l = ds.sample_count();
    if l < 4 {
        return Err(Error::TooFewRows {
            rows: l,
            required: 4,
        });
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(&mut seed::rng(seed));
    let (n_train, n_val, _) = split_sizes(l);
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    let train = order;
    let norm_stats = NormStats::fit(&ds.features, &train);
    Ok(SplitSet {
        train,
        validation,
        test,
        norm_stats,
    })
}

/// Applies the split's training-fitted z-score to every row. Features with
/// zero training variance become identically zero.
pub fn normalize(ds: &Dataset, splits: &SplitSet) -> Dataset {
    let stats = &splits.norm_stats;
    let mut out = ds.clone();
    for (j, mut col) in out.features.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s) = (stats.mean[j], stats.std[j]);
        if s < DEGENERATE_STD {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
    out
}

/// One-hot target matrix for the dataset's labels.
pub fn encode_targets(ds: &Dataset) -> Array2<f64> {
    one_hot(&ds.labels, ds.class_count())
}

pub fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), k));
    for (r, &y) in labels.iter().enumerate() {
        out[[r, y]] = 1.0;
    }
    out
}

/// Reads a comma-separated file. Every column except the label column must
/// parse as a real number; labels are re-indexed densely in order of first
/// appearance.
pub fn load_csv(path: &Path, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Option<Vec<String>> = if has_header {
        Some(
            reader
                .headers()
                .map_err(csv_err)?
                .iter()
                .map(str::to_owned)
                .collect(),
        )
    } else {
        None
    };

    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| records.first().map(csv::StringRecord::len))
        .ok_or(Error::TooFewRows {
            rows: 0,
            required: 2,
        })?;

    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(Error::UnknownLabelColumn(i.to_string())),
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::UnknownLabelColumn(name.clone()))?,
    };

    let feature_count = width - 1;
    // rows are reported 1-based and counted from the first line of the file
    let row_offset = if has_header { 2 } else { 1 };
    let mut data = Vec::with_capacity(records.len() * feature_count);
    let mut labels = Vec::with_capacity(records.len());
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: r + row_offset,
                found: rec.len(),
                expected: width,
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_idx {
                let next = class_index.len();
                let y = *class_index.entry(cell.to_owned()).or_insert_with(|| {
                    class_names.push(cell.to_owned());
                    next
                });
                labels.push(y);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: r + row_offset,
                column: c + 1,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: r + row_offset,
                    column: c + 1,
                });
            }
            data.push(v);
        }
    }

    let feature_names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != label_idx)
            .map(|(_, n)| n.clone())
            .collect(),
        None => (0..feature_count).map(|i| format!("x{i}")).collect(),
    };
    let features = Array2::from_shape_vec((labels.len(), feature_count), data)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let ds = Dataset {
        features,
        labels,
        class_names,
        feature_names,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::File::create(&path)
            .unwrap()
            .write_all(contents.as_bytes())
            .unwrap();
        (dir, path)
    }

    #[test]
    fn smallest_legal_input() {
        let (_d, p) = write_tmp("x,class\n1.5,a\n2.5,b\n");
        let ds = load_csv(&p, &LabelColumn::default(), true).unwrap();
        assert_eq!(
            (ds.feature_count(), ds.class_count(), ds.sample_count()),
            (1, 2, 2)
        );
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let (_d, p) = write_tmp("a,b,class\n1,2,x\n3,oops,y\n");
        let err = load_csv(&p, &LabelColumn::Name("class".into()), true).unwrap_err();
        match err {
            Error::NonNumeric {
                row,
                column,
                ref value,
            } => {
                assert_eq!((row, column, value.as_str()), (3, 2, "oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 3"));
    }

    #[test]
    fn single_class_rejected() {
        let (_d, p) = write_tmp("1,a\n2,a\n3,a\n");
        let err = load_csv(&p, &LabelColumn::Index(1), false).unwrap_err();
        assert!(matches!(err, Error::TooFewClasses(1)));
    }

    #[test]
    fn labels_in_first_appearance_order() {
        let (_d, p) = write_tmp("z,1\ny,2\nz,3\nx,4\n");
        let ds = load_csv(&p, &LabelColumn::Index(0), false).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 0, 2]);
        assert_eq!(ds.class_names, vec!["z", "y", "x"]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(
            Path::new("/nonexistent/x.csv"),
            &LabelColumn::Index(0),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/x.csv"));
    }

    #[test]
    fn split_of_four_rows() {
        let ds = Dataset::new(
            Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        let s = split(&ds, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (2, 1, 1));
    }

    #[test]
    fn split_needs_four_rows() {
        let ds = Dataset::new(
            Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap(),
            vec![0, 1, 0],
            2,
        )
        .unwrap();
        assert!(matches!(
            split(&ds, 0),
            Err(Error::TooFewRows { rows: 3, .. })
        ));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(150), (75, 37, 38));
        assert_eq!(split_sizes(699), (349, 175, 175));
        assert_eq!(split_sizes(178), (89, 44, 45));
        assert_eq!(split_sizes(4), (2, 1, 1));
    }

    #[test]
    fn constant_feature_becomes_zero() {
        let x =
            Array2::from_shape_vec((6, 2), vec![1., 5., 2., 5., 3., 5., 4., 5., 5., 5., 6., 5.])
                .unwrap();
        let ds = Dataset::new(x, vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        let s = split(&ds, 1).unwrap();
        let n = normalize(&ds, &s);
        assert!(n.features.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_rows() {
        let t = one_hot(&[2, 0], 3);
        assert_eq!(t.row(0).to_vec(), vec![0.0, 0.0, 1.0]);
        assert_eq!(t.row(1).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(one_hot(&[0], 2).row(0).to_vec(), vec![1.0, 0.0]);
    }
}
