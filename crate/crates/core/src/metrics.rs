//! Per-class and aggregate measures over the visible count matrix.
//!
//! Every measure is derived from the one-vs-rest decomposition of a square
//! count matrix (rows actual, columns predicted). Ratios whose denominator is
//! zero are undefined and reported as `None`, serialized as `null`.
//!
//! Aggregate precision and recall are macro averages over the classes whose
//! per-class value is defined.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Precision,
    Recall,
    CountActual,
    CountPredicted,
    TruePositives,
    FalsePositives,
    TrueNegatives,
    FalseNegatives,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::Accuracy,
        MetricKind::Precision,
        MetricKind::Recall,
        MetricKind::CountActual,
        MetricKind::CountPredicted,
        MetricKind::TruePositives,
        MetricKind::FalsePositives,
        MetricKind::TrueNegatives,
        MetricKind::FalseNegatives,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::CountActual => "count_actual",
            MetricKind::CountPredicted => "count_predicted",
            MetricKind::TruePositives => "true_positives",
            MetricKind::FalsePositives => "false_positives",
            MetricKind::TrueNegatives => "true_negatives",
            MetricKind::FalseNegatives => "false_negatives",
        }
    }

    pub fn is_ratio(self) -> bool {
        matches!(
            self,
            MetricKind::Accuracy | MetricKind::Precision | MetricKind::Recall
        )
    }

    /// How the aggregate number of a column is formed.
    pub fn aggregation(self) -> Aggregation {
        match self {
            MetricKind::Accuracy => Aggregation::Overall,
            MetricKind::Precision | MetricKind::Recall => Aggregation::Macro,
            MetricKind::CountActual | MetricKind::CountPredicted => Aggregation::Total,
            _ => Aggregation::Sum,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown metric {0:?}")]
pub struct UnknownMetric(pub String);

impl FromStr for MetricKind {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// trace / total
    Overall,
    /// unweighted mean over classes with a defined value
    Macro,
    /// total number of instances
    Total,
    /// sum of the per-class values
    Sum,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("count matrix is not square: row {row} has {len} entries, expected {size}")]
    NotSquare { row: usize, len: usize, size: usize },
    #[error("count matrix is empty")]
    Empty,
    #[error("index {index} out of range for a {size}x{size} matrix")]
    OutOfRange { index: usize, size: usize },
}

/// A sparse square matrix of counts with cached margins.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    size: usize,
    cells: BTreeMap<(usize, usize), u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

impl CountMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricError> {
        let size = rows.len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != size {
                return Err(MetricError::NotSquare {
                    row,
                    len: r.len(),
                    size,
                });
            }
        }
        let cells = rows.iter().enumerate().flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(move |(c, &count)| (r, c, count))
        });
        Self::from_cells(size, cells)
    }

    pub fn from_cells(
        size: usize,
        cells: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self, MetricError> {
        let mut matrix = CountMatrix {
            size,
            cells: BTreeMap::new(),
            row_sums: vec![0; size],
            col_sums: vec![0; size],
            total: 0,
        };
        for (r, c, count) in cells {
            for index in [r, c] {
                if index >= size {
                    return Err(MetricError::OutOfRange { index, size });
                }
            }
            if count == 0 {
                continue;
            }
            *matrix.cells.entry((r, c)).or_insert(0) += count;
            matrix.row_sums[r] += count;
            matrix.col_sums[c] += count;
            matrix.total += count;
        }
        Ok(matrix)
    }

    /// Identity-like matrix with `count` on every diagonal cell.
    pub fn diagonal(size: usize, count: u64) -> Self {
        Self::from_cells(size, (0..size).map(|i| (i, i, count))).expect("indices in range")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.cells.get(&(row, col)).copied().unwrap_or(0)
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.row_sums[row]
    }

    pub fn col_sum(&self, col: usize) -> u64 {
        self.col_sums[col]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn trace(&self) -> u64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    /// Non-zero cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.cells.iter().map(|(&(r, c), &n)| (r, c, n))
    }
}

/// One-vs-rest counts of a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ClassCounts {
    pub fn new(true_pos: u64, false_pos: u64, false_neg: u64, true_neg: u64) -> Self {
        ClassCounts {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

pub fn confusion_counts(matrix: &CountMatrix, class: usize) -> Result<ClassCounts, MetricError> {
    if class >= matrix.size() {
        return Err(MetricError::OutOfRange {
            index: class,
            size: matrix.size(),
        });
    }
    let tp = matrix.get(class, class);
    let fn_ = matrix.row_sum(class) - tp;
    let fp = matrix.col_sum(class) - tp;
    Ok(ClassCounts::new(tp, fp, fn_, matrix.total() - tp - fn_ - fp))
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metric_value(kind: MetricKind, c: ClassCounts) -> Option<f64> {
    match kind {
        MetricKind::Recall => ratio(c.true_pos, c.true_pos + c.false_neg),
        MetricKind::Precision => ratio(c.true_pos, c.true_pos + c.false_pos),
        MetricKind::Accuracy => ratio(c.true_pos + c.true_neg, c.total()),
        MetricKind::CountActual => Some((c.true_pos + c.false_neg) as f64),
        MetricKind::CountPredicted => Some((c.true_pos + c.false_pos) as f64),
        MetricKind::TruePositives => Some(c.true_pos as f64),
        MetricKind::FalsePositives => Some(c.false_pos as f64),
        MetricKind::FalseNegatives => Some(c.false_neg as f64),
        MetricKind::TrueNegatives => Some(c.true_neg as f64),
    }
}

fn per_class(kind: MetricKind, matrix: &CountMatrix) -> Vec<Option<f64>> {
    (0..matrix.size())
        .map(|k| {
            let counts = confusion_counts(matrix, k).expect("class in range");
            metric_value(kind, counts)
        })
        .collect()
}

fn aggregate_from(kind: MetricKind, matrix: &CountMatrix, values: &[Option<f64>]) -> Option<f64> {
    match kind.aggregation() {
        Aggregation::Overall => ratio(matrix.trace(), matrix.total()),
        Aggregation::Total => Some(matrix.total() as f64),
        Aggregation::Sum => Some(values.iter().flatten().sum()),
        Aggregation::Macro => {
            let defined: Vec<f64> = values.iter().flatten().copied().collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }
}

pub fn aggregate_metric(kind: MetricKind, matrix: &CountMatrix) -> Result<Option<f64>, MetricError> {
    if matrix.size() == 0 {
        return Err(MetricError::Empty);
    }
    Ok(aggregate_from(kind, matrix, &per_class(kind, matrix)))
}

/// A metric column: the aggregate on top, then one value per matrix row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricColumn {
    pub kind: MetricKind,
    pub aggregation: Aggregation,
    pub aggregate: Option<f64>,
    pub per_class: Vec<Option<f64>>,
}

pub fn metric_column(kind: MetricKind, matrix: &CountMatrix) -> Result<MetricColumn, MetricError> {
    if matrix.size() == 0 {
        return Err(MetricError::Empty);
    }
    let per_class = per_class(kind, matrix);
    Ok(MetricColumn {
        kind,
        aggregation: kind.aggregation(),
        aggregate: aggregate_from(kind, matrix, &per_class),
        per_class,
    })
}
