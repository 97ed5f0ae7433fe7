//! Render-ready matrix views and their JSON, CSV and text-table forms.

use std::fmt;
use std::sync::Arc;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::distribution::ClassId;
use crate::metrics::{MetricColumn, MetricKind};
use crate::spec::{serialize_spec, Encoding, MatrixSpec, Normalization};

/// One axis key: a class (or collapsed node) per activated dimension, in
/// nesting order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowKey {
    pub parts: Vec<(Arc<str>, ClassId)>,
}

impl RowKey {
    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().map(|(_, c)| c.as_ref())
    }
}

impl fmt::Display for RowKey {
    /// Parts joined with `/`, which identifiers never contain.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, class) in self.classes().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            f.write_str(class)?;
        }
        Ok(())
    }
}

impl Serialize for RowKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.parts.len()))?;
        for class in self.classes() {
            seq.serialize_element(class)?;
        }
        seq.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub count: u64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Expanded,
    Collapsed,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxisNode {
    pub name: String,
    pub state: NodeState,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<AxisNode>,
}

/// Rendered hierarchy state of one activated dimension. `root` is the
/// filter node when drilled down, absent for flat dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxisTree {
    pub dimension: String,
    pub root: Option<AxisNode>,
}

/// A square matrix over visible label tuples: rows actual, columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixView {
    pub dimensions: Vec<String>,
    pub row_keys: Vec<RowKey>,
    /// Non-zero cells in row-major order.
    pub cells: Vec<Cell>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    /// Sum of normalized values per row; `None` where the normalizer is zero.
    pub row_sums: Vec<Option<f64>>,
    pub col_sums: Vec<Option<f64>>,
    pub metric_columns: Vec<MetricColumn>,
    pub axis_tree: Vec<AxisTree>,
    pub normalization: Normalization,
    pub encoding: Encoding,
    pub total_count: u64,
}

impl MatrixView {
    /// Columns use the same keys as rows.
    pub fn col_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn size(&self) -> usize {
        self.row_keys.len()
    }

    pub fn key_index(&self, classes: &[&str]) -> Option<usize> {
        self.row_keys
            .iter()
            .position(|k| k.classes().eq(classes.iter().copied()))
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&Cell> {
        self.cells
            .binary_search_by(|c| (c.row, c.col).cmp(&(row, col)))
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.cell(row, col).map_or(0, |c| c.count)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.cell(row, col).and_then(|c| c.value).unwrap_or(0.0)
    }

    pub fn metric(&self, kind: MetricKind) -> Option<&MetricColumn> {
        self.metric_columns.iter().find(|c| c.kind == kind)
    }
}

#[derive(Serialize)]
struct Document<'a> {
    spec: &'a serde_json::value::RawValue,
    #[serde(flatten)]
    view: &'a MatrixView,
}

/// The view document returned by the service and `cmx query --format json`:
/// the canonical spec followed by the view fields, newline terminated.
pub fn to_json(view: &MatrixView, spec: &MatrixSpec) -> String {
    let spec_text = serde_json::value::RawValue::from_string(serialize_spec(spec))
        .expect("canonical spec is valid JSON");
    let mut out = serde_json::to_string(&Document {
        spec: &spec_text,
        view,
    })
    .expect("view serializes");
    out.push('\n');
    out
}

/// One line per non-zero cell: `row_key,col_key,count,value`.
pub fn to_csv(view: &MatrixView) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["row_key", "col_key", "count", "value"])?;
    for cell in &view.cells {
        writer.write_record([
            view.row_keys[cell.row].to_string(),
            view.row_keys[cell.col].to_string(),
            cell.count.to_string(),
            cell.value.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

const MAX_CELL_WIDTH: usize = 14;
const CORNER: &str = "actual \\ predicted";

fn clip(text: &str) -> String {
    if text.chars().count() <= MAX_CELL_WIDTH {
        text.to_string()
    } else {
        let mut clipped: String = text.chars().take(MAX_CELL_WIDTH - 1).collect();
        clipped.push('~');
        clipped
    }
}

fn pad(out: &mut String, text: &str, width: usize) {
    out.push_str(text);
    for _ in text.chars().count()..width {
        out.push(' ');
    }
}

fn format_metric(kind: MetricKind, value: Option<f64>) -> String {
    match value {
        None => "n/a".to_string(),
        Some(v) if kind.is_ratio() => format!("{v:.4}"),
        Some(v) => format!("{v}"),
    }
}

/// Aligned text matrix. Zero cells print as `-`; metric columns follow the
/// `|` separator with the aggregate on the first row.
pub fn to_table(view: &MatrixView) -> String {
    let labels: Vec<String> = view.row_keys.iter().map(|k| clip(&k.to_string())).collect();
    let n = labels.len();
    let mut grid: Vec<Vec<String>> = vec![vec!["-".to_string(); n]; n];
    for cell in &view.cells {
        grid[cell.row][cell.col] = match cell.value {
            Some(v) => format!("{v:.4}"),
            None => "n/a".to_string(),
        };
    }
    let first_width = labels
        .iter()
        .map(|l| l.chars().count())
        .chain([CORNER.len(), "(aggregate)".len()])
        .max()
        .unwrap_or(0);
    let col_widths: Vec<usize> = (0..n)
        .map(|c| {
            grid.iter()
                .map(|row| row[c].chars().count())
                .chain([labels[c].chars().count()])
                .max()
                .unwrap_or(1)
        })
        .collect();
    let metric_cells: Vec<(String, String, Vec<String>)> = view
        .metric_columns
        .iter()
        .map(|m| {
            (
                m.kind.as_str().to_string(),
                format_metric(m.kind, m.aggregate),
                m.per_class.iter().map(|v| format_metric(m.kind, *v)).collect(),
            )
        })
        .collect();
    let metric_widths: Vec<usize> = metric_cells
        .iter()
        .map(|(name, agg, values)| {
            values
                .iter()
                .map(|v| v.chars().count())
                .chain([name.len(), agg.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let mut line = |first: &str, cells: &[&str], metrics: &[&str]| {
        let mut row = String::new();
        pad(&mut row, first, first_width);
        for (text, width) in cells.iter().zip(&col_widths) {
            row.push_str("  ");
            pad(&mut row, text, *width);
        }
        if !metrics.is_empty() {
            row.push_str("  |");
            for (text, width) in metrics.iter().zip(&metric_widths) {
                row.push_str("  ");
                pad(&mut row, text, *width);
            }
        }
        out.push_str(row.trim_end());
        out.push('\n');
    };

    let header_cells: Vec<&str> = labels.iter().map(String::as_str).collect();
    let header_metrics: Vec<&str> = metric_cells.iter().map(|m| m.0.as_str()).collect();
    line(CORNER, &header_cells, &header_metrics);
    if !metric_cells.is_empty() {
        let blanks = vec![""; n];
        let aggregates: Vec<&str> = metric_cells.iter().map(|m| m.1.as_str()).collect();
        line("(aggregate)", &blanks, &aggregates);
    }
    for (r, label) in labels.iter().enumerate() {
        let cells: Vec<&str> = grid[r].iter().map(String::as_str).collect();
        let metrics: Vec<&str> = metric_cells.iter().map(|m| m.2[r].as_str()).collect();
        line(label, &cells, &metrics);
    }
    out
}
