//! Random datasets and specs, and a brute-force view oracle that recounts
//! records without going through the distribution code.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use cmx::metrics::MetricKind;
use cmx::spec::{Condition, ConditionRole, Encoding, MatrixSpec, NodePath, Normalization};
use cmx::view::MatrixView;
use cmx::Dataset;

pub struct SynthDim {
    pub name: String,
    pub classes: Vec<String>,
    /// Root-to-leaf segments per class, for hierarchical dimensions.
    pub paths: Option<Vec<Vec<String>>>,
}

impl SynthDim {
    pub fn internal_nodes(&self) -> Vec<Vec<String>> {
        let mut out = BTreeSet::new();
        for path in self.paths.iter().flatten() {
            for k in 1..path.len() {
                out.insert(path[..k].to_vec());
            }
        }
        out.into_iter().collect()
    }
}

pub struct Synth {
    pub dims: Vec<SynthDim>,
    /// Per record, per dimension: (actual, predicted) class indices.
    pub records: Vec<Vec<(usize, usize)>>,
}

impl Synth {
    pub fn random(rng: &mut impl Rng, max_dims: usize, max_classes: usize, max_records: usize) -> Synth {
        let n_dims = rng.gen_range(1..=max_dims);
        let dims: Vec<SynthDim> = (0..n_dims)
            .map(|i| {
                let k = rng.gen_range(2..=max_classes);
                let classes: Vec<String> = (0..k).map(|j| format!("d{i}c{j}")).collect();
                let paths = rng.gen_bool(0.6).then(|| {
                    let groups = rng.gen_range(1..=2);
                    classes
                        .iter()
                        .map(|c| match rng.gen_range(0..=groups) {
                            0 => vec![format!("r{i}"), c.clone()],
                            g => vec![format!("r{i}"), format!("g{i}x{g}"), c.clone()],
                        })
                        .collect()
                });
                SynthDim {
                    name: format!("D{i}"),
                    classes,
                    paths,
                }
            })
            .collect();
        let n = rng.gen_range(1..=max_records);
        let records = (0..n)
            .map(|_| {
                dims.iter()
                    .map(|d| {
                        let k = d.classes.len();
                        // skewed actuals, mostly-correct predictions
                        let actual = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..k) };
                        let predicted = if rng.gen_bool(0.6) { actual } else { rng.gen_range(0..k) };
                        (actual, predicted)
                    })
                    .collect()
            })
            .collect();
        Synth { dims, records }
    }

    pub fn schema_json(&self, rng: &mut impl Rng) -> String {
        let dims: Vec<serde_json::Value> = self
            .dims
            .iter()
            .map(|d| {
                let mut doc = serde_json::json!({"name": d.name, "classes": d.classes});
                if let Some(paths) = &d.paths {
                    let mut joined: Vec<String> = paths.iter().map(|p| p.join("/")).collect();
                    joined.shuffle(rng);
                    doc["hierarchy"] = serde_json::json!(joined);
                }
                doc
            })
            .collect();
        serde_json::json!({ "dimensions": dims }).to_string()
    }

    pub fn records_ndjson(&self) -> String {
        let mut out = String::new();
        for (i, record) in self.records.iter().enumerate() {
            let mut doc = serde_json::Map::new();
            doc.insert("id".into(), format!("rec{i}").into());
            for (d, &(a, p)) in self.dims.iter().zip(record) {
                doc.insert(format!("{}.actual", d.name), d.classes[a].clone().into());
                doc.insert(format!("{}.predicted", d.name), d.classes[p].clone().into());
            }
            out.push_str(&serde_json::Value::Object(doc).to_string());
            out.push('\n');
        }
        out
    }

    pub fn dataset(&self, rng: &mut impl Rng) -> Dataset {
        cmx::ingest(self.schema_json(rng).as_bytes(), self.records_ndjson().as_bytes()).expect("synthetic data ingests")
    }

    fn dim(&self, name: &str) -> usize {
        self.dims.iter().position(|d| d.name == name).unwrap()
    }

    /// A spec that is valid for this dataset.
    pub fn random_spec(&self, rng: &mut impl Rng) -> MatrixSpec {
        let mut order: Vec<usize> = (0..self.dims.len()).collect();
        order.shuffle(rng);
        let n_classes = rng.gen_range(1..=order.len().min(3));
        let (active, rest) = order.split_at(n_classes);
        let mut spec = MatrixSpec::new(&active.iter().map(|&i| self.dims[i].name.as_str()).collect::<Vec<_>>());
        for &i in rest.iter().take(rng.gen_range(0..=2)) {
            let d = &self.dims[i];
            let role = *[ConditionRole::Actual, ConditionRole::Predicted, ConditionRole::Both]
                .choose(rng)
                .unwrap();
            spec.conditions.push(Condition::new(&d.name, role, d.classes.choose(rng).unwrap()));
            if rng.gen_bool(0.2) {
                spec.conditions.push(Condition::new(&d.name, role, d.classes.choose(rng).unwrap()));
            }
        }
        spec.normalization = *[Normalization::Total, Normalization::Rows, Normalization::Columns]
            .choose(rng)
            .unwrap();
        spec.encoding = *[Encoding::Color, Encoding::Size].choose(rng).unwrap();
        spec.scale_exclude_diagonal = rng.gen_bool(0.3);
        let mut measures = MetricKind::ALL.to_vec();
        measures.shuffle(rng);
        measures.truncate(rng.gen_range(0..=4));
        spec.measures = measures;
        spec.prune_empty = rng.gen_bool(0.2);

        for d in &self.dims {
            for node in d.internal_nodes() {
                if rng.gen_bool(0.3) {
                    spec.collapsed.push(NodePath::new(&d.name, &node));
                }
            }
        }
        let hierarchical: Vec<&SynthDim> = active
            .iter()
            .map(|&i| &self.dims[i])
            .filter(|d| d.paths.is_some())
            .collect();
        if let (Some(d), true) = (hierarchical.choose(rng), rng.gen_bool(0.4)) {
            let mut nodes = d.internal_nodes();
            nodes.extend(d.paths.clone().unwrap());
            let target = nodes.choose(rng).unwrap().clone();
            spec.collapsed
                .retain(|c| !(c.dimension == d.name && c.segments.len() < target.len() && target.starts_with(&c.segments)));
            spec.filter = Some(NodePath::new(&d.name, &target));
        }
        spec
    }
}

/// Expected view contents, computed by recounting records.
pub struct Expected {
    pub keys: BTreeSet<Vec<String>>,
    pub counts: BTreeMap<(Vec<String>, Vec<String>), u64>,
    pub total: u64,
}

impl Synth {
    fn label(&self, d: usize, leaf: usize, spec: &MatrixSpec) -> String {
        let dim = &self.dims[d];
        let Some(paths) = &dim.paths else {
            return dim.classes[leaf].clone();
        };
        let filter_len = spec
            .filter
            .as_ref()
            .filter(|f| f.dimension == dim.name)
            .map_or(0, |f| f.segments.len());
        let path = &paths[leaf];
        for k in 0..path.len() - 1 {
            let prefix = &path[..=k];
            let collapsed = spec
                .collapsed
                .iter()
                .any(|c| c.dimension == dim.name && c.segments == prefix);
            if prefix.len() >= filter_len && collapsed {
                return path[k].clone();
            }
        }
        dim.classes[leaf].clone()
    }

    fn in_filter(&self, d: usize, leaf: usize, spec: &MatrixSpec) -> bool {
        match (&spec.filter, &self.dims[d].paths) {
            (Some(f), Some(paths)) if f.dimension == self.dims[d].name => paths[leaf].starts_with(&f.segments),
            _ => true,
        }
    }

    pub fn expected(&self, spec: &MatrixSpec) -> Expected {
        let active: Vec<usize> = spec.classes.iter().map(|c| self.dim(c)).collect();
        let visible: Vec<BTreeSet<String>> = active
            .iter()
            .map(|&d| {
                (0..self.dims[d].classes.len())
                    .filter(|&leaf| self.in_filter(d, leaf, spec))
                    .map(|leaf| self.label(d, leaf, spec))
                    .collect()
            })
            .collect();
        let mut keys: BTreeSet<Vec<String>> = BTreeSet::from([Vec::new()]);
        for labels in &visible {
            keys = keys
                .into_iter()
                .flat_map(|k| {
                    labels.iter().map(move |l| {
                        let mut k = k.clone();
                        k.push(l.clone());
                        k
                    })
                })
                .collect();
        }

        let mut counts = BTreeMap::new();
        let mut total = 0;
        'records: for record in &self.records {
            for c in &spec.conditions {
                let (a, p) = record[self.dim(&c.dimension)];
                let class = &self.dims[self.dim(&c.dimension)].classes;
                let ok = match c.role {
                    ConditionRole::Actual => class[a] == c.class,
                    ConditionRole::Predicted => class[p] == c.class,
                    ConditionRole::Both => class[a] == c.class && class[p] == c.class,
                };
                if !ok {
                    continue 'records;
                }
            }
            for &d in &active {
                let (a, p) = record[d];
                if !self.in_filter(d, a, spec) || !self.in_filter(d, p, spec) {
                    continue 'records;
                }
            }
            let row: Vec<String> = active.iter().map(|&d| self.label(d, record[d].0, spec)).collect();
            let col: Vec<String> = active.iter().map(|&d| self.label(d, record[d].1, spec)).collect();
            *counts.entry((row, col)).or_insert(0) += 1;
            total += 1;
        }
        if spec.prune_empty {
            let used: BTreeSet<Vec<String>> = counts.keys().flat_map(|(r, c)| [r.clone(), c.clone()]).collect();
            keys.retain(|k| used.contains(k));
        }
        Expected { keys, counts, total }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Compares a view to the oracle: exact counts and key sets, values and
/// metric columns within `tol`.
pub fn check_view(view: &MatrixView, spec: &MatrixSpec, expected: &Expected, tol: f64) -> Result<(), String> {
    let keys: Vec<Vec<String>> = view
        .row_keys
        .iter()
        .map(|k| k.classes().map(str::to_string).collect())
        .collect();
    let key_set: BTreeSet<Vec<String>> = keys.iter().cloned().collect();
    if key_set.len() != keys.len() || key_set != expected.keys {
        return Err(format!("keys {keys:?} != {:?}", expected.keys));
    }
    let got: BTreeMap<(Vec<String>, Vec<String>), u64> = view
        .cells
        .iter()
        .map(|c| ((keys[c.row].clone(), keys[c.col].clone()), c.count))
        .collect();
    if got != expected.counts {
        return Err(format!("counts {got:?} != {:?}", expected.counts));
    }
    if view.total_count != expected.total {
        return Err(format!("total {} != {}", view.total_count, expected.total));
    }

    let n = keys.len();
    let count = |r: usize, c: usize| expected.counts.get(&(keys[r].clone(), keys[c].clone())).copied().unwrap_or(0);
    let rows: Vec<u64> = (0..n).map(|r| (0..n).map(|c| count(r, c)).sum()).collect();
    let cols: Vec<u64> = (0..n).map(|c| (0..n).map(|r| count(r, c)).sum()).collect();
    for cell in &view.cells {
        let den = match spec.normalization {
            Normalization::Total => expected.total,
            Normalization::Rows => rows[cell.row],
            Normalization::Columns => cols[cell.col],
        };
        if !close(cell.value, ratio(cell.count, den), tol) {
            return Err(format!("value of cell {cell:?} != {}/{den}", cell.count));
        }
    }

    if view.metric_columns.len() != spec.measures.len() {
        return Err("metric column count".into());
    }
    let total = expected.total;
    let trace: u64 = (0..n).map(|k| count(k, k)).sum();
    for (column, &kind) in view.metric_columns.iter().zip(&spec.measures) {
        let per_class: Vec<Option<f64>> = (0..n)
            .map(|k| {
                let tp = count(k, k);
                let fp = cols[k] - tp;
                let fn_ = rows[k] - tp;
                let tn = total - tp - fp - fn_;
                match kind {
                    MetricKind::Accuracy => ratio(tp + tn, total),
                    MetricKind::Precision => ratio(tp, tp + fp),
                    MetricKind::Recall => ratio(tp, tp + fn_),
                    MetricKind::CountActual => Some(rows[k] as f64),
                    MetricKind::CountPredicted => Some(cols[k] as f64),
                    MetricKind::TruePositives => Some(tp as f64),
                    MetricKind::FalsePositives => Some(fp as f64),
                    MetricKind::FalseNegatives => Some(fn_ as f64),
                    MetricKind::TrueNegatives => Some(tn as f64),
                }
            })
            .collect();
        let aggregate = match kind {
            MetricKind::Accuracy => ratio(trace, total),
            MetricKind::Precision | MetricKind::Recall => {
                let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
            }
            MetricKind::CountActual | MetricKind::CountPredicted => Some(total as f64),
            _ => Some(per_class.iter().flatten().sum()),
        };
        if column.kind != kind
            || column.per_class.len() != n
            || !column.per_class.iter().zip(&per_class).all(|(a, b)| close(*a, *b, tol))
            || !close(column.aggregate, aggregate, tol)
        {
            return Err(format!("{kind} column {column:?} != {per_class:?} / {aggregate:?}"));
        }
    }
    Ok(())
}
