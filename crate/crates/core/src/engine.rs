//! Compiles a [`MatrixSpec`] against a [`Dataset`] into a [`MatrixView`].
//!
//! Evaluation is a fixed chain of distribution operations:
//!
//! 1. joint over the (actual, predicted) pairs of every dimension in
//!    `classes` and `where`;
//! 2. condition on all `where` entries at once;
//! 3. marginalize to the activated dimensions;
//! 4. drill down: condition actual and predicted on the filter subtree;
//! 5. collapse each visible collapsed node on both axes;
//! 6. nest visible classes into the cartesian product of row/column keys;
//! 7. normalize;
//! 8. compute metric columns from the visible counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::dataset::{Dataset, HierarchyNode, LabelDimension};
use crate::distribution::{Assignments, ClassId, DistributionError, JointDistribution, Role, VariableRef};
use crate::metrics::{metric_column, CountMatrix, MetricColumn};
use crate::spec::{validate_spec, ConditionRole, MatrixSpec, NodePath, Normalization, Violation};
use crate::view::{AxisNode, AxisTree, Cell, MatrixView, NodeState, RowKey};

/// Upper bound on the number of nested axis keys of a single view.
pub const MAX_VISIBLE_KEYS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("spec does not match the dataset: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("condition matches nothing (zero conditioning mass)")]
    ZeroMass,
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("{0} does not resolve to a hierarchy node")]
    UnresolvedNode(String),
    #[error("filter {filter} lies inside collapsed node {collapsed}")]
    Contradictory { filter: String, collapsed: String },
    #[error("view would have {0} keys per axis (limit {MAX_VISIBLE_KEYS})")]
    TooLarge(u128),
    #[error(transparent)]
    Distribution(DistributionError),
}

impl From<DistributionError> for QueryError {
    fn from(e: DistributionError) -> Self {
        match e {
            DistributionError::ZeroMass => QueryError::ZeroMass,
            other => QueryError::Distribution(other),
        }
    }
}

/// Number of nested keys per axis for the given per-dimension class counts.
/// The matrix has the square of this many positions.
pub fn nested_key_count(sizes: &[usize]) -> u128 {
    sizes.iter().map(|&s| s as u128).product()
}

/// Visible layout of one dimension after drill-down and collapsing.
struct AxisLayout<'a> {
    dim: &'a LabelDimension,
    start: Option<&'a HierarchyNode>,
    collapsed: BTreeSet<&'a str>,
    visible: Vec<ClassId>,
    /// Collapsed nodes that are actually shown, with their leaves.
    merged: Vec<(&'a str, BTreeSet<ClassId>)>,
}

fn layout<'a>(
    ds: &'a Dataset,
    dimension: &str,
    collapsed: &[NodePath],
    filter: Option<&NodePath>,
) -> Result<AxisLayout<'a>, QueryError> {
    let dim = ds
        .dimension(dimension)
        .ok_or_else(|| QueryError::UnknownDimension(dimension.to_string()))?;
    let Some(root) = dim.hierarchy() else {
        return Ok(AxisLayout {
            dim,
            start: None,
            collapsed: BTreeSet::new(),
            visible: dim.classes().iter().map(|c| ClassId::from(c.as_str())).collect(),
            merged: Vec::new(),
        });
    };
    let resolve = |path: &NodePath| {
        path.resolve(root)
            .ok_or_else(|| QueryError::UnresolvedNode(path.to_string()))
    };
    let filter = filter.filter(|f| f.dimension == dimension);
    let start = match filter {
        Some(path) => resolve(path)?,
        None => root,
    };
    let mut names = BTreeSet::new();
    for path in collapsed.iter().filter(|c| c.dimension == dimension) {
        let node = resolve(path)?;
        if let Some(filter) = filter {
            if path.segments.len() < filter.segments.len()
                && filter.segments.starts_with(&path.segments)
            {
                return Err(QueryError::Contradictory {
                    filter: filter.to_string(),
                    collapsed: path.to_string(),
                });
            }
        }
        names.insert(node.name.as_str());
    }
    let mut visible = Vec::new();
    let mut merged = Vec::new();
    walk(start, &names, &mut visible, &mut merged);
    Ok(AxisLayout {
        dim,
        start: Some(start),
        collapsed: names,
        visible,
        merged,
    })
}

fn walk<'a>(
    node: &'a HierarchyNode,
    collapsed: &BTreeSet<&str>,
    visible: &mut Vec<ClassId>,
    merged: &mut Vec<(&'a str, BTreeSet<ClassId>)>,
) {
    if node.is_leaf() {
        visible.push(ClassId::from(node.name.as_str()));
    } else if collapsed.contains(node.name.as_str()) {
        visible.push(ClassId::from(node.name.as_str()));
        let leaves = node.leaves().into_iter().map(ClassId::from).collect();
        merged.push((node.name.as_str(), leaves));
    } else {
        for child in &node.children {
            walk(child, collapsed, visible, merged);
        }
    }
}

fn axis_node(node: &HierarchyNode, collapsed: &BTreeSet<&str>) -> AxisNode {
    if node.is_leaf() {
        AxisNode {
            name: node.name.clone(),
            state: NodeState::Leaf,
            children: Vec::new(),
        }
    } else if collapsed.contains(node.name.as_str()) {
        AxisNode {
            name: node.name.clone(),
            state: NodeState::Collapsed,
            children: Vec::new(),
        }
    } else {
        AxisNode {
            name: node.name.clone(),
            state: NodeState::Expanded,
            children: node.children.iter().map(|c| axis_node(c, collapsed)).collect(),
        }
    }
}

/// Classes (and collapsed nodes) shown for one dimension, in depth-first
/// hierarchy order; declaration order for flat dimensions.
pub fn visible_classes(
    ds: &Dataset,
    dimension: &str,
    collapsed: &[NodePath],
    filter: Option<&NodePath>,
) -> Result<Vec<ClassId>, QueryError> {
    Ok(layout(ds, dimension, collapsed, filter)?.visible)
}

fn where_assignments(spec: &MatrixSpec) -> Result<Assignments, QueryError> {
    let mut assignments = Assignments::new();
    for condition in &spec.conditions {
        let roles: &[Role] = match condition.role {
            ConditionRole::Actual => &[Role::Actual],
            ConditionRole::Predicted => &[Role::Predicted],
            ConditionRole::Both => &[Role::Actual, Role::Predicted],
        };
        for &role in roles {
            let var = VariableRef::new(condition.dimension.clone(), role);
            let class = ClassId::from(condition.class.as_str());
            let set = assignments
                .entry(var)
                .or_insert_with(|| BTreeSet::from([class.clone()]));
            // Repeated conditions on one variable must all hold.
            if !set.contains(&class) {
                return Err(QueryError::ZeroMass);
            }
            set.retain(|c| *c == class);
        }
    }
    Ok(assignments)
}

/// Evaluates `spec` against `ds`.
pub fn evaluate(ds: &Dataset, spec: &MatrixSpec) -> Result<MatrixView, QueryError> {
    let violations = validate_spec(spec, ds);
    if !violations.is_empty() {
        return Err(QueryError::Invalid(violations));
    }
    let layouts = spec
        .classes
        .iter()
        .map(|d| layout(ds, d, &spec.collapsed, spec.filter.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let sizes: Vec<usize> = layouts.iter().map(|l| l.visible.len()).collect();
    let keys_per_axis = nested_key_count(&sizes);
    if keys_per_axis > MAX_VISIBLE_KEYS as u128 {
        return Err(QueryError::TooLarge(keys_per_axis));
    }

    // (1) joint over activated and conditioned dimensions
    let mut dims: Vec<&str> = spec.classes.iter().map(String::as_str).collect();
    for c in &spec.conditions {
        if !dims.contains(&c.dimension.as_str()) {
            dims.push(&c.dimension);
        }
    }
    let vars: Vec<VariableRef> = dims.iter().flat_map(|d| VariableRef::pair(d)).collect();
    let mut dist = JointDistribution::from_dataset(ds, &vars)?;

    // (2) where
    let assignments = where_assignments(spec)?;
    if !assignments.is_empty() {
        dist = dist.condition(&assignments)?;
    }

    // (3) marginalize to the activated dimensions
    let activated: Vec<VariableRef> = spec
        .classes
        .iter()
        .flat_map(|d| VariableRef::pair(d))
        .collect();
    dist = dist.marginalize(&activated)?;

    // (4) drill down into the filter subtree, symmetrically
    if let Some(filter) = &spec.filter {
        let start = layouts
            .iter()
            .find(|l| l.dim.name() == filter.dimension)
            .and_then(|l| l.start)
            .expect("validated filter resolves");
        let leaves: BTreeSet<ClassId> = start.leaves().into_iter().map(ClassId::from).collect();
        let assignments = VariableRef::pair(&filter.dimension)
            .into_iter()
            .map(|v| (v, leaves.clone()))
            .collect();
        dist = dist.condition(&assignments)?;
    }

    // (5) collapse visible collapsed nodes on both axes
    for l in &layouts {
        let present = dist.variables().iter().any(|v| v.dimension == l.dim.name());
        if present && !l.merged.is_empty() {
            let groups: Vec<(&str, &BTreeSet<ClassId>)> = l.merged.iter().map(|(n, leaves)| (*n, leaves)).collect();
            dist = dist.collapse_all(l.dim.name(), &groups)?;
        }
    }

    // (6) nest
    let mut view = nest(spec, &layouts, &dist);

    // (7) normalize
    normalize(&mut view, spec.normalization);

    // (8) metrics
    let counts = CountMatrix::from_cells(
        view.size(),
        view.cells.iter().map(|c| (c.row, c.col, c.count)),
    )
    .expect("cell indices are in range");
    view.metric_columns = if view.size() == 0 {
        Vec::new()
    } else {
        spec.measures
            .iter()
            .map(|&kind| metric_column(kind, &counts).expect("non-empty matrix"))
            .collect::<Vec<MetricColumn>>()
    };
    Ok(view)
}

fn nest(spec: &MatrixSpec, layouts: &[AxisLayout], dist: &JointDistribution) -> MatrixView {
    let dimension_names: Vec<Arc<str>> = layouts.iter().map(|l| Arc::from(l.dim.name())).collect();
    let indices: Vec<HashMap<&str, usize>> = layouts
        .iter()
        .map(|l| l.visible.iter().enumerate().map(|(i, c)| (c.as_ref(), i)).collect())
        .collect();
    let sizes: Vec<usize> = layouts.iter().map(|l| l.visible.len()).collect();

    // Coordinates of each dimension in the distribution; a dimension whose
    // variables were conditioned away (drill-down to a single leaf) is pinned
    // to its only visible class.
    let positions: Vec<Option<(usize, usize)>> = layouts
        .iter()
        .map(|l| {
            let actual = dist.position(&VariableRef::actual(l.dim.name()));
            let predicted = dist.position(&VariableRef::predicted(l.dim.name()));
            actual.zip(predicted)
        })
        .collect();
    let flatten = |coords: &mut dyn Iterator<Item = usize>| {
        coords
            .zip(&sizes)
            .fold(0usize, |acc, (i, &size)| acc * size + i)
    };

    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (tuple, mass) in dist.iter() {
        let mut row_coords = Vec::with_capacity(layouts.len());
        let mut col_coords = Vec::with_capacity(layouts.len());
        for (d, position) in positions.iter().enumerate() {
            let (a, p) = match position {
                Some((a, p)) => (indices[d][tuple[*a].as_ref()], indices[d][tuple[*p].as_ref()]),
                None => (0, 0),
            };
            row_coords.push(a);
            col_coords.push(p);
        }
        let row = flatten(&mut row_coords.into_iter());
        let col = flatten(&mut col_coords.into_iter());
        let count = dist.count_of(mass);
        if count > 0 {
            *counts.entry((row, col)).or_insert(0) += count;
        }
    }

    let total: usize = sizes.iter().product();
    let mut keys = Vec::with_capacity(total);
    let mut odometer = vec![0usize; layouts.len()];
    for _ in 0..total {
        keys.push(RowKey {
            parts: odometer
                .iter()
                .enumerate()
                .map(|(d, &i)| (dimension_names[d].clone(), layouts[d].visible[i].clone()))
                .collect(),
        });
        for d in (0..odometer.len()).rev() {
            odometer[d] += 1;
            if odometer[d] < sizes[d] {
                break;
            }
            odometer[d] = 0;
        }
    }

    let mut row_totals = vec![0u64; keys.len()];
    let mut col_totals = vec![0u64; keys.len()];
    for (&(r, c), &n) in &counts {
        row_totals[r] += n;
        col_totals[c] += n;
    }

    let remap: Vec<Option<usize>> = if spec.prune_empty {
        let mut next = 0;
        (0..keys.len())
            .map(|i| {
                (row_totals[i] > 0 || col_totals[i] > 0).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    } else {
        (0..keys.len()).map(Some).collect()
    };
    let keep = |v: &[u64]| -> Vec<u64> {
        v.iter()
            .zip(&remap)
            .filter_map(|(x, m)| m.map(|_| *x))
            .collect()
    };
    let row_totals = keep(&row_totals);
    let col_totals = keep(&col_totals);
    let row_keys: Vec<RowKey> = keys
        .into_iter()
        .zip(&remap)
        .filter_map(|(k, m)| m.map(|_| k))
        .collect();
    let cells = counts
        .into_iter()
        .map(|((r, c), count)| Cell {
            row: remap[r].expect("non-empty row kept"),
            col: remap[c].expect("non-empty column kept"),
            count,
            value: None,
        })
        .collect();

    let axis_tree = layouts
        .iter()
        .map(|l| AxisTree {
            dimension: l.dim.name().to_string(),
            root: l.start.map(|node| axis_node(node, &l.collapsed)),
        })
        .collect();

    MatrixView {
        dimensions: spec.classes.clone(),
        row_keys,
        cells,
        row_sums: Vec::new(),
        col_sums: Vec::new(),
        total_count: row_totals.iter().sum(),
        row_totals,
        col_totals,
        metric_columns: Vec::new(),
        axis_tree,
        normalization: spec.normalization,
        encoding: spec.encoding,
    }
}

fn normalize(view: &mut MatrixView, normalization: Normalization) {
    let total = view.total_count;
    for cell in &mut view.cells {
        let denominator = match normalization {
            Normalization::Total => total,
            Normalization::Rows => view.row_totals[cell.row],
            Normalization::Columns => view.col_totals[cell.col],
        };
        cell.value = (denominator > 0).then(|| cell.count as f64 / denominator as f64);
    }
    let n = view.size();
    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; n];
    for cell in &view.cells {
        let value = cell.value.unwrap_or(0.0);
        row_sums[cell.row] += value;
        col_sums[cell.col] += value;
    }
    view.row_sums = row_sums
        .into_iter()
        .enumerate()
        .map(|(i, s)| (normalization != Normalization::Rows || view.row_totals[i] > 0).then_some(s))
        .collect();
    view.col_sums = col_sums
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            (normalization != Normalization::Columns || view.col_totals[i] > 0).then_some(s)
        })
        .collect();
}
