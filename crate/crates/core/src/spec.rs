//! The declarative matrix specification.
//!
//! A spec is a small JSON document that fully determines a matrix view:
//!
//! ```json
//! {"classes":["Fruit","Taste"],"normalization":"rows","measures":["recall"],
//!  "collapsed":["Fruit:Food/Citrus"],"where":[{"dimension":"Size","role":"actual","class":"large"}]}
//! ```
//!
//! `classes` lists the activated dimensions in nesting order; every other
//! dimension is marginalized. `collapsed` and `filter` hold hierarchy node
//! paths written `Dimension:Root/Child/...`. `where` conditions the matrix on
//! actual and/or predicted classes of non-activated dimensions.
//!
//! [`serialize_spec`] emits the canonical form: keys in the fixed order
//! `classes, normalization, encoding, scale_exclude_diagonal, measures,
//! collapsed, filter, where, prune_empty`, defaults omitted, no whitespace.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::dataset::{normalize_identifier, Dataset, HierarchyNode, PATH_SEPARATOR};
use crate::metrics::MetricKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Total,
    Rows,
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    #[default]
    Color,
    Size,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionRole {
    Actual,
    Predicted,
    Both,
}

macro_rules! keyword_enum {
    ($ty:ty, $field:literal, { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                $(if self == $variant { return $name; })+
                unreachable!()
            }
        }

        impl FromStr for $ty {
            type Err = SpecError;

            fn from_str(s: &str) -> Result<Self, SpecError> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(SpecError::UnknownValue { field: $field, value: s.to_string() }),
                }
            }
        }
    };
}

keyword_enum!(Normalization, "normalization", {
    "total" => Normalization::Total,
    "rows" => Normalization::Rows,
    "columns" => Normalization::Columns,
});

keyword_enum!(Encoding, "encoding", {
    "color" => Encoding::Color,
    "size" => Encoding::Size,
});

keyword_enum!(ConditionRole, "role", {
    "actual" => ConditionRole::Actual,
    "predicted" => ConditionRole::Predicted,
    "both" => ConditionRole::Both,
});

/// A hierarchy node addressed from the root, e.g. `Fruit:Food/Citrus`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath {
    pub dimension: String,
    pub segments: Vec<String>,
}

impl NodePath {
    pub fn new<S: AsRef<str>>(dimension: &str, segments: &[S]) -> Self {
        NodePath {
            dimension: dimension.to_string(),
            segments: segments.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    /// Name of the addressed node (the last segment).
    pub fn node(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or_default()
    }

    pub fn resolve<'a>(&self, root: &'a HierarchyNode) -> Option<&'a HierarchyNode> {
        root.find_path(&self.segments)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dimension, self.segments.join("/"))
    }
}

impl FromStr for NodePath {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        let bad = || SpecError::BadPath(s.to_string());
        let (dimension, path) = s.split_once(':').ok_or_else(bad)?;
        let dimension = normalize_identifier("dimension", dimension).map_err(|_| bad())?;
        let segments = path
            .split(PATH_SEPARATOR)
            .map(|seg| normalize_identifier("node", seg))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        Ok(NodePath {
            dimension,
            segments,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub dimension: String,
    pub role: ConditionRole,
    pub class: String,
}

impl Condition {
    pub fn new(dimension: &str, role: ConditionRole, class: &str) -> Self {
        Condition {
            dimension: dimension.to_string(),
            role,
            class: class.to_string(),
        }
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Condition", 3)?;
        s.serialize_field("dimension", &self.dimension)?;
        s.serialize_field("role", self.role.as_str())?;
        s.serialize_field("class", &self.class)?;
        s.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixSpec {
    /// Activated dimensions; order is nesting order.
    pub classes: Vec<String>,
    pub normalization: Normalization,
    pub encoding: Encoding,
    /// Scale the encoding by off-diagonal cells only.
    pub scale_exclude_diagonal: bool,
    pub measures: Vec<MetricKind>,
    pub collapsed: Vec<NodePath>,
    pub filter: Option<NodePath>,
    pub conditions: Vec<Condition>,
    /// Drop keys whose actual and predicted margins are both zero.
    pub prune_empty: bool,
}

impl MatrixSpec {
    pub fn new<S: AsRef<str>>(classes: &[S]) -> Self {
        MatrixSpec {
            classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
            normalization: Normalization::default(),
            encoding: Encoding::default(),
            scale_exclude_diagonal: false,
            measures: Vec::new(),
            collapsed: Vec::new(),
            filter: None,
            conditions: Vec::new(),
            prune_empty: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("spec must be a JSON object")]
    NotAnObject,
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("missing field \"classes\"")]
    MissingClasses,
    #[error("classes must be non-empty")]
    EmptyClasses,
    #[error("dimension {0:?} appears more than once in classes")]
    DuplicateClass(String),
    #[error("dimension {0:?} is both nested (classes) and conditioned (where)")]
    NestedAndConditioned(String),
    #[error("unknown {field} value {value:?}")]
    UnknownValue { field: &'static str, value: String },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("malformed node path {0:?}, expected \"Dimension:Root/Child\"")]
    BadPath(String),
    #[error("node {0} is listed twice in collapsed")]
    DuplicateCollapsed(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

const FIELDS: [&str; 9] = [
    "classes",
    "normalization",
    "encoding",
    "scale_exclude_diagonal",
    "measures",
    "collapsed",
    "filter",
    "where",
    "prune_empty",
];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    classes: Vec<String>,
    normalization: Option<String>,
    encoding: Option<String>,
    scale_exclude_diagonal: Option<bool>,
    measures: Option<Vec<String>>,
    collapsed: Option<Vec<String>>,
    filter: Option<String>,
    #[serde(rename = "where")]
    conditions: Option<Vec<RawCondition>>,
    prune_empty: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCondition {
    dimension: String,
    role: String,
    class: String,
}

/// Parses spec text, rejecting unknown fields and values. Omitted fields
/// take their defaults.
pub fn parse_spec(text: &[u8]) -> Result<MatrixSpec, SpecError> {
    let value: serde_json::Value = serde_json::from_slice(text).map_err(|e| SpecError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let object = value.as_object().ok_or(SpecError::NotAnObject)?;
    if let Some(field) = object.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(SpecError::UnknownField(field.clone()));
    }
    if !object.contains_key("classes") {
        return Err(SpecError::MissingClasses);
    }
    let raw: RawSpec =
        serde_json::from_value(value).map_err(|e| SpecError::Invalid(e.to_string()))?;

    let mut classes = Vec::with_capacity(raw.classes.len());
    for class in &raw.classes {
        let class = normalize_identifier("dimension", class)
            .map_err(|e| SpecError::Invalid(e.to_string()))?;
        if classes.contains(&class) {
            return Err(SpecError::DuplicateClass(class));
        }
        classes.push(class);
    }
    if classes.is_empty() {
        return Err(SpecError::EmptyClasses);
    }
    let measures = raw
        .measures
        .unwrap_or_default()
        .iter()
        .map(|m| m.parse::<MetricKind>().map_err(|e| SpecError::UnknownMetric(e.0)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut collapsed: Vec<NodePath> = Vec::new();
    for raw_path in raw.collapsed.unwrap_or_default() {
        let path: NodePath = raw_path.parse()?;
        if collapsed.contains(&path) {
            return Err(SpecError::DuplicateCollapsed(path.to_string()));
        }
        collapsed.push(path);
    }
    let conditions = raw
        .conditions
        .unwrap_or_default()
        .into_iter()
        .map(|c| {
            Ok(Condition {
                dimension: normalize_identifier("dimension", &c.dimension)
                    .map_err(|e| SpecError::Invalid(e.to_string()))?,
                role: c.role.parse()?,
                class: normalize_identifier("class", &c.class)
                    .map_err(|e| SpecError::Invalid(e.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>, SpecError>>()?;
    if let Some(c) = conditions.iter().find(|c| classes.contains(&c.dimension)) {
        return Err(SpecError::NestedAndConditioned(c.dimension.clone()));
    }
    Ok(MatrixSpec {
        classes,
        normalization: raw.normalization.as_deref().map(str::parse).transpose()?.unwrap_or_default(),
        encoding: raw.encoding.as_deref().map(str::parse).transpose()?.unwrap_or_default(),
        scale_exclude_diagonal: raw.scale_exclude_diagonal.unwrap_or(false),
        measures,
        collapsed,
        filter: raw.filter.as_deref().map(str::parse).transpose()?,
        conditions,
        prune_empty: raw.prune_empty.unwrap_or(false),
    })
}

struct Canonical<'a>(&'a MatrixSpec);

impl Serialize for Canonical<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let spec = self.0;
        let mut s = serializer.serialize_struct("MatrixSpec", FIELDS.len())?;
        s.serialize_field("classes", &spec.classes)?;
        if spec.normalization != Normalization::default() {
            s.serialize_field("normalization", spec.normalization.as_str())?;
        }
        if spec.encoding != Encoding::default() {
            s.serialize_field("encoding", spec.encoding.as_str())?;
        }
        if spec.scale_exclude_diagonal {
            s.serialize_field("scale_exclude_diagonal", &true)?;
        }
        if !spec.measures.is_empty() {
            s.serialize_field("measures", &spec.measures)?;
        }
        if !spec.collapsed.is_empty() {
            let paths: Vec<String> = spec.collapsed.iter().map(ToString::to_string).collect();
            s.serialize_field("collapsed", &paths)?;
        }
        if let Some(filter) = &spec.filter {
            s.serialize_field("filter", &filter.to_string())?;
        }
        if !spec.conditions.is_empty() {
            s.serialize_field("where", &spec.conditions)?;
        }
        if spec.prune_empty {
            s.serialize_field("prune_empty", &true)?;
        }
        s.end()
    }
}

/// Canonical compact JSON text of a spec.
pub fn serialize_spec(spec: &MatrixSpec) -> String {
    serde_json::to_string(&Canonical(spec)).expect("spec serializes")
}

/// A reason a spec cannot be evaluated against a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Parse(String),
    EmptyClasses,
    DuplicateClass(String),
    UnknownDimension { field: &'static str, dimension: String },
    UnknownClass { dimension: String, class: String },
    UnknownMetric(String),
    NoHierarchy { field: &'static str, dimension: String },
    UnresolvedNode { field: &'static str, path: String },
    NestedAndConditioned(String),
    FilterNotActivated(String),
    FilterInsideCollapsed { filter: String, collapsed: String },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Parse(_) => "parse_error",
            Violation::EmptyClasses => "empty_classes",
            Violation::DuplicateClass(_) => "duplicate_class",
            Violation::UnknownDimension { .. } => "unknown_dimension",
            Violation::UnknownClass { .. } => "unknown_class",
            Violation::UnknownMetric(_) => "unknown_metric",
            Violation::NoHierarchy { .. } => "no_hierarchy",
            Violation::UnresolvedNode { .. } => "unresolved_node",
            Violation::NestedAndConditioned(_) => "nested_and_conditioned",
            Violation::FilterNotActivated(_) => "filter_not_activated",
            Violation::FilterInsideCollapsed { .. } => "filter_inside_collapsed",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Parse(m) => f.write_str(m),
            Violation::EmptyClasses => f.write_str("classes must be non-empty"),
            Violation::DuplicateClass(d) => write!(f, "dimension {d:?} appears more than once in classes"),
            Violation::UnknownDimension { field, dimension } => {
                write!(f, "{field}: unknown dimension {dimension:?}")
            }
            Violation::UnknownClass { dimension, class } => {
                write!(f, "where: dimension {dimension:?} has no class {class:?}")
            }
            Violation::UnknownMetric(m) => write!(f, "measures: unknown metric {m:?}"),
            Violation::NoHierarchy { field, dimension } => {
                write!(f, "{field}: dimension {dimension:?} has no hierarchy")
            }
            Violation::UnresolvedNode { field, path } => {
                write!(f, "{field}: {path} does not resolve to a hierarchy node")
            }
            Violation::NestedAndConditioned(d) => {
                write!(f, "dimension {d:?} is both nested (classes) and conditioned (where)")
            }
            Violation::FilterNotActivated(d) => {
                write!(f, "filter: dimension {d:?} is not listed in classes")
            }
            Violation::FilterInsideCollapsed { filter, collapsed } => {
                write!(f, "filter {filter} lies inside collapsed node {collapsed}")
            }
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Violation", 2)?;
        s.serialize_field("kind", self.kind())?;
        s.serialize_field("message", &self.to_string())?;
        s.end()
    }
}

impl From<SpecError> for Violation {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::UnknownMetric(m) => Violation::UnknownMetric(m),
            SpecError::EmptyClasses => Violation::EmptyClasses,
            SpecError::DuplicateClass(d) => Violation::DuplicateClass(d),
            SpecError::NestedAndConditioned(d) => Violation::NestedAndConditioned(d),
            other => Violation::Parse(other.to_string()),
        }
    }
}

fn resolve_path<'a>(
    ds: &'a Dataset,
    field: &'static str,
    path: &NodePath,
    out: &mut Vec<Violation>,
) -> Option<&'a HierarchyNode> {
    let Some(dim) = ds.dimension(&path.dimension) else {
        out.push(Violation::UnknownDimension {
            field,
            dimension: path.dimension.clone(),
        });
        return None;
    };
    let Some(root) = dim.hierarchy() else {
        out.push(Violation::NoHierarchy {
            field,
            dimension: path.dimension.clone(),
        });
        return None;
    };
    let node = path.resolve(root);
    if node.is_none() {
        out.push(Violation::UnresolvedNode {
            field,
            path: path.to_string(),
        });
    }
    node
}

/// Checks every dimension, class and node reference of `spec` against `ds`.
pub fn validate_spec(spec: &MatrixSpec, ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.classes.is_empty() {
        out.push(Violation::EmptyClasses);
    }
    let mut seen = BTreeSet::new();
    for class in &spec.classes {
        if !seen.insert(class) {
            out.push(Violation::DuplicateClass(class.clone()));
        }
        if ds.dimension(class).is_none() {
            out.push(Violation::UnknownDimension {
                field: "classes",
                dimension: class.clone(),
            });
        }
    }
    for path in &spec.collapsed {
        resolve_path(ds, "collapsed", path, &mut out);
    }
    if let Some(filter) = &spec.filter {
        if !spec.classes.contains(&filter.dimension) && ds.dimension(&filter.dimension).is_some() {
            out.push(Violation::FilterNotActivated(filter.dimension.clone()));
        }
        if resolve_path(ds, "filter", filter, &mut out).is_some() {
            for collapsed in spec.collapsed.iter().filter(|c| c.dimension == filter.dimension) {
                let strict_ancestor = collapsed.segments.len() < filter.segments.len()
                    && filter.segments.starts_with(&collapsed.segments);
                if strict_ancestor {
                    out.push(Violation::FilterInsideCollapsed {
                        filter: filter.to_string(),
                        collapsed: collapsed.to_string(),
                    });
                }
            }
        }
    }
    let mut nested_conflicts = BTreeSet::new();
    for condition in &spec.conditions {
        match ds.dimension(&condition.dimension) {
            None => out.push(Violation::UnknownDimension {
                field: "where",
                dimension: condition.dimension.clone(),
            }),
            Some(dim) if !dim.has_class(&condition.class) => out.push(Violation::UnknownClass {
                dimension: condition.dimension.clone(),
                class: condition.class.clone(),
            }),
            Some(_) => {}
        }
        if spec.classes.contains(&condition.dimension) && nested_conflicts.insert(&condition.dimension) {
            out.push(Violation::NestedAndConditioned(condition.dimension.clone()));
        }
    }
    out
}

/// Parses and validates spec text in one step, turning parse failures into
/// violations.
pub fn check_spec(text: &[u8], ds: &Dataset) -> Result<MatrixSpec, Vec<Violation>> {
    let spec = parse_spec(text).map_err(|e| vec![Violation::from(e)])?;
    let violations = validate_spec(&spec, ds);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(violations)
    }
}
