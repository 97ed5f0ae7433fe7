//! Label schema, category hierarchies and prediction-log ingestion.
//!
//! A [`Dataset`] is an immutable, columnar snapshot of evaluated instances.
//! Each label dimension stores its actual and predicted assignments as dense
//! class codes so that counting a joint distribution is a single pass over
//! the records.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Reserved class marking the absence of a label in multi-output data.
pub const NONE_CLASS: &str = "none";

/// Separator between hierarchy levels in path strings (`Food/Citrus/orange`).
pub const PATH_SEPARATOR: char = '/';

const ACTUAL_SUFFIX: &str = "actual";
const PREDICTED_SUFFIX: &str = "predicted";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("invalid {what} identifier {value:?}: must be non-empty and must not contain '/'")]
    InvalidIdentifier { what: &'static str, value: String },
    #[error("duplicate dimension {0:?} in schema")]
    DuplicateDimension(String),
    #[error("duplicate class {class:?} in dimension {dimension:?}")]
    DuplicateClass { dimension: String, class: String },
    #[error("hierarchy of dimension {dimension:?}: {message}")]
    HierarchyPaths { dimension: String, message: String },
    #[error("hierarchy of dimension {dimension:?} does not match its classes: {}", join(.violations))]
    Hierarchy {
        dimension: String,
        violations: Vec<HierarchyViolation>,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: record {record:?} has unknown field {field:?}")]
    UnknownField {
        line: usize,
        record: String,
        field: String,
    },
    #[error("line {line}: record {record:?} references unknown class {class:?} of dimension {dimension:?}")]
    UnknownClass {
        line: usize,
        record: String,
        dimension: String,
        class: String,
    },
    #[error("line {line}: record {record:?} is missing {dimension}.{role}")]
    MissingAssignment {
        line: usize,
        record: String,
        dimension: String,
        role: &'static str,
    },
    #[error("line {line}: duplicate record id {id:?} (first seen on line {first_line})")]
    DuplicateId {
        line: usize,
        id: String,
        first_line: usize,
    },
    #[error("no records")]
    NoRecords,
}

impl IngestError {
    /// Flattened, human readable violation list for reporting.
    pub fn violations(&self) -> Vec<String> {
        match self {
            IngestError::Hierarchy {
                dimension,
                violations,
            } => violations
                .iter()
                .map(|v| format!("dimension {dimension:?}: {v}"))
                .collect(),
            other => vec![other.to_string()],
        }
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Trims an identifier and checks it is usable as a class, node or dimension name.
pub fn normalize_identifier(what: &'static str, raw: &str) -> Result<String, IngestError> {
    let value = raw.trim();
    if value.is_empty() || value.contains(PATH_SEPARATOR) {
        return Err(IngestError::InvalidIdentifier {
            what,
            value: raw.to_string(),
        });
    }
    Ok(value.to_string())
}

/// A node of a category tree. Leaves are the classes of the dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyNode {
    pub name: String,
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn leaf(name: impl Into<String>) -> Self {
        HierarchyNode {
            name: name.into(),
            children: Vec::new(),
        }
    }

    pub fn internal(name: impl Into<String>, children: Vec<HierarchyNode>) -> Self {
        HierarchyNode {
            name: name.into(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Builds a tree from root-to-leaf path strings.
    ///
    /// Internal segments with the same name under the same parent are merged;
    /// the final segment of every path always becomes a new leaf, so a class
    /// listed twice shows up as a duplicate leaf in [`validate_hierarchy`].
    pub fn from_paths<S: AsRef<str>>(dimension: &str, paths: &[S]) -> Result<Self, IngestError> {
        let err = |message: String| IngestError::HierarchyPaths {
            dimension: dimension.to_string(),
            message,
        };
        let mut root: Option<HierarchyNode> = None;
        for raw in paths {
            let raw = raw.as_ref();
            let segments = raw
                .split(PATH_SEPARATOR)
                .map(|s| normalize_identifier("hierarchy node", s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err(format!("malformed path {raw:?}")))?;
            let (first, rest) = segments.split_first().expect("split yields one segment");
            let root = match &mut root {
                Some(node) => {
                    if node.name != *first {
                        return Err(err(format!(
                            "path {raw:?} starts at {first:?} but the root is {:?}",
                            node.name
                        )));
                    }
                    if rest.is_empty() || node.is_leaf() {
                        return Err(err(format!(
                            "path {raw:?} conflicts with the root {:?}",
                            node.name
                        )));
                    }
                    node
                }
                None => root.insert(HierarchyNode::leaf(first.clone())),
            };
            let Some((leaf, internals)) = rest.split_last() else {
                continue;
            };
            let mut cursor = root;
            for segment in internals {
                let position = cursor.children.iter().position(|c| c.name == *segment);
                cursor = match position {
                    Some(i) if cursor.children[i].is_leaf() => {
                        return Err(err(format!(
                            "path {raw:?} descends below leaf {segment:?}"
                        )));
                    }
                    Some(i) => &mut cursor.children[i],
                    None => {
                        cursor.children.push(HierarchyNode::leaf(segment.clone()));
                        // Placeholder until its own children are attached.
                        cursor.children.last_mut().unwrap()
                    }
                };
            }
            cursor.children.push(HierarchyNode::leaf(leaf.clone()));
        }
        root.ok_or_else(|| err("hierarchy has no paths".to_string()))
    }

    /// Root-to-leaf paths in depth-first order.
    pub fn to_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_paths(&mut prefix, &mut out);
        out
    }

    fn collect_paths<'a>(&'a self, prefix: &mut Vec<&'a str>, out: &mut Vec<String>) {
        prefix.push(&self.name);
        if self.is_leaf() {
            out.push(prefix.join("/"));
        } else {
            for child in &self.children {
                child.collect_paths(prefix, out);
            }
        }
        prefix.pop();
    }

    /// Leaf names below this node in depth-first order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |node| {
            if node.is_leaf() {
                out.push(node.name.as_str());
            }
        });
        out
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a HierarchyNode)) {
        f(self);
        for child in &self.children {
            child.visit(f);
        }
    }

    pub fn find(&self, name: &str) -> Option<&HierarchyNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }

    /// Resolves a root-anchored path of node names.
    pub fn find_path<S: AsRef<str>>(&self, path: &[S]) -> Option<&HierarchyNode> {
        let (first, rest) = path.split_first()?;
        if first.as_ref() != self.name {
            return None;
        }
        let mut node = self;
        for segment in rest {
            node = node.children.iter().find(|c| c.name == segment.as_ref())?;
        }
        Some(node)
    }

    /// Names of the nodes from the root down to `name`, inclusive.
    pub fn ancestry(&self, name: &str) -> Option<Vec<&str>> {
        if self.name == name {
            return Some(vec![&self.name]);
        }
        self.children.iter().find_map(|c| {
            c.ancestry(name).map(|mut chain| {
                chain.insert(0, &self.name);
                chain
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum HierarchyViolation {
    /// A class appears as more than one leaf.
    DuplicateLeaf(String),
    /// An internal node name is used more than once in the tree.
    DuplicateNode(String),
    /// A class of the dimension has no leaf.
    MissingLeaf(String),
    /// A leaf that is not a class of the dimension.
    UnknownLeaf(String),
}

impl fmt::Display for HierarchyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyViolation::DuplicateLeaf(n) => write!(f, "leaf {n:?} appears more than once"),
            HierarchyViolation::DuplicateNode(n) => write!(f, "node name {n:?} is not unique"),
            HierarchyViolation::MissingLeaf(n) => write!(f, "class {n:?} has no leaf"),
            HierarchyViolation::UnknownLeaf(n) => write!(f, "leaf {n:?} is not a class"),
        }
    }
}

/// A label variable with its class set and optional category tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDimension {
    name: String,
    classes: Vec<String>,
    hierarchy: Option<HierarchyNode>,
    index: HashMap<String, u32>,
}

impl LabelDimension {
    /// Validates identifiers and class uniqueness. The hierarchy is checked
    /// separately by [`validate_hierarchy`].
    pub fn new<S: AsRef<str>>(
        name: &str,
        classes: &[S],
        hierarchy: Option<HierarchyNode>,
    ) -> Result<Self, IngestError> {
        let name = normalize_identifier("dimension", name)?;
        let mut index = HashMap::with_capacity(classes.len());
        let mut normalized = Vec::with_capacity(classes.len());
        for class in classes {
            let class = normalize_identifier("class", class.as_ref())?;
            if index.insert(class.clone(), normalized.len() as u32).is_some() {
                return Err(IngestError::DuplicateClass {
                    dimension: name,
                    class,
                });
            }
            normalized.push(class);
        }
        if normalized.is_empty() {
            return Err(IngestError::Schema(format!(
                "dimension {name:?} declares no classes"
            )));
        }
        Ok(LabelDimension {
            name,
            classes: normalized,
            hierarchy,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Classes in declaration order; class codes index this slice.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn hierarchy(&self) -> Option<&HierarchyNode> {
        self.hierarchy.as_ref()
    }

    pub fn class_code(&self, class: &str) -> Option<u32> {
        self.index.get(class).copied()
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.index.contains_key(class)
    }

    /// Display order of the leaves: depth-first over the hierarchy when one
    /// is present, declaration order otherwise.
    pub fn ordered_classes(&self) -> Vec<&str> {
        match &self.hierarchy {
            Some(root) => root.leaves(),
            None => self.classes.iter().map(String::as_str).collect(),
        }
    }
}

/// Checks the category tree of `dim` against its class set.
pub fn validate_hierarchy(dim: &LabelDimension) -> Vec<HierarchyViolation> {
    let Some(root) = dim.hierarchy() else {
        return Vec::new();
    };
    let mut violations = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut leaf_names: BTreeSet<&str> = BTreeSet::new();
    let mut order: Vec<(&str, bool)> = Vec::new();
    root.visit(&mut |node| {
        let count = seen.entry(node.name.as_str()).or_insert(0);
        *count += 1;
        if *count == 2 {
            order.push((node.name.as_str(), node.is_leaf()));
        }
        if node.is_leaf() {
            leaf_names.insert(node.name.as_str());
        }
    });
    for (name, is_leaf) in order {
        if is_leaf && leaf_names.contains(name) && dim.has_class(name) {
            violations.push(HierarchyViolation::DuplicateLeaf(name.to_string()));
        } else {
            violations.push(HierarchyViolation::DuplicateNode(name.to_string()));
        }
    }
    for class in dim.classes() {
        if !leaf_names.contains(class.as_str()) {
            violations.push(HierarchyViolation::MissingLeaf(class.clone()));
        }
    }
    for leaf in &leaf_names {
        if !dim.has_class(leaf) {
            violations.push(HierarchyViolation::UnknownLeaf(leaf.to_string()));
        }
    }
    violations
}

/// All classes under the node `node_name`; the singleton set for a leaf.
pub fn subtree_leaves(dim: &LabelDimension, node_name: &str) -> Result<BTreeSet<String>, IngestError> {
    let unknown = || {
        IngestError::Schema(format!(
            "dimension {:?} has no node {node_name:?}",
            dim.name()
        ))
    };
    match dim.hierarchy() {
        Some(root) => {
            let node = root.find(node_name).ok_or_else(unknown)?;
            Ok(node.leaves().into_iter().map(str::to_string).collect())
        }
        None if dim.has_class(node_name) => Ok(BTreeSet::from([node_name.to_string()])),
        None => Err(unknown()),
    }
}

/// One evaluated instance: per dimension, the actual and predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceRecord {
    pub id: String,
    pub assignments: BTreeMap<String, (String, String)>,
}

impl InstanceRecord {
    pub fn new(id: impl Into<String>) -> Self {
        InstanceRecord {
            id: id.into(),
            assignments: BTreeMap::new(),
        }
    }

    pub fn with(mut self, dimension: &str, actual: &str, predicted: &str) -> Self {
        self.assignments
            .insert(dimension.to_string(), (actual.to_string(), predicted.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Column {
    actual: Vec<u32>,
    predicted: Vec<u32>,
}

/// An immutable, validated set of evaluated instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: Vec<LabelDimension>,
    ids: Vec<String>,
    columns: Vec<Column>,
}

impl Dataset {
    pub fn schema(&self) -> &[LabelDimension] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dimension(&self, name: &str) -> Option<&LabelDimension> {
        self.schema.iter().find(|d| d.name() == name)
    }

    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|d| d.name() == name)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Actual and predicted class codes of one dimension, one per record.
    pub fn codes(&self, dimension: usize) -> (&[u32], &[u32]) {
        let column = &self.columns[dimension];
        (&column.actual, &column.predicted)
    }

    pub fn record(&self, i: usize) -> InstanceRecord {
        let mut record = InstanceRecord::new(self.ids[i].clone());
        for (dim, column) in self.schema.iter().zip(&self.columns) {
            record.assignments.insert(
                dim.name().to_string(),
                (
                    dim.classes()[column.actual[i] as usize].clone(),
                    dim.classes()[column.predicted[i] as usize].clone(),
                ),
            );
        }
        record
    }

    pub fn records(&self) -> impl Iterator<Item = InstanceRecord> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Builds a dataset from in-memory records.
    pub fn from_records(
        schema: Vec<LabelDimension>,
        records: impl IntoIterator<Item = InstanceRecord>,
    ) -> Result<Dataset, IngestError> {
        let mut builder = Builder::new(schema)?;
        for (i, record) in records.into_iter().enumerate() {
            let line = i + 1;
            let mut pairs: Vec<(Cow<str>, Cow<str>)> = vec![(Cow::Borrowed("id"), Cow::Owned(record.id.clone()))];
            for (dim, (actual, predicted)) in &record.assignments {
                pairs.push((Cow::Owned(format!("{dim}.{ACTUAL_SUFFIX}")), Cow::Owned(actual.clone())));
                pairs.push((Cow::Owned(format!("{dim}.{PREDICTED_SUFFIX}")), Cow::Owned(predicted.clone())));
            }
            builder.push(line, pairs)?;
        }
        builder.finish()
    }

    /// Compact canonical schema document.
    pub fn schema_json(&self) -> String {
        schema_document(&self.schema)
    }

    /// SHA-256 of the canonical schema document, hex encoded.
    pub fn schema_digest(&self) -> String {
        let digest = Sha256::digest(self.schema_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the records as newline-delimited flat objects, dimensions in
    /// schema order.
    pub fn write_records(&self, mut out: impl Write) -> std::io::Result<()> {
        let quoted: Vec<Vec<String>> = self
            .schema
            .iter()
            .map(|d| d.classes().iter().map(|c| json_string(c)).collect())
            .collect();
        let keys: Vec<(String, String)> = self
            .schema
            .iter()
            .map(|d| {
                (
                    json_string(&format!("{}.{ACTUAL_SUFFIX}", d.name())),
                    json_string(&format!("{}.{PREDICTED_SUFFIX}", d.name())),
                )
            })
            .collect();
        let mut line = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            line.clear();
            line.push_str("{\"id\":");
            line.push_str(&json_string(id));
            for (d, column) in self.columns.iter().enumerate() {
                line.push(',');
                line.push_str(&keys[d].0);
                line.push(':');
                line.push_str(&quoted[d][column.actual[i] as usize]);
                line.push(',');
                line.push_str(&keys[d].1);
                line.push(':');
                line.push_str(&quoted[d][column.predicted[i] as usize]);
            }
            line.push_str("}\n");
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDocument {
    dimensions: Vec<DimensionDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimensionDocument {
    name: String,
    classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hierarchy: Option<Vec<String>>,
}

fn schema_document(schema: &[LabelDimension]) -> String {
    let doc = SchemaDocument {
        dimensions: schema
            .iter()
            .map(|d| DimensionDocument {
                name: d.name().to_string(),
                classes: d.classes().to_vec(),
                hierarchy: d.hierarchy().map(HierarchyNode::to_paths),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("schema serializes")
}

/// Parses and validates a schema document.
pub fn parse_schema(source: &[u8]) -> Result<Vec<LabelDimension>, IngestError> {
    let doc: SchemaDocument =
        serde_json::from_slice(source).map_err(|e| IngestError::Schema(e.to_string()))?;
    if doc.dimensions.is_empty() {
        return Err(IngestError::Schema("no dimensions".to_string()));
    }
    let mut schema: Vec<LabelDimension> = Vec::with_capacity(doc.dimensions.len());
    for d in doc.dimensions {
        let name = normalize_identifier("dimension", &d.name)?;
        if schema.iter().any(|s| s.name() == name) {
            return Err(IngestError::DuplicateDimension(name));
        }
        let hierarchy = d
            .hierarchy
            .as_deref()
            .map(|paths| HierarchyNode::from_paths(&name, paths))
            .transpose()?;
        let dim = LabelDimension::new(&name, &d.classes, hierarchy)?;
        let violations = validate_hierarchy(&dim);
        if !violations.is_empty() {
            return Err(IngestError::Hierarchy {
                dimension: name,
                violations,
            });
        }
        schema.push(dim);
    }
    Ok(schema)
}

/// Parses a schema document and a newline-delimited records source into a
/// validated [`Dataset`].
pub fn ingest(schema_source: &[u8], records_source: &[u8]) -> Result<Dataset, IngestError> {
    let schema = parse_schema(schema_source)?;
    let mut builder = Builder::new(schema)?;
    for (i, raw) in records_source.split(|b| *b == b'\n').enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let text = std::str::from_utf8(raw).map_err(|e| IngestError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        let FlatRecord(pairs) =
            serde_json::from_str(text).map_err(|e| IngestError::MalformedLine {
                line,
                message: e.to_string(),
            })?;
        builder.push(line, pairs)?;
    }
    builder.finish()
}

/// A record line as ordered key/value string pairs, borrowing where possible.
struct FlatRecord<'a>(Vec<(Cow<'a, str>, Cow<'a, str>)>);

impl<'de> Deserialize<'de> for FlatRecord<'de> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FlatVisitor;

        impl<'de> Visitor<'de> for FlatVisitor {
            type Value = FlatRecord<'de>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of string fields")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::with_capacity(map.size_hint().unwrap_or(8));
                while let Some(key) = map.next_key::<CowStr<'de>>()? {
                    let value = map.next_value::<CowStr<'de>>()?;
                    if pairs.iter().any(|(k, _): &(Cow<str>, Cow<str>)| *k == key.0) {
                        return Err(de::Error::custom(format!("duplicate field {:?}", key.0)));
                    }
                    pairs.push((key.0, value.0));
                }
                Ok(FlatRecord(pairs))
            }
        }

        deserializer.deserialize_map(FlatVisitor)
    }
}

struct CowStr<'a>(Cow<'a, str>);

impl<'de> Deserialize<'de> for CowStr<'de> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct StrVisitor;

        impl<'de> Visitor<'de> for StrVisitor {
            type Value = CowStr<'de>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a string")
            }

            fn visit_borrowed_str<E: de::Error>(self, v: &'de str) -> Result<Self::Value, E> {
                Ok(CowStr(Cow::Borrowed(v)))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Ok(CowStr(Cow::Owned(v.to_string())))
            }

            fn visit_string<E: de::Error>(self, v: String) -> Result<Self::Value, E> {
                Ok(CowStr(Cow::Owned(v)))
            }
        }

        deserializer.deserialize_str(StrVisitor)
    }
}

struct Builder {
    schema: Vec<LabelDimension>,
    lookup: HashMap<String, (usize, bool)>,
    ids: Vec<String>,
    seen: HashMap<String, usize>,
    columns: Vec<Column>,
    slots: Vec<Option<u32>>,
}

impl Builder {
    fn new(schema: Vec<LabelDimension>) -> Result<Self, IngestError> {
        let mut lookup = HashMap::new();
        for (i, dim) in schema.iter().enumerate() {
            lookup.insert(format!("{}.{ACTUAL_SUFFIX}", dim.name()), (i, true));
            lookup.insert(format!("{}.{PREDICTED_SUFFIX}", dim.name()), (i, false));
        }
        Ok(Builder {
            columns: vec![Column::default(); schema.len()],
            slots: vec![None; schema.len() * 2],
            schema,
            lookup,
            ids: Vec::new(),
            seen: HashMap::new(),
        })
    }

    fn push(&mut self, line: usize, pairs: Vec<(Cow<str>, Cow<str>)>) -> Result<(), IngestError> {
        let id = pairs
            .iter()
            .find(|(k, _)| k == "id")
            .map(|(_, v)| v.trim().to_string())
            .filter(|id| !id.is_empty())
            .ok_or_else(|| IngestError::MalformedLine {
                line,
                message: "missing or empty \"id\"".to_string(),
            })?;
        self.slots.iter_mut().for_each(|s| *s = None);
        for (key, value) in &pairs {
            if key == "id" {
                continue;
            }
            let Some(&(dim, is_actual)) = self.lookup.get(key.as_ref()) else {
                return Err(IngestError::UnknownField {
                    line,
                    record: id,
                    field: key.to_string(),
                });
            };
            let dimension = &self.schema[dim];
            let class = value.trim();
            let code = dimension
                .class_code(class)
                .ok_or_else(|| IngestError::UnknownClass {
                    line,
                    record: id.clone(),
                    dimension: dimension.name().to_string(),
                    class: class.to_string(),
                })?;
            self.slots[dim * 2 + usize::from(!is_actual)] = Some(code);
        }
        for (dim, dimension) in self.schema.iter().enumerate() {
            for (offset, role) in [(0, ACTUAL_SUFFIX), (1, PREDICTED_SUFFIX)] {
                let Some(code) = self.slots[dim * 2 + offset] else {
                    return Err(IngestError::MissingAssignment {
                        line,
                        record: id,
                        dimension: dimension.name().to_string(),
                        role,
                    });
                };
                let column = &mut self.columns[dim];
                if offset == 0 {
                    column.actual.push(code);
                } else {
                    column.predicted.push(code);
                }
            }
        }
        if let Some(&first_line) = self.seen.get(&id) {
            return Err(IngestError::DuplicateId {
                line,
                id,
                first_line,
            });
        }
        self.seen.insert(id.clone(), line);
        self.ids.push(id);
        Ok(())
    }

    fn finish(self) -> Result<Dataset, IngestError> {
        if self.ids.is_empty() {
            return Err(IngestError::NoRecords);
        }
        Ok(Dataset {
            schema: self.schema,
            ids: self.ids,
            columns: self.columns,
        })
    }
}
