//! Generalized confusion matrices.
//!
//! Confusions are modelled as sparse joint probability distributions over
//! the actual and predicted classes of one or more label dimensions. A
//! declarative [`spec::MatrixSpec`] selects, conditions, collapses and nests
//! those distributions into a render-ready [`view::MatrixView`] with
//! per-class metric columns.
//!
//! - [`dataset`]: schema, hierarchies and prediction-log ingestion
//! - [`distribution`]: conditioning, marginalization and collapse
//! - [`metrics`]: one-vs-rest counts and derived measures
//! - [`spec`]: the spec document
//! - [`engine`]: spec evaluation
//! - [`view`]: view documents and CSV/table output
//! - [`store`]: on-disk dataset directories and the spec store
//! - [`service`]: the HTTP API

pub mod dataset;
pub mod distribution;
pub mod engine;
pub mod metrics;
pub mod service;
pub mod spec;
pub mod store;
pub mod view;

pub use dataset::{ingest, Dataset, IngestError};
pub use distribution::{JointDistribution, Role, VariableRef};
pub use engine::{evaluate, QueryError};
pub use metrics::MetricKind;
pub use spec::{parse_spec, serialize_spec, MatrixSpec};
pub use view::MatrixView;
