//! Sparse joint distributions over (dimension, role) variables.
//!
//! A confusion matrix is the joint distribution P(X, Y) of the actual class X
//! and the predicted class Y. With several label dimensions the distribution
//! ranges over all (dimension, role) pairs. Conditioning, marginalization and
//! collapsing map distributions to distributions, so queries are chains of
//! these operations.
//!
//! Only non-zero cells are stored. Tuples are kept in a `BTreeMap` so every
//! operation visits cells in the same order and produces bit-identical sums.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

/// A class or collapsed-node identifier as it appears in a tuple.
pub type ClassId = Arc<str>;

/// One coordinate per variable, aligned with [`JointDistribution::variables`].
pub type Tuple = Vec<ClassId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Actual,
    Predicted,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Actual => "actual",
            Role::Predicted => "predicted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariableRef {
    pub dimension: String,
    pub role: Role,
}

impl VariableRef {
    pub fn new(dimension: impl Into<String>, role: Role) -> Self {
        VariableRef {
            dimension: dimension.into(),
            role,
        }
    }

    pub fn actual(dimension: impl Into<String>) -> Self {
        Self::new(dimension, Role::Actual)
    }

    pub fn predicted(dimension: impl Into<String>) -> Self {
        Self::new(dimension, Role::Predicted)
    }

    /// The (actual, predicted) pair of a dimension.
    pub fn pair(dimension: &str) -> [VariableRef; 2] {
        [Self::actual(dimension), Self::predicted(dimension)]
    }
}

impl fmt::Display for VariableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.dimension, self.role.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("variable list is empty")]
    NoVariables,
    #[error("variable {0} listed more than once")]
    DuplicateVariable(VariableRef),
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("variable {0} is not part of the distribution")]
    UnknownVariable(VariableRef),
    #[error("condition on {0} has an empty class set")]
    EmptyConditionSet(VariableRef),
    #[error("condition matches nothing (zero conditioning mass)")]
    ZeroMass,
    #[error("collapse of {node:?} needs a non-empty leaf set")]
    EmptyLeafSet { node: String },
    #[error("tuple has {got} coordinates, the distribution has {expected} variables")]
    Arity { expected: usize, got: usize },
}

/// Map from conditioned variable to the set of admissible classes.
pub type Assignments = BTreeMap<VariableRef, BTreeSet<ClassId>>;

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    variables: Vec<VariableRef>,
    mass: BTreeMap<Tuple, f64>,
    support_count: u64,
}

impl JointDistribution {
    /// Relative frequencies of the value tuples of `vars` over all records.
    pub fn from_dataset(ds: &Dataset, vars: &[VariableRef]) -> Result<Self, DistributionError> {
        check_variables(vars)?;
        if ds.is_empty() {
            return Err(DistributionError::EmptyDataset);
        }
        let mut columns = Vec::with_capacity(vars.len());
        let mut labels: Vec<Vec<ClassId>> = Vec::with_capacity(vars.len());
        for var in vars {
            let index = ds
                .dimension_index(&var.dimension)
                .ok_or_else(|| DistributionError::UnknownDimension(var.dimension.clone()))?;
            let (actual, predicted) = ds.codes(index);
            columns.push(match var.role {
                Role::Actual => actual,
                Role::Predicted => predicted,
            });
            labels.push(
                ds.schema()[index]
                    .classes()
                    .iter()
                    .map(|c| ClassId::from(c.as_str()))
                    .collect(),
            );
        }
        let counts = count_codes(&columns, &labels, ds.len());
        let n = ds.len() as u64;
        let mut cells: Vec<(Tuple, f64)> = counts
            .into_iter()
            .map(|(codes, count)| {
                let tuple = codes
                    .iter()
                    .zip(&labels)
                    .map(|(&code, names)| names[code as usize].clone())
                    .collect();
                (tuple, count as f64 / n as f64)
            })
            .collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(JointDistribution {
            variables: vars.to_vec(),
            mass: cells.into_iter().collect(),
            support_count: n,
        })
    }

    /// Builds a distribution from absolute counts of tuples.
    pub fn from_counts(
        variables: Vec<VariableRef>,
        counts: impl IntoIterator<Item = (Tuple, u64)>,
    ) -> Result<Self, DistributionError> {
        check_variables(&variables)?;
        let mut summed: BTreeMap<Tuple, u64> = BTreeMap::new();
        for (tuple, count) in counts {
            if tuple.len() != variables.len() {
                return Err(DistributionError::Arity {
                    expected: variables.len(),
                    got: tuple.len(),
                });
            }
            if count > 0 {
                *summed.entry(tuple).or_insert(0) += count;
            }
        }
        let total: u64 = summed.values().sum();
        if total == 0 {
            return Err(DistributionError::EmptyDataset);
        }
        Ok(JointDistribution {
            variables,
            mass: summed
                .into_iter()
                .map(|(t, c)| (t, c as f64 / total as f64))
                .collect(),
            support_count: total,
        })
    }

    pub fn variables(&self) -> &[VariableRef] {
        &self.variables
    }

    /// Number of records underlying the distribution after conditioning.
    pub fn support_count(&self) -> u64 {
        self.support_count
    }

    /// Number of non-zero cells.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tuple, f64)> {
        self.mass.iter().map(|(t, &m)| (t, m))
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn position(&self, var: &VariableRef) -> Option<usize> {
        self.variables.iter().position(|v| v == var)
    }

    /// Probability of a tuple; zero when absent.
    pub fn mass<S: AsRef<str>>(&self, tuple: &[S]) -> Result<f64, DistributionError> {
        if tuple.len() != self.variables.len() {
            return Err(DistributionError::Arity {
                expected: self.variables.len(),
                got: tuple.len(),
            });
        }
        let key: Tuple = tuple.iter().map(|s| ClassId::from(s.as_ref())).collect();
        Ok(self.mass.get(&key).copied().unwrap_or(0.0))
    }

    /// Number of underlying records in a cell, `round(mass * support_count)`.
    pub fn cell_count<S: AsRef<str>>(&self, tuple: &[S]) -> Result<u64, DistributionError> {
        Ok(self.count_of(self.mass(tuple)?))
    }

    pub fn count_of(&self, mass: f64) -> u64 {
        (mass * self.support_count as f64).round() as u64
    }

    /// Restricts the distribution to tuples whose assigned coordinates lie in
    /// the given sets and renormalizes by the kept mass.
    ///
    /// Variables assigned a single class are dropped from the result; their
    /// value is fixed by the condition.
    pub fn condition(&self, assignments: &Assignments) -> Result<Self, DistributionError> {
        let mut filters: Vec<(usize, &BTreeSet<ClassId>)> = Vec::with_capacity(assignments.len());
        for (var, classes) in assignments {
            let position = self
                .position(var)
                .ok_or_else(|| DistributionError::UnknownVariable(var.clone()))?;
            if classes.is_empty() {
                return Err(DistributionError::EmptyConditionSet(var.clone()));
            }
            filters.push((position, classes));
        }
        let kept: Vec<(&Tuple, f64)> = self
            .mass
            .iter()
            .filter(|(tuple, _)| filters.iter().all(|(i, set)| set.contains(&tuple[*i])))
            .map(|(t, &m)| (t, m))
            .collect();
        let kept_mass: f64 = kept.iter().map(|(_, m)| m).sum();
        if kept.is_empty() || kept_mass <= 0.0 {
            return Err(DistributionError::ZeroMass);
        }
        let dropped: BTreeSet<usize> = filters
            .iter()
            .filter(|(_, set)| set.len() == 1)
            .map(|(i, _)| *i)
            .collect();
        let retained: Vec<usize> = (0..self.variables.len())
            .filter(|i| !dropped.contains(i))
            .collect();
        let variables: Vec<VariableRef> = retained.iter().map(|&i| self.variables[i].clone()).collect();
        let mut mass = BTreeMap::new();
        for (tuple, m) in kept {
            let key: Tuple = retained.iter().map(|&i| tuple[i].clone()).collect();
            *mass.entry(key).or_insert(0.0) += m / kept_mass;
        }
        Ok(JointDistribution {
            variables,
            mass,
            support_count: self.count_of(kept_mass),
        })
    }

    /// Sums out every variable not in `keep`; the result's variables follow
    /// the order of `keep`.
    pub fn marginalize(&self, keep: &[VariableRef]) -> Result<Self, DistributionError> {
        check_variables(keep)?;
        if keep == self.variables.as_slice() {
            return Ok(self.clone());
        }
        let positions = keep
            .iter()
            .map(|v| {
                self.position(v)
                    .ok_or_else(|| DistributionError::UnknownVariable(v.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut mass = BTreeMap::new();
        for (tuple, &m) in &self.mass {
            let key: Tuple = positions.iter().map(|&i| tuple[i].clone()).collect();
            *mass.entry(key).or_insert(0.0) += m;
        }
        Ok(JointDistribution {
            variables: keep.to_vec(),
            mass,
            support_count: self.support_count,
        })
    }

    /// Replaces every coordinate in `leaves` by `node`, in all variables of
    /// `dimension` (actual and predicted alike), summing merged cells.
    pub fn collapse(
        &self,
        dimension: &str,
        node: &str,
        leaves: &BTreeSet<ClassId>,
    ) -> Result<Self, DistributionError> {
        self.collapse_all(dimension, &[(node, leaves)])
    }

    /// Applies several collapses of one dimension in a single pass. A leaf
    /// listed under more than one node goes to the first.
    pub fn collapse_all(
        &self,
        dimension: &str,
        groups: &[(&str, &BTreeSet<ClassId>)],
    ) -> Result<Self, DistributionError> {
        let positions: Vec<usize> = self
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.dimension == dimension)
            .map(|(i, _)| i)
            .collect();
        if positions.is_empty() {
            return Err(DistributionError::UnknownDimension(dimension.to_string()));
        }
        let mut target: HashMap<&str, ClassId> = HashMap::new();
        for (node, leaves) in groups.iter().rev() {
            if leaves.is_empty() {
                return Err(DistributionError::EmptyLeafSet {
                    node: node.to_string(),
                });
            }
            let node = ClassId::from(*node);
            for leaf in leaves.iter() {
                target.insert(leaf, node.clone());
            }
        }
        let mut mass = BTreeMap::new();
        for (tuple, &m) in &self.mass {
            let mut key = tuple.clone();
            for &i in &positions {
                if let Some(node) = target.get(key[i].as_ref()) {
                    key[i] = node.clone();
                }
            }
            *mass.entry(key).or_insert(0.0) += m;
        }
        Ok(JointDistribution {
            variables: self.variables.clone(),
            mass,
            support_count: self.support_count,
        })
    }
}

fn check_variables(vars: &[VariableRef]) -> Result<(), DistributionError> {
    if vars.is_empty() {
        return Err(DistributionError::NoVariables);
    }
    let mut seen = BTreeSet::new();
    for var in vars {
        if !seen.insert(var) {
            return Err(DistributionError::DuplicateVariable(var.clone()));
        }
    }
    Ok(())
}

/// Above this many possible code tuples, counting switches from a dense
/// array to a hash map.
const DENSE_LIMIT: u128 = 1 << 22;

/// Counts code tuples across records. Tuples are packed into a single
/// mixed-radix key when the class-count product fits in `u128`.
fn count_codes(columns: &[&[u32]], labels: &[Vec<ClassId>], n: usize) -> Vec<(Vec<u32>, u64)> {
    let radices: Vec<u128> = labels.iter().map(|l| l.len().max(1) as u128).collect();
    let space = radices.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r));
    let unpack = |mut key: u128| {
        let mut codes = vec![0u32; radices.len()];
        for (slot, &radix) in codes.iter_mut().zip(&radices).rev() {
            *slot = (key % radix) as u32;
            key /= radix;
        }
        codes
    };
    if space.is_some_and(|s| s <= DENSE_LIMIT) {
        let radices: Vec<usize> = radices.iter().map(|&r| r as usize).collect();
        let mut counts = vec![0u64; radices.iter().product()];
        for row in 0..n {
            let mut key = 0usize;
            for (column, &radix) in columns.iter().zip(&radices) {
                key = key * radix + column[row] as usize;
            }
            counts[key] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .map(|(key, c)| (unpack(key as u128), c))
            .collect()
    } else if space.is_some() {
        let mut counts: HashMap<u128, u64> = HashMap::new();
        for row in 0..n {
            let mut key = 0u128;
            for (column, &radix) in columns.iter().zip(&radices) {
                key = key * radix + column[row] as u128;
            }
            *counts.entry(key).or_insert(0) += 1;
        }
        counts.into_iter().map(|(key, count)| (unpack(key), count)).collect()
    } else {
        let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
        for row in 0..n {
            let key: Vec<u32> = columns.iter().map(|c| c[row]).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
        counts.into_iter().collect()
    }
}
