//! Embedding vectors and partisan-labeled cohorts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in semantic space: one tweet, or one user after pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("embedding must have at least one dimension".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "embedding entry {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Squared Euclidean distance with a fixed summation order.
///
/// Four interleaved lanes are combined as `(l0 + l1) + (l2 + l3)` followed by
/// the tail, so the result depends only on the two slices and not on which
/// one comes first.
#[inline]
pub(crate) fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            lanes[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail
}

#[inline]
pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    squared_l2(a, b).sqrt()
}

/// Euclidean distance between two embeddings.
pub fn pairwise_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(l2(a.as_slice(), b.as_slice()))
}

/// Users partitioned into partisan groups.
///
/// Groups are keyed by label in a `BTreeMap`; empty and singleton groups are
/// allowed here and handled by the metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCohort {
    groups: BTreeMap<String, Vec<EmbeddingVector>>,
    dim: usize,
}

impl LabeledCohort {
    pub fn new(groups: BTreeMap<String, Vec<EmbeddingVector>>) -> Result<Self> {
        let mut dim = None;
        for (label, members) in &groups {
            if label.is_empty() {
                return Err(Error::Data("group labels must be non-empty".into()));
            }
            for v in members {
                match dim {
                    None => dim = Some(v.dim()),
                    Some(d) if d != v.dim() => {
                        return Err(Error::Dimension {
                            expected: d,
                            actual: v.dim(),
                        })
                    }
                    _ => {}
                }
            }
        }
        let dim = dim.ok_or_else(|| Error::Data("cohort has no members".into()))?;
        Ok(Self { groups, dim })
    }

    /// Builds a cohort from `(label, values)` pairs, validating every vector.
    pub fn from_rows<L, I>(rows: I) -> Result<Self>
    where
        L: Into<String>,
        I: IntoIterator<Item = (L, Vec<f64>)>,
    {
        let mut groups: BTreeMap<String, Vec<EmbeddingVector>> = BTreeMap::new();
        for (label, values) in rows {
            groups
                .entry(label.into())
                .or_default()
                .push(EmbeddingVector::new(values)?);
        }
        Self::new(groups)
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<EmbeddingVector>> {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of users across groups.
    pub fn n(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn group_sizes(&self) -> BTreeMap<String, usize> {
        self.groups
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect()
    }

    /// Number of groups with at least two members.
    pub fn contrastable_groups(&self) -> usize {
        self.groups.values().filter(|g| g.len() >= 2).count()
    }

    /// Flattens the cohort into a row-major matrix with a group index per row.
    pub(crate) fn flatten(&self) -> PointSet {
        let n = self.n();
        let mut data = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for (gi, members) in self.groups.values().enumerate() {
            for v in members {
                data.extend_from_slice(v.as_slice());
                labels.push(gi as u32);
            }
        }
        PointSet {
            data,
            labels,
            dim: self.dim,
        }
    }
}

/// Row-major points with group indices, the working form of a cohort.
#[derive(Debug, Clone)]
pub(crate) struct PointSet {
    pub data: Vec<f64>,
    pub labels: Vec<u32>,
    pub dim: usize,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}
