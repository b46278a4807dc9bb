//! Disjoint group partitions of a transform's output coordinates and the
//! mixed norms they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Partition `{G_1, …, G_N}` of `[L]` (0-based internally).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    len: usize,
    #[serde(skip)]
    owner: Vec<usize>,
}

impl GroupPartition {
    /// Validates that `groups` covers `0..len` with no overlap and no gap.
    pub fn new(groups: Vec<Vec<usize>>, len: usize) -> Result<Self> {
        let mut owner = vec![usize::MAX; len];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Partition(format!("group {g} is empty")));
            }
            for &i in members {
                if i >= len {
                    return Err(Error::Partition(format!("index {i} outside [0, {len})")));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Partition(format!("index {i} appears in two groups")));
                }
                owner[i] = g;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Partition(format!("index {i} is not covered")));
        }
        Ok(Self { groups, len, owner })
    }

    pub fn singletons(len: usize) -> Self {
        Self {
            groups: (0..len).map(|i| vec![i]).collect(),
            len,
            owner: (0..len).collect(),
        }
    }

    /// Group `k` collects coordinate `k` of each of `filters` stacked blocks
    /// of length `n`: `G_k = {j n + k : j < filters}`.
    pub fn stacked(n: usize, filters: usize) -> Self {
        let groups = (0..n).map(|k| (0..filters).map(|j| j * n + k).collect()).collect();
        let owner = (0..n * filters).map(|i| i % n).collect();
        Self { groups, len: n * filters, owner }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// `L`, the number of partitioned coordinates.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_singletons(&self) -> bool {
        self.groups.iter().enumerate().all(|(g, m)| m.len() == 1 && m[0] == g)
    }

    /// True when this is [`GroupPartition::stacked`] for some `n`.
    pub fn is_stacked(&self, n: usize) -> bool {
        n > 0
            && self.len.is_multiple_of(n)
            && self.groups.len() == n
            && self
                .groups
                .iter()
                .enumerate()
                .all(|(k, m)| m.iter().enumerate().all(|(j, &i)| i == j * n + k))
    }

    /// Group index containing coordinate `i`.
    pub fn owner(&self, i: usize) -> usize {
        if self.owner.len() == self.len {
            self.owner[i]
        } else {
            self.groups.iter().position(|g| g.contains(&i)).expect("valid partition")
        }
    }

    /// Squared ℓ2 norm of each group of `z`.
    pub fn group_norms_sqr(&self, z: &[C64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().fold(0.0, |acc, &i| acc + z[i].norm_sqr()))
            .collect()
    }

    /// `‖z‖_{G,1} = Σ_j ‖Π_{G_j} z‖₂`.
    pub fn mixed_norm(&self, z: &[C64]) -> f64 {
        self.group_norms_sqr(z).iter().map(|v| v.sqrt()).sum()
    }

    /// Dual norm `‖z‖_{G,∞} = max_j ‖Π_{G_j} z‖₂`.
    pub fn dual_norm(&self, z: &[C64]) -> f64 {
        self.group_norms_sqr(z).iter().fold(0.0f64, |a, &v| a.max(v.sqrt()))
    }

    /// Rebuilds the owner table after deserialization.
    pub fn revalidate(self) -> Result<Self> {
        Self::new(self.groups, self.len)
    }
}
