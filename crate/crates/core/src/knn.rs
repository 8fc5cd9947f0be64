//! Exact brute-force nearest neighbours and the expanded (eKNN) candidate
//! pool.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

/// Neighbours of a pivot in non-decreasing distance order, ties broken by
/// ascending node index. The pivot itself is never included.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList {
    pub pivot: usize,
    pub neighbors: Vec<(usize, f64)>,
    pub k_requested: usize,
    /// Set when fewer than `k_requested` neighbours exist.
    pub clamped: bool,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.neighbors.iter().map(|&(i, _)| i)
    }

    /// The first `k` entries as a new list.
    pub fn prefix(&self, k: usize) -> NeighborList {
        let take = k.min(self.neighbors.len());
        NeighborList {
            pivot: self.pivot,
            neighbors: self.neighbors[..take].to_vec(),
            k_requested: k,
            clamped: take < k,
        }
    }
}

/// 1-hop count `k`, expansion coefficient `gamma` (the candidate pool holds
/// `ceil(k·gamma)` nodes) and per-node 2-hop count `k2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub k: usize,
    pub gamma: f64,
    pub k2: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            k: 10,
            gamma: 1.0,
            k2: 5,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k2 == 0 {
            return Err(Error::Config("k and k2 must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(Error::Config(format!("expansion coefficient must be >= 1, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `ceil(k·gamma)`, with products that are integral up to rounding noise
    /// (10 × 1.2) treated as integral.
    pub fn pool_size(&self) -> usize {
        let x = self.k as f64 * self.gamma;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r as usize
        } else {
            x.ceil() as usize
        }
    }
}

fn by_distance(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Exact `k` nearest neighbours of `pivot` by Euclidean distance.
pub fn knn(set: &EmbeddingSet, pivot: usize, k: usize) -> Result<NeighborList> {
    if pivot >= set.len() {
        return Err(Error::OutOfRange {
            index: pivot,
            len: set.len(),
        });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut all: Vec<(usize, f64)> = (0..set.len())
        .filter(|&j| j != pivot)
        .map(|j| (j, set.sq_distance(pivot, j)))
        .collect();
    let take = k.min(all.len());
    if take < all.len() {
        all.select_nth_unstable_by(take, by_distance);
        all.truncate(take);
    }
    all.sort_unstable_by(by_distance);
    for e in &mut all {
        e.1 = e.1.sqrt();
    }
    Ok(NeighborList {
        pivot,
        neighbors: all,
        k_requested: k,
        clamped: take < k,
    })
}

/// The pivot's `ceil(k·gamma)` nearest neighbours. When that exceeds N−1 the
/// pool is clamped and `clamped` is set.
pub fn eknn(set: &EmbeddingSet, pivot: usize, cfg: &ExpansionConfig) -> Result<NeighborList> {
    cfg.validate()?;
    knn(set, pivot, cfg.pool_size())
}

/// Neighbour lists for every node up to a fixed depth, computed once and
/// sliced per query. Slices are identical to direct [`knn`] calls because
/// the ordering is total.
#[derive(Clone, Debug)]
pub struct KnnIndex {
    lists: Vec<NeighborList>,
    depth: usize,
}

impl KnnIndex {
    pub fn build(set: &EmbeddingSet, depth: usize) -> Result<Self> {
        let depth = depth.max(1);
        let lists = (0..set.len())
            .into_par_iter()
            .map(|p| knn(set, p, depth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lists, depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn knn(&self, pivot: usize, k: usize) -> Result<NeighborList> {
        let list = self.lists.get(pivot).ok_or(Error::OutOfRange {
            index: pivot,
            len: self.lists.len(),
        })?;
        if k > self.depth && list.len() == self.depth {
            return Err(Error::Config(format!("index depth {} below requested k={k}", self.depth)));
        }
        Ok(list.prefix(k))
    }

    pub fn eknn(&self, pivot: usize, cfg: &ExpansionConfig) -> Result<NeighborList> {
        cfg.validate()?;
        self.knn(pivot, cfg.pool_size())
    }
}
