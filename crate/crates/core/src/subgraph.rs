//! Instance-pivot subgraphs: the sampled 1-hop nodes, their 2-hop
//! extension, pivot-relative features and a row-normalized adjacency with
//! self-loops.

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::Array2;
use serde::Serialize;

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::{self, KnnIndex, NeighborList};

/// Anything that can answer exact k-nearest-neighbour queries.
pub trait NeighborSource {
    fn neighbors(&self, node: usize, k: usize) -> Result<NeighborList>;
}

impl NeighborSource for EmbeddingSet {
    fn neighbors(&self, node: usize, k: usize) -> Result<NeighborList> {
        knn::knn(self, node, k)
    }
}

impl NeighborSource for KnnIndex {
    fn neighbors(&self, node: usize, k: usize) -> Result<NeighborList> {
        self.knn(node, k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub pivot: usize,
    /// Global node ids: the 1-hop nodes first (duplicates allowed), then the
    /// 2-hop nodes. The pivot never appears.
    pub nodes: Vec<usize>,
    pub one_hop_count: usize,
    /// Row `i` holds `x[nodes[i]] - x[pivot]`.
    pub features: Array2<f64>,
    /// Row-normalized adjacency including self-loops.
    pub adjacency: Array2<f64>,
    /// `link_labels[i]` tells whether 1-hop node `i` shares the pivot's identity.
    pub link_labels: Option<Vec<bool>>,
    /// Edge degree had to be reduced to fit the node count.
    pub degree_clamped: bool,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn one_hop_mask(&self) -> Vec<bool> {
        (0..self.nodes.len()).map(|i| i < self.one_hop_count).collect()
    }

    pub fn one_hop(&self) -> &[usize] {
        &self.nodes[..self.one_hop_count]
    }

    /// Reorders subgraph rows by `perm` (new row `i` is old row `perm[i]`).
    /// 1-hop rows must stay within the leading block.
    pub fn permuted(&self, perm: &[usize]) -> Subgraph {
        let n = self.len();
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut adjacency = Array2::zeros((n, n));
        for (i, &pi) in perm.iter().enumerate() {
            features.row_mut(i).assign(&self.features.row(pi));
            for (j, &pj) in perm.iter().enumerate() {
                adjacency[[i, j]] = self.adjacency[[pi, pj]];
            }
        }
        Subgraph {
            pivot: self.pivot,
            nodes: perm.iter().map(|&p| self.nodes[p]).collect(),
            one_hop_count: self.one_hop_count,
            features,
            adjacency,
            link_labels: self.link_labels.as_ref().map(|l| {
                perm[..self.one_hop_count].iter().map(|&p| l[p]).collect()
            }),
            degree_clamped: self.degree_clamped,
        }
    }

    /// Node/edge dump for external visualization.
    pub fn to_debug_json(&self, set: &EmbeddingSet) -> serde_json::Value {
        #[derive(Serialize)]
        struct Dump<'a> {
            pivot: usize,
            pivot_label: u32,
            nodes: Vec<DumpNode>,
            edges: Vec<(usize, usize, f64)>,
            link_labels: Option<&'a [bool]>,
        }
        #[derive(Serialize)]
        struct DumpNode {
            id: usize,
            label: u32,
            one_hop: bool,
        }
        let n = self.len();
        let edges = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.adjacency[[i, j]] > 0.0)
            .map(|(i, j)| (i, j, self.adjacency[[i, j]]))
            .collect();
        let dump = Dump {
            pivot: self.pivot,
            pivot_label: set.label(self.pivot),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, &id)| DumpNode {
                    id,
                    label: set.label(id),
                    one_hop: i < self.one_hop_count,
                })
                .collect(),
            edges,
            link_labels: self.link_labels.as_deref(),
        };
        serde_json::to_value(dump).expect("subgraph dump serializes")
    }
}

/// Builds the subgraph around `pivot` from already-selected 1-hop nodes.
///
/// 2-hop nodes are the union of every 1-hop node's `k2` nearest neighbours,
/// minus the pivot and the 1-hop nodes themselves. Every node then gets
/// directed edges to its `r` nearest subgraph nodes (ties by row order).
pub fn build_subgraph<S: NeighborSource + ?Sized>(
    set: &EmbeddingSet,
    source: &S,
    pivot: usize,
    one_hop: &[usize],
    k2: usize,
    r: usize,
    with_labels: bool,
) -> Result<Subgraph> {
    if pivot >= set.len() {
        return Err(Error::OutOfRange {
            index: pivot,
            len: set.len(),
        });
    }
    if one_hop.is_empty() {
        return Err(Error::EmptyPool);
    }
    if let Some(&bad) = one_hop.iter().find(|&&h| h >= set.len() || h == pivot) {
        return Err(Error::Config(format!("1-hop node {bad} is the pivot or out of range")));
    }

    let mut nodes: Vec<usize> = one_hop.to_vec();
    let mut seen: HashSet<usize> = one_hop.iter().copied().collect();
    seen.insert(pivot);
    for &h in one_hop {
        for j in source.neighbors(h, k2)?.indices() {
            if seen.insert(j) {
                nodes.push(j);
            }
        }
    }

    let n = nodes.len();
    let d = set.dim();
    let base = set.row(pivot);
    let features = Array2::from_shape_fn((n, d), |(i, c)| f64::from(set.row(nodes[i])[c]) - f64::from(base[c]));

    let degree_clamped = r >= n;
    let r = r.min(n - 1);
    let mut adjacency = Array2::<f64>::zeros((n, n));
    let weight = 1.0 / (r + 1) as f64;
    let mut cand: Vec<(usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        adjacency[[i, i]] = weight;
        if r == 0 {
            continue;
        }
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (j, set.sq_distance(nodes[i], nodes[j]))));
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
        };
        if r < cand.len() {
            cand.select_nth_unstable_by(r - 1, order);
        }
        for &(j, _) in &cand[..r] {
            adjacency[[i, j]] = weight;
        }
    }

    let link_labels = with_labels.then(|| {
        let pl = set.label(pivot);
        one_hop.iter().map(|&h| set.label(h) == pl).collect()
    });

    Ok(Subgraph {
        pivot,
        nodes,
        one_hop_count: one_hop.len(),
        features,
        adjacency,
        link_labels,
        degree_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::knn::knn;

    /// Six points on a line at 0, 1, 2, 4, 5, 11.
    fn six() -> EmbeddingSet {
        EmbeddingSet::from_raw(vec![0.0, 1.0, 2.0, 4.0, 5.0, 11.0], 1, &[0, 0, 1, 1, 0, 1], "six").unwrap()
    }

    #[test]
    fn two_point_graph() {
        let set = EmbeddingSet::new(vec![1.0, 0.0, 0.0, 1.0], 2, &[0, 1], "two").unwrap();
        let sg = build_subgraph(&set, &set, 0, &[1], 1, 10, true).unwrap();
        assert_eq!(sg.nodes, vec![1]);
        assert_eq!(sg.adjacency, ndarray::arr2(&[[1.0]]));
        assert!(sg.degree_clamped);
        assert_eq!(sg.link_labels, Some(vec![false]));
    }

    #[test]
    fn hand_built_six_node_fixture() {
        // Pivot 2 (x=2), 1-hop {1, 3}. k2 = 2:
        //   knn(1) = [0 (d=1), 2 (d=1)] -> adds 0
        //   knn(3) = [4 (d=1), 2 (d=2)] -> adds 4
        // Rows: [1, 3, 0, 4] at x = [1, 4, 0, 5]. r = 2 nearest rows:
        //   row0 (x=1): row2 (1), row1 (3)
        //   row1 (x=4): row3 (1), row0 (3)
        //   row2 (x=0): row0 (1), row1 (4)
        //   row3 (x=5): row1 (1), row0 (4)
        let set = six();
        let sg = build_subgraph(&set, &set, 2, &[1, 3], 2, 2, true).unwrap();
        assert_eq!(sg.nodes, vec![1, 3, 0, 4]);
        let t = 1.0 / 3.0;
        let expect = ndarray::arr2(&[
            [t, t, t, 0.0],
            [t, t, 0.0, t],
            [t, t, t, 0.0],
            [t, t, 0.0, t],
        ]);
        assert_eq!(sg.adjacency, expect);
        assert_eq!(sg.features.column(0).to_vec(), vec![-1.0, 2.0, -2.0, 3.0]);
        assert_eq!(sg.link_labels, Some(vec![false, true]));
    }

    #[test]
    fn rows_sum_to_one_and_pivot_absent() {
        let set = generate_synthetic(&SyntheticSpec::uniform(6, 12, 8, 0.4, 1.0, 5)).unwrap();
        for pivot in [0, 17, 40, 71] {
            let hop: Vec<usize> = knn(&set, pivot, 10).unwrap().indices().collect();
            let sg = build_subgraph(&set, &set, pivot, &hop, 5, 10, true).unwrap();
            assert!(!sg.nodes.contains(&pivot));
            for row in sg.adjacency.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
            }
            let mut one: Vec<usize> = sg.one_hop().to_vec();
            one.sort_unstable();
            one.dedup();
            assert_eq!(one.len(), 10);
            assert!(sg.nodes[10..].iter().all(|n| !hop.contains(n)));
        }
    }

    #[test]
    fn features_are_translation_covariant() {
        let set = six();
        let shifted: Vec<f32> = set.features().iter().map(|v| v + 100.0).collect();
        let moved = EmbeddingSet::from_raw(shifted, 1, &[0, 0, 1, 1, 0, 1], "moved").unwrap();
        let a = build_subgraph(&set, &set, 2, &[1, 3], 2, 2, false).unwrap();
        let b = build_subgraph(&moved, &moved, 2, &[1, 3], 2, 2, false).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.adjacency, b.adjacency);
    }

    #[test]
    fn duplicated_one_hop_rows_are_kept() {
        let set = six();
        let sg = build_subgraph(&set, &set, 2, &[1, 3, 3], 1, 1, true).unwrap();
        assert_eq!(&sg.nodes[..3], &[1, 3, 3]);
        assert_eq!(sg.one_hop_count, 3);
        // The copies see each other at distance zero.
        assert!(sg.adjacency[[1, 2]] > 0.0 && sg.adjacency[[2, 1]] > 0.0);
    }

    #[test]
    fn id_permutation_gives_isomorphic_subgraph() {
        let set = six();
        // Reverse the global ids.
        let rev: Vec<f32> = set.features().iter().rev().copied().collect();
        let labels: Vec<i64> = set.labels().iter().rev().map(|&l| l as i64).collect();
        let flipped = EmbeddingSet::from_raw(rev, 1, &labels, "rev").unwrap();
        let map = |i: usize| 5 - i;
        let a = build_subgraph(&set, &set, 2, &[1, 3], 2, 2, true).unwrap();
        let b = build_subgraph(&flipped, &flipped, map(2), &[map(1), map(3)], 2, 2, true).unwrap();
        let mut da: Vec<(u32, i64)> = a.nodes.iter().map(|&n| (set.label(n), (set.distance(n, 2) * 1e6) as i64)).collect();
        let mut db: Vec<(u32, i64)> = b
            .nodes
            .iter()
            .map(|&n| (flipped.label(n), (flipped.distance(n, map(2)) * 1e6) as i64))
            .collect();
        da.sort_unstable();
        db.sort_unstable();
        assert_eq!(da, db);
    }

    #[test]
    fn debug_dump_has_edges() {
        let set = six();
        let sg = build_subgraph(&set, &set, 2, &[1, 3], 2, 2, true).unwrap();
        let v = sg.to_debug_json(&set);
        assert_eq!(v["edges"].as_array().unwrap().len(), 8);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 4);
    }
}
