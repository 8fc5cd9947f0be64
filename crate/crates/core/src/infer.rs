//! Test-time edge scoring and linkage merging.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::{ExpansionConfig, KnnIndex};
use crate::metrics::{self, BCubed};
use crate::model::{link_probability, GcnParams};
use crate::rng;
use crate::sampling::{Strategy, StrategyKind};
use crate::subgraph::build_subgraph;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeScore {
    pub pivot: usize,
    pub neighbor: usize,
    /// Link probability in `[0, 1]`.
    pub score: f64,
    pub label: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeScoreSet {
    pub edges: Vec<EdgeScore>,
    /// Pivots whose neighbourhood or edge degree had to be clamped.
    pub clamps: usize,
}

impl EdgeScoreSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Micro-averaged AP over every scored pivot-neighbour pair.
    pub fn average_precision(&self) -> Result<f64> {
        let scores: Vec<f64> = self.edges.iter().map(|e| e.score).collect();
        let labels = self
            .edges
            .iter()
            .map(|e| e.label.ok_or_else(|| Error::Config("edge scores carry no ground-truth labels".into())))
            .collect::<Result<Vec<bool>>>()?;
        metrics::average_precision(&scores, &labels)
    }

    /// Share of scored pairs that are true links.
    pub fn positive_rate(&self) -> f64 {
        let pos = self.edges.iter().filter(|e| e.label == Some(true)).count();
        pos as f64 / self.edges.len().max(1) as f64
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("pivot\tneighbor\tscore\tlabel\n");
        for e in &self.edges {
            let label = match e.label {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            out.push_str(&format!("{}\t{}\t{}\t{label}\n", e.pivot, e.neighbor, e.score));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoringConfig {
    pub k: usize,
    pub k2: usize,
    pub r: usize,
    /// Replaces the deterministic top-k 1-hop selection with a stochastic
    /// strategy, drawn from streams keyed by `(seed, pivot)`.
    pub sampling: Option<(Strategy, u64)>,
}

impl ScoringConfig {
    pub fn top_k(k: usize, k2: usize, r: usize) -> Self {
        Self {
            k,
            k2,
            r,
            sampling: None,
        }
    }

    fn strategy(&self) -> Strategy {
        match self.sampling {
            Some((s, _)) => s,
            None => Strategy::new(
                StrategyKind::BaselineTopK,
                ExpansionConfig {
                    k: self.k,
                    gamma: 1.0,
                    k2: self.k2,
                },
            ),
        }
    }
}

/// Scores every pivot's 1-hop neighbours. Ground-truth bits are attached
/// from the set's labels.
pub fn score_edges(set: &EmbeddingSet, params: &GcnParams, cfg: &ScoringConfig) -> Result<EdgeScoreSet> {
    params.check_input_dim(set.dim())?;
    let index = KnnIndex::build(set, cfg.strategy().pool_size().max(cfg.k2))?;
    let pivots: Vec<usize> = (0..set.len()).collect();
    score_pivots(set, &index, params, &pivots, cfg)
}

/// Like [`score_edges`] for a subset of pivots over a prebuilt index.
pub fn score_pivots(
    set: &EmbeddingSet,
    index: &KnnIndex,
    params: &GcnParams,
    pivots: &[usize],
    cfg: &ScoringConfig,
) -> Result<EdgeScoreSet> {
    params.check_input_dim(set.dim())?;
    let strategy = cfg.strategy();
    let seed = cfg.sampling.map_or(0, |(_, s)| s);
    let per_pivot = pivots
        .par_iter()
        .map(|&pivot| -> Result<(Vec<EdgeScore>, bool)> {
            let mut rng = rng::stream(seed, &[pivot as u64]);
            let hop = strategy.select(index, set.labels(), pivot, &mut rng)?;
            let mut nodes = hop.nodes;
            let mut seen = std::collections::HashSet::new();
            nodes.retain(|n| seen.insert(*n));
            let sg = build_subgraph(set, index, pivot, &nodes, cfg.k2, cfg.r, true)?;
            let trace = params.forward(&sg)?;
            let labels = sg.link_labels.as_ref().expect("labels requested");
            let edges = nodes
                .iter()
                .zip(&trace.logits)
                .zip(labels)
                .map(|((&neighbor, &z), &label)| EdgeScore {
                    pivot,
                    neighbor,
                    score: link_probability(z),
                    label: Some(label),
                })
                .collect();
            Ok((edges, hop.clamped || sg.degree_clamped))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = EdgeScoreSet::default();
    for (edges, clamped) in per_pivot {
        out.edges.extend(edges);
        out.clamps += usize::from(clamped);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            std::cmp::Ordering::Less => self.parent[a] = b,
            std::cmp::Ordering::Greater => self.parent[b] = a,
            std::cmp::Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] += 1;
            }
        }
    }
}

/// Dense cluster id per node; ids are numbered by first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub cluster_count: usize,
}

impl Clustering {
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let res = (|| {
            writeln!(w, "node\tcluster")?;
            for (i, c) in self.assignments.iter().enumerate() {
                writeln!(w, "{i}\t{c}")?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }
}

/// Connected components of the undirected graph of edges scoring at least
/// `threshold`. Nodes without such an edge are singletons.
pub fn merge_links(scores: &EdgeScoreSet, threshold: f64, n: usize) -> Result<Clustering> {
    let mut ds = DisjointSet::new(n);
    for e in &scores.edges {
        let bound = e.pivot.max(e.neighbor);
        if bound >= n {
            return Err(Error::OutOfRange { index: bound, len: n });
        }
        if e.score >= threshold {
            ds.union(e.pivot, e.neighbor);
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut assignments = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let root = ds.find(i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        assignments.push(ids[root]);
    }
    Ok(Clustering {
        assignments,
        cluster_count: next,
    })
}

/// Threshold grid `0, step, 2·step, …, 1`.
pub fn tau_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("threshold step must lie in (0, 1], got {step}")));
    }
    let count = (1.0 / step).round() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| (i as f64 * step).min(1.0)).collect();
    grid.dedup();
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauPoint {
    pub tau: f64,
    pub bcubed: BCubed,
    pub clusters: usize,
}

/// BCubed at every threshold; ties on F resolve to the lowest threshold.
pub fn sweep_threshold(scores: &EdgeScoreSet, truth: &[u32], taus: &[f64]) -> Result<(Vec<TauPoint>, TauPoint)> {
    let curve = taus
        .iter()
        .map(|&tau| {
            let c = merge_links(scores, tau, truth.len())?;
            Ok(TauPoint {
                tau,
                bcubed: metrics::bcubed(&c.assignments, truth)?,
                clusters: c.cluster_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = *curve
        .iter()
        .fold(None::<&TauPoint>, |best, p| match best {
            Some(b) if b.bcubed.f >= p.bcubed.f => Some(b),
            _ => Some(p),
        })
        .ok_or_else(|| Error::Config("empty threshold grid".into()))?;
    Ok((curve, best))
}
