//! 1-hop selection from the eKNN candidate pool.
//!
//! Three strategies are supported:
//!
//! * **baseline**: the `k` nearest candidates, no expansion;
//! * **balanced resample**: `k/2` same-identity and `k/2` different-identity
//!   picks, under-sampling the surplus class uniformly and duplicating
//!   members of the deficit class;
//! * **RIWS** (reverse-imbalance weighted sampling): every candidate gets a
//!   weight inversely proportional to the size of its class within the pool,
//!   each class carrying half of the total mass. By default `k` independent
//!   draws are made, so a candidate may appear more than once; the
//!   [`RiwsDraw::Distinct`] variant draws without replacement instead.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{ExpansionConfig, KnnIndex, NeighborList};

/// Per-candidate selection probabilities for one pivot.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateWeights {
    pub pivot: usize,
    pub candidates: Vec<usize>,
    pub weights: Vec<f64>,
    pub positive_count: usize,
    pub negative_count: usize,
    /// Pool held a single class; weights fell back to uniform.
    pub degenerate: bool,
}

/// Reverse-imbalance weights over a candidate pool.
///
/// A same-identity candidate gets `1 / (2·N_same)`, a different-identity one
/// `1 / (2·N_diff)`. With only one class present the weights are uniform and
/// `degenerate` is set.
pub fn riws_weights(candidates: &NeighborList, labels: &[u32], pivot_label: u32) -> Result<CandidateWeights> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let same: Vec<bool> = candidates.indices().map(|j| labels[j] == pivot_label).collect();
    let positive_count = same.iter().filter(|&&s| s).count();
    let negative_count = same.len() - positive_count;
    let degenerate = positive_count == 0 || negative_count == 0;
    let weights = if degenerate {
        vec![1.0 / same.len() as f64; same.len()]
    } else {
        let wp = 0.5 / positive_count as f64;
        let wn = 0.5 / negative_count as f64;
        same.iter().map(|&s| if s { wp } else { wn }).collect()
    };
    Ok(CandidateWeights {
        pivot: candidates.pivot,
        candidates: candidates.indices().collect(),
        weights,
        positive_count,
        negative_count,
        degenerate,
    })
}

/// Draws `k` distinct candidates by repeated draw, remove and renormalize.
/// Returns the whole pool (in pool order) when it holds at most `k` nodes.
pub fn sample_one_hop<R: Rng + ?Sized>(weights: &CandidateWeights, k: usize, rng: &mut R) -> Vec<usize> {
    let n = weights.candidates.len();
    if n <= k {
        return weights.candidates.clone();
    }
    let mut remaining: Vec<(usize, f64)> = weights
        .candidates
        .iter()
        .copied()
        .zip(weights.weights.iter().copied())
        .collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().map(|&(_, w)| w).sum();
        let slot = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut slot = remaining.len() - 1;
            for (i, &(_, w)) in remaining.iter().enumerate() {
                acc += w;
                if target < acc {
                    slot = i;
                    break;
                }
            }
            // Rounding can leave the scan on a zero-weight tail entry.
            while remaining[slot].1 == 0.0 && slot > 0 {
                slot -= 1;
            }
            slot
        } else {
            rng.gen_range(0..remaining.len())
        };
        picked.push(remaining.remove(slot).0);
    }
    picked
}

/// `k` independent draws from the candidate weights. Every draw has exactly
/// the weights as its marginal, so duplicates are possible.
pub fn sample_one_hop_iid<R: Rng + ?Sized>(weights: &CandidateWeights, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(&weights.weights).map_err(|_| Error::EmptyPool)?;
    Ok((0..k).map(|_| weights.candidates[dist.sample(rng)]).collect())
}

/// The first `k` candidates of a distance-ordered pool.
pub fn baseline_select(candidates: &NeighborList, k: usize) -> Vec<usize> {
    candidates.indices().take(k).collect()
}

/// Result of balanced re-sampling. `nodes` may hold duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resampled {
    pub nodes: Vec<usize>,
    pub degenerate: bool,
}

fn pick_half<R: Rng + ?Sized>(members: &[usize], half: usize, rng: &mut R) -> Vec<usize> {
    if members.len() >= half {
        let mut pos = index::sample(rng, members.len(), half).into_vec();
        pos.sort_unstable();
        pos.into_iter().map(|p| members[p]).collect()
    } else {
        let mut out = members.to_vec();
        out.extend((members.len()..half).map(|_| members[rng.gen_range(0..members.len())]));
        out
    }
}

/// `k/2` same-identity plus `k/2` different-identity picks. A single-class
/// pool falls back to the `k` nearest with `degenerate` set.
pub fn resample_balanced<R: Rng + ?Sized>(
    candidates: &NeighborList,
    labels: &[u32],
    pivot_label: u32,
    k: usize,
    rng: &mut R,
) -> Result<Resampled> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    if k == 0 || k % 2 != 0 {
        return Err(Error::Config(format!("balanced resampling needs an even k, got {k}")));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = candidates.indices().partition(|&j| labels[j] == pivot_label);
    if pos.is_empty() || neg.is_empty() {
        return Ok(Resampled {
            nodes: baseline_select(candidates, k),
            degenerate: true,
        });
    }
    let half = k / 2;
    let mut nodes = pick_half(&pos, half, rng);
    nodes.extend(pick_half(&neg, half, rng));
    Ok(Resampled {
        nodes,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    BaselineTopK,
    BalancedResample,
    Riws,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::BaselineTopK => "baseline",
            StrategyKind::BalancedResample => "resample",
            StrategyKind::Riws => "riws",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "baseline_top_k" | "topk" | "l-gcn" => Ok(StrategyKind::BaselineTopK),
            "resample" | "balanced_resample" | "rs" => Ok(StrategyKind::BalancedResample),
            "riws" => Ok(StrategyKind::Riws),
            other => Err(Error::Config(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

/// How RIWS turns weights into `k` 1-hop nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiwsDraw {
    /// Independent draws; a node may be picked repeatedly.
    #[default]
    Independent,
    /// Draw, remove and renormalize.
    Distinct,
}

impl FromStr for RiwsDraw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independent" | "iid" => Ok(RiwsDraw::Independent),
            "distinct" => Ok(RiwsDraw::Distinct),
            other => Err(Error::Config(format!("unknown RIWS draw mode {other:?}"))),
        }
    }
}

/// A sampling strategy bound to its expansion settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub draw: RiwsDraw,
}

/// 1-hop nodes chosen for one pivot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHop {
    pub nodes: Vec<usize>,
    pub single_class_pool: bool,
    pub clamped: bool,
}

impl Strategy {
    pub fn new(kind: StrategyKind, expansion: ExpansionConfig) -> Self {
        Self {
            kind,
            expansion,
            draw: RiwsDraw::default(),
        }
    }

    pub fn with_draw(mut self, draw: RiwsDraw) -> Self {
        self.draw = draw;
        self
    }

    /// Candidate pool size actually used: the baseline never expands.
    pub fn pool_size(&self) -> usize {
        match self.kind {
            StrategyKind::BaselineTopK => self.expansion.k,
            _ => self.expansion.pool_size(),
        }
    }

    pub fn select<R: Rng + ?Sized>(
        &self,
        index: &KnnIndex,
        labels: &[u32],
        pivot: usize,
        rng: &mut R,
    ) -> Result<OneHop> {
        self.expansion.validate()?;
        let k = self.expansion.k;
        let pool = index.knn(pivot, self.pool_size())?;
        let pivot_label = labels[pivot];
        let (nodes, single_class_pool) = match self.kind {
            StrategyKind::BaselineTopK => (baseline_select(&pool, k), false),
            StrategyKind::BalancedResample => {
                let r = resample_balanced(&pool, labels, pivot_label, k, rng)?;
                (r.nodes, r.degenerate)
            }
            StrategyKind::Riws => {
                let w = riws_weights(&pool, labels, pivot_label)?;
                let nodes = match self.draw {
                    RiwsDraw::Independent => sample_one_hop_iid(&w, k, rng)?,
                    RiwsDraw::Distinct => sample_one_hop(&w, k, rng),
                };
                (nodes, w.degenerate)
            }
        };
        Ok(OneHop {
            clamped: pool.clamped || nodes.len() < k,
            nodes,
            single_class_pool,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Pool over nodes 0..n where node j is a positive iff `pos[j]`.
    fn pool(pos: &[bool]) -> (NeighborList, Vec<u32>) {
        let n = pos.len();
        let neighbors = (1..=n).map(|j| (j, j as f64)).collect();
        let mut labels = vec![7u32];
        labels.extend(pos.iter().map(|&p| if p { 7 } else { 3 }));
        (
            NeighborList {
                pivot: 0,
                neighbors,
                k_requested: n,
                clamped: false,
            },
            labels,
        )
    }

    #[test]
    fn riws_weights_ten_and_five() {
        let mut pos = vec![true; 10];
        pos.extend([false; 5]);
        let (nl, labels) = pool(&pos);
        let w = riws_weights(&nl, &labels, 7).unwrap();
        for (i, &wt) in w.weights.iter().enumerate() {
            let expect = if i < 10 { 0.05 } else { 0.1 };
            assert!((wt - expect).abs() < 1e-15);
        }
        assert_eq!((w.positive_count, w.negative_count), (10, 5));
        assert!(!w.degenerate);
    }

    #[test]
    fn riws_one_each() {
        let (nl, labels) = pool(&[true, false]);
        assert_eq!(riws_weights(&nl, &labels, 7).unwrap().weights, vec![0.5, 0.5]);
    }

    #[test]
    fn riws_single_class_is_uniform() {
        let (nl, labels) = pool(&[true; 15]);
        let w = riws_weights(&nl, &labels, 7).unwrap();
        assert!(w.degenerate);
        assert!(w.weights.iter().all(|&x| (x - 1.0 / 15.0).abs() < 1e-15));
    }

    #[test]
    fn riws_empty_pool() {
        let (mut nl, labels) = pool(&[true]);
        nl.neighbors.clear();
        assert!(matches!(riws_weights(&nl, &labels, 7), Err(Error::EmptyPool)));
    }

    #[test]
    fn sample_single_and_full_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (nl, labels) = pool(&[true]);
        let w = riws_weights(&nl, &labels, 7).unwrap();
        assert_eq!(sample_one_hop(&w, 1, &mut rng), vec![1]);

        let (nl, labels) = pool(&[true, false, true, false, false]);
        let w = riws_weights(&nl, &labels, 7).unwrap();
        let mut got = sample_one_hop(&w, 5, &mut rng);
        got.sort_unstable();
        assert_eq!(got, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_draw_frequency_matches_weight() {
        let w = CandidateWeights {
            pivot: 0,
            candidates: vec![1, 2, 3],
            weights: vec![0.5, 0.25, 0.25],
            positive_count: 1,
            negative_count: 2,
            degenerate: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let hits = (0..draws).filter(|_| sample_one_hop(&w, 1, &mut rng)[0] == 1).count();
        let freq = hits as f64 / draws as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");
    }

    #[test]
    fn resample_under_samples_surplus() {
        let mut pos = vec![true; 10];
        pos.extend([false; 5]);
        let (nl, labels) = pool(&pos);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = resample_balanced(&nl, &labels, 7, 10, &mut rng).unwrap();
        let mut neg: Vec<usize> = r.nodes.iter().copied().filter(|&j| labels[j] != 7).collect();
        neg.sort_unstable();
        assert_eq!(neg, vec![11, 12, 13, 14, 15]);
        let mut p: Vec<usize> = r.nodes.iter().copied().filter(|&j| labels[j] == 7).collect();
        p.sort_unstable();
        p.dedup();
        assert_eq!(p.len(), 5);
    }

    #[test]
    fn resample_duplicates_deficit() {
        let mut pos = vec![true; 10];
        pos.extend([false; 2]);
        let (nl, labels) = pool(&pos);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = resample_balanced(&nl, &labels, 7, 10, &mut rng).unwrap();
        let neg: Vec<usize> = r.nodes.iter().copied().filter(|&j| labels[j] != 7).collect();
        assert_eq!(neg.len(), 5);
        assert!(neg.contains(&11) && neg.contains(&12));
        assert!(neg.iter().all(|&j| j == 11 || j == 12));
        assert_eq!(r.nodes.len(), 10);
    }

    #[test]
    fn resample_single_class_falls_back() {
        let (nl, labels) = pool(&[true; 15]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = resample_balanced(&nl, &labels, 7, 10, &mut rng).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.nodes, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn resample_rejects_odd_k() {
        let (nl, labels) = pool(&[true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(resample_balanced(&nl, &labels, 7, 3, &mut rng).is_err());
    }

    #[test]
    fn baseline_takes_nearest() {
        let (nl, _) = pool(&[true; 15]);
        assert_eq!(baseline_select(&nl, 10), (1..=10).collect::<Vec<_>>());
        assert_eq!(baseline_select(&nl.prefix(10), 10).len(), 10);
    }

    #[test]
    fn riws_gives_diverse_ratios() {
        let mut pos = vec![true; 10];
        pos.extend([false; 10]);
        let (nl, labels) = pool(&pos);
        let w = riws_weights(&nl, &labels, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ratios: std::collections::BTreeSet<usize> = (0..200)
            .map(|_| sample_one_hop(&w, 10, &mut rng).iter().filter(|&&j| labels[j] == 7).count())
            .collect();
        assert!(ratios.len() >= 2, "{ratios:?}");
    }

    #[test]
    fn iid_draws_follow_weights() {
        let w = CandidateWeights {
            pivot: 0,
            candidates: vec![1, 2, 3],
            weights: vec![0.5, 0.25, 0.25],
            positive_count: 1,
            negative_count: 2,
            degenerate: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let got = sample_one_hop_iid(&w, 100_000, &mut rng).unwrap();
        let freq = got.iter().filter(|&&j| j == 1).count() as f64 / got.len() as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");
        assert_eq!(sample_one_hop_iid(&w, 3, &mut rng).unwrap().len(), 3);
    }

    #[test]
    fn draw_mode_parses() {
        assert_eq!("iid".parse::<RiwsDraw>().unwrap(), RiwsDraw::Independent);
        assert_eq!("Distinct".parse::<RiwsDraw>().unwrap(), RiwsDraw::Distinct);
        assert!("x".parse::<RiwsDraw>().is_err());
    }

    proptest! {
        #[test]
        fn riws_class_mass_is_half(pos in prop::collection::vec(any::<bool>(), 2..40)) {
            prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
            let (nl, labels) = pool(&pos);
            let w = riws_weights(&nl, &labels, 7).unwrap();
            let sp: f64 = w.weights.iter().zip(&pos).filter(|(_, &p)| p).map(|(w, _)| w).sum();
            let sn: f64 = w.weights.iter().zip(&pos).filter(|(_, &p)| !p).map(|(w, _)| w).sum();
            prop_assert!((sp - 0.5).abs() <= 1e-12);
            prop_assert!((sn - 0.5).abs() <= 1e-12);
        }

        #[test]
        fn one_hop_draws_are_distinct(pos in prop::collection::vec(any::<bool>(), 1..30), k in 1usize..20, seed: u64) {
            let (nl, labels) = pool(&pos);
            let w = riws_weights(&nl, &labels, 7).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut got = sample_one_hop(&w, k, &mut rng);
            prop_assert_eq!(got.len(), k.min(pos.len()));
            got.sort_unstable();
            got.dedup();
            prop_assert_eq!(got.len(), k.min(pos.len()));
        }
    }
}
