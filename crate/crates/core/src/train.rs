//! SGD-with-momentum trainer over freshly sampled pivot subgraphs.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::infer::{score_pivots, ScoringConfig};
use crate::knn::{ExpansionConfig, KnnIndex};
use crate::loss::{LossConfig, LossKind};
use crate::model::{GcnParams, Gradients, DEFAULT_LEAKY_SLOPE};
use crate::rng;
use crate::sampling::{RiwsDraw, Strategy, StrategyKind};
use crate::subgraph::{build_subgraph, Subgraph};

const STREAM_SHUFFLE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_MONITOR: u64 = 3;

/// Subgraphs built in parallel ahead of the sequential update loop.
const PREFETCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: StrategyKind,
    pub expansion: ExpansionConfig,
    pub riws_draw: RiwsDraw,
    /// Out-degree of every subgraph node.
    pub r: usize,
    pub loss: LossConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Subgraphs per optimizer step.
    pub batch_size: usize,
    /// Multiply the learning rate by `lr_decay` every `lr_decay_every` epochs
    /// (0 disables).
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub seed: u64,
    pub deterministic: bool,
    /// Pivots scored after each epoch for the AP trace (0 disables).
    pub monitor_pivots: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::BaselineTopK,
            expansion: ExpansionConfig::default(),
            riws_draw: RiwsDraw::default(),
            r: 10,
            loss: LossConfig::new(LossKind::CrossEntropy),
            epochs: 10,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 1,
            lr_decay_every: 0,
            lr_decay: 0.1,
            hidden: vec![64, 64],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            seed: 0,
            deterministic: true,
            monitor_pivots: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.strategy == StrategyKind::BalancedResample && self.expansion.k % 2 != 0 {
            return Err(Error::Config(format!(
                "balanced resampling needs an even k, got {}",
                self.expansion.k
            )));
        }
        self.expansion.validate()?;
        self.loss.validate()
    }

    pub fn strategy(&self) -> Strategy {
        Strategy::new(self.strategy, self.expansion).with_draw(self.riws_draw)
    }

    /// Stable 64-bit digest of the canonical JSON encoding.
    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Edge AP on the monitored pivots, when any positive link was scored.
    pub monitor_ap: Option<f64>,
    pub single_class_pools: usize,
    pub clamps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn single_class_pools(&self) -> usize {
        self.epochs.iter().map(|e| e.single_class_pools).sum()
    }

    pub fn clamps(&self) -> usize {
        self.epochs.iter().map(|e| e.clamps).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss\tap\tsingle_class_pools\tclamps\n");
        for e in &self.epochs {
            let ap = e.monitor_ap.map_or_else(|| "nan".to_string(), |v| v.to_string());
            out.push_str(&format!(
                "{}\t{}\t{ap}\t{}\t{}\n",
                e.epoch, e.mean_loss, e.single_class_pools, e.clamps
            ));
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

struct Sampled {
    subgraph: Subgraph,
    single_class_pool: bool,
    clamped: bool,
}

fn sample_subgraph(
    set: &EmbeddingSet,
    index: &KnnIndex,
    cfg: &TrainConfig,
    epoch: usize,
    pivot: usize,
) -> Result<Sampled> {
    let mut rng = rng::stream(cfg.seed, &[STREAM_SAMPLE, epoch as u64, pivot as u64]);
    let hop = cfg.strategy().select(index, set.labels(), pivot, &mut rng)?;
    let subgraph = build_subgraph(set, index, pivot, &hop.nodes, cfg.expansion.k2, cfg.r, true)?;
    Ok(Sampled {
        clamped: hop.clamped || subgraph.degree_clamped,
        single_class_pool: hop.single_class_pool,
        subgraph,
    })
}

/// Trains from scratch.
pub fn train(set: &EmbeddingSet, cfg: &TrainConfig) -> Result<(GcnParams, TrainHistory)> {
    train_with(set, cfg, |_, _, _| Ok(()))
}

/// Trains from scratch, calling `on_epoch(epoch, params, history)` after
/// every completed epoch (used for periodic checkpoints).
pub fn train_with<F>(set: &EmbeddingSet, cfg: &TrainConfig, mut on_epoch: F) -> Result<(GcnParams, TrainHistory)>
where
    F: FnMut(usize, &GcnParams, &TrainHistory) -> Result<()>,
{
    cfg.validate()?;
    let strategy = cfg.strategy();
    if strategy.pool_size() > set.len() - 1 {
        log::warn!(
            "candidate pool of {} exceeds the {} other nodes; pools will be clamped",
            strategy.pool_size(),
            set.len() - 1
        );
    }
    let index = KnnIndex::build(set, strategy.pool_size().max(cfg.expansion.k2).max(cfg.expansion.k))?;

    let mut params = GcnParams::init(set.dim(), &cfg.hidden, cfg.seed)?;
    params.leaky_slope = cfg.leaky_slope;
    params.config_hash = cfg.config_hash();
    let mut velocity = Gradients::zeros_like(&params);

    let monitor: Vec<usize> = if cfg.monitor_pivots == 0 {
        Vec::new()
    } else {
        let mut rng = rng::stream(cfg.seed, &[STREAM_MONITOR]);
        let mut m = index::sample(&mut rng, set.len(), cfg.monitor_pivots.min(set.len())).into_vec();
        m.sort_unstable();
        m
    };
    let scoring = ScoringConfig::top_k(cfg.expansion.k, cfg.expansion.k2, cfg.r);

    let mut history = TrainHistory::default();
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        if cfg.lr_decay_every > 0 && epoch > 0 && epoch % cfg.lr_decay_every == 0 {
            lr *= cfg.lr_decay;
        }
        let last_good = params.clone();
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));

        let mut stats = EpochStats {
            epoch,
            mean_loss: 0.0,
            monitor_ap: None,
            single_class_pools: 0,
            clamps: 0,
        };
        let mut loss_sum = 0.0;
        let mut acc = Gradients::zeros_like(&params);
        let mut in_batch = 0usize;

        for chunk in order.chunks(PREFETCH) {
            // Construction only depends on (seed, epoch, pivot), so the
            // parallel build is reproducible; updates consume it in order.
            let built = chunk
                .par_iter()
                .map(|&p| sample_subgraph(set, &index, cfg, epoch, p))
                .collect::<Result<Vec<_>>>()?;
            for s in built {
                stats.single_class_pools += usize::from(s.single_class_pool);
                stats.clamps += usize::from(s.clamped);
                let trace = params.forward(&s.subgraph)?;
                let labels = s.subgraph.link_labels.as_ref().expect("training subgraphs are labeled");
                let out = cfg.loss.evaluate(&trace.logits, labels)?;
                if !out.value.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        last_good: Box::new(last_good),
                    });
                }
                loss_sum += out.value;
                acc.add_assign(&params.backward(&trace, &out.grad)?);
                in_batch += 1;
                if in_batch == cfg.batch_size {
                    step(&mut params, &mut acc, &mut velocity, in_batch, lr, cfg);
                    in_batch = 0;
                }
            }
        }
        if in_batch > 0 {
            step(&mut params, &mut acc, &mut velocity, in_batch, lr, cfg);
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_good: Box::new(last_good),
            });
        }

        stats.mean_loss = loss_sum / set.len() as f64;
        if !monitor.is_empty() {
            stats.monitor_ap = score_pivots(set, &index, &params, &monitor, &scoring)?
                .average_precision()
                .ok();
        }
        log::info!(
            "epoch {epoch}: loss {:.5} ap {:?} single-class pools {}",
            stats.mean_loss,
            stats.monitor_ap,
            stats.single_class_pools
        );
        history.epochs.push(stats);
        on_epoch(epoch, &params, &history)?;
    }
    Ok((params, history))
}

fn step(params: &mut GcnParams, acc: &mut Gradients, velocity: &mut Gradients, count: usize, lr: f64, cfg: &TrainConfig) {
    acc.scale(1.0 / count as f64);
    let (mu, wd) = (cfg.momentum, cfg.weight_decay);
    params.update_with(acc, velocity, |w, g, v| {
        *v = mu * *v + g + wd * *w;
        *w -= lr * *v;
    });
    acc.scale(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![8],
            epochs: 3,
            expansion: ExpansionConfig { k: 4, gamma: 1.0, k2: 2 },
            r: 3,
            monitor_pivots: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let set = generate_synthetic(&SyntheticSpec::uniform(2, 5, 4, 0.2, 1.0, 0)).unwrap();
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        assert!(matches!(train(&set, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let set = generate_synthetic(&SyntheticSpec::uniform(3, 6, 4, 0.3, 1.0, 1)).unwrap();
        let (_, h) = train(&set, &small_cfg()).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert_eq!(h.to_tsv().lines().count(), 4);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = small_cfg();
        let b = TrainConfig { seed: 9, ..small_cfg() };
        assert_eq!(a.config_hash(), small_cfg().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn odd_k_rejected_for_resampling() {
        let cfg = TrainConfig {
            strategy: StrategyKind::BalancedResample,
            expansion: ExpansionConfig { k: 5, gamma: 1.2, k2: 2 },
            ..small_cfg()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn huge_learning_rate_diverges_with_last_good() {
        let set = generate_synthetic(&SyntheticSpec::uniform(3, 6, 4, 0.3, 1.0, 1)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            ..small_cfg()
        };
        match train(&set, &cfg) {
            Err(Error::Diverged { last_good, .. }) => assert!(last_good.is_finite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
