//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

pub mod oracles;

use linkgcn::data::{generate_synthetic, SyntheticSpec};
use linkgcn::EmbeddingSet;

/// The imbalanced reference set: 5 identities of 100 samples and 45 of 3,
/// 16 dimensions.
pub fn imbalanced_spec() -> SyntheticSpec {
    let mut sizes = vec![100; 5];
    sizes.extend([3; 45]);
    SyntheticSpec {
        class_sizes: sizes,
        dim: 16,
        spread: 0.31,
        separation: 1.0,
        seed: 7,
        sample_seed: None,
        name: "imbalanced".into(),
    }
}

/// Balanced held-out draw from the same identities as [`imbalanced_spec`].
pub fn held_out_spec() -> SyntheticSpec {
    SyntheticSpec {
        class_sizes: vec![10; 50],
        sample_seed: Some(1007),
        name: "held-out".into(),
        ..imbalanced_spec()
    }
}

pub fn small_set(seed: u64) -> EmbeddingSet {
    generate_synthetic(&SyntheticSpec {
        class_sizes: vec![12, 12, 4, 4, 3, 3],
        dim: 6,
        spread: 0.15,
        separation: 1.0,
        seed,
        sample_seed: None,
        name: "small".into(),
    })
    .unwrap()
}

use linkgcn::knn::knn;
use linkgcn::loss::{LossConfig, LossKind};
use linkgcn::subgraph::build_subgraph;
use linkgcn::GcnParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-7;

/// Random logits, labels and focal settings for one loss check.
pub fn random_loss_instance(rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Vec<bool>, LossConfig) {
    let n = rng.gen_range(1..12);
    let logits = (0..n).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
    let labels = (0..n).map(|_| rng.gen()).collect();
    let cfg = LossConfig {
        kind: LossKind::CrossEntropy,
        focal_alpha_pos: rng.gen_range(0.1..0.9),
        focal_gamma: rng.gen_range(0.0..4.0),
    };
    (logits, labels, cfg)
}

/// Max relative error between a loss's analytic logit gradient and
/// central differences.
pub fn loss_fd_error(kind: LossKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (logits, labels, mut cfg) = random_loss_instance(&mut rng);
    cfg.kind = kind;
    let analytic: Vec<f64> = cfg.evaluate(&logits, &labels).unwrap().grad.concat();
    let flat: Vec<f64> = logits.concat();
    let numeric = oracles::oracle_grad(
        |x| {
            let z: Vec<[f64; 2]> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
            cfg.evaluate(&z, &labels).unwrap().value
        },
        &flat,
        FD_EPS,
    );
    oracles::max_rel_error(&analytic, &numeric, FD_FLOOR)
}

/// Max relative error of the parameter gradient of a two-layer GCN under
/// cross-entropy on a random small subgraph.
pub fn gcn_fd_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = small_set(seed);
    let pivot = rng.gen_range(0..set.len());
    let one_hop: Vec<usize> = knn(&set, pivot, rng.gen_range(2..6)).unwrap().indices().collect();
    let sg = build_subgraph(&set, &set, pivot, &one_hop, 2, 3, true).unwrap();
    let labels = sg.link_labels.clone().unwrap();
    let mut params = GcnParams::init(set.dim(), &[5, 4], seed).unwrap();
    let loss = LossConfig::new(LossKind::CrossEntropy);

    let trace = params.forward(&sg).unwrap();
    let out = loss.evaluate(&trace.logits, &labels).unwrap();
    let analytic = params.backward(&trace, &out.grad).unwrap().to_flat();
    let theta = params.to_flat();
    let numeric = oracles::oracle_grad(
        |x| {
            params.set_flat(x).unwrap();
            let t = params.forward(&sg).unwrap();
            loss.evaluate(&t.logits, &labels).unwrap().value
        },
        &theta,
        FD_EPS,
    );
    oracles::max_rel_error(&analytic, &numeric, FD_FLOOR)
}
