//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use linkgcn::data::generate_synthetic;
use linkgcn::experiment::{cmd_matrix, cmd_sweep_gamma, DataSource, DatasetEntry, ExperimentSpec, RunConfig};
use linkgcn::knn::{ExpansionConfig, KnnIndex, NeighborList};
use linkgcn::loss::{ce_loss, class_balance_loss, focal_loss, LossConfig, LossKind};
use linkgcn::metrics::{average_precision, bcubed};
use linkgcn::sampling::{riws_weights, Strategy, StrategyKind};
use linkgcn::subgraph::build_subgraph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn riws_weight_invariant() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut pools = 0;
    while pools < 10_000 {
        let n = rng.gen_range(2..=64);
        let labels: Vec<u32> = std::iter::once(0).chain((0..n).map(|_| rng.gen_range(0..4))).collect();
        if !labels[1..].contains(&0) || labels[1..].iter().all(|&l| l == 0) {
            continue;
        }
        let pool = NeighborList {
            pivot: 0,
            neighbors: (1..=n).map(|j| (j, j as f64)).collect(),
            k_requested: n,
            clamped: false,
        };
        let w = riws_weights(&pool, &labels, 0).unwrap();
        let (mut same, mut diff) = (0.0, 0.0);
        for (&c, &x) in w.candidates.iter().zip(&w.weights) {
            if labels[c] == 0 {
                same += x;
            } else {
                diff += x;
            }
        }
        worst = worst.max((same - 0.5).abs()).max((diff - 0.5).abs());
        pools += 1;
    }
    let t = started.elapsed();
    check(
        worst <= 1e-12 && within(t, 5.0),
        format!("max |mass - 0.5| = {worst:.2e} over {pools} pools in {:.2} s", t.as_secs_f64()),
    )
}

/// Same-identity share of the 1-hop nodes over `draws` sampled subgraphs.
fn same_class_fraction(kind: StrategyKind, gamma: f64, draws: usize) -> f64 {
    let set = generate_synthetic(&common::imbalanced_spec()).unwrap();
    let exp = ExpansionConfig { k: 10, gamma, k2: 5 };
    let strategy = Strategy::new(kind, exp);
    let index = KnnIndex::build(&set, strategy.pool_size().max(exp.k2)).unwrap();
    let mut pick = linkgcn::rng::stream(2, &[]);
    let (mut same, mut total) = (0usize, 0usize);
    for t in 0..draws {
        let pivot = pick.gen_range(0..set.len());
        let mut rng = linkgcn::rng::stream(3, &[t as u64]);
        let hop = strategy.select(&index, set.labels(), pivot, &mut rng).unwrap();
        let sg = build_subgraph(&set, &index, pivot, &hop.nodes, exp.k2, 10, true).unwrap();
        let labels = sg.link_labels.unwrap();
        same += labels.iter().filter(|&&l| l).count();
        total += labels.len();
    }
    same as f64 / total as f64
}

fn neighborhood_balance() -> Outcome {
    let started = Instant::now();
    let riws = same_class_fraction(StrategyKind::Riws, 2.0, 10_000);
    let base = same_class_fraction(StrategyKind::BaselineTopK, 1.0, 10_000);
    let t = started.elapsed();
    check(
        (0.45..=0.55).contains(&riws) && (base - 0.5).abs() > 0.1 && within(t, 30.0),
        format!("RIWS {riws:.4}, baseline {base:.4} in {:.2} s", t.as_secs_f64()),
    )
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for kind in [LossKind::CrossEntropy, LossKind::ClassBalance, LossKind::Focal] {
        let e = (0..20).map(|s| common::loss_fd_error(kind, 100 + s)).fold(0.0, f64::max);
        parts.push(format!("{kind} {e:.1e}"));
        worst = worst.max(e);
    }
    let e = (0..20).map(|s| common::gcn_fd_error(200 + s)).fold(0.0, f64::max);
    parts.push(format!("gcn {e:.1e}"));
    worst = worst.max(e);
    let t = started.elapsed();
    check(
        worst < 1e-4 && within(t, 60.0),
        format!("max relative error {} (20 instances each) in {:.2} s", parts.join(", "), t.as_secs_f64()),
    )
}

fn focal_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = LossConfig {
        kind: LossKind::Focal,
        focal_alpha_pos: 0.5,
        focal_gamma: 0.0,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (logits, labels, _) = common::random_loss_instance(&mut rng);
        let f = focal_loss(&logits, &labels, &cfg).unwrap().value;
        let c = ce_loss(&logits, &labels).unwrap().value;
        worst = worst.max((f - 0.5 * c).abs());
    }
    check(worst <= 1e-12, format!("max |FL - CE/2| = {worst:.2e} over 1000 batches"))
}

fn class_balance_duplication() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (mut logits, mut labels, _) = common::random_loss_instance(&mut rng);
        let before = class_balance_loss(&logits, &labels).unwrap().value;
        let dup: Vec<([f64; 2], bool)> = logits.iter().zip(&labels).filter(|(_, &y)| y).map(|(&z, &y)| (z, y)).collect();
        for (z, y) in dup {
            logits.push(z);
            labels.push(y);
        }
        let after = class_balance_loss(&logits, &labels).unwrap().value;
        worst = worst.max((after - before).abs());
    }
    check(worst < 1e-12, format!("max change {worst:.2e} over 1000 batches"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ap_cases = 0;
    let mut ap_mismatch = 0;
    for n in 1..=10usize {
        for mask in 1u32..(1 << n) {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen::<f64>() * 0.5).collect();
            scores.shuffle(&mut rng);
            let got = average_precision(&scores, &labels).unwrap();
            ap_mismatch += usize::from(Some(got) != common::oracles::oracle_ap(&scores, &labels));
            ap_cases += 1;
        }
    }
    let mut bc_cases = 0;
    let mut bc_worst: f64 = 0.0;
    for n in 1..=8 {
        for pred in common::oracles::all_partitions(n) {
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let got = bcubed(&pred, &truth).unwrap();
            let (p, r, f) = common::oracles::oracle_bcubed(&pred, &truth);
            bc_worst = bc_worst
                .max((got.precision - p).abs())
                .max((got.recall - r).abs())
                .max((got.f - f).abs());
            bc_cases += 1;
        }
    }
    check(
        ap_mismatch == 0 && bc_cases >= 1000 && bc_worst < 1e-12,
        format!("AP {ap_mismatch} mismatches in {ap_cases} patterns; BCubed max dev {bc_worst:.2e} over {bc_cases} partitions"),
    )
}

fn reference_spec(methods: &[&str]) -> ExperimentSpec {
    let mut config = RunConfig::default();
    config.train.monitor_pivots = 0;
    ExperimentSpec {
        datasets: vec![DatasetEntry {
            name: None,
            train: DataSource::Synthetic(common::imbalanced_spec()),
            test: Some(DataSource::Synthetic(common::held_out_spec())),
        }],
        subsets: Vec::new(),
        subset_seed: 0,
        methods: methods.iter().map(|m| m.parse().unwrap()).collect(),
        seeds: (1..=5).collect(),
        config,
        out: None,
    }
}

fn directional_reproduction() -> Outcome {
    let started = Instant::now();
    let report = cmd_matrix(&reference_spec(&["L-GCN", "CB", "RIWS"]), None, false).map_err(|e| e.to_string())?;
    let t = started.elapsed();
    let avg = |m: &str| report.summary_for(m).and_then(|s| s.avg_ap).unwrap_or(f64::NAN);
    let (base, cb, riws) = (avg("L-GCN"), avg("CB"), avg("RIWS"));
    check(
        report.failed == 0 && riws > base && cb > base && within(t, 600.0),
        format!(
            "mean AP over 5 seeds: L-GCN {base:.4}, CB {cb:.4}, RIWS {riws:.4} in {:.1} s",
            t.as_secs_f64()
        ),
    )
}

fn gamma_sweep() -> Outcome {
    let gammas = [1.0, 1.2, 1.5, 2.0];
    let report = cmd_sweep_gamma(&reference_spec(&["L-GCN"]), &gammas, None, false).map_err(|e| e.to_string())?;
    let complete = report.rows.len() == 8 && report.rows.iter().all(|r| r.ap_mean.is_some() && r.cells_ok == 5);
    let curve: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}@{}={:.4}", r.method, r.gamma, r.ap_mean.unwrap_or(f64::NAN)))
        .collect();
    let at = |g: f64| report.row("RIWS", g).and_then(|r| r.ap_mean).unwrap_or(f64::NAN);
    check(
        complete && at(2.0) >= at(1.0),
        format!("{}; RIWS(2.0) {:.4} vs RIWS(1.0) {:.4}", curve.join(" "), at(2.0), at(1.0)),
    )
}

fn linkgcn(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_linkgcn"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

/// Synthesizes a small set and a run config in `dir`; returns the manifest.
fn cli_fixture(dir: &Path) -> Result<String, String> {
    let spec = serde_json::json!({
        "class_sizes": [40, 40, 30, 4, 4, 4, 3, 3, 3, 3],
        "dim": 12, "spread": 0.2, "separation": 1.0, "seed": 21, "name": "fixture"
    });
    fs::write(dir.join("synth.json"), spec.to_string()).map_err(|e| e.to_string())?;
    let run = serde_json::json!({
        "train": {"strategy": "riws", "expansion": {"k": 8, "gamma": 2.0, "k2": 4}, "r": 6, "epochs": 4, "hidden": [32, 32], "seed": 9},
        "eval": {"k": 8, "k2": 4, "r": 6}
    });
    fs::write(dir.join("run.json"), run.to_string()).map_err(|e| e.to_string())?;
    let manifest = linkgcn(dir, &["synth", "--config", "synth.json", "--out", "data"])?;
    Ok(String::from_utf8_lossy(&manifest).trim().to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let manifest = cli_fixture(d)?;
    for run in ["a", "b"] {
        linkgcn(d, &["train", "--manifest", &manifest, "--config", "run.json", "--out", run])?;
        let ckpt = format!("{run}/model.lgck");
        linkgcn(d, &["eval", "--manifest", &manifest, "--checkpoint", &ckpt, "--config", "run.json", "--out", run, "--deterministic"])?;
    }
    let read = |p: &str| fs::read(d.join(p)).map_err(|e| e.to_string());
    let same_ckpt = read("a/model.lgck")? == read("b/model.lgck")?;
    let same_report = read("a/report.json")? == read("b/report.json")?;
    check(
        same_ckpt && same_report,
        format!("checkpoints identical: {same_ckpt}, reports identical: {same_report}"),
    )
}

fn decoupled_reporting() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let manifest = cli_fixture(d)?;
    linkgcn(d, &["train", "--manifest", &manifest, "--config", "run.json", "--out", "m"])?;
    let stdout = linkgcn(d, &["eval", "--manifest", &manifest, "--checkpoint", "m/model.lgck", "--config", "run.json", "--out", "m"])?;
    let printed: Value = serde_json::from_slice(&stdout).map_err(|e| e.to_string())?;
    let written: Value = serde_json::from_slice(&fs::read(d.join("m/report.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let schema_text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/report.schema.json"))
        .map_err(|e| e.to_string())?;
    let schema: Value = serde_json::from_str(&schema_text).map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator.iter_errors(&written).map(|e| e.to_string()).collect();
    let both = written["ap"].is_number() && written["bcubed"]["f"].is_number() && written["bcubed"]["tau"].is_number();
    check(
        both && errors.is_empty() && printed == written,
        format!(
            "ap {} and bcubed f {} at tau {}; schema errors: {}",
            written["ap"],
            written["bcubed"]["f"],
            written["bcubed"]["tau"],
            if errors.is_empty() { "none".to_string() } else { errors.join("; ") }
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "RIWS weight invariant", riws_weight_invariant),
        (2, "neighbourhood balance", neighborhood_balance),
        (3, "gradient correctness", gradient_correctness),
        (4, "focal reduction", focal_reduction),
        (5, "class-balance duplication invariance", class_balance_duplication),
        (6, "metric oracles", metric_oracles),
        (7, "directional reproduction on imbalanced data", directional_reproduction),
        (8, "expansion sweep shape", gamma_sweep),
        (9, "determinism", determinism),
        (10, "decoupled reporting", decoupled_reporting),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let outcome = panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
