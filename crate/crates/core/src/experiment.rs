//! Experiment harness: named methods, run configuration, single train/eval
//! cells, the resumable method × dataset matrix and the expansion sweep.
//!
//! Every artifact is plain files: embeddings via [`crate::data`] manifests,
//! checkpoints via [`crate::model`], reports as JSON and tables as TSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, EmbeddingSet, SynthesisSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::infer::{self, Clustering, EdgeScoreSet, ScoringConfig, TauPoint};
use crate::loss::LossKind;
use crate::model::{self, GcnParams};
use crate::sampling::StrategyKind;
use crate::train::{self, TrainConfig, TrainHistory};

/// Default expansion coefficient of each strategy.
pub fn default_gamma(kind: StrategyKind) -> f64 {
    match kind {
        StrategyKind::BaselineTopK => 1.0,
        StrategyKind::BalancedResample => 1.2,
        StrategyKind::Riws => 2.0,
    }
}

/// A loss × sampling combination such as `CB+RIWS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub loss: LossKind,
    pub strategy: StrategyKind,
}

impl Method {
    pub const BASELINE: Method = Method {
        loss: LossKind::CrossEntropy,
        strategy: StrategyKind::BaselineTopK,
    };

    pub fn of(cfg: &TrainConfig) -> Self {
        Self {
            loss: cfg.loss.kind,
            strategy: cfg.strategy,
        }
    }

    /// `template` with this method's loss and strategy; `gamma` overrides the
    /// strategy's default expansion coefficient.
    pub fn configure(&self, template: &TrainConfig, gamma: Option<f64>) -> TrainConfig {
        let mut cfg = template.clone();
        cfg.loss.kind = self.loss;
        cfg.strategy = self.strategy;
        cfg.expansion.gamma = gamma.unwrap_or_else(|| default_gamma(self.strategy));
        cfg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loss = match self.loss {
            LossKind::CrossEntropy => None,
            LossKind::ClassBalance => Some("CB"),
            LossKind::Focal => Some("FL"),
        };
        let strategy = match self.strategy {
            StrategyKind::BaselineTopK => None,
            StrategyKind::BalancedResample => Some("RS"),
            StrategyKind::Riws => Some("RIWS"),
        };
        match (loss, strategy) {
            (None, None) => f.write_str("L-GCN"),
            (Some(l), None) => f.write_str(l),
            (None, Some(s)) => f.write_str(s),
            (Some(l), Some(s)) => write!(f, "{l}+{s}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = Method::BASELINE;
        let (mut saw_loss, mut saw_strategy) = (false, false);
        for part in s.split('+').map(str::trim) {
            if part.eq_ignore_ascii_case("l-gcn") || part.eq_ignore_ascii_case("lgcn") {
                continue;
            }
            if let Ok(loss) = part.parse::<LossKind>() {
                if saw_loss {
                    return Err(Error::Config(format!("method {s:?} names two losses")));
                }
                m.loss = loss;
                saw_loss = true;
            } else if let Ok(kind) = part.parse::<StrategyKind>() {
                if saw_strategy {
                    return Err(Error::Config(format!("method {s:?} names two sampling strategies")));
                }
                m.strategy = kind;
                saw_strategy = true;
            } else {
                return Err(Error::Config(format!("unknown method component {part:?} in {s:?}")));
            }
        }
        Ok(m)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Test-time graph settings and the threshold grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub k2: usize,
    pub r: usize,
    pub tau_step: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            k2: 5,
            r: 10,
            tau_step: 0.05,
        }
    }
}

impl EvalConfig {
    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig::top_k(self.k, self.k2, self.r)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Write `model-epoch{e}.lgck` every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BCubedReport {
    pub p: f64,
    pub r: f64,
    pub f: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub single_class_pools: usize,
    pub clamps: usize,
}

/// Edge AP and the best point of the BCubed threshold sweep, reported side
/// by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub ap: f64,
    pub bcubed: BCubedReport,
    pub runtime_s: f64,
    pub degeneracy: Degeneracy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvalReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub scores: EdgeScoreSet,
    pub ap: f64,
    pub curve: Vec<TauPoint>,
    pub best: TauPoint,
    /// Pivots whose scored neighbours were all links or all non-links.
    pub single_class_pools: usize,
}

pub fn evaluate(set: &EmbeddingSet, params: &GcnParams, cfg: &EvalConfig) -> Result<Evaluation> {
    let scores = infer::score_edges(set, params, &cfg.scoring())?;
    let ap = scores.average_precision()?;
    let (curve, best) = infer::sweep_threshold(&scores, set.labels(), &infer::tau_grid(cfg.tau_step)?)?;
    let mut mixed: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    for e in &scores.edges {
        let m = mixed.entry(e.pivot).or_default();
        if e.label == Some(true) {
            m.0 = true;
        } else {
            m.1 = true;
        }
    }
    let single_class_pools = mixed.values().filter(|&&(p, n)| !(p && n)).count();
    Ok(Evaluation {
        scores,
        ap,
        curve,
        best,
        single_class_pools,
    })
}

impl Evaluation {
    pub fn report(&self, dataset: &str, method: &str, seed: u64, runtime_s: f64) -> EvalReport {
        EvalReport {
            dataset: dataset.to_string(),
            method: method.to_string(),
            seed,
            ap: self.ap,
            bcubed: BCubedReport {
                p: self.best.bcubed.precision,
                r: self.best.bcubed.recall,
                f: self.best.bcubed.f,
                tau: self.best.tau,
            },
            runtime_s,
            degeneracy: Degeneracy {
                single_class_pools: self.single_class_pools,
                clamps: self.scores.clamps,
            },
            config_hash: None,
        }
    }

    pub fn write_curve(&self, path: &Path) -> Result<()> {
        let mut out = String::from("tau\tp\tr\tf\tclusters\n");
        for p in &self.curve {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                p.tau, p.bcubed.precision, p.bcubed.recall, p.bcubed.f, p.clusters
            ));
        }
        write_text(path, &out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a synthetic set and returns the manifest path `out/<name>.json`.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<PathBuf> {
    let set = data::generate_synthetic(spec)?;
    let manifest = out.join(format!("{}.json", set.name));
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    data::save_embeddings(&set, &manifest)?;
    Ok(manifest)
}

/// Writes the head/tail subset of a stored set next to `out`.
pub fn cmd_subset(manifest: &Path, spec: &SynthesisSpec, out: &Path) -> Result<PathBuf> {
    let set = data::load_manifest(manifest)?;
    let sub = data::build_imbalanced_subset(&set, spec)?;
    let path = out.join(format!("{}.json", sub.name));
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    data::save_embeddings(&sub, &path)?;
    Ok(path)
}

/// Trains on a stored set; writes `model.lgck`, `history.tsv`,
/// `config.json` and optional periodic checkpoints under `out`.
pub fn cmd_train(manifest: &Path, cfg: &RunConfig, out: &Path) -> Result<(GcnParams, TrainHistory)> {
    let set = data::load_manifest(manifest)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("config.json"), cfg)?;
    let every = cfg.checkpoint_every;
    let (params, history) = train::train_with(&set, &cfg.train, |epoch, params, history| {
        if every > 0 && (epoch + 1) % every == 0 {
            model::save_checkpoint(params, out.join(format!("model-epoch{}.lgck", epoch + 1)))?;
            history.write_tsv(&out.join("history.tsv"))?;
        }
        Ok(())
    })?;
    model::save_checkpoint(&params, out.join("model.lgck"))?;
    history.write_tsv(&out.join("history.tsv"))?;
    Ok((params, history))
}

/// Scores a stored set with a checkpoint; writes `report.json`, `edges.tsv`
/// and `tau_curve.tsv` under `out`. With `deterministic` the runtime is
/// reported as zero so repeated runs give identical reports.
pub fn cmd_eval(manifest: &Path, checkpoint: &Path, cfg: &RunConfig, out: &Path, deterministic: bool) -> Result<EvalReport> {
    let started = Instant::now();
    let set = data::load_manifest(manifest)?;
    let params = model::load_checkpoint(checkpoint)?;
    let eval = evaluate(&set, &params, &cfg.eval)?;
    let runtime = if deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
    let mut report = eval.report(&set.name, &Method::of(&cfg.train).to_string(), cfg.train.seed, runtime);
    report.config_hash = Some(format!("{:016x}", params.config_hash));
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.write(&out.join("report.json"))?;
    eval.scores.write_tsv(&out.join("edges.tsv"))?;
    eval.write_curve(&out.join("tau_curve.tsv"))?;
    Ok(report)
}

/// Merges links at `tau` (the BCubed-best threshold when `None`); writes
/// `clusters.tsv` under `out`.
pub fn cmd_cluster(
    manifest: &Path,
    checkpoint: &Path,
    cfg: &RunConfig,
    tau: Option<f64>,
    out: &Path,
) -> Result<(Clustering, TauPoint)> {
    let set = data::load_manifest(manifest)?;
    let params = model::load_checkpoint(checkpoint)?;
    let scores = infer::score_edges(&set, &params, &cfg.eval.scoring())?;
    let tau = match tau {
        Some(t) => t,
        None => infer::sweep_threshold(&scores, set.labels(), &infer::tau_grid(cfg.eval.tau_step)?)?.1.tau,
    };
    let clustering = infer::merge_links(&scores, tau, set.len())?;
    let point = TauPoint {
        tau,
        bcubed: crate::metrics::bcubed(&clustering.assignments, set.labels())?,
        clusters: clustering.cluster_count,
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    clustering.write_tsv(&out.join("clusters.tsv"))?;
    Ok((clustering, point))
}

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Manifest(PathBuf),
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<EmbeddingSet> {
        match self {
            DataSource::Manifest(p) => data::load_manifest(p),
            DataSource::Synthetic(s) => data::generate_synthetic(s),
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let DataSource::Manifest(p) = self {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// One training source and where it is evaluated. Without `test` a dataset
/// is evaluated on its full training source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub train: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<DataSource>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSize {
    pub m: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetEntry>,
    /// Head/tail grid applied to every training source; empty trains on the
    /// sources as they are.
    #[serde(default)]
    pub subsets: Vec<SubsetSize>,
    #[serde(default)]
    pub subset_seed: u64,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Reads a spec; relative manifest paths are taken from the spec's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = read_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for d in &mut spec.datasets {
            d.train.resolve(base);
            if let Some(t) = &mut d.test {
                t.resolve(base);
            }
        }
        if let Some(out) = &mut spec.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one dataset, method and seed".into()));
        }
        self.config.train.validate()
    }

    /// Materializes every (name, train, test) triple of the grid.
    pub fn materialize(&self) -> Result<Vec<PreparedDataset>> {
        let mut out = Vec::new();
        for entry in &self.datasets {
            let mut base = entry.train.load()?;
            if let Some(n) = &entry.name {
                base.name.clone_from(n);
            }
            let test = match &entry.test {
                Some(t) => t.load()?,
                None => base.clone(),
            };
            if self.subsets.is_empty() {
                out.push(PreparedDataset {
                    name: base.name.clone(),
                    train: base,
                    test,
                });
                continue;
            }
            for s in &self.subsets {
                let train = data::build_imbalanced_subset(
                    &base,
                    &SynthesisSpec {
                        majority_identity_count: s.m,
                        minority_identity_size: s.n,
                        seed: self.subset_seed,
                    },
                )?;
                out.push(PreparedDataset {
                    name: train.name.clone(),
                    train,
                    test: test.clone(),
                });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub name: String,
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
}

impl PreparedDataset {
    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for set in [&self.train, &self.test] {
            h.update((set.len() as u64).to_le_bytes());
            for v in set.features() {
                h.update(v.to_le_bytes());
            }
            for l in set.labels() {
                h.update(l.to_le_bytes());
            }
        }
        hex(&h.finalize()[..8])
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One (dataset, method, γ, seed) result. `report` is absent when the cell
/// failed, with the reason in `error`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub dataset: String,
    pub method: String,
    pub gamma: f64,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellRecord {
    pub fn ap(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.ap)
    }
}

fn cell_hash(dataset: &PreparedDataset, cfg: &TrainConfig, eval: &EvalConfig) -> String {
    let key = serde_json::json!({
        "dataset": dataset.name,
        "data": dataset.digest(),
        "train": cfg,
        "eval": eval,
    });
    hex(&Sha256::digest(key.to_string().as_bytes())[..8])
}

/// Trains and evaluates one cell, reusing `cells/<hash>.json` under `out`
/// when a completed record exists. Failures are returned as records.
pub fn run_cell(
    dataset: &PreparedDataset,
    method: Method,
    gamma: Option<f64>,
    seed: u64,
    base: &RunConfig,
    out: Option<&Path>,
    deterministic: bool,
) -> CellRecord {
    let mut cfg = method.configure(&base.train, gamma);
    cfg.seed = seed;
    let hash = cell_hash(dataset, &cfg, &base.eval);
    let cache = out.map(|o| o.join("cells").join(format!("{hash}.json")));
    if let Some(path) = &cache {
        if let Ok(rec) = read_json::<CellRecord>(path) {
            if rec.report.is_some() && rec.config_hash == hash {
                log::info!("cell {} {method} seed {seed}: cached", dataset.name);
                return rec;
            }
        }
    }
    let started = Instant::now();
    let result = train::train(&dataset.train, &cfg).and_then(|(params, history)| {
        let eval = evaluate(&dataset.test, &params, &base.eval)?;
        Ok((eval, history))
    });
    let runtime = if deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
    let mut rec = CellRecord {
        dataset: dataset.name.clone(),
        method: method.to_string(),
        gamma: cfg.expansion.gamma,
        seed,
        config_hash: hash.clone(),
        report: None,
        error: None,
    };
    match result {
        Ok((eval, history)) => {
            let mut report = eval.report(&dataset.name, &rec.method, seed, runtime);
            report.degeneracy.single_class_pools += history.single_class_pools();
            report.degeneracy.clamps += history.clamps();
            report.config_hash = Some(hash);
            log::info!("cell {} {method} seed {seed}: ap {:.4} f {:.4}", dataset.name, report.ap, report.bcubed.f);
            rec.report = Some(report);
        }
        Err(e) => {
            log::warn!("cell {} {method} seed {seed} failed: {e}", dataset.name);
            rec.error = Some(e.to_string());
        }
    }
    if let Some(path) = &cache {
        if let Err(e) = write_json(path, &rec) {
            log::warn!("could not cache cell: {e}");
        }
    }
    rec
}

/// Mean AP and BCubed F of one method on one dataset over its seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub dataset: String,
    pub ap: Option<f64>,
    pub f: Option<f64>,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub datasets: Vec<DatasetScore>,
    /// Arithmetic mean of the per-dataset AP means.
    pub avg_ap: Option<f64>,
    pub avg_f: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellRecord>,
    pub summary: Vec<MethodSummary>,
    pub failed: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl ExperimentReport {
    /// Aggregates cells; methods and datasets keep first-appearance order.
    pub fn from_cells(cells: Vec<CellRecord>) -> Self {
        let mut methods: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        for c in &cells {
            if !methods.contains(&c.method) {
                methods.push(c.method.clone());
            }
            if !datasets.contains(&c.dataset) {
                datasets.push(c.dataset.clone());
            }
        }
        let summary = methods
            .iter()
            .map(|m| {
                let per: Vec<DatasetScore> = datasets
                    .iter()
                    .filter_map(|d| {
                        let mine: Vec<&CellRecord> = cells.iter().filter(|c| &c.method == m && &c.dataset == d).collect();
                        if mine.is_empty() {
                            return None;
                        }
                        let ok: Vec<&EvalReport> = mine.iter().filter_map(|c| c.report.as_ref()).collect();
                        Some(DatasetScore {
                            dataset: d.clone(),
                            ap: mean(&ok.iter().map(|r| r.ap).collect::<Vec<_>>()),
                            f: mean(&ok.iter().map(|r| r.bcubed.f).collect::<Vec<_>>()),
                            seeds_ok: ok.len(),
                            seeds_failed: mine.len() - ok.len(),
                        })
                    })
                    .collect();
                let aps: Vec<f64> = per.iter().filter_map(|d| d.ap).collect();
                let fs: Vec<f64> = per.iter().filter_map(|d| d.f).collect();
                MethodSummary {
                    method: m.clone(),
                    avg_ap: if aps.len() == per.len() { mean(&aps) } else { None },
                    avg_f: if fs.len() == per.len() { mean(&fs) } else { None },
                    datasets: per,
                }
            })
            .collect();
        let failed = cells.iter().filter(|c| c.report.is_none()).count();
        Self { cells, summary, failed }
    }

    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Method rows, dataset AP columns and the `Avg` column; failed entries
    /// print as `failed`.
    pub fn ap_table(&self) -> String {
        let datasets: Vec<&str> = self
            .summary
            .first()
            .map(|s| s.datasets.iter().map(|d| d.dataset.as_str()).collect())
            .unwrap_or_default();
        let cell = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| format!("{x:.4}"));
        let mut out = format!("method\t{}\tAvg\n", datasets.join("\t"));
        for s in &self.summary {
            let cols: Vec<String> = s.datasets.iter().map(|d| cell(d.ap)).collect();
            out.push_str(&format!("{}\t{}\t{}\n", s.method, cols.join("\t"), cell(s.avg_ap)));
        }
        out
    }

    /// Writes `report.json` and `table.tsv` under `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join("report.json"), self)?;
        write_text(&out.join("table.tsv"), &self.ap_table())
    }
}

/// Runs every dataset × method × seed cell. Failed cells are recorded, not
/// raised; with `out`, completed cells are cached and skipped on re-runs.
pub fn cmd_matrix(spec: &ExperimentSpec, out: Option<&Path>, deterministic: bool) -> Result<ExperimentReport> {
    spec.validate()?;
    let datasets = spec.materialize()?;
    let mut cells = Vec::new();
    for d in &datasets {
        for &m in &spec.methods {
            for &seed in &spec.seeds {
                cells.push(run_cell(d, m, None, seed, &spec.config, out, deterministic));
            }
        }
    }
    let report = ExperimentReport::from_cells(cells);
    if let Some(out) = out {
        report.write(out)?;
    }
    Ok(report)
}

/// Mean AP over every dataset and seed for one (strategy, γ) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub gamma: f64,
    pub ap_mean: Option<f64>,
    pub ap_sd: Option<f64>,
    pub cells_ok: usize,
    pub cells_failed: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellRecord>,
}

impl SweepReport {
    pub fn row(&self, method: &str, gamma: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == method && r.gamma == gamma)
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.report.is_none()).count()
    }

    pub fn to_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| x.to_string());
        let mut out = String::from("method\tgamma\tap_mean\tap_sd\tcells_ok\tcells_failed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.method,
                r.gamma,
                opt(r.ap_mean),
                opt(r.ap_sd),
                r.cells_ok,
                r.cells_failed
            ));
        }
        out
    }

    /// One line per γ with a column per strategy, for gnuplot and friends.
    pub fn to_plot(&self) -> String {
        let methods: Vec<&str> = {
            let mut m: Vec<&str> = Vec::new();
            for r in &self.rows {
                if !m.contains(&r.method.as_str()) {
                    m.push(&r.method);
                }
            }
            m
        };
        let mut gammas: Vec<f64> = self.rows.iter().map(|r| r.gamma).collect();
        gammas.sort_by(f64::total_cmp);
        gammas.dedup();
        let mut out = format!("# gamma\t{}\n", methods.join("\t"));
        for g in gammas {
            let cols: Vec<String> = methods
                .iter()
                .map(|m| {
                    self.row(m, g)
                        .and_then(|r| r.ap_mean)
                        .map_or_else(|| "nan".to_string(), |v| v.to_string())
                })
                .collect();
            out.push_str(&format!("{g}\t{}\n", cols.join("\t")));
        }
        out
    }

    /// Writes `gamma_sweep.tsv`, `gamma_sweep.dat` and `gamma_sweep.json`.
    pub fn write(&self, out: &Path) -> Result<()> {
        write_text(&out.join("gamma_sweep.tsv"), &self.to_tsv())?;
        write_text(&out.join("gamma_sweep.dat"), &self.to_plot())?;
        write_json(&out.join("gamma_sweep.json"), self)
    }
}

/// Trains balanced re-sampling and RIWS at every γ on every dataset and seed
/// of `spec`, keeping the spec's loss. `spec.methods` is not used.
pub fn cmd_sweep_gamma(spec: &ExperimentSpec, gammas: &[f64], out: Option<&Path>, deterministic: bool) -> Result<SweepReport> {
    if gammas.is_empty() {
        return Err(Error::Config("gamma list is empty".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 1.0)) {
        return Err(Error::Config(format!("expansion coefficient must be >= 1, got {g}")));
    }
    spec.validate()?;
    let datasets = spec.materialize()?;
    let loss = spec.config.train.loss.kind;
    let mut report = SweepReport::default();
    for strategy in [StrategyKind::BalancedResample, StrategyKind::Riws] {
        let method = Method { loss, strategy };
        for &g in gammas {
            let mut aps = Vec::new();
            let mut failed = 0;
            for d in &datasets {
                for &seed in &spec.seeds {
                    let rec = run_cell(d, method, Some(g), seed, &spec.config, out, deterministic);
                    match rec.ap() {
                        Some(ap) => aps.push(ap),
                        None => failed += 1,
                    }
                    report.cells.push(rec);
                }
            }
            let m = mean(&aps);
            let sd = m.filter(|_| aps.len() > 1).map(|m| {
                (aps.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (aps.len() - 1) as f64).sqrt()
            });
            report.rows.push(SweepRow {
                method: method.to_string(),
                gamma: g,
                ap_mean: m,
                ap_sd: sd,
                cells_ok: aps.len(),
                cells_failed: failed,
            });
        }
    }
    if let Some(out) = out {
        report.write(out)?;
    }
    Ok(report)
}

/// Rebuilds the matrix report from the cached cells under `dir`.
pub fn cmd_report(dir: &Path) -> Result<ExperimentReport> {
    let cells_dir = dir.join("cells");
    let entries = fs::read_dir(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut cells = paths.iter().map(|p| read_json::<CellRecord>(p)).collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| {
        (&a.dataset, &a.method, a.gamma.to_bits(), a.seed).cmp(&(&b.dataset, &b.method, b.gamma.to_bits(), b.seed))
    });
    let report = ExperimentReport::from_cells(cells);
    report.write(dir)?;
    Ok(report)
}
