use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linkgcn::data::SyntheticSpec;
use linkgcn::experiment::{self, ExperimentSpec, RunConfig};
use linkgcn::{Error, SynthesisSpec};

const EXIT_PARTIAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "linkgcn", version, about = "Linkage-prediction GCN clustering on imbalanced data")]
struct Cli {
    /// Seed overriding the one in the spec or config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config: run config for train/eval/cluster, experiment spec for
    /// matrix/sweep-gamma, synthetic spec for synth.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Report zero runtimes so repeated runs give identical reports.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic embedding set.
    Synth,
    /// Cut a stored set down to m whole identities plus n samples of the rest.
    Subset {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Merge scored links into clusters.
    Cluster {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Merge threshold; the BCubed-best grid point when omitted.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Run the dataset × method × seed grid.
    Matrix,
    /// AP of re-sampling and RIWS over expansion coefficients.
    SweepGamma {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.2, 1.5, 2.0])]
        gammas: Vec<f64>,
    },
    /// Rebuild the matrix report from cached cells in --out.
    Report,
}

fn config_path(cli: &Cli) -> Result<&Path, Error> {
    cli.config
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))
}

fn run_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn experiment_spec(cli: &Cli) -> Result<(ExperimentSpec, PathBuf), Error> {
    let mut spec = ExperimentSpec::load(config_path(cli)?)?;
    if let Some(s) = cli.seed {
        spec.seeds = vec![s];
    }
    let out = if cli.out == Path::new("out") {
        spec.out.clone().unwrap_or_else(|| cli.out.clone())
    } else {
        cli.out.clone()
    };
    Ok((spec, out))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    emit(&format!("{}\n", serde_json::to_string_pretty(v)?))
}

/// Returns whether every cell succeeded.
fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Synth => {
            let path = config_path(cli)?;
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_owned(),
                source: e,
            })?;
            let mut spec: SyntheticSpec = serde_json::from_str(&text)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let manifest = experiment::cmd_synth(&spec, &cli.out)?;
            emit(&format!("{}\n", manifest.display()))?;
        }
        Command::Subset { manifest, m, n } => {
            let spec = SynthesisSpec {
                majority_identity_count: *m,
                minority_identity_size: *n,
                seed: cli.seed.unwrap_or(0),
            };
            let path = experiment::cmd_subset(manifest, &spec, &cli.out)?;
            emit(&format!("{}\n", path.display()))?;
        }
        Command::Train { manifest } => {
            let cfg = run_config(cli)?;
            let (_, history) = experiment::cmd_train(manifest, &cfg, &cli.out)?;
            emit(&history.to_tsv())?;
        }
        Command::Eval { manifest, checkpoint } => {
            let cfg = run_config(cli)?;
            let report = experiment::cmd_eval(manifest, checkpoint, &cfg, &cli.out, cli.deterministic)?;
            print_json(&report)?;
        }
        Command::Cluster {
            manifest,
            checkpoint,
            tau,
        } => {
            let cfg = run_config(cli)?;
            let (_, point) = experiment::cmd_cluster(manifest, checkpoint, &cfg, *tau, &cli.out)?;
            print_json(&serde_json::json!({
                "tau": point.tau,
                "clusters": point.clusters,
                "bcubed": point.bcubed,
            }))?;
        }
        Command::Matrix => {
            let (spec, out) = experiment_spec(cli)?;
            let report = experiment::cmd_matrix(&spec, Some(&out), cli.deterministic)?;
            emit(&report.ap_table())?;
            return Ok(report.failed == 0);
        }
        Command::SweepGamma { gammas } => {
            let (spec, out) = experiment_spec(cli)?;
            let report = experiment::cmd_sweep_gamma(&spec, gammas, Some(&out), cli.deterministic)?;
            emit(&report.to_tsv())?;
            return Ok(report.failed() == 0);
        }
        Command::Report => {
            let report = experiment::cmd_report(&cli.out)?;
            emit(&report.ap_table())?;
            return Ok(report.failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some cells failed; see the report");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
