use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use tempseg::bench::{bench_table, benchmark_consensus, BenchConfig};
use tempseg::config::{RunConfig, Stage};
use tempseg::service::{self, AppState};
use tempseg::store::{RunState, RunStore};
use tempseg::synth::{generate_synthetic, SignalPlacement, SynthConfig};
use tempseg::{run, RunArtifact};
use tempseg_core::ingest::FiscalPeriod;
use tempseg_core::Exec;

#[derive(Parser)]
#[command(name = "tempseg", version, about = "Multi-criteria temporal customer segmentation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set consensus.w_t=0.7`. Values are
    /// read as JSON when they parse, else as strings.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Run store directory.
    #[arg(long, global = true, default_value = "tempseg-store")]
    store: PathBuf,
    /// Disable the data-parallel loops.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Args)]
struct DataArg {
    /// Transaction log (CSV).
    #[arg(long, short)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and clean a transaction log; prints the cleaning report.
    Ingest(DataArg),
    /// Build the feature panel; prints the Spearman correlation matrix.
    Features(DataArg),
    /// Resolve the configured AHP weights; prints weights and consistency.
    Weights,
    /// Run through the clustering grid; prints the grid table.
    Cluster(DataArg),
    /// Run through per-period stability; prints the timeline table.
    Stability(DataArg),
    /// Run through consensus; prints the label table.
    Consensus(DataArg),
    /// Run every stage; prints the run id and stage states.
    Run(DataArg),
    /// Write report tables of a finished run.
    Report {
        #[arg(long)]
        run: String,
        /// Output directory; the grid table goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic transaction log with planted segments.
    Synth {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 24)]
        periods: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SignalPlacement::All)]
        placement: SignalPlacement,
        /// Directory for `transactions.csv` and `truth.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Time consensus on synthetic partitions; prints `n,edges,seconds,full_graph_seconds`.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 4000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn override_patch(spec: &str) -> anyhow::Result<Value> {
    let (path, raw) = spec.split_once('=').with_context(|| format!("override `{spec}` is not PATH=VALUE"))?;
    let mut value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    for key in path.rsplit('.') {
        anyhow::ensure!(!key.is_empty(), "override path `{path}` has an empty segment");
        value = Value::Object([(key.to_string(), value)].into_iter().collect());
    }
    Ok(value)
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for spec in &common.overrides {
        config = config.patched(&override_patch(spec)?)?;
    }
    config.validate()?;
    Ok(config)
}

fn run_until(common: &Common, data: &Path, until: Stage, exec: Exec) -> anyhow::Result<(RunStore, String, RunArtifact)> {
    let store = RunStore::open(&common.store)?;
    let bytes = std::fs::read(data).with_context(|| format!("reading {}", data.display()))?;
    let dataset = store.put_dataset(&bytes)?;
    let m = run::submit(&store, &dataset, load_config(common)?, None)?;
    let m = run::execute(&store, &m.run_id, until, exec)?;
    for r in &m.stages {
        eprintln!("{:<10} {:?} {}", r.stage.name(), r.state, r.seconds.map_or(String::new(), |s| format!("{s:.2}s")));
    }
    if let Some(e) = &m.error {
        anyhow::bail!("run {} failed at {}: {}", m.run_id, e.stage, e.message);
    }
    eprintln!("run {}", m.run_id);
    let artifact = run::load_artifact(&store, &m.run_id)?;
    Ok((store, m.run_id, artifact))
}

fn print_file(store: &RunStore, run_id: &str, name: &str) -> anyhow::Result<()> {
    print!("{}", String::from_utf8_lossy(&run::output_file(store, run_id, name)?));
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let exec = if cli.common.sequential { Exec::Sequential } else { Exec::default() };
    let common = &cli.common;
    match &cli.command {
        Command::Ingest(d) => {
            let (_, _, a) = run_until(common, &d.data, Stage::Ingest, exec)?;
            println!("{}", serde_json::to_string_pretty(&a.ingest.context("ingest missing")?.cleaning)?);
        }
        Command::Features(d) => {
            let (store, id, _) = run_until(common, &d.data, Stage::Features, exec)?;
            print_file(&store, &id, "correlation.csv")?;
        }
        Command::Weights => {
            let w = load_config(common)?.weights.resolve()?;
            println!("criterion,weight");
            for (c, v) in w.vector.criteria.iter().zip(&w.vector.weights) {
                println!("{c},{v:.4}");
            }
            eprintln!("lambda_max {:.4}, CI {:.4}, CR {:.4}", w.vector.lambda_max, w.vector.consistency_index, w.vector.consistency_ratio);
            for (d, t) in w.vector.dimension_totals() {
                eprintln!("{d}: {t:.4}");
            }
        }
        Command::Cluster(d) => {
            let (store, id, _) = run_until(common, &d.data, Stage::Cluster, exec)?;
            print_file(&store, &id, "grid_table.csv")?;
        }
        Command::Stability(d) => {
            let (store, id, _) = run_until(common, &d.data, Stage::Stability, exec)?;
            print_file(&store, &id, "timelines.csv")?;
        }
        Command::Consensus(d) => {
            let (store, id, _) = run_until(common, &d.data, Stage::Consensus, exec)?;
            print_file(&store, &id, "labels.csv")?;
        }
        Command::Run(d) => {
            run_until(common, &d.data, Stage::Report, exec)?;
        }
        Command::Report { run: id, out } => {
            let store = RunStore::open(&common.store)?;
            let m = store.manifest(id)?;
            anyhow::ensure!(m.state == RunState::Completed, "run {id} is {:?}, not completed", m.state);
            let report = run::load_artifact(&store, id)?.report.context("report missing")?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    for (name, text) in report.files() {
                        std::fs::write(dir.join(&name), text)?;
                    }
                    std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
                    eprintln!("wrote {}", dir.display());
                }
                None => print!("{}", report.grid_table),
            }
        }
        Command::Synth { n, periods, k, noise, seed, placement, out } => {
            let cfg = SynthConfig {
                n_customers: *n,
                n_periods: *periods,
                k: *k,
                noise: *noise,
                seed: *seed,
                placement: *placement,
                first_period: FiscalPeriod::new(2022, 1).expect("valid period"),
            };
            let data = generate_synthetic(&cfg)?;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("transactions.csv"), data.transactions_csv()?)?;
            std::fs::write(out.join("truth.csv"), data.truth_csv())?;
            eprintln!("{} transactions for {} customers", data.records.len(), n);
        }
        Command::Bench { sizes, repeats } => {
            let cfg = BenchConfig { repeats: *repeats, ..Default::default() };
            print!("{}", bench_table(&benchmark_consensus(sizes, &cfg, exec)?));
        }
        Command::Serve { addr } => {
            let state = AppState { store: RunStore::open(&common.store)?, exec };
            tokio::runtime::Runtime::new()?.block_on(service::serve(state, addr))?;
        }
    }
    Ok(())
}
