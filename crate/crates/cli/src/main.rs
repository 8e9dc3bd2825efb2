//! `lda`: generate synthetic data, train the Lindblad dynamics
//! approximator, evaluate it and read out the learned generator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use lindblad_core::evaluation::{epsilon, export_trajectory_comparison, run_sweep};
use lindblad_core::generator::{extract_readout, params_from_jump_set, READOUT_RATE_THRESHOLD};
use lindblad_core::io::{self, Checkpoint};
use lindblad_core::pipeline::{generate_exact, measure, Mode, RunConfig};
use lindblad_core::trainer::{context, samples_from_dataset, train, LdaModel};
use lindblad_core::Error;

#[derive(Parser, Debug)]
#[command(name = "lda", version, about = "Learn Markovian two-qubit Lindblad generators from measurement data")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// benchmark | chain-dense | chain-tebd
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Shots per measurement setting, or `exact`.
    #[arg(long = "N", global = true)]
    shots: Option<String>,
    /// Sampled times per trajectory.
    #[arg(long = "M", global = true)]
    times: Option<usize>,
    /// Interaction strength.
    #[arg(long = "V", global = true)]
    interaction: Option<f64>,
    /// Ring length for chain modes.
    #[arg(long = "L", global = true)]
    length: Option<usize>,
    /// Training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate exact trajectories and emulate measurements.
    Generate,
    /// Train on a measurement dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Start from the parameters of an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Error of a checkpoint against exact test trajectories.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        exact: Option<PathBuf>,
        /// Number of test trajectories (default: all in the file).
        #[arg(long)]
        r: Option<usize>,
    },
    /// Train and evaluate over an (N, M) grid.
    Sweep {
        /// Comma-separated shot counts (`exact` allowed).
        #[arg(long, default_value = "2,3,5,10,20,35,50,75,100")]
        grid_n: String,
        #[arg(long, default_value = "2,3,5,10,20,35,50,75,100")]
        grid_m: String,
    },
    /// Hamiltonian coefficients, rates and jump operators of a checkpoint.
    Readout {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = READOUT_RATE_THRESHOLD)]
        threshold: f64,
    },
    /// Exact vs predicted coherence components of one test trajectory.
    Export {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        exact: Option<PathBuf>,
        /// Dataset whose noisy points are added to the table.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        traj: usize,
        /// Comma-separated coherence indices 1..15 (default: all).
        #[arg(long)]
        components: Option<String>,
    },
}

/// Usage errors exit with 1, everything else with 2.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::InvalidConfig(_)) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn parse_shots(s: &str) -> Result<Option<u32>, Failure> {
    if s == "exact" {
        return Ok(None);
    }
    s.parse::<u32>().map(Some).map_err(|_| usage(format!("invalid shot count '{s}'")))
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T, Failure>) -> Result<Vec<T>, Failure> {
    let items: Vec<T> = s.split(',').map(|x| f(x.trim())).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(usage("empty list"));
    }
    Ok(items)
}

fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &g.mode {
        cfg.mode = mode.parse::<Mode>().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(n) = &g.shots {
        cfg.measurement.shots = parse_shots(n)?;
    }
    if let Some(m) = g.times {
        cfg.measurement.times_per_trajectory = m;
    }
    if let Some(v) = g.interaction {
        cfg.chain.v = v;
        cfg.benchmark.v = v;
    }
    if let Some(l) = g.length {
        cfg.chain.length = l;
    }
    if let Some(e) = g.epochs {
        cfg.training.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn file_size(path: &Path) -> u64 {
    std::fs::metadata(path).map(|m| m.len()).unwrap_or(0)
}

fn or_default(p: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| out.join(name))
}

fn load_model(path: &Path) -> Result<LdaModel, Failure> {
    let ckpt = io::read_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(LdaModel::new(ckpt.params()?))
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let exact = generate_exact(cfg)?;
    let dataset = measure(cfg, &exact)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let train_path = out.join("exact_train.ndjson");
    let test_path = out.join("exact_test.ndjson");
    let data_path = out.join("dataset.ndjson");
    io::write_exact(&train_path, &exact.train)?;
    io::write_exact(&test_path, &exact.test)?;
    io::write_dataset(&data_path, &dataset)?;
    io::write_json(&out.join("config.json"), cfg)?;
    if cfg.mode == Mode::Benchmark {
        let truth = params_from_jump_set(&cfg.benchmark.jump_set(), &context().basis);
        let ckpt = Checkpoint::new(&truth, io::config_hash(cfg)?, None, None);
        io::write_checkpoint(&out.join("ground_truth.json"), &ckpt)?;
    }
    let bytes = file_size(&train_path) + file_size(&test_path) + file_size(&data_path);
    println!(
        "generated {} training and {} test trajectories, {} records, {} bytes in {}",
        exact.train.len(),
        exact.test.len(),
        dataset.records.len(),
        bytes,
        out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &Path, data: &Path, resume: Option<&Path>) -> Result<(), Failure> {
    let dataset = io::read_dataset(data).with_context(|| format!("reading dataset {}", data.display()))?;
    let init = match resume {
        Some(p) => Some(load_model(p)?.params),
        None => None,
    };
    let train_cfg = cfg.train_config();
    let outcome = train(&samples_from_dataset(&dataset), Some(dataset.dt), &train_cfg, init.as_ref())?;
    let last = outcome.history.last().map(|h| h.loss.total);
    let ckpt = Checkpoint::new(&outcome.model.params, io::config_hash(cfg)?, Some(outcome.best_epoch), last);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_checkpoint(&out.join("checkpoint.json"), &ckpt)?;
    io::write_text(&out.join("loss_history.csv"), &io::loss_history_csv(&outcome.history))?;
    let best = &outcome.history[outcome.best_epoch];
    println!(
        "trained {} epochs on {} records; best epoch {} (loss {:.6e}, mse {:.6e})",
        outcome.history.len(),
        dataset.records.len(),
        outcome.best_epoch,
        best.loss.total,
        best.loss.mse
    );
    Ok(())
}

fn cmd_evaluate(out: &Path, checkpoint: &Path, exact: &Path, r: Option<usize>) -> Result<(), Failure> {
    if r == Some(0) {
        return Err(usage("r must be at least 1"));
    }
    let model = load_model(checkpoint)?;
    let mut trajs = io::read_exact(exact).with_context(|| format!("reading {}", exact.display()))?;
    if let Some(r) = r {
        if r > trajs.len() {
            return Err(usage(format!("r = {r} exceeds the {} trajectories in {}", trajs.len(), exact.display())));
        }
        trajs.truncate(r);
    }
    let eps = epsilon(&model, &trajs)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let doc = serde_json::json!({ "epsilon": eps, "r": trajs.len(), "steps": trajs[0].steps(), "dt": trajs[0].dt });
    io::write_json(&out.join("evaluation.json"), &doc)?;
    println!("epsilon = {} over r = {}", io::fmt_f64(eps), trajs.len());
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, grid_n: &str, grid_m: &str) -> Result<(), Failure> {
    let shots = parse_list(grid_n, parse_shots)?;
    let ms = parse_list(grid_m, |s| match s.parse::<usize>() {
        Ok(m) if m > 0 => Ok(m),
        _ => Err(usage(format!("invalid M '{s}'"))),
    })?;
    if shots.contains(&Some(0)) {
        return Err(usage("N must be at least 1"));
    }
    let exact = generate_exact(cfg)?;
    let result = run_sweep(cfg, &exact, &shots, &ms)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_text(&out.join("sweep.csv"), &result.to_csv())?;
    io::write_json(&out.join("sweep.json"), &result)?;
    for c in &result.cells {
        let n = c.shots.map_or("exact".to_string(), |n| n.to_string());
        match (&c.epsilon, &c.error) {
            (Some(e), _) => println!("N = {n:>5}  M = {:>4}  epsilon = {}", c.times_per_trajectory, io::fmt_f64(*e)),
            (None, Some(err)) => println!("N = {n:>5}  M = {:>4}  failed: {err}", c.times_per_trajectory),
            _ => {}
        }
    }
    Ok(())
}

fn cmd_readout(out: &Path, checkpoint: &Path, threshold: f64) -> Result<(), Failure> {
    if !(threshold >= 0.0) {
        return Err(usage("threshold must be non-negative"));
    }
    let model = load_model(checkpoint)?;
    let readout = extract_readout(&model.params, &context().basis, threshold);
    let text = readout.render_text();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_text(&out.join("readout.txt"), &text)?;
    io::write_json(&out.join("readout.json"), &readout.document())?;
    print!("{text}");
    Ok(())
}

fn cmd_export(
    out: &Path,
    checkpoint: &Path,
    exact: &Path,
    data: Option<&Path>,
    traj: usize,
    components: Option<&str>,
) -> Result<(), Failure> {
    let comps = match components {
        Some(s) => Some(parse_list(s, |x| match x.parse::<usize>() {
            Ok(c) if (1..16).contains(&c) => Ok(c),
            _ => Err(usage(format!("invalid component '{x}' (expected 1..15)"))),
        })?),
        None => None,
    };
    let model = load_model(checkpoint)?;
    let trajs = io::read_exact(exact).with_context(|| format!("reading {}", exact.display()))?;
    let target = trajs
        .iter()
        .find(|t| t.id == traj)
        .ok_or_else(|| usage(format!("trajectory {traj} not found in {}", exact.display())))?;
    let records = match data {
        Some(p) => io::read_dataset(p).with_context(|| format!("reading {}", p.display()))?.records,
        None => Vec::new(),
    };
    let table = export_trajectory_comparison(&model, target, &records, comps.as_deref())?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(format!("comparison_traj{traj}.csv"));
    io::write_text(&path, &table.to_csv())?;
    println!("wrote {} rows to {}", table.rows.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        if n == 0 {
            return Err(usage("workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(anyhow!(e)))?;
    }
    let out = g.out.as_path();
    match &cli.command {
        Command::Generate => cmd_generate(&resolve_config(g)?, out),
        Command::Train { data, resume } => {
            let cfg = resolve_config(g)?;
            cmd_train(&cfg, out, &or_default(data, out, "dataset.ndjson"), resume.as_deref())
        }
        Command::Evaluate { checkpoint, exact, r } => cmd_evaluate(
            out,
            &or_default(checkpoint, out, "checkpoint.json"),
            &or_default(exact, out, "exact_test.ndjson"),
            *r,
        ),
        Command::Sweep { grid_n, grid_m } => cmd_sweep(&resolve_config(g)?, out, grid_n, grid_m),
        Command::Readout { checkpoint, threshold } => {
            cmd_readout(out, &or_default(checkpoint, out, "checkpoint.json"), *threshold)
        }
        Command::Export { checkpoint, exact, data, traj, components } => cmd_export(
            out,
            &or_default(checkpoint, out, "checkpoint.json"),
            &or_default(exact, out, "exact_test.ndjson"),
            data.as_deref(),
            *traj,
            components.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
