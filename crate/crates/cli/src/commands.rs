use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use igann::eval::{self, EvalGrid, EvalReport, Reference};
use igann::fdm::{self, FluxScheme, Grid};
use igann::network::checkpoint::format_f64;
use igann::network::Checkpoint;
use igann::sampling::{self, SampleSource, WalkerState};
use igann::systems::{self, SystemSpec};
use igann::train::{self, TraceRow, TrainObserver, TrainState};
use serde_json::json;

use crate::config;
use crate::manifest::RunManifest;
use crate::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const STATE_FILE: &str = "state.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const EVAL_DIR: &str = "eval";
pub const REPORT_FILE: &str = "report.json";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON config file; keys may also come entirely from --set.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set arch.hidden_widths=[32,32]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Run directory name (default: `<system>-eps<eps>-seed<seed>`).
    #[arg(long)]
    name: Option<String>,
    /// Gradient shards evaluated in parallel; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Continue from `state.json` in the run directory.
    #[arg(long)]
    resume: bool,
    /// Stop after this many epochs in total; continue later with --resume.
    #[arg(long)]
    until: Option<usize>,
    /// Evaluate right after training.
    #[arg(long)]
    evaluate: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    run_dir: PathBuf,
    /// Report the normalized metrics as the headline numbers.
    #[arg(long)]
    normalized_rrmse: bool,
    /// Finite-difference reference grid, e.g. `801,1201`.
    #[arg(long, value_delimiter = ',')]
    reference_nodes: Vec<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Extrapolate the reference grid against one with halved spacing.
    #[arg(long)]
    richardson: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SchemeArg {
    Central,
    ExponentialFitting,
}

impl From<SchemeArg> for FluxScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Central => FluxScheme::Central,
            SchemeArg::ExponentialFitting => FluxScheme::ExponentialFitting,
        }
    }
}

#[derive(Args, Debug)]
pub struct FdmArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    epsilon: f64,
    /// Nodes per axis (default: the reference grid for the system).
    #[arg(long, value_delimiter = ',')]
    nodes: Vec<usize>,
    #[arg(long, value_enum, default_value = "central")]
    scheme: SchemeArg,
    /// Also write the `k` smallest nonzero eigenvalues (1D only).
    #[arg(long)]
    spectrum: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EigenArgs {
    #[arg(long, default_value = "double-well-1d")]
    system: String,
    #[arg(long = "epsilon", required = true)]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 801)]
    nodes: usize,
    #[arg(short, long, default_value_t = 20)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SamplerArg {
    Lhs,
    Sde,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "lhs")]
    sampler: SamplerArg,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Number of consecutive batches.
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// Euler-Maruyama steps between batches.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    run_dirs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the normalized metrics instead of the printed-formula ones.
    #[arg(long)]
    normalized: bool,
}

struct Progress<'a> {
    dir: &'a Path,
    every: usize,
    total: usize,
    quiet: bool,
}

impl TrainObserver for Progress<'_> {
    fn epoch(&mut self, row: &TraceRow) {
        if !self.quiet && ((row.epoch + 1) % self.every == 0 || row.epoch + 1 == self.total) {
            eprintln!(
                "epoch {:>6}/{}  loss {:+.4e}  pde {:.4e}  beta {:.3e}  lr {:.3e}  {:.1}s",
                row.epoch + 1,
                self.total,
                row.loss,
                row.pde,
                row.beta,
                row.lr,
                row.seconds
            );
        }
    }

    fn checkpoint(&mut self, state: &TrainState) -> igann::Result<()> {
        write_state_files(self.dir, state)
    }
}

fn write_state_files(dir: &Path, state: &TrainState) -> igann::Result<()> {
    let system = state.config.system()?;
    let arch = state.config.architecture(system.dim)?;
    let net = igann::Network::new(arch, igann::network::ParamVector(state.params.clone()))?;
    Checkpoint::from_network(&net, state.config.seed).save(dir.join(CHECKPOINT_FILE))?;
    state.trace.write_csv(dir.join(TRACE_FILE))?;
    state.save(dir.join(STATE_FILE))
}

fn default_run_name(c: &train::TrainConfig) -> String {
    format!("{}-eps{}-seed{}", c.system_id, c.epsilon, c.seed)
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let clock = Instant::now();
    let (state, dir) = if args.resume {
        let name = args
            .name
            .clone()
            .ok_or_else(|| CliError::Usage("--resume needs --name".into()))?;
        let dir = args.runs_dir.join(name);
        let mut state = TrainState::load(dir.join(STATE_FILE))?;
        if let Some(w) = args.workers {
            state.config.workers = w;
        }
        state.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        (state, dir)
    } else {
        let (mut cfg, _) = config::load(args.config.as_deref(), &args.overrides)?;
        if let Some(w) = args.workers {
            cfg.workers = w;
        }
        let system = cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.epochs = Some(cfg.resolved_epochs(system.dim));
        let dir = args.runs_dir.join(args.name.clone().unwrap_or_else(|| default_run_name(&cfg)));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&cfg)?)?;
        (train::initial_state(&cfg)?, dir)
    };
    let total = state.config.epochs.unwrap_or(1);
    let mut obs = Progress {
        dir: &dir,
        every: (total / 20).max(1),
        total,
        quiet: args.quiet,
    };
    let outcome = train::resume_until::<f64>(state, args.until.unwrap_or(usize::MAX), &mut obs)?;
    let finished = outcome.state.epoch >= total;
    write_state_files(&dir, &outcome.state)?;
    let cfg = &outcome.state.config;
    let mut manifest = RunManifest::load(&dir).unwrap_or_else(|_| {
        RunManifest::new(serde_json::to_value(cfg).unwrap_or_default(), Some(cfg.seed))
    });
    manifest.record(&dir, if args.resume { "train --resume" } else { "train" }, clock.elapsed().as_secs_f64())?;
    if let Some(last) = outcome.trace.rows.last() {
        println!(
            "{}: {} epochs, final loss {:e}, pde {:e} ({:.1}s)",
            dir.display(),
            last.epoch + 1,
            last.loss,
            last.pde,
            last.seconds
        );
    }
    if args.evaluate && finished {
        evaluate(EvaluateArgs {
            run_dir: dir,
            normalized_rrmse: false,
            reference_nodes: Vec::new(),
            scheme: None,
            richardson: false,
        })?;
    }
    Ok(())
}

fn reference_for(
    system: &SystemSpec,
    nodes: &[usize],
    scheme: Option<FluxScheme>,
    richardson: bool,
) -> Result<Reference, CliError> {
    if nodes.is_empty() && scheme.is_none() && !richardson {
        return Ok(Reference::for_system(system)?);
    }
    if system.has_exact_potential() {
        return Err(CliError::Usage(format!("`{}` has an analytic reference", system.id)));
    }
    let target = match system.kind {
        systems::Kind::Coupled { .. } => systems::coupled_pair_2d(system.epsilon)?,
        _ => system.clone(),
    };
    let grid = if nodes.is_empty() {
        Grid::default_for(&target)?
    } else {
        Grid::new(&target.domain, nodes)?
    };
    let scheme = scheme.unwrap_or_else(|| eval::reference_scheme(&target));
    Ok(match system.kind {
        systems::Kind::Coupled { .. } if richardson => {
            return Err(CliError::Usage("--richardson is not available for the coupled system".into()))
        }
        systems::Kind::Coupled { .. } => Reference::factorized(system, &grid, scheme)?,
        _ if richardson => Reference::richardson(system, &grid, scheme)?,
        _ => Reference::fdm(system, &grid, scheme)?,
    })
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let clock = Instant::now();
    let dir = &args.run_dir;
    let text = fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
    let cfg = config::from_value(&serde_json::from_str(&text)?)?;
    let system = cfg.system()?;
    let net: igann::Network = Checkpoint::load(dir.join(CHECKPOINT_FILE))?.to_network()?;
    let reference = reference_for(&system, &args.reference_nodes, args.scheme.map(Into::into), args.richardson)?;
    let grid = EvalGrid::for_system(&system)?;
    let ev = eval::evaluate(&system, &net, grid, &reference, args.normalized_rrmse)?;
    let out = dir.join(EVAL_DIR);
    if out.exists() {
        fs::remove_dir_all(&out)?;
    }
    ev.write_section_csvs(&out)?;
    ev.report.save(out.join(REPORT_FILE))?;
    let mut manifest = RunManifest::load(dir)
        .unwrap_or_else(|_| RunManifest::new(serde_json::to_value(&cfg).unwrap_or_default(), Some(cfg.seed)));
    manifest.record(dir, "evaluate", clock.elapsed().as_secs_f64())?;
    let r = &ev.report;
    println!(
        "{} eps={}: rRMSE {:.4e}  rMAE {:.4e}  (normalized {:.4e} / {:.4e}; {} points, {} masked)",
        r.system_id, r.epsilon, r.metrics.rrmse, r.metrics.rmae, r.metrics.rrmse_normalized, r.metrics.rmae_normalized,
        r.points, r.masked
    );
    Ok(())
}

fn write_grid_csv(path: &Path, grid: &Grid, column: &str, values: &[f64]) -> Result<(), CliError> {
    let mut s = String::new();
    let header: Vec<String> = (1..=grid.dim()).map(|k| format!("x{k}")).collect();
    writeln!(s, "{},{column}", header.join(",")).ok();
    for (i, v) in values.iter().enumerate() {
        for c in grid.point(i) {
            write!(s, "{},", format_f64(c)).ok();
        }
        let v = if v.is_finite() { format_f64(*v) } else { "inf".into() };
        writeln!(s, "{v}").ok();
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_spectrum_csv(path: &Path, values: &[(f64, f64)]) -> Result<(), CliError> {
    let mut s = String::from("index,re,im\n");
    for (i, (re, im)) in values.iter().enumerate() {
        writeln!(s, "{},{},{}", i + 1, format_f64(*re), format_f64(*im)).ok();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn fdm(args: FdmArgs) -> Result<(), CliError> {
    let clock = Instant::now();
    let system = systems::by_id(&args.system, args.epsilon)?;
    let grid = if args.nodes.is_empty() {
        Grid::default_for(&system)?
    } else {
        Grid::new(&system.domain, &args.nodes)?
    };
    let scheme: FluxScheme = args.scheme.into();
    let op = fdm::assemble_with(&system, &grid, scheme)?;
    let sol = fdm::steady_state(&system, &op)?;
    let condition = fdm::condition_number_estimate(&op, sol.pinned_node)?;
    fs::create_dir_all(&args.out)?;
    write_grid_csv(&args.out.join("density.csv"), &grid, "density", &sol.density)?;
    write_grid_csv(&args.out.join("potential.csv"), &grid, "potential", &sol.potential)?;
    let mut summary = json!({
        "system_id": system.id,
        "epsilon": system.epsilon,
        "nodes": grid.n,
        "scheme": scheme,
        "mass": sol.mass,
        "pinned_node": sol.pinned_node,
        "pinned_point": grid.point(sol.pinned_node),
        "condition_estimate": condition,
        "nonpositive_nodes": sol.nonpositive_nodes,
    });
    if let Some(k) = args.spectrum {
        let spec = fdm::spectrum(&op, k)?;
        write_spectrum_csv(&args.out.join("spectrum.csv"), &spec.smallest)?;
        summary["zero_mode"] = json!([spec.zero_mode.0, spec.zero_mode.1]);
        summary["norm_inf"] = json!(spec.norm_inf);
    }
    summary["seconds"] = json!(clock.elapsed().as_secs_f64());
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} eps={} on {:?}: mass {:.6}, kappa ~ {:.3e}, {} non-positive nodes",
        system.id, system.epsilon, grid.n, sol.mass, condition, sol.nonpositive_nodes
    );
    Ok(())
}

pub fn eigen(args: EigenArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    for &eps in &args.epsilons {
        let system = systems::by_id(&args.system, eps)?;
        if system.dim != 1 {
            return Err(CliError::Usage("eigen supports one-dimensional systems only".into()));
        }
        let grid = Grid::new(&system.domain, &[args.nodes])?;
        let op = fdm::assemble(&system, &grid)?;
        let spec = fdm::spectrum(&op, args.k)?;
        write_spectrum_csv(&args.out.join(format!("spectrum_eps{eps}.csv")), &spec.smallest)?;
        println!("eps={eps}: lambda1 {:.6e}  |lambda0| {:.3e}", spec.lambda(1), spec.zero_mode.0.hypot(spec.zero_mode.1));
        rows.push(json!({
            "epsilon": eps,
            "lambda1": spec.lambda(1),
            "zero_mode": [spec.zero_mode.0, spec.zero_mode.1],
            "norm_inf": spec.norm_inf,
            "file": format!("spectrum_eps{eps}.csv"),
        }));
    }
    let summary = json!({"system_id": args.system, "nodes": args.nodes, "k": args.k, "spectra": rows});
    fs::write(args.out.join("eigen.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn sample(args: SampleArgs) -> Result<(), CliError> {
    let system = systems::by_id(&args.system, args.epsilon)?;
    if args.n == 0 || args.epochs == 0 {
        return Err(CliError::Usage("--n and --epochs must be positive".into()));
    }
    fs::create_dir_all(&args.out)?;
    let d = system.dim;
    let mut s = String::from("epoch");
    for k in 1..=d {
        write!(s, ",x{k}").ok();
    }
    s.push('\n');
    let mut walkers = match args.sampler {
        SamplerArg::Lhs => None,
        SamplerArg::Sde => {
            let dt = args.dt.unwrap_or_else(|| sampling::default_dt(&system));
            Some(WalkerState::from_lhs(&system, args.n, dt, args.seed)?)
        }
    };
    for epoch in 0..args.epochs {
        let batch = match walkers.as_mut() {
            None => sampling::lhs_sample(&system.domain, args.n, args.seed.wrapping_add(epoch as u64))?,
            Some(w) => sampling::sde_batch(&system, w, args.steps, epoch)?,
        };
        for i in 0..batch.len() {
            write!(s, "{epoch}").ok();
            for v in batch.point(i) {
                write!(s, ",{}", format_f64(*v)).ok();
            }
            s.push('\n');
        }
    }
    fs::write(args.out.join("samples.csv"), s)?;
    let source = match args.sampler {
        SamplerArg::Lhs => SampleSource::Lhs,
        SamplerArg::Sde => SampleSource::Sde,
    };
    let summary = json!({
        "system_id": system.id, "epsilon": system.epsilon, "source": source,
        "n": args.n, "epochs": args.epochs, "seed": args.seed,
    });
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    if args.run_dirs.is_empty() {
        return Err(CliError::Usage("report needs at least one run directory".into()));
    }
    let mut rows: Vec<(PathBuf, EvalReport)> = Vec::new();
    for dir in &args.run_dirs {
        let path = dir.join(EVAL_DIR).join(REPORT_FILE);
        let rep = EvalReport::load(&path)
            .map_err(|e| CliError::Usage(format!("missing or unreadable report {}: {e}", path.display())))?;
        rows.push((dir.clone(), rep));
    }
    rows.sort_by(|a, b| a.1.system_id.cmp(&b.1.system_id).then(b.1.epsilon.total_cmp(&a.1.epsilon)));
    let mut csv = String::from("system_id,epsilon,rrmse,rmae,rrmse_normalized,rmae_normalized,points,masked,run\n");
    let mut text = format!("{:<22} {:>8} {:>12} {:>12}  run\n", "system", "eps", "rRMSE", "rMAE");
    for (dir, r) in &rows {
        let m = &r.metrics;
        writeln!(
            csv,
            "{},{},{:e},{:e},{:e},{:e},{},{},{}",
            r.system_id, r.epsilon, m.rrmse, m.rmae, m.rrmse_normalized, m.rmae_normalized, r.points, r.masked,
            dir.display()
        )
        .ok();
        let (a, b) = m.headline(args.normalized);
        writeln!(text, "{:<22} {:>8} {:>11.4}% {:>11.4}%  {}", r.system_id, r.epsilon, 100.0 * a, 100.0 * b, dir.display()).ok();
    }
    print!("{text}");
    if let Some(out) = args.out {
        fs::write(out, csv)?;
    }
    Ok(())
}
