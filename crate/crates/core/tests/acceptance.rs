//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! ```text
//! cargo test --release --test acceptance               # criteria 1-9 and 11
//! cargo test --release --test acceptance -- 3 4        # a selection
//! cargo test --release --test acceptance -- --ignored  # only the slow criterion 10
//! cargo test --release --test acceptance -- --include-ignored
//! ```
//!
//! Trained runs are written to `<target>/tmp/acceptance/<name>/` with the
//! same layout as a CLI run directory.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use igann::eval::{self, EvalGrid, EvalReport, Metrics, Reference};
use igann::fdm::{self, FluxScheme, Grid};
use igann::loss::{exact_residual, igann_loss, igann_loss_and_grad};
use igann::network::{Architecture, Checkpoint, FieldNetwork};
use igann::sampling::SampleSource;
use igann::systems;
use igann::train::{self, TrainConfig, TrainTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hidden layers for every trained criterion.
const WIDTHS: [usize; 4] = [32, 32, 32, 32];
/// Runs last until the annealed weight has decayed to this value (and at
/// least the default epoch count).
const BETA_END: f64 = 1e-2;

struct Verdict {
    id: u32,
    pass: bool,
    line: String,
}

fn out_dir(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    fs::create_dir_all(&p).expect("create output dir");
    p
}

fn progress(msg: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "  .. {msg}");
}

fn pct(v: f64) -> String {
    format!("{:.3}%", 100.0 * v)
}

// ---------------------------------------------------------------- criterion 1

fn random_net(d: usize, widths: Vec<usize>, rng: &mut ChaCha8Rng) -> FieldNetwork<f64> {
    let arch = Architecture::new(d, widths).unwrap();
    let mut net = FieldNetwork::init(arch, rng.gen()).unwrap();
    let layout = net.layout().clone();
    for l in layout.layers() {
        for j in 0..l.fan_out {
            net.params_mut()[l.bias_offset + j] = rng.gen_range(-0.5..0.5);
        }
    }
    net
}

fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let systems_by_dim = [
        systems::double_well_1d(0.1).unwrap(),
        systems::two_metastable_2d(0.1).unwrap(),
        systems::sine_gradient_3d(0.07).unwrap(),
        systems::synthetic_rotational(4, 0.1).unwrap(),
    ];
    let shapes = [vec![8, 8], vec![6, 10, 6], vec![16], vec![5, 5, 5, 5]];
    let (mut worst_grad, mut worst_trace, mut worst_param) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..100 {
        let d = 1 + k % 4;
        let net = random_net(d, shapes[(k / 4) % shapes.len()].clone(), &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        // random symmetric positive definite D = L L^T + 0.1 I
        let l: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dm = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                dm[i * d + j] = (0..d).map(|m| l[i * d + m] * l[j * d + m]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
            }
        }
        let field = net.eval_field(&x, &dm).unwrap();

        let h = 1e-5;
        let fd_grad: Vec<f64> = (0..d)
            .map(|i| {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += h;
                m[i] -= h;
                (net.value(&p).unwrap() - net.value(&m).unwrap()) / (2.0 * h)
            })
            .collect();
        worst_grad = worst_grad.max(rel_norm(&field.grad_x, &fd_grad));

        // tr(D H) from Richardson-extrapolated central differences of the
        // exact input gradient
        let fd_trace_at = |hh: f64| {
            let mut t = 0.0;
            for j in 0..d {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[j] += hh;
                m[j] -= hh;
                let gp = net.eval_field(&p, &dm).unwrap().grad_x;
                let gm = net.eval_field(&m, &dm).unwrap().grad_x;
                for i in 0..d {
                    t += dm[i * d + j] * (gp[i] - gm[i]) / (2.0 * hh);
                }
            }
            t
        };
        let fd_trace = (4.0 * fd_trace_at(5e-4) - fd_trace_at(1e-3)) / 3.0;
        worst_trace = worst_trace.max((field.weighted_hess_trace - fd_trace).abs() / fd_trace.abs().max(1e-3));

        let sys = &systems_by_dim[d - 1];
        let batch: Vec<f64> = (0..3 * d)
            .map(|i| {
                let a = i % d;
                rng.gen_range(sys.domain.lower[a]..sys.domain.upper[a])
            })
            .collect();
        let beta = rng.gen_range(0.0..5.0);
        let (_, grad) = igann_loss_and_grad(sys, &net, &batch, beta, 1).unwrap();
        let mut work = net.clone();
        let hp = 1e-6;
        let fd: Vec<f64> = (0..net.params().len())
            .map(|i| {
                let base = net.params()[i];
                work.params_mut()[i] = base + hp;
                let lp = igann_loss(sys, &work, &batch, beta).unwrap().loss;
                work.params_mut()[i] = base - hp;
                let lm = igann_loss(sys, &work, &batch, beta).unwrap().loss;
                work.params_mut()[i] = base;
                (lp - lm) / (2.0 * hp)
            })
            .collect();
        worst_param = worst_param.max(rel_norm(&grad, &fd));
    }
    let pass = worst_grad <= 1e-5 && worst_trace <= 1e-5 && worst_param <= 1e-4;
    Verdict {
        id: 1,
        pass,
        line: format!(
            "derivative oracles, 100 (params, x) pairs: input gradient {worst_grad:.2e} (<= 1e-5), \
             weighted trace {worst_trace:.2e} (<= 1e-5), loss parameter gradient {worst_param:.2e} (<= 1e-4) [{:.1}s]",
            start.elapsed().as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cases = [
        systems::sine_gradient_3d(0.04).unwrap(),
        systems::synthetic_rotational(2, 0.04).unwrap(),
        systems::synthetic_rotational(3, 0.04).unwrap(),
        systems::synthetic_rotational(4, 0.04).unwrap(),
        systems::synthetic_rotational(8, 0.04).unwrap(),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for sys in &cases {
        let mut w = 0.0f64;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..sys.dim)
                .map(|k| rng.gen_range(sys.domain.lower[k]..sys.domain.upper[k]))
                .collect();
            w = w.max(exact_residual::<f64>(sys, &x).unwrap().abs());
        }
        parts.push(format!("{} {w:.1e}", sys.id));
        worst = worst.max(w);
    }
    Verdict {
        id: 2,
        pass: worst <= 1e-9,
        line: format!("exact-potential residual at 1000 points: max {worst:.2e} (<= 1e-9) [{}]", parts.join(", ")),
    }
}

// ---------------------------------------------------------------- criterion 3

fn fdm_potential_error(n: usize) -> (f64, fdm::FdmSolution) {
    let sys = systems::double_well_1d(0.1).unwrap();
    let grid = Grid::new(&sys.domain, &[n]).unwrap();
    let sol = fdm::solve(&sys, &grid).unwrap();
    let exact: Vec<f64> = (0..n).map(|i| sys.exact_potential(&grid.point(i)).unwrap()).collect();
    let m = Metrics::compute(&eval::min_shift(&sol.potential), &eval::min_shift(&exact)).unwrap();
    (m.rrmse_normalized, sol)
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let (e1, _) = fdm_potential_error(201);
    let (e2, _) = fdm_potential_error(401);
    let (e3, sol) = fdm_potential_error(801);
    let p1 = (e1 / e2).log2();
    let p2 = (e2 / e3).log2();
    let dir = out_dir("fdm-double-well-eps0.1");
    let mut csv = String::from("x1,potential\n");
    for i in 0..sol.grid.len() {
        let _ = writeln!(csv, "{},{}", sol.grid.point(i)[0], sol.potential[i]);
    }
    let _ = fs::write(dir.join("potential.csv"), csv);
    let ok_order = |p: f64| (p - 2.0).abs() <= 0.3;
    Verdict {
        id: 3,
        pass: e3 <= 5e-3 && ok_order(p1) && ok_order(p2),
        line: format!(
            "FDM Boltzmann oracle, double well eps=0.1: rRMSE {} at n=801 (<= 0.5%); \
             errors {:.3e} / {:.3e} / {:.3e} at n=201/401/801, observed orders {p1:.2}, {p2:.2} (2 +- 0.3) [{:.1}s]",
            pct(e3),
            e1,
            e2,
            e3,
            start.elapsed().as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let dir = out_dir("spectrum-double-well");
    let mut lambdas = Vec::new();
    let mut zero_ok = true;
    let mut zero_parts = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let sys = systems::double_well_1d(eps).unwrap();
        let grid = Grid::new(&sys.domain, &[801]).unwrap();
        let op = fdm::assemble(&sys, &grid).unwrap();
        let spec = fdm::spectrum(&op, 20).unwrap();
        let z = spec.zero_mode.0.hypot(spec.zero_mode.1);
        zero_ok &= z <= 1e-8 * spec.norm_inf;
        zero_parts.push(format!("{z:.1e}/{:.1e}", 1e-8 * spec.norm_inf));
        lambdas.push(spec.lambda(1));
        let mut csv = String::from("index,re,im\n");
        for (i, (re, im)) in spec.smallest.iter().enumerate() {
            let _ = writeln!(csv, "{},{re},{im}", i + 1);
        }
        let _ = fs::write(dir.join(format!("spectrum_eps{eps}.csv")), csv);
    }
    let decreasing = lambdas[0] > lambdas[1] && lambdas[1] > lambdas[2];
    let ratio = lambdas[2] / lambdas[0];
    Verdict {
        id: 4,
        pass: decreasing && ratio <= 0.01 && zero_ok,
        line: format!(
            "spectral gap, double well n=801: lambda1 = {:.4e} / {:.4e} / {:.4e} at eps 0.2/0.1/0.05 (strictly decreasing: {decreasing}); \
             lambda1(0.05)/lambda1(0.2) = {ratio:.4} (<= 0.01); |lambda0| vs 1e-8 ||A||: {} [{:.1}s]",
            lambdas[0],
            lambdas[1],
            lambdas[2],
            zero_parts.join(", "),
            start.elapsed().as_secs_f64()
        ),
    }
}

// ------------------------------------------------------------ trained criteria

fn anneal_epochs(cfg: &TrainConfig, dim: usize) -> usize {
    let default = cfg.resolved_epochs(dim);
    if cfg.beta0 <= BETA_END || cfg.beta_decay <= 0.0 {
        return default;
    }
    let needed = ((cfg.beta0 / BETA_END).ln() / -(1.0 - cfg.beta_decay).ln()).ceil() as usize;
    needed.max(default)
}

fn config(system_id: &str, eps: f64, beta0: f64, decay: f64) -> TrainConfig {
    let mut c = TrainConfig::new(system_id, eps);
    c.arch.hidden_widths = WIDTHS.to_vec();
    c.beta0 = beta0;
    c.beta_decay = decay;
    c.checkpoint_every = 0;
    let dim = c.system().unwrap().dim;
    c.epochs = Some(anneal_epochs(&c, dim));
    c
}

/// Trains past the end of the anneal, still inside the time budget.
fn with_epochs(mut c: TrainConfig, epochs: usize) -> TrainConfig {
    c.epochs = Some(epochs.max(c.epochs.unwrap_or(0)));
    c
}

struct Trained {
    report: EvalReport,
    trace: TrainTrace,
    seconds: f64,
}

fn train_and_evaluate(name: &str, cfg: TrainConfig, reference: Option<&Reference>) -> Result<Trained, String> {
    let system = cfg.system().map_err(|e| e.to_string())?;
    progress(&format!("{name}: {} epochs, batch {}", cfg.epochs.unwrap(), cfg.batch_size));
    let start = Instant::now();
    let out = train::train::<f64>(&cfg, &mut ()).map_err(|e| format!("{name}: {e}"))?;
    let seconds = start.elapsed().as_secs_f64();
    let owned;
    let reference = match reference {
        Some(r) => r,
        None => {
            owned = Reference::for_system(&system).map_err(|e| e.to_string())?;
            &owned
        }
    };
    let grid = EvalGrid::for_system(&system).map_err(|e| e.to_string())?;
    let ev = eval::evaluate(&system, &out.network, grid, reference, true).map_err(|e| e.to_string())?;
    let dir = out_dir(name);
    let _ = fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg).unwrap());
    let _ = Checkpoint::from_network(&out.network, cfg.seed).save(dir.join("checkpoint.json"));
    let _ = out.trace.write_csv(dir.join("trace.csv"));
    let _ = ev.write_section_csvs(dir.join("eval"));
    let _ = ev.report.save(dir.join("eval").join("report.json"));
    progress(&format!(
        "{name}: rRMSE {} rMAE {} ({:.0}s)",
        pct(ev.report.metrics.rrmse_normalized),
        pct(ev.report.metrics.rmae_normalized),
        seconds
    ));
    Ok(Trained {
        report: ev.report,
        trace: out.trace,
        seconds,
    })
}

fn failed(id: u32, what: &str, err: String) -> Verdict {
    Verdict {
        id,
        pass: false,
        line: format!("{what}: error: {err}"),
    }
}

/// Runs one configuration per epsilon and checks normalized rRMSE bounds.
fn table_criterion(id: u32, what: &str, runs: Vec<(TrainConfig, f64, &str)>) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = 0.0;
    for (cfg, bound, published) in runs {
        let name = format!("c{id}-{}-eps{}", cfg.system_id, cfg.epsilon);
        let eps = cfg.epsilon;
        match train_and_evaluate(&name, cfg, None) {
            Ok(t) => {
                let r = t.report.metrics.rrmse_normalized;
                pass &= r <= bound;
                total += t.seconds;
                parts.push(format!(
                    "eps {eps}: {} (<= {}, published {published}; rMAE {})",
                    pct(r),
                    pct(bound),
                    pct(t.report.metrics.rmae_normalized)
                ));
            }
            Err(e) => return failed(id, what, e),
        }
    }
    Verdict {
        id,
        pass,
        line: format!("{what}: {} [{:.0}s]", parts.join("; "), total),
    }
}

fn criterion_5() -> Verdict {
    let what = "IGANN vs plain residual, double well eps=0.02";
    let igann_cfg = config("double-well-1d", 0.02, 10.0, 4e-4);
    let mut pinn_cfg = igann_cfg.clone();
    pinn_cfg.beta0 = 0.0;
    let pinn = match train_and_evaluate("c5-pinn", pinn_cfg, None) {
        Ok(t) => t,
        Err(e) => return failed(5, what, e),
    };
    let igann = match train_and_evaluate("c5-igann", igann_cfg, None) {
        Ok(t) => t,
        Err(e) => return failed(5, what, e),
    };
    let pinn_pde = pinn.trace.rows.last().map(|r| r.pde).unwrap_or(f64::NAN);
    let pinn_err = pinn.report.metrics.rrmse_normalized;
    let igann_err = igann.report.metrics.rrmse_normalized;
    Verdict {
        id: 5,
        pass: pinn_pde <= 1e-4 && pinn_err > 0.10 && igann_err <= 0.05,
        line: format!(
            "{what}: beta0=0 final pde term {pinn_pde:.2e} (<= 1e-4) with rRMSE {} (> 10%); \
             IGANN rRMSE {} (<= 5%) [{:.0}s]",
            pct(pinn_err),
            pct(igann_err),
            pinn.seconds + igann.seconds
        ),
    }
}

fn criterion_6() -> Verdict {
    let runs = vec![
        (config("sine-3d", 0.1, 100.0, 3e-4), 0.02, "1.02%"),
        (config("sine-3d", 0.07, 100.0, 3e-4), 0.01, "0.667%"),
        (config("sine-3d", 0.04, 100.0, 3e-4), 0.01, "0.255%"),
    ];
    table_criterion(6, "3D gradient system", runs)
}

fn criterion_7() -> Verdict {
    let what = "two metastable states vs extrapolated FDM 401x601 / 801x1201";
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = 0.0;
    for (eps, beta, published) in [(0.1, 5.0, "0.636%"), (0.05, 10.0, "0.66%")] {
        let sys = systems::two_metastable_2d(eps).unwrap();
        // a single 401x601 solve is itself several percent off at eps=0.05
        let coarse = Grid::default_for(&sys).unwrap();
        let reference = match Reference::richardson(&sys, &coarse, FluxScheme::Central) {
            Ok(r) => r,
            Err(e) => return failed(7, what, e.to_string()),
        };
        let name = format!("c7-two-metastable-eps{eps}");
        let cfg = with_epochs(config("two-metastable-2d", eps, beta, 4e-4), 70_000);
        let t = match train_and_evaluate(&name, cfg, Some(&reference)) {
            Ok(t) => t,
            Err(e) => return failed(7, what, e),
        };
        let grid = EvalGrid::for_system(&sys).unwrap();
        let single = Reference::fdm(&sys, &coarse, FluxScheme::Central);
        let gap = single.ok().and_then(|f| {
            let (a, b) = (reference.values(&grid), f.values(&grid));
            let keep: Vec<usize> = (0..a.len()).filter(|&i| a[i].is_finite() && b[i].is_finite()).collect();
            let a: Vec<f64> = keep.iter().map(|&i| a[i]).collect();
            let b: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
            Metrics::compute(&eval::min_shift(&b), &eval::min_shift(&a)).ok()
        });
        let r = t.report.metrics.rrmse_normalized;
        pass &= r <= 0.03;
        total += t.seconds;
        parts.push(format!(
            "eps {eps}: {} (<= 3%, published {published}; {} masked points; single 401x601 solve vs extrapolated: {})",
            pct(r),
            t.report.masked,
            gap.map(|m| pct(m.rrmse_normalized)).unwrap_or_else(|| "n/a".into())
        ));
    }
    Verdict {
        id: 7,
        pass,
        line: format!("{what}: {} [{total:.0}s]", parts.join("; ")),
    }
}

fn criterion_8() -> Verdict {
    let runs = vec![
        (with_epochs(config("synthetic-2d", 0.1, 150.0, 3e-4), 75_000), 0.015, "0.135%"),
        (with_epochs(config("synthetic-2d", 0.07, 150.0, 3e-4), 75_000), 0.015, "0.611%"),
        (with_epochs(config("synthetic-2d", 0.04, 150.0, 3e-4), 75_000), 0.015, "0.309%"),
    ];
    table_criterion(8, "synthetic rotational 2D", runs)
}

fn criterion_9() -> Verdict {
    let runs = vec![
        (config("synthetic-3d", 0.1, 40.0, 2e-4), 0.05, "1.79%"),
        (config("synthetic-3d", 0.07, 40.0, 1.5e-4), 0.05, "2.96%"),
        (config("synthetic-3d", 0.04, 70.0, 1e-4), 0.05, "2.03%"),
    ];
    table_criterion(9, "synthetic rotational 3D", runs)
}

/// Local minima of an axis-line CSV in index order.
fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len() - 1)
        .filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        .collect()
}

fn criterion_10() -> Verdict {
    let what = "slow: 8D cross-sections, oscillator, 10D coupled";
    let mut pass = true;
    let mut parts = Vec::new();

    // 8D synthetic
    let cfg = config("synthetic-8d", 0.04, 150.0, 2e-4);
    let sys = cfg.system().unwrap();
    let t = match train_and_evaluate("c10-synthetic-8d", cfg.clone(), None) {
        Ok(t) => t,
        Err(e) => return failed(10, what, e),
    };
    let worst_axis = t
        .report
        .sections
        .iter()
        .filter(|s| s.name.starts_with("axis_"))
        .map(|s| s.metrics.rrmse_normalized)
        .fold(0.0, f64::max);
    let csv = fs::read_to_string(out_dir("c10-synthetic-8d").join("eval").join("axis_x1.csv")).unwrap_or_default();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<f64> = l.split(',').filter_map(|v| v.parse().ok()).collect();
            (f.len() == sys.dim + 2).then(|| (f[0], f[sys.dim]))
        })
        .collect();
    let learned: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let minima: Vec<f64> = if learned.len() > 2 { local_minima(&learned).iter().map(|&i| rows[i].0).collect() } else { vec![] };
    let wells = minima.len() == 2 && (minima[0] + 1.0).abs() <= 0.1 && (minima[1] - 1.0).abs() <= 0.1;
    pass &= wells && worst_axis <= 0.05;
    parts.push(format!(
        "8D: x1-axis minima at {minima:.3?} (two, within 0.1 of -1 and +1), worst axis rRMSE {} (<= 5%)",
        pct(worst_axis)
    ));

    // oscillator, SDE samples
    let mut cfg = config("biochem-2d", 0.1, 10.0, 4e-4);
    cfg.sampler.kind = SampleSource::Sde;
    cfg.batch_size = 10_000;
    match train_and_evaluate("c10-biochem", cfg, None) {
        Ok(t) => {
            let r = t.report.metrics.rrmse_normalized;
            pass &= r <= 0.12;
            parts.push(format!("oscillator eps 0.1: {} (<= 12%, published 5.63%)", pct(r)));
        }
        Err(e) => return failed(10, what, e),
    }

    // 10D coupled
    let mut cfg = config("coupled-10d", 0.1, 80.0, 3e-4);
    cfg.batch_size = 10_000;
    match train_and_evaluate("c10-coupled-10d", cfg, None) {
        Ok(t) => {
            let worst_plane = t
                .report
                .sections
                .iter()
                .filter(|s| s.name.starts_with("plane_"))
                .map(|s| s.metrics.rrmse_normalized)
                .fold(0.0, f64::max);
            pass &= worst_plane <= 0.08;
            parts.push(format!("10D: worst coordinate-plane rRMSE {} (<= 8%)", pct(worst_plane)));
        }
        Err(e) => return failed(10, what, e),
    }
    Verdict {
        id: 10,
        pass,
        line: format!("{what}: {}", parts.join("; ")),
    }
}

// --------------------------------------------------------------- criterion 11

fn criterion_11() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [SampleSource::Lhs, SampleSource::Sde] {
        let mut cfg = TrainConfig::new("two-metastable-2d", 0.1);
        cfg.arch.hidden_widths = vec![16, 16, 16, 16];
        cfg.batch_size = 500;
        cfg.epochs = Some(300);
        cfg.sampler.kind = kind;
        cfg.seed = 11;
        let a = train::train::<f64>(&cfg, &mut ()).unwrap();
        let b = train::train::<f64>(&cfg, &mut ()).unwrap();
        let ca = Checkpoint::from_network(&a.network, cfg.seed).to_json().unwrap();
        let cb = Checkpoint::from_network(&b.network, cfg.seed).to_json().unwrap();
        let strip = |t: &TrainTrace| -> Vec<String> {
            t.to_csv().lines().map(|l| l.rsplit_once(',').map(|x| x.0).unwrap_or(l).to_owned()).collect()
        };
        let mut sa = a.state.clone();
        let mut sb = b.state.clone();
        sa.elapsed = 0.0;
        sb.elapsed = 0.0;
        for r in sa.trace.rows.iter_mut().chain(sb.trace.rows.iter_mut()) {
            r.seconds = 0.0;
        }
        let same_ckpt = ca == cb;
        let same_trace = strip(&a.trace) == strip(&b.trace);
        let same_state = serde_json::to_string(&sa).unwrap() == serde_json::to_string(&sb).unwrap();
        pass &= same_ckpt && same_trace && same_state;
        parts.push(format!(
            "{kind:?}: checkpoint {}, trace {}, resumable state {}",
            if same_ckpt { "identical" } else { "differs" },
            if same_trace { "identical" } else { "differs" },
            if same_state { "identical" } else { "differs" }
        ));
    }
    Verdict {
        id: 11,
        pass,
        line: format!(
            "reproducibility, 300 epochs twice (trace compared without the wall-clock column): {} [{:.1}s]",
            parts.join("; "),
            start.elapsed().as_secs_f64()
        ),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let only_ignored = args.iter().any(|a| a == "--ignored");
    let include_ignored = args.iter().any(|a| a == "--include-ignored");
    let picked: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if args.iter().any(|a| a == "--list") {
        for i in 1..=11 {
            println!("criterion_{i}: test");
        }
        return;
    }
    let all: Vec<(u32, bool, fn() -> Verdict)> = vec![
        (1, false, criterion_1),
        (2, false, criterion_2),
        (3, false, criterion_3),
        (4, false, criterion_4),
        (5, false, criterion_5),
        (6, false, criterion_6),
        (7, false, criterion_7),
        (8, false, criterion_8),
        (9, false, criterion_9),
        (10, true, criterion_10),
        (11, false, criterion_11),
    ];
    let mut verdicts = Vec::new();
    for (id, slow, run) in all {
        let wanted = if !picked.is_empty() {
            picked.contains(&id)
        } else if only_ignored {
            slow
        } else {
            !slow || include_ignored
        };
        if !wanted {
            if slow {
                println!("SKIP [{id}] slow criterion (run with -- --include-ignored)");
            }
            continue;
        }
        let v = run();
        println!("{} [{}] {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.line);
        let _ = std::io::stdout().flush();
        verdicts.push(v);
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        verdicts.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
