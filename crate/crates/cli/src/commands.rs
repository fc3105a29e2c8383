use std::fs;
use std::path::{Path, PathBuf};

use sdha::harness::{
    estimate_ms_order, estimate_weak_order, histogram, run_ensemble, step_count, uniform_edges, EnsembleConfig,
    Method, Observable, OrderConfig, OrderFit,
};
use sdha::models::{kubo_mean_energy, Model};
use sdha::noise::PathRng;
use sdha::structure::{
    check_quasi_symplectic, conformal_factor, momentum_map_so2, step_jacobian, verify_generating_identity, FD_STEP,
};
use sdha::{
    check_sprk_order_conditions, check_sprk_symplectic_conditions, check_wrk_symplectic_conditions,
    BrownianDriver, ConditionReport, FinePath, ForcedHamiltonian, IncrementMode, SprkTableau, State,
    WrkTableau,
};

use crate::config::Config;
use crate::{csv, experiment as ex, CliError, Outcome};

/// Maximum condition violation accepted by `check-tableau`.
pub const TABLEAU_TOL: f64 = 1e-12;

fn output_path(cfg: &Config, config_path: &Path, out: Option<&Path>) -> PathBuf {
    match (out, cfg.str("output")) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => config_path.parent().unwrap_or(Path::new(".")).join(p),
        (None, None) => config_path.with_extension("csv"),
    }
}

fn base_dir(config_path: &Path) -> &Path {
    config_path.parent().unwrap_or(Path::new("."))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_csv(path: &Path, header: &[String], rows: Vec<Vec<f64>>) -> Result<(), CliError> {
    csv::write(path, header, rows).map_err(|source| CliError::Io { path: path.into(), source })
}

fn sidecar(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

struct HistogramSpec {
    observable: Observable,
    edges: Vec<f64>,
    path: PathBuf,
}

fn histogram_spec(cfg: &Config, model: &Model, out: &Path) -> Result<Option<HistogramSpec>, CliError> {
    let Some(name) = cfg.str("histogram.observable") else {
        return Ok(None);
    };
    let observable = Observable::parse(name)
        .and_then(|o| o.check(model).map(|_| o))
        .map_err(|e| cfg.invalid("histogram.observable", e.to_string()))?;
    let lo: f64 = cfg.require("histogram.lo")?;
    let hi: f64 = cfg.require("histogram.hi")?;
    let bins: usize = cfg.get_or("histogram.bins", 50)?;
    if !(lo < hi) || bins == 0 {
        return Err(cfg.invalid("histogram.lo", "need lo < hi and at least one bin").into());
    }
    let path = match cfg.str("histogram.output") {
        Some(p) => out.parent().unwrap_or(Path::new(".")).join(p),
        None => out.with_extension("hist.csv"),
    };
    Ok(Some(HistogramSpec { observable, edges: uniform_edges(lo, hi, bins), path }))
}

pub fn run(config_path: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = ex::read_config(config_path)?;
    let model = ex::model(&cfg)?;
    let method = ex::method(&cfg, base_dir(config_path))?;
    let dt: f64 = cfg.require("dt")?;
    let t_end: f64 = cfg.require("t_end")?;
    let steps = step_count(t_end, dt).map_err(|e| cfg.invalid("dt", e.to_string()))?;
    let record_stride: usize = cfg.get_or("record_stride", 1)?;
    if record_stride == 0 || steps % record_stride != 0 {
        return Err(cfg.invalid("record_stride", format!("must divide the {steps} steps")).into());
    }
    let out_path = output_path(&cfg, config_path, out);
    let hist = histogram_spec(&cfg, &model, &out_path)?;
    let ens = EnsembleConfig {
        master_seed: cfg.get_or("master_seed", 0)?,
        observables: ex::observables(&cfg, &model)?,
        record_stride,
        increments: ex::increments(&cfg, dt)?,
        solver: ex::solver(&cfg)?,
        threads: ex::threads(&cfg)?,
        keep_final_states: hist.is_some(),
        ..EnsembleConfig::new(method, dt, t_end, cfg.require("n_paths")?, ex::initial(&cfg, &model)?)
    };
    cfg.reject_unused()?;

    let series = run_ensemble(&model, &ens)?;
    let mut header = vec!["t".to_string()];
    for name in &series.observables {
        header.push(format!("mean_{name}"));
        header.push(format!("sem_{name}"));
    }
    let rows = series
        .times
        .iter()
        .zip(series.mean.iter().zip(&series.sem))
        .map(|(t, (m, s))| std::iter::once(*t).chain(m.iter().zip(s).flat_map(|(a, b)| [*a, *b])).collect())
        .collect();
    write_csv(&out_path, &header, rows)?;

    let mut meta = format!("# sdha run\n{}", cfg.echo());
    meta += &format!("result.method = {}\n", ens.method.name());
    meta += &format!("result.n_paths = {}\nresult.n_failed = {}\n", series.n_paths, series.n_failed);
    meta += &format!("result.degraded = {}\n", series.degraded);
    if let Some((path, step)) = series.failures.first() {
        meta += &format!("result.first_failure = path {path} step {step}\n");
    }
    write_file(&sidecar(&out_path), &meta)?;

    if let Some(h) = hist {
        let samples: Vec<f64> = series
            .final_states
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|z| h.observable.eval(&model, z))
            .collect();
        // normalise by all paths, so failed paths lower the total mass
        let mut hg = histogram(&samples, &h.edges)?;
        let scale = samples.len() as f64 / series.n_paths as f64;
        hg.density.iter_mut().for_each(|d| *d *= scale);
        let rows = h.edges.windows(2).zip(&hg.density).map(|(w, d)| vec![w[0], w[1], *d]).collect();
        write_csv(&h.path, &["bin_left".into(), "bin_right".into(), "density".into()], rows)?;
        println!("histogram: {}", h.path.display());
    }

    println!("{}: {} paths, {} failed -> {}", ens.method.name(), series.n_paths, series.n_failed, out_path.display());
    if series.degraded {
        eprintln!("warning: ensemble degraded, {} of {} paths failed", series.n_failed, series.n_paths);
        return Ok(Outcome::Degraded);
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableauKind {
    Sprk,
    Wrk,
}

fn print_report(title: &str, report: &ConditionReport) {
    println!("{title}");
    for c in &report.conditions {
        let mark = if c.max_violation <= report.tol { "ok" } else { "VIOLATED" };
        println!("  {:<40} {:>12.3e}  {mark}", c.name, c.max_violation);
    }
}

pub fn check_tableau(path: &Path, kind: Option<TableauKind>) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let kind = kind.unwrap_or_else(|| {
        let weak = text.lines().any(|l| l.split('#').next().unwrap_or("").trim() == "a0");
        if weak {
            TableauKind::Wrk
        } else {
            TableauKind::Sprk
        }
    });
    let parse_err = |source| CliError::Tableau { path: path.into(), source };
    let report = match kind {
        TableauKind::Sprk => {
            let t = SprkTableau::parse(&text).map_err(parse_err)?;
            if !t.dims_consistent() {
                return Err(CliError::Incompatible(format!("{}: inconsistent block sizes", path.display())));
            }
            println!("{} (s = {})", t.name, t.s);
            let report = check_sprk_symplectic_conditions(&t, TABLEAU_TOL);
            print_report("symplecticity conditions", &report);
            // order conditions are informational
            print_report("order conditions (informational)", &check_sprk_order_conditions(&t, TABLEAU_TOL));
            report
        }
        TableauKind::Wrk => {
            let t = WrkTableau::parse(&text).map_err(parse_err)?;
            println!("{} (s = {})", t.name, t.s);
            let report = check_wrk_symplectic_conditions(&t, TABLEAU_TOL);
            print_report("symplecticity conditions", &report);
            report
        }
    };
    if report.passed() {
        println!("all conditions hold to {TABLEAU_TOL:e}");
        Ok(Outcome::Success)
    } else {
        let names: Vec<&str> = report.violated().into_iter().map(|i| report.conditions[i].name.as_str()).collect();
        println!("violated: {}", names.join(", "));
        Ok(Outcome::Violated)
    }
}

pub fn order(config_path: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = ex::read_config(config_path)?;
    let dts: Vec<f64> = cfg.list("order.dts")?.ok_or_else(|| crate::config::ConfigError::Missing("order.dts".into()))?;
    if dts.len() < 4 {
        return Err(cfg.invalid("order.dts", format!("need at least 4 step sizes, got {}", dts.len())).into());
    }
    let model = ex::model(&cfg)?;
    let method = ex::method(&cfg, base_dir(config_path))?;
    let kind = cfg.str("order.kind").unwrap_or(if method.is_weak() { "weak" } else { "ms" }).to_string();
    let ocfg = OrderConfig {
        dts,
        t_end: cfg.require("t_end")?,
        n_paths: cfg.require("n_paths")?,
        master_seed: cfg.get_or("master_seed", 0)?,
        solver: ex::solver(&cfg)?,
        threads: ex::threads(&cfg)?,
    };
    let out_path = output_path(&cfg, config_path, out);
    cfg.reject_unused()?;
    let Model::Kubo(kubo) = &model else {
        return Err(CliError::Incompatible("order estimates need the kubo model's exact solution".into()));
    };
    let fit: OrderFit = match kind.as_str() {
        "ms" => estimate_ms_order(kubo, &method, &ocfg)?,
        "weak" => {
            let exact = kubo_mean_energy(&kubo.params, ocfg.t_end);
            let z0 = kubo.params.initial_state();
            estimate_weak_order(kubo, &method, &ocfg, &z0, &Observable::Hamiltonian, exact)?
        }
        other => return Err(cfg.invalid("order.kind", format!("unknown order kind `{other}`")).into()),
    };
    println!("{} {kind} order, T = {}, {} paths", method.name(), ocfg.t_end, ocfg.n_paths);
    println!("{:>14} {:>14} {:>12}", "dt", "error", "sem");
    for ((dt, e), s) in fit.dts.iter().zip(&fit.errors).zip(&fit.sems) {
        println!("{dt:>14.6e} {e:>14.6e} {s:>12.3e}");
    }
    println!("slope {:.4}", fit.slope);
    let rows = fit.dts.iter().zip(&fit.errors).map(|(d, e)| vec![*d, e.abs()]).collect();
    write_csv(&out_path, &["dt".into(), "error".into()], rows)?;
    if fit.n_failed > 0 {
        eprintln!("warning: {} paths failed and were excluded", fit.n_failed);
    }
    if fit.inconclusive {
        eprintln!("inconclusive: some bias is within 2 sem of zero");
        return Ok(Outcome::Inconclusive);
    }
    Ok(Outcome::Success)
}

/// Per-step linear forcing rates when every generator is a multiple of the identity.
fn scalar_rates(model: &Model) -> Option<Vec<f64>> {
    let lf = model.linear_forcing()?;
    let n = lf.dim();
    lf.gammas()
        .iter()
        .map(|g| {
            let nu = g[0];
            let scalar = (0..n).all(|i| (0..n).all(|j| g[i * n + j] == if i == j { nu } else { 0.0 }));
            scalar.then_some(nu)
        })
        .collect()
}

fn method_tableau(method: &Method) -> Option<SprkTableau> {
    match method {
        Method::Midpoint => Some(SprkTableau::midpoint()),
        Method::StormerVerlet => Some(SprkTableau::stormer_verlet()),
        Method::Dirk { tableau, .. } | Method::Sprk(tableau) => Some(tableau.clone()),
        Method::Heun | Method::Wrk(_) => None,
    }
}

fn is_forced(model: &Model, states: &[State]) -> bool {
    let n = model.dim();
    let mut f = vec![0.0; n];
    states.iter().any(|z| {
        model.force(z.q(), z.p(), &mut f);
        let mut any = f.iter().any(|v| *v != 0.0);
        for r in 0..model.noise_dim() {
            model.noise_force(r, z.q(), z.p(), &mut f);
            any |= f.iter().any(|v| *v != 0.0);
        }
        any
    })
}

fn pass_or_fail(ok: bool) -> Outcome {
    println!("{}", if ok { "PASS" } else { "FAIL" });
    if ok {
        Outcome::Success
    } else {
        Outcome::Violated
    }
}

pub fn structure(config_path: &Path) -> Result<Outcome, CliError> {
    let cfg = ex::read_config(config_path)?;
    let check = cfg.require_str("structure.check")?.to_string();
    let model = ex::model(&cfg)?;
    let method = ex::method(&cfg, base_dir(config_path))?;
    let solver = ex::solver(&cfg)?;
    let dt: f64 = cfg.require("dt")?;
    let seed: u64 = cfg.get_or("master_seed", 0)?;
    let n_states: usize = cfg.get_or("structure.states", 20)?;
    let n_samples: usize = cfg.get_or("structure.samples", 5)?;
    let default_tol = match check.as_str() {
        "symplectic" | "qs-det" => 1e-6,
        "conformal" => 1e-3,
        "noether" => 1e-8,
        "generating" => 1e-5,
        other => return Err(cfg.invalid("structure.check", format!("unknown check `{other}`")).into()),
    };
    let tol: f64 = cfg.get_or("structure.tol", default_tol)?;
    let steps = match check.as_str() {
        "noether" | "conformal" => {
            let t_end: f64 = cfg.require("t_end")?;
            step_count(t_end, dt).map_err(|e| cfg.invalid("t_end", e.to_string()))?
        }
        _ => 0,
    };
    cfg.reject_unused()?;

    let n = model.dim();
    let m = model.noise_dim();
    let mut rng = PathRng::from_seed(seed);
    let states: Vec<State> = (0..n_states)
        .map(|_| State::from_flat(&(0..2 * n).map(|_| rng.normal()).collect::<Vec<_>>()))
        .collect::<sdha::Result<_>>()?;
    let mut draw_dw = || -> Vec<f64> { (0..m).map(|_| dt.sqrt() * rng.normal()).collect() };
    println!("{check}: {} on {}, dt = {dt}", method.name(), model_name(&model));

    match check.as_str() {
        "symplectic" => {
            let (mut unit, mut conformal) = (0f64, 0f64);
            let (mut c_lo, mut c_hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for z in &states {
                let dw = draw_dw();
                let rep = step_jacobian(|x| Ok(method.step(&model, x, dt, &dw, &solver)?.0), z, FD_STEP)?;
                unit = unit.max(rep.unit_residual);
                conformal = conformal.max(rep.symplectic_residual);
                c_lo = c_lo.min(rep.conformal_factor_fitted);
                c_hi = c_hi.max(rep.conformal_factor_fitted);
            }
            println!("max |D^T J D - J|            {unit:.3e}");
            println!("max |D^T J D - c J|          {conformal:.3e}");
            println!("fitted c in                  [{c_lo:.12}, {c_hi:.12}]");
            if unit > tol && is_forced(&model, &states) {
                println!("note: the model is forced, so the step is not expected to be symplectic (c != 1)");
                return Ok(Outcome::Success);
            }
            Ok(pass_or_fail(unit <= tol))
        }
        "conformal" => {
            let Some(rates) = scalar_rates(&model) else {
                return Err(CliError::Incompatible("conformal check needs scalar linear forcing".into()));
            };
            let mut driver = BrownianDriver::new(seed, 0, m, dt, IncrementMode::Gaussian)?;
            let path = FinePath::generate(&mut driver, steps);
            let totals: Vec<f64> = (0..m).map(|r| path.total(r)).collect();
            let expected = conformal_factor(&rates, steps as f64 * dt, &totals);
            let flow = |x: &State| {
                let mut z = x.clone();
                for dw in path.rows() {
                    z = method.step(&model, &z, dt, dw, &solver)?.0;
                }
                Ok(z)
            };
            let rep = step_jacobian(flow, &states[0], FD_STEP)?;
            let rel = (rep.conformal_factor_fitted / expected - 1.0).abs();
            println!("fitted c                     {:.12}", rep.conformal_factor_fitted);
            println!("exp(-nu T - sum nu_r W_r)    {expected:.12}");
            println!("relative deviation           {rel:.3e}");
            println!("residual |D^T J D - c J|     {:.3e}", rep.symplectic_residual);
            Ok(pass_or_fail(rel <= tol))
        }
        "qs-det" => {
            if method != Method::StormerVerlet {
                return Err(CliError::Incompatible("qs-det applies to stormer-verlet".into()));
            }
            let (mut dev, mut dev_literal, mut spread) = (0f64, 0f64, 0f64);
            for _ in 0..n_samples {
                let dw = draw_dw();
                let rep = check_quasi_symplectic(&model, &states, dt, &dw, &solver)?;
                dev = dev.max(rep.max_relative_deviation_negated);
                dev_literal = dev_literal.max(rep.max_relative_deviation);
                spread = spread.max(rep.spread);
            }
            println!("det((I - G/2)(I + G/2)^-1) rel. deviation   {dev:.3e}");
            println!("det(I + G(I - G/2)^-1) rel. deviation       {dev_literal:.3e}");
            println!("spread across states                        {spread:.3e}");
            Ok(pass_or_fail(dev <= tol && spread <= 1e-8))
        }
        "noether" => {
            let mut driver = BrownianDriver::new(seed, 0, m, dt, IncrementMode::Gaussian)?;
            let mut z = states[0].clone();
            let j0 = momentum_map_so2(&z)?;
            let mut dw = vec![0.0; m];
            let mut drift = 0f64;
            for _ in 0..steps {
                driver.next_increments(&mut dw);
                z = method.step(&model, &z, dt, &dw, &solver)?.0;
                drift = drift.max((momentum_map_so2(&z)? - j0).abs());
            }
            println!("J_0                          {j0:.15}");
            println!("J_K                          {:.15}", momentum_map_so2(&z)?);
            println!("max |J_k - J_0| over {steps} steps  {drift:.3e}");
            Ok(pass_or_fail(drift <= tol))
        }
        "generating" => {
            let Some(t) = method_tableau(&method) else {
                return Err(CliError::Incompatible(format!("{} has no discrete Hamiltonian", method.name())));
            };
            let (mut rq, mut rp) = (0f64, 0f64);
            for z in &states {
                let dw = draw_dw();
                let r = verify_generating_identity(&model, &t, z, dt, &dw, &solver)?;
                rq = rq.max(r.r_q);
                rp = rp.max(r.r_p);
            }
            println!("max r_q                      {rq:.3e}");
            println!("max r_p                      {rp:.3e}");
            Ok(pass_or_fail(rq <= tol && rp <= tol))
        }
        _ => unreachable!("checked above"),
    }
}

fn model_name(model: &Model) -> &'static str {
    match model {
        Model::Kubo(_) => "kubo",
        Model::VanDerPol(_) => "vdp",
        Model::LenardBernstein(_) => "lb",
        Model::Lorentz(_) => "lorentz",
        Model::CentralForce(_) => "central",
    }
}
