//! Models, methods and run settings built from a [`Config`].

use std::fs;
use std::path::{Path, PathBuf};

use sdha::harness::{InitialCondition, Method, Observable};
use sdha::models::{
    central_force_system, kubo_system, sample_initial_lb, sample_initial_lorentz, vdp_system, vfp_lb_system,
    vfp_lorentz_system, KuboParams, Model, VfpLbParams, VfpLorentzParams,
};
use sdha::noise::default_truncation;
use sdha::{ForcedHamiltonian, IncrementMode, SolveMode, SolverConfig, SprkTableau, State, WrkTableau};

use crate::config::Config;
use crate::CliError;

pub const THREADS_ENV: &str = "SDHA_THREADS";

pub fn read_config(path: &Path) -> Result<Config, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(Config::parse(&text)?)
}

pub fn model(cfg: &Config) -> Result<Model, CliError> {
    let name = cfg.require_str("model.name")?;
    let model = match name {
        "kubo" => {
            let params = KuboParams {
                q0: cfg.get_or("model.q0", 1.0)?,
                p0: cfg.get_or("model.p0", 0.0)?,
                beta: cfg.get_or("model.beta", 0.5)?,
                nu: cfg.get_or("model.nu", 0.5)?,
            };
            Model::Kubo(kubo_system(params)?)
        }
        "vdp" | "van-der-pol" => Model::VanDerPol(vdp_system(
            cfg.get_or("model.sigma", 0.05)?,
            cfg.get_or("model.nu", 0.001)?,
        )?),
        "lb" | "lenard-bernstein" => {
            let d = VfpLbParams::default();
            let params = VfpLbParams {
                nu: cfg.get_or("model.nu", d.nu)?,
                mu: cfg.get_or("model.mu", d.mu)?,
                d: cfg.get_or("model.d", d.d)?,
                e0: cfg.get_or("model.e0", d.e0)?,
                eps: cfg.get_or("model.eps", d.eps)?,
                a: cfg.get_or("model.a", d.a)?,
                v0: cfg.get_or("model.v0", d.v0)?,
                sigma: cfg.get_or("model.sigma", d.sigma)?,
            };
            Model::LenardBernstein(vfp_lb_system(params)?)
        }
        "lorentz" => {
            let d = VfpLorentzParams::default();
            let params = VfpLorentzParams {
                nu: cfg.get_or("model.nu", d.nu)?,
                e0: cfg.get_or("model.e0", d.e0)?,
                eps1: cfg.get_or("model.eps1", d.eps1)?,
                eps2: cfg.get_or("model.eps2", d.eps2)?,
            };
            Model::Lorentz(vfp_lorentz_system(params)?)
        }
        "central" | "central-force" => {
            Model::CentralForce(central_force_system(cfg.get_or("model.nu", 0.3)?, cfg.get_or("model.beta", 0.5)?)?)
        }
        other => return Err(cfg.invalid("model.name", format!("unknown model `{other}`")).into()),
    };
    Ok(model)
}

fn tableau_text(cfg: &Config, base: &Path) -> Result<(PathBuf, String), CliError> {
    let rel = cfg.require_str("method.tableau")?;
    let path = base.join(rel);
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok((path, text))
}

/// `base` resolves relative tableau paths.
pub fn method(cfg: &Config, base: &Path) -> Result<Method, CliError> {
    let name = cfg.require_str("method.name")?;
    let method = match name {
        "midpoint" => Method::Midpoint,
        "stormer-verlet" | "sv" => Method::StormerVerlet,
        "dirk" => Method::dirk(cfg.get_or("method.lambda", 0.5)?),
        "heun" => Method::Heun,
        "srkw1" => Method::srkw1(cfg.get_or("method.lambda", 0.0)?),
        "srkw2" => Method::srkw2(),
        "sprk" => {
            let (path, text) = tableau_text(cfg, base)?;
            Method::Sprk(SprkTableau::parse(&text).map_err(|source| CliError::Tableau { path, source })?)
        }
        "wrk" => {
            let (path, text) = tableau_text(cfg, base)?;
            Method::Wrk(WrkTableau::parse(&text).map_err(|source| CliError::Tableau { path, source })?)
        }
        other => return Err(cfg.invalid("method.name", format!("unknown method `{other}`")).into()),
    };
    Ok(method)
}

pub fn solver(cfg: &Config) -> Result<SolverConfig, CliError> {
    let d = SolverConfig::default();
    let mode = match cfg.str("solver.mode") {
        None => d.mode,
        Some("fixed-point") => SolveMode::FixedPoint,
        Some("newton") => SolveMode::Newton,
        Some("hybrid") => SolveMode::Hybrid,
        Some(other) => return Err(cfg.invalid("solver.mode", format!("unknown solver mode `{other}`")).into()),
    };
    let s = SolverConfig {
        tol: cfg.get_or("solver.tol", d.tol)?,
        max_iter: cfg.get_or("solver.max_iter", d.max_iter)?,
        fd_jacobian_step: cfg.get_or("solver.fd_step", d.fd_jacobian_step)?,
        mode,
        damping: cfg.get_or("solver.damping", d.damping)?,
        stagnation_tol: cfg.get_or("solver.stagnation_tol", d.stagnation_tol.max(cfg.get_or("solver.tol", d.tol)?))?,
    };
    s.validate()?;
    Ok(s)
}

/// `None` leaves the choice to the method.
pub fn increments(cfg: &Config, dt: f64) -> Result<Option<IncrementMode>, CliError> {
    let mode = match cfg.str("increments") {
        None => None,
        Some("gaussian") => Some(IncrementMode::Gaussian),
        Some("three-point") => Some(IncrementMode::ThreePoint),
        Some("truncated") => Some(IncrementMode::Truncated(cfg.get_or("increments.threshold", default_truncation(dt))?)),
        Some(other) => return Err(cfg.invalid("increments", format!("unknown increment mode `{other}`")).into()),
    };
    Ok(mode)
}

pub fn initial(cfg: &Config, model: &Model) -> Result<InitialCondition, CliError> {
    let mode = cfg.str("initial.mode").unwrap_or("point");
    match mode {
        "point" => {
            let q = cfg.list::<f64>("initial.q")?;
            let p = cfg.list::<f64>("initial.p")?;
            let state = match (q, p, model) {
                (Some(q), Some(p), _) => State::new(&q, &p).map_err(|e| cfg.invalid("initial.q", e.to_string()))?,
                (None, None, Model::Kubo(k)) => k.params.initial_state(),
                (None, None, _) => return Err(CliError::Config(crate::config::ConfigError::Missing("initial.q".into()))),
                _ => return Err(cfg.invalid("initial.q", "initial.q and initial.p must be given together").into()),
            };
            if state.dim() != model.dim() {
                return Err(cfg.invalid("initial.q", format!("model has N = {}", model.dim())).into());
            }
            Ok(InitialCondition::Point(state))
        }
        "sampled" => match model {
            Model::LenardBernstein(lb) => {
                let params = lb.params;
                Ok(InitialCondition::sampled(move |rng| sample_initial_lb(&params, rng)))
            }
            Model::Lorentz(lz) => {
                let params = lz.params;
                Ok(InitialCondition::sampled(move |rng| sample_initial_lorentz(&params, rng)))
            }
            _ => Err(cfg.invalid("initial.mode", "sampled initial conditions exist for lb and lorentz only").into()),
        },
        other => Err(cfg.invalid("initial.mode", format!("unknown initial mode `{other}`")).into()),
    }
}

/// Observables in order with H always first.
pub fn observables(cfg: &Config, model: &Model) -> Result<Vec<Observable>, CliError> {
    let names = cfg.list::<String>("observables")?.unwrap_or_default();
    let mut out = vec![Observable::Hamiltonian];
    for name in names.iter().filter(|n| *n != "H") {
        let o = Observable::parse(name).map_err(|e| cfg.invalid("observables", e.to_string()))?;
        o.check(model).map_err(|e| cfg.invalid("observables", e.to_string()))?;
        if out.iter().any(|x| x.name() == o.name()) {
            return Err(cfg.invalid("observables", format!("`{name}` listed twice")).into());
        }
        out.push(o);
    }
    Ok(out)
}

/// The environment variable wins over the `threads` key.
pub fn threads(cfg: &Config) -> Result<usize, CliError> {
    let from_cfg = cfg.get_or("threads", 0usize)?;
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Env(format!("{THREADS_ENV} = `{v}` is not a thread count"))),
        Err(_) => Ok(from_cfg),
    }
}
