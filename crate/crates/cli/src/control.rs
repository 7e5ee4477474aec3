//! `track` and `stabilize`: closed-loop runs of the tracking controller.

use std::path::Path;

use serde::Serialize;
use twosite::analysis;
use twosite::controller::{self, ClosedLoopRun, ControllerConfig, SaturationReport};
use twosite::linalg::Complex;
use twosite::model::DIM;
use twosite::sim::Termination;
use twosite::{FullState, Outputs};

use crate::config::{self, Poles, ScenarioConfig};
use crate::context::Context;
use crate::error::CliError;
use crate::output::num;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Track,
    Stabilize,
}

#[derive(Debug, Serialize)]
struct Target {
    /// Equilibrium for `(Y1, σ1(0))` when stabilizing.
    equilibrium_state: Option<FullState>,
    final_distance: Option<f64>,
    /// `K σ2ref`, the asymptotic rate of `ŷ2ref` when tracking.
    yhat2_ref_rate: Option<f64>,
    sigma2_ref: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    mode: &'static str,
    y1_ref: f64,
    y2_ref: f64,
    k: f64,
    electric_poles: Vec<[f64; 2]>,
    heat_poles: Vec<[f64; 2]>,
    termination: Termination,
    samples: usize,
    final_time: f64,
    final_outputs: Option<Outputs>,
    y1_relative_error: Option<f64>,
    y2_relative_error: Option<f64>,
    saturation: SaturationReport,
    target: Target,
}

fn roots(list: &[config::Root]) -> Vec<Complex<f64>> {
    list.iter().map(|r| r.value()).collect()
}

fn pairs(list: &[Complex<f64>]) -> Vec<[f64; 2]> {
    list.iter().map(|z| [z.re, z.im]).collect()
}

fn poles(cfg: &ScenarioConfig, config_path: Option<&Path>) -> Result<Poles, CliError> {
    if let Some(file) = &cfg.poles_file {
        let dir = config_path.and_then(Path::parent).unwrap_or(Path::new("."));
        let (p, _) = config::load::<Poles>(&dir.join(file))?;
        return Ok(p);
    }
    Ok(cfg.poles.clone().unwrap_or_default())
}

fn rows(run: &ClosedLoopRun) -> Vec<Vec<String>> {
    (0..run.times.len())
        .map(|i| {
            let mut r = Vec::with_capacity(DIM + 8);
            r.push(num(run.times[i]));
            r.push(num(run.outputs[i].y1));
            r.push(num(run.outputs[i].y2));
            r.push(num(run.sigma[i][0]));
            r.extend(run.states[i].0.iter().map(|v| num(*v)));
            r.push(num(run.inputs[i].u1));
            r.push(num(run.inputs[i].u2));
            r.push(num(run.sigma[i][0]));
            r.push(num(run.sigma[i][1]));
            r
        })
        .collect()
}

fn columns() -> Vec<String> {
    let mut c: Vec<String> = ["t", "y1", "y2", "yhat2ref"].map(String::from).to_vec();
    c.extend((1..=DIM).map(|i| format!("x{i}")));
    c.extend(["u1", "u2", "sigma1", "sigma2"].map(String::from));
    c
}

pub fn run(ctx: &mut Context, mode: Mode) -> Result<(), CliError> {
    let mut cfg: ScenarioConfig = ctx.config(None)?;
    if mode == Mode::Stabilize {
        cfg.k = 0.0;
    }
    ctx.record(&cfg);
    cfg.validate()?;
    let p = poles(&cfg, ctx.config_path.as_deref())?;
    let ctrl = ControllerConfig::from_roots(cfg.y1_ref, cfg.y2_ref, cfg.k, &roots(&p.electric), &roots(&p.heat))?;
    if mode == Mode::Track && cfg.k <= 0.0 {
        return Err(CliError::Validation("tracking needs `k` > 0; use `stabilize` for K = 0".into()));
    }
    let model = &ctx.model;
    let x0 = match (&cfg.initial.equilibrium, &cfg.initial.state) {
        (Some([y1, yhat2]), _) => analysis::solve_equilibrium(model, *y1, *yhat2)?.x_star,
        (None, Some(s)) => FullState(s.as_slice().try_into().expect("length validated")),
        (None, None) => unreachable!("validated"),
    };
    let sigma0 = cfg.initial.sigma;

    let target = match mode {
        Mode::Stabilize => {
            let eq = analysis::solve_equilibrium(model, cfg.y1_ref, sigma0[0])?;
            Target {
                equilibrium_state: Some(eq.x_star),
                final_distance: None,
                yhat2_ref_rate: None,
                sigma2_ref: None,
            }
        }
        Mode::Track => {
            let sol = analysis::solve_tracking(model, cfg.y1_ref, cfg.y2_ref, cfg.k)?;
            Target {
                equilibrium_state: None,
                final_distance: None,
                yhat2_ref_rate: Some(cfg.k * sol.sigma2_ref),
                sigma2_ref: Some(sol.sigma2_ref),
            }
        }
    };

    let run = controller::simulate_closed_loop(model, &x0, sigma0, &ctrl, &cfg.integrator)?;
    ctx.out.csv("trajectory.csv", &columns(), &rows(&run))?;

    let last = run.outputs.last().copied();
    let rel = |v: f64, r: f64| (v - r).abs() / r.abs().max(f64::MIN_POSITIVE);
    let mut target = target;
    if let (Some(eq), Some(x)) = (&target.equilibrium_state, run.states.last()) {
        target.final_distance = Some(x.max_abs_diff(eq));
    }
    let summary = Summary {
        mode: match mode {
            Mode::Track => "track",
            Mode::Stabilize => "stabilize",
        },
        y1_ref: cfg.y1_ref,
        y2_ref: cfg.y2_ref,
        k: cfg.k,
        electric_poles: pairs(&ctrl.electric_poles()),
        heat_poles: pairs(&ctrl.heat_poles()),
        termination: run.termination.clone(),
        samples: run.times.len(),
        final_time: run.times.last().copied().unwrap_or(0.0),
        final_outputs: last,
        y1_relative_error: last.map(|y| rel(y.y1, cfg.y1_ref)),
        y2_relative_error: (mode == Mode::Track).then_some(()).and(last.map(|y| rel(y.y2, cfg.y2_ref))),
        saturation: run.saturation,
        target,
    };
    ctx.out.json("summary.json", &summary)?;
    match &run.termination {
        Termination::Completed => Ok(()),
        Termination::RhsFailure { t, msg } => Err(CliError::Numerical(format!("controller fault at t = {t}: {msg}"))),
        other => Err(CliError::Numerical(format!("integration ended early: {other:?}"))),
    }
}
