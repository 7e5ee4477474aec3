//! `zero-dynamics`: trajectories of the internal dynamics with pinned outputs.

use rayon::prelude::*;
use serde::Serialize;
use twosite::zero_dynamics::{Method, ZeroDynamics, ZeroDynamicsRun, ZeroDynamicsSummary};

use crate::config::ZeroDynamicsConfig;
use crate::context::Context;
use crate::error::CliError;
use crate::output::{header, num};

#[derive(Debug, Serialize)]
struct RunSummary {
    index: usize,
    file: String,
    eta0: [f64; 4],
    termination: String,
    #[serde(flatten)]
    summary: ZeroDynamicsSummary,
}

#[derive(Debug, Serialize)]
struct Summary {
    y1_ref: f64,
    y2_ref: f64,
    method: Method,
    anchor_eta: [f64; 4],
    all_converged: bool,
    min_eta4_drift_rate: f64,
    max_eta4_drift_rate: f64,
    runs: Vec<RunSummary>,
}

fn rows(run: &ZeroDynamicsRun) -> Vec<Vec<String>> {
    (0..run.times.len())
        .map(|i| {
            let mut r = vec![num(run.times[i])];
            r.extend(run.eta[i].iter().map(|v| num(*v)));
            r.extend(run.residual[i].to_array().iter().map(|v| num(*v)));
            r.push(num(run.output_error[i]));
            r
        })
        .collect()
}

pub fn run(ctx: &mut Context) -> Result<(), CliError> {
    let cfg: ZeroDynamicsConfig = ctx.config(None)?;
    cfg.validate()?;
    let zd = ZeroDynamics::new(&ctx.model, cfg.y1_ref, cfg.y2_ref)?;
    let runs: Vec<ZeroDynamicsRun> = cfg
        .initial_conditions
        .par_iter()
        .map(|eta0| match cfg.method {
            Method::Direct => zd.simulate_direct(eta0, &cfg.integrator),
            Method::OutputZeroing => zd.simulate_output_zeroing(eta0, cfg.attraction, &cfg.integrator),
        })
        .collect::<Result<_, _>>()?;

    let cols = header(&["t", "eta1", "eta2", "eta3", "eta4", "F1", "F2", "F3", "F4", "output_error"]);
    let mut summaries = Vec::with_capacity(runs.len());
    for (i, (run, eta0)) in runs.iter().zip(&cfg.initial_conditions).enumerate() {
        let file = format!("zero_dynamics_{i:02}.csv");
        ctx.out.csv(&file, &cols, &rows(run))?;
        summaries.push(RunSummary {
            index: i,
            file,
            eta0: *eta0,
            termination: format!("{:?}", run.termination),
            summary: run.summary(cfg.summary_fraction),
        });
    }
    let rates = summaries.iter().map(|s| s.summary.eta4_drift_rate);
    let summary = Summary {
        y1_ref: cfg.y1_ref,
        y2_ref: cfg.y2_ref,
        method: cfg.method,
        anchor_eta: zd.anchor_eta(),
        all_converged: summaries.iter().all(|s| s.summary.converged),
        min_eta4_drift_rate: rates.clone().fold(f64::INFINITY, f64::min),
        max_eta4_drift_rate: rates.fold(f64::NEG_INFINITY, f64::max),
        runs: summaries,
    };
    ctx.out.json("zero_dynamics_summary.json", &summary)?;
    if let Some(bad) = summary.runs.iter().find(|r| r.termination != "Completed") {
        return Err(CliError::Numerical(format!(
            "run {} ended early: {}",
            bad.index, bad.termination
        )));
    }
    Ok(())
}
