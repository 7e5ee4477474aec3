//! `check`: relative-degree identities and jet/oracle agreement at random states.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use twosite::jets::{lie_f_series, oracle::fd_oracle_series};
use twosite::model::idx;
use twosite::normal_form;
use twosite::{FullState, OutputKind, TwoSiteModel};

use crate::context::Context;
use crate::error::CliError;
use crate::output::{header, num};

pub const VANISHING_TOL: f64 = 1e-8;
pub const GENERIC_MIN: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-4;

const KINDS: [OutputKind; 3] = [OutputKind::ElectricPower, OutputKind::HeatFlow, OutputKind::AveragePressure];

#[derive(Debug, Clone, Copy)]
struct Sample {
    x: FullState,
    max_vanishing: f64,
    electric_gain: f64,
    redefined_gain: f64,
    oracle_error: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    samples: usize,
    oracle_samples: usize,
    seed: u64,
    max_vanishing: f64,
    min_electric_gain: f64,
    min_redefined_gain: f64,
    max_oracle_error: f64,
    relative_degree_ok: bool,
    oracle_ok: bool,
}

/// Largest annihilated term, then `max_i |L_gi L_f^4 h_e|` and `max_i |L_gi L_f^2 x_h3|`.
fn relative_degree(m: &TwoSiteModel, x: &FullState) -> twosite::Result<(f64, f64, f64)> {
    let mut zero = 0.0f64;
    let (mut e4, mut h2) = (0.0f64, 0.0f64);
    for which in [1, 2] {
        let d = m.lie_chains_directional(&KINDS, x, &m.g(which), 4)?;
        for (chain, upto) in d.iter().zip([3, 2, 1]) {
            for term in &chain[..=upto] {
                zero = zero.max(term.d.abs());
            }
        }
        e4 = e4.max(d[0][4].d.abs());
        h2 = h2.max(d[2][2].d.abs());
    }
    Ok((zero, e4, h2))
}

fn oracle_error(m: &TwoSiteModel, x: &FullState) -> twosite::Result<f64> {
    let hs: Vec<_> = KINDS.iter().map(|&k| m.output(k)).collect();
    let jet = lie_f_series(m, &hs, &x.0, 4)?;
    let fd = fd_oracle_series(m, &hs, &x.0, 4)?;
    Ok(jet
        .iter()
        .zip(&fd)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs() / p.abs().max(1.0)))
        .fold(0.0, f64::max))
}

pub fn run(ctx: &mut Context, samples: usize, oracle_samples: usize) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::Validation("--samples must be at least 1".into()));
    }
    let oracle_samples = oracle_samples.min(samples);
    ctx.record(&serde_json::json!({ "samples": samples, "oracle_samples": oracle_samples }));
    let model = &ctx.model;
    let mut rng = StdRng::seed_from_u64(ctx.seed);
    let states: Vec<FullState> = (0..samples)
        .map(|_| normal_form::sample_admissible_state(model, |lo, hi| rng.random_range(lo..hi)))
        .collect();
    let results: Vec<Sample> = states
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let (max_vanishing, electric_gain, redefined_gain) = relative_degree(model, x)?;
            let oracle_error = if i < oracle_samples { Some(oracle_error(model, x)?) } else { None };
            Ok(Sample {
                x: *x,
                max_vanishing,
                electric_gain,
                redefined_gain,
                oracle_error,
            })
        })
        .collect::<twosite::Result<_>>()?;

    let cols = header(&["index", "x_e1", "x_e3", "w", "max_vanishing", "electric_gain", "redefined_gain", "oracle_error"]);
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                num(s.x.0[idx::DELTA1]),
                num(s.x.0[idx::DELTA2]),
                num(s.x.0[idx::W]),
                num(s.max_vanishing),
                num(s.electric_gain),
                num(s.redefined_gain),
                num(s.oracle_error.unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    ctx.out.csv("check.csv", &cols, &rows)?;

    let fold = |f: fn(&Sample) -> f64, init: f64, op: fn(f64, f64) -> f64| results.iter().map(f).fold(init, op);
    let max_vanishing = fold(|s| s.max_vanishing, 0.0, f64::max);
    let min_electric_gain = fold(|s| s.electric_gain, f64::INFINITY, f64::min);
    let min_redefined_gain = fold(|s| s.redefined_gain, f64::INFINITY, f64::min);
    let max_oracle_error = fold(|s| s.oracle_error.unwrap_or(0.0), 0.0, f64::max);
    let summary = Summary {
        samples,
        oracle_samples,
        seed: ctx.seed,
        max_vanishing,
        min_electric_gain,
        min_redefined_gain,
        max_oracle_error,
        relative_degree_ok: max_vanishing < VANISHING_TOL
            && min_electric_gain > GENERIC_MIN
            && min_redefined_gain > GENERIC_MIN,
        oracle_ok: max_oracle_error < ORACLE_TOL,
    };
    ctx.out.json("check_summary.json", &summary)?;
    if !(summary.relative_degree_ok && summary.oracle_ok) {
        return Err(CliError::Numerical(format!(
            "check failed: max vanishing term {max_vanishing:e}, min gains {min_electric_gain:e} / {min_redefined_gain:e}, max oracle error {max_oracle_error:e}"
        )));
    }
    Ok(())
}
