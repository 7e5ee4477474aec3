//! Adaptive Dormand–Prince 5(4) integration with dense output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub horizon: f64,
    pub sample_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 0.5,
            min_step: 1e-10,
            horizon: 10.0,
            sample_dt: 0.01,
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(mut self, horizon: f64, sample_dt: f64) -> Self {
        self.horizon = horizon;
        self.sample_dt = sample_dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.min_step > 0.0
            && self.min_step <= self.max_step
            && self.horizon > 0.0
            && self.sample_dt > 0.0
            && self.sample_dt <= self.horizon;
        if ok && [self.rtol, self.atol, self.max_step, self.horizon].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "integrator settings need rtol, atol > 0, 0 < min_step <= max_step and 0 < sample_dt <= horizon: {self:?}"
            )))
        }
    }

    fn sample_count(&self) -> usize {
        (self.horizon / self.sample_dt + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    Completed,
    StepUnderflow { t: f64, h: f64 },
    NonFinite { t: f64 },
    RhsFailure { t: f64, msg: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// States sampled at `t = i * sample_dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub stats: Stats,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Converts an unsuccessful termination into an error.
    pub fn into_result(self) -> Result<Self> {
        match &self.termination {
            Termination::Completed => Ok(self),
            Termination::StepUnderflow { t, h } => Err(Error::Integration {
                t: *t,
                msg: format!("step size {h:e} below minimum"),
            }),
            Termination::NonFinite { t } => Err(Error::Integration {
                t: *t,
                msg: "non-finite derivative".into(),
            }),
            Termination::RhsFailure { t, msg } => Err(Error::Integration {
                t: *t,
                msg: msg.clone(),
            }),
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - 0.75 * BETA;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

enum StageError {
    NonFinite,
    Rhs(String),
}

struct Rhs<F> {
    f: F,
    evals: usize,
}

impl<F> Rhs<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn call(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> std::result::Result<(), StageError> {
        self.evals += 1;
        (self.f)(t, y, out).map_err(|e| StageError::Rhs(e.to_string()))?;
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(StageError::NonFinite)
        }
    }
}

fn err_norm(e: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = e.len() as f64;
    let s: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(rhs: &mut Rhs<F>, y0: &[f64], f0: &[f64], cfg: &IntegratorConfig) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let scale: Vec<f64> = y0.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(cfg.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if rhs.call(h0, &y1, &mut f1).is_err() {
        return h0.max(cfg.min_step);
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.max_step).max(cfg.min_step)
}

/// Integrates `y' = rhs(t, y)` from `t = 0` over `cfg.horizon`.
///
/// Failures during the run (step underflow, non-finite derivatives, errors
/// returned by `rhs`) end the integration early and are recorded in
/// [`Trajectory::termination`]; the samples reached so far are kept. Only
/// invalid settings produce an `Err`.
pub fn integrate<F>(rhs: F, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    cfg.validate()?;
    let n = x0.len();
    let n_samples = cfg.sample_count();
    let t_end = n_samples as f64 * cfg.sample_dt;
    let mut rhs = Rhs { f: rhs, evals: 0 };
    let mut stats = Stats::default();
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let finish = |times, states, termination, stats: Stats| {
        Ok(Trajectory {
            times,
            states,
            termination,
            stats,
        })
    };

    let mut y = x0.to_vec();
    let mut k1 = vec![0.0; n];
    match rhs.call(0.0, &y, &mut k1) {
        Ok(()) => {}
        Err(StageError::NonFinite) => {
            return finish(times, states, Termination::NonFinite { t: 0.0 }, stats)
        }
        Err(StageError::Rhs(msg)) => {
            return finish(times, states, Termination::RhsFailure { t: 0.0, msg }, stats)
        }
    }
    let mut h = initial_step(&mut rhs, &y, &k1, cfg);
    let mut t = 0.0;
    let mut next = 1usize;
    let mut fac_old: f64 = 1e-4;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ys = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut cont = vec![[0.0; 5]; n];

    while next <= n_samples {
        let remaining = t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < cfg.min_step && remaining > cfg.min_step {
            return finish(times, states, Termination::StepUnderflow { t, h }, stats);
        }
        let stages = (|| -> std::result::Result<(), StageError> {
            for i in 0..n {
                ys[i] = y[i] + h * A21 * k1[i];
            }
            rhs.call(t + C2 * h, &ys, &mut k2)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs.call(t + C3 * h, &ys, &mut k3)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs.call(t + C4 * h, &ys, &mut k4)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs.call(t + C5 * h, &ys, &mut k5)?;
            for i in 0..n {
                ys[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            rhs.call(t + h, &ys, &mut k6)?;
            for i in 0..n {
                y_new[i] = y[i]
                    + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            rhs.call(t + h, &y_new, &mut k7)?;
            Ok(())
        })();
        if let Err(e) = stages {
            stats.rejected += 1;
            stats.rhs_evals = rhs.evals;
            h *= 0.25;
            if h < cfg.min_step {
                let termination = match e {
                    StageError::NonFinite => Termination::NonFinite { t },
                    StageError::Rhs(msg) => Termination::RhsFailure { t, msg },
                };
                return finish(times, states, termination, stats);
            }
            continue;
        }
        for i in 0..n {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = err_norm(&err, &y, &y_new, cfg);
        let fac11 = e.powf(EXPO);
        if e <= 1.0 {
            stats.accepted += 1;
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[i] = [
                    y[i],
                    ydiff,
                    bspl,
                    ydiff - h * k7[i] - bspl,
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]),
                ];
            }
            let t_new = if last { t_end } else { t + h };
            while next <= n_samples {
                let ts = next as f64 * cfg.sample_dt;
                if ts > t_new + 1e-12 * t_end.max(1.0) {
                    break;
                }
                let s = ((ts - t) / h).clamp(0.0, 1.0);
                let s1 = 1.0 - s;
                let sample: Vec<f64> = cont
                    .iter()
                    .map(|c| c[0] + s * (c[1] + s1 * (c[2] + s * (c[3] + s1 * c[4]))))
                    .collect();
                times.push(ts);
                states.push(sample);
                next += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = e.max(1e-4);
            h = (h / fac).min(cfg.max_step);
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    stats.rhs_evals = rhs.evals;
    finish(times, states, Termination::Completed, stats)
}
