//! Reference generator, feedback-linearising tracking law for the outputs
//! `(h_e, x_h3)`, and the 15-state closed loop.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{idx, FullState, Inputs, OutputKind, Outputs, TwoSiteModel, DIM};
use crate::normal_form::{self, DecouplingMatrix, Variant};
use crate::sim::{self, IntegratorConfig, Stats, Termination};

/// Roots of the electric error polynomial, `(s + 2.5)^5`.
pub const DEFAULT_ELECTRIC_ROOTS: [f64; 5] = [-2.5; 5];
/// Roots of the heat error polynomial, `(s + 0.25)^3`.
pub const DEFAULT_HEAT_ROOTS: [f64; 3] = [-0.25; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `K > 0`: `y2` is driven to `Y2` through the reference generator.
    Tracking,
    /// `K = 0`: the averaged pressure is held at `σ1(0)`.
    Stabilization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub y1_ref: f64,
    pub y2_ref: f64,
    pub k: f64,
    /// `[α_e1, ..., α_e5]`, ascending powers of `s`.
    pub alpha_e: [f64; 5],
    /// `[α_h1, α_h2, α_h3]`, ascending powers of `s`.
    pub alpha_h: [f64; 3],
    /// Adds `K L_f h_h` to the heat channel so that the heat error follows
    /// its companion dynamics exactly when `K > 0`.
    pub exact_reference_derivative: bool,
}

fn coefficients<const N: usize>(roots: &[Complex<f64>]) -> Result<[f64; N]> {
    if roots.len() != N {
        return Err(Error::Config(format!("expected {N} poles, got {}", roots.len())));
    }
    let c = linalg::poly_from_roots(roots)?;
    Ok(c.try_into().unwrap())
}

impl ControllerConfig {
    pub fn from_roots(
        y1_ref: f64,
        y2_ref: f64,
        k: f64,
        electric: &[Complex<f64>],
        heat: &[Complex<f64>],
    ) -> Result<Self> {
        let cfg = Self {
            y1_ref,
            y2_ref,
            k,
            alpha_e: coefficients(electric)?,
            alpha_h: coefficients(heat)?,
            exact_reference_derivative: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Poles at `-2.5` (electric) and `-0.25` (heat).
    pub fn with_default_poles(y1_ref: f64, y2_ref: f64, k: f64) -> Self {
        let e = DEFAULT_ELECTRIC_ROOTS.map(|r| Complex::new(r, 0.0));
        let h = DEFAULT_HEAT_ROOTS.map(|r| Complex::new(r, 0.0));
        Self::from_roots(y1_ref, y2_ref, k, &e, &h).expect("default poles are Hurwitz")
    }

    pub fn mode(&self) -> Mode {
        if self.k == 0.0 {
            Mode::Stabilization
        } else {
            Mode::Tracking
        }
    }

    pub fn electric_poles(&self) -> Vec<Complex<f64>> {
        linalg::poly_roots(&self.alpha_e)
    }

    pub fn heat_poles(&self) -> Vec<Complex<f64>> {
        linalg::poly_roots(&self.alpha_h)
    }

    /// Finite references, `K >= 0`, and Hurwitz error polynomials.
    pub fn validate(&self) -> Result<()> {
        if !(self.y1_ref.is_finite() && self.y2_ref.is_finite()) {
            return Err(Error::Config("references must be finite".into()));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::Config(format!("K must be finite and non-negative, got {}", self.k)));
        }
        for (name, poles) in [("electric", self.electric_poles()), ("heat", self.heat_poles())] {
            if let Some(p) = poles.iter().find(|p| p.re >= 0.0 || p.re.is_nan()) {
                return Err(Error::Config(format!(
                    "{name} error polynomial is not Hurwitz: root {} {:+}i",
                    p.re, p.im
                )));
            }
        }
        Ok(())
    }
}

/// `(σ̇1, σ̇2)` and `ŷ2ref = σ1`.
pub fn reference_step(model: &TwoSiteModel, sigma: [f64; 2], x: &FullState, cfg: &ControllerConfig) -> ([f64; 2], f64) {
    let hh = x.0[idx::W] * model.derived.kappa;
    ([cfg.k * sigma[1], hh - cfg.y2_ref], sigma[0])
}

/// Inputs and error coordinates at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlEval {
    pub u: Inputs,
    pub xi_tilde_e: [f64; 5],
    pub xi_tilde_h: [f64; 3],
    pub decoupling: DecouplingMatrix,
}

/// Tracking law `u = Â⁻¹ [-L_f^5 h_e - Σ α_ej ξ̃_ej; -L_f^3 x_h3 - Σ α_hj ξ̃_hj]`.
pub fn control_law(model: &TwoSiteModel, x: &FullState, sigma: [f64; 2], cfg: &ControllerConfig) -> Result<ControlEval> {
    let kinds = [OutputKind::ElectricPower, OutputKind::AveragePressure];
    let mut a = [[0.0; 2]; 2];
    let mut he = [0.0; 6];
    let mut hh = [0.0; 4];
    for (col, which) in [1, 2].into_iter().enumerate() {
        let d = model.lie_chains_directional(&kinds, x, &model.g(which), 5)?;
        a[0][col] = d[0][4].d;
        a[1][col] = d[1][2].d;
        if col == 0 {
            for j in 0..6 {
                he[j] = d[0][j].v;
            }
            for j in 0..4 {
                hh[j] = d[1][j].v;
            }
        }
    }
    let heat_out = x.0[idx::W] * model.derived.kappa;
    let xi_tilde_e = [he[0] - cfg.y1_ref, he[1], he[2], he[3], he[4]];
    let xi_tilde_h = [
        hh[0] - sigma[0],
        hh[1] - cfg.k * sigma[1],
        hh[2] - cfg.k * (heat_out - cfg.y2_ref),
    ];
    let ve = -he[5] - cfg.alpha_e.iter().zip(&xi_tilde_e).map(|(a, e)| a * e).sum::<f64>();
    let mut vh = -hh[3] - cfg.alpha_h.iter().zip(&xi_tilde_h).map(|(a, e)| a * e).sum::<f64>();
    if cfg.exact_reference_derivative && cfg.k != 0.0 {
        vh += cfg.k * model.lie_f(OutputKind::HeatFlow, x, 1)?;
    }
    let cf = normal_form::det_decoupling_closed_form(model, x.0[idx::DELTA1], x.0[idx::DELTA2], Variant::Redefined);
    let decoupling = DecouplingMatrix::new(a, cf);
    let u = decoupling.solve([ve, vh], "A_hat")?;
    Ok(ControlEval {
        u: Inputs { u1: u[0], u2: u[1] },
        xi_tilde_e,
        xi_tilde_h,
        decoupling,
    })
}

/// Rates of `(x, σ)` under the tracking law.
pub fn closed_loop_rate(
    model: &TwoSiteModel,
    x: &FullState,
    sigma: [f64; 2],
    cfg: &ControllerConfig,
) -> Result<([f64; DIM], [f64; 2], ControlEval)> {
    let ev = control_law(model, x, sigma, cfg)?;
    let dx = model.rate(x, ev.u)?;
    let (ds, _) = reference_step(model, sigma, x, cfg);
    Ok((dx, ds, ev))
}

/// Extremes of the inputs over the sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationReport {
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    /// Samples with an input outside `[0, 1]`.
    pub violations: usize,
    pub within_nominal: bool,
}

/// Sampled closed-loop trajectory.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub times: Vec<f64>,
    pub states: Vec<FullState>,
    pub sigma: Vec<[f64; 2]>,
    pub inputs: Vec<Inputs>,
    pub outputs: Vec<Outputs>,
    pub xi_tilde_e: Vec<[f64; 5]>,
    pub xi_tilde_h: Vec<[f64; 3]>,
    pub saturation: SaturationReport,
    pub termination: Termination,
    pub stats: Stats,
}

impl ClosedLoopRun {
    /// `ŷ2ref = σ1` at each sample.
    pub fn yhat2_ref(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s[0]).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.termination == Termination::Completed
    }
}

/// Integrates the closed loop from `(x0, σ0)`.
///
/// A controller fault (singular `Â`, non-smooth state) ends the run; the
/// samples up to the fault are kept and the termination records its time.
pub fn simulate_closed_loop(
    model: &TwoSiteModel,
    x0: &FullState,
    sigma0: [f64; 2],
    cfg: &ControllerConfig,
    integ: &IntegratorConfig,
) -> Result<ClosedLoopRun> {
    cfg.validate()?;
    if !normal_form::in_region(model, x0.0[idx::DELTA1], x0.0[idx::DELTA2], Variant::Redefined) {
        return Err(Error::OutsideRegion {
            delta1: x0.0[idx::DELTA1],
            delta2: x0.0[idx::DELTA2],
        });
    }
    let mut y0 = x0.0.to_vec();
    y0.extend_from_slice(&sigma0);
    let traj = sim::integrate(
        |_, y, dy| {
            let x = FullState(y[..DIM].try_into().unwrap());
            let (dx, ds, _) = closed_loop_rate(model, &x, [y[DIM], y[DIM + 1]], cfg)?;
            dy[..DIM].copy_from_slice(&dx);
            dy[DIM..].copy_from_slice(&ds);
            Ok(())
        },
        &y0,
        integ,
    )?;
    let n = traj.times.len();
    let mut run = ClosedLoopRun {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
        xi_tilde_e: Vec::with_capacity(n),
        xi_tilde_h: Vec::with_capacity(n),
        saturation: SaturationReport {
            u_min: [f64::INFINITY; 2],
            u_max: [f64::NEG_INFINITY; 2],
            violations: 0,
            within_nominal: true,
        },
        termination: traj.termination.clone(),
        stats: traj.stats,
    };
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let x = FullState(y[..DIM].try_into().unwrap());
        let sigma = [y[DIM], y[DIM + 1]];
        let ev = match control_law(model, &x, sigma, cfg) {
            Ok(ev) => ev,
            Err(e) => {
                run.termination = Termination::RhsFailure {
                    t: *t,
                    msg: e.to_string(),
                };
                break;
            }
        };
        let s = &mut run.saturation;
        for (i, u) in [ev.u.u1, ev.u.u2].into_iter().enumerate() {
            s.u_min[i] = s.u_min[i].min(u);
            s.u_max[i] = s.u_max[i].max(u);
        }
        if !ev.u.within_nominal() {
            s.violations += 1;
            s.within_nominal = false;
        }
        run.times.push(*t);
        run.outputs.push(model.outputs(&x));
        run.states.push(x);
        run.sigma.push(sigma);
        run.inputs.push(ev.u);
        run.xi_tilde_e.push(ev.xi_tilde_e);
        run.xi_tilde_h.push(ev.xi_tilde_h);
    }
    Ok(run)
}
