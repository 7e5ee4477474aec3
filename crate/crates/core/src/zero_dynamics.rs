//! Zero dynamics of the original outputs, invariant-manifold residuals, and
//! the linearised internal dynamics behind the minimum-phase tests.

use std::cell::RefCell;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, EquilibriumSolution, ReferencePoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{idx, FrictionLaw, FullState, OutputKind, TwoSiteModel, DIM};
use crate::normal_form::{self, NormalCoords, NormalCoordsHat, Variant, ELECTRIC_DEGREE};
use crate::sim::{self, IntegratorConfig, Termination};

/// `(x_g3, x_e1, x_e2, x_h3)`.
pub const ETA: [usize; 4] = [idx::WT1, idx::DELTA1, idx::OMEGA1, idx::XH3];
/// `(x_g3, x_e1, x_e2, x_h1, x_h2)`.
pub const ETA_HAT: [usize; 5] = [idx::WT1, idx::DELTA1, idx::OMEGA1, idx::XH1, idx::W];

/// Continuation steps used when a direct inversion from the guess fails.
const CONTINUATION_STEPS: usize = 8;
/// Relative step of the central differences for `∂q̂`.
pub const FD_STEP: f64 = 1e-6;

/// `F(η) = q(ξ*, η)`; the first three vanish on the invariant manifold and
/// `f4` is the rate of `η4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldResidual {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

impl ManifoldResidual {
    fn from_array(q: [f64; 4]) -> Self {
        Self {
            f1: q[0],
            f2: q[1],
            f3: q[2],
            f4: q[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.f1, self.f2, self.f3, self.f4]
    }

    /// `max(|F1|, |F2|, |F3|)`.
    pub fn off_manifold(&self) -> f64 {
        self.f1.abs().max(self.f2.abs()).max(self.f3.abs())
    }
}

/// Rates of `η` at a full state.
pub fn internal_rate(model: &TwoSiteModel, x: &FullState) -> Result<[f64; 4]> {
    let f = model.f(x)?;
    Ok(ETA.map(|i| f[i]))
}

/// Rates of `η̂` at a full state.
pub fn internal_rate_hat(model: &TwoSiteModel, x: &FullState) -> Result<[f64; 5]> {
    let f = model.f(x)?;
    Ok(ETA_HAT.map(|i| f[i]))
}

fn with_components<const N: usize>(x: &FullState, at: [usize; N], v: &[f64; N]) -> FullState {
    let mut y = *x;
    for (k, &i) in at.iter().enumerate() {
        y.0[i] = v[k];
    }
    y
}

/// Zero dynamics with outputs pinned at `(Y1, Y2)`.
#[derive(Debug, Clone)]
pub struct ZeroDynamics<'a> {
    model: &'a TwoSiteModel,
    pub y1_ref: f64,
    pub y2_ref: f64,
    anchor: FullState,
}

impl<'a> ZeroDynamics<'a> {
    pub fn new(model: &'a TwoSiteModel, y1_ref: f64, y2_ref: f64) -> Result<Self> {
        if y2_ref.is_nan() || y2_ref <= 0.0 {
            return Err(Error::Config(format!(
                "pinned heat flow must be positive for a smooth zero dynamics, got {y2_ref}"
            )));
        }
        let anchor = analysis::solve_reference_point(model, y1_ref, y2_ref)?.x_ref;
        Ok(Self {
            model,
            y1_ref,
            y2_ref,
            anchor,
        })
    }

    pub fn model(&self) -> &TwoSiteModel {
        self.model
    }

    /// `η` of a full state lying on the pinned set, such as an equilibrium.
    pub fn anchor_eta(&self) -> [f64; 4] {
        ETA.map(|i| self.anchor.0[i])
    }

    pub fn pinned(&self, eta: &[f64; 4]) -> NormalCoords {
        NormalCoords {
            xi_e: [self.y1_ref, 0.0, 0.0, 0.0, 0.0],
            xi_h: [self.y2_ref, 0.0, 0.0, 0.0],
            eta: *eta,
        }
    }

    /// `Φ⁻¹(ξ*, η)`, warm-started from `guess` with its `η` components replaced.
    pub fn state(&self, eta: &[f64; 4], guess: Option<&FullState>) -> Result<FullState> {
        let start = with_components(guess.unwrap_or(&self.anchor), ETA, eta);
        let z = self.pinned(eta);
        match normal_form::phi_inverse(self.model, &z, &start) {
            Ok(x) => Ok(x),
            Err(direct) => {
                let from = self.anchor_eta();
                let mut x = self.anchor;
                for k in 1..=CONTINUATION_STEPS {
                    let s = k as f64 / CONTINUATION_STEPS as f64;
                    let e: [f64; 4] = std::array::from_fn(|i| from[i] + s * (eta[i] - from[i]));
                    x = normal_form::phi_inverse(self.model, &self.pinned(&e), &with_components(&x, ETA, &e))
                        .map_err(|_| direct.clone())?;
                }
                Ok(x)
            }
        }
    }

    /// `q(ξ*, η)` together with the reconstructed full state.
    pub fn q_eval(&self, eta: &[f64; 4], guess: Option<&FullState>) -> Result<([f64; 4], FullState)> {
        let x = self.state(eta, guess)?;
        Ok((internal_rate(self.model, &x)?, x))
    }

    pub fn manifold_residual(&self, eta: &[f64; 4], guess: Option<&FullState>) -> Result<ManifoldResidual> {
        Ok(ManifoldResidual::from_array(self.q_eval(eta, guess)?.0))
    }

    /// Output-zeroing input with attraction to the pinned outputs.
    ///
    /// Solves `A(x) u = -[L_f^5 h_e + Σ a_j e_ej; L_f^4 h_h + Σ b_j e_hj]` with
    /// `e` the deviation of the output derivative chains from their pinned
    /// values; `a`, `b` place all poles at `-attraction`. With
    /// `attraction = 0` this is the exact output-zeroing input.
    pub fn zeroing_input(&self, x: &FullState, attraction: f64) -> Result<([f64; 2], f64)> {
        let m = self.model;
        let kinds = [OutputKind::ElectricPower, OutputKind::HeatFlow];
        let mut a = [[0.0; 2]; 2];
        let mut chains = [[0.0; 6]; 2];
        for (col, which) in [1, 2].into_iter().enumerate() {
            let d = m.lie_chains_directional(&kinds, x, &m.g(which), ELECTRIC_DEGREE)?;
            a[0][col] = d[0][4].d;
            a[1][col] = d[1][3].d;
            if col == 0 {
                for j in 0..6 {
                    chains[0][j] = d[0][j].v;
                    chains[1][j] = d[1][j].v;
                }
            }
        }
        let pe = attraction_coefficients(attraction, 5);
        let ph = attraction_coefficients(attraction, 4);
        let target_e = [self.y1_ref, 0.0, 0.0, 0.0, 0.0];
        let target_h = [self.y2_ref, 0.0, 0.0, 0.0];
        let mut err = 0.0f64;
        let mut re = -chains[0][5];
        for j in 0..5 {
            let e = chains[0][j] - target_e[j];
            err = err.max(e.abs());
            re -= pe[j] * e;
        }
        let mut rh = -chains[1][4];
        for j in 0..4 {
            let e = chains[1][j] - target_h[j];
            err = err.max(e.abs());
            rh -= ph[j] * e;
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let scale = a[0][0].hypot(a[0][1]) * a[1][0].hypot(a[1][1]);
        if !(det.abs() >= linalg::SINGULAR_RATIO * scale && scale > 0.0) {
            return Err(Error::Singular { what: "A", det });
        }
        let u = [
            (a[1][1] * re - a[0][1] * rh) / det,
            (a[0][0] * rh - a[1][0] * re) / det,
        ];
        Ok((u, err))
    }

    /// Integrates `η̇ = q(ξ*, η)` with a Newton inversion per stage.
    pub fn simulate_direct(&self, eta0: &[f64; 4], cfg: &IntegratorConfig) -> Result<ZeroDynamicsRun> {
        let warm = RefCell::new(self.state(eta0, None)?);
        let traj = sim::integrate(
            |_, y, dy| {
                let eta: [f64; 4] = y.try_into().unwrap();
                let guess = *warm.borrow();
                let (q, x) = self.q_eval(&eta, Some(&guess))?;
                *warm.borrow_mut() = x;
                dy.copy_from_slice(&q);
                Ok(())
            },
            eta0,
            cfg,
        )?;
        let mut guess = self.state(eta0, None)?;
        let mut run = ZeroDynamicsRun::with_capacity(Method::Direct, traj.times.len());
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let eta: [f64; 4] = y.as_slice().try_into().unwrap();
            let (q, x) = self.q_eval(&eta, Some(&guess))?;
            guess = x;
            run.push(*t, eta, ManifoldResidual::from_array(q), 0.0);
        }
        run.termination = traj.termination;
        Ok(run)
    }

    /// Integrates the full state from `Φ⁻¹(ξ*, η0)` under [`Self::zeroing_input`].
    pub fn simulate_output_zeroing(
        &self,
        eta0: &[f64; 4],
        attraction: f64,
        cfg: &IntegratorConfig,
    ) -> Result<ZeroDynamicsRun> {
        let x0 = self.state(eta0, None)?;
        let m = self.model;
        let traj = sim::integrate(
            |_, y, dy| {
                let x = FullState(y.try_into().unwrap());
                let (u, _) = self.zeroing_input(&x, attraction)?;
                let r = m.rate(&x, crate::model::Inputs { u1: u[0], u2: u[1] })?;
                dy.copy_from_slice(&r);
                Ok(())
            },
            &x0.0,
            cfg,
        )?;
        let mut run = ZeroDynamicsRun::with_capacity(Method::OutputZeroing, traj.times.len());
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let x = FullState(y.as_slice().try_into().unwrap());
            let eta = ETA.map(|i| x.0[i]);
            let (_, err) = self.zeroing_input(&x, attraction)?;
            let q = self.manifold_residual(&eta, Some(&x))?;
            run.push(*t, eta, q, err);
        }
        run.termination = traj.termination;
        Ok(run)
    }
}

/// Ascending coefficients of `(s + λ)^n` without the leading one.
fn attraction_coefficients(lambda: f64, n: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] += lambda * ck;
        }
        c = next;
    }
    c.pop();
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Integration of `q` through repeated inversion of `Φ`.
    Direct,
    /// Full-state integration under the output-zeroing input.
    OutputZeroing,
}

/// Sampled zero-dynamics trajectory.
#[derive(Debug, Clone)]
pub struct ZeroDynamicsRun {
    pub method: Method,
    pub times: Vec<f64>,
    pub eta: Vec<[f64; 4]>,
    pub residual: Vec<ManifoldResidual>,
    /// Max deviation of the output chains from their pinned values.
    pub output_error: Vec<f64>,
    pub termination: Termination,
}

/// Convergence verdicts over the final part of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroDynamicsSummary {
    /// Peak-to-peak variation of `η1..η3` over the window.
    pub eta_variation: [f64; 3],
    /// `max(|F1|, |F2|, |F3|)` at the last sample.
    pub final_residual: f64,
    /// Least-squares slope of `η4` over the window.
    pub eta4_drift_rate: f64,
    pub converged: bool,
}

/// Tolerances of [`ZeroDynamicsRun::summary`].
pub const VARIATION_TOL: f64 = 1e-3;
pub const RESIDUAL_TOL: f64 = 1e-4;

impl ZeroDynamicsRun {
    fn with_capacity(method: Method, n: usize) -> Self {
        Self {
            method,
            times: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            residual: Vec::with_capacity(n),
            output_error: Vec::with_capacity(n),
            termination: Termination::Completed,
        }
    }

    fn push(&mut self, t: f64, eta: [f64; 4], r: ManifoldResidual, err: f64) {
        self.times.push(t);
        self.eta.push(eta);
        self.residual.push(r);
        self.output_error.push(err);
    }

    /// Verdicts over the trailing `fraction` of samples.
    pub fn summary(&self, fraction: f64) -> ZeroDynamicsSummary {
        let n = self.times.len();
        let start = ((1.0 - fraction.clamp(0.0, 1.0)) * n as f64).floor() as usize;
        let start = start.min(n.saturating_sub(2));
        let window = &self.eta[start..];
        let mut variation = [0.0; 3];
        for (i, v) in variation.iter_mut().enumerate() {
            let (lo, hi) = window
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e[i]), hi.max(e[i])));
            *v = hi - lo;
        }
        let ts = &self.times[start..];
        let tm = ts.iter().sum::<f64>() / ts.len() as f64;
        let em = window.iter().map(|e| e[3]).sum::<f64>() / window.len() as f64;
        let (num, den) = ts.iter().zip(window).fold((0.0, 0.0), |(n, d), (t, e)| {
            (n + (t - tm) * (e[3] - em), d + (t - tm) * (t - tm))
        });
        let final_residual = self.residual.last().map_or(f64::NAN, |r| r.off_manifold());
        ZeroDynamicsSummary {
            eta_variation: variation,
            final_residual,
            eta4_drift_rate: if den > 0.0 { num / den } else { 0.0 },
            converged: self.termination == Termination::Completed
                && variation.iter().all(|v| *v < VARIATION_TOL)
                && final_residual < RESIDUAL_TOL,
        }
    }
}

/// `q̂(ξ_e, ξ̂_h, η̂)` and the reconstructed state.
pub fn q_hat(
    model: &TwoSiteModel,
    z: &NormalCoordsHat,
    guess: &FullState,
) -> Result<([f64; 5], FullState)> {
    let start = with_components(guess, ETA_HAT, &z.eta_hat);
    let x = normal_form::phi_hat_inverse(model, z, &start)?;
    Ok((internal_rate_hat(model, &x)?, x))
}

/// Central-difference Jacobian of `q̂` with respect to the flat coordinates
/// listed in `cols` (indices into `(ξ_e, ξ̂_h, η̂)`).
pub fn q_hat_jacobian_fd(
    model: &TwoSiteModel,
    z: &NormalCoordsHat,
    guess: &FullState,
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    let base = z.to_array();
    let mut m = DMatrix::zeros(5, cols.len());
    for (c, &j) in cols.iter().enumerate() {
        let h = FD_STEP * base[j].abs().max(1.0);
        let mut zp = base;
        zp[j] += h;
        let mut zm = base;
        zm[j] -= h;
        let (qp, _) = q_hat(model, &NormalCoordsHat::from_array(&zp), guess)?;
        let (qm, _) = q_hat(model, &NormalCoordsHat::from_array(&zm), guess)?;
        for r in 0..5 {
            m[(r, c)] = (qp[r] - qm[r]) / (2.0 * h);
        }
    }
    Ok(m)
}

/// Exact Jacobian of `q̂` at a state `x`: `∂r̂/∂x · DΦ̂(x)⁻¹`, restricted to `cols`.
pub fn q_hat_jacobian_exact(model: &TwoSiteModel, x: &FullState, cols: &[usize]) -> Result<DMatrix<f64>> {
    let dphi = normal_form::jacobian(model, x, Variant::Redefined)?;
    let inv = dphi
        .try_inverse()
        .ok_or(Error::Singular { what: "DPhi_hat", det: 0.0 })?;
    let dr = linalg::dual_jacobian(&x.0, |d| {
        let mut f = vec![d[0]; DIM];
        model.drift(d, &mut f);
        ETA_HAT.iter().map(|&i| f[i]).collect()
    });
    let full = dr * inv;
    Ok(DMatrix::from_fn(5, cols.len(), |r, c| full[(r, cols[c])]))
}

const ETA_HAT_COLS: [usize; 5] = [8, 9, 10, 11, 12];

/// `Q = ∂q̂/∂η̂` at the equilibrium for `(Y1, Ŷ2)`.
#[derive(Debug, Clone)]
pub struct QMatrix {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub equilibrium: EquilibriumSolution,
}

/// Evaluated on the analytic friction branch, which coincides with the
/// plant wherever the pipe flow is positive.
pub fn matrix_q(model: &TwoSiteModel, y1_ref: f64, yhat2_ref: f64) -> Result<QMatrix> {
    let model = &model.with_friction(FrictionLaw::Analytic);
    let eq = analysis::solve_equilibrium(model, y1_ref, yhat2_ref)?;
    let mut guess = eq.x_star;
    guess.0[idx::XH3] = 0.0;
    let z = NormalCoordsHat {
        xi_e: [y1_ref, 0.0, 0.0, 0.0, 0.0],
        xi_h_hat: [0.0; 3],
        eta_hat: ETA_HAT.map(|i| eq.x_star.0[i]),
    };
    let matrix = q_hat_jacobian_fd(model, &z, &guess, &ETA_HAT_COLS)?;
    Ok(QMatrix {
        eigenvalues: linalg::eigenvalues(&matrix),
        matrix,
        equilibrium: eq,
    })
}

/// Blocks and spectrum of `[Q̃ + K B3 C, K B2; C, 0]`.
#[derive(Debug, Clone)]
pub struct TrackingMatrix {
    pub k: f64,
    pub q_tilde: DMatrix<f64>,
    pub b2: [f64; 5],
    pub b3: [f64; 5],
    pub c: [f64; 5],
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub q_tilde_eigenvalues: Vec<Complex<f64>>,
    pub point: ReferencePoint,
}

/// Evaluated on the analytic friction branch, as [`matrix_q`].
pub fn matrix_tracking(model: &TwoSiteModel, y1_ref: f64, y2_ref: f64, k: f64) -> Result<TrackingMatrix> {
    let model = &model.with_friction(FrictionLaw::Analytic);
    if !k.is_finite() || k < 0.0 {
        return Err(Error::Config(format!("gain K must be finite and non-negative, got {k}")));
    }
    let point = analysis::solve_reference_point(model, y1_ref, y2_ref)?;
    let z = NormalCoordsHat {
        xi_e: [y1_ref, 0.0, 0.0, 0.0, 0.0],
        xi_h_hat: [0.0, point.drift, 0.0],
        eta_hat: point.eta_hat_ref,
    };
    let j = q_hat_jacobian_fd(model, &z, &point.x_ref, &[8, 9, 10, 11, 12, 6, 7])?;
    let q_tilde = j.columns(0, 5).into_owned();
    let b2: [f64; 5] = std::array::from_fn(|r| j[(r, 5)]);
    let b3: [f64; 5] = std::array::from_fn(|r| j[(r, 6)]);
    let c = [0.0, 0.0, 0.0, 0.0, model.derived.kappa];
    let mut matrix = DMatrix::zeros(6, 6);
    for r in 0..5 {
        for col in 0..5 {
            matrix[(r, col)] = q_tilde[(r, col)] + k * b3[r] * c[col];
        }
        matrix[(r, 5)] = k * b2[r];
        matrix[(5, r)] = c[r];
    }
    Ok(TrackingMatrix {
        k,
        q_tilde_eigenvalues: linalg::eigenvalues(&q_tilde),
        eigenvalues: linalg::eigenvalues(&matrix),
        q_tilde,
        b2,
        b3,
        c,
        matrix,
        point,
    })
}
