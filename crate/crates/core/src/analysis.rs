//! Equilibria, reference points for tracking, and reference scans.

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{Dual, Observable, Scalar};
use crate::linalg::{self, NewtonOptions};
use crate::model::{idx, FrictionLaw, FullState, Inputs, OutputKind, TwoSiteModel, DIM};
use crate::normal_form::{self, Variant};
use crate::zero_dynamics;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ITER: usize = 60;
/// Reference `Y1` at which continuation chains start.
pub const HOMOTOPY_START: f64 = 1.0;
pub const HOMOTOPY_STEP: f64 = 0.02;
/// Largest `|f_h3|` accepted as zero drift when `K = 0`.
pub const DRIFT_TOL: f64 = 1e-9;

/// An equilibrium `(x*, u*)` with `h_e(x*) = Y1` and `x_h3* = Ŷ2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    pub y1_ref: f64,
    pub yhat2_ref: f64,
    pub x_star: FullState,
    pub u_star: Inputs,
    /// Max-norm of `f(x*) + g u*` and the output pins.
    pub residual: f64,
    /// Whether `(x_e1, x_e3)` lies in the nonsingular region of `Â`.
    pub in_region: bool,
}

/// Operating point satisfying the tracking conditions for `(Y1, Y2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub y1_ref: f64,
    pub y2_ref: f64,
    /// Full state with `x_h3 = 0`; every component but `x_h3` is at rest.
    pub x_ref: FullState,
    pub u_ref: Inputs,
    /// `(x_g3, x_e1, x_e2, x_h1, x_h2)` at the point.
    pub eta_hat_ref: [f64; 5],
    /// `f_h3` at the point, the constant rate of the averaged pressure.
    pub drift: f64,
    pub residual: f64,
    pub in_region: bool,
}

/// Solution of the tracking conditions for gain `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingSolution {
    pub y1_ref: f64,
    pub y2_ref: f64,
    pub k: f64,
    pub eta_hat_ref: [f64; 5],
    pub sigma2_ref: f64,
    pub drift: f64,
    pub x_ref: FullState,
    pub u_ref: Inputs,
    pub residual: f64,
    pub in_region: bool,
}

fn input_gain(model: &TwoSiteModel, s: usize) -> f64 {
    (1.0 - model.params.wo[s]) / model.params.tv[s]
}

fn dynamics_with_input<S: Scalar>(model: &TwoSiteModel, x: &[S], u: [S; 2]) -> Vec<S> {
    let mut f = vec![S::constant(0.0); DIM];
    model.drift(x, &mut f);
    f[idx::VP1] = f[idx::VP1] + u[0] * input_gain(model, 0);
    f[idx::VP2] = f[idx::VP2] + u[1] * input_gain(model, 1);
    f
}

fn equilibrium_residual<S: Scalar>(model: &TwoSiteModel, z: &[S], y1: f64, yhat2: f64) -> Vec<S> {
    let x = &z[..DIM];
    let mut r = dynamics_with_input(model, x, [z[DIM], z[DIM + 1]]);
    r.push(model.output(OutputKind::ElectricPower).eval(x) - y1);
    r.push(x[idx::XH3] - yhat2);
    r
}

/// Unknowns: every state but `x_h3` (held at zero), then `u1, u2`.
fn reference_residual<S: Scalar>(model: &TwoSiteModel, z: &[S], y1: f64, y2: f64) -> Vec<S> {
    let mut x = z[..DIM - 1].to_vec();
    x.push(S::constant(0.0));
    let mut r = dynamics_with_input(model, &x, [z[DIM - 1], z[DIM]]);
    r.truncate(DIM - 1);
    r.push(model.output(OutputKind::ElectricPower).eval(&x) - y1);
    r.push(model.output(OutputKind::HeatFlow).eval(&x) - y2);
    r
}

fn rest_state(model: &TwoSiteModel, y1: f64, w_turb: [f64; 2], w: f64, xh3: f64) -> (FullState, Inputs) {
    let p = &model.params;
    let c = &model.derived;
    let reach = p.e_inf * (p.e_gen[0] * p.b10 + p.e_gen[1] * p.b20);
    let delta = (y1 / reach).clamp(-0.99, 0.99).asin();
    let drag = match model.friction {
        FrictionLaw::SignedSquare => w * w.abs(),
        FrictionLaw::Analytic => w * w,
    };
    let xh1 = c.rho_ratio * c.friction * drag;
    let x = FullState::from_parts(
        [w_turb[0], w_turb[0], w_turb[0], w_turb[1], w_turb[1], w_turb[1]],
        [delta, 0.0, delta, 0.0],
        [xh1, w, xh3],
    );
    let u = Inputs {
        u1: (w_turb[0] - p.wo[0]) / (1.0 - p.wo[0]),
        u2: (w_turb[1] - p.wo[1]) / (1.0 - p.wo[1]),
    };
    (x, u)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Result<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Singular { what: "initial-guess system", det });
    }
    Ok([
        (a[1][1] * b[0] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

/// Total mechanical power row of the guess systems: `Σ pm_i (w_i - W_oi) = Y1`.
fn power_row(model: &TwoSiteModel, y1: f64) -> ([f64; 2], f64) {
    let c = &model.derived;
    let p = &model.params;
    (
        c.pm_gain,
        y1 + c.pm_gain[0] * p.wo[0] + c.pm_gain[1] * p.wo[1],
    )
}

/// Rest state from the lossless power balance and the heat balance.
pub fn equilibrium_guess(model: &TwoSiteModel, y1: f64, yhat2: f64) -> Result<(FullState, Inputs)> {
    let c = &model.derived;
    let (pr, pb) = power_row(model, y1);
    let hb = c.ql[0] + c.ql[1] - c.qa_offset[0] - c.qa_offset[1];
    let wt = solve2([pr, c.qa_gain], [pb, hb])?;
    let q12 = wt[0] * c.qa_gain[0] + c.qa_offset[0] - c.ql[0];
    Ok(rest_state(model, y1, wt, q12 / c.kappa, yhat2))
}

/// Guess for [`solve_reference_point`]: power balance plus `f_h1 = 0` at `w = Y2/κ`.
pub fn reference_guess(model: &TwoSiteModel, y1: f64, y2: f64) -> Result<(FullState, Inputs)> {
    let c = &model.derived;
    let (pr, pb) = power_row(model, y1);
    let q12 = y2;
    let a = [c.qa_gain[0] / c.th[0], -c.qa_gain[1] / c.th[1]];
    let b = (c.ql[0] - c.qa_offset[0] + q12) / c.th[0] - (c.ql[1] - c.qa_offset[1] - q12) / c.th[1];
    let wt = solve2([pr, a], [pb, b])?;
    Ok(rest_state(model, y1, wt, q12 / c.kappa, 0.0))
}

fn pack(x: &FullState, u: Inputs, len: usize) -> Vec<f64> {
    let mut z = x.0[..len].to_vec();
    z.push(u.u1);
    z.push(u.u2);
    z
}

/// Newton solve of the equilibrium system from `(x, u)`.
pub fn solve_equilibrium_from(
    model: &TwoSiteModel,
    y1: f64,
    yhat2: f64,
    x: &FullState,
    u: Inputs,
) -> Result<EquilibriumSolution> {
    let z0 = pack(x, u, DIM);
    let sol = linalg::newton(
        &z0,
        |z| {
            let r = equilibrium_residual(model, z, y1, yhat2);
            Ok(r)
        },
        |z| Ok(linalg::dual_jacobian(z, |d: &[Dual]| equilibrium_residual(model, d, y1, yhat2))),
        NewtonOptions {
            tol: NEWTON_TOL,
            max_iter: NEWTON_ITER,
            what: "equilibrium",
        },
    )?;
    let x_star = FullState(sol.x[..DIM].try_into().unwrap());
    let u_star = Inputs {
        u1: sol.x[DIM],
        u2: sol.x[DIM + 1],
    };
    Ok(EquilibriumSolution {
        y1_ref: y1,
        yhat2_ref: yhat2,
        in_region: normal_form::in_region(
            model,
            x_star.0[idx::DELTA1],
            x_star.0[idx::DELTA2],
            Variant::Redefined,
        ),
        x_star,
        u_star,
        residual: sol.residual,
    })
}

/// Continuation in `Y1` from [`HOMOTOPY_START`] towards `target`.
fn continuation<T, G, S>(target: f64, guess: G, mut solve: S, warm: impl Fn(&T) -> (FullState, Inputs)) -> Result<T>
where
    G: Fn(f64) -> Result<(FullState, Inputs)>,
    S: FnMut(f64, &FullState, Inputs) -> Result<T>,
{
    let (x0, u0) = guess(HOMOTOPY_START)?;
    let mut current = solve(HOMOTOPY_START, &x0, u0)?;
    let span = target - HOMOTOPY_START;
    let steps = (span.abs() / HOMOTOPY_STEP).ceil() as usize;
    for k in 1..=steps {
        let y = if k == steps {
            target
        } else {
            HOMOTOPY_START + span.signum() * HOMOTOPY_STEP * k as f64
        };
        let (x, u) = warm(&current);
        current = solve(y, &x, u)?;
    }
    Ok(current)
}

fn with_fallback<T, G, S>(target: f64, guess: G, mut solve: S, warm: impl Fn(&T) -> (FullState, Inputs)) -> Result<T>
where
    G: Fn(f64) -> Result<(FullState, Inputs)>,
    S: FnMut(f64, &FullState, Inputs) -> Result<T>,
{
    match continuation(target, &guess, &mut solve, warm) {
        Ok(v) => Ok(v),
        Err(chain_err) => {
            let (x, u) = guess(target)?;
            solve(target, &x, u).map_err(|_| chain_err)
        }
    }
}

/// Equilibrium for `(Y1, Ŷ2)`: continuation in `Y1` from 1.0, then a direct
/// solve from the analytic guess if the chain breaks.
pub fn solve_equilibrium(model: &TwoSiteModel, y1: f64, yhat2: f64) -> Result<EquilibriumSolution> {
    if !(y1.is_finite() && yhat2.is_finite()) {
        return Err(Error::Config("references must be finite".into()));
    }
    with_fallback(
        y1,
        |y| equilibrium_guess(model, y, yhat2),
        |y, x, u| solve_equilibrium_from(model, y, yhat2, x, u),
        |s: &EquilibriumSolution| (s.x_star, s.u_star),
    )
}

fn solve_reference_from(model: &TwoSiteModel, y1: f64, y2: f64, x: &FullState, u: Inputs) -> Result<ReferencePoint> {
    let z0 = pack(x, u, DIM - 1);
    let sol = linalg::newton(
        &z0,
        |z| Ok(reference_residual(model, z, y1, y2)),
        |z| Ok(linalg::dual_jacobian(z, |d: &[Dual]| reference_residual(model, d, y1, y2))),
        NewtonOptions {
            tol: NEWTON_TOL,
            max_iter: NEWTON_ITER,
            what: "tracking reference point",
        },
    )?;
    let mut xs = [0.0; DIM];
    xs[..DIM - 1].copy_from_slice(&sol.x[..DIM - 1]);
    let x_ref = FullState(xs);
    let u_ref = Inputs {
        u1: sol.x[DIM - 1],
        u2: sol.x[DIM],
    };
    let f = model.f(&x_ref)?;
    let drift = f[idx::XH3];
    let z = normal_form::coords(model, &x_ref, Variant::Redefined)?;
    let mut target = z;
    target[..5].copy_from_slice(&[y1, 0.0, 0.0, 0.0, 0.0]);
    target[5..8].copy_from_slice(&[0.0, drift, 0.0]);
    let coord_err = z.iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(ReferencePoint {
        y1_ref: y1,
        y2_ref: y2,
        eta_hat_ref: [
            x_ref.0[idx::WT1],
            x_ref.0[idx::DELTA1],
            x_ref.0[idx::OMEGA1],
            x_ref.0[idx::XH1],
            x_ref.0[idx::W],
        ],
        drift,
        residual: sol.residual.max(coord_err),
        in_region: normal_form::in_region(model, xs[idx::DELTA1], xs[idx::DELTA2], Variant::Redefined),
        x_ref,
        u_ref,
    })
}

/// Rest point of every state but `x_h3` with `h_e = Y1`, `h_h = Y2`.
///
/// Its redefined coordinates are `ξ_e = (Y1, 0, …)`, `ξ̂_h = (0, s, 0)` with
/// drift `s = f_h3`, and the internal dynamics vanish there.
pub fn solve_reference_point(model: &TwoSiteModel, y1: f64, y2: f64) -> Result<ReferencePoint> {
    if !(y1.is_finite() && y2.is_finite()) {
        return Err(Error::Config("references must be finite".into()));
    }
    with_fallback(
        y1,
        |y| reference_guess(model, y, y2),
        |y, x, u| solve_reference_from(model, y, y2, x, u),
        |s: &ReferencePoint| (s.x_ref, s.u_ref),
    )
}

/// Solves the tracking conditions: `q̂((Y1, 0, …), (0, Kσ2, 0), η̂) = 0` and `h_h(η̂) = Y2`.
pub fn solve_tracking(model: &TwoSiteModel, y1: f64, y2: f64, k: f64) -> Result<TrackingSolution> {
    if !k.is_finite() || k < 0.0 {
        return Err(Error::Config(format!("gain K must be finite and non-negative, got {k}")));
    }
    let pt = solve_reference_point(model, y1, y2)?;
    let sigma2_ref = if k == 0.0 {
        if pt.drift.abs() > DRIFT_TOL {
            return Err(Error::Infeasible(format!(
                "K = 0 requires zero pressure drift, found {:e}",
                pt.drift
            )));
        }
        0.0
    } else {
        pt.drift / k
    };
    if !pt.in_region {
        return Err(Error::OutsideRegion {
            delta1: pt.x_ref.0[idx::DELTA1],
            delta2: pt.x_ref.0[idx::DELTA2],
        });
    }
    Ok(TrackingSolution {
        y1_ref: y1,
        y2_ref: y2,
        k,
        eta_hat_ref: pt.eta_hat_ref,
        sigma2_ref,
        drift: pt.drift,
        x_ref: pt.x_ref,
        u_ref: pt.u_ref,
        residual: pt.residual,
        in_region: pt.in_region,
    })
}

/// Which matrix a reference scan evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanKind {
    /// `Q` over `Y1` at fixed `Ŷ2`.
    Q,
    /// `Q̃` over `Y2` at fixed `Y1`.
    QTilde,
    /// The 6×6 tracking matrix over `Y2` at fixed `Y1` and `K`.
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanCell {
    pub reference: f64,
    pub status: CellStatus,
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real: f64,
    pub in_region: bool,
    /// Pipe flow at the evaluation point is not positive.
    pub reversed_flow: bool,
    /// Solved, inside the region, and all eigenvalues in the open left half-plane.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub kind: ScanKind,
    /// `Ŷ2` for [`ScanKind::Q`], `Y1` otherwise.
    pub fixed: f64,
    pub k: f64,
    pub cells: Vec<ScanCell>,
}

impl ScanResult {
    /// Zero crossings of the largest real part, linearly interpolated between
    /// adjacent solved cells.
    pub fn crossings(&self) -> Vec<f64> {
        self.cells
            .windows(2)
            .filter(|w| w[0].status == CellStatus::Ok && w[1].status == CellStatus::Ok)
            .filter(|w| (w[0].max_real < 0.0) != (w[1].max_real < 0.0))
            .map(|w| {
                let (a, b) = (w[0].max_real, w[1].max_real);
                w[0].reference + (w[1].reference - w[0].reference) * a / (a - b)
            })
            .collect()
    }

    /// Last reference of the run of stable cells starting at the first cell.
    pub fn stable_up_to(&self) -> Option<f64> {
        self.cells
            .iter()
            .take_while(|c| c.stable)
            .last()
            .map(|c| c.reference)
    }
}

fn scan_cell(model: &TwoSiteModel, kind: ScanKind, reference: f64, fixed: f64, k: f64) -> ScanCell {
    let res = match kind {
        ScanKind::Q => zero_dynamics::matrix_q(model, reference, fixed)
            .map(|m| (m.eigenvalues, m.equilibrium.in_region, m.equilibrium.x_star.w())),
        ScanKind::QTilde => zero_dynamics::matrix_tracking(model, fixed, reference, 0.0)
            .map(|m| (m.q_tilde_eigenvalues, m.point.in_region, m.point.x_ref.w())),
        ScanKind::Tracking => zero_dynamics::matrix_tracking(model, fixed, reference, k)
            .map(|m| (m.eigenvalues, m.point.in_region, m.point.x_ref.w())),
    };
    match res {
        Ok((ev, in_region, w)) => {
            let max_real = linalg::max_real_part(&ev);
            ScanCell {
                reference,
                status: CellStatus::Ok,
                stable: in_region && max_real < 0.0,
                eigenvalues: ev,
                max_real,
                in_region,
                reversed_flow: w <= 0.0,
            }
        }
        Err(e) => ScanCell {
            reference,
            status: CellStatus::Failed(e.to_string()),
            eigenvalues: Vec::new(),
            max_real: f64::NAN,
            in_region: false,
            reversed_flow: false,
            stable: false,
        },
    }
}

/// Evaluates the spectrum of `kind` at each reference value in parallel.
/// Per-cell failures are recorded in the cell status.
pub fn scan_references(model: &TwoSiteModel, kind: ScanKind, values: &[f64], fixed: f64, k: f64) -> ScanResult {
    let cells = values
        .par_iter()
        .map(|&r| scan_cell(model, kind, r, fixed, k))
        .collect();
    ScanResult {
        kind,
        fixed,
        k,
        cells,
    }
}

/// Bisects the stability boundary between a stable reference `lo` and an
/// unstable reference `hi` to width `tol`.
pub fn refine_boundary(
    model: &TwoSiteModel,
    kind: ScanKind,
    mut lo: f64,
    mut hi: f64,
    fixed: f64,
    k: f64,
    tol: f64,
) -> f64 {
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if scan_cell(model, kind, mid, fixed, k).stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
