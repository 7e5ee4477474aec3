//! Normal-form coordinates for the original outputs `(h_e, h_h)` and the
//! redefined outputs `(h_e, x_h3)`, their Jacobians and inverses, the
//! decoupling matrices, and closed-form determinant factors.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, NewtonOptions, SINGULAR_RATIO};
use crate::model::{idx, FullState, OutputKind, TwoSiteModel, DIM};

/// Which output pair the coordinates are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `(h_e, h_h)`, relative degree {5, 4}.
    Original,
    /// `(h_e, x_h3)`, relative degree {5, 3}.
    Redefined,
}

impl Variant {
    pub fn heat_output(self) -> OutputKind {
        match self {
            Variant::Original => OutputKind::HeatFlow,
            Variant::Redefined => OutputKind::AveragePressure,
        }
    }

    /// Relative degree of the heat output.
    pub fn heat_degree(self) -> usize {
        match self {
            Variant::Original => 4,
            Variant::Redefined => 3,
        }
    }

    /// State indices copied into the internal coordinates.
    pub fn internal_indices(self) -> &'static [usize] {
        match self {
            Variant::Original => &[idx::WT1, idx::DELTA1, idx::OMEGA1, idx::XH3],
            Variant::Redefined => &[idx::WT1, idx::DELTA1, idx::OMEGA1, idx::XH1, idx::W],
        }
    }

    fn jacobian_name(self) -> &'static str {
        match self {
            Variant::Original => "DPhi",
            Variant::Redefined => "DPhi_hat",
        }
    }

    fn decoupling_name(self) -> &'static str {
        match self {
            Variant::Original => "A",
            Variant::Redefined => "A_hat",
        }
    }
}

pub const ELECTRIC_DEGREE: usize = 5;

/// Image of `Φ`: `(ξ_e, ξ_h, η)` with `η = (x_g3, x_e1, x_e2, x_h3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalCoords {
    pub xi_e: [f64; 5],
    pub xi_h: [f64; 4],
    pub eta: [f64; 4],
}

/// Image of `Φ̂`: `(ξ_e, ξ̂_h, η̂)` with `η̂ = (x_g3, x_e1, x_e2, x_h1, x_h2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalCoordsHat {
    pub xi_e: [f64; 5],
    pub xi_h_hat: [f64; 3],
    pub eta_hat: [f64; 5],
}

impl NormalCoords {
    pub fn to_array(&self) -> [f64; DIM] {
        let mut z = [0.0; DIM];
        z[..5].copy_from_slice(&self.xi_e);
        z[5..9].copy_from_slice(&self.xi_h);
        z[9..].copy_from_slice(&self.eta);
        z
    }

    pub fn from_array(z: &[f64; DIM]) -> Self {
        Self {
            xi_e: z[..5].try_into().unwrap(),
            xi_h: z[5..9].try_into().unwrap(),
            eta: z[9..].try_into().unwrap(),
        }
    }
}

impl NormalCoordsHat {
    pub fn to_array(&self) -> [f64; DIM] {
        let mut z = [0.0; DIM];
        z[..5].copy_from_slice(&self.xi_e);
        z[5..8].copy_from_slice(&self.xi_h_hat);
        z[8..].copy_from_slice(&self.eta_hat);
        z
    }

    pub fn from_array(z: &[f64; DIM]) -> Self {
        Self {
            xi_e: z[..5].try_into().unwrap(),
            xi_h_hat: z[5..8].try_into().unwrap(),
            eta_hat: z[8..].try_into().unwrap(),
        }
    }
}

/// Coordinates `(ξ_e, ξ_h, η)` as one flat vector, without singularity checks.
pub fn coords(model: &TwoSiteModel, x: &FullState, variant: Variant) -> Result<[f64; DIM]> {
    let rh = variant.heat_degree();
    let chains = model.lie_chains(
        &[OutputKind::ElectricPower, variant.heat_output()],
        x,
        ELECTRIC_DEGREE - 1,
    )?;
    let mut z = [0.0; DIM];
    z[..5].copy_from_slice(&chains[0][..5]);
    z[5..5 + rh].copy_from_slice(&chains[1][..rh]);
    for (k, &i) in variant.internal_indices().iter().enumerate() {
        z[5 + rh + k] = x.0[i];
    }
    Ok(z)
}

/// Jacobian of [`coords`] from directional jets (exact up to rounding).
pub fn jacobian(model: &TwoSiteModel, x: &FullState, variant: Variant) -> Result<DMatrix<f64>> {
    let rh = variant.heat_degree();
    let kinds = [OutputKind::ElectricPower, variant.heat_output()];
    let mut m = DMatrix::zeros(DIM, DIM);
    for j in 0..DIM {
        let mut v = [0.0; DIM];
        v[j] = 1.0;
        let d = model.lie_chains_directional(&kinds, x, &v, ELECTRIC_DEGREE - 1)?;
        for k in 0..5 {
            m[(k, j)] = d[0][k].d;
        }
        for k in 0..rh {
            m[(5 + k, j)] = d[1][k].d;
        }
    }
    for (k, &i) in variant.internal_indices().iter().enumerate() {
        m[(5 + rh + k, i)] = 1.0;
    }
    Ok(m)
}

/// Central-difference Jacobian of [`coords`], used to cross-check [`jacobian`].
pub fn jacobian_fd(model: &TwoSiteModel, x: &FullState, variant: Variant) -> Result<DMatrix<f64>> {
    linalg::fd_jacobian(&x.0, 1e-6, |y| {
        let z = coords(model, &FullState(y.try_into().unwrap()), variant)?;
        Ok(z.to_vec())
    })
}

fn check_nonsingular(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if linalg::hadamard_ratio(m) < SINGULAR_RATIO {
        Err(Error::Singular {
            what,
            det: m.clone().lu().determinant(),
        })
    } else {
        Ok(())
    }
}

/// `Φ(x)`; fails when `DΦ(x)` is numerically singular.
pub fn phi(model: &TwoSiteModel, x: &FullState) -> Result<NormalCoords> {
    check_nonsingular(&jacobian(model, x, Variant::Original)?, "DPhi")?;
    Ok(NormalCoords::from_array(&coords(model, x, Variant::Original)?))
}

/// `Φ̂(x)`; fails when `DΦ̂(x)` is numerically singular.
pub fn phi_hat(model: &TwoSiteModel, x: &FullState) -> Result<NormalCoordsHat> {
    check_nonsingular(&jacobian(model, x, Variant::Redefined)?, "DPhi_hat")?;
    Ok(NormalCoordsHat::from_array(&coords(model, x, Variant::Redefined)?))
}

/// Newton tolerance for inverting coordinates `z`.
pub fn inverse_tolerance(z: &[f64]) -> f64 {
    1e-10 * linalg::inf_norm(z).max(1.0)
}

/// Solves `coords(x) = z` by damped Newton from `guess`.
pub fn inverse(
    model: &TwoSiteModel,
    z: &[f64; DIM],
    guess: &FullState,
    variant: Variant,
) -> Result<FullState> {
    let what = match variant {
        Variant::Original => "Phi inverse",
        Variant::Redefined => "Phi_hat inverse",
    };
    let sol = linalg::newton(
        &guess.0,
        |y| {
            let c = coords(model, &FullState(y.try_into().unwrap()), variant)?;
            Ok(c.iter().zip(z).map(|(a, b)| a - b).collect())
        },
        |y| {
            let m = jacobian(model, &FullState(y.try_into().unwrap()), variant)?;
            check_nonsingular(&m, variant.jacobian_name())?;
            Ok(m)
        },
        NewtonOptions {
            tol: inverse_tolerance(z),
            max_iter: 50,
            what,
        },
    )?;
    Ok(FullState(sol.x.try_into().unwrap()))
}

pub fn phi_inverse(model: &TwoSiteModel, z: &NormalCoords, guess: &FullState) -> Result<FullState> {
    inverse(model, &z.to_array(), guess, Variant::Original)
}

pub fn phi_hat_inverse(model: &TwoSiteModel, z: &NormalCoordsHat, guess: &FullState) -> Result<FullState> {
    inverse(model, &z.to_array(), guess, Variant::Redefined)
}

/// Decoupling matrix `A(x)` or `Â(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecouplingMatrix {
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
    /// Determinant from the closed-form factorisation in `(x_e1, x_e3)`.
    pub closed_form_det: f64,
    pub singular: bool,
}

impl DecouplingMatrix {
    pub fn new(matrix: [[f64; 2]; 2], closed_form_det: f64) -> Self {
        let [[a, b], [c, d]] = matrix;
        let det = a * d - b * c;
        let scale = (a * a + b * b).sqrt() * (c * c + d * d).sqrt();
        Self {
            matrix,
            det,
            closed_form_det,
            singular: !(scale > 0.0 && det.abs() >= SINGULAR_RATIO * scale),
        }
    }

    /// Solves `A u = rhs`.
    pub fn solve(&self, rhs: [f64; 2], what: &'static str) -> Result<[f64; 2]> {
        if self.singular {
            return Err(Error::Singular { what, det: self.det });
        }
        let [[a, b], [c, d]] = self.matrix;
        Ok([
            (d * rhs[0] - b * rhs[1]) / self.det,
            (a * rhs[1] - c * rhs[0]) / self.det,
        ])
    }
}

pub fn decoupling(model: &TwoSiteModel, x: &FullState, variant: Variant) -> Result<DecouplingMatrix> {
    let rh = variant.heat_degree();
    let kinds = [OutputKind::ElectricPower, variant.heat_output()];
    let mut m = [[0.0; 2]; 2];
    for (col, which) in [1, 2].into_iter().enumerate() {
        let d = model.lie_chains_directional(&kinds, x, &model.g(which), ELECTRIC_DEGREE - 1)?;
        m[0][col] = d[0][ELECTRIC_DEGREE - 1].d;
        m[1][col] = d[1][rh - 1].d;
    }
    let cf = det_decoupling_closed_form(model, x.0[idx::DELTA1], x.0[idx::DELTA2], variant);
    Ok(DecouplingMatrix::new(m, cf))
}

/// `∂h_e/∂δ_i` for both sites.
fn angle_sensitivities(model: &TwoSiteModel, d1: f64, d2: f64) -> [f64; 2] {
    let e = model.electrical_flows(&[d1, 0.0, d2, 0.0]);
    [-e.dp_inf1_ddelta1, -e.dp_inf2_ddelta2]
}

/// Site gains of the closed forms.
struct SiteGains {
    /// `∂L_f^3 h_e / ∂w_fi` divided by `∂h_e/∂δ_i`.
    p: [f64; 2],
    /// Heat-row gains per unit `w_fi` of the second output's last smooth derivative.
    heat: [f64; 2],
    /// `(1 - W_oi) / (T_fi T_vi)`.
    input: [f64; 2],
}

fn site_gains(model: &TwoSiteModel, variant: Variant) -> SiteGains {
    let p = &model.params;
    let c = &model.derived;
    let pg = [0, 1].map(|i| c.pm_gain[i] / (c.te[i] * c.te[i] * p.tcd[i]));
    let heat = match variant {
        Variant::Redefined => [c.qa_gain[0] / c.th_sum(), c.qa_gain[1] / c.th_sum()],
        Variant::Original => {
            let k = c.kappa / (c.rho_ratio * c.th3);
            [k * c.qa_gain[0] / c.th[0], -k * c.qa_gain[1] / c.th[1]]
        }
    };
    SiteGains {
        p: pg,
        heat,
        input: [0, 1].map(|i| (1.0 - p.wo[i]) / (p.tf[i] * p.tv[i])),
    }
}

/// Closed form of `det A` / `det Â`; depends only on `(x_e1, x_e3)`.
pub fn det_decoupling_closed_form(model: &TwoSiteModel, d1: f64, d2: f64, variant: Variant) -> f64 {
    let h = angle_sensitivities(model, d1, d2);
    let g = site_gains(model, variant);
    let ce = [h[0] * g.p[0] * g.input[0], h[1] * g.p[1] * g.input[1]];
    let ch = [g.heat[0] * g.input[0], g.heat[1] * g.input[1]];
    ce[0] * ch[1] - ce[1] * ch[0]
}

fn permutation_sign(p: &[usize]) -> f64 {
    let mut seen = vec![false; p.len()];
    let mut sign = 1.0;
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = p[j];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Closed form of `det DΦ` / `det DΦ̂`.
///
/// After permuting rows and columns the Jacobian is block lower-triangular
/// with unit blocks for the copied coordinates, scalar blocks for `δ2`, `ω2`,
/// `w_t2` (and `x_h1`, `w` for the original output), and two 2×2 blocks in
/// `(w_f1, w_f2)` and `(v_p1, v_p2)` that are proportional to the decoupling
/// matrix.
pub fn det_jacobian_closed_form(model: &TwoSiteModel, d1: f64, d2: f64, variant: Variant) -> f64 {
    let h = angle_sensitivities(model, d1, d2);
    let g = site_gains(model, variant);
    let c = &model.derived;
    let p = &model.params;
    let te2 = c.te[1];
    let pivots: [usize; DIM];
    let mut diag = h[1] * (h[1] / te2) * (h[1] * c.pm_gain[1] / (te2 * te2));
    match variant {
        Variant::Redefined => {
            // rows: ξ_e1..5, ξ̂_h1..3, η̂; pivot column of each row
            pivots = [8, 9, 5, 1, 0, 12, 4, 3, 2, 6, 7, 10, 11];
        }
        Variant::Original => {
            pivots = [8, 9, 5, 1, 0, 11, 10, 4, 3, 2, 6, 7, 12];
            diag *= c.kappa * c.kappa / (c.rho_ratio * c.th3);
        }
    }
    let block = h[0] * g.p[0] * g.heat[1] - h[1] * g.p[1] * g.heat[0];
    let sign = permutation_sign(&pivots);
    sign * diag * block * block / (p.tf[0] * p.tf[1])
}

/// Signs of the two determinant factors at `(x_e1, x_e3)`, normalised to `[-1, 1]`.
pub fn region_indicators(model: &TwoSiteModel, d1: f64, d2: f64, variant: Variant) -> [f64; 2] {
    let h = angle_sensitivities(model, d1, d2);
    let g = site_gains(model, variant);
    let t1 = h[0] * g.p[0] * g.input[0] * g.heat[1] * g.input[1];
    let t2 = h[1] * g.p[1] * g.input[1] * g.heat[0] * g.input[0];
    let p = &model.params;
    let h2_scale = p.e_inf * p.e_gen[1] * p.b20.hypot(p.g20);
    let da = if t1 == 0.0 && t2 == 0.0 { 0.0 } else { (t1 - t2) / (t1.abs() + t2.abs()) };
    [da, h[1] / h2_scale]
}

/// Whether `(x_e1, x_e3)` lies in the nonsingular region containing the origin.
///
/// Walks the straight segment from `(0, 0)` and requires both determinant
/// factors to keep their sign and stay away from zero.
pub fn in_region(model: &TwoSiteModel, d1: f64, d2: f64, variant: Variant) -> bool {
    const STEPS: usize = 256;
    let origin = region_indicators(model, 0.0, 0.0, variant);
    (0..=STEPS).all(|k| {
        let s = k as f64 / STEPS as f64;
        let r = region_indicators(model, s * d1, s * d2, variant);
        r.iter()
            .zip(&origin)
            .all(|(a, b)| a * b.signum() > SINGULAR_RATIO)
    })
}

/// Draws states until one has `(x_e1, x_e3)` inside the nonsingular region
/// of both coordinate variants. `uniform(lo, hi)` supplies the samples.
///
/// Turbine states lie in `[0.3, 0.9]`, angles in `[-0.4, 1.1]`, speeds in
/// `±0.05`, `x_h1` in `[10, 60]`, `w` in `[0.8, 3]` and `x_h3` in `±1`.
pub fn sample_admissible_state(model: &TwoSiteModel, mut uniform: impl FnMut(f64, f64) -> f64) -> FullState {
    loop {
        let mut x = [0.0; DIM];
        for i in [idx::VP1, idx::WF1, idx::WT1, idx::VP2, idx::WF2, idx::WT2] {
            x[i] = uniform(0.3, 0.9);
        }
        x[idx::DELTA1] = uniform(-0.4, 1.1);
        x[idx::DELTA2] = uniform(-0.4, 1.1);
        x[idx::OMEGA1] = uniform(-0.05, 0.05);
        x[idx::OMEGA2] = uniform(-0.05, 0.05);
        x[idx::XH1] = uniform(10.0, 60.0);
        x[idx::W] = uniform(0.8, 3.0);
        x[idx::XH3] = uniform(-1.0, 1.0);
        let (d1, d2) = (x[idx::DELTA1], x[idx::DELTA2]);
        if in_region(model, d1, d2, Variant::Redefined) && in_region(model, d1, d2, Variant::Original) {
            return FullState(x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityCell {
    pub x_e1: f64,
    pub x_e3: f64,
    pub det_a: f64,
    pub det_dphi: f64,
    /// Sign of `det A` differs from a grid neighbour.
    pub crossing_a: bool,
    /// Sign of `det DΦ` differs from a grid neighbour.
    pub crossing_dphi: bool,
    /// Connected to the origin cell without crossing either zero level.
    pub in_region: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularityScan {
    pub variant: Variant,
    pub x_e1: Vec<f64>,
    pub x_e3: Vec<f64>,
    /// Row-major over `x_e3` (outer) and `x_e1` (inner).
    pub cells: Vec<SingularityCell>,
}

impl SingularityScan {
    pub fn cell(&self, i: usize, j: usize) -> &SingularityCell {
        &self.cells[j * self.x_e1.len() + i]
    }
}

/// Evenly spaced grid including both endpoints (a single point when `n == 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Evaluates `det A` and `det DΦ` over a grid of rotor angles.
///
/// Remaining coordinates are taken from `base`. Cells are evaluated in
/// parallel; each carries zero-level crossing flags and membership in the
/// connected region containing the origin.
pub fn singularity_scan(
    model: &TwoSiteModel,
    x_e1: &[f64],
    x_e3: &[f64],
    variant: Variant,
    base: &FullState,
) -> Result<SingularityScan> {
    if x_e1.is_empty() || x_e3.is_empty() {
        return Err(Error::Config("singularity grid must be non-empty".into()));
    }
    let (nx, ny) = (x_e1.len(), x_e3.len());
    let mut cells: Vec<SingularityCell> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let mut x = *base;
            x.0[idx::DELTA1] = x_e1[i];
            x.0[idx::DELTA2] = x_e3[j];
            let det_a = decoupling(model, &x, variant).map(|d| d.det).unwrap_or(f64::NAN);
            let det_dphi = jacobian(model, &x, variant)
                .map(|m| m.lu().determinant())
                .unwrap_or(f64::NAN);
            SingularityCell {
                x_e1: x_e1[i],
                x_e3: x_e3[j],
                det_a,
                det_dphi,
                crossing_a: false,
                crossing_dphi: false,
                in_region: false,
            }
        })
        .collect();

    let differs = |a: f64, b: f64| a.signum() != b.signum() || a == 0.0 || b == 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            for (di, dj) in [(1usize, 0usize), (0, 1)] {
                let (ii, jj) = (i + di, j + dj);
                if ii >= nx || jj >= ny {
                    continue;
                }
                let kk = jj * nx + ii;
                if differs(cells[k].det_a, cells[kk].det_a) {
                    cells[k].crossing_a = true;
                    cells[kk].crossing_a = true;
                }
                if differs(cells[k].det_dphi, cells[kk].det_dphi) {
                    cells[k].crossing_dphi = true;
                    cells[kk].crossing_dphi = true;
                }
            }
        }
    }

    let nearest = |grid: &[f64]| {
        grid.iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap()
    };
    let start = nearest(x_e3) * nx + nearest(x_e1);
    let sa = cells[start].det_a.signum();
    let sd = cells[start].det_dphi.signum();
    let admissible = |c: &SingularityCell| {
        c.det_a.signum() == sa && c.det_dphi.signum() == sd && c.det_a != 0.0 && c.det_dphi != 0.0
    };
    if admissible(&cells[start]) {
        let mut stack = vec![start];
        cells[start].in_region = true;
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut nbrs = Vec::with_capacity(4);
            if i > 0 {
                nbrs.push(k - 1);
            }
            if i + 1 < nx {
                nbrs.push(k + 1);
            }
            if j > 0 {
                nbrs.push(k - nx);
            }
            if j + 1 < ny {
                nbrs.push(k + nx);
            }
            for kk in nbrs {
                if !cells[kk].in_region && admissible(&cells[kk]) {
                    cells[kk].in_region = true;
                    stack.push(kk);
                }
            }
        }
    }
    Ok(SingularityScan {
        variant,
        x_e1: x_e1.to_vec(),
        x_e3: x_e3.to_vec(),
        cells,
    })
}

/// Solves `A(x) u = rhs` for the decoupling matrix at `x`.
pub fn solve_decoupled(a: &DecouplingMatrix, rhs: [f64; 2], variant: Variant) -> Result<[f64; 2]> {
    a.solve(rhs, variant.decoupling_name())
}

/// Determinant and singularity measure of a coordinate Jacobian.
pub fn jacobian_diagnostics(m: &DMatrix<f64>) -> (f64, f64) {
    (m.clone().lu().determinant(), linalg::hadamard_ratio(m))
}
