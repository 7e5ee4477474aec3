//! Thirteen-state model of two gas-turbine CHP sites linked by an electric
//! network and a steam pipe.
//!
//! State layout (scaled units):
//!
//! | index | symbol | meaning |
//! |-------|--------|---------|
//! | 0..3  | v_p1, w_f1, w_t1 | valve, combustor and turbine fuel flow, site 1 |
//! | 3..6  | v_p2, w_f2, w_t2 | the same for site 2 |
//! | 6..10 | δ1, ω1, δ2, ω2 | rotor angles and scaled speed deviations |
//! | 10    | x_h1 | boiler pressure difference p1 − p2 |
//! | 11    | x_h2 | steam velocity w |
//! | 12    | x_h3 | weighted average boiler pressure |

mod params;

pub use params::SystemParams;

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{self, Dual, Observable, Scalar, VectorField};

pub const DIM: usize = 13;

pub mod idx {
    pub const VP1: usize = 0;
    pub const WF1: usize = 1;
    pub const WT1: usize = 2;
    pub const VP2: usize = 3;
    pub const WF2: usize = 4;
    pub const WT2: usize = 5;
    pub const DELTA1: usize = 6;
    pub const OMEGA1: usize = 7;
    pub const DELTA2: usize = 8;
    pub const OMEGA2: usize = 9;
    pub const XH1: usize = 10;
    pub const W: usize = 11;
    pub const XH3: usize = 12;
}

/// Full plant state `x = (x_g, x_e, x_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullState(pub [f64; DIM]);

impl FullState {
    pub fn from_parts(xg: [f64; 6], xe: [f64; 4], xh: [f64; 3]) -> Self {
        let mut x = [0.0; DIM];
        x[..6].copy_from_slice(&xg);
        x[6..10].copy_from_slice(&xe);
        x[10..].copy_from_slice(&xh);
        FullState(x)
    }

    pub fn xg(&self) -> [f64; 6] {
        self.0[..6].try_into().unwrap()
    }

    pub fn xe(&self) -> [f64; 4] {
        self.0[6..10].try_into().unwrap()
    }

    pub fn xh(&self) -> [f64; 3] {
        self.0[10..].try_into().unwrap()
    }

    pub fn w(&self) -> f64 {
        self.0[idx::W]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &FullState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Fuel-valve commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub u1: f64,
    pub u2: f64,
}

impl Inputs {
    pub fn within_nominal(&self) -> bool {
        (0.0..=1.0).contains(&self.u1) && (0.0..=1.0).contains(&self.u2)
    }
}

/// Electric power to the infinite bus and heat flow through the pipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub y1: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectricalFlows {
    pub p_e1: f64,
    pub p_e2: f64,
    pub p_e_inf: f64,
    /// `∂P_∞1(0, δ1)/∂δ1`.
    pub dp_inf1_ddelta1: f64,
    /// `∂P_∞2(0, δ2)/∂δ2`.
    pub dp_inf2_ddelta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatFlows {
    pub qa1: f64,
    pub qa2: f64,
    pub q12: f64,
}

/// Constants derived from [`SystemParams`] in the model's scaled units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    /// Electromechanical time constants `1/sqrt(ω_s / 2H)`.
    pub te: [f64; 2],
    /// Boiler time constants.
    pub th: [f64; 2],
    /// Pipe flow time constant.
    pub th3: f64,
    /// Velocity scale, m/s.
    pub w_r: f64,
    /// Pressure scale, Pa.
    pub p_r: f64,
    pub rho_ratio: f64,
    /// Scaled pipe heat flow per unit velocity, `(π/4) (h_c/h_r) (ρ_s/ρ_r)`.
    pub kappa: f64,
    /// `λ L / 2d`.
    pub friction: f64,
    /// Per-unit mechanical power per unit turbine flow.
    pub pm_gain: [f64; 2],
    pub qa_gain: [f64; 2],
    pub qa_offset: [f64; 2],
    pub ql: [f64; 2],
}

impl Derived {
    fn new(p: &SystemParams) -> Self {
        let qr = p.qr * 1e6;
        let hr = p.hr * 1e3;
        let hc = (p.h_s - p.h_w) * 1e3;
        let te = [0, 1].map(|i| 1.0 / (p.omega_s / (2.0 * p.inertia[i])).sqrt());
        let th = [0, 1].map(|i| qr * p.e_press[i] / (p.d.powi(4) * hr * hr * p.rhor));
        let th3 = p.d * p.d * p.length * hr * p.rhor / qr;
        let w_r = qr / (p.d * p.d * hr * p.rhor);
        let rho_ratio = p.rho_s / p.rhor;
        Self {
            te,
            th,
            th3,
            w_r,
            p_r: p.rhor * w_r * w_r,
            rho_ratio,
            kappa: FRAC_PI_4 * (hc / hr) * rho_ratio,
            friction: p.lambda * p.length / (2.0 * p.d),
            pm_gain: [0, 1].map(|i| p.ke[i] / (p.power_base * (1.0 - p.wo[i]))),
            qa_gain: [0, 1].map(|i| p.kh[i] / (p.qr * (1.0 + p.beta[i]))),
            qa_offset: [0, 1].map(|i| p.kh[i] * p.beta[i] / (p.qr * (1.0 + p.beta[i]))),
            ql: [p.ql[0] / p.qr, p.ql[1] / p.qr],
        }
    }

    /// `T_h1 + T_h2`.
    pub fn th_sum(&self) -> f64 {
        self.th[0] + self.th[1]
    }
}

/// Which scalar observable of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    /// `h_e = P_e∞(δ1, δ2)`.
    ElectricPower,
    /// `h_h = Q'_12(w)`.
    HeatFlow,
    /// Redefined heat output `ĥ_h = x_h3`.
    AveragePressure,
    /// A single state coordinate.
    Component(usize),
}

/// An [`OutputKind`] bound to a model.
#[derive(Clone, Copy)]
pub struct ModelOutput<'a> {
    pub model: &'a TwoSiteModel,
    pub kind: OutputKind,
}

impl Observable for ModelOutput<'_> {
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match self.kind {
            OutputKind::ElectricPower => self.model.electric_output(x[idx::DELTA1], x[idx::DELTA2]),
            OutputKind::HeatFlow => x[idx::W] * self.model.derived.kappa,
            OutputKind::AveragePressure => x[idx::XH3],
            OutputKind::Component(i) => x[i],
        }
    }
}

/// Form of the pipe friction term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrictionLaw {
    /// `w|w|`, the plant itself.
    #[default]
    SignedSquare,
    /// `w²`, the analytic branch that agrees with `w|w|` for `w > 0`.
    Analytic,
}

/// The plant: parameters plus derived constants.
#[derive(Debug, Clone)]
pub struct TwoSiteModel {
    pub params: SystemParams,
    pub derived: Derived,
    pub friction: FrictionLaw,
}

impl Default for TwoSiteModel {
    fn default() -> Self {
        Self::new(SystemParams::default()).expect("default parameters are valid")
    }
}

impl VectorField for TwoSiteModel {
    fn dim(&self) -> usize {
        DIM
    }

    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        self.drift(x, out)
    }
}

impl TwoSiteModel {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        let derived = Derived::new(&params);
        Ok(Self {
            params,
            derived,
            friction: FrictionLaw::SignedSquare,
        })
    }

    /// Copy of the model using `friction` for the pipe term.
    pub fn with_friction(&self, friction: FrictionLaw) -> Self {
        Self {
            friction,
            ..self.clone()
        }
    }

    pub fn output(&self, kind: OutputKind) -> ModelOutput<'_> {
        ModelOutput { model: self, kind }
    }

    /// Drift field `f`, generic over the scalar type.
    pub fn drift<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let p = &self.params;
        let c = &self.derived;
        for s in 0..2 {
            let o = 3 * s;
            out[o] = (x[o] - p.wo[s]) * (-1.0 / p.tv[s]);
            out[o + 1] = (x[o] - x[o + 1]) / p.tf[s];
            out[o + 2] = (x[o + 1] - x[o + 2]) / p.tcd[s];
        }
        let (pe1, pe2) = self.generator_powers(x[idx::DELTA1], x[idx::DELTA2]);
        let pm1 = (x[idx::WT1] - p.wo[0]) * c.pm_gain[0];
        let pm2 = (x[idx::WT2] - p.wo[1]) * c.pm_gain[1];
        out[idx::DELTA1] = x[idx::OMEGA1] / c.te[0];
        out[idx::OMEGA1] = (pm1 - x[idx::OMEGA1] * p.damping[0] - pe1) / c.te[0];
        out[idx::DELTA2] = x[idx::OMEGA2] / c.te[1];
        out[idx::OMEGA2] = (pm2 - x[idx::OMEGA2] * p.damping[1] - pe2) / c.te[1];

        let qa1 = x[idx::WF1] * c.qa_gain[0] + c.qa_offset[0];
        let qa2 = x[idx::WF2] * c.qa_gain[1] + c.qa_offset[1];
        let q12 = x[idx::W] * c.kappa;
        let net1 = qa1 - c.ql[0] - q12;
        let net2 = qa2 - c.ql[1] + q12;
        out[idx::XH1] = net1 / c.th[0] - net2 / c.th[1];
        let drag = match self.friction {
            FrictionLaw::SignedSquare => x[idx::W].signed_square(),
            FrictionLaw::Analytic => x[idx::W] * x[idx::W],
        };
        out[idx::W] = (x[idx::XH1] / c.rho_ratio - drag * c.friction) / c.th3;
        out[idx::XH3] = (qa1 + qa2 - (c.ql[0] + c.ql[1])) / c.th_sum();
    }

    fn generator_powers<S: Scalar>(&self, d1: S, d2: S) -> (S, S) {
        let p = &self.params;
        let (e1, e2, ei) = (p.e_gen[0], p.e_gen[1], p.e_inf);
        let (s12, c12) = (d1 - d2).sin_cos();
        let (s1, c1) = d1.sin_cos();
        let (s2, c2) = d2.sin_cos();
        let pe1 = (c12 * p.g12 + s12 * p.b12) * (e1 * e2)
            + (c1 * p.g10 + s1 * p.b10) * (e1 * ei)
            + e1 * e1 * p.g11;
        let pe2 = (c12 * p.g12 - s12 * p.b12) * (e1 * e2)
            + (c2 * p.g20 + s2 * p.b20) * (e2 * ei)
            + e2 * e2 * p.g22;
        (pe1, pe2)
    }

    fn electric_output<S: Scalar>(&self, d1: S, d2: S) -> S {
        let p = &self.params;
        let (s1, c1) = d1.sin_cos();
        let (s2, c2) = d2.sin_cos();
        (s1 * p.b10 - c1 * p.g10) * (p.e_inf * p.e_gen[0])
            + (s2 * p.b20 - c2 * p.g20) * (p.e_inf * p.e_gen[1])
    }

    /// `f(x)`.
    pub fn f(&self, x: &FullState) -> Result<[f64; DIM]> {
        if !x.is_finite() {
            return Err(Error::Domain { what: "state" });
        }
        let mut out = [0.0; DIM];
        self.drift(&x.0, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain { what: "drift field" });
        }
        Ok(out)
    }

    /// Input field `g_i` for `which ∈ {1, 2}`.
    pub fn g(&self, which: usize) -> [f64; DIM] {
        assert!(which == 1 || which == 2, "input index must be 1 or 2");
        let s = which - 1;
        let mut g = [0.0; DIM];
        g[3 * s] = (1.0 - self.params.wo[s]) / self.params.tv[s];
        g
    }

    pub fn g1(&self) -> [f64; DIM] {
        self.g(1)
    }

    pub fn g2(&self) -> [f64; DIM] {
        self.g(2)
    }

    /// `f(x) + g1 u1 + g2 u2`.
    pub fn rate(&self, x: &FullState, u: Inputs) -> Result<[f64; DIM]> {
        let mut r = self.f(x)?;
        r[idx::VP1] += (1.0 - self.params.wo[0]) / self.params.tv[0] * u.u1;
        r[idx::VP2] += (1.0 - self.params.wo[1]) / self.params.tv[1] * u.u2;
        Ok(r)
    }

    pub fn electrical_flows(&self, xe: &[f64; 4]) -> ElectricalFlows {
        let p = &self.params;
        let (d1, d2) = (xe[0], xe[2]);
        let (p_e1, p_e2) = self.generator_powers(d1, d2);
        ElectricalFlows {
            p_e1,
            p_e2,
            p_e_inf: self.electric_output(d1, d2),
            dp_inf1_ddelta1: -p.e_inf * p.e_gen[0] * (p.g10 * d1.sin() + p.b10 * d1.cos()),
            dp_inf2_ddelta2: -p.e_inf * p.e_gen[1] * (p.g20 * d2.sin() + p.b20 * d2.cos()),
        }
    }

    pub fn heat_flows(&self, xh: &[f64; 3], xg: &[f64; 6]) -> HeatFlows {
        let c = &self.derived;
        HeatFlows {
            qa1: xg[1] * c.qa_gain[0] + c.qa_offset[0],
            qa2: xg[4] * c.qa_gain[1] + c.qa_offset[1],
            q12: xh[1] * c.kappa,
        }
    }

    pub fn outputs(&self, x: &FullState) -> Outputs {
        Outputs {
            y1: self.electric_output(x.0[idx::DELTA1], x.0[idx::DELTA2]),
            y2: x.0[idx::W] * self.derived.kappa,
        }
    }

    /// Pipe velocity giving heat flow `q12`.
    pub fn velocity_for_heat_flow(&self, q12: f64) -> f64 {
        q12 / self.derived.kappa
    }

    /// `L_f^k h(x)`.
    pub fn lie_f(&self, kind: OutputKind, x: &FullState, k: usize) -> Result<f64> {
        self.guard(kind, x, k)?;
        jets::lie_f(self, &self.output(kind), &x.0, k).map_err(|e| self.smooth_err(e, x))
    }

    /// `L_{g_which} L_f^k h(x)`.
    pub fn lie_g_lie_f(&self, kind: OutputKind, x: &FullState, k: usize, which: usize) -> Result<f64> {
        self.guard(kind, x, k)?;
        jets::lie_g_lie_f(self, &self.output(kind), &x.0, k, &self.g(which))
            .map_err(|e| self.smooth_err(e, x))
    }

    /// Lie-derivative chains `[h, L_f h, ..., L_f^order h]` for several outputs.
    pub fn lie_chains(&self, kinds: &[OutputKind], x: &FullState, order: usize) -> Result<Vec<Vec<f64>>> {
        for &k in kinds {
            self.guard(k, x, order)?;
        }
        let hs: Vec<_> = kinds.iter().map(|&k| self.output(k)).collect();
        jets::lie_f_series(self, &hs, &x.0, order).map_err(|e| self.smooth_err(e, x))
    }

    /// Lie-derivative chains with directional derivatives along `v`.
    pub fn lie_chains_directional(
        &self,
        kinds: &[OutputKind],
        x: &FullState,
        v: &[f64; DIM],
        order: usize,
    ) -> Result<Vec<Vec<Dual>>> {
        for &k in kinds {
            self.guard(k, x, order)?;
        }
        let hs: Vec<_> = kinds.iter().map(|&k| self.output(k)).collect();
        jets::lie_directional_series(self, &hs, &x.0, v, order).map_err(|e| self.smooth_err(e, x))
    }

    fn guard(&self, kind: OutputKind, x: &FullState, k: usize) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Domain { what: "state" });
        }
        let meets_w = match kind {
            OutputKind::HeatFlow => k >= 1,
            OutputKind::Component(i) => (i == idx::W && k >= 1) || (i == idx::XH1 && k >= 2),
            _ => false,
        };
        if meets_w && self.friction == FrictionLaw::SignedSquare && x.w() <= 0.0 {
            return Err(Error::Smoothness { w: x.w() });
        }
        Ok(())
    }

    fn smooth_err(&self, e: Error, x: &FullState) -> Error {
        match e {
            Error::Smoothness { .. } => Error::Smoothness { w: x.w() },
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn model() -> TwoSiteModel {
        TwoSiteModel::default()
    }

    fn sample_state() -> FullState {
        FullState::from_parts(
            [0.61, 0.6, 0.58, 0.55, 0.56, 0.57],
            [0.66, 0.01, 0.39, -0.02],
            [13.0, 2.1, 0.4],
        )
    }

    #[test]
    fn derived_time_constants() {
        let c = &model().derived;
        assert!((c.te[0] - 0.230_327).abs() < 1e-6);
        assert!((c.th[0] - 0.110_16).abs() < 1e-4);
        assert!((c.th3 - 68.14).abs() < 0.01);
        assert!((c.friction - 8.0).abs() < 1e-12);
        assert!((c.kappa - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn gas_turbine_rest_point() {
        let m = model();
        let wo = m.params.wo;
        let x = FullState::from_parts([wo[0], wo[0], wo[0], wo[1], wo[1], wo[1]], [0.0; 4], [0.0, 1.0, 0.0]);
        let f = m.f(&x).unwrap();
        assert!(f[..6].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn electric_rest_point() {
        let m = model();
        let wo = m.params.wo;
        let x = FullState::from_parts([wo[0], wo[0], wo[0], wo[1], wo[1], wo[1]], [0.0; 4], [0.0, 1.0, 0.0]);
        let f = m.f(&x).unwrap();
        assert!(f[6..10].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn heat_balance_rest_point() {
        let m = model();
        let c = &m.derived;
        let w: f64 = 1.3;
        let q12 = w * c.kappa;
        let wf1 = (c.ql[0] + q12 - c.qa_offset[0]) / c.qa_gain[0];
        let wf2 = (c.ql[1] - q12 - c.qa_offset[1]) / c.qa_gain[1];
        let xh1 = c.rho_ratio * c.friction * w * w.abs();
        let x = FullState::from_parts([0.5, wf1, 0.5, 0.5, wf2, 0.5], [0.1; 4], [xh1, w, 7.0]);
        let f = m.f(&x).unwrap();
        assert!(f[idx::XH1].abs() < 1e-12);
        assert!(f[idx::W].abs() < 1e-12);
    }

    #[test]
    fn input_fields() {
        let m = model();
        let g1 = m.g1();
        assert!((g1[0] - 15.4).abs() < 1e-12);
        assert!(g1.iter().skip(1).all(|v| *v == 0.0));
        let g2 = m.g2();
        assert!(g2.iter().enumerate().all(|(i, v)| (i == 3) == (*v != 0.0)));
    }

    #[test]
    fn electrical_examples() {
        let m = model();
        assert_eq!(m.electrical_flows(&[0.0; 4]).p_e_inf, 0.0);
        let e = m.electrical_flows(&[FRAC_PI_2, 0.0, 0.0, 0.0]);
        assert!((e.p_e_inf - 1.0).abs() < 1e-15);
        let e = m.electrical_flows(&[0.4, 0.0, 0.4, 0.0]);
        assert!((e.p_e1 - m.params.b10 * 0.4f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn heat_flow_examples() {
        let m = model();
        assert_eq!(m.heat_flows(&[0.0; 3], &[0.0; 6]).q12, 0.0);
        let h = m.heat_flows(&[0.0; 3], &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.qa1, m.params.kh[0] / m.params.qr);
        assert_eq!(m.params.h_s - m.params.h_w, 2047.0);
    }

    #[test]
    fn outputs_match_flows() {
        let m = model();
        let x = sample_state();
        let y = m.outputs(&x);
        assert_eq!(y.y1, m.electrical_flows(&x.xe()).p_e_inf);
        assert_eq!(y.y2, m.heat_flows(&x.xh(), &x.xg()).q12);
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let mut x = sample_state();
        x.0[4] = f64::NAN;
        assert!(matches!(model().f(&x), Err(Error::Domain { .. })));
    }

    #[test]
    fn lie_of_average_pressure_is_f_h3() {
        let m = model();
        let x = sample_state();
        let l = m.lie_f(OutputKind::AveragePressure, &x, 1).unwrap();
        assert!((l - m.f(&x).unwrap()[idx::XH3]).abs() < 1e-15);
        assert_eq!(m.lie_f(OutputKind::ElectricPower, &x, 0).unwrap(), m.outputs(&x).y1);
    }

    #[test]
    fn heat_flow_chain_refuses_non_positive_velocity() {
        let m = model();
        let mut x = sample_state();
        x.0[idx::W] = -0.5;
        assert_eq!(
            m.lie_f(OutputKind::HeatFlow, &x, 2),
            Err(Error::Smoothness { w: -0.5 })
        );
        assert!(m.lie_f(OutputKind::HeatFlow, &x, 0).is_ok());
        assert!(m.lie_f(OutputKind::AveragePressure, &x, 3).is_ok());
    }
}
