//! TOML configuration files for each command.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use twosite::linalg::Complex;
use twosite::normal_form::{self, Variant};
use twosite::sim::IntegratorConfig;
use twosite::zero_dynamics::Method;

use crate::error::CliError;

/// Reads and parses a TOML file. Parse errors carry line and column.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, String), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let value = toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((value, text))
}

/// Evenly spaced grid with both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn validate(&self, name: &str) -> Result<(), CliError> {
        if self.n == 0 || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(CliError::Validation(format!(
                "`{name}` needs finite bounds and n >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        normal_form::linspace(self.lo, self.hi, self.n)
    }
}

fn default_attraction() -> f64 {
    5.0
}

fn default_fraction() -> f64 {
    0.2
}

fn default_method() -> Method {
    Method::OutputZeroing
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroDynamicsConfig {
    pub y1_ref: f64,
    pub y2_ref: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Pole location of the attraction terms (output-zeroing method).
    #[serde(default = "default_attraction")]
    pub attraction: f64,
    /// Trailing fraction of each run used for the convergence verdicts.
    #[serde(default = "default_fraction")]
    pub summary_fraction: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Initial `η = (w_t1, δ1, ω1, x_h3)`.
    pub initial_conditions: Vec<[f64; 4]>,
}

impl ZeroDynamicsConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.initial_conditions.is_empty() {
            return Err(CliError::Validation("`initial_conditions` must not be empty".into()));
        }
        if !(self.y1_ref.is_finite() && self.y2_ref.is_finite() && self.y2_ref > 0.0) {
            return Err(CliError::Validation(
                "`y1_ref` must be finite and `y2_ref` finite and positive".into(),
            ));
        }
        if !(self.attraction.is_finite() && self.attraction > 0.0) {
            return Err(CliError::Validation("`attraction` must be positive".into()));
        }
        if !(self.summary_fraction > 0.0 && self.summary_fraction <= 1.0) {
            return Err(CliError::Validation("`summary_fraction` must lie in (0, 1]".into()));
        }
        if let Some(i) = self.initial_conditions.iter().position(|e| e.iter().any(|v| !v.is_finite())) {
            return Err(CliError::Validation(format!("initial condition {i} is not finite")));
        }
        self.integrator.validate().map_err(CliError::from)
    }
}

fn default_variant() -> Variant {
    Variant::Redefined
}

fn full_turn() -> Grid {
    Grid::new(-std::f64::consts::PI, std::f64::consts::PI, 201)
}

fn default_base_y1() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityConfig {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "full_turn")]
    pub x_e1: Grid,
    #[serde(default = "full_turn")]
    pub x_e3: Grid,
    /// Non-angle coordinates come from the equilibrium at this `Y1` with `Ŷ2 = 0`.
    #[serde(default = "default_base_y1")]
    pub base_y1: f64,
}

impl Default for SingularityConfig {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            x_e1: full_turn(),
            x_e3: full_turn(),
            base_y1: default_base_y1(),
        }
    }
}

impl SingularityConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.x_e1.validate("x_e1")?;
        self.x_e3.validate("x_e3")
    }
}

fn q_grid() -> Grid {
    Grid::new(0.5, 1.32, 83)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigQConfig {
    #[serde(default = "q_grid")]
    pub y1: Grid,
    #[serde(default)]
    pub yhat2_ref: f64,
}

impl Default for EigQConfig {
    fn default() -> Self {
        Self {
            y1: q_grid(),
            yhat2_ref: 0.0,
        }
    }
}

fn y2_grid() -> Grid {
    Grid::new(0.05, 5.5, 110)
}

fn default_refine_tol() -> f64 {
    1e-3
}

/// Scan over `Y2` at fixed `Y1`: `Q̃` when `k` is absent, the tracking
/// matrix otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Y2ScanConfig {
    #[serde(default = "default_base_y1")]
    pub y1_ref: f64,
    #[serde(default = "y2_grid")]
    pub y2: Grid,
    #[serde(default)]
    pub k: Option<f64>,
    /// Bisection width for the stability boundary; `0` disables refinement.
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
}

impl Default for Y2ScanConfig {
    fn default() -> Self {
        Self {
            y1_ref: default_base_y1(),
            y2: y2_grid(),
            k: None,
            refine_tol: default_refine_tol(),
        }
    }
}

/// A root given as a real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Root {
    Real(f64),
    Complex([f64; 2]),
}

impl Root {
    pub fn value(self) -> Complex<f64> {
        match self {
            Root::Real(r) => Complex::new(r, 0.0),
            Root::Complex([re, im]) => Complex::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Poles {
    pub electric: Vec<Root>,
    pub heat: Vec<Root>,
}

impl Default for Poles {
    fn default() -> Self {
        Self {
            electric: twosite::controller::DEFAULT_ELECTRIC_ROOTS.map(Root::Real).to_vec(),
            heat: twosite::controller::DEFAULT_HEAT_ROOTS.map(Root::Real).to_vec(),
        }
    }
}

/// Starting point of a closed-loop run: an equilibrium `[Y1, Ŷ2]` or an
/// explicit 13-component state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    #[serde(default)]
    pub equilibrium: Option<[f64; 2]>,
    #[serde(default)]
    pub state: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: [f64; 2],
}

fn default_k() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub y1_ref: f64,
    #[serde(default)]
    pub y2_ref: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    pub initial: Initial,
    #[serde(default)]
    pub poles: Option<Poles>,
    /// TOML file with a `[poles]`-shaped table, relative to the scenario file.
    #[serde(default)]
    pub poles_file: Option<String>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.initial.equilibrium, &self.initial.state) {
            (Some(_), None) => {}
            (None, Some(s)) if s.len() == twosite::model::DIM => {}
            (None, Some(s)) => {
                return Err(CliError::Validation(format!(
                    "`initial.state` needs {} components, got {}",
                    twosite::model::DIM,
                    s.len()
                )))
            }
            _ => {
                return Err(CliError::Validation(
                    "`initial` needs exactly one of `equilibrium` and `state`".into(),
                ))
            }
        }
        if self.poles.is_some() && self.poles_file.is_some() {
            return Err(CliError::Validation("give `poles` or `poles_file`, not both".into()));
        }
        self.integrator.validate().map_err(CliError::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_accept_reals_and_pairs() {
        let p: Poles = toml::from_str("electric = [-1.0, [-2.0, 0.5], [-2.0, -0.5], -3, -4]\nheat = [-0.25, -0.25, -0.25]").unwrap();
        let z: Vec<_> = p.electric.iter().map(|r| r.value()).collect();
        assert_eq!(z[1], Complex::new(-2.0, 0.5));
        assert_eq!(z[3], Complex::new(-3.0, 0.0));
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(Grid::new(0.0, 1.0, 0).validate("g").is_err());
        assert_eq!(Grid::new(0.3, 0.9, 1).points(), vec![0.3]);
    }

    #[test]
    fn scenario_needs_one_initial_source() {
        let both = "y1_ref = 1.0\n[initial]\nequilibrium = [1.0, 0.0]\nstate = [0.0]\n";
        let cfg: ScenarioConfig = toml::from_str(both).unwrap();
        assert!(cfg.validate().is_err());
        let short = "y1_ref = 1.0\n[initial]\nstate = [0.0, 1.0]\n";
        let cfg: ScenarioConfig = toml::from_str(short).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scenario_defaults() {
        let cfg: ScenarioConfig = toml::from_str("y1_ref = 1.2\n[initial]\nequilibrium = [1.0, 0.0]\n").unwrap();
        assert_eq!(cfg.k, 0.01);
        assert_eq!(cfg.initial.sigma, [0.0, 0.0]);
        assert!(cfg.validate().is_ok());
    }
}
