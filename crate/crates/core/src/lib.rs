//! Modelling, analysis and control of a two-site combined heat and power
//! system: Lie-derivative jets, normal-form coordinates, zero dynamics,
//! an output-redefinition tracking controller and the supporting solvers.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod jets;
pub mod linalg;
pub mod model;
pub mod normal_form;
pub mod sim;
pub mod zero_dynamics;

pub use error::{Error, Result};
pub use model::{FrictionLaw, FullState, Inputs, OutputKind, Outputs, SystemParams, TwoSiteModel};
