//! `equilibrium`: a single equilibrium solve.

use serde::Serialize;
use twosite::analysis::{self, EquilibriumSolution};

use crate::context::Context;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct Request {
    y1_ref: f64,
    yhat2_ref: f64,
}

pub fn run(ctx: &mut Context, y1_ref: f64, yhat2_ref: f64) -> Result<(), CliError> {
    if !(y1_ref.is_finite() && yhat2_ref.is_finite()) {
        return Err(CliError::Validation("references must be finite".into()));
    }
    ctx.record(&Request { y1_ref, yhat2_ref });
    let sol: EquilibriumSolution = analysis::solve_equilibrium(&ctx.model, y1_ref, yhat2_ref)?;
    ctx.out.json("equilibrium.json", &sol)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&sol).map_err(|e| CliError::Numerical(e.to_string()))?
    );
    Ok(())
}
