//! Lie derivatives by Taylor-series propagation along a vector field.
//!
//! The state jet of order `k` holds the first `k` time derivatives of the
//! flow through `x`. Evaluating an observable on it gives
//! `L_f^j h(x) = j! * coeff_j`. Seeding the state with [`Dual`] tangents
//! threads a directional derivative through the same recurrence, which
//! yields `L_g L_f^j h` for constant input fields `g`.

pub mod oracle;
mod scalar;
mod taylor;

pub use scalar::{Dual, Scalar};
pub use taylor::{Jet, CAPACITY};

use crate::error::{Error, Result};

/// Highest Lie-derivative order served by the engine.
pub const MAX_ORDER: usize = CAPACITY - 2;

/// Autonomous vector field written generically over [`Scalar`].
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]);
}

/// Scalar function of the state written generically over [`Scalar`].
pub trait Observable {
    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

/// Product of two observables.
pub struct Product<'a, A, B>(pub &'a A, pub &'a B);

impl<A: Observable, B: Observable> Observable for Product<'_, A, B> {
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        self.0.eval(x) * self.1.eval(x)
    }
}

/// Taylor expansion of the flow through `x` up to `t^order`.
pub fn state_jet<S: Scalar, F: VectorField>(
    field: &F,
    x: &[S],
    order: usize,
) -> Result<Vec<Jet<S>>> {
    if order > MAX_ORDER + 1 {
        return Err(Error::Order {
            order,
            max: MAX_ORDER + 1,
        });
    }
    let dim = field.dim();
    assert_eq!(x.len(), dim, "state dimension mismatch");
    let mut xj: Vec<Jet<S>> = x.iter().map(|&v| Jet::from_coeffs(&[v])).collect();
    let mut rate = vec![Jet::constant(0.0); dim];
    for k in 0..order {
        field.eval(&xj, &mut rate);
        for (xi, ri) in xj.iter_mut().zip(&rate) {
            xi.push(ri.coeff(k) / (k + 1) as f64);
        }
    }
    Ok(xj)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn series<S: Scalar, H: Observable>(xj: &[Jet<S>], h: &H, order: usize) -> Result<Vec<S>> {
    let hj = h.eval(xj);
    if !hj.is_smooth() && order > 0 {
        return Err(Error::Smoothness { w: f64::NAN });
    }
    Ok((0..=order).map(|k| hj.coeff(k) * factorial(k)).collect())
}

/// `[h, L_f h, ..., L_f^order h]` at `x` for each observable.
pub fn lie_f_series<F: VectorField, H: Observable>(
    field: &F,
    hs: &[H],
    x: &[f64],
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    check_order(order)?;
    let xj = state_jet(field, x, order)?;
    hs.iter().map(|h| series(&xj, h, order)).collect()
}

/// `L_f^k h(x)`.
pub fn lie_f<F: VectorField, H: Observable>(field: &F, h: &H, x: &[f64], k: usize) -> Result<f64> {
    let s = lie_f_series(field, std::slice::from_ref(h), x, k)?;
    Ok(s[0][k])
}

/// Lie-derivative chains together with their derivatives along `v`.
///
/// Returns, per observable, `[(L_f^j h(x), dL_f^j h(x)·v)]` for `j = 0..=order`.
pub fn lie_directional_series<F: VectorField, H: Observable>(
    field: &F,
    hs: &[H],
    x: &[f64],
    v: &[f64],
    order: usize,
) -> Result<Vec<Vec<Dual>>> {
    check_order(order)?;
    assert_eq!(x.len(), v.len(), "direction dimension mismatch");
    let seed: Vec<Dual> = x.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let xj = state_jet(field, &seed, order)?;
    hs.iter().map(|h| series(&xj, h, order)).collect()
}

/// `L_g L_f^k h(x)` for a constant direction field `g`.
pub fn lie_g_lie_f<F: VectorField, H: Observable>(
    field: &F,
    h: &H,
    x: &[f64],
    k: usize,
    g: &[f64],
) -> Result<f64> {
    let s = lie_directional_series(field, std::slice::from_ref(h), x, g, k)?;
    Ok(s[0][k].d)
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        Err(Error::Order {
            order,
            max: MAX_ORDER,
        })
    } else {
        Ok(())
    }
}
