//! Small dense linear-algebra helpers and a damped Newton solver.

pub use nalgebra::Complex;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jets::Dual;

/// Eigenvalues sorted by descending real part, then descending imaginary part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

pub fn max_real_part(ev: &[Complex<f64>]) -> f64 {
    ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Coefficients `[a_0, ..., a_{n-1}]` of the monic polynomial with the given roots.
///
/// Complex roots must come in conjugate pairs.
pub fn poly_from_roots(roots: &[Complex<f64>]) -> Result<Vec<f64>> {
    let mut c = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * r;
        }
        c = next;
    }
    let scale = c.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if c.iter().any(|z| z.im.abs() > 1e-9 * scale) {
        return Err(Error::Config(
            "complex roots must appear in conjugate pairs".into(),
        ));
    }
    c.pop();
    Ok(c.into_iter().map(|z| z.re).collect())
}

/// Roots of `s^n + a_{n-1} s^{n-1} + ... + a_0` from companion-matrix eigenvalues.
pub fn poly_roots(a: &[f64]) -> Vec<Complex<f64>> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        m[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        m[(n - 1, j)] = -a[j];
    }
    eigenvalues(&m)
}

/// `|det M| / Π_i ‖row_i‖`, a scale-free measure of singularity in `[0, 1]`.
pub fn hadamard_ratio(m: &DMatrix<f64>) -> f64 {
    let det = m.clone().lu().determinant().abs();
    let rows: f64 = m.row_iter().map(|r| r.norm()).product();
    if rows == 0.0 {
        0.0
    } else {
        det / rows
    }
}

/// Matrices whose [`hadamard_ratio`] falls below this are treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-8;

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    if hadamard_ratio(a) < SINGULAR_RATIO * 1e-4 {
        return Err(Error::Singular {
            what,
            det: a.clone().lu().determinant(),
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Singular {
        what,
        det: a.clone().lu().determinant(),
    })
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on the max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    pub what: &'static str,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration with step halving.
///
/// A step is accepted once the residual norm decreases; after ten halvings
/// without decrease the solve fails.
pub fn newton<R, J>(x0: &[f64], mut residual: R, mut jacobian: J, opts: NewtonOptions) -> Result<NewtonResult>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<DMatrix<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let mut norm = inf_norm(&r);
    if !norm.is_finite() {
        return Err(Error::Domain { what: opts.what });
    }
    for it in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(NewtonResult {
                x,
                residual: norm,
                iterations: it,
            });
        }
        let jac = jacobian(&x)?;
        let dx = solve(&jac, &-DVector::from_column_slice(&r), opts.what)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=10 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok(rt) = residual(&trial) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && nt < norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                what: opts.what,
                iterations: it + 1,
                residual: norm,
            });
        }
    }
    if norm <= opts.tol {
        Ok(NewtonResult {
            x,
            residual: norm,
            iterations: opts.max_iter,
        })
    } else {
        Err(Error::NoConvergence {
            what: opts.what,
            iterations: opts.max_iter,
            residual: norm,
        })
    }
}

/// Central-difference Jacobian of `f` with per-coordinate step `rel * max(1, |x_j|)`.
pub fn fd_jacobian<F>(x: &[f64], rel: f64, mut f: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = rel * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        cols.push(DVector::from_iterator(
            fp.len(),
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)),
        ));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Exact Jacobian of `f` at `x` by one forward dual pass per column.
pub fn dual_jacobian<F>(x: &[f64], mut f: F) -> DMatrix<f64>
where
    F: FnMut(&[Dual]) -> Vec<Dual>,
{
    let n = x.len();
    let mut seed: Vec<Dual> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        seed[j].d = 1.0;
        let out = f(&seed);
        seed[j].d = 0.0;
        cols.push(DVector::from_iterator(out.len(), out.iter().map(|o| o.d)));
    }
    DMatrix::from_columns(&cols)
}
