//! Finite-difference estimate of `L_f^k h` from short flow integrations.
//!
//! Independent of the jet recurrence: the flow is sampled with classical
//! fourth-order Runge–Kutta at tiny fixed substeps and `d^k/dt^k h(φ_t(x))`
//! is read off a 7-point central stencil, extrapolated once between steps
//! `δ` and `2δ`.

use super::{Observable, VectorField};
use crate::error::{Error, Result};

/// Stencil step in time units.
pub const STEP: f64 = 1e-3;
const SUBSTEPS: usize = 10;

fn rk4_step<F: VectorField>(field: &F, x: &mut [f64], dt: f64) {
    let n = x.len();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    field.eval(x, &mut k[0]);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k[0][i];
    }
    field.eval(&tmp, &mut k[1]);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k[1][i];
    }
    field.eval(&tmp, &mut k[2]);
    for i in 0..n {
        tmp[i] = x[i] + dt * k[2][i];
    }
    field.eval(&tmp, &mut k[3]);
    for i in 0..n {
        x[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// `h(φ_{jδ}(x))` for `j = -m..=m`, one row per observable, and the
/// largest `j` reached in both directions before the flow left the finite
/// domain.
fn samples<F: VectorField, H: Observable>(
    field: &F,
    hs: &[H],
    x: &[f64],
    m: usize,
) -> (Vec<Vec<f64>>, usize) {
    let mut out = vec![vec![f64::NAN; 2 * m + 1]; hs.len()];
    for (row, h) in out.iter_mut().zip(hs) {
        row[m] = h.eval(x);
    }
    let mut valid = m;
    for dir in [1.0, -1.0] {
        let mut y = x.to_vec();
        for j in 1..=valid {
            for _ in 0..SUBSTEPS {
                rk4_step(field, &mut y, dir * STEP / SUBSTEPS as f64);
            }
            let pos = if dir > 0.0 { m + j } else { m - j };
            let vals: Vec<f64> = hs.iter().map(|h| h.eval(&y)).collect();
            if y.iter().chain(&vals).any(|v| !v.is_finite()) {
                valid = j - 1;
                break;
            }
            for (row, v) in out.iter_mut().zip(vals) {
                row[pos] = v;
            }
        }
    }
    (out, valid)
}

const WEIGHTS: [([f64; 7], f64, i32); 4] = [
    ([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0], 60.0, 6),
    ([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0], 180.0, 6),
    ([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0], 8.0, 4),
    ([-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0], 6.0, 4),
];

/// Highest order served by the oracle.
pub const MAX_ORACLE_ORDER: usize = 4;
/// Stencil steps tried are `STEP * 2^j` for `j < LEVELS`.
pub const LEVELS: usize = 9;

fn derivative(s: &[f64], reach: usize, valid: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(s[reach]);
    }
    let levels = (0..LEVELS).take_while(|j| 6 << j <= valid).count();
    if levels < 2 {
        return Err(Error::Integration {
            t: valid as f64 * STEP,
            msg: "oracle flow left the finite domain".into(),
        });
    }
    let (w, denom, order) = WEIGHTS[k - 1];
    let stencil = |stride: usize| {
        let dt = STEP * stride as f64;
        let acc: f64 = (0..7)
            .map(|j| w[j] * s[(reach as isize + (j as isize - 3) * stride as isize) as usize])
            .sum();
        acc / (denom * dt.powi(k as i32))
    };
    let r = 2f64.powi(order);
    let est: Vec<f64> = (0..levels)
        .map(|j| {
            let stride = 1 << j;
            (r * stencil(stride) - stencil(2 * stride)) / (r - 1.0)
        })
        .collect();
    let best = (0..levels - 1)
        .min_by(|&a, &b| {
            let da = (est[a] - est[a + 1]).abs();
            let db = (est[b] - est[b + 1]).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    Ok(est[best])
}

/// Finite-difference estimates of `[h, L_f h, ..., L_f^order h]` for each observable.
///
/// Samples the flow once on a grid of spacing [`STEP`], evaluates the
/// extrapolated stencil at each step `STEP * 2^j`, and keeps the estimate
/// whose neighbour at the next coarser step agrees best. Small steps are
/// limited by rounding (`~ ε / δ^k`), large ones by truncation; the
/// agreement test picks a step between the two regimes.
pub fn fd_oracle_series<F: VectorField, H: Observable>(
    field: &F,
    hs: &[H],
    x: &[f64],
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    if order > MAX_ORACLE_ORDER {
        return Err(Error::Order {
            order,
            max: MAX_ORACLE_ORDER,
        });
    }
    let reach = 6 << (LEVELS - 1);
    let reach = if order == 0 { 0 } else { reach };
    let (s, valid) = samples(field, hs, x, reach);
    s.iter()
        .map(|row| (0..=order).map(|k| derivative(row, reach, valid, k)).collect())
        .collect()
}

/// Finite-difference estimate of `L_f^k h(x)` for `k <= 4`.
pub fn fd_oracle<F: VectorField, H: Observable>(field: &F, h: &H, x: &[f64], k: usize) -> Result<f64> {
    Ok(fd_oracle_series(field, std::slice::from_ref(h), x, k)?[0][k])
}
