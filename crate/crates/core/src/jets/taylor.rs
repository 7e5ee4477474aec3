use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;

/// Coefficient capacity of a [`Jet`]; supports expansions up to degree 7.
pub const CAPACITY: usize = 8;

/// Truncated Taylor series `c[0] + c[1] t + ... + c[n-1] t^(n-1)`.
///
/// Constants carry a single coefficient and are exact. Binary operations
/// keep `max(n_a, n_b)` coefficients, so all non-constant operands taking
/// part in one computation must share the same truncation length.
#[derive(Clone, Copy, Debug)]
pub struct Jet<S> {
    c: [S; CAPACITY],
    n: usize,
    kink: bool,
}

impl<S: Scalar> Jet<S> {
    pub fn from_coeffs(coeffs: &[S]) -> Self {
        assert!(
            !coeffs.is_empty() && coeffs.len() <= CAPACITY,
            "jet length must be in 1..={CAPACITY}"
        );
        let mut c = [S::constant(0.0); CAPACITY];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Self {
            c,
            n: coeffs.len(),
            kink: false,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coefficient `k`; zero beyond the stored length.
    pub fn coeff(&self, k: usize) -> S {
        if k < self.n {
            self.c[k]
        } else {
            S::constant(0.0)
        }
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c[..self.n]
    }

    /// Appends the next coefficient.
    pub fn push(&mut self, v: S) {
        assert!(self.n < CAPACITY, "jet capacity exceeded");
        self.c[self.n] = v;
        self.n += 1;
    }

    pub fn has_kink(&self) -> bool {
        self.kink
    }

    fn zeros(n: usize, kink: bool) -> Self {
        Self {
            c: [S::constant(0.0); CAPACITY],
            n,
            kink,
        }
    }

    fn map(self, f: impl Fn(S) -> S) -> Self {
        let mut out = self;
        for k in 0..self.n {
            out.c[k] = f(self.c[k]);
        }
        out
    }
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut out = Self::zeros(n, self.kink || o.kink);
        for k in 0..n {
            out.c[k] = self.coeff(k) + o.coeff(k);
        }
        out
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut out = Self::zeros(n, self.kink || o.kink);
        for k in 0..n {
            out.c[k] = self.coeff(k) - o.coeff(k);
        }
        out
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut out = Self::zeros(n, self.kink || o.kink);
        for k in 0..n {
            let lo = k.saturating_sub(o.n - 1);
            let hi = k.min(self.n - 1);
            let mut acc = S::constant(0.0);
            for j in lo..=hi {
                acc = acc + self.c[j] * o.c[k - j];
            }
            out.c[k] = acc;
        }
        out
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<S: Scalar> Add<f64> for Jet<S> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        let mut out = self;
        out.c[0] = out.c[0] + o;
        out
    }
}

impl<S: Scalar> Sub<f64> for Jet<S> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        let mut out = self;
        out.c[0] = out.c[0] - o;
        out
    }
}

impl<S: Scalar> Mul<f64> for Jet<S> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        self.map(|v| v * o)
    }
}

impl<S: Scalar> Div<f64> for Jet<S> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self.map(|v| v / o)
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn constant(v: f64) -> Self {
        Self::from_coeffs(&[S::constant(v)])
    }

    fn value(&self) -> f64 {
        self.c[0].value()
    }

    fn sin_cos(self) -> (Self, Self) {
        let n = self.n;
        let mut s = Self::zeros(n, self.kink);
        let mut c = Self::zeros(n, self.kink);
        let (s0, c0) = self.c[0].sin_cos();
        s.c[0] = s0;
        c.c[0] = c0;
        for k in 1..n {
            let mut ds = S::constant(0.0);
            let mut dc = S::constant(0.0);
            for j in 1..=k {
                let ja = self.c[j] * (j as f64);
                ds = ds + ja * c.c[k - j];
                dc = dc + ja * s.c[k - j];
            }
            s.c[k] = ds / (k as f64);
            c.c[k] = -dc / (k as f64);
        }
        (s, c)
    }

    fn signed_square(self) -> Self {
        let v = self.value();
        let sq = self * self;
        let mut out = if v > 0.0 { sq } else { -sq };
        if v <= 0.0 {
            out.kink = true;
        }
        out
    }

    fn is_smooth(&self) -> bool {
        !self.kink && self.c[0].is_smooth()
    }
}
