use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number-like type the model equations are written against.
///
/// Implemented for `f64`, [`Dual`], and [`Jet`](super::Jet) over either, so
/// one definition of the vector field serves plain evaluation, directional
/// derivatives and Taylor propagation.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(v: f64) -> Self;

    /// Real value at the expansion point.
    fn value(&self) -> f64;

    fn sin_cos(self) -> (Self, Self);

    fn sin(self) -> Self {
        self.sin_cos().0
    }

    fn cos(self) -> Self {
        self.sin_cos().1
    }

    /// `x|x|`.
    fn signed_square(self) -> Self;

    /// False once a non-smooth branch has been taken.
    fn is_smooth(&self) -> bool {
        true
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }

    fn value(&self) -> f64 {
        *self
    }

    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }

    fn signed_square(self) -> Self {
        self * self.abs()
    }
}

/// Value paired with a derivative in one fixed direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.v, -self.d)
    }
}

impl Add<f64> for Dual {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Dual::new(self.v + o, self.d)
    }
}

impl Sub<f64> for Dual {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Dual::new(self.v - o, self.d)
    }
}

impl Mul<f64> for Dual {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Dual::new(self.v * o, self.d * o)
    }
}

impl Div<f64> for Dual {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        Dual::new(self.v / o, self.d / o)
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.v.sin_cos();
        (Dual::new(s, c * self.d), Dual::new(c, -s * self.d))
    }

    fn signed_square(self) -> Self {
        Dual::new(self.v * self.v.abs(), 2.0 * self.v.abs() * self.d)
    }
}
