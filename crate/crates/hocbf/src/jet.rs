//! Order-2 truncated Taylor arithmetic (forward-mode differentiation along a
//! single curve). A `Jet2` carries a value together with its first and second
//! derivative with respect to the curve parameter; arithmetic propagates all
//! three. This is how Lie derivatives of the attitude barrier are computed
//! without hand-deriving second-order chain rules.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus first and second derivative along one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Jet2 { value, d1, d2 }
    }

    /// A constant: both derivatives vanish.
    pub fn constant(value: f64) -> Self {
        Jet2 {
            value,
            d1: 0.0,
            d2: 0.0,
        }
    }

    /// The curve parameter itself: derivative 1, curvature 0.
    pub fn variable(value: f64) -> Self {
        Jet2 {
            value,
            d1: 1.0,
            d2: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    /// Chain rule through a scalar function given its value and first two
    /// derivatives at `self.value`: (g o v)' = g' v', (g o v)'' = g'' v'^2 + g' v''.
    pub fn compose(self, g: f64, dg: f64, ddg: f64) -> Self {
        Jet2 {
            value: g,
            d1: dg * self.d1,
            d2: ddg * self.d1 * self.d1 + dg * self.d2,
        }
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.value;
        let inv2 = inv * inv;
        Jet2 {
            value: inv,
            d1: -inv2 * self.d1,
            d2: 2.0 * inv2 * inv * self.d1 * self.d1 - inv2 * self.d2,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        Jet2 {
            value: e,
            d1: e * self.d1,
            d2: e * (self.d2 + self.d1 * self.d1),
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }
}

impl From<f64> for Jet2 {
    fn from(value: f64) -> Self {
        Jet2::constant(value)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            value: self.value + rhs.value,
            d1: self.d1 + rhs.d1,
            d2: self.d2 + rhs.d2,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            value: self.value - rhs.value,
            d1: self.d1 - rhs.d1,
            d2: self.d2 - rhs.d2,
        }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            value: self.value * rhs.value,
            d1: self.d1 * rhs.value + self.value * rhs.d1,
            d2: self.d2 * rhs.value + 2.0 * self.d1 * rhs.d1 + self.value * rhs.d2,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: Jet2) -> Jet2 {
        self * rhs.recip()
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2 {
            value: -self.value,
            d1: -self.d1,
            d2: -self.d2,
        }
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: f64) -> Jet2 {
        Jet2 {
            value: self.value + rhs,
            ..self
        }
    }
}

impl Add<Jet2> for f64 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        rhs + self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: f64) -> Jet2 {
        Jet2 {
            value: self.value - rhs,
            ..self
        }
    }
}

impl Sub<Jet2> for f64 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        -rhs + self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        Jet2 {
            value: self.value * rhs,
            d1: self.d1 * rhs,
            d2: self.d2 * rhs,
        }
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs * self
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: f64) -> Jet2 {
        Jet2 {
            value: self.value / rhs,
            d1: self.d1 / rhs,
            d2: self.d2 / rhs,
        }
    }
}
