//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] carries a value together with all partial derivatives up to
//! third order with respect to the patch parameters `u_1..u_n`. Arithmetic
//! propagates derivatives exactly (Leibniz and Faà di Bruno rules), so every
//! geometric quantity built from chart jets comes with its own derivatives
//! without any further differencing.
//!
//! Each jet records the highest derivative order that is actually known.
//! Taking a partial derivative lowers it by one and binary operations keep
//! the minimum, so reading a derivative that was never available is caught.

use std::ops::{Add, Mul, Neg, Sub};

/// Largest supported number of patch parameters.
pub const MAX_PARAMS: usize = 3;

/// Highest derivative order a jet can carry.
pub const MAX_ORDER: u8 = 3;

type D1 = [f64; MAX_PARAMS];
type D2 = [[f64; MAX_PARAMS]; MAX_PARAMS];
type D3 = [[[f64; MAX_PARAMS]; MAX_PARAMS]; MAX_PARAMS];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    n: u8,
    order: u8,
    v: f64,
    d1: D1,
    d2: D2,
    d3: D3,
}

impl Jet {
    /// A constant: all derivatives are exactly zero, so it is known to full order.
    pub fn constant(n: usize, value: f64) -> Self {
        assert!(n >= 1 && n <= MAX_PARAMS, "parameter count {n} out of range");
        Jet {
            n: n as u8,
            order: MAX_ORDER,
            v: value,
            d1: [0.0; MAX_PARAMS],
            d2: [[0.0; MAX_PARAMS]; MAX_PARAMS],
            d3: [[[0.0; MAX_PARAMS]; MAX_PARAMS]; MAX_PARAMS],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    /// The coordinate function `u_axis` evaluated at `value`.
    pub fn variable(n: usize, axis: usize, value: f64) -> Self {
        let mut jet = Self::constant(n, value);
        jet.d1[axis] = 1.0;
        jet
    }

    /// An affine function of one parameter: `value + slope * (u_axis - u0)` near `u0`.
    pub fn affine(n: usize, axis: usize, value: f64, slope: f64) -> Self {
        let mut jet = Self::constant(n, value);
        jet.d1[axis] = slope;
        jet
    }

    /// Assemble a jet from explicit derivative tensors. Entries beyond `n`
    /// are ignored. Higher tensors are symmetrized.
    pub fn from_parts(n: usize, value: f64, d1: &[f64], d2: &[Vec<f64>], d3: Option<&[Vec<Vec<f64>>]>) -> Self {
        let mut jet = Self::constant(n, value);
        for i in 0..n {
            jet.d1[i] = d1[i];
            for j in 0..n {
                jet.d2[i][j] = 0.5 * (d2[i][j] + d2[j][i]);
            }
        }
        match d3 {
            Some(d3) => {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            jet.d3[i][j][k] =
                                (d3[i][j][k] + d3[i][k][j] + d3[j][i][k] + d3[j][k][i] + d3[k][i][j] + d3[k][j][i])
                                    / 6.0;
                        }
                    }
                }
            }
            None => jet.order = 2,
        }
        jet
    }

    /// A bare sample with no derivative information.
    pub fn sample(n: usize, value: f64) -> Self {
        let mut jet = Self::constant(n, value);
        jet.order = 0;
        jet
    }

    pub fn params(&self) -> usize {
        self.n as usize
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.v
    }

    pub fn d(&self, i: usize) -> f64 {
        debug_assert!(self.order >= 1, "first derivative of an order-{} jet", self.order);
        self.d1[i]
    }

    pub fn dd(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.order >= 2, "second derivative of an order-{} jet", self.order);
        self.d2[i][j]
    }

    pub fn ddd(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert!(self.order >= 3, "third derivative of an order-{} jet", self.order);
        self.d3[i][j][k]
    }

    /// Drop derivative information above `order`.
    pub fn truncate(mut self, order: u8) -> Self {
        if order < self.order {
            self.order = order;
            if order < 3 {
                self.d3 = [[[0.0; MAX_PARAMS]; MAX_PARAMS]; MAX_PARAMS];
            }
            if order < 2 {
                self.d2 = [[0.0; MAX_PARAMS]; MAX_PARAMS];
            }
            if order < 1 {
                self.d1 = [0.0; MAX_PARAMS];
            }
        }
        self
    }

    /// The partial derivative `∂_axis` of this jet, known to one order less.
    pub fn partial(&self, axis: usize) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let n = self.params();
        let mut out = Self::constant(n, self.d1[axis]);
        out.order = self.order - 1;
        for i in 0..n {
            out.d1[i] = self.d2[axis][i];
            for j in 0..n {
                out.d2[i][j] = self.d3[axis][i][j];
            }
        }
        out
    }

    pub fn scale(mut self, factor: f64) -> Self {
        let n = self.params();
        self.v *= factor;
        for i in 0..n {
            self.d1[i] *= factor;
            for j in 0..n {
                self.d2[i][j] *= factor;
                for k in 0..n {
                    self.d3[i][j][k] *= factor;
                }
            }
        }
        self
    }

    /// Compose with a univariate function `g`, given `[g, g', g'', g''']`
    /// evaluated at this jet's value.
    pub fn compose(&self, g: [f64; 4]) -> Self {
        let n = self.params();
        let mut out = Self::constant(n, g[0]);
        out.order = self.order;
        let (a1, a2, a3) = (&self.d1, &self.d2, &self.d3);
        for i in 0..n {
            out.d1[i] = g[1] * a1[i];
            for j in 0..n {
                out.d2[i][j] = g[2] * a1[i] * a1[j] + g[1] * a2[i][j];
                for k in 0..n {
                    out.d3[i][j][k] = g[3] * a1[i] * a1[j] * a1[k]
                        + g[2] * (a2[i][j] * a1[k] + a2[i][k] * a1[j] + a2[j][k] * a1[i])
                        + g[1] * a3[i][j][k];
                }
            }
        }
        out
    }

    pub fn recip(&self) -> Self {
        let x = self.v;
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        let x = self.v;
        self.compose([s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)])
    }

    pub fn exp(&self) -> Self {
        let e = self.v.exp();
        self.compose([e, e, e, e])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn square(&self) -> Self {
        *self * *self
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.params();
        self.order = self.order.min(rhs.order);
        self.v += rhs.v;
        for i in 0..n {
            self.d1[i] += rhs.d1[i];
            for j in 0..n {
                self.d2[i][j] += rhs.d2[i][j];
                for k in 0..n {
                    self.d3[i][j][k] += rhs.d3[i][j][k];
                }
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, b: Jet) -> Jet {
        debug_assert_eq!(self.n, b.n);
        let a = self;
        let n = a.params();
        let mut out = Jet::constant(n, a.v * b.v);
        out.order = a.order.min(b.order);
        for i in 0..n {
            out.d1[i] = a.d1[i] * b.v + a.v * b.d1[i];
            for j in 0..n {
                out.d2[i][j] = a.d2[i][j] * b.v + a.d1[i] * b.d1[j] + a.d1[j] * b.d1[i] + a.v * b.d2[i][j];
                for k in 0..n {
                    out.d3[i][j][k] = a.d3[i][j][k] * b.v
                        + a.d2[i][j] * b.d1[k]
                        + a.d2[i][k] * b.d1[j]
                        + a.d2[j][k] * b.d1[i]
                        + a.d1[i] * b.d2[j][k]
                        + a.d1[j] * b.d2[i][k]
                        + a.d1[k] * b.d2[i][j]
                        + a.v * b.d3[i][j][k];
                }
            }
        }
        out
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

/// An ambient vector whose components are jets.
#[derive(Clone, Debug, PartialEq)]
pub struct JetVec(pub Vec<Jet>);

impl JetVec {
    pub fn zeros(n: usize, dim: usize) -> Self {
        JetVec(vec![Jet::zero(n); dim])
    }

    pub fn constant(n: usize, v: &[f64]) -> Self {
        JetVec(v.iter().map(|&x| Jet::constant(n, x)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u8 {
        self.0.iter().map(Jet::order).min().unwrap_or(MAX_ORDER)
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(Jet::value).collect()
    }

    pub fn partial(&self, axis: usize) -> Self {
        JetVec(self.0.iter().map(|c| c.partial(axis)).collect())
    }

    pub fn dot(&self, other: &JetVec) -> Jet {
        debug_assert_eq!(self.dim(), other.dim());
        let mut it = self.0.iter().zip(&other.0).map(|(a, b)| *a * *b);
        let first = it.next().expect("empty vector");
        it.fold(first, |acc, x| acc + x)
    }

    /// Inner product with a constant vector.
    pub fn dot_const(&self, other: &[f64]) -> Jet {
        let mut it = self.0.iter().zip(other).map(|(a, &b)| a.scale(b));
        let first = it.next().expect("empty vector");
        it.fold(first, |acc, x| acc + x)
    }

    pub fn scaled(&self, s: Jet) -> Self {
        JetVec(self.0.iter().map(|c| *c * s).collect())
    }

    pub fn scaled_const(&self, s: f64) -> Self {
        JetVec(self.0.iter().map(|c| c.scale(s)).collect())
    }

    pub fn add(&self, other: &JetVec) -> Self {
        JetVec(self.0.iter().zip(&other.0).map(|(a, b)| *a + *b).collect())
    }

    pub fn sub(&self, other: &JetVec) -> Self {
        JetVec(self.0.iter().zip(&other.0).map(|(a, b)| *a - *b).collect())
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: Jet, other: &JetVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = *a + s * *b;
        }
    }

    pub fn truncate(&self, order: u8) -> Self {
        JetVec(self.0.iter().map(|c| c.truncate(order)).collect())
    }
}
