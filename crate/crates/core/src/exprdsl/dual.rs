//! Forward-mode dual numbers.
//!
//! `Dual<f64>` carries one directional first derivative. Nesting
//! (`Dual<Dual<f64>>`) carries a mixed second derivative in its
//! `eps.eps` slot when the outer and inner parts are seeded along two
//! different parameter directions.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by the expression evaluator.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// Real (value) part, drilling through any nesting.
    fn re(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tan(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tan(&self) -> Self {
        f64::tan(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// Chain rule: value `f`, derivative of the outer function `df` at `re`.
    fn chain(&self, f: T, df: T) -> Self {
        Dual {
            re: f,
            eps: self.eps.clone() * df,
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let eps = self.re.clone() * o.eps + self.eps * o.re.clone();
        Dual::new(self.re * o.re, eps)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re.clone();
        let eps = (self.eps - q.clone() * o.eps) / o.re;
        Dual::new(q, eps)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Dual::new(T::constant(v), T::constant(0.0))
    }
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn sin(&self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(&self) -> Self {
        let t = self.re.tan();
        let dt = T::constant(1.0) + t.clone() * t.clone();
        self.chain(t, dt)
    }
    fn sinh(&self) -> Self {
        self.chain(self.re.sinh(), self.re.cosh())
    }
    fn cosh(&self) -> Self {
        self.chain(self.re.cosh(), self.re.sinh())
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        self.chain(e.clone(), e)
    }
    fn ln(&self) -> Self {
        self.chain(self.re.ln(), T::constant(1.0) / self.re.clone())
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        let ds = T::constant(0.5) / s.clone();
        self.chain(s, ds)
    }
    fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        let p = self.re.powi(n);
        let dp = T::constant(n as f64) * self.re.powi(n - 1);
        self.chain(p, dp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = x * x * x;
        assert_eq!(y.re, 27.0);
        assert_eq!(y.eps, 27.0);
    }

    #[test]
    fn nested_mixed_partial() {
        // f(u, v) = u^2 v at (2, 5): d2f/du dv = 2u = 4
        let u = Dual::new(Dual::new(2.0, 0.0), Dual::new(1.0, 0.0));
        let v = Dual::new(Dual::new(5.0, 1.0), Dual::new(0.0, 0.0));
        let f = u.powi(2) * v;
        assert_eq!(f.re(), 20.0);
        assert_eq!(f.eps.eps, 4.0);
    }

    #[test]
    fn quotient_and_sqrt() {
        let x = Dual::new(4.0, 1.0);
        let s = x.sqrt();
        assert_eq!(s.eps, 0.25);
        let q = Dual::constant(1.0) / x;
        assert_eq!(q.eps, -1.0 / 16.0);
    }
}
