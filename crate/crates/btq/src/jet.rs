//! Taylor jets of observables at a base point.
//!
//! A jet stores the table ∂^α f(x₀)/α! for multi-indices α in the real
//! coordinates Z = (x_1, y_1, ..., x_n, y_n) up to a given order. Jets of
//! Fourier symbols come from exact term-by-term differentiation; jets can
//! also be built directly (for polynomial test data). The symbolic kernel
//! calculus consumes jets, never full symbols.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{CMatrix, C_ZERO};
use crate::symbol::FourierSymbol;

#[derive(Debug, Error, PartialEq)]
pub enum JetError {
    #[error("jet order {have} too low, need at least {need}")]
    OrderTooLow { have: usize, need: usize },
    #[error("jets disagree: {0}")]
    Mismatch(String),
}

/// Multi-indices α ∈ N^dim with |α| ≤ max_order, in graded order.
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; dim];
    for total in 0..=max_order {
        fill(dim, total, 0, &mut cur, &mut out);
    }
    return out;

    fn fill(dim: usize, remaining: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos == dim - 1 {
            cur[pos] = remaining as u8;
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur[pos] = v as u8;
            fill(dim, remaining - v, pos + 1, cur, out);
        }
    }
}

pub fn multi_order(alpha: &[u8]) -> usize {
    alpha.iter().map(|&v| v as usize).sum()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Π_d α_d!
pub fn multi_factorial(alpha: &[u8]) -> f64 {
    alpha.iter().map(|&v| factorial(v as usize)).product()
}

/// Taylor table of a symbol at a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    n: usize,
    rank: usize,
    order: usize,
    base: Vec<f64>,
    /// α → ∂^α f(x₀)/α!
    coeffs: BTreeMap<Vec<u8>, CMatrix>,
}

impl Jet {
    pub fn zero(n: usize, rank: usize, order: usize, base: &[f64]) -> Self {
        assert_eq!(base.len(), 2 * n);
        Self { n, rank, order, base: base.to_vec(), coeffs: BTreeMap::new() }
    }

    /// Build directly from a coefficient table (Taylor coefficients, i.e.
    /// already divided by α!). Entries above `order` are rejected.
    pub fn from_coeffs(
        n: usize,
        rank: usize,
        order: usize,
        base: &[f64],
        entries: impl IntoIterator<Item = (Vec<u8>, CMatrix)>,
    ) -> Self {
        let mut jet = Self::zero(n, rank, order, base);
        for (alpha, c) in entries {
            jet.set_coeff(&alpha, c);
        }
        jet
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn set_coeff(&mut self, alpha: &[u8], c: CMatrix) {
        assert_eq!(alpha.len(), 2 * self.n);
        assert!(multi_order(alpha) <= self.order, "entry above jet order");
        assert_eq!(c.nrows(), self.rank);
        if c.max_abs() == 0.0 {
            self.coeffs.remove(alpha);
        } else {
            self.coeffs.insert(alpha.to_vec(), c);
        }
    }

    /// Taylor coefficient ∂^α f(x₀)/α! (zero matrix if absent).
    pub fn coeff(&self, alpha: &[u8]) -> CMatrix {
        self.coeffs
            .get(alpha)
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.rank, self.rank))
    }

    /// Raw derivative ∂^α f(x₀) = α! · coeff(α).
    pub fn derivative_value(&self, alpha: &[u8]) -> CMatrix {
        self.coeff(alpha).scale(Complex64::new(multi_factorial(alpha), 0.0))
    }

    pub fn value(&self) -> CMatrix {
        self.coeff(&vec![0u8; 2 * self.n])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, &CMatrix)> {
        self.coeffs.iter()
    }

    /// Evaluate the Taylor polynomial at displacement Z from the base point.
    pub fn eval(&self, z: &[f64]) -> CMatrix {
        assert_eq!(z.len(), 2 * self.n);
        let mut out = CMatrix::zeros(self.rank, self.rank);
        for (alpha, c) in &self.coeffs {
            let mono: f64 =
                alpha.iter().zip(z).map(|(&a, &zi)| zi.powi(a as i32)).product();
            out = out.add(&c.scale(Complex64::new(mono, 0.0)));
        }
        out
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_compatible(other)?;
        let order = self.order.min(other.order);
        let mut out = Jet::zero(self.n, self.rank, order, &self.base);
        for alpha in multi_indices(2 * self.n, order) {
            out.set_coeff(&alpha, self.coeff(&alpha).add(&other.coeff(&alpha)));
        }
        Ok(out)
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        let mut out = self.clone();
        let keys: Vec<_> = out.coeffs.keys().cloned().collect();
        for k in keys {
            let c = out.coeffs.get(&k).unwrap().scale(s);
            out.set_coeff(&k.clone(), c);
        }
        out
    }

    /// Truncated Leibniz product: Taylor coefficients convolve directly.
    pub fn mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_compatible(other)?;
        let order = self.order.min(other.order);
        let mut out = Jet::zero(self.n, self.rank, order, &self.base);
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                let total: usize = multi_order(a) + multi_order(b);
                if total > order {
                    continue;
                }
                let gamma: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let prev = out.coeff(&gamma);
                out.set_coeff(&gamma, prev.add(&ca.mul(cb)));
            }
        }
        Ok(out)
    }

    /// Jet of ∂^β f, of order `order - |β|`.
    pub fn derivative_jet(&self, beta: &[u8]) -> Result<Jet, JetError> {
        assert_eq!(beta.len(), 2 * self.n);
        let db = multi_order(beta);
        if db > self.order {
            return Err(JetError::OrderTooLow { have: self.order, need: db });
        }
        let order = self.order - db;
        let mut out = Jet::zero(self.n, self.rank, order, &self.base);
        for alpha in multi_indices(2 * self.n, order) {
            let shifted: Vec<u8> = alpha.iter().zip(beta).map(|(a, b)| a + b).collect();
            // ∂^α(∂^β f)/α! = t_{α+β} (α+β)!/α!
            let ratio: f64 = alpha
                .iter()
                .zip(beta)
                .map(|(&a, &b)| {
                    ((a as usize + 1)..=(a as usize + b as usize)).map(|v| v as f64).product::<f64>()
                })
                .product();
            out.set_coeff(&alpha, self.coeff(&shifted).scale(Complex64::new(ratio, 0.0)));
        }
        Ok(out)
    }

    /// Pointwise adjoint jet: coefficients of f(x)^H are the conjugate
    /// transposes of those of f (the coordinates are real).
    pub fn adjoint(&self) -> Jet {
        let mut out = Jet::zero(self.n, self.rank, self.order, &self.base);
        for (alpha, c) in &self.coeffs {
            out.set_coeff(alpha, c.adjoint());
        }
        out
    }

    fn check_compatible(&self, other: &Jet) -> Result<(), JetError> {
        if self.n != other.n || self.rank != other.rank {
            return Err(JetError::Mismatch(format!(
                "(n, rank) = ({}, {}) vs ({}, {})",
                self.n, self.rank, other.n, other.rank
            )));
        }
        if self
            .base
            .iter()
            .zip(&other.base)
            .any(|(a, b)| (a - b).abs() > 1e-14)
        {
            return Err(JetError::Mismatch("base points differ".into()));
        }
        Ok(())
    }
}

/// Exact jet of a Fourier symbol: ∂^α f(x₀) = Σ_k c_k (2πi k)^α e^{2πi k·x₀}.
pub fn jet_at(f: &FourierSymbol, x0: &[f64], order: usize) -> Jet {
    assert_eq!(x0.len(), 2 * f.n());
    let mut jet = Jet::zero(f.n(), f.rank(), order, x0);
    for alpha in multi_indices(2 * f.n(), order) {
        let mut acc = CMatrix::zeros(f.rank(), f.rank());
        for (k, c) in f.terms() {
            let mut mono = Complex64::new(1.0, 0.0);
            for (d, &a) in alpha.iter().enumerate() {
                for _ in 0..a {
                    mono *= Complex64::new(0.0, 2.0 * std::f64::consts::PI * k[d] as f64);
                }
            }
            if mono == C_ZERO {
                continue;
            }
            let phase: f64 = k.iter().zip(x0).map(|(&ki, &xi)| ki as f64 * xi).sum();
            let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
            acc = acc.add(&c.scale(mono * e));
        }
        let fact = multi_factorial(&alpha);
        jet.set_coeff(&alpha, acc.scale(Complex64::new(1.0 / fact, 0.0)));
    }
    jet
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_symbol_has_only_order_zero() {
        let f = FourierSymbol::constant(1, 1, Complex64::new(2.5, 0.0));
        let jet = jet_at(&f, &[0.3, 0.4], 3);
        for (alpha, c) in jet.iter() {
            if multi_order(alpha) == 0 {
                assert!((c[(0, 0)] - Complex64::new(2.5, 0.0)).norm() < 1e-15);
            } else {
                panic!("unexpected coefficient at {alpha:?}");
            }
        }
    }

    #[test]
    fn cosine_jet_frozen_values() {
        // cos 2πx at 0: f(0)=1, ∂_x f(0)=0, ∂_x² f(0) = -4π².
        let f = FourierSymbol::cos(1, 0);
        let jet = jet_at(&f, &[0.0, 0.0], 2);
        assert!((jet.value()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!(jet.derivative_value(&[1, 0])[(0, 0)].norm() < 1e-15);
        let dxx = jet.derivative_value(&[2, 0])[(0, 0)];
        assert!((dxx.re + 4.0 * PI * PI).abs() < 1e-12, "{dxx}");
        assert!(dxx.im.abs() < 1e-12);
    }

    // Central finite differences converge at O(h²); the ratio between h and
    // h/2 errors should approach 4.
    #[test]
    fn jet_matches_finite_differences_at_second_order() {
        let mut f = FourierSymbol::cos(1, 0);
        f.add_term(&[1, 1], CMatrix::from_fn(1, 1, |_, _| Complex64::new(0.2, 0.1)));
        f.add_term(&[-1, -1], CMatrix::from_fn(1, 1, |_, _| Complex64::new(0.2, -0.1)));
        let x0 = [0.21, 0.63];
        let jet = jet_at(&f, &x0, 1);
        let exact = jet.derivative_value(&[1, 0])[(0, 0)];
        let fd = |h: f64| {
            let vp = f.eval_scalar(&[x0[0] + h, x0[1]]);
            let vm = f.eval_scalar(&[x0[0] - h, x0[1]]);
            (vp - vm) / Complex64::new(2.0 * h, 0.0)
        };
        let e1 = (fd(1e-3) - exact).norm();
        let e2 = (fd(5e-4) - exact).norm();
        assert!(e1 < 1e-4, "fd error too big: {e1}");
        let ratio = e1 / e2.max(1e-18);
        assert!((3.0..5.0).contains(&ratio), "O(h²) ratio was {ratio}");
    }

    // ∂_x = ∂_z + ∂_z̄ on e^{2πix}: both complex derivatives equal πi.
    #[test]
    fn complex_coordinate_change_of_basis() {
        let mut f = FourierSymbol::zero(1, 1);
        f.add_term(&[1, 0], CMatrix::identity(1));
        let jet = jet_at(&f, &[0.0, 0.0], 1);
        let fx = jet.derivative_value(&[1, 0])[(0, 0)];
        let fy = jet.derivative_value(&[0, 1])[(0, 0)];
        let fz = (fx - Complex64::new(0.0, 1.0) * fy) * Complex64::new(0.5, 0.0);
        let fzbar = (fx + Complex64::new(0.0, 1.0) * fy) * Complex64::new(0.5, 0.0);
        assert!((fz - Complex64::new(0.0, PI)).norm() < 1e-13);
        assert!((fzbar - Complex64::new(0.0, PI)).norm() < 1e-13);
        assert!((fz + fzbar - fx).norm() < 1e-13);
    }

    #[test]
    fn jet_product_matches_symbol_product() {
        let f = FourierSymbol::cos(1, 0);
        let g = FourierSymbol::sin(1, 1);
        let x0 = [0.17, 0.29];
        let jf = jet_at(&f, &x0, 3);
        let jg = jet_at(&g, &x0, 3);
        let jprod = jf.mul(&jg).unwrap();
        let direct = jet_at(&f.mul(&g).unwrap(), &x0, 3);
        for alpha in multi_indices(2, 3) {
            let d = jprod.coeff(&alpha).sub(&direct.coeff(&alpha)).max_abs();
            assert!(d < 1e-12, "coefficient mismatch at {alpha:?}: {d}");
        }
    }

    #[test]
    fn derivative_jet_matches_symbol_derivative() {
        let f = FourierSymbol::cos(1, 0).mul(&FourierSymbol::cos(1, 1)).unwrap();
        let x0 = [0.11, 0.43];
        let j = jet_at(&f, &x0, 4);
        let shifted = j.derivative_jet(&[1, 1]).unwrap();
        let direct = jet_at(&f.derivative(0).derivative(1), &x0, 2);
        for alpha in multi_indices(2, 2) {
            let d = shifted.coeff(&alpha).sub(&direct.coeff(&alpha)).max_abs();
            assert!(d < 1e-10, "mismatch at {alpha:?}: {d}");
        }
    }

    #[test]
    fn taylor_eval_approximates_symbol() {
        let f = FourierSymbol::cos(1, 0);
        let x0 = [0.2, 0.0];
        let j = jet_at(&f, &x0, 6);
        let z = [0.05, 0.0];
        let approx = j.eval(&z)[(0, 0)];
        let exact = f.eval_scalar(&[0.25, 0.0]);
        // remainder bound (2π·0.05)^7/7! ≈ 6e-8
        assert!((approx - exact).norm() < 3e-7);
    }
}
