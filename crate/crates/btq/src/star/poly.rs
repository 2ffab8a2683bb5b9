//! Matrix-valued polynomials in the model-kernel variables and their
//! composition calculus.
//!
//! A kernel polynomial F lives in the variables (z_j, z̄_j, z'_j, z̄'_j) of
//! the n planes and multiplies the Gaussian projection kernel
//!
//!   𝒫(Z, Z') = Π_j (a_j/2π) · exp[−(a_j/4)(|z_j|² + |z'_j|² − 2 z_j z̄'_j)].
//!
//! With the (a_j/2π) prefactor attached, 𝒫 is exactly idempotent under
//! kernel composition for every a_j, so composing two dressed kernels stays
//! in the family: (F𝒫) ∘ (G𝒫) = 𝒦[F,G] 𝒫. The composed polynomial 𝒦[F,G]
//! has a closed form through complex Gaussian moments: writing the inner
//! integration variable w per plane, every pairing of a w with a w̄
//! contracts to a factor 2/a_j, while unpaired w go to z and unpaired w̄ to
//! z̄' (differentiation of the generating integral exp(βγ/α) with α = a/2).

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{CMatrix, C_ZERO};

#[derive(Debug, Error, PartialEq)]
pub enum StarError {
    #[error("kernel polynomials live on different models: {0}")]
    ParameterMismatch(String),
    #[error("expansions have different base points")]
    BasePointMismatch,
    #[error("jet order {have} too low: the order-{need} expansion consumes that many derivatives")]
    JetOrderTooLow { have: usize, need: usize },
    #[error("odd-order consistency residual {residual:.3e} exceeds tolerance (inconsistent model data)")]
    OddResidual { residual: f64 },
}

/// Exponent layout per plane: [z, z̄, z', z̄'], planes concatenated.
pub type Mono = Vec<u8>;

/// Matrix-coefficient polynomial in (z, z̄, z', z̄') over n planes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPoly {
    n: usize,
    rank: usize,
    terms: BTreeMap<Mono, CMatrix>,
}

impl KernelPoly {
    pub fn zero(n: usize, rank: usize) -> Self {
        Self { n, rank, terms: BTreeMap::new() }
    }

    /// The constant polynomial Id.
    pub fn one(n: usize, rank: usize) -> Self {
        let mut p = Self::zero(n, rank);
        p.add_term(&vec![0u8; 4 * n], CMatrix::identity(rank));
        p
    }

    pub fn constant(n: usize, rank: usize, c: CMatrix) -> Self {
        let mut p = Self::zero(n, rank);
        p.add_term(&vec![0u8; 4 * n], c);
        p
    }

    /// Single variable monomial; `slot` indexes [z, z̄, z', z̄'] of `plane`.
    pub fn variable(n: usize, rank: usize, plane: usize, slot: usize) -> Self {
        assert!(plane < n && slot < 4);
        let mut mono = vec![0u8; 4 * n];
        mono[4 * plane + slot] = 1;
        let mut p = Self::zero(n, rank);
        p.add_term(&mono, CMatrix::identity(rank));
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn add_term(&mut self, mono: &[u8], coeff: CMatrix) {
        assert_eq!(mono.len(), 4 * self.n);
        assert_eq!(coeff.nrows(), self.rank);
        let entry = self
            .terms
            .entry(mono.to_vec())
            .or_insert_with(|| CMatrix::zeros(self.rank, self.rank));
        *entry = entry.add(&coeff);
        if entry.max_abs() == 0.0 {
            self.terms.remove(mono);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &CMatrix)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// Total degree.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// Some(parity) when all monomials share one total-degree parity.
    pub fn parity(&self) -> Option<u8> {
        let mut parity = None;
        for m in self.terms.keys() {
            let p = (m.iter().map(|&e| e as usize).sum::<usize>() % 2) as u8;
            match parity {
                None => parity = Some(p),
                Some(q) if q != p => return None,
                _ => {}
            }
        }
        parity.or(Some(0))
    }

    pub fn add(&self, other: &KernelPoly) -> KernelPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &KernelPoly) -> KernelPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> KernelPoly {
        let mut out = KernelPoly::zero(self.n, self.rank);
        for (m, c) in &self.terms {
            out.add_term(m, c.scale(s));
        }
        out
    }

    /// Scale by a scalar matrix from the left.
    pub fn left_mul_matrix(&self, a: &CMatrix) -> KernelPoly {
        let mut out = KernelPoly::zero(self.n, self.rank);
        for (m, c) in &self.terms {
            out.add_term(m, a.mul(c));
        }
        out
    }

    /// Polynomial product; coefficient matrices multiply in order.
    pub fn mul(&self, other: &KernelPoly) -> KernelPoly {
        let mut out = KernelPoly::zero(self.n, self.rank);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mono: Mono = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
                out.add_term(&mono, ca.mul(cb));
            }
        }
        out
    }

    /// The constant term, i.e. the value at Z = Z' = 0.
    pub fn value_at_origin(&self) -> CMatrix {
        self.terms
            .get(&vec![0u8; 4 * self.n])
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.rank, self.rank))
    }

    /// Evaluate at given variable values, ordered like the exponent layout.
    pub fn eval(&self, vars: &[Complex64]) -> CMatrix {
        assert_eq!(vars.len(), 4 * self.n);
        let mut out = CMatrix::zeros(self.rank, self.rank);
        for (m, c) in &self.terms {
            let mut mono = Complex64::new(1.0, 0.0);
            for (e, v) in m.iter().zip(vars) {
                for _ in 0..*e {
                    mono *= v;
                }
            }
            out = out.add(&c.scale(mono));
        }
        out
    }

    /// Kernel adjoint involution: the polynomial of the adjoint kernel
    /// (F𝒫)^†. Monomial exponents (a, b, c, d) per plane map to
    /// (d, c, b, a) and coefficients to their conjugate transposes.
    pub fn involution(&self) -> KernelPoly {
        let mut out = KernelPoly::zero(self.n, self.rank);
        for (m, c) in &self.terms {
            let mut mono = vec![0u8; 4 * self.n];
            for j in 0..self.n {
                mono[4 * j] = m[4 * j + 3];
                mono[4 * j + 1] = m[4 * j + 2];
                mono[4 * j + 2] = m[4 * j + 1];
                mono[4 * j + 3] = m[4 * j];
            }
            out.add_term(&mono, c.adjoint());
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Closed-form composition: (F𝒫) ∘ (G𝒫) = 𝒦[F,G] 𝒫.
///
/// Per plane, with i = (z'-power of F) + (z-power of G) total w's and
/// j = (z̄'-power of F) + (z̄-power of G) total w̄'s in the inner variable,
/// the Gaussian moment contributes
///
///   Σ_k  C(i,k) C(j,k) k! (2/a)^k  z^{i−k} z̄'^{j−k},
///
/// multiplied by the spectator powers z^{e1} z̄^{e2} from F and
/// z'^{f3} z̄'^{f4} from G. Coefficient matrices multiply in order (F then
/// G). Exact in coefficient arithmetic apart from floating-point rounding.
pub fn kappa(f: &KernelPoly, g: &KernelPoly, a: &[f64]) -> Result<KernelPoly, StarError> {
    if f.n != g.n || f.rank != g.rank {
        return Err(StarError::ParameterMismatch(format!(
            "(n, rank) = ({}, {}) vs ({}, {})",
            f.n, f.rank, g.n, g.rank
        )));
    }
    if a.len() != f.n {
        return Err(StarError::ParameterMismatch(format!(
            "{} Gaussian parameters for n = {}",
            a.len(),
            f.n
        )));
    }
    let n = f.n;
    let mut out = KernelPoly::zero(n, f.rank);
    for (mf, cf) in &f.terms {
        for (mg, cg) in &g.terms {
            let coeff = cf.mul(cg);
            // accumulate plane-by-plane contraction alternatives
            let mut partial: Vec<(Mono, f64)> = vec![(vec![0u8; 4 * n], 1.0)];
            for plane in 0..n {
                let e1 = mf[4 * plane] as usize;
                let e2 = mf[4 * plane + 1] as usize;
                let e3 = mf[4 * plane + 2] as usize;
                let e4 = mf[4 * plane + 3] as usize;
                let f1 = mg[4 * plane] as usize;
                let f2 = mg[4 * plane + 1] as usize;
                let f3 = mg[4 * plane + 2] as usize;
                let f4 = mg[4 * plane + 3] as usize;
                let i = e3 + f1;
                let j = e4 + f2;
                let mut next: Vec<(Mono, f64)> = Vec::with_capacity(partial.len() * (i.min(j) + 1));
                for (mono, weight) in &partial {
                    for k in 0..=i.min(j) {
                        let w = weight
                            * binomial(i, k)
                            * binomial(j, k)
                            * factorial(k)
                            * (2.0 / a[plane]).powi(k as i32);
                        let mut m2 = mono.clone();
                        m2[4 * plane] = (e1 + i - k) as u8;
                        m2[4 * plane + 1] = e2 as u8;
                        m2[4 * plane + 2] = f3 as u8;
                        m2[4 * plane + 3] = (f4 + j - k) as u8;
                        next.push((m2, w));
                    }
                }
                partial = next;
            }
            for (mono, weight) in partial {
                if weight != 0.0 {
                    out.add_term(&mono, coeff.scale(Complex64::new(weight, 0.0)));
                }
            }
        }
    }
    Ok(out)
}
