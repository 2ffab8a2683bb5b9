//! Kernel-calculus expansions of observables and the star-product
//! coefficients.
//!
//! The near-diagonal expansion of a compressed observable is carried by
//! polynomials Q_r built from the jet of the symbol and the model data J_r:
//!
//!   Q_r(f) = Σ_{r₁+r₂+|α|=r} 𝒦[J_{r₁}, (∂^α f(x₀)/α!) Z^α J_{r₂}],
//!
//! with Z^α expanded into the inner complex variable per plane
//! (Z_{2j-1} = (w_j + w̄_j)/2, Z_{2j} = (w_j − w̄_j)/2i). Products of two
//! compressed observables expand with Q_r(f,g) = Σ 𝒦[Q_{r₁}(f), Q_{r₂}(g)],
//! and matching both expansions order by order at the origin yields the
//! star-product coefficients:
//!
//!   Q_{2l}(f,g)(0,0) = Σ_{j≤l} Q_{2(l−j)}(C_j(f,g))(0,0),   C₀ = fg.
//!
//! Odd orders match identically by parity; a non-vanishing odd residual
//! flags inconsistent caller-supplied model data. On the flat torus
//! J₀ = Id and J_{r≥1} = 0 (the curved-model correction operators vanish),
//! which is the default model.

use num_complex::Complex64;

use crate::jet::{multi_factorial, multi_indices, Jet};
use crate::linalg::CMatrix;

use super::poly::{kappa, KernelPoly, StarError};

/// Gaussian parameters and the expansion polynomials J_r of the model.
#[derive(Debug, Clone)]
pub struct ModelData {
    n: usize,
    rank: usize,
    a: Vec<f64>,
    j_polys: Vec<KernelPoly>,
}

impl ModelData {
    /// Flat prequantized torus: a_j = 2π, J₀ = Id, J_{r≥1} = 0.
    pub fn flat(n: usize, rank: usize) -> Self {
        Self {
            n,
            rank,
            a: vec![2.0 * std::f64::consts::PI; n],
            j_polys: vec![KernelPoly::one(n, rank)],
        }
    }

    /// Caller-supplied model data (curved-model experiments). j_polys[r]
    /// is J_r; missing orders are zero.
    pub fn with_corrections(
        n: usize,
        rank: usize,
        a: Vec<f64>,
        j_polys: Vec<KernelPoly>,
    ) -> Result<Self, StarError> {
        if a.len() != n {
            return Err(StarError::ParameterMismatch(format!(
                "{} Gaussian parameters for n = {n}",
                a.len()
            )));
        }
        for (r, jp) in j_polys.iter().enumerate() {
            if jp.n() != n || jp.rank() != rank {
                return Err(StarError::ParameterMismatch(format!(
                    "J_{r} has (n, rank) = ({}, {})",
                    jp.n(),
                    jp.rank()
                )));
            }
        }
        Ok(Self { n, rank, a, j_polys })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn gaussian_parameters(&self) -> &[f64] {
        &self.a
    }

    fn j_poly(&self, r: usize) -> Option<&KernelPoly> {
        self.j_polys.get(r).filter(|p| !p.is_zero())
    }
}

/// The list Q_0, ..., Q_m at a base point.
#[derive(Debug, Clone)]
pub struct QExpansion {
    base: Vec<f64>,
    polys: Vec<KernelPoly>,
}

impl QExpansion {
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.polys.len() - 1
    }

    pub fn poly(&self, r: usize) -> &KernelPoly {
        &self.polys[r]
    }
}

/// Z^α of the inner variable, expanded into (w, w̄) monomials. The inner
/// slots are the (z, z̄) positions of the polynomial (the first argument of
/// the kernel it will compose into).
fn expand_inner_monomial(alpha: &[u8], n: usize, rank: usize) -> KernelPoly {
    let half = Complex64::new(0.5, 0.0);
    let minus_half_i = Complex64::new(0.0, -0.5);
    let mut out = KernelPoly::one(n, rank);
    for (axis, &power) in alpha.iter().enumerate() {
        let plane = axis / 2;
        let w = KernelPoly::variable(n, rank, plane, 0);
        let wbar = KernelPoly::variable(n, rank, plane, 1);
        let factor = if axis % 2 == 0 {
            // x_j = (w + w̄)/2
            w.add(&wbar).scale(half)
        } else {
            // y_j = (w − w̄)/(2i)
            w.sub(&wbar).scale(minus_half_i)
        };
        for _ in 0..power {
            out = out.mul(&factor);
        }
    }
    out
}

/// Q_r(f) for r ≤ m from the jet of f.
pub fn q_coeff(jet: &Jet, model: &ModelData, m: usize) -> Result<QExpansion, StarError> {
    if jet.order() < m {
        return Err(StarError::JetOrderTooLow { have: jet.order(), need: m });
    }
    if jet.n() != model.n || jet.rank() != model.rank {
        return Err(StarError::ParameterMismatch(format!(
            "jet (n, rank) = ({}, {}) vs model ({}, {})",
            jet.n(),
            jet.rank(),
            model.n,
            model.rank
        )));
    }
    let n = model.n;
    let rank = model.rank;
    let mut polys = Vec::with_capacity(m + 1);
    for r in 0..=m {
        let mut q = KernelPoly::zero(n, rank);
        for r1 in 0..=r {
            let Some(j1) = model.j_poly(r1) else { continue };
            for r2 in 0..=(r - r1) {
                let Some(j2) = model.j_poly(r2) else { continue };
                let da = r - r1 - r2;
                for alpha in multi_indices(2 * n, da) {
                    if alpha.iter().map(|&v| v as usize).sum::<usize>() != da {
                        continue;
                    }
                    let coeff = jet.coeff(&alpha);
                    if coeff.max_abs() == 0.0 {
                        continue;
                    }
                    let inner = expand_inner_monomial(&alpha, n, rank);
                    let g = inner.mul(j2).left_mul_matrix(&coeff);
                    q = q.add(&kappa(j1, &g, &model.a)?);
                }
            }
        }
        polys.push(q);
    }
    Ok(QExpansion { base: jet.base().to_vec(), polys })
}

/// Q_r(f, g) = Σ_{r₁+r₂=r} 𝒦[Q_{r₁}(f), Q_{r₂}(g)] for r ≤ m.
pub fn q_pair(
    fexp: &QExpansion,
    gexp: &QExpansion,
    model: &ModelData,
    m: usize,
) -> Result<QExpansion, StarError> {
    if fexp
        .base
        .iter()
        .zip(&gexp.base)
        .any(|(a, b)| (a - b).abs() > 1e-14)
        || fexp.base.len() != gexp.base.len()
    {
        return Err(StarError::BasePointMismatch);
    }
    if fexp.order() < m || gexp.order() < m {
        return Err(StarError::JetOrderTooLow {
            have: fexp.order().min(gexp.order()),
            need: m,
        });
    }
    let mut polys = Vec::with_capacity(m + 1);
    for r in 0..=m {
        let mut q = KernelPoly::zero(model.n, model.rank);
        for r1 in 0..=r {
            q = q.add(&kappa(fexp.poly(r1), gexp.poly(r - r1), &model.a)?);
        }
        polys.push(q);
    }
    Ok(QExpansion { base: fexp.base.clone(), polys })
}

/// C_l(f, g) as a jet of order `out_order` at the shared base point.
/// Requires jets of order ≥ 2l + out_order.
pub fn extract_c_jet(
    l: usize,
    fjet: &Jet,
    gjet: &Jet,
    model: &ModelData,
    out_order: usize,
) -> Result<Jet, StarError> {
    let need = 2 * l + out_order;
    let have = fjet.order().min(gjet.order());
    if have < need {
        return Err(StarError::JetOrderTooLow { have, need });
    }
    if l == 0 {
        let prod = fjet.mul(gjet).expect("compatible jets");
        return Ok(truncate_jet(&prod, out_order));
    }
    let dim = 2 * model.n;
    let mut out = Jet::zero(model.n, model.rank, out_order, fjet.base());
    for beta in multi_indices(dim, out_order) {
        let mut acc = CMatrix::zeros(model.rank, model.rank);
        for beta1 in sub_indices(&beta) {
            let beta2: Vec<u8> = beta.iter().zip(&beta1).map(|(b, b1)| b - b1).collect();
            let fs = fjet.derivative_jet(&beta1).expect("order checked");
            let gs = gjet.derivative_jet(&beta2).expect("order checked");
            let v = extract_value(l, &fs, &gs, model)?;
            let w = 1.0 / (multi_factorial(&beta1) * multi_factorial(&beta2));
            acc = acc.add(&v.scale(Complex64::new(w, 0.0)));
        }
        out.set_coeff(&beta, acc);
    }
    Ok(out)
}

/// All componentwise sub-multi-indices of beta.
fn sub_indices(beta: &[u8]) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = vec![Vec::new()];
    for &b in beta {
        let mut next = Vec::with_capacity(out.len() * (b as usize + 1));
        for prefix in &out {
            for v in 0..=b {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// C_l(f,g)(x₀) from the matching recursion at even orders; odd orders must
/// cancel by parity and are verified.
fn extract_value(
    l: usize,
    fjet: &Jet,
    gjet: &Jet,
    model: &ModelData,
) -> Result<CMatrix, StarError> {
    let fexp = q_coeff(fjet, model, 2 * l)?;
    let gexp = q_coeff(gjet, model, 2 * l)?;
    let pair = q_pair(&fexp, &gexp, model, 2 * l)?;
    let mut value = pair.poly(2 * l).value_at_origin();
    let mut odd = pair.poly(2 * l - 1).value_at_origin();
    let scale = 1.0
        + fjet.iter().map(|(_, c)| c.max_abs()).fold(0.0, f64::max)
            * gjet.iter().map(|(_, c)| c.max_abs()).fold(0.0, f64::max);
    for j in 0..l {
        let cj = extract_c_jet(j, fjet, gjet, model, 2 * (l - j))?;
        let cexp = q_coeff(&cj, model, 2 * (l - j))?;
        value = value.sub(&cexp.poly(2 * (l - j)).value_at_origin());
        odd = odd.sub(&cexp.poly(2 * (l - j) - 1).value_at_origin());
    }
    let odd_residual = odd.max_abs();
    if odd_residual > 1e-9 * scale {
        return Err(StarError::OddResidual { residual: odd_residual });
    }
    Ok(value)
}

fn truncate_jet(jet: &Jet, order: usize) -> Jet {
    let mut out = Jet::zero(jet.n(), jet.rank(), order.min(jet.order()), jet.base());
    for (alpha, c) in jet.iter() {
        if alpha.iter().map(|&v| v as usize).sum::<usize>() <= order {
            out.set_coeff(alpha, c.clone());
        }
    }
    out
}

/// C_0(f,g)(x₀), ..., C_m(f,g)(x₀).
pub fn extract_c(
    fjet: &Jet,
    gjet: &Jet,
    model: &ModelData,
    m: usize,
) -> Result<Vec<CMatrix>, StarError> {
    (0..=m)
        .map(|l| extract_c_jet(l, fjet, gjet, model, 0).map(|j| j.value()))
        .collect()
}

/// Truncated star product Σ_k C_k(f,g) ħ^k, with jet-valued coefficients so
/// products of series can be iterated.
#[derive(Debug, Clone)]
pub struct StarSeries {
    coeffs: Vec<Jet>,
}

impl StarSeries {
    pub fn from_jet(jet: &Jet) -> Self {
        Self { coeffs: vec![jet.clone()] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Option<&Jet> {
        self.coeffs.get(k)
    }

    /// Value of the ħ^k coefficient at the base point.
    pub fn value(&self, k: usize) -> CMatrix {
        self.coeffs[k].value()
    }
}

/// f ⋆ g truncated at ħ^m. The coefficient jets keep depth
/// min(order) − 2m so the result can be starred again.
pub fn star_product(
    fjet: &Jet,
    gjet: &Jet,
    model: &ModelData,
    m: usize,
) -> Result<StarSeries, StarError> {
    star_multiply(&StarSeries::from_jet(fjet), &StarSeries::from_jet(gjet), model, m)
}

/// Product of truncated series: coefficient of ħ^k is
/// Σ_{i+j+l=k} C_l(a_i, b_j).
pub fn star_multiply(
    a: &StarSeries,
    b: &StarSeries,
    model: &ModelData,
    m: usize,
) -> Result<StarSeries, StarError> {
    let min_depth = a
        .coeffs
        .iter()
        .chain(&b.coeffs)
        .map(|j| j.order())
        .min()
        .expect("nonempty series");
    if min_depth < 2 * m {
        return Err(StarError::JetOrderTooLow { have: min_depth, need: 2 * m });
    }
    let out_depth = min_depth - 2 * m;
    let mut coeffs = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let base = a.coeffs[0].base().to_vec();
        let mut acc = Jet::zero(model.n(), model.rank(), out_depth, &base);
        for i in 0..=k.min(a.order()) {
            for j in 0..=(k - i).min(b.order()) {
                let l = k - i - j;
                let term = extract_c_jet(l, &a.coeffs[i], &b.coeffs[j], model, out_depth)?;
                acc = acc.add(&term).expect("same base");
            }
        }
        coeffs.push(acc);
    }
    Ok(StarSeries { coeffs })
}
