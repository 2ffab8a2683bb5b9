//! Observables as finite Fourier series.
//!
//! A symbol f ∈ C^∞(T^{2n}, End(E)) is stored as a finite map from integer
//! wave vectors k ∈ Z^{2n} to rank×rank coefficient matrices,
//! f(x) = Σ_k c_k e^{2πi k·x}. Everything downstream (derivatives, Poisson
//! brackets, jets, grid sampling) is computed term by term from this exact
//! representation; there is no truncation at evaluation time.
//!
//! Coordinates are ordered (x_1, y_1, ..., x_n, y_n); axis 2j is x_{j+1} and
//! axis 2j+1 is y_{j+1}.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{CMatrix, C_ONE, C_ZERO};

#[derive(Debug, Error, PartialEq)]
pub enum SymbolError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("symbol ranks differ: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("operation requires scalar (rank-1) symbols")]
    NotScalar,
    #[error("symbols live on different tori: n = {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A finite Fourier series with matrix coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSymbol {
    n: usize,
    rank: usize,
    terms: BTreeMap<Vec<i32>, CMatrix>,
    hermitian: bool,
}

impl FourierSymbol {
    pub fn zero(n: usize, rank: usize) -> Self {
        Self { n, rank, terms: BTreeMap::new(), hermitian: true }
    }

    /// Constant scalar multiple of the identity.
    pub fn constant(n: usize, rank: usize, value: Complex64) -> Self {
        let mut s = Self::zero(n, rank);
        let mut c = CMatrix::zeros(rank, rank);
        for i in 0..rank {
            c[(i, i)] = value;
        }
        s.add_term(&vec![0; 2 * n], c);
        s
    }

    /// cos(2π x_axis) as a scalar symbol; `axis` indexes the 2n coordinates.
    pub fn cos(n: usize, axis: usize) -> Self {
        assert!(axis < 2 * n);
        let mut s = Self::zero(n, 1);
        let mut k = vec![0i32; 2 * n];
        k[axis] = 1;
        let half = CMatrix::from_fn(1, 1, |_, _| Complex64::new(0.5, 0.0));
        s.add_term(&k, half.clone());
        k[axis] = -1;
        s.add_term(&k, half);
        s
    }

    /// sin(2π x_axis) as a scalar symbol.
    pub fn sin(n: usize, axis: usize) -> Self {
        assert!(axis < 2 * n);
        let mut s = Self::zero(n, 1);
        let mut k = vec![0i32; 2 * n];
        k[axis] = 1;
        s.add_term(&k, CMatrix::from_fn(1, 1, |_, _| Complex64::new(0.0, -0.5)));
        k[axis] = -1;
        s.add_term(&k, CMatrix::from_fn(1, 1, |_, _| Complex64::new(0.0, 0.5)));
        s
    }

    pub fn from_terms(
        n: usize,
        rank: usize,
        entries: impl IntoIterator<Item = (Vec<i32>, CMatrix)>,
    ) -> Self {
        let mut s = Self::zero(n, rank);
        for (k, c) in entries {
            s.add_term(&k, c);
        }
        s
    }

    /// Accumulate a coefficient matrix onto wave vector `k`.
    pub fn add_term(&mut self, k: &[i32], coeff: CMatrix) {
        assert_eq!(k.len(), 2 * self.n, "wave vector length");
        assert_eq!(coeff.nrows(), self.rank);
        assert_eq!(coeff.ncols(), self.rank);
        let entry = self
            .terms
            .entry(k.to_vec())
            .or_insert_with(|| CMatrix::zeros(self.rank, self.rank));
        *entry = entry.add(&coeff);
        if entry.max_abs() == 0.0 {
            self.terms.remove(k);
        }
        self.hermitian = self.check_hermitian();
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i32>, &CMatrix)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest |k_d| over the support, a bandwidth bound.
    pub fn max_wavenumber(&self) -> i32 {
        self.terms.keys().flat_map(|k| k.iter().map(|v| v.abs())).max().unwrap_or(0)
    }

    /// True iff c_{-k} = c_k^H for every k, i.e. f(x) is Hermitian-valued.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn check_hermitian(&self) -> bool {
        for (k, c) in &self.terms {
            let neg: Vec<i32> = k.iter().map(|v| -v).collect();
            let mirror = match self.terms.get(&neg) {
                Some(m) => m.clone(),
                None => CMatrix::zeros(self.rank, self.rank),
            };
            if c.sub(&mirror.adjoint()).max_abs() > 1e-13 * (1.0 + c.max_abs()) {
                return false;
            }
        }
        true
    }

    /// Exact evaluation f(x) = Σ_k c_k e^{2πi k·x}.
    pub fn eval(&self, x: &[f64]) -> CMatrix {
        assert_eq!(x.len(), 2 * self.n);
        let mut out = CMatrix::zeros(self.rank, self.rank);
        for (k, c) in &self.terms {
            let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
            let e = Complex64::from_polar(1.0, 2.0 * PI * phase);
            out = out.add(&c.scale(e));
        }
        out
    }

    /// Scalar evaluation shortcut (rank 1).
    pub fn eval_scalar(&self, x: &[f64]) -> Complex64 {
        assert_eq!(self.rank, 1);
        self.eval(x)[(0, 0)]
    }

    pub fn add(&self, other: &FourierSymbol) -> Result<FourierSymbol, SymbolError> {
        self.compatible(other)?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FourierSymbol) -> Result<FourierSymbol, SymbolError> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> FourierSymbol {
        let mut out = Self::zero(self.n, self.rank);
        for (k, c) in &self.terms {
            out.add_term(k, c.scale(s));
        }
        out
    }

    /// Pointwise product, computed exactly as a coefficient convolution; the
    /// support is contained in the Minkowski sum of the input supports.
    pub fn mul(&self, other: &FourierSymbol) -> Result<FourierSymbol, SymbolError> {
        self.compatible(other)?;
        let mut out = Self::zero(self.n, self.rank);
        for (k, c) in &self.terms {
            for (l, d) in &other.terms {
                let sum: Vec<i32> = k.iter().zip(l).map(|(a, b)| a + b).collect();
                out.add_term(&sum, c.mul(d));
            }
        }
        Ok(out)
    }

    /// Pointwise adjoint f(x)^H, i.e. coefficients c_k ↦ c_{-k}^H.
    pub fn adjoint(&self) -> FourierSymbol {
        let mut out = Self::zero(self.n, self.rank);
        for (k, c) in &self.terms {
            let neg: Vec<i32> = k.iter().map(|v| -v).collect();
            out.add_term(&neg, c.adjoint());
        }
        out
    }

    /// Exact partial derivative along real coordinate `axis`.
    pub fn derivative(&self, axis: usize) -> FourierSymbol {
        assert!(axis < 2 * self.n);
        let mut out = Self::zero(self.n, self.rank);
        for (k, c) in &self.terms {
            let factor = Complex64::new(0.0, 2.0 * PI * k[axis] as f64);
            if factor == C_ZERO {
                continue;
            }
            out.add_term(k, c.scale(factor));
        }
        out
    }

    /// ∂_{z_j} = (∂_{x_j} - i ∂_{y_j})/2 for plane `j` (0-based).
    pub fn partial_z(&self, j: usize) -> FourierSymbol {
        let half = Complex64::new(0.5, 0.0);
        let ihalf = Complex64::new(0.0, 0.5);
        self.derivative(2 * j)
            .scale(half)
            .add(&self.derivative(2 * j + 1).scale(-ihalf))
            .expect("same shape")
    }

    /// ∂_{z̄_j} = (∂_{x_j} + i ∂_{y_j})/2 for plane `j` (0-based).
    pub fn partial_zbar(&self, j: usize) -> FourierSymbol {
        let half = Complex64::new(0.5, 0.0);
        let ihalf = Complex64::new(0.0, 0.5);
        self.derivative(2 * j)
            .scale(half)
            .add(&self.derivative(2 * j + 1).scale(ihalf))
            .expect("same shape")
    }

    /// Sup norm lower bound: maximum of the largest singular value of f(x)
    /// over a dense sample grid (converges to ‖f‖_∞ from below under grid
    /// refinement).
    pub fn sup_norm(&self) -> f64 {
        // Default grid chosen so the total sample count stays moderate.
        let per_axis = match self.n {
            1 => 256,
            2 => 24,
            _ => 8,
        };
        self.sup_norm_on_grid(per_axis)
    }

    pub fn sup_norm_on_grid(&self, per_axis: usize) -> f64 {
        let d = 2 * self.n;
        let total = (per_axis as u64).pow(d as u32);
        let mut x = vec![0.0; d];
        let mut best: f64 = 0.0;
        for site in 0..total {
            let mut rem = site;
            for xd in x.iter_mut() {
                *xd = (rem % per_axis as u64) as f64 / per_axis as f64;
                rem /= per_axis as u64;
            }
            let m = self.eval(&x);
            let s = if self.rank == 1 { m[(0, 0)].norm() } else { crate::linalg::operator_norm(&m) };
            best = best.max(s);
        }
        best
    }

    fn compatible(&self, other: &FourierSymbol) -> Result<(), SymbolError> {
        if self.n != other.n {
            return Err(SymbolError::DimensionMismatch(self.n, other.n));
        }
        if self.rank != other.rank {
            return Err(SymbolError::RankMismatch(self.rank, other.rank));
        }
        Ok(())
    }

    /// Parse the plain-text symbol format: one term per line,
    /// `k_1 k_2 ... k_{2n} re im [row col]`, with `#` starting a comment and
    /// the matrix position defaulting to (0, 0). The rank is inferred from
    /// the largest row/col index seen.
    pub fn parse(text: &str, n: usize) -> Result<FourierSymbol, SymbolError> {
        let mut raw: Vec<(Vec<i32>, usize, usize, Complex64, usize)> = Vec::new();
        let mut rank = 1usize;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let body = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            let expect_min = 2 * n + 2;
            if tokens.len() != expect_min && tokens.len() != expect_min + 2 {
                return Err(SymbolError::Parse {
                    line: lineno,
                    msg: format!(
                        "expected {} or {} fields (2n wave components, re, im, optional row col), got {}",
                        expect_min,
                        expect_min + 2,
                        tokens.len()
                    ),
                });
            }
            let mut k = Vec::with_capacity(2 * n);
            for t in &tokens[..2 * n] {
                let v: i32 = t.parse().map_err(|_| SymbolError::Parse {
                    line: lineno,
                    msg: format!("invalid wave component `{t}`"),
                })?;
                k.push(v);
            }
            let re: f64 = tokens[2 * n].parse().map_err(|_| SymbolError::Parse {
                line: lineno,
                msg: format!("invalid real part `{}`", tokens[2 * n]),
            })?;
            let im: f64 = tokens[2 * n + 1].parse().map_err(|_| SymbolError::Parse {
                line: lineno,
                msg: format!("invalid imaginary part `{}`", tokens[2 * n + 1]),
            })?;
            let (row, col) = if tokens.len() == expect_min + 2 {
                let r: usize = tokens[2 * n + 2].parse().map_err(|_| SymbolError::Parse {
                    line: lineno,
                    msg: format!("invalid row index `{}`", tokens[2 * n + 2]),
                })?;
                let c: usize = tokens[2 * n + 3].parse().map_err(|_| SymbolError::Parse {
                    line: lineno,
                    msg: format!("invalid col index `{}`", tokens[2 * n + 3]),
                })?;
                (r, c)
            } else {
                (0, 0)
            };
            rank = rank.max(row + 1).max(col + 1);
            raw.push((k, row, col, Complex64::new(re, im), lineno));
        }
        let mut sym = FourierSymbol::zero(n, rank);
        for (k, row, col, v, _line) in raw {
            let mut c = CMatrix::zeros(rank, rank);
            c[(row, col)] = v;
            sym.add_term(&k, c);
        }
        Ok(sym)
    }

    /// Serialize in the same plain-text format `parse` accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, c) in &self.terms {
            for col in 0..self.rank {
                for row in 0..self.rank {
                    let v = c[(row, col)];
                    if v == C_ZERO {
                        continue;
                    }
                    for ki in k {
                        write!(out, "{ki} ").unwrap();
                    }
                    write!(out, "{:.17e} {:.17e}", v.re, v.im).unwrap();
                    if self.rank > 1 {
                        write!(out, " {row} {col}").unwrap();
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Stable byte digest of the exact coefficients, for cache keys.
    pub fn digest_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.n as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.rank as u32).to_le_bytes());
        for (k, c) in &self.terms {
            for ki in k {
                bytes.extend_from_slice(&ki.to_le_bytes());
            }
            for v in c.data() {
                bytes.extend_from_slice(&v.re.to_le_bytes());
                bytes.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        bytes
    }
}

/// Poisson bracket {f, g} for the symplectic form 2π·omega, computed exactly
/// on Fourier coefficients. The bracket of scalars comes out as
/// {f, g} = (1/2π) Σ_j (∂_{y_j} f ∂_{x_j} g − ∂_{x_j} f ∂_{y_j} g).
pub fn poisson_bracket(
    f: &FourierSymbol,
    g: &FourierSymbol,
) -> Result<FourierSymbol, SymbolError> {
    if f.rank() != 1 || g.rank() != 1 {
        return Err(SymbolError::NotScalar);
    }
    if f.n != g.n {
        return Err(SymbolError::DimensionMismatch(f.n, g.n));
    }
    let n = f.n;
    let mut out = FourierSymbol::zero(n, 1);
    for (k, c) in &f.terms {
        for (l, d) in &g.terms {
            // (2πi k_y)(2πi l_x) - (2πi k_x)(2πi l_y), divided by 2π
            let mut geom = 0.0;
            for j in 0..n {
                let (kx, ky) = (k[2 * j] as f64, k[2 * j + 1] as f64);
                let (lx, ly) = (l[2 * j] as f64, l[2 * j + 1] as f64);
                geom += ky * lx - kx * ly;
            }
            if geom == 0.0 {
                continue;
            }
            let coeff = c[(0, 0)] * d[(0, 0)] * Complex64::new(-2.0 * PI * geom, 0.0);
            let sum: Vec<i32> = k.iter().zip(l).map(|(a, b)| a + b).collect();
            out.add_term(&sum, CMatrix::from_fn(1, 1, |_, _| coeff));
        }
    }
    Ok(out)
}

/// The flat-model pairing ⟨∂^{1,0} f, ∂^{0,1} g⟩ that realizes the first
/// product coefficient on the compatible torus:
/// C1(f, g) = −Σ_j (2/a_j) ∂_{z_j} f · ∂_{z̄_j} g with a_j = 2π.
/// The constant is pinned by the bracket antisymmetry identity
/// C1(f,g) − C1(g,f) = i {f, g}.
pub fn holomorphic_pairing(
    f: &FourierSymbol,
    g: &FourierSymbol,
    curvature_eigenvalues: &[f64],
) -> Result<FourierSymbol, SymbolError> {
    if f.n != g.n {
        return Err(SymbolError::DimensionMismatch(f.n, g.n));
    }
    if f.rank != g.rank {
        return Err(SymbolError::RankMismatch(f.rank, g.rank));
    }
    assert_eq!(curvature_eigenvalues.len(), f.n);
    let mut out = FourierSymbol::zero(f.n, f.rank);
    for j in 0..f.n {
        let term = f.partial_z(j).mul(&g.partial_zbar(j))?;
        let s = Complex64::new(-2.0 / curvature_eigenvalues[j], 0.0);
        out = out.add(&term.scale(s))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(coef: Complex64) -> CMatrix {
        CMatrix::from_fn(1, 1, |_, _| coef)
    }

    /// Independent finite-difference Poisson oracle on sample points:
    /// {f,g}(x) ≈ (f_y g_x − f_x g_y)/2π with central differences.
    fn poisson_fd(f: &FourierSymbol, g: &FourierSymbol, x: &[f64]) -> Complex64 {
        let n = f.n();
        let h = 1e-5;
        let deriv = |s: &FourierSymbol, axis: usize| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[axis] += h;
            xm[axis] -= h;
            (s.eval_scalar(&xp) - s.eval_scalar(&xm)) / c(2.0 * h, 0.0)
        };
        let mut acc = C_ZERO;
        for j in 0..n {
            acc += deriv(f, 2 * j + 1) * deriv(g, 2 * j) - deriv(f, 2 * j) * deriv(g, 2 * j + 1);
        }
        acc / c(2.0 * PI, 0.0)
    }

    #[test]
    fn eval_matches_cosine() {
        let f = FourierSymbol::cos(1, 0);
        for &x in &[0.0, 0.1, 0.37, 0.5] {
            let v = f.eval_scalar(&[x, 0.2]);
            assert!((v - c((2.0 * PI * x).cos(), 0.0)).norm() < 1e-14);
        }
        assert!(f.is_hermitian());
    }

    #[test]
    fn poisson_of_cosines_matches_frozen_series() {
        // {cos 2πx, cos 2πy} = −2π sin(2πx) sin(2πy)
        let f = FourierSymbol::cos(1, 0);
        let g = FourierSymbol::cos(1, 1);
        let bracket = poisson_bracket(&f, &g).unwrap();
        let expect = FourierSymbol::sin(1, 0)
            .mul(&FourierSymbol::sin(1, 1))
            .unwrap()
            .scale(c(-2.0 * PI, 0.0));
        let diff = bracket.sub(&expect).unwrap();
        assert!(diff.terms().all(|(_, m)| m.max_abs() < 1e-13));
        // cross-check against the finite-difference oracle
        for pt in [[0.13, 0.41], [0.77, 0.05]] {
            let fd = poisson_fd(&f, &g, &pt);
            let exact = bracket.eval_scalar(&pt);
            assert!((fd - exact).norm() < 1e-6, "{fd} vs {exact}");
        }
    }

    #[test]
    fn poisson_antisymmetry_and_constants() {
        let mut f = FourierSymbol::cos(1, 0);
        f.add_term(&[1, 2], scalar(c(0.3, 0.1)));
        f.add_term(&[-1, -2], scalar(c(0.3, -0.1)));
        let ff = poisson_bracket(&f, &f).unwrap();
        assert!(ff.terms().all(|(_, m)| m.max_abs() < 1e-12), "{{f,f}} != 0");
        let one = FourierSymbol::constant(1, 1, C_ONE);
        let f1 = poisson_bracket(&f, &one).unwrap();
        assert!(f1.is_zero());
    }

    #[test]
    fn poisson_rejects_matrix_symbols() {
        let m = FourierSymbol::constant(1, 2, C_ONE);
        let g = FourierSymbol::cos(1, 0);
        assert_eq!(poisson_bracket(&m, &m).unwrap_err(), SymbolError::NotScalar);
        assert_eq!(poisson_bracket(&m, &g).unwrap_err(), SymbolError::NotScalar);
    }

    #[test]
    fn sup_norm_examples() {
        assert!((FourierSymbol::cos(1, 0).sup_norm() - 1.0).abs() < 1e-12);
        let cst = FourierSymbol::constant(1, 2, c(-2.5, 0.0));
        assert!((cst.sup_norm() - 2.5).abs() < 1e-12);
        // max of cos 2πx + cos 2πy is 2, attained at the grid point x=y=0
        let s = FourierSymbol::cos(1, 0).add(&FourierSymbol::cos(1, 1)).unwrap();
        assert!((s.sup_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_is_exact() {
        let f = FourierSymbol::cos(1, 0);
        let df = f.derivative(0);
        // d/dx cos 2πx = -2π sin 2πx
        let expect = FourierSymbol::sin(1, 0).scale(c(-2.0 * PI, 0.0));
        assert!(df.sub(&expect).unwrap().is_zero());
        assert!(df.is_hermitian());
    }

    #[test]
    fn hermitian_flag_under_real_combinations() {
        let f = FourierSymbol::cos(1, 0);
        let g = FourierSymbol::sin(1, 1);
        let h = f.scale(c(1.5, 0.0)).add(&g.scale(c(-0.25, 0.0))).unwrap();
        assert!(h.is_hermitian());
        let skew = f.scale(c(0.0, 1.0));
        assert!(!skew.is_hermitian());
    }

    #[test]
    fn parse_round_trip_and_comments() {
        let text = "# a two-term scalar symbol\n1 0 0.5 0.0\n-1 0 0.5 0.0  # mirror\n\n";
        let s = FourierSymbol::parse(text, 1).unwrap();
        assert_eq!(s.num_terms(), 2);
        let again = FourierSymbol::parse(&s.to_text(), 1).unwrap();
        assert!(s.sub(&again).unwrap().is_zero());
        // matrix-valued round trip
        let mut m = FourierSymbol::zero(1, 2);
        let mut coeff = CMatrix::zeros(2, 2);
        coeff[(0, 1)] = c(0.25, -0.5);
        m.add_term(&[2, -1], coeff.clone());
        let mut coeff2 = CMatrix::zeros(2, 2);
        coeff2[(1, 0)] = c(0.25, 0.5);
        m.add_term(&[-2, 1], coeff2);
        let back = FourierSymbol::parse(&m.to_text(), 1).unwrap();
        assert_eq!(back.rank(), 2);
        assert!(m.sub(&back).unwrap().is_zero());
        assert!(back.is_hermitian());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = "1 0 0.5 0.0\nnonsense here\n";
        match FourierSymbol::parse(bad, 1) {
            Err(SymbolError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match FourierSymbol::parse("1 0 0.5\n", 1) {
            Err(SymbolError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn holomorphic_pairing_antisymmetry_is_bracket() {
        // C1(f,g) - C1(g,f) = i{f,g} must hold exactly in coefficients.
        let f = FourierSymbol::cos(1, 0);
        let g = FourierSymbol::cos(1, 1);
        let a = vec![2.0 * PI];
        let c1fg = holomorphic_pairing(&f, &g, &a).unwrap();
        let c1gf = holomorphic_pairing(&g, &f, &a).unwrap();
        let lhs = c1fg.sub(&c1gf).unwrap();
        let rhs = poisson_bracket(&f, &g).unwrap().scale(c(0.0, 1.0));
        let dev = lhs.sub(&rhs).unwrap();
        assert!(dev.terms().all(|(_, m)| m.max_abs() < 1e-12));
    }
}
