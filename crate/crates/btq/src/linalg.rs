//! Dense complex linear algebra kernels.
//!
//! A small column-major matrix type plus the handful of dense operations the
//! rest of the crate needs: products, adjoints, a full Hermitian eigensolver
//! (Householder tridiagonalization followed by implicit-shift QL), operator
//! norms and Gram-Schmidt orthonormalization. Matrices here are at most a few
//! thousand rows; the sparse magnetic operator lives in [`crate::magnetic`].

use num_complex::Complex64;

/// Column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<Complex64>,
}

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

impl CMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![C_ZERO; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_columns(nrows: usize, cols: &[Vec<Complex64>]) -> Self {
        let mut m = Self::zeros(nrows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), nrows);
            m.column_mut(j).copy_from_slice(c);
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn column(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Keep the first `k` columns.
    pub fn truncate_columns(&mut self, k: usize) {
        assert!(k <= self.ncols);
        self.data.truncate(k * self.nrows);
        self.ncols = k;
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.ncols, self.nrows);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        out
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.ncols, other.nrows, "matrix product shape mismatch");
        let mut out = CMatrix::zeros(self.nrows, other.ncols);
        for j in 0..other.ncols {
            for k in 0..self.ncols {
                let b = other[(k, j)];
                if b == C_ZERO {
                    continue;
                }
                let acol = &self.data[k * self.nrows..(k + 1) * self.nrows];
                let ocol = &mut out.data[j * self.nrows..(j + 1) * self.nrows];
                for i in 0..acol.len() {
                    ocol[i] += acol[i] * b;
                }
            }
        }
        out
    }

    /// `self^H * other`, the Gram-style product used by compressions.
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.nrows, other.nrows);
        let mut out = CMatrix::zeros(self.ncols, other.ncols);
        for j in 0..other.ncols {
            let b = other.column(j);
            for i in 0..self.ncols {
                out[(i, j)] = dot(self.column(i), b);
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        assert_eq!(self.nrows, self.ncols);
        (0..self.nrows).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        for j in 0..self.ncols {
            for i in 0..=j {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[j * self.nrows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[j * self.nrows + i]
    }
}

pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order and the matching unitary matrix of
/// eigenvectors (columns). Classic dense route: unitary Householder reduction
/// to a real symmetric tridiagonal, then implicit-shift QL with eigenvector
/// accumulation.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert_eq!(a.nrows, a.ncols, "hermitian_eigen needs a square matrix");
    let n = a.nrows;
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    if n == 1 {
        return (vec![a[(0, 0)].re], CMatrix::identity(1));
    }
    let mut m = a.clone();
    let mut q = CMatrix::identity(n);

    // Householder reduction: after step k, column k carries a single
    // (complex) subdiagonal entry.
    for k in 0..n - 2 {
        let mut xnorm_sq = 0.0;
        for i in k + 1..n {
            xnorm_sq += m[(i, k)].norm_sqr();
        }
        let xnorm = xnorm_sq.sqrt();
        if xnorm <= f64::MIN_POSITIVE {
            continue;
        }
        let x0 = m[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C_ONE };
        let alpha = -phase * xnorm;
        let mut v = vec![C_ZERO; n - k - 1];
        for i in k + 1..n {
            v[i - k - 1] = m[(i, k)];
        }
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vv <= f64::MIN_POSITIVE {
            continue;
        }
        let tau = 2.0 / vv;

        // Two-sided update of the trailing block:
        //   M <- M - v w^H - w v^H,  w = tau M v - (tau^2/2)(v^H M v) v
        let blk = k + 1;
        let bl = n - blk;
        let mut mv = vec![C_ZERO; bl];
        for jj in 0..bl {
            let vjj = v[jj];
            if vjj == C_ZERO {
                continue;
            }
            let col = &m.data[(blk + jj) * n + blk..(blk + jj) * n + n];
            for ii in 0..bl {
                mv[ii] += col[ii] * vjj;
            }
        }
        let vhmv: Complex64 = v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
        let mut w = vec![C_ZERO; bl];
        for i in 0..bl {
            w[i] = mv[i] * tau - v[i] * (tau * tau * 0.5 * vhmv);
        }
        for jj in 0..bl {
            let vj = v[jj];
            let wj = w[jj];
            let col = &mut m.data[(blk + jj) * n + blk..(blk + jj) * n + n];
            for ii in 0..bl {
                col[ii] -= v[ii] * wj.conj() + w[ii] * vj.conj();
            }
        }
        m[(k + 1, k)] = alpha;
        m[(k, k + 1)] = alpha.conj();
        for i in k + 2..n {
            m[(i, k)] = C_ZERO;
            m[(k, i)] = C_ZERO;
        }
        // Accumulate Q <- Q (I - tau v v^H): u = Q v on the block columns,
        // then subtract tau * u * v^H from those columns.
        let mut u = vec![C_ZERO; n];
        for i in 0..bl {
            let vi = v[i];
            if vi == C_ZERO {
                continue;
            }
            let col = q.column(blk + i);
            for r in 0..n {
                u[r] += col[r] * vi;
            }
        }
        for c in 0..bl {
            let coef = v[c].conj() * tau;
            if coef == C_ZERO {
                continue;
            }
            let col = q.column_mut(blk + c);
            for r in 0..n {
                col[r] -= coef * u[r];
            }
        }
    }

    // Phase-rescale so the subdiagonal becomes real nonnegative; fold the
    // diagonal unitary into Q.
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in 0..n {
        d[i] = m[(i, i)].re;
    }
    // s_{i+1} = s_i * phase(t_i) makes conj(s_{i+1}) t_i s_i = |t_i|.
    let mut s = C_ONE;
    for i in 0..n - 1 {
        let t = m[(i + 1, i)];
        let r = t.norm();
        e[i] = r;
        let s_next = if r > 0.0 { s * (t / r) } else { s };
        for v in q.column_mut(i + 1) {
            *v *= s_next;
        }
        s = s_next;
    }

    tql2(&mut d, &mut e, &mut q);

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (jnew, &jold) in idx.iter().enumerate() {
        vecs.column_mut(jnew).copy_from_slice(q.column(jold));
    }
    (vals, vecs)
}

/// Implicit-shift QL on a real symmetric tridiagonal `(d, e)`, rotating the
/// complex eigenvector accumulator `q` alongside. EISPACK tql2 layout:
/// `e[i]` couples rows i and i+1, `e[n-1]` unused.
fn tql2(d: &mut [f64], e: &mut [f64], q: &mut CMatrix) {
    let n = d.len();
    if n <= 1 {
        return;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 60, "tql2 failed to converge after 60 sweeps");
            // Wilkinson shift.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..q.nrows() {
                    let fi1 = q[(k, i + 1)];
                    let fi = q[(k, i)];
                    q[(k, i + 1)] = fi * s + fi1 * c;
                    q[(k, i)] = fi * c - fi1 * s;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Largest singular value, via the top eigenvalue of `A^H A`. Intended for
/// the small (cluster-sized) matrices of the Toeplitz algebra.
pub fn operator_norm(a: &CMatrix) -> f64 {
    let gram = a.adjoint_mul(a);
    let (vals, _) = hermitian_eigen(&gram);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Modified Gram-Schmidt orthonormalization of the columns, in place, with a
/// second pass for numerical safety. Returns indices of columns that were
/// numerically dependent and were zeroed (callers may refill them).
pub fn orthonormalize_columns(m: &mut CMatrix) -> Vec<usize> {
    let mut dropped = Vec::new();
    let nrows = m.nrows;
    for j in 0..m.ncols {
        for _pass in 0..2 {
            for i in 0..j {
                let (head, tail) = m.data.split_at_mut(j * nrows);
                let ci = &head[i * nrows..(i + 1) * nrows];
                let cj = &mut tail[..nrows];
                let coef = dot(ci, cj);
                if coef != C_ZERO {
                    axpy(-coef, ci, cj);
                }
            }
        }
        let nrm = norm(m.column(j));
        if nrm <= 1e-12 {
            for v in m.column_mut(j) {
                *v = C_ZERO;
            }
            dropped.push(j);
        } else {
            let inv = 1.0 / nrm;
            for v in m.column_mut(j) {
                *v *= inv;
            }
        }
    }
    dropped
}

/// Deterministic pseudo-random unitary, for basis-invariance tests.
pub fn seeded_unitary(n: usize, seed: u64) -> CMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut m = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let dropped = orthonormalize_columns(&mut m);
    assert!(dropped.is_empty(), "random matrix was rank deficient");
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let b = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        b.add(&b.adjoint()).scale(Complex64::new(0.5, 0.0))
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let mut a = CMatrix::zeros(3, 3);
        a[(0, 0)] = Complex64::new(3.0, 0.0);
        a[(1, 1)] = Complex64::new(-1.0, 0.0);
        a[(2, 2)] = Complex64::new(2.0, 0.0);
        let (vals, _) = hermitian_eigen(&a);
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 2.0).abs() < 1e-14);
        assert!((vals[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_known_tridiagonal_spectrum() {
        // Path-graph Laplacian: eigenvalues 2 - 2cos(k pi/(n+1)).
        let n = 12;
        let mut a = CMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = Complex64::new(2.0, 0.0);
            if i + 1 < n {
                a[(i + 1, i)] = Complex64::new(-1.0, 0.0);
                a[(i, i + 1)] = Complex64::new(-1.0, 0.0);
            }
        }
        let (vals, _) = hermitian_eigen(&a);
        for (k, v) in vals.iter().enumerate() {
            let expect =
                2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((v - expect).abs() < 1e-12, "eigenvalue {k}: {v} vs {expect}");
        }
    }

    #[test]
    fn eigen_residual_and_unitarity() {
        for seed in [1u64, 2, 3] {
            for n in [2usize, 5, 17, 40] {
                let a = random_hermitian(n, seed.wrapping_mul(97).wrapping_add(n as u64));
                let (vals, q) = hermitian_eigen(&a);
                let scale = a.frobenius_norm().max(1.0);
                let aq = a.mul(&q);
                let mut ql = q.clone();
                for j in 0..n {
                    for v in ql.column_mut(j) {
                        *v *= vals[j];
                    }
                }
                let res = aq.sub(&ql).frobenius_norm();
                assert!(res < 1e-11 * scale * n as f64, "residual {res} at n={n}");
                let gram = q.adjoint_mul(&q);
                let dev = gram.sub(&CMatrix::identity(n)).frobenius_norm();
                assert!(dev < 1e-12 * n as f64, "unitarity dev {dev} at n={n}");
                let tr: f64 = vals.iter().sum();
                assert!((tr - a.trace().re).abs() < 1e-10 * scale * n as f64);
                let f2: f64 = vals.iter().map(|v| v * v).sum();
                assert!((f2 - a.frobenius_norm().powi(2)).abs() < 1e-9 * scale * scale * n as f64);
            }
        }
    }

    #[test]
    fn eigen_handles_degenerate_clusters() {
        // Conjugate a spectrum with exact repeats by a fixed unitary.
        let n = 8;
        let u = seeded_unitary(n, 3);
        let spectrum = [0.0, 0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 5.0];
        let mut lambda = CMatrix::zeros(n, n);
        for i in 0..n {
            lambda[(i, i)] = Complex64::new(spectrum[i], 0.0);
        }
        let a = u.mul(&lambda).mul(&u.adjoint());
        let (vals, q) = hermitian_eigen(&a);
        for (v, e) in vals.iter().zip(spectrum.iter()) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
        let dev = q.adjoint_mul(&q).sub(&CMatrix::identity(n)).frobenius_norm();
        assert!(dev < 1e-12 * n as f64);
    }

    #[test]
    fn operator_norm_matches_eigen_for_hermitian() {
        let a = random_hermitian(9, 5);
        let (vals, _) = hermitian_eigen(&a);
        let expect = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((operator_norm(&a) - expect).abs() < 1e-10);
    }

    #[test]
    fn orthonormalize_produces_isometry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let mut m = CMatrix::from_fn(30, 7, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let dropped = orthonormalize_columns(&mut m);
        assert!(dropped.is_empty());
        let gram = m.adjoint_mul(&m);
        assert!(gram.sub(&CMatrix::identity(7)).max_abs() < 1e-12);
    }

    #[test]
    fn seeded_unitary_is_unitary_and_deterministic() {
        let u1 = seeded_unitary(6, 42);
        let u2 = seeded_unitary(6, 42);
        assert_eq!(u1, u2);
        let dev = u1.adjoint_mul(&u1).sub(&CMatrix::identity(6)).max_abs();
        assert!(dev < 1e-12);
    }
}
