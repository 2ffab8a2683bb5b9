//! Lowest eigenpairs of sparse Hermitian operators.
//!
//! Block Lanczos with full reorthogonalization: grow a block-Krylov basis,
//! Rayleigh-Ritz it, and stop once the lowest Ritz pairs have small
//! residuals. Full reorthogonalization keeps the basis numerically
//! orthonormal, which matters here because the magnetic bound-state cluster
//! is quasi-degenerate. Start vectors come from a seeded PRNG so runs are
//! bit-reproducible. Below a size threshold the solver simply materializes
//! the operator and calls the dense eigensolver; the dense route also serves
//! as the fallback when the iteration fails to converge.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::linalg::{self, CMatrix, C_ZERO};

pub trait HermitianOp {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]);
    /// Upper bound on the spectral radius, used to scale residual tolerances.
    fn norm_bound(&self) -> f64;
}

impl HermitianOp for crate::magnetic::MagneticOperator {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        crate::magnetic::MagneticOperator::apply_into(self, x, y)
    }
    fn norm_bound(&self) -> f64 {
        crate::magnetic::MagneticOperator::norm_bound(self)
    }
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Number of lowest eigenpairs wanted.
    pub count: usize,
    /// Relative residual tolerance: ‖Av − λv‖ ≤ tol · norm_bound.
    pub tol: f64,
    /// PRNG seed for the start block.
    pub seed: u64,
    /// Hard cap on the Krylov basis size (0 = automatic).
    pub max_basis: usize,
    /// Densify below this dimension instead of iterating.
    pub dense_threshold: usize,
    /// Dense fallback allowed up to this dimension if the iteration stalls.
    pub dense_fallback_dim: usize,
    /// When set, run Chebyshev-filtered subspace iteration with the filter
    /// window [cutoff, norm_bound]: everything below the cutoff is
    /// amplified. The cutoff must sit above the wanted eigenvalues; for the
    /// magnetic Laplacian a point between two Landau bands works well.
    pub filter_cutoff: Option<f64>,
}

impl EigenOptions {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            tol: 1e-10,
            seed,
            max_basis: 0,
            dense_threshold: 192,
            dense_fallback_dim: 4096,
            filter_cutoff: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("requested {count} eigenpairs from a dimension-{dim} operator")]
    CountExceedsDim { count: usize, dim: usize },
    #[error("not converged: worst residual {residual:.3e} (tolerance {tol:.3e})")]
    NotConverged { residual: f64, tol: f64 },
}

/// Lowest `opts.count` eigenpairs, ascending. Eigenvectors are the columns
/// of the returned matrix, orthonormal in the plain ℓ² inner product.
pub fn lowest_eigenpairs(
    op: &impl HermitianOp,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, CMatrix), EigenError> {
    let dim = op.dim();
    let count = opts.count;
    if count == 0 {
        return Ok((Vec::new(), CMatrix::zeros(dim, 0)));
    }
    if count > dim {
        return Err(EigenError::CountExceedsDim { count, dim });
    }
    if dim <= opts.dense_threshold.max(3 * count) {
        return Ok(dense_lowest(op, count));
    }
    let iterated = match opts.filter_cutoff {
        Some(cutoff) => chebyshev_lowest(op, opts, cutoff).or_else(|_| krylov_lowest(op, opts)),
        None => krylov_lowest(op, opts),
    };
    match iterated {
        Ok(res) => Ok(res),
        Err(err) => {
            if dim <= opts.dense_fallback_dim {
                Ok(dense_lowest(op, count))
            } else {
                Err(err)
            }
        }
    }
}

/// Chebyshev-filtered subspace iteration. Per sweep, every block vector is
/// run through a degree-`d` scaled Chebyshev polynomial of the operator that
/// is bounded on [lo, hi] and grows like cosh(d·acosh) below lo, then the
/// block is orthonormalized and Rayleigh-Ritz rotated.
fn chebyshev_lowest(
    op: &impl HermitianOp,
    opts: &EigenOptions,
    cutoff: f64,
) -> Result<(Vec<f64>, CMatrix), EigenError> {
    let dim = op.dim();
    let count = opts.count;
    let hi = op.norm_bound() * 1.0001;
    let lo = cutoff.min(0.6 * hi);
    let scale = op.norm_bound().max(1.0);
    let tol_abs = opts.tol * scale;
    let degree = 36usize;
    let block = (count + (count / 4).max(3)).min(dim);
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);

    let mut x = CMatrix::from_fn(dim, block, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let mut lambda_floor = -scale;
    let mut worst_residual = f64::INFINITY;

    for _sweep in 0..50 {
        cheb_filter_block(op, &mut x, degree, lo, hi, lambda_floor);
        let dropped = linalg::orthonormalize_columns(&mut x);
        for j in dropped {
            let fresh = random_vec(dim, &mut rng);
            x.column_mut(j).copy_from_slice(&fresh);
            let mut col = x.column(j).to_vec();
            let others: Vec<Vec<Complex64>> =
                (0..j).map(|i| x.column(i).to_vec()).collect();
            if orthonormalize_against(&mut col, &others) {
                x.column_mut(j).copy_from_slice(&col);
            }
        }
        // Rayleigh-Ritz on the block.
        let mut ax = CMatrix::zeros(dim, block);
        for j in 0..block {
            let (xc, axc) = (x.column(j).to_vec(), ax.column_mut(j));
            op.apply_into(&xc, axc);
        }
        let h = x.adjoint_mul(&ax);
        let mut hsym = h.clone();
        for j in 0..block {
            for i in 0..block {
                hsym[(i, j)] = (h[(i, j)] + h[(j, i)].conj()) * Complex64::new(0.5, 0.0);
            }
        }
        let (theta, u) = linalg::hermitian_eigen(&hsym);
        x = x.mul(&u);
        let axu = ax.mul(&u);
        lambda_floor = theta[0];

        worst_residual = 0.0;
        for j in 0..count {
            let mut r = axu.column(j).to_vec();
            linalg::axpy(Complex64::new(-theta[j], 0.0), x.column(j), &mut r);
            worst_residual = worst_residual.max(linalg::norm(&r));
        }
        if worst_residual <= tol_abs {
            let mut out = CMatrix::zeros(dim, count);
            for j in 0..count {
                out.column_mut(j).copy_from_slice(x.column(j));
            }
            return Ok((theta[..count].to_vec(), out));
        }
    }
    Err(EigenError::NotConverged { residual: worst_residual, tol: tol_abs })
}

/// In-place scaled Chebyshev filter of every column:
/// X ← p_d(A) X where p_d is the degree-d Chebyshev polynomial on [lo, hi]
/// normalized at `lambda_floor` (Saad's three-term scaled recurrence).
fn cheb_filter_block(
    op: &impl HermitianOp,
    x: &mut CMatrix,
    degree: usize,
    lo: f64,
    hi: f64,
    lambda_floor: f64,
) {
    let dim = x.nrows();
    let e = (hi - lo) / 2.0;
    let c = (hi + lo) / 2.0;
    let sigma1 = e / (lambda_floor - c);
    for j in 0..x.ncols() {
        let x0: Vec<Complex64> = x.column(j).to_vec();
        let mut y_prev = x0.clone();
        let mut y = vec![C_ZERO; dim];
        op.apply_into(&x0, &mut y);
        let s1e = sigma1 / e;
        for (yi, x0i) in y.iter_mut().zip(&x0) {
            *yi = (*yi - x0i * c) * s1e;
        }
        let mut sigma = sigma1;
        let mut work = vec![C_ZERO; dim];
        for _k in 2..=degree {
            let sigma_next = 1.0 / (2.0 / sigma1 - sigma);
            op.apply_into(&y, &mut work);
            let a = 2.0 * sigma_next / e;
            let b = sigma * sigma_next;
            for i in 0..dim {
                let ynew = (work[i] - y[i] * c) * a - y_prev[i] * b;
                y_prev[i] = y[i];
                y[i] = ynew;
            }
            sigma = sigma_next;
        }
        x.column_mut(j).copy_from_slice(&y);
    }
}

fn dense_lowest(op: &impl HermitianOp, count: usize) -> (Vec<f64>, CMatrix) {
    let dim = op.dim();
    let mut dense = CMatrix::zeros(dim, dim);
    let mut unit = vec![C_ZERO; dim];
    let mut col = vec![C_ZERO; dim];
    for j in 0..dim {
        unit[j] = Complex64::new(1.0, 0.0);
        op.apply_into(&unit, &mut col);
        dense.column_mut(j).copy_from_slice(&col);
        unit[j] = C_ZERO;
    }
    let (vals, vecs) = linalg::hermitian_eigen(&dense);
    let mut out = CMatrix::zeros(dim, count);
    for j in 0..count {
        out.column_mut(j).copy_from_slice(vecs.column(j));
    }
    (vals[..count].to_vec(), out)
}

struct Basis {
    v: Vec<Vec<Complex64>>,
    av: Vec<Vec<Complex64>>,
}

impl Basis {
    fn len(&self) -> usize {
        self.v.len()
    }
}

fn krylov_lowest(
    op: &impl HermitianOp,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, CMatrix), EigenError> {
    let dim = op.dim();
    let count = opts.count;
    let block = count.min(dim);
    let max_basis = if opts.max_basis > 0 {
        opts.max_basis.min(dim)
    } else {
        (8 * count + 160).min(dim)
    };
    let scale = op.norm_bound().max(1.0);
    let tol_abs = opts.tol * scale;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);

    let mut basis = Basis { v: Vec::new(), av: Vec::new() };
    // Projected matrix entries h[i][j] = <v_i, A v_j>, grown incrementally.
    let mut hcols: Vec<Vec<Complex64>> = Vec::new();
    let mut block_vecs: Vec<Vec<Complex64>> = (0..block).map(|_| random_vec(dim, &mut rng)).collect();
    let mut worst_residual = f64::INFINITY;

    for round in 0..200 {
        // Append the current block, reorthogonalizing fully, and queue the
        // images A·x as the next block (block-Krylov expansion).
        let mut next_block: Vec<Vec<Complex64>> = Vec::with_capacity(block);
        for mut x in block_vecs.drain(..) {
            if !orthonormalize_against(&mut x, &basis.v) {
                x = random_vec(dim, &mut rng);
                if !orthonormalize_against(&mut x, &basis.v) {
                    continue;
                }
            }
            let mut ax = vec![C_ZERO; dim];
            op.apply_into(&x, &mut ax);
            next_block.push(ax.clone());
            basis.v.push(x);
            basis.av.push(ax);
            let j = basis.len() - 1;
            let mut col = Vec::with_capacity(j + 1);
            for i in 0..=j {
                col.push(linalg::dot(&basis.v[i], &basis.av[j]));
            }
            hcols.push(col);
            if basis.len() >= max_basis {
                break;
            }
        }
        block_vecs = next_block;

        // Rayleigh-Ritz every few rounds (and always near the basis cap).
        let m = basis.len();
        if m < count || (round % 3 != 2 && m + block < max_basis && m < 6 * count) {
            continue;
        }
        let mut h = CMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                let hij = hcols[j][i];
                h[(i, j)] = hij;
                h[(j, i)] = hij.conj();
            }
        }
        let (theta, u) = linalg::hermitian_eigen(&h);

        // Assemble the lowest `count` Ritz vectors and their residuals.
        let take = count.min(m);
        let mut ritz = CMatrix::zeros(dim, take);
        let mut aritz = CMatrix::zeros(dim, take);
        for j in 0..take {
            let col = u.column(j);
            let rj = ritz.column_mut(j);
            for (i, &c) in col.iter().enumerate() {
                if c != C_ZERO {
                    linalg::axpy(c, &basis.v[i], rj);
                }
            }
            let arj = aritz.column_mut(j);
            for (i, &c) in col.iter().enumerate() {
                if c != C_ZERO {
                    linalg::axpy(c, &basis.av[i], arj);
                }
            }
        }
        worst_residual = 0.0;
        let mut residual_vecs: Vec<Vec<Complex64>> = Vec::with_capacity(take);
        for j in 0..take {
            let mut r = aritz.column(j).to_vec();
            let lam = Complex64::new(-theta[j], 0.0);
            linalg::axpy(lam, ritz.column(j), &mut r);
            worst_residual = worst_residual.max(linalg::norm(&r));
            residual_vecs.push(r);
        }
        if take == count && worst_residual <= tol_abs {
            return Ok((theta[..count].to_vec(), ritz));
        }

        if m >= max_basis {
            // Thick restart: keep the lowest Ritz vectors as the new basis.
            // In that basis the projected matrix is diagonal.
            let keep = (2 * count + block).min(m);
            let mut new_v = Vec::with_capacity(keep);
            let mut new_av = Vec::with_capacity(keep);
            for j in 0..keep {
                let col = u.column(j);
                let mut vj = vec![C_ZERO; dim];
                let mut avj = vec![C_ZERO; dim];
                for (i, &c) in col.iter().enumerate() {
                    if c != C_ZERO {
                        linalg::axpy(c, &basis.v[i], &mut vj);
                        linalg::axpy(c, &basis.av[i], &mut avj);
                    }
                }
                new_v.push(vj);
                new_av.push(avj);
            }
            basis.v = new_v;
            basis.av = new_av;
            hcols = (0..keep)
                .map(|j| {
                    let mut col = vec![C_ZERO; j + 1];
                    col[j] = Complex64::new(theta[j], 0.0);
                    col
                })
                .collect();
            // Restart the expansion from the unconverged residual directions.
            block_vecs = residual_vecs;
            block_vecs.truncate(block);
            while block_vecs.len() < block {
                block_vecs.push(random_vec(dim, &mut rng));
            }
        }
    }

    Err(EigenError::NotConverged { residual: worst_residual, tol: tol_abs })
}

fn random_vec(dim: usize, rng: &mut ChaCha20Rng) -> Vec<Complex64> {
    (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Project `x` against every column in `others` (two passes) and normalize.
/// Returns false if `x` was numerically dependent.
fn orthonormalize_against(x: &mut Vec<Complex64>, others: &[Vec<Complex64>]) -> bool {
    for _pass in 0..2 {
        for o in others {
            let c = linalg::dot(o, x);
            if c != C_ZERO {
                linalg::axpy(-c, o, x);
            }
        }
    }
    let nrm = linalg::norm(x);
    if nrm <= 1e-10 {
        return false;
    }
    let inv = 1.0 / nrm;
    for v in x.iter_mut() {
        *v *= inv;
    }
    true
}
