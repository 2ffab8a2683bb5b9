//! The quantized flat torus and its bundle data.
//!
//! Phase space is T^{2n} = R^{2n}/Z^{2n} with coordinates ordered
//! (x_1, y_1, ..., x_n, y_n), symplectic form omega = sum_j dx_j ∧ dy_j
//! (unit symplectic volume), the standard complex structure z_j = x_j + i y_j
//! and the compatible flat metric g = omega(·, J·). The prequantum line
//! bundle has curvature -2πi·omega per tensor power, so the flux of p·omega
//! through each coordinate 2-torus is the integer p.
//!
//! Two derived constants drive the spectral theory: the curvature matrix has
//! eigenvalues a_j = 2π, hence mu_0 = 2π (bottom of the curvature form) and
//! tau = sum_j a_j = 2πn (the renormalization shift). The renormalized
//! magnetic Laplacian then has its bound-state cluster at 0 and the rest of
//! the spectrum above 2·mu_0·p - O(1).

use std::f64::consts::PI;

use thiserror::Error;

use crate::symbol::FourierSymbol;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("complex dimension must be at least 1")]
    ZeroDimension,
    #[error("tensor power p must be at least 1 (got {0})")]
    InvalidPower(i64),
    #[error("rank of the auxiliary bundle must be at least 1")]
    ZeroRank,
    #[error("a degree twist requires a line bundle (rank 1), got rank {rank}")]
    TwistedHigherRank { rank: usize },
    #[error("potential must be Hermitian")]
    NonHermitianPotential,
    #[error("potential rank {phi_rank} does not match bundle rank {rank}")]
    PotentialRankMismatch { phi_rank: usize, rank: usize },
}

/// The quantized torus (T^{2n}, omega, J, g) with unit cell [0,1)^{2n}.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGeometry {
    n: usize,
    omega: Vec<Vec<f64>>,
    complex_structure: Vec<Vec<f64>>,
    /// g = omega(·, J·); always the flat compatible metric here.
    compatible_metric: bool,
}

impl TorusGeometry {
    /// Standard quantized torus of complex dimension `n`.
    pub fn new(n: usize) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        let d = 2 * n;
        let mut omega = vec![vec![0.0; d]; d];
        let mut jmat = vec![vec![0.0; d]; d];
        for k in 0..n {
            let (x, y) = (2 * k, 2 * k + 1);
            omega[x][y] = 1.0;
            omega[y][x] = -1.0;
            // J ∂x_j = ∂y_j, J ∂y_j = -∂x_j (columns of the matrix)
            jmat[y][x] = 1.0;
            jmat[x][y] = -1.0;
        }
        Ok(Self { n, omega, complex_structure: jmat, compatible_metric: true })
    }

    pub fn complex_dim(&self) -> usize {
        self.n
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    /// omega(u, v) for real tangent vectors.
    pub fn omega(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = 2 * self.n;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += u[i] * self.omega[i][j] * v[j];
            }
        }
        acc
    }

    /// J applied to a real tangent vector.
    pub fn apply_j(&self, u: &[f64]) -> Vec<f64> {
        let d = 2 * self.n;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                out[i] += self.complex_structure[i][j] * u[j];
            }
        }
        out
    }

    /// g(u, v) = omega(u, J v).
    pub fn metric(&self, u: &[f64], v: &[f64]) -> f64 {
        self.omega(u, &self.apply_j(v))
    }

    pub fn is_compatible_metric(&self) -> bool {
        self.compatible_metric
    }

    /// Symplectic volume of the unit cell, ∫ omega^n / n!.
    pub fn symplectic_volume(&self) -> f64 {
        1.0
    }

    /// Eigenvalues a_j of the curvature matrix of the prequantum bundle,
    /// all equal to 2π on the standard torus.
    pub fn curvature_eigenvalues(&self) -> Vec<f64> {
        vec![2.0 * PI; self.n]
    }

    /// mu_0 = inf R^L(u, ū)/|u|² over unit (1,0)-vectors.
    pub fn mu0(&self) -> f64 {
        2.0 * PI
    }

    /// tau = sum_j a_j, the renormalization constant; 2πn here. This is the
    /// normalization that places the bound-state cluster of the p=1 operator
    /// at 0 rather than at 2πn.
    pub fn tau(&self) -> f64 {
        2.0 * PI * self.n as f64
    }
}

/// Convenience constructor mirroring the library's primary entry point.
pub fn make_torus(n: usize) -> Result<TorusGeometry, GeometryError> {
    TorusGeometry::new(n)
}

/// Bundle data for L^p ⊗ E over the torus: tensor power p, an auxiliary
/// Hermitian bundle E of the given rank (trivial unless rank 1 with a degree
/// twist), and a Hermitian potential Phi ∈ C^∞(X, End(E)).
#[derive(Debug, Clone)]
pub struct BundleSpec {
    pub p: usize,
    pub rank_e: usize,
    pub degree_e: i32,
    pub phi: FourierSymbol,
}

impl BundleSpec {
    /// Trivial bundle with zero potential. `p = 0` is accepted so the plain
    /// lattice Laplacian remains constructible; quantization requires p ≥ 1.
    pub fn trivial(n: usize, p: usize) -> Self {
        Self { p, rank_e: 1, degree_e: 0, phi: FourierSymbol::zero(n, 1) }
    }

    pub fn new(
        n: usize,
        p: usize,
        rank_e: usize,
        degree_e: i32,
        phi: Option<FourierSymbol>,
    ) -> Result<Self, GeometryError> {
        if rank_e == 0 {
            return Err(GeometryError::ZeroRank);
        }
        if degree_e != 0 && rank_e > 1 {
            return Err(GeometryError::TwistedHigherRank { rank: rank_e });
        }
        let phi = phi.unwrap_or_else(|| FourierSymbol::zero(n, rank_e));
        if phi.rank() != rank_e {
            return Err(GeometryError::PotentialRankMismatch { phi_rank: phi.rank(), rank: rank_e });
        }
        if !phi.is_hermitian() {
            return Err(GeometryError::NonHermitianPotential);
        }
        Ok(Self { p, rank_e, degree_e, phi })
    }

    /// Total flux through each coordinate 2-torus for L^p ⊗ E.
    pub fn flux(&self) -> i64 {
        self.p as i64 + self.degree_e as i64
    }

    /// Riemann-Roch dimension of the bound-state space on T^{2n}:
    /// rank_E · (p + q)^n (with q = 0 unless E is a twisted line bundle).
    pub fn riemann_roch_dim(&self, n: usize) -> i64 {
        let f = self.flux();
        self.rank_e as i64 * f.pow(n as u32)
    }
}
