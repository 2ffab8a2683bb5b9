//! The bound-state space: low-lying eigenstates of the magnetic Laplacian.
//!
//! For the renormalized operator the spectrum splits into a cluster near 0
//! (the quantum space) and the rest above 2·mu0·p − O(1). The cluster
//! boundary is chosen at the largest multiplicative jump λ_{k+1}/max(λ_k, 1)
//! among the computed eigenvalues below mu0·p; a jump below 10 means no
//! believable gap and is reported as an error rather than guessed through.
//!
//! Eigenvectors are stored orthonormal under the quadrature inner product
//! ⟨u, v⟩ = h^{2n} Σ_x ⟨u(x), v(x)⟩, with the phase fixed by making the
//! largest-modulus component real positive. Everything downstream is
//! invariant under unitary rotations of the cluster basis, so the phase
//! choice is cosmetic.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::eigen::{lowest_eigenpairs, EigenError, EigenOptions, HermitianOp};
use crate::geometry::BundleSpec;
use crate::grid::GridSpec;
use crate::linalg::{self, CMatrix};
use crate::magnetic::MagneticOperator;

pub const BASIS_MAGIC: &[u8; 4] = b"BTQ1";
pub const BASIS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("no spectral gap found below mu0*p = {mu0p:.3} (best eigenvalue ratio {best_ratio:.2}, need >= 10)")]
    NoGapFound { mu0p: f64, best_ratio: f64 },
    #[error("eigenpair residuals too large: worst {worst:.3e}, allowed {allowed:.3e}")]
    ResidualTooLarge { worst: f64, allowed: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad eigenbasis file: {0}")]
    Format(String),
}

/// Gap certificate accompanying a solved cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCertificate {
    /// Largest cluster eigenvalue (top of the bound-state cluster).
    pub max_cluster: f64,
    /// Smallest computed eigenvalue above the cluster.
    pub min_excited: f64,
    /// min_excited / (2·mu0·p), the onset position relative to the ideal gap.
    pub onset_ratio: f64,
}

impl GapCertificate {
    /// Empirical stand-in for the gap constant: how far the computed
    /// spectrum deviates from the ideal split {0} ∪ [2·mu0·p, ∞).
    pub fn effective_c_l(&self, mu0p: f64) -> f64 {
        let cluster_dev = self.max_cluster.abs();
        let onset_dev = (2.0 * mu0p - self.min_excited).max(0.0);
        cluster_dev.max(onset_dev)
    }
}

/// Eigenpairs of the bound-state cluster plus a few excited states.
#[derive(Debug, Clone)]
pub struct SpectralCluster {
    n: usize,
    grid: GridSpec,
    p: usize,
    rank_e: usize,
    degree_e: i32,
    /// All computed eigenvalues, ascending (cluster then excited).
    eigenvalues: Vec<f64>,
    /// Cluster size d_p.
    cluster_size: usize,
    /// All computed eigenvectors, quadrature-orthonormal columns.
    vectors: CMatrix,
    gap: GapCertificate,
    seed: Option<u64>,
}

impl SpectralCluster {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rank_e(&self) -> usize {
        self.rank_e
    }

    pub fn degree_e(&self) -> i32 {
        self.degree_e
    }

    pub fn mu0_p(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.p as f64
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn cluster_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.cluster_size]
    }

    pub fn cluster_size(&self) -> usize {
        self.cluster_size
    }

    pub fn cluster_width(&self) -> f64 {
        let vals = self.cluster_eigenvalues();
        vals.last().unwrap() - vals.first().unwrap()
    }

    pub fn gap(&self) -> &GapCertificate {
        &self.gap
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// All stored eigenvectors (cluster then excited), quadrature-orthonormal.
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    /// The D × d_p matrix of cluster eigenvectors.
    pub fn cluster_matrix(&self) -> CMatrix {
        let d = self.cluster_size;
        let mut m = CMatrix::zeros(self.vectors.nrows(), d);
        for j in 0..d {
            m.column_mut(j).copy_from_slice(self.vectors.column(j));
        }
        m
    }

    /// Quadrature Gram deviation ‖h^{2n} V^H V − I‖_max over the cluster.
    pub fn gram_defect(&self) -> f64 {
        let v = self.cluster_matrix();
        let w = self.grid.site_weight();
        let gram = v.adjoint_mul(&v).scale(Complex64::new(w, 0.0));
        gram.sub(&CMatrix::identity(self.cluster_size)).max_abs()
    }

    /// Rotate the cluster basis by a unitary (for invariance tests).
    pub fn rotate_cluster_basis(&self, u: &CMatrix) -> SpectralCluster {
        assert_eq!(u.nrows(), self.cluster_size);
        assert_eq!(u.ncols(), self.cluster_size);
        let rotated = self.cluster_matrix().mul(u);
        let mut vectors = self.vectors.clone();
        for j in 0..self.cluster_size {
            vectors.column_mut(j).copy_from_slice(rotated.column(j));
        }
        SpectralCluster { vectors, ..self.clone() }
    }
}

/// Default request size: the expected cluster dimension plus a buffer of
/// excited states for the gap certificate.
pub fn default_count_hint(bundle: &BundleSpec) -> usize {
    bundle.rank_e * bundle.p + bundle.degree_e.unsigned_abs() as usize + 4
}

/// Solve for the bound-state cluster of an assembled operator.
pub fn solve_cluster(
    op: &MagneticOperator,
    count_hint: usize,
    seed: u64,
) -> Result<SpectralCluster, ClusterError> {
    let count = count_hint.min(op.dim());
    let mut opts = EigenOptions::new(count, seed);
    let mu0p = 2.0 * std::f64::consts::PI * op.p() as f64;
    if op.p() == 0 {
        // no quantizing flux, no bound-state cluster
        return Err(ClusterError::NoGapFound { mu0p, best_ratio: f64::NAN });
    }
    if op.p() >= 1 {
        // Filter window cutoff between the last wanted Landau band and the
        // next one up.
        let band_size = ((op.p() as i64 + op.degree_e() as i64).max(1) as usize) * op.rank_e();
        let bands_needed = count.div_ceil(band_size);
        opts.filter_cutoff = Some(mu0p * (2.0 * bands_needed as f64 + 1.0));
    }
    let (eigenvalues, mut raw) = lowest_eigenpairs(op, &opts)?;

    // Residual invariant for every reported pair.
    let allowed = 1e-8 * op.norm_bound();
    let mut worst = 0.0f64;
    for j in 0..count {
        let x = raw.column(j).to_vec();
        let mut r = vec![Complex64::new(0.0, 0.0); op.dim()];
        op.apply_into(&x, &mut r);
        linalg::axpy(Complex64::new(-eigenvalues[j], 0.0), &x, &mut r);
        worst = worst.max(linalg::norm(&r));
    }
    if worst > allowed {
        return Err(ClusterError::ResidualTooLarge { worst, allowed });
    }

    // Cluster boundary: largest multiplicative jump below mu0*p.
    let mut best_ratio = f64::NEG_INFINITY;
    let mut boundary = None;
    for k in 0..count - 1 {
        if eigenvalues[k] >= mu0p {
            break;
        }
        let ratio = eigenvalues[k + 1] / eigenvalues[k].max(1.0);
        if ratio > best_ratio {
            best_ratio = ratio;
            boundary = Some(k + 1);
        }
    }
    let cluster_size = match boundary {
        Some(b) if best_ratio >= 10.0 => b,
        _ => {
            return Err(ClusterError::NoGapFound {
                mu0p,
                best_ratio: if best_ratio.is_finite() { best_ratio } else { f64::NAN },
            })
        }
    };

    // Quadrature normalization and the cosmetic phase convention.
    let grid = *op.grid();
    let qscale = 1.0 / grid.site_weight().sqrt();
    for j in 0..count {
        let col = raw.column_mut(j);
        let mut best_idx = 0;
        let mut best_mag = -1.0;
        for (i, v) in col.iter().enumerate() {
            let m = v.norm();
            if m > best_mag + 1e-12 {
                best_mag = m;
                best_idx = i;
            }
        }
        let anchor = col[best_idx];
        let phase = if anchor.norm() > 0.0 { anchor.conj() / anchor.norm() } else { Complex64::new(1.0, 0.0) };
        let s = phase * qscale;
        for v in col.iter_mut() {
            *v *= s;
        }
    }

    let gap = GapCertificate {
        max_cluster: eigenvalues[cluster_size - 1],
        min_excited: eigenvalues[cluster_size],
        onset_ratio: eigenvalues[cluster_size] / (2.0 * mu0p),
    };

    Ok(SpectralCluster {
        n: grid.n,
        grid,
        p: op.p(),
        rank_e: op.rank_e(),
        degree_e: op.degree_e(),
        eigenvalues,
        cluster_size,
        vectors: raw,
        gap,
        seed: Some(seed),
    })
}

/// Dimension check against the Riemann-Roch count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionReport {
    pub measured: usize,
    pub expected: i64,
    pub pass: bool,
}

pub fn dimension_report(cluster: &SpectralCluster, bundle: &BundleSpec) -> DimensionReport {
    let expected = bundle.riemann_roch_dim(cluster.n());
    DimensionReport {
        measured: cluster.cluster_size(),
        expected,
        pass: cluster.cluster_size() as i64 == expected,
    }
}

/// Serialize the eigenbasis (binary, little-endian): magic "BTQ1",
/// u32 version, u32 n, u32 N, u32 p, u32 rank_E, i32 degree_E, u32 d_p,
/// u32 extra_count, f64 eigenvalues, complex eigenvectors column-major as
/// f64 (re, im) pairs, then CRC32 of everything after the magic.
pub fn save_basis(cluster: &SpectralCluster, path: &Path) -> Result<(), ClusterError> {
    let mut payload: Vec<u8> = Vec::new();
    let total = cluster.eigenvalues.len();
    let extra = total - cluster.cluster_size;
    payload.extend_from_slice(&BASIS_VERSION.to_le_bytes());
    payload.extend_from_slice(&(cluster.n as u32).to_le_bytes());
    payload.extend_from_slice(&(cluster.grid.points as u32).to_le_bytes());
    payload.extend_from_slice(&(cluster.p as u32).to_le_bytes());
    payload.extend_from_slice(&(cluster.rank_e as u32).to_le_bytes());
    payload.extend_from_slice(&cluster.degree_e.to_le_bytes());
    payload.extend_from_slice(&(cluster.cluster_size as u32).to_le_bytes());
    payload.extend_from_slice(&(extra as u32).to_le_bytes());
    for v in &cluster.eigenvalues {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for j in 0..total {
        for v in cluster.vectors.column(j) {
            payload.extend_from_slice(&v.re.to_le_bytes());
            payload.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);

    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(BASIS_MAGIC)?;
        f.write_all(&payload)?;
        f.write_all(&crc.to_le_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<SpectralCluster, ClusterError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 + 32 + 4 {
        return Err(ClusterError::Format("file truncated".into()));
    }
    if &bytes[..4] != BASIS_MAGIC {
        return Err(ClusterError::Format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[..4],
            BASIS_MAGIC
        )));
    }
    let payload = &bytes[4..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let crc = crc32fast::hash(payload);
    if crc != stored_crc {
        return Err(ClusterError::Format(format!(
            "checksum mismatch: stored {stored_crc:#010x}, computed {crc:#010x}"
        )));
    }

    let mut cur = payload;
    let mut take_u32 = || -> Result<u32, ClusterError> {
        if cur.len() < 4 {
            return Err(ClusterError::Format("payload truncated".into()));
        }
        let v = u32::from_le_bytes(cur[..4].try_into().unwrap());
        cur = &cur[4..];
        Ok(v)
    };
    let version = take_u32()?;
    if version != BASIS_VERSION {
        return Err(ClusterError::Format(format!("unsupported version {version}")));
    }
    let n = take_u32()? as usize;
    let points = take_u32()? as usize;
    let p = take_u32()? as usize;
    let rank_e = take_u32()? as usize;
    let degree_e = take_u32()? as i32;
    let d_p = take_u32()? as usize;
    let extra = take_u32()? as usize;
    let rest = cur;

    let grid = GridSpec::new(n, points).map_err(|e| ClusterError::Format(e.to_string()))?;
    let dim = grid.dim(rank_e);
    let total = d_p + extra;
    let expect = total * 8 + total * dim * 16;
    if rest.len() != expect {
        return Err(ClusterError::Format(format!(
            "payload size {} does not match header (expected {expect})",
            rest.len()
        )));
    }
    let mut eigenvalues = Vec::with_capacity(total);
    let mut off = 0;
    for _ in 0..total {
        eigenvalues.push(f64::from_le_bytes(rest[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    let mut vectors = CMatrix::zeros(dim, total);
    for j in 0..total {
        let col = vectors.column_mut(j);
        for item in col.iter_mut() {
            let re = f64::from_le_bytes(rest[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(rest[off + 8..off + 16].try_into().unwrap());
            *item = Complex64::new(re, im);
            off += 16;
        }
    }
    if d_p == 0 || total == d_p {
        return Err(ClusterError::Format("file holds no cluster/excited split".into()));
    }
    let mu0p = 2.0 * std::f64::consts::PI * p as f64;
    let gap = GapCertificate {
        max_cluster: eigenvalues[d_p - 1],
        min_excited: eigenvalues[d_p],
        onset_ratio: eigenvalues[d_p] / (2.0 * mu0p),
    };
    Ok(SpectralCluster {
        n,
        grid,
        p,
        rank_e,
        degree_e,
        eigenvalues,
        cluster_size: d_p,
        vectors,
        gap,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_torus, BundleSpec};
    use crate::magnetic::assemble;
    use crate::symbol::FourierSymbol;

    fn solve(n: usize, p: usize, npts: usize, phi: Option<FourierSymbol>, q: i32, rank: usize) -> SpectralCluster {
        let geom = make_torus(n).unwrap();
        let bundle = BundleSpec::new(n, p, rank, q, phi).unwrap();
        let grid = GridSpec::new(n, npts).unwrap();
        let op = assemble(&geom, &bundle, &grid).unwrap();
        solve_cluster(&op, default_count_hint(&bundle), 7).unwrap()
    }

    #[test]
    fn flat_p4_cluster_matches_dense_oracle() {
        let cl = solve(1, 4, 24, None, 0, 1);
        assert_eq!(cl.cluster_size(), 4);
        let bound = 0.05 * 4.0 * std::f64::consts::PI * 4.0;
        for v in cl.cluster_eigenvalues() {
            assert!(v.abs() <= bound, "cluster eigenvalue {v} outside ±{bound}");
        }
        // dense oracle at D = 576
        let geom = make_torus(1).unwrap();
        let bundle = BundleSpec::trivial(1, 4);
        let grid = GridSpec::new(1, 24).unwrap();
        let op = assemble(&geom, &bundle, &grid).unwrap();
        let (dense_vals, _) = linalg::hermitian_eigen(&op.to_dense());
        for (a, b) in cl.eigenvalues().iter().zip(dense_vals.iter()) {
            assert!((a - b).abs() < 1e-6 * op.norm_bound(), "{a} vs {b}");
        }
        // gap certificate: separation at least mu0*p
        assert!(cl.gap().min_excited - cl.gap().max_cluster >= cl.mu0_p());
        assert!(cl.gram_defect() < 1e-10);
    }

    #[test]
    fn potential_shifts_single_state_by_its_mean() {
        let phi = FourierSymbol::cos(1, 0).scale(Complex64::new(0.3, 0.0));
        let cl = solve(1, 1, 12, Some(phi.clone()), 0, 1);
        assert_eq!(cl.cluster_size(), 1);
        // first-order perturbation: shift ≈ ⟨ψ, Φ ψ⟩ within O(‖Φ‖²/gap)
        let v = cl.cluster_matrix();
        let grid = cl.grid();
        let w = grid.site_weight();
        let mut mean = 0.0;
        for s in 0..grid.sites() {
            let x = grid.position(s);
            let val = phi.eval_scalar(&x).re;
            mean += val * v.column(0)[s].norm_sqr() * w;
        }
        let lam = cl.cluster_eigenvalues()[0];
        // compare against the unperturbed eigenvalue at the same grid
        let base = solve(1, 1, 12, None, 0, 1).cluster_eigenvalues()[0];
        let shift = lam - base;
        assert!((shift - mean).abs() < 0.02, "shift {shift} vs mean {mean}");
        assert!(shift.abs() <= 0.3 + 1e-9);
    }

    #[test]
    fn dimension_reports() {
        let geom = make_torus(1).unwrap();
        // trivial bundle: d_p = p
        let cl = solve(1, 6, 24, None, 0, 1);
        let b = BundleSpec::trivial(1, 6);
        let rep = dimension_report(&cl, &b);
        assert_eq!(rep, DimensionReport { measured: 6, expected: 6, pass: true });
        // rank 2: two decoupled flux-p problems
        let b2 = BundleSpec::new(1, 5, 2, 0, None).unwrap();
        let grid = GridSpec::new(1, 24).unwrap();
        let op = assemble(&geom, &b2, &grid).unwrap();
        let cl2 = solve_cluster(&op, default_count_hint(&b2), 7).unwrap();
        assert!(dimension_report(&cl2, &b2).pass);
        assert_eq!(cl2.cluster_size(), 10);
        // degree twist: total flux p + q
        let b3 = BundleSpec::new(1, 5, 1, 1, None).unwrap();
        let op3 = assemble(&geom, &b3, &grid).unwrap();
        let cl3 = solve_cluster(&op3, default_count_hint(&b3), 7).unwrap();
        assert_eq!(cl3.cluster_size(), 6);
        assert!(dimension_report(&cl3, &b3).pass);
    }

    #[test]
    fn cluster_size_independent_of_grid() {
        let mut sizes = Vec::new();
        for npts in [16, 24, 32] {
            sizes.push(solve(1, 3, npts, None, 0, 1).cluster_size());
        }
        assert_eq!(sizes, vec![3, 3, 3]);
    }

    #[test]
    fn bounded_potential_preserves_dimension_and_minmax_shift() {
        let phi = FourierSymbol::cos(1, 1).scale(Complex64::new(0.9, 0.0));
        let base = solve(1, 4, 16, None, 0, 1);
        let pert = solve(1, 4, 16, Some(phi), 0, 1);
        assert_eq!(base.cluster_size(), pert.cluster_size());
        for (a, b) in base.eigenvalues().iter().zip(pert.eigenvalues()) {
            assert!((a - b).abs() <= 0.9 + 1e-9, "min-max violated: {a} vs {b}");
        }
    }

    #[test]
    fn no_gap_for_zero_flux() {
        let geom = make_torus(1).unwrap();
        let bundle = BundleSpec::trivial(1, 0);
        let grid = GridSpec::new(1, 8).unwrap();
        let op = assemble(&geom, &bundle, &grid).unwrap();
        match solve_cluster(&op, 5, 7) {
            Err(ClusterError::NoGapFound { .. }) => {}
            other => panic!("expected NoGapFound, got {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let cl = solve(1, 3, 16, None, 0, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.btq");
        save_basis(&cl, &path).unwrap();
        let back = load_basis(&path).unwrap();
        assert_eq!(back.cluster_size(), cl.cluster_size());
        assert_eq!(back.eigenvalues(), cl.eigenvalues());
        assert_eq!(back.vectors().data(), cl.vectors().data());
        assert!(back.gram_defect() < 1e-10);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let cl = solve(1, 3, 16, None, 0, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.btq");
        save_basis(&cl, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // magic corruption
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let bad_path = dir.path().join("bad_magic.btq");
        std::fs::write(&bad_path, &bad).unwrap();
        assert!(matches!(load_basis(&bad_path), Err(ClusterError::Format(_))));
        // payload corruption breaks the checksum
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        let bad_path2 = dir.path().join("bad_crc.btq");
        std::fs::write(&bad_path2, &bytes).unwrap();
        match load_basis(&bad_path2) {
            Err(ClusterError::Format(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }
}
