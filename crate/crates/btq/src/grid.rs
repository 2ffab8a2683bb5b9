//! Uniform lattice on the torus.
//!
//! N points per axis, 2n axes, grid step h = 1/N. Site indices are row-major
//! over the axes in the order (x_1, y_1, x_2, y_2, ...), x_1 fastest.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid needs at least 2 points per axis (got {0})")]
    TooCoarse(usize),
    #[error("grid resolution N = {n} is below the floor {floor} = 8·ceil(√p) for p = {p}")]
    BelowResolutionFloor { n: usize, floor: usize, p: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Complex dimension of the torus (2n real axes).
    pub n: usize,
    /// Points per axis.
    pub points: usize,
}

impl GridSpec {
    pub fn new(n: usize, points: usize) -> Result<Self, GridError> {
        if points < 2 {
            return Err(GridError::TooCoarse(points));
        }
        Ok(Self { n, points })
    }

    /// Smallest admissible N for tensor power p.
    pub fn resolution_floor(p: usize) -> usize {
        8 * (p as f64).sqrt().ceil() as usize
    }

    pub fn check_resolution(&self, p: usize) -> Result<(), GridError> {
        let floor = Self::resolution_floor(p);
        if self.points < floor {
            return Err(GridError::BelowResolutionFloor { n: self.points, floor, p });
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        1.0 / self.points as f64
    }

    /// Quadrature weight h^{2n} of one site.
    pub fn site_weight(&self) -> f64 {
        self.step().powi(2 * self.n as i32)
    }

    pub fn sites(&self) -> usize {
        self.points.pow(2 * self.n as u32)
    }

    /// Operator dimension for a rank-`rank` bundle.
    pub fn dim(&self, rank: usize) -> usize {
        self.sites() * rank
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), 2 * self.n);
        let mut idx = 0;
        for &c in coords.iter().rev() {
            debug_assert!(c < self.points);
            idx = idx * self.points + c;
        }
        idx
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0usize; 2 * self.n];
        for c in out.iter_mut() {
            *c = index % self.points;
            index /= self.points;
        }
        out
    }

    /// Neighbor site along `axis` (0-based over the 2n axes), step ±1.
    pub fn neighbor(&self, index: usize, axis: usize, step: i64) -> usize {
        let mut coords = self.coords(index);
        let p = self.points as i64;
        coords[axis] = ((coords[axis] as i64 + step).rem_euclid(p)) as usize;
        self.index(&coords)
    }

    pub fn position(&self, index: usize) -> Vec<f64> {
        self.coords(index).iter().map(|&c| c as f64 / self.points as f64).collect()
    }

    /// Euclidean distance on the torus (per-axis wrap).
    pub fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let pa = self.position(a);
        let pb = self.position(b);
        let mut acc = 0.0;
        for (x, y) in pa.iter().zip(&pb) {
            let mut d = (x - y).abs();
            if d > 0.5 {
                d = 1.0 - d;
            }
            acc += d * d;
        }
        acc.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip_x_fastest() {
        let g = GridSpec::new(1, 4).unwrap();
        assert_eq!(g.index(&[1, 0]), 1);
        assert_eq!(g.index(&[0, 1]), 4);
        for s in 0..g.sites() {
            assert_eq!(g.index(&g.coords(s)), s);
        }
        let g2 = GridSpec::new(2, 3).unwrap();
        assert_eq!(g2.sites(), 81);
        assert_eq!(g2.index(&[1, 0, 0, 0]), 1);
        assert_eq!(g2.index(&[0, 0, 1, 0]), 9);
        for s in (0..81).step_by(7) {
            assert_eq!(g2.index(&g2.coords(s)), s);
        }
    }

    #[test]
    fn neighbor_wraps() {
        let g = GridSpec::new(1, 4).unwrap();
        let s = g.index(&[3, 2]);
        assert_eq!(g.coords(g.neighbor(s, 0, 1)), vec![0, 2]);
        assert_eq!(g.coords(g.neighbor(s, 1, -3)), vec![3, 3]);
    }

    #[test]
    fn resolution_floor_values() {
        assert_eq!(GridSpec::resolution_floor(1), 8);
        assert_eq!(GridSpec::resolution_floor(4), 16);
        assert_eq!(GridSpec::resolution_floor(5), 24);
        assert_eq!(GridSpec::resolution_floor(16), 32);
        let g = GridSpec::new(1, 16).unwrap();
        assert!(g.check_resolution(4).is_ok());
        assert!(matches!(
            g.check_resolution(5),
            Err(GridError::BelowResolutionFloor { n: 16, floor: 24, p: 5 })
        ));
    }

    #[test]
    fn torus_distance_wraps() {
        let g = GridSpec::new(1, 8).unwrap();
        let a = g.index(&[0, 0]);
        let b = g.index(&[7, 0]);
        assert!((g.torus_distance(a, b) - 0.125).abs() < 1e-15);
        let c = g.index(&[4, 4]);
        assert!((g.torus_distance(a, c) - (2.0f64 * 0.25).sqrt()).abs() < 1e-15);
    }
}
