//! Uniform spatial, temporal and space-time grids.
//!
//! Public indices are 1-based: node `(m, n)` sits at
//! `(x_min + (m - 1) dx, y_min + (n - 1) dx)` and time level `j` at
//! `t_j = (j - 1) dt`. Storage is 0-based; the `*_0` helpers expose the raw
//! offsets used by the assembly and solver code.
//!
//! The space-time linear index is
//!
//! ```text
//! i = (m - 1) N n_t + (n - 1) n_t + j
//! ```
//!
//! so the time index varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};

/// Square uniform grid over `[x_min, x_max] x [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid2D {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    n: usize,
    dx: f64,
}

impl SpatialGrid2D {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(IspError::Config(format!("grid needs at least 2 nodes per axis, got {n}")));
        }
        let wx = x_max - x_min;
        let wy = y_max - y_min;
        if !(wx > 0.0) || !(wy > 0.0) {
            return Err(IspError::Config(format!(
                "grid extent must be positive, got [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        if ((wx - wy) / wx).abs() > 1e-12 {
            return Err(IspError::Config(format!("grid must be square, got widths {wx} and {wy}")));
        }
        Ok(Self { x_min, x_max, y_min, y_max, n, dx: wx / (n - 1) as f64 })
    }

    /// Grid over the centred square `(-half, half)^2`.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, -half_width, half_width, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    /// Coordinates of the 1-based node `(m, n)`.
    pub fn node(&self, m: usize, n: usize) -> Result<(f64, f64)> {
        if m < 1 || m > self.n || n < 1 || n > self.n {
            return Err(IspError::Range(format!("node ({m}, {n}) outside 1..={}", self.n)));
        }
        Ok(self.node_0(m - 1, n - 1))
    }

    #[inline]
    pub fn node_0(&self, m0: usize, n0: usize) -> (f64, f64) {
        (self.x_0(m0), self.y_0(n0))
    }

    #[inline]
    pub fn x_0(&self, m0: usize) -> f64 {
        self.x_min + m0 as f64 * self.dx
    }

    #[inline]
    pub fn y_0(&self, n0: usize) -> f64 {
        self.y_min + n0 as f64 * self.dx
    }

    /// Offset of node `(m0, n0)` in a row-major `n x n` array (x index outer).
    #[inline]
    pub fn offset_0(&self, m0: usize, n0: usize) -> usize {
        m0 * self.n + n0
    }

    pub fn is_boundary_0(&self, m0: usize, n0: usize) -> bool {
        m0 == 0 || n0 == 0 || m0 + 1 == self.n || n0 + 1 == self.n
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-12 * self.dx;
        x >= self.x_min - tol && x <= self.x_max + tol && y >= self.y_min - tol && y <= self.y_max + tol
    }

    /// Boundary nodes, each once, as 1-based `(m, n)` pairs.
    ///
    /// Order: counter-clockwise starting at the corner `(1, 1)`: bottom edge
    /// `n = 1` with increasing `m`, right edge `m = N` with increasing `n`,
    /// top edge `n = N` with decreasing `m`, left edge `m = 1` with
    /// decreasing `n`.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        if n == 1 {
            return vec![(1, 1)];
        }
        let mut out = Vec::with_capacity(4 * n - 4);
        for m in 1..=n {
            out.push((m, 1));
        }
        for k in 2..=n {
            out.push((n, k));
        }
        for m in (1..n).rev() {
            out.push((m, n));
        }
        for k in (2..n).rev() {
            out.push((1, k));
        }
        out
    }

    /// Unit outward normal at a 1-based boundary node. Corners use the
    /// bisector of the two edge normals.
    pub fn outward_normal(&self, m: usize, n: usize) -> Option<[f64; 2]> {
        let nx = if m == 1 {
            -1.0
        } else if m == self.n {
            1.0
        } else {
            0.0
        };
        let ny = if n == 1 {
            -1.0
        } else if n == self.n {
            1.0
        } else {
            0.0
        };
        if nx == 0.0 && ny == 0.0 {
            return None;
        }
        let norm = ((nx * nx + ny * ny) as f64).sqrt();
        Some([nx / norm, ny / norm])
    }
}

/// Which relation ties the step to the final time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepConvention {
    /// `dt = T / n_t`, so the last level is `T - dt`.
    #[default]
    PerStep,
    /// `dt = T / (n_t - 1)`, so the last level is exactly `T`.
    Endpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_t: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_t: usize) -> Result<Self> {
        Self::with_convention(t_final, n_t, TimeStepConvention::PerStep)
    }

    pub fn with_convention(t_final: f64, n_t: usize, convention: TimeStepConvention) -> Result<Self> {
        if n_t < 3 {
            return Err(IspError::Config(format!("time grid needs at least 3 levels, got {n_t}")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(IspError::Config(format!("final time must be positive, got {t_final}")));
        }
        let dt = match convention {
            TimeStepConvention::PerStep => t_final / n_t as f64,
            TimeStepConvention::Endpoint => t_final / (n_t - 1) as f64,
        };
        Ok(Self { t_final, n_t, dt })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// `t_j` for the 1-based level `j`.
    pub fn time(&self, j: usize) -> Result<f64> {
        if j < 1 || j > self.n_t {
            return Err(IspError::Range(format!("time level {j} outside 1..={}", self.n_t)));
        }
        Ok(self.time_0(j - 1))
    }

    #[inline]
    pub fn time_0(&self, j0: usize) -> f64 {
        j0 as f64 * self.dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub space: SpatialGrid2D,
    pub time: TimeGrid,
}

/// 1-based position in the flattened space-time vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinearIndex(pub usize);

impl SpaceTimeGrid {
    pub fn new(space: SpatialGrid2D, time: TimeGrid) -> Self {
        Self { space, time }
    }

    /// Number of unknowns, `N^2 n_t`.
    pub fn len(&self) -> usize {
        self.space.node_count() * self.time.n_t()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linearize(&self, m: usize, n: usize, j: usize) -> Result<LinearIndex> {
        let big_n = self.space.n();
        let n_t = self.time.n_t();
        if m < 1 || m > big_n || n < 1 || n > big_n || j < 1 || j > n_t {
            return Err(IspError::Range(format!(
                "({m}, {n}, {j}) outside 1..={big_n} x 1..={big_n} x 1..={n_t}"
            )));
        }
        Ok(LinearIndex(self.index_0(m - 1, n - 1, j - 1) + 1))
    }

    pub fn delinearize(&self, i: LinearIndex) -> Result<(usize, usize, usize)> {
        if i.0 < 1 || i.0 > self.len() {
            return Err(IspError::Range(format!("linear index {} outside 1..={}", i.0, self.len())));
        }
        let (m0, n0, j0) = self.split_0(i.0 - 1);
        Ok((m0 + 1, n0 + 1, j0 + 1))
    }

    #[inline]
    pub fn index_0(&self, m0: usize, n0: usize, j0: usize) -> usize {
        (m0 * self.space.n() + n0) * self.time.n_t() + j0
    }

    #[inline]
    pub fn split_0(&self, idx: usize) -> (usize, usize, usize) {
        let n_t = self.time.n_t();
        let j0 = idx % n_t;
        let node = idx / n_t;
        (node / self.space.n(), node % self.space.n(), j0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, n_t: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpatialGrid2D::centered(0.5, n).unwrap(), TimeGrid::new(1.0, n_t).unwrap())
    }

    #[test]
    fn linearize_examples() {
        let g = grid(85, 120);
        assert_eq!(g.linearize(1, 1, 1).unwrap(), LinearIndex(1));
        assert_eq!(g.linearize(1, 1, 2).unwrap(), LinearIndex(2));
        assert_eq!(g.linearize(2, 1, 1).unwrap(), LinearIndex(10201));
        assert_eq!(grid(3, 3).linearize(1, 1, 1).unwrap(), LinearIndex(1));
    }

    #[test]
    fn delinearize_examples() {
        let g = grid(85, 120);
        assert_eq!(g.delinearize(LinearIndex(1)).unwrap(), (1, 1, 1));
        assert_eq!(g.delinearize(LinearIndex(120)).unwrap(), (1, 1, 120));
        assert_eq!(g.delinearize(LinearIndex(121)).unwrap(), (1, 2, 1));
    }

    #[test]
    fn out_of_range_indices() {
        let g = grid(5, 4);
        assert!(matches!(g.linearize(0, 1, 1), Err(IspError::Range(_))));
        assert!(matches!(g.linearize(6, 1, 1), Err(IspError::Range(_))));
        assert!(matches!(g.linearize(1, 1, 5), Err(IspError::Range(_))));
        assert!(matches!(g.delinearize(LinearIndex(0)), Err(IspError::Range(_))));
        assert!(matches!(g.delinearize(LinearIndex(101)), Err(IspError::Range(_))));
    }

    #[test]
    fn boundary_counts() {
        assert_eq!(SpatialGrid2D::centered(0.5, 3).unwrap().boundary_nodes().len(), 8);
        assert_eq!(SpatialGrid2D::centered(0.5, 2).unwrap().boundary_nodes().len(), 4);
        assert_eq!(SpatialGrid2D::centered(0.5, 85).unwrap().boundary_nodes().len(), 336);
        let b3 = SpatialGrid2D::centered(0.5, 3).unwrap().boundary_nodes();
        assert!(!b3.contains(&(2, 2)));
    }

    #[test]
    fn boundary_partitions_grid() {
        for n in 2..8 {
            let g = SpatialGrid2D::centered(0.5, n).unwrap();
            let bnd = g.boundary_nodes();
            let mut seen = vec![0u8; n * n];
            for &(m, k) in &bnd {
                seen[(m - 1) * n + (k - 1)] += 1;
            }
            for m0 in 0..n {
                for n0 in 0..n {
                    let expected = u8::from(g.is_boundary_0(m0, n0));
                    assert_eq!(seen[m0 * n + n0], expected, "n={n} node ({m0},{n0})");
                }
            }
        }
    }

    #[test]
    fn node_coordinates_and_time_levels() {
        let g = SpatialGrid2D::centered(0.5, 85).unwrap();
        assert_eq!(g.node(1, 1).unwrap(), (-0.5, -0.5));
        let (x, y) = g.node(85, 43).unwrap();
        assert!((x - 0.5).abs() < 1e-14 && y.abs() < 1e-14);
        let t = TimeGrid::new(1.0, 120).unwrap();
        assert_eq!(t.time(1).unwrap(), 0.0);
        assert!((t.dt() - 1.0 / 120.0).abs() < 1e-16);
        assert!((t.time(120).unwrap() - (1.0 - t.dt())).abs() < 1e-14);
        let te = TimeGrid::with_convention(1.0, 120, TimeStepConvention::Endpoint).unwrap();
        assert!((te.time(120).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normals() {
        let g = SpatialGrid2D::centered(0.5, 5).unwrap();
        assert_eq!(g.outward_normal(5, 3), Some([1.0, 0.0]));
        assert_eq!(g.outward_normal(3, 1), Some([0.0, -1.0]));
        assert_eq!(g.outward_normal(3, 3), None);
        let c = g.outward_normal(1, 1).unwrap();
        assert!((c[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }
}
