//! The auxiliary `h̃(x, t) = h(x, 0) exp(t k(x))`, `k = h_t(x, 0) / h(x, 0)`,
//! which matches `h` and `h_t` at `t = 0` and never vanishes.
//!
//! Everything below is closed form in the spatial jets of `h(·, 0)` and
//! `h_t(·, 0)`. With `q = 1/h̃` and `φ = ln q = -ln h0 - t k`:
//! `q_t = -k q`, `q_tt = k² q`, `∇q = q ∇φ`, `Δq = q (|∇φ|² + Δφ)`.

use crate::error::{IspError, Result};
use crate::grid::SpatialGrid2D;
use crate::model::{Excitation, Jet};

/// Jets of `h0 = h(·, 0)` and `k = h_t(·, 0)/h0` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HTildePoint {
    pub h0: Jet,
    pub k: Jet,
}

impl HTildePoint {
    pub fn new(h0: Jet, h1: Jet) -> Self {
        let inv = 1.0 / h0.value;
        let k_value = h1.value * inv;
        let k_grad = [
            h1.grad[0] * inv - h1.value * h0.grad[0] * inv * inv,
            h1.grad[1] * inv - h1.value * h0.grad[1] * inv * inv,
        ];
        let g01 = h1.grad[0] * h0.grad[0] + h1.grad[1] * h0.grad[1];
        let g00 = h0.grad[0] * h0.grad[0] + h0.grad[1] * h0.grad[1];
        let k_lap = h1.laplacian * inv - 2.0 * g01 * inv * inv - h1.value * h0.laplacian * inv * inv
            + 2.0 * h1.value * g00 * inv * inv * inv;
        Self { h0, k: Jet { value: k_value, grad: k_grad, laplacian: k_lap } }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.h0.value * (t * self.k.value).exp()
    }

    #[inline]
    pub fn q(&self, t: f64) -> f64 {
        1.0 / self.value(t)
    }

    #[inline]
    pub fn q_t(&self, t: f64) -> f64 {
        -self.k.value * self.q(t)
    }

    #[inline]
    pub fn q_tt(&self, t: f64) -> f64 {
        self.k.value * self.k.value * self.q(t)
    }

    fn grad_phi(&self, t: f64) -> [f64; 2] {
        let inv = 1.0 / self.h0.value;
        [-self.h0.grad[0] * inv - t * self.k.grad[0], -self.h0.grad[1] * inv - t * self.k.grad[1]]
    }

    pub fn grad_q(&self, t: f64) -> [f64; 2] {
        let q = self.q(t);
        let g = self.grad_phi(t);
        [q * g[0], q * g[1]]
    }

    pub fn lap_q(&self, t: f64) -> f64 {
        let inv = 1.0 / self.h0.value;
        let g = self.grad_phi(t);
        let g00 = self.h0.grad[0] * self.h0.grad[0] + self.h0.grad[1] * self.h0.grad[1];
        let lap_phi = -self.h0.laplacian * inv + g00 * inv * inv - t * self.k.laplacian;
        self.q(t) * (g[0] * g[0] + g[1] * g[1] + lap_phi)
    }

    /// `∇h̃ = e^{tk} (∇h0 + t h0 ∇k)`.
    pub fn grad(&self, t: f64) -> [f64; 2] {
        let e = (t * self.k.value).exp();
        [
            e * (self.h0.grad[0] + t * self.h0.value * self.k.grad[0]),
            e * (self.h0.grad[1] + t * self.h0.value * self.k.grad[1]),
        ]
    }

    pub fn normal_derivative(&self, t: f64, normal: [f64; 2]) -> f64 {
        let g = self.grad(t);
        g[0] * normal[0] + g[1] * normal[1]
    }
}

/// `h̃` at every node of a spatial grid, row-major like the grid.
#[derive(Clone, Debug)]
pub struct HTilde {
    grid: SpatialGrid2D,
    points: Vec<HTildePoint>,
}

impl HTilde {
    pub fn new(h: &dyn Excitation, grid: &SpatialGrid2D) -> Result<Self> {
        let n = grid.n();
        let mut points = Vec::with_capacity(grid.node_count());
        for m0 in 0..n {
            for n0 in 0..n {
                let (x, y) = grid.node_0(m0, n0);
                let h0 = h.initial_jet(x, y);
                if !(h0.value.abs() > 0.0) || !h0.value.is_finite() {
                    return Err(IspError::Model(format!(
                        "h(x, 0) = {} at node ({}, {}) = ({x}, {y}); the auxiliary function needs h(x, 0) != 0",
                        h0.value,
                        m0 + 1,
                        n0 + 1
                    )));
                }
                points.push(HTildePoint::new(h0, h.initial_rate_jet(x, y)));
            }
        }
        Ok(Self { grid: *grid, points })
    }

    pub fn grid(&self) -> &SpatialGrid2D {
        &self.grid
    }

    #[inline]
    pub fn at_0(&self, m0: usize, n0: usize) -> &HTildePoint {
        &self.points[self.grid.offset_0(m0, n0)]
    }

    /// Smallest `|h̃|` over the nodes and the given times.
    pub fn min_abs(&self, times: impl Iterator<Item = f64> + Clone) -> f64 {
        self.points
            .iter()
            .flat_map(|p| times.clone().map(move |t| p.value(t).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}
