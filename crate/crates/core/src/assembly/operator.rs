//! Row blocks of the stacked quasi-reversibility system. Every block is a
//! `CsrMatrix` over the space-time unknowns `w(m, n, j)` in the grid's
//! linear order (time fastest).

use serde::{Deserialize, Serialize};

use super::htilde::HTilde;
use crate::error::{IspError, Result};
use crate::grid::SpaceTimeGrid;
use crate::model::{Excitation, Medium};
use crate::regdiff::SecondDerivatives;
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    /// `c w_tt - Δw - a w - B·∇(h̃w)/h̃ - c (h_tt/h̃) w(·, 0)` plus every
    /// coupling term produced by `w = u_tt / h̃`.
    #[default]
    Full,
    /// `w_tt - Δw - (h_tt/h̃) w(·, 0)` only. Requires the homogeneous medium.
    Simplified,
}

/// `ζ = F_tt/h̃` and `ξ = (G_tt h̃ - ∂_ν h̃ F_tt)/h̃²`, node-major over the
/// boundary nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub zeta: Vec<f64>,
    pub xi: Vec<f64>,
}

pub fn compute_boundary_data(grid: &SpaceTimeGrid, ht: &HTilde, d: &SecondDerivatives) -> Result<BoundaryData> {
    let nodes = grid.space.boundary_nodes();
    let n_t = grid.time.n_t();
    let len = nodes.len() * n_t;
    if d.f_tt.len() != len || d.g_tt.len() != len {
        return Err(IspError::Contract(format!(
            "boundary derivatives have {} / {} entries, expected {len}",
            d.f_tt.len(),
            d.g_tt.len()
        )));
    }
    let mut zeta = vec![0.0; len];
    let mut xi = vec![0.0; len];
    for (k, &(m, n)) in nodes.iter().enumerate() {
        let p = ht.at_0(m - 1, n - 1);
        let normal = grid.space.outward_normal(m, n).expect("boundary node");
        for j0 in 0..n_t {
            let t = grid.time.time_0(j0);
            let e = k * n_t + j0;
            let h = p.value(t);
            zeta[e] = d.f_tt[e] / h;
            xi[e] = (d.g_tt[e] * h - p.normal_derivative(t, normal) * d.f_tt[e]) / (h * h);
        }
    }
    Ok(BoundaryData { zeta, xi })
}

/// Interior PDE rows in `(m, n, j)` order, `2 <= m, n <= N-1`,
/// `2 <= j <= n_t - 1`.
pub fn pde_row_count(grid: &SpaceTimeGrid) -> usize {
    let n = grid.space.n();
    (n - 2) * (n - 2) * (grid.time.n_t() - 2)
}

/// The 0-based `(m0, n0, j0)` a PDE row is centred at.
pub fn pde_row_center(grid: &SpaceTimeGrid, row: usize) -> (usize, usize, usize) {
    let n = grid.space.n();
    let per_node = grid.time.n_t() - 2;
    let node = row / per_node;
    (node / (n - 2) + 1, node % (n - 2) + 1, row % per_node + 1)
}

fn check_simplified_medium(grid: &SpaceTimeGrid, medium: &dyn Medium) -> Result<()> {
    let s = &grid.space;
    for m0 in 0..s.n() {
        for n0 in 0..s.n() {
            let (x, y) = s.node_0(m0, n0);
            let b = medium.b(x, y);
            if medium.c(x, y) != 1.0
                || medium.a(x, y) != 0.0
                || b != [0.0, 0.0]
                || medium.f(x, y) != crate::model::Jet::ZERO
                || medium.g(x, y) != crate::model::Jet::ZERO
            {
                return Err(IspError::Config(format!(
                    "simplified operator needs c = 1, a = 0, B = 0, f = g = 0; node ({}, {}) differs",
                    m0 + 1,
                    n0 + 1
                )));
            }
        }
    }
    Ok(())
}

/// The transformed wave operator and its right-hand side `𝓕`.
pub fn assemble_wave_operator(
    grid: &SpaceTimeGrid,
    ht: &HTilde,
    h: &dyn Excitation,
    medium: &dyn Medium,
    mode: OperatorMode,
) -> Result<(CsrMatrix, Vec<f64>)> {
    if mode == OperatorMode::Simplified {
        check_simplified_medium(grid, medium)?;
    }
    let s = grid.space;
    let dx = s.dx();
    let dt = grid.time.dt();
    let (idt2, idx2) = (1.0 / (dt * dt), 1.0 / (dx * dx));
    let rows = pde_row_count(grid);
    let mut tb = TripletBuilder::with_capacity(rows, grid.len(), rows * if mode == OperatorMode::Full { 14 } else { 8 });
    let mut forcing = vec![0.0; rows];
    for r in 0..rows {
        let (m0, n0, j0) = pde_row_center(grid, r);
        let (x, y) = s.node_0(m0, n0);
        let t = grid.time.time_0(j0);
        let col = |a: usize, b: usize, j: usize| grid.index_0(a, b, j);
        let p = ht.at_0(m0, n0);
        let htv = p.value(t);
        let h_tt = h.h_tt(x, y, t);
        match mode {
            OperatorMode::Simplified => {
                tb.push(r, col(m0, n0, j0), -2.0 * idt2 + 4.0 * idx2);
                tb.push(r, col(m0, n0, j0 + 1), idt2);
                tb.push(r, col(m0, n0, j0 - 1), idt2);
                for (a, b) in [(m0 - 1, n0), (m0 + 1, n0), (m0, n0 - 1), (m0, n0 + 1)] {
                    tb.push(r, col(a, b, j0), -idx2);
                }
                tb.push(r, col(m0, n0, 0), -h_tt / htv);
            }
            OperatorMode::Full => {
                let c = medium.c(x, y);
                let a = medium.a(x, y);
                let bvec = medium.b(x, y);
                let q = 1.0 / htv;
                let gq = p.grad_q(t);
                // c φ_tt - Δφ - a φ - c q_tt h̃ φ + Δq h̃ φ
                let diag = -2.0 * c * idt2 + 4.0 * idx2 - a - c * p.q_tt(t) * htv + p.lap_q(t) * htv;
                tb.push(r, col(m0, n0, j0), diag);
                // c φ_tt neighbours and -2c q_t (h̃φ)_t, centred
                let qt = p.q_t(t);
                tb.push(r, col(m0, n0, j0 + 1), c * idt2 - c * qt * p.value(t + dt) / dt);
                tb.push(r, col(m0, n0, j0 - 1), c * idt2 + c * qt * p.value(t - dt) / dt);
                // -Δφ neighbours, (2∇q - q B)·∇(h̃φ), centred
                let wx = (2.0 * gq[0] - q * bvec[0]) / (2.0 * dx);
                let wy = (2.0 * gq[1] - q * bvec[1]) / (2.0 * dx);
                tb.push(r, col(m0 + 1, n0, j0), -idx2 + wx * ht.at_0(m0 + 1, n0).value(t));
                tb.push(r, col(m0 - 1, n0, j0), -idx2 - wx * ht.at_0(m0 - 1, n0).value(t));
                tb.push(r, col(m0, n0 + 1, j0), -idx2 + wy * ht.at_0(m0, n0 + 1).value(t));
                tb.push(r, col(m0, n0 - 1, j0), -idx2 - wy * ht.at_0(m0, n0 - 1).value(t));
                // Volterra term: ∫₀ᵗ φ_t = φ(t) - φ(0) folds into the φ(·, 0) column.
                tb.push(r, col(m0, n0, 0), -c * h_tt / htv);
                let f = medium.f(x, y);
                let lf = f.laplacian + a * f.value + bvec[0] * f.grad[0] + bvec[1] * f.grad[1];
                if lf != 0.0 {
                    forcing[r] = -h_tt * lf / (p.h0.value * htv);
                }
            }
        }
    }
    Ok((tb.into_csr(), forcing))
}

/// Initial-rate target `Ψ = w_t(·, 0)` at every spatial node:
/// `((Δg + a g + B·∇g) h0 - h_t(·,0) (Δf + a f + B·∇f)) / (c h0²)`.
pub fn initial_rate(grid: &SpaceTimeGrid, h: &dyn Excitation, medium: &dyn Medium) -> Vec<f64> {
    let s = grid.space;
    let mut psi = vec![0.0; s.node_count()];
    for m0 in 0..s.n() {
        for n0 in 0..s.n() {
            let (x, y) = s.node_0(m0, n0);
            let (f, g) = (medium.f(x, y), medium.g(x, y));
            let (a, b, c) = (medium.a(x, y), medium.b(x, y), medium.c(x, y));
            let lf = f.laplacian + a * f.value + b[0] * f.grad[0] + b[1] * f.grad[1];
            let lg = g.laplacian + a * g.value + b[0] * g.grad[0] + b[1] * g.grad[1];
            if lf == 0.0 && lg == 0.0 {
                continue;
            }
            let h0 = h.initial_jet(x, y).value;
            let h1 = h.h_t(x, y, 0.0);
            psi[s.offset_0(m0, n0)] = (lg * h0 - h1 * lf) / (c * h0 * h0);
        }
    }
    psi
}

/// `(w(·, t_2) - w(·, t_1))/dt` at every spatial node, row-major.
pub fn assemble_time_constraint(grid: &SpaceTimeGrid) -> CsrMatrix {
    let s = grid.space;
    let idt = 1.0 / grid.time.dt();
    let rows = s.node_count();
    let mut tb = TripletBuilder::with_capacity(rows, grid.len(), 2 * rows);
    for m0 in 0..s.n() {
        for n0 in 0..s.n() {
            let r = s.offset_0(m0, n0);
            tb.push(r, grid.index_0(m0, n0, 0), -idt);
            tb.push(r, grid.index_0(m0, n0, 1), idt);
        }
    }
    tb.into_csr()
}

/// Selection of every boundary node at every level, node-major.
pub fn assemble_dirichlet(grid: &SpaceTimeGrid) -> CsrMatrix {
    let nodes = grid.space.boundary_nodes();
    let n_t = grid.time.n_t();
    let mut tb = TripletBuilder::with_capacity(nodes.len() * n_t, grid.len(), nodes.len() * n_t);
    for (k, &(m, n)) in nodes.iter().enumerate() {
        for j0 in 0..n_t {
            tb.push(k * n_t + j0, grid.index_0(m - 1, n - 1, j0), 1.0);
        }
    }
    tb.into_csr()
}

/// One-sided outward normal differences. On an edge this is
/// `(w(boundary) - w(inner neighbour))/dx`; at a corner both axis
/// differences are combined with the bisector weights `1/√2`.
pub fn assemble_neumann(grid: &SpaceTimeGrid) -> CsrMatrix {
    let s = grid.space;
    let nodes = s.boundary_nodes();
    let n_t = grid.time.n_t();
    let idx = 1.0 / s.dx();
    let mut tb = TripletBuilder::with_capacity(nodes.len() * n_t, grid.len(), 4 * nodes.len() * n_t);
    for (k, &(m, n)) in nodes.iter().enumerate() {
        let nu = s.outward_normal(m, n).expect("boundary node");
        let (m0, n0) = (m - 1, n - 1);
        for j0 in 0..n_t {
            let r = k * n_t + j0;
            if nu[0] != 0.0 {
                let inner = if nu[0] > 0.0 { m0 - 1 } else { m0 + 1 };
                tb.push(r, grid.index_0(m0, n0, j0), nu[0].abs() * idx);
                tb.push(r, grid.index_0(inner, n0, j0), -nu[0].abs() * idx);
            }
            if nu[1] != 0.0 {
                let inner = if nu[1] > 0.0 { n0 - 1 } else { n0 + 1 };
                tb.push(r, grid.index_0(m0, n0, j0), nu[1].abs() * idx);
                tb.push(r, grid.index_0(m0, inner, j0), -nu[1].abs() * idx);
            }
        }
    }
    tb.into_csr()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    T,
}

/// Forward difference along `axis`; one row per node that has a forward
/// neighbour, in linear order.
pub fn assemble_penalty(grid: &SpaceTimeGrid, axis: Axis) -> CsrMatrix {
    let n = grid.space.n();
    let n_t = grid.time.n_t();
    let (step, rows) = match axis {
        Axis::X | Axis::Y => (grid.space.dx(), (n - 1) * n * n_t),
        Axis::T => (grid.time.dt(), n * n * (n_t - 1)),
    };
    let inv = 1.0 / step;
    let mut tb = TripletBuilder::with_capacity(rows, grid.len(), 2 * rows);
    let mut r = 0;
    for m0 in 0..n {
        for n0 in 0..n {
            for j0 in 0..n_t {
                let next = match axis {
                    Axis::X if m0 + 1 < n => grid.index_0(m0 + 1, n0, j0),
                    Axis::Y if n0 + 1 < n => grid.index_0(m0, n0 + 1, j0),
                    Axis::T if j0 + 1 < n_t => grid.index_0(m0, n0, j0 + 1),
                    _ => continue,
                };
                tb.push(r, grid.index_0(m0, n0, j0), -inv);
                tb.push(r, next, inv);
                r += 1;
            }
        }
    }
    debug_assert_eq!(r, rows);
    tb.into_csr()
}
