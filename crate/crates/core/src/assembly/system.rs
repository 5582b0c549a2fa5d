//! The stacked system `C w = b` with `C = [D_t; D; N; L]` and the
//! regularised normal equations
//! `(CᵀC + ε₁ I + ε₂ (D_xᵀD_x + D_yᵀD_y + D_tᵀD_t)) w = Cᵀ b`.
//!
//! `C` and the normal matrix depend only on the grid, the model and the
//! configuration; measured data enters through `b` alone.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::htilde::HTilde;
use super::operator::{
    assemble_dirichlet, assemble_neumann, assemble_penalty, assemble_time_constraint, assemble_wave_operator,
    initial_rate, pde_row_center, Axis, BoundaryData, OperatorMode,
};
use crate::error::{IspError, Result};
use crate::grid::SpaceTimeGrid;
use crate::model::{Excitation, Medium};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Right-hand side of the normal equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalRhs {
    /// `Cᵀ b`, the least-squares normal equations.
    #[default]
    Transpose,
    /// `b` laid directly on the unknowns: boundary data at boundary nodes,
    /// `𝓕` where each PDE row's centre is. Kept for comparison only.
    Bare,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblyConfig {
    pub mode: OperatorMode,
    pub eps1: f64,
    pub eps2: f64,
    pub rhs: NormalRhs,
    /// Multiply PDE rows (and their data) by `dt²`.
    pub scale_pde_rows: bool,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self { mode: OperatorMode::Full, eps1: 3e-3, eps2: 1.5e-4, rhs: NormalRhs::Transpose, scale_pde_rows: false }
    }
}

impl AssemblyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0) || !self.eps1.is_finite() {
            return Err(IspError::Config(format!("eps1 must be positive, got {}", self.eps1)));
        }
        if !(self.eps2 >= 0.0) || !self.eps2.is_finite() {
            return Err(IspError::Config(format!("eps2 must be non-negative, got {}", self.eps2)));
        }
        Ok(())
    }
}

/// Row ranges of the blocks of `C`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowBlocks {
    pub time: Range<usize>,
    pub dirichlet: Range<usize>,
    pub neumann: Range<usize>,
    pub pde: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct StackedSystem {
    pub c: CsrMatrix,
    pub b: Vec<f64>,
    pub blocks: RowBlocks,
}

#[derive(Clone, Debug)]
pub struct NormalSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub eps1: f64,
    pub eps2: f64,
}

/// `M = CᵀC + ε₁ I + ε₂ Σ DᵀD` and `Cᵀ b`.
pub fn assemble_normal_system(c: &CsrMatrix, b: &[f64], penalties: &[&CsrMatrix], eps1: f64, eps2: f64) -> Result<NormalSystem> {
    if b.len() != c.nrows() {
        return Err(IspError::Assembly(format!("rhs has {} entries, C has {} rows", b.len(), c.nrows())));
    }
    let matrix = normal_matrix(c, penalties, eps1, eps2)?;
    Ok(NormalSystem { matrix, rhs: c.mul_transpose_vec(b), eps1, eps2 })
}

pub fn normal_matrix(c: &CsrMatrix, penalties: &[&CsrMatrix], eps1: f64, eps2: f64) -> Result<CsrMatrix> {
    let n = c.ncols();
    let mut m = c.gram()?.add_scaled(&CsrMatrix::identity(n, 1.0), eps1)?;
    if eps2 != 0.0 {
        for d in penalties {
            if d.ncols() != n {
                return Err(IspError::Assembly(format!("penalty has {} columns, expected {n}", d.ncols())));
            }
            m = m.add_scaled(&d.gram()?, eps2)?;
        }
    }
    Ok(m)
}

/// Data-independent part of the quasi-reversibility problem on one grid.
#[derive(Clone, Debug)]
pub struct QrOperator {
    grid: SpaceTimeGrid,
    cfg: AssemblyConfig,
    ht: HTilde,
    c: CsrMatrix,
    blocks: RowBlocks,
    pde_rhs: Vec<f64>,
    psi: Vec<f64>,
}

impl QrOperator {
    pub fn assemble(grid: &SpaceTimeGrid, h: &dyn Excitation, medium: &dyn Medium, cfg: AssemblyConfig) -> Result<Self> {
        cfg.validate()?;
        if grid.space.n() < 3 {
            return Err(IspError::Config("the inverse grid needs at least 3 nodes per side".into()));
        }
        let ht = HTilde::new(h, &grid.space)?;
        let min = ht.min_abs((0..grid.time.n_t()).map(|j| grid.time.time_0(j)));
        if !(min > 0.0) || !min.is_finite() {
            return Err(IspError::Model(format!("auxiliary function vanishes or overflows on the grid (min |h̃| = {min:e})")));
        }
        let (mut pde, mut pde_rhs) = assemble_wave_operator(grid, &ht, h, medium, cfg.mode)?;
        if cfg.scale_pde_rows {
            let dt2 = grid.time.dt().powi(2);
            pde.scale(dt2);
            pde_rhs.iter_mut().for_each(|v| *v *= dt2);
        }
        let time = assemble_time_constraint(grid);
        let dirichlet = assemble_dirichlet(grid);
        let neumann = assemble_neumann(grid);
        let mut start = 0;
        let mut next = |rows: usize| {
            let r = start..start + rows;
            start += rows;
            r
        };
        let blocks = RowBlocks {
            time: next(time.nrows()),
            dirichlet: next(dirichlet.nrows()),
            neumann: next(neumann.nrows()),
            pde: next(pde.nrows()),
        };
        let c = CsrMatrix::vstack(&[&time, &dirichlet, &neumann, &pde])?;
        if !c.all_finite() {
            return Err(IspError::Assembly("stacked matrix has non-finite entries".into()));
        }
        let psi = initial_rate(grid, h, medium);
        Ok(Self { grid: *grid, cfg, ht, c, blocks, pde_rhs, psi })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn config(&self) -> &AssemblyConfig {
        &self.cfg
    }

    pub fn htilde(&self) -> &HTilde {
        &self.ht
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.c
    }

    pub fn blocks(&self) -> &RowBlocks {
        &self.blocks
    }

    /// `𝓕` per PDE row (already row-scaled if configured).
    pub fn pde_rhs(&self) -> &[f64] {
        &self.pde_rhs
    }

    pub fn initial_rate(&self) -> &[f64] {
        &self.psi
    }

    pub fn penalties(&self) -> [CsrMatrix; 3] {
        [assemble_penalty(&self.grid, Axis::X), assemble_penalty(&self.grid, Axis::Y), assemble_penalty(&self.grid, Axis::T)]
    }

    pub fn stacked_rhs(&self, data: &BoundaryData) -> Result<Vec<f64>> {
        let nb = self.blocks.dirichlet.len();
        if data.zeta.len() != nb || data.xi.len() != nb {
            return Err(IspError::Contract(format!(
                "boundary data has {} / {} entries, expected {nb}",
                data.zeta.len(),
                data.xi.len()
            )));
        }
        let mut b = Vec::with_capacity(self.c.nrows());
        b.extend_from_slice(&self.psi);
        b.extend_from_slice(&data.zeta);
        b.extend_from_slice(&data.xi);
        b.extend_from_slice(&self.pde_rhs);
        Ok(b)
    }

    pub fn stacked(&self, data: &BoundaryData) -> Result<StackedSystem> {
        Ok(StackedSystem { c: self.c.clone(), b: self.stacked_rhs(data)?, blocks: self.blocks.clone() })
    }

    pub fn normal_matrix(&self) -> Result<CsrMatrix> {
        let [dx, dy, dt] = self.penalties();
        normal_matrix(&self.c, &[&dx, &dy, &dt], self.cfg.eps1, self.cfg.eps2)
    }

    pub fn normal_rhs(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.c.nrows() {
            return Err(IspError::Assembly(format!("rhs has {} entries, C has {} rows", b.len(), self.c.nrows())));
        }
        Ok(match self.cfg.rhs {
            NormalRhs::Transpose => self.c.mul_transpose_vec(b),
            NormalRhs::Bare => {
                let mut out = vec![0.0; self.grid.len()];
                let n_t = self.grid.time.n_t();
                for (k, &(m, n)) in self.grid.space.boundary_nodes().iter().enumerate() {
                    for j0 in 0..n_t {
                        out[self.grid.index_0(m - 1, n - 1, j0)] = b[self.blocks.dirichlet.start + k * n_t + j0];
                    }
                }
                for r in 0..self.blocks.pde.len() {
                    let (m0, n0, j0) = pde_row_center(&self.grid, r);
                    out[self.grid.index_0(m0, n0, j0)] = b[self.blocks.pde.start + r];
                }
                out
            }
        })
    }

    /// Square matrix `K` whose row for unknown `(m, n, j+1)`, interior and
    /// `j >= 2`, is the PDE row centred at `(m, n, j)`; every other row is
    /// `scale` times the identity row. `K` is lower triangular when the
    /// unknowns are ordered time-major, so `K⁻¹K⁻ᵀ` is cheap to apply and
    /// approximates the inverse of the dominant `LᵀL` part.
    pub fn marching_matrix(&self, scale: f64) -> CsrMatrix {
        let n = self.grid.len();
        let mut tb = TripletBuilder::with_capacity(n, n, 10 * n);
        let mut from_pde = vec![usize::MAX; n];
        for r in 0..self.blocks.pde.len() {
            let (m0, n0, j0) = pde_row_center(&self.grid, r);
            from_pde[self.grid.index_0(m0, n0, j0 + 1)] = self.blocks.pde.start + r;
        }
        for (i, &src) in from_pde.iter().enumerate() {
            if src == usize::MAX {
                tb.push(i, i, scale);
            } else {
                let (cols, vals) = self.c.row(src);
                for (&c, &v) in cols.iter().zip(vals) {
                    tb.push(i, c, v);
                }
            }
        }
        tb.into_csr()
    }
}
