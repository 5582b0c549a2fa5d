//! Solvers for the normal equations: a sparse Cholesky factorisation,
//! preconditioned conjugate gradients, and a dense Cholesky oracle for small
//! systems.

use std::time::Instant;

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};

use crate::assembly::QrOperator;
use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{IspError, Result};
use crate::sparse::{dot, norm2, CsrMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    None,
    Jacobi,
    /// Two triangular sweeps with the time-marching matrix of the PDE rows.
    #[default]
    Marching,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Cholesky up to `direct_limit` unknowns, CG above.
    #[default]
    Auto,
    Cholesky,
    Cg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: SolveMethod,
    pub direct_limit: usize,
    pub tol_rel: f64,
    /// `None` means `20 √n`.
    pub max_iters: Option<usize>,
    pub preconditioner: PreconditionerKind,
    /// Diagonal value of the non-PDE rows of the marching matrix.
    pub marching_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolveMethod::Auto,
            direct_limit: 300_000,
            tol_rel: 1e-8, max_iters: None,
            preconditioner: PreconditionerKind::Marching,
            marching_scale: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return Err(IspError::Config(format!("tol_rel must lie in (0, 1), got {}", self.tol_rel)));
        }
        if self.max_iters == Some(0) {
            return Err(IspError::Config("max_iters must be at least 1".into()));
        }
        if !(self.marching_scale > 0.0) || !self.marching_scale.is_finite() {
            return Err(IspError::Config(format!("marching_scale must be positive, got {}", self.marching_scale)));
        }
        Ok(())
    }

    /// Method actually used for a system with `n` unknowns.
    pub fn resolve(&self, n: usize) -> SolveMethod {
        match self.method {
            SolveMethod::Auto if n <= self.direct_limit => SolveMethod::Cholesky,
            SolveMethod::Auto => SolveMethod::Cg,
            m => m,
        }
    }

    pub fn iteration_limit(&self, n: usize) -> usize {
        self.max_iters.unwrap_or_else(|| ((20.0 * (n as f64).sqrt()).ceil() as usize).max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: SolveMethod,
    /// Zero for direct solves.
    pub iterations: usize,
    /// `‖M x - rhs‖ / ‖rhs‖`, recomputed from the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
    pub matrix_nnz: usize,
    pub unknowns: usize,
    pub preconditioner: PreconditionerKind,
    #[serde(skip)]
    pub wall_time_s: f64,
}

pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(m: &CsrMatrix) -> Result<Self> {
        let d = m.diagonal();
        if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(IspError::Contract(format!("non-positive diagonal entry {} at row {i}", d[i])));
        }
        Ok(Self { inv_diag: d.into_iter().map(|v| 1.0 / v).collect() })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// `z = K⁻¹ K⁻ᵀ r` for a matrix `K` that is lower triangular under a
/// permutation of the unknowns.
pub struct TriangularPair {
    /// `perm[p]` is the original index at position `p`.
    perm: Vec<usize>,
    /// Strictly lower part, permuted.
    lower: CsrMatrix,
    diag: Vec<f64>,
}

impl TriangularPair {
    pub fn new(k: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n || perm.len() != n {
            return Err(IspError::Contract("triangular preconditioner needs a square matrix and a full permutation".into()));
        }
        let mut pos = vec![usize::MAX; n];
        for (p, &i) in perm.iter().enumerate() {
            if i >= n || pos[i] != usize::MAX {
                return Err(IspError::Contract("invalid permutation".into()));
            }
            pos[i] = p;
        }
        let mut diag = vec![0.0; n];
        let mut tb = TripletBuilder::with_capacity(n, n, k.nnz());
        for i in 0..n {
            let (cols, vals) = k.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let (pi, pc) = (pos[i], pos[c]);
                if pc == pi {
                    diag[pi] += v;
                } else if pc < pi {
                    tb.push(pi, pc, v);
                } else if v != 0.0 {
                    return Err(IspError::Contract(format!("matrix is not triangular under the permutation (row {i}, col {c})")));
                }
            }
        }
        if let Some(p) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(IspError::Numerical(format!("triangular preconditioner has zero pivot at unknown {}", perm[p])));
        }
        Ok(Self { perm, lower: tb.into_csr(), diag })
    }

    pub fn for_operator(op: &QrOperator, scale: f64) -> Result<Self> {
        let grid = op.grid();
        let (nodes, n_t) = (grid.space.node_count(), grid.time.n_t());
        let perm = (0..n_t).flat_map(|j| (0..nodes).map(move |s| s * n_t + j)).collect();
        Self::new(&op.marching_matrix(scale), perm)
    }
}

impl Preconditioner for TriangularPair {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.perm.len();
        let mut w: Vec<f64> = self.perm.iter().map(|&i| r[i]).collect();
        // Kᵀ y = r, back substitution with column scatters.
        for p in (0..n).rev() {
            let y = w[p] / self.diag[p];
            w[p] = y;
            let (cols, vals) = self.lower.row(p);
            for (&c, &v) in cols.iter().zip(vals) {
                w[c] -= v * y;
            }
        }
        // K z = y, forward substitution.
        for p in 0..n {
            let (cols, vals) = self.lower.row(p);
            let mut s = w[p];
            for (&c, &v) in cols.iter().zip(vals) {
                s -= v * w[c];
            }
            w[p] = s / self.diag[p];
        }
        for (p, &i) in self.perm.iter().enumerate() {
            z[i] = w[p];
        }
    }
}

/// Preconditioner for the normal matrix of `op`.
pub fn build_preconditioner(cfg: &SolverConfig, m: &CsrMatrix, op: Option<&QrOperator>) -> Result<Box<dyn Preconditioner>> {
    Ok(match cfg.preconditioner {
        PreconditionerKind::None => Box::new(Identity),
        PreconditionerKind::Jacobi => Box::new(Jacobi::new(m)?),
        PreconditionerKind::Marching => {
            let op = op.ok_or_else(|| IspError::Config("the marching preconditioner needs the assembled operator".into()))?;
            Box::new(TriangularPair::for_operator(op, cfg.marching_scale)?)
        }
    })
}

/// Exact symmetry check required before CG.
pub fn check_symmetric(m: &CsrMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(IspError::Contract(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    if !m.is_symmetric() {
        return Err(IspError::Contract(format!("matrix is not symmetric (max |M - Mᵀ| = {:e})", m.asymmetry())));
    }
    Ok(())
}

/// Preconditioned CG from a zero initial guess. The caller is responsible
/// for the symmetry contract (see `check_symmetric`).
pub fn cg_solve_with(m: &CsrMatrix, rhs: &[f64], cfg: &SolverConfig, precond: &dyn Preconditioner) -> Result<(Vec<f64>, SolveStats)> {
    cfg.validate()?;
    let n = m.nrows();
    if rhs.len() != n || m.ncols() != n {
        return Err(IspError::Contract(format!("system is {}x{} with a rhs of length {}", m.nrows(), m.ncols(), rhs.len())));
    }
    let start = Instant::now();
    let limit = cfg.iteration_limit(n);
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    let mut stats = SolveStats {
        method: SolveMethod::Cg,
        iterations: 0,
        relative_residual: 0.0,
        converged: true,
        matrix_nnz: m.nnz(),
        unknowns: n,
        preconditioner: cfg.preconditioner,
        wall_time_s: 0.0,
    };
    if bnorm == 0.0 {
        return Ok((x, stats));
    }
    let target = cfg.tol_rel * bnorm;
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut restarts = 0;
    'outer: loop {
        precond.apply(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        loop {
            if norm2(&r) <= target {
                break;
            }
            if stats.iterations >= limit {
                break 'outer;
            }
            m.mul_vec_into(&p, &mut q);
            let pq = dot(&p, &q);
            let alpha = rz / pq;
            if !alpha.is_finite() {
                return Err(IspError::Numerical(format!("CG breakdown at iteration {} (pᵀMp = {pq:e})", stats.iterations)));
            }
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            stats.iterations += 1;
            precond.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            if !beta.is_finite() {
                return Err(IspError::Numerical(format!("CG breakdown at iteration {}", stats.iterations)));
            }
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        // Guard against drift of the recursive residual.
        let true_r = residual(m, &x, rhs);
        if norm2(&true_r) <= target || restarts >= 3 {
            break;
        }
        restarts += 1;
        r = true_r;
        if !r.iter().all(|v| v.is_finite()) {
            break 'outer;
        }
        continue 'outer;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(IspError::Numerical(format!("CG produced non-finite iterates after {} iterations", stats.iterations)));
    }
    stats.relative_residual = norm2(&residual(m, &x, rhs)) / bnorm;
    stats.converged = stats.relative_residual <= cfg.tol_rel;
    stats.wall_time_s = start.elapsed().as_secs_f64();
    Ok((x, stats))
}

/// CG with a preconditioner that needs only the matrix (none or Jacobi).
pub fn cg_solve(m: &CsrMatrix, rhs: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    check_symmetric(m)?;
    let pc = build_preconditioner(cfg, m, None)?;
    cg_solve_with(m, rhs, cfg, pc.as_ref())
}

/// Sparse Cholesky factor of a symmetric positive definite matrix, built once
/// and reused for any number of right-hand sides.
pub struct SparseCholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        check_symmetric(m)?;
        let n = m.nrows();
        let lower: Vec<Triplet<usize, usize, f64>> =
            m.triplets().filter(|&(r, c, _)| r >= c).map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &lower)
            .map_err(|e| IspError::Numerical(format!("sparse Cholesky input: {e:?}")))?;
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| IspError::Numerical(format!("sparse Cholesky failed, matrix not positive definite: {e:?}")))?;
        Ok(Self { llt, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(IspError::Contract(format!("factor has order {}, rhs length {}", self.n, rhs.len())));
        }
        let b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        let x = self.llt.solve(&b);
        Ok((0..self.n).map(|i| x[i]).collect())
    }
}

/// Solves with an existing factor; `m` is only used for the residual.
pub fn direct_solve_with(m: &CsrMatrix, rhs: &[f64], factor: &SparseCholesky, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let x = factor.solve(rhs)?;
    let bnorm = norm2(rhs);
    let rel = if bnorm == 0.0 { norm2(&x) } else { norm2(&residual(m, &x, rhs)) / bnorm };
    if !rel.is_finite() {
        return Err(IspError::Numerical("sparse Cholesky produced a non-finite solution".into()));
    }
    let stats = SolveStats {
        method: SolveMethod::Cholesky,
        iterations: 0,
        relative_residual: rel,
        converged: rel <= cfg.tol_rel,
        matrix_nnz: m.nnz(),
        unknowns: m.nrows(),
        preconditioner: PreconditionerKind::None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((x, stats))
}

pub fn direct_solve(m: &CsrMatrix, rhs: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    let factor = SparseCholesky::factor(m)?;
    direct_solve_with(m, rhs, &factor, cfg)
}

fn residual(m: &CsrMatrix, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut r = m.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    r
}

pub fn dense_solve(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.n() {
        return Err(IspError::Contract(format!("matrix has order {}, rhs length {}", m.n(), rhs.len())));
    }
    Ok(Cholesky::factor(m)?.solve(rhs))
}

/// Dense Cholesky on a sparse matrix; for small oracle systems only.
pub fn dense_solve_sparse(m: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.nrows();
    let dense = DenseMatrix::from_row_major(n, m.to_dense().concat())?;
    dense_solve(&dense, rhs)
}
