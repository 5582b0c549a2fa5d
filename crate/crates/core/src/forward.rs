//! Synthetic measurements: explicit leapfrog solve of
//! `u_tt = Δu + p(x) h(x, t)` on a large auxiliary square, sampling of the
//! lateral Cauchy data `F = u`, `G = ∂_ν u` on the boundary of the inverse
//! grid, and multiplicative noise.
//!
//! The auxiliary square is held at zero on its outer boundary. For a source
//! supported in the unit square and `T = 1` the wave never reaches it.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};
use crate::grid::{SpaceTimeGrid, SpatialGrid2D, TimeGrid};
use crate::model::Excitation;
use crate::source::Source;

/// CFL ratio above which the solver logs a warning.
pub const CFL_WARN_RATIO: f64 = 0.95;

/// ChaCha20 stream ids used for the two noise draws.
pub const NOISE_STREAM_F: u64 = 1;
pub const NOISE_STREAM_G: u64 = 2;

/// How the second time level is initialised from `u(x, 0) = u_t(x, 0) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartScheme {
    /// `u(dt) = dt^2/2 p h(x,0) + dt^3/6 p h_t(x,0)`; keeps the scheme
    /// second-order accurate.
    #[default]
    Taylor,
    /// `u(dt) = 0`; only first-order accurate in time.
    Zero,
}

/// A scalar field on a spatial grid, row-major with x outer.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    pub grid: SpatialGrid2D,
    pub values: Vec<f64>,
}

impl WaveField {
    pub fn zeros(grid: SpatialGrid2D) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    #[inline]
    pub fn at_0(&self, m0: usize, n0: usize) -> f64 {
        self.values[self.grid.offset_0(m0, n0)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// All time levels of a forward solve.
#[derive(Clone, Debug)]
pub struct WaveHistory {
    pub grid: SpaceTimeGrid,
    pub levels: Vec<WaveField>,
}

pub fn check_cfl(dx: f64, dt: f64) -> Result<f64> {
    let ratio = dt / (dx / std::f64::consts::SQRT_2);
    if ratio > 1.0 {
        return Err(IspError::Config(format!(
            "CFL violated: dt = {dt:.6e} exceeds dx/sqrt(2) = {:.6e} (dx = {dx:.6e})",
            dx / std::f64::consts::SQRT_2
        )));
    }
    if ratio > CFL_WARN_RATIO {
        log::warn!("CFL ratio {ratio:.3} is close to the stability limit (dt = {dt:.4e}, dx = {dx:.4e})");
    }
    Ok(ratio)
}

/// Runs the leapfrog scheme and hands every level, in order, to `visit`.
pub fn forward_solve_with<F>(
    source: &Source,
    h: &dyn Excitation,
    grid: &SpaceTimeGrid,
    start: StartScheme,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &WaveField) -> Result<()>,
{
    let space = grid.space;
    let dx = space.dx();
    let dt = grid.time.dt();
    check_cfl(dx, dt)?;
    let n = space.n();
    let p = source.sample(&space);
    let interior = |m0: usize, n0: usize| !space.is_boundary_0(m0, n0);

    let mut prev = WaveField::zeros(space);
    visit(0, &prev)?;
    let mut cur = WaveField::zeros(space);
    if start == StartScheme::Taylor {
        for m0 in 0..n {
            for n0 in 0..n {
                let k = space.offset_0(m0, n0);
                if interior(m0, n0) && p[k] != 0.0 {
                    let (x, y) = space.node_0(m0, n0);
                    cur.values[k] = p[k] * (0.5 * dt * dt * h.h(x, y, 0.0) + dt.powi(3) / 6.0 * h.h_t(x, y, 0.0));
                }
            }
        }
    }
    visit(1, &cur)?;

    let inv_dx2 = 1.0 / (dx * dx);
    let dt2 = dt * dt;
    let mut next = WaveField::zeros(space);
    for j0 in 1..grid.time.n_t() - 1 {
        let t = grid.time.time_0(j0);
        {
            let (u, um) = (&cur.values, &prev.values);
            next.values.par_chunks_mut(n).enumerate().for_each(|(m0, row)| {
                if m0 == 0 || m0 + 1 == n {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                row[0] = 0.0;
                row[n - 1] = 0.0;
                let x = space.x_0(m0);
                for n0 in 1..n - 1 {
                    let k = m0 * n + n0;
                    let lap = (u[k + n] + u[k - n] + u[k + 1] + u[k - 1] - 4.0 * u[k]) * inv_dx2;
                    let forcing = if p[k] != 0.0 { p[k] * h.h(x, space.y_0(n0), t) } else { 0.0 };
                    row[n0] = 2.0 * u[k] - um[k] + dt2 * (lap + forcing);
                }
            });
        }
        if !next.values.iter().all(|v| v.is_finite()) {
            return Err(IspError::Numerical(format!("forward solve produced non-finite values at level {}", j0 + 2)));
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        visit(j0 + 1, &cur)?;
    }
    Ok(())
}

/// Forward solve keeping every level.
pub fn forward_solve(source: &Source, h: &dyn Excitation, grid: &SpaceTimeGrid, start: StartScheme) -> Result<WaveHistory> {
    let mut levels = Vec::with_capacity(grid.time.n_t());
    forward_solve_with(source, h, grid, start, |_, u| {
        levels.push(u.clone());
        Ok(())
    })?;
    Ok(WaveHistory { grid: *grid, levels })
}

/// Discrete `u_tt` on one level: `Δ_h u + p h(t)` in the interior, which is
/// exactly the second difference the leapfrog scheme advances with.
pub fn discrete_u_tt(u: &WaveField, p: &[f64], h: &dyn Excitation, t: f64) -> WaveField {
    let space = u.grid;
    let n = space.n();
    let inv_dx2 = 1.0 / (space.dx() * space.dx());
    let mut out = WaveField::zeros(space);
    for m0 in 1..n - 1 {
        for n0 in 1..n - 1 {
            let k = space.offset_0(m0, n0);
            let uv = &u.values;
            let lap = (uv[k + n] + uv[k - n] + uv[k + 1] + uv[k - 1] - 4.0 * uv[k]) * inv_dx2;
            let (x, y) = space.node_0(m0, n0);
            out.values[k] = lap + p[k] * h.h(x, y, t);
        }
    }
    out
}

/// Finite-difference stencil used for the normal derivative on the fine grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalStencil {
    /// Second-order one-sided difference reaching into the domain.
    #[default]
    OneSided,
    Centered,
}

/// Boundary traces on the inverse grid, node-major: entry `k * n_t + j0`
/// belongs to boundary node `k` (0-based, in `boundary_nodes` order) and
/// level `j0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyRecord {
    pub grid: SpaceTimeGrid,
    pub nodes: Vec<(usize, usize)>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub delta: f64,
    pub seed: Option<u64>,
}

impl CauchyRecord {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        let nodes = grid.space.boundary_nodes();
        let len = nodes.len() * grid.time.n_t();
        Self { grid, nodes, f: vec![0.0; len], g: vec![0.0; len], delta: 0.0, seed: None }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn trace_f(&self, k: usize) -> &[f64] {
        let n_t = self.grid.time.n_t();
        &self.f[k * n_t..(k + 1) * n_t]
    }

    pub fn trace_g(&self, k: usize) -> &[f64] {
        let n_t = self.grid.time.n_t();
        &self.g[k * n_t..(k + 1) * n_t]
    }

    fn check_shape(&self) -> Result<()> {
        let len = self.grid.space.boundary_nodes().len() * self.grid.time.n_t();
        if self.f.len() != len || self.g.len() != len || self.nodes.len() * self.grid.time.n_t() != len {
            return Err(IspError::Contract(format!(
                "Cauchy record shape mismatch: expected {len} entries, got F {} / G {}",
                self.f.len(),
                self.g.len()
            )));
        }
        Ok(())
    }

    /// Writes the record as commented header lines followed by
    /// `node,j,F,G` rows (1-based node id in boundary order, 1-based level).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.grid.space;
        let t = &self.grid.time;
        writeln!(w, "# wave-isp cauchy record v1")?;
        writeln!(w, "# n = {}", s.n())?;
        writeln!(w, "# x_min = {}", s.x_min())?;
        writeln!(w, "# x_max = {}", s.x_max())?;
        writeln!(w, "# y_min = {}", s.y_min())?;
        writeln!(w, "# y_max = {}", s.y_max())?;
        writeln!(w, "# t_final = {}", t.t_final())?;
        writeln!(w, "# n_t = {}", t.n_t())?;
        writeln!(w, "# dt = {}", t.dt())?;
        writeln!(w, "# delta = {}", self.delta)?;
        match self.seed {
            Some(seed) => writeln!(w, "# seed = {seed}")?,
            None => writeln!(w, "# seed = none")?,
        }
        writeln!(w, "node,j,F,G")?;
        let n_t = t.n_t();
        let mut line = String::new();
        for k in 0..self.nodes.len() {
            for j0 in 0..n_t {
                line.clear();
                let e = k * n_t + j0;
                let _ = writeln!(line, "{},{},{},{}", k + 1, j0 + 1, self.f[e], self.g[e]);
                w.write_all(line.as_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut rows = Vec::new();
        let mut saw_columns = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !saw_columns {
                if line != "node,j,F,G" {
                    return Err(IspError::Parse(format!("line {}: expected column header node,j,F,G", lineno + 1)));
                }
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(IspError::Parse(format!("line {}: expected 4 fields", lineno + 1)));
            }
            let bad = |what: &str| IspError::Parse(format!("line {}: bad {what}", lineno + 1));
            let node: usize = fields[0].parse().map_err(|_| bad("node id"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("time level"))?;
            let f: f64 = fields[2].parse().map_err(|_| bad("F value"))?;
            let g: f64 = fields[3].parse().map_err(|_| bad("G value"))?;
            rows.push((node, j, f, g));
        }
        let get = |k: &str| -> Result<&String> {
            header.get(k).ok_or_else(|| IspError::Parse(format!("missing header field {k}")))
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| IspError::Parse(format!("bad header field {k}"))) };
        let n: usize = get("n")?.parse().map_err(|_| IspError::Parse("bad header field n".into()))?;
        let n_t: usize = get("n_t")?.parse().map_err(|_| IspError::Parse("bad header field n_t".into()))?;
        let space = SpatialGrid2D::new(num("x_min")?, num("x_max")?, num("y_min")?, num("y_max")?, n)?;
        let t_final = num("t_final")?;
        let dt = num("dt")?;
        let convention = if (dt - t_final / n_t as f64).abs() <= 1e-12 * dt {
            crate::grid::TimeStepConvention::PerStep
        } else {
            crate::grid::TimeStepConvention::Endpoint
        };
        let time = TimeGrid::with_convention(t_final, n_t, convention)?;
        let mut rec = CauchyRecord::zeros(SpaceTimeGrid::new(space, time));
        rec.delta = num("delta")?;
        rec.seed = match get("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| IspError::Parse("bad header field seed".into()))?),
        };
        if rows.len() != rec.f.len() {
            return Err(IspError::Parse(format!("expected {} data rows, found {}", rec.f.len(), rows.len())));
        }
        let nodes = rec.nodes.len();
        for (node, j, f, g) in rows {
            if node < 1 || node > nodes || j < 1 || j > n_t {
                return Err(IspError::Parse(format!("row ({node}, {j}) outside the record")));
            }
            let e = (node - 1) * n_t + (j - 1);
            rec.f[e] = f;
            rec.g[e] = g;
        }
        Ok(rec)
    }
}

#[derive(Clone, Copy, Debug)]
struct Probe {
    /// Lower-left fine-grid cell and bilinear weights.
    cell: (usize, usize),
    weights: [f64; 4],
    normal: [f64; 2],
}

/// Precomputed sampling of fine-grid levels at inverse-grid boundary nodes.
#[derive(Clone, Debug)]
pub struct CauchySampler {
    fine: SpatialGrid2D,
    probes: Vec<Probe>,
    stencil: NormalStencil,
}

impl CauchySampler {
    pub fn new(fine: &SpatialGrid2D, inverse: &SpatialGrid2D, stencil: NormalStencil) -> Result<Self> {
        let n = fine.n();
        let dx = fine.dx();
        // Derivative stencils reach two nodes beyond the interpolation cell.
        let margin = 3.0 * dx;
        if inverse.x_min() < fine.x_min() + margin
            || inverse.x_max() > fine.x_max() - margin
            || inverse.y_min() < fine.y_min() + margin
            || inverse.y_max() > fine.y_max() - margin
        {
            return Err(IspError::Config(format!(
                "inverse grid [{}, {}]^2 is not contained in the fine grid [{}, {}]^2 with a 3-node margin",
                inverse.x_min(),
                inverse.x_max(),
                fine.x_min(),
                fine.x_max()
            )));
        }
        let probes = inverse
            .boundary_nodes()
            .into_iter()
            .map(|(m, k)| {
                let (x, y) = inverse.node(m, k).expect("boundary node inside grid");
                let fx = (x - fine.x_min()) / dx;
                let fy = (y - fine.y_min()) / dx;
                let i = (fx.floor() as usize).min(n - 2);
                let l = (fy.floor() as usize).min(n - 2);
                let (sx, sy) = ((fx - i as f64).clamp(0.0, 1.0), (fy - l as f64).clamp(0.0, 1.0));
                Probe {
                    cell: (i, l),
                    weights: [(1.0 - sx) * (1.0 - sy), sx * (1.0 - sy), (1.0 - sx) * sy, sx * sy],
                    normal: inverse.outward_normal(m, k).expect("boundary node has a normal"),
                }
            })
            .collect();
        Ok(Self { fine: *fine, probes, stencil })
    }

    pub fn node_count(&self) -> usize {
        self.probes.len()
    }

    fn interpolate(&self, probe: &Probe, value: impl Fn(usize, usize) -> f64) -> f64 {
        let (i, l) = probe.cell;
        let w = probe.weights;
        w[0] * value(i, l) + w[1] * value(i + 1, l) + w[2] * value(i, l + 1) + w[3] * value(i + 1, l + 1)
    }

    fn normal_derivative(&self, u: &[f64], i: usize, l: usize, normal: [f64; 2]) -> f64 {
        let n = self.fine.n();
        let dx = self.fine.dx();
        let at = |a: usize, b: usize| u[a * n + b];
        let axis = |nu: f64, back2: f64, back1: f64, here: f64, fwd1: f64, fwd2: f64| -> f64 {
            if nu == 0.0 {
                return 0.0;
            }
            let d = match self.stencil {
                NormalStencil::Centered => (fwd1 - back1) / (2.0 * dx),
                NormalStencil::OneSided if nu > 0.0 => (3.0 * here - 4.0 * back1 + back2) / (2.0 * dx),
                NormalStencil::OneSided => (-3.0 * here + 4.0 * fwd1 - fwd2) / (2.0 * dx),
            };
            nu * d
        };
        axis(normal[0], at(i - 2, l), at(i - 1, l), at(i, l), at(i + 1, l), at(i + 2, l))
            + axis(normal[1], at(i, l - 2), at(i, l - 1), at(i, l), at(i, l + 1), at(i, l + 2))
    }

    /// Samples `(F, G)` for every boundary node from one fine-grid level.
    pub fn sample(&self, u: &WaveField) -> (Vec<f64>, Vec<f64>) {
        let v = &u.values;
        let n = self.fine.n();
        self.probes
            .iter()
            .map(|p| {
                let f = self.interpolate(p, |a, b| v[a * n + b]);
                let g = self.interpolate(p, |a, b| self.normal_derivative(v, a, b, p.normal));
                (f, g)
            })
            .unzip()
    }
}

/// Noiseless `F*`, `G*` from a stored forward history.
pub fn extract_cauchy(
    history: &WaveHistory,
    inverse: &SpaceTimeGrid,
    stencil: NormalStencil,
) -> Result<CauchyRecord> {
    if history.grid.time != inverse.time {
        return Err(IspError::Config("fine and inverse grids must share the time axis".into()));
    }
    let sampler = CauchySampler::new(&history.grid.space, &inverse.space, stencil)?;
    let mut rec = CauchyRecord::zeros(*inverse);
    for (j0, level) in history.levels.iter().enumerate() {
        record_level(&mut rec, &sampler, j0, level);
    }
    Ok(rec)
}

/// Writes one level of sampled data into `rec`.
pub fn record_level(rec: &mut CauchyRecord, sampler: &CauchySampler, j0: usize, level: &WaveField) {
    let n_t = rec.grid.time.n_t();
    let (f, g) = sampler.sample(level);
    for (k, (fv, gv)) in f.into_iter().zip(g).enumerate() {
        rec.f[k * n_t + j0] = fv;
        rec.g[k * n_t + j0] = gv;
    }
}

/// Multiplies every entry by `1 + δ ξ`, `ξ ~ U[-1, 1)`, drawn from ChaCha20
/// seeded with `seed` (stream 1 for F, stream 2 for G), node-major order.
pub fn add_noise(rec: &CauchyRecord, delta: f64, seed: u64) -> Result<CauchyRecord> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(IspError::Domain(format!("noise level must be a finite non-negative number, got {delta}")));
    }
    rec.check_shape()?;
    let mut out = rec.clone();
    out.delta = delta;
    out.seed = Some(seed);
    if delta == 0.0 {
        return Ok(out);
    }
    let perturb = |values: &mut [f64], stream: u64| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        for v in values.iter_mut() {
            let xi = 2.0 * rng.random::<f64>() - 1.0;
            *v *= 1.0 + delta * xi;
        }
    };
    perturb(&mut out.f, NOISE_STREAM_F);
    perturb(&mut out.g, NOISE_STREAM_G);
    Ok(out)
}
