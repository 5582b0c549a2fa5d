//! Recovering `p` from the solved `w`, error metrics and field export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};
use crate::forward::WaveField;
use crate::grid::SpaceTimeGrid;
use crate::model::{Excitation, Medium};

/// A space-time field in the grid's linear order (time fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(IspError::Contract(format!("field has {} values, grid has {}", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    /// The spatial slice at 0-based level `j0`.
    pub fn level(&self, j0: usize) -> WaveField {
        let n_t = self.grid.time.n_t();
        WaveField { grid: self.grid.space, values: self.values.iter().skip(j0).step_by(n_t).copied().collect() }
    }

    /// Writes `x,y,t,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,t,w")?;
        for (i, v) in self.values.iter().enumerate() {
            let (m0, n0, j0) = self.grid.split_0(i);
            let (x, y) = self.grid.space.node_0(m0, n0);
            writeln!(w, "{x},{y},{},{v}", self.grid.time.time_0(j0))?;
        }
        Ok(())
    }
}

/// `p = c w(·, 0) - (Δf + a f + B·∇f) / h(·, 0)` at every node.
pub fn extract_source(w: &SpaceTimeField, h: &dyn Excitation, medium: &dyn Medium) -> Result<WaveField> {
    let s = w.grid.space;
    let w0 = w.level(0);
    let mut p = WaveField::zeros(s);
    for m0 in 0..s.n() {
        for n0 in 0..s.n() {
            let (x, y) = s.node_0(m0, n0);
            let k = s.offset_0(m0, n0);
            let f = medium.f(x, y);
            let (a, b) = (medium.a(x, y), medium.b(x, y));
            let lf = f.laplacian + a * f.value + b[0] * f.grad[0] + b[1] * f.grad[1];
            let h0 = h.initial_jet(x, y).value;
            if h0 == 0.0 || !h0.is_finite() {
                return Err(IspError::Model(format!("h(x, 0) = {h0} at node ({}, {})", m0 + 1, n0 + 1)));
            }
            p.values[k] = medium.c(x, y) * w0.values[k] - lf / h0;
        }
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub true_min: f64,
    pub true_max: f64,
    pub computed_min: f64,
    pub computed_max: f64,
    /// `|min p_comp - min p_true| / |min p_true|`; absent when `min p_true = 0`.
    pub error_rel_min: Option<f64>,
    pub error_rel_max: Option<f64>,
    /// `‖p_comp - p_true‖₂ / ‖p_true‖₂`, or the absolute norm when
    /// `p_true ≡ 0` (then `l2_is_absolute` is set).
    pub l2_error: f64,
    pub l2_is_absolute: bool,
}

fn extrema(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

pub fn compute_metrics(p_true: &WaveField, p_comp: &WaveField) -> Result<SourceMetrics> {
    if p_true.grid != p_comp.grid || p_true.values.len() != p_comp.values.len() {
        return Err(IspError::Contract("true and computed sources live on different grids".into()));
    }
    let (tmin, tmax) = extrema(&p_true.values);
    let (cmin, cmax) = extrema(&p_comp.values);
    let rel = |c: f64, t: f64| if t == 0.0 { None } else { Some((c - t).abs() / t.abs()) };
    let diff = p_comp.values.iter().zip(&p_true.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = p_true.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(SourceMetrics {
        true_min: tmin,
        true_max: tmax,
        computed_min: cmin,
        computed_max: cmax,
        error_rel_min: rel(cmin, tmin),
        error_rel_max: rel(cmax, tmax),
        l2_error: if norm > 0.0 { diff / norm } else { diff },
        l2_is_absolute: norm == 0.0,
    })
}

/// `(x, p(x, y*))` along the grid row nearest to `y = axis_value`.
pub fn line_profile(p: &WaveField, axis_value: f64) -> Result<Vec<(f64, f64)>> {
    let s = p.grid;
    if !(axis_value >= s.y_min() && axis_value <= s.y_max()) {
        return Err(IspError::Range(format!("y = {axis_value} lies outside [{}, {}]", s.y_min(), s.y_max())));
    }
    let n0 = (((axis_value - s.y_min()) / s.dx()).round() as usize).min(s.n() - 1);
    Ok((0..s.n()).map(|m0| (s.x_0(m0), p.at_0(m0, n0))).collect())
}

pub fn write_profile_csv<W: Write>(mut w: W, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "{header}")?;
    for (x, v) in rows {
        writeln!(w, "{x},{v}")?;
    }
    Ok(())
}

/// Writes `x,y,value` rows.
pub fn write_field_csv<W: Write>(mut w: W, field: &WaveField) -> Result<()> {
    let s = field.grid;
    writeln!(w, "x,y,p")?;
    for m0 in 0..s.n() {
        for n0 in 0..s.n() {
            let (x, y) = s.node_0(m0, n0);
            writeln!(w, "{x},{y},{}", field.at_0(m0, n0))?;
        }
    }
    Ok(())
}

/// Linear map from field values to gray levels `0..=255`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayMapping {
    pub value_at_black: f64,
    pub value_at_white: f64,
}

/// Binary 8-bit graymap, y increasing upwards. A constant field maps to 0.
pub fn write_pgm<W: Write>(mut w: W, field: &WaveField, range: Option<(f64, f64)>) -> Result<GrayMapping> {
    let s = field.grid;
    let (lo, hi) = range.unwrap_or_else(|| extrema(&field.values));
    writeln!(w, "P5\n{} {}\n255", s.n(), s.n())?;
    let span = hi - lo;
    let mut bytes = Vec::with_capacity(s.node_count());
    for n0 in (0..s.n()).rev() {
        for m0 in 0..s.n() {
            let v = field.at_0(m0, n0);
            let g = if span > 0.0 { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) } else { 0.0 };
            bytes.push(g as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok(GrayMapping { value_at_black: lo, value_at_white: hi })
}
