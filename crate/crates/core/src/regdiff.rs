//! Second time derivatives of boundary traces by Tikhonov-regularised
//! inversion of the double time sum
//! `F(t_n) = dt^2 Σ_{i=1}^{n} Σ_{j=1}^{i} F_tt(t_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{IspError, Result};
use crate::forward::CauchyRecord;

/// Lower-triangular `A[n][j] = n - j + 1` (1-based, `j <= n`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntegrationMatrix {
    n_t: usize,
}

impl IntegrationMatrix {
    pub fn new(n_t: usize) -> Result<Self> {
        if n_t < 1 {
            return Err(IspError::Domain("integration matrix needs n_t >= 1".into()));
        }
        Ok(Self { n_t })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// 1-based entry.
    pub fn entry(&self, n: usize, j: usize) -> f64 {
        if j <= n {
            (n - j + 1) as f64
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_t);
        for n in 1..=self.n_t {
            for j in 1..=n {
                m.set(n - 1, j - 1, self.entry(n, j));
            }
        }
        m
    }

    /// `A v` via two running sums.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut inner = 0.0;
        let mut outer = 0.0;
        v.iter()
            .map(|&x| {
                inner += x;
                outer += inner;
                outer
            })
            .collect()
    }

    /// `Aᵀ v`: the same running sums taken from the end.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let mut inner = 0.0;
        let mut outer = 0.0;
        for i in (0..v.len()).rev() {
            inner += v[i];
            outer += inner;
            out[i] = outer;
        }
        out
    }

    fn gram(&self) -> DenseMatrix {
        let a = self.to_dense();
        let n = self.n_t;
        let mut g = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (i.max(j)..n).map(|k| a.get(k, i) * a.get(k, j)).sum();
                g.set(i, j, s);
                g.set(j, i, s);
            }
        }
        g
    }
}

/// Which regularised system is solved for `ŷ ≈ F_tt`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TikhonovForm {
    /// `(AᵀA + εI) z = Aᵀ f`, `ŷ = z / dt²`. The effective smoothing grows
    /// with `n_t`: this equals `DtScaled` with `ε dt⁴`.
    #[default]
    Normal,
    /// `(dt⁴ AᵀA + εI) ŷ = dt² Aᵀ f`.
    DtScaled,
    /// `(AᵀA + εI) z = f`, `ŷ = z / dt²` (no transpose on the right).
    Verbatim,
}

/// Placement of the recovered samples on the time grid.
///
/// The second difference of the double sum at level `n` is centred at
/// `t_{n-1}`, so `ŷ_{n+1}` estimates `F_tt(t_n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Value at `t_j` is `ŷ_{j+1}`; the last level repeats `ŷ_{n_t}`.
    #[default]
    Centered,
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffConfig {
    pub epsilon: f64,
    pub form: TikhonovForm,
    pub alignment: Alignment,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, form: TikhonovForm::Normal, alignment: Alignment::Centered }
    }
}

/// A factorised differentiator shared by all traces of one time grid.
#[derive(Clone, Debug)]
pub struct Differentiator {
    a: IntegrationMatrix,
    chol: Cholesky,
    dt: f64,
    cfg: DiffConfig,
}

impl Differentiator {
    pub fn new(n_t: usize, dt: f64, cfg: DiffConfig) -> Result<Self> {
        if !(cfg.epsilon > 0.0) || !cfg.epsilon.is_finite() {
            return Err(IspError::Domain(format!("differentiation epsilon must be positive, got {}", cfg.epsilon)));
        }
        if !(dt > 0.0) {
            return Err(IspError::Domain(format!("time step must be positive, got {dt}")));
        }
        let a = IntegrationMatrix::new(n_t)?;
        let mut m = a.gram();
        let scale = if cfg.form == TikhonovForm::DtScaled { dt.powi(4) } else { 1.0 };
        for i in 0..n_t {
            for j in 0..n_t {
                m.set(i, j, m.get(i, j) * scale);
            }
            m.set(i, i, m.get(i, i) + cfg.epsilon);
        }
        let chol = Cholesky::factor(&m).map_err(|e| {
            IspError::Numerical(format!("differentiation system breakdown ({e}); epsilon = {:e}", cfg.epsilon))
        })?;
        let cond = chol.condition_estimate();
        if !cond.is_finite() || cond > 1e15 {
            return Err(IspError::Numerical(format!("differentiation system is ill-conditioned (estimate {cond:e})")));
        }
        Ok(Self { a, chol, dt, cfg })
    }

    pub fn config(&self) -> &DiffConfig {
        &self.cfg
    }

    /// Unaligned minimiser `ŷ`.
    pub fn solve_raw(&self, trace: &[f64]) -> Result<Vec<f64>> {
        if trace.len() != self.a.n_t() {
            return Err(IspError::Contract(format!("trace has {} samples, expected {}", trace.len(), self.a.n_t())));
        }
        let dt2 = self.dt * self.dt;
        let y = match self.cfg.form {
            TikhonovForm::Normal => self.chol.solve(&self.a.apply_transpose(trace)).into_iter().map(|z| z / dt2).collect(),
            TikhonovForm::DtScaled => {
                let rhs: Vec<f64> = self.a.apply_transpose(trace).into_iter().map(|v| v * dt2).collect();
                self.chol.solve(&rhs)
            }
            TikhonovForm::Verbatim => self.chol.solve(trace).into_iter().map(|z| z / dt2).collect(),
        };
        Ok(y)
    }

    /// Estimate of the second derivative at every time level.
    pub fn differentiate(&self, trace: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_raw(trace)?;
        Ok(match self.cfg.alignment {
            Alignment::Raw => y,
            Alignment::Centered => {
                let n = y.len();
                (0..n).map(|j| y[(j + 1).min(n - 1)]).collect()
            }
        })
    }

    /// `dt² A ŷ`, the trace implied by a raw estimate.
    pub fn reintegrate(&self, y: &[f64]) -> Vec<f64> {
        let dt2 = self.dt * self.dt;
        self.a.apply(y).into_iter().map(|v| v * dt2).collect()
    }
}

/// One-shot convenience wrapper with the default form and no alignment.
pub fn second_time_derivative(trace: &[f64], dt: f64, epsilon: f64) -> Result<Vec<f64>> {
    let cfg = DiffConfig { epsilon, alignment: Alignment::Raw, ..DiffConfig::default() };
    Differentiator::new(trace.len(), dt, cfg)?.differentiate(trace)
}

/// `F_tt`, `G_tt` for every boundary node of a record, node-major like the
/// record itself.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondDerivatives {
    pub f_tt: Vec<f64>,
    pub g_tt: Vec<f64>,
}

pub fn differentiate_record(rec: &CauchyRecord, cfg: DiffConfig) -> Result<SecondDerivatives> {
    let n_t = rec.grid.time.n_t();
    let d = Differentiator::new(n_t, rec.grid.time.dt(), cfg)?;
    let run = |values: &[f64]| -> Result<Vec<f64>> {
        let parts: Result<Vec<Vec<f64>>> = values.par_chunks(n_t).map(|tr| d.differentiate(tr)).collect();
        Ok(parts?.concat())
    };
    Ok(SecondDerivatives { f_tt: run(&rec.f)?, g_tt: run(&rec.g)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_pattern() {
        let a = IntegrationMatrix::new(3).unwrap().to_dense();
        let expect = [[1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, 2.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), expect[i][j]);
            }
        }
        assert_eq!(IntegrationMatrix::new(1).unwrap().to_dense().get(0, 0), 1.0);
        assert!(matches!(IntegrationMatrix::new(0), Err(IspError::Domain(_))));
        let sums = IntegrationMatrix::new(4).unwrap().apply(&[1.0; 4]);
        assert_eq!(sums, vec![1.0, 3.0, 6.0, 10.0]);
    }

    #[test]
    fn transpose_is_adjoint() {
        let a = IntegrationMatrix::new(7).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs: f64 = a.apply(&x).iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.iter().zip(a.apply_transpose(&y)).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn zero_trace() {
        assert_eq!(second_time_derivative(&[0.0; 10], 0.1, 1e-5).unwrap(), vec![0.0; 10]);
    }

    #[test]
    fn constant_second_derivative_round_trip() {
        let n_t = 60;
        let dt = 1.0 / n_t as f64;
        let a = IntegrationMatrix::new(n_t).unwrap();
        let trace: Vec<f64> = a.apply(&vec![1.0; n_t]).into_iter().map(|v| v * dt * dt).collect();
        let y = second_time_derivative(&trace, dt, 1e-12).unwrap();
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-6), "{y:?}");
    }

    #[test]
    fn bad_epsilon() {
        assert!(matches!(second_time_derivative(&[1.0; 4], 0.1, 0.0), Err(IspError::Domain(_))));
        assert!(matches!(second_time_derivative(&[1.0; 4], 0.1, -1.0), Err(IspError::Domain(_))));
    }

    #[test]
    fn norm_decreases_with_epsilon() {
        let n_t = 40;
        let dt = 1.0 / n_t as f64;
        let trace: Vec<f64> = (0..n_t).map(|j| ((j as f64 * dt) * 5.0).sin() + 0.01 * ((j * 7919) % 13) as f64).collect();
        let mut last = f64::INFINITY;
        for eps in [1e-9, 1e-7, 1e-5, 1e-3, 1e-1] {
            let y = second_time_derivative(&trace, dt, eps).unwrap();
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= last, "eps = {eps}: {n} > {last}");
            last = n;
        }
    }

    #[test]
    fn centered_alignment_follows_the_signal() {
        // F = sin(ωt): F_tt = -ω² sin(ωt); aligned estimates should track it.
        let n_t = 60;
        let dt = 1.0 / n_t as f64;
        let w = 4.0;
        let trace: Vec<f64> = (0..n_t).map(|j| (w * j as f64 * dt).sin()).collect();
        let mut cfg = DiffConfig { epsilon: 1e-10, ..DiffConfig::default() };
        let d = Differentiator::new(n_t, dt, cfg).unwrap();
        let exact: Vec<f64> = (0..n_t).map(|j| -w * w * (w * j as f64 * dt).sin()).collect();
        let err = |y: &[f64]| (5..n_t - 5).map(|j| (y[j] - exact[j]).abs()).fold(0.0_f64, f64::max);
        let aligned = err(&d.differentiate(&trace).unwrap());
        cfg.alignment = Alignment::Raw;
        let raw = err(&Differentiator::new(n_t, dt, cfg).unwrap().differentiate(&trace).unwrap());
        assert!(aligned < 0.2 * raw, "aligned {aligned} raw {raw}");
    }

    proptest! {
        #[test]
        fn linear_in_the_trace(
            u in proptest::collection::vec(-1.0f64..1.0, 20),
            v in proptest::collection::vec(-1.0f64..1.0, 20),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let dt = 0.05;
            let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let du = second_time_derivative(&u, dt, 1e-5).unwrap();
            let dv = second_time_derivative(&v, dt, 1e-5).unwrap();
            let dc = second_time_derivative(&combo, dt, 1e-5).unwrap();
            let scale = 1.0 + du.iter().chain(&dv).fold(0.0_f64, |m, x| m.max(x.abs()));
            for i in 0..20 {
                prop_assert!((dc[i] - (a * du[i] + b * dv[i])).abs() <= 1e-9 * scale * (a.abs() + b.abs() + 1.0));
            }
        }

        #[test]
        fn residual_bounded_by_trace(trace in proptest::collection::vec(-1.0f64..1.0, 16), eps in 1e-8f64..1e-1) {
            let dt = 1.0 / 16.0;
            let cfg = DiffConfig { epsilon: eps, alignment: Alignment::Raw, ..DiffConfig::default() };
            let d = Differentiator::new(16, dt, cfg).unwrap();
            let y = d.solve_raw(&trace).unwrap();
            let back = d.reintegrate(&y);
            let res: f64 = back.iter().zip(&trace).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = trace.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(res <= norm * (1.0 + 1e-12));
        }
    }
}
