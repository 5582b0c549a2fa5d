//! Parameter sweeps over tests, noise levels, seeds and regularisation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{run_pipeline_cached, PipelineCache, RunStatus};
use crate::error::{IspError, Result};

/// Axes of a cartesian sweep; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub tests: Vec<u8>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub epsilon: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub base: RunConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl SweepFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: SweepFile = toml::from_str(text).map_err(|e| IspError::Config(e.to_string()))?;
        f.base.validate()?;
        Ok(f)
    }

    /// All configurations, with seeds varying fastest. Runs never write
    /// their own artefact directories.
    pub fn expand(&self) -> Vec<RunConfig> {
        let b = &self.base;
        let tests: Vec<Option<u8>> = if self.sweep.tests.is_empty() { vec![b.test] } else { self.sweep.tests.iter().map(|&t| Some(t)).collect() };
        let mut out = Vec::new();
        for &test in &tests {
            for eps1 in axis(&self.sweep.eps1, b.assembly.eps1) {
                for eps2 in axis(&self.sweep.eps2, b.assembly.eps2) {
                    for epsilon in axis(&self.sweep.epsilon, b.differentiation.epsilon) {
                        for delta in axis(&self.sweep.deltas, b.synthesis.delta) {
                            for seed in axis(&self.sweep.seeds, b.synthesis.seed) {
                                let mut c = b.clone();
                                if test.is_some() {
                                    c.test = test;
                                    c.source = None;
                                }
                                c.assembly.eps1 = eps1;
                                c.assembly.eps2 = eps2;
                                c.differentiation.epsilon = epsilon;
                                c.synthesis.delta = delta;
                                c.synthesis.seed = seed;
                                c.output.dir = None;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub source: String,
    pub delta: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// `converged`, `not_converged` or `failed: <message>`.
    pub status: String,
    pub error_rel_min: Option<f64>,
    pub error_rel_max: Option<f64>,
    pub l2_error: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_s: f64,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        !self.status.starts_with("failed")
    }
}

/// Runs every configuration; failures are recorded and the sweep goes on.
pub fn run_sweep(cfgs: &[RunConfig], workers: usize, cache: &PipelineCache) -> Result<Vec<SweepRow>> {
    if cfgs.is_empty() {
        return Err(IspError::Config("a sweep needs at least one configuration".into()));
    }
    let one_run = |cfg: &RunConfig| -> SweepRow {
        let label = cfg.source_spec().map(|s| s.label().to_string()).unwrap_or_else(|_| "invalid".into());
        let mut row = SweepRow {
            source: label,
            delta: cfg.synthesis.delta,
            seed: cfg.synthesis.seed,
            epsilon: cfg.differentiation.epsilon,
            eps1: cfg.assembly.eps1,
            eps2: cfg.assembly.eps2,
            status: String::new(),
            error_rel_min: None,
            error_rel_max: None,
            l2_error: None,
            iterations: None,
            wall_time_s: 0.0,
        };
        match run_pipeline_cached(cfg, cache) {
            Ok(out) => {
                let r = &out.report;
                row.status = match r.status {
                    RunStatus::Converged => "converged".into(),
                    RunStatus::NotConverged => "not_converged".into(),
                };
                row.error_rel_min = r.metrics.error_rel_min;
                row.error_rel_max = r.metrics.error_rel_max;
                row.l2_error = Some(r.metrics.l2_error);
                row.iterations = Some(r.solver.iterations);
                row.wall_time_s = out.timings.total();
            }
            Err(e) => {
                log::warn!("sweep run (delta = {}, seed = {}) failed: {e}", row.delta, row.seed);
                row.status = format!("failed: {e}");
            }
        }
        row
    };
    if workers <= 1 {
        return Ok(cfgs.iter().map(one_run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| IspError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| cfgs.par_iter().map(one_run).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub source: String,
    pub delta: f64,
    pub epsilon: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub runs: usize,
    pub failed: usize,
    pub l2_mean: f64,
    pub l2_std: f64,
    pub error_rel_min_mean: f64,
    pub error_rel_min_std: f64,
    pub error_rel_min_median: f64,
    pub error_rel_max_mean: f64,
    pub error_rel_max_std: f64,
    pub error_rel_max_median: f64,
    pub iterations_mean: f64,
    pub wall_time_mean: f64,
}

/// Mean and sample standard deviation (`n - 1`); NaN when undefined.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Groups rows that differ only in the seed, in first-appearance order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut groups: Vec<(SweepSummary, Vec<&SweepRow>)> = Vec::new();
    for row in rows {
        let same = |s: &SweepSummary| {
            s.source == row.source && s.delta == row.delta && s.epsilon == row.epsilon && s.eps1 == row.eps1 && s.eps2 == row.eps2
        };
        match groups.iter_mut().find(|(s, _)| same(s)) {
            Some((_, members)) => members.push(row),
            None => groups.push((
                SweepSummary {
                    source: row.source.clone(),
                    delta: row.delta,
                    epsilon: row.epsilon,
                    eps1: row.eps1,
                    eps2: row.eps2,
                    runs: 0,
                    failed: 0,
                    l2_mean: 0.0,
                    l2_std: 0.0,
                    error_rel_min_mean: 0.0,
                    error_rel_min_std: 0.0,
                    error_rel_min_median: 0.0,
                    error_rel_max_mean: 0.0,
                    error_rel_max_std: 0.0,
                    error_rel_max_median: 0.0,
                    iterations_mean: 0.0,
                    wall_time_mean: 0.0,
                },
                vec![row],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut s, members)| {
            let ok: Vec<&&SweepRow> = members.iter().filter(|r| r.ok()).collect();
            let pick = |f: &dyn Fn(&SweepRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            s.runs = members.len();
            s.failed = members.len() - ok.len();
            let l2 = pick(&|r| r.l2_error);
            let emin = pick(&|r| r.error_rel_min);
            let emax = pick(&|r| r.error_rel_max);
            (s.l2_mean, s.l2_std) = mean_std(&l2);
            (s.error_rel_min_mean, s.error_rel_min_std) = mean_std(&emin);
            (s.error_rel_max_mean, s.error_rel_max_std) = mean_std(&emax);
            s.error_rel_min_median = median(&emin);
            s.error_rel_max_median = median(&emax);
            s.iterations_mean = mean_std(&pick(&|r| r.iterations.map(|i| i as f64))).0;
            s.wall_time_mean = mean_std(&ok.iter().map(|r| r.wall_time_s).collect::<Vec<_>>()).0;
            s
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_rows_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "source,delta,seed,epsilon,eps1,eps2,status,error_rel_min,error_rel_max,l2_error,iterations,wall_time_s")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.source,
            r.delta,
            r.seed,
            r.epsilon,
            r.eps1,
            r.eps2,
            quote(&r.status),
            opt(r.error_rel_min),
            opt(r.error_rel_max),
            opt(r.l2_error),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            r.wall_time_s
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, summary: &[SweepSummary]) -> Result<()> {
    writeln!(
        w,
        "source,delta,epsilon,eps1,eps2,runs,failed,l2_mean,l2_std,error_rel_min_mean,error_rel_min_std,error_rel_min_median,\
         error_rel_max_mean,error_rel_max_std,error_rel_max_median,iterations_mean,wall_time_mean"
    )?;
    for s in summary {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.source,
            s.delta,
            s.epsilon,
            s.eps1,
            s.eps2,
            s.runs,
            s.failed,
            s.l2_mean,
            s.l2_std,
            s.error_rel_min_mean,
            s.error_rel_min_std,
            s.error_rel_min_median,
            s.error_rel_max_mean,
            s.error_rel_max_std,
            s.error_rel_max_median,
            s.iterations_mean,
            s.wall_time_mean
        )?;
    }
    Ok(())
}
