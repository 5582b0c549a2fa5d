//! synthesize → differentiate → assemble → solve → reconstruct → report.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SCHEMA_VERSION};
use crate::assembly::{compute_boundary_data, BoundaryData, QrOperator};
use crate::error::{IspError, Result};
use crate::forward::{add_noise, check_cfl, forward_solve_with, record_level, CauchyRecord, CauchySampler, WaveField};
use crate::grid::SpaceTimeGrid;
use crate::model::{DecayingExcitation, HomogeneousMedium};
use crate::reconstruct::{
    compute_metrics, extract_source, line_profile, write_field_csv, write_pgm, GrayMapping, SourceMetrics, SpaceTimeField,
};
use crate::regdiff::{differentiate_record, SecondDerivatives};
use crate::solve::{
    build_preconditioner, cg_solve_with, check_symmetric, direct_solve_with, Preconditioner, SolveMethod, SolveStats, SolverConfig,
    SparseCholesky,
};
use crate::sparse::CsrMatrix;

/// Marker present in an output directory while a run is in progress or
/// after it failed.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Files a successful run writes, besides the optional ones.
pub const ARTIFACTS: &[&str] =
    &["config.toml", "cauchy.csv", "p_true.csv", "p_computed.csv", "profile.csv", "report.json", "timings.json"];
pub const W_ARTIFACT: &str = "w.csv";
pub const PGM_ARTIFACTS: &[&str] = &["p_true.pgm", "p_computed.pgm"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
}

/// Everything about a run except wall times, which go to `timings.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub schema_version: u32,
    pub source: String,
    pub test: Option<u8>,
    pub delta: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub metrics: SourceMetrics,
    pub solver: SolveStats,
    pub cfl_ratio_fine: f64,
    pub gray_mapping: Option<GrayMapping>,
    pub config: RunConfig,
}

impl ReconstructionReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| IspError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| IspError::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| in_stage(stage, e))?;
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|(_, t)| t).sum()
    }
}

/// Prefixes the message with the stage name, keeping the error kind.
pub fn in_stage(stage: &str, e: IspError) -> IspError {
    let tag = |m: String| format!("{stage}: {m}");
    match e {
        IspError::Range(m) => IspError::Range(tag(m)),
        IspError::Config(m) => IspError::Config(tag(m)),
        IspError::Domain(m) => IspError::Domain(tag(m)),
        IspError::Model(m) => IspError::Model(tag(m)),
        IspError::Numerical(m) => IspError::Numerical(tag(m)),
        IspError::Assembly(m) => IspError::Assembly(tag(m)),
        IspError::Contract(m) => IspError::Contract(tag(m)),
        IspError::Parse(m) => IspError::Parse(tag(m)),
        other => other,
    }
}

/// Noiseless Cauchy data for the configured source, streamed straight from
/// the forward solve without storing the time history.
pub fn synthesize_clean(cfg: &RunConfig) -> Result<CauchyRecord> {
    let source = cfg.source_spec()?.build()?;
    let fine = cfg.grid.fine()?;
    let inverse = cfg.grid.inverse()?;
    let sampler = CauchySampler::new(&fine.space, &inverse.space, cfg.synthesis.stencil)?;
    let mut rec = CauchyRecord::zeros(inverse);
    forward_solve_with(&source, &DecayingExcitation, &fine, cfg.synthesis.start, |j0, u| {
        record_level(&mut rec, &sampler, j0, u);
        Ok(())
    })?;
    Ok(rec)
}

/// Noisy Cauchy data.
pub fn synthesize(cfg: &RunConfig) -> Result<CauchyRecord> {
    add_noise(&synthesize_clean(cfg)?, cfg.synthesis.delta, cfg.synthesis.seed)
}

enum Backend {
    Direct(SparseCholesky),
    Iterative(Box<dyn Preconditioner>),
}

/// Assembled operator, normal matrix and its factor or preconditioner for one
/// grid and configuration; reusable across data sets.
pub struct PreparedSolver {
    op: QrOperator,
    matrix: CsrMatrix,
    backend: Backend,
    cfg: SolverConfig,
}

impl PreparedSolver {
    pub fn new(grid: &SpaceTimeGrid, cfg: &RunConfig) -> Result<Self> {
        let op = QrOperator::assemble(grid, &DecayingExcitation, &HomogeneousMedium, cfg.assembly)?;
        let matrix = op.normal_matrix()?;
        check_symmetric(&matrix)?;
        let backend = match cfg.solver.resolve(matrix.nrows()) {
            SolveMethod::Cg => Backend::Iterative(build_preconditioner(&cfg.solver, &matrix, Some(&op))?),
            _ => Backend::Direct(SparseCholesky::factor(&matrix)?),
        };
        Ok(Self { op, matrix, backend, cfg: cfg.solver })
    }

    pub fn operator(&self) -> &QrOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn method(&self) -> SolveMethod {
        match self.backend {
            Backend::Direct(_) => SolveMethod::Cholesky,
            Backend::Iterative(_) => SolveMethod::Cg,
        }
    }

    pub fn solve(&self, data: &BoundaryData) -> Result<(SpaceTimeField, SolveStats)> {
        let b = self.op.stacked_rhs(data)?;
        let rhs = self.op.normal_rhs(&b)?;
        let (x, stats) = match &self.backend {
            Backend::Direct(f) => direct_solve_with(&self.matrix, &rhs, f, &self.cfg)?,
            Backend::Iterative(pc) => cg_solve_with(&self.matrix, &rhs, &self.cfg, pc.as_ref())?,
        };
        Ok((SpaceTimeField::new(*self.op.grid(), x)?, stats))
    }
}

type Slot<T> = Arc<Mutex<Option<Arc<T>>>>;

/// Shares forward solves and assembled systems between runs. Keys are the
/// serialised parts of the configuration each artefact depends on; each
/// artefact is built once even when several runs ask for it concurrently.
#[derive(Default)]
pub struct PipelineCache {
    records: Mutex<HashMap<String, Slot<CauchyRecord>>>,
    solvers: Mutex<HashMap<String, Slot<PreparedSolver>>>,
}

fn key<T: Serialize>(parts: &T) -> String {
    serde_json::to_string(parts).expect("configuration serialises")
}

fn get_or_build<T>(map: &Mutex<HashMap<String, Slot<T>>>, k: String, build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    let slot = map.lock().expect("cache lock").entry(k).or_default().clone();
    let mut guard = slot.lock().expect("cache slot lock");
    if let Some(v) = guard.as_ref() {
        return Ok(v.clone());
    }
    let v = Arc::new(build()?);
    *guard = Some(v.clone());
    Ok(v)
}

impl PipelineCache {
    pub fn clean_record(&self, cfg: &RunConfig) -> Result<Arc<CauchyRecord>> {
        let k = key(&(cfg.source_spec()?, &cfg.grid, cfg.synthesis.start, cfg.synthesis.stencil));
        get_or_build(&self.records, k, || synthesize_clean(cfg))
    }

    pub fn solver(&self, cfg: &RunConfig) -> Result<Arc<PreparedSolver>> {
        let k = key(&(&cfg.grid, &cfg.assembly, &cfg.solver));
        get_or_build(&self.solvers, k, || PreparedSolver::new(&cfg.grid.inverse()?, cfg))
    }
}

pub struct RunOutput {
    pub report: ReconstructionReport,
    pub timings: Timings,
    pub record: CauchyRecord,
    pub derivatives: SecondDerivatives,
    pub w: SpaceTimeField,
    pub p_true: WaveField,
    pub p_computed: WaveField,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    run_pipeline_cached(cfg, &PipelineCache::default())
}

pub fn run_pipeline_cached(cfg: &RunConfig, cache: &PipelineCache) -> Result<RunOutput> {
    cfg.validate()?;
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(INCOMPLETE_MARKER), "run started\n")?;
    }
    let mut timings = Timings::default();
    let record = timings.time("synthesize", || {
        let clean = cache.clean_record(cfg)?;
        add_noise(&clean, cfg.synthesis.delta, cfg.synthesis.seed)
    })?;
    let out = reconstruct_from_record(cfg, record, cache, timings)?;
    if let Some(dir) = &cfg.output.dir {
        write_artifacts(dir, cfg, &out).map_err(|e| in_stage("write", e))?;
        std::fs::remove_file(dir.join(INCOMPLETE_MARKER))?;
    }
    Ok(out)
}

/// Runs every stage after synthesis on a given record (for example one read
/// from disk). No files are written.
pub fn reconstruct_from_record(
    cfg: &RunConfig,
    record: CauchyRecord,
    cache: &PipelineCache,
    mut timings: Timings,
) -> Result<RunOutput> {
    let inverse = cfg.grid.inverse()?;
    if record.grid != inverse {
        return Err(IspError::Config("Cauchy record grid does not match the configured inverse grid".into()));
    }
    let derivatives = timings.time("differentiate", || differentiate_record(&record, cfg.differentiation))?;
    let solver = timings.time("assemble", || cache.solver(cfg))?;
    let data = timings.time("boundary_data", || compute_boundary_data(&inverse, solver.operator().htilde(), &derivatives))?;
    let (w, stats) = timings.time("solve", || solver.solve(&data))?;
    let (p_true, p_computed, metrics) = timings.time("reconstruct", || {
        let p_computed = extract_source(&w, &DecayingExcitation, &HomogeneousMedium)?;
        let source = cfg.source_spec()?.build()?;
        let p_true = WaveField { grid: inverse.space, values: source.sample(&inverse.space) };
        let metrics = compute_metrics(&p_true, &p_computed)?;
        Ok((p_true, p_computed, metrics))
    })?;
    let fine = cfg.grid.fine()?;
    let report = ReconstructionReport {
        schema_version: SCHEMA_VERSION,
        source: cfg.source_spec()?.label().to_string(),
        test: cfg.test,
        delta: cfg.synthesis.delta,
        seed: cfg.synthesis.seed,
        status: if stats.converged { RunStatus::Converged } else { RunStatus::NotConverged },
        metrics,
        solver: stats,
        cfl_ratio_fine: check_cfl(fine.space.dx(), fine.time.dt())?,
        gray_mapping: if cfg.output.pgm && cfg.output.dir.is_some() { Some(gray_range(&p_true, &p_computed)) } else { None },
        config: cfg.clone(),
    };
    Ok(RunOutput { report, timings, record, derivatives, w, p_true, p_computed })
}

/// Common gray scale for the true and computed sources.
fn gray_range(a: &WaveField, b: &WaveField) -> GrayMapping {
    let (lo, hi) = a.values.iter().chain(&b.values).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    GrayMapping { value_at_black: lo, value_at_white: hi }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_artifacts(dir: &Path, cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    out.record.write_csv(create(dir, "cauchy.csv")?)?;
    if cfg.output.write_w {
        out.w.write_csv(create(dir, W_ARTIFACT)?)?;
    }
    write_field_csv(create(dir, "p_true.csv")?, &out.p_true)?;
    write_field_csv(create(dir, "p_computed.csv")?, &out.p_computed)?;
    {
        use std::io::Write;
        let t = line_profile(&out.p_true, cfg.output.profile_y)?;
        let c = line_profile(&out.p_computed, cfg.output.profile_y)?;
        let mut w = create(dir, "profile.csv")?;
        writeln!(w, "x,p_true,p_computed")?;
        for ((x, pt), (_, pc)) in t.iter().zip(&c) {
            writeln!(w, "{x},{pt},{pc}")?;
        }
    }
    if let Some(map) = out.report.gray_mapping {
        let range = Some((map.value_at_black, map.value_at_white));
        write_pgm(create(dir, PGM_ARTIFACTS[0])?, &out.p_true, range)?;
        write_pgm(create(dir, PGM_ARTIFACTS[1])?, &out.p_computed, range)?;
    }
    std::fs::write(dir.join("report.json"), out.report.to_json()? + "\n")?;
    let mut timings = serde_json::Map::new();
    for (stage, secs) in &out.timings.stages {
        timings.insert(stage.clone(), serde_json::json!(secs));
    }
    timings.insert("total".into(), serde_json::json!(out.timings.total()));
    timings.insert("solver_wall_time".into(), serde_json::json!(out.report.solver.wall_time_s));
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings).map_err(|e| IspError::Parse(e.to_string()))? + "\n")?;
    Ok(())
}
