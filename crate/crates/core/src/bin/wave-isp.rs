use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use wave_isp::forward::CauchyRecord;
use wave_isp::pipeline::{
    aggregate, reconstruct_from_record, run_pipeline, run_sweep, synthesize, write_rows_csv, write_summary_csv, PipelineCache,
    Profile, ReconstructionReport, RunConfig, RunStatus, SweepFile, Timings,
};
use wave_isp::regdiff::differentiate_record;
use wave_isp::{IspError, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "wave-isp", version, about = "Recover the spatial source of a 2D wave equation from lateral Cauchy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward-solve and write noisy Cauchy data.
    Synthesize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Second time derivatives of the traces in a Cauchy data file.
    Differentiate {
        input: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Full pipeline; writes artefacts when an output directory is set.
    Reconstruct {
        #[command(flatten)]
        run: RunArgs,
        /// Use this Cauchy data file instead of synthesising.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Runs a sweep file and writes rows.csv and summary.csv.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Prints a summary of a report.json.
    Inspect { report: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<Profile>)]
    profile: Option<Profile>,
    #[arg(long)]
    test: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_t: Option<usize>,
    #[arg(long)]
    n_fine: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    /// full or simplified.
    #[arg(long)]
    mode: Option<String>,
    /// auto, cholesky or cg.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn config_value<T: DeserializeOwned>(flag: &str, s: &str) -> Result<T> {
    parse_enum(s).map_err(|e| IspError::Config(format!("--{flag}: {e}")))
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::for_test(self.test.unwrap_or(1), self.profile.unwrap_or(Profile::Desk)),
        };
        if self.config.is_some() {
            if let Some(p) = self.profile {
                let g = p.grid();
                (cfg.grid.n, cfg.grid.n_t, cfg.grid.n_fine) = (g.n, g.n_t, g.n_fine);
            }
            if let Some(t) = self.test {
                cfg.test = Some(t);
                cfg.source = None;
            }
        }
        if let Some(v) = self.n {
            cfg.grid.n = v;
        }
        if let Some(v) = self.n_t {
            cfg.grid.n_t = v;
        }
        if let Some(v) = self.n_fine {
            cfg.grid.n_fine = v;
        }
        if let Some(v) = self.delta {
            cfg.synthesis.delta = v;
        }
        if let Some(v) = self.seed {
            cfg.synthesis.seed = v;
        }
        if let Some(v) = self.epsilon {
            cfg.differentiation.epsilon = v;
        }
        if let Some(v) = self.eps1 {
            cfg.assembly.eps1 = v;
        }
        if let Some(v) = self.eps2 {
            cfg.assembly.eps2 = v;
        }
        if let Some(v) = &self.mode {
            cfg.assembly.mode = config_value("mode", v)?;
        }
        if let Some(v) = &self.solver {
            cfg.solver.method = config_value("solver", v)?;
        }
        if let Some(v) = &self.out_dir {
            cfg.output.dir = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_record(path: &Path) -> Result<CauchyRecord> {
    let f = File::open(path).map_err(|e| IspError::Config(format!("cannot open {}: {e}", path.display())))?;
    CauchyRecord::read_csv(BufReader::new(f))
}

fn print_report(r: &ReconstructionReport) {
    let m = &r.metrics;
    let pct = |v: Option<f64>| v.map(|e| format!("{:.1}%", 100.0 * e)).unwrap_or_else(|| "n/a".into());
    println!("source      {} (delta = {}, seed = {})", r.source, r.delta, r.seed);
    println!("min         true {:.4}  computed {:.4}  error {}", m.true_min, m.computed_min, pct(m.error_rel_min));
    println!("max         true {:.4}  computed {:.4}  error {}", m.true_max, m.computed_max, pct(m.error_rel_max));
    let kind = if m.l2_is_absolute { "absolute" } else { "relative" };
    println!("L2 error    {:.4} ({kind})", m.l2_error);
    println!(
        "solver      {:?}, {} unknowns, residual {:.2e}, {} iterations, {:?}",
        r.solver.method, r.solver.unknowns, r.solver.relative_residual, r.solver.iterations, r.status
    );
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synthesize { run, out } => {
            let cfg = run.resolve()?;
            let rec = synthesize(&cfg)?;
            let mut w = create(&out)?;
            rec.write_csv(&mut w)?;
            w.flush()?;
            println!("wrote {} boundary nodes x {} levels to {}", rec.node_count(), rec.grid.time.n_t(), out.display());
        }
        Command::Differentiate { input, epsilon, out } => {
            let rec = read_record(&input)?;
            let mut dc = RunConfig::for_test(1, Profile::Desk).differentiation;
            if let Some(e) = epsilon {
                dc.epsilon = e;
            }
            let d = differentiate_record(&rec, dc)?;
            let n_t = rec.grid.time.n_t();
            let mut w = create(&out)?;
            writeln!(w, "node,j,F_tt,G_tt")?;
            for k in 0..rec.node_count() {
                for j0 in 0..n_t {
                    let i = k * n_t + j0;
                    writeln!(w, "{},{},{:e},{:e}", k + 1, j0 + 1, d.f_tt[i], d.g_tt[i])?;
                }
            }
            w.flush()?;
        }
        Command::Reconstruct { run, data } => {
            let cfg = run.resolve()?;
            let out = match data {
                Some(path) => {
                    let mut cfg = cfg.clone();
                    cfg.output.dir = None;
                    reconstruct_from_record(&cfg, read_record(&path)?, &PipelineCache::default(), Timings::default())?
                }
                None => run_pipeline(&cfg)?,
            };
            print_report(&out.report);
            if out.report.status == RunStatus::NotConverged {
                return Ok(EXIT_NOT_CONVERGED);
            }
        }
        Command::Sweep { config, workers, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| IspError::Config(format!("cannot read {}: {e}", config.display())))?;
            let file = SweepFile::from_toml_str(&text)?;
            let rows = run_sweep(&file.expand(), workers.unwrap_or(file.workers), &PipelineCache::default())?;
            std::fs::create_dir_all(&out)?;
            let mut w = create(&out.join("rows.csv"))?;
            write_rows_csv(&mut w, &rows)?;
            w.flush()?;
            let mut w = create(&out.join("summary.csv"))?;
            write_summary_csv(&mut w, &aggregate(&rows))?;
            w.flush()?;
            let failed = rows.iter().filter(|r| !r.ok()).count();
            println!("{} runs, {failed} failed; results in {}", rows.len(), out.display());
        }
        Command::Inspect { report } => {
            let text = std::fs::read_to_string(&report)
                .map_err(|e| IspError::Config(format!("cannot read {}: {e}", report.display())))?;
            print_report(&ReconstructionReport::from_json(&text)?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                IspError::Numerical(_) | IspError::Assembly(_) => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            })
        }
    }
}
