//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::AssemblyConfig;
use crate::error::{IspError, Result};
use crate::forward::{NormalStencil, StartScheme};
use crate::grid::{SpaceTimeGrid, SpatialGrid2D, TimeGrid, TimeStepConvention};
use crate::regdiff::DiffConfig;
use crate::solve::SolverConfig;
use crate::source::SourceSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Inverse grid nodes per side.
    pub n: usize,
    pub n_t: usize,
    pub half_width: f64,
    /// Forward-solve grid nodes per side.
    pub n_fine: usize,
    pub fine_half_width: f64,
    pub t_final: f64,
    pub time_convention: TimeStepConvention,
}

impl Default for GridConfig {
    fn default() -> Self {
        Profile::Desk.grid()
    }
}

impl GridConfig {
    pub fn inverse(&self) -> Result<SpaceTimeGrid> {
        Ok(SpaceTimeGrid::new(SpatialGrid2D::centered(self.half_width, self.n)?, self.time()?))
    }

    pub fn fine(&self) -> Result<SpaceTimeGrid> {
        Ok(SpaceTimeGrid::new(SpatialGrid2D::centered(self.fine_half_width, self.n_fine)?, self.time()?))
    }

    fn time(&self) -> Result<TimeGrid> {
        TimeGrid::with_convention(self.t_final, self.n_t, self.time_convention)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub delta: f64,
    pub seed: u64,
    pub start: StartScheme,
    pub stencil: NormalStencil,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { delta: 0.0, seed: 1, start: StartScheme::Taylor, stencil: NormalStencil::OneSided }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// No files are written when absent.
    pub dir: Option<PathBuf>,
    pub pgm: bool,
    pub write_w: bool,
    pub profile_y: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, pgm: true, write_w: true, profile_y: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Shorthand for one of the four built-in test sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub differentiation: DiffConfig,
    #[serde(default)]
    pub assembly: AssemblyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 45 × 45 × 60 inverse grid, 250² forward grid.
    Desk,
    /// 85 × 85 × 120 inverse grid, 500² forward grid.
    Large,
}

impl Profile {
    pub fn grid(self) -> GridConfig {
        let (n, n_t, n_fine) = match self {
            Profile::Desk => (45, 60, 250),
            Profile::Large => (85, 120, 500),
        };
        GridConfig {
            n,
            n_t,
            half_width: 0.5,
            n_fine,
            fine_half_width: 3.0,
            t_final: 1.0,
            time_convention: TimeStepConvention::PerStep,
        }
    }
}

impl RunConfig {
    pub fn for_test(test: u8, profile: Profile) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            test: Some(test),
            source: None,
            grid: profile.grid(),
            synthesis: SynthesisConfig::default(),
            differentiation: DiffConfig::default(),
            assembly: AssemblyConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| IspError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IspError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| IspError::Config(e.to_string()))
    }

    pub fn source_spec(&self) -> Result<SourceSpec> {
        match (&self.test, &self.source) {
            (Some(id), None) => SourceSpec::test(*id),
            (None, Some(s)) => Ok(s.clone()),
            _ => Err(IspError::Config("give exactly one of `test` and `source`".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IspError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.source_spec()?.validate()?;
        self.grid.inverse()?;
        self.grid.fine()?;
        let d = self.synthesis.delta;
        if !(d >= 0.0) || !d.is_finite() {
            return Err(IspError::Config(format!("delta must be non-negative, got {d}")));
        }
        if !(self.differentiation.epsilon > 0.0) || !self.differentiation.epsilon.is_finite() {
            return Err(IspError::Config(format!("differentiation epsilon must be positive, got {}", self.differentiation.epsilon)));
        }
        self.assembly.validate()?;
        self.solver.validate()?;
        Ok(())
    }
}
