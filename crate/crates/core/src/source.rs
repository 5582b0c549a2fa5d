//! Library of true sources p(x).
//!
//! The four reference models are the two-inclusion, three-inclusion,
//! "peaks" and letters A/L sources. Gaussian bumps and raw sample grids
//! cover smooth studies and user supplied data.

use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};
use crate::grid::SpatialGrid2D;

const LETTER_A: &str = include_str!("../data/letter_a.txt");
const LETTER_L: &str = include_str!("../data/letter_l.txt");

fn one() -> f64 {
    1.0
}

fn peaks_scale() -> f64 {
    6.0
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// +1 on the ellipse `4(x-0.15)^2 + y^2/8 <= 0.1^2`, -1 on the square
    /// `max(|x+0.15|, |y|) < 0.1`.
    TwoInclusions {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// 1.5 on a disc, 1 on an ellipse and -1 on a diamond.
    ThreeInclusions {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// The "peaks" surface evaluated at `(scale x, scale y)`, zero outside
    /// `|x|, |y| <= half_width`.
    Peaks {
        #[serde(default = "peaks_scale")]
        scale: f64,
        #[serde(default = "half")]
        half_width: f64,
    },
    /// -1 on the raster letter A (left), +1 on the raster letter L (right).
    LettersAl {
        #[serde(default = "one")]
        amplitude: f64,
    },
    GaussianBumps { bumps: Vec<GaussianBump> },
    /// Samples on a centred square grid, bilinearly interpolated, zero
    /// outside the grid.
    CustomGrid { half_width: f64, n: usize, values: Vec<f64> },
}

impl SourceSpec {
    pub fn test(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Self::TwoInclusions { amplitude: 1.0 }),
            2 => Ok(Self::ThreeInclusions { amplitude: 1.0 }),
            3 => Ok(Self::Peaks { scale: 6.0, half_width: 0.5 }),
            4 => Ok(Self::LettersAl { amplitude: 1.0 }),
            _ => Err(IspError::Config(format!("unknown test id {id}, expected 1..=4"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::TwoInclusions { .. } => "two_inclusions",
            Self::ThreeInclusions { .. } => "three_inclusions",
            Self::Peaks { .. } => "peaks",
            Self::LettersAl { .. } => "letters_al",
            Self::GaussianBumps { .. } => "gaussian_bumps",
            Self::CustomGrid { .. } => "custom_grid",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::CustomGrid { half_width, n, values } => {
                if *n < 2 || values.len() != n * n || !(*half_width > 0.0) {
                    return Err(IspError::Config(format!(
                        "custom grid needs n >= 2, n^2 = {} values and positive half width",
                        n * n
                    )));
                }
            }
            Self::GaussianBumps { bumps } => {
                if bumps.iter().any(|b| !(b.width > 0.0)) {
                    return Err(IspError::Config("gaussian bump widths must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Compiles the description into an evaluator.
    pub fn build(&self) -> Result<Source> {
        self.validate()?;
        let letters = match self {
            Self::LettersAl { .. } => Some((Raster::parse(LETTER_A)?, Raster::parse(LETTER_L)?)),
            _ => None,
        };
        Ok(Source { spec: self.clone(), letters })
    }
}

#[derive(Clone, Debug)]
struct Raster {
    rows: Vec<Vec<bool>>,
}

impl Raster {
    fn parse(text: &str) -> Result<Self> {
        let rows: Vec<Vec<bool>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('%'))
            .map(|l| l.chars().map(|c| c == '#').collect())
            .collect();
        let width = rows.first().map_or(0, Vec::len);
        let well_formed = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('%'))
            .all(|l| l.chars().all(|c| c == '#' || c == '.'));
        if !well_formed || rows.is_empty() || rows.iter().any(|r| r.len() != width) {
            return Err(IspError::Parse("letter raster must be a non-empty rectangle".into()));
        }
        Ok(Self { rows })
    }

    /// Whether `(x, y)` falls on an ink cell when the raster fills `bbox`.
    fn hit(&self, bbox: [f64; 4], x: f64, y: f64) -> bool {
        let [x0, x1, y0, y1] = bbox;
        if x < x0 || x >= x1 || y <= y0 || y > y1 {
            return false;
        }
        let ncols = self.rows[0].len();
        let nrows = self.rows.len();
        let col = (((x - x0) / (x1 - x0)) * ncols as f64) as usize;
        let row = (((y1 - y) / (y1 - y0)) * nrows as f64) as usize;
        self.rows[row.min(nrows - 1)][col.min(ncols - 1)]
    }
}

const A_BOX: [f64; 4] = [-0.42, -0.04, -0.3, 0.3];
const L_BOX: [f64; 4] = [0.08, 0.4, -0.3, 0.3];

/// Evaluable source.
#[derive(Clone, Debug)]
pub struct Source {
    spec: SourceSpec,
    letters: Option<(Raster, Raster)>,
}

impl Source {
    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match &self.spec {
            SourceSpec::TwoInclusions { amplitude } => {
                if 4.0 * (x - 0.15).powi(2) + y * y / 8.0 <= 0.01 {
                    *amplitude
                } else if (x + 0.15).abs().max(y.abs()) < 0.1 {
                    -amplitude
                } else {
                    0.0
                }
            }
            SourceSpec::ThreeInclusions { amplitude } => {
                if (x - 0.25).powi(2) + y * y < 0.12 * 0.12 {
                    1.5 * amplitude
                } else if 4.0 * x * x + (y + 0.25).powi(2) < 0.15 * 0.15 {
                    *amplitude
                } else if (x + 0.25).abs() + y.abs() < 0.17 {
                    -amplitude
                } else {
                    0.0
                }
            }
            SourceSpec::Peaks { scale, half_width } => {
                if x.abs() > *half_width || y.abs() > *half_width {
                    0.0
                } else {
                    peaks(scale * x, scale * y)
                }
            }
            SourceSpec::LettersAl { amplitude } => {
                let (a, l) = self.letters.as_ref().expect("letters compiled in build()");
                if a.hit(A_BOX, x, y) {
                    -amplitude
                } else if l.hit(L_BOX, x, y) {
                    *amplitude
                } else {
                    0.0
                }
            }
            SourceSpec::GaussianBumps { bumps } => bumps
                .iter()
                .map(|b| b.amplitude * (-((x - b.x).powi(2) + (y - b.y).powi(2)) / (b.width * b.width)).exp())
                .sum(),
            SourceSpec::CustomGrid { half_width, n, values } => bilinear_centered(*half_width, *n, values, x, y),
        }
    }

    /// Samples on every node of `grid`, row-major with x outer.
    pub fn sample(&self, grid: &SpatialGrid2D) -> Vec<f64> {
        let n = grid.n();
        let mut out = Vec::with_capacity(n * n);
        for m0 in 0..n {
            for n0 in 0..n {
                let (x, y) = grid.node_0(m0, n0);
                out.push(self.eval(x, y));
            }
        }
        out
    }
}

/// The classic "peaks" test surface.
pub fn peaks(x: f64, y: f64) -> f64 {
    3.0 * (1.0 - x).powi(2) * (-x * x - (y + 1.0).powi(2)).exp()
        - 10.0 * (x / 5.0 - x.powi(3) - y.powi(5)) * (-x * x - y * y).exp()
        - (-(x + 1.0).powi(2) - y * y).exp() / 3.0
}

fn bilinear_centered(half_width: f64, n: usize, values: &[f64], x: f64, y: f64) -> f64 {
    if x.abs() > half_width || y.abs() > half_width {
        return 0.0;
    }
    let h = 2.0 * half_width / (n - 1) as f64;
    let fx = ((x + half_width) / h).clamp(0.0, (n - 1) as f64);
    let fy = ((y + half_width) / h).clamp(0.0, (n - 1) as f64);
    let i = (fx.floor() as usize).min(n - 2);
    let k = (fy.floor() as usize).min(n - 2);
    let (sx, sy) = (fx - i as f64, fy - k as f64);
    let v = |a: usize, b: usize| values[a * n + b];
    (1.0 - sx) * (1.0 - sy) * v(i, k) + sx * (1.0 - sy) * v(i + 1, k) + (1.0 - sx) * sy * v(i, k + 1) + sx * sy * v(i + 1, k + 1)
}
