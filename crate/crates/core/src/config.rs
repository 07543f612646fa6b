//! Run configuration in TOML.
//!
//! ```toml
//! d = 1
//! s = 2
//! eps = 0.5
//! # theta = 0.1667   default eps / (d + s)
//! # r = 40           default: smallest r with (8d/θ) 2^{-rθ} ≤ 1/2
//! filter = "db6"     # builtin id or path to a coefficient file
//! kernel = "hilbert" # hilbert | conjugate-poisson | identity
//! seed = 1
//! output = "out"
//!
//! [window]
//! level = 5
//! k_min = 0
//! k_max = 5
//! ```
//!
//! Every key is listed on [`RawConfig`]; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dyadic::{default_r, Window};
use crate::error::{Error, Result};
use crate::operators::TestFunction;
use crate::wavelet::{Filter, WaveletSystem};

/// Deepest ancestor chain grid-stats can examine above its reference cube.
const MAX_GRID_LEVEL: i32 = 20;
const MAX_GRID_K: i32 = 36;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawWindow {
    pub level: Option<i32>,
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
    /// Sampling exponent of the pairing tables, `2^-mesh`.
    pub mesh: Option<i32>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Config as written, before defaults and validation.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub d: Option<usize>,
    pub s: Option<u32>,
    pub eps: Option<f64>,
    pub theta: Option<f64>,
    pub r: Option<u32>,
    pub q: Option<u32>,
    pub filter: Option<String>,
    pub kernel: Option<String>,
    /// Width `a` of the conjugate Poisson kernel.
    pub kernel_width: Option<f64>,
    pub seed: Option<u64>,
    pub n_max: Option<u32>,
    pub n_omega: Option<u64>,
    pub mc_samples: Option<u64>,
    pub calibration_samples: Option<u64>,
    /// Mesh exponent for the reference `⟨g, Tf⟩`.
    pub truth_mesh: Option<i32>,
    pub allow_unsatisfied: Option<bool>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub window: RawWindow,
    /// Window for grid-stats; defaults to one deep enough for `r`.
    #[serde(default)]
    pub grid: RawWindow,
    pub f: Option<Vec<Bump>>,
    pub g: Option<Vec<Bump>>,
}

/// Validated configuration with every default resolved.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub s: u32,
    pub eps: f64,
    pub theta: f64,
    pub r: u32,
    pub q: u32,
    pub filter: String,
    pub kernel: String,
    pub kernel_width: f64,
    pub seed: u64,
    pub n_max: Option<u32>,
    pub n_omega: u64,
    pub mc_samples: u64,
    pub calibration_samples: u64,
    pub truth_mesh: i32,
    pub allow_unsatisfied: bool,
    pub output: PathBuf,
    pub window: Window<1>,
    pub mesh: i32,
    pub grid: Window<1>,
    pub f: Vec<Bump>,
    pub g: Vec<Bump>,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {msg}"))
}

/// Default test functions: the pair used throughout the examples, scaled to
/// the window extent.
fn default_bumps(level: i32) -> (Vec<Bump>, Vec<Bump>) {
    let c = (level as f64 - 5.0).exp2();
    let b = |center: f64, radius: f64, weight: f64| Bump { center: center * c, radius: radius * c, weight };
    (vec![b(15.3, 1.5, 1.0)], vec![b(16.6, 1.2, 1.0), b(14.8, 0.7, 0.5)])
}

pub fn test_function(bumps: &[Bump]) -> TestFunction {
    match bumps {
        [b] if b.weight == 1.0 => TestFunction::bump(b.center, b.radius),
        _ => TestFunction::Sum(bumps.iter().map(|b| (b.weight, TestFunction::bump(b.center, b.radius))).collect()),
    }
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<RawConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Resolves defaults and checks every field.
    pub fn resolve(&self) -> Result<RunConfig> {
        let d = self.d.unwrap_or(1);
        if !(1..=2).contains(&d) {
            return Err(invalid("d", format!("{d} not in 1..=2")));
        }
        let s = self.s.ok_or_else(|| invalid("s", "missing"))?;
        if s < 1 {
            return Err(invalid("s", "must be an integer ≥ 1"));
        }
        let eps = self.eps.ok_or_else(|| invalid("eps", "missing"))?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid("eps", format!("{eps} must be positive")));
        }
        let theta = self.theta.unwrap_or(eps / (d as f64 + s as f64));
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid("theta", format!("{theta} not in (0, 1]")));
        }
        let r = self.r.unwrap_or_else(|| default_r(d, theta));
        let kernel = self.kernel.clone().ok_or_else(|| invalid("kernel", "missing"))?;
        if !["hilbert", "conjugate-poisson", "identity"].contains(&kernel.as_str()) {
            return Err(invalid("kernel", format!("unknown kernel '{kernel}'")));
        }
        let kernel_width = self.kernel_width.unwrap_or(0.1);
        if !(kernel_width > 0.0 && kernel_width.is_finite()) {
            return Err(invalid("kernel_width", format!("{kernel_width} must be positive")));
        }
        let filter = self.filter.clone().ok_or_else(|| invalid("filter", "missing"))?;

        let level = self.window.level.unwrap_or(5);
        let k_min = self.window.k_min.unwrap_or(0);
        let k_max = self.window.k_max.unwrap_or(k_min + 5);
        let window = Window::<1>::new(level, k_min, k_max).map_err(|e| invalid("window", e))?;
        let q = self.q.unwrap_or(14);
        if (q as i32) < k_max + 6 {
            return Err(invalid("q", format!("{q} < k_max + 6 = {}", k_max + 6)));
        }
        let mesh = self.window.mesh.unwrap_or(k_max + 7);
        if mesh <= k_max || mesh - k_min > q as i32 {
            return Err(invalid("window.mesh", format!("{mesh} must exceed k_max and satisfy mesh - k_min ≤ q")));
        }
        let truth_mesh = self.truth_mesh.unwrap_or(mesh + 2);

        let grid = self.grid_window(r).map_err(|e| invalid("grid", e))?;

        let (df, dg) = default_bumps(level);
        let f = self.f.clone().unwrap_or(df);
        let g = self.g.clone().unwrap_or(dg);
        for (name, bumps) in [("f", &f), ("g", &g)] {
            if bumps.is_empty() || bumps.iter().any(|b| !(b.radius > 0.0) || !b.center.is_finite() || !b.weight.is_finite()) {
                return Err(invalid(name, "needs at least one bump with positive radius"));
            }
        }

        let allow_unsatisfied = self.allow_unsatisfied.unwrap_or(false);
        let filt = Filter::resolve(&filter).map_err(|e| invalid("filter", e))?;
        if !allow_unsatisfied {
            let sys = WaveletSystem::build_unchecked(&filt, q)?;
            if sys.v < s as i32 - 1 {
                return Err(Error::InsufficientMoments { v: sys.v, required: s as i32 - 1 });
            }
        }

        let cfg = RunConfig {
            d,
            s,
            eps,
            theta,
            r,
            q,
            filter,
            kernel,
            kernel_width,
            seed: self.seed.unwrap_or(1),
            n_max: self.n_max,
            n_omega: self.n_omega.unwrap_or(100),
            mc_samples: self.mc_samples.unwrap_or(100_000),
            calibration_samples: self.calibration_samples.unwrap_or(20),
            truth_mesh,
            allow_unsatisfied,
            output: self.output.clone().unwrap_or_else(|| PathBuf::from("out")),
            window,
            mesh,
            grid,
            f,
            g,
        };
        if cfg.n_omega < 30 {
            return Err(invalid("n_omega", format!("{} < 30", cfg.n_omega)));
        }
        if cfg.mc_samples == 0 {
            return Err(invalid("mc_samples", "must be positive"));
        }
        Ok(cfg)
    }

    /// Explicit `[grid]` values, or the smallest window whose mid-level
    /// reference cube has `r + 2` ancestor levels.
    fn grid_window(&self, r: u32) -> Result<Window<1>> {
        let level = self.grid.level.unwrap_or(MAX_GRID_LEVEL);
        let k_min = self.grid.k_min.unwrap_or(-level);
        let k_max = self.grid.k_max.unwrap_or((k_min + 2 * r as i32 + 4).min(MAX_GRID_K));
        Window::new(level, k_min, k_max)
    }
}

impl RunConfig {
    pub fn filter(&self) -> Result<Filter> {
        Filter::resolve(&self.filter)
    }

    /// Builds the wavelet system; enforces `u ≥ s`, `v ≥ s − 1` unless the
    /// config allows unsatisfied hypotheses.
    pub fn system(&self) -> Result<WaveletSystem> {
        let f = self.filter()?;
        if self.allow_unsatisfied {
            WaveletSystem::build_unchecked(&f, self.q)
        } else {
            WaveletSystem::build(&f, self.q, self.s)
        }
    }

    pub fn test_functions(&self) -> (TestFunction, TestFunction) {
        (test_function(&self.f), test_function(&self.g))
    }

    /// Reference level of grid-stats and its number of ancestor levels.
    pub fn grid_reference_gaps(&self) -> i32 {
        (self.grid.k_min + self.grid.k_max + 1).div_euclid(2) - self.grid.k_min
    }
}

/// Parses and validates TOML text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RawConfig::from_toml(text)?.resolve()
}
