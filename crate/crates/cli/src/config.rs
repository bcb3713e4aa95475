//! Run configuration: a flat `key = value` file (a subset of TOML) with
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use lel_core::exponent_algebra::DEFAULT_TOL_CURVE;
use lel_core::hardy_rellich_eig::{EigOptions, LadderSpec};
use lel_core::io::to_json_string;
use lel_core::radial_ivp::SolverOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Smallest admissible profile grid or ladder base resolution.
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Relative band around the curve reported as on-curve.
    pub tol_curve: f64,
    /// Relative and absolute local error tolerances of the radial integrator.
    pub tol_rel: f64,
    pub tol_abs: f64,
    /// Relative change of successive eigenvalue estimates that stops the eigensolver.
    pub tol_eig: f64,
    /// Output nodes of a radial profile.
    pub grid_nodes: usize,
    /// Radius up to which `solve` integrates.
    pub r_max: f64,
    /// Cells per axis of a region scan.
    pub resolution: usize,
    pub ladder_levels: usize,
    pub ladder_base_nodes: usize,
    pub ladder_decades: f64,
    pub out_dir: PathBuf,
    pub cache: bool,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        let ladder = LadderSpec::default();
        Self {
            tol_curve: DEFAULT_TOL_CURVE,
            tol_rel: solver.rtol,
            tol_abs: solver.atol,
            tol_eig: EigOptions::default().tol,
            grid_nodes: solver.grid_nodes,
            r_max: solver.r_target,
            resolution: 200,
            ladder_levels: ladder.levels,
            ladder_base_nodes: ladder.base_nodes,
            ladder_decades: ladder.decades_per_level,
            out_dir: PathBuf::from("lel-out"),
            cache: true,
            jobs: 0,
        }
    }
}

/// Values that can be overridden from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol_curve: Option<f64>,
    pub tol_rel: Option<f64>,
    pub tol_abs: Option<f64>,
    pub tol_eig: Option<f64>,
    pub grid_nodes: Option<usize>,
    pub resolution: Option<usize>,
    pub ladder_levels: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub no_cache: bool,
    pub jobs: Option<usize>,
}

/// The part of the configuration that can change numerical results.
#[derive(Serialize)]
struct NumericKey<'a> {
    tol_curve: f64,
    tol_rel: f64,
    tol_abs: f64,
    tol_eig: f64,
    grid_nodes: usize,
    r_max: f64,
    ladder_levels: usize,
    ladder_base_nodes: usize,
    ladder_decades: f64,
    version: &'a str,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field.clone() { self.$field = v; })*
            };
        }
        apply!(tol_curve, tol_rel, tol_abs, tol_eig, grid_nodes, resolution, ladder_levels, out_dir, jobs);
        if o.no_cache {
            self.cache = false;
        }
        self.validate().map_err(CliError::Usage)?;
        Ok(self)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (key, x) in [
            ("tol_curve", self.tol_curve),
            ("tol_rel", self.tol_rel),
            ("tol_abs", self.tol_abs),
            ("tol_eig", self.tol_eig),
            ("r_max", self.r_max),
            ("ladder_decades", self.ladder_decades),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(format!("{key} must be positive, got {x}"));
            }
        }
        if self.tol_eig >= 1.0 {
            return Err(format!("tol_eig must be below 1, got {}", self.tol_eig));
        }
        for (key, n) in [("grid_nodes", self.grid_nodes), ("ladder_base_nodes", self.ladder_base_nodes)] {
            if n < MIN_RESOLUTION {
                return Err(format!("{key} must be at least {MIN_RESOLUTION}, got {n}"));
            }
        }
        if self.resolution == 0 {
            return Err("resolution must be at least 1".into());
        }
        if self.ladder_levels == 0 {
            return Err("ladder_levels must be at least 1".into());
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rtol: self.tol_rel,
            atol: self.tol_abs,
            grid_nodes: self.grid_nodes,
            r_target: self.r_max,
            ..SolverOptions::default()
        }
    }

    pub fn eig_options(&self) -> EigOptions {
        EigOptions {
            tol: self.tol_eig,
            marginal_tol: self.tol_curve,
            ..EigOptions::default()
        }
    }

    pub fn ladder_spec(&self) -> LadderSpec {
        LadderSpec {
            levels: self.ladder_levels,
            base_nodes: self.ladder_base_nodes,
            decades_per_level: self.ladder_decades,
        }
    }

    /// SHA-256 over the numerical settings and the tool version, hex encoded.
    pub fn hash(&self) -> String {
        let key = NumericKey {
            tol_curve: self.tol_curve,
            tol_rel: self.tol_rel,
            tol_abs: self.tol_abs,
            tol_eig: self.tol_eig,
            grid_nodes: self.grid_nodes,
            r_max: self.r_max,
            ladder_levels: self.ladder_levels,
            ladder_base_nodes: self.ladder_base_nodes,
            ladder_decades: self.ladder_decades,
            version: env!("CARGO_PKG_VERSION"),
        };
        hex::encode(Sha256::digest(to_json_string(&key).as_bytes()))
    }
}
