//! Subcommand bodies. Each command turns its arguments into an [`Artifact`];
//! [`Lab::run`] handles the cache and writes the files.

use std::path::{Path, PathBuf};

use lel_core::exponent_algebra::{
    classify, derive_scaling, jl_curve_q, jl_diagonal, sobolev_q, ParameterTriple, RegionVerdict, ScalingData,
};
use lel_core::hardy_rellich_eig::{principal_eigenvalue, verdict_from_ladder, LadderReport};
use lel_core::io::{fmt_f64, to_json_string, SCHEMA_VERSION};
use lel_core::profile_analysis::compare;
use lel_core::radial_ivp::{integrate, shoot, InitialData, ProfileMetadata, RadialProfile};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cache::{request_key, Artifact, Cache};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::scan::{scan, ScanWindow};

/// Bisection tolerance used when tracing the curve.
const CURVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveInit {
    Fixed { u0: f64, v0: f64 },
    Shoot { u0: f64, bracket: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Classify { p: f64, q: f64, n: u32 },
    Curve { n: u32, p_range: (f64, f64), points: usize },
    Scan { n: u32, window: ScanWindow },
    Solve { p: f64, q: f64, n: u32, init: SolveInit },
    Compare { profile: PathBuf },
    Eig { p: f64, q: f64, n: u32 },
}

/// What a finished command reports back.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifact: Artifact,
    pub written: Vec<PathBuf>,
    pub cache_hit: bool,
}

pub struct Lab {
    pub config: RunConfig,
    pub cache: Cache,
}

fn tag(x: f64) -> String {
    format!("{x}")
}

fn params_tag(p: f64, q: f64, n: u32) -> String {
    format!("p{}_q{}_N{n}", tag(p), tag(q))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct ClassifyReport {
    schema_version: u32,
    params: ParameterTriple,
    code: u8,
    verdict: RegionVerdict,
    scaling: Option<ScalingData>,
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    schema_version: u32,
    n: u32,
    file: &'a str,
    points: usize,
    roots: usize,
    diagonal: Option<f64>,
}

#[derive(Serialize)]
struct ShotSummary {
    v0: f64,
    bracket: (f64, f64),
    iterations: usize,
    reached_target: bool,
    r_trust: f64,
    theta: Option<f64>,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    schema_version: u32,
    profile: &'a str,
    metadata: ProfileMetadata,
    shot: Option<ShotSummary>,
}

impl Lab {
    pub fn new(config: RunConfig) -> Self {
        let cache = Cache::locate(&config.out_dir);
        Self { config, cache }
    }

    /// Run a command on a worker pool of `config.jobs` threads. Cached
    /// commands reuse a stored artifact when one exists for the same request.
    pub fn run(&self, cmd: &Command) -> Result<Outcome> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", self.config.jobs)))?;
        pool.install(|| self.run_inner(cmd))
    }

    fn run_inner(&self, cmd: &Command) -> Result<Outcome> {
        if let Command::Classify { p, q, n } = *cmd {
            return Ok(Outcome {
                artifact: self.classify(p, q, n)?,
                written: Vec::new(),
                cache_hit: false,
            });
        }
        let key = self.request_key(cmd)?;
        let cached = if self.config.cache { self.cache.load(&key) } else { None };
        let cache_hit = cached.is_some();
        let artifact = match cached {
            Some(a) => a,
            None => {
                let a = self.compute(cmd, &key)?;
                if self.config.cache {
                    self.cache.store(&key, &a)?;
                }
                a
            }
        };
        let written = artifact.write_to(&self.config.out_dir)?;
        Ok(Outcome {
            artifact,
            written,
            cache_hit,
        })
    }

    /// Hash of the command, its arguments (input file contents for
    /// `compare`) and the numerical configuration.
    pub fn request_key(&self, cmd: &Command) -> Result<String> {
        let cfg = self.config.hash();
        let f = |x: f64| fmt_f64(x);
        let parts: Vec<String> = match cmd {
            Command::Classify { p, q, n } => vec!["classify".into(), f(*p), f(*q), n.to_string()],
            Command::Curve { n, p_range, points } => vec![
                "curve".into(),
                n.to_string(),
                f(p_range.0),
                f(p_range.1),
                points.to_string(),
            ],
            Command::Scan { n, window } => vec![
                "scan".into(),
                n.to_string(),
                f(window.p.0),
                f(window.p.1),
                f(window.q.0),
                f(window.q.1),
                self.config.resolution.to_string(),
            ],
            Command::Solve { p, q, n, init } => {
                let mut v = vec!["solve".into(), f(*p), f(*q), n.to_string()];
                match init {
                    SolveInit::Fixed { u0, v0 } => v.extend(["fixed".into(), f(*u0), f(*v0)]),
                    SolveInit::Shoot { u0, bracket } => {
                        v.extend(["shoot".into(), f(*u0), f(bracket.0), f(bracket.1)])
                    }
                }
                v
            }
            Command::Compare { profile } => {
                let (meta, csv) = profile_paths(profile);
                vec![
                    "compare".into(),
                    hex::encode(Sha256::digest(read(&meta)?)),
                    hex::encode(Sha256::digest(read(&csv)?)),
                ]
            }
            Command::Eig { p, q, n } => vec!["eig".into(), f(*p), f(*q), n.to_string()],
        };
        let mut refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        refs.push(&cfg);
        Ok(request_key(&refs))
    }

    fn compute(&self, cmd: &Command, key: &str) -> Result<Artifact> {
        let short = &key[..12];
        match cmd {
            Command::Classify { p, q, n } => self.classify(*p, *q, *n),
            Command::Curve { n, p_range, points } => self.curve(*n, *p_range, *points, short),
            Command::Scan { n, window } => self.scan(*n, *window, short),
            Command::Solve { p, q, n, init } => self.solve(*p, *q, *n, *init, short),
            Command::Compare { profile } => self.compare(profile, short),
            Command::Eig { p, q, n } => self.eig(*p, *q, *n, short),
        }
    }

    pub fn classify(&self, p: f64, q: f64, n: u32) -> Result<Artifact> {
        let params = ParameterTriple::new(p, q, n)?;
        let verdict = classify(params, self.config.tol_curve);
        let report = ClassifyReport {
            schema_version: SCHEMA_VERSION,
            params,
            code: verdict.code(),
            verdict,
            scaling: derive_scaling(params).ok(),
        };
        Ok(Artifact {
            files: Vec::new(),
            stdout: to_json_string(&report),
        })
    }

    fn curve(&self, n: u32, p_range: (f64, f64), points: usize, short: &str) -> Result<Artifact> {
        if n < 3 {
            return Err(lel_core::Error::Domain(format!("requires N >= 3, got N = {n}")).into());
        }
        let (lo, hi) = p_range;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) || points == 0 {
            return Err(CliError::Usage(format!("invalid p range [{lo}, {hi}] with {points} points")));
        }
        let ps: Vec<f64> = (0..points)
            .map(|k| if points == 1 { lo } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
            .collect();
        let rows: Vec<(f64, Option<f64>, Option<f64>)> = ps
            .par_iter()
            .map(|&p| {
                let q_curve = jl_curve_q(n, p, CURVE_TOL).ok().and_then(|r| r.q());
                let q_sob = sobolev_q(p, n).filter(|&q| q <= p);
                (p, q_sob, q_curve)
            })
            .collect();
        let cell = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let mut csv = String::from("p,q_sobolev,q_curve\n");
        for &(p, s, c) in &rows {
            csv.push_str(&format!("{},{},{}\n", fmt_f64(p), cell(s), cell(c)));
        }
        let name = format!("curve_N{n}_{short}.csv");
        let summary = CurveSummary {
            schema_version: SCHEMA_VERSION,
            n,
            file: &name,
            points,
            roots: rows.iter().filter(|r| r.2.is_some()).count(),
            diagonal: jl_diagonal(n, CURVE_TOL)?,
        };
        Ok(Artifact {
            stdout: to_json_string(&summary),
            files: vec![(name, csv.into_bytes())],
        })
    }

    fn scan(&self, n: u32, window: ScanWindow, short: &str) -> Result<Artifact> {
        let res = self.config.resolution;
        let result = scan(n, window, res, self.config.tol_curve, &self.config.hash())?;
        let stem = format!("scan_N{n}_r{res}_{short}");
        let header = result.header_json();
        Ok(Artifact {
            files: vec![
                (format!("{stem}.csv"), result.to_csv().into_bytes()),
                (format!("{stem}.json"), header.clone().into_bytes()),
            ],
            stdout: header,
        })
    }

    fn solve(&self, p: f64, q: f64, n: u32, init: SolveInit, short: &str) -> Result<Artifact> {
        let params = ParameterTriple::new(p, q, n)?;
        let opts = self.config.solver_options();
        let (profile, shot, init_tag) = match init {
            SolveInit::Fixed { u0, v0 } => {
                let prof = integrate(params, InitialData::new(u0, v0)?, opts.r_target, &opts)?;
                (prof, None, format!("u{}_v{}", tag(u0), tag(v0)))
            }
            SolveInit::Shoot { u0, bracket } => {
                let out = shoot(params, u0, bracket, &opts)?;
                let summary = ShotSummary {
                    v0: out.v0,
                    bracket: out.bracket,
                    iterations: out.iterations,
                    reached_target: out.reached_target,
                    r_trust: out.r_trust,
                    theta: out.theta,
                };
                (out.profile, Some(summary), format!("u{}_shot", tag(u0)))
            }
        };
        let stem = format!("solve_{}_{init_tag}_{short}", params_tag(p, q, n));
        let csv_name = format!("{stem}.csv");
        let summary = SolveSummary {
            schema_version: SCHEMA_VERSION,
            profile: &csv_name,
            metadata: profile.metadata(),
            shot,
        };
        Ok(Artifact {
            stdout: to_json_string(&summary),
            files: vec![
                (csv_name.clone(), profile.to_csv().into_bytes()),
                (format!("{stem}.json"), profile.metadata_json().into_bytes()),
            ],
        })
    }

    fn compare(&self, path: &Path, short: &str) -> Result<Artifact> {
        let (meta_path, csv_path) = profile_paths(path);
        let meta: ProfileMetadata = serde_json::from_slice(&read(&meta_path)?).map_err(|e| CliError::Config {
            path: meta_path.clone(),
            message: format!("not a profile metadata file: {e}"),
        })?;
        let csv = String::from_utf8_lossy(&read(&csv_path)?).into_owned();
        let profile = RadialProfile::from_serialized(&meta, &csv)?;
        let scaling = derive_scaling(meta.params)?;
        let report = compare(&profile, &scaling)?;
        let t = meta.params;
        let stem = format!("compare_{}_{short}", params_tag(t.p, t.q, t.n));
        let json = report.to_json();
        Ok(Artifact {
            files: vec![
                (format!("{stem}.json"), json.clone().into_bytes()),
                (format!("{stem}.crossings.csv"), report.crossings_csv().into_bytes()),
            ],
            stdout: json,
        })
    }

    fn eig(&self, p: f64, q: f64, n: u32, short: &str) -> Result<Artifact> {
        let params = ParameterTriple::new(p, q, n)?;
        let sc = derive_scaling(params)?;
        let opts = self.config.eig_options();
        opts.validate()?;
        let spec = self.config.ladder_spec();
        let reports = spec
            .annuli()?
            .par_iter()
            .map(|a| principal_eigenvalue(a, n, sc.gamma, &opts))
            .collect::<lel_core::Result<Vec<_>>>()?;
        let ladder = LadderReport::assemble(n, sc.gamma, reports)?;
        let ladder_csv = ladder.to_csv();
        let profile_csv = ladder.top.profile_csv();
        let report = verdict_from_ladder(params, ladder, &opts)?;
        let stem = format!("eig_{}_L{}_{short}", params_tag(p, q, n), spec.levels);
        let json = report.to_json();
        Ok(Artifact {
            files: vec![
                (format!("{stem}.csv"), ladder_csv.into_bytes()),
                (format!("{stem}.json"), json.clone().into_bytes()),
                (format!("{stem}.profile.csv"), profile_csv.into_bytes()),
            ],
            stdout: json,
        })
    }
}

/// The metadata and CSV halves of a stored profile, given either one.
pub fn profile_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("csv"))
}
