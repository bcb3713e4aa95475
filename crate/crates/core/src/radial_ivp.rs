//! Regular radial solutions of `-Δu = v^p`, `-Δv = u^q` started at the origin.
//!
//! Integration runs in `t = ln r`. Near the origin the state is
//! `(u, v, r u', r v')`. Once the profile is comparable to the singular
//! solution it switches to the deviations `D = r^alpha u - a`,
//! `E = r^beta v - b` and their `t`-derivatives, so that the gap to the
//! singular solution keeps its relative precision over many decades of `r`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::closed_form::log_spaced;
use crate::error::{Error, Result};
use crate::exponent_algebra::{derive_scaling, ParameterTriple, ScalingData};
use crate::io::{csv_string, parse_csv, to_json_string, SCHEMA_VERSION};
use crate::ode::{DenseStep, Dopri5, OdeFailure, OdeSystem, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: f64,
    pub v0: f64,
}

impl InitialData {
    pub fn new(u0: f64, v0: f64) -> Result<Self> {
        if !(u0 > 0.0 && v0 > 0.0 && u0.is_finite() && v0.is_finite()) {
            return Err(Error::Domain(format!("initial values must be positive, got u0={u0}, v0={v0}")));
        }
        Ok(Self { u0, v0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Event location tolerance, relative in `r`.
    pub event_tol: f64,
    /// Smallest admissible step in `ln r`.
    pub min_step: f64,
    pub max_steps: usize,
    pub grid_nodes: usize,
    pub r_target: f64,
    /// An entire profile must end below this fraction of its central values.
    pub decay_threshold: f64,
    /// Relative bracket width at which shooting stops.
    pub v0_tol: f64,
    pub max_iter: usize,
    /// Largest gap difference between the final shooting brackets that is
    /// still trusted when truncating the shot profile.
    pub trust_tol: f64,
    /// A profile whose gaps to the singular solution are below this at `r_max`
    /// is attracted to it and counts as decayed.
    pub attraction_tol: f64,
    /// Refine an exhausted shooting bracket by superposing its two trajectories.
    pub superpose: bool,
    /// Largest gap difference between the bracket trajectories treated as linear.
    pub linear_tol: f64,
    /// A superposed profile ends once both gaps fall below this level, which
    /// sits well above the rounding noise of the deviation variables.
    pub gap_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            event_tol: 1e-12,
            min_step: 1e-12,
            max_steps: 1_000_000,
            grid_nodes: 2048,
            r_target: 1e6,
            decay_threshold: 0.25,
            v0_tol: 1e-15,
            max_iter: 200,
            trust_tol: 1e-9,
            attraction_tol: 1e-6,
            superpose: true,
            linear_tol: 1e-5,
            gap_floor: 1e-11,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("event_tol", self.event_tol),
            ("min_step", self.min_step),
            ("r_target", self.r_target),
            ("decay_threshold", self.decay_threshold),
            ("v0_tol", self.v0_tol),
            ("trust_tol", self.trust_tol),
            ("attraction_tol", self.attraction_tol),
            ("linear_tol", self.linear_tol),
            ("gap_floor", self.gap_floor),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::InvalidOptions(format!("{name} must be positive, got {x}")));
            }
        }
        if self.grid_nodes < 16 {
            return Err(Error::InvalidOptions(format!("grid_nodes must be at least 16, got {}", self.grid_nodes)));
        }
        if self.max_steps == 0 || self.max_iter == 0 {
            return Err(Error::InvalidOptions("max_steps and max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "r")]
pub enum Classification {
    EntirePositive,
    UHitsZero(f64),
    VHitsZero(f64),
    Truncated,
}

impl Classification {
    pub fn zero_radius(&self) -> Option<f64> {
        match *self {
            Classification::UHitsZero(r) | Classification::VHitsZero(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    /// Smallest accepted step in `ln r`.
    pub min_step: f64,
    pub r_start: f64,
    /// Radius where the state switched to deviation variables.
    pub r_switch: Option<f64>,
}

/// Values of a profile at one radius. `gap_u = 1 - u/u_s`, `gap_v = 1 - v/v_s`
/// (NaN when no singular solution exists).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub r: f64,
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
    pub gap_u: f64,
    pub gap_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frame {
    n: f64,
    p: f64,
    q: f64,
    alpha: f64,
    beta: f64,
    s: f64,
    t: f64,
    a: f64,
    b: f64,
    has_scaling: bool,
}

impl Frame {
    fn new(params: ParameterTriple) -> Self {
        let (p, q) = (params.p, params.q);
        let alpha = 2.0 * (p + 1.0) / (p * q - 1.0);
        let beta = 2.0 * (q + 1.0) / (p * q - 1.0);
        match derive_scaling(params) {
            Ok(sc) => Self {
                n: params.dim(),
                p,
                q,
                alpha: sc.alpha,
                beta: sc.beta,
                s: sc.s,
                t: sc.t,
                a: sc.a,
                b: sc.b,
                has_scaling: true,
            },
            Err(_) => Self {
                n: params.dim(),
                p,
                q,
                alpha,
                beta,
                s: f64::NAN,
                t: f64::NAN,
                a: f64::NAN,
                b: f64::NAN,
                has_scaling: false,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rep {
    Plain,
    Deviation,
}

struct PlainSystem {
    nm2: f64,
    p: f64,
    q: f64,
}

impl OdeSystem<4> for PlainSystem {
    fn rhs(&self, t: f64, y: &[f64; 4]) -> [f64; 4] {
        let r2 = (2.0 * t).exp();
        [
            y[2],
            y[3],
            -self.nm2 * y[2] - r2 * y[1].max(0.0).powf(self.p),
            -self.nm2 * y[3] - r2 * y[0].max(0.0).powf(self.q),
        ]
    }
}

struct DeviationSystem {
    cu: f64,
    cv: f64,
    s: f64,
    t: f64,
    a: f64,
    b: f64,
    ap: f64,
    bp: f64,
    p: f64,
    q: f64,
}

/// `(reference + e)_+^k - reference^k` without cancellation for small `e`.
fn power_increment(e: f64, reference: f64, ref_pow: f64, k: f64) -> f64 {
    if reference + e <= 0.0 {
        -ref_pow
    } else {
        ref_pow * (k * (e / reference).ln_1p()).exp_m1()
    }
}

impl OdeSystem<4> for DeviationSystem {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> [f64; 4] {
        [
            y[2],
            y[3],
            -self.cu * y[2] + self.s * y[0] - power_increment(y[1], self.b, self.bp, self.p),
            -self.cv * y[3] + self.t * y[1] - power_increment(y[0], self.a, self.ap, self.q),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    rep: Rep,
    step: DenseStep<4>,
}

/// Continuous evaluation of a profile between its grid nodes.
pub trait ProfileEval: std::fmt::Debug + Send + Sync {
    fn eval(&self, r: f64) -> Option<Sample>;
    /// The same solution seen through `r -> R r` with the scale-invariant weights.
    fn rescaled(&self, big_r: f64) -> Arc<dyn ProfileEval>;
}

/// Continuous representation of an integrated profile.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    frame: Frame,
    init: InitialData,
    segments: Vec<Segment>,
    t_start: f64,
    t_end: f64,
    /// Evaluation at `r` reads the underlying solution at `scale_r * r`.
    scale_r: f64,
}

impl DenseSolution {
    /// Radii covered in profile coordinates (below the first radius the Taylor start applies).
    pub fn r_range(&self) -> (f64, f64) {
        (self.t_start.exp() / self.scale_r, self.t_end.exp() / self.scale_r)
    }

    fn eval_inner(&self, r: f64) -> Option<Sample> {
        if !(r >= 0.0) {
            return None;
        }
        let rr = r * self.scale_r;
        let t = rr.ln();
        if t > self.t_end + 1e-12 {
            return None;
        }
        let raw = if t < self.t_start {
            taylor_sample(&self.frame, self.init, rr)
        } else {
            let idx = self
                .segments
                .partition_point(|s| s.step.t1() < t)
                .min(self.segments.len() - 1);
            let seg = &self.segments[idx];
            sample_from_state(&self.frame, seg.rep, t, &seg.step.eval(t))
        };
        Some(self.unscale(raw, r))
    }

    pub fn eval(&self, r: f64) -> Option<Sample> {
        self.eval_inner(r)
    }

    fn unscale(&self, s: Sample, r: f64) -> Sample {
        if self.scale_r == 1.0 {
            return s;
        }
        let (fu, fv) = (self.scale_r.powf(self.frame.alpha), self.scale_r.powf(self.frame.beta));
        Sample {
            r,
            u: fu * s.u,
            v: fv * s.v,
            du: fu * self.scale_r * s.du,
            dv: fv * self.scale_r * s.dv,
            ..s
        }
    }
}

impl ProfileEval for DenseSolution {
    fn eval(&self, r: f64) -> Option<Sample> {
        self.eval_inner(r)
    }

    fn rescaled(&self, big_r: f64) -> Arc<dyn ProfileEval> {
        let mut d = self.clone();
        d.scale_r *= big_r;
        Arc::new(d)
    }
}

/// `lo + theta (hi - lo)` for two trajectories whose initial data differ by
/// a rounding unit, valid while their difference stays in the linear regime.
#[derive(Debug, Clone)]
pub struct Superposition {
    lo: Arc<dyn ProfileEval>,
    hi: Arc<dyn ProfileEval>,
    theta: f64,
}

impl ProfileEval for Superposition {
    fn eval(&self, r: f64) -> Option<Sample> {
        let (a, b) = (self.lo.eval(r)?, self.hi.eval(r)?);
        let mix = |x: f64, y: f64| x + self.theta * (y - x);
        Some(Sample {
            r,
            u: mix(a.u, b.u),
            v: mix(a.v, b.v),
            du: mix(a.du, b.du),
            dv: mix(a.dv, b.dv),
            gap_u: mix(a.gap_u, b.gap_u),
            gap_v: mix(a.gap_v, b.gap_v),
        })
    }

    fn rescaled(&self, big_r: f64) -> Arc<dyn ProfileEval> {
        Arc::new(Superposition {
            lo: self.lo.rescaled(big_r),
            hi: self.hi.rescaled(big_r),
            theta: self.theta,
        })
    }
}

fn taylor_coefficients(frame: &Frame, init: InitialData) -> [f64; 4] {
    let (u0, v0, n, p, q) = (init.u0, init.v0, frame.n, frame.p, frame.q);
    let au = v0.powf(p) / (2.0 * n);
    let av = u0.powf(q) / (2.0 * n);
    let cu = p * v0.powf(p - 1.0) * u0.powf(q) / (8.0 * n * (n + 2.0));
    let cv = q * u0.powf(q - 1.0) * v0.powf(p) / (8.0 * n * (n + 2.0));
    [au, av, cu, cv]
}

fn taylor_sample(frame: &Frame, init: InitialData, r: f64) -> Sample {
    let [au, av, cu, cv] = taylor_coefficients(frame, init);
    let r2 = r * r;
    let u = init.u0 - au * r2 + cu * r2 * r2;
    let v = init.v0 - av * r2 + cv * r2 * r2;
    let du = -2.0 * au * r + 4.0 * cu * r2 * r;
    let dv = -2.0 * av * r + 4.0 * cv * r2 * r;
    let (gap_u, gap_v) = if frame.has_scaling && r > 0.0 {
        (1.0 - u * r.powf(frame.alpha) / frame.a, 1.0 - v * r.powf(frame.beta) / frame.b)
    } else {
        (f64::NAN, f64::NAN)
    };
    Sample {
        r,
        u,
        v,
        du,
        dv,
        gap_u,
        gap_v,
    }
}

fn sample_from_state(frame: &Frame, rep: Rep, t: f64, y: &[f64; 4]) -> Sample {
    let r = t.exp();
    match rep {
        Rep::Plain => {
            let (gap_u, gap_v) = if frame.has_scaling {
                (
                    1.0 - (frame.alpha * t).exp() * y[0] / frame.a,
                    1.0 - (frame.beta * t).exp() * y[1] / frame.b,
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            Sample {
                r,
                u: y[0],
                v: y[1],
                du: y[2] / r,
                dv: y[3] / r,
                gap_u,
                gap_v,
            }
        }
        Rep::Deviation => {
            let x = frame.a + y[0];
            let yy = frame.b + y[1];
            let ra = (-frame.alpha * t).exp();
            let rb = (-frame.beta * t).exp();
            Sample {
                r,
                u: ra * x,
                v: rb * yy,
                du: ra / r * (y[2] - frame.alpha * x),
                dv: rb / r * (y[3] - frame.beta * yy),
                gap_u: -y[0] / frame.a,
                gap_v: -y[1] / frame.b,
            }
        }
    }
}

/// Values of `u` and `v` (up to positive factors) whose sign change is an event.
fn levels(frame: &Frame, rep: Rep, y: &[f64; 4]) -> [f64; 2] {
    match rep {
        Rep::Plain => [y[0], y[1]],
        Rep::Deviation => [frame.a + y[0], frame.b + y[1]],
    }
}

/// A sampled radial profile with its classification.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub params: ParameterTriple,
    pub init: InitialData,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub gap_u: Vec<f64>,
    pub gap_v: Vec<f64>,
    pub r_max: f64,
    pub classification: Classification,
    pub stats: IntegratorStats,
    pub dense: Option<Arc<dyn ProfileEval>>,
}

/// Everything in a profile except the sampled columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub schema_version: u32,
    pub params: ParameterTriple,
    pub init: InitialData,
    pub r_max: f64,
    pub classification: Classification,
    pub stats: IntegratorStats,
    pub nodes: usize,
}

pub const PROFILE_COLUMNS: [&str; 5] = ["r", "u", "v", "du", "dv"];

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            r: self.r[i],
            u: self.u[i],
            v: self.v[i],
            du: self.du[i],
            dv: self.dv[i],
            gap_u: self.gap_u[i],
            gap_v: self.gap_v[i],
        }
    }

    /// Evaluate between grid nodes: dense output when available, otherwise
    /// linear interpolation in `ln r` of the gaps and of `ln u`, `ln v`.
    pub fn eval(&self, r: f64) -> Option<Sample> {
        if let Some(d) = &self.dense {
            return d.eval(r);
        }
        let n = self.r.len();
        if n == 0 || r < self.r[0] || r > self.r[n - 1] {
            return None;
        }
        let j = self.r.partition_point(|&x| x < r).clamp(1, n - 1);
        let i = j - 1;
        let w = (r.ln() - self.r[i].ln()) / (self.r[j].ln() - self.r[i].ln());
        let lerp = |a: f64, b: f64| a + w * (b - a);
        let geo = |a: f64, b: f64| {
            if a > 0.0 && b > 0.0 {
                (lerp(a.ln(), b.ln())).exp()
            } else {
                lerp(a, b)
            }
        };
        Some(Sample {
            r,
            u: geo(self.u[i], self.u[j]),
            v: geo(self.v[i], self.v[j]),
            du: lerp(self.du[i], self.du[j]),
            dv: lerp(self.dv[i], self.dv[j]),
            gap_u: lerp(self.gap_u[i], self.gap_u[j]),
            gap_v: lerp(self.gap_v[i], self.gap_v[j]),
        })
    }

    pub fn metadata(&self) -> ProfileMetadata {
        ProfileMetadata {
            schema_version: SCHEMA_VERSION,
            params: self.params,
            init: self.init,
            r_max: self.r_max,
            classification: self.classification,
            stats: self.stats,
            nodes: self.r.len(),
        }
    }

    pub fn metadata_json(&self) -> String {
        to_json_string(&self.metadata())
    }

    pub fn to_csv(&self) -> String {
        let rows = (0..self.len()).map(|i| [self.r[i], self.u[i], self.v[i], self.du[i], self.dv[i]]);
        csv_string(&PROFILE_COLUMNS, rows)
    }

    /// Rebuild a profile from its serialized metadata and CSV columns.
    /// Gaps are recomputed from `u` and `v`.
    pub fn from_serialized(meta: &ProfileMetadata, csv: &str) -> Result<Self> {
        let (header, rows) =
            parse_csv(csv).ok_or_else(|| Error::Domain("malformed profile CSV".into()))?;
        if header != PROFILE_COLUMNS {
            return Err(Error::Domain(format!("unexpected profile columns {header:?}")));
        }
        let col = |k: usize| rows.iter().map(|row| row[k]).collect::<Vec<f64>>();
        let (r, u, v) = (col(0), col(1), col(2));
        let frame = Frame::new(meta.params);
        let (gap_u, gap_v) = gaps_from_values(&frame, &r, &u, &v);
        Ok(Self {
            params: meta.params,
            init: meta.init,
            du: col(3),
            dv: col(4),
            r,
            u,
            v,
            gap_u,
            gap_v,
            r_max: meta.r_max,
            classification: meta.classification,
            stats: meta.stats,
            dense: None,
        })
    }

    /// The singular solution sampled at `radii`, dressed as a profile.
    /// It has no finite central value, so it is never classified as entire.
    pub fn singular_samples(scaling: &ScalingData, radii: &[f64]) -> Result<Self> {
        let mut out = Self::empty(scaling.params, f64::INFINITY, f64::INFINITY);
        for &r in radii {
            let s = crate::closed_form::eval_singular(scaling, r)?;
            out.push(Sample {
                r,
                u: s.u,
                v: s.v,
                du: s.du,
                dv: s.dv,
                gap_u: 0.0,
                gap_v: 0.0,
            });
        }
        out.r_max = radii.last().copied().unwrap_or(0.0);
        Ok(out)
    }

    /// `(c u_s, c^{?} v_s)`-type pseudo-profiles: `u = cu u_s`, `v = cv v_s`.
    pub fn scaled_singular_samples(scaling: &ScalingData, radii: &[f64], cu: f64, cv: f64) -> Result<Self> {
        let mut out = Self::singular_samples(scaling, radii)?;
        for i in 0..out.len() {
            out.u[i] *= cu;
            out.du[i] *= cu;
            out.v[i] *= cv;
            out.dv[i] *= cv;
            out.gap_u[i] = 1.0 - cu;
            out.gap_v[i] = 1.0 - cv;
        }
        Ok(out)
    }

    fn empty(params: ParameterTriple, u0: f64, v0: f64) -> Self {
        Self {
            params,
            init: InitialData { u0, v0 },
            r: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            du: Vec::new(),
            dv: Vec::new(),
            gap_u: Vec::new(),
            gap_v: Vec::new(),
            r_max: 0.0,
            classification: Classification::Truncated,
            stats: IntegratorStats {
                steps: 0,
                rejected: 0,
                min_step: f64::NAN,
                r_start: f64::NAN,
                r_switch: None,
            },
            dense: None,
        }
    }

    fn push(&mut self, s: Sample) {
        self.r.push(s.r);
        self.u.push(s.u);
        self.v.push(s.v);
        self.du.push(s.du);
        self.dv.push(s.dv);
        self.gap_u.push(s.gap_u);
        self.gap_v.push(s.gap_v);
    }
}

fn gaps_from_values(frame: &Frame, r: &[f64], u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if !frame.has_scaling {
        return (vec![f64::NAN; r.len()], vec![f64::NAN; r.len()]);
    }
    let gu = r
        .iter()
        .zip(u)
        .map(|(&r, &u)| 1.0 - u * r.powf(frame.alpha) / frame.a)
        .collect();
    let gv = r
        .iter()
        .zip(v)
        .map(|(&r, &v)| 1.0 - v * r.powf(frame.beta) / frame.b)
        .collect();
    (gu, gv)
}

enum Stop {
    End,
    Event { u_first: bool, t: f64 },
    Switch,
}

struct Run {
    segments: Vec<Segment>,
    steps: usize,
    rejected: usize,
    min_step: f64,
}

fn underflow(t: f64, h: f64, opts: &SolverOptions) -> Error {
    Error::StepUnderflow {
        r: t.exp(),
        step: h,
        min_step: opts.min_step,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_phase<S: OdeSystem<4>>(
    sys: &S,
    frame: &Frame,
    rep: Rep,
    t0: f64,
    y0: [f64; 4],
    h0: f64,
    t_end: f64,
    opts: &SolverOptions,
    run: &mut Run,
) -> Result<(Stop, f64, [f64; 4], f64)> {
    let ctl = StepControl {
        rtol: opts.rtol,
        atol: opts.atol,
        h_min: opts.min_step,
        h_max: 0.25,
    };
    let mut ode = Dopri5::new(sys, t0, y0, h0, ctl);
    let result = loop {
        let step = ode.step(t_end).map_err(|f| match f {
            OdeFailure::StepUnderflow { t, h } => underflow(t, h, opts),
            OdeFailure::NonFinite { t } => Error::Convergence(format!("non-finite state at r = {:e}", t.exp())),
        })?;
        run.segments.push(Segment { rep, step });
        let lv = levels(frame, rep, &step.end());
        if lv[0] <= 0.0 || lv[1] <= 0.0 {
            let mut best: Option<(bool, f64)> = None;
            for (k, &l) in lv.iter().enumerate() {
                if l <= 0.0 {
                    let tz = locate_zero(frame, rep, &step, k, opts.event_tol);
                    if best.is_none_or(|(_, tb)| tz < tb) {
                        best = Some((k == 0, tz));
                    }
                }
            }
            let (u_first, t) = best.expect("at least one level is nonpositive");
            break (Stop::Event { u_first, t }, ode.t(), ode.state(), ode.step_size());
        }
        if ode.t() >= t_end {
            break (Stop::End, ode.t(), ode.state(), ode.step_size());
        }
        if rep == Rep::Plain && frame.has_scaling {
            let t = ode.t();
            let y = ode.state();
            if (frame.alpha * t).exp() * y[0] >= 0.5 * frame.a && (frame.beta * t).exp() * y[1] >= 0.5 * frame.b {
                break (Stop::Switch, t, y, ode.step_size());
            }
        }
        if run.steps + ode.accepted + ode.rejected > opts.max_steps {
            return Err(Error::Convergence(format!(
                "integration exceeded {} steps at r = {:e}",
                opts.max_steps,
                ode.t().exp()
            )));
        }
    };
    run.steps += ode.accepted;
    run.rejected += ode.rejected;
    run.min_step = run.min_step.min(ode.smallest_step);
    Ok(result)
}

fn locate_zero(frame: &Frame, rep: Rep, step: &DenseStep<4>, k: usize, tol: f64) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1());
    if levels(frame, rep, &step.start())[k] <= 0.0 {
        return lo;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if levels(frame, rep, &step.eval(mid))[k] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Integrate the radial system from the origin up to `r_max` or the first zero of `u` or `v`.
pub fn integrate(params: ParameterTriple, init: InitialData, r_max: f64, opts: &SolverOptions) -> Result<RadialProfile> {
    opts.validate()?;
    InitialData::new(init.u0, init.v0)?;
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Domain(format!("r_max must be positive, got {r_max}")));
    }
    let frame = Frame::new(params);
    let (p, q) = (params.p, params.q);
    let length = (init.u0 / init.v0.powf(p)).sqrt().min((init.v0 / init.u0.powf(q)).sqrt());
    let r_start = (1e-3 * length).min(1e-3 * r_max);
    let t_start = r_start.ln();
    let t_end = r_max.ln();
    let s0 = taylor_sample(&frame, init, r_start);

    let mut run = Run {
        segments: Vec::new(),
        steps: 0,
        rejected: 0,
        min_step: f64::INFINITY,
    };
    let plain = PlainSystem {
        nm2: frame.n - 2.0,
        p,
        q,
    };
    let y0 = [s0.u, s0.v, r_start * s0.du, r_start * s0.dv];
    let (mut stop, mut t, mut y, h) = run_phase(&plain, &frame, Rep::Plain, t_start, y0, 1e-2, t_end, opts, &mut run)?;
    let mut r_switch = None;
    if let Stop::Switch = stop {
        r_switch = Some(t.exp());
        let dev = DeviationSystem {
            cu: frame.n - 2.0 - 2.0 * frame.alpha,
            cv: frame.n - 2.0 - 2.0 * frame.beta,
            s: frame.s,
            t: frame.t,
            a: frame.a,
            b: frame.b,
            ap: frame.a.powf(q),
            bp: frame.b.powf(p),
            p,
            q,
        };
        let ea = (frame.alpha * t).exp();
        let eb = (frame.beta * t).exp();
        let yd = [
            ea * y[0] - frame.a,
            eb * y[1] - frame.b,
            ea * (y[2] + frame.alpha * y[0]),
            eb * (y[3] + frame.beta * y[1]),
        ];
        (stop, t, y, _) = run_phase(&dev, &frame, Rep::Deviation, t, yd, h, t_end, opts, &mut run)?;
    }
    let _ = y;

    let (t_last, classification_hint) = match stop {
        Stop::Event { u_first, t: tz } => {
            let r = tz.exp();
            (tz, Some(if u_first { Classification::UHitsZero(r) } else { Classification::VHitsZero(r) }))
        }
        _ => (t, None),
    };
    let dense = Arc::new(DenseSolution {
        frame,
        init,
        segments: run.segments,
        t_start,
        t_end: t_last,
        scale_r: 1.0,
    });
    let r_end = t_last.exp().min(if classification_hint.is_none() { r_max } else { f64::INFINITY });
    let radii = log_spaced(r_start, r_end, opts.grid_nodes);
    let mut profile = RadialProfile::empty(params, init.u0, init.v0);
    for &r in &radii {
        let s = dense.eval(r).expect("radius inside the integrated range");
        profile.push(s);
    }
    profile.r_max = r_end;
    profile.stats = IntegratorStats {
        steps: run.steps,
        rejected: run.rejected,
        min_step: run.min_step,
        r_start,
        r_switch,
    };
    profile.classification = match classification_hint {
        Some(c) => c,
        None => end_classification(&profile.sample(profile.len() - 1), init, opts),
    };
    profile.dense = Some(dense);
    Ok(profile)
}

/// Classification of a profile that stayed positive up to its last node.
fn end_classification(last: &Sample, init: InitialData, opts: &SolverOptions) -> Classification {
    let attracted = last.gap_u.abs() <= opts.attraction_tol && last.gap_v.abs() <= opts.attraction_tol;
    let decayed = attracted || (last.u < opts.decay_threshold * init.u0 && last.v < opts.decay_threshold * init.v0);
    if decayed && last.u > 0.0 && last.v > 0.0 && last.du < 0.0 && last.dv < 0.0 {
        Classification::EntirePositive
    } else {
        Classification::Truncated
    }
}

/// Outcome of the Newtonian-potential identity `u(0) = (N-2)^{-1} ∫ t v^p dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub residual: f64,
    /// Contribution of the power-law tail beyond `r_max` to the integral.
    pub tail_share: f64,
    pub integral: f64,
    /// Log-log slopes of `u` and `v` near `r_max`.
    pub slope_u: f64,
    pub slope_v: f64,
    /// `|slope_u + alpha| <= 0.2 alpha` (attraction to the singular rate; diagnostic only).
    pub singular_rate: bool,
}

/// `∫_{lo}^{hi}` of the quadratic through three points.
fn quadratic_piece(x: [f64; 3], f: [f64; 3], lo: f64, hi: f64) -> f64 {
    let shift = x[1];
    let xs = [x[0] - shift, x[1] - shift, x[2] - shift];
    let (lo, hi) = (lo - shift, hi - shift);
    let mut total = 0.0;
    for j in 0..3 {
        let (k, l) = ((j + 1) % 3, (j + 2) % 3);
        let denom = (xs[j] - xs[k]) * (xs[j] - xs[l]);
        let prim = |z: f64| z * z * z / 3.0 - (xs[k] + xs[l]) * z * z / 2.0 + xs[k] * xs[l] * z;
        total += f[j] * (prim(hi) - prim(lo)) / denom;
    }
    total
}

/// Composite Simpson rule on an arbitrary increasing grid.
pub fn simpson(x: &[f64], f: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (x[1] - x[0]) * (f[0] + f[1]);
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        total += quadratic_piece([x[i], x[i + 1], x[i + 2]], [f[i], f[i + 1], f[i + 2]], x[i], x[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        total += quadratic_piece([x[n - 3], x[n - 2], x[n - 1]], [f[n - 3], f[n - 2], f[n - 1]], x[n - 2], x[n - 1]);
    }
    total
}

fn tail_slope(r: &[f64], w: &[f64]) -> f64 {
    let n = r.len();
    let k = (n / 64).max(2).min(n - 1);
    (w[n - 1].ln() - w[n - 1 - k].ln()) / (r[n - 1].ln() - r[n - 1 - k].ln())
}

pub fn decay_identity_check(profile: &RadialProfile, params: ParameterTriple) -> Result<DecayReport> {
    if profile.classification != Classification::EntirePositive {
        return Err(Error::Misclassified(format!(
            "decay identity needs an entire positive profile, got {:?}",
            profile.classification
        )));
    }
    if params.n < 3 {
        return Err(Error::Domain("decay identity needs N >= 3".into()));
    }
    let p = params.p;
    let n = profile.len();
    let r = &profile.r;
    let x: Vec<f64> = r.iter().map(|r| r.ln()).collect();
    let f: Vec<f64> = (0..n).map(|i| r[i] * r[i] * profile.v[i].max(0.0).powf(p)).collect();
    let head = 0.5 * r[0] * r[0] * profile.init.v0.powf(p);
    let body = simpson(&x, &f);
    let slope_v = tail_slope(r, &profile.v);
    let slope_u = tail_slope(r, &profile.u);
    let decay = slope_v * p + 2.0;
    let tail = if decay < 0.0 { f[n - 1] / -decay } else { f64::INFINITY };
    let integral = head + body + tail;
    let predicted = integral / (params.dim() - 2.0);
    let u0 = profile.init.u0;
    let alpha = 2.0 * (p + 1.0) / (p * params.q - 1.0);
    Ok(DecayReport {
        residual: (u0 - predicted).abs() / u0,
        tail_share: tail / integral,
        integral,
        slope_u,
        slope_v,
        singular_rate: (slope_u + alpha).abs() <= 0.2 * alpha,
    })
}

/// Largest relative violation of the flux identity
/// `r^{N-1} u'(r) = -∫_0^r t^{N-1} v^p dt` (and its twin for `v`) along the grid.
pub fn flux_residual(profile: &RadialProfile, params: ParameterTriple) -> f64 {
    let n = profile.len();
    if n < 2 {
        return 0.0;
    }
    let nn = params.dim();
    let (p, q) = (params.p, params.q);
    let r = &profile.r;
    let wu: Vec<f64> = (0..n).map(|i| r[i].powf(nn) * profile.v[i].max(0.0).powf(p)).collect();
    let wv: Vec<f64> = (0..n).map(|i| r[i].powf(nn) * profile.u[i].max(0.0).powf(q)).collect();
    let mut iu = r[0].powf(nn) * profile.init.v0.powf(p) / nn;
    let mut iv = r[0].powf(nn) * profile.init.u0.powf(q) / nn;
    let mut worst: f64 = 0.0;
    for i in 1..n {
        let h = r[i].ln() - r[i - 1].ln();
        iu += 0.5 * h * (wu[i] + wu[i - 1]);
        iv += 0.5 * h * (wv[i] + wv[i - 1]);
        let fu = r[i].powf(nn - 1.0) * profile.du[i];
        let fv = r[i].powf(nn - 1.0) * profile.dv[i];
        worst = worst.max((fu + iu).abs() / iu).max((fv + iv).abs() / iv);
    }
    worst
}

/// Largest relative finite-difference residual of `(r^{N-1}u')' + r^{N-1} v^p = 0`
/// (and the `v` equation) at interior grid nodes.
pub fn ode_residual(profile: &RadialProfile, params: ParameterTriple) -> f64 {
    let n = profile.len();
    let nn = params.dim();
    let r = &profile.r;
    let mut worst: f64 = 0.0;
    for i in 1..n.saturating_sub(1) {
        if profile.u[i + 1] <= 0.0 || profile.v[i + 1] <= 0.0 {
            break;
        }
        let flux = |k: usize, d: &[f64]| r[k].powf(nn - 1.0) * d[k];
        let span = r[i + 1] - r[i - 1];
        let dfu = (flux(i + 1, &profile.du) - flux(i - 1, &profile.du)) / span;
        let dfv = (flux(i + 1, &profile.dv) - flux(i - 1, &profile.dv)) / span;
        let su = r[i].powf(nn - 1.0) * profile.v[i].powf(params.p);
        let sv = r[i].powf(nn - 1.0) * profile.u[i].powf(params.q);
        worst = worst.max((dfu + su).abs() / su).max((dfv + sv).abs() / sv);
    }
    worst
}

/// Scale invariance: `(R^alpha u(R r), R^beta v(R r))` on the grid `r_i / R`.
pub fn rescale(profile: &RadialProfile, scaling: &ScalingData, big_r: f64) -> Result<RadialProfile> {
    if !(big_r > 0.0) || !big_r.is_finite() {
        return Err(Error::Domain(format!("rescaling factor must be positive, got {big_r}")));
    }
    let (fu, fv) = (big_r.powf(scaling.alpha), big_r.powf(scaling.beta));
    let mut out = profile.clone();
    for i in 0..out.len() {
        out.r[i] = profile.r[i] / big_r;
        out.u[i] = fu * profile.u[i];
        out.v[i] = fv * profile.v[i];
        out.du[i] = fu * big_r * profile.du[i];
        out.dv[i] = fv * big_r * profile.dv[i];
    }
    out.init = InitialData {
        u0: fu * profile.init.u0,
        v0: fv * profile.init.v0,
    };
    out.r_max = profile.r_max / big_r;
    out.stats.r_start = profile.stats.r_start / big_r;
    out.stats.r_switch = profile.stats.r_switch.map(|r| r / big_r);
    out.classification = match profile.classification {
        Classification::UHitsZero(r) => Classification::UHitsZero(r / big_r),
        Classification::VHitsZero(r) => Classification::VHitsZero(r / big_r),
        c => c,
    };
    out.dense = profile.dense.as_ref().map(|d| d.rescaled(big_r));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ShootOutcome {
    pub v0: f64,
    pub profile: RadialProfile,
    /// Final bracket; its endpoints show opposite failure modes.
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// The midpoint stayed positive up to `r_target` without truncation.
    pub reached_target: bool,
    /// Radius up to which the final bracket trajectories agree within `trust_tol`.
    pub r_trust: f64,
    /// Superposition weight on the upper bracket trajectory, when used.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    U,
    V,
}

/// Which component a trajectory sacrifices: the one that vanished, or for a
/// trajectory still positive at `r_target`, the one lagging further behind
/// the singular solution. `None` when both gaps are within `trust_tol`.
fn side(prof: &RadialProfile, opts: &SolverOptions) -> Result<Option<Side>> {
    match prof.classification {
        Classification::UHitsZero(_) => Ok(Some(Side::U)),
        Classification::VHitsZero(_) => Ok(Some(Side::V)),
        _ => {
            let last = prof.sample(prof.len() - 1);
            if !(last.gap_u.is_finite() && last.gap_v.is_finite()) {
                return Err(Error::Convergence(format!(
                    "trajectory at v0 = {} neither vanished nor reached the singular regime by r = {:e}",
                    prof.init.v0, prof.r_max
                )));
            }
            if last.gap_u.abs().max(last.gap_v.abs()) <= opts.trust_tol {
                Ok(None)
            } else if last.gap_u > last.gap_v {
                Ok(Some(Side::U))
            } else {
                Ok(Some(Side::V))
            }
        }
    }
}

/// Bisect on `v0` for a positive entire solution with `u(0) = u0`.
///
/// A midpoint is accepted outright once it stays positive up to `r_target`
/// with both gaps to the singular solution below `trust_tol`. Otherwise the
/// bracket is bisected down to `v0_tol` and the midpoint profile is cut at the
/// radius where the two bracketing trajectories still agree.
pub fn shoot(params: ParameterTriple, u0: f64, v0_bracket: (f64, f64), opts: &SolverOptions) -> Result<ShootOutcome> {
    opts.validate()?;
    let (mut lo, mut hi) = v0_bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Bracket(format!("invalid bracket ({lo}, {hi})")));
    }
    let run = |v0: f64| integrate(params, InitialData::new(u0, v0)?, opts.r_target, opts);
    let mut p_lo = run(lo)?;
    let mut p_hi = run(hi)?;
    let opposite = matches!(
        (p_lo.classification, p_hi.classification),
        (Classification::UHitsZero(_), Classification::VHitsZero(_))
            | (Classification::VHitsZero(_), Classification::UHitsZero(_))
    );
    if !opposite {
        return Err(Error::Bracket(format!(
            "bracket endpoints must fail in opposite ways, got {:?} at {lo} and {:?} at {hi}",
            p_lo.classification, p_hi.classification
        )));
    }
    let side_lo = side(&p_lo, opts)?;
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= opts.v0_tol * mid {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence(format!(
                "shooting bracket ({lo}, {hi}) still wider than v0_tol after {iterations} bisections"
            )));
        }
        iterations += 1;
        let prof = run(mid)?;
        match side(&prof, opts)? {
            None => {
                let r_trust = prof.r_max;
                return Ok(ShootOutcome {
                    v0: mid,
                    profile: prof,
                    bracket: (lo, hi),
                    iterations,
                    reached_target: true,
                    r_trust,
                    theta: None,
                });
            }
            s if s == side_lo => {
                lo = mid;
                p_lo = prof;
            }
            _ => {
                hi = mid;
                p_hi = prof;
            }
        }
    }
    let r_trust = trust_radius(&p_lo, &p_hi, opts.trust_tol);
    if opts.superpose {
        if let Some((theta, profile)) = superpose(&p_lo, &p_hi, r_trust, opts) {
            return Ok(ShootOutcome {
                v0: profile.init.v0,
                profile,
                bracket: (lo, hi),
                iterations,
                reached_target: false,
                r_trust,
                theta: Some(theta),
            });
        }
    }
    let v0 = 0.5 * (lo + hi);
    let profile = integrate(params, InitialData::new(u0, v0)?, r_trust, opts)?;
    Ok(ShootOutcome {
        v0,
        profile,
        bracket: (lo, hi),
        iterations,
        reached_target: false,
        r_trust,
        theta: None,
    })
}

/// Unstable exponent `mu > 0` of the linearization around the singular
/// solution in `t = ln r` and the matching left eigenvector, acting on the
/// deviation state `(D, E, D', E')`.
fn unstable_left_eigenvector(sc: &ScalingData) -> (f64, [f64; 4]) {
    let n = sc.params.dim();
    let cu = n - 2.0 - 2.0 * sc.alpha;
    let cv = n - 2.0 - 2.0 * sc.beta;
    let f = |m: f64| (m * m + cu * m - sc.s) * (m * m + cv * m - sc.t) - sc.k1 * sc.k2;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let l3 = 1.0;
    let l4 = (sc.s - mu * (mu + cu)) / sc.k2;
    (mu, [(mu + cu) * l3, (mu + cv) * l4, l3, l4])
}

fn deviation_state(sc: &ScalingData, s: &Sample) -> [f64; 4] {
    let (ra, rb) = (s.r.powf(sc.alpha), s.r.powf(sc.beta));
    [
        -sc.a * s.gap_u,
        -sc.b * s.gap_v,
        ra * (s.r * s.du + sc.alpha * s.u),
        rb * (s.r * s.dv + sc.beta * s.v),
    ]
}

/// Resolve the entire trajectory below the rounding unit of `v0`.
///
/// The bracket trajectories differ by a multiple of the unstable variation
/// `∂y/∂v0`. While that difference stays below `linear_tol` the family is
/// linear in `v0`; the weight `theta` that removes the unstable component
/// (measured with the left eigenvector of the linearization) at the edge of
/// that range gives the entire trajectory up to `O(linear_tol^2)`.
fn superpose(lo: &RadialProfile, hi: &RadialProfile, r_trust: f64, opts: &SolverOptions) -> Option<(f64, RadialProfile)> {
    let sc = derive_scaling(lo.params).ok()?;
    let (d_lo, d_hi) = (lo.dense.clone()?, hi.dense.clone()?);
    let r0 = lo.r[0].max(hi.r[0]);
    let radii = log_spaced(r0, lo.r_max.min(hi.r_max), 4 * opts.grid_nodes);
    let mut edge: Option<(Sample, Sample)> = None;
    for &r in &radii {
        let (a, b) = (d_lo.eval(r)?, d_hi.eval(r)?);
        let diff = (b.gap_u - a.gap_u).abs().max((b.gap_v - a.gap_v).abs());
        if diff > opts.linear_tol || a.u <= 0.0 || a.v <= 0.0 || b.u <= 0.0 || b.v <= 0.0 {
            break;
        }
        edge = Some((a, b));
    }
    let (a, b) = edge?;
    if a.r <= r_trust {
        return None;
    }
    let (_, ell) = unstable_left_eigenvector(&sc);
    let (ya, yb) = (deviation_state(&sc, &a), deviation_state(&sc, &b));
    let dot = |y: &[f64; 4]| y.iter().zip(ell.iter()).map(|(x, l)| x * l).sum::<f64>();
    let denom = dot(&yb) - dot(&ya);
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let theta = -dot(&ya) / denom;
    let comb: Arc<dyn ProfileEval> = Arc::new(Superposition {
        lo: d_lo,
        hi: d_hi,
        theta,
    });
    let init = InitialData {
        u0: lo.init.u0,
        v0: lo.init.v0 + theta * (hi.init.v0 - lo.init.v0),
    };
    let mut r_end = a.r;
    for &r in radii.iter().filter(|&&r| r <= a.r) {
        let s = comb.eval(r)?;
        if s.gap_u.abs().max(s.gap_v.abs()) <= opts.gap_floor {
            r_end = r;
            break;
        }
    }
    let mut profile = RadialProfile::empty(lo.params, init.u0, init.v0);
    for &r in &log_spaced(r0, r_end, opts.grid_nodes) {
        profile.push(comb.eval(r)?);
    }
    profile.r_max = r_end;
    profile.stats = IntegratorStats {
        steps: lo.stats.steps + hi.stats.steps,
        rejected: lo.stats.rejected + hi.stats.rejected,
        min_step: lo.stats.min_step.min(hi.stats.min_step),
        r_start: r0,
        r_switch: lo.stats.r_switch,
    };
    profile.classification = end_classification(&profile.sample(profile.len() - 1), init, opts);
    profile.dense = Some(comb);
    Some((theta, profile))
}

/// Largest radius up to which two profiles agree: gaps within `tol`
/// (or relative values within `tol` when there is no singular solution).
pub fn trust_radius(a: &RadialProfile, b: &RadialProfile, tol: f64) -> f64 {
    let r_lo = a.r[0].max(b.r[0]);
    let r_hi = a.r_max.min(b.r_max);
    let radii = log_spaced(r_lo, r_hi, 4 * a.len().max(b.len()));
    let mut last = r_lo;
    for &r in &radii {
        let (Some(sa), Some(sb)) = (a.eval(r), b.eval(r)) else { break };
        let agree = if sa.gap_u.is_finite() && sb.gap_u.is_finite() {
            (sa.gap_u - sb.gap_u).abs() <= tol && (sa.gap_v - sb.gap_v).abs() <= tol
        } else {
            (sa.u - sb.u).abs() <= tol * sa.u.abs().max(sb.u.abs())
                && (sa.v - sb.v).abs() <= tol * sa.v.abs().max(sb.v.abs())
        };
        if !agree || sa.u <= 0.0 || sa.v <= 0.0 || sb.u <= 0.0 || sb.v <= 0.0 {
            break;
        }
        last = r;
    }
    last
}
