//! Comparison of regular radial profiles with the singular solution:
//! intersections, the ratio suprema `M1 = sup u/u_s`, `M2 = sup v/v_s`,
//! and the ordering `u < u_s`, `v < v_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent_algebra::ScalingData;
use crate::io::{fmt_f64, to_json_string, SCHEMA_VERSION};
use crate::radial_ivp::{Classification, RadialProfile};

/// Relative dead band on `u - u_s` (as a fraction of `u_s`) below which no sign is assigned.
pub const DEAD_BAND: f64 = 1e-12;
/// Slack allowed in the chain `M1 <= M2^p`, `M2 <= M1^q`.
pub const CHAIN_TOL: f64 = 1e-8;

const REFINE_POINTS: usize = 16;
const REFINE_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    /// `M2^p - M1`; nonnegative when the first link holds.
    pub first_margin: f64,
    /// `M1^q - M2`.
    pub second_margin: f64,
    pub tol: f64,
    pub holds: bool,
}

/// Gaps and their log-log decay rates at the end of a truncated profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub gap_u: f64,
    pub gap_v: f64,
    pub rate_u: f64,
    pub rate_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSuprema {
    pub m1: f64,
    pub m2: f64,
    pub r_m1: f64,
    pub r_m2: f64,
    /// Every node has `u < u_s` and `v < v_s`.
    pub ordered: bool,
    /// The suprema only cover `(0, r_max]`; nothing is claimed about the tail.
    pub interior_only: bool,
    pub tail: Option<TailEstimate>,
    /// Present when the profile is ordered.
    pub chain: Option<ChainCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub crossings_u: Vec<f64>,
    pub crossings_v: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
    pub ordered: bool,
    pub suprema: RatioSuprema,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn crossings_csv(&self) -> String {
        let mut out = String::from("component,r\n");
        for (name, list) in [("u", &self.crossings_u), ("v", &self.crossings_v)] {
            for &r in list.iter() {
                out.push_str(name);
                out.push(',');
                out.push_str(&fmt_f64(r));
                out.push('\n');
            }
        }
        out
    }
}

fn check_inputs(profile: &RadialProfile, scaling: &ScalingData) -> Result<()> {
    if profile.is_empty() {
        return Err(Error::Domain("empty profile".into()));
    }
    if profile.r.iter().any(|&r| !(r > 0.0)) || profile.r.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("profile grid must be positive and increasing".into()));
    }
    let (a, b) = (profile.params, scaling.params);
    if a.p != b.p || a.q != b.q || a.n != b.n {
        return Err(Error::Domain(format!("profile exponents {a:?} do not match scaling {b:?}")));
    }
    Ok(())
}

/// `1 - u/u_s` and `1 - v/v_s` at every node, preferring the stored columns.
fn gaps(profile: &RadialProfile, scaling: &ScalingData) -> (Vec<f64>, Vec<f64>) {
    let n = profile.len();
    let mut gu = Vec::with_capacity(n);
    let mut gv = Vec::with_capacity(n);
    for i in 0..n {
        let r = profile.r[i];
        gu.push(if profile.gap_u[i].is_finite() {
            profile.gap_u[i]
        } else {
            1.0 - profile.u[i] * r.powf(scaling.alpha) / scaling.a
        });
        gv.push(if profile.gap_v[i].is_finite() {
            profile.gap_v[i]
        } else {
            1.0 - profile.v[i] * r.powf(scaling.beta) / scaling.b
        });
    }
    (gu, gv)
}

/// Sign of `u - u_s` given the gap `1 - u/u_s`, zero inside the dead band.
fn sign_of(gap: f64) -> i8 {
    if gap < -DEAD_BAND {
        1
    } else if gap > DEAD_BAND {
        -1
    } else {
        0
    }
}

fn eval_gap(profile: &RadialProfile, scaling: &ScalingData, component: usize, r: f64) -> Option<f64> {
    let s = profile.eval(r)?;
    let g = if component == 0 { s.gap_u } else { s.gap_v };
    if g.is_finite() {
        Some(g)
    } else if component == 0 {
        Some(1.0 - s.u * r.powf(scaling.alpha) / scaling.a)
    } else {
        Some(1.0 - s.v * r.powf(scaling.beta) / scaling.b)
    }
}

fn bisect_crossing(profile: &RadialProfile, scaling: &ScalingData, c: usize, mut lo: f64, mut hi: f64) -> f64 {
    let s_lo = eval_gap(profile, scaling, c, lo).map(sign_of).unwrap_or(0);
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        match eval_gap(profile, scaling, c, mid).map(sign_of) {
            Some(s) if s == s_lo => lo = mid,
            Some(0) | None => break,
            Some(_) => hi = mid,
        }
    }
    (lo * hi).sqrt()
}

/// Locate all sign changes inside `[lo, hi]`, subdividing where several occur.
fn refine_cell(
    profile: &RadialProfile,
    scaling: &ScalingData,
    c: usize,
    lo: f64,
    hi: f64,
    depth: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut pts = Vec::with_capacity(REFINE_POINTS + 1);
    for k in 0..=REFINE_POINTS {
        let r = (llo + (lhi - llo) * k as f64 / REFINE_POINTS as f64).exp();
        if let Some(s) = eval_gap(profile, scaling, c, r).map(sign_of) {
            if s != 0 {
                pts.push((r, s));
            }
        }
    }
    let changes: Vec<(f64, f64)> = pts
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| (w[0].0, w[1].0))
        .collect();
    if changes.len() <= 1 {
        if let Some(&(a, b)) = changes.first() {
            out.push(bisect_crossing(profile, scaling, c, a, b));
        }
        return Ok(());
    }
    if depth >= REFINE_DEPTH {
        return Err(Error::GridTooCoarse(format!(
            "{} sign changes of the {} gap inside [{lo:e}, {hi:e}] after {depth} refinements",
            changes.len(),
            if c == 0 { "u" } else { "v" }
        )));
    }
    for (a, b) in changes {
        refine_cell(profile, scaling, c, a, b, depth + 1, out)?;
    }
    Ok(())
}

fn crossings(profile: &RadialProfile, scaling: &ScalingData, g: &[f64], c: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (i, &gi) in g.iter().enumerate() {
        let s = sign_of(gi);
        if s == 0 {
            continue;
        }
        if let Some((j, sj)) = last {
            if sj != s {
                refine_cell(profile, scaling, c, profile.r[j], profile.r[i], 0, &mut out)?;
            }
        }
        last = Some((i, s));
    }
    Ok(out)
}

/// Grid maximum of `1 - gap` with a parabolic refinement in `ln r` at an interior maximizer.
fn refined_max(r: &[f64], g: &[f64]) -> (f64, f64) {
    let (mut k, mut best) = (0, f64::NEG_INFINITY);
    for (i, &gi) in g.iter().enumerate() {
        if 1.0 - gi > best {
            best = 1.0 - gi;
            k = i;
        }
    }
    if k == 0 || k + 1 >= g.len() {
        return (best, r[k]);
    }
    let (x0, x1, x2) = (r[k - 1].ln(), r[k].ln(), r[k + 1].ln());
    let (y0, y1, y2) = (1.0 - g[k - 1], 1.0 - g[k], 1.0 - g[k + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if !(curv < 0.0) {
        return (best, r[k]);
    }
    // Vertex of the interpolating parabola.
    let xv = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    if !(xv > x0 && xv < x2) {
        return (best, r[k]);
    }
    let yv = y1 + d01 * (xv - x1) + curv * (xv - x0) * (xv - x1);
    if yv >= best {
        (yv, xv.exp())
    } else {
        (best, r[k])
    }
}

fn tail_estimate(r: &[f64], gu: &[f64], gv: &[f64]) -> Option<TailEstimate> {
    let n = r.len();
    if n < 3 {
        return None;
    }
    let k = (n / 64).max(1).min(n - 1);
    let rate = |g: &[f64]| {
        let (a, b) = (g[n - 1 - k].abs(), g[n - 1].abs());
        if a > 0.0 && b > 0.0 {
            (b.ln() - a.ln()) / (r[n - 1].ln() - r[n - 1 - k].ln())
        } else {
            f64::NAN
        }
    };
    Some(TailEstimate {
        gap_u: gu[n - 1],
        gap_v: gv[n - 1],
        rate_u: rate(gu),
        rate_v: rate(gv),
    })
}

fn is_degenerate(gu: &[f64], gv: &[f64]) -> bool {
    gu.iter().chain(gv.iter()).all(|g| g.abs() <= DEAD_BAND)
}

/// Refined suprema of `u/u_s` and `v/v_s`, plus the chain `M1 <= M2^p`,
/// `M2 <= M1^q` for ordered profiles.
pub fn ratio_suprema(profile: &RadialProfile, scaling: &ScalingData) -> Result<RatioSuprema> {
    check_inputs(profile, scaling)?;
    let (gu, gv) = gaps(profile, scaling);
    Ok(suprema_from_gaps(profile, scaling, &gu, &gv))
}

fn suprema_from_gaps(profile: &RadialProfile, scaling: &ScalingData, gu: &[f64], gv: &[f64]) -> RatioSuprema {
    let (m1, r_m1) = refined_max(&profile.r, gu);
    let (m2, r_m2) = refined_max(&profile.r, gv);
    let ordered = gu.iter().chain(gv.iter()).all(|&g| g > 0.0);
    let chain = ordered.then(|| {
        let first_margin = m2.powf(scaling.params.p) - m1;
        let second_margin = m1.powf(scaling.params.q) - m2;
        ChainCheck {
            first_margin,
            second_margin,
            tol: CHAIN_TOL,
            holds: first_margin >= -CHAIN_TOL && second_margin >= -CHAIN_TOL,
        }
    });
    let interior_only = profile.classification != Classification::EntirePositive;
    RatioSuprema {
        m1,
        m2,
        r_m1,
        r_m2,
        ordered,
        interior_only,
        tail: if interior_only { None } else { tail_estimate(&profile.r, gu, gv) },
        chain,
    }
}

/// Intersections of `u` with `u_s` and `v` with `v_s`, and the ordering verdict.
pub fn compare(profile: &RadialProfile, scaling: &ScalingData) -> Result<ComparisonReport> {
    check_inputs(profile, scaling)?;
    let (gu, gv) = gaps(profile, scaling);
    if is_degenerate(&gu, &gv) {
        return Err(Error::Degenerate(
            "profile coincides with the singular solution on the whole grid".into(),
        ));
    }
    let crossings_u = crossings(profile, scaling, &gu, 0)?;
    let crossings_v = crossings(profile, scaling, &gv, 1)?;
    let suprema = suprema_from_gaps(profile, scaling, &gu, &gv);
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        ordered: suprema.ordered && crossings_u.is_empty() && crossings_v.is_empty(),
        m1: suprema.m1,
        m2: suprema.m2,
        crossings_u,
        crossings_v,
        suprema,
    })
}
