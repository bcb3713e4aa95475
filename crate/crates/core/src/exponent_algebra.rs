//! Exponent algebra for the Lane-Emden system `-Δu = v^p`, `-Δv = u^q`.
//!
//! Everything here is closed form: the scaling exponents of the singular
//! solution, its coefficients, the Sobolev hyperbola, the Joseph-Lundgren
//! curve, and the radial Hardy-Rellich constant that the curve is built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for declaring a triple to lie on the
/// Joseph-Lundgren curve.
pub const DEFAULT_TOL_CURVE: f64 = 1e-9;

/// Absolute tolerance on the Sobolev margin for the critical case.
pub const SOBOLEV_TOL: f64 = 1e-12;

/// Exponents `(p, q)` and dimension `N`.
///
/// Construction enforces `p >= q >= 1`, `pq > 1` and `N >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterTriple {
    pub p: f64,
    pub q: f64,
    pub n: u32,
}

impl ParameterTriple {
    pub fn new(p: f64, q: f64, n: u32) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::Domain(format!("non-finite exponents ({p}, {q})")));
        }
        if q < 1.0 {
            return Err(Error::Domain(format!("requires q >= 1, got q = {q}")));
        }
        if p < q {
            return Err(Error::Domain(format!("requires p >= q, got p = {p} < q = {q}")));
        }
        if p * q <= 1.0 {
            return Err(Error::Domain(format!("requires pq > 1, got pq = {}", p * q)));
        }
        if n < 1 {
            return Err(Error::Domain("requires N >= 1".into()));
        }
        Ok(Self { p, q, n })
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    /// `(1 - 2/N) - 1/(p+1) - 1/(q+1)`; nonnegative on or above the Sobolev hyperbola.
    pub fn sobolev_margin(&self) -> f64 {
        sobolev_margin(self.p, self.q, self.n)
    }
}

pub(crate) fn sobolev_margin(p: f64, q: f64, n: u32) -> f64 {
    (1.0 - 2.0 / n as f64) - 1.0 / (p + 1.0) - 1.0 / (q + 1.0)
}

/// Scaling exponents, singular-solution coefficients and the constants that
/// enter the stability comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingData {
    pub params: ParameterTriple,
    pub alpha: f64,
    pub beta: f64,
    /// `alpha - beta`, in `[0, 2]`.
    pub gamma: f64,
    pub s: f64,
    pub t: f64,
    pub a: f64,
    pub b: f64,
    /// `p v_s^{p-1} = k1 r^{-k1_exponent}`.
    pub k1: f64,
    /// `q u_s^{q-1} = k2 r^{-k2_exponent}`.
    pub k2: f64,
    /// `beta (p - 1)`; equals `2 + gamma`.
    pub k1_exponent: f64,
    /// `alpha (q - 1)`; equals `2 - gamma`.
    pub k2_exponent: f64,
    pub c_gamma: f64,
}

impl ScalingData {
    /// `pq S T`, which equals `k1 * k2` identically and is used for the curve margin.
    pub fn k1k2(&self) -> f64 {
        self.params.p * self.params.q * self.s * self.t
    }

    /// `C_gamma - K1 K2`; nonnegative on or above the Joseph-Lundgren curve.
    pub fn jl_margin(&self) -> f64 {
        self.c_gamma - self.k1k2()
    }

    /// Signed weight exponent of the first linearized coupling in log-radius form,
    /// i.e. `k1_exponent - 2`.
    pub fn weight_shift(&self) -> f64 {
        self.k1_exponent - 2.0
    }
}

/// Computes the scaling data of the singular solution.
///
/// Requires `N >= 3` and `alpha < N - 2` (so that `S, T, a, b > 0`).
pub fn derive_scaling(params: ParameterTriple) -> Result<ScalingData> {
    let ParameterTriple { p, q, n } = params;
    if n < 3 {
        return Err(Error::Domain(format!("singular solution needs N >= 3, got N = {n}")));
    }
    let pq1 = p * q - 1.0;
    if pq1 <= 0.0 {
        return Err(Error::Domain(format!("requires pq > 1, got pq = {}", p * q)));
    }
    let nm2 = n as f64 - 2.0;
    let alpha = 2.0 * (p + 1.0) / pq1;
    let beta = 2.0 * (q + 1.0) / pq1;
    if alpha.max(beta) >= nm2 {
        return Err(Error::Domain(format!(
            "no singular solution: alpha = {alpha} >= N - 2 = {nm2}"
        )));
    }
    let gamma = 2.0 * (p - q) / pq1;
    let s = alpha * (nm2 - alpha);
    let t = beta * (nm2 - beta);

    let ln_a = (s.ln() + p * t.ln()) / pq1;
    let ln_b = (q * s.ln() + t.ln()) / pq1;
    let a = ln_a.exp();
    let b = ln_b.exp();

    // Decay rates of the two linearized coefficients, from first principles.
    let k1_exponent = beta * (p - 1.0);
    let k2_exponent = alpha * (q - 1.0);
    let sum = k1_exponent + k2_exponent;
    if (sum - 4.0).abs() > 1e-12 * 4.0 {
        return Err(Error::Domain(format!(
            "scaling identity violated: beta(p-1) + alpha(q-1) = {sum}"
        )));
    }
    let k1 = p * ((p - 1.0) * ln_b).exp();
    let k2 = q * ((q - 1.0) * ln_a).exp();
    let c_gamma = hardy_rellich_constant_unchecked(nm2, gamma);

    Ok(ScalingData {
        params,
        alpha,
        beta,
        gamma,
        s,
        t,
        a,
        b,
        k1,
        k2,
        k1_exponent,
        k2_exponent,
        c_gamma,
    })
}

fn hardy_rellich_constant_unchecked(nm2: f64, gamma: f64) -> f64 {
    let x = (nm2 * nm2 - gamma * gamma) / 4.0;
    x * x
}

/// Optimal radial constant `[((N-2)^2 - gamma^2)/4]^2` of the weighted
/// Hardy-Rellich inequality.
pub fn hardy_rellich_constant(n: u32, gamma: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("requires N >= 3, got N = {n}")));
    }
    let nm2 = n as f64 - 2.0;
    if !(0.0..nm2).contains(&gamma) {
        return Err(Error::Domain(format!("requires 0 <= gamma < N - 2, got {gamma}")));
    }
    Ok(hardy_rellich_constant_unchecked(nm2, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SobolevPosition {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JlPosition {
    BelowCurve,
    OnCurve,
    AboveCurve,
    Undefined,
}

/// Position of `(p, q)` relative to both critical curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub sobolev: SobolevPosition,
    pub jl: JlPosition,
    pub sobolev_margin: f64,
    /// `C_gamma - K1 K2`, absent when the singular solution does not exist.
    pub jl_margin: Option<f64>,
}

impl RegionVerdict {
    /// Region code used by the Figure-1 scan:
    /// 0 sub-Sobolev, 1 super-Sobolev below the curve, 2 on or above the curve.
    pub fn code(&self) -> u8 {
        match (self.sobolev, self.jl) {
            (SobolevPosition::Subcritical, _) => 0,
            (_, JlPosition::AboveCurve | JlPosition::OnCurve) => 2,
            _ => 1,
        }
    }
}

pub fn classify(params: ParameterTriple, tol_curve: f64) -> RegionVerdict {
    let sobolev_margin = params.sobolev_margin();
    let sobolev = if sobolev_margin.abs() <= SOBOLEV_TOL {
        SobolevPosition::Critical
    } else if sobolev_margin > 0.0 {
        SobolevPosition::Supercritical
    } else {
        SobolevPosition::Subcritical
    };
    let (jl, jl_margin) = match derive_scaling(params) {
        Ok(sc) => {
            let margin = sc.jl_margin();
            let band = tol_curve * sc.k1k2().max(1.0);
            let pos = if margin.abs() <= band {
                JlPosition::OnCurve
            } else if margin > 0.0 {
                JlPosition::AboveCurve
            } else {
                JlPosition::BelowCurve
            };
            (pos, Some(margin))
        }
        Err(_) => (JlPosition::Undefined, None),
    };
    RegionVerdict {
        sobolev,
        jl,
        sobolev_margin,
        jl_margin,
    }
}

/// Relative curve margin `(C_gamma - K1K2) / max(1, K1K2)`; `None` without a singular solution.
pub fn relative_jl_margin(p: f64, q: f64, n: u32) -> Option<f64> {
    let params = ParameterTriple { p, q, n };
    derive_scaling(params)
        .ok()
        .map(|sc| sc.jl_margin() / sc.k1k2().max(1.0))
}

/// Smallest `q >= 1` on or above the Sobolev hyperbola for a given `p`,
/// or `None` when no such `q` exists.
pub fn sobolev_q(p: f64, n: u32) -> Option<f64> {
    let rhs = 1.0 - 2.0 / n as f64 - 1.0 / (p + 1.0);
    if rhs <= 0.0 {
        return None;
    }
    Some((1.0 / rhs - 1.0).max(1.0))
}

/// Result of a curve root search at fixed `(N, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CurveRoot {
    Root {
        q: f64,
        /// Relative margin at the returned point.
        residual: f64,
        iterations: u32,
    },
    NoRoot,
}

impl CurveRoot {
    pub fn q(&self) -> Option<f64> {
        match self {
            CurveRoot::Root { q, .. } => Some(*q),
            CurveRoot::NoRoot => None,
        }
    }
}

const CURVE_PRESCAN: usize = 64;
const CURVE_MAX_ITER: u32 = 200;

/// Solves `C_gamma = K1 K2` for `q` at fixed `(N, p)` by bisection.
///
/// The search runs over the Sobolev-supercritical part of the slice,
/// `[max(1, q_sob(p)), p]`. A pre-scan locates a sign change of the margin;
/// bisection then shrinks the bracket below `tol` (absolute, in `q`).
pub fn jl_curve_q(n: u32, p: f64, tol: f64) -> Result<CurveRoot> {
    if n < 3 {
        return Err(Error::Domain(format!("requires N >= 3, got N = {n}")));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("requires p >= 1, got {p}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidOptions(format!("tol must be positive, got {tol}")));
    }
    let Some(q_lo) = sobolev_q(p, n) else {
        return Ok(CurveRoot::NoRoot);
    };
    if q_lo > p {
        return Ok(CurveRoot::NoRoot);
    }
    let margin = |q: f64| relative_jl_margin(p, q, n);

    // The diagonal end is a root in its own right when the triple sits on the curve.
    if let Some(m) = margin(p) {
        if m.abs() <= DEFAULT_TOL_CURVE {
            return Ok(CurveRoot::Root {
                q: p,
                residual: m,
                iterations: 0,
            });
        }
    }

    let nodes: Vec<(f64, f64)> = (0..=CURVE_PRESCAN)
        .filter_map(|i| {
            let q = q_lo + (p - q_lo) * i as f64 / CURVE_PRESCAN as f64;
            margin(q).map(|m| (q, m))
        })
        .collect();
    let bracket = nodes
        .windows(2)
        .find(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .map(|w| (w[0], w[1]));
    let Some(((mut lo, m_lo), (mut hi, _))) = bracket else {
        return Ok(CurveRoot::NoRoot);
    };
    let lo_negative = m_lo < 0.0;

    let mut iterations = 0;
    while hi - lo > tol {
        if iterations >= CURVE_MAX_ITER {
            return Err(Error::Convergence(format!(
                "curve bisection at p = {p}: bracket width {} after {iterations} steps",
                hi - lo
            )));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let m = margin(mid).ok_or_else(|| {
            Error::Domain(format!("singular solution undefined inside bracket at q = {mid}"))
        })?;
        if (m < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let q = 0.5 * (lo + hi);
    Ok(CurveRoot::Root {
        q,
        residual: margin(q).unwrap_or(f64::NAN),
        iterations,
    })
}

/// Intersection of the Joseph-Lundgren curve with the diagonal `p = q`.
///
/// Returns `None` when the diagonal margin stays negative up to `p = 1e6`
/// (the case for `N <= 10`).
pub fn jl_diagonal(n: u32, tol: f64) -> Result<Option<f64>> {
    if n < 3 {
        return Err(Error::Domain(format!("requires N >= 3, got N = {n}")));
    }
    let nm2 = n as f64 - 2.0;
    let diag = |p: f64| relative_jl_margin(p, p, n);
    // Sobolev exponent on the diagonal; the margin increases from there on.
    let mut lo = (n as f64 + 2.0) / nm2;
    lo = lo.max(1.0 + 1e-9);
    while diag(lo).is_none() {
        lo += 1e-6 * lo;
    }
    if diag(lo).is_some_and(|m| m >= 0.0) {
        return Ok(Some(lo));
    }
    let mut hi = 2.0 * lo;
    while diag(hi).is_some_and(|m| m < 0.0) {
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(None);
        }
    }
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if diag(mid).is_some_and(|m| m < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > CURVE_MAX_ITER {
            return Err(Error::Convergence("diagonal bisection did not converge".into()));
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Classical single-equation Joseph-Lundgren exponent, valid for `N >= 11`.
pub fn classical_jl_exponent(n: u32) -> Option<f64> {
    if n < 11 {
        return None;
    }
    let nf = n as f64;
    let nm2 = nf - 2.0;
    Some((nm2 * nm2 - 4.0 * nf + 8.0 * (nf - 1.0).sqrt()) / (nm2 * (nf - 10.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn triple(p: f64, q: f64, n: u32) -> ParameterTriple {
        ParameterTriple::new(p, q, n).unwrap()
    }

    #[test]
    fn scaling_p3_q2_n11() {
        let sc = derive_scaling(triple(3.0, 2.0, 11)).unwrap();
        assert_relative_eq!(sc.alpha, 1.6, max_relative = 1e-14);
        assert_relative_eq!(sc.beta, 1.2, max_relative = 1e-14);
        assert_relative_eq!(sc.gamma, 0.4, max_relative = 1e-14);
        assert_relative_eq!(sc.s, 11.84, max_relative = 1e-14);
        assert_relative_eq!(sc.t, 9.36, max_relative = 1e-14);
        assert_relative_eq!(sc.k1 * sc.k2, 664.9344, max_relative = 1e-12);
        assert_relative_eq!(sc.k1_exponent, 2.0 + sc.gamma, max_relative = 1e-14);
        assert_relative_eq!(sc.k2_exponent, 2.0 - sc.gamma, max_relative = 1e-14);
    }

    #[test]
    fn scaling_symmetric_case() {
        let sc = derive_scaling(triple(3.0, 3.0, 11)).unwrap();
        assert_eq!(sc.alpha, 1.0);
        assert_eq!(sc.beta, 1.0);
        assert_eq!(sc.gamma, 0.0);
        assert_eq!(sc.s, 8.0);
        assert_relative_eq!(sc.a, 8f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(sc.b, 8f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn scaling_boundary_of_existence() {
        let sc = derive_scaling(triple(2.0, 2.0, 5)).unwrap();
        assert_eq!(sc.s, 2.0);
        assert!(matches!(derive_scaling(triple(2.0, 2.0, 4)), Err(Error::Domain(_))));
        assert!(matches!(
            derive_scaling(ParameterTriple { p: 3.0, q: 3.0, n: 2 }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constructor_rejects_bad_triples() {
        assert!(ParameterTriple::new(2.0, 3.0, 11).is_err());
        assert!(ParameterTriple::new(1.0, 1.0, 11).is_err());
        assert!(ParameterTriple::new(3.0, 0.5, 11).is_err());
        assert!(ParameterTriple::new(f64::NAN, 1.0, 11).is_err());
        assert!(ParameterTriple::new(3.0, 2.0, 0).is_err());
    }

    #[test]
    fn hardy_rellich_values() {
        assert_eq!(hardy_rellich_constant(11, 0.0).unwrap(), 410.0625);
        assert_relative_eq!(hardy_rellich_constant(11, 0.4).unwrap(), 408.4441, max_relative = 1e-14);
        assert_eq!(hardy_rellich_constant(3, 0.0).unwrap(), 0.0625);
        assert!(hardy_rellich_constant(11, 9.0).is_err());
        assert!(hardy_rellich_constant(11, -0.1).is_err());
        assert!(hardy_rellich_constant(2, 0.0).is_err());
    }

    #[test]
    fn classify_examples() {
        let v = classify(triple(5.0, 5.0, 3), DEFAULT_TOL_CURVE);
        assert_eq!(v.sobolev, SobolevPosition::Critical);

        let v = classify(triple(3.0, 2.0, 11), DEFAULT_TOL_CURVE);
        assert_eq!(v.jl, JlPosition::BelowCurve);
        assert_relative_eq!(v.jl_margin.unwrap(), 408.4441 - 664.9344, max_relative = 1e-12);

        // Diagonal oracle: classical exponent 6.9220... < 8.
        let pc = classical_jl_exponent(11).unwrap();
        assert!(pc < 8.0);
        let v = classify(triple(8.0, 8.0, 11), DEFAULT_TOL_CURVE);
        assert_eq!(v.jl, JlPosition::AboveCurve);
        assert_eq!(v.code(), 2);
    }

    #[test]
    fn classify_undefined_without_singular_solution() {
        let v = classify(triple(2.0, 2.0, 4), DEFAULT_TOL_CURVE);
        assert_eq!(v.jl, JlPosition::Undefined);
        assert!(v.jl_margin.is_none());
        let v = classify(triple(3.0, 2.0, 2), DEFAULT_TOL_CURVE);
        assert_eq!(v.jl, JlPosition::Undefined);
        assert_eq!(v.code(), 0);
    }

    #[test]
    fn classical_exponent_at_11() {
        assert_relative_eq!(classical_jl_exponent(11).unwrap(), 6.9220246, epsilon = 1e-7);
        assert!(classical_jl_exponent(10).is_none());
    }

    #[test]
    fn diagonal_root_matches_classical_formula() {
        for n in 11..=20 {
            let pc = jl_diagonal(n, 1e-13).unwrap().unwrap();
            assert!((pc - classical_jl_exponent(n).unwrap()).abs() < 1e-8, "N = {n}");
        }
        for n in 3..=10 {
            assert_eq!(jl_diagonal(n, 1e-13).unwrap(), None, "N = {n}");
        }
    }

    #[test]
    fn curve_slice_at_diagonal_point_returns_itself() {
        let pc = jl_diagonal(11, 1e-14).unwrap().unwrap();
        let q = jl_curve_q(11, pc, 1e-13).unwrap().q().unwrap();
        assert!((q - pc).abs() < 1e-8);
        assert!((q - 6.9220246).abs() < 1e-7);
    }

    #[test]
    fn curve_slice_off_diagonal() {
        let root = jl_curve_q(11, 12.0, 1e-13).unwrap();
        let CurveRoot::Root { q, residual, .. } = root else {
            panic!("expected a root");
        };
        assert!(q > 1.0 && q < 12.0);
        assert!(residual.abs() < 1e-9);
        let below = relative_jl_margin(12.0, q - 1e-6, 11).unwrap();
        let above = relative_jl_margin(12.0, q + 1e-6, 11).unwrap();
        assert!(below < 0.0 && above > 0.0);
    }

    #[test]
    fn curve_slice_absent_for_small_dimensions() {
        for p in [2.0, 5.0, 10.0, 40.0] {
            assert_eq!(jl_curve_q(10, p, 1e-12).unwrap(), CurveRoot::NoRoot);
        }
        // Below the diagonal exponent the slice has no crossing either.
        assert_eq!(jl_curve_q(11, 5.0, 1e-12).unwrap(), CurveRoot::NoRoot);
        assert!(jl_curve_q(11, 5.0, 0.0).is_err());
    }

    #[test]
    fn jl_margin_symmetric_under_swap() {
        for &(p, q) in &[(3.0, 2.0), (9.0, 4.5), (20.0, 1.5)] {
            let a = derive_scaling(ParameterTriple { p, q, n: 13 }).unwrap();
            let b = derive_scaling(ParameterTriple { p: q, q: p, n: 13 }).unwrap();
            assert_relative_eq!(a.jl_margin(), b.jl_margin(), max_relative = 1e-12);
            assert_relative_eq!(a.gamma, -b.gamma, max_relative = 1e-12);
        }
    }
}
