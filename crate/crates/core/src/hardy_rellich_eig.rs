//! Principal eigenvalue of the radial weighted Rellich quotient
//!
//! ```text
//! lambda(A) = min  int_A |x|^{2-gamma} |Δφ|^2  /  int_A |x|^{-2-gamma} φ^2
//! ```
//!
//! over radial `φ` vanishing on the boundary of an annulus `A`, equivalently
//! the coupled Dirichlet system `-Δφ = r^{-2+γ} ψ`, `-Δψ = λ r^{-2-γ} φ`.
//!
//! In `ρ = ln r` the radial Laplacian is `r^{-2}(∂ρρ + (N-2)∂ρ)`; central
//! differences give a tridiagonal `T` and the system becomes
//! `T φ = R^γ ψ`, `T ψ = λ R^{-γ} φ`. `T` is diagonally similar to a
//! symmetric matrix `S`, and with `ζ = R^{-γ/2} E^{-1} φ` the problem is the
//! symmetric eigenproblem `X^T X ζ = λ ζ` for the tridiagonal
//! `X = R^{-γ/2} S R^{γ/2}`. All entries of `X` are local ratios, so nothing
//! spans the 10+ decades of the weights. The iterates of the inverse-power
//! map `φ ← T^{-1} R^γ T^{-1} R^{-γ} φ` correspond one to one with
//! `ζ ← X^{-1} X^{-T} ζ`.

use serde::{Deserialize, Serialize};

use crate::banded::Tridiagonal;
use crate::error::{Error, Result};
use crate::exponent_algebra::{derive_scaling, hardy_rellich_constant, ParameterTriple, DEFAULT_TOL_CURVE};
use crate::io::{csv_string, fmt_f64, to_json_string, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub r_inner: f64,
    pub r_outer: f64,
    /// Interior nodes of the uniform grid in `ln r`.
    pub nodes: usize,
}

impl Annulus {
    pub const MIN_NODES: usize = 16;

    pub fn new(r_inner: f64, r_outer: f64, nodes: usize) -> Result<Self> {
        if !(r_inner > 0.0 && r_outer.is_finite() && r_outer > r_inner) {
            return Err(Error::Domain(format!(
                "annulus needs 0 < r_inner < r_outer, got [{r_inner}, {r_outer}]"
            )));
        }
        if nodes < Self::MIN_NODES {
            return Err(Error::Domain(format!(
                "annulus needs at least {} nodes, got {nodes}",
                Self::MIN_NODES
            )));
        }
        Ok(Self {
            r_inner,
            r_outer,
            nodes,
        })
    }

    /// Width in `ln r`.
    pub fn log_width(&self) -> f64 {
        (self.r_outer / self.r_inner).ln()
    }

    pub fn spacing(&self) -> f64 {
        self.log_width() / (self.nodes + 1) as f64
    }

    pub fn radii(&self) -> Vec<f64> {
        let (l0, h) = (self.r_inner.ln(), self.spacing());
        (1..=self.nodes).map(|i| (l0 + h * i as f64).exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigMethod {
    /// Plain inverse-power iteration.
    InversePower,
    /// Sylvester-inertia bisection on `X^T X - σ` followed by shifted inverse iteration.
    ShiftedInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigOptions {
    /// Relative change of successive eigenvalue estimates that stops the iteration.
    pub tol: f64,
    pub max_iter: usize,
    pub method: EigMethod,
    /// Relative curve margin inside which the stability verdict is `Marginal`.
    pub marginal_tol: f64,
    /// Extra annuli (width doubled, spacing divided by `√2`) tried when the
    /// ladder contradicts the closed-form criterion.
    pub max_extensions: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 10_000,
            method: EigMethod::ShiftedInverse,
            marginal_tol: DEFAULT_TOL_CURVE,
            max_extensions: 4,
        }
    }
}

impl EigOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidOptions(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidOptions("max_iter must be positive".into()));
        }
        if !(self.marginal_tol >= 0.0) {
            return Err(Error::InvalidOptions("marginal_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigReport {
    pub schema_version: u32,
    pub n: u32,
    pub gamma: f64,
    pub annulus: Annulus,
    pub method: EigMethod,
    pub lambda: f64,
    pub c_gamma: f64,
    pub iterations: usize,
    /// `‖X^T X ζ - λ ζ‖ / (λ ‖ζ‖)` in the symmetric variables.
    pub residual: f64,
    #[serde(skip)]
    pub r: Vec<f64>,
    /// Eigenfunction and `ψ = r^{2-γ}(-Δφ)`, each scaled to unit maximum.
    #[serde(skip)]
    pub phi: Vec<f64>,
    #[serde(skip)]
    pub psi: Vec<f64>,
}

impl EigReport {
    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn profile_csv(&self) -> String {
        csv_string(
            &["r", "phi", "psi"],
            (0..self.r.len()).map(|i| [self.r[i], self.phi[i], self.psi[i]]),
        )
    }
}

/// `h^2 X`, and the logarithm of the ratio `e_{i+1}/e_i` of the symmetrizer.
fn scaled_operator(annulus: &Annulus, n: u32, gamma: f64) -> Result<(Tridiagonal, f64)> {
    let h = annulus.spacing();
    let a = (n as f64 - 2.0) / 2.0;
    if a * h >= 1.0 {
        return Err(Error::Discretization(format!(
            "log spacing {h:.3e} too coarse for N = {n}: the difference operator is no longer an M-matrix \
             (need (N-2) h / 2 < 1)"
        )));
    }
    let ell = ((1.0 - a * h) * (1.0 + a * h)).sqrt();
    let m = annulus.nodes;
    let x = Tridiagonal::new(
        vec![-ell * (-gamma * h / 2.0).exp(); m - 1],
        vec![2.0; m],
        vec![-ell * (gamma * h / 2.0).exp(); m - 1],
    );
    let log_e_step = 0.5 * ((1.0 - a * h) / (1.0 + a * h)).ln();
    Ok((x, log_e_step))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let s = norm(x);
    x.iter_mut().for_each(|v| *v /= s);
}

fn rayleigh(x: &Tridiagonal, z: &[f64]) -> f64 {
    let xz = x.mul(z);
    let num: f64 = xz.iter().map(|v| v * v).sum();
    num / z.iter().map(|v| v * v).sum::<f64>()
}

/// Lowest Dirichlet mode of the constant-coefficient limit.
fn initial_guess(m: usize) -> Vec<f64> {
    let mut z: Vec<f64> = (1..=m)
        .map(|i| (std::f64::consts::PI * i as f64 / (m + 1) as f64).sin())
        .collect();
    normalize(&mut z);
    z
}

fn inverse_power(x: &Tridiagonal, opts: &EigOptions) -> Result<(Vec<f64>, f64, usize)> {
    let xt = x.transpose();
    let mut z = initial_guess(x.len());
    let mut lam = rayleigh(x, &z);
    for it in 1..=opts.max_iter {
        let y = xt
            .solve(&z)
            .and_then(|y| x.solve(&y))
            .ok_or_else(|| Error::Discretization("zero pivot in the difference operator".into()))?;
        z = y;
        normalize(&mut z);
        let next = rayleigh(x, &z);
        if (next - lam).abs() <= opts.tol * next {
            return Ok((z, next, it));
        }
        lam = next;
    }
    Err(Error::Convergence(format!(
        "inverse-power iteration did not settle within {} iterations (last estimate {lam:e} in grid units)",
        opts.max_iter
    )))
}

fn shifted_inverse(x: &Tridiagonal, opts: &EigOptions) -> Result<(Vec<f64>, f64, usize)> {
    let gram = x.gram();
    let mut z = initial_guess(x.len());
    let mut hi = rayleigh(x, &z);
    let below = |s: f64| gram.ldlt(s).map(|f| f.negative_count() > 0).unwrap_or(true);
    let mut lo = 0.5 * hi;
    let mut iterations = 0;
    while below(lo) {
        iterations += 1;
        if iterations > 200 {
            return Err(Error::Convergence("no positive-definite shift found".into()));
        }
        hi = lo;
        lo *= 0.5;
    }
    // Bisection stops near the rounding level of the assembled Gram matrix.
    while hi - lo > 1e-9 * hi {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let fac = gram
        .ldlt(lo)
        .ok_or_else(|| Error::Discretization("singular shifted operator".into()))?;
    let mut lam = rayleigh(x, &z);
    for _ in 0..opts.max_iter.min(100) {
        iterations += 1;
        z = fac.solve(&z);
        normalize(&mut z);
        let next = rayleigh(x, &z);
        if (next - lam).abs() <= opts.tol * next {
            return Ok((z, next, iterations));
        }
        lam = next;
    }
    Err(Error::Convergence(format!(
        "shifted inverse iteration did not settle (last estimate {lam:e} in grid units)"
    )))
}

/// Principal eigenvalue of the weighted quotient on `annulus`.
pub fn principal_eigenvalue(annulus: &Annulus, n: u32, gamma: f64, opts: &EigOptions) -> Result<EigReport> {
    opts.validate()?;
    let c_gamma = hardy_rellich_constant(n, gamma)?;
    Annulus::new(annulus.r_inner, annulus.r_outer, annulus.nodes)?;
    let (x, log_e_step) = scaled_operator(annulus, n, gamma)?;
    let (mut z, lam_grid, iterations) = match opts.method {
        EigMethod::InversePower => inverse_power(&x, opts)?,
        EigMethod::ShiftedInverse => shifted_inverse(&x, opts)?,
    };
    if z.iter().sum::<f64>() < 0.0 {
        z.iter_mut().for_each(|v| *v = -*v);
    }
    let xz = x.mul(&z);
    if z.iter().chain(xz.iter()).any(|&v| !(v > 0.0)) {
        return Err(Error::Discretization(
            "principal eigenvector lost positivity; refine the grid".into(),
        ));
    }
    let xtxz = x.transpose().mul(&xz);
    let res: Vec<f64> = xtxz.iter().zip(z.iter()).map(|(a, b)| a - lam_grid * b).collect();
    let residual = norm(&res) / (lam_grid * norm(&z));

    let h = annulus.spacing();
    let r = annulus.radii();
    // φ = E R^{γ/2} ζ and ψ = E R^{-γ/2} X ζ, assembled in logarithms.
    let log_phi: Vec<f64> = (0..r.len())
        .map(|i| log_e_step * i as f64 + 0.5 * gamma * r[i].ln() + z[i].ln())
        .collect();
    let log_psi: Vec<f64> = (0..r.len())
        .map(|i| log_e_step * i as f64 - 0.5 * gamma * r[i].ln() + xz[i].ln())
        .collect();
    let unit = |l: &[f64]| {
        let top = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        l.iter().map(|v| (v - top).exp()).collect::<Vec<_>>()
    };
    Ok(EigReport {
        schema_version: SCHEMA_VERSION,
        n,
        gamma,
        annulus: *annulus,
        method: opts.method,
        lambda: lam_grid / h.powi(4),
        c_gamma,
        iterations,
        residual,
        phi: unit(&log_phi),
        psi: unit(&log_psi),
        r,
    })
}

/// Nested annuli `[10^{-k d}, 10^{k d}]` with `base_nodes * k` nodes, `k = 1..=levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSpec {
    pub levels: usize,
    pub base_nodes: usize,
    pub decades_per_level: f64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self {
            levels: 5,
            base_nodes: 1024,
            decades_per_level: 1.0,
        }
    }
}

impl LadderSpec {
    pub fn annuli(&self) -> Result<Vec<Annulus>> {
        if self.levels == 0 {
            return Err(Error::InvalidOptions("ladder needs at least one level".into()));
        }
        if !(self.decades_per_level > 0.0) {
            return Err(Error::InvalidOptions("decades_per_level must be positive".into()));
        }
        (1..=self.levels)
            .map(|k| {
                let e = self.decades_per_level * k as f64;
                Annulus::new(10f64.powf(-e), 10f64.powf(e), self.base_nodes * k)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub k: usize,
    pub annulus: Annulus,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub schema_version: u32,
    pub n: u32,
    pub gamma: f64,
    pub c_gamma: f64,
    pub rungs: Vec<Rung>,
    /// Richardson limit in `1 / (ln(r_outer/r_inner))^2`.
    pub extrapolated: f64,
    pub strictly_decreasing: bool,
    pub all_above_c_gamma: bool,
    pub top: EigReport,
}

impl LadderReport {
    /// Assemble a ladder from per-annulus reports computed in any order.
    pub fn assemble(n: u32, gamma: f64, reports: Vec<EigReport>) -> Result<Self> {
        let c_gamma = hardy_rellich_constant(n, gamma)?;
        let top = reports
            .last()
            .cloned()
            .ok_or_else(|| Error::InvalidOptions("empty ladder".into()))?;
        let rungs: Vec<Rung> = reports
            .iter()
            .enumerate()
            .map(|(i, r)| Rung {
                k: i + 1,
                annulus: r.annulus,
                lambda: r.lambda,
                residual: r.residual,
                iterations: r.iterations,
            })
            .collect();
        let widths: Vec<f64> = rungs.iter().map(|r| r.annulus.log_width()).collect();
        let lambdas: Vec<f64> = rungs.iter().map(|r| r.lambda).collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            n,
            gamma,
            c_gamma,
            extrapolated: richardson_limit(&widths, &lambdas),
            strictly_decreasing: lambdas.windows(2).all(|w| w[1] < w[0]),
            all_above_c_gamma: lambdas.iter().all(|&l| l > c_gamma),
            rungs,
            top,
        })
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    /// Columns `k, M, lambda, residual, iterations`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,M,lambda,residual,iterations\n");
        for r in &self.rungs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k,
                r.annulus.nodes,
                fmt_f64(r.lambda),
                fmt_f64(r.residual),
                r.iterations
            ));
        }
        out
    }
}

pub fn ladder(n: u32, gamma: f64, spec: &LadderSpec, opts: &EigOptions) -> Result<LadderReport> {
    let reports = spec
        .annuli()?
        .iter()
        .map(|a| principal_eigenvalue(a, n, gamma, opts))
        .collect::<Result<Vec<_>>>()?;
    LadderReport::assemble(n, gamma, reports)
}

/// Neville extrapolation to infinite width, treating `lambda` as a
/// polynomial in `1/L^2` through the (up to) three widest annuli.
pub fn richardson_limit(widths: &[f64], lambdas: &[f64]) -> f64 {
    let k = widths.len().min(lambdas.len()).min(3);
    if k == 0 {
        return f64::NAN;
    }
    let off = widths.len() - k;
    let x: Vec<f64> = widths[off..].iter().map(|l| 1.0 / (l * l)).collect();
    let mut p: Vec<f64> = lambdas[off..off + k].to_vec();
    for level in 1..k {
        for i in 0..k - level {
            let j = i + level;
            p[i] = (x[j] * p[i] - x[i] * p[i + 1]) / (x[j] - x[i]);
        }
    }
    p[0]
}

/// Eigenvalues at `M`, `2M+1` and `4M+3` nodes (the log spacing halves
/// exactly each time) and the ratio of successive differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStudy {
    pub nodes: [usize; 3],
    pub lambda: [f64; 3],
    pub ratio: f64,
}

pub fn grid_convergence(annulus: &Annulus, n: u32, gamma: f64, opts: &EigOptions) -> Result<GridStudy> {
    let m = annulus.nodes;
    let nodes = [m, 2 * m + 1, 4 * m + 3];
    let mut lambda = [0.0; 3];
    for (l, &nodes) in lambda.iter_mut().zip(nodes.iter()) {
        *l = principal_eigenvalue(&Annulus { nodes, ..*annulus }, n, gamma, opts)?.lambda;
    }
    Ok(GridStudy {
        nodes,
        lambda,
        ratio: (lambda[0] - lambda[1]) / (lambda[1] - lambda[2]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    SingularStable,
    SingularUnstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub params: ParameterTriple,
    pub gamma: f64,
    pub k1k2: f64,
    pub c_gamma: f64,
    /// `(C_γ - K1K2) / max(1, K1K2)`.
    pub relative_margin: f64,
    pub verdict: Verdict,
    /// First annulus with `lambda < K1K2`.
    pub witness: Option<Rung>,
    pub ladder: LadderReport,
    pub extensions: Vec<Rung>,
}

impl StabilityReport {
    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

/// Decide stability of the singular solution by comparing the ladder
/// eigenvalues with `K1 K2`.
///
/// `SingularUnstable` needs an annulus with `lambda < K1K2`;
/// `SingularStable` needs `lambda >= K1K2` on every rung together with
/// `K1K2 <= C_γ`. When the ladder is not wide enough to exhibit an unstable
/// annulus although `K1K2 > C_γ`, wider and finer annuli are tried before
/// falling back to `Marginal`. Triples within `marginal_tol` of the curve
/// are always `Marginal`.
pub fn singular_stability_verdict(
    params: ParameterTriple,
    spec: &LadderSpec,
    opts: &EigOptions,
) -> Result<StabilityReport> {
    let sc = derive_scaling(params)?;
    let ladder = ladder(params.n, sc.gamma, spec, opts)?;
    verdict_from_ladder(params, ladder, opts)
}

/// The verdict of [`singular_stability_verdict`] for a ladder computed elsewhere.
pub fn verdict_from_ladder(params: ParameterTriple, ladder: LadderReport, opts: &EigOptions) -> Result<StabilityReport> {
    let sc = derive_scaling(params)?;
    let n = params.n;
    if ladder.n != n || ladder.gamma != sc.gamma {
        return Err(Error::Domain(format!(
            "ladder computed for N = {}, gamma = {} does not match {params:?}",
            ladder.n, ladder.gamma
        )));
    }
    let levels = ladder.rungs.len();
    let k1k2 = sc.k1k2();
    let c_gamma = ladder.c_gamma;
    let relative_margin = (c_gamma - k1k2) / k1k2.max(1.0);
    let mut witness = ladder.rungs.iter().find(|r| r.lambda < k1k2).copied();
    let mut extensions = Vec::new();
    let verdict = if relative_margin.abs() <= opts.marginal_tol {
        Verdict::Marginal
    } else if witness.is_some() {
        Verdict::SingularUnstable
    } else if k1k2 <= c_gamma {
        Verdict::SingularStable
    } else {
        let top = ladder.top.annulus;
        let (mid, h) = ((top.r_inner * top.r_outer).sqrt().ln(), top.spacing());
        let mut found = None;
        for e in 1..=opts.max_extensions {
            let half = 0.5 * top.log_width() * 2f64.powi(e as i32);
            let h_e = h / 2f64.sqrt().powi(e as i32);
            let nodes = (2.0 * half / h_e).round() as usize - 1;
            let annulus = Annulus::new((mid - half).exp(), (mid + half).exp(), nodes)?;
            let rep = principal_eigenvalue(&annulus, n, sc.gamma, opts)?;
            let rung = Rung {
                k: levels + e,
                annulus,
                lambda: rep.lambda,
                residual: rep.residual,
                iterations: rep.iterations,
            };
            extensions.push(rung);
            if rung.lambda < k1k2 {
                found = Some(rung);
                break;
            }
        }
        witness = found;
        if found.is_some() {
            Verdict::SingularUnstable
        } else {
            Verdict::Marginal
        }
    };
    Ok(StabilityReport {
        schema_version: SCHEMA_VERSION,
        params,
        gamma: sc.gamma,
        k1k2,
        c_gamma,
        relative_margin,
        verdict,
        witness,
        ladder,
        extensions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annulus_validation() {
        assert!(Annulus::new(1.0, 1.0, 32).is_err());
        assert!(Annulus::new(0.0, 1.0, 32).is_err());
        assert!(Annulus::new(0.1, 10.0, 15).is_err());
        let a = Annulus::new(0.1, 10.0, 99).unwrap();
        assert!((a.spacing() - 100f64.ln() / 100.0).abs() < 1e-15);
    }

    #[test]
    fn coarse_grid_is_a_discretization_error() {
        let a = Annulus::new(1e-5, 1e5, 16).unwrap();
        let err = principal_eigenvalue(&a, 11, 0.0, &EigOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Discretization(_)));
    }

    #[test]
    fn both_routes_agree() {
        let a = Annulus::new(0.1, 10.0, 200).unwrap();
        let shifted = principal_eigenvalue(&a, 11, 0.4, &EigOptions::default()).unwrap();
        let power = principal_eigenvalue(
            &a,
            11,
            0.4,
            &EigOptions {
                method: EigMethod::InversePower,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((shifted.lambda - power.lambda).abs() < 1e-8 * power.lambda);
        assert!(shifted.lambda > shifted.c_gamma);
        assert!(shifted.phi.iter().chain(shifted.psi.iter()).all(|&v| v > 0.0));
        assert!(shifted.residual < 1e-6, "{}", shifted.residual);
    }

    #[test]
    fn richardson_exact_on_quadratics_in_inverse_square_width() {
        let widths = [4.0, 6.0, 9.0, 13.0];
        let f = |l: f64| 7.0 + 3.0 / (l * l) - 11.0 / l.powi(4);
        let lams: Vec<f64> = widths.iter().map(|&l| f(l)).collect();
        assert!((richardson_limit(&widths, &lams) - 7.0).abs() < 1e-12);
    }
}
