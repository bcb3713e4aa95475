//! Exact evaluation of the singular solution `(a r^{-alpha}, b r^{-beta})`
//! and of the explicit power-law supersolution of its linearization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent_algebra::ScalingData;

/// `-Δ(c r^{-m})` on `R^N \ {0}`, radial: `c m (N - 2 - m) r^{-m-2}`.
pub fn neg_laplacian_power(coeff: f64, m: f64, n: u32, r: f64) -> f64 {
    coeff * m * (n as f64 - 2.0 - m) * r.powf(-m - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularValues {
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
}

/// The singular pair `u_s = a r^{-alpha}`, `v_s = b r^{-beta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularSolution {
    pub scaling: ScalingData,
}

impl SingularSolution {
    pub fn new(scaling: ScalingData) -> Self {
        Self { scaling }
    }

    pub fn eval(&self, r: f64) -> Result<SingularValues> {
        eval_singular(&self.scaling, r)
    }

    /// Relative residuals of `-Δu_s = v_s^p` and `-Δv_s = u_s^q` at `r`.
    pub fn residuals(&self, r: f64) -> Result<(f64, f64)> {
        let sc = &self.scaling;
        let s = self.eval(r)?;
        let n = sc.params.n;
        let rhs_u = s.v.powf(sc.params.p);
        let rhs_v = s.u.powf(sc.params.q);
        let lap_u = neg_laplacian_power(sc.a, sc.alpha, n, r);
        let lap_v = neg_laplacian_power(sc.b, sc.beta, n, r);
        Ok(((lap_u - rhs_u) / rhs_u, (lap_v - rhs_v) / rhs_v))
    }
}

pub fn eval_singular(scaling: &ScalingData, r: f64) -> Result<SingularValues> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("singular solution needs r > 0, got {r}")));
    }
    let u = scaling.a * r.powf(-scaling.alpha);
    let v = scaling.b * r.powf(-scaling.beta);
    Ok(SingularValues {
        u,
        v,
        du: -scaling.alpha * u / r,
        dv: -scaling.beta * v / r,
    })
}

/// Power-law pair `phi = c r^{-m_phi}`, `psi = r^{-m_psi}` with
/// `-Δphi = p v_s^{p-1} psi` exactly and `-Δpsi >= q u_s^{q-1} phi`
/// precisely when the triple is on or above the Joseph-Lundgren curve.
///
/// The exponents are fixed by the decay rate of `p v_s^{p-1}` (which is
/// `r^{-(2+gamma)}`): `m_phi = (N-2+gamma)/2`, `m_psi = (N-2-gamma)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionPair {
    pub phi_coefficient: f64,
    pub m_phi: f64,
    pub m_psi: f64,
}

impl SupersolutionPair {
    pub fn new(scaling: &ScalingData) -> Self {
        let n = scaling.params.n as f64;
        let g = scaling.gamma;
        let phi_coefficient = 4.0 * scaling.k1 / ((n - 2.0 - g) * (n - 2.0 + g));
        // m_phi - m_psi is fixed by the K1 weight; m_phi + m_psi = N - 2 makes both
        // Laplacian factors equal to ((N-2)^2 - gamma^2)/4.
        let m_psi = (n - scaling.k1_exponent) / 2.0;
        let m_phi = m_psi + scaling.k1_exponent - 2.0;
        Self {
            phi_coefficient,
            m_phi,
            m_psi,
        }
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.phi_coefficient * r.powf(-self.m_phi)
    }

    pub fn psi(&self, r: f64) -> f64 {
        r.powf(-self.m_psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityWitness {
    /// `(phi, psi)` is a positive supersolution of the linearized system.
    Supersolution,
    /// The second inequality fails; the pair does not certify stability.
    NotSupersolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionReport {
    pub pair: SupersolutionPair,
    pub radii: Vec<f64>,
    /// Relative residual of `-Δphi = p v_s^{p-1} psi`.
    pub first: Vec<f64>,
    /// Relative residual `(-Δpsi - q u_s^{q-1} phi) / (-Δpsi)`.
    pub second: Vec<f64>,
    /// All second residuals share one sign.
    pub sign_constant: bool,
    pub witness: StabilityWitness,
}

/// Default sampling radii: 64 log-spaced points on `[1e-3, 1e3]`.
pub fn default_sample_radii() -> Vec<f64> {
    log_spaced(1e-3, 1e3, 64)
}

pub(crate) fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if count == 1 {
                lo
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn supersolution_residuals(scaling: &ScalingData, r_samples: &[f64]) -> Result<SupersolutionReport> {
    if r_samples.is_empty() {
        return Err(Error::Domain("no sample radii".into()));
    }
    let pair = SupersolutionPair::new(scaling);
    let n = scaling.params.n;
    let (p, q) = (scaling.params.p, scaling.params.q);
    let mut first = Vec::with_capacity(r_samples.len());
    let mut second = Vec::with_capacity(r_samples.len());
    for &r in r_samples {
        let s = eval_singular(scaling, r)?;
        let lap_phi = neg_laplacian_power(pair.phi_coefficient, pair.m_phi, n, r);
        let lap_psi = neg_laplacian_power(1.0, pair.m_psi, n, r);
        let coupling_1 = p * s.v.powf(p - 1.0) * pair.psi(r);
        let coupling_2 = q * s.u.powf(q - 1.0) * pair.phi(r);
        first.push((lap_phi - coupling_1) / coupling_1);
        second.push((lap_psi - coupling_2) / lap_psi);
    }
    let all_nonneg = second.iter().all(|&x| x >= 0.0);
    let all_neg = second.iter().all(|&x| x < 0.0);
    Ok(SupersolutionReport {
        pair,
        radii: r_samples.to_vec(),
        first,
        second,
        sign_constant: all_nonneg || all_neg,
        witness: if all_nonneg {
            StabilityWitness::Supersolution
        } else {
            StabilityWitness::NotSupersolution
        },
    })
}
