//! Dormand-Prince 5(4) stepper with PI step-size control and the
//! fourth-order continuous extension of Hairer, Nørsett and Wanner.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub trait OdeSystem<const D: usize> {
    fn rhs(&self, t: f64, y: &[f64; D]) -> [f64; D];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeFailure {
    StepUnderflow { t: f64, h: f64 },
    NonFinite { t: f64 },
}

/// One accepted step together with its interpolation coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const D: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [[f64; D]; 5],
}

impl<const D: usize> DenseStep<D> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; D] {
        self.rcont[0]
    }

    pub fn end(&self) -> [f64; D] {
        let mut y = self.rcont[0];
        for (yi, di) in y.iter_mut().zip(self.rcont[1].iter()) {
            *yi += di;
        }
        y
    }

    /// Interpolated state at `t`; accurate to fourth order inside the step.
    pub fn eval(&self, t: f64) -> [f64; D] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        let mut y = [0.0; D];
        for i in 0..D {
            y[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        y
    }
}

/// Stateful integrator advancing one accepted step per call.
pub struct Dopri5<'a, S, const D: usize> {
    sys: &'a S,
    ctl: StepControl,
    t: f64,
    y: [f64; D],
    k1: [f64; D],
    h: f64,
    fac_old: f64,
    last_rejected: bool,
    pub accepted: usize,
    pub rejected: usize,
    pub smallest_step: f64,
}

fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for &(c, k) in terms {
        for i in 0..D {
            out[i] += c * k[i];
        }
    }
    out
}

impl<'a, S: OdeSystem<D>, const D: usize> Dopri5<'a, S, D> {
    pub fn new(sys: &'a S, t0: f64, y0: [f64; D], h0: f64, ctl: StepControl) -> Self {
        let k1 = sys.rhs(t0, &y0);
        Self {
            sys,
            ctl,
            t: t0,
            y: y0,
            k1,
            h: h0.min(ctl.h_max),
            fac_old: 1e-4,
            last_rejected: false,
            accepted: 0,
            rejected: 0,
            smallest_step: f64::INFINITY,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> [f64; D] {
        self.y
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Take one accepted step, never passing `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<DenseStep<D>, OdeFailure> {
        const SAFE: f64 = 0.9;
        const BETA: f64 = 0.04;
        const EXPO1: f64 = 0.2 - BETA * 0.75;
        const FAC_MIN: f64 = 0.2;
        const FAC_MAX: f64 = 10.0;
        let sys = self.sys;
        loop {
            let mut h = self.h.min(self.ctl.h_max);
            let mut last = false;
            if self.t + h >= t_end || t_end - (self.t + h) < 1e-12 * h {
                h = t_end - self.t;
                last = true;
            }
            if h < self.ctl.h_min && !last {
                return Err(OdeFailure::StepUnderflow { t: self.t, h });
            }
            let (t, y, k1) = (self.t, &self.y, &self.k1);
            let k2 = sys.rhs(t + C2 * h, &axpy(y, &[(h * A21, k1)]));
            let k3 = sys.rhs(t + C3 * h, &axpy(y, &[(h * A31, k1), (h * A32, &k2)]));
            let k4 = sys.rhs(t + C4 * h, &axpy(y, &[(h * A41, k1), (h * A42, &k2), (h * A43, &k3)]));
            let k5 = sys.rhs(
                t + C5 * h,
                &axpy(y, &[(h * A51, k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
            );
            let ys = axpy(y, &[(h * A61, k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)]);
            let k6 = sys.rhs(t + h, &ys);
            let y1 = axpy(y, &[(h * A71, k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)]);
            let k7 = sys.rhs(t + h, &y1);

            let mut err = 0.0;
            for i in 0..D {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.ctl.atol + self.ctl.rtol * y[i].abs().max(y1[i].abs());
                err += (e / sc) * (e / sc);
            }
            err = (err / D as f64).sqrt();
            if !err.is_finite() || y1.iter().any(|x| !x.is_finite()) {
                if h.abs() < self.ctl.h_min {
                    return Err(OdeFailure::NonFinite { t });
                }
                self.h = h * FAC_MIN;
                self.rejected += 1;
                self.last_rejected = true;
                continue;
            }

            let fac11 = err.powf(EXPO1);
            let mut fac = fac11 / self.fac_old.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let h_new = h / fac;

            if err <= 1.0 {
                self.fac_old = err.max(1e-4);
                let mut rcont = [[0.0; D]; 5];
                for i in 0..D {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    rcont[0][i] = y[i];
                    rcont[1][i] = ydiff;
                    rcont[2][i] = bspl;
                    rcont[3][i] = ydiff - h * k7[i] - bspl;
                    rcont[4][i] =
                        h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let dense = DenseStep { t0: t, h, rcont };
                self.smallest_step = self.smallest_step.min(h);
                self.t = if last { t_end } else { t + h };
                self.y = y1;
                self.k1 = k7;
                self.accepted += 1;
                self.h = if self.last_rejected { h_new.min(h) } else { h_new };
                self.last_rejected = false;
                return Ok(dense);
            }
            self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            self.rejected += 1;
            self.last_rejected = true;
            if self.h < self.ctl.h_min {
                return Err(OdeFailure::StepUnderflow { t, h: self.h });
            }
        }
    }
}
