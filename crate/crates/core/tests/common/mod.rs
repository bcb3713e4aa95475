//! Independent reference integrator: classical RK4 with a fixed step in
//! `t = ln r`, plain variables `(u, v, r u', r v')`, second-order Taylor start.

#![allow(dead_code)]

pub struct Reference {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    /// Radius at which `u` or `v` first turned negative, if it did.
    pub stopped_at: Option<f64>,
}

fn rhs(n: f64, p: f64, q: f64, t: f64, y: [f64; 4]) -> [f64; 4] {
    let e2 = (2.0 * t).exp();
    [
        y[2],
        y[3],
        -(n - 2.0) * y[2] - e2 * y[1].max(0.0).powf(p),
        -(n - 2.0) * y[3] - e2 * y[0].max(0.0).powf(q),
    ]
}

fn rk4(n: f64, p: f64, q: f64, t: f64, y: [f64; 4], h: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]];
    let k1 = rhs(n, p, q, t, y);
    let k2 = rhs(n, p, q, t + h / 2.0, add(y, k1, h / 2.0));
    let k3 = rhs(n, p, q, t + h / 2.0, add(y, k2, h / 2.0));
    let k4 = rhs(n, p, q, t + h, add(y, k3, h));
    let mut out = y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrate through the given output radii, taking `substeps` RK4 steps
/// per output interval; the first radius is reached from `r[0] / 100`.
pub fn reference(n: u32, p: f64, q: f64, u0: f64, v0: f64, radii: &[f64], substeps: usize) -> Reference {
    let nn = n as f64;
    let r0 = radii[0] / 100.0;
    let mut y = [
        u0 - v0.powf(p) * r0 * r0 / (2.0 * nn),
        v0 - u0.powf(q) * r0 * r0 / (2.0 * nn),
        -v0.powf(p) * r0 * r0 / nn,
        -u0.powf(q) * r0 * r0 / nn,
    ];
    let mut t = r0.ln();
    let mut out = Reference {
        r: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        du: Vec::new(),
        dv: Vec::new(),
        stopped_at: None,
    };
    let lead = 5000;
    for (i, &r) in radii.iter().enumerate() {
        let target = r.ln();
        let steps = if i == 0 { lead } else { substeps };
        let h = (target - t) / steps as f64;
        for _ in 0..steps {
            y = rk4(nn, p, q, t, y, h);
            t += h;
            if y[0] < 0.0 || y[1] < 0.0 {
                out.stopped_at = Some(t.exp());
                return out;
            }
        }
        t = target;
        out.r.push(r);
        out.u.push(y[0]);
        out.v.push(y[1]);
        out.du.push(y[2] / r);
        out.dv.push(y[3] / r);
    }
    out
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
