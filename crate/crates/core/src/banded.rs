//! Tridiagonal and symmetric pentadiagonal kernels used by the eigensolver.

/// Tridiagonal matrix: `sub[i] = A[i+1][i]`, `sup[i] = A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Self {
        assert!(!diag.is_empty());
        assert_eq!(sub.len() + 1, diag.len());
        assert_eq!(sup.len() + 1, diag.len());
        Self { sub, diag, sup }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn transpose(&self) -> Self {
        Self {
            sub: self.sup.clone(),
            diag: self.diag.clone(),
            sup: self.sub.clone(),
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.sup[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Thomas elimination without pivoting; stable for diagonally dominant
    /// M-matrices. Returns `None` on a zero pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut piv = self.diag[0];
        if piv == 0.0 {
            return None;
        }
        x[0] = b[0] / piv;
        for i in 1..n {
            c[i - 1] = self.sup[i - 1] / piv;
            piv = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if piv == 0.0 {
                return None;
            }
            x[i] = (b[i] - self.sub[i - 1] * x[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Some(x)
    }

    /// The symmetric pentadiagonal product `A^T A`.
    pub fn gram(&self) -> SymPentadiagonal {
        let n = self.len();
        let mut d0 = vec![0.0; n];
        let mut d1 = vec![0.0; n.saturating_sub(1)];
        let mut d2 = vec![0.0; n.saturating_sub(2)];
        for i in 0..n {
            let mut s = self.diag[i] * self.diag[i];
            if i > 0 {
                s += self.sup[i - 1] * self.sup[i - 1];
            }
            if i + 1 < n {
                s += self.sub[i] * self.sub[i];
            }
            d0[i] = s;
        }
        for i in 0..n.saturating_sub(1) {
            // Column i against column i+1: rows i and i+1 overlap.
            d1[i] = self.diag[i] * self.sup[i] + self.sub[i] * self.diag[i + 1];
        }
        for i in 0..n.saturating_sub(2) {
            d2[i] = self.sub[i] * self.sup[i + 1];
        }
        SymPentadiagonal { d0, d1, d2 }
    }
}

/// Symmetric matrix with bandwidth two, stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPentadiagonal {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// `A - shift*I = L D L^T` with unit lower-triangular `L` of bandwidth two.
#[derive(Debug, Clone)]
pub struct PentaLdlt {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl SymPentadiagonal {
    pub fn len(&self) -> usize {
        self.d0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d0.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y: Vec<f64> = (0..n).map(|i| self.d0[i] * x[i]).collect();
        for i in 0..n.saturating_sub(1) {
            y[i] += self.d1[i] * x[i + 1];
            y[i + 1] += self.d1[i] * x[i];
        }
        for i in 0..n.saturating_sub(2) {
            y[i] += self.d2[i] * x[i + 2];
            y[i + 2] += self.d2[i] * x[i];
        }
        y
    }

    /// Factor `A - shift*I` without pivoting. `None` if a pivot vanishes.
    pub fn ldlt(&self, shift: f64) -> Option<PentaLdlt> {
        let n = self.len();
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n.saturating_sub(1)];
        let mut l2 = vec![0.0; n.saturating_sub(2)];
        for i in 0..n {
            let mut di = self.d0[i] - shift;
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if di == 0.0 || !di.is_finite() {
                return None;
            }
            d[i] = di;
            if i + 1 < n {
                let mut a = self.d1[i];
                if i >= 1 {
                    a -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = a / di;
            }
            if i + 2 < n {
                l2[i] = self.d2[i] / di;
            }
        }
        Some(PentaLdlt { d, l1, l2 })
    }
}

impl PentaLdlt {
    /// Number of negative pivots, which by Sylvester's law equals the
    /// number of eigenvalues below the shift.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y = b.to_vec();
        for i in 0..n {
            if i >= 1 {
                y[i] -= self.l1[i - 1] * y[i - 1];
            }
            if i >= 2 {
                y[i] -= self.l2[i - 2] * y[i - 2];
            }
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                y[i] -= self.l1[i] * y[i + 1];
            }
            if i + 2 < n {
                y[i] -= self.l2[i] * y[i + 2];
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tridiagonal {
        Tridiagonal::new(vec![-0.9, -0.7, -1.1, -0.5], vec![2.0, 2.5, 3.0, 2.2, 1.9], vec![-1.0, -0.8, -0.6, -0.4])
    }

    fn dense(t: &Tridiagonal) -> Vec<Vec<f64>> {
        let n = t.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = t.diag[i];
            if i + 1 < n {
                a[i][i + 1] = t.sup[i];
                a[i + 1][i] = t.sub[i];
            }
        }
        a
    }

    #[test]
    fn thomas_solves() {
        let t = sample();
        let b = [1.0, -2.0, 0.5, 3.0, 1.0];
        let x = t.solve(&b).unwrap();
        let back = t.mul(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-14);
        }
        let xt = t.transpose().solve(&b).unwrap();
        let a = dense(&t);
        for j in 0..5 {
            let s: f64 = (0..5).map(|i| a[i][j] * xt[i]).sum();
            assert!((s - b[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn gram_matches_dense_product() {
        let t = sample();
        let a = dense(&t);
        let g = t.gram();
        let n = t.len();
        for i in 0..n {
            for j in 0..n {
                let want: f64 = (0..n).map(|k| a[k][i] * a[k][j]).sum();
                let got = match j as isize - i as isize {
                    0 => g.d0[i],
                    1 => g.d1[i],
                    -1 => g.d1[j],
                    2 => g.d2[i],
                    -2 => g.d2[j],
                    _ => 0.0,
                };
                assert!((want - got).abs() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn ldlt_solves_and_counts() {
        let g = sample().gram();
        let f = g.ldlt(0.0).unwrap();
        assert_eq!(f.negative_count(), 0);
        let b = [0.3, 1.0, -1.0, 2.0, 0.0];
        let x = f.solve(&b);
        let back = g.mul(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        // A huge shift puts every eigenvalue below it.
        assert_eq!(g.ldlt(1e3).unwrap().negative_count(), g.len());
    }
}
