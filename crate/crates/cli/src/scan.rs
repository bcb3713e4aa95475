//! Region scan over a window of the `(p, q)` plane.

use lel_core::exponent_algebra::{classify, ParameterTriple};
use lel_core::io::{fmt_f64, to_json_string, SCHEMA_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub p: (f64, f64),
    pub q: (f64, f64),
}

impl Default for ScanWindow {
    fn default() -> Self {
        Self {
            p: (1.0, 12.0),
            q: (1.0, 12.0),
        }
    }
}

impl ScanWindow {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("p", self.p), ("q", self.q)] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(CliError::Usage(format!("empty {name} window [{lo}, {hi}]")));
            }
            if lo < 1.0 {
                return Err(CliError::Core(lel_core::Error::Domain(format!(
                    "{name} window starts below 1 ({lo})"
                ))));
            }
        }
        Ok(())
    }

    /// Cell centres along one axis.
    fn centres(range: (f64, f64), resolution: usize) -> Vec<f64> {
        let step = (range.1 - range.0) / resolution as f64;
        (0..resolution).map(|i| range.0 + (i as f64 + 0.5) * step).collect()
    }
}

/// Region code of one point. Points with `p < q` are classified through the
/// swapped pair, the system being symmetric under exchanging `u` and `v`.
pub fn cell_code(p: f64, q: f64, n: u32, tol_curve: f64) -> u8 {
    let (hi, lo) = if p >= q { (p, q) } else { (q, p) };
    match ParameterTriple::new(hi, lo, n) {
        Ok(t) => classify(t, tol_curve).code(),
        // pq <= 1: far below the Sobolev hyperbola.
        Err(_) => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanHeader {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub n: u32,
    pub window: ScanWindow,
    pub resolution: usize,
    pub cells: usize,
    /// Number of cells with code 0, 1 and 2.
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub header: ScanHeader,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Row-major in `q`: `codes[j * resolution + i]` is the cell at `(p[i], q[j])`.
    pub codes: Vec<u8>,
}

pub fn scan(n: u32, window: ScanWindow, resolution: usize, tol_curve: f64, config_hash: &str) -> Result<ScanResult> {
    window.validate()?;
    if resolution == 0 {
        return Err(CliError::Usage("resolution must be at least 1".into()));
    }
    if n < 3 {
        return Err(CliError::Core(lel_core::Error::Domain(format!("requires N >= 3, got N = {n}"))));
    }
    let p = ScanWindow::centres(window.p, resolution);
    let q = ScanWindow::centres(window.q, resolution);
    let codes: Vec<u8> = q
        .par_iter()
        .flat_map_iter(|&qj| p.iter().map(move |&pi| cell_code(pi, qj, n, tol_curve)).collect::<Vec<_>>())
        .collect();
    let mut counts = [0usize; 3];
    for &c in &codes {
        counts[c as usize] += 1;
    }
    Ok(ScanResult {
        header: ScanHeader {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            n,
            window,
            resolution,
            cells: codes.len(),
            counts,
        },
        p,
        q,
        codes,
    })
}

impl ScanResult {
    pub fn code_at(&self, i: usize, j: usize) -> u8 {
        self.codes[j * self.header.resolution + i]
    }

    /// Columns `p, q, code`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,q,code\n");
        for (j, &qj) in self.q.iter().enumerate() {
            for (i, &pi) in self.p.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", fmt_f64(pi), fmt_f64(qj), self.code_at(i, j)));
            }
        }
        out
    }

    pub fn header_json(&self) -> String {
        to_json_string(&self.header)
    }

    /// Centre of the first diagonal cell with code 2, scanning upward in `p`.
    /// Only defined when both axes share one window.
    pub fn diagonal_boundary(&self) -> Option<f64> {
        if self.header.window.p != self.header.window.q {
            return None;
        }
        (0..self.header.resolution)
            .find(|&i| self.code_at(i, i) == 2)
            .map(|i| self.p[i])
    }

    pub fn cell_width(&self) -> f64 {
        (self.header.window.p.1 - self.header.window.p.0) / self.header.resolution as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swapped_cells_match() {
        assert_eq!(cell_code(3.0, 9.0, 11, 1e-9), cell_code(9.0, 3.0, 11, 1e-9));
        assert_eq!(cell_code(1.0, 1.0, 11, 1e-9), 0);
    }

    #[test]
    fn counts_cover_all_cells() {
        let s = scan(11, ScanWindow::default(), 17, 1e-9, "h").unwrap();
        assert_eq!(s.codes.len(), 17 * 17);
        assert_eq!(s.header.counts.iter().sum::<usize>(), 289);
        assert_eq!(s.to_csv().lines().count(), 290);
        for i in 0..17 {
            for j in 0..17 {
                assert_eq!(s.code_at(i, j), s.code_at(j, i));
            }
        }
    }

    #[test]
    fn bad_windows_rejected() {
        let w = ScanWindow { p: (0.5, 2.0), q: (1.0, 2.0) };
        assert_eq!(scan(11, w, 4, 1e-9, "h").unwrap_err().exit_code(), 2);
        let w = ScanWindow { p: (3.0, 2.0), q: (1.0, 2.0) };
        assert!(scan(11, w, 4, 1e-9, "h").is_err());
    }
}
