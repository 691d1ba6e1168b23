//! Curve CSV, identified-set JSON and run manifest.

use std::path::Path;

use ddc_ident::BetaPoly;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl std::str::FromStr for BetaGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("`{s}` is not lo:hi:n"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n: usize = n.trim().parse().map_err(|_| format!("`{n}` is not a count"))?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(format!("grid needs finite lo < hi, got {lo}:{hi}"));
        }
        if n < 2 {
            return Err(format!("grid needs at least 2 points, got {n}"));
        }
        Ok(Self { lo, hi, n })
    }
}

impl BetaGrid {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// Each curve divided by its largest absolute value on the grid; an
/// identically zero curve stays zero.
pub fn normalized_curves(columns: &[(String, BetaPoly)], grid: &[f64]) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|(_, p)| {
            let v: Vec<f64> = grid.iter().map(|&b| p.eval(b)).collect();
            let m = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            if m > 0.0 {
                v.iter().map(|x| x / m).collect()
            } else {
                v
            }
        })
        .collect()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 17 significant digits, enough to round-trip any double.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curves(path: &Path, columns: &[(String, BetaPoly)], grid: &BetaGrid) -> Result<()> {
    let betas = grid.points();
    let curves = normalized_curves(columns, &betas);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["beta".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (g, b) in betas.iter().enumerate() {
        let mut rec = vec![fmt17(*b)];
        rec.extend(curves.iter().map(|c| fmt17(c[g])));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io(path))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io(path))
}
