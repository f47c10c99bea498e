use std::fmt::Write as _;

use super::{DecayFit, DecayModel, FitWindow, SpectrumReport};
use crate::error::{Error, Result};

const HEADER: &str = "n,sigma,sigma_normalized";

/// `n,sigma,sigma_normalized` with LF endings and round-trip float formatting.
pub fn spectrum_csv(report: &SpectrumReport) -> String {
    let mut s = String::with_capacity(48 * report.len());
    s.push_str(HEADER);
    s.push('\n');
    for (i, (sigma, norm)) in report.singular_values().iter().zip(report.normalized()).enumerate() {
        let _ = writeln!(s, "{},{:e},{:e}", i + 1, sigma, norm);
    }
    s
}

/// Reads a spectrum written by [`spectrum_csv`]. Only the `sigma` column is
/// used; normalized values are recomputed.
pub fn parse_spectrum_csv(label: &str, text: &str) -> Result<SpectrumReport> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Input("spectrum CSV is empty".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let sigma_col = columns
        .iter()
        .position(|c| *c == "sigma")
        .ok_or_else(|| Error::Input(format!("spectrum CSV header `{header}` has no `sigma` column")))?;
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let field = line
            .split(',')
            .nth(sigma_col)
            .ok_or_else(|| Error::Input(format!("spectrum CSV row {} is short", row + 2)))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("spectrum CSV row {}: `{field}` is not a number", row + 2)))?;
        values.push(v);
    }
    SpectrumReport::new(label, "", values)
}

/// Both decay models over one window, written as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub label: String,
    pub config_hash: String,
    pub length: usize,
    pub rank_estimate: usize,
    pub window: FitWindow,
    pub fits: Vec<DecayFit>,
}

impl FitSummary {
    pub fn new(report: &SpectrumReport, fits: Vec<DecayFit>) -> Self {
        Self {
            label: report.label.clone(),
            config_hash: report.config_hash.clone(),
            length: report.len(),
            rank_estimate: report.rank_estimate(),
            window: fits.first().map(|f| f.window).unwrap_or(FitWindow { first: 1, last: 1 }),
            fits,
        }
    }

    pub fn fit(&self, model: DecayModel) -> Option<&DecayFit> {
        self.fits.iter().find(|f| f.model == model)
    }

    /// Model with the larger R²; ties go to the power law.
    pub fn preferred_model(&self) -> Option<DecayModel> {
        let p = self.fit(DecayModel::PowerLaw)?;
        let e = self.fit(DecayModel::Exponential)?;
        Some(if e.r_squared > p.r_squared {
            DecayModel::Exponential
        } else {
            DecayModel::PowerLaw
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "label={}", self.label);
        let _ = writeln!(s, "config_hash={}", self.config_hash);
        let _ = writeln!(s, "spectrum_length={}", self.length);
        let _ = writeln!(s, "rank_estimate={}", self.rank_estimate);
        let _ = writeln!(s, "window_first={}", self.window.first);
        let _ = writeln!(s, "window_last={}", self.window.last);
        for f in &self.fits {
            let m = f.model.name();
            let _ = writeln!(s, "{m}.exponent={:e}", f.exponent);
            let _ = writeln!(s, "{m}.intercept={:e}", f.intercept);
            let _ = writeln!(s, "{m}.r_squared={:e}", f.r_squared);
        }
        if let (Some(p), Some(e)) = (self.fit(DecayModel::PowerLaw), self.fit(DecayModel::Exponential)) {
            let _ = writeln!(s, "r_squared_difference={:e}", e.r_squared - p.r_squared);
            let _ = writeln!(s, "better_fit={}", self.preferred_model().unwrap().name());
        }
        s
    }
}
