use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log error = slope · log ε + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Points entering the fit; the rest fell below the noise floor.
    pub included: Vec<bool>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub band: Option<(f64, f64)>,
    pub pass: Option<bool>,
}

impl RateReport {
    /// Attaches an acceptance band `[lo, hi]` for the slope.
    pub fn with_band(mut self, lo: f64, hi: f64) -> Self {
        self.band = Some((lo, hi));
        self.pass = Some(self.slope >= lo && self.slope <= hi);
        self
    }

    pub fn passed(&self) -> bool {
        self.pass.unwrap_or(true)
    }

    /// Gnuplot-ready table: `eps error included`.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str(&format!("# slope {:.6} intercept {:.6}\n", self.slope, self.intercept));
        s.push_str("eps,error,included\n");
        for ((e, err), inc) in self.eps.iter().zip(&self.errors).zip(&self.included) {
            s.push_str(&format!("{e:.17e},{err:.17e},{}\n", u8::from(*inc)));
        }
        s
    }
}

/// Fits the convergence rate, discarding points whose error lies at or
/// below `noise_floor` (solver-tolerance dominated).
pub fn fit_rate(eps: &[f64], errors: &[f64], noise_floor: Option<f64>) -> Result<RateReport> {
    if eps.len() != errors.len() {
        return Err(Error::RateFit("eps and error lists differ in length".into()));
    }
    if let Some(bad) = eps.iter().chain(errors).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::RateFit(format!("non-positive or non-finite value {bad}")));
    }
    let floor = noise_floor.unwrap_or(0.0);
    let included: Vec<bool> = errors.iter().map(|&e| e > floor).collect();
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(errors)
        .zip(&included)
        .filter(|(_, inc)| **inc)
        .map(|((e, r), _)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::RateFit(format!("need at least 3 usable points, have {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("all eps values coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateReport {
        eps: eps.to_vec(),
        errors: errors.to_vec(),
        included,
        slope,
        intercept,
        residual,
        band: None,
        pass: None,
    })
}
