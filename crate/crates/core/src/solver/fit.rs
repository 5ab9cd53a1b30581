//! Log-linear decay fits on time series.

use serde::{Deserialize, Serialize};

use super::stepper::TimeSeries;
use crate::error::KineticError;
use crate::norms::NormReport;

/// Minimum number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesField {
    Mass,
    Entropy,
    LpVLinfX,
    L2Xv,
    L2GammaPlus,
}

impl SeriesField {
    pub fn of(&self, r: &NormReport) -> f64 {
        match self {
            SeriesField::Mass => r.mass,
            SeriesField::Entropy => r.entropy,
            SeriesField::LpVLinfX => r.lp_v_linf_x,
            SeriesField::L2Xv => r.l2_xv,
            SeriesField::L2GammaPlus => r.l2_gamma_plus,
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Some(match name {
            "mass" => SeriesField::Mass,
            "entropy" => SeriesField::Entropy,
            "lp_v_linf_x" => SeriesField::LpVLinfX,
            "l2_xv" => SeriesField::L2Xv,
            "l2_gamma_plus" => SeriesField::L2GammaPlus,
            _ => return None,
        })
    }
}

/// Least-squares fit of log(value) = a − λ t. Returns (λ̂, R²); a constant
/// series has λ̂ = 0 and R² = 1.
pub fn fit_log_linear(t: &[f64], values: &[f64]) -> Result<(f64, f64), KineticError> {
    if t.len() != values.len() || t.len() < MIN_FIT_POINTS {
        return Err(KineticError::TooFewSamples { need: MIN_FIT_POINTS, got: t.len().min(values.len()) });
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(KineticError::NonpositiveValue(*bad));
    }
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let (tm, ym) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let stt: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let sty: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym) * (b - ym)).sum();
    if stt == 0.0 {
        return Err(KineticError::TooFewSamples { need: 2, got: 1 });
    }
    let slope = sty / stt;
    // relative tolerance keeps round-off on a flat series from reading as noise
    let r2 = if syy <= 1e-24 * (1.0 + ym * ym) * n { 1.0 } else { (sty * sty) / (stt * syy) };
    Ok((if slope == 0.0 { 0.0 } else { -slope }, r2))
}

/// Fit of one report column over reports with t ≥ t_min.
pub fn fit_decay_rate(series: &TimeSeries, field: SeriesField, t_min: f64) -> Result<(f64, f64), KineticError> {
    let (t, v): (Vec<f64>, Vec<f64>) = series.reports.iter().filter(|r| r.t >= t_min).map(|r| (r.t, field.of(r))).unzip();
    fit_log_linear(&t, &v)
}
