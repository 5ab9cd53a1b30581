//! Weighted gain-term estimates: the pointwise bound with its decay factor
//! and the weighted L^p_v bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::RandomFunction;
use super::{EstimateReport, RefinementLevel, VerifyGrid};
use crate::collision::CollisionOperator;
use crate::error::KineticError;
use crate::kinematics::{
    beta_threshold, beta_threshold_lp_gain, gain_decay_exponent, gain_moment_exponent, p_admissible, weight_w, CollisionParams, Vec3,
};

const VELOCITY_SALT: u64 = 0x7e10_c17e;
/// Denominators below this are treated as an f ≈ 0 draw and skipped.
const UNDERFLOW: f64 = 1e-200;

/// One (γ, p, β) combination of the gain-estimate case split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPreset {
    pub name: &'static str,
    pub gamma: f64,
    pub p: f64,
    pub beta: f64,
}

/// One preset per branch: small γ, γ > 3/4 with p > 1/(1−γ), and γ > 3/4
/// with p below 1/(1−γ).
pub const GAIN_PRESETS: [GainPreset; 3] = [
    GainPreset { name: "gamma-0.5-p-5", gamma: 0.5, p: 5.0, beta: 2.5 },
    GainPreset { name: "gamma-0.8-p-6", gamma: 0.8, p: 6.0, beta: 3.0 },
    GainPreset { name: "gamma-0.9-p-5", gamma: 0.9, p: 5.0, beta: 3.2 },
];

impl GainPreset {
    pub fn validate(&self) -> Result<(), KineticError> {
        if !p_admissible(self.p, self.gamma) || gain_moment_exponent(self.p, self.gamma).is_none() {
            return Err(KineticError::InvalidParams(format!("p = {} is not admissible for gamma = {}", self.p, self.gamma)));
        }
        let need = beta_threshold(self.p, self.gamma);
        if !(self.beta > need) {
            return Err(KineticError::InvalidParams(format!("beta = {} must exceed {need:.4} for {}", self.beta, self.name)));
        }
        Ok(())
    }

    pub fn params(&self) -> CollisionParams {
        CollisionParams { gamma: self.gamma, p: self.p, beta: self.beta, ..CollisionParams::default() }
    }
}

/// ‖wf‖_{L^p_v} and (∫(1+|η|)^e |f|²)^{1/2} for one tabulated f.
fn gain_denominator(op: &CollisionOperator, f: &[f64], preset: &GainPreset) -> f64 {
    let e = gain_moment_exponent(preset.p, preset.gamma).unwrap_or(0.0);
    let (mut lp, mut moment) = (0.0, 0.0);
    for (x, v) in f.iter().zip(op.grid.nodes()) {
        lp += (weight_w(&v, preset.beta) * x).abs().powf(preset.p);
        moment += (1.0 + v.norm()).powf(e) * x * x;
    }
    (lp * op.grid.weight).powf(1.0 / preset.p) * (moment * op.grid.weight).sqrt()
}

/// |wΓ⁺(f,f)(v)| (1+|v|)^{a} / [‖wf‖_{L^p}(∫(1+|η|)^e|f|²)^{1/2}] with a the
/// decay exponent of the pointwise bound; `None` when the denominator
/// underflows.
pub fn gain_pointwise_ratio(op: &CollisionOperator, f: &[f64], v: &Vec3, preset: &GainPreset) -> Option<f64> {
    let den = gain_denominator(op, f, preset);
    (den > UNDERFLOW).then(|| pointwise_numerator(op, f, v, preset) / den)
}

fn pointwise_numerator(op: &CollisionOperator, f: &[f64], v: &Vec3, preset: &GainPreset) -> f64 {
    let a = gain_decay_exponent(preset.p, preset.gamma);
    weight_w(v, preset.beta) * op.gamma_plus_at(f, f, v).abs() * (1.0 + v.norm()).powf(a)
}

/// Sample velocities: uniform radius in [0, v_cut/2], uniform direction.
fn sample_velocity(seed: u64, j: usize, v_cut: f64) -> Vec3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ VELOCITY_SALT);
    rng.set_stream(j as u64);
    let d = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
    d.normalize() * (0.5 * v_cut * rng.random::<f64>())
}

/// Ratios for every (draw, velocity) pair on one grid: `out[i][j]` for
/// draw i and velocity j; draws whose denominator underflows are dropped.
fn pointwise_table(preset: &GainPreset, grid: VerifyGrid, n_f: usize, vs: &[Vec3], seed: u64) -> Result<(Vec<Vec<f64>>, String), KineticError> {
    let op = grid.operator(&preset.params())?;
    let table = (0..n_f)
        .filter_map(|i| {
            let f = RandomFunction::draw(seed, i).tabulate(&op.grid);
            let den = gain_denominator(&op, &f, preset);
            (den > UNDERFLOW).then_some((f, den))
        })
        .map(|(f, den)| vs.par_iter().map(|v| pointwise_numerator(&op, &f, v, preset) / den).collect())
        .collect();
    Ok((table, op.grid.hash()))
}

fn table_sup(table: &[Vec<f64>], n_v: usize) -> f64 {
    table.iter().flat_map(|row| row[..n_v].iter()).cloned().fold(0.0, f64::max)
}

fn level(label: &str, baseline: Option<usize>, grid: VerifyGrid, samples: usize, sup: f64, grid_hash: String) -> RefinementLevel {
    RefinementLevel { label: label.into(), baseline, grid_n: grid.n, n_polar: grid.n_polar, samples, sup, grid_hash }
}

/// Sup of the pointwise gain ratio over `n_f` random functions and `n_v`
/// velocities; then with 2·n_v velocities; then the same draws and
/// velocities on the grid with twice the nodes per axis. The profile holds
/// (|v|, sup over draws) on the finer grid.
pub fn check_gain_pointwise(preset: &GainPreset, n_f: usize, n_v: usize, grid: VerifyGrid, seed: u64) -> Result<EstimateReport, KineticError> {
    preset.validate()?;
    let vs: Vec<Vec3> = (0..2 * n_v).map(|j| sample_velocity(seed, j, grid.v_cut)).collect();
    let (coarse, coarse_hash) = pointwise_table(preset, grid, n_f, &vs, seed)?;
    let fine_grid = grid.refined();
    let (fine, fine_hash) = pointwise_table(preset, fine_grid, n_f, &vs, seed)?;
    let levels = vec![
        level("base", None, grid, coarse.len() * n_v, table_sup(&coarse, n_v), coarse_hash.clone()),
        level("doubled velocity samples", Some(0), grid, coarse.len() * 2 * n_v, table_sup(&coarse, 2 * n_v), coarse_hash),
        level("doubled grid", Some(1), fine_grid, fine.len() * 2 * n_v, table_sup(&fine, 2 * n_v), fine_hash),
    ];
    let mut profile: Vec<(f64, f64)> =
        vs.iter().enumerate().map(|(j, v)| (v.norm(), fine.iter().map(|row| row[j]).fold(0.0, f64::max))).collect();
    profile.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut report = EstimateReport::from_levels(format!("gain-pointwise/{}", preset.name), levels, seed, "");
    report.profile = profile;
    Ok(report)
}

/// ‖wΓ⁺(f,f)‖_{L^p_v} / ‖wf‖²_{L^p_v} on the grid.
pub fn gain_lp_ratio(op: &CollisionOperator, f: &[f64], preset: &GainPreset) -> Option<f64> {
    let lp = |x: &[f64]| -> f64 {
        let s: f64 = x.iter().zip(op.grid.nodes()).map(|(a, v)| (weight_w(&v, preset.beta) * a).abs().powf(preset.p)).sum();
        (s * op.grid.weight).powf(1.0 / preset.p)
    };
    let den = lp(f).powi(2);
    (den > UNDERFLOW).then(|| lp(&op.gamma_plus(f, f)) / den)
}

/// Draws refined on the doubled grid in the L^p check: the ones with the
/// largest ratios on the base grid, which are the ones that set the sup.
pub const LP_REFINED_DRAWS: usize = 8;

/// Sup of the weighted L^p gain ratio over `n_f` draws and over 2·n_f draws
/// on the base grid; then the [`LP_REFINED_DRAWS`] draws with the largest
/// base ratios again on the grid with twice the nodes per axis.
pub fn check_gain_lp(preset: &GainPreset, n_f: usize, grid: VerifyGrid, seed: u64) -> Result<EstimateReport, KineticError> {
    preset.validate()?;
    if !(preset.beta > beta_threshold_lp_gain(preset.p, preset.gamma)) {
        return Err(KineticError::InvalidParams(format!("beta = {} too small for the L^p gain bound", preset.beta)));
    }
    let op = grid.operator(&preset.params())?;
    let coarse: Vec<(usize, f64)> = (0..2 * n_f)
        .filter_map(|i| gain_lp_ratio(&op, &RandomFunction::draw(seed, i).tabulate(&op.grid), preset).map(|r| (i, r)))
        .collect();
    let sup_of = |rs: &[(usize, f64)]| rs.iter().map(|r| r.1).fold(0.0, f64::max);
    let first: Vec<(usize, f64)> = coarse.iter().filter(|r| r.0 < n_f).cloned().collect();
    let mut top = coarse.clone();
    top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    top.truncate(LP_REFINED_DRAWS);
    let fine_grid = grid.refined();
    let fine_op = fine_grid.operator(&preset.params())?;
    let fine: Vec<(usize, f64)> = top
        .iter()
        .filter_map(|(i, _)| gain_lp_ratio(&fine_op, &RandomFunction::draw(seed, *i).tabulate(&fine_op.grid), preset).map(|r| (*i, r)))
        .collect();
    let levels = vec![
        level("base", None, grid, first.len(), sup_of(&first), op.grid.hash()),
        level("doubled draws", Some(0), grid, coarse.len(), sup_of(&coarse), op.grid.hash()),
        level("doubled grid, top draws", Some(1), fine_grid, fine.len(), sup_of(&fine), fine_op.grid.hash()),
    ];
    Ok(EstimateReport::from_levels(format!("gain-lp/{}", preset.name), levels, seed, ""))
}
