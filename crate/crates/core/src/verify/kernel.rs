//! Envelope of the empirical kernel k(v, v′) and the coercivity of L.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ensemble::RandomFunction;
use super::{EstimateReport, RefinementLevel, Trend, VerifyGrid};
use crate::collision::{invariant_basis, project_p, CollisionOperator, Interp, KernelForm};
use crate::error::KineticError;
use crate::kinematics::{CollisionParams, Vec3};

const DIRECTION_SALT: u64 = 0xd1_5ec7;
/// Draws whose non-hydrodynamic part is smaller than this are skipped.
const MIN_MICRO_NORM: f64 = 1e-6;

/// [Σ_{m≠i} |k(v_i, v_m)⟨v_i⟩^ℓ/⟨v_m⟩^ℓ|^q h³] (1+|v_i|)^{q(1−γ)+1} from one
/// kernel row. The node pair m = i is never used: the diagonal is singular.
pub fn kernel_integral_ratio(op: &CollisionOperator, i: usize, q: f64, ell: f64) -> f64 {
    let row = op.kernel_row(i, KernelForm::Direct, Interp::Trilinear);
    row_ratio(op, &row, i, q, ell)
}

fn row_ratio(op: &CollisionOperator, row: &[f64], i: usize, q: f64, ell: f64) -> f64 {
    let h3 = op.grid.weight;
    let v = op.grid.node(i);
    let bracket = |x: &Vec3| (1.0 + x.norm_squared()).sqrt();
    let bv = bracket(&v).powf(ell);
    let mut s = 0.0;
    for (m, r) in row.iter().enumerate() {
        if m == i {
            continue;
        }
        let k = r / h3;
        s += (k * bv / bracket(&op.grid.node(m)).powf(ell)).abs().powf(q);
    }
    s * h3 * (1.0 + v.norm()).powf(q * (1.0 - op.params.gamma) + 1.0)
}

fn directions(seed: u64, count: usize) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DIRECTION_SALT);
    let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
    (0..count).map(|_| Vec3::new(n(), n(), n()).normalize()).collect()
}

/// Sup of the kernel integral ratio over the nodes nearest to r·d for the
/// given radii and three seeded directions, on each grid in turn. The
/// profile holds (|v|, largest ratio over directions) on the last grid.
pub fn check_kernel_integral(gamma: f64, q: f64, ell: f64, radii: &[f64], grids: &[VerifyGrid], seed: u64) -> Result<EstimateReport, KineticError> {
    Ok(check_kernel_integrals(gamma, &[(q, ell)], radii, grids, seed)?.remove(0))
}

/// One report per (q, ℓ) pair. Kernel rows are assembled once per grid and
/// shared by all pairs.
pub fn check_kernel_integrals(gamma: f64, pairs: &[(f64, f64)], radii: &[f64], grids: &[VerifyGrid], seed: u64) -> Result<Vec<EstimateReport>, KineticError> {
    if let Some((q, _)) = pairs.iter().find(|(q, _)| !(1.0..3.0).contains(q)) {
        return Err(KineticError::InvalidParams(format!("q = {q} must lie in [1, 3)")));
    }
    if grids.is_empty() || radii.is_empty() || pairs.is_empty() {
        return Err(KineticError::InvalidParams("need at least one grid, radius and (q, l) pair".into()));
    }
    let dirs = directions(seed, 3);
    let params = CollisionParams { gamma, ..CollisionParams::default() };
    let mut levels = vec![Vec::new(); pairs.len()];
    let mut profiles = vec![Vec::new(); pairs.len()];
    for grid in grids {
        let op = grid.operator(&params)?;
        let mut nodes: Vec<usize> = radii.iter().flat_map(|r| dirs.iter().map(|d| op.grid.nearest(&(d * *r)))).collect();
        nodes.sort_unstable();
        nodes.dedup();
        // ratios[node][pair]
        let ratios: Vec<Vec<f64>> = nodes
            .par_iter()
            .map(|&i| {
                let row = op.kernel_row(i, KernelForm::Direct, Interp::Trilinear);
                pairs.iter().map(|&(q, ell)| row_ratio(&op, &row, i, q, ell)).collect()
            })
            .collect();
        for (j, (lv, profile)) in levels.iter_mut().zip(&mut profiles).enumerate() {
            let sup = ratios.iter().map(|r| r[j]).fold(0.0, f64::max);
            lv.push(RefinementLevel {
                label: format!("n = {}", grid.n),
                baseline: lv.len().checked_sub(1),
                grid_n: grid.n,
                n_polar: grid.n_polar,
                samples: nodes.len(),
                sup,
                grid_hash: op.grid.hash(),
            });
            *profile = nodes.iter().zip(&ratios).map(|(&i, r)| (op.grid.node(i).norm(), r[j])).collect();
        }
    }
    let reports = pairs
        .iter()
        .zip(levels.into_iter().zip(profiles))
        .map(|(&(q, ell), (lv, mut profile))| {
            profile.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for (r, x) in profile {
                match merged.last_mut() {
                    Some(last) if (last.0 - r).abs() < 1e-12 => last.1 = last.1.max(x),
                    _ => merged.push((r, x)),
                }
            }
            let mut report = EstimateReport::from_levels(
                format!("kernel-integral/q={q}/l={ell}/gamma={gamma}"),
                lv,
                seed,
                "diagonal node pair excluded (one cell)",
            );
            report.profile = merged;
            report
        })
        .collect();
    Ok(reports)
}

/// Minimum of (Lf, f)/‖(I−P)f‖² over smooth random draws on each grid.
/// Passes when the minimum on every grid exceeds the quadrature budget,
/// taken as the largest |(Le, e)|/‖e‖² over the five invariants, and moves
/// by less than 25% between grids.
pub fn check_coercivity(n_draws: usize, grids: &[VerifyGrid], seed: u64) -> Result<EstimateReport, KineticError> {
    if grids.is_empty() {
        return Err(KineticError::InvalidParams("need at least one grid".into()));
    }
    let params = CollisionParams::default();
    let mut levels = Vec::new();
    let mut budget: f64 = 0.0;
    for grid in grids {
        let op = grid.operator(&params)?;
        let l = op.linearized_matrix(KernelForm::Balanced, Interp::Quadratic)?;
        let w = op.grid.weight;
        let norm2 = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>() * w;
        for e in invariant_basis(&op.grid) {
            budget = budget.max((l.quadratic_form(&e) * w).abs() / norm2(&e));
        }
        let ratios: Vec<f64> = (0..n_draws)
            .into_par_iter()
            .filter_map(|i| {
                let f = RandomFunction::draw_smooth(seed, i).tabulate(&op.grid);
                let pf = project_p(&op.grid, &f).pf;
                let micro: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
                let m2 = norm2(&micro);
                (m2.sqrt() > MIN_MICRO_NORM).then(|| l.quadratic_form(&f) * w / m2)
            })
            .collect();
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        levels.push(RefinementLevel {
            label: format!("n = {}", grid.n),
            baseline: levels.len().checked_sub(1),
            grid_n: grid.n,
            n_polar: grid.n_polar,
            samples: ratios.len(),
            sup: min,
            grid_hash: op.grid.hash(),
        });
    }
    let mut report = EstimateReport::from_levels("coercivity", levels, seed, "");
    report.ratio_sup = report.levels.iter().map(|l| l.sup).fold(f64::INFINITY, f64::min);
    report.pass = report.levels.iter().all(|l| l.sup > budget) && report.refinement_trend == Trend::Stable;
    report.note = format!("minimum ratio; quadrature budget {budget:.3e}");
    Ok(report)
}
