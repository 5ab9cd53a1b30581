//! Structural checks of the discrete collision operator: the equilibrium
//! residual Q(μ, μ), conservation of the collision invariants, symmetry of
//! the kernel matrix and the null space of L. All of these should shrink
//! under refinement rather than stay bounded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EstimateReport, RefinementLevel, Trend, VerifyGrid};
use crate::collision::{invariant_basis, largest_principal_angle_sin, smallest_eigenpairs, CollisionOperator, Interp, KernelForm, VelocityGrid};
use crate::error::KineticError;
use crate::kinematics::{CollisionParams, Vec3};

const POSITIVE_SALT: u64 = 0x9051_71fe;
/// Fraction of sup Q⁻(μ, μ) allowed for the equilibrium residual.
pub const EQUILIBRIUM_BUDGET: f64 = 0.05;
/// Required shrink factor per refinement for residuals and moment defects.
pub const SHRINK_FACTOR: f64 = 2.0;
pub const SYMMETRY_TOL: f64 = 0.05;
pub const NULL_SPACE_TOL: f64 = 1e-2;

fn level(grid: &VerifyGrid, op: &CollisionOperator, index: usize, samples: usize, sup: f64) -> RefinementLevel {
    RefinementLevel {
        label: format!("n = {}, n_polar = {}", grid.n, grid.n_polar),
        baseline: index.checked_sub(1),
        grid_n: grid.n,
        n_polar: grid.n_polar,
        samples,
        sup,
        grid_hash: op.grid.hash(),
    }
}

fn shrinks(sups: &[f64]) -> bool {
    sups.windows(2).all(|w| w[1] * SHRINK_FACTOR <= w[0])
}

fn structural_report(name: &str, levels: Vec<RefinementLevel>, pass: bool, seed: u64, note: String) -> EstimateReport {
    let sups: Vec<f64> = levels.iter().map(|l| l.sup).collect();
    EstimateReport {
        name: name.into(),
        ratio_sup: sups.last().copied().unwrap_or(f64::NAN),
        ratio_samples: levels.iter().map(|l| l.samples).max().unwrap_or(0),
        refinement_trend: Trend::of(&sups),
        pass: pass && sups.iter().all(|s| s.is_finite()),
        levels,
        profile: Vec::new(),
        seed,
        note,
    }
}

fn need_grids(grids: &[VerifyGrid], min: usize) -> Result<(), KineticError> {
    if grids.len() < min {
        return Err(KineticError::InvalidParams(format!("need at least {min} grids, got {}", grids.len())));
    }
    Ok(())
}

/// sup over |v| ≤ v_cut/2 of |Q(μ, μ)| on each grid. Passes when every
/// refinement shrinks it by 2× and the finest value sits below 5% of
/// sup Q⁻(μ, μ) over the same ball.
pub fn check_equilibrium(grids: &[VerifyGrid]) -> Result<EstimateReport, KineticError> {
    need_grids(grids, 2)?;
    let mut levels = Vec::new();
    let mut budget = 0.0;
    for (k, g) in grids.iter().enumerate() {
        let op = g.operator(&CollisionParams::default())?;
        let mu = op.mu().to_vec();
        let q = op.collide(&mu, &mu);
        let loss = op.loss(&mu, &mu);
        let inner: Vec<usize> = (0..op.len()).filter(|&i| op.grid.node(i).norm() <= 0.5 * g.v_cut).collect();
        let sup = inner.iter().map(|&i| q[i].abs()).fold(0.0, f64::max);
        budget = EQUILIBRIUM_BUDGET * inner.iter().map(|&i| loss[i].abs()).fold(0.0, f64::max);
        levels.push(level(g, &op, k, inner.len(), sup));
    }
    let sups: Vec<f64> = levels.iter().map(|l| l.sup).collect();
    let pass = shrinks(&sups) && sups.last().is_some_and(|s| *s < budget);
    Ok(structural_report("equilibrium", levels, pass, 0, format!("budget {budget:.3e}")))
}

/// Seeded positive F: a mixture of two Maxwellians with random centres
/// (|c| ≲ 1), temperatures in [0.6, 1.4] and weights.
pub fn random_positive(seed: u64, index: usize, grid: &VelocityGrid) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ POSITIVE_SALT);
    rng.set_stream(index as u64);
    let mut bumps = Vec::new();
    for _ in 0..2 {
        let c = Vec3::from_fn(|_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let temp = rng.random_range(0.6..1.4);
        let weight = rng.random_range(0.2..1.0);
        bumps.push((c, temp, weight));
    }
    grid.tabulate(|v| {
        bumps
            .iter()
            .map(|(c, t, w)| w * (-(v - c).norm_squared() / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).powf(1.5))
            .sum()
    })
}

/// |∫Q|, |∫Q v| and |∫Q |v|²| by the grid rule.
pub fn moment_defects(op: &CollisionOperator, q: &[f64]) -> [f64; 3] {
    let mut m = [0.0, 0.0, 0.0];
    let mut p = Vec3::zeros();
    for (x, v) in q.iter().zip(op.grid.nodes()) {
        m[0] += x;
        p += v * *x;
        m[2] += x * v.norm_squared();
    }
    let w = op.grid.weight;
    [m[0].abs() * w, p.norm() * w, m[2].abs() * w]
}

/// Moment defects of Q(F, F) for `n_draws` positive F. The level sup is the
/// largest defect; the check passes when every defect of every draw shrinks
/// by 2× per refinement.
pub fn check_collision_invariants(n_draws: usize, grids: &[VerifyGrid], seed: u64) -> Result<EstimateReport, KineticError> {
    need_grids(grids, 2)?;
    let mut levels = Vec::new();
    let mut defects: Vec<Vec<[f64; 3]>> = Vec::new();
    for (k, g) in grids.iter().enumerate() {
        let op = g.operator(&CollisionParams::default())?;
        let per_draw: Vec<[f64; 3]> = (0..n_draws)
            .map(|i| {
                let f = random_positive(seed, i, &op.grid);
                moment_defects(&op, &op.collide(&f, &f))
            })
            .collect();
        let sup = per_draw.iter().flatten().fold(0.0, |a: f64, b| a.max(*b));
        levels.push(level(g, &op, k, n_draws, sup));
        defects.push(per_draw);
    }
    let mut worst: f64 = f64::INFINITY;
    for pair in defects.windows(2) {
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            for c in 0..3 {
                worst = worst.min(a[c] / b[c]);
            }
        }
    }
    let pass = worst >= SHRINK_FACTOR;
    Ok(structural_report("collision-invariants", levels, pass, seed, format!("smallest shrink factor {worst:.2}")))
}

/// Off-diagonal symmetry defect of the direct-form K matrix on each grid.
/// Passes when it decreases along the grids and ends below 5%.
pub fn check_kernel_symmetry(grids: &[VerifyGrid]) -> Result<EstimateReport, KineticError> {
    need_grids(grids, 2)?;
    let mut levels = Vec::new();
    let mut off_diagonal = Vec::new();
    for (k, g) in grids.iter().enumerate() {
        let op = g.operator(&CollisionParams::default())?;
        let kernel = op.kernel_matrix(KernelForm::Direct, Interp::Trilinear)?;
        off_diagonal.push(format!("{:.3e}", kernel.off_diagonal_symmetry_defect()));
        levels.push(level(g, &op, k, op.len(), kernel.symmetry_defect()));
    }
    let sups: Vec<f64> = levels.iter().map(|l| l.sup).collect();
    let pass = sups.windows(2).all(|w| w[1] < w[0]) && sups.last().is_some_and(|s| *s < SYMMETRY_TOL);
    let note = format!("normalized by the largest off-diagonal entry: {}", off_diagonal.join(" -> "));
    Ok(structural_report("kernel-symmetry", levels, pass, 0, note))
}

/// Sine of the largest principal angle between the five lowest eigenvectors
/// of the symmetric part of L and the collision invariants.
pub fn check_null_space(grid: &VerifyGrid, seed: u64) -> Result<EstimateReport, KineticError> {
    let op = grid.operator(&CollisionParams::default())?;
    let mut l = op.linearized_matrix(KernelForm::Balanced, Interp::Quadratic)?;
    l.symmetrize();
    let eig = smallest_eigenpairs(op.len(), &|x| l.apply_block(x), 6, 8, 30, seed);
    let angle = largest_principal_angle_sin(&eig.vectors[..5], &invariant_basis(&op.grid));
    let levels = vec![level(grid, &op, 0, op.len(), angle)];
    let note = format!("lowest eigenvalues {:?}", eig.values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    Ok(structural_report("null-space", levels, angle < NULL_SPACE_TOL, seed, note))
}
