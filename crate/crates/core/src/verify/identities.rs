//! Exact identities checked against independent evaluations: the Jacobian
//! of u ↦ u′ and the wall normalization c_μ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EstimateReport, Trend};
use crate::boundary::{c_mu, c_mu_quadrature};
use crate::error::KineticError;
use crate::kinematics::{jacobian_finite_difference, jacobian_u_to_uprime, Vec3};

const FD_STEP: f64 = 1e-5;
pub const IDENTITY_TOL: f64 = 1e-6;

fn identity_report(name: &str, worst: f64, samples: usize, seed: u64, note: String) -> EstimateReport {
    EstimateReport {
        name: name.into(),
        ratio_sup: worst,
        ratio_samples: samples,
        refinement_trend: Trend::Stable,
        pass: worst < IDENTITY_TOL,
        levels: Vec::new(),
        profile: Vec::new(),
        seed,
        note,
    }
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Largest gap between the closed-form determinant (1+cosθ)/8 and a central
/// difference over `n_triples` random (v, u, ω), together with the exact
/// head-on and right-angle values.
pub fn check_jacobian(n_triples: usize, seed: u64) -> Result<EstimateReport, KineticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_triples {
        let (v, u) = (normal3(&mut rng) * 2.0, normal3(&mut rng) * 2.0);
        let mut omega = normal3(&mut rng).normalize();
        if omega.dot(&(v - u)) < 0.0 {
            omega = -omega;
        }
        let exact = jacobian_u_to_uprime(&v, &u, &omega)?;
        worst = worst.max((jacobian_finite_difference(&v, &u, &omega, FD_STEP) - exact).abs());
    }
    let (v, u) = (Vec3::new(1.0, 0.0, 0.0), Vec3::zeros());
    let head_on = jacobian_u_to_uprime(&v, &u, &Vec3::x())?;
    let right = jacobian_u_to_uprime(&v, &u, &Vec3::y())?;
    worst = worst.max((head_on - 0.25).abs()).max((right - 0.125).abs());
    Ok(identity_report("jacobian", worst, n_triples, seed, format!("finite-difference step {FD_STEP:e}")))
}

/// Largest gap between the flux quadrature of c_μ and √(2π) over random
/// wall normals.
pub fn check_c_mu(n_normals: usize, seed: u64) -> Result<EstimateReport, KineticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_normals {
        let n = normal3(&mut rng).normalize();
        worst = worst.max((c_mu_quadrature(&n, 12) - c_mu()).abs());
    }
    Ok(identity_report("c-mu", worst, n_normals, seed, "12-point product rule".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_pass() {
        let j = check_jacobian(100, 1).unwrap();
        assert!(j.pass && j.ratio_sup < 1e-6, "{j:?}");
        let c = check_c_mu(20, 2).unwrap();
        assert!(c.pass && c.ratio_sup < 1e-9, "{c:?}");
    }
}
