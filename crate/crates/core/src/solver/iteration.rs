//! The linearized fixed-point scheme on a short window: iterate m + 1 is
//! transported and damped with the loss rate of iterate m and fed by its
//! gain, starting from F⁽⁰⁾ ≡ μ.

use super::stepper::{exponential_update, Simulation};
use crate::error::KineticError;
use crate::field::{DistributionField, Representation};
use crate::kinematics::{maxwellian, maxwellian_sqrt, weight_w};
use crate::norms::norm_lpv_linfx;

/// Runs up to `m_max` iterations on [0, t_hat] and returns the gaps
/// sup_t ‖w(f⁽ᵐ⁺¹⁾ − f⁽ᵐ⁾)‖ in L^p_v L^∞_x. Three consecutive increases are
/// reported as divergence.
pub fn local_iteration(sim: &Simulation, f0: &DistributionField, t_hat: f64, m_max: usize) -> Result<Vec<f64>, KineticError> {
    f0.expect(Representation::Absolute)?;
    f0.check_nonnegative(0.0)?;
    if !(t_hat > 0.0) {
        return Err(KineticError::InvalidParams(format!("t_hat = {t_hat} must be positive")));
    }
    let steps = ((t_hat / sim.cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = t_hat / steps as f64;
    let grid = sim.grid();
    let mu = DistributionField::from_fn(&sim.cells, grid, Representation::Absolute, |_, v| maxwellian(v));
    let beta = sim.cfg.beta;
    let to_h: Vec<f64> = grid.nodes().map(|v| weight_w(&v, beta) / maxwellian_sqrt(&v)).collect();
    let mut prev = vec![mu; steps + 1];
    let mut gaps = Vec::with_capacity(m_max);
    for m in 0..m_max {
        let mut next = Vec::with_capacity(steps + 1);
        next.push(f0.clone());
        for n in 0..steps {
            let parts = sim.collision_parts(&prev[n], n as u64);
            let mut f = next[n].clone();
            for (cell, p) in f.data.chunks_mut(f.n_nodes).zip(&parts) {
                exponential_update(cell, p, dt);
            }
            next.push(sim.transport(&f, dt));
        }
        let gap = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| {
                // h = w f and f = (F − μ)/μ^{1/2}, so differences map with w/μ^{1/2}
                let mut h = DistributionField::zeros(a.n_cells, a.n_nodes, Representation::Weighted { beta });
                for (i, (x, (p, q))) in h.data.iter_mut().zip(a.data.iter().zip(&b.data)).enumerate() {
                    *x = (p - q) * to_h[i % a.n_nodes];
                }
                norm_lpv_linfx(&h, grid, sim.cfg.p)
            })
            .fold(0.0, f64::max);
        gaps.push(gap);
        if m >= 3 && gaps[m] > gaps[m - 1] && gaps[m - 1] > gaps[m - 2] && gaps[m - 2] > gaps[m - 3] {
            return Err(KineticError::Divergence(m));
        }
        prev = next;
    }
    Ok(gaps)
}
