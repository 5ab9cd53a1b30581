//! The damped transport semigroup S(t) with diffuse walls, evaluated along
//! back-time cycles.
//!
//! For weighted h = w f the wall condition reads
//!   h(x, v) = w̃(v)^{−1} ∫_{n·v′>0} h(x, v′) w̃(v′) dσ(v′),
//! so each bounce multiplies the path weight by w̃(v′)/w̃(v) with v′ ~ dσ,
//! and each free flight of length τ by e^{−ν(v)τ}. A path that reaches
//! time 0 scores weight × h₀ at its foot point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stepper::Simulation;
use crate::boundary::sample_diffuse;
use crate::error::KineticError;
use crate::field::{DistributionField, Representation};
use crate::kinematics::{weight_wtilde, Vec3};

const PATH_SALT: u64 = 0x9a7d_5eed;

/// S(t)h₀ together with the estimated size of the truncated cycle tail.
#[derive(Debug, Clone)]
pub struct MildEvaluation {
    pub field: DistributionField,
    /// Largest per-entry mean of |path weight| · sup|h₀| over paths still
    /// in flight after `cycle_k_max` bounces.
    pub tail: f64,
}

/// Evaluates S(t)h₀ at every (cell centre, node). Fails with
/// `TruncationResidual` when the tail exceeds 10% of the largest value.
pub fn damped_transport_apply(sim: &Simulation, h0: &DistributionField, t: f64) -> Result<MildEvaluation, KineticError> {
    h0.expect(Representation::Weighted { beta: sim.cfg.beta })?;
    let grid = sim.grid();
    let nu = sim.op.nu();
    if t == 0.0 {
        return Ok(MildEvaluation { field: h0.clone(), tail: 0.0 });
    }
    let Some(dom) = &sim.domain else {
        let mut out = h0.clone();
        for cell in out.data.chunks_mut(h0.n_nodes) {
            for (x, n) in cell.iter_mut().zip(nu) {
                *x *= (-n * t).exp();
            }
        }
        return Ok(MildEvaluation { field: out, tail: 0.0 });
    };
    let beta = sim.cfg.beta;
    let sup_h0 = h0.max_abs();
    let samples = sim.cfg.cycle_samples.max(1);
    let k_max = sim.cfg.cycle_k_max;
    let cells = &sim.cells;
    let nn = grid.len();
    // h₀ at a spatial point and an arbitrary velocity
    let h0_at = |x: &Vec3, v: &Vec3| -> f64 {
        cells.trilinear(x).iter().map(|(c, w)| w * grid.interpolate(h0.cell(*c), v)).sum()
    };
    let nu_at = |v: &Vec3| grid.interpolate(nu, v);
    let entries: Vec<Result<(f64, f64), KineticError>> = (0..cells.len() * nn)
        .into_par_iter()
        .map(|e| {
            let (c, idx) = (e / nn, e % nn);
            let x = cells.center(c);
            let v = grid.node(idx);
            let (tb, xb) = dom.backward_exit(&x, &v)?;
            if tb >= t {
                return Ok(((-nu[idx] * t).exp() * h0_at(&(x - v * t), &v), 0.0));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sim.cfg.seed ^ PATH_SALT);
            rng.set_stream(e as u64);
            let (mut sum, mut tail) = (0.0, 0.0);
            for _ in 0..samples {
                let mut weight = (-nu[idx] * tb).exp();
                let (mut s, mut xk, mut vk) = (t - tb, xb, v);
                let mut done = false;
                for _ in 0..k_max {
                    let n = dom.outward_normal(&xk)?;
                    let vn = sample_diffuse(&n, &mut rng)?;
                    weight *= weight_wtilde(&vn, beta) / weight_wtilde(&vk, beta);
                    vk = vn;
                    let (tk, xn) = dom.backward_exit_from_boundary(&xk, &vk)?;
                    if tk >= s {
                        sum += weight * (-nu_at(&vk) * s).exp() * h0_at(&(xk - vk * s), &vk);
                        done = true;
                        break;
                    }
                    weight *= (-nu_at(&vk) * tk).exp();
                    s -= tk;
                    xk = xn;
                }
                if !done {
                    tail += weight.abs() * sup_h0;
                }
            }
            Ok((sum / samples as f64, tail / samples as f64))
        })
        .collect();
    let mut field = DistributionField::zeros(cells.len(), nn, h0.repr);
    let mut tail: f64 = 0.0;
    for (slot, r) in field.data.iter_mut().zip(entries) {
        let (val, tl) = r?;
        *slot = val;
        tail = tail.max(tl);
    }
    let value = field.max_abs();
    if tail > 0.1 * value {
        return Err(KineticError::TruncationResidual { tail, value });
    }
    Ok(MildEvaluation { field, tail })
}
