//! Random test functions that do not depend on the grid they are tabulated
//! on, so ratios at two resolutions compare the same draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::collision::VelocityGrid;
use crate::kinematics::Vec3;

/// Share of draws that are narrow bumps instead of smooth polynomials.
pub const SPIKE_FRACTION: f64 = 0.1;
/// Standard deviation of a bump, fixed in velocity units so that refining
/// the grid resolves the same function better.
pub const SPIKE_WIDTH: f64 = 0.6;
const ENSEMBLE_SALT: u64 = 0x0e75_ab1e;

#[derive(Debug, Clone, PartialEq)]
pub enum RandomFunction {
    /// e^{−|v|²/8} Σ c_α v^α over monomials of degree ≤ 2.
    Smooth([f64; 10]),
    /// Gaussian bump of width [`SPIKE_WIDTH`] centred at the given point.
    Spike(Vec3),
}

impl RandomFunction {
    /// Draw `index` of the ensemble with the given seed; each index has its
    /// own stream so draws do not depend on how many are taken.
    pub fn draw(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ENSEMBLE_SALT);
        rng.set_stream(index as u64);
        if rng.random::<f64>() < SPIKE_FRACTION {
            let dir = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            let r = 2.5 * rng.random::<f64>();
            RandomFunction::Spike(dir.normalize() * r)
        } else {
            let mut c = [0.0; 10];
            for x in c.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            RandomFunction::Smooth(c)
        }
    }

    /// Smooth draws only, for checks where bumps carry no extra information.
    pub fn draw_smooth(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ENSEMBLE_SALT);
        rng.set_stream(index as u64 | 1 << 63);
        let mut c = [0.0; 10];
        for x in c.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        RandomFunction::Smooth(c)
    }

    pub fn eval(&self, v: &Vec3) -> f64 {
        match self {
            RandomFunction::Smooth(c) => {
                let (x, y, z) = (v[0], v[1], v[2]);
                let poly = c[0]
                    + c[1] * x
                    + c[2] * y
                    + c[3] * z
                    + c[4] * x * x
                    + c[5] * y * y
                    + c[6] * z * z
                    + c[7] * x * y
                    + c[8] * y * z
                    + c[9] * x * z;
                poly * (-v.norm_squared() / 8.0).exp()
            }
            RandomFunction::Spike(c) => (-(v - c).norm_squared() / (2.0 * SPIKE_WIDTH * SPIKE_WIDTH)).exp(),
        }
    }

    pub fn tabulate(&self, grid: &VelocityGrid) -> Vec<f64> {
        grid.tabulate(|v| self.eval(v))
    }

    pub fn is_spike(&self) -> bool {
        matches!(self, RandomFunction::Spike(_))
    }
}
