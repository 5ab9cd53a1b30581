//! Numerical certification of the analytic estimates: gain bounds, kernel
//! integral bound, coercivity, the collision Jacobian, the wall
//! normalization and cycle probabilities, plus structural checks of the
//! discrete operator.
//!
//! Every ratio check is run on at least two resolutions. Each level names
//! the level it is compared with; "bounded" means no comparison moves the
//! sup up by more than 25%.

mod cycles;
mod ensemble;
mod gain;
mod identities;
mod invariants;
mod kernel;

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionOperator, SphereQuadrature, VelocityGrid};
use crate::error::KineticError;
use crate::kinematics::CollisionParams;

pub use cycles::{check_cycle_probability, CycleRow, CycleTable};
pub use ensemble::{RandomFunction, SPIKE_FRACTION, SPIKE_WIDTH};
pub use gain::{check_gain_lp, check_gain_pointwise, gain_lp_ratio, gain_pointwise_ratio, GainPreset, GAIN_PRESETS};
pub use identities::{check_c_mu, check_jacobian};
pub use invariants::{
    check_collision_invariants, check_equilibrium, check_kernel_symmetry, check_null_space, moment_defects, random_positive,
    EQUILIBRIUM_BUDGET, NULL_SPACE_TOL, SHRINK_FACTOR, SYMMETRY_TOL,
};
pub use kernel::{check_coercivity, check_kernel_integral, check_kernel_integrals, kernel_integral_ratio};

/// Relative change between resolutions above which a sup counts as moving.
pub const TREND_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Stable,
    Growing,
    Shrinking,
}

impl Trend {
    /// Worst movement along a sequence of sups: any jump above +25% is
    /// growth, otherwise any drop below −25% is shrinkage.
    pub fn of(sups: &[f64]) -> Trend {
        let changes: Vec<f64> = sups.windows(2).map(|w| relative_change(w[0], w[1])).collect();
        Trend::of_changes(&changes)
    }

    pub fn of_changes(changes: &[f64]) -> Trend {
        if changes.iter().any(|c| *c > TREND_TOLERANCE || c.is_nan()) {
            Trend::Growing
        } else if changes.iter().any(|c| *c < -TREND_TOLERANCE) {
            Trend::Shrinking
        } else {
            Trend::Stable
        }
    }
}

fn relative_change(from: f64, to: f64) -> f64 {
    (to - from) / from.abs().max(f64::MIN_POSITIVE)
}

/// One resolution of a refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub label: String,
    /// Index of the level this one is compared with.
    pub baseline: Option<usize>,
    pub grid_n: usize,
    pub n_polar: usize,
    pub samples: usize,
    pub sup: f64,
    pub grid_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    /// Sup of the ratio at the finest level. For coercivity this is the
    /// minimum ratio instead, and for identity checks the largest error.
    pub ratio_sup: f64,
    pub ratio_samples: usize,
    pub refinement_trend: Trend,
    pub pass: bool,
    pub levels: Vec<RefinementLevel>,
    /// (|v| or another abscissa, value) profile at the finest level.
    pub profile: Vec<(f64, f64)>,
    pub seed: u64,
    pub note: String,
}

impl EstimateReport {
    /// Report for a ratio sup measured on several levels; passes when every
    /// sup is finite and no comparison grows. `ratio_sup` is the largest sup.
    pub fn from_levels(name: impl Into<String>, levels: Vec<RefinementLevel>, seed: u64, note: impl Into<String>) -> Self {
        let trend = Trend::of_changes(&Self::changes_of(&levels));
        let top = levels.iter().map(|l| l.sup).fold(f64::NEG_INFINITY, f64::max);
        let samples = levels.iter().map(|l| l.samples).max().unwrap_or(0);
        EstimateReport {
            name: name.into(),
            ratio_sup: top,
            ratio_samples: samples,
            refinement_trend: trend,
            pass: levels.iter().all(|l| l.sup.is_finite()) && trend != Trend::Growing,
            levels,
            profile: Vec::new(),
            seed,
            note: note.into(),
        }
    }

    fn changes_of(levels: &[RefinementLevel]) -> Vec<f64> {
        levels.iter().filter_map(|l| l.baseline.map(|b| relative_change(levels[b].sup, l.sup))).collect()
    }

    /// Relative change of each level against its baseline.
    pub fn changes(&self) -> Vec<f64> {
        Self::changes_of(&self.levels)
    }

    /// Largest |relative change| over all comparisons.
    pub fn max_change(&self) -> f64 {
        self.changes().iter().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

/// Velocity resolution shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyGrid {
    pub v_cut: f64,
    pub n: usize,
    pub n_polar: usize,
}

impl VerifyGrid {
    pub fn operator(&self, params: &CollisionParams) -> Result<CollisionOperator, KineticError> {
        let params = CollisionParams { v_cut: self.v_cut, ..params.clone() };
        CollisionOperator::new(VelocityGrid::new(self.v_cut, self.n)?, SphereQuadrature::new(self.n_polar)?, params)
    }

    pub fn refined(&self) -> Self {
        VerifyGrid { n: 2 * self.n, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_classification() {
        assert_eq!(Trend::of(&[1.0, 1.1, 1.2]), Trend::Stable);
        assert_eq!(Trend::of(&[1.0, 1.3]), Trend::Growing);
        assert_eq!(Trend::of(&[1.0, 0.5]), Trend::Shrinking);
        assert_eq!(Trend::of(&[1.0, 0.5, 0.9]), Trend::Growing);
        assert_eq!(Trend::of(&[2.0]), Trend::Stable);
    }

    #[test]
    fn pass_requires_finite_and_not_growing() {
        let level = |sup: f64, baseline: Option<usize>| RefinementLevel {
            label: String::new(),
            baseline,
            grid_n: 8,
            n_polar: 2,
            samples: 4,
            sup,
            grid_hash: String::new(),
        };
        let report = |a: f64, b: f64| EstimateReport::from_levels("a", vec![level(a, None), level(b, Some(0))], 0, "");
        assert!(report(1.0, 0.9).pass);
        assert!(report(1.0, 0.2).pass);
        assert!(!report(1.0, 2.0).pass);
        assert!(!report(1.0, f64::INFINITY).pass);
        // comparisons follow the declared baselines, not the order
        let r = EstimateReport::from_levels("b", vec![level(1.0, None), level(1.1, Some(0)), level(5.0, None), level(5.5, Some(2))], 0, "");
        assert_eq!(r.refinement_trend, Trend::Stable);
        assert!((r.max_change() - 0.1).abs() < 1e-12 && r.ratio_sup == 5.5);
    }
}
