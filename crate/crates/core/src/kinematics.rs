//! Binary-collision geometry for the cutoff hard-potential kernel.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

use crate::error::KineticError;

pub type Vec3 = Vector3<f64>;

/// Relative speeds below this are treated as a degenerate pair.
pub const DEGENERATE_SPEED: f64 = 1e-14;

/// (2π)^{-3/2}
pub const MAXWELLIAN_PEAK: f64 = 0.063_493_635_934_240_97;

/// Angular factor b(cosθ) on the cutoff range cosθ ∈ [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum AngularFactor {
    Constant(f64),
    /// Samples at uniformly spaced cosθ on [0, 1], linearly interpolated.
    Table(Vec<f64>),
}

impl AngularFactor {
    pub fn eval(&self, cos_theta: f64) -> f64 {
        let s = cos_theta.clamp(0.0, 1.0);
        match self {
            AngularFactor::Constant(c) => *c,
            AngularFactor::Table(t) => {
                if t.len() == 1 {
                    return t[0];
                }
                let x = s * (t.len() - 1) as f64;
                let i = (x.floor() as usize).min(t.len() - 2);
                let frac = x - i as f64;
                t[i] * (1.0 - frac) + t[i + 1] * frac
            }
        }
    }

    /// ∫₀¹ b(s) ds. On the unit hemisphere cosθ is uniformly distributed,
    /// so this is the hemisphere average used for degenerate pairs.
    pub fn mean(&self) -> f64 {
        match self {
            AngularFactor::Constant(c) => *c,
            AngularFactor::Table(t) => {
                if t.len() == 1 {
                    return t[0];
                }
                let inner: f64 = t[1..t.len() - 1].iter().sum();
                (0.5 * (t[0] + t[t.len() - 1]) + inner) / (t.len() - 1) as f64
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            AngularFactor::Constant(c) => *c,
            AngularFactor::Table(t) => t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            AngularFactor::Constant(c) => *c,
            AngularFactor::Table(t) => t.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, AngularFactor::Constant(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionParams {
    pub gamma: f64,
    pub angular: AngularFactor,
    /// Declared upper bound for the angular factor.
    pub c_b: f64,
    pub beta: f64,
    pub p: f64,
    pub v_cut: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        CollisionParams {
            gamma: 1.0,
            angular: AngularFactor::Constant(1.0),
            c_b: 1.0,
            beta: 3.0,
            p: 5.0,
            v_cut: 6.0,
        }
    }
}

impl CollisionParams {
    /// Structural checks that hold regardless of strict mode.
    pub fn validate(&self) -> Result<(), KineticError> {
        let bad = |m: String| Err(KineticError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        if !(self.c_b > 0.0) {
            return bad(format!("c_b = {} must be positive", self.c_b));
        }
        if let AngularFactor::Table(t) = &self.angular {
            if t.is_empty() {
                return bad("angular table is empty".into());
            }
        }
        if self.angular.inf() < 0.0 || self.angular.sup() > self.c_b * (1.0 + 1e-12) {
            return bad(format!("angular factor must lie in [0, c_b = {}]", self.c_b));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        if !(self.p > 2.0) {
            return bad(format!("p = {} must exceed 2", self.p));
        }
        if !(self.v_cut > 0.0) {
            return bad(format!("v_cut = {} must be positive", self.v_cut));
        }
        Ok(())
    }

    /// Structural checks plus the (p, β) admissibility required by the
    /// global small-data result.
    pub fn validate_strict(&self) -> Result<(), KineticError> {
        self.validate()?;
        if !p_admissible(self.p, self.gamma) {
            return Err(KineticError::InvalidParams(format!(
                "p = {} not admissible for gamma = {} (need p > {})",
                self.p,
                self.gamma,
                p_lower_bound(self.gamma)
            )));
        }
        let need = beta_threshold(self.p, self.gamma);
        if !(self.beta > need) {
            return Err(KineticError::InvalidParams(format!(
                "beta = {} must exceed {need:.6} for p = {}, gamma = {}",
                self.beta, self.p, self.gamma
            )));
        }
        Ok(())
    }

    pub fn kernel_speed(&self, rel_speed: f64) -> f64 {
        if self.gamma == 0.0 {
            1.0
        } else if self.gamma == 1.0 {
            rel_speed
        } else {
            rel_speed.powf(self.gamma)
        }
    }
}

/// Which half of the gain-estimate case split a (p, γ) pair falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainBranch {
    /// γ ≤ 3/4 with p > 4, or γ > 3/4 with p > 1/(1−γ).
    Upper,
    /// γ > 3/4 with p between the lower admissible bound and 1/(1−γ).
    Middle,
}

pub fn p_lower_bound(gamma: f64) -> f64 {
    if gamma <= 0.75 {
        4.0
    } else {
        5.0 / (2.0 - gamma)
    }
}

pub fn p_admissible(p: f64, gamma: f64) -> bool {
    p > p_lower_bound(gamma)
}

/// Branch of the case split; `None` when p is not admissible.
pub fn gain_branch(p: f64, gamma: f64) -> Option<GainBranch> {
    if !p_admissible(p, gamma) {
        return None;
    }
    if gamma <= 0.75 || (gamma < 1.0 && p > 1.0 / (1.0 - gamma)) {
        Some(GainBranch::Upper)
    } else {
        Some(GainBranch::Middle)
    }
}

/// Secondary β lower bound β(p, γ) entering the global result.
pub fn beta_of_p_gamma(p: f64, gamma: f64) -> Option<f64> {
    gain_branch(p, gamma).map(|b| match b {
        GainBranch::Upper => (3.0 * p - 5.0) / p,
        GainBranch::Middle => (7.0 * p - 12.0) / (2.0 * p),
    })
}

/// Full threshold: β must exceed max{(3p−6)/(2p) + 2γ, β(p, γ)}.
pub fn beta_threshold(p: f64, gamma: f64) -> f64 {
    let first = (3.0 * p - 6.0) / (2.0 * p) + 2.0 * gamma;
    match beta_of_p_gamma(p, gamma) {
        Some(b) => first.max(b),
        None => f64::INFINITY,
    }
}

/// Weaker threshold sufficient for the weighted L^p gain bound alone.
pub fn beta_threshold_lp_gain(p: f64, gamma: f64) -> f64 {
    match gain_branch(p, gamma) {
        Some(GainBranch::Upper) => (5.0 * p - 10.0) / (2.0 * p),
        Some(GainBranch::Middle) => (3.0 * p - 6.0) / p,
        None => f64::INFINITY,
    }
}

/// Exponent e(p, γ) of the η-moment in the pointwise gain bound.
/// `None` outside the two ranges where the bound is stated.
pub fn gain_moment_exponent(p: f64, gamma: f64) -> Option<f64> {
    let upper = (gamma <= 0.75 && p > 4.0) || (gamma > 0.75 && gamma < 1.0 && p > 1.0 / (1.0 - gamma));
    if upper {
        return Some((2.0 * p - 4.0) / p);
    }
    let middle = gamma > 0.75 && p > 2.0 / (2.0 * gamma - 1.0) && (gamma == 1.0 || p <= 1.0 / (1.0 - gamma));
    if middle {
        return Some((3.0 * p - 6.0) / p);
    }
    None
}

/// Decay exponent min{1/p′, (2 − p′γ)/p′} of the pointwise gain bound.
pub fn gain_decay_exponent(p: f64, gamma: f64) -> f64 {
    let pp = p / (p - 1.0);
    (1.0 / pp).min((2.0 - pp * gamma) / pp)
}

pub fn post_collision(v: &Vec3, u: &Vec3, omega: &Vec3) -> (Vec3, Vec3) {
    let center = (v + u) * 0.5;
    let half = 0.5 * (v - u).norm();
    (center + omega * half, center - omega * half)
}

/// cosθ = (v−u)·ω/|v−u|, clamped to [0, 1].
pub fn cos_theta(v: &Vec3, u: &Vec3, omega: &Vec3) -> Result<f64, KineticError> {
    let g = v - u;
    let n = g.norm();
    if n < DEGENERATE_SPEED {
        return Err(KineticError::DegenerateRelativeVelocity);
    }
    Ok((g.dot(omega) / n).clamp(0.0, 1.0))
}

/// B(v−u, ω) = b(cosθ)|v−u|^γ.
///
/// For a degenerate pair the kernel is 0 when γ > 0; with γ = 0 the
/// angle is undefined and an error is returned.
pub fn collision_kernel(v: &Vec3, u: &Vec3, omega: &Vec3, params: &CollisionParams) -> Result<f64, KineticError> {
    let g = v - u;
    let n = g.norm();
    if n < DEGENERATE_SPEED {
        return if params.gamma > 0.0 { Ok(0.0) } else { Err(KineticError::UndefinedAngle) };
    }
    let c = (g.dot(omega) / n).clamp(0.0, 1.0);
    Ok(params.angular.eval(c) * params.kernel_speed(n))
}

pub fn maxwellian(v: &Vec3) -> f64 {
    MAXWELLIAN_PEAK * (-0.5 * v.norm_squared()).exp()
}

pub fn maxwellian_sqrt(v: &Vec3) -> f64 {
    MAXWELLIAN_PEAK.sqrt() * (-0.25 * v.norm_squared()).exp()
}

/// w(v) = (1+|v|²)^{β/2}
pub fn weight_w(v: &Vec3, beta: f64) -> f64 {
    (1.0 + v.norm_squared()).powf(0.5 * beta)
}

/// w̃(v) = 1/(w(v) μ^{1/2}(v))
pub fn weight_wtilde(v: &Vec3, beta: f64) -> f64 {
    1.0 / (weight_w(v, beta) * maxwellian_sqrt(v))
}

/// Determinant of ∂u′/∂u at fixed v and ω: (1 + cosθ)/8.
pub fn jacobian_u_to_uprime(v: &Vec3, u: &Vec3, omega: &Vec3) -> Result<f64, KineticError> {
    Ok((1.0 + cos_theta(v, u, omega)?) / 8.0)
}

/// Central-difference determinant of u ↦ u′, the independent oracle for
/// [`jacobian_u_to_uprime`].
pub fn jacobian_finite_difference(v: &Vec3, u: &Vec3, omega: &Vec3, step: f64) -> f64 {
    let mut m = Matrix3::zeros();
    for j in 0..3 {
        let mut e = Vec3::zeros();
        e[j] = step;
        let (_, plus) = post_collision(v, &(u + e), omega);
        let (_, minus) = post_collision(v, &(u - e), omega);
        m.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    m.determinant()
}

pub fn carleman_zminus(z: &Vec3, k: &Vec3) -> Vec3 {
    -z * 0.5 + k * (0.5 * z.norm())
}

/// Hemisphere area: the ω-integral of a constant angular factor.
pub const HEMISPHERE: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_collision_along_relative_velocity() {
        let v = Vec3::new(1.0, 0.0, 0.0);
        let u = Vec3::zeros();
        let (vp, up) = post_collision(&v, &u, &Vec3::x());
        assert!((vp - v).norm() < 1e-15 && (up - u).norm() < 1e-15);
    }

    #[test]
    fn head_on_collision_turns_ninety_degrees() {
        let (vp, up) = post_collision(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(-1.0, 0.0, 0.0), &Vec3::y());
        assert!((vp - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((up - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn kernel_values() {
        let hs = CollisionParams::default();
        let b = collision_kernel(&Vec3::new(2.0, 0.0, 0.0), &Vec3::zeros(), &Vec3::x(), &hs).unwrap();
        assert!(close(b, 2.0, 1e-15));

        let maxwell = CollisionParams { gamma: 0.0, ..CollisionParams::default() };
        let b = collision_kernel(&Vec3::new(0.3, -2.0, 1.0), &Vec3::new(1.0, 0.0, 0.0), &Vec3::z(), &maxwell).unwrap();
        assert!(close(b, 1.0, 1e-15));

        // b(s) = s as a two-point table
        let linear = CollisionParams { angular: AngularFactor::Table(vec![0.0, 1.0]), ..CollisionParams::default() };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let b = collision_kernel(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(-1.0, 0.0, 0.0), &Vec3::new(h, h, 0.0), &linear)
            .unwrap();
        assert!(close(b, 2.0_f64.sqrt(), 1e-14));
    }

    #[test]
    fn degenerate_pairs() {
        let v = Vec3::new(0.2, 0.1, 0.0);
        let hs = CollisionParams::default();
        assert_eq!(collision_kernel(&v, &v, &Vec3::x(), &hs).unwrap(), 0.0);
        let maxwell = CollisionParams { gamma: 0.0, ..CollisionParams::default() };
        assert!(matches!(collision_kernel(&v, &v, &Vec3::x(), &maxwell), Err(KineticError::UndefinedAngle)));
        assert!(jacobian_u_to_uprime(&v, &v, &Vec3::x()).is_err());
    }

    #[test]
    fn maxwellian_and_weights() {
        assert!(close(maxwellian(&Vec3::zeros()), (2.0 * PI).powf(-1.5), 1e-17));
        assert!(close(maxwellian(&Vec3::zeros()), 0.0634936, 1e-7));
        assert!(close(maxwellian_sqrt(&Vec3::new(1.0, 2.0, 0.5)).powi(2), maxwellian(&Vec3::new(1.0, 2.0, 0.5)), 1e-17));
        assert_eq!(weight_w(&Vec3::zeros(), 2.7), 1.0);
        assert!(close(weight_w(&Vec3::new(1.0, 1.0, 1.0), 2.0), 4.0, 1e-14));
        assert!(close(weight_wtilde(&Vec3::zeros(), 3.0), (2.0 * PI).powf(0.75), 1e-12));
    }

    #[test]
    fn jacobian_endpoints() {
        let v = Vec3::new(1.0, 0.0, 0.0);
        let u = Vec3::zeros();
        assert!(close(jacobian_u_to_uprime(&v, &u, &Vec3::x()).unwrap(), 0.25, 1e-15));
        assert!(close(jacobian_u_to_uprime(&v, &u, &Vec3::y()).unwrap(), 0.125, 1e-15));
        assert!(close(jacobian_finite_difference(&v, &u, &Vec3::x(), 1e-5), 0.25, 1e-8));
        assert!(close(jacobian_finite_difference(&v, &u, &Vec3::y(), 1e-5), 0.125, 1e-8));
    }

    #[test]
    fn carleman_examples() {
        let z = Vec3::new(2.0, 0.0, 0.0);
        assert!(carleman_zminus(&z, &Vec3::x()).norm() < 1e-15);
        assert!((carleman_zminus(&z, &Vec3::y()) - Vec3::new(-1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn angular_table_mean_and_eval() {
        let t = AngularFactor::Table(vec![0.0, 0.5, 1.0]);
        assert!(close(t.eval(0.25), 0.25, 1e-15));
        assert!(close(t.mean(), 0.5, 1e-15));
        assert!(close(t.eval(2.0), 1.0, 1e-15));
    }

    #[test]
    fn admissibility_branches() {
        assert_eq!(gain_branch(5.0, 0.5), Some(GainBranch::Upper));
        assert_eq!(gain_branch(6.0, 0.8), Some(GainBranch::Upper));
        assert_eq!(gain_branch(5.0, 0.9), Some(GainBranch::Middle));
        assert_eq!(gain_branch(4.0, 0.9), None);
        assert!(close(beta_threshold(5.0, 0.5), 2.0, 1e-12));
        assert!(close(beta_threshold(6.0, 0.8), 2.6, 1e-12));
        assert!(close(beta_threshold(5.0, 0.9), 2.7, 1e-12));
        assert!(close(gain_moment_exponent(5.0, 0.9).unwrap(), 1.8, 1e-12));
        assert!(close(gain_moment_exponent(5.0, 0.5).unwrap(), 1.2, 1e-12));
        assert!(close(gain_decay_exponent(5.0, 0.5), 0.8, 1e-12));
        let strict = CollisionParams { gamma: 0.5, p: 5.0, beta: 2.5, ..CollisionParams::default() };
        assert!(strict.validate_strict().is_ok());
        let loose = CollisionParams { beta: 1.9, ..strict.clone() };
        assert!(loose.validate().is_ok() && loose.validate_strict().is_err());
    }

    #[test]
    fn params_validation_rejects_out_of_range() {
        let p = CollisionParams { gamma: 1.5, ..CollisionParams::default() };
        assert!(p.validate().is_err());
        let p = CollisionParams { angular: AngularFactor::Constant(2.0), c_b: 1.0, ..CollisionParams::default() };
        assert!(p.validate().is_err());
    }
}
