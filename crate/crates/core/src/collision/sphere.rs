//! Product quadrature on S² with antipodal pairing.

use std::f64::consts::PI;

use crate::error::KineticError;
use crate::kinematics::Vec3;
use crate::quadrature::gauss_legendre;

/// Gauss–Legendre in cosθ × uniform azimuth, `2*n_polar²` nodes in total.
///
/// The node set is closed under ω ↦ −ω. Only one node of every antipodal
/// pair is stored; for a given relative velocity g the cutoff hemisphere
/// {ω·g ≥ 0} contains exactly one node of each pair, so flipping the stored
/// representative into that hemisphere reproduces hemisphere masking of
/// the full rule with total weight 2π.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub n_polar: usize,
    reps: Vec<Vec3>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn new(n_polar: usize) -> Result<Self, KineticError> {
        if n_polar == 0 {
            return Err(KineticError::InvalidParams("sphere quadrature needs n_polar >= 1".into()));
        }
        let gl = gauss_legendre(n_polar);
        let n_az = 2 * n_polar;
        let dphi = 2.0 * PI / n_az as f64;
        let mut reps = Vec::new();
        let mut weights = Vec::new();
        for (c, wc) in gl.nodes.iter().zip(&gl.weights) {
            if *c < 0.0 {
                continue;
            }
            let s = (1.0 - c * c).max(0.0).sqrt();
            // on the equator ring keep one azimuth of each antipodal pair
            let count = if *c == 0.0 { n_az / 2 } else { n_az };
            for j in 0..count {
                let phi = (j as f64 + 0.5) * dphi;
                reps.push(Vec3::new(s * phi.cos(), s * phi.sin(), *c));
                weights.push(wc * dphi);
            }
        }
        Ok(SphereQuadrature { n_polar, reps, weights })
    }

    /// Number of nodes of the full (unmasked) rule.
    pub fn full_len(&self) -> usize {
        2 * self.reps.len()
    }

    pub fn reps(&self) -> &[Vec3] {
        &self.reps
    }

    pub fn rep_weights(&self) -> &[f64] {
        &self.weights
    }

    /// All nodes and weights of the full rule.
    pub fn full(&self) -> (Vec<Vec3>, Vec<f64>) {
        let mut n = self.reps.clone();
        n.extend(self.reps.iter().map(|r| -r));
        let mut w = self.weights.clone();
        w.extend(self.weights.iter().cloned());
        (n, w)
    }

    /// Hemisphere-restricted nodes for relative velocity `g`: the stored
    /// representative flipped so that ω·g ≥ 0.
    #[inline]
    pub fn oriented(&self, r: usize, g: &Vec3) -> Vec3 {
        let w = self.reps[r];
        if w.dot(g) < 0.0 {
            -w
        } else {
            w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_and_norms() {
        for np in [2, 3, 4, 8] {
            let s = SphereQuadrature::new(np).unwrap();
            let (nodes, w) = s.full();
            assert_eq!(nodes.len(), 2 * np * np);
            assert!((w.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-10);
            assert!(nodes.iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
            assert!((s.rep_weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-10);
        }
    }

    #[test]
    fn masking_equals_half_sphere() {
        // ∫_{ω·g≥0} ω·ĝ dω = π
        let s = SphereQuadrature::new(4).unwrap();
        let g = Vec3::new(0.3, -0.8, 0.52).normalize();
        let (nodes, w) = s.full();
        let masked: f64 = nodes.iter().zip(&w).filter(|(n, _)| n.dot(&g) >= 0.0).map(|(_, w)| w).sum();
        assert!((masked - 2.0 * PI).abs() < 1e-10);
        let flux: f64 = (0..s.reps().len()).map(|r| s.rep_weights()[r] * s.oriented(r, &g).dot(&g)).sum();
        assert!((flux - PI).abs() < 0.05, "{flux}");
    }
}
