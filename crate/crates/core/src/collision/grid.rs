//! Uniform tensor velocity grid with trilinear off-grid evaluation.

use sha2::{Digest, Sha256};

use crate::error::KineticError;
use crate::kinematics::Vec3;

/// Relative slack of the box test, so that sweeps in index space and
/// pointwise evaluation agree on points lying exactly on a face.
pub const BOX_SLACK: f64 = 1e-12;

/// Cell-centred nodes −v_cut + (i + ½)h, h = 2v_cut/n, equal weights h³.
///
/// Flat index is `(i*n + j)*n + k` for node (x_i, y_j, z_k), so the z axis
/// is contiguous.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub v_cut: f64,
    pub n: usize,
    pub h: f64,
    pub weight: f64,
    coords: Vec<f64>,
}

/// Eight trilinear corners. Corners past the last node are folded back onto
/// it, so every node's hat integrates to h³ over the box.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
}

/// 27 quadratic-interpolation corners.
#[derive(Debug, Clone, Copy)]
pub struct QuadStencil {
    pub idx: [usize; 27],
    pub w: [f64; 27],
}

impl VelocityGrid {
    pub fn new(v_cut: f64, n: usize) -> Result<Self, KineticError> {
        if !(v_cut > 0.0) || n < 2 {
            return Err(KineticError::InvalidParams(format!("velocity grid needs v_cut > 0 and n >= 2 (got {v_cut}, {n})")));
        }
        let h = 2.0 * v_cut / n as f64;
        let coords = (0..n).map(|i| -v_cut + (i as f64 + 0.5) * h).collect();
        Ok(VelocityGrid { v_cut, n, h, weight: h * h * h, coords })
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn triple(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let ij = idx / self.n;
        (ij / self.n, ij % self.n, k)
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.triple(idx);
        Vec3::new(self.coords[i], self.coords[j], self.coords[k])
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    pub fn tabulate(&self, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.node(i))).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.weight
    }

    /// Nearest node to `v` (clamped into the grid).
    pub fn nearest(&self, v: &Vec3) -> usize {
        let pick = |x: f64| (((x + self.v_cut) / self.h).floor().max(0.0) as usize).min(self.n - 1);
        self.flat(pick(v[0]), pick(v[1]), pick(v[2]))
    }

    /// Closed box test; points on the faces up to rounding count as inside.
    pub fn inside_box(&self, v: &Vec3) -> bool {
        let lim = self.v_cut * (1.0 + BOX_SLACK);
        v.iter().all(|c| c.abs() <= lim)
    }

    /// Trilinear stencil, constant in the outer half cell next to each face
    /// and zero outside [−v_cut, v_cut]³.
    #[inline]
    pub fn stencil(&self, v: &Vec3) -> Option<Stencil> {
        if !self.inside_box(v) {
            return None;
        }
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (v[a] + self.v_cut) / self.h - 0.5;
            let f = s.floor();
            base[a] = f as isize;
            frac[a] = s - f;
        }
        let n = self.n as isize;
        let mut st = Stencil { idx: [0; 8], w: [0.0; 8] };
        let mut c = 0;
        for di in 0..2 {
            let i = base[0] + di;
            let wi = if di == 0 { 1.0 - frac[0] } else { frac[0] };
            for dj in 0..2 {
                let j = base[1] + dj;
                let wj = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
                for dk in 0..2 {
                    let k = base[2] + dk;
                    let wk = if dk == 0 { 1.0 - frac[2] } else { frac[2] };
                    let cl = |x: isize| x.clamp(0, n - 1) as usize;
                    st.idx[c] = self.flat(cl(i), cl(j), cl(k));
                    st.w[c] = wi * wj * wk;
                    c += 1;
                }
            }
        }
        Some(st)
    }

    /// 27-point tensor quadratic stencil, exact on polynomials of degree ≤ 2
    /// in each coordinate. Near the faces the stencil is shifted inward
    /// (one-sided) rather than padded, so exactness holds in the whole box.
    #[inline]
    pub fn stencil_quadratic(&self, v: &Vec3) -> Option<QuadStencil> {
        if !self.inside_box(v) || self.n < 3 {
            return None;
        }
        let mut base = [0usize; 3];
        let mut wa = [[0.0; 3]; 3];
        for a in 0..3 {
            let s = (v[a] + self.v_cut) / self.h - 0.5;
            let r = (s.round() as isize).clamp(1, self.n as isize - 2);
            let t = s - r as f64;
            base[a] = r as usize - 1;
            wa[a] = [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)];
        }
        let mut st = QuadStencil { idx: [0; 27], w: [0.0; 27] };
        let mut c = 0;
        for di in 0..3 {
            for dj in 0..3 {
                let row = self.flat(base[0] + di, base[1] + dj, base[2]);
                let wij = wa[0][di] * wa[1][dj];
                for dk in 0..3 {
                    st.idx[c] = row + dk;
                    st.w[c] = wij * wa[2][dk];
                    c += 1;
                }
            }
        }
        Some(st)
    }

    #[inline]
    pub fn interpolate(&self, values: &[f64], v: &Vec3) -> f64 {
        match self.stencil(v) {
            Some(st) => (0..8).map(|c| st.w[c] * values[st.idx[c]]).sum(),
            None => 0.0,
        }
    }

    /// Short content hash identifying the discretization.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"velocity-grid");
        h.update(self.v_cut.to_le_bytes());
        h.update((self.n as u64).to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::maxwellian;

    #[test]
    fn weights_and_symmetry() {
        let g = VelocityGrid::new(6.0, 24).unwrap();
        assert_eq!(g.len(), 13_824);
        assert!((g.weight * g.len() as f64 - 12.0_f64.powi(3)).abs() < 1e-9);
        for idx in [0, 17, 5000, 13_823] {
            let v = g.node(idx);
            let m = g.node(g.len() - 1 - idx);
            assert!((v + m).norm() < 1e-14);
        }
    }

    #[test]
    fn maxwellian_mass() {
        let g = VelocityGrid::new(6.0, 24).unwrap();
        let m = g.integrate(&g.tabulate(maxwellian));
        assert!((m - 1.0).abs() < 1e-7, "{m}");
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linears() {
        let g = VelocityGrid::new(3.0, 8).unwrap();
        let lin = g.tabulate(|v| 1.0 + 2.0 * v[0] - v[1] + 0.5 * v[2]);
        let p = Vec3::new(0.31, -1.2, 0.77);
        assert!((g.interpolate(&lin, &p) - (1.0 + 0.62 + 1.2 + 0.385)).abs() < 1e-12);
        let v = g.node(100);
        assert!((g.interpolate(&lin, &v) - lin[100]).abs() < 1e-13);
        assert_eq!(g.interpolate(&lin, &Vec3::new(3.01, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn quadratic_stencil_is_exact_on_quadratics_up_to_the_faces() {
        let g = VelocityGrid::new(3.0, 6).unwrap();
        let q = g.tabulate(|v| v.norm_squared() - 2.0 * v[0] * v[2] + v[1]);
        for p in [Vec3::new(0.1, -0.7, 2.2), Vec3::new(2.99, -2.95, 0.0), Vec3::zeros()] {
            let st = g.stencil_quadratic(&p).unwrap();
            let val: f64 = (0..27).map(|c| st.w[c] * q[st.idx[c]]).sum();
            let exact = p.norm_squared() - 2.0 * p[0] * p[2] + p[1];
            assert!((val - exact).abs() < 1e-12, "{val} {exact}");
        }
        assert!(g.stencil_quadratic(&Vec3::new(0.0, 3.5, 0.0)).is_none());
    }

    #[test]
    fn flat_index_roundtrip() {
        let g = VelocityGrid::new(2.0, 5).unwrap();
        for idx in 0..g.len() {
            let (i, j, k) = g.triple(idx);
            assert_eq!(g.flat(i, j, k), idx);
            assert_eq!(g.nearest(&g.node(idx)), idx);
        }
    }
}
