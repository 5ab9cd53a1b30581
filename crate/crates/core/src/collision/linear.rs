//! Assembled linearized operator: kernel rows and matrices, the hydrodynamic
//! projection, and a block Krylov eigensolver for the near-null space.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;

use super::grid::VelocityGrid;
use super::operator::CollisionOperator;
use crate::error::KineticError;
use crate::kinematics::{maxwellian_sqrt, Vec3, DEGENERATE_SPEED};

/// Largest grid edge for which a dense matrix is assembled.
pub const MATRIX_MAX_N: usize = 32;
/// Memory ceiling for one dense matrix.
pub const MATRIX_MAX_BYTES: usize = 3 << 30;

/// Which factor of K₂ is interpolated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelForm {
    /// f interpolated at v′, u′; the Maxwellian factors evaluated exactly.
    Direct,
    /// The ratio f/μ^{1/2} interpolated, with μ^{1/2}(u)μ^{1/2}(u′) rewritten
    /// as μ(u)μ^{1/2}(v)/μ^{1/2}(v′). Collision invariants become exact
    /// null vectors whenever the interpolant reproduces 1, v and |v|².
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    Trilinear,
    Quadratic,
}

/// Dense row-major square matrix.
#[derive(Debug, Clone)]
pub struct SquareMatrix {
    pub n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        SquareMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data.par_chunks(self.n).map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Product with a block of vectors, streaming the matrix once.
    pub fn apply_block(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = self
            .data
            .par_chunks(self.n)
            .map(|r| xs.iter().map(|x| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect())
            .collect();
        (0..xs.len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
    }

    /// Replace A by (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                let s = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = s;
                self.data[j * n + i] = s;
            }
        }
    }

    /// (max |a_ij − a_ji|, max |a_ij|, max |a_ij| with i ≠ j)
    fn symmetry_parts(&self) -> (f64, f64, f64) {
        let n = self.n;
        let (mut diff, mut all, mut off): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j].abs();
                all = all.max(a);
                if i != j {
                    off = off.max(a);
                }
                if j > i {
                    diff = diff.max((self.data[i * n + j] - self.data[j * n + i]).abs());
                }
            }
        }
        (diff, all, off)
    }

    /// ‖A − Aᵀ‖_max / ‖A‖_max
    pub fn symmetry_defect(&self) -> f64 {
        let (diff, all, _) = self.symmetry_parts();
        diff / all
    }

    /// Same defect, normalized by the largest off-diagonal entry instead.
    /// The diagonal of a kernel matrix carries the cell integral of the
    /// singular part, so this is the more demanding ratio.
    pub fn off_diagonal_symmetry_defect(&self) -> f64 {
        let (diff, _, off) = self.symmetry_parts();
        diff / off
    }

    /// xᵀ A x
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

fn check_matrix_size(grid: &VelocityGrid) -> Result<(), KineticError> {
    let len = grid.len();
    let bytes = len.saturating_mul(len).saturating_mul(8);
    if grid.n > MATRIX_MAX_N || bytes > MATRIX_MAX_BYTES {
        return Err(KineticError::GridTooLarge(format!(
            "dense matrix for n = {} needs {:.2} GiB (limits: n <= {MATRIX_MAX_N}, {:.1} GiB)",
            grid.n,
            bytes as f64 / (1u64 << 30) as f64,
            MATRIX_MAX_BYTES as f64 / (1u64 << 30) as f64
        )));
    }
    Ok(())
}

impl CollisionOperator {
    #[inline]
    fn scatter(&self, row: &mut [f64], p: &Vec3, scale: f64, interp: Interp) {
        match interp {
            Interp::Trilinear => {
                if let Some(st) = self.grid.stencil(p) {
                    for c in 0..8 {
                        row[st.idx[c]] += scale * st.w[c];
                    }
                }
            }
            Interp::Quadratic => {
                if let Some(st) = self.grid.stencil_quadratic(p) {
                    for c in 0..27 {
                        row[st.idx[c]] += scale * st.w[c];
                    }
                }
            }
        }
    }

    /// Row i of the matrix of K = K₂ − K₁: (Kf)(v_i) = Σ_m row[m] f(v_m).
    /// Dividing by the cell volume h³ gives the kernel k(v_i, v_m).
    pub fn kernel_row(&self, i: usize, form: KernelForm, interp: Interp) -> Vec<f64> {
        let len = self.len();
        let v = self.grid.node(i);
        let mu = self.mu();
        let ms = self.mu_sqrt();
        let reps = self.sphere.reps();
        let wts = self.sphere.rep_weights();
        let mut row = vec![0.0; len];
        for u_idx in 0..len {
            let u = self.grid.node(u_idx);
            let g = v - u;
            let gn = g.norm();
            if gn < DEGENERATE_SPEED {
                continue;
            }
            let speed = self.params.kernel_speed(gn);
            let center = (v + u) * 0.5;
            let frame = self.frame_near(&g);
            for r in 0..reps.len() {
                let w = frame * reps[r];
                let w = if w.dot(&g) < 0.0 { -w } else { w };
                let cos = (w.dot(&g) / gn).clamp(0.0, 1.0);
                let coef = self.params.angular.eval(cos) * speed * wts[r] * self.grid.weight;
                if coef == 0.0 {
                    continue;
                }
                let vp = center + w * (0.5 * gn);
                let up = center - w * (0.5 * gn);
                // same truncation as the sweeps: both outgoing velocities must stay in the box
                if form == KernelForm::Balanced && (!self.grid.inside_box(&vp) || !self.grid.inside_box(&up)) {
                    continue;
                }
                match form {
                    KernelForm::Balanced => {
                        let a = coef * mu[u_idx];
                        self.scatter(&mut row, &vp, a, interp);
                        self.scatter(&mut row, &up, a, interp);
                    }
                    KernelForm::Direct => {
                        // μ^{1/2}(u′)μ^{1/2}(v′) = μ^{1/2}(u)μ^{1/2}(v)
                        let a = coef * ms[u_idx];
                        let mu_up = maxwellian_sqrt(&up);
                        self.scatter(&mut row, &vp, a * mu_up, interp);
                        self.scatter(&mut row, &up, a * ms[u_idx] * ms[i] / mu_up, interp);
                    }
                }
            }
        }
        if form == KernelForm::Balanced {
            for (m, x) in row.iter_mut().enumerate() {
                *x *= ms[i] / ms[m];
            }
        }
        // u = v survives only for γ = 0, where v′ = u′ = v
        row[i] += 2.0 * self.degenerate_pair_weight() * mu[i];
        let (ii, ij, ik) = self.grid.triple(i);
        for (m, x) in row.iter_mut().enumerate() {
            let (mi, mj, mk) = self.grid.triple(m);
            let b = self.loss_kernel_offset(ii as isize - mi as isize, ij as isize - mj as isize, ik as isize - mk as isize);
            *x -= ms[i] * ms[m] * b;
        }
        row
    }

    /// Dense matrix of K, assembled row by row. The node set and the sphere
    /// frames are symmetric under v ↦ −v, so K(−v, −η) = K(v, η) and only
    /// half of the rows are computed.
    pub fn kernel_matrix(&self, form: KernelForm, interp: Interp) -> Result<SquareMatrix, KineticError> {
        check_matrix_size(&self.grid)?;
        let n = self.len();
        let mut data = vec![0.0; n * n];
        let half = n.div_ceil(2);
        data[..half * n].par_chunks_mut(n).enumerate().for_each(|(i, dst)| {
            dst.copy_from_slice(&self.kernel_row(i, form, interp));
        });
        let (top, bottom) = data.split_at_mut(half * n);
        bottom.par_chunks_mut(n).enumerate().for_each(|(r, dst)| {
            let src = &top[(n - 1 - (half + r)) * n..][..n];
            for (m, x) in dst.iter_mut().enumerate() {
                *x = src[n - 1 - m];
            }
        });
        Ok(SquareMatrix::from_rows(n, data))
    }

    /// Dense matrix of L = ν − K.
    pub fn linearized_matrix(&self, form: KernelForm, interp: Interp) -> Result<SquareMatrix, KineticError> {
        let mut k = self.kernel_matrix(form, interp)?;
        let n = k.n;
        for x in k.data.iter_mut() {
            *x = -*x;
        }
        for i in 0..n {
            k.data[i * n + i] += self.nu()[i];
        }
        Ok(k)
    }
}

/// The five collision invariants μ^{1/2}, v_i μ^{1/2}, (|v|²−3)/√6 μ^{1/2}
/// tabulated on the grid.
pub fn invariant_basis(grid: &VelocityGrid) -> Vec<Vec<f64>> {
    let s6 = 6f64.sqrt();
    let mut out = vec![grid.tabulate(maxwellian_sqrt)];
    for a in 0..3 {
        out.push(grid.tabulate(|v| v[a] * maxwellian_sqrt(v)));
    }
    out.push(grid.tabulate(|v| (v.norm_squared() - 3.0) / s6 * maxwellian_sqrt(v)));
    out
}

/// Hydrodynamic coefficients and the projection Pf.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub a: f64,
    pub b: Vec3,
    pub c: f64,
    pub pf: Vec<f64>,
}

/// L²_v projection onto the collision invariants (grid quadrature).
pub fn project_p(grid: &VelocityGrid, f: &[f64]) -> Projection {
    let basis = invariant_basis(grid);
    let coef: Vec<f64> = basis.iter().map(|e| e.iter().zip(f).map(|(x, y)| x * y).sum::<f64>() * grid.weight).collect();
    let mut pf = vec![0.0; f.len()];
    for (e, c) in basis.iter().zip(&coef) {
        for (p, x) in pf.iter_mut().zip(e) {
            *p += c * x;
        }
    }
    Projection { a: coef[0], b: Vec3::new(coef[1], coef[2], coef[3]), c: coef[4], pf }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalize `v` against `basis` (two Gram–Schmidt passes); returns
/// false if nothing independent is left.
fn orthonormalize_against(basis: &[Vec<f64>], v: &mut [f64]) -> bool {
    let before = dot(v, v).sqrt();
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
    let after = dot(v, v).sqrt();
    if after <= 1e-10 * before || after == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= after;
    }
    true
}

/// Ritz approximations to the lowest eigenpairs of a symmetric operator.
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Block Krylov with full reorthogonalization and Rayleigh–Ritz; returns
/// the `want` smallest Ritz pairs. `apply` maps a block of vectors.
pub fn smallest_eigenpairs(
    dim: usize,
    apply: &dyn Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
    want: usize,
    block: usize,
    steps: usize,
    seed: u64,
) -> EigenEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut aq: Vec<Vec<f64>> = Vec::new();
    let mut fresh: Vec<Vec<f64>> = Vec::new();
    for _ in 0..block {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if orthonormalize_against(&fresh, &mut v) {
            fresh.push(v);
        }
    }
    for _ in 0..=steps {
        if fresh.is_empty() {
            break;
        }
        let images = apply(&fresh);
        q.append(&mut fresh);
        aq.extend(images.iter().cloned());
        if q.len() >= dim {
            break;
        }
        for mut v in images {
            if orthonormalize_against(&q, &mut v) && orthonormalize_against(&fresh, &mut v) {
                fresh.push(v);
            }
        }
    }
    let m = q.len();
    let t = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i])));
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = EigenEstimate { values: vec![], vectors: vec![], residuals: vec![] };
    for &k in order.iter().take(want) {
        let lam = eig.eigenvalues[k];
        let mut x = vec![0.0; dim];
        let mut ax = vec![0.0; dim];
        for j in 0..m {
            let c = eig.eigenvectors[(j, k)];
            for d in 0..dim {
                x[d] += c * q[j][d];
                ax[d] += c * aq[j][d];
            }
        }
        let res = ax.iter().zip(&x).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        out.values.push(lam);
        out.vectors.push(x);
        out.residuals.push(res);
    }
    out
}

/// Sine of the largest principal angle between span(u) and span(e).
pub fn largest_principal_angle_sin(u: &[Vec<f64>], e: &[Vec<f64>]) -> f64 {
    let mut eo: Vec<Vec<f64>> = Vec::new();
    for v in e {
        let mut v = v.clone();
        if orthonormalize_against(&eo, &mut v) {
            eo.push(v);
        }
    }
    let mut uo: Vec<Vec<f64>> = Vec::new();
    for v in u {
        let mut v = v.clone();
        if orthonormalize_against(&uo, &mut v) {
            uo.push(v);
        }
    }
    // residuals of the u-basis after removing the e-span
    let r: Vec<Vec<f64>> = uo
        .iter()
        .map(|x| {
            let mut y = x.clone();
            for q in &eo {
                let c = dot(q, x);
                for (a, b) in y.iter_mut().zip(q) {
                    *a -= c * b;
                }
            }
            y
        })
        .collect();
    let k = r.len();
    let gram = DMatrix::from_fn(k, k, |i, j| dot(&r[i], &r[j]));
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}
