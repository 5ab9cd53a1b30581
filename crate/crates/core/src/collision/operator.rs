//! Full-grid and pointwise quadrature of the gain, loss and linearized terms.
//!
//! For a fixed lattice offset g = v − u and a fixed ω the post-collision
//! points sit at constant offsets from v:
//!   v′ − v = −g/2 + (|g|/2)ω,   u′ − v = −g/2 − (|g|/2)ω.
//! Their trilinear stencils are therefore identical for every output node,
//! and each (g, ω) pair becomes a contiguous multiply-add sweep over a
//! sub-box of the grid. Summed over all offsets this touches exactly
//! N_v² × (hemisphere nodes) point pairs.
//!
//! The sphere rule is turned by a fixed pseudo-random rotation chosen per
//! lattice offset (the same for g and −g). A single orientation makes the
//! grazing post-collision points of all pairs with similar g land on the
//! same few lattice positions, which shows up as a visibly non-symmetric
//! kernel for large |g|; per-offset rotations spread those points out while
//! keeping every stencil uniform along the sweep.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::grid::{VelocityGrid, BOX_SLACK};
use super::sphere::SphereQuadrature;
use crate::error::KineticError;
use crate::kinematics::{maxwellian, maxwellian_sqrt, CollisionParams, Vec3, DEGENERATE_SPEED, HEMISPHERE};

/// How the two interpolated factors combine in a gain-type sweep.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Combine {
    /// X(v′)·Y(u′)
    Product,
    /// X(v′) + X(u′)
    Sum,
    /// X(v′)·Y(u′) + Y(v′)·X(u′)
    Cross,
}

/// One (g, ω) sweep restricted to an output x-slab.
struct Pass {
    coef: f64,
    /// x index of u
    ux: usize,
    b: isize,
    c: isize,
    j0: usize,
    j1: usize,
    k0: usize,
    k1: usize,
    vp: Corner,
    up: Corner,
}

/// Padded-lattice stencil of an offset point: x part absolute, y/z relative.
#[derive(Clone, Copy)]
struct Corner {
    px: [usize; 2],
    wx: [f64; 2],
    oy: isize,
    wy: [f64; 2],
    oz: isize,
    wz: [f64; 2],
}

impl Corner {
    /// Offset `d` (index units) from output node with x index `i`.
    fn new(i: usize, d: &Vec3) -> Self {
        let sx = i as f64 + d[0];
        let fx = sx.floor();
        let fy = d[1].floor();
        let fz = d[2].floor();
        let (ax, ay, az) = (sx - fx, d[1] - fy, d[2] - fz);
        // padded index = lattice index + 1
        let px0 = (fx as isize + 1) as usize;
        Corner {
            px: [px0, px0 + 1],
            wx: [1.0 - ax, ax],
            oy: fy as isize,
            wy: [1.0 - ay, ay],
            oz: fz as isize,
            wz: [1.0 - az, az],
        }
    }

    #[inline]
    fn bases(&self, j: usize, m: usize) -> ([isize; 8], [f64; 8]) {
        let mut base = [0isize; 8];
        let mut w = [0.0; 8];
        let mut t = 0;
        for dx in 0..2 {
            for dy in 0..2 {
                let py = (j as isize + self.oy + 1 + dy as isize) as usize;
                for dz in 0..2 {
                    base[t] = ((self.px[dx] * m + py) * m) as isize + self.oz + 1 + dz as isize;
                    w[t] = self.wx[dx] * self.wy[dy] * self.wz[dz];
                    t += 1;
                }
            }
        }
        (base, w)
    }
}

/// Index range of output nodes along one axis for which `lattice + d`
/// stays inside [−½, n−½] (the velocity box).
fn box_range(d: f64, n: usize) -> (isize, isize) {
    let slack = BOX_SLACK * n as f64;
    let lo = (-0.5 - d - slack).ceil() as isize;
    let hi = (n as f64 - 0.5 - d + slack).floor() as isize;
    (lo, hi)
}

/// Gain term and loss rate evaluated on one shared set of collisions.
#[derive(Debug, Clone)]
pub struct CollisionParts {
    pub gain: Vec<f64>,
    pub loss_rate: Vec<f64>,
}

/// Quadrature of collision integrals on a velocity grid × sphere rule.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub grid: VelocityGrid,
    pub sphere: SphereQuadrature,
    pub params: CollisionParams,
    mu: Vec<f64>,
    mu_sqrt: Vec<f64>,
    mu_sqrt_padded: Vec<f64>,
    nu: Vec<f64>,
    /// h³ ∫_{hemisphere} B(g, ω) dω over lattice offsets, (2n−1)³ entries.
    loss_kernel: Vec<f64>,
    /// Sphere-rule rotation per lattice offset, same layout as `loss_kernel`.
    frames: Vec<Matrix3<f64>>,
}

const FRAME_SALT: u64 = 0x5eed_0f_a11_7e57;

/// Uniformly distributed rotation (Shoemake) drawn from `rng`.
fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = Quaternion::new(b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin());
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

impl CollisionOperator {
    pub fn new(grid: VelocityGrid, sphere: SphereQuadrature, params: CollisionParams) -> Result<Self, KineticError> {
        params.validate()?;
        let mu = grid.tabulate(maxwellian);
        let mu_sqrt = grid.tabulate(maxwellian_sqrt);
        let mut op = CollisionOperator {
            mu_sqrt_padded: Vec::new(),
            grid,
            sphere,
            params,
            mu,
            mu_sqrt,
            nu: Vec::new(),
            loss_kernel: Vec::new(),
            frames: Vec::new(),
        };
        op.frames = op.build_frames();
        op.mu_sqrt_padded = op.pad(&op.mu_sqrt);
        op.loss_kernel = op.build_loss_kernel();
        op.nu = op.loss_rate(&op.mu);
        Ok(op)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_sqrt(&self) -> &[f64] {
        &self.mu_sqrt
    }

    /// ν(v) at the nodes.
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// ∫_{hemisphere} B(g, ω) dω for an arbitrary relative velocity.
    pub fn hemisphere_kernel(&self, g: &Vec3) -> f64 {
        self.hemisphere_kernel_in(g, self.frame_near(g))
    }

    fn hemisphere_kernel_in(&self, g: &Vec3, frame: &Matrix3<f64>) -> f64 {
        let gn = g.norm();
        if gn < DEGENERATE_SPEED {
            return if self.params.gamma == 0.0 { HEMISPHERE * self.params.angular.mean() } else { 0.0 };
        }
        let speed = self.params.kernel_speed(gn);
        if self.params.angular.is_constant() {
            return HEMISPHERE * self.params.angular.eval(1.0) * speed;
        }
        let ghat = g / gn;
        let ang: f64 = self
            .sphere
            .reps()
            .iter()
            .zip(self.sphere.rep_weights())
            .map(|(w, wt)| wt * self.params.angular.eval((frame * w).dot(&ghat).abs()))
            .sum();
        ang * speed
    }

    fn build_loss_kernel(&self) -> Vec<f64> {
        let n = self.grid.n as isize;
        let m = (2 * n - 1) as usize;
        let h = self.grid.h;
        let mut out = vec![0.0; m * m * m];
        for a in -(n - 1)..n {
            for b in -(n - 1)..n {
                for c in -(n - 1)..n {
                    let g = Vec3::new(a as f64, b as f64, c as f64) * h;
                    let idx = (((a + n - 1) as usize * m) + (b + n - 1) as usize) * m + (c + n - 1) as usize;
                    out[idx] = self.grid.weight * self.hemisphere_kernel_in(&g, self.frame(a, b, c));
                }
            }
        }
        out
    }

    fn offset_index(&self, a: isize, b: isize, c: isize) -> usize {
        let n = self.grid.n as isize;
        let m = (2 * n - 1) as usize;
        (((a + n - 1) as usize * m) + (b + n - 1) as usize) * m + (c + n - 1) as usize
    }

    fn build_frames(&self) -> Vec<Matrix3<f64>> {
        let n = self.grid.n as isize;
        let mut out = Vec::with_capacity(((2 * n - 1) as usize).pow(3));
        for a in -(n - 1)..n {
            for b in -(n - 1)..n {
                for c in -(n - 1)..n {
                    // g and −g share one key
                    let (a, b, c) = if (a, b, c) < (0, 0, 0) { (-a, -b, -c) } else { (a, b, c) };
                    let key = self.offset_index(a, b, c) as u64;
                    out.push(random_rotation(&mut ChaCha8Rng::seed_from_u64(key ^ FRAME_SALT)));
                }
            }
        }
        out
    }

    /// Sphere-rule rotation for the lattice offset (a, b, c).
    #[inline]
    pub(crate) fn frame(&self, a: isize, b: isize, c: isize) -> &Matrix3<f64> {
        &self.frames[self.offset_index(a, b, c)]
    }

    /// Rotation of the nearest lattice offset to `g` (velocity units).
    pub(crate) fn frame_near(&self, g: &Vec3) -> &Matrix3<f64> {
        let lim = self.grid.n as isize - 1;
        let r = |x: f64| ((x / self.grid.h).round() as isize).clamp(-lim, lim);
        self.frame(r(g[0]), r(g[1]), r(g[2]))
    }

    /// Loss-kernel entry (times h³) for the lattice offset v − u = (a, b, c)h.
    pub(crate) fn loss_kernel_offset(&self, a: isize, b: isize, c: isize) -> f64 {
        self.loss_kernel[self.offset_index(a, b, c)]
    }

    /// Degenerate-pair weight (nonzero only for γ = 0).
    pub(crate) fn degenerate_pair_weight(&self) -> f64 {
        self.degenerate_weight()
    }

    /// Copy into the (n+2)³ lattice; ghosts repeat the adjacent face value so
    /// the trilinear hats form a partition of unity on the whole box.
    pub fn pad(&self, values: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let m = n + 2;
        let clamp = |a: usize| a.saturating_sub(1).min(n - 1);
        let mut p = vec![0.0; m * m * m];
        for a in 0..m {
            for b in 0..m {
                let src = (clamp(a) * n + clamp(b)) * n;
                let dst = (a * m + b) * m;
                p[dst] = values[src];
                p[dst + 1..dst + 1 + n].copy_from_slice(&values[src..src + n]);
                p[dst + m - 1] = values[src + n - 1];
            }
        }
        p
    }

    /// ∫∫ B(v−u, ω) F(u) dω du at every node (the loss rate; Q⁻ = F(v)·this).
    pub fn loss_rate(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let nn = n as isize;
        let m = 2 * n - 1;
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
            for ux in 0..n {
                let a = i as isize - ux as isize;
                for j in 0..n {
                    let row = &mut slab[j * n..(j + 1) * n];
                    for uy in 0..n {
                        let b = j as isize - uy as isize;
                        let src = &f[(ux * n + uy) * n..(ux * n + uy + 1) * n];
                        let kbase = (((a + nn - 1) as usize * m) + (b + nn - 1) as usize) * m;
                        let kern = &self.loss_kernel[kbase..kbase + m];
                        // row[k] += Σ_uz kern[k − uz + n − 1] src[uz]
                        for (k, r) in row.iter_mut().enumerate() {
                            let kr = &kern[k..k + n];
                            let mut s = 0.0;
                            for t in 0..n {
                                s += kr[n - 1 - t] * src[t];
                            }
                            *r += s;
                        }
                    }
                }
            }
        });
        out
    }

    /// Pointwise loss rate at an arbitrary velocity.
    pub fn loss_rate_at(&self, f: &[f64], v: &Vec3) -> f64 {
        let mut s = 0.0;
        for (u_idx, fu) in f.iter().enumerate() {
            if *fu == 0.0 {
                continue;
            }
            s += self.hemisphere_kernel(&(v - self.grid.node(u_idx))) * fu;
        }
        s * self.grid.weight
    }

    fn passes_for_slab(&self, i: usize, mut visit: impl FnMut(&Pass)) {
        let n = self.grid.n;
        let nn = n as isize;
        let h = self.grid.h;
        let gamma = self.params.gamma;
        let reps = self.sphere.reps();
        let wts = self.sphere.rep_weights();
        for ux in 0..n {
            let a = i as isize - ux as isize;
            for b in -(nn - 1)..nn {
                let (jb0, jb1) = (b.max(0), (nn - 1 + b).min(nn - 1));
                if jb0 > jb1 {
                    continue;
                }
                for c in -(nn - 1)..nn {
                    let (kb0, kb1) = (c.max(0), (nn - 1 + c).min(nn - 1));
                    if kb0 > kb1 {
                        continue;
                    }
                    if a == 0 && b == 0 && c == 0 {
                        continue;
                    }
                    let g = Vec3::new(a as f64, b as f64, c as f64);
                    let gn = g.norm();
                    let speed = if gamma == 0.0 { 1.0 } else { self.params.kernel_speed(gn * h) };
                    let frame = self.frame(a, b, c);
                    for r in 0..reps.len() {
                        let w = frame * reps[r];
                        let w = if w.dot(&g) < 0.0 { -w } else { w };
                        let cos = (w.dot(&g) / gn).clamp(0.0, 1.0);
                        let coef = self.params.angular.eval(cos) * speed * wts[r] * self.grid.weight;
                        if coef == 0.0 {
                            continue;
                        }
                        let d1 = -g * 0.5 + w * (0.5 * gn);
                        let d2 = -g * 0.5 - w * (0.5 * gn);
                        let (x1lo, x1hi) = box_range(d1[0], n);
                        let (x2lo, x2hi) = box_range(d2[0], n);
                        let ii = i as isize;
                        if ii < x1lo || ii > x1hi || ii < x2lo || ii > x2hi {
                            continue;
                        }
                        let (y1lo, y1hi) = box_range(d1[1], n);
                        let (y2lo, y2hi) = box_range(d2[1], n);
                        let (z1lo, z1hi) = box_range(d1[2], n);
                        let (z2lo, z2hi) = box_range(d2[2], n);
                        let j0 = jb0.max(y1lo).max(y2lo);
                        let j1 = jb1.min(y1hi).min(y2hi);
                        let k0 = kb0.max(z1lo).max(z2lo);
                        let k1 = kb1.min(z1hi).min(z2hi);
                        if j0 > j1 || k0 > k1 {
                            continue;
                        }
                        visit(&Pass {
                            coef,
                            ux,
                            b,
                            c,
                            j0: j0 as usize,
                            j1: j1 as usize + 1,
                            k0: k0 as usize,
                            k1: k1 as usize + 1,
                            vp: Corner::new(i, &d1),
                            up: Corner::new(i, &d2),
                        });
                    }
                }
            }
        }
    }

    /// out(v) += Σ_{g,ω} coef · pre(u) · combine(X at v′, Y at u′), with X, Y padded.
    fn sweep(&self, x: &[f64], y: &[f64], pre: &[f64], mode: Combine) -> Vec<f64> {
        let n = self.grid.n;
        let m = n + 2;
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
            self.passes_for_slab(i, |p| {
                let len = p.k1 - p.k0;
                for j in p.j0..p.j1 {
                    let uy = (j as isize - p.b) as usize;
                    let uz0 = (p.k0 as isize - p.c) as usize;
                    let pre_row = &pre[(p.ux * n + uy) * n + uz0..][..len];
                    let out_row = &mut slab[j * n + p.k0..][..len];
                    let (bv, wv) = p.vp.bases(j, m);
                    let (bu, wu) = p.up.bases(j, m);
                    let xv: [&[f64]; 8] = std::array::from_fn(|t| &x[(bv[t] + p.k0 as isize) as usize..][..len]);
                    match mode {
                        Combine::Product => {
                            let yu: [&[f64]; 8] = std::array::from_fn(|t| &y[(bu[t] + p.k0 as isize) as usize..][..len]);
                            for k in 0..len {
                                let mut a = 0.0;
                                let mut b = 0.0;
                                for t in 0..8 {
                                    a += wv[t] * xv[t][k];
                                    b += wu[t] * yu[t][k];
                                }
                                out_row[k] += p.coef * pre_row[k] * a * b;
                            }
                        }
                        Combine::Sum => {
                            let xu: [&[f64]; 8] = std::array::from_fn(|t| &x[(bu[t] + p.k0 as isize) as usize..][..len]);
                            for k in 0..len {
                                let mut a = 0.0;
                                for t in 0..8 {
                                    a += wv[t] * xv[t][k] + wu[t] * xu[t][k];
                                }
                                out_row[k] += p.coef * pre_row[k] * a;
                            }
                        }
                        Combine::Cross => {
                            let xu: [&[f64]; 8] = std::array::from_fn(|t| &x[(bu[t] + p.k0 as isize) as usize..][..len]);
                            let yv: [&[f64]; 8] = std::array::from_fn(|t| &y[(bv[t] + p.k0 as isize) as usize..][..len]);
                            let yu: [&[f64]; 8] = std::array::from_fn(|t| &y[(bu[t] + p.k0 as isize) as usize..][..len]);
                            for k in 0..len {
                                let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                                for t in 0..8 {
                                    a += wv[t] * xv[t][k];
                                    b += wu[t] * yu[t][k];
                                    c += wv[t] * yv[t][k];
                                    d += wu[t] * xu[t][k];
                                }
                                out_row[k] += p.coef * pre_row[k] * (a * b + c * d);
                            }
                        }
                    }
                }
            });
        });
        out
    }

    /// Contribution of the degenerate pair u = v, which only survives for γ = 0.
    fn degenerate_weight(&self) -> f64 {
        if self.params.gamma == 0.0 {
            HEMISPHERE * self.params.angular.mean() * self.grid.weight
        } else {
            0.0
        }
    }

    /// Q⁺(F1, F2) at every node with F1, F2 trilinearly interpolated.
    pub fn gain(&self, f1: &[f64], f2: &[f64]) -> Vec<f64> {
        let ones = vec![1.0; self.len()];
        let mut out = self.sweep(&self.pad(f1), &self.pad(f2), &ones, Combine::Product);
        let d = self.degenerate_weight();
        if d > 0.0 {
            for (o, (a, b)) in out.iter_mut().zip(f1.iter().zip(f2)) {
                *o += d * a * b;
            }
        }
        out
    }

    /// Q⁺(F, F) interpolating the ratio G = F/μ instead of F itself:
    /// F(v′)F(u′) = μ(v)μ(u)G(v′)G(u′) by detailed balance, so μ is an
    /// exact discrete fixed point.
    pub fn gain_balanced(&self, f: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = f.iter().zip(&self.mu).map(|(a, m)| a / m).collect();
        let gp = self.pad(&g);
        let mut out = self.sweep(&gp, &gp, &self.mu, Combine::Product);
        let d = self.degenerate_weight();
        for (idx, o) in out.iter_mut().enumerate() {
            *o += d * self.mu[idx] * g[idx] * g[idx];
            *o *= self.mu[idx];
        }
        out
    }

    /// Balanced Q⁺(F, F) together with the loss rate restricted to the same
    /// box-truncated (u, ω) pairs. With this pairing Q⁺(μ, μ) = R(μ)μ holds
    /// node by node, so μ is an exact fixed point of any stepper using both.
    pub fn gain_loss_balanced(&self, f: &[f64]) -> CollisionParts {
        let n = self.grid.n;
        let m = n + 2;
        let g: Vec<f64> = f.iter().zip(&self.mu).map(|(a, mu)| a / mu).collect();
        let gp = self.pad(&g);
        let mut gain = vec![0.0; self.len()];
        let mut loss = vec![0.0; self.len()];
        gain.par_chunks_mut(n * n).zip(loss.par_chunks_mut(n * n)).enumerate().for_each(|(i, (gs, ls))| {
            self.passes_for_slab(i, |p| {
                let len = p.k1 - p.k0;
                for j in p.j0..p.j1 {
                    let uy = (j as isize - p.b) as usize;
                    let u0 = (p.ux * n + uy) * n + (p.k0 as isize - p.c) as usize;
                    let mu_row = &self.mu[u0..][..len];
                    let f_row = &f[u0..][..len];
                    let (bv, wv) = p.vp.bases(j, m);
                    let (bu, wu) = p.up.bases(j, m);
                    let xv: [&[f64]; 8] = std::array::from_fn(|t| &gp[(bv[t] + p.k0 as isize) as usize..][..len]);
                    let xu: [&[f64]; 8] = std::array::from_fn(|t| &gp[(bu[t] + p.k0 as isize) as usize..][..len]);
                    let g_row = &mut gs[j * n + p.k0..][..len];
                    let l_row = &mut ls[j * n + p.k0..][..len];
                    for k in 0..len {
                        let mut a = 0.0;
                        let mut b = 0.0;
                        for t in 0..8 {
                            a += wv[t] * xv[t][k];
                            b += wu[t] * xu[t][k];
                        }
                        g_row[k] += p.coef * mu_row[k] * a * b;
                        l_row[k] += p.coef * f_row[k];
                    }
                }
            });
        });
        self.finish_parts(f, &g, gain, loss)
    }

    /// [`Self::gain_loss_balanced`] for many fields at once (one per spatial
    /// cell). Fields are interleaved node-major so the inner loop runs over
    /// cells and vectorizes.
    pub fn gain_loss_balanced_batch(&self, fields: &[Vec<f64>]) -> Vec<CollisionParts> {
        let nc = fields.len();
        if nc == 0 {
            return Vec::new();
        }
        let n = self.grid.n;
        let m = n + 2;
        let mut gp = vec![0.0; m * m * m * nc];
        let mut fi = vec![0.0; self.len() * nc];
        let ratios: Vec<Vec<f64>> =
            fields.iter().map(|f| f.iter().zip(&self.mu).map(|(a, mu)| a / mu).collect()).collect();
        for (c, (f, g)) in fields.iter().zip(&ratios).enumerate() {
            for (p, val) in self.pad(g).into_iter().enumerate() {
                gp[p * nc + c] = val;
            }
            for (idx, val) in f.iter().enumerate() {
                fi[idx * nc + c] = *val;
            }
        }
        let mut gain = vec![0.0; self.len() * nc];
        let mut loss = vec![0.0; self.len() * nc];
        gain.par_chunks_mut(n * n * nc).zip(loss.par_chunks_mut(n * n * nc)).enumerate().for_each(|(i, (gs, ls))| {
            let mut a = vec![0.0; nc];
            let mut b = vec![0.0; nc];
            self.passes_for_slab(i, |p| {
                for j in p.j0..p.j1 {
                    let uy = (j as isize - p.b) as usize;
                    let (bv, wv) = p.vp.bases(j, m);
                    let (bu, wu) = p.up.bases(j, m);
                    for k in p.k0..p.k1 {
                        let u = (p.ux * n + uy) * n + (k as isize - p.c) as usize;
                        let scale = p.coef * self.mu[u];
                        a.fill(0.0);
                        b.fill(0.0);
                        for t in 0..8 {
                            let xv = &gp[(bv[t] + k as isize) as usize * nc..][..nc];
                            let xu = &gp[(bu[t] + k as isize) as usize * nc..][..nc];
                            for c in 0..nc {
                                a[c] += wv[t] * xv[c];
                                b[c] += wu[t] * xu[c];
                            }
                        }
                        let at = (j * n + k) * nc;
                        let go = &mut gs[at..][..nc];
                        for c in 0..nc {
                            go[c] += scale * a[c] * b[c];
                        }
                        let fu = &fi[u * nc..][..nc];
                        let lo = &mut ls[at..][..nc];
                        for c in 0..nc {
                            lo[c] += p.coef * fu[c];
                        }
                    }
                }
            });
        });
        (0..nc)
            .map(|c| {
                let pick = |v: &[f64]| (0..self.len()).map(|idx| v[idx * nc + c]).collect();
                self.finish_parts(&fields[c], &ratios[c], pick(&gain), pick(&loss))
            })
            .collect()
    }

    fn finish_parts(&self, f: &[f64], g: &[f64], mut gain: Vec<f64>, mut loss: Vec<f64>) -> CollisionParts {
        let d = self.degenerate_weight();
        for idx in 0..self.len() {
            let mu = self.mu[idx];
            gain[idx] = (gain[idx] + d * mu * g[idx] * g[idx]) * mu;
            loss[idx] += d * f[idx];
        }
        CollisionParts { gain, loss_rate: loss }
    }

    /// Q⁻(F1, F2) = F1(v)·loss_rate(F2)(v).
    pub fn loss(&self, f1: &[f64], f2: &[f64]) -> Vec<f64> {
        let r = self.loss_rate(f2);
        f1.iter().zip(&r).map(|(a, b)| a * b).collect()
    }

    /// Q(F1, F2) = Q⁺ − Q⁻ at every node.
    pub fn collide(&self, f1: &[f64], f2: &[f64]) -> Vec<f64> {
        let g = self.gain(f1, f2);
        let l = self.loss(f1, f2);
        g.iter().zip(&l).map(|(a, b)| a - b).collect()
    }

    /// Γ⁺(f1, f2)(v) = Σ B μ^{1/2}(u) f1(v′) f2(u′); equal to
    /// μ^{−1/2}Q⁺(μ^{1/2}f1, μ^{1/2}f2) because μ(v′)μ(u′) = μ(v)μ(u).
    pub fn gamma_plus(&self, f1: &[f64], f2: &[f64]) -> Vec<f64> {
        let mut out = self.sweep(&self.pad(f1), &self.pad(f2), &self.mu_sqrt, Combine::Product);
        let d = self.degenerate_weight();
        if d > 0.0 {
            for idx in 0..out.len() {
                out[idx] += d * self.mu_sqrt[idx] * f1[idx] * f2[idx];
            }
        }
        out
    }

    /// Γ⁻(f1, f2)(v) = f1(v) ∫∫ B μ^{1/2}(u) f2(u).
    pub fn gamma_minus(&self, f1: &[f64], f2: &[f64]) -> Vec<f64> {
        let m: Vec<f64> = f2.iter().zip(&self.mu_sqrt).map(|(a, b)| a * b).collect();
        let r = self.loss_rate(&m);
        f1.iter().zip(&r).map(|(a, b)| a * b).collect()
    }

    /// R(f) = ∫∫ B [μ(u) + μ^{1/2}(u) f(u)] = ν + loss rate of μ^{1/2}f.
    pub fn r_of_f(&self, f: &[f64]) -> Vec<f64> {
        let m: Vec<f64> = f.iter().zip(&self.mu_sqrt).map(|(a, b)| a * b).collect();
        let r = self.loss_rate(&m);
        r.iter().zip(&self.nu).map(|(a, b)| a + b).collect()
    }

    /// K₁f(v) = μ^{1/2}(v) ∫∫ B μ^{1/2}(u) f(u).
    pub fn apply_k1(&self, f: &[f64]) -> Vec<f64> {
        let m: Vec<f64> = f.iter().zip(&self.mu_sqrt).map(|(a, b)| a * b).collect();
        let r = self.loss_rate(&m);
        r.iter().zip(&self.mu_sqrt).map(|(a, b)| a * b).collect()
    }

    /// K₂f(v) = ∫∫ B μ^{1/2}(u)[μ^{1/2}(u′) f(v′) + μ^{1/2}(v′) f(u′)],
    /// with f and μ^{1/2} both interpolated.
    pub fn apply_k2(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.sweep(&self.pad(f), &self.mu_sqrt_padded, &self.mu_sqrt, Combine::Cross);
        let d = self.degenerate_weight();
        if d > 0.0 {
            for idx in 0..out.len() {
                out[idx] += 2.0 * d * self.mu[idx] * f[idx];
            }
        }
        out
    }

    /// K₂ with the ratio f/μ^{1/2} interpolated:
    /// K₂f(v) = μ^{1/2}(v) ∫∫ B μ(u)[g(v′) + g(u′)], g = f/μ^{1/2}.
    /// Exact on the mass and momentum invariants. As in every sweep, a pair
    /// contributes only if both v′ and u′ stay inside the box.
    pub fn apply_k2_balanced(&self, f: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = f.iter().zip(&self.mu_sqrt).map(|(a, b)| a / b).collect();
        let mut out = self.sweep(&self.pad(&g), &[], &self.mu, Combine::Sum);
        let d = self.degenerate_weight();
        for idx in 0..out.len() {
            out[idx] += 2.0 * d * self.mu[idx] * g[idx];
            out[idx] *= self.mu_sqrt[idx];
        }
        out
    }

    /// Kf with the sign fixed by Lf = −μ^{−1/2}{Q(μ, μ^{1/2}f) + Q(μ^{1/2}f, μ)}
    /// and L = ν − K, i.e. K = K₂ − K₁ for the K₁, K₂ above.
    pub fn apply_k(&self, f: &[f64]) -> Vec<f64> {
        let k1 = self.apply_k1(f);
        let k2 = self.apply_k2_balanced(f);
        k2.iter().zip(&k1).map(|(a, b)| a - b).collect()
    }

    pub fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        let k = self.apply_k(f);
        f.iter().zip(&self.nu).zip(&k).map(|((x, n), kk)| n * x - kk).collect()
    }

    /// (Lf, f)_{L²_v}
    pub fn coercivity_quadratic_form(&self, f: &[f64]) -> f64 {
        let l = self.apply_l(f);
        l.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * self.grid.weight
    }

    /// Q⁺(F1, F2) at an arbitrary velocity (direct interpolation).
    pub fn gain_at(&self, f1: &[f64], f2: &[f64], v: &Vec3) -> f64 {
        self.gain_like_at(v, |_| 1.0, f1, f2)
    }

    fn gain_like_at(&self, v: &Vec3, pre: impl Fn(usize) -> f64, f1: &[f64], f2: &[f64]) -> f64 {
        let reps = self.sphere.reps();
        let wts = self.sphere.rep_weights();
        let mut total = 0.0;
        for u_idx in 0..self.len() {
            let p = pre(u_idx);
            if p == 0.0 {
                continue;
            }
            let u = self.grid.node(u_idx);
            let g = v - u;
            let gn = g.norm();
            if gn < DEGENERATE_SPEED {
                if self.params.gamma == 0.0 {
                    let a = self.grid.interpolate(f1, v);
                    let b = self.grid.interpolate(f2, v);
                    total += HEMISPHERE * self.params.angular.mean() * p * a * b;
                }
                continue;
            }
            let speed = self.params.kernel_speed(gn);
            let center = (v + u) * 0.5;
            let frame = self.frame_near(&g);
            let mut s = 0.0;
            for r in 0..reps.len() {
                let w = frame * reps[r];
                let w = if w.dot(&g) < 0.0 { -w } else { w };
                let cos = (w.dot(&g) / gn).clamp(0.0, 1.0);
                let vp = center + w * (0.5 * gn);
                let up = center - w * (0.5 * gn);
                let a = self.grid.interpolate(f1, &vp);
                if a == 0.0 {
                    continue;
                }
                s += wts[r] * self.params.angular.eval(cos) * a * self.grid.interpolate(f2, &up);
            }
            total += p * speed * s;
        }
        total * self.grid.weight
    }

    /// Q⁻(F1, F2) at an arbitrary velocity.
    pub fn loss_at(&self, f1: &[f64], f2: &[f64], v: &Vec3) -> f64 {
        self.grid.interpolate(f1, v) * self.loss_rate_at(f2, v)
    }

    /// Γ⁺(f1, f2) at an arbitrary velocity.
    pub fn gamma_plus_at(&self, f1: &[f64], f2: &[f64], v: &Vec3) -> f64 {
        self.gain_like_at(v, |u| self.mu_sqrt[u], f1, f2)
    }

    /// ν at an arbitrary velocity.
    pub fn nu_at(&self, v: &Vec3) -> f64 {
        self.loss_rate_at(&self.mu, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{AngularFactor, MAXWELLIAN_PEAK};
    use std::f64::consts::PI;

    fn op(n: usize, v_cut: f64, np: usize, gamma: f64) -> CollisionOperator {
        let params = CollisionParams { gamma, v_cut, ..CollisionParams::default() };
        CollisionOperator::new(VelocityGrid::new(v_cut, n).unwrap(), SphereQuadrature::new(np).unwrap(), params).unwrap()
    }

    #[test]
    fn nu_for_maxwell_molecules_is_hemisphere_area() {
        let c = op(16, 6.0, 2, 0.0);
        for &nu in c.nu() {
            assert!((nu - 2.0 * PI).abs() < 1e-6, "{nu}");
        }
    }

    #[test]
    fn nu_hard_sphere_at_origin() {
        let c = op(24, 6.0, 2, 1.0);
        let nu0 = c.nu_at(&Vec3::zeros());
        let exact = 2.0 * PI * 2.0 * (2.0 / PI).sqrt();
        assert!((nu0 - exact).abs() < 5e-3, "{nu0} vs {exact}");
        assert!((exact - 10.0265).abs() < 1e-4);
    }

    #[test]
    fn sweep_matches_pointwise_gain() {
        let c = op(8, 4.0, 2, 0.6);
        let f1 = c.grid.tabulate(|v| (-(v - Vec3::new(0.5, 0.0, -0.3)).norm_squared() / 1.5).exp());
        let f2 = c.grid.tabulate(|v| (-(v.norm_squared()) / 2.5).exp() * (1.0 + 0.2 * v[1]));
        let full = c.gain(&f1, &f2);
        for idx in [0, 37, 200, 311, 511] {
            let v = c.grid.node(idx);
            let pt = c.gain_at(&f1, &f2, &v);
            assert!((full[idx] - pt).abs() <= 1e-12 * (1.0 + pt.abs()), "{idx}: {} vs {pt}", full[idx]);
        }
        let gp = c.gamma_plus(&f1, &f2);
        let v = c.grid.node(300);
        assert!((gp[300] - c.gamma_plus_at(&f1, &f2, &v)).abs() < 1e-12 * (1.0 + gp[300].abs()));
    }

    #[test]
    fn sweep_matches_pointwise_for_table_kernel_and_gamma_zero() {
        let params = CollisionParams {
            gamma: 0.0,
            angular: AngularFactor::Table(vec![0.2, 0.9, 0.5]),
            v_cut: 3.0,
            ..CollisionParams::default()
        };
        let c = CollisionOperator::new(VelocityGrid::new(3.0, 6).unwrap(), SphereQuadrature::new(3).unwrap(), params).unwrap();
        let f = c.grid.tabulate(|v| (-v.norm_squared() / 2.0).exp());
        let full = c.gain(&f, &f);
        let loss = c.loss(&f, &f);
        for idx in [0, 50, 107, 215] {
            let v = c.grid.node(idx);
            let pt = c.gain_at(&f, &f, &v);
            assert!((full[idx] - pt).abs() < 1e-12, "{idx}: {} vs {pt}", full[idx]);
            assert!((loss[idx] - c.loss_at(&f, &f, &v)).abs() < 1e-12);
        }
    }

    #[test]
    fn consistent_loss_makes_maxwellian_exact_everywhere() {
        for gamma in [0.0, 1.0] {
            let c = op(8, 4.0, 2, gamma);
            let parts = c.gain_loss_balanced(c.mu());
            for idx in 0..c.len() {
                let want = parts.loss_rate[idx] * c.mu()[idx];
                assert!((parts.gain[idx] - want).abs() <= 1e-12 * want, "{idx}");
                assert!(parts.loss_rate[idx] <= c.nu()[idx] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn batch_matches_single_field() {
        let c = op(6, 3.0, 2, 0.7);
        let fields: Vec<Vec<f64>> = (0..3)
            .map(|s| c.grid.tabulate(|v| (-(v - Vec3::new(0.3 * s as f64, 0.0, -0.2)).norm_squared() / 2.0).exp()))
            .collect();
        let batch = c.gain_loss_balanced_batch(&fields);
        for (f, b) in fields.iter().zip(&batch) {
            let one = c.gain_loss_balanced(f);
            for idx in 0..c.len() {
                assert!((one.gain[idx] - b.gain[idx]).abs() <= 1e-14 * (1.0 + one.gain[idx].abs()));
                assert!((one.loss_rate[idx] - b.loss_rate[idx]).abs() <= 1e-14 * (1.0 + one.loss_rate[idx]));
            }
            let g = c.gain_balanced(f);
            assert!(g.iter().zip(&one.gain).all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + a.abs())));
        }
    }

    #[test]
    fn loss_of_maxwellian_is_nu_mu() {
        let c = op(12, 5.0, 2, 1.0);
        let q = c.loss(c.mu(), c.mu());
        for idx in 0..c.len() {
            let want = c.nu()[idx] * c.mu()[idx];
            assert!((q[idx] - want).abs() <= 1e-12 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn balanced_gain_preserves_maxwellian_in_the_core() {
        // only collisions throwing v′ or u′ out of the box break the balance
        let c = op(12, 6.0, 2, 1.0);
        let g = c.gain_balanced(c.mu());
        for idx in 0..c.len() {
            if c.grid.node(idx).norm() > 2.5 {
                continue;
            }
            let l = c.nu()[idx] * c.mu()[idx];
            assert!((g[idx] - l).abs() <= 1e-6 * l, "{} {}", g[idx], l);
        }
    }

    #[test]
    fn gamma_terms_vanish_at_zero_and_match_nu_at_sqrt_mu() {
        let c = op(10, 5.0, 2, 0.5);
        let z = vec![0.0; c.len()];
        assert!(c.gamma_plus(&z, &z).iter().all(|x| *x == 0.0));
        assert!(c.gamma_minus(&z, &z).iter().all(|x| *x == 0.0));
        let gm = c.gamma_minus(c.mu_sqrt(), c.mu_sqrt());
        for idx in 0..c.len() {
            let want = c.mu_sqrt()[idx] * c.nu()[idx];
            assert!((gm[idx] - want).abs() <= 1e-12 * want);
        }
        let r = c.r_of_f(&z);
        assert_eq!(r, c.nu().to_vec());
    }

    #[test]
    fn linearized_operator_kills_mass_and_momentum_in_the_core() {
        let c = op(12, 6.0, 2, 1.0);
        let m = c.mu_sqrt().to_vec();
        let p: Vec<f64> = (0..c.len()).map(|i| c.grid.node(i)[1] * m[i]).collect();
        let lm = c.apply_l(&m);
        let lp = c.apply_l(&p);
        for idx in 0..c.len() {
            if c.grid.node(idx).norm() > 2.5 {
                continue;
            }
            let scale = c.nu()[idx] * m[idx];
            assert!(lm[idx].abs() < 1e-6 * scale);
            assert!(lp[idx].abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn quadratic_form_scales_quadratically() {
        let c = op(8, 4.0, 2, 1.0);
        let f = c.grid.tabulate(|v| (v[0] * v[1] - 0.3) * (-v.norm_squared() / 4.0).exp());
        let q1 = c.coercivity_quadratic_form(&f);
        let f3: Vec<f64> = f.iter().map(|x| 3.0 * x).collect();
        let q3 = c.coercivity_quadratic_form(&f3);
        assert!((q3 - 9.0 * q1).abs() <= 1e-12 * q3.abs());
        assert!(q1 > 0.0);
    }

    #[test]
    fn peak_constant() {
        assert!((MAXWELLIAN_PEAK - (2.0 * PI).powf(-1.5)).abs() < 1e-17);
    }
}
