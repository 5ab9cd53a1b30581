//! Diffuse reflection: the wall measure dσ = c_μ μ(v)(n·v) dv, its sampler,
//! the boundary projection, and back-time cycles.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::collision::VelocityGrid;
use crate::error::KineticError;
use crate::geometry::{LevelSetDomain, GRAZING_TOL};
use crate::kinematics::{maxwellian, maxwellian_sqrt, Vec3};
use crate::quadrature::{gauss_hermite_prob, gauss_laguerre};

/// Rejections of grazing draws before a cycle is declared degenerate.
pub const GRAZING_RETRIES: usize = 100;

/// c_μ = √(2π): the reciprocal of the outgoing flux of μ through a unit face.
pub fn c_mu() -> f64 {
    (2.0 * PI).sqrt()
}

/// Orthonormal tangent pair for `n`, seeded from the coordinate axis least
/// parallel to it.
pub fn local_frame(n: &Vec3) -> (Vec3, Vec3) {
    let axis = (0..3).min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap_or(0);
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let t1 = (e - n * n.dot(&e)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// ∫_{n·v>0} μ(v)(n·v) dv by a product rule in the frame of `n`:
/// Gauss–Hermite on both tangential axes, Gauss–Laguerre in x = s²/2 on the
/// normal speed s. The integrand is evaluated at the rotated points, so a
/// wrong frame or weight shows up as an error.
pub fn outgoing_flux_quadrature(n: &Vec3, order: usize) -> f64 {
    let n = n.normalize();
    let (t1, t2) = local_frame(&n);
    let gh = gauss_hermite_prob(order);
    let gl = gauss_laguerre(order);
    let mut sum = 0.0;
    for (a, wa) in gh.nodes.iter().zip(&gh.weights) {
        for (b, wb) in gh.nodes.iter().zip(&gh.weights) {
            for (x, wx) in gl.nodes.iter().zip(&gl.weights) {
                let s = (2.0 * x).sqrt();
                let v = n * s + t1 * *a + t2 * *b;
                // strip the rule weights e^{−a²/2} e^{−b²/2} e^{−x} and the Jacobian s ds = dx
                let density = (0.5 * (a * a + b * b) + x).exp() / s;
                sum += wa * wb * wx * maxwellian(&v) * n.dot(&v) * density;
            }
        }
    }
    sum
}

/// c_μ recovered from the flux quadrature.
pub fn c_mu_quadrature(n: &Vec3, order: usize) -> f64 {
    1.0 / outgoing_flux_quadrature(n, order)
}

/// Draw v with density c_μ μ(v)(n·v) on {n·v > 0}: Gaussian tangential
/// components, Rayleigh normal speed. Draws inside the grazing band are
/// redrawn.
pub fn sample_diffuse<R: Rng + ?Sized>(n: &Vec3, rng: &mut R) -> Result<Vec3, KineticError> {
    let (t1, t2) = local_frame(n);
    for _ in 0..GRAZING_RETRIES {
        let u: f64 = rng.random();
        let s = (-2.0 * (1.0 - u).ln()).sqrt();
        if s < GRAZING_TOL {
            continue;
        }
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        return Ok(n * s + t1 * a + t2 * b);
    }
    Err(KineticError::DegenerateCycle(GRAZING_RETRIES))
}

/// The boundary projection P_γ on grid data at a wall point with normal `n`.
///
/// The normalization is the reciprocal of the discrete outgoing flux of μ
/// on the grid rather than √(2π), which makes P_γ an exact projection on
/// grid functions and the discrete diffuse wall exactly mass-neutral.
#[derive(Debug, Clone)]
pub struct BoundaryProjection {
    pub normal: Vec3,
    /// Discrete c_μ.
    pub norm_const: f64,
    /// μ^{1/2}(v)(n·v)·weight on outgoing nodes, 0 elsewhere.
    flux_weights: Vec<f64>,
    mu_sqrt: Vec<f64>,
}

impl BoundaryProjection {
    pub fn new(grid: &VelocityGrid, n: &Vec3) -> Self {
        let n = n.normalize();
        let mu_sqrt = grid.tabulate(maxwellian_sqrt);
        let flux_weights: Vec<f64> = (0..grid.len())
            .map(|i| {
                let vn = n.dot(&grid.node(i));
                if vn > 0.0 {
                    mu_sqrt[i] * vn * grid.weight
                } else {
                    0.0
                }
            })
            .collect();
        let flux: f64 = flux_weights.iter().zip(&mu_sqrt).map(|(a, b)| a * b).sum();
        BoundaryProjection { normal: n, norm_const: 1.0 / flux, flux_weights, mu_sqrt }
    }

    /// c ∫_{n·v′>0} f(v′) μ^{1/2}(v′)(n·v′) dv′
    pub fn coefficient(&self, f: &[f64]) -> f64 {
        self.norm_const * f.iter().zip(&self.flux_weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let c = self.coefficient(f);
        self.mu_sqrt.iter().map(|m| c * m).collect()
    }
}

/// P_γ f at a wall point with normal `n` (grid-normalized).
pub fn boundary_projection_pgamma(grid: &VelocityGrid, f: &[f64], n: &Vec3) -> Vec<f64> {
    BoundaryProjection::new(grid, n).apply(f)
}

/// One anchor (t_j, x_j, v_j) of a back-time cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackCycle {
    /// (t, x, v) followed by one anchor per wall bounce.
    pub anchors: Vec<Anchor>,
    /// Time and wall point where the last flight ends.
    pub terminal_t: f64,
    pub terminal_x: Vec3,
    pub reached_initial: bool,
    /// Number of resampled bounces.
    pub k_used: usize,
}

impl BackCycle {
    /// Replays flights forward; returns the worst mismatch of
    /// x_{j+1} + (t_j − t_{j+1}) v_j against x_j.
    pub fn replay_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.anchors.windows(2) {
            let back = w[1].x + w[0].v * (w[0].t - w[1].t);
            worst = worst.max((back - w[0].x).norm());
        }
        if let Some(last) = self.anchors.last() {
            let back = self.terminal_x + last.v * (last.t - self.terminal_t);
            worst = worst.max((back - last.x).norm());
        }
        worst
    }
}

/// Follows the backward characteristic from (t, x, v), redrawing the
/// velocity from dσ at every wall hit, until the clock passes `s` or
/// `k_max` bounces have been used.
pub fn trace_back_cycle<R: Rng + ?Sized>(
    dom: &LevelSetDomain,
    x: &Vec3,
    v: &Vec3,
    t: f64,
    s: f64,
    k_max: usize,
    rng: &mut R,
) -> Result<BackCycle, KineticError> {
    if !(s < t) {
        return Err(KineticError::InvalidParams(format!("cycle needs s < t (got s={s}, t={t})")));
    }
    let mut anchors = vec![Anchor { t, x: *x, v: *v }];
    let interior = dom.xi(x) < 0.0;
    loop {
        let cur = *anchors.last().expect("non-empty");
        let (tb, xb) = if anchors.len() == 1 && interior {
            dom.backward_exit(&cur.x, &cur.v)?
        } else {
            dom.backward_exit_from_boundary(&cur.x, &cur.v)?
        };
        let t_next = cur.t - tb;
        let bounces = anchors.len() - 1;
        if t_next <= s || bounces == k_max {
            return Ok(BackCycle {
                anchors,
                terminal_t: t_next,
                terminal_x: xb,
                reached_initial: t_next <= s,
                k_used: bounces,
            });
        }
        let n = dom.outward_normal(&xb)?;
        let v_next = sample_diffuse(&n, rng)?;
        anchors.push(Anchor { t: t_next, x: xb, v: v_next });
    }
}

/// Monte-Carlo estimate of the probability that a cycle from (t, x, v) is
/// still above time 0 after k flights, with its binomial standard error.
pub fn estimate_nonreach_probability<R: Rng + ?Sized>(
    dom: &LevelSetDomain,
    x: &Vec3,
    v: &Vec3,
    t: f64,
    k: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), KineticError> {
    if k == 0 {
        return Err(KineticError::InvalidParams("k must be at least 1".into()));
    }
    if n_samples < 100 {
        return Err(KineticError::TooFewSamples { need: 100, got: n_samples });
    }
    if t <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let c = trace_back_cycle(dom, x, v, t, 0.0, k - 1, rng)?;
        if !c.reached_initial {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    Ok((p, (p * (1.0 - p) / n_samples as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn c_mu_closed_form_and_quadrature() {
        assert!((c_mu() - 2.506_628_274_631).abs() < 1e-9);
        for n in [Vec3::x(), Vec3::z(), Vec3::new(1.0, -2.0, 0.5)] {
            assert!((c_mu_quadrature(&n, 12) - c_mu()).abs() < 1e-10);
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        for n in [Vec3::x(), Vec3::new(0.3, 0.3, -0.9).normalize()] {
            let (a, b) = local_frame(&n);
            assert!(a.dot(&n).abs() < 1e-14 && b.dot(&n).abs() < 1e-14 && a.dot(&b).abs() < 1e-14);
            assert!((a.norm() - 1.0).abs() < 1e-14 && (b.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diffuse_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = Vec3::new(0.0, 0.6, 0.8);
        let m = 200_000;
        let (mut s1, mut s2, mut tang) = (0.0, 0.0, 0.0);
        for _ in 0..m {
            let v = sample_diffuse(&n, &mut rng).unwrap();
            let vn = n.dot(&v);
            assert!(vn > 0.0);
            s1 += vn;
            s2 += vn * vn;
            tang += v[0];
        }
        let m = m as f64;
        let mean = s1 / m;
        let sd = ((2.0 - PI / 2.0) / m).sqrt();
        assert!((mean - (PI / 2.0).sqrt()).abs() < 4.0 * sd);
        assert!((s2 / m - 2.0).abs() < 0.03);
        assert!((tang / m).abs() < 4.0 / m.sqrt());
    }

    #[test]
    fn pgamma_fixes_sqrt_mu_and_is_idempotent() {
        let grid = VelocityGrid::new(5.0, 12).unwrap();
        let n = Vec3::new(1.0, 1.0, 0.0).normalize();
        let p = BoundaryProjection::new(&grid, &n);
        let ms = grid.tabulate(maxwellian_sqrt);
        let pm = p.apply(&ms);
        assert!(pm.iter().zip(&ms).all(|(a, b)| (a - b).abs() < 1e-14));
        let f = grid.tabulate(|v| (v[0] - v[2] * v[1]).sin() * (-v.norm_squared() / 6.0).exp());
        let once = p.apply(&f);
        let twice = p.apply(&once);
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(p.apply(&vec![0.0; grid.len()]).iter().all(|x| *x == 0.0));
        assert!((p.norm_const - c_mu()).abs() / c_mu() < 0.05);
    }

    #[test]
    fn pgamma_of_flux_weighted_sqrt_mu() {
        let grid = VelocityGrid::new(6.0, 24).unwrap();
        let n = Vec3::z();
        let f = grid.tabulate(|v| v[2].max(0.0) * maxwellian_sqrt(v));
        let pf = boundary_projection_pgamma(&grid, &f, &n);
        let ratio = pf[0] / maxwellian_sqrt(&grid.node(0));
        assert!((ratio - (PI / 2.0).sqrt()).abs() < 2e-2, "{ratio}");
    }

    #[test]
    fn cycle_examples() {
        let dom = LevelSetDomain::unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = trace_back_cycle(&dom, &Vec3::zeros(), &Vec3::new(2.0, 0.0, 0.0), 10.0, 9.9, 8, &mut rng).unwrap();
        assert!(c.reached_initial);
        assert_eq!(c.anchors.len(), 1);
        assert!((c.terminal_t - 9.5).abs() < 1e-12);
        let c0 = trace_back_cycle(&dom, &Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0), 10.0, 0.0, 0, &mut rng).unwrap();
        assert_eq!(c0.anchors.len(), 1);
        assert!(!c0.reached_initial);
    }

    #[test]
    fn cycles_replay_and_decrease() {
        let dom = LevelSetDomain::unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.2);
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            let c = trace_back_cycle(&dom, &x, &v, 5.0, 0.0, 20, &mut rng).unwrap();
            assert!(c.replay_defect() < 1e-9);
            for w in c.anchors.windows(2) {
                assert!(w[1].t < w[0].t);
                assert!(dom.xi(&w[1].x).abs() < 1e-8);
                assert!(dom.outward_normal(&w[1].x).unwrap().dot(&w[1].v) > 0.0);
            }
        }
    }

    #[test]
    fn nonreach_limits() {
        let dom = LevelSetDomain::unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = Vec3::new(1.0, 0.0, 0.0);
        let (p, se) = estimate_nonreach_probability(&dom, &Vec3::zeros(), &v, 1e-9, 3, 200, &mut rng).unwrap();
        assert_eq!((p, se), (0.0, 0.0));
        assert!(estimate_nonreach_probability(&dom, &Vec3::zeros(), &v, 1.0, 3, 10, &mut rng).is_err());
    }
}
