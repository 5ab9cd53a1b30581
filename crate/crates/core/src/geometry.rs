//! Level-set domains Ω = {ξ < 0}: normals, exit times, boundary classes.

use crate::error::KineticError;
use crate::kinematics::Vec3;

/// Band on n·v treated as grazing.
pub const GRAZING_TOL: f64 = 1e-10;
/// Tolerance on |ξ| for a point to count as lying on ∂Ω.
pub const ON_BOUNDARY_TOL: f64 = 1e-8;
const ROOT_TOL: f64 = 1e-12;
const MARCH_STEPS: usize = 256;
const BBOX_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    /// n·v > 0
    Outgoing,
    Grazing,
    /// n·v < 0
    Incoming,
}

/// Level-set values on a regular lattice, trilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
    /// x-fastest layout: index = i + dims[0]*(j + dims[1]*k)
    pub values: Vec<f64>,
}

impl SampledField {
    /// Samples `xi` on the lattice covering [lo, hi]³ with `n` points per axis.
    pub fn from_fn(lo: f64, hi: f64, n: usize, xi: impl Fn(&Vec3) -> f64) -> Self {
        let spacing = (hi - lo) / (n - 1) as f64;
        let mut values = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = Vec3::new(lo + i as f64 * spacing, lo + j as f64 * spacing, lo + k as f64 * spacing);
                    values.push(xi(&x));
                }
            }
        }
        SampledField { origin: Vec3::new(lo, lo, lo), spacing, dims: [n, n, n], values }
    }

    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = ((x[a] - self.origin[a]) / self.spacing).clamp(0.0, (self.dims[a] - 1) as f64);
            let i = (s.floor() as usize).min(self.dims[a] - 2);
            idx[a] = i;
            frac[a] = s - i as f64;
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let c00 = self.at(i, j, k) * (1.0 - fx) + self.at(i + 1, j, k) * fx;
        let c10 = self.at(i, j + 1, k) * (1.0 - fx) + self.at(i + 1, j + 1, k) * fx;
        let c01 = self.at(i, j, k + 1) * (1.0 - fx) + self.at(i + 1, j, k + 1) * fx;
        let c11 = self.at(i, j + 1, k + 1) * (1.0 - fx) + self.at(i + 1, j + 1, k + 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    fn extent(&self) -> (Vec3, Vec3) {
        let hi = self.origin
            + Vec3::new(
                (self.dims[0] - 1) as f64 * self.spacing,
                (self.dims[1] - 1) as f64 * self.spacing,
                (self.dims[2] - 1) as f64 * self.spacing,
            );
        (self.origin, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    UnitBall,
    ScaledBall(f64),
    /// Σ |x_i/a_i|^{e_i} − 1 with every e_i ≥ 2 so the boundary is C¹.
    Superellipsoid { semi_axes: [f64; 3], exponents: [f64; 3] },
    Custom(SampledField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetDomain {
    pub kind: DomainKind,
    pub bbox_min: Vec3,
    pub bbox_max: Vec3,
    pub seed: Vec3,
}

impl LevelSetDomain {
    pub fn unit_ball() -> Self {
        Self::ball_like(DomainKind::UnitBall, 1.0)
    }

    pub fn scaled_ball(radius: f64) -> Result<Self, KineticError> {
        if !(radius > 0.0) {
            return Err(KineticError::InvalidParams(format!("ball radius {radius} must be positive")));
        }
        Ok(Self::ball_like(DomainKind::ScaledBall(radius), radius))
    }

    fn ball_like(kind: DomainKind, r: f64) -> Self {
        let m = r + BBOX_MARGIN * r.max(1.0);
        LevelSetDomain { kind, bbox_min: Vec3::repeat(-m), bbox_max: Vec3::repeat(m), seed: Vec3::zeros() }
    }

    pub fn superellipsoid(semi_axes: [f64; 3], exponents: [f64; 3]) -> Result<Self, KineticError> {
        if semi_axes.iter().any(|a| !(*a > 0.0)) || exponents.iter().any(|e| !(*e >= 2.0)) {
            return Err(KineticError::InvalidParams(
                "superellipsoid needs positive semi-axes and exponents >= 2".into(),
            ));
        }
        let a = Vec3::from(semi_axes);
        let m = a + Vec3::repeat(BBOX_MARGIN * a.max().max(1.0));
        Ok(LevelSetDomain {
            kind: DomainKind::Superellipsoid { semi_axes, exponents },
            bbox_min: -m,
            bbox_max: m,
            seed: Vec3::zeros(),
        })
    }

    pub fn custom(field: SampledField, seed: Vec3) -> Result<Self, KineticError> {
        let (lo, hi) = field.extent();
        let d = LevelSetDomain { kind: DomainKind::Custom(field), bbox_min: lo, bbox_max: hi, seed };
        if !(d.xi(&seed) < 0.0) {
            return Err(KineticError::InvalidParams("custom domain seed is not interior".into()));
        }
        Ok(d)
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.kind, DomainKind::UnitBall | DomainKind::ScaledBall(_))
    }

    pub fn radius(&self) -> Option<f64> {
        match self.kind {
            DomainKind::UnitBall => Some(1.0),
            DomainKind::ScaledBall(r) => Some(r),
            _ => None,
        }
    }

    /// Convex kinds allow the segment shortcut in [`Self::exits_within`].
    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, DomainKind::Custom(_))
    }

    pub fn bbox_diameter(&self) -> f64 {
        (self.bbox_max - self.bbox_min).norm()
    }

    /// Smallest width of Ω over axis directions; the CFL reference length.
    pub fn min_width(&self) -> f64 {
        match &self.kind {
            DomainKind::UnitBall => 2.0,
            DomainKind::ScaledBall(r) => 2.0 * r,
            DomainKind::Superellipsoid { semi_axes, .. } => 2.0 * semi_axes.iter().cloned().fold(f64::INFINITY, f64::min),
            DomainKind::Custom(_) => {
                let e = self.bbox_max - self.bbox_min;
                e.min()
            }
        }
    }

    pub fn volume(&self) -> Option<f64> {
        self.radius().map(|r| 4.0 / 3.0 * std::f64::consts::PI * r.powi(3))
    }

    pub fn xi(&self, x: &Vec3) -> f64 {
        match &self.kind {
            DomainKind::UnitBall => x.norm_squared() - 1.0,
            DomainKind::ScaledBall(r) => x.norm_squared() - r * r,
            DomainKind::Superellipsoid { semi_axes, exponents } => {
                (0..3).map(|i| (x[i] / semi_axes[i]).abs().powf(exponents[i])).sum::<f64>() - 1.0
            }
            DomainKind::Custom(f) => f.eval(x),
        }
    }

    pub fn grad_xi(&self, x: &Vec3) -> Vec3 {
        match &self.kind {
            DomainKind::UnitBall | DomainKind::ScaledBall(_) => x * 2.0,
            DomainKind::Superellipsoid { semi_axes, exponents } => Vec3::from_fn(|i, _| {
                let s = x[i] / semi_axes[i];
                exponents[i] * s.abs().powf(exponents[i] - 1.0) * s.signum() / semi_axes[i]
            }),
            DomainKind::Custom(f) => {
                let h = 1e-4 * f.spacing;
                Vec3::from_fn(|i, _| {
                    let mut e = Vec3::zeros();
                    e[i] = h;
                    (f.eval(&(x + e)) - f.eval(&(x - e))) / (2.0 * h)
                })
            }
        }
    }

    pub fn outward_normal(&self, x: &Vec3) -> Result<Vec3, KineticError> {
        let xi = self.xi(x);
        if xi.abs() > ON_BOUNDARY_TOL {
            return Err(KineticError::NotOnBoundary(xi));
        }
        self.normal_unchecked(x)
    }

    /// ∇ξ/|∇ξ| without the on-boundary check.
    pub fn normal_unchecked(&self, x: &Vec3) -> Result<Vec3, KineticError> {
        let g = self.grad_xi(x);
        let n = g.norm();
        if n < 1e-10 {
            return Err(KineticError::VanishingGradient);
        }
        Ok(g / n)
    }

    pub fn classify_boundary(&self, x: &Vec3, v: &Vec3) -> Result<BoundaryClass, KineticError> {
        let s = self.outward_normal(x)?.dot(v);
        Ok(if s > GRAZING_TOL {
            BoundaryClass::Outgoing
        } else if s < -GRAZING_TOL {
            BoundaryClass::Incoming
        } else {
            BoundaryClass::Grazing
        })
    }

    /// Backward exit time t_b(x, v) and point x_b = x − t_b v for interior x.
    pub fn backward_exit(&self, x: &Vec3, v: &Vec3) -> Result<(f64, Vec3), KineticError> {
        if v.norm() <= 1e-12 {
            return Err(KineticError::ZeroVelocity);
        }
        let xi = self.xi(x);
        if !(xi < 0.0) {
            return Err(KineticError::NotInterior(xi));
        }
        match self.radius() {
            Some(r) => Ok(ball_exit(x, v, r)),
            None => self.backward_exit_marching(x, v, false),
        }
    }

    /// Exit time along −v starting from a boundary point with n·v > 0.
    pub fn backward_exit_from_boundary(&self, x: &Vec3, v: &Vec3) -> Result<(f64, Vec3), KineticError> {
        if v.norm() <= 1e-12 {
            return Err(KineticError::ZeroVelocity);
        }
        match self.radius() {
            Some(r) => {
                let t = 2.0 * x.dot(v) / v.norm_squared();
                if !(t > 0.0) {
                    return Err(KineticError::NoExit);
                }
                Ok(snap_to_sphere(&(x - v * t), v, t, r))
            }
            None => self.backward_exit_marching(x, v, true),
        }
    }

    /// Generic bracket-and-bisect exit search used for non-ball kinds; public
    /// so the closed-form ball path can be cross-checked against it.
    pub fn backward_exit_marching(&self, x: &Vec3, v: &Vec3, on_boundary: bool) -> Result<(f64, Vec3), KineticError> {
        let speed = v.norm();
        if speed <= 1e-12 {
            return Err(KineticError::ZeroVelocity);
        }
        let ds = self.bbox_diameter() / (MARCH_STEPS as f64 * speed);
        let s_max = 2.0 * self.bbox_diameter() / speed;
        let mut s_prev = 0.0;
        let mut k = 1usize;
        loop {
            let s = k as f64 * ds;
            if s > s_max {
                return Err(KineticError::NoExit);
            }
            let xi = self.xi(&(x - v * s));
            // from a boundary start the first sample may still read ~0
            let crossed = if on_boundary && k == 1 { xi > ON_BOUNDARY_TOL } else { xi >= 0.0 };
            if crossed {
                let t = self.refine_root(x, v, s_prev, s);
                return Ok((t, x - v * t));
            }
            s_prev = s;
            k += 1;
        }
    }

    fn refine_root(&self, x: &Vec3, v: &Vec3, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let xi = self.xi(&(x - v * mid));
            if xi >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if (hi - lo) <= 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        let mut t = hi;
        let xi = self.xi(&(x - v * t));
        if xi.abs() > ROOT_TOL {
            // one Newton polish, kept only if it stays in the bracket
            let slope = -self.grad_xi(&(x - v * t)).dot(v);
            if slope.abs() > 1e-300 {
                let cand = t - xi / slope;
                if cand >= lo && cand <= hi {
                    t = cand;
                }
            }
        }
        t
    }

    /// Whether the forward ray x + s v leaves Ω for some s ∈ (0, t_max];
    /// returns the forward exit time and point if it does.
    pub fn exits_within(&self, x: &Vec3, v: &Vec3, t_max: f64) -> Result<Option<(f64, Vec3)>, KineticError> {
        if let Some(r) = self.radius() {
            let (t, xb) = ball_exit(x, &-v, r);
            return Ok(if t <= t_max { Some((t, xb)) } else { None });
        }
        if self.is_convex() && self.xi(&(x + v * t_max)) < 0.0 {
            return Ok(None);
        }
        let (t, xb) = self.backward_exit_marching(x, &-v, false)?;
        Ok(if t <= t_max { Some((t, xb)) } else { None })
    }

    /// Newton projection of a nearby point onto {ξ = 0}.
    pub fn project_to_boundary(&self, x: &Vec3) -> Vec3 {
        if let Some(r) = self.radius() {
            let n = x.norm();
            return if n > 0.0 { x * (r / n) } else { Vec3::new(r, 0.0, 0.0) };
        }
        let mut y = *x;
        for _ in 0..50 {
            let xi = self.xi(&y);
            if xi.abs() < ROOT_TOL {
                break;
            }
            let g = self.grad_xi(&y);
            let gg = g.norm_squared();
            if gg < 1e-300 {
                break;
            }
            y -= g * (xi / gg);
        }
        y
    }

    /// Distance along the direction `d` (unit) from the seed to ∂Ω.
    pub fn radial_distance(&self, d: &Vec3) -> Result<f64, KineticError> {
        let (t, _) = self.backward_exit(&self.seed, &-d)?;
        Ok(t)
    }
}

/// Closed-form backward exit from a ball of radius r about the origin.
fn ball_exit(x: &Vec3, v: &Vec3, r: f64) -> (f64, Vec3) {
    // |x − t v|² = r²  ⇒  t = (x·v + sqrt((x·v)² + |v|²(r² − |x|²)))/|v|²
    let vv = v.norm_squared();
    let xv = x.dot(v);
    let c = r * r - x.norm_squared();
    let disc = (xv * xv + vv * c).max(0.0).sqrt();
    // numerically stable root choice
    let t = if xv >= 0.0 { (xv + disc) / vv } else { c / (disc - xv) };
    let xb = x - v * t;
    (t, xb)
}

fn snap_to_sphere(xb: &Vec3, v: &Vec3, t: f64, r: f64) -> (f64, Vec3) {
    // one Newton step in t on |x_b − δ v|² = r²
    let xi = xb.norm_squared() - r * r;
    let slope = -2.0 * xb.dot(v);
    if slope.abs() > 1e-300 && xi.abs() > 0.0 {
        let d = -xi / slope;
        (t + d, xb - v * d)
    } else {
        (t, *xb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normals() {
        let b = LevelSetDomain::unit_ball();
        assert!((b.outward_normal(&Vec3::x()).unwrap() - Vec3::x()).norm() < 1e-15);
        assert!((b.outward_normal(&Vec3::new(0.0, 0.0, -1.0)).unwrap() + Vec3::z()).norm() < 1e-15);
        let b2 = LevelSetDomain::scaled_ball(2.0).unwrap();
        assert!((b2.outward_normal(&Vec3::new(0.0, 2.0, 0.0)).unwrap() - Vec3::y()).norm() < 1e-15);
        assert!(matches!(b.outward_normal(&Vec3::new(0.5, 0.0, 0.0)), Err(KineticError::NotOnBoundary(_))));
    }

    #[test]
    fn exit_examples() {
        let b = LevelSetDomain::unit_ball();
        let (t, xb) = b.backward_exit(&Vec3::zeros(), &Vec3::x()).unwrap();
        assert!((t - 1.0).abs() < 1e-14 && (xb + Vec3::x()).norm() < 1e-14);
        let (t, xb) = b.backward_exit(&Vec3::new(0.5, 0.0, 0.0), &Vec3::x()).unwrap();
        assert!((t - 1.5).abs() < 1e-14 && (xb + Vec3::x()).norm() < 1e-14);
        let (t, xb) = b.backward_exit(&Vec3::new(0.5, 0.0, 0.0), &-Vec3::x()).unwrap();
        assert!((t - 0.5).abs() < 1e-14 && (xb - Vec3::x()).norm() < 1e-14);
        assert!(matches!(b.backward_exit(&Vec3::zeros(), &Vec3::zeros()), Err(KineticError::ZeroVelocity)));
        assert!(matches!(b.backward_exit(&Vec3::new(2.0, 0.0, 0.0), &Vec3::x()), Err(KineticError::NotInterior(_))));
    }

    #[test]
    fn classification() {
        let b = LevelSetDomain::unit_ball();
        let x = Vec3::x();
        assert_eq!(b.classify_boundary(&x, &Vec3::x()).unwrap(), BoundaryClass::Outgoing);
        assert_eq!(b.classify_boundary(&x, &Vec3::y()).unwrap(), BoundaryClass::Grazing);
        assert_eq!(b.classify_boundary(&x, &-Vec3::x()).unwrap(), BoundaryClass::Incoming);
    }

    #[test]
    fn marching_matches_closed_form_on_ball() {
        let b = LevelSetDomain::unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = loop {
                let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if p.norm() < 0.999 {
                    break p;
                }
            };
            let v = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            if v.norm() < 1e-3 {
                continue;
            }
            let (t0, _) = b.backward_exit(&x, &v).unwrap();
            let (t1, xb) = b.backward_exit_marching(&x, &v, false).unwrap();
            assert!((t0 - t1).abs() <= 1e-10 * t0.max(1.0), "{t0} vs {t1}");
            assert!(b.xi(&xb).abs() <= 1e-10);
        }
    }

    #[test]
    fn superellipsoid_exit_lands_on_boundary() {
        let d = LevelSetDomain::superellipsoid([1.0, 0.7, 1.3], [4.0, 2.0, 6.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x = Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.3..0.3), rng.random_range(-0.5..0.5));
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (t, xb) = d.backward_exit(&x, &v).unwrap();
            assert!(d.xi(&xb).abs() <= 1e-10);
            for i in 1..200 {
                let s = t * i as f64 / 200.0;
                assert!(d.xi(&(x - v * s)) < 0.0);
            }
            let n = d.normal_unchecked(&xb).unwrap();
            assert!(n.dot(&v) <= GRAZING_TOL);
        }
    }

    #[test]
    fn custom_field_tracks_analytic_ball() {
        let f = SampledField::from_fn(-1.2, 1.2, 49, |x| x.norm_squared() - 1.0);
        let d = LevelSetDomain::custom(f, Vec3::zeros()).unwrap();
        let (t, _) = d.backward_exit(&Vec3::new(0.1, 0.2, 0.0), &Vec3::new(0.3, -1.0, 0.5)).unwrap();
        let (t0, _) = LevelSetDomain::unit_ball().backward_exit(&Vec3::new(0.1, 0.2, 0.0), &Vec3::new(0.3, -1.0, 0.5)).unwrap();
        assert!((t - t0).abs() < 1e-2);
    }

    #[test]
    fn boundary_start_exit() {
        let b = LevelSetDomain::unit_ball();
        let x = Vec3::x();
        let v = Vec3::new(1.0, 0.5, 0.0);
        let (t, xb) = b.backward_exit_from_boundary(&x, &v).unwrap();
        assert!((xb.norm() - 1.0).abs() < 1e-12);
        let (t2, xb2) = b.backward_exit_marching(&x, &v, true).unwrap();
        assert!((t - t2).abs() < 1e-9 && (xb - xb2).norm() < 1e-9);
    }
}
