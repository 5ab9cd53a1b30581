//! Weighted mixed norms, wall norms, mass and relative entropy on fields.

use serde::{Deserialize, Serialize};

use crate::collision::VelocityGrid;
use crate::error::KineticError;
use crate::field::{CellGrid, DistributionField, Representation};
use crate::kinematics::{maxwellian, Vec3};

/// One row of a time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    /// ‖w f‖ with sup over cells, then L^p over velocity.
    pub lp_v_linf_x: f64,
    /// ‖f‖ in L²(cells × velocity).
    pub l2_xv: f64,
    /// ‖f‖ in L² of the outgoing wall set with measure (n·v) dS dv.
    pub l2_gamma_plus: f64,
    pub q_small: f64,
    pub q_large: f64,
}

/// (Σ_v [max_cells |h|]^p · h³)^{1/p}.
pub fn norm_lpv_linfx(h: &DistributionField, grid: &VelocityGrid, p: f64) -> f64 {
    let mut sup = vec![0.0f64; h.n_nodes];
    for cell in h.cells() {
        for (s, x) in sup.iter_mut().zip(cell) {
            *s = s.max(x.abs());
        }
    }
    let top = sup.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    // factor out the maximum so large p cannot overflow
    let s: f64 = sup.iter().map(|x| (x / top).powf(p)).sum();
    top * (s * grid.weight).powf(1.0 / p)
}

/// (Σ_cells vol Σ_v |h|² h³)^{1/2}.
pub fn l2_xv(h: &DistributionField, cells: &CellGrid, grid: &VelocityGrid) -> f64 {
    let s: f64 = h.data.iter().map(|x| x * x).sum();
    (s * cells.volume * grid.weight).sqrt()
}

/// (Σ_walls area Σ_{n·v>0} |h|² (n·v) h³)^{1/2}; zero without walls.
pub fn l2_gamma_plus(h: &DistributionField, cells: &CellGrid, grid: &VelocityGrid) -> f64 {
    let mut s = 0.0;
    for wall in cells.walls() {
        let vals = h.cell(wall.cell);
        for (idx, x) in vals.iter().enumerate() {
            let vn = wall.sign * grid.node(idx)[wall.axis];
            if vn > 0.0 {
                s += x * x * vn;
            }
        }
    }
    (s * cells.face_area * grid.weight).sqrt()
}

/// Σ_cells vol Σ_v F h³.
pub fn mass(f: &DistributionField, cells: &CellGrid, grid: &VelocityGrid) -> Result<f64, KineticError> {
    f.expect(Representation::Absolute)?;
    Ok(f.data.iter().sum::<f64>() * cells.volume * grid.weight)
}

/// max_t |m(t) − m(0)| / m(0).
pub fn mass_defect(masses: &[f64]) -> f64 {
    match masses.first() {
        Some(&m0) if m0 != 0.0 => masses.iter().fold(0.0f64, |d, m| d.max((m - m0).abs())) / m0.abs(),
        _ => 0.0,
    }
}

/// Entropy density (G log G − G + 1)μ with G = F/μ; its F → 0 limit is μ.
pub fn entropy_density(f: f64, mu: f64) -> f64 {
    if f <= 0.0 {
        return mu;
    }
    let g = f / mu;
    (g * g.ln() - g + 1.0) * mu
}

/// ℰ(F) = Σ_cells vol Σ_v (G log G − G + 1) μ h³. Entries above −1e-12
/// count as zero; anything more negative is an error.
pub fn relative_entropy(f: &DistributionField, cells: &CellGrid, grid: &VelocityGrid) -> Result<f64, KineticError> {
    f.expect(Representation::Absolute)?;
    f.check_nonnegative(1e-12)?;
    let mu = grid.tabulate(maxwellian);
    let s: f64 = f.cells().map(|cell| cell.iter().zip(&mu).map(|(x, m)| entropy_density(*x, *m)).sum::<f64>()).sum();
    Ok(s * cells.volume * grid.weight)
}

/// The small- and large-deviation parts of f controlled by the entropy:
/// ∫ |f|²/4 on {|f| ≤ √μ} and ∫ √μ |f|/4 on {|f| > √μ}.
pub fn entropy_control_quantities(
    f: &DistributionField,
    cells: &CellGrid,
    grid: &VelocityGrid,
) -> Result<(f64, f64), KineticError> {
    f.expect(Representation::Perturbation)?;
    let sqrt_mu: Vec<f64> = grid.nodes().map(|v: Vec3| maxwellian(&v).sqrt()).collect();
    let (mut small, mut large) = (0.0, 0.0);
    for cell in f.cells() {
        for (x, s) in cell.iter().zip(&sqrt_mu) {
            if x.abs() <= *s {
                small += 0.25 * x * x;
            } else {
                large += 0.25 * s * x.abs();
            }
        }
    }
    let dv = cells.volume * grid.weight;
    Ok((small * dv, large * dv))
}

/// All report quantities for an absolute-F field at time `t`.
pub fn norm_report(
    t: f64,
    f: &DistributionField,
    cells: &CellGrid,
    grid: &VelocityGrid,
    beta: f64,
    p: f64,
) -> Result<NormReport, KineticError> {
    let pert = f.convert(grid, Representation::Perturbation);
    let h = f.convert(grid, Representation::Weighted { beta });
    let (q_small, q_large) = entropy_control_quantities(&pert, cells, grid)?;
    Ok(NormReport {
        t,
        mass: mass(f, cells, grid)?,
        entropy: relative_entropy(f, cells, grid)?,
        lp_v_linf_x: norm_lpv_linfx(&h, grid, p),
        l2_xv: l2_xv(&pert, cells, grid),
        l2_gamma_plus: l2_gamma_plus(&pert, cells, grid),
        q_small,
        q_large,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetDomain;
    use crate::kinematics::weight_w;

    fn setup() -> (CellGrid, VelocityGrid) {
        (CellGrid::over_domain(&LevelSetDomain::unit_ball(), 5).unwrap(), VelocityGrid::new(4.0, 8).unwrap())
    }

    #[test]
    fn constant_field_norm() {
        let (cells, grid) = setup();
        let h = DistributionField::from_fn(&cells, &grid, Representation::Weighted { beta: 2.0 }, |_, _| 0.7);
        for p in [2.0, 4.0, 8.0] {
            let want = 0.7 * 8.0f64.powf(3.0 / p);
            assert!((norm_lpv_linfx(&h, &grid, p) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn norm_matches_high_precision_sum_and_is_homogeneous() {
        let (cells, grid) = setup();
        let h = DistributionField::from_fn(&cells, &grid, Representation::Perturbation, |x, v| {
            (3.0 * x[0] + v[1]).sin() * (-v.norm_squared() / 6.0).exp()
        });
        for p in [4.0, 8.0] {
            // oracle: plain summation without the max-scaling
            let mut sup = vec![0.0f64; grid.len()];
            for cell in h.cells() {
                for (s, x) in sup.iter_mut().zip(cell) {
                    *s = s.max(x.abs());
                }
            }
            let want = (sup.iter().map(|x| x.powf(p)).sum::<f64>() * grid.weight).powf(1.0 / p);
            let got = norm_lpv_linfx(&h, &grid, p);
            assert!((got - want).abs() < 1e-12 * want);
            let scaled = norm_lpv_linfx(&h.scaled(-2.5), &grid, p);
            assert!((scaled - 2.5 * got).abs() < 1e-12 * got);
        }
        let l2 = l2_xv(&h, &cells, &grid);
        assert!((l2_xv(&h.scaled(3.0), &cells, &grid) - 3.0 * l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn maxwellian_mass_and_zero_entropy() {
        let (cells, grid) = setup();
        let f = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |_, v| maxwellian(v));
        let grid_mass = grid.integrate(&grid.tabulate(maxwellian));
        let m = mass(&f, &cells, &grid).unwrap();
        assert!((m - cells.total_volume() * grid_mass).abs() < 1e-12 * m);
        assert_eq!(relative_entropy(&f, &cells, &grid).unwrap(), 0.0);
        let pert = f.convert(&grid, Representation::Perturbation);
        assert_eq!(entropy_control_quantities(&pert, &cells, &grid).unwrap(), (0.0, 0.0));
        assert_eq!(l2_gamma_plus(&pert, &cells, &grid), 0.0);
    }

    #[test]
    fn phi_modulated_entropy_matches_substitution() {
        // F = φ(x)μ with Σ(φ−1) = 0 over cells: ℰ = Σ φ log φ · vol · grid mass of μ
        let (cells, grid) = setup();
        let raw: Vec<f64> = cells.centers().iter().map(|x| 1.0 + 0.5 * x[0]).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let phi: Vec<f64> = raw.iter().map(|r| r / mean).collect();
        let mut f = DistributionField::zeros(cells.len(), grid.len(), Representation::Absolute);
        let mu = grid.tabulate(maxwellian);
        for c in 0..cells.len() {
            for (x, m) in f.cell_mut(c).iter_mut().zip(&mu) {
                *x = phi[c] * m;
            }
        }
        let want = phi.iter().map(|p| p * p.ln()).sum::<f64>() * cells.volume * grid.integrate(&mu);
        let got = relative_entropy(&f, &cells, &grid).unwrap();
        assert!((got - want).abs() < 1e-12 * want, "{got} {want}");
    }

    #[test]
    fn weighted_norm_is_linear_in_phi_amplitude() {
        // h = w f with f = (φ−1)μ^{1/2}/w is (φ−1)μ^{1/2}: the norm is sup|φ−1| · ‖μ^{1/2}‖_p
        let (cells, grid) = setup();
        let beta = 3.0;
        let norm_for = |amp: f64| {
            let f = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |x, v| {
                let phi = 1.0 + amp * x[2];
                maxwellian(v) + maxwellian(v).sqrt() * (phi - 1.0) * maxwellian(v).sqrt() / weight_w(v, beta)
            });
            norm_lpv_linfx(&f.convert(&grid, Representation::Weighted { beta }), &grid, 4.0)
        };
        let sup_x = cells.centers().iter().map(|x| x[2].abs()).fold(0.0, f64::max);
        let cp = (grid.tabulate(|v| maxwellian(v).powf(2.0)).iter().sum::<f64>() * grid.weight).powf(0.25);
        for amp in [0.1, 0.4] {
            let got = norm_for(amp);
            assert!((got - amp * sup_x * cp).abs() < 1e-12 * got);
        }
    }

    #[test]
    fn entropy_of_two_bumps_exceeds_its_maxwellianization() {
        let grid = VelocityGrid::new(6.0, 16).unwrap();
        let cells = CellGrid::homogeneous();
        let bump = |v: &Vec3, s: f64| {
            let t: f64 = 0.52;
            (-(v - Vec3::new(s, 0.0, 0.0)).norm_squared() / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).powf(1.5)
        };
        let f = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |_, v| 0.5 * (bump(v, 1.2) + bump(v, -1.2)));
        // moment-matched Maxwellian of the two bumps is μ itself (mass 1, momentum 0, temperature 1)
        let m = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |_, v| maxwellian(v));
        let e_f = relative_entropy(&f, &cells, &grid).unwrap();
        let e_m = relative_entropy(&m, &cells, &grid).unwrap();
        assert!(e_f > 0.05 && e_m == 0.0);
    }

    #[test]
    fn control_quantities_partition_the_integrals() {
        let (cells, grid) = setup();
        let f = DistributionField::from_fn(&cells, &grid, Representation::Perturbation, |x, v| {
            maxwellian(v).sqrt() * 2.0 * (x[0] * 4.0 + v[2]).cos()
        });
        let (small, large) = entropy_control_quantities(&f, &cells, &grid).unwrap();
        let dv = cells.volume * grid.weight;
        let s_mu: Vec<f64> = grid.nodes().map(|v| maxwellian(&v).sqrt()).collect();
        let (mut a, mut b) = (0.0, 0.0);
        for cell in f.cells() {
            for (x, s) in cell.iter().zip(&s_mu) {
                if x.abs() <= *s {
                    a += x * x;
                } else {
                    b += s * x.abs();
                }
            }
        }
        assert!((small - 0.25 * a * dv).abs() < 1e-14 && (large - 0.25 * b * dv).abs() < 1e-14);
        assert!(small > 0.0 && large > 0.0);
        assert!(entropy_control_quantities(&f.convert(&grid, Representation::Absolute), &cells, &grid).is_err());
    }

    #[test]
    fn negative_entries_are_rejected() {
        let (cells, grid) = setup();
        let mut f = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |_, v| maxwellian(v));
        f.data[5] = -1e-9;
        assert!(matches!(relative_entropy(&f, &cells, &grid), Err(KineticError::NegativeF { node: 5, .. })));
        f.data[5] = -1e-14;
        assert!(relative_entropy(&f, &cells, &grid).is_ok());
        assert!((mass_defect(&[2.0, 2.002, 1.999]) - 1e-3).abs() < 1e-12);
    }
}
