use boltzmann_core::boundary::{sample_diffuse, trace_back_cycle};
use boltzmann_core::collision::{SphereQuadrature, VelocityGrid};
use boltzmann_core::field::{CellGrid, DistributionField, Representation};
use boltzmann_core::geometry::LevelSetDomain;
use boltzmann_core::kinematics::{
    jacobian_finite_difference, jacobian_u_to_uprime, maxwellian, post_collision, weight_w, weight_wtilde,
};
use boltzmann_core::norms::{entropy_control_quantities, entropy_density, relative_entropy};
use boltzmann_core::solver::fit_log_linear;
use boltzmann_core::verify::{EstimateReport, RefinementLevel, Trend};
use boltzmann_core::Vec3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3(1.0).prop_filter("nonzero", |v| v.norm() > 1e-3).prop_map(|v| v.normalize())
}

/// (v, u, ω) with ω in the hemisphere ω·(v − u) ≥ 0.
fn triple() -> impl Strategy<Value = (Vec3, Vec3, Vec3)> {
    (vec3(4.0), vec3(4.0), unit()).prop_filter("distinct", |(v, u, _)| (v - u).norm() > 1e-2).prop_map(|(v, u, w)| {
        let w = if w.dot(&(v - u)) < 0.0 { -w } else { w };
        (v, u, w)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn collisions_conserve_momentum_and_energy((v, u, w) in triple()) {
        let (vp, up) = post_collision(&v, &u, &w);
        prop_assert!((vp + up - v - u).norm() <= 1e-12 * (1.0 + v.norm() + u.norm()));
        let before = v.norm_squared() + u.norm_squared();
        prop_assert!((vp.norm_squared() + up.norm_squared() - before).abs() <= 1e-12 * (1.0 + before));
    }

    #[test]
    fn detailed_balance((v, u, w) in triple()) {
        let (vp, up) = post_collision(&v, &u, &w);
        let ratio = maxwellian(&vp) * maxwellian(&up) / (maxwellian(&v) * maxwellian(&u));
        prop_assert!((ratio - 1.0).abs() < 1e-10, "{}", ratio);
    }

    #[test]
    fn jacobian_matches_finite_differences((v, u, w) in triple()) {
        let exact = jacobian_u_to_uprime(&v, &u, &w).unwrap();
        prop_assert!((0.125 - 1e-12..=0.25 + 1e-12).contains(&exact));
        prop_assert!((jacobian_finite_difference(&v, &u, &w, 1e-5) - exact).abs() < 1e-6);
    }

    #[test]
    fn weights_grow_with_speed(d in unit(), r in 0.0..8.0f64, dr in 0.01..2.0f64, beta in 0.5..5.0f64) {
        let (a, b) = (d * r, d * (r + dr));
        prop_assert!(weight_w(&a, beta) >= 1.0);
        prop_assert!(weight_w(&b, beta) > weight_w(&a, beta));
        // d log w̃ / d|v|² = 1/4 − β/(2(1 + |v|²))
        if 1.0 + r * r >= 2.0 * beta {
            prop_assert!(weight_wtilde(&b, beta) > weight_wtilde(&a, beta));
        }
    }

    /// Pointwise form of the entropy control: the entropy density dominates
    /// |f|²/4 where |f| ≤ √μ and √μ|f|/4 elsewhere.
    #[test]
    fn entropy_density_controls_the_perturbation(v in vec3(5.0), y in -1.0..50.0f64) {
        let mu = maxwellian(&v);
        let s = mu.sqrt();
        let f = y * s;
        let control = if f.abs() <= s { 0.25 * f * f } else { 0.25 * s * f.abs() };
        let density = entropy_density(mu + s * f, mu);
        prop_assert!(density >= 0.0);
        prop_assert!(density >= control - 1e-15 * mu, "y={} density={} control={}", y, density, control);
    }

    #[test]
    fn diffuse_samples_leave_the_wall(n in unit(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            prop_assert!(n.dot(&sample_diffuse(&n, &mut rng).unwrap()) > 0.0);
        }
    }

    #[test]
    fn backward_exit_lands_on_the_wall(x in vec3(0.55), v in vec3(3.0), ball in any::<bool>()) {
        prop_assume!(v.norm() > 1e-2);
        let dom = if ball {
            LevelSetDomain::unit_ball()
        } else {
            LevelSetDomain::superellipsoid([1.0, 0.8, 0.6], [4.0, 4.0, 4.0]).unwrap()
        };
        prop_assume!(dom.xi(&x) < -1e-3);
        let (tb, xb) = dom.backward_exit(&x, &v).unwrap();
        prop_assert!(tb > 0.0);
        prop_assert!((xb - (x - v * tb)).norm() < 1e-9);
        prop_assert!(dom.xi(&xb).abs() < 1e-8);
    }

    #[test]
    fn back_cycles_satisfy_their_invariants(x in vec3(0.5), v in vec3(2.0), t in 0.5..6.0f64, seed in any::<u64>()) {
        prop_assume!(v.norm() > 0.05);
        let dom = LevelSetDomain::unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cycle = trace_back_cycle(&dom, &x, &v, t, 0.0, 24, &mut rng).unwrap();
        prop_assert!(cycle.replay_defect() < 1e-8);
        prop_assert!(cycle.anchors.windows(2).all(|w| w[1].t < w[0].t));
        for a in &cycle.anchors[1..] {
            prop_assert!(dom.xi(&a.x).abs() < 1e-8);
            prop_assert!(dom.outward_normal(&a.x).unwrap().dot(&a.v) > 0.0);
        }
        prop_assert_eq!(cycle.k_used, cycle.anchors.len() - 1);
        prop_assert_eq!(cycle.reached_initial, cycle.terminal_t <= 0.0);
    }

    #[test]
    fn fits_ignore_scale_and_time_shift(rate in -2.0..2.0f64, scale in 1e-3..1e3f64, shift in -5.0..5.0f64, wobble in 0.0..0.2f64) {
        let t: Vec<f64> = (0..24).map(|i| 0.25 * i as f64).collect();
        let v: Vec<f64> = t.iter().map(|s| (-rate * s + wobble * (3.0 * s).sin()).exp()).collect();
        let (r0, q0) = fit_log_linear(&t, &v).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| scale * x).collect();
        let shifted: Vec<f64> = t.iter().map(|s| s + shift).collect();
        let (r1, q1) = fit_log_linear(&shifted, &scaled).unwrap();
        prop_assert!((r0 - r1).abs() < 1e-9 && (q0 - q1).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&q0));
        if wobble == 0.0 {
            prop_assert!((r0 - rate).abs() < 1e-9);
        }
    }

    #[test]
    fn reports_pass_exactly_when_finite_and_not_growing(sups in prop::collection::vec(prop_oneof![1e-3..1e3f64, Just(f64::INFINITY)], 1..5)) {
        let levels: Vec<RefinementLevel> = sups
            .iter()
            .enumerate()
            .map(|(i, s)| RefinementLevel { label: String::new(), baseline: i.checked_sub(1), grid_n: 8, n_polar: 2, samples: 1, sup: *s, grid_hash: String::new() })
            .collect();
        let r = EstimateReport::from_levels("p", levels, 0, "");
        let finite = sups.iter().all(|s| s.is_finite());
        prop_assert_eq!(r.pass, finite && r.refinement_trend != Trend::Growing);
        prop_assert_eq!(r.refinement_trend, Trend::of(&sups));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn velocity_grids_are_symmetric_with_full_weight(v_cut in 1.0..8.0f64, n in 2usize..12) {
        let g = VelocityGrid::new(v_cut, n).unwrap();
        prop_assert!(g.weight > 0.0);
        let total = g.weight * g.len() as f64;
        prop_assert!((total - (2.0 * v_cut).powi(3)).abs() < 1e-9 * total);
        for (i, v) in g.nodes().enumerate() {
            prop_assert!((g.node(g.nearest(&-v)) + v).norm() < 1e-12, "node {}", i);
        }
    }

    #[test]
    fn sphere_rules_are_unit_with_full_area(n_polar in 1usize..10) {
        let s = SphereQuadrature::new(n_polar).unwrap();
        let (nodes, weights) = s.full();
        prop_assert!(nodes.iter().all(|w| (w.norm() - 1.0).abs() < 1e-12));
        prop_assert!((weights.iter().sum::<f64>() - 4.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn representation_conversions_round_trip(beta in 0.5..5.0f64, amp in 0.0..0.9f64, k in 0.1..2.0f64) {
        let dom = LevelSetDomain::unit_ball();
        let cells = CellGrid::over_domain(&dom, 3).unwrap();
        let grid = VelocityGrid::new(4.0, 5).unwrap();
        let f = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |x, v| {
            maxwellian(v) * (1.0 + amp * (k * (x[0] + v[1])).sin())
        });
        let weighted = f.convert(&grid, Representation::Perturbation).convert(&grid, Representation::Weighted { beta });
        let back = weighted.convert(&grid, Representation::Absolute);
        let again = back.convert(&grid, Representation::Weighted { beta });
        for (a, b) in f.data.iter().zip(&back.data) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        for (a, b) in weighted.data.iter().zip(&again.data) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        // the summed entropy controls dominate nothing larger than the entropy
        let e = relative_entropy(&f, &cells, &grid).unwrap();
        let (small, large) = entropy_control_quantities(&f.convert(&grid, Representation::Perturbation), &cells, &grid).unwrap();
        prop_assert!(e >= 0.0 && small + large <= e + 1e-14);
    }
}
