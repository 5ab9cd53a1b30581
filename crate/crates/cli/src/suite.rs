//! The verification suite: named checks and the parameter table they run
//! with.

use boltzmann_core::geometry::LevelSetDomain;
use boltzmann_core::verify::{
    check_c_mu, check_collision_invariants, check_coercivity, check_cycle_probability, check_equilibrium, check_gain_lp,
    check_gain_pointwise, check_jacobian, check_kernel_integrals, check_kernel_symmetry, check_null_space, gain_lp_ratio,
    gain_pointwise_ratio, CycleTable, EstimateReport, RandomFunction, Trend, VerifyGrid, GAIN_PRESETS,
};
use boltzmann_core::{KineticError, Vec3};
use serde::{Deserialize, Serialize};

pub const CHECK_NAMES: [&str; 11] = [
    "jacobian",
    "c-mu",
    "equilibrium",
    "collision-invariants",
    "kernel-symmetry",
    "null-space",
    "coercivity",
    "kernel-integral",
    "gain-pointwise",
    "gain-lp",
    "cycle-probability",
];

/// Largest relative change of a gain ratio under f ↦ αf.
pub const SCALE_TOL: f64 = 1e-12;

const fn grid(v_cut: f64, n: usize, n_polar: usize) -> VerifyGrid {
    VerifyGrid { v_cut, n, n_polar }
}

/// Parameters for every check. Each key has a default; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub jacobian_triples: usize,
    pub c_mu_normals: usize,
    pub equilibrium_grids: Vec<VerifyGrid>,
    pub invariant_draws: usize,
    pub invariant_grids: Vec<VerifyGrid>,
    pub symmetry_grids: Vec<VerifyGrid>,
    pub null_space_grid: VerifyGrid,
    pub coercivity_draws: usize,
    pub coercivity_grids: Vec<VerifyGrid>,
    pub kernel_gammas: Vec<f64>,
    pub kernel_qs: Vec<f64>,
    pub kernel_ells: Vec<f64>,
    pub kernel_radii: Vec<f64>,
    pub kernel_grids: Vec<VerifyGrid>,
    pub gain_pointwise_draws: usize,
    pub gain_pointwise_velocities: usize,
    pub gain_pointwise_grid: VerifyGrid,
    pub gain_lp_draws: usize,
    pub gain_lp_grid: VerifyGrid,
    pub cycle_radius: f64,
    pub cycle_x: [f64; 3],
    pub cycle_v: [f64; 3],
    pub cycle_t: Vec<f64>,
    pub cycle_k: Vec<usize>,
    pub cycle_samples: usize,
    /// p̂ must drop below this at some listed k for the largest t.
    pub cycle_level: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 1,
            jacobian_triples: 100,
            c_mu_normals: 64,
            equilibrium_grids: vec![grid(6.0, 12, 2), grid(6.0, 24, 4)],
            invariant_draws: 5,
            invariant_grids: vec![grid(6.0, 12, 2), grid(6.0, 24, 4)],
            symmetry_grids: vec![grid(6.0, 12, 9), grid(6.0, 16, 12)],
            null_space_grid: grid(6.0, 24, 4),
            coercivity_draws: 100,
            coercivity_grids: vec![grid(6.0, 12, 4), grid(6.0, 16, 4)],
            kernel_gammas: vec![0.0, 0.5, 1.0],
            kernel_qs: vec![1.0, 2.0],
            kernel_ells: vec![0.0, 2.0],
            kernel_radii: (0..=8).map(f64::from).collect(),
            kernel_grids: vec![grid(10.0, 32, 4), grid(10.0, 48, 4), grid(10.0, 64, 4)],
            gain_pointwise_draws: 16,
            gain_pointwise_velocities: 32,
            gain_pointwise_grid: grid(6.0, 16, 2),
            gain_lp_draws: 64,
            gain_lp_grid: grid(4.5, 12, 2),
            cycle_radius: 1.0,
            cycle_x: [0.0; 3],
            cycle_v: [1.0, 0.0, 0.0],
            cycle_t: vec![5.0, 10.0, 20.0],
            cycle_k: vec![1, 2, 4, 8, 16, 32, 64],
            cycle_samples: 10_000,
            cycle_level: 0.05,
        }
    }
}

/// Reports of one check; the cycle check also returns its table.
#[derive(Debug, Clone)]
pub struct CheckOutput {
    pub reports: Vec<EstimateReport>,
    pub cycles: Option<CycleTable>,
}

impl CheckOutput {
    fn reports(reports: Vec<EstimateReport>) -> Self {
        CheckOutput { reports, cycles: None }
    }

    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

pub fn is_check(name: &str) -> bool {
    CHECK_NAMES.contains(&name)
}

pub fn run_check(name: &str, cfg: &SuiteConfig) -> Result<CheckOutput, KineticError> {
    let seed = cfg.seed;
    Ok(match name {
        "jacobian" => CheckOutput::reports(vec![check_jacobian(cfg.jacobian_triples, seed)?]),
        "c-mu" => CheckOutput::reports(vec![check_c_mu(cfg.c_mu_normals, seed)?]),
        "equilibrium" => CheckOutput::reports(vec![check_equilibrium(&cfg.equilibrium_grids)?]),
        "collision-invariants" => {
            CheckOutput::reports(vec![check_collision_invariants(cfg.invariant_draws, &cfg.invariant_grids, seed)?])
        }
        "kernel-symmetry" => CheckOutput::reports(vec![check_kernel_symmetry(&cfg.symmetry_grids)?]),
        "null-space" => CheckOutput::reports(vec![check_null_space(&cfg.null_space_grid, seed)?]),
        "coercivity" => CheckOutput::reports(vec![check_coercivity(cfg.coercivity_draws, &cfg.coercivity_grids, seed)?]),
        "kernel-integral" => {
            let pairs: Vec<(f64, f64)> = cfg.kernel_qs.iter().flat_map(|q| cfg.kernel_ells.iter().map(move |l| (*q, *l))).collect();
            let mut reports = Vec::new();
            for gamma in &cfg.kernel_gammas {
                reports.extend(check_kernel_integrals(*gamma, &pairs, &cfg.kernel_radii, &cfg.kernel_grids, seed)?);
            }
            CheckOutput::reports(reports)
        }
        "gain-pointwise" => {
            let mut reports = GAIN_PRESETS
                .iter()
                .map(|p| check_gain_pointwise(p, cfg.gain_pointwise_draws, cfg.gain_pointwise_velocities, cfg.gain_pointwise_grid, seed))
                .collect::<Result<Vec<_>, _>>()?;
            reports.push(gain_scale_report(cfg, seed)?);
            CheckOutput::reports(reports)
        }
        "gain-lp" => {
            let reports = GAIN_PRESETS
                .iter()
                .map(|p| check_gain_lp(p, cfg.gain_lp_draws, cfg.gain_lp_grid, seed))
                .collect::<Result<Vec<_>, _>>()?;
            CheckOutput::reports(reports)
        }
        "cycle-probability" => {
            let dom = LevelSetDomain::scaled_ball(cfg.cycle_radius)?;
            let table = check_cycle_probability(
                &dom,
                &Vec3::from(cfg.cycle_x),
                &Vec3::from(cfg.cycle_v),
                &cfg.cycle_t,
                &cfg.cycle_k,
                cfg.cycle_samples,
                seed,
            )?;
            CheckOutput { reports: vec![cycle_report(&table, cfg.cycle_level)], cycles: Some(table) }
        }
        other => return Err(KineticError::InvalidParams(format!("unknown check `{other}`"))),
    })
}

/// Gain ratios of f and 4f on the pointwise grid for every preset; the
/// ratios are homogeneous of degree 0, so they must agree to round-off.
fn gain_scale_report(cfg: &SuiteConfig, seed: u64) -> Result<EstimateReport, KineticError> {
    let mut worst: f64 = 0.0;
    for preset in &GAIN_PRESETS {
        let op = cfg.gain_pointwise_grid.operator(&preset.params())?;
        let f = RandomFunction::draw_smooth(seed, 0).tabulate(&op.grid);
        let scaled: Vec<f64> = f.iter().map(|x| 4.0 * x).collect();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
        let v = Vec3::new(0.3, -0.7, 1.1);
        if let (Some(a), Some(b)) = (gain_pointwise_ratio(&op, &f, &v, preset), gain_pointwise_ratio(&op, &scaled, &v, preset)) {
            worst = worst.max(rel(a, b));
        }
        if let (Some(a), Some(b)) = (gain_lp_ratio(&op, &f, preset), gain_lp_ratio(&op, &scaled, preset)) {
            worst = worst.max(rel(a, b));
        }
    }
    Ok(EstimateReport {
        name: "gain-scale-invariance".into(),
        ratio_sup: worst,
        ratio_samples: 2 * GAIN_PRESETS.len(),
        refinement_trend: Trend::Stable,
        pass: worst <= SCALE_TOL,
        levels: Vec::new(),
        profile: Vec::new(),
        seed,
        note: "largest relative change of a ratio under f -> 4f".into(),
    })
}

/// Passes when p̂ is non-increasing in k within 3σ and drops below `level`
/// at some listed k for the largest t.
pub fn cycle_report(table: &CycleTable, level: f64) -> EstimateReport {
    let t_max = table.rows.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max);
    let first = table.first_k_below(t_max, level);
    let p_min = table.rows.iter().filter(|r| r.t == t_max).map(|r| r.p_hat).fold(f64::INFINITY, f64::min);
    EstimateReport {
        name: "cycle-probability".into(),
        ratio_sup: p_min,
        ratio_samples: table.n_samples,
        refinement_trend: Trend::Stable,
        pass: table.monotone_in_k && first.is_some(),
        levels: Vec::new(),
        profile: table.rows.iter().filter(|r| r.t == t_max).map(|r| (r.k as f64, r.p_hat)).collect(),
        seed: table.seed,
        note: match first {
            Some(k) => format!("p < {level} first at k = {k} for t = {t_max}"),
            None => format!("p never below {level} for t = {t_max}"),
        },
    }
}
