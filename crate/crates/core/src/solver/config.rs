//! Run configuration and initial data.

use serde::{Deserialize, Serialize};

use crate::collision::VelocityGrid;
use crate::error::KineticError;
use crate::field::{CellGrid, DistributionField, Representation};
use crate::geometry::LevelSetDomain;
use crate::kinematics::{maxwellian, weight_w, AngularFactor, CollisionParams, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainChoice {
    Homogeneous,
    UnitBall,
    Ball,
    Superellipsoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialChoice {
    Maxwellian,
    /// F₀ = μ + μ^{1/2}(φ(x) − 1)μ^{1/2}/w with a Gaussian-bump φ.
    PhiModulated,
    /// Two Maxwellians at ±a e₁ sharing mass, momentum and energy with μ.
    TwoBump,
    /// Absolute F₀ read from `custom_table`.
    Custom,
}

fn d_gamma() -> f64 {
    1.0
}
fn d_one() -> f64 {
    1.0
}
fn d_beta() -> f64 {
    3.0
}
fn d_p() -> f64 {
    5.0
}
fn d_v_cut() -> f64 {
    4.5
}
fn d_n_v() -> usize {
    8
}
fn d_n_polar() -> usize {
    2
}
fn d_domain() -> DomainChoice {
    DomainChoice::UnitBall
}
fn d_n_x() -> usize {
    5
}
fn d_initial() -> InitialChoice {
    InitialChoice::Maxwellian
}
fn d_phi_amplitude() -> f64 {
    0.1
}
fn d_phi_sigma() -> f64 {
    0.35
}
fn d_bump_shift() -> f64 {
    1.2
}
fn d_k_max() -> usize {
    32
}
fn d_cycle_samples() -> usize {
    64
}

/// Flat run configuration. Every key except `dt` has a default; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    /// Constant angular factor b.
    #[serde(default = "d_one")]
    pub b: f64,
    /// Tabulated b(cosθ) on a uniform grid of [0, 1]; overrides `b`.
    #[serde(default)]
    pub b_table: Option<Vec<f64>>,
    #[serde(default = "d_one")]
    pub c_b: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_v_cut")]
    pub v_cut: f64,
    /// Velocity nodes per axis.
    #[serde(default = "d_n_v")]
    pub n_v: usize,
    /// Gauss–Legendre order of the sphere rule.
    #[serde(default = "d_n_polar")]
    pub n_polar: usize,
    /// Enforce (p, β) admissibility and analytic domains.
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "d_domain")]
    pub domain: DomainChoice,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub semi_axes: Option<[f64; 3]>,
    #[serde(default)]
    pub exponents: Option<[f64; 3]>,
    /// Spatial cells per axis across the bounding cube.
    #[serde(default = "d_n_x")]
    pub n_x: usize,
    pub dt: f64,
    #[serde(default = "d_one")]
    pub t_end: f64,
    /// Steps between reports.
    #[serde(default = "d_one_usize")]
    pub report_every: usize,
    #[serde(default = "d_initial")]
    pub initial: InitialChoice,
    /// sup over cells of |φ − 1|.
    #[serde(default = "d_phi_amplitude")]
    pub phi_amplitude: f64,
    #[serde(default = "d_phi_sigma")]
    pub phi_sigma: f64,
    #[serde(default)]
    pub phi_center: [f64; 3],
    #[serde(default = "d_bump_shift")]
    pub bump_shift: f64,
    #[serde(default)]
    pub custom_table: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_k_max")]
    pub cycle_k_max: usize,
    /// Paths per (cell, node) for the mild-form transport evaluation.
    #[serde(default = "d_cycle_samples")]
    pub cycle_samples: usize,
    /// Random collision pairs per node and cell; 0 selects the
    /// deterministic quadrature.
    #[serde(default)]
    pub mc_pairs_per_cell: usize,
}

fn d_one_usize() -> usize {
    1
}

pub const PRESETS: [&str; 4] = ["homogeneous-h-theorem", "ball-small-data", "ball-large-amplitude", "ball-conservation"];

impl SimConfig {
    /// Defaults with the given time step.
    pub fn with_dt(dt: f64) -> Self {
        SimConfig {
            gamma: d_gamma(),
            b: 1.0,
            b_table: None,
            c_b: 1.0,
            beta: d_beta(),
            p: d_p(),
            v_cut: d_v_cut(),
            n_v: d_n_v(),
            n_polar: d_n_polar(),
            strict: false,
            domain: d_domain(),
            radius: None,
            semi_axes: None,
            exponents: None,
            n_x: d_n_x(),
            dt,
            t_end: 1.0,
            report_every: 1,
            initial: d_initial(),
            phi_amplitude: d_phi_amplitude(),
            phi_sigma: d_phi_sigma(),
            phi_center: [0.0; 3],
            bump_shift: d_bump_shift(),
            custom_table: None,
            seed: 0,
            cycle_k_max: d_k_max(),
            cycle_samples: d_cycle_samples(),
            mc_pairs_per_cell: 0,
        }
    }

    /// Named experiment setups.
    pub fn preset(name: &str) -> Option<Self> {
        let base = SimConfig::with_dt(0.1);
        Some(match name {
            "homogeneous-h-theorem" => SimConfig {
                domain: DomainChoice::Homogeneous,
                initial: InitialChoice::TwoBump,
                v_cut: 5.0,
                n_v: 12,
                n_polar: 4,
                dt: 0.01,
                t_end: 2.0,
                ..base
            },
            "ball-small-data" => SimConfig {
                initial: InitialChoice::PhiModulated,
                phi_amplitude: 0.1,
                dt: 0.1,
                t_end: 4.0,
                ..base
            },
            "ball-large-amplitude" => SimConfig {
                initial: InitialChoice::PhiModulated,
                phi_amplitude: 6.0,
                phi_sigma: 0.2,
                dt: 0.1,
                t_end: 6.0,
                ..base
            },
            "ball-conservation" => SimConfig {
                initial: InitialChoice::PhiModulated,
                phi_amplitude: 0.5,
                dt: 0.1,
                t_end: 2.0,
                ..base
            },
            _ => return None,
        })
    }

    pub fn params(&self) -> CollisionParams {
        CollisionParams {
            gamma: self.gamma,
            angular: match &self.b_table {
                Some(t) => AngularFactor::Table(t.clone()),
                None => AngularFactor::Constant(self.b),
            },
            c_b: self.c_b,
            beta: self.beta,
            p: self.p,
            v_cut: self.v_cut,
        }
    }

    pub fn validate(&self) -> Result<(), KineticError> {
        let bad = |m: String| Err(KineticError::Config(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end = {} must be nonnegative", self.t_end));
        }
        if self.report_every == 0 {
            return bad("report_every must be at least 1".into());
        }
        if self.n_v < 2 || self.n_polar < 1 {
            return bad(format!("n_v = {} and n_polar = {} are too small", self.n_v, self.n_polar));
        }
        let params = self.params();
        if self.strict { params.validate_strict() } else { params.validate() }
            .map_err(|e| KineticError::Config(e.to_string()))?;
        match self.domain {
            DomainChoice::Ball if self.radius.is_none() => return bad("domain `ball` needs `radius`".into()),
            DomainChoice::Superellipsoid if self.semi_axes.is_none() || self.exponents.is_none() => {
                return bad("domain `superellipsoid` needs `semi_axes` and `exponents`".into())
            }
            DomainChoice::Superellipsoid if self.strict => {
                return bad("strict mode only accepts ball domains".into())
            }
            _ => {}
        }
        if self.initial == InitialChoice::Custom && self.custom_table.is_none() {
            return bad("initial `custom` needs `custom_table`".into());
        }
        if self.initial == InitialChoice::PhiModulated && self.domain == DomainChoice::Homogeneous {
            return bad("initial `phi-modulated` needs a spatial domain".into());
        }
        if self.initial == InitialChoice::TwoBump && !(self.bump_shift.abs() < 3f64.sqrt()) {
            return bad(format!("bump_shift = {} leaves no room for a positive temperature", self.bump_shift));
        }
        if !(self.phi_sigma > 0.0) || !(self.phi_amplitude >= 0.0) {
            return bad("phi_sigma must be positive and phi_amplitude nonnegative".into());
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Option<LevelSetDomain>, KineticError> {
        Ok(match self.domain {
            DomainChoice::Homogeneous => None,
            DomainChoice::UnitBall => Some(LevelSetDomain::unit_ball()),
            DomainChoice::Ball => Some(LevelSetDomain::scaled_ball(self.radius.unwrap_or(1.0))?),
            DomainChoice::Superellipsoid => Some(LevelSetDomain::superellipsoid(
                self.semi_axes.unwrap_or([1.0; 3]),
                self.exponents.unwrap_or([2.0; 3]),
            )?),
        })
    }
}

/// φ on the cells: 1 + A (ψ − ψ̄)/max|ψ − ψ̄| with a Gaussian bump ψ, so the
/// cell average of φ − 1 vanishes and sup|φ − 1| = A.
pub fn phi_profile(cfg: &SimConfig, cells: &CellGrid) -> Result<Vec<f64>, KineticError> {
    let c = Vec3::from(cfg.phi_center);
    let psi: Vec<f64> =
        cells.centers().iter().map(|x| (-(x - c).norm_squared() / (2.0 * cfg.phi_sigma * cfg.phi_sigma)).exp()).collect();
    let mean = psi.iter().sum::<f64>() / psi.len() as f64;
    let spread = psi.iter().fold(0.0f64, |m, p| m.max((p - mean).abs()));
    if spread == 0.0 {
        return Err(KineticError::Config("phi bump is flat over the cells".into()));
    }
    let phi: Vec<f64> = psi.iter().map(|p| 1.0 + cfg.phi_amplitude * (p - mean) / spread).collect();
    if let Some(m) = phi.iter().cloned().reduce(f64::min) {
        if m < 0.0 {
            return Err(KineticError::Config(format!("phi_amplitude {} makes phi negative ({m:.3})", cfg.phi_amplitude)));
        }
    }
    Ok(phi)
}

fn shifted_maxwellian(v: &Vec3, shift: &Vec3, temp: f64) -> f64 {
    (-(v - shift).norm_squared() / (2.0 * temp)).exp() / (2.0 * std::f64::consts::PI * temp).powf(1.5)
}

/// Absolute F₀ on the given cells.
pub fn initial_field(cfg: &SimConfig, cells: &CellGrid, grid: &VelocityGrid) -> Result<DistributionField, KineticError> {
    let abs = Representation::Absolute;
    let field = match cfg.initial {
        InitialChoice::Maxwellian => DistributionField::from_fn(cells, grid, abs, |_, v| maxwellian(v)),
        InitialChoice::TwoBump => {
            let a = cfg.bump_shift;
            let temp = 1.0 - a * a / 3.0;
            let s = Vec3::new(a, 0.0, 0.0);
            DistributionField::from_fn(cells, grid, abs, |_, v| {
                0.5 * (shifted_maxwellian(v, &s, temp) + shifted_maxwellian(v, &-s, temp))
            })
        }
        InitialChoice::PhiModulated => {
            let phi = phi_profile(cfg, cells)?;
            let mut f = DistributionField::zeros(cells.len(), grid.len(), abs);
            let shape: Vec<(f64, f64)> = grid.nodes().map(|v| (maxwellian(&v), weight_w(&v, cfg.beta))).collect();
            for (c, p) in phi.iter().enumerate() {
                for (x, (mu, w)) in f.cell_mut(c).iter_mut().zip(&shape) {
                    *x = mu * (1.0 + (p - 1.0) / w);
                }
            }
            f
        }
        InitialChoice::Custom => {
            let path = cfg.custom_table.as_deref().unwrap_or_default();
            let text = std::fs::read_to_string(path)
                .map_err(|e| KineticError::Config(format!("cannot read custom_table {path}: {e}")))?;
            let data: Vec<f64> = text
                .split(|ch: char| ch == ',' || ch.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| KineticError::Config(format!("custom_table entry {s:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            if data.len() != cells.len() * grid.len() {
                return Err(KineticError::Config(format!(
                    "custom_table has {} values, expected {} cells × {} nodes",
                    data.len(),
                    cells.len(),
                    grid.len()
                )));
            }
            DistributionField { n_cells: cells.len(), n_nodes: grid.len(), repr: abs, data }
        }
    };
    field.check_nonnegative(0.0).map_err(|e| KineticError::Config(format!("initial data: {e}")))?;
    Ok(field)
}
