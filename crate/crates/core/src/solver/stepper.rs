//! Time stepping: per-cell exponential collision update followed by
//! conservative upwind transport with diffuse walls.
//!
//! Collisions use the loss-implicit form
//!   F⁺ = e^{−R dt} F + (1 − e^{−R dt})/R · Q⁺,
//! with R and Q⁺ frozen at the step start. Both pieces are nonnegative, so
//! positivity needs no limiter. The gain and loss rate share one set of
//! box-truncated collisions, which keeps μ an exact fixed point; a small
//! multiplicative correction then restores the discrete mass, momentum and
//! energy of the cell.
//!
//! Transport is first-order upwind on the interior cells. Mass leaving
//! through a wall face is re-emitted through the same face with the
//! discrete wall-Maxwellian flux profile, so the walls neither create nor
//! destroy mass and a uniform μ is transported onto itself.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{initial_field, SimConfig};
use crate::collision::{CollisionOperator, CollisionParts, SphereQuadrature, VelocityGrid};
use crate::error::KineticError;
use crate::field::{CellGrid, DistributionField, Representation};
use crate::geometry::LevelSetDomain;
use crate::kinematics::{maxwellian, post_collision, Vec3, HEMISPHERE};
use crate::norms::{norm_report, NormReport};

/// Transport substeps keep dt_sub Σ|v_i| / dx below this.
const CFL: f64 = 0.9;

const MC_SALT: u64 = 0xc011_1de5;

/// Output of [`Simulation::run`].
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub reports: Vec<NormReport>,
    /// Minimum of F over every stored step.
    pub positivity_min: f64,
    /// Fixed-point residuals when run through the local iteration.
    pub iteration_gaps: Vec<f64>,
    pub warnings: Vec<String>,
    pub final_state: DistributionField,
}

/// A configured solver: discretizations, operator and wall tables.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: SimConfig,
    pub op: CollisionOperator,
    pub cells: CellGrid,
    pub domain: Option<LevelSetDomain>,
    /// Per axis and outward sign (index 0 for −, 1 for +): density added to
    /// each inward node per unit of mass leaving through a face, divided by
    /// the cell volume.
    emission: [[Vec<f64>; 2]; 3],
    substeps: usize,
}

impl Simulation {
    pub fn new(cfg: &SimConfig) -> Result<Self, KineticError> {
        cfg.validate()?;
        let grid = VelocityGrid::new(cfg.v_cut, cfg.n_v)?;
        let op = CollisionOperator::new(grid, SphereQuadrature::new(cfg.n_polar)?, cfg.params())?;
        let domain = cfg.domain()?;
        let cells = match &domain {
            Some(d) => CellGrid::over_domain(d, cfg.n_x)?,
            None => CellGrid::homogeneous(),
        };
        let grid = &op.grid;
        let emission = std::array::from_fn(|axis| {
            std::array::from_fn(|side| {
                let sign = if side == 0 { -1.0 } else { 1.0 };
                let profile: Vec<f64> = grid
                    .nodes()
                    .map(|v| {
                        let vn = sign * v[axis];
                        if vn < 0.0 {
                            maxwellian(&v) * -vn
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let z: f64 = profile.iter().sum::<f64>() * grid.weight;
                profile.iter().map(|p| p / (z * cells.volume)).collect()
            })
        });
        let smax = 3.0 * (grid.v_cut - 0.5 * grid.h);
        let substeps = if domain.is_some() { ((cfg.dt * smax) / (CFL * cells.dx)).ceil().max(1.0) as usize } else { 1 };
        Ok(Simulation { cfg: cfg.clone(), op, cells, domain, emission, substeps })
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.op.grid
    }

    pub fn initial(&self) -> Result<DistributionField, KineticError> {
        initial_field(&self.cfg, &self.cells, self.grid())
    }

    /// Transport substeps per time step.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Gain and consistent loss rate for every cell of an absolute field.
    pub fn collision_parts(&self, f: &DistributionField, step: u64) -> Vec<CollisionParts> {
        let fields: Vec<Vec<f64>> = f.cells().map(|c| c.to_vec()).collect();
        if self.cfg.mc_pairs_per_cell > 0 {
            return fields.par_iter().enumerate().map(|(c, cell)| self.mc_parts(cell, c, step)).collect();
        }
        if fields.len() == 1 {
            vec![self.op.gain_loss_balanced(&fields[0])]
        } else {
            self.op.gain_loss_balanced_batch(&fields)
        }
    }

    /// Random (u, ω) pairs per node, scored for gain and loss from the same
    /// samples so that μ stays an exact fixed point.
    fn mc_parts(&self, f: &[f64], cell: usize, step: u64) -> CollisionParts {
        let grid = self.grid();
        let mu = self.op.mu();
        let nn = grid.len();
        let ratio: Vec<f64> = f.iter().zip(mu).map(|(a, m)| a / m).collect();
        let pairs = self.cfg.mc_pairs_per_cell;
        let scale = nn as f64 * grid.weight * HEMISPHERE / pairs as f64;
        let params = &self.op.params;
        let mut gain = vec![0.0; nn];
        let mut loss = vec![0.0; nn];
        for v_idx in 0..nn {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ MC_SALT);
            rng.set_stream(((step * self.cells.len() as u64) + cell as u64) * nn as u64 + v_idx as u64);
            let v = grid.node(v_idx);
            let (mut g_sum, mut l_sum) = (0.0, 0.0);
            for _ in 0..pairs {
                let u_idx = rng.random_range(0..nn);
                let u = grid.node(u_idx);
                let g = v - u;
                let gn = g.norm();
                let omega = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                if u_idx == v_idx || omega.norm() == 0.0 {
                    continue;
                }
                let mut omega = omega.normalize();
                if omega.dot(&g) < 0.0 {
                    omega = -omega;
                }
                let (vp, up) = post_collision(&v, &u, &omega);
                if !grid.inside_box(&vp) || !grid.inside_box(&up) {
                    continue;
                }
                let b = params.angular.eval(omega.dot(&g) / gn) * params.kernel_speed(gn);
                g_sum += b * mu[u_idx] * grid.interpolate(&ratio, &vp) * grid.interpolate(&ratio, &up);
                l_sum += b * f[u_idx];
            }
            gain[v_idx] = scale * g_sum * mu[v_idx];
            loss[v_idx] = scale * l_sum;
        }
        CollisionParts { gain, loss_rate: loss }
    }

    /// Exponential collision update of every cell over `dt`.
    pub fn collide(&self, f: &DistributionField, dt: f64, step: u64) -> DistributionField {
        let parts = self.collision_parts(f, step);
        let mut out = f.clone();
        out.data.par_chunks_mut(f.n_nodes).zip(parts.par_iter()).enumerate().for_each(|(c, (cell, p))| {
            exponential_update(cell, p, dt);
            conserve_moments(self.grid(), f.cell(c), cell);
        });
        out
    }

    /// Upwind transport over `dt` in `substeps` explicit substeps.
    pub fn transport(&self, f: &DistributionField, dt: f64) -> DistributionField {
        if self.domain.is_none() {
            return f.clone();
        }
        let mut cur = f.clone();
        let sub = dt / self.substeps as f64;
        for _ in 0..self.substeps {
            cur = self.transport_substep(&cur, sub);
        }
        cur
    }

    fn transport_substep(&self, f: &DistributionField, dt: f64) -> DistributionField {
        let grid = self.grid();
        let cells = &self.cells;
        let nu = dt / cells.dx;
        let nodes: Vec<Vec3> = grid.nodes().collect();
        // mass through each wall face during the substep
        let wall_mass: Vec<f64> = cells
            .walls()
            .par_iter()
            .map(|w| {
                let vals = f.cell(w.cell);
                let s: f64 = nodes.iter().zip(vals).map(|(v, x)| (w.sign * v[w.axis]).max(0.0) * x).sum();
                dt * cells.face_area * grid.weight * s
            })
            .collect();
        let mut walls_of: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
        for (i, w) in cells.walls().iter().enumerate() {
            walls_of[w.cell].push(i);
        }
        let mut out = DistributionField::zeros(f.n_cells, f.n_nodes, Representation::Absolute);
        out.data.par_chunks_mut(f.n_nodes).enumerate().for_each(|(c, dst)| {
            let here = f.cell(c);
            let ups: [[Option<&[f64]>; 2]; 3] = std::array::from_fn(|axis| {
                std::array::from_fn(|side| cells.neighbour(c, axis, if side == 0 { -1.0 } else { 1.0 }).map(|n| f.cell(n)))
            });
            for (idx, v) in nodes.iter().enumerate() {
                let mut val = here[idx] * (1.0 - nu * (v[0].abs() + v[1].abs() + v[2].abs()));
                for axis in 0..3 {
                    // upwind neighbour sits on the side the flow comes from
                    let side = usize::from(v[axis] < 0.0);
                    if let Some(up) = ups[axis][side] {
                        val += nu * v[axis].abs() * up[idx];
                    }
                }
                dst[idx] = val;
            }
            for &wi in &walls_of[c] {
                let w = cells.walls()[wi];
                let profile = &self.emission[w.axis][usize::from(w.sign > 0.0)];
                for (d, e) in dst.iter_mut().zip(profile) {
                    *d += wall_mass[wi] * e;
                }
            }
        });
        out
    }

    /// One full step: collisions, then transport.
    pub fn step(&self, f: &DistributionField, dt: f64, step: u64) -> Result<DistributionField, KineticError> {
        f.expect(Representation::Absolute)?;
        let next = self.transport(&self.collide(f, dt, step), dt);
        next.check_nonnegative(1e-12)?;
        Ok(next)
    }

    pub fn report(&self, t: f64, f: &DistributionField) -> Result<NormReport, KineticError> {
        norm_report(t, f, &self.cells, self.grid(), self.cfg.beta, self.cfg.p)
    }

    /// Step sizes covering [0, t_end]; the last one is shortened to land on
    /// t_end exactly.
    pub fn schedule(&self) -> Vec<f64> {
        let (dt, t_end) = (self.cfg.dt, self.cfg.t_end);
        let n = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
        (0..n).map(|i| if i + 1 == n { t_end - dt * i as f64 } else { dt }).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(d) = &self.domain {
            let vmax = 3f64.sqrt() * (self.grid().v_cut - 0.5 * self.grid().h);
            if vmax * self.cfg.dt > 0.5 * d.min_width() {
                out.push(format!(
                    "cfl: |v|max·dt = {:.3} exceeds half the minimum width {:.3}",
                    vmax * self.cfg.dt,
                    0.5 * d.min_width()
                ));
            }
        }
        out
    }

    pub fn run(&self) -> Result<TimeSeries, KineticError> {
        self.run_from(self.initial()?)
    }

    pub fn run_from(&self, f0: DistributionField) -> Result<TimeSeries, KineticError> {
        let mut f = f0;
        let mut reports = vec![self.report(0.0, &f)?];
        let mut positivity_min = f.min();
        let schedule = self.schedule();
        let mut t = 0.0;
        for (i, dt) in schedule.iter().enumerate() {
            f = self.step(&f, *dt, i as u64).map_err(|e| KineticError::Step { step: i, message: e.to_string() })?;
            t = if i + 1 == schedule.len() { self.cfg.t_end } else { t + dt };
            positivity_min = positivity_min.min(f.min());
            if (i + 1) % self.cfg.report_every == 0 || i + 1 == schedule.len() {
                reports.push(self.report(t, &f)?);
            }
        }
        Ok(TimeSeries { reports, positivity_min, iteration_gaps: Vec::new(), warnings: self.warnings(), final_state: f })
    }
}

/// F ← e^{−R dt} F + (1 − e^{−R dt})/R · Q⁺ in place.
pub fn exponential_update(f: &mut [f64], parts: &CollisionParts, dt: f64) {
    for ((x, g), r) in f.iter_mut().zip(&parts.gain).zip(&parts.loss_rate) {
        let z = r * dt;
        let damp = (-z).exp();
        // φ₁ coefficient without cancellation for small R dt
        let phi = if z > 1e-8 { -(-z).exp_m1() / r } else { dt * (1.0 - 0.5 * z) };
        *x = damp * *x + phi * g;
    }
}

/// Multiply `new` by 1 + a + b·v + c|v|² so that its discrete mass,
/// momentum and energy equal those of `old`. Skipped when the moment matrix
/// is singular (a cell near vacuum).
pub fn conserve_moments(grid: &VelocityGrid, old: &[f64], new: &mut [f64]) {
    let basis = |v: &Vec3| SVector::<f64, 5>::new(1.0, v[0], v[1], v[2], v.norm_squared());
    let mut a = SMatrix::<f64, 5, 5>::zeros();
    let mut rhs = SVector::<f64, 5>::zeros();
    for (idx, (o, n)) in old.iter().zip(new.iter()).enumerate() {
        let phi = basis(&grid.node(idx));
        a += phi * phi.transpose() * *n;
        rhs += phi * (o - n);
    }
    let Some(coef) = a.lu().solve(&rhs) else { return };
    if !coef.iter().all(|c| c.is_finite()) {
        return;
    }
    for (idx, n) in new.iter_mut().enumerate() {
        let factor = 1.0 + coef.dot(&basis(&grid.node(idx)));
        *n *= factor.max(0.0);
    }
}

/// Runs the configured simulation.
pub fn simulate(cfg: &SimConfig) -> Result<TimeSeries, KineticError> {
    Simulation::new(cfg)?.run()
}
