//! Phase-space storage: spatial cells over a level-set domain times the
//! velocity grid.

use crate::collision::VelocityGrid;
use crate::error::KineticError;
use crate::geometry::LevelSetDomain;
use crate::kinematics::{maxwellian, maxwellian_sqrt, weight_w, Vec3};

/// A wall face of the cell union: the face of `cell` on side `sign` of
/// `axis`, whose neighbour lies outside the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFace {
    pub cell: usize,
    pub axis: usize,
    /// +1.0 or −1.0; the outward normal is sign·e_axis.
    pub sign: f64,
}

impl WallFace {
    pub fn normal(&self) -> Vec3 {
        let mut n = Vec3::zeros();
        n[self.axis] = self.sign;
        n
    }
}

/// Uniform cubic cells over the bounding box; a cell belongs to the domain
/// when its centre does. A homogeneous grid is a single unit-volume cell.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub n: usize,
    pub lo: Vec3,
    pub dx: f64,
    /// Volume of each interior cell.
    pub volume: f64,
    /// Face area between neighbouring cells.
    pub face_area: f64,
    centers: Vec<Vec3>,
    coords: Vec<[usize; 3]>,
    /// Lattice → interior cell index.
    lookup: Vec<Option<usize>>,
    /// Per interior cell and axis: neighbour on the − and + side.
    neighbours: Vec<[[Option<usize>; 2]; 3]>,
    walls: Vec<WallFace>,
}

impl CellGrid {
    pub fn homogeneous() -> Self {
        CellGrid {
            n: 1,
            lo: Vec3::zeros(),
            dx: 1.0,
            volume: 1.0,
            face_area: 1.0,
            centers: vec![Vec3::zeros()],
            coords: vec![[0, 0, 0]],
            lookup: vec![Some(0)],
            neighbours: vec![[[None; 2]; 3]],
            walls: Vec::new(),
        }
    }

    /// `n` cells per axis on the cube circumscribing the domain's box.
    pub fn over_domain(dom: &LevelSetDomain, n: usize) -> Result<Self, KineticError> {
        if n < 2 {
            return Err(KineticError::InvalidParams(format!("need at least 2 cells per axis, got {n}")));
        }
        let ext = dom.bbox_max - dom.bbox_min;
        let side = ext.max();
        let lo = (dom.bbox_min + dom.bbox_max) * 0.5 - Vec3::repeat(side * 0.5);
        let dx = side / n as f64;
        let mut lookup = vec![None; n * n * n];
        let mut centers = Vec::new();
        let mut coords = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = lo + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * dx;
                    if dom.xi(&x) < 0.0 {
                        lookup[(i * n + j) * n + k] = Some(centers.len());
                        centers.push(x);
                        coords.push([i, j, k]);
                    }
                }
            }
        }
        if centers.is_empty() {
            return Err(KineticError::InvalidParams(format!("no cell centre falls inside the domain at {n} cells per axis")));
        }
        let mut neighbours = Vec::with_capacity(centers.len());
        let mut walls = Vec::new();
        for (c, ijk) in coords.iter().enumerate() {
            let mut nb = [[None; 2]; 3];
            for axis in 0..3 {
                for (side, step) in [(0usize, -1isize), (1, 1)] {
                    let mut q = [ijk[0] as isize, ijk[1] as isize, ijk[2] as isize];
                    q[axis] += step;
                    let inside = q.iter().all(|&a| a >= 0 && a < n as isize);
                    nb[axis][side] = if inside {
                        lookup[((q[0] as usize) * n + q[1] as usize) * n + q[2] as usize]
                    } else {
                        None
                    };
                    if nb[axis][side].is_none() {
                        walls.push(WallFace { cell: c, axis, sign: step as f64 });
                    }
                }
            }
            neighbours.push(nb);
        }
        Ok(CellGrid { n, lo, dx, volume: dx * dx * dx, face_area: dx * dx, centers, coords, lookup, neighbours, walls })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.walls.is_empty() && self.len() == 1 && self.neighbours[0].iter().all(|a| a == &[None, None])
    }

    pub fn center(&self, c: usize) -> Vec3 {
        self.centers[c]
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn lattice(&self, c: usize) -> [usize; 3] {
        self.coords[c]
    }

    /// Neighbour of `c` across its face on side `sign` of `axis`.
    pub fn neighbour(&self, c: usize, axis: usize, sign: f64) -> Option<usize> {
        self.neighbours[c][axis][usize::from(sign > 0.0)]
    }

    pub fn walls(&self) -> &[WallFace] {
        &self.walls
    }

    /// Total volume of the interior cells.
    pub fn total_volume(&self) -> f64 {
        self.volume * self.len() as f64
    }

    /// Interior cell whose box contains `x`, if any.
    pub fn locate(&self, x: &Vec3) -> Option<usize> {
        let mut q = [0usize; 3];
        for a in 0..3 {
            let s = ((x[a] - self.lo[a]) / self.dx).floor();
            if s < 0.0 || s >= self.n as f64 {
                return None;
            }
            q[a] = s as usize;
        }
        self.lookup[(q[0] * self.n + q[1]) * self.n + q[2]]
    }

    /// Interior cell nearest to `x` (by centre distance).
    pub fn nearest(&self, x: &Vec3) -> usize {
        if let Some(c) = self.locate(x) {
            return c;
        }
        (0..self.len())
            .min_by(|&a, &b| (self.centers[a] - x).norm_squared().total_cmp(&(self.centers[b] - x).norm_squared()))
            .unwrap_or(0)
    }

    /// Trilinear weights over interior cells, renormalized over the corners
    /// that exist; falls back to the nearest cell.
    pub fn trilinear(&self, x: &Vec3) -> Vec<(usize, f64)> {
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] - self.lo[a]) / self.dx - 0.5;
            base[a] = s.floor() as isize;
            frac[a] = s - s.floor();
        }
        let n = self.n as isize;
        let mut out = Vec::with_capacity(8);
        let mut total = 0.0;
        for corner in 0..8 {
            let d = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
            let q: Vec<isize> = (0..3).map(|a| base[a] + d[a] as isize).collect();
            if q.iter().any(|&a| a < 0 || a >= n) {
                continue;
            }
            let w: f64 = (0..3).map(|a| if d[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
            if w <= 0.0 {
                continue;
            }
            if let Some(c) = self.lookup[((q[0] * n + q[1]) * n + q[2]) as usize] {
                out.push((c, w));
                total += w;
            }
        }
        if total <= 0.0 {
            return vec![(self.nearest(x), 1.0)];
        }
        for e in &mut out {
            e.1 /= total;
        }
        out
    }
}

/// Which unknown a field stores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representation {
    /// F itself.
    Absolute,
    /// f with F = μ + μ^{1/2} f.
    Perturbation,
    /// h = w f with w = (1+|v|²)^{β/2}.
    Weighted { beta: f64 },
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::Absolute => "absolute",
            Representation::Perturbation => "perturbation",
            Representation::Weighted { .. } => "weighted",
        }
    }
}

/// Values on interior cells × velocity nodes, cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub n_cells: usize,
    pub n_nodes: usize,
    pub repr: Representation,
    pub data: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(n_cells: usize, n_nodes: usize, repr: Representation) -> Self {
        DistributionField { n_cells, n_nodes, repr, data: vec![0.0; n_cells * n_nodes] }
    }

    pub fn from_fn(cells: &CellGrid, grid: &VelocityGrid, repr: Representation, f: impl Fn(&Vec3, &Vec3) -> f64) -> Self {
        let mut data = Vec::with_capacity(cells.len() * grid.len());
        for x in cells.centers() {
            for idx in 0..grid.len() {
                data.push(f(x, &grid.node(idx)));
            }
        }
        DistributionField { n_cells: cells.len(), n_nodes: grid.len(), repr, data }
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_nodes..(c + 1) * self.n_nodes]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n_nodes..(c + 1) * self.n_nodes]
    }

    pub fn cells(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n_nodes)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        DistributionField { data: self.data.iter().map(|x| alpha * x).collect(), ..self.clone() }
    }

    /// Error unless the field stores `want`.
    pub fn expect(&self, want: Representation) -> Result<(), KineticError> {
        if std::mem::discriminant(&self.repr) == std::mem::discriminant(&want) {
            Ok(())
        } else {
            Err(KineticError::Representation { expected: want.name(), found: self.repr.name() })
        }
    }

    /// First negative entry below `-tol`, as an error.
    pub fn check_nonnegative(&self, tol: f64) -> Result<(), KineticError> {
        match self.data.iter().position(|x| *x < -tol) {
            Some(i) => Err(KineticError::NegativeF { value: self.data[i], cell: i / self.n_nodes, node: i % self.n_nodes }),
            None => Ok(()),
        }
    }

    /// The same state in another representation.
    pub fn convert(&self, grid: &VelocityGrid, to: Representation) -> DistributionField {
        if self.repr == to {
            return self.clone();
        }
        // per node: F = a + b·u for the stored unknown u
        let affine = |r: Representation, v: &Vec3| -> (f64, f64) {
            match r {
                Representation::Absolute => (0.0, 1.0),
                Representation::Perturbation => (maxwellian(v), maxwellian_sqrt(v)),
                Representation::Weighted { beta } => (maxwellian(v), maxwellian_sqrt(v) / weight_w(v, beta)),
            }
        };
        let maps: Vec<((f64, f64), (f64, f64))> =
            grid.nodes().map(|v| (affine(self.repr, &v), affine(to, &v))).collect();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let ((a0, b0), (a1, b1)) = maps[i % self.n_nodes];
                (a0 + b0 * u - a1) / b1
            })
            .collect();
        DistributionField { data, repr: to, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_cells_and_walls() {
        let dom = LevelSetDomain::unit_ball();
        let cells = CellGrid::over_domain(&dom, 6).unwrap();
        assert!(cells.len() > 50 && cells.len() < 216);
        for (c, x) in cells.centers().iter().enumerate() {
            assert!(x.norm() < 1.0);
            assert_eq!(cells.locate(x), Some(c));
        }
        // every interior cell has six faces, each either shared or a wall
        let shared: usize = (0..cells.len())
            .map(|c| (0..3).map(|a| [-1.0, 1.0].iter().filter(|s| cells.neighbour(c, a, **s).is_some()).count()).sum::<usize>())
            .sum();
        assert_eq!(shared + cells.walls().len(), 6 * cells.len());
        for w in cells.walls() {
            assert!(cells.neighbour(w.cell, w.axis, w.sign).is_none());
        }
        // the cell union is symmetric under x ↦ −x
        let reflected = cells.centers().iter().filter(|x| cells.locate(&-**x).is_some()).count();
        assert_eq!(reflected, cells.len());
    }

    #[test]
    fn trilinear_weights_sum_to_one() {
        let cells = CellGrid::over_domain(&LevelSetDomain::unit_ball(), 5).unwrap();
        for x in [Vec3::new(0.1, 0.2, -0.3), Vec3::new(0.95, 0.0, 0.0), Vec3::new(-0.6, 0.6, 0.3)] {
            let w = cells.trilinear(&x);
            assert!((w.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-14);
        }
        let c = 7;
        let w = cells.trilinear(&cells.center(c));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].0, c);
    }

    #[test]
    fn conversions_round_trip() {
        let grid = VelocityGrid::new(3.0, 6).unwrap();
        let cells = CellGrid::homogeneous();
        let f = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |_, v| {
            maxwellian(v) * (1.0 + 0.3 * (v[0] - 0.2 * v[1]).sin())
        });
        let w = f.convert(&grid, Representation::Weighted { beta: 2.5 });
        let p = w.convert(&grid, Representation::Perturbation);
        let back = p.convert(&grid, Representation::Absolute);
        for (a, b) in f.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-15);
        }
        let mu = DistributionField::from_fn(&cells, &grid, Representation::Absolute, |_, v| maxwellian(v));
        assert!(mu.convert(&grid, Representation::Perturbation).max_abs() < 1e-18);
        assert!(p.expect(Representation::Absolute).is_err());
        assert!(w.expect(Representation::Weighted { beta: 9.0 }).is_ok());
    }
}
