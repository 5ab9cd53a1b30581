//! Monte-Carlo table of the probability that a back-time cycle is still
//! above time 0 after k flights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::estimate_nonreach_probability;
use crate::error::KineticError;
use crate::geometry::LevelSetDomain;
use crate::kinematics::Vec3;

const CYCLE_SALT: u64 = 0xc7c1_e5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub t: f64,
    pub k: usize,
    pub p_hat: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTable {
    /// Rows ordered by t, then k.
    pub rows: Vec<CycleRow>,
    pub seed: u64,
    pub n_samples: usize,
    /// p̂ non-increasing in k at each t, within 3 combined standard errors.
    pub monotone_in_k: bool,
    /// p̂ non-decreasing in t at each k, within the same allowance.
    pub monotone_in_t: bool,
}

impl CycleTable {
    pub fn get(&self, t: f64, k: usize) -> Option<&CycleRow> {
        self.rows.iter().find(|r| r.t == t && r.k == k)
    }

    /// Smallest k with p̂ below `level` at time t.
    pub fn first_k_below(&self, t: f64, level: f64) -> Option<usize> {
        self.rows.iter().filter(|r| r.t == t && r.p_hat < level).map(|r| r.k).min()
    }
}

fn within_3_sigma(hi: &CycleRow, lo: &CycleRow) -> bool {
    // `hi` is expected to be at least `lo`
    lo.p_hat <= hi.p_hat + 3.0 * (hi.stderr.powi(2) + lo.stderr.powi(2)).sqrt()
}

/// Estimates p̂(t, k) from (x, v) with `n_samples` independent cycles per
/// entry; each entry draws from its own stream.
pub fn check_cycle_probability(
    dom: &LevelSetDomain,
    x: &Vec3,
    v: &Vec3,
    t_list: &[f64],
    k_list: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<CycleTable, KineticError> {
    let mut ts = t_list.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    let pairs: Vec<(f64, usize)> = ts.iter().flat_map(|t| ks.iter().map(move |k| (*t, *k))).collect();
    let rows = pairs
        .par_iter()
        .enumerate()
        .map(|(e, &(t, k))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CYCLE_SALT);
            rng.set_stream(e as u64);
            let (p_hat, stderr) = estimate_nonreach_probability(dom, x, v, t, k, n_samples, &mut rng)?;
            Ok(CycleRow { t, k, p_hat, stderr })
        })
        .collect::<Result<Vec<_>, KineticError>>()?;
    let at = |i: usize, j: usize| &rows[i * ks.len() + j];
    let monotone_in_k = (0..ts.len()).all(|i| (1..ks.len()).all(|j| within_3_sigma(at(i, j - 1), at(i, j))));
    let monotone_in_t = (0..ks.len()).all(|j| (1..ts.len()).all(|i| within_3_sigma(at(i, j), at(i - 1, j))));
    Ok(CycleTable { rows, seed, n_samples, monotone_in_k, monotone_in_t })
}
