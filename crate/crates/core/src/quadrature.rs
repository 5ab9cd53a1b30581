//! One-dimensional Gauss rules by the Golub–Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights, nodes ascending.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Gauss–Legendre on [−1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    }).collect();
    let mut r = golub_welsch(&diag, &off, 2.0);
    // symmetrize away eigen-solver noise
    for i in 0..n / 2 {
        let x = 0.5 * (r.nodes[n - 1 - i] - r.nodes[i]);
        let w = 0.5 * (r.weights[i] + r.weights[n - 1 - i]);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        r.nodes[n / 2] = 0.0;
    }
    r
}

/// Gauss–Hermite for the weight e^{−x²/2} on ℝ (weights sum to √(2π)).
pub fn gauss_hermite_prob(n: usize) -> Rule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&diag, &off, (2.0 * std::f64::consts::PI).sqrt())
}

/// Gauss–Laguerre for the weight e^{−x} on [0, ∞).
pub fn gauss_laguerre(n: usize) -> Rule {
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    golub_welsch(&diag, &off, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(6);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        // degree 10 is within 2n − 1 = 11
        let m: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(10)).sum();
        assert!((m - 2.0 / 11.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite_prob(10);
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let m0: f64 = r.weights.iter().sum();
        let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m0 - norm).abs() < 1e-12);
        assert!((m4 - 3.0 * norm).abs() < 1e-11);
    }

    #[test]
    fn laguerre_moments() {
        let r = gauss_laguerre(8);
        let m3: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(3)).sum();
        assert!((m3 - 6.0).abs() < 1e-11);
    }
}
