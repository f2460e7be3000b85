//! Smoothed proximal-gradient path for large problems.
//!
//! The check loss is Huberized with width `h`,
//! `ρ_h(u) = ½(H_h(u) + (2τ−1)u)` where `H_h` is the Huber function, and
//! the weighted ℓ1 term is handled by soft-thresholding (FISTA). The width
//! shrinks geometrically across stages. The final iterate seeds a vertex
//! basis from its smallest residuals, and the exact solver finishes from
//! there so the returned fit always carries a certificate.

use super::simplex::{initial_basis_by_pivoting, Reduced};

const STAGE_ITERS: usize = 300;
const SHRINK: f64 = 0.2;

/// Approximate minimizer of the smoothed objective.
pub(crate) fn smoothed_minimizer(prob: &Reduced<'_>, max_iter: usize) -> Vec<f64> {
    let (n, d) = (prob.n, prob.d);
    let tau = prob.tau;
    let lmax = gram_spectral_norm(prob);
    let mut sorted = prob.y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread = (sorted[(3 * n) / 4] - sorted[n / 4]).abs().max(1e-8);
    let scale = sorted
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-300);

    let mut beta = vec![0.0; d];
    beta[0] = sorted[((tau * n as f64) as usize).min(n - 1)];
    let mut h = 0.5 * spread;
    let mut used = 0;
    let mut resid = vec![0.0; n];
    let mut grad = vec![0.0; d];
    while h > 1e-7 * scale && used < max_iter {
        let step = 2.0 * h / lmax;
        let mut prev = beta.clone();
        let mut momentum = beta.clone();
        let mut t = 1.0f64;
        for _ in 0..STAGE_ITERS.min(max_iter - used) {
            used += 1;
            for i in 0..n {
                resid[i] = prob.y[i] - dot(&prob.z[i * d..(i + 1) * d], &momentum);
            }
            grad.fill(0.0);
            for i in 0..n {
                let psi = 0.5 * ((resid[i] / h).clamp(-1.0, 1.0) + 2.0 * tau - 1.0);
                for (g, zv) in grad.iter_mut().zip(&prob.z[i * d..(i + 1) * d]) {
                    *g -= psi * zv;
                }
            }
            let mut next: Vec<f64> = momentum
                .iter()
                .zip(&grad)
                .map(|(b, g)| b - step * g)
                .collect();
            for (j, c) in prob.pen.iter().enumerate() {
                let v = next[j + 1];
                next[j + 1] = v.signum() * (v.abs() - step * c).max(0.0);
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let w = (t - 1.0) / t_next;
            for j in 0..d {
                momentum[j] = next[j] + w * (next[j] - prev[j]);
            }
            prev = next;
            t = t_next;
        }
        beta = prev;
        h *= SHRINK;
    }
    beta
}

/// Vertex basis built from the rows the smoothed iterate nearly interpolates.
pub(crate) fn crossover_basis(prob: &Reduced<'_>, beta: &[f64]) -> Option<Vec<usize>> {
    let (n, d) = (prob.n, prob.d);
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            (
                (prob.y[i] - dot(&prob.z[i * d..(i + 1) * d], beta)).abs(),
                i,
            )
        })
        .collect();
    for t in 0..prob.pen.len() {
        order.push((beta[t + 1].abs(), n + 2 * t));
        order.push((beta[t + 1].abs(), n + 2 * t + 1));
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let candidates: Vec<usize> = order.into_iter().map(|(_, i)| i).collect();
    initial_basis_by_pivoting(prob, &candidates).ok()
}

/// Largest eigenvalue of ZᵀZ by power iteration, padded upward.
fn gram_spectral_norm(prob: &Reduced<'_>) -> f64 {
    let (n, d) = (prob.n, prob.d);
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut est = 0.0;
    for _ in 0..50 {
        let mut w = vec![0.0; d];
        for i in 0..n {
            let row = &prob.z[i * d..(i + 1) * d];
            let s = dot(row, &v);
            for (wv, zv) in w.iter_mut().zip(row) {
                *wv += s * zv;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        est = norm;
        for (vv, wv) in v.iter_mut().zip(&w) {
            *vv = wv / norm;
        }
    }
    est * 1.05
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
