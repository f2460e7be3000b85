//! Independent reference implementations used only by the test suites.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small penalized quantile regression instance on an already centered
/// design (row-major `n * p`), with penalty weights `c_j` applied to the
/// unnormalized loss: `Σ ρ_τ(r_i) + Σ c_j |β_j|`.
pub struct Instance {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub pen: Vec<f64>,
}

fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

impl Instance {
    /// Unnormalized objective `Σ ρ_τ(r_i) + Σ c_j |β_j|`.
    pub fn objective(&self, b0: f64, b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let fit: f64 = b0
                + (0..self.p)
                    .map(|j| self.x[i * self.p + j] * b[j])
                    .sum::<f64>();
            s += rho(self.y[i] - fit, self.tau);
        }
        s + self
            .pen
            .iter()
            .zip(b)
            .map(|(c, v)| c * v.abs())
            .sum::<f64>()
    }
}

/// Solves a dense square system by Gaussian elimination with partial
/// pivoting; `None` when (numerically) singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-11 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exhaustive enumeration of basic solutions: every choice of `p + 1`
/// augmented rows (data rows and the `±e_j` penalty rows) that pins down a
/// unique coefficient vector. The optimum of the LP is attained at one of
/// them. Returns the minimal unnormalized objective.
pub fn enumerate_vertices(inst: &Instance) -> f64 {
    let d = inst.p + 1;
    let mut rows: Vec<(Vec<f64>, f64)> = (0..inst.n)
        .map(|i| {
            let mut r = vec![1.0];
            r.extend_from_slice(&inst.x[i * inst.p..(i + 1) * inst.p]);
            (r, inst.y[i])
        })
        .collect();
    for j in 0..inst.p {
        if inst.pen[j] > 0.0 {
            let mut r = vec![0.0; d];
            r[j + 1] = 1.0;
            rows.push((r, 0.0));
        }
    }
    let m = rows.len();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let a = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let b = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(beta) = solve_dense(a, b) {
            best = best.min(inst.objective(beta[0], &beta[1..]));
        }
        // next combination
        let mut k = d;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] != k + m - d {
                break;
            }
            if k == 0 {
                return best;
            }
        }
        idx[k] += 1;
        for t in k + 1..d {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

pub fn binomial(m: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

/// Textbook tableau simplex with Bland's rule on the standard-form LP
///
/// min  Σ c_j (b⁺_j + b⁻_j) + Σ τ u⁺_i + (1−τ) u⁻_i
/// s.t. β₀⁺ − β₀⁻ + x_iᵀ(b⁺ − b⁻) + u⁺_i − u⁻_i = y_i,  all variables ≥ 0.
///
/// Returns the minimal unnormalized objective.
pub fn tableau_simplex(inst: &Instance) -> f64 {
    let (n, p) = (inst.n, inst.p);
    let nv = 2 + 2 * p + 2 * n;
    let mut cost = vec![0.0; nv];
    for j in 0..p {
        cost[2 + j] = inst.pen[j];
        cost[2 + p + j] = inst.pen[j];
    }
    for i in 0..n {
        cost[2 + 2 * p + i] = inst.tau;
        cost[2 + 2 * p + n + i] = 1.0 - inst.tau;
    }
    let mut t = vec![vec![0.0; nv + 1]; n];
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let sign = if inst.y[i] >= 0.0 { 1.0 } else { -1.0 };
        let row = &mut t[i];
        row[0] = sign;
        row[1] = -sign;
        for j in 0..p {
            row[2 + j] = sign * inst.x[i * p + j];
            row[2 + p + j] = -sign * inst.x[i * p + j];
        }
        row[2 + 2 * p + i] = sign;
        row[2 + 2 * p + n + i] = -sign;
        row[nv] = sign * inst.y[i];
        basis[i] = if sign > 0.0 {
            2 + 2 * p + i
        } else {
            2 + 2 * p + n + i
        };
    }
    for _ in 0..1_000_000 {
        // reduced costs
        let mut entering = None;
        for j in 0..nv {
            if basis.contains(&j) {
                continue;
            }
            let rc = cost[j] - (0..n).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            if rc < -1e-11 {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else {
            return (0..n).map(|i| cost[basis[i]] * t[i][nv]).sum();
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            if t[i][e] > 1e-12 {
                let ratio = t[i][nv] / t[i][e];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (r, _) = leave.expect("LP is bounded below");
        let piv = t[r][e];
        for v in t[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[e] != 0.0 {
                let f = row[e];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        basis[r] = e;
    }
    panic!("tableau simplex did not terminate");
}

/// Minimal objective of the intercept-only problem by scanning every data
/// value as the candidate intercept (the optimum sits at one of them).
pub fn intercept_only_scan(y: &[f64], tau: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for &c in y {
        let obj: f64 = y.iter().map(|v| rho(v - c, tau)).sum();
        if obj < best.0 {
            best = (obj, c);
        }
    }
    best
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with centered uniform covariates and heavy-ish noise.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    tau: f64,
    lambda: f64,
) -> Instance {
    let mut x: Vec<f64> = (0..n * p)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    for j in 0..p {
        let mean = (0..n).map(|i| x[i * p + j]).sum::<f64>() / n as f64;
        for i in 0..n {
            x[i * p + j] -= mean;
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = (0..p.min(2)).map(|j| x[i * p + j]).sum();
            let u: f64 = rng.random::<f64>();
            signal + (u / (1.0 - u)).ln() + 1.0
        })
        .collect();
    let scale = lambda * (tau * (1.0 - tau)).sqrt();
    let pen = (0..p)
        .map(|j| {
            let ms = (0..n).map(|i| x[i * p + j].powi(2)).sum::<f64>() / n as f64;
            scale * ms.sqrt()
        })
        .collect();
    Instance {
        x,
        y,
        n,
        p,
        tau,
        pen,
    }
}

/// Two-sided Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in s.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        p += 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * kf * kf * lam * lam).exp();
    }
    (d, p.clamp(0.0, 1.0))
}
