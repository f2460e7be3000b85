//! Subgradient optimality certificate for the penalized objective.
//!
//! At a solution with residuals `r_i` there must be `ψ_i ∈ [τ−1, τ]`, equal
//! to `τ − 1{r_i < 0}` away from ties, such that (all sums scaled by 1/n)
//!
//! * intercept: `|Σ ψ_i| ≤ tol`
//! * nonzero slope j: `|Σ x_ij ψ_i − sign(β_j) c_j| ≤ tol`
//! * zero slope j: `|Σ x_ij ψ_i| ≤ c_j + tol`
//!
//! A slope whose largest fitted contribution is below the tie tolerance
//! counts as zero.
//!
//! with `c_j = λ √(τ(1−τ)) σ̂_j`. The residual reported is the largest
//! violation over all conditions.

use crate::data::StandardizedDesign;

/// Residuals within `TIE_REL * max|y|` of zero count as ties.
pub const TIE_REL: f64 = 1e-9;

pub(crate) fn tie_tolerance(y: &[f64]) -> f64 {
    let s = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    TIE_REL * if s > 0.0 { s } else { 1.0 }
}

/// Largest violation of the optimality conditions at `(intercept, slopes)`.
///
/// `psi_hint` supplies subgradient values for tied residuals (for example
/// the solver's dual values); without it tied values are chosen by a
/// projected-gradient feasibility pass.
pub fn kkt_residual(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    lambda: f64,
    intercept: f64,
    slopes: &[f64],
    psi_hint: Option<&[f64]>,
) -> f64 {
    let n = sd.n();
    let p = sd.p();
    let tie = tie_tolerance(y);
    let active = sd.active_columns();
    let scale = lambda * (tau * (1.0 - tau)).sqrt();

    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - intercept - dot(sd.row(i), slopes))
        .collect();
    let mut psi = vec![0.0; n];
    let mut ties = Vec::new();
    for i in 0..n {
        psi[i] = if resid[i] > tie {
            tau
        } else if resid[i] < -tie {
            tau - 1.0
        } else {
            ties.push(i);
            psi_hint.map_or(tau - 0.5, |h| h[i].clamp(tau - 1.0, tau))
        };
    }

    // Condition rows: intercept first, then active columns.
    let targets: Vec<Target> = std::iter::once(Target::Equal(0.0))
        .chain(active.iter().map(|&j| {
            let c = scale * sd.sigma_hat()[j] / n as f64;
            let reach = (0..n).fold(0.0f64, |a, i| a.max(sd.xc()[i * p + j].abs()));
            if slopes[j].abs() * reach > tie {
                Target::Equal(slopes[j].signum() * c)
            } else {
                Target::Within(c)
            }
        }))
        .collect();
    let coord = |i: usize, row: usize| -> f64 {
        if row == 0 {
            1.0
        } else {
            sd.xc()[i * p + active[row - 1]]
        }
    };

    if psi_hint.is_none() && !ties.is_empty() {
        feasibility_pass(&mut psi, &ties, &targets, n, tau, &coord);
    }

    let mut worst = 0.0f64;
    for (row, target) in targets.iter().enumerate() {
        let s: f64 = (0..n).map(|i| coord(i, row) * psi[i]).sum::<f64>() / n as f64;
        worst = worst.max(target.violation(s));
    }
    // Constant columns must stay pinned at zero.
    for j in 0..p {
        if sd.constant_columns()[j] && slopes[j] != 0.0 {
            worst = worst.max(f64::INFINITY);
        }
    }
    worst
}

#[derive(Clone, Copy)]
enum Target {
    Equal(f64),
    Within(f64),
}

impl Target {
    fn violation(self, s: f64) -> f64 {
        match self {
            Target::Equal(t) => (s - t).abs(),
            Target::Within(c) => (s.abs() - c).max(0.0),
        }
    }

    /// Signed excess whose square is the penalty used by the feasibility pass.
    fn excess(self, s: f64) -> f64 {
        match self {
            Target::Equal(t) => s - t,
            Target::Within(c) => s.signum() * (s.abs() - c).max(0.0),
        }
    }
}

/// Projected gradient on the tied subgradient values, minimizing the sum of
/// squared condition violations over the box `[τ−1, τ]`.
fn feasibility_pass(
    psi: &mut [f64],
    ties: &[usize],
    targets: &[Target],
    n: usize,
    tau: f64,
    coord: &dyn Fn(usize, usize) -> f64,
) {
    let nf = n as f64;
    let lip: f64 = ties
        .iter()
        .map(|&i| (0..targets.len()).map(|r| coord(i, r).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (nf * nf);
    if lip == 0.0 {
        return;
    }
    let step = 1.0 / lip;
    let mut sums: Vec<f64> = (0..targets.len())
        .map(|r| (0..n).map(|i| coord(i, r) * psi[i]).sum::<f64>())
        .collect();
    for _ in 0..5000 {
        let excess: Vec<f64> = targets
            .iter()
            .zip(&sums)
            .map(|(t, s)| t.excess(s / nf))
            .collect();
        if excess.iter().all(|e| e.abs() < 1e-14) {
            break;
        }
        for &i in ties {
            let grad: f64 = excess
                .iter()
                .enumerate()
                .map(|(r, e)| e * coord(i, r))
                .sum::<f64>()
                / nf;
            let new = (psi[i] - step * grad).clamp(tau - 1.0, tau);
            let diff = new - psi[i];
            if diff != 0.0 {
                for (r, s) in sums.iter_mut().enumerate() {
                    *s += diff * coord(i, r);
                }
                psi[i] = new;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
