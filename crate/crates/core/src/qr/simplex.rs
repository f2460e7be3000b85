//! Exact solver for weighted quantile regression with an ℓ1 penalty.
//!
//! The penalty `c_t |β_t|` is rewritten as two pseudo-observations with
//! response 0 and covariate `±e_t` carrying weight `c_t`, because
//! `c ρ_τ(β) + c ρ_τ(−β) = c |β|`. The augmented problem is then a plain
//! weighted quantile regression and is solved on its vertices: the current
//! point interpolates `d` rows (the basis), each iteration releases one basis
//! row along an edge and performs an exact line search over the kinks of the
//! piecewise-linear objective, stopping at the kink where the slope turns
//! nonnegative. The row owning that kink enters the basis.
//!
//! Degenerate vertices are avoided by a deterministic perturbation of the
//! responses far below the certificate tolerance; the final coefficients
//! are recomputed from the unperturbed responses on the optimal basis.

use nalgebra::DMatrix;

use crate::error::QrError;

/// Reduced problem over the active columns. Column 0 of `z` is the intercept.
pub(crate) struct Reduced<'a> {
    /// Real rows, row-major `n * d`.
    pub z: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub y: &'a [f64],
    /// Penalty weight per slope (`d - 1` entries), empty when unpenalized.
    pub pen: Vec<f64>,
    pub tau: f64,
}

impl Reduced<'_> {
    pub fn penalized(&self) -> bool {
        !self.pen.is_empty()
    }

    /// Number of augmented rows.
    pub fn m(&self) -> usize {
        self.n + 2 * self.pen.len()
    }

    fn weight(&self, i: usize) -> f64 {
        if i < self.n {
            1.0
        } else {
            self.pen[(i - self.n) / 2]
        }
    }

    fn dot(&self, i: usize, v: &[f64]) -> f64 {
        if i < self.n {
            dot(&self.z[i * self.d..(i + 1) * self.d], v)
        } else {
            let (t, s) = pseudo(i - self.n);
            s * v[t + 1]
        }
    }

    /// Adds `alpha * row_i` into `acc`.
    fn axpy(&self, i: usize, alpha: f64, acc: &mut [f64]) {
        if i < self.n {
            for (a, v) in acc.iter_mut().zip(&self.z[i * self.d..(i + 1) * self.d]) {
                *a += alpha * v;
            }
        } else {
            let (t, s) = pseudo(i - self.n);
            acc[t + 1] += alpha * s;
        }
    }

    fn row_into(&self, i: usize, out: &mut [f64]) {
        if i < self.n {
            out.copy_from_slice(&self.z[i * self.d..(i + 1) * self.d]);
        } else {
            out.fill(0.0);
            let (t, s) = pseudo(i - self.n);
            out[t + 1] = s;
        }
    }

    fn response(&self, i: usize) -> f64 {
        if i < self.n {
            self.y[i]
        } else {
            0.0
        }
    }
}

/// Pseudo row offset -> (slope index, sign).
fn pseudo(offset: usize) -> (usize, f64) {
    (
        offset / 2,
        if offset.is_multiple_of(2) { 1.0 } else { -1.0 },
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic value in (-1, 1) for row `i`.
fn jitter(i: usize) -> f64 {
    let mut z = (i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ((z >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

/// Relative size of the response perturbation.
const JITTER: f64 = 1e-10;
/// Basis inverse is rebuilt from scratch every `max(REFACTOR_MIN, d)`
/// pivots.
const REFACTOR_MIN: usize = 64;

pub(crate) struct Solution {
    /// Intercept followed by the active slopes.
    pub beta: Vec<f64>,
    /// Subgradient value per real row, from the dual of the final basis.
    pub psi: Vec<f64>,
    pub basis: Vec<usize>,
    pub n_iter: usize,
    pub converged: bool,
}

pub(crate) fn solve(
    prob: &Reduced<'_>,
    warm: Option<&[usize]>,
    max_iter: usize,
) -> Result<Solution, QrError> {
    let d = prob.d;
    let m = prob.m();
    let n = prob.n;
    if !prob.penalized() && n < d {
        return Err(QrError::RankDeficient);
    }
    let scale = prob.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let yp: Vec<f64> = (0..m)
        .map(|i| prob.response(i) + JITTER * scale * jitter(i))
        .collect();

    let basis = match warm.filter(|b| valid_warm(prob, b)) {
        Some(b) => b.to_vec(),
        None if prob.penalized() => initial_penalized_basis(prob, &yp),
        None => initial_basis_by_pivoting(prob, &(0..n).collect::<Vec<_>>())?,
    };
    let mut state = State::new(prob, basis, &yp)?;
    let refactor_every = REFACTOR_MIN.max(d);
    let mut converged = false;
    let mut n_iter = 0;
    let mut kinks: Vec<(f64, f64, usize)> = Vec::with_capacity(m);
    let mut a = vec![0.0; m];
    let mut g = vec![0.0; d];
    let mut delta = vec![0.0; d];

    while n_iter < max_iter {
        if n_iter > 0 && n_iter % refactor_every == 0 {
            state.refactor(prob, &yp)?;
        }
        g.copy_from_slice(&state.grad);

        // Edge selection: steepest edge over the 2d directions ±B⁻¹e_k.
        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_score = 0.0;
        for k in 0..d {
            let col = state.col(k);
            let u = dot(col, &g);
            let w = prob.weight(state.basis[k]);
            let norm = dot(col, col).sqrt();
            for (sigma, slope) in [(1.0, w * (1.0 - prob.tau) - u), (-1.0, w * prob.tau + u)] {
                if slope < -1e-11 * (w + u.abs()) {
                    let score = slope / norm;
                    if score < best_score {
                        best_score = score;
                        best = Some((k, sigma, slope));
                    }
                }
            }
        }
        let Some((k, sigma, slope0)) = best else {
            converged = true;
            break;
        };
        n_iter += 1;

        for (dv, c) in delta.iter_mut().zip(state.col(k)) {
            *dv = sigma * c;
        }
        kinks.clear();
        for i in 0..m {
            let ai = prob.dot(i, &delta);
            a[i] = ai;
            if state.is_basic[i] || ai == 0.0 {
                continue;
            }
            let t = state.resid[i] / ai;
            if t > 0.0 {
                kinks.push((t, prob.weight(i) * ai.abs(), i));
            }
        }
        kinks.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        let mut slope = slope0;
        let mut stop = None;
        for &(t, inc, i) in &kinks {
            slope += inc;
            if slope >= 0.0 {
                stop = Some((t, i));
                break;
            }
        }
        let Some((step, entering)) = stop else {
            // The objective is bounded below, so an endless descent ray only
            // arises from round-off. Rebuild and retry once before giving up.
            state.refactor(prob, &yp)?;
            continue;
        };

        for (b, dv) in state.beta.iter_mut().zip(&delta) {
            *b += step * dv;
        }
        let leaving = state.basis[k];
        // Rows whose residual changes sign move between the two sides of
        // the gradient sum; everything else is unchanged.
        for &(_, _, i) in &kinks {
            let old = state.resid[i];
            let new = old - step * a[i];
            if i != entering && (old > 0.0) != (new > 0.0) {
                let delta_psi = if new > 0.0 { 1.0 } else { -1.0 };
                prob.axpy(i, prob.weight(i) * delta_psi, &mut state.grad);
            }
        }
        for (r, ai) in state.resid.iter_mut().zip(&a) {
            *r -= step * ai;
        }
        let old_entering = state.resid[entering] + step * a[entering];
        let psi_entering = if old_entering > 0.0 {
            prob.tau
        } else {
            prob.tau - 1.0
        };
        prob.axpy(
            entering,
            -prob.weight(entering) * psi_entering,
            &mut state.grad,
        );
        state.resid[entering] = 0.0;
        let psi_leaving = if state.resid[leaving] > 0.0 {
            prob.tau
        } else {
            prob.tau - 1.0
        };
        prob.axpy(leaving, prob.weight(leaving) * psi_leaving, &mut state.grad);
        state.pivot(prob, k, entering)?;
    }

    state.refactor(prob, &yp)?;
    // Dual values from the perturbed residual signs.
    let mut psi_all = vec![0.0; m];
    for i in 0..m {
        if !state.is_basic[i] {
            psi_all[i] = if state.resid[i] > 0.0 {
                prob.tau
            } else {
                prob.tau - 1.0
            };
        }
    }
    g.fill(0.0);
    for i in 0..m {
        if !state.is_basic[i] {
            prob.axpy(i, prob.weight(i) * psi_all[i], &mut g);
        }
    }
    for k in 0..d {
        let row = state.basis[k];
        let w = prob.weight(row);
        psi_all[row] = -dot(state.col(k), &g) / w;
    }

    // Coefficients on the unperturbed responses.
    let y_basis: Vec<f64> = state.basis.iter().map(|&i| prob.response(i)).collect();
    let mut beta = vec![0.0; d];
    for (k, yk) in y_basis.iter().enumerate() {
        for (b, c) in beta.iter_mut().zip(state.col(k)) {
            *b += c * yk;
        }
    }
    for &row in &state.basis {
        if row >= n {
            let (t, _) = pseudo(row - n);
            beta[t + 1] = 0.0;
        }
    }
    psi_all.truncate(n);
    Ok(Solution {
        beta,
        psi: psi_all,
        basis: state.basis,
        n_iter,
        converged,
    })
}

fn valid_warm(prob: &Reduced<'_>, basis: &[usize]) -> bool {
    let m = prob.m();
    if basis.len() != prob.d || basis.iter().any(|&i| i >= m) {
        return false;
    }
    let mut seen = vec![false; m];
    basis
        .iter()
        .all(|&i| !std::mem::replace(&mut seen[i], true))
}

/// Every slope pinned by one of its pseudo rows, intercept by a real row
/// near the target quantile of the response. Within each pseudo pair the
/// row whose dual is feasible at this vertex is chosen, which makes the
/// start optimal whenever the all-zero solution is.
fn initial_penalized_basis(prob: &Reduced<'_>, yp: &[f64]) -> Vec<usize> {
    let (n, d) = (prob.n, prob.d);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| yp[a].total_cmp(&yp[b]));
    let pos = ((prob.tau * n as f64).ceil() as usize).clamp(1, n) - 1;
    let anchor = order[pos];
    let q = yp[anchor];
    let mut g = vec![0.0; d];
    for i in (0..n).filter(|&i| i != anchor) {
        let psi = if yp[i] - q > 0.0 {
            prob.tau
        } else {
            prob.tau - 1.0
        };
        prob.axpy(i, psi, &mut g);
    }
    let mut basis = vec![anchor];
    basis.extend((0..d - 1).map(|t| {
        let plus = n + 2 * t;
        let other_positive = yp[plus] + yp[plus + 1] > 0.0;
        if (g[t + 1] >= 0.0) == other_positive {
            plus
        } else {
            plus + 1
        }
    }));
    basis
}

/// Picks `d` linearly independent rows, scanning `candidates` in order and
/// keeping a row when its component orthogonal to the rows already kept is
/// not negligible.
pub(crate) fn initial_basis_by_pivoting(
    prob: &Reduced<'_>,
    candidates: &[usize],
) -> Result<Vec<usize>, QrError> {
    let d = prob.d;
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut basis = Vec::with_capacity(d);
    let mut row = vec![0.0; d];
    for &i in candidates {
        prob.row_into(i, &mut row);
        let norm0 = dot(&row, &row).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for q in &ortho {
            let c = dot(q, &row);
            for (r, qv) in row.iter_mut().zip(q) {
                *r -= c * qv;
            }
        }
        let norm = dot(&row, &row).sqrt();
        if norm > 1e-8 * norm0 {
            ortho.push(row.iter().map(|v| v / norm).collect());
            basis.push(i);
            if basis.len() == d {
                return Ok(basis);
            }
        }
    }
    Err(QrError::RankDeficient)
}

struct State {
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// B⁻¹ stored column-major: column k is the edge direction of basis slot k.
    binv: Vec<f64>,
    beta: Vec<f64>,
    resid: Vec<f64>,
    /// Σ over nonbasic rows of `w_i ψ_i row_i`, kept current across pivots.
    grad: Vec<f64>,
    d: usize,
    scratch: Vec<f64>,
}

impl State {
    fn new(prob: &Reduced<'_>, basis: Vec<usize>, yp: &[f64]) -> Result<Self, QrError> {
        let m = prob.m();
        let mut is_basic = vec![false; m];
        for &i in &basis {
            is_basic[i] = true;
        }
        let mut s = Self {
            basis,
            is_basic,
            binv: vec![0.0; prob.d * prob.d],
            beta: vec![0.0; prob.d],
            resid: vec![0.0; m],
            grad: vec![0.0; prob.d],
            d: prob.d,
            scratch: vec![0.0; prob.d],
        };
        s.refactor(prob, yp)?;
        Ok(s)
    }

    fn col(&self, k: usize) -> &[f64] {
        &self.binv[k * self.d..(k + 1) * self.d]
    }

    fn refactor(&mut self, prob: &Reduced<'_>, yp: &[f64]) -> Result<(), QrError> {
        let d = self.d;
        let n = prob.n;
        // Pseudo rows pin single coordinates, so only the block of real
        // basis rows against the unpinned coordinates needs a dense inverse.
        let mut pinned = vec![None; d];
        let mut real_slots = Vec::new();
        for (k, &i) in self.basis.iter().enumerate() {
            if i < n {
                real_slots.push(k);
            } else {
                let (t, sign) = pseudo(i - n);
                if pinned[t + 1].replace((k, sign)).is_some() {
                    return Err(QrError::RankDeficient);
                }
            }
        }
        let free: Vec<usize> = (0..d).filter(|&c| pinned[c].is_none()).collect();
        let r = real_slots.len();
        if free.len() != r {
            return Err(QrError::RankDeficient);
        }
        let mut block = DMatrix::<f64>::zeros(r, r);
        for (a, &k) in real_slots.iter().enumerate() {
            let row = &prob.z[self.basis[k] * d..(self.basis[k] + 1) * d];
            for (b, &c) in free.iter().enumerate() {
                block[(a, b)] = row[c];
            }
        }
        let inv = if r == 0 {
            block
        } else {
            block.lu().try_inverse().ok_or(QrError::RankDeficient)?
        };
        self.binv.fill(0.0);
        for (a, &k) in real_slots.iter().enumerate() {
            let col = &mut self.binv[k * d..(k + 1) * d];
            for (b, &c) in free.iter().enumerate() {
                col[c] = inv[(b, a)];
            }
        }
        for (t, slot) in pinned.iter().enumerate() {
            let Some((k, sign)) = *slot else { continue };
            let col = &mut self.binv[k * d..(k + 1) * d];
            col[t] = 1.0 / sign;
            // Real rows must stay interpolated: v_F = -M⁻¹ Z_{R,t} / sign.
            for (b, &c) in free.iter().enumerate() {
                let mut acc = 0.0;
                for (a, &kr) in real_slots.iter().enumerate() {
                    acc += inv[(b, a)] * prob.z[self.basis[kr] * d + t];
                }
                col[c] = -acc / sign;
            }
        }
        self.beta.fill(0.0);
        for (k, &i) in self.basis.iter().enumerate() {
            let yk = yp[i];
            for (bv, c) in self.beta.iter_mut().zip(&self.binv[k * d..(k + 1) * d]) {
                *bv += c * yk;
            }
        }
        for (i, r) in self.resid.iter_mut().enumerate() {
            *r = if self.is_basic[i] {
                0.0
            } else {
                yp[i] - prob.dot(i, &self.beta)
            };
        }
        let mut g = std::mem::take(&mut self.grad);
        g.fill(0.0);
        let tau = prob.tau;
        for i in 0..prob.m() {
            if !self.is_basic[i] {
                let psi = if self.resid[i] > 0.0 { tau } else { tau - 1.0 };
                prob.axpy(i, prob.weight(i) * psi, &mut g);
            }
        }
        self.grad = g;
        Ok(())
    }

    /// Replaces basis slot `k` by row `entering` and updates B⁻¹ in place.
    fn pivot(&mut self, prob: &Reduced<'_>, k: usize, entering: usize) -> Result<(), QrError> {
        let d = self.d;
        let mut v = std::mem::take(&mut self.scratch);
        for c in 0..d {
            v[c] = prob.dot(entering, &self.binv[c * d..(c + 1) * d]);
        }
        let piv = v[k];
        if piv.abs() < 1e-300 {
            self.scratch = v;
            return Err(QrError::RankDeficient);
        }
        let (head, rest) = self.binv.split_at_mut(k * d);
        let (colk, tail) = rest.split_at_mut(d);
        for x in colk.iter_mut() {
            *x /= piv;
        }
        for (c, col) in head.chunks_exact_mut(d).enumerate() {
            let f = v[c];
            if f != 0.0 {
                for (x, ck) in col.iter_mut().zip(colk.iter()) {
                    *x -= f * ck;
                }
            }
        }
        for (c, col) in tail.chunks_exact_mut(d).enumerate() {
            let f = v[k + 1 + c];
            if f != 0.0 {
                for (x, ck) in col.iter_mut().zip(colk.iter()) {
                    *x -= f * ck;
                }
            }
        }
        self.scratch = v;
        self.is_basic[self.basis[k]] = false;
        self.is_basic[entering] = true;
        self.basis[k] = entering;
        Ok(())
    }
}
