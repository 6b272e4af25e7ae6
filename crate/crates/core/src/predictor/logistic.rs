// SPDX-License-Identifier: MIT OR Apache-2.0

//! Class-balanced, L2-regularized logistic regression.
//!
//! Minimizes
//!
//! ```text
//! Σ_i w_{y_i} · log(1 + exp(-ỹ_i (β·x_i + b))) + ‖β‖² / (2C)
//! ```
//!
//! with `ỹ ∈ {-1, +1}`, class weights `w_c = n / (2 n_c)` and an unpenalized
//! bias, by Newton's method. Each Newton system is solved inexactly with
//! conjugate gradients on Hessian-vector products, so the cost per step is
//! `O(n·d)` and wide design matrices stay cheap.

use crate::error::{AuditError, Result};

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_rows.checked_mul(n_cols) != Some(data.len()) {
            return Err(AuditError::Shape(format!(
                "{n_rows} x {n_cols} design needs {} values, got {}",
                n_rows.saturating_mul(n_cols),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AuditError::Domain("design matrix has non-finite values".into()));
        }
        Ok(Design {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Design {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// Per-column mean and population SD (SD floored at 1 for constant columns).
    pub fn column_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_rows.max(1) as f64;
        let mut mean = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for (m, v) in mean.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for ((s, v), m) in var.iter_mut().zip(self.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        (mean, sd)
    }

    pub fn standardized(&self, mean: &[f64], sd: &[f64]) -> Design {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.n_cols) {
            for ((v, m), s) in row.iter_mut().zip(mean).zip(sd) {
                *v = (*v - m) / s;
            }
        }
        Design {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data,
        }
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Inverse regularization strength `C > 0`.
    pub c_reg: f64,
    /// Convergence threshold on the gradient's infinity norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Z-score columns with training-fold moments before fitting.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            c_reg: 1.0,
            tol: 1e-6,
            max_iter: 10_000,
            standardize: false,
        }
    }
}

/// Fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c_reg: f64,
    pub converged: bool,
    pub final_gradient_norm: f64,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn decision_function(&self, x: &Design) -> Vec<f64> {
        (0..x.n_rows()).map(|r| self.decision(x.row(r))).collect()
    }

    pub fn predict_proba(&self, x: &Design) -> Vec<f64> {
        self.decision_function(x).into_iter().map(sigmoid).collect()
    }
}

/// `w_c = n / (2 n_c)` as `(weight for label false, weight for label true)`.
pub fn class_weights(y: &[bool]) -> (f64, f64) {
    let n = y.len() as f64;
    let n_pos = y.iter().filter(|&&v| v).count() as f64;
    let n_neg = n - n_pos;
    (n / (2.0 * n_neg), n / (2.0 * n_pos))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))` without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a Design,
    y: &'a [bool],
    sample_w: Vec<f64>,
    inv_c: f64,
}

impl<'a> Problem<'a> {
    fn new(x: &'a Design, y: &'a [bool], c_reg: f64) -> Self {
        let (w_neg, w_pos) = class_weights(y);
        Problem {
            x,
            y,
            sample_w: y.iter().map(|&v| if v { w_pos } else { w_neg }).collect(),
            inv_c: 1.0 / c_reg,
        }
    }

    fn margins(&self, beta: &[f64], bias: f64) -> Vec<f64> {
        (0..self.x.n_rows())
            .map(|r| dot(beta, self.x.row(r)) + bias)
            .collect()
    }

    fn objective_at(&self, z: &[f64], beta: &[f64]) -> f64 {
        let loss: f64 = z
            .iter()
            .zip(self.y)
            .zip(&self.sample_w)
            .map(|((&zi, &yi), &w)| {
                let signed = if yi { zi } else { -zi };
                w * log1p_exp_neg(signed)
            })
            .sum();
        loss + 0.5 * self.inv_c * dot(beta, beta)
    }

    /// Gradient over `[β..., b]`.
    fn gradient(&self, z: &[f64], beta: &[f64]) -> Vec<f64> {
        let d = self.x.n_cols();
        let mut g = vec![0.0; d + 1];
        for (r, (&zi, &yi)) in z.iter().zip(self.y).enumerate() {
            let resid = self.sample_w[r] * (sigmoid(zi) - f64::from(u8::from(yi)));
            for (gj, xj) in g[..d].iter_mut().zip(self.x.row(r)) {
                *gj += resid * xj;
            }
            g[d] += resid;
        }
        for (gj, bj) in g[..d].iter_mut().zip(beta) {
            *gj += self.inv_c * bj;
        }
        g
    }

    /// Hessian-vector product with curvature weights `h_i = w_i σ(1-σ)`.
    fn hess_vec(&self, h: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.x.n_cols();
        let mut out = vec![0.0; d + 1];
        for (r, &hr) in h.iter().enumerate() {
            let row = self.x.row(r);
            let xv = dot(row, &v[..d]) + v[d];
            let s = hr * xv;
            for (oj, xj) in out[..d].iter_mut().zip(row) {
                *oj += s * xj;
            }
            out[d] += s;
        }
        for (oj, vj) in out[..d].iter_mut().zip(&v[..d]) {
            *oj += self.inv_c * vj;
        }
        // keeps the bias direction positive definite when all σ saturate
        out[d] += 1e-12 * v[d];
        out
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `H s = -g` approximately by conjugate gradients.
fn newton_direction(p: &Problem, h: &[f64], g: &[f64]) -> Vec<f64> {
    let dim = g.len();
    let g_norm = dot(g, g).sqrt();
    let forcing = g_norm.sqrt().min(0.1);
    let target = forcing * g_norm;

    let mut s = vec![0.0; dim];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut dir = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..(2 * dim).max(50) {
        if rr.sqrt() <= target {
            break;
        }
        let hd = p.hess_vec(h, &dir);
        let curv = dot(&dir, &hd);
        if curv <= 0.0 {
            break;
        }
        let alpha = rr / curv;
        for ((si, ri), (di, hdi)) in s.iter_mut().zip(r.iter_mut()).zip(dir.iter().zip(&hd)) {
            *si += alpha * di;
            *ri -= alpha * hdi;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (di, ri) in dir.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
        rr = rr_new;
    }
    if s.iter().all(|v| *v == 0.0) {
        // CG made no progress; fall back to steepest descent
        return g.iter().map(|v| -v).collect();
    }
    s
}

/// Objective value for a parameter vector; exposed for solver checks.
pub fn objective(x: &Design, y: &[bool], c_reg: f64, weights: &[f64], bias: f64) -> f64 {
    let p = Problem::new(x, y, c_reg);
    p.objective_at(&p.margins(weights, bias), weights)
}

/// Gradient `[∂β..., ∂b]` for a parameter vector; exposed for solver checks.
pub fn gradient(x: &Design, y: &[bool], c_reg: f64, weights: &[f64], bias: f64) -> Vec<f64> {
    let p = Problem::new(x, y, c_reg);
    p.gradient(&p.margins(weights, bias), weights)
}

/// Fits the class-balanced model. Failing to reach `tol` within `max_iter`
/// is not an error: the model comes back with `converged == false`.
pub fn fit_logistic(x: &Design, y: &[bool], config: &FitConfig) -> Result<LogisticModel> {
    if x.n_rows() != y.len() {
        return Err(AuditError::Domain(format!(
            "{} rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if !(config.c_reg > 0.0 && config.c_reg.is_finite()) {
        return Err(AuditError::Domain(format!(
            "regularization strength C must be positive, got {}",
            config.c_reg
        )));
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(AuditError::Analysis(
            "logistic regression needs both classes in the training data".into(),
        ));
    }

    let p = Problem::new(x, y, config.c_reg);
    let d = x.n_cols();
    let mut beta = vec![0.0; d];
    let mut bias = 0.0;
    let mut z = p.margins(&beta, bias);
    let mut f = p.objective_at(&z, &beta);
    let mut g = p.gradient(&z, &beta);
    let mut iterations = 0;

    while inf_norm(&g) > config.tol && iterations < config.max_iter {
        iterations += 1;
        let h: Vec<f64> = z
            .iter()
            .zip(&p.sample_w)
            .map(|(&zi, &w)| {
                let s = sigmoid(zi);
                w * s * (1.0 - s)
            })
            .collect();
        let mut step = newton_direction(&p, &h, &g);
        let mut slope = dot(&g, &step);
        if slope >= 0.0 {
            step = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        // Armijo backtracking
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_beta: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_bias = bias + t * step[d];
            let cand_z = p.margins(&cand_beta, cand_bias);
            let cand_f = p.objective_at(&cand_z, &cand_beta);
            if cand_f <= f + 1e-4 * t * slope {
                beta = cand_beta;
                bias = cand_bias;
                z = cand_z;
                f = cand_f;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        g = p.gradient(&z, &beta);
        if !accepted {
            // no decrease representable in floating point
            break;
        }
    }

    let final_gradient_norm = inf_norm(&g);
    Ok(LogisticModel {
        weights: beta,
        bias,
        c_reg: config.c_reg,
        converged: final_gradient_norm <= config.tol,
        final_gradient_norm,
        iterations,
    })
}
