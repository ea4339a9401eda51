//! L2-regularized logistic regression trained with L-BFGS and a backtracking
//! Armijo line search. The bias is not penalized. Every accepted step lowers
//! the objective, so the loss trace is non-increasing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the largest gradient component falls to this.
    pub grad_tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            lambda: 1.0,
            max_iter: 5000,
            grad_tol: 1e-6,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Objective and gradient; the parameter vector is `[w..., b]`.
pub fn loss_and_gradient(x: &[Vec<f64>], y: &[u8], params: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let n = x.len() as f64;
    let (w, b) = (&params[..d], params[d]);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        let t = label as f64;
        // -[t log s + (1-t) log(1-s)] = softplus(z) - t z
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for j in 0..d {
            grad[j] += r * row[j];
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let penalty: f64 = w.iter().map(|v| v * v).sum();
    loss += lambda / (2.0 * n) * penalty;
    for j in 0..d {
        grad[j] += lambda / n * w[j];
    }
    (loss, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Trained model together with the objective value after every iteration.
#[derive(Debug, Clone)]
pub struct LogisticTrace {
    pub model: LogisticModel,
    pub losses: Vec<f64>,
}

pub fn train_logreg_traced(x: &[Vec<f64>], y: &[u8], p: LogisticParams) -> Result<LogisticTrace> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: x.len() });
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassTraining);
    }
    if !(p.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {}", p.lambda)));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("ragged feature rows".into()));
    }

    const MEMORY: usize = 10;
    let mut theta = vec![0.0; d + 1];
    let (mut loss, mut grad) = loss_and_gradient(x, y, &theta, p.lambda);
    let mut losses = vec![loss];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = inf_norm(&grad) <= p.grad_tol;
    while !converged && iterations < p.max_iter {
        iterations += 1;
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = history.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }
        let mut step = if history.is_empty() {
            (1.0 / inf_norm(&grad)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (l, g) = loss_and_gradient(x, y, &cand, p.lambda);
            if l <= loss + 1e-4 * step * slope {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l, g)) = accepted else {
            // no decrease representable at this precision
            break;
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        theta = cand;
        loss = l;
        grad = g;
        losses.push(loss);
        converged = inf_norm(&grad) <= p.grad_tol;
    }
    if !converged {
        log::warn!(
            "logistic regression stopped after {iterations} iterations, |grad|_inf = {:.3e}",
            inf_norm(&grad)
        );
    }
    Ok(LogisticTrace {
        model: LogisticModel {
            bias: theta[d],
            weights: theta[..d].to_vec(),
            lambda: p.lambda,
            iterations,
            converged,
        },
        losses,
    })
}

pub fn train_logreg(x: &[Vec<f64>], y: &[u8], p: LogisticParams) -> Result<LogisticModel> {
    Ok(train_logreg_traced(x, y, p)?.model)
}

impl LogisticModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.weights.len()
            )));
        }
        Ok(sigmoid(dot(row, &self.weights) + self.bias))
    }
}
