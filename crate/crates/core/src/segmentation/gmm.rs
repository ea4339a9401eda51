use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::segmentation::fcm::quartile_init;
use crate::stats::{distinct_count_at_least, variance};

/// Two-component 1D Gaussian mixture fitted by EM.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub weights: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
    /// Total log-likelihood evaluated at the start of every iteration.
    pub log_likelihood: Vec<f64>,
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}

impl GmmFit {
    pub fn foreground_component(&self) -> usize {
        if self.means[1] > self.means[0] {
            1
        } else {
            0
        }
    }

    fn log_joint(&self, x: f64) -> [f64; 2] {
        [0, 1].map(|k| {
            if self.weights[k] > 0.0 {
                self.weights[k].ln() + log_density(x, self.means[k], self.variances[k])
            } else {
                f64::NEG_INFINITY
            }
        })
    }

    /// Argmax-responsibility assignment to the higher-mean component.
    pub fn labels(&self, values: &[f64]) -> Vec<bool> {
        let fg = self.foreground_component();
        values
            .iter()
            .map(|&x| {
                let lj = self.log_joint(x);
                let winner = if lj[1] > lj[0] { 1 } else { 0 };
                winner == fg
            })
            .collect()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn fit_gmm(values: &[f64], tol: f64, max_iter: usize, var_floor_rel: f64) -> Result<GmmFit> {
    if !(tol > 0.0) || max_iter == 0 || !(var_floor_rel > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gmm needs tol > 0, max_iter > 0, var_floor > 0 (tol={tol}, max_iter={max_iter}, floor={var_floor_rel})"
        )));
    }
    if !distinct_count_at_least(values, 2) {
        return Err(Error::DegenerateInput("ROI has fewer than two distinct values".into()));
    }
    let roi_var = variance(values);
    let floor = var_floor_rel * roi_var;
    let mut fit = GmmFit {
        means: quartile_init(values),
        variances: [roi_var; 2],
        weights: [0.5; 2],
        iterations: 0,
        converged: false,
        log_likelihood: Vec::new(),
    };
    let n = values.len() as f64;
    let mut resp = vec![0.0f64; values.len()];
    loop {
        // E-step: responsibility of component 1, and log-likelihood under current params.
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let lj = fit.log_joint(x);
            let lse = log_sum_exp(lj[0], lj[1]);
            ll += lse;
            *r = (lj[1] - lse).exp();
        }
        if let Some(&prev) = fit.log_likelihood.last() {
            fit.log_likelihood.push(ll);
            if ll - prev < tol {
                fit.converged = true;
                break;
            }
        } else {
            fit.log_likelihood.push(ll);
        }
        if fit.iterations == max_iter {
            break;
        }
        fit.iterations += 1;
        // M-step
        let mut nk = [0.0f64; 2];
        let mut sx = [0.0f64; 2];
        for (&r, &x) in resp.iter().zip(values) {
            nk[0] += 1.0 - r;
            nk[1] += r;
            sx[0] += (1.0 - r) * x;
            sx[1] += r * x;
        }
        for k in 0..2 {
            if nk[k] <= f64::MIN_POSITIVE {
                // Component starved: keep its location, park it at the floor.
                fit.weights[k] = 0.0;
                fit.variances[k] = floor;
                continue;
            }
            fit.means[k] = sx[k] / nk[k];
            fit.weights[k] = nk[k] / n;
        }
        let mut sv = [0.0f64; 2];
        for (&r, &x) in resp.iter().zip(values) {
            sv[0] += (1.0 - r) * (x - fit.means[0]) * (x - fit.means[0]);
            sv[1] += r * (x - fit.means[1]) * (x - fit.means[1]);
        }
        for k in 0..2 {
            if nk[k] > f64::MIN_POSITIVE {
                fit.variances[k] = (sv[k] / nk[k]).max(floor);
            }
        }
    }
    Ok(fit)
}
