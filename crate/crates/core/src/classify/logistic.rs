//! Multiclass logistic regression.
//!
//! The default discriminative fit optimizes the cross-entropy of a softmax
//! over K-1 linear scores (the last class's score is pinned at zero, which is
//! all the freedom softmax leaves). The generative option instead estimates
//! per-class means with a shared covariance and converts them to the same
//! linear form in closed form.

use super::{softmax, Adam, ClassifierError, LogisticHyper, Normalizer, TrainData};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub normalizer: Normalizer,
    /// One weight row per scored class: K-1 rows from the discriminative
    /// fit, K rows from the generative fit. Classes beyond the stored rows
    /// score zero.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub k: usize,
    pub f: usize,
    pub converged: bool,
    pub final_loss: f64,
}

impl LogisticModel {
    fn scores(&self, z: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|k| match self.weights.get(k) {
                Some(w) => {
                    w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.intercepts[k]
                }
                None => 0.0,
            })
            .collect()
    }

    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(&self.normalizer.transform(x)))
    }
}

pub(crate) fn fit(
    data: &TrainData,
    params: &LogisticHyper,
    normalizer: Normalizer,
) -> Result<LogisticModel, ClassifierError> {
    if params.generative {
        fit_generative(data, normalizer)
    } else {
        Ok(fit_discriminative(data, params, normalizer))
    }
}

fn fit_discriminative(
    data: &TrainData,
    params: &LogisticHyper,
    normalizer: Normalizer,
) -> LogisticModel {
    let (n, f, k) = (data.n, data.f, data.k);
    let rows = k.saturating_sub(1);
    // Flat parameter vector: rows * f weights then rows intercepts.
    let mut theta = vec![0.0; rows * (f + 1)];
    let mut adam = Adam::new(theta.len(), params.learning_rate);
    let mut grad = vec![0.0; theta.len()];
    let mut converged = false;
    let mut loss = f64::NAN;
    for _ in 0..params.max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        loss = 0.0;
        for i in 0..n {
            let x = data.row(i);
            let mut scores = vec![0.0; k];
            for r in 0..rows {
                let w = &theta[r * f..(r + 1) * f];
                scores[r] = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta[rows * f + r];
            }
            let p = softmax(&scores);
            loss -= p[data.labels[i]].max(1e-300).ln();
            for r in 0..rows {
                let d = p[r] - if data.labels[i] == r { 1.0 } else { 0.0 };
                for (g, v) in grad[r * f..(r + 1) * f].iter_mut().zip(x) {
                    *g += d * v;
                }
                grad[rows * f + r] += d;
            }
        }
        // Mean loss/gradient plus l2 on the weights (not the intercepts).
        let inv_n = 1.0 / n as f64;
        loss *= inv_n;
        for g in grad.iter_mut() {
            *g *= inv_n;
        }
        for r in 0..rows {
            for j in 0..f {
                let w = theta[r * f + j];
                grad[r * f + j] += params.l2 * w;
                loss += 0.5 * params.l2 * w * w;
            }
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < params.tol {
            converged = true;
            break;
        }
        adam.step(&mut theta, &grad);
    }
    let weights = (0..rows).map(|r| theta[r * f..(r + 1) * f].to_vec()).collect();
    let intercepts = (0..rows).map(|r| theta[rows * f + r]).collect();
    LogisticModel { normalizer, weights, intercepts, k, f, converged, final_loss: loss }
}

/// Cholesky factorization of a symmetric positive definite matrix, row-major.
/// Returns the lower factor or None if a pivot is not positive.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * y[j];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= l[j * n + i] * x[j];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

fn fit_generative(
    data: &TrainData,
    normalizer: Normalizer,
) -> Result<LogisticModel, ClassifierError> {
    let (n, f, k) = (data.n, data.f, data.k);
    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; f]; k];
    for i in 0..n {
        let c = data.labels[i];
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= c as f64;
        }
    }
    // Pooled within-class covariance with a small ridge against singularity.
    let mut cov = vec![0.0; f * f];
    for i in 0..n {
        let m = &means[data.labels[i]];
        let x = data.row(i);
        for a in 0..f {
            let da = x[a] - m[a];
            for b in a..f {
                cov[a * f + b] += da * (x[b] - m[b]);
            }
        }
    }
    for a in 0..f {
        for b in a..f {
            let v = cov[a * f + b] / n as f64;
            cov[a * f + b] = v;
            cov[b * f + a] = v;
        }
    }
    let trace: f64 = (0..f).map(|a| cov[a * f + a]).sum();
    if !(trace > 0.0) {
        // No within-class scatter at all; the Gaussian model is vacuous.
        return Err(ClassifierError::SingularCovariance);
    }
    let ridge = 1e-8 * trace;
    for a in 0..f {
        cov[a * f + a] += ridge;
    }
    let l = cholesky(&cov, f).ok_or(ClassifierError::SingularCovariance)?;
    let mut weights = Vec::with_capacity(k);
    let mut intercepts = Vec::with_capacity(k);
    for c in 0..k {
        let w = cholesky_solve(&l, f, &means[c]);
        let quad: f64 = w.iter().zip(&means[c]).map(|(a, b)| a * b).sum();
        let prior = counts[c] as f64 / n as f64;
        intercepts.push(-0.5 * quad + prior.ln());
        weights.push(w);
    }
    let model = LogisticModel {
        normalizer,
        weights,
        intercepts,
        k,
        f,
        converged: true,
        final_loss: f64::NAN,
    };
    // Report the training loss of the closed-form solution.
    let mut loss = 0.0;
    for i in 0..n {
        let p = softmax(&model.scores(data.row(i)));
        loss -= p[data.labels[i]].max(1e-300).ln();
    }
    Ok(LogisticModel { final_loss: loss / n as f64, ..model })
}
