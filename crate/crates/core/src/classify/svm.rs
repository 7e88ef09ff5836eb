//! One-versus-one soft-margin SVM with an RBF kernel.
//!
//! Each of the K(K-1)/2 class pairs gets its own machine, solved by a
//! sequential-minimal-optimization style dual solver with a deterministic
//! partner-choice rule (max |E1 - E2|, then cyclic scan), so training needs
//! no randomness. Multiclass output is the vote frequency across machines:
//! a simplex vector, but a frequentist tally rather than a posterior
//! estimate, which is why this model is flagged non-probabilistic.

use super::{Normalizer, SvmHyper, TrainData};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    /// 0-based class voted for when the decision value is positive (and on
    /// exact zero; it is always the lower index of the pair).
    pub class_pos: usize,
    pub class_neg: usize,
    /// Support vectors in normalized feature space.
    pub sv: Vec<Vec<f64>>,
    /// Per support vector, alpha_i * y_i.
    pub coef: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub normalizer: Normalizer,
    pub machines: Vec<PairMachine>,
    pub gamma: f64,
    pub k: usize,
    pub f: usize,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl SvmModel {
    fn decision(&self, m: &PairMachine, z: &[f64]) -> f64 {
        m.sv
            .iter()
            .zip(&m.coef)
            .map(|(s, c)| c * rbf(self.gamma, s, z))
            .sum::<f64>()
            + m.bias
    }

    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        let z = self.normalizer.transform(x);
        let mut votes = vec![0.0; self.k];
        for m in &self.machines {
            if self.decision(m, &z) >= 0.0 {
                votes[m.class_pos] += 1.0;
            } else {
                votes[m.class_neg] += 1.0;
            }
        }
        let inv = 1.0 / self.machines.len() as f64;
        votes.iter_mut().for_each(|v| *v *= inv);
        votes
    }
}

struct Smo<'a> {
    kmat: &'a [f64],
    n: usize,
    y: &'a [f64],
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    bias: f64,
    /// Cached decision values f(x_i) for all training points.
    fx: Vec<f64>,
}

impl Smo<'_> {
    fn kkt_violated(&self, i: usize) -> bool {
        let r = (self.fx[i] - self.y[i]) * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    /// Joint optimization of the pair (i, j); true if an update happened.
    fn step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a1, a2) = (self.alpha[i], self.alpha[j]);
        let (y1, y2) = (self.y[i], self.y[j]);
        let e1 = self.fx[i] - y1;
        let e2 = self.fx[j] - y2;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        } else {
            ((a1 + a2 - self.c).max(0.0), (a1 + a2).min(self.c))
        };
        if lo >= hi {
            return false;
        }
        let k11 = self.kmat[i * self.n + i];
        let k22 = self.kmat[j * self.n + j];
        let k12 = self.kmat[i * self.n + j];
        let eta = 2.0 * k12 - k11 - k22;
        if eta >= 0.0 {
            return false;
        }
        let mut a2_new = (a2 - y2 * (e1 - e2) / eta).clamp(lo, hi);
        if (a2_new - a2).abs() < 1e-10 * (a2_new + a2 + 1e-10) {
            return false;
        }
        let a1_new = a1 + y1 * y2 * (a2 - a2_new);
        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let bias_new = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = bias_new - self.bias;
        for m in 0..self.n {
            self.fx[m] += d1 * self.kmat[i * self.n + m] + d2 * self.kmat[j * self.n + m] + db;
        }
        if a2_new < 1e-12 {
            a2_new = 0.0;
        } else if a2_new > self.c - 1e-12 {
            a2_new = self.c;
        }
        self.alpha[i] = a1_new.clamp(0.0, self.c);
        self.alpha[j] = a2_new;
        self.bias = bias_new;
        true
    }

    fn solve(&mut self, max_sweeps: usize) {
        for _ in 0..max_sweeps {
            let mut changed = 0usize;
            for i in 0..self.n {
                if !self.kkt_violated(i) {
                    continue;
                }
                let e1 = self.fx[i] - self.y[i];
                // Second-choice heuristic: the partner with the largest
                // |E1 - E2| gives the biggest step along the constraint.
                let mut best = None;
                let mut best_gap = -1.0;
                for j in 0..self.n {
                    if j == i {
                        continue;
                    }
                    let gap = (e1 - (self.fx[j] - self.y[j])).abs();
                    if gap > best_gap {
                        best_gap = gap;
                        best = Some(j);
                    }
                }
                let mut done = best.is_some_and(|j| self.step(i, j));
                if !done {
                    // Deterministic fallback: cyclic scan from i+1.
                    for off in 1..self.n {
                        let j = (i + off) % self.n;
                        if self.step(i, j) {
                            done = true;
                            break;
                        }
                    }
                }
                if done {
                    changed += 1;
                }
            }
            if changed == 0 {
                break;
            }
        }
    }
}

pub(crate) fn fit(data: &TrainData, params: &SvmHyper, normalizer: Normalizer) -> SvmModel {
    let gamma = params.gamma.unwrap_or_else(|| {
        let nm = data.x.len() as f64;
        let mean = data.x.iter().sum::<f64>() / nm;
        let var = data.x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nm;
        if var > 0.0 {
            1.0 / (data.f as f64 * var)
        } else {
            1.0 / data.f as f64
        }
    });
    let mut pairs = Vec::new();
    for a in 0..data.k {
        for b in a + 1..data.k {
            pairs.push((a, b));
        }
    }
    let machines: Vec<PairMachine> = pairs
        .par_iter()
        .map(|&(pos, neg)| {
            let ids: Vec<usize> = (0..data.n)
                .filter(|&i| data.labels[i] == pos || data.labels[i] == neg)
                .collect();
            let n = ids.len();
            let y: Vec<f64> = ids
                .iter()
                .map(|&i| if data.labels[i] == pos { 1.0 } else { -1.0 })
                .collect();
            let mut kmat = vec![0.0; n * n];
            for a in 0..n {
                for b in a..n {
                    let v = rbf(gamma, data.row(ids[a]), data.row(ids[b]));
                    kmat[a * n + b] = v;
                    kmat[b * n + a] = v;
                }
            }
            let mut smo = Smo {
                kmat: &kmat,
                n,
                y: &y,
                c: params.c,
                tol: params.tol,
                alpha: vec![0.0; n],
                bias: 0.0,
                fx: vec![0.0; n],
            };
            smo.solve(params.max_sweeps);
            let mut sv = Vec::new();
            let mut coef = Vec::new();
            for (local, &i) in ids.iter().enumerate() {
                if smo.alpha[local] > 1e-10 {
                    sv.push(data.row(i).to_vec());
                    coef.push(smo.alpha[local] * y[local]);
                }
            }
            PairMachine { class_pos: pos, class_neg: neg, sv, coef, bias: smo.bias }
        })
        .collect();
    SvmModel { normalizer, machines, gamma, k: data.k, f: data.f }
}
