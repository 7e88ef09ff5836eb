//! Multiclass gradient boosting with regression-tree base learners.
//!
//! Raw scores a_k(x) start at zero (so the initial probability estimate is
//! uniform 1/K) and are improved iteratively: each iteration computes the
//! softmax residuals r_k = t_k - gamma_k per sample, fits one regression
//! tree per class to them, replaces each leaf's mean with the multiclass
//! leaf update gamma = (K-1)/K * sum r / sum |r|(1-|r|), and adds the
//! shrunken tree output to the scores. The per-iteration training loss is
//! recorded so capacity/convergence can be inspected after the fit.

use super::tree::{grow_reg_tree, reg_value, FeatureLists, RegNode};
use super::{softmax, GBoostHyper, Normalizer, TrainData};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GBoostModel {
    pub normalizer: Normalizer,
    /// `rounds[m][k]` is iteration m's tree for class k.
    pub rounds: Vec<Vec<Vec<RegNode>>>,
    pub learning_rate: f64,
    pub k: usize,
    pub f: usize,
    /// Mean training logloss before any round and after each round.
    pub training_loss: Vec<f64>,
}

impl GBoostModel {
    fn scores(&self, z: &[f64], up_to: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.k];
        for round in &self.rounds[..up_to] {
            for (ak, nodes) in a.iter_mut().zip(round) {
                *ak += self.learning_rate * reg_value(nodes, z);
            }
        }
        a
    }

    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        let z = self.normalizer.transform(x);
        softmax(&self.scores(&z, self.rounds.len()))
    }

    /// Probability estimate using only the first `rounds` boosting rounds;
    /// `rounds = 0` gives the uniform initial guess.
    pub fn proba_staged(&self, x: &[f64], rounds: usize) -> Vec<f64> {
        let z = self.normalizer.transform(x);
        softmax(&self.scores(&z, rounds.min(self.rounds.len())))
    }
}

pub(crate) fn fit(data: &TrainData, params: &GBoostHyper, normalizer: Normalizer) -> GBoostModel {
    let (n, f, k) = (data.n, data.f, data.k);
    let presort = FeatureLists::presort(&data.x, f, n);
    let mut scores = vec![0.0; n * k];
    let mut residuals = vec![0.0; n * k];
    let mut rounds = Vec::with_capacity(params.n_estimators);
    let mut training_loss = Vec::with_capacity(params.n_estimators + 1);
    let leaf_scale = (k as f64 - 1.0) / k as f64;
    for _ in 0..=params.n_estimators {
        let mut loss = 0.0;
        for i in 0..n {
            let p = softmax(&scores[i * k..(i + 1) * k]);
            loss -= p[data.labels[i]].max(1e-300).ln();
            for (c, v) in p.iter().enumerate() {
                let t = if data.labels[i] == c { 1.0 } else { 0.0 };
                residuals[i * k + c] = t - v;
            }
        }
        training_loss.push(loss / n as f64);
        if rounds.len() == params.n_estimators {
            break;
        }
        let round: Vec<Vec<RegNode>> = (0..k)
            .into_par_iter()
            .map(|c| {
                let targets: Vec<f64> = (0..n).map(|i| residuals[i * k + c]).collect();
                grow_reg_tree(
                    &data.x,
                    f,
                    &targets,
                    presort.clone(),
                    params.max_depth,
                    1,
                    |ids| {
                        let mut num = 0.0;
                        let mut den = 0.0;
                        for &id in ids {
                            let r = targets[id as usize];
                            num += r;
                            den += r.abs() * (1.0 - r.abs());
                        }
                        if den > 0.0 {
                            leaf_scale * num / den
                        } else {
                            0.0
                        }
                    },
                )
            })
            .collect();
        for i in 0..n {
            let z = data.row(i);
            for (c, nodes) in round.iter().enumerate() {
                scores[i * k + c] += params.learning_rate * reg_value(nodes, z);
            }
        }
        rounds.push(round);
    }
    GBoostModel { normalizer, rounds, learning_rate: params.learning_rate, k, f, training_loss }
}
