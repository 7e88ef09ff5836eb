//! Random forest: bagged Gini trees with per-split random feature subsets.
//!
//! Each tree gets its own derived random stream for the bootstrap resample
//! and the feature draws, so training is reproducible regardless of how the
//! trees are scheduled across threads. Prediction averages the leaf
//! probability vectors of all trees.

use super::tree::{grow_class_tree, ClassTreeConfig, FeatureLists, TreeNode};
use super::{ForestHyper, Normalizer, TrainData};
use crate::rng::{self, tags};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub normalizer: Normalizer,
    pub trees: Vec<Vec<TreeNode>>,
    pub k: usize,
    pub f: usize,
}

impl ForestModel {
    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        let z = self.normalizer.transform(x);
        let mut acc = vec![0.0; self.k];
        for nodes in &self.trees {
            let probs = super::tree::walk(nodes, &z);
            for (a, p) in acc.iter_mut().zip(probs) {
                *a += p;
            }
        }
        let inv = 1.0 / self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }
}

pub(crate) fn fit(
    data: &TrainData,
    params: &ForestHyper,
    normalizer: Normalizer,
    seed: u64,
) -> ForestModel {
    let presort = FeatureLists::presort(&data.x, data.f, data.n);
    let subset = params
        .feature_subset
        .unwrap_or_else(|| (data.f as f64).sqrt().ceil() as usize)
        .clamp(1, data.f);
    let cfg = ClassTreeConfig {
        max_depth: params.max_depth,
        min_leaf: 1,
        feature_subset: Some(subset),
    };
    let trees: Vec<Vec<TreeNode>> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, tags::MODEL, t as u64);
            let mut mult = vec![0u32; data.n];
            for _ in 0..data.n {
                mult[rng.random_range(0..data.n)] += 1;
            }
            let root = presort.expand(&mult);
            let (nodes, _) = grow_class_tree(
                &data.x,
                data.f,
                &data.labels,
                data.k,
                root,
                &cfg,
                Some(&mut rng),
            );
            nodes
        })
        .collect();
    ForestModel { normalizer, trees, k: data.k, f: data.f }
}
