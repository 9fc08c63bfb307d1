//! Binary-tree factorization of a word distribution.
//!
//! Words are placed at the leaves of a complete binary tree by a seeded random
//! permutation. Each internal node holds a logistic regression on the hidden
//! representation that gives the probability of branching right; a word's
//! probability is the product of the branch probabilities along its path.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::BagOfWords;
use crate::error::{Error, Result};
use crate::math::{axpy, dot, sigmoid, softplus, WordMatrix};

/// One step on a root-to-leaf path: internal node id and branch bit
/// (`false` = left, `true` = right).
pub type PathStep = (u32, bool);

/// Tree shape and word placement, without parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeLayout {
    perm: Vec<u32>,
    paths: Vec<Vec<PathStep>>,
    seed: u64,
}

impl TreeLayout {
    /// Random leaf assignment for `vocab_size` words, reproducible from `seed`.
    pub fn new(vocab_size: usize, seed: u64) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::invalid(format!(
                "tree needs at least 2 leaves, got {vocab_size}"
            )));
        }
        let mut perm: Vec<u32> = (0..vocab_size as u32).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut layout = Self::from_permutation(perm)?;
        layout.seed = seed;
        Ok(layout)
    }

    /// Layout with an explicit word -> leaf-position assignment.
    pub fn from_permutation(perm: Vec<u32>) -> Result<Self> {
        let v = perm.len();
        if v < 2 {
            return Err(Error::invalid(format!("tree needs at least 2 leaves, got {v}")));
        }
        let mut seen = vec![false; v];
        for &p in &perm {
            let p = p as usize;
            if p >= v || seen[p] {
                return Err(Error::invalid("leaf assignment is not a permutation"));
            }
            seen[p] = true;
        }
        let leaf_paths = leaf_paths(v);
        let paths = perm.iter().map(|&p| leaf_paths[p as usize].clone()).collect();
        Ok(TreeLayout { perm, paths, seed: 0 })
    }

    pub fn vocab_size(&self) -> usize {
        self.perm.len()
    }

    pub fn internal_nodes(&self) -> usize {
        self.perm.len() - 1
    }

    /// Word index -> leaf position.
    pub fn permutation(&self) -> &[u32] {
        &self.perm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn path(&self, word: usize) -> &[PathStep] {
        &self.paths[word]
    }

    /// Per-node left/right visit counts for all tokens in `bag`, sorted by
    /// node id. Nodes shared by several words appear once.
    fn node_counts(&self, bag: &BagOfWords) -> Vec<(u32, f64, f64)> {
        let mut steps: Vec<(u32, bool, u32)> = Vec::with_capacity(bag.distinct() * 8);
        for (w, n) in bag.entries() {
            steps.extend(self.paths[w].iter().map(|&(node, bit)| (node, bit, n)));
        }
        steps.sort_unstable_by_key(|&(node, _, _)| node);
        let mut out: Vec<(u32, f64, f64)> = Vec::new();
        for (node, bit, n) in steps {
            if out.last().map(|e| e.0) != Some(node) {
                out.push((node, 0.0, 0.0));
            }
            let last = out.last_mut().unwrap();
            if bit {
                last.2 += n as f64;
            } else {
                last.1 += n as f64;
            }
        }
        out
    }
}

/// Root-to-leaf paths of the complete tree over leaf positions `[0, v)`.
/// A range `[a, b)` splits at `a + ceil((b - a) / 2)`; internal nodes are
/// numbered in pre-order.
fn leaf_paths(v: usize) -> Vec<Vec<PathStep>> {
    fn walk(a: usize, b: usize, next: &mut u32, prefix: &mut Vec<PathStep>, out: &mut [Vec<PathStep>]) {
        if b - a == 1 {
            out[a] = prefix.clone();
            return;
        }
        let id = *next;
        *next += 1;
        let mid = a + (b - a).div_ceil(2);
        prefix.push((id, false));
        walk(a, mid, next, prefix, out);
        prefix.pop();
        prefix.push((id, true));
        walk(mid, b, next, prefix, out);
        prefix.pop();
    }
    let mut out = vec![Vec::new(); v];
    let mut next = 0;
    walk(0, v, &mut next, &mut Vec::new(), &mut out);
    debug_assert_eq!(next as usize, v - 1);
    out
}

/// `sigm(b_node + V_node . phi)`: probability of branching right.
pub fn branch_prob(node_bias: &[f64], node_weight: &WordMatrix, node: usize, phi: &[f64]) -> f64 {
    sigmoid(node_bias[node] + dot(node_weight.column(node), phi))
}

pub fn word_prob(layout: &TreeLayout, node_bias: &[f64], node_weight: &WordMatrix, word: usize, phi: &[f64]) -> f64 {
    layout.paths[word]
        .iter()
        .map(|&(node, bit)| {
            let p = branch_prob(node_bias, node_weight, node as usize, phi);
            if bit {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

/// Count-weighted negative log-likelihood of `bag` under the tree.
pub fn nll(layout: &TreeLayout, node_bias: &[f64], node_weight: &WordMatrix, bag: &BagOfWords, phi: &[f64]) -> Result<f64> {
    if bag.is_empty() {
        return Err(Error::EmptyBag("tree reconstruction target"));
    }
    bag.check_range(layout.vocab_size())?;
    Ok(layout
        .node_counts(bag)
        .into_iter()
        .map(|(node, n0, n1)| {
            let z = node_bias[node as usize] + dot(node_weight.column(node as usize), phi);
            n1 * softplus(-z) + n0 * softplus(z)
        })
        .sum())
}

/// Adds the gradient of [`nll`] to `grad_bias`, `grad_weight` and `dphi`;
/// returns the loss.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    layout: &TreeLayout,
    node_bias: &[f64],
    node_weight: &WordMatrix,
    bag: &BagOfWords,
    phi: &[f64],
    grad_bias: &mut [f64],
    grad_weight: &mut WordMatrix,
    dphi: &mut [f64],
) -> Result<f64> {
    if bag.is_empty() {
        return Err(Error::EmptyBag("tree reconstruction target"));
    }
    bag.check_range(layout.vocab_size())?;
    let mut loss = 0.0;
    for (node, n0, n1) in layout.node_counts(bag) {
        let node = node as usize;
        let weight = node_weight.column(node);
        let z = node_bias[node] + dot(weight, phi);
        loss += n1 * softplus(-z) + n0 * softplus(z);
        let dz = (n0 + n1) * sigmoid(z) - n1;
        grad_bias[node] += dz;
        axpy(dz, phi, grad_weight.column_mut(node));
        axpy(dz, weight, dphi);
    }
    Ok(loss)
}

/// Tree layout together with its per-node logistic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTree {
    pub layout: TreeLayout,
    /// One bias per internal node.
    pub node_bias: Vec<f64>,
    /// One weight vector of length `D` per internal node.
    pub node_weight: WordMatrix,
}

impl WordTree {
    /// Tree with zero parameters, so every branch starts at probability 0.5.
    pub fn new(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        Ok(Self::zeros(TreeLayout::new(vocab_size, seed)?, dim))
    }

    pub fn zeros(layout: TreeLayout, dim: usize) -> Self {
        let n = layout.internal_nodes();
        WordTree {
            layout,
            node_bias: vec![0.0; n],
            node_weight: WordMatrix::zeros(dim, n),
        }
    }

    pub fn branch_prob(&self, node: usize, phi: &[f64]) -> f64 {
        branch_prob(&self.node_bias, &self.node_weight, node, phi)
    }

    pub fn word_prob(&self, word: usize, phi: &[f64]) -> f64 {
        word_prob(&self.layout, &self.node_bias, &self.node_weight, word, phi)
    }

    pub fn nll(&self, bag: &BagOfWords, phi: &[f64]) -> Result<f64> {
        nll(&self.layout, &self.node_bias, &self.node_weight, bag, phi)
    }
}
