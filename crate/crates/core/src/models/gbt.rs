//! Least-squares gradient boosting over depth-limited regression trees.
//!
//! Split candidates are fixed up front: per input column, every distinct
//! value when there are at most [`MAX_THRESHOLDS`] of them, otherwise that
//! many quantiles. Inputs are binned once against these thresholds and each
//! node's best split is found from per-column histograms of residuals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_matrix, rmse, Parameters, TrainedRegressor};
use crate::error::{Error, Result};
use crate::types::Feature;

pub const MAX_THRESHOLDS: usize = 32;
/// Splits must reduce the squared error by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self { rounds: 200, max_depth: 4, learning_rate: 0.1 }
    }
}

impl GbtConfig {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be >= 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::invalid("depth", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Nodes are stored flat; the root is `nodes[0]`. Inputs with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) fn predict_raw(init: f64, learning_rate: f64, trees: &[RegressionTree], x: &[f64]) -> f64 {
    init + trees.iter().map(|t| learning_rate * t.predict(x)).sum::<f64>()
}

/// Candidate thresholds for one column.
fn thresholds(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    // The largest value would send every row left.
    distinct.pop();
    if distinct.len() <= MAX_THRESHOLDS {
        return distinct;
    }
    let n = values.len();
    let mut out: Vec<f64> =
        (1..=MAX_THRESHOLDS).map(|q| values[(q * n / (MAX_THRESHOLDS + 1)).min(n - 1)]).collect();
    out.dedup();
    let max = values[n - 1];
    out.retain(|&t| t < max);
    out
}

struct Binned {
    thresholds: Vec<Vec<f64>>,
    /// `bins[f][i]`: index of the first threshold of column `f` that row `i`
    /// does not exceed, or the threshold count when it exceeds them all.
    bins: Vec<Vec<u8>>,
}

impl Binned {
    fn new<R: AsRef<[f64]> + Sync>(xs: &[R], p: usize) -> Self {
        let per_column: Vec<(Vec<f64>, Vec<u8>)> = (0..p)
            .into_par_iter()
            .map(|f| {
                let column: Vec<f64> = xs.iter().map(|x| x.as_ref()[f]).collect();
                let thr = thresholds(column.clone());
                let bins = column.iter().map(|&v| thr.partition_point(|&t| t < v) as u8).collect();
                (thr, bins)
            })
            .collect();
        let (thresholds, bins) = per_column.into_iter().unzip();
        Self { thresholds, bins }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

/// Higher gain wins; ties go to the lower feature, then the lower threshold.
fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let a_wins = a.gain > b.gain || (a.gain == b.gain && (a.feature, a.bin) < (b.feature, b.bin));
            Some(if a_wins { a } else { b })
        }
    }
}

fn best_split(binned: &Binned, rows: &[usize], residuals: &[f64]) -> Option<Candidate> {
    let n = rows.len() as f64;
    let total: f64 = rows.iter().map(|&i| residuals[i]).sum();
    let parent = total * total / n;
    (0..binned.thresholds.len())
        .into_par_iter()
        .map(|f| {
            let nt = binned.thresholds[f].len();
            if nt == 0 {
                return None;
            }
            let col = &binned.bins[f];
            let mut sums = vec![0.0; nt + 1];
            let mut counts = vec![0usize; nt + 1];
            for &i in rows {
                let b = col[i] as usize;
                sums[b] += residuals[i];
                counts[b] += 1;
            }
            let mut best: Option<Candidate> = None;
            let (mut ls, mut lc) = (0.0, 0usize);
            for b in 0..nt {
                ls += sums[b];
                lc += counts[b];
                let rc = rows.len() - lc;
                if lc == 0 || rc == 0 {
                    continue;
                }
                let rs = total - ls;
                let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - parent;
                if gain > MIN_GAIN && best.is_none_or(|c| gain > c.gain) {
                    best = Some(Candidate { gain, feature: f, bin: b });
                }
            }
            best
        })
        .reduce(|| None, better)
}

fn grow(
    binned: &Binned,
    rows: Vec<usize>,
    residuals: &[f64],
    depth_left: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    let leaf = |rows: &[usize]| TreeNode::Leaf {
        value: rows.iter().map(|&i| residuals[i]).sum::<f64>() / rows.len() as f64,
    };
    let split = if depth_left == 0 || rows.len() < 2 { None } else { best_split(binned, &rows, residuals) };
    let Some(c) = split else {
        nodes.push(leaf(&rows));
        return id;
    };
    nodes.push(TreeNode::Leaf { value: 0.0 });
    let col = &binned.bins[c.feature];
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| col[i] as usize <= c.bin);
    let left = grow(binned, l, residuals, depth_left - 1, nodes);
    let right = grow(binned, r, residuals, depth_left - 1, nodes);
    nodes[id] =
        TreeNode::Split { feature: c.feature, threshold: binned.thresholds[c.feature][c.bin], left, right };
    id
}

/// Fits a boosted ensemble. Also returns the unclamped training RMSE after
/// each round (index 0 is the initial constant).
///
/// Boosting stops early when a round finds no split that reduces the
/// squared error. The seed is recorded but the fit itself is deterministic.
pub fn train_gbt<R: AsRef<[f64]> + Sync>(
    xs: &[R],
    ys: &[f64],
    config: &GbtConfig,
    target: Feature,
    seed: u64,
) -> Result<(TrainedRegressor, Vec<f64>)> {
    config.validate()?;
    let p = check_matrix(xs, ys)?;
    let n = ys.len();
    let init = ys.iter().sum::<f64>() / n as f64;
    let binned = Binned::new(xs, p);

    let mut raw = vec![init; n];
    let mut residuals: Vec<f64> = ys.iter().map(|y| y - init).collect();
    let mut history = vec![rmse(&raw, ys)];
    let mut trees = Vec::new();
    for _ in 0..config.rounds {
        let mut nodes = Vec::new();
        grow(&binned, (0..n).collect(), &residuals, config.max_depth, &mut nodes);
        if nodes.len() == 1 {
            break;
        }
        let tree = RegressionTree { nodes };
        for i in 0..n {
            let step = config.learning_rate * tree.predict(xs[i].as_ref());
            raw[i] += step;
            residuals[i] = ys[i] - raw[i];
        }
        history.push(rmse(&raw, ys));
        trees.push(tree);
    }

    let model = TrainedRegressor::new(
        target,
        seed,
        Some(p),
        Parameters::Gbt { init, learning_rate: config.learning_rate, max_depth: config.max_depth, trees },
    )
    .with_train_rmse(xs, ys)?;
    Ok((model, history))
}
