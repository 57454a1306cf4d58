use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_columns, check_training, ModelError};

/// Deepest supported tree. Leaf indices are packed into a `u64`.
pub const MAX_DEPTH: usize = 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub learning_rate: f64,
    pub depth: usize,
    pub l2_leaf_reg: f64,
    pub num_iterations: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            depth: 6,
            l2_leaf_reg: 3.0,
            num_iterations: 500,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return Err(ModelError::InvalidParams(format!(
                "depth must be in 1..={MAX_DEPTH}, got {}",
                self.depth
            )));
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "l2_leaf_reg must be non-negative, got {}",
                self.l2_leaf_reg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

/// A depth-symmetric tree: level `l` routes every row by `splits[l]`.
///
/// The leaf index is built most-significant-bit first, appending 1 when
/// `x[feature] > threshold`. Only leaves that received training rows are
/// stored; the rest evaluate to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliviousTree {
    pub splits: Vec<Split>,
    pub leaves: Vec<(u64, f64)>,
}

impl ObliviousTree {
    pub fn depth(&self) -> usize {
        self.splits.len()
    }

    pub fn leaf_index(&self, row: ArrayView1<'_, f64>) -> u64 {
        self.splits.iter().fold(0u64, |idx, s| {
            (idx << 1) | u64::from(row[s.feature] > s.threshold)
        })
    }

    pub fn leaf_value(&self, index: u64) -> f64 {
        match self.leaves.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.leaves[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.leaf_value(self.leaf_index(row))
    }

    /// One split per level and leaf indices within `0..2^depth`.
    pub fn is_oblivious(&self, num_features: usize) -> bool {
        let d = self.depth();
        d > 0
            && d <= MAX_DEPTH
            && self.splits.iter().all(|s| s.feature < num_features && s.threshold.is_finite())
            && self.leaves.windows(2).all(|w| w[0].0 < w[1].0)
            && self.leaves.iter().all(|&(i, _)| i >> d == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub base_prediction: f64,
    pub trees: Vec<ObliviousTree>,
    pub params: BoostParams,
    pub num_features: usize,
    /// Training stopped before `num_iterations` because no admissible split
    /// existed (constant features, or `min_samples_leaf` unsatisfiable).
    pub degenerate: bool,
}

impl BoostedEnsemble {
    /// Predictions after each of `0..=trees.len()` trees.
    pub fn staged_predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Vec<f64>>, ModelError> {
        check_columns(x, self.num_features)?;
        let mut current = vec![self.base_prediction; x.nrows()];
        let mut stages = vec![current.clone()];
        for tree in &self.trees {
            for (p, row) in current.iter_mut().zip(x.rows()) {
                *p += self.params.learning_rate * tree.predict_row(row);
            }
            stages.push(current.clone());
        }
        Ok(stages)
    }
}

fn partition_sse_term(sum: f64, n: usize, l2: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let d = nf + l2;
    sum * sum * (nf / (d * d) - 2.0 / d)
}

struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
}

impl Presorted {
    fn new(x: ArrayView2<'_, f64>) -> Self {
        let columns: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut o: Vec<usize> = (0..col.len()).collect();
                o.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { columns, order }
    }

    fn has_splittable_feature(&self) -> bool {
        self.columns
            .iter()
            .zip(&self.order)
            .any(|(col, o)| o.first().zip(o.last()).is_some_and(|(&a, &b)| col[b] > col[a]))
    }
}

struct Candidate {
    score: f64,
    split: Split,
}

fn best_split(
    data: &Presorted,
    residuals: &[f64],
    part: &[usize],
    num_parts: usize,
    params: &BoostParams,
) -> Option<Candidate> {
    let l2 = params.l2_leaf_reg;
    let min_leaf = params.min_samples_leaf;
    let mut tot_s = vec![0.0; num_parts];
    let mut tot_n = vec![0usize; num_parts];
    for (i, &p) in part.iter().enumerate() {
        tot_s[p] += residuals[i];
        tot_n[p] += 1;
    }
    let violates = |n: usize| n > 0 && n < min_leaf;
    let mut best: Option<Candidate> = None;
    for (f, (col, order)) in data.columns.iter().zip(&data.order).enumerate() {
        let mut left_s = vec![0.0; num_parts];
        let mut left_n = vec![0usize; num_parts];
        let mut score: f64 = (0..num_parts)
            .map(|p| partition_sse_term(tot_s[p], tot_n[p], l2))
            .sum();
        let mut bad = (0..num_parts).filter(|&p| violates(tot_n[p])).count();
        for (j, &i) in order.iter().enumerate() {
            let p = part[i];
            let (ls, ln) = (left_s[p], left_n[p]);
            let (rs, rn) = (tot_s[p] - ls, tot_n[p] - ln);
            score -= partition_sse_term(ls, ln, l2) + partition_sse_term(rs, rn, l2);
            bad -= usize::from(violates(ln)) + usize::from(violates(rn));
            let (ls, ln) = (ls + residuals[i], ln + 1);
            let (rs, rn) = (tot_s[p] - ls, tot_n[p] - ln);
            score += partition_sse_term(ls, ln, l2) + partition_sse_term(rs, rn, l2);
            bad += usize::from(violates(ln)) + usize::from(violates(rn));
            left_s[p] = ls;
            left_n[p] = ln;

            let Some(&next) = order.get(j + 1) else { break };
            let (lo, hi) = (col[i], col[next]);
            if hi <= lo || bad > 0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate {
                    score,
                    split: Split { feature: f, threshold },
                });
            }
        }
    }
    best
}

/// Grows one tree on `residuals`. Returns the tree and each row's leaf value.
fn grow_tree(
    data: &Presorted,
    residuals: &[f64],
    params: &BoostParams,
) -> Option<(ObliviousTree, Vec<f64>)> {
    let n = residuals.len();
    let mut part = vec![0usize; n];
    let mut codes: Vec<u64> = vec![0];
    let mut splits = Vec::with_capacity(params.depth);
    for _ in 0..params.depth {
        let cand = best_split(data, residuals, &part, codes.len(), params)?;
        let col = &data.columns[cand.split.feature];
        let mut remap = vec![usize::MAX; codes.len() * 2];
        let mut child = vec![0usize; n];
        for (i, c) in child.iter_mut().enumerate() {
            *c = part[i] * 2 + usize::from(col[i] > cand.split.threshold);
            remap[*c] = 0;
        }
        let mut next_codes = Vec::new();
        for (c, slot) in remap.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = next_codes.len();
                next_codes.push((codes[c / 2] << 1) | (c as u64 & 1));
            }
        }
        for (p, c) in part.iter_mut().zip(&child) {
            *p = remap[*c];
        }
        codes = next_codes;
        splits.push(cand.split);
    }
    let mut sums = vec![0.0; codes.len()];
    let mut counts = vec![0usize; codes.len()];
    for (i, &p) in part.iter().enumerate() {
        sums[p] += residuals[i];
        counts[p] += 1;
    }
    let values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / (c as f64 + params.l2_leaf_reg))
        .collect();
    let mut leaves: Vec<(u64, f64)> = codes.iter().copied().zip(values.iter().copied()).collect();
    leaves.sort_by_key(|&(c, _)| c);
    let row_values = part.iter().map(|&p| values[p]).collect();
    Some((ObliviousTree { splits, leaves }, row_values))
}

/// Gradient boosting for squared error, starting from the target mean.
pub fn fit_boosted(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    params: &BoostParams,
) -> Result<BoostedEnsemble, ModelError> {
    check_training(x, y)?;
    params.validate()?;
    if x.nrows() < 2 {
        return Err(ModelError::TooFewRows {
            needed: 2,
            rows: x.nrows(),
        });
    }
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut ensemble = BoostedEnsemble {
        base_prediction: base,
        trees: Vec::with_capacity(params.num_iterations),
        params: params.clone(),
        num_features: x.ncols(),
        degenerate: false,
    };
    if params.num_iterations == 0 {
        return Ok(ensemble);
    }
    let data = Presorted::new(x);
    if !data.has_splittable_feature() {
        ensemble.degenerate = true;
        return Ok(ensemble);
    }
    let mut residuals: Vec<f64> = y.iter().map(|v| v - base).collect();
    for _ in 0..params.num_iterations {
        let Some((tree, row_values)) = grow_tree(&data, &residuals, params) else {
            ensemble.degenerate = true;
            break;
        };
        for (r, v) in residuals.iter_mut().zip(&row_values) {
            *r -= params.learning_rate * v;
        }
        ensemble.trees.push(tree);
    }
    Ok(ensemble)
}

pub fn predict_boosted(
    model: &BoostedEnsemble,
    x: ArrayView2<'_, f64>,
) -> Result<Vec<f64>, ModelError> {
    check_columns(x, model.num_features)?;
    Ok(x.rows()
        .into_iter()
        .map(|row| {
            let sum: f64 = model.trees.iter().map(|t| t.predict_row(row)).sum();
            model.base_prediction + model.params.learning_rate * sum
        })
        .collect())
}
