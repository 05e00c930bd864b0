//! Weighted sampling primitives and the balanced batch constructor.
//!
//! A batch pairs `bs` weighted draws from the positive class with `bs`
//! draws pooled from every other class present, so each binary
//! sub-problem sees a 50/50 class split regardless of the pool's balance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::OneHotLabels;
use crate::error::{Error, Result};
use ndarray::ArrayView2;

/// `bs` draws with replacement, index i picked with probability w_i / Σw.
///
/// A pool whose weights sum to zero falls back to uniform draws.
pub fn weighted_sample(weights: &[f64], bs: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Invalid("weighted_sample: empty pool".into()));
    }
    if bs == 0 {
        return Err(Error::Config("weighted_sample: batch size must be >= 1".into()));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Invalid("weighted_sample: weights must be finite and >= 0".into()));
    }
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for &w in weights {
        total += w;
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(bs);
    if total <= 0.0 {
        for _ in 0..bs {
            out.push(rng.random_range(0..weights.len()));
        }
        return Ok(out);
    }
    for _ in 0..bs {
        let u = rng.random_range(0.0..total);
        // First index whose cumulative weight exceeds u; zero-weight
        // entries can never be selected.
        let idx = cumulative.partition_point(|&c| c <= u);
        out.push(idx.min(weights.len() - 1));
    }
    Ok(out)
}

/// Uniform `bs`-subset of the multiset, without replacement.
pub fn down_sample(indices: &[usize], bs: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if indices.len() < bs {
        return Err(Error::Invalid(format!(
            "down_sample: pool of {} cannot yield {} without replacement",
            indices.len(),
            bs
        )));
    }
    // Partial Fisher-Yates: the first bs slots end up a uniform subset.
    let mut pool = indices.to_vec();
    for i in 0..bs {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(bs);
    Ok(pool)
}

/// Balanced batch for the binary sub-problem `positive_class`.
///
/// Draws `bs` positives by weighted sampling, then `bs` candidates from
/// each other class present, pools them and down-samples the pool to
/// `bs`. Weights come from the positive class's column. Returns global
/// indices into the labeled set; total size is 2·bs whenever at least
/// one other class is present.
pub fn balanced_sample(
    labels: &OneHotLabels,
    weights: ArrayView2<'_, f64>,
    positive_class: usize,
    bs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n = labels.len();
    if weights.nrows() != n || weights.ncols() != labels.num_classes() {
        return Err(Error::DimMismatch(format!(
            "balanced_sample: weights {}x{} vs {} labels with {} classes",
            weights.nrows(),
            weights.ncols(),
            n,
            labels.num_classes()
        )));
    }
    if positive_class >= labels.num_classes() {
        return Err(Error::Config(format!(
            "balanced_sample: class {positive_class} out of range"
        )));
    }

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for class in 0..labels.num_classes() {
        let pool: Vec<usize> = (0..n).filter(|&i| labels.class_of(i) == class).collect();
        if class == positive_class {
            if pool.is_empty() {
                return Err(Error::Invalid(format!(
                    "balanced_sample: positive class {class} absent from labels"
                )));
            }
            let w: Vec<f64> = pool.iter().map(|&i| weights[[i, positive_class]]).collect();
            positives = weighted_sample(&w, bs, rng)?.into_iter().map(|k| pool[k]).collect();
        } else {
            if pool.is_empty() {
                continue;
            }
            let w: Vec<f64> = pool.iter().map(|&i| weights[[i, positive_class]]).collect();
            negatives.extend(weighted_sample(&w, bs, rng)?.into_iter().map(|k| pool[k]));
        }
    }
    if !negatives.is_empty() {
        negatives = down_sample(&negatives, bs, rng)?;
    }
    positives.extend(negatives);
    Ok(positives)
}
