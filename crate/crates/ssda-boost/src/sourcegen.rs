//! Virtual source synthesis for the source-free setting.
//!
//! When the real source features are unavailable, a labeled stand-in is
//! reconstructed from the classifier's last linear layer in three steps:
//! Beta-mixed soft label vectors, ridge pseudo-inversion of the linear
//! layer, and per-feature moment alignment to the target data.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::dataset::{FeatureMatrix, OneHotLabels};
use crate::error::{Error, Result};
use crate::ridge::LinearModel;

/// J × (J·n_per_class) matrix of soft label columns. Each column puts
/// mass α >= 0.5 on its class and 1-α on one other random class.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    pub columns: Array2<f64>,
    /// Class c of each column (its argmax).
    pub classes: Vec<usize>,
}

impl SoftLabelMatrix {
    pub fn num_classes(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Synthesized source features with their hard labels.
#[derive(Debug, Clone)]
pub struct SynthesizedSource {
    pub features: FeatureMatrix,
    pub labels: OneHotLabels,
}

/// Draw `n_per_class` soft label columns per class.
///
/// For each column: β ~ Beta(a, b), α = max(β, 1-β), and the residual
/// 1-α lands on a uniformly chosen other class.
pub fn generate_soft_labels(
    num_classes: usize,
    n_per_class: usize,
    a: f64,
    b: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SoftLabelMatrix> {
    if num_classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be >= 1".into()));
    }
    let beta = Beta::new(a, b)
        .map_err(|e| Error::Config(format!("bad Beta parameters a={a}, b={b}: {e}")))?;
    let total = num_classes * n_per_class;
    let mut columns = Array2::<f64>::zeros((num_classes, total));
    let mut classes = Vec::with_capacity(total);
    for c in 0..num_classes {
        for i in 0..n_per_class {
            let col = c * n_per_class + i;
            let sample: f64 = beta.sample(rng);
            let alpha = sample.max(1.0 - sample);
            let mut r = rng.random_range(0..num_classes - 1);
            if r >= c {
                r += 1;
            }
            columns[[c, col]] = alpha;
            columns[[r, col]] += 1.0 - alpha;
            classes.push(c);
        }
    }
    Ok(SoftLabelMatrix { columns, classes })
}

/// Recover features from soft labels through the last linear layer:
/// ẑ = θᵀ (θθᵀ + λI)⁻¹ (ŷ - bias), one row per column of `soft_labels`.
///
/// At λ → 0 this is the least-norm pseudo-inverse solution. The layer
/// must be wide (J <= d).
pub fn reconstruct_features(
    theta: &LinearModel,
    soft_labels: &SoftLabelMatrix,
    lambda: f64,
) -> Result<FeatureMatrix> {
    let j = theta.n_outputs();
    let d = theta.n_inputs();
    if j > d {
        return Err(Error::Invalid(format!(
            "reconstruction needs a wide layer: {j} outputs > {d} inputs"
        )));
    }
    if soft_labels.num_classes() != j {
        return Err(Error::DimMismatch(format!(
            "soft labels have {} classes, layer has {j} outputs",
            soft_labels.num_classes()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::Config("lambda must be >= 0".into()));
    }

    // Gram system is J×J; solve once, reuse across columns.
    let mut gram = theta.weights.dot(&theta.weights.t());
    for k in 0..j {
        gram[[k, k]] += lambda;
    }
    let inv = invert_spd(&gram).ok_or_else(|| {
        Error::Invalid("layer Gram matrix is singular; increase lambda".into())
    })?;

    // Ẑᵀ = θᵀ · inv · (Ŷ - bias 1ᵀ)
    let mut rhs = soft_labels.columns.clone();
    for mut col in rhs.columns_mut() {
        col -= &theta.bias;
    }
    let z = theta.weights.t().dot(&inv).dot(&rhs);
    FeatureMatrix::new(z.t().to_owned())
}

/// Rescale every synthesized feature column to the target's mean and
/// standard deviation. Constant synthesized columns map to the target mean.
pub fn align_moments(synth: &FeatureMatrix, target: &FeatureMatrix) -> Result<FeatureMatrix> {
    if synth.n_cols() != target.n_cols() {
        return Err(Error::DimMismatch(format!(
            "align_moments: {} vs {} columns",
            synth.n_cols(),
            target.n_cols()
        )));
    }
    if synth.n_rows() < 2 || target.n_rows() < 2 {
        return Err(Error::Invalid(
            "align_moments needs at least 2 rows on each side".into(),
        ));
    }
    let mu_s = synth.as_array().mean_axis(Axis(0)).expect("non-empty");
    let sd_s = synth.as_array().std_axis(Axis(0), 0.0);
    let mu_t = target.as_array().mean_axis(Axis(0)).expect("non-empty");
    let sd_t = target.as_array().std_axis(Axis(0), 0.0);

    let mut out = synth.as_array().clone();
    for mut row in out.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = if sd_s[k] == 0.0 {
                mu_t[k]
            } else {
                (*v - mu_s[k]) * sd_t[k] / sd_s[k] + mu_t[k]
            };
        }
    }
    FeatureMatrix::new(out)
}

/// Full pipeline: soft labels, reconstruction, moment alignment against
/// the pooled target features. Output has exactly `n_per_class` rows per
/// class, labeled by each soft column's argmax class.
pub fn synthesize_source(
    theta: &LinearModel,
    target_features: &FeatureMatrix,
    n_per_class: usize,
    a: f64,
    b: f64,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SynthesizedSource> {
    let soft = generate_soft_labels(theta.n_outputs(), n_per_class, a, b, rng)?;
    let raw = reconstruct_features(theta, &soft, lambda)?;
    let aligned = align_moments(&raw, target_features)?;
    let labels = OneHotLabels::from_classes(soft.classes, theta.n_outputs())?;
    Ok(SynthesizedSource { features: aligned, labels })
}

/// Gauss-Jordan inverse for the small J×J Gram matrix; None if singular.
fn invert_spd(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut work = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if work[[r, col]].abs() > work[[pivot, col]].abs() {
                pivot = r;
            }
        }
        if work[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                work.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let p = work[[col, col]];
        for k in 0..n {
            work[[col, k]] /= p;
            inv[[col, k]] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[[r, col]];
            if factor == 0.0 {
                continue;
            }
            for k in 0..n {
                work[[r, k]] -= factor * work[[col, k]];
                inv[[r, k]] -= factor * inv[[col, k]];
            }
        }
    }
    Some(inv)
}
