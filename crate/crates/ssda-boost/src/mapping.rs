//! Frozen random nonlinear feature maps.
//!
//! Each base learner sees the input features through its own random
//! projection, z-scored against statistics of the source features and
//! passed through a bounded nonlinearity. The projection is drawn once
//! and never trained.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Standard deviations below this are floored so the z-score stays defined.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!(
                "unknown activation '{other}' (expected tanh, sigmoid or relu)"
            ))),
        }
    }
}

/// A frozen random projection with source-derived z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureMap {
    /// d × ns, entries i.i.d. standard normal.
    pub projection: Array2<f64>,
    /// Column means of the projected construction set.
    pub mu: Array1<f64>,
    /// Column standard deviations, floored at 1e-8.
    pub sigma: Array1<f64>,
    pub activation: Activation,
    /// Which map this is within a training run, for reproducibility audits.
    pub seed_tag: u64,
}

impl RandomFeatureMap {
    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn node_size(&self) -> usize {
        self.projection.ncols()
    }
}

/// Draw a fresh map and freeze z-score statistics over `source_features`.
pub fn build_map(
    source_features: &FeatureMatrix,
    node_size: usize,
    activation: Activation,
    seed_tag: u64,
    rng: &mut ChaCha8Rng,
) -> Result<RandomFeatureMap> {
    if source_features.n_rows() == 0 {
        return Err(Error::Invalid(
            "cannot build a feature map from an empty construction set".into(),
        ));
    }
    if node_size == 0 {
        return Err(Error::Config("node size must be >= 1".into()));
    }
    let d = source_features.n_cols();
    let projection =
        Array2::from_shape_fn((d, node_size), |_| rng.sample::<f64, _>(StandardNormal));
    let projected = source_features.view().dot(&projection);
    let mu = projected.mean_axis(Axis(0)).expect("non-empty by check above");
    let sigma = projected.std_axis(Axis(0), 0.0).mapv(|s| s.max(SIGMA_FLOOR));
    Ok(RandomFeatureMap { projection, mu, sigma, activation, seed_tag })
}

/// Apply the map row-wise: activation((x·M - mu) / sigma).
pub fn apply_map(map: &RandomFeatureMap, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if features.ncols() != map.input_dim() {
        return Err(Error::DimMismatch(format!(
            "apply_map: {} feature columns vs projection input {}",
            features.ncols(),
            map.input_dim()
        )));
    }
    let mut out = features.dot(&map.projection);
    for mut row in out.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = map.activation.apply((*v - map.mu[k]) / map.sigma[k]);
        }
    }
    Ok(out)
}
