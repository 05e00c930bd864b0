//! Boosted fine-tuning of a linear classifier over extracted features.
//!
//! Training alternates two kinds of fine-tuning blocks. Odd iterations fit
//! a supervised adaptation block on the labeled target and source data,
//! down-weighting source samples the current ensemble misclassifies. Even
//! iterations fit a semi-supervised block on the labeled target data plus
//! noise-augmented unlabeled target data under hard pseudo-labels. Each
//! block is a frozen random feature map with one ridge learner per class;
//! its normalized output joins the ensemble scaled by the learning rate.
//!
//! Per-partition logits are cached and updated incrementally as blocks are
//! committed, so each iteration costs O(N·J) instead of re-evaluating the
//! whole ensemble.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{DomainBundle, FeatureMatrix, OneHotLabels};
use crate::error::{Error, Result};
use crate::logitboost::{argmax, clip_prob, cross_entropy, normalize_initial, norm_learner, softmax_prob, working_response};
use crate::mapping::{apply_map, build_map, Activation, RandomFeatureMap};
use crate::ridge::{fit_block_learners, fit_ridge_weighted, predict_linear, LinearModel};
use crate::sampling::balanced_sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Da,
    Ssl,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Da => "da",
            BlockKind::Ssl => "ssl",
        }
    }
}

/// One fine-tuning block: a frozen feature map plus one ridge learner per
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneBlock {
    pub kind: BlockKind,
    pub map: RandomFeatureMap,
    pub learners: Vec<LinearModel>,
}

impl FineTuneBlock {
    /// N×J matrix of raw learner scores on already-mapped features.
    pub fn score_matrix(&self, mapped: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros((mapped.nrows(), self.learners.len()));
        for (class, learner) in self.learners.iter().enumerate() {
            let s = predict_linear(learner, mapped.view())?;
            out.column_mut(class).assign(&s.column(0));
        }
        Ok(out)
    }
}

/// The deployable artifact: normalized initial model plus an ordered list
/// of fine-tuning blocks summed with a learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub initial: LinearModel,
    pub blocks: Vec<FineTuneBlock>,
    pub lr: f64,
    pub node_size: usize,
}

impl EnsembleModel {
    pub fn num_classes(&self) -> usize {
        self.initial.n_outputs()
    }

    pub fn n_features(&self) -> usize {
        self.initial.n_inputs()
    }

    /// Ensemble scores: normalized initial scores plus the lr-scaled
    /// normalized output of every block, in block order.
    pub fn predict_scores(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let raw = predict_linear(&self.initial, features)?;
        let mut scores = Array2::<f64>::zeros(raw.dim());
        for (mut out, row) in scores.rows_mut().into_iter().zip(raw.rows()) {
            let normed = normalize_initial(row.as_slice().expect("contiguous row"));
            out.assign(&Array1::from_vec(normed));
        }
        for block in &self.blocks {
            add_block_contribution(&mut scores, block, self.lr, features)?;
        }
        Ok(scores)
    }

    /// Scores plus row argmax labels; ties break toward the lowest class.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<(Array2<f64>, Vec<usize>)> {
        let scores = self.predict_scores(features.view())?;
        let labels = scores
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("contiguous row")))
            .collect();
        Ok((scores, labels))
    }
}

/// Training hyperparameters. Defaults match the published setup: 100
/// block pairs, batch size 64, noise magnitude 1.0, node size 100,
/// seed 2021.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Number of block pairs; each pair adds one DA and one SSL block.
    pub blocks: usize,
    pub batch_size: usize,
    /// Noise magnitude for the unlabeled-data augmentation.
    pub xi: f64,
    pub node_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Replace balanced sampling with weighted full-batch ridge fits.
    pub deterministic_full_batch: bool,
    pub remove_misclassified_source: bool,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            blocks: 100,
            batch_size: 64,
            xi: 1.0,
            node_size: 100,
            lr: 0.1,
            lambda: 0.01,
            seed: 2021,
            deterministic_full_batch: false,
            remove_misclassified_source: true,
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.xi < 0.0 {
            return Err(Error::Config("xi must be >= 0".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.node_size == 0 {
            return Err(Error::Config("node size must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Cached ensemble logits for every partition, kept equal to a
/// from-scratch evaluation of the current ensemble.
#[derive(Debug, Clone)]
pub struct BoostState {
    source_logits: Array2<f64>,
    target_logits: Array2<f64>,
    unlabeled_logits: Array2<f64>,
    test_logits: Option<Array2<f64>>,
}

impl BoostState {
    fn new(
        bundle: &DomainBundle,
        initial: &LinearModel,
        test_features: Option<&FeatureMatrix>,
    ) -> Result<Self> {
        let norm_scores = |features: ArrayView2<'_, f64>| -> Result<Array2<f64>> {
            let raw = predict_linear(initial, features)?;
            let mut out = Array2::<f64>::zeros(raw.dim());
            for (mut o, row) in out.rows_mut().into_iter().zip(raw.rows()) {
                o.assign(&Array1::from_vec(normalize_initial(
                    row.as_slice().expect("contiguous row"),
                )));
            }
            Ok(out)
        };
        Ok(Self {
            source_logits: norm_scores(bundle.source.0.view())?,
            target_logits: norm_scores(bundle.target_labeled.0.view())?,
            unlabeled_logits: norm_scores(bundle.target_unlabeled.view())?,
            test_logits: test_features.map(|f| norm_scores(f.view())).transpose()?,
        })
    }

    fn apply_block(
        &mut self,
        block: &FineTuneBlock,
        lr: f64,
        bundle: &DomainBundle,
        test_features: Option<&FeatureMatrix>,
    ) -> Result<()> {
        add_block_contribution(&mut self.source_logits, block, lr, bundle.source.0.view())?;
        add_block_contribution(&mut self.target_logits, block, lr, bundle.target_labeled.0.view())?;
        add_block_contribution(&mut self.unlabeled_logits, block, lr, bundle.target_unlabeled.view())?;
        if let (Some(logits), Some(features)) = (self.test_logits.as_mut(), test_features) {
            add_block_contribution(logits, block, lr, features.view())?;
        }
        Ok(())
    }

    pub fn source_logits(&self) -> &Array2<f64> {
        &self.source_logits
    }

    pub fn target_logits(&self) -> &Array2<f64> {
        &self.target_logits
    }

    pub fn unlabeled_logits(&self) -> &Array2<f64> {
        &self.unlabeled_logits
    }

    pub fn test_logits(&self) -> Option<&Array2<f64>> {
        self.test_logits.as_ref()
    }
}

fn add_block_contribution(
    logits: &mut Array2<f64>,
    block: &FineTuneBlock,
    lr: f64,
    features: ArrayView2<'_, f64>,
) -> Result<()> {
    if logits.nrows() == 0 {
        return Ok(());
    }
    let mapped = apply_map(&block.map, features)?;
    let scores = block.score_matrix(&mapped)?;
    for (mut out, row) in logits.rows_mut().into_iter().zip(scores.rows()) {
        let normed = norm_learner(row.as_slice().expect("contiguous row"));
        for (o, n) in out.iter_mut().zip(&normed) {
            *o += lr * n;
        }
    }
    Ok(())
}

/// One log entry per committed block, plus an index-0 row for the initial
/// model.
#[derive(Debug, Clone)]
pub struct BlockLogRow {
    pub block_index: usize,
    pub kind: &'static str,
    pub labeled_cross_entropy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<BlockLogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block_index,kind,labeled_cross_entropy,test_accuracy\n");
        for row in &self.rows {
            let acc = row.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.block_index, row.kind, row.labeled_cross_entropy, acc
            ));
        }
        out
    }
}

/// Sample weights and pseudo-labels for every (row, class) pair, from
/// cached logits and true class indices.
pub(crate) fn working_responses(
    logits: &Array2<f64>,
    classes: &[usize],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = logits.nrows();
    let j = logits.ncols();
    assert_eq!(classes.len(), n);
    let mut weights = Array2::<f64>::zeros((n, j));
    let mut responses = Array2::<f64>::zeros((n, j));
    for i in 0..n {
        let p = softmax_prob(logits.row(i).as_slice().expect("contiguous row"))?;
        for class in 0..j {
            let pc = clip_prob(p[class]);
            let indicator = if classes[i] == class { 1.0 } else { 0.0 };
            let wr = working_response(indicator, pc);
            weights[[i, class]] = wr.weight;
            responses[[i, class]] = wr.pseudo_label;
        }
    }
    Ok((weights, responses))
}

/// One-hot labels from the row argmax of cached logits.
pub(crate) fn hard_pseudo_labels(logits: &Array2<f64>, j: usize) -> Result<OneHotLabels> {
    let classes = logits
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("contiguous row")))
        .collect();
    OneHotLabels::from_classes(classes, j)
}

/// Zero every weight of rows at or past `from_row` whose cached argmax
/// disagrees with the true class.
pub(crate) fn zero_misclassified(
    weights: &mut Array2<f64>,
    logits: &Array2<f64>,
    classes: &[usize],
    from_row: usize,
) {
    for i in from_row..logits.nrows() {
        let predicted = argmax(logits.row(i).as_slice().expect("contiguous row"));
        if predicted != classes[i] {
            weights.row_mut(i).fill(0.0);
        }
    }
}

/// Per-class batches over a [target; other] stacked set: a balanced batch
/// from each partition, unioned. Classes absent from a partition's labels
/// contribute nothing from that partition.
fn paired_batches(
    target_labels: &OneHotLabels,
    other_labels: &OneHotLabels,
    weights: &Array2<f64>,
    skip_other: bool,
    bs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let nt = target_labels.len();
    let j = target_labels.num_classes();
    let target_w = weights.slice(ndarray::s![..nt, ..]).to_owned();
    let other_w = weights.slice(ndarray::s![nt.., ..]).to_owned();
    let mut batches = Vec::with_capacity(j);
    for class in 0..j {
        let mut batch = balanced_sample(target_labels, target_w.view(), class, bs, rng)?;
        if !skip_other && other_labels.classes().contains(&class) {
            let local = balanced_sample(other_labels, other_w.view(), class, bs, rng)?;
            batch.extend(local.into_iter().map(|i| i + nt));
        }
        batches.push(batch);
    }
    Ok(batches)
}

fn fit_learners(
    mapped: &Array2<f64>,
    weights: &Array2<f64>,
    responses: &Array2<f64>,
    batches: Option<&[Vec<usize>]>,
    lambda: f64,
) -> Result<Vec<LinearModel>> {
    match batches {
        Some(batches) => fit_block_learners(mapped.view(), responses.view(), batches, lambda),
        None => {
            let j = responses.ncols();
            let mut learners = Vec::with_capacity(j);
            for class in 0..j {
                learners.push(fit_ridge_weighted(
                    mapped.view(),
                    responses.column(class),
                    Some(weights.column(class)),
                    lambda,
                )?);
            }
            Ok(learners)
        }
    }
}

/// Fit one supervised-adaptation block from the current cached logits.
///
/// The working set stacks labeled target rows before source rows; when
/// removal is on, source rows the ensemble misclassifies get zero weight
/// in every binary sub-problem.
pub fn da_step(
    state: &BoostState,
    bundle: &DomainBundle,
    cfg: &TrainConfig,
    seed_tag: u64,
    rng: &mut ChaCha8Rng,
) -> Result<FineTuneBlock> {
    let nt = bundle.target_labeled.0.n_rows();
    let map = build_map(&bundle.source.0, cfg.node_size, cfg.activation, seed_tag, rng)?;
    let stacked = FeatureMatrix::vstack(&[&bundle.target_labeled.0, &bundle.source.0])?;
    let mapped = apply_map(&map, stacked.view())?;

    let logits = concatenate(
        Axis(0),
        &[state.target_logits.view(), state.source_logits.view()],
    )
    .expect("matching widths");
    let mut classes: Vec<usize> = bundle.target_labeled.1.classes().to_vec();
    classes.extend_from_slice(bundle.source.1.classes());

    let (mut weights, responses) = working_responses(&logits, &classes)?;
    if cfg.remove_misclassified_source {
        zero_misclassified(&mut weights, &logits, &classes, nt);
    }

    let batches = if cfg.deterministic_full_batch {
        None
    } else {
        let source_all_zero = weights
            .slice(ndarray::s![nt.., ..])
            .iter()
            .all(|&w| w == 0.0);
        if source_all_zero && bundle.source.0.n_rows() > 0 {
            log::warn!("every source sample is misclassified; fitting on target-only batches");
        }
        Some(paired_batches(
            &bundle.target_labeled.1,
            &bundle.source.1,
            &weights,
            source_all_zero,
            cfg.batch_size,
            rng,
        )?)
    };

    let learners = fit_learners(&mapped, &weights, &responses, batches.as_deref(), cfg.lambda)?;
    Ok(FineTuneBlock { kind: BlockKind::Da, map, learners })
}

/// Fit one semi-supervised block.
///
/// Unlabeled rows get hard pseudo-labels from the cached logits and a
/// fresh Gaussian perturbation scaled by `xi` and the per-feature spread
/// of the unlabeled pool. Their probabilities come from the noisy logits
/// `prev_unlabeled + last DA block evaluated on the perturbed features`;
/// labeled target rows use the clean cached logits. Learners are fit on
/// perturbed features for unlabeled rows and clean features for labeled
/// rows.
pub fn ssl_step(
    state: &BoostState,
    bundle: &DomainBundle,
    cfg: &TrainConfig,
    prev_unlabeled_logits: &Array2<f64>,
    last_da: &FineTuneBlock,
    seed_tag: u64,
    rng: &mut ChaCha8Rng,
) -> Result<FineTuneBlock> {
    let nu = bundle.target_unlabeled.n_rows();
    if nu == 0 {
        return Err(Error::Invalid(
            "semi-supervised step needs at least one unlabeled sample".into(),
        ));
    }
    let d = bundle.n_features();
    let j = bundle.num_classes();

    let map = build_map(&bundle.source.0, cfg.node_size, cfg.activation, seed_tag, rng)?;

    // Fresh noise each block; constant feature columns get none.
    let stds = bundle.target_unlabeled.as_array().std_axis(Axis(0), 0.0);
    let mut noisy = bundle.target_unlabeled.as_array().clone();
    for i in 0..nu {
        for k in 0..d {
            let eps: f64 = cfg.xi * stds[k] * rng.sample::<f64, _>(StandardNormal);
            noisy[[i, k]] += eps;
        }
    }

    // Hard pseudo-labels from the clean cached logits.
    let pseudo_labels = hard_pseudo_labels(&state.unlabeled_logits, j)?;
    let pseudo = pseudo_labels.classes().to_vec();

    // Noisy logits: cached pre-DA logits plus the newest block's
    // contribution evaluated on the perturbed features.
    let mapped_noisy = apply_map(&last_da.map, noisy.view())?;
    let da_scores = last_da.score_matrix(&mapped_noisy)?;
    let mut noisy_logits = prev_unlabeled_logits.clone();
    for (mut out, row) in noisy_logits.rows_mut().into_iter().zip(da_scores.rows()) {
        let normed = norm_learner(row.as_slice().expect("contiguous row"));
        for (o, n) in out.iter_mut().zip(&normed) {
            *o += cfg.lr * n;
        }
    }

    let (w_t, y_t) = working_responses(&state.target_logits, bundle.target_labeled.1.classes())?;
    let (w_u, y_u) = working_responses(&noisy_logits, &pseudo)?;
    let weights = concatenate(Axis(0), &[w_t.view(), w_u.view()]).expect("matching widths");
    let responses = concatenate(Axis(0), &[y_t.view(), y_u.view()]).expect("matching widths");

    let clean_target = apply_map(&map, bundle.target_labeled.0.view())?;
    let mapped_rows = concatenate(
        Axis(0),
        &[clean_target.view(), apply_map(&map, noisy.view())?.view()],
    )
    .expect("matching widths");

    let batches = if cfg.deterministic_full_batch {
        None
    } else {
        Some(paired_batches(
            &bundle.target_labeled.1,
            &pseudo_labels,
            &weights,
            false,
            cfg.batch_size,
            rng,
        )?)
    };

    let learners = fit_learners(&mapped_rows, &weights, &responses, batches.as_deref(), cfg.lambda)?;
    Ok(FineTuneBlock { kind: BlockKind::Ssl, map, learners })
}

fn mean_labeled_cross_entropy(state: &BoostState, bundle: &DomainBundle, removal: bool) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &class) in bundle.target_labeled.1.classes().iter().enumerate() {
        let row = state.target_logits.row(i);
        total += cross_entropy(row.as_slice().expect("contiguous row"), class);
        count += 1;
    }
    for (i, &class) in bundle.source.1.classes().iter().enumerate() {
        let row = state.source_logits.row(i);
        let slice = row.as_slice().expect("contiguous row");
        if removal && argmax(slice) != class {
            continue;
        }
        total += cross_entropy(slice, class);
        count += 1;
    }
    total / count.max(1) as f64
}

fn test_accuracy(state: &BoostState, test_labels: Option<&OneHotLabels>) -> Option<f64> {
    let logits = state.test_logits.as_ref()?;
    let labels = test_labels?;
    let preds: Vec<usize> = logits
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("contiguous row")))
        .collect();
    Some(labels.accuracy_of(&preds))
}

/// Run the full fine-tuning loop and return the ensemble with its log.
pub fn train(
    bundle: &DomainBundle,
    initial: &LinearModel,
    cfg: &TrainConfig,
    test: Option<(&FeatureMatrix, &OneHotLabels)>,
) -> Result<(EnsembleModel, TrainLog)> {
    let (model, log, _) = train_with_state(bundle, initial, cfg, test)?;
    Ok((model, log))
}

/// As [`train`], also returning the final cached logits for inspection.
pub fn train_with_state(
    bundle: &DomainBundle,
    initial: &LinearModel,
    cfg: &TrainConfig,
    test: Option<(&FeatureMatrix, &OneHotLabels)>,
) -> Result<(EnsembleModel, TrainLog, BoostState)> {
    cfg.validate()?;
    if initial.n_outputs() != bundle.num_classes() {
        return Err(Error::DimMismatch(format!(
            "initial model has {} outputs, bundle has {} classes",
            initial.n_outputs(),
            bundle.num_classes()
        )));
    }
    if initial.n_inputs() != bundle.n_features() {
        return Err(Error::DimMismatch(format!(
            "initial model takes {} features, bundle has {}",
            initial.n_inputs(),
            bundle.n_features()
        )));
    }
    if cfg.blocks > 0 && bundle.target_unlabeled.n_rows() == 0 {
        return Err(Error::Invalid(
            "fine-tuning needs at least one unlabeled target sample".into(),
        ));
    }
    if let Some((features, labels)) = test {
        if features.n_cols() != bundle.n_features() || features.n_rows() != labels.len() {
            return Err(Error::DimMismatch("test set shape".into()));
        }
    }

    let test_features = test.map(|(f, _)| f);
    let test_labels = test.map(|(_, l)| l);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = BoostState::new(bundle, initial, test_features)?;
    let mut blocks = Vec::with_capacity(2 * cfg.blocks);
    let mut log = TrainLog::default();
    let removal = cfg.remove_misclassified_source;
    log.rows.push(BlockLogRow {
        block_index: 0,
        kind: "init",
        labeled_cross_entropy: mean_labeled_cross_entropy(&state, bundle, removal),
        test_accuracy: test_accuracy(&state, test_labels),
    });

    for pair in 0..cfg.blocks {
        let da = da_step(&state, bundle, cfg, 2 * pair as u64, &mut rng)?;
        let prev_unlabeled = state.unlabeled_logits.clone();
        state.apply_block(&da, cfg.lr, bundle, test_features)?;
        log.rows.push(BlockLogRow {
            block_index: 2 * pair + 1,
            kind: da.kind.name(),
            labeled_cross_entropy: mean_labeled_cross_entropy(&state, bundle, removal),
            test_accuracy: test_accuracy(&state, test_labels),
        });

        let ssl = ssl_step(
            &state,
            bundle,
            cfg,
            &prev_unlabeled,
            &da,
            (2 * pair + 1) as u64,
            &mut rng,
        )?;
        state.apply_block(&ssl, cfg.lr, bundle, test_features)?;
        log.rows.push(BlockLogRow {
            block_index: 2 * pair + 2,
            kind: ssl.kind.name(),
            labeled_cross_entropy: mean_labeled_cross_entropy(&state, bundle, removal),
            test_accuracy: test_accuracy(&state, test_labels),
        });

        blocks.push(da);
        blocks.push(ssl);
    }

    let model = EnsembleModel {
        initial: initial.clone(),
        blocks,
        lr: cfg.lr,
        node_size: cfg.node_size,
    };
    Ok((model, log, state))
}
