//! Feature-file ingestion, the three-way data model, and a synthetic
//! domain-shift benchmark generator.
//!
//! The CSV schema is strict: UTF-8, comma separated, one header row with
//! feature columns named `f0..f{d-1}` in order and an optional final
//! `label` column holding a non-negative integer class index. No quoting;
//! scientific notation is accepted.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// N×d table of real-valued features; rows are samples.
///
/// All entries are finite and storage is row-major by construction, so
/// row views are always contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::Invalid("feature matrix needs at least one column".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite value in feature matrix".into()));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    /// Stack parts top to bottom; all must share the same width.
    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        if parts.is_empty() {
            return Err(Error::Invalid("vstack of zero parts".into()));
        }
        let d = parts[0].n_cols();
        if parts.iter().any(|p| p.n_cols() != d) {
            return Err(Error::DimMismatch("vstack: column counts differ".into()));
        }
        let total: usize = parts.iter().map(|p| p.n_rows()).sum();
        let mut out = Array2::<f64>::zeros((total, d));
        let mut at = 0;
        for p in parts {
            out.slice_mut(ndarray::s![at..at + p.n_rows(), ..]).assign(&p.data);
            at += p.n_rows();
        }
        Ok(FeatureMatrix { data: out })
    }
}

/// One-hot class labels stored as indices; each row has exactly one 1.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels {
    classes: Vec<usize>,
    num_classes: usize,
}

impl OneHotLabels {
    pub fn from_classes(classes: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Invalid(format!(
                "label index {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { classes, num_classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_of(&self, row: usize) -> usize {
        self.classes[row]
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// Indicator entry y*_n^j in {0, 1}.
    pub fn indicator(&self, row: usize, class: usize) -> f64 {
        if self.classes[row] == class {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_indicator_matrix(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.len(), self.num_classes));
        for (i, &c) in self.classes.iter().enumerate() {
            m[[i, c]] = 1.0;
        }
        m
    }

    /// Fraction of predictions matching the stored classes.
    pub fn accuracy_of(&self, predictions: &[usize]) -> f64 {
        assert_eq!(predictions.len(), self.len());
        if self.is_empty() {
            return 0.0;
        }
        let hits = predictions
            .iter()
            .zip(&self.classes)
            .filter(|(p, c)| p == c)
            .count();
        hits as f64 / self.len() as f64
    }
}

/// The three datasets of the adaptation problem: labeled source, labeled
/// target, unlabeled target.
#[derive(Debug, Clone)]
pub struct DomainBundle {
    pub source: (FeatureMatrix, OneHotLabels),
    pub target_labeled: (FeatureMatrix, OneHotLabels),
    pub target_unlabeled: FeatureMatrix,
}

impl DomainBundle {
    pub fn new(
        source: (FeatureMatrix, OneHotLabels),
        target_labeled: (FeatureMatrix, OneHotLabels),
        target_unlabeled: FeatureMatrix,
    ) -> Result<Self> {
        let d = source.0.n_cols();
        if target_labeled.0.n_cols() != d || target_unlabeled.n_cols() != d {
            return Err(Error::DimMismatch(
                "bundle parts disagree on feature dimensionality".into(),
            ));
        }
        if source.0.n_rows() != source.1.len() || target_labeled.0.n_rows() != target_labeled.1.len()
        {
            return Err(Error::DimMismatch("row count vs label count".into()));
        }
        let j = source.1.num_classes();
        if target_labeled.1.num_classes() != j {
            return Err(Error::DimMismatch("bundle parts disagree on class count".into()));
        }
        for class in 0..j {
            if !target_labeled.1.classes().contains(&class) {
                return Err(Error::Invalid(format!(
                    "class {class} missing from labeled target data"
                )));
            }
        }
        Ok(Self { source, target_labeled, target_unlabeled })
    }

    pub fn n_features(&self) -> usize {
        self.source.0.n_cols()
    }

    pub fn num_classes(&self) -> usize {
        self.source.1.num_classes()
    }
}

/// What to expect in the trailing `label` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    /// Column must be present. `num_classes` overrides J = max index + 1.
    Required { num_classes: Option<usize> },
    /// Column must be absent.
    Absent,
    /// Accept either; labels are returned when present.
    Auto,
}

/// Load a feature CSV from disk. See [`parse_features`] for the format.
pub fn load_features(
    path: impl AsRef<Path>,
    has_labels: bool,
) -> Result<(FeatureMatrix, Option<OneHotLabels>)> {
    let mode = if has_labels {
        LabelColumn::Required { num_classes: None }
    } else {
        LabelColumn::Absent
    };
    load_features_opts(path, mode)
}

pub fn load_features_opts(
    path: impl AsRef<Path>,
    mode: LabelColumn,
) -> Result<(FeatureMatrix, Option<OneHotLabels>)> {
    let file = File::open(path.as_ref())?;
    parse_features(BufReader::new(file), mode)
}

/// Parse the strict feature-CSV format from any reader.
///
/// Errors carry the 1-based line number of the offending row. Never
/// panics on malformed input.
pub fn parse_features<R: BufRead>(
    reader: R,
    mode: LabelColumn,
) -> Result<(FeatureMatrix, Option<OneHotLabels>)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::Parse { line: 1, msg: "missing header row".into() }),
    };
    let header = header.strip_suffix('\r').unwrap_or(&header);
    let columns: Vec<&str> = header.split(',').collect();

    let has_label_col = columns.last() == Some(&"label");
    match (mode, has_label_col) {
        (LabelColumn::Required { .. }, false) => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected a trailing 'label' column".into(),
            })
        }
        (LabelColumn::Absent, true) => {
            return Err(Error::Parse {
                line: 1,
                msg: "unexpected 'label' column in unlabeled file".into(),
            })
        }
        _ => {}
    }
    let d = if has_label_col { columns.len() - 1 } else { columns.len() };
    if d == 0 {
        return Err(Error::Parse { line: 1, msg: "no feature columns".into() });
    }
    for (i, name) in columns[..d].iter().enumerate() {
        let expect = format!("f{i}");
        if *name != expect {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column '{expect}', found '{name}'"),
            });
        }
    }

    let mut values = Vec::new();
    let mut classes = Vec::new();
    let mut n = 0usize;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} columns, found {}", columns.len(), fields.len()),
            });
        }
        for field in &fields[..d] {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite value '{field}'"),
                });
            }
            values.push(v);
        }
        if has_label_col {
            let raw = fields[d];
            let c: usize = raw.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("label '{raw}' is not a non-negative integer"),
            })?;
            classes.push(c);
        }
        n += 1;
    }

    let data = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Invalid(format!("shape error: {e}")))?;
    let features = FeatureMatrix::new(data)?;

    let labels = if has_label_col {
        let override_j = match mode {
            LabelColumn::Required { num_classes } => num_classes,
            _ => None,
        };
        let j = match override_j {
            Some(j) => {
                if let Some(&bad) = classes.iter().find(|&&c| c >= j) {
                    return Err(Error::Invalid(format!(
                        "label index {bad} >= declared class count {j}"
                    )));
                }
                j
            }
            None => classes.iter().max().map_or(2, |&m| (m + 1).max(2)),
        };
        Some(OneHotLabels::from_classes(classes, j)?)
    } else {
        None
    };
    Ok((features, labels))
}

/// Write features (and labels, when given) in the strict CSV format.
///
/// Floats are written with 17 significant digits so a reload reproduces
/// them exactly.
pub fn save_features(
    path: impl AsRef<Path>,
    features: &FeatureMatrix,
    labels: Option<&OneHotLabels>,
) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != features.n_rows() {
            return Err(Error::DimMismatch("row count vs label count".into()));
        }
    }
    let mut out = String::new();
    for j in 0..features.n_cols() {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "f{j}");
    }
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..features.n_rows() {
        for j in 0..features.n_cols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", features.as_array()[[i, j]]);
        }
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l.class_of(i));
        }
        out.push('\n');
    }
    let mut file = File::create(path.as_ref())?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reassign a fraction of labels to a uniformly chosen other class.
///
/// Corruption utility for robustness experiments; deterministic given
/// the rng stream.
pub fn flip_labels(labels: &OneHotLabels, fraction: f64, rng: &mut ChaCha8Rng) -> OneHotLabels {
    let j = labels.num_classes();
    let classes = labels
        .classes()
        .iter()
        .map(|&c| {
            if rng.random_range(0.0..1.0) < fraction {
                let mut r = rng.random_range(0..j - 1);
                if r >= c {
                    r += 1;
                }
                r
            } else {
                c
            }
        })
        .collect();
    OneHotLabels::from_classes(classes, j).expect("classes stay in range")
}

/// Parameters for the synthetic domain-shift benchmark.
#[derive(Debug, Clone)]
pub struct ShiftConfig {
    pub n_classes: usize,
    pub n_features: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Shift magnitude in units of the (unit) cluster standard deviation.
    pub shift: f64,
    /// Labeled target samples per class.
    pub n_shot: usize,
    pub seed: u64,
}

impl ShiftConfig {
    pub fn new(
        n_classes: usize,
        n_features: usize,
        n_source: usize,
        n_target: usize,
        shift: f64,
        seed: u64,
    ) -> Self {
        Self { n_classes, n_features, n_source, n_target, shift, n_shot: 3, seed }
    }
}

/// A generated bundle plus a held-out labeled target test set.
#[derive(Debug, Clone)]
pub struct ShiftBenchmark {
    pub bundle: DomainBundle,
    pub test_features: FeatureMatrix,
    pub test_labels: OneHotLabels,
}

/// Spread of the Gaussian class means, in cluster-std units.
const MEAN_SPREAD: f64 = 0.5;
/// Radians of in-plane rotation per unit of shift, capped at a quarter turn.
const ROTATION_PER_SHIFT: f64 = 1.3;

/// Generate Gaussian class clusters in a source domain and a target
/// domain derived from it by rotating the feature space in one random
/// 2-plane and translating every cluster mean by `shift` along its own
/// random direction, producing both marginal and conditional shift. At
/// large `shift` the class regions scramble and a source-trained
/// classifier degrades toward chance.
///
/// The labeled target part holds exactly `n_shot` samples per class; the
/// remaining target samples alternate into the unlabeled pool and the
/// test set. Pure function of the config, including the seed.
pub fn make_shift_benchmark(cfg: &ShiftConfig) -> Result<ShiftBenchmark> {
    let j = cfg.n_classes;
    let d = cfg.n_features;
    if j < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if d < 2 {
        return Err(Error::Config("need at least 2 feature dimensions".into()));
    }
    if cfg.shift < 0.0 {
        return Err(Error::Config("shift must be >= 0".into()));
    }
    if cfg.n_shot == 0 {
        return Err(Error::Config("n_shot must be >= 1".into()));
    }
    if cfg.n_shot * j > cfg.n_target {
        return Err(Error::Config(format!(
            "n_shot {} x {} classes exceeds n_target {}",
            cfg.n_shot, j, cfg.n_target
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);

    let means: Vec<Array1<f64>> = (0..j)
        .map(|_| Array1::from_shape_fn(d, |_| MEAN_SPREAD * normal(&mut rng)))
        .collect();

    // Random directions are drawn inside the span of the class means;
    // directions orthogonal to the class structure would leave a linear
    // classifier untouched no matter how large the shift.
    let span_vector = |rng: &mut ChaCha8Rng| -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(d);
        for m in &means {
            let coefficient: f64 = rng.sample(StandardNormal);
            out = out + coefficient * m;
        }
        out
    };

    // Orthonormal basis (u, v) of the rotation plane.
    let mut u = span_vector(&mut rng);
    u /= u.dot(&u).sqrt();
    let v = loop {
        let raw = span_vector(&mut rng);
        let ortho = &raw - u.dot(&raw) * &u;
        let norm = ortho.dot(&ortho).sqrt();
        if norm > 1e-8 {
            break ortho / norm;
        }
    };
    let theta = (cfg.shift * ROTATION_PER_SHIFT).min(std::f64::consts::FRAC_PI_2);

    // One translation direction per cluster.
    let translations: Vec<Array1<f64>> = (0..j)
        .map(|_| {
            let t = span_vector(&mut rng);
            cfg.shift / t.dot(&t).sqrt() * t
        })
        .collect();

    let rotate = |x: &Array1<f64>| -> Array1<f64> {
        let a = x.dot(&u);
        let b = x.dot(&v);
        x + (a * (theta.cos() - 1.0) - b * theta.sin()) * &u
            + (a * theta.sin() + b * (theta.cos() - 1.0)) * &v
    };

    let counts = |total: usize| -> Vec<usize> {
        (0..j).map(|c| total / j + usize::from(c < total % j)).collect()
    };

    // Source clusters.
    let src_counts = counts(cfg.n_source);
    let n_src: usize = src_counts.iter().sum();
    let mut src = Array2::<f64>::zeros((n_src, d));
    let mut src_classes = Vec::with_capacity(n_src);
    let mut row = 0;
    for (c, &count) in src_counts.iter().enumerate() {
        for _ in 0..count {
            for col in 0..d {
                src[[row, col]] = means[c][col] + normal(&mut rng);
            }
            src_classes.push(c);
            row += 1;
        }
    }

    // Target samples: rotated and translated copies of the class clusters.
    let tgt_counts = counts(cfg.n_target);
    let mut labeled_rows = Vec::new();
    let mut labeled_classes = Vec::new();
    let mut unlabeled_rows = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_classes = Vec::new();
    let mut sample = Array1::<f64>::zeros(d);
    for (c, &count) in tgt_counts.iter().enumerate() {
        for i in 0..count {
            for col in 0..d {
                sample[col] = means[c][col] + normal(&mut rng);
            }
            let x = rotate(&sample) + &translations[c];
            if i < cfg.n_shot {
                labeled_rows.push(x);
                labeled_classes.push(c);
            } else if (i - cfg.n_shot) % 2 == 0 {
                unlabeled_rows.push(x);
            } else {
                test_rows.push(x);
                test_classes.push(c);
            }
        }
    }

    let to_matrix = |rows: Vec<Array1<f64>>| -> Result<FeatureMatrix> {
        let mut m = Array2::<f64>::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).assign(r);
        }
        FeatureMatrix::new(m)
    };

    let bundle = DomainBundle::new(
        (FeatureMatrix::new(src)?, OneHotLabels::from_classes(src_classes, j)?),
        (to_matrix(labeled_rows)?, OneHotLabels::from_classes(labeled_classes, j)?),
        to_matrix(unlabeled_rows)?,
    )?;
    Ok(ShiftBenchmark {
        bundle,
        test_features: to_matrix(test_rows)?,
        test_labels: OneHotLabels::from_classes(test_classes, j)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, mode: LabelColumn) -> Result<(FeatureMatrix, Option<OneHotLabels>)> {
        parse_features(Cursor::new(text.as_bytes()), mode)
    }

    #[test]
    fn small_labeled_file() {
        let (m, l) = parse(
            "f0,f1,f2,label\n0,0,0,0\n1,1,1,1\n",
            LabelColumn::Required { num_classes: None },
        )
        .unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 3));
        let l = l.unwrap();
        assert_eq!(l.num_classes(), 2);
        assert_eq!(l.classes(), &[0, 1]);
        assert_eq!(l.indicator(0, 0), 1.0);
        assert_eq!(l.indicator(0, 1), 0.0);
    }

    #[test]
    fn header_only_is_empty_matrix() {
        let (m, l) = parse("f0,f1\n", LabelColumn::Absent).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (0, 2));
        assert!(l.is_none());
    }

    #[test]
    fn nan_cell_names_the_row() {
        let err = parse("f0\n1.0\nnan\n", LabelColumn::Absent).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn column_count_mismatch_names_the_row() {
        let err = parse("f0,f1\n1.0,2.0\n3.0\n", LabelColumn::Absent).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn label_over_declared_count_rejected() {
        let err = parse(
            "f0,label\n1.0,5\n",
            LabelColumn::Required { num_classes: Some(3) },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn header_name_mismatch_rejected() {
        assert!(parse("f0,feat1\n", LabelColumn::Absent).is_err());
        assert!(parse("x0\n", LabelColumn::Absent).is_err());
    }

    #[test]
    fn scientific_notation_accepted() {
        let (m, _) = parse("f0,f1\n1e-3,2.5E2\n", LabelColumn::Absent).unwrap();
        assert_eq!(m.as_array()[[0, 0]], 1e-3);
        assert_eq!(m.as_array()[[0, 1]], 2.5e2);
    }

    #[test]
    fn mode_mismatches_rejected() {
        assert!(parse("f0\n1.0\n", LabelColumn::Required { num_classes: None }).is_err());
        assert!(parse("f0,label\n1.0,0\n", LabelColumn::Absent).is_err());
        // Auto takes whatever is there.
        assert!(parse("f0\n1.0\n", LabelColumn::Auto).unwrap().1.is_none());
        assert!(parse("f0,label\n1.0,1\n", LabelColumn::Auto).unwrap().1.is_some());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data = Array2::from_shape_fn((20, 5), |_| {
            rng.sample::<f64, _>(StandardNormal) * 1e3
        });
        let m = FeatureMatrix::new(data).unwrap();
        let l = OneHotLabels::from_classes((0..20).map(|i| i % 3).collect(), 3).unwrap();
        save_features(&path, &m, Some(&l)).unwrap();
        let (m2, l2) =
            load_features_opts(&path, LabelColumn::Required { num_classes: Some(3) }).unwrap();
        assert_eq!(m, m2);
        assert_eq!(l, l2.unwrap());
    }

    fn quick_cfg(shift: f64, seed: u64) -> ShiftConfig {
        ShiftConfig { n_shot: 3, ..ShiftConfig::new(4, 20, 200, 200, shift, seed) }
    }

    #[test]
    fn benchmark_is_deterministic() {
        let a = make_shift_benchmark(&ShiftConfig::new(4, 20, 100, 100, 0.5, 7)).unwrap();
        let b = make_shift_benchmark(&ShiftConfig::new(4, 20, 100, 100, 0.5, 7)).unwrap();
        assert_eq!(a.bundle.source.0, b.bundle.source.0);
        assert_eq!(a.bundle.target_labeled.0, b.bundle.target_labeled.0);
        assert_eq!(a.bundle.target_unlabeled, b.bundle.target_unlabeled);
        assert_eq!(a.test_features, b.test_features);
    }

    #[test]
    fn benchmark_respects_shot_counts() {
        let bench = make_shift_benchmark(&quick_cfg(1.0, 3)).unwrap();
        let labels = &bench.bundle.target_labeled.1;
        assert_eq!(labels.len(), 12);
        for class in 0..4 {
            assert_eq!(labels.classes().iter().filter(|&&c| c == class).count(), 3);
        }
    }

    #[test]
    fn benchmark_shot_overflow_rejected() {
        let cfg = ShiftConfig { n_shot: 30, ..ShiftConfig::new(4, 20, 100, 100, 0.5, 1) };
        assert!(make_shift_benchmark(&cfg).is_err());
    }

    #[test]
    fn zero_shift_keeps_domains_identical_in_distribution() {
        // Source-trained classifier scores the same on source and target
        // test data up to sampling noise.
        let bench = make_shift_benchmark(&quick_cfg(0.0, 11)).unwrap();
        let (src, src_labels) = &bench.bundle.source;
        let model =
            crate::ridge::fit_one_vs_rest(src.view(), src_labels.classes(), 4, 1e-6).unwrap();
        let acc = |features: &FeatureMatrix, labels: &OneHotLabels| {
            let scores = crate::ridge::predict_linear(&model, features.view()).unwrap();
            let preds: Vec<usize> = scores
                .rows()
                .into_iter()
                .map(|r| crate::logitboost::argmax(r.as_slice().unwrap()))
                .collect();
            labels.accuracy_of(&preds)
        };
        let source_acc = acc(src, src_labels);
        let test_acc = acc(&bench.test_features, &bench.test_labels);
        assert!(
            (source_acc - test_acc).abs() < 0.12,
            "source {source_acc} vs target {test_acc}"
        );
    }

    #[test]
    fn large_shift_drives_source_model_to_chance() {
        let mut accs = Vec::new();
        for seed in 0..3 {
            let bench = make_shift_benchmark(&quick_cfg(8.0, seed)).unwrap();
            let (src, src_labels) = &bench.bundle.source;
            let model =
                crate::ridge::fit_one_vs_rest(src.view(), src_labels.classes(), 4, 1e-6).unwrap();
            let scores =
                crate::ridge::predict_linear(&model, bench.test_features.view()).unwrap();
            let preds: Vec<usize> = scores
                .rows()
                .into_iter()
                .map(|r| crate::logitboost::argmax(r.as_slice().unwrap()))
                .collect();
            accs.push(bench.test_labels.accuracy_of(&preds));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        // Chance is 0.25 for J=4.
        assert!(mean < 0.45, "mean accuracy {mean} too far above chance");
    }
}
