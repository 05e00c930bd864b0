//! Newton-boosting math for multiclass cross-entropy.
//!
//! Probabilities, working responses (sample weights and pseudo-labels),
//! loss derivatives, and the two output-normalization transforms used to
//! put the initial model and every base learner on the same scale.
//!
//! Everything here is pure and stateless.

use crate::error::{Error, Result};

/// Lower probability clip bound.
pub const PROB_CLIP_LO: f64 = 0.0001;
/// Upper probability clip bound.
pub const PROB_CLIP_HI: f64 = 0.9999;
/// Pseudo-labels and per-learner outputs are clamped to this magnitude.
pub const RESPONSE_CLIP: f64 = 4.0;

/// Centered vectors with L2 norm below this are treated as zero.
const DEGENERATE_NORM: f64 = 1e-12;

/// First and second derivatives of the cross-entropy w.r.t. each logit.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativePair {
    /// g^j = p^j - y^j
    pub g: Vec<f64>,
    /// q^j = p^j (1 - p^j), always >= 0
    pub q: Vec<f64>,
}

/// Per-sample, per-class regression target and its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingResponse {
    pub weight: f64,
    pub pseudo_label: f64,
}

/// Numerically stable softmax (max-subtracted).
///
/// Rejects non-finite logits; output entries are positive and sum to 1.
pub fn softmax_prob(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite logit in softmax input".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Clip a probability into [0.0001, 0.9999].
#[inline]
pub fn clip_prob(p: f64) -> f64 {
    PROB_CLIP_LO.max(p.min(PROB_CLIP_HI))
}

/// Sample weight w = p (1 - p) for one binary sub-problem.
#[inline]
pub fn sample_weight(p: f64) -> f64 {
    p * (1.0 - p)
}

/// Pseudo-label ỹ = clamp((y* - p) / w, -4, 4) with indicator y* in {0, 1}.
///
/// Callers must skip zero-weight samples; w = 0 is a contract violation.
#[inline]
pub fn pseudo_label(y_indicator: f64, p: f64, w: f64) -> f64 {
    assert!(w > 0.0, "pseudo_label called with zero weight");
    ((y_indicator - p) / w).clamp(-RESPONSE_CLIP, RESPONSE_CLIP)
}

/// Weight and pseudo-label for one (sample, class) entry from a clipped probability.
#[inline]
pub fn working_response(y_indicator: f64, p_clipped: f64) -> WorkingResponse {
    let weight = sample_weight(p_clipped);
    WorkingResponse {
        weight,
        pseudo_label: pseudo_label(y_indicator, p_clipped, weight),
    }
}

/// Cross-entropy ℓ(y, F) = logsumexp(F) - F_class, computed stably.
pub fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln() - logits[class]
}

/// First and second derivatives of the cross-entropy w.r.t. the logits.
///
/// g = p - y and q = diag of p(1-p), with p = softmax(logits).
pub fn logit_derivatives(logits: &[f64], y_onehot: &[f64]) -> Result<DerivativePair> {
    if logits.len() != y_onehot.len() {
        return Err(Error::DimMismatch(format!(
            "logit_derivatives: {} logits vs {} label entries",
            logits.len(),
            y_onehot.len()
        )));
    }
    let p = softmax_prob(logits)?;
    let g = p.iter().zip(y_onehot).map(|(&pj, &yj)| pj - yj).collect();
    let q = p.iter().map(|&pj| pj * (1.0 - pj)).collect();
    Ok(DerivativePair { g, q })
}

/// Center a score vector and scale it to unit L2 norm.
///
/// All-equal inputs (centered norm below 1e-12) map to the zero vector,
/// the neutral element of the ensemble sum.
pub fn normalize_initial(raw_scores: &[f64]) -> Vec<f64> {
    assert!(raw_scores.len() >= 2, "need at least two classes");
    let mean = raw_scores.iter().sum::<f64>() / raw_scores.len() as f64;
    let centered: Vec<f64> = raw_scores.iter().map(|&v| v - mean).collect();
    unit_or_zero(centered)
}

/// Per-learner output transform: center, scale by (J-1)/J, clamp to ±4,
/// then divide by the L2 norm of the clamped vector.
pub fn norm_learner(raw: &[f64]) -> Vec<f64> {
    let j = raw.len();
    assert!(j >= 2, "need at least two classes");
    let mean = raw.iter().sum::<f64>() / j as f64;
    let scale = (j as f64 - 1.0) / j as f64;
    let clamped: Vec<f64> = raw
        .iter()
        .map(|&v| (scale * (v - mean)).clamp(-RESPONSE_CLIP, RESPONSE_CLIP))
        .collect();
    unit_or_zero(clamped)
}

fn unit_or_zero(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM {
        vec![0.0; v.len()]
    } else {
        v.into_iter().map(|x| x / norm).collect()
    }
}

/// Row argmax with ties broken toward the lowest class index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax_prob(&[0.0, 0.0, 0.0]).unwrap();
        for &pi in &p {
            assert_close(pi, 1.0 / 3.0, 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        for c in [-300.0, -1.0, 0.0, 17.5, 250.0] {
            let p = softmax_prob(&[c, c + 2f64.ln()]).unwrap();
            assert_close(p[0], 1.0 / 3.0, 1e-12);
            assert_close(p[1], 2.0 / 3.0, 1e-12);
        }
    }

    #[test]
    fn softmax_no_overflow() {
        let p = softmax_prob(&[1000.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_close(p[0], 1.0, 1e-12);
        assert!(p[1] < 1e-300 && p[2] < 1e-300);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax_prob(&[f64::NAN, 0.0]).is_err());
        assert!(softmax_prob(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn clip_bounds() {
        assert_eq!(clip_prob(1.0), 0.9999);
        assert_eq!(clip_prob(0.0), 0.0001);
        assert_eq!(clip_prob(0.5), 0.5);
    }

    #[test]
    fn weight_values() {
        assert_eq!(sample_weight(0.5), 0.25);
        assert_close(sample_weight(0.9999), 9.999e-5, 1e-12);
        assert_close(sample_weight(0.9999), sample_weight(1.0 - 0.9999), 1e-15);
    }

    #[test]
    fn pseudo_label_values() {
        assert_close(pseudo_label(1.0, 0.5, 0.25), 2.0, 1e-15);
        // raw value around -1e4, clipped
        assert_eq!(pseudo_label(0.0, 0.9999, 9.999e-5), -4.0);
        // raw ~1.0001, unclipped
        assert_close(pseudo_label(1.0, 0.9999, 9.999e-5), 1.000_100_010_001, 1e-9);
    }

    #[test]
    fn derivatives_uniform_point() {
        let d = logit_derivatives(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_close(d.g[0], -2.0 / 3.0, 1e-15);
        assert_close(d.g[1], 1.0 / 3.0, 1e-15);
        assert_close(d.g[2], 1.0 / 3.0, 1e-15);
        for &qj in &d.q {
            assert_close(qj, 2.0 / 9.0, 1e-15);
        }
    }

    #[test]
    fn derivatives_dim_mismatch() {
        assert!(logit_derivatives(&[0.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
    }

    /// Central finite differences of the loss (step 1e-5) against g, and of
    /// the verified analytic gradient against q. Scaled error <= 1e-6.
    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        let logits = [2.0, -1.0, 0.0];
        let y = [1.0, 0.0, 0.0];
        let d = logit_derivatives(&logits, &y).unwrap();
        for j in 0..3 {
            let mut up = logits;
            let mut dn = logits;
            up[j] += h;
            dn[j] -= h;
            let g_fd = (cross_entropy(&up, 0) - cross_entropy(&dn, 0)) / (2.0 * h);
            assert!((g_fd - d.g[j]).abs() / (1.0 + d.g[j].abs()) <= 1e-6);
            let gu = logit_derivatives(&up, &y).unwrap().g[j];
            let gd = logit_derivatives(&dn, &y).unwrap().g[j];
            let q_fd = (gu - gd) / (2.0 * h);
            assert!((q_fd - d.q[j]).abs() / (1.0 + d.q[j].abs()) <= 1e-6);
        }
    }

    #[test]
    fn normalize_initial_hand_case() {
        let out = normalize_initial(&[2.0, 0.0, 0.0, 0.0]);
        let expect = [0.866_025_403_784_438_6, -0.288_675_134_594_812_9];
        assert_close(out[0], expect[0], 1e-12);
        for &v in &out[1..] {
            assert_close(v, expect[1], 1e-12);
        }
    }

    #[test]
    fn normalize_initial_degenerate() {
        for c in [-3.5, 0.0, 7.0] {
            assert_eq!(normalize_initial(&[c, c, c, c]), vec![0.0; 4]);
        }
    }

    #[test]
    fn norm_learner_hand_cases() {
        // No clipping engaged: same direction as normalize_initial.
        let out = norm_learner(&[2.0, 0.0, 0.0, 0.0]);
        assert_close(out[0], 0.866_025_403_784_438_6, 1e-12);
        assert_close(out[1], -0.288_675_134_594_812_9, 1e-12);

        // Clipping engaged: scaled [56.25, -18.75, ...] clamps to [4, -4, -4, -4].
        let out = norm_learner(&[100.0, 0.0, 0.0, 0.0]);
        assert_close(out[0], 0.5, 1e-15);
        for &v in &out[1..] {
            assert_close(v, -0.5, 1e-15);
        }
    }

    #[test]
    fn norm_learner_mean_shift_exact_on_dyadic_inputs() {
        // Dyadic values keep every intermediate exact, so the invariance is bitwise.
        let f = [1.25, -0.5, 2.0, 0.75];
        for c in [1.0, -2.0, 0.5, 16.0] {
            let shifted: Vec<f64> = f.iter().map(|&v| v + c).collect();
            assert_eq!(norm_learner(&f), norm_learner(&shifted));
        }
    }

    proptest! {
        #[test]
        fn prop_clip_range_and_idempotence(p in 0.0f64..=1.0) {
            let c = clip_prob(p);
            prop_assert!((PROB_CLIP_LO..=PROB_CLIP_HI).contains(&c));
            prop_assert_eq!(clip_prob(c), c);
        }

        #[test]
        fn prop_weight_range(p in 0.0f64..=1.0) {
            let w = sample_weight(clip_prob(p));
            prop_assert!(w >= 9.998e-5 && w <= 0.25);
        }

        #[test]
        fn prop_pseudo_label_bounded(y in 0u8..2, p in 0.0f64..=1.0) {
            let pc = clip_prob(p);
            let v = pseudo_label(y as f64, pc, sample_weight(pc));
            prop_assert!((-4.0..=4.0).contains(&v));
        }

        #[test]
        fn prop_gradient_sums_to_zero(logits in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
            let mut y = vec![0.0; logits.len()];
            y[0] = 1.0;
            let d = logit_derivatives(&logits, &y).unwrap();
            prop_assert!(d.g.iter().sum::<f64>().abs() < 1e-12);
            prop_assert!(d.q.iter().all(|&q| q >= 0.0));
        }

        #[test]
        fn prop_unit_norm_outputs(raw in proptest::collection::vec(-10.0f64..10.0, 2..8)) {
            for out in [normalize_initial(&raw), norm_learner(&raw)] {
                let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(n.abs() < 1e-12 || (n - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_argmax_preserved(raw in proptest::collection::vec(-10.0f64..10.0, 2..8)) {
            let spread = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - raw.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-9);
            let best = argmax(&raw);
            for out in [normalize_initial(&raw), norm_learner(&raw)] {
                let top = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[best] == top, "argmax left the argmax set");
            }
        }

        #[test]
        fn prop_mean_shift_invariance(
            raw in proptest::collection::vec(-10.0f64..10.0, 2..8),
            c in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = raw.iter().map(|&v| v + c).collect();
            let a = norm_learner(&raw);
            let b = norm_learner(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
