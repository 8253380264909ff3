//! Predicted rate exponents, thresholds and eigenspectrum envelopes.
//!
//! Every function here is a closed-form evaluator except
//! [`concentration_coefficient`], which decomposes the tail kernel of a
//! concrete design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{assemble_kernel, IndexRange};
use crate::fourier_basis::DesignSample;
use crate::spectral_problem::{power_tail_sum, validate_profile, Feature, SpectralProfile};

/// Tolerance for the balance of the two exponents at the optimal ridge.
const BALANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Regularized,
    Interpolation,
}

/// The two arguments of the bias-rate maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasBranch {
    /// `lambda (beta' - r)`, set by the problem and the evaluation norm alone.
    Orange,
    /// `-2p + lambda (beta' - 2 beta)`, set by the inductive bias.
    Blue,
}

/// Exponents of `n` in the variance, bias and total risk bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub variance_exponent: f64,
    pub bias_exponent: f64,
    pub total_exponent: f64,
    pub regime: Regime,
    pub dominant_branch: BiasBranch,
}

/// `(orange, blue)` bias branch values.
pub fn bias_branches(profile: &SpectralProfile) -> (f64, f64) {
    let (lam, p) = (profile.lambda_decay, profile.op_order);
    let orange = lam * (profile.eval - profile.source);
    let blue = -2.0 * p + lam * (profile.eval - 2.0 * profile.bias);
    (orange, blue)
}

/// Branch attaining the bias maximum; ties go to orange.
pub fn dominant_branch(profile: &SpectralProfile) -> BiasBranch {
    let (orange, blue) = bias_branches(profile);
    if orange >= blue {
        BiasBranch::Orange
    } else {
        BiasBranch::Blue
    }
}

/// Rate exponents for ridge regression with `gamma_n = n^-gamma_exponent`
/// or for minimum-norm interpolation (`gamma_exponent` is then ignored).
///
/// The regularized variance keeps its `max{., 0}` clamp, so it never drops
/// below `-1`.
pub fn predicted_exponents(profile: &SpectralProfile, gamma_exponent: f64, regime: Regime) -> Result<RatePrediction> {
    let feature = match regime {
        Regime::Regularized => Feature::RegularizedRates { gamma_exponent },
        Regime::Interpolation => Feature::InterpolationRates,
    };
    validate_profile(profile, &[feature]).into_result()?;

    let (lam, p) = (profile.lambda_decay, profile.op_order);
    let a = profile.transformed_exponent();
    let (orange, blue) = bias_branches(profile);
    let branch_max = orange.max(blue);
    let (variance_exponent, bias_exponent) = match regime {
        Regime::Regularized => {
            let g = gamma_exponent;
            let v = (g * (1.0 + 2.0 * p + lam * profile.eval) / a).max(0.0) - 1.0;
            (v, g / a * branch_max)
        }
        Regime::Interpolation => ((2.0 * p + lam * profile.eval).max(-1.0), branch_max),
    };
    Ok(RatePrediction {
        variance_exponent,
        bias_exponent,
        total_exponent: variance_exponent.max(bias_exponent),
        regime,
        dominant_branch: dominant_branch(profile),
    })
}

/// Whether `lambda beta >= lambda r / 2 - p`, and by how much.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCheck {
    pub satisfied: bool,
    pub margin: f64,
}

pub fn smoothness_threshold(profile: &SpectralProfile) -> SmoothnessCheck {
    let lam = profile.lambda_decay;
    let margin = lam * profile.bias - (lam * profile.source / 2.0 - profile.op_order);
    SmoothnessCheck {
        satisfied: margin >= 0.0,
        margin,
    }
}

fn require_smoothness(profile: &SpectralProfile) -> Result<()> {
    let s = smoothness_threshold(profile);
    if s.satisfied {
        Ok(())
    } else {
        Err(Error::HypothesisViolated(format!(
            "smoothness threshold lambda*beta >= lambda*r/2 - p fails by {}",
            -s.margin
        )))
    }
}

/// Ridge exponent at which the unclamped regularized variance exponent
/// `gamma (1 + 2p + lambda beta') / a - 1` equals the orange bias exponent
/// `gamma lambda (beta' - r) / a`: `a / (1 + 2p + lambda r)`.
pub fn optimal_gamma_exponent(profile: &SpectralProfile) -> Result<f64> {
    require_smoothness(profile)?;
    let (lam, p) = (profile.lambda_decay, profile.op_order);
    let a = profile.transformed_exponent();
    let g = a / (1.0 + 2.0 * p + lam * profile.source);
    validate_profile(profile, &[Feature::RegularizedRates { gamma_exponent: g }]).into_result()?;

    let variance = g * (1.0 + 2.0 * p + lam * profile.eval) / a - 1.0;
    let bias = g * lam * (profile.eval - profile.source) / a;
    if (variance - bias).abs() > BALANCE_TOL * (1.0 + bias.abs()) {
        return Err(Error::HypothesisViolated(format!(
            "exponents do not balance at gamma = {g}: variance {variance}, bias {bias}"
        )));
    }
    Ok(g)
}

/// The alternative optimal exponent `a / (2p + lambda + 2r)`, reported
/// alongside [`optimal_gamma_exponent`] for comparison.
pub fn printed_optimal_gamma_exponent(profile: &SpectralProfile) -> f64 {
    let (lam, p) = (profile.lambda_decay, profile.op_order);
    profile.transformed_exponent() / (2.0 * p + lam + 2.0 * profile.source)
}

/// Minimax exponent `lambda (beta' - r) / (2p + lambda r + 1)`.
pub fn final_rate_exponent(profile: &SpectralProfile) -> Result<f64> {
    require_smoothness(profile)?;
    let (lam, p, r) = (profile.lambda_decay, profile.op_order, profile.source);
    if !(2.0 * p + lam * r > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "2p + lambda*r > 0 fails: {}",
            2.0 * p + lam * r
        )));
    }
    if profile.eval > r {
        return Err(Error::HypothesisViolated(format!(
            "r >= beta' fails: r = {r}, beta' = {}",
            profile.eval
        )));
    }
    Ok(lam * (profile.eval - r) / (2.0 * p + lam * r + 1.0))
}

/// Tail trace `sum_{i>k} i^-a` with its integral bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailTrace {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn tail_trace(profile: &SpectralProfile, k: usize) -> Result<TailTrace> {
    let a = profile.transformed_exponent();
    if a <= 1.0 {
        return Err(Error::NotTraceClass { exponent: a });
    }
    let m = (k + 1) as f64;
    let integral = m.powf(1.0 - a) / (a - 1.0);
    Ok(TailTrace {
        value: power_tail_sum(a, k),
        lower: integral,
        upper: m.powf(-a) + integral,
    })
}

/// Log-log slope of `k -> mu_k(K/n)` in the head, `-(2p + lambda beta)`.
pub fn eigen_slope_prediction(profile: &SpectralProfile) -> f64 {
    -profile.transformed_exponent()
}

/// `rho_{k,n} = (w_{k+1} + mu_1(K_{>k}/n) + gamma) / (mu_n(K_{>k}/n) + gamma)`.
///
/// Infinite when the tail kernel is singular and `gamma = 0`.
pub fn concentration_coefficient(
    design: &DesignSample,
    profile: &SpectralProfile,
    k: usize,
    gamma: f64,
) -> Result<f64> {
    let n = design.n();
    let big_n = profile.truncation;
    if !(k < n && n <= big_n) {
        return Err(Error::InvalidInput(format!(
            "concentration coefficient needs k < n <= N, got k = {k}, n = {n}, N = {big_n}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
    }
    let tail = assemble_kernel(design, profile, IndexRange::new(k + 1, big_n, big_n)?)?;
    let ev = tail.eigenvalues()?;
    let nf = n as f64;
    let mu_max = ev[n - 1] / nf;
    let mu_min = (ev[0] / nf).max(0.0);
    let denom = mu_min + gamma;
    if denom <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((profile.transformed_weight(k + 1) + mu_max + gamma) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier_basis::sample_design;
    use proptest::prelude::*;

    fn profile(lam: f64, p: f64, r: f64, beta: f64, beta_eval: f64) -> SpectralProfile {
        SpectralProfile::new(lam, p, r, beta, beta_eval, 0.25, 4096)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn interpolation_examples() {
        let a = predicted_exponents(&profile(4.0, -1.0, 1.0, 1.0, 0.0), 0.0, Regime::Interpolation).unwrap();
        assert!(close(a.variance_exponent, -1.0));
        assert!(close(a.bias_exponent, -4.0));
        assert!(close(a.total_exponent, -1.0));
        assert_eq!(a.dominant_branch, BiasBranch::Orange);
        let b = predicted_exponents(&profile(4.0, 0.0, 1.0, 1.0, 0.0), 0.0, Regime::Interpolation).unwrap();
        assert!(close(b.variance_exponent, 0.0));
    }

    #[test]
    fn regularized_variance_keeps_its_clamp() {
        // 1 + 2p + lambda beta' = -1 < 0, so the variance exponent sits at -1
        let c = predicted_exponents(&profile(4.0, -1.0, 1.0, 1.0, 0.0), 2.0 / 3.0, Regime::Regularized).unwrap();
        assert!(close(c.variance_exponent, -1.0));
        assert!(close(c.bias_exponent, -4.0 / 3.0));
        assert!(close(c.total_exponent, -1.0));
        let d = predicted_exponents(&profile(4.0, -1.0, 1.0, 0.6, 0.0), 2.0 / 15.0, Regime::Regularized).unwrap();
        assert_eq!(d.dominant_branch, BiasBranch::Blue);
        assert!((d.bias_exponent + 0.9333333333333).abs() < 1e-12);
    }

    #[test]
    fn hypotheses_are_enforced() {
        let a = profile(4.0, -1.0, 1.0, 1.0, 0.0);
        let err = predicted_exponents(&a, 2.5, Regime::Regularized).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(ref m) if m.contains("ridge_below_spectrum")));
        let eval_above_source = profile(4.0, -1.0, 0.5, 1.0, 0.5);
        assert!(predicted_exponents(&eval_above_source, 0.0, Regime::Interpolation).is_err());
    }

    #[test]
    fn optimal_gamma_examples() {
        let a = profile(4.0, -1.0, 1.0, 1.0, 0.0);
        assert!(close(optimal_gamma_exponent(&a).unwrap(), 2.0 / 3.0));
        assert!(close(printed_optimal_gamma_exponent(&a), 0.5));
        let e = profile(4.0, -1.0, 1.0, 0.8, 0.0);
        assert!(close(optimal_gamma_exponent(&e).unwrap(), 0.4));
        let d = profile(4.0, -1.0, 1.0, 0.6, 0.0);
        assert!(matches!(optimal_gamma_exponent(&d), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn balance_holds_when_clamp_is_inactive() {
        // 1 + 2p + lambda beta' = 1 > 0
        let q = profile(2.0, 0.0, 1.0, 1.0, 0.0);
        let g = optimal_gamma_exponent(&q).unwrap();
        let pred = predicted_exponents(&q, g, Regime::Regularized).unwrap();
        assert!(close(pred.variance_exponent, pred.bias_exponent));
        assert!(close(pred.total_exponent, final_rate_exponent(&q).unwrap()));
    }

    #[test]
    fn final_rate_examples() {
        assert!(close(
            final_rate_exponent(&profile(4.0, -1.0, 1.0, 1.0, 0.0)).unwrap(),
            -4.0 / 3.0
        ));
        assert!(close(
            final_rate_exponent(&profile(4.0, 0.0, 1.0, 1.0, 0.0)).unwrap(),
            -0.8
        ));
        assert_eq!(final_rate_exponent(&profile(4.0, -0.5, 0.5, 1.0, 0.5)).unwrap(), 0.0);
        assert!(final_rate_exponent(&profile(4.0, -1.0, 1.0, 0.6, 0.0)).is_err());
    }

    #[test]
    fn smoothness_examples() {
        let s = smoothness_threshold(&profile(4.0, -1.0, 1.0, 1.0, 0.0));
        assert!(s.satisfied && close(s.margin, 1.0));
        let s = smoothness_threshold(&profile(4.0, -1.0, 1.0, 0.6, 0.0));
        assert!(!s.satisfied && close(s.margin, -0.6));
        for (lam, r) in [(1.5, 0.3), (4.0, 1.0), (7.0, 0.8)] {
            assert!(smoothness_threshold(&profile(lam, 0.0, r, r, 0.0)).satisfied);
        }
    }

    #[test]
    fn tail_trace_examples() {
        let a = profile(4.0, -1.0, 1.0, 1.0, 0.0);
        let t = tail_trace(&a, 1).unwrap();
        assert!((t.value - (std::f64::consts::PI.powi(2) / 6.0 - 1.0)).abs() < 1e-13);
        for k in [0, 1, 5, 100, 10_000, 1 << 20] {
            let t = tail_trace(&a, k).unwrap();
            assert!(t.lower <= t.value && t.value <= t.upper, "k={k} {t:?}");
        }
        let rough = profile(4.0, -1.0, 1.0, 0.6, 0.0);
        assert!(matches!(tail_trace(&rough, 3), Err(Error::NotTraceClass { .. })));
    }

    #[test]
    fn eigen_slope_examples() {
        assert_eq!(eigen_slope_prediction(&profile(4.0, -1.0, 1.0, 1.0, 0.0)), -2.0);
        assert_eq!(eigen_slope_prediction(&profile(2.0, 0.0, 1.0, 1.0, 0.0)), -2.0);
        assert_eq!(eigen_slope_prediction(&profile(4.0, 0.0, 1.0, 0.5, 0.0)), -2.0);
    }

    #[test]
    fn concentration_bounds() {
        let a = profile(4.0, -1.0, 1.0, 1.0, 0.0).with_truncation(2048);
        let d = sample_design(64, 3).unwrap();
        let rho = concentration_coefficient(&d, &a, 4, 0.0).unwrap();
        assert!(rho >= 1.0 && rho.is_finite());
        let huge = concentration_coefficient(&d, &a, 4, 1e12).unwrap();
        assert!((huge - 1.0).abs() < 1e-9);
        for g in [1e-6, 1e-3, 1.0] {
            assert!(concentration_coefficient(&d, &a, 4, g).unwrap() >= 1.0);
        }
        assert!(concentration_coefficient(&d, &a, 64, 0.0).is_err());
    }

    #[test]
    fn concentration_is_stable_across_designs() {
        let a = profile(4.0, -1.0, 1.0, 1.0, 0.0).with_truncation(SpectralProfile::default_truncation(256));
        let mut rho: Vec<f64> = (0..10)
            .map(|s| {
                let d = sample_design(256, 100 + s).unwrap();
                concentration_coefficient(&d, &a, 16, 0.0).unwrap()
            })
            .collect();
        assert!(rho.iter().all(|r| r.is_finite() && *r >= 1.0));
        // the tail kernel's smallest eigenvalue sits near the closure floor,
        // so rho is large but varies little between designs
        rho.sort_by(f64::total_cmp);
        assert!(rho[9] / rho[0] < 1.5, "{rho:?}");
    }

    proptest! {
        #[test]
        fn branch_matches_simplified_threshold(
            lam in 1.01f64..8.0,
            p in -3.0f64..0.0,
            r in 0.01f64..1.0,
            beta in 0.01f64..1.0,
            beta_eval in 0.0f64..1.0,
        ) {
            let q = profile(lam, p, r, beta, beta_eval);
            let orange = dominant_branch(&q) == BiasBranch::Orange;
            prop_assert_eq!(orange, 2.0 * lam * beta >= lam * r - 2.0 * p);
        }

        #[test]
        fn variance_clamp_on_grid(
            lam in 1.5f64..6.0,
            p in -2.0f64..0.0,
            beta_eval in 0.0f64..0.5,
            frac in 0.05f64..0.95,
        ) {
            let q = profile(lam, p, 1.0, 1.0, beta_eval);
            let a = q.transformed_exponent();
            prop_assume!(a > 0.1 && 2.0 * p + lam > 0.0);
            let pred = predicted_exponents(&q, frac * a, Regime::Regularized).unwrap();
            let slope = 1.0 + 2.0 * p + lam * beta_eval;
            if slope > 0.0 {
                prop_assert!(pred.variance_exponent > -1.0);
            } else {
                prop_assert_eq!(pred.variance_exponent, -1.0);
            }
            prop_assert_eq!(pred.total_exponent, pred.variance_exponent.max(pred.bias_exponent));
        }

        #[test]
        fn balanced_exponents_equal_final_rate(
            lam in 1.5f64..6.0,
            p in -0.4f64..0.0,
            r in 0.3f64..1.0,
        ) {
            // beta = 1 and beta' = 0 keep the threshold and the unclamped branch
            let q = profile(lam, p, r, 1.0, 0.0);
            prop_assume!(1.0 + 2.0 * p > 0.0 && 2.0 * p + lam * r > 0.0 && smoothness_threshold(&q).satisfied);
            let g = optimal_gamma_exponent(&q).unwrap();
            let pred = predicted_exponents(&q, g, Regime::Regularized).unwrap();
            let fin = final_rate_exponent(&q).unwrap();
            prop_assert!((pred.variance_exponent - fin).abs() < 1e-12);
            prop_assert!((pred.bias_exponent - fin).abs() < 1e-12);
        }
    }
}
