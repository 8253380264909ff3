//! The synthetic inverse-problem family.
//!
//! A problem is fixed by a [`SpectralProfile`]: the kernel covariance has
//! eigenvalues `i^-lambda`, the forward operator is diagonal in the same basis
//! with coefficients `i^-p`, and the target has coordinates `i^-r'` in the
//! orthonormal RKHS basis. All constants of proportionality are one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for the kernel tail check in
/// [`assemble_kernel`](crate::estimator::assemble_kernel).
pub const DEFAULT_KERNEL_TAIL_REL_TOL: f64 = 1e-3;

/// Tolerance applied to the label tail when strict label checking is enabled.
pub const STRICT_LABEL_TAIL_TOL: f64 = 1e-8;

/// How the finite truncation `N` is policed and closed.
///
/// Kernel sums are exact over the first `N` indices. With `tail_closure` the
/// remaining indices enter as their expected contribution: the tail kernel is
/// replaced by `t_N I` with `t_N = sum_{i>N} p_i^2 lambda_i^beta`, and the
/// estimator's tail coordinates contribute `||theta||^2 sum_{i>N} D_i^2` to
/// evaluation norms. Without the closure the problem is the plain `N`-term one.
/// The target is always the `N`-bandlimited part of `f*`; its tail mass is
/// reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Refuse kernel assembly when `2 * sum_{i>N} p_i^2 lambda_i^beta` exceeds
    /// this fraction of the smallest kernel diagonal entry. Only applies when
    /// the tail is not closed. `None` disables the check, which is required
    /// for spectra that are not trace class.
    pub kernel_tail_rel_tol: Option<f64>,
    /// Refuse label generation when the sup-norm label tail exceeds this value.
    pub label_tail_tol: Option<f64>,
    /// Close the spectrum beyond `N` by its diagonal expectation. Ignored when
    /// the transformed spectrum is not trace class.
    pub tail_closure: bool,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            kernel_tail_rel_tol: Some(DEFAULT_KERNEL_TAIL_REL_TOL),
            label_tail_tol: None,
            tail_closure: true,
        }
    }
}

impl TruncationPolicy {
    /// Plain `N`-term problem with both checks at their strict tolerances.
    pub fn strict() -> Self {
        Self {
            kernel_tail_rel_tol: Some(DEFAULT_KERNEL_TAIL_REL_TOL),
            label_tail_tol: Some(STRICT_LABEL_TAIL_TOL),
            tail_closure: false,
        }
    }

    /// Plain `N`-term problem; tails are reported but never fatal.
    pub fn report_only() -> Self {
        Self {
            kernel_tail_rel_tol: None,
            label_tail_tol: None,
            tail_closure: false,
        }
    }

    pub fn with_closure(mut self, closure: bool) -> Self {
        self.tail_closure = closure;
        self
    }
}

/// All rate-determining parameters of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    /// Kernel eigendecay exponent `lambda > 1`.
    pub lambda_decay: f64,
    /// Operator exponent `p <= 0`; negative values model differential operators.
    pub op_order: f64,
    /// Source-condition smoothness `r` in `(0, 1]`.
    pub source: f64,
    /// Exponent `beta` of the regularizing Sobolev norm.
    pub bias: f64,
    /// Exponent `beta'` of the evaluation norm, `0 <= beta' <= beta`.
    pub eval: f64,
    /// Observation-noise variance.
    pub noise_var: f64,
    /// Spectral truncation `N`.
    pub truncation: usize,
    /// Permits `beta > 1`.
    pub allow_high_bias: bool,
    pub tail_policy: TruncationPolicy,
}

impl SpectralProfile {
    pub fn new(
        lambda_decay: f64,
        op_order: f64,
        source: f64,
        bias: f64,
        eval: f64,
        noise_var: f64,
        truncation: usize,
    ) -> Self {
        Self {
            lambda_decay,
            op_order,
            source,
            bias,
            eval,
            noise_var,
            truncation,
            allow_high_bias: false,
            tail_policy: TruncationPolicy::default(),
        }
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_op_order(mut self, op_order: f64) -> Self {
        self.op_order = op_order;
        self
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_bias(mut self, bias: f64) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_tail_policy(mut self, policy: TruncationPolicy) -> Self {
        self.tail_policy = policy;
        self
    }

    pub fn with_high_bias_override(mut self, allow: bool) -> Self {
        self.allow_high_bias = allow;
        self
    }

    /// Kernel eigenvalue `lambda_i = i^-lambda`.
    pub fn eigenvalue_at(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        (i as f64).powf(-self.lambda_decay)
    }

    /// Operator coefficient `p_i = i^-p`; grows with `i` when `p < 0`.
    pub fn operator_coeff_at(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        (i as f64).powf(-self.op_order)
    }

    /// Exponent `a = 2p + lambda*beta` of the transformed spectrum `p_i^2 lambda_i^beta`.
    pub fn transformed_exponent(&self) -> f64 {
        2.0 * self.op_order + self.lambda_decay * self.bias
    }

    /// Eigenvalue `p_i^2 lambda_i^beta` of the transformed covariance.
    pub fn transformed_weight(&self, i: usize) -> f64 {
        let p = self.operator_coeff_at(i);
        p * p * self.eigenvalue_at(i).powf(self.bias)
    }

    /// Diagonal `t_N` added by the tail closure, zero when the closure is off
    /// or the spectrum is not trace class.
    pub fn closure_shift(&self) -> f64 {
        let a = self.transformed_exponent();
        if self.tail_policy.tail_closure && a > 1.0 {
            power_tail_sum(a, self.truncation)
        } else {
            0.0
        }
    }

    /// Decay exponent `r' = (1 - lambda(1 - r)) / 2` of the target coordinates.
    pub fn target_exponent(&self) -> f64 {
        (1.0 - self.lambda_decay * (1.0 - self.source)) / 2.0
    }

    /// Exponent `2r' + lambda(1 - beta')` controlling the evaluation norm of `f*`.
    pub fn target_norm_exponent(&self) -> f64 {
        2.0 * self.target_exponent() + self.lambda_decay * (1.0 - self.eval)
    }

    /// Checks that the target coordinates are well defined and summable.
    pub fn check_target(&self) -> Result<()> {
        let r_prime = self.target_exponent();
        if r_prime <= 0.0 {
            return Err(Error::IncompatibleSource { r_prime });
        }
        let exponent = self.target_norm_exponent();
        if exponent <= 1.0 {
            return Err(Error::NonSummableTarget { exponent });
        }
        Ok(())
    }

    /// Target coordinate `c_i = i^-r'` in the orthonormal RKHS basis.
    pub fn target_coeff_at(&self, i: usize) -> Result<f64> {
        self.check_target()?;
        Ok(self.target_coeff_unchecked(i))
    }

    pub(crate) fn target_coeff_unchecked(&self, i: usize) -> f64 {
        (i as f64).powf(-self.target_exponent())
    }

    /// The first `N` target coordinates.
    pub fn target_coefficients(&self) -> Result<Vec<f64>> {
        self.check_target()?;
        Ok((1..=self.truncation).map(|i| self.target_coeff_unchecked(i)).collect())
    }

    /// Default truncation for sample size `n`: `max(64 n, 4096)` capped at `2^20`.
    pub fn default_truncation(n: usize) -> usize {
        (64 * n).clamp(4096, 1 << 20)
    }
}

/// Free-function form of [`SpectralProfile::eigenvalue_at`].
pub fn eigenvalue_at(profile: &SpectralProfile, i: usize) -> f64 {
    profile.eigenvalue_at(i)
}

/// Free-function form of [`SpectralProfile::operator_coeff_at`].
pub fn operator_coeff_at(profile: &SpectralProfile, i: usize) -> f64 {
    profile.operator_coeff_at(i)
}

/// Free-function form of [`SpectralProfile::target_coeff_at`].
pub fn target_coeff_at(profile: &SpectralProfile, i: usize) -> Result<f64> {
    profile.target_coeff_at(i)
}

/// Ridge level as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RidgeSchedule {
    /// Constant `gamma`; zero selects minimum-norm interpolation.
    Fixed { value: f64 },
    /// `gamma_n = scale * n^-exponent`; `scale` defaults to 1.
    Power {
        exponent: f64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl RidgeSchedule {
    pub fn ridgeless() -> Self {
        RidgeSchedule::Fixed { value: 0.0 }
    }

    pub fn power(exponent: f64) -> Self {
        RidgeSchedule::Power { exponent, scale: 1.0 }
    }

    pub fn gamma_at(&self, n: usize) -> f64 {
        match *self {
            RidgeSchedule::Fixed { value } => value,
            RidgeSchedule::Power { exponent, scale } => scale * (n as f64).powf(-exponent),
        }
    }

    pub fn is_ridgeless(&self) -> bool {
        matches!(*self, RidgeSchedule::Fixed { value } if value == 0.0)
    }

    /// Decay exponent of `gamma_n`, `None` for interpolation.
    pub fn decay_exponent(&self) -> Option<f64> {
        match *self {
            RidgeSchedule::Fixed { value: 0.0 } => None,
            RidgeSchedule::Fixed { .. } => Some(0.0),
            RidgeSchedule::Power { exponent, .. } => Some(exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RidgeSchedule::Fixed { value } if !(value >= 0.0 && value.is_finite()) => Err(Error::InvalidInput(
                format!("fixed ridge must be finite and >= 0, got {value}"),
            )),
            RidgeSchedule::Power { exponent, scale }
                if !(exponent >= 0.0 && exponent.is_finite() && scale > 0.0 && scale.is_finite()) =>
            {
                Err(Error::InvalidInput(format!(
                    "power schedule needs exponent >= 0 and scale > 0, got exponent {exponent}, scale {scale}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Capabilities a caller intends to use; each adds assumption checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feature {
    /// Tail traces of the transformed spectrum.
    TailTraces,
    /// Synthetic target generation.
    Target,
    /// Rates for ridge regression with `gamma_n = n^-gamma_exponent`.
    RegularizedRates { gamma_exponent: f64 },
    /// Rates for minimum-norm interpolation.
    InterpolationRates,
}

/// One named inequality and the slack by which it holds (positive) or fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub inequality: String,
    pub slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub checks: Vec<AssumptionCheck>,
}

impl Diagnostics {
    fn push(&mut self, name: &str, inequality: &str, slack: f64, strict: bool) {
        if self.checks.iter().any(|c| c.name == name) {
            return;
        }
        let passed = if strict { slack > 0.0 } else { slack >= 0.0 };
        self.checks.push(AssumptionCheck {
            name: name.to_string(),
            inequality: inequality.to_string(),
            slack,
            passed,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `Ok` when every check passed, otherwise `HypothesisViolated` naming the failures.
    pub fn into_result(self) -> Result<()> {
        if self.all_passed() {
            return Ok(());
        }
        let failed: Vec<String> = self
            .failures()
            .map(|c| format!("{} ({}; slack {})", c.name, c.inequality, c.slack))
            .collect();
        Err(Error::HypothesisViolated(failed.join(", ")))
    }
}

/// Evaluates every assumption relevant to `features`. Never fails; the
/// diagnostics carry each inequality and whether it holds.
pub fn validate_profile(profile: &SpectralProfile, features: &[Feature]) -> Diagnostics {
    let SpectralProfile {
        lambda_decay: lam,
        op_order: p,
        source: r,
        bias: beta,
        eval: beta_eval,
        noise_var,
        truncation,
        allow_high_bias,
        ..
    } = *profile;
    let mut d = Diagnostics::default();
    d.push("capacity", "lambda > 1", lam - 1.0, true);
    d.push("operator_order", "p <= 0", -p, false);
    d.push("source_positive", "r > 0", r, true);
    d.push("source_at_most_one", "r <= 1", 1.0 - r, false);
    d.push("bias_positive", "beta > 0", beta, true);
    if !allow_high_bias {
        d.push(
            "bias_at_most_one",
            "beta <= 1 (override to allow beta > 1)",
            1.0 - beta,
            false,
        );
    }
    d.push("eval_nonnegative", "beta' >= 0", beta_eval, false);
    d.push("eval_at_most_bias", "beta' <= beta", beta - beta_eval, false);
    d.push("noise_nonnegative", "sigma^2 >= 0", noise_var, false);
    d.push("truncation_positive", "N >= 1", truncation as f64 - 1.0, false);
    let a = 2.0 * p + lam * beta;
    d.push("eigen_ordering", "2p + lambda*beta > 0", a, true);

    for feature in features {
        match *feature {
            Feature::TailTraces => {
                d.push("trace_class", "2p + lambda*beta > 1", a - 1.0, true);
            }
            Feature::Target => {
                d.push(
                    "target_exponent_positive",
                    "r' = (1 - lambda(1 - r))/2 > 0",
                    profile.target_exponent(),
                    true,
                );
                d.push(
                    "target_summable",
                    "2r' + lambda(1 - beta') > 1",
                    profile.target_norm_exponent() - 1.0,
                    true,
                );
            }
            Feature::RegularizedRates { gamma_exponent } => {
                d.push("ridge_exponent_positive", "gamma > 0", gamma_exponent, true);
                d.push(
                    "ridge_below_spectrum",
                    "2p + lambda*beta > gamma",
                    a - gamma_exponent,
                    true,
                );
                d.push("source_rate", "2p + lambda*r > 0", 2.0 * p + lam * r, true);
                d.push("source_above_eval", "r > beta'", r - beta_eval, true);
            }
            Feature::InterpolationRates => {
                d.push(
                    "interpolation_rate",
                    "2p + lambda*min(r, beta) > 0",
                    2.0 * p + lam * r.min(beta),
                    true,
                );
                d.push("source_above_eval", "r > beta'", r - beta_eval, true);
            }
        }
    }
    d
}

/// `sum_{i>k} i^-s` for `s > 1`.
///
/// Terms up to index 256 are summed directly; the remainder uses the
/// Euler-Maclaurin expansion, whose truncation error is far below `1e-16`
/// relative at that cut-off for the exponents used here.
pub fn power_tail_sum(s: f64, k: usize) -> f64 {
    if s <= 1.0 {
        return f64::INFINITY;
    }
    const DIRECT_UNTIL: usize = 256;
    let mut direct = 0.0;
    let mut start = k + 1;
    if start < DIRECT_UNTIL {
        // smallest terms first
        for i in (start..DIRECT_UNTIL).rev() {
            direct += (i as f64).powf(-s);
        }
        start = DIRECT_UNTIL;
    }
    let m = start as f64;
    let f = m.powf(-s);
    let remainder = m.powf(1.0 - s) / (s - 1.0) + f / 2.0 + s * f / (12.0 * m)
        - s * (s + 1.0) * (s + 2.0) * f / (720.0 * m.powi(3))
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * f / (30240.0 * m.powi(5));
    remainder + direct
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn profile(lam: f64, p: f64, r: f64, beta: f64, beta_eval: f64) -> SpectralProfile {
        SpectralProfile::new(lam, p, r, beta, beta_eval, 0.0, 1024)
    }

    #[test]
    fn eigenvalues_and_operator_coefficients() {
        for lam in [1.5, 2.0, 4.0] {
            assert_eq!(profile(lam, 0.0, 1.0, 1.0, 0.0).eigenvalue_at(1), 1.0);
        }
        assert_eq!(profile(2.0, 0.0, 1.0, 1.0, 0.0).eigenvalue_at(4), 0.0625);
        assert_eq!(profile(4.0, 0.0, 1.0, 1.0, 0.0).eigenvalue_at(2), 0.0625);
        for i in [1, 7, 100] {
            assert_eq!(profile(4.0, 0.0, 1.0, 1.0, 0.0).operator_coeff_at(i), 1.0);
        }
        assert_eq!(profile(4.0, -1.0, 1.0, 1.0, 0.0).operator_coeff_at(3), 3.0);
        assert_eq!(profile(4.0, -0.5, 1.0, 1.0, 0.0).operator_coeff_at(4), 2.0);
    }

    #[test]
    fn target_coefficients() {
        for lam in [1.5, 2.0, 4.0, 7.0] {
            let c = profile(lam, -1.0, 1.0, 1.0, 0.0).target_coeff_at(9).unwrap();
            assert!((c - 1.0 / 3.0).abs() < 1e-15);
        }
        let q = profile(4.0, -1.0, 0.9, 1.0, 0.0);
        assert_eq!(q.target_coeff_at(1).unwrap(), 1.0);
        assert!((q.target_exponent() - 0.3).abs() < 1e-15);
        // 2^-0.3 by hand: exp(-0.3 ln 2)
        assert!((q.target_coeff_at(2).unwrap() - 0.812_252_396_356_236).abs() < 1e-12);
    }

    #[test]
    fn target_errors() {
        // r' = (1 - 4 * 0.75)/2 < 0
        let bad = profile(4.0, -1.0, 0.25, 1.0, 0.0);
        assert!(matches!(bad.target_coeff_at(1), Err(Error::IncompatibleSource { .. })));
        // r' = 0.1, 2r' + lambda(1 - beta') = 0.2 + 4 * 0.1 = 0.6 <= 1
        let q = profile(4.0, -1.0, 0.8, 1.0, 0.9);
        assert!(matches!(q.target_coeff_at(1), Err(Error::NonSummableTarget { .. })));
    }

    #[test]
    fn validation_examples() {
        let d = validate_profile(&profile(4.0, -1.0, 1.0, 1.0, 0.0), &[]);
        let ordering = d.get("eigen_ordering").unwrap();
        assert!(ordering.passed);
        assert_eq!(ordering.slack, 2.0);

        let d = validate_profile(&profile(2.0, -1.0, 1.0, 1.0, 0.0), &[]);
        let ordering = d.get("eigen_ordering").unwrap();
        assert!(!ordering.passed);
        assert_eq!(ordering.slack, 0.0);
        assert!(d.clone().into_result().is_err());

        let d = validate_profile(
            &profile(4.0, 0.0, 1.0, 1.0, 0.0),
            &[Feature::InterpolationRates, Feature::Target, Feature::TailTraces],
        );
        assert!(d.all_passed(), "{d:?}");
    }

    #[test]
    fn high_bias_needs_override() {
        let p = profile(4.0, -2.5, 1.0, 1.5, 0.0);
        assert!(!validate_profile(&p, &[]).all_passed());
        assert!(validate_profile(&p.with_high_bias_override(true), &[]).all_passed());
    }

    #[test]
    fn trace_class_check() {
        // a = 2p + lambda beta = -2 + 4 * 0.6 = 0.4
        let d = validate_profile(&profile(4.0, -1.0, 1.0, 0.6, 0.0), &[Feature::TailTraces]);
        assert!(d.get("eigen_ordering").unwrap().passed);
        assert!(!d.get("trace_class").unwrap().passed);
    }

    #[test]
    fn monotone_transformed_spectrum_iff_ordering() {
        for (lam, p, beta) in [(4.0, -1.0, 1.0), (2.0, -1.0, 1.0), (4.0, -1.0, 0.4), (3.0, 0.0, 0.5)] {
            let q = profile(lam, p, 1.0, beta, 0.0);
            let decreasing = (1..10_000).all(|i| q.transformed_weight(i + 1) < q.transformed_weight(i));
            assert_eq!(
                decreasing,
                q.transformed_exponent() > 0.0,
                "lam {lam} p {p} beta {beta}"
            );
        }
    }

    #[test]
    fn summability_iff_trace_class() {
        // Cauchy increments over successive decades of the partial sums.
        for (lam, p, beta) in [(4.0, -1.0, 1.0), (4.0, -1.0, 0.6), (2.0, 0.0, 0.5), (4.0, 0.0, 1.0)] {
            let q = profile(lam, p, 1.0, beta, 0.0);
            let block = |lo: usize, hi: usize| (lo..hi).map(|i| q.transformed_weight(i)).sum::<f64>();
            let late = block(100_000, 1_000_000);
            let converges = late < 1e-4;
            assert_eq!(converges, q.transformed_exponent() > 1.0, "lam {lam} p {p} beta {beta}");
        }
    }

    #[test]
    fn power_tail_matches_closed_forms() {
        assert!((power_tail_sum(2.0, 1) - (PI * PI / 6.0 - 1.0)).abs() < 1e-14);
        assert!((power_tail_sum(2.0, 0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((power_tail_sum(4.0, 0) - PI.powi(4) / 90.0).abs() < 1e-14);
        // brute force against a long direct sum plus the integral remainder
        let direct: f64 =
            (1001..2_000_000).rev().map(|i| (i as f64).powf(-3.0)).sum::<f64>() + 0.5 * 2_000_000f64.powi(-2);
        assert!((power_tail_sum(3.0, 1000) - direct).abs() < 1e-15);
        assert!(power_tail_sum(1.0, 10).is_infinite());
    }

    #[test]
    fn ridge_schedule() {
        assert_eq!(RidgeSchedule::ridgeless().gamma_at(100), 0.0);
        assert!(RidgeSchedule::ridgeless().is_ridgeless());
        let s = RidgeSchedule::power(0.5);
        assert!((s.gamma_at(64) - 0.125).abs() < 1e-15);
        assert_eq!(s.decay_exponent(), Some(0.5));
        assert!(RidgeSchedule::Fixed { value: -1.0 }.validate().is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"mode":"power","exponent":0.5,"scale":1.0}"#);
        let back: RidgeSchedule = serde_json::from_str(r#"{"mode":"fixed","value":0}"#).unwrap();
        assert!(back.is_ridgeless());
        let unit: RidgeSchedule = serde_json::from_str(r#"{"mode":"power","exponent":0.5}"#).unwrap();
        assert_eq!(unit, s);
    }
}
