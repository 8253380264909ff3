//! Spectrally transformed kernel, its regularized and ridgeless solves, and an
//! independent minimum-norm oracle.
//!
//! All spectral sums run over the first `N = profile.truncation` indices and
//! are accumulated in blocks of [`ASSEMBLY_BLOCK`] indices, so memory stays at
//! `O(n^2 + n * block)`.

use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::prelude::Solve;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_basis::{fill_scaled_block, DesignSample};
use crate::rng::{stream_rng, NOISE_STREAM};
use crate::spectral_problem::{power_tail_sum, SpectralProfile};

/// Width of the index blocks used by every spectral accumulation.
pub const ASSEMBLY_BLOCK: usize = 4096;

/// Eigenvalues below this fraction of the largest are not inverted by the
/// ridgeless solver.
pub const RIDGELESS_REL_CUTOFF: f64 = 1e-12;

/// Interpolation residual above which a ridgeless solve is reported singular.
pub const RIDGELESS_RESIDUAL_TOL: f64 = 1e-8;

/// Condition number above which a solution is flagged ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Maximum iterative-refinement steps of a solve.
pub const REFINEMENT_STEPS: usize = 3;

/// Inclusive range `[lo, hi]` of spectral indices, `1 <= lo <= hi <= N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub lo: usize,
    pub hi: usize,
}

impl IndexRange {
    pub fn new(lo: usize, hi: usize, truncation: usize) -> Result<Self> {
        if lo < 1 || lo > hi || hi > truncation {
            return Err(Error::InvalidIndexRange { lo, hi, truncation });
        }
        Ok(Self { lo, hi })
    }

    /// `[1, N]`.
    pub fn full(truncation: usize) -> Self {
        Self {
            lo: 1,
            hi: truncation.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Consecutive sub-ranges of at most `width` indices.
    pub fn blocks(&self, width: usize) -> impl Iterator<Item = (usize, usize)> {
        let hi = self.hi;
        (self.lo..=hi)
            .step_by(width)
            .map(move |lo| (lo, (lo + width - 1).min(hi)))
    }
}

/// Adds `sum_{i in [lo, hi]} s_i^2 psi_i psi_i^T` into the lower triangle of `acc`.
pub(crate) fn accumulate_gram(
    points: &[f64],
    range: IndexRange,
    scale: impl Fn(usize) -> f64 + Copy,
    acc: &mut Mat<f64>,
) {
    let n = points.len();
    for (lo, hi) in range.blocks(ASSEMBLY_BLOCK) {
        let mut f = Mat::zeros(n, hi - lo + 1);
        fill_scaled_block(points, lo, hi, &mut f, scale);
        triangular::matmul(
            acc.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            f.as_ref(),
            BlockStructure::Rectangular,
            f.transpose(),
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
    }
}

/// Mirrors the lower triangle into the upper one.
pub(crate) fn symmetrize_lower(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// `diag(s) F^T V` restricted to `range`, with `F_{ji} = psi_i(x_j)`.
pub(crate) fn project_features(
    points: &[f64],
    range: IndexRange,
    scale: impl Fn(usize) -> f64 + Copy,
    vectors: MatRef<'_, f64>,
) -> Mat<f64> {
    let n = points.len();
    let mut out = Mat::zeros(range.len(), vectors.ncols());
    for (lo, hi) in range.blocks(ASSEMBLY_BLOCK) {
        let mut f = Mat::zeros(n, hi - lo + 1);
        fill_scaled_block(points, lo, hi, &mut f, scale);
        let rows = out.as_mut().subrows_mut(lo - range.lo, hi - lo + 1);
        matmul(rows, Accum::Replace, f.transpose(), vectors, 1.0, Par::Seq);
    }
    out
}

/// `sum_{i in range} s_i a_i psi_i(x_j)` for every design point.
pub(crate) fn synthesize(
    points: &[f64],
    range: IndexRange,
    scale: impl Fn(usize) -> f64 + Copy,
    coeffs: &[f64],
) -> Vec<f64> {
    let n = points.len();
    let mut out = Mat::<f64>::zeros(n, 1);
    for (lo, hi) in range.blocks(ASSEMBLY_BLOCK) {
        let mut f = Mat::zeros(n, hi - lo + 1);
        fill_scaled_block(points, lo, hi, &mut f, scale);
        let a = MatRef::from_column_major_slice(&coeffs[lo - range.lo..=hi - range.lo], hi - lo + 1, 1);
        matmul(out.as_mut(), Accum::Add, f.as_ref(), a, 1.0, Par::Seq);
    }
    (0..n).map(|j| out[(j, 0)]).collect()
}

/// The (possibly index-restricted) spectrally transformed kernel matrix.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    /// Symmetric `n x n` matrix `sum_{i in range} p_i^2 lambda_i^beta psi_i(x_j) psi_i(x_l)`.
    pub matrix: Mat<f64>,
    pub index_range: IndexRange,
    /// Truncation `N` of the profile it was assembled from.
    pub truncation: usize,
    /// Entrywise bound `2 * sum_{i>N} p_i^2 lambda_i^beta` on the omitted tail.
    pub tail_bound: f64,
    /// Diagonal shift standing in for the indices beyond `N`; zero for the
    /// plain truncated problem.
    pub closure: f64,
    features: Option<FeatureMap>,
}

/// Factor `H` with `matrix = H H^T`, kept so residuals can be formed without
/// the rounding of the assembled matrix.
#[derive(Debug, Clone)]
struct FeatureMap {
    points: Vec<f64>,
    half_exponent: f64,
}

impl KernelSystem {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_full_range(&self) -> bool {
        self.index_range.lo == 1 && self.index_range.hi == self.truncation
    }

    /// Ascending eigenvalues of the matrix including the closure shift.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut ev = self
            .matrix
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::Decomposition)?;
        ev.iter_mut().for_each(|v| *v += self.closure);
        Ok(ev)
    }
}

/// Assembles the kernel over `range`.
///
/// When the range reaches `N` the tail beyond it is either closed by a
/// diagonal shift or, for the plain truncated problem, its analytic bound is
/// compared with the smallest diagonal entry.
pub fn assemble_kernel(design: &DesignSample, profile: &SpectralProfile, range: IndexRange) -> Result<KernelSystem> {
    let truncation = profile.truncation;
    let range = IndexRange::new(range.lo, range.hi, truncation)?;
    let n = design.n();
    let half = profile.transformed_exponent() / 2.0;
    let mut matrix = Mat::zeros(n, n);
    accumulate_gram(&design.points, range, |i| (i as f64).powf(-half), &mut matrix);
    symmetrize_lower(&mut matrix);

    let tail_bound = 2.0 * power_tail_sum(profile.transformed_exponent(), truncation);
    let closure = if range.hi == truncation {
        profile.closure_shift()
    } else {
        0.0
    };
    if range.hi == truncation && closure == 0.0 {
        if let Some(tol) = profile.tail_policy.kernel_tail_rel_tol {
            let diag_min = (0..n).map(|j| matrix[(j, j)]).fold(f64::INFINITY, f64::min);
            let limit = tol * diag_min;
            if !(tail_bound <= limit) {
                return Err(Error::TruncationTooCoarse {
                    truncation,
                    bound: tail_bound,
                    limit,
                });
            }
        }
    }
    Ok(KernelSystem {
        matrix,
        index_range: range,
        truncation,
        tail_bound,
        closure,
        features: Some(FeatureMap {
            points: design.points.clone(),
            half_exponent: half,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cholesky,
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative eigenvalue cutoff of the pseudo-inverse.
    pub rel_cutoff: f64,
    /// Relative residual above which a ridgeless solve is rejected.
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_cutoff: RIDGELESS_REL_CUTOFF,
            residual_tol: RIDGELESS_RESIDUAL_TOL,
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(faer::linalg::solvers::Llt<f64>),
    Spectral { vectors: Mat<f64>, inv_values: Vec<f64> },
}

/// Reusable factorization of `K + ridge * I` (pseudo-inverse when `ridge = 0`).
#[derive(Debug, Clone)]
pub struct SystemFactor {
    factor: Factor,
    pub ridge: f64,
    pub method: SolveMethod,
    pub cond_estimate: f64,
    pub discarded_modes: usize,
    /// Upper bound on the spectral norm of the (pseudo-)inverse.
    pub inverse_norm_bound: f64,
    residual_tol: Option<f64>,
}

impl SystemFactor {
    /// Cholesky when the total shift `ridge + closure` is positive,
    /// eigendecomposition on failure or for the unshifted ridgeless system.
    pub fn new(system: &KernelSystem, ridge: f64, options: SolverOptions) -> Result<Self> {
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ridge must be finite and >= 0, got {ridge}"
            )));
        }
        let n = system.n();
        let shift = ridge + system.closure;
        let mut a = system.matrix.clone();
        for j in 0..n {
            a[(j, j)] += shift;
        }
        if shift > 0.0 {
            if let Ok(llt) = a.llt(Side::Lower) {
                let l = llt.L();
                let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), j| {
                    (lo.min(l[(j, j)]), hi.max(l[(j, j)]))
                });
                return Ok(Self {
                    factor: Factor::Cholesky(llt),
                    ridge,
                    method: SolveMethod::Cholesky,
                    cond_estimate: (hi / lo).powi(2),
                    discarded_modes: 0,
                    inverse_norm_bound: 1.0 / shift,
                    residual_tol: None,
                });
            }
        }
        let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Decomposition)?;
        let values = evd.S().column_vector();
        let mu_max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cutoff = options.rel_cutoff * mu_max;
        let mut inv_values = Vec::with_capacity(n);
        let mut min_kept = f64::INFINITY;
        let mut discarded = 0;
        for &mu in values.iter() {
            // a shifted system may be indefinite; the ridgeless one is PSD up to rounding
            let keep = if shift > 0.0 {
                mu.abs() > cutoff
            } else {
                mu > cutoff && mu > 0.0
            };
            if keep {
                inv_values.push(1.0 / mu);
                min_kept = min_kept.min(mu.abs());
            } else {
                inv_values.push(0.0);
                discarded += 1;
            }
        }
        let (cond_estimate, inverse_norm_bound) = if min_kept.is_finite() {
            (mu_max / min_kept, 1.0 / min_kept)
        } else {
            (f64::INFINITY, 0.0)
        };
        Ok(Self {
            factor: Factor::Spectral {
                vectors: evd.U().to_owned(),
                inv_values,
            },
            ridge,
            method: SolveMethod::Eigen,
            cond_estimate,
            discarded_modes: discarded,
            inverse_norm_bound,
            residual_tol: (shift == 0.0).then_some(options.residual_tol),
        })
    }

    /// Overwrites `rhs` with `(K + ridge I)^+ rhs`.
    pub fn apply_in_place(&self, mut rhs: MatMut<'_, f64>) {
        match &self.factor {
            Factor::Cholesky(llt) => llt.solve_in_place(rhs),
            Factor::Spectral { vectors, inv_values } => {
                let mut z = Mat::zeros(vectors.ncols(), rhs.ncols());
                matmul(
                    z.as_mut(),
                    Accum::Replace,
                    vectors.transpose(),
                    rhs.as_ref(),
                    1.0,
                    Par::Seq,
                );
                for (k, &w) in inv_values.iter().enumerate() {
                    z.row_mut(k).iter_mut().for_each(|v| *v *= w);
                }
                matmul(
                    rhs.as_mut(),
                    Accum::Replace,
                    vectors.as_ref(),
                    z.as_ref(),
                    1.0,
                    Par::Seq,
                );
            }
        }
    }

    /// `sum_k ||((K + ridge I)^+ rhs)_{:,k}||^2`.
    ///
    /// For the spectral factor the rotation back is skipped, which avoids
    /// forming the large intermediate product.
    pub fn inverse_frobenius_sq(&self, rhs: MatRef<'_, f64>) -> f64 {
        match &self.factor {
            Factor::Cholesky(_) => {
                let mut x = rhs.to_owned();
                self.apply_in_place(x.as_mut());
                x.squared_norm_l2()
            }
            Factor::Spectral { vectors, inv_values } => {
                let mut z = Mat::zeros(vectors.ncols(), rhs.ncols());
                matmul(z.as_mut(), Accum::Replace, vectors.transpose(), rhs, 1.0, Par::Seq);
                inv_values
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| w * w * z.row(k).iter().map(|v| v * v).sum::<f64>())
                    .sum()
            }
        }
    }

    /// `||(K + ridge I)^+||_F^2`.
    pub fn inverse_frobenius_sq_total(&self) -> f64 {
        match &self.factor {
            Factor::Cholesky(llt) => {
                let n = llt.L().nrows();
                let mut x = Mat::<f64>::identity(n, n);
                self.apply_in_place(x.as_mut());
                x.squared_norm_l2()
            }
            Factor::Spectral { inv_values, .. } => inv_values.iter().map(|w| w * w).sum(),
        }
    }

    /// Solves against one right-hand side and checks the residual.
    ///
    /// Systems assembled from a design are refined against the residual
    /// `y - H H^T theta - shift theta` formed through the features, whose
    /// rounding scales with the fitted values rather than with `|K| |theta|`.
    pub fn solve(&self, system: &KernelSystem, y: &[f64]) -> Result<Solution> {
        let n = system.n();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        let shift = self.ridge + system.closure;
        let mut theta = self.apply_vec(y);
        let mut r = residual(system, shift, &theta, y);
        let mut r_norm = l2(&r);
        if system.features.is_some() {
            for _ in 0..REFINEMENT_STEPS {
                if r_norm == 0.0 {
                    break;
                }
                let step = self.apply_vec(&r);
                let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, d)| t + d).collect();
                let r_next = residual(system, shift, &candidate, y);
                let next_norm = l2(&r_next);
                if !(next_norm < r_norm) {
                    break;
                }
                (theta, r, r_norm) = (candidate, r_next, next_norm);
            }
        }
        let y_norm = l2(y);
        let relative_residual = if y_norm == 0.0 { r_norm } else { r_norm / y_norm };
        if let Some(tol) = self.residual_tol {
            if !(relative_residual <= tol) {
                return Err(Error::SingularSystem {
                    residual: relative_residual,
                });
            }
        }
        Ok(Solution {
            theta,
            method: self.method,
            ridge: self.ridge,
            cond_estimate: self.cond_estimate,
            relative_residual,
            ill_conditioned: self.cond_estimate > ILL_CONDITIONED,
            discarded_modes: self.discarded_modes,
        })
    }

    fn apply_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = Mat::from_fn(n, 1, |j, _| rhs[j]);
        self.apply_in_place(x.as_mut());
        (0..n).map(|j| x[(j, 0)]).collect()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `y - (K + shift I) theta`, through the features when they are known.
fn residual(system: &KernelSystem, shift: f64, theta: &[f64], y: &[f64]) -> Vec<f64> {
    let n = system.n();
    let t = MatRef::from_column_major_slice(theta, n, 1);
    let k_theta: Vec<f64> = match &system.features {
        Some(fm) => {
            let scale = |i: usize| (i as f64).powf(-fm.half_exponent);
            let u = project_features(&fm.points, system.index_range, scale, t);
            let u: Vec<f64> = (0..u.nrows()).map(|i| u[(i, 0)]).collect();
            synthesize(&fm.points, system.index_range, scale, &u)
        }
        None => {
            let mut out = Mat::zeros(n, 1);
            matmul(out.as_mut(), Accum::Replace, system.matrix.as_ref(), t, 1.0, Par::Seq);
            (0..n).map(|j| out[(j, 0)]).collect()
        }
    };
    (0..n).map(|j| y[j] - k_theta[j] - shift * theta[j]).collect()
}

/// Dual solution `theta` with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub method: SolveMethod,
    /// `n * gamma` as added to the diagonal.
    pub ridge: f64,
    pub cond_estimate: f64,
    pub relative_residual: f64,
    pub ill_conditioned: bool,
    pub discarded_modes: usize,
}

impl Solution {
    pub fn gamma(&self) -> f64 {
        self.ridge / self.theta.len() as f64
    }
}

/// Solves `(K + n gamma I) theta = y`; `gamma = 0` defers to [`solve_ridgeless`].
pub fn solve_regularized(system: &KernelSystem, y: &[f64], gamma: f64, n: usize) -> Result<Solution> {
    if n != system.n() {
        return Err(Error::DimensionMismatch {
            expected: system.n(),
            found: n,
        });
    }
    if gamma == 0.0 {
        return solve_ridgeless(system, y);
    }
    let factor = SystemFactor::new(system, n as f64 * gamma, SolverOptions::default())?;
    factor.solve(system, y)
}

/// Minimum-norm interpolation through the eigen-cutoff pseudo-inverse.
pub fn solve_ridgeless(system: &KernelSystem, y: &[f64]) -> Result<Solution> {
    solve_ridgeless_with(system, y, SolverOptions::default())
}

pub fn solve_ridgeless_with(system: &KernelSystem, y: &[f64], options: SolverOptions) -> Result<Solution> {
    if !system.is_full_range() {
        return Err(Error::InvalidInput(
            "ridgeless solve needs the kernel over the full index range".into(),
        ));
    }
    SystemFactor::new(system, 0.0, options)?.solve(system, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub gamma: Option<f64>,
    pub seed: u64,
    pub n: usize,
}

/// Coordinates `c_i = <f, phi_i>` of an estimate in the orthonormal RKHS basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCoefficients {
    pub coeffs: Vec<f64>,
    pub truncation: usize,
    pub provenance: Provenance,
}

impl EstimatorCoefficients {
    /// Largest coordinate difference relative to the largest coordinate of `other`.
    pub fn max_relative_deviation(&self, other: &Self) -> f64 {
        let scale = other.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Scale `p_i lambda_i^(beta - 1/2)` mapping `psi_i^T theta` to a coordinate.
fn coefficient_scale(profile: &SpectralProfile) -> impl Fn(usize) -> f64 + Copy {
    let e = profile.op_order + profile.lambda_decay * (profile.bias - 0.5);
    move |i| (i as f64).powf(-e)
}

/// Scale `p_i sqrt(lambda_i)` of the forward map `a -> S_n A f`.
fn forward_scale(profile: &SpectralProfile) -> impl Fn(usize) -> f64 + Copy {
    let e = profile.op_order + profile.lambda_decay / 2.0;
    move |i| (i as f64).powf(-e)
}

/// Coordinates of the estimate `f = A Sigma^(beta-1) S_n^* theta`.
pub fn estimator_coefficients(
    theta: &[f64],
    design: &DesignSample,
    profile: &SpectralProfile,
) -> EstimatorCoefficients {
    let columns = MatRef::from_column_major_slice(theta, theta.len(), 1);
    let c = project_features(
        &design.points,
        IndexRange::full(profile.truncation),
        coefficient_scale(profile),
        columns,
    );
    EstimatorCoefficients {
        coeffs: (0..c.nrows()).map(|i| c[(i, 0)]).collect(),
        truncation: profile.truncation,
        provenance: Provenance {
            gamma: None,
            seed: design.seed,
            n: design.n(),
        },
    }
}

/// Coordinates for several dual vectors at once, one column per vector.
pub fn estimator_coefficients_batch(
    thetas: MatRef<'_, f64>,
    design: &DesignSample,
    profile: &SpectralProfile,
) -> Mat<f64> {
    project_features(
        &design.points,
        IndexRange::full(profile.truncation),
        coefficient_scale(profile),
        thetas,
    )
}

impl Solution {
    pub fn coefficients(&self, design: &DesignSample, profile: &SpectralProfile) -> EstimatorCoefficients {
        let mut c = estimator_coefficients(&self.theta, design, profile);
        c.provenance.gamma = Some(self.gamma());
        c
    }
}

/// Noiseless observations `(S_n A f)(x_j)` of the estimate with coordinates `coeffs`.
pub fn predict(coeffs: &[f64], design: &DesignSample, profile: &SpectralProfile) -> Vec<f64> {
    let range = IndexRange::full(coeffs.len().min(profile.truncation));
    synthesize(&design.points, range, forward_scale(profile), &coeffs[..range.len()])
}

/// Noisy labels and their noiseless part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub y: Vec<f64>,
    pub clean: Vec<f64>,
}

/// Sup-norm bound `sqrt(2) sum_{i>N} c_i p_i sqrt(lambda_i)` on the label tail.
pub fn label_tail_bound(profile: &SpectralProfile) -> f64 {
    let e = profile.target_exponent() + profile.op_order + profile.lambda_decay / 2.0;
    std::f64::consts::SQRT_2 * power_tail_sum(e, profile.truncation)
}

/// `n` centred Gaussian draws with variance `sigma2` from the noise stream of `seed`.
pub fn draw_noise(n: usize, sigma2: f64, seed: u64) -> Vec<f64> {
    let sigma = sigma2.sqrt();
    let mut rng = stream_rng(seed, NOISE_STREAM);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// Labels `y = S_n A f* + eps` for the `N`-bandlimited target.
pub fn observe_targets(design: &DesignSample, profile: &SpectralProfile, seed: u64) -> Result<Observations> {
    let target = profile.target_coefficients()?;
    if let Some(tol) = profile.tail_policy.label_tail_tol {
        let bound = label_tail_bound(profile);
        if !(bound <= tol) {
            return Err(Error::TruncationTooCoarse {
                truncation: profile.truncation,
                bound,
                limit: tol,
            });
        }
    }
    let clean = predict(&target, design, profile);
    let y = if profile.noise_var > 0.0 {
        let eps = draw_noise(design.n(), profile.noise_var, seed);
        clean.iter().zip(&eps).map(|(c, e)| c + e).collect()
    } else {
        clean.clone()
    };
    Ok(Observations { y, clean })
}

/// Brute-force minimum `H^beta`-norm interpolant in truncated coordinates.
///
/// Minimizes `sum_i lambda_i^(1-beta) a_i^2` subject to `M a = y` with
/// `M_{ji} = p_i sqrt(lambda_i) psi_i(x_j)`. After the substitution
/// `b = W^(1/2) a` this is a least-norm problem for `B = M W^(-1/2)`, solved
/// by a thin QR factorization of `B^T`.
pub fn min_norm_oracle(design: &DesignSample, profile: &SpectralProfile, y: &[f64]) -> Result<EstimatorCoefficients> {
    let n = design.n();
    let big_n = profile.truncation;
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if big_n < n {
        return Err(Error::InvalidInput(format!(
            "oracle needs N >= n, got N = {big_n}, n = {n}"
        )));
    }
    let lam = profile.lambda_decay;
    let beta = profile.bias;
    let mut b = Mat::zeros(n, big_n);
    fill_scaled_block(&design.points, 1, big_n, &mut b, |i| {
        profile.operator_coeff_at(i) * (i as f64).powf(-lam * beta / 2.0)
    });
    let bt = b.transpose().to_owned();
    let qr = bt.qr();
    let r = qr.thin_R();
    let r_max = (0..n).fold(0.0f64, |m, k| m.max(r[(k, k)].abs()));
    let rank = (0..n).filter(|&k| r[(k, k)].abs() > 1e-13 * r_max * n as f64).count();
    if rank < n || r_max == 0.0 {
        return Err(Error::RankDeficient { rank, rows: n });
    }
    // R^T z = y, then b = Q z
    let mut z = Mat::from_fn(n, 1, |j, _| y[j]);
    solve_lower_triangular_in_place(r.transpose(), z.as_mut(), Par::Seq);
    let q = qr.compute_thin_Q();
    let mut bvec = Mat::zeros(big_n, 1);
    matmul(bvec.as_mut(), Accum::Replace, q.as_ref(), z.as_ref(), 1.0, Par::Seq);
    let coeffs = (0..big_n)
        .map(|k| {
            let i = k + 1;
            (i as f64).powf(-lam * (beta - 1.0) / 2.0) * bvec[(k, 0)]
        })
        .collect();
    Ok(EstimatorCoefficients {
        coeffs,
        truncation: big_n,
        provenance: Provenance {
            gamma: Some(0.0),
            seed: design.seed,
            n,
        },
    })
}
