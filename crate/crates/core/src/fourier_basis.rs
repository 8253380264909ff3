//! Fourier eigenbasis on the periodic unit interval and uniform designs.
//!
//! Index `i` maps to frequency `floor(i / 2)`: `psi_1 = 1`, even indices are
//! `sqrt(2) cos(2 pi m x)` and odd indices `i >= 3` are `sqrt(2) sin(2 pi m x)`.
//! Every eigenfunction is bounded by `sqrt(2)`.

use std::f64::consts::{SQRT_2, TAU};

use faer::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, DESIGN_STREAM};

/// `n` points on `[0, 1)` and the seed that regenerates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSample {
    pub points: Vec<f64>,
    pub seed: u64,
}

impl DesignSample {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// A design with explicit points, for hand-built examples.
    pub fn from_points(points: Vec<f64>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSampleSize);
        }
        if let Some(x) = points.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Error::InvalidInput(format!("design point {x} outside [0, 1)")));
        }
        Ok(Self { points, seed })
    }
}

/// `n` i.i.d. uniform points from the generator seeded by `seed`.
pub fn sample_design(n: usize, seed: u64) -> Result<DesignSample> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let mut rng = stream_rng(seed, DESIGN_STREAM);
    let points = (0..n).map(|_| rng.random::<f64>()).collect();
    Ok(DesignSample { points, seed })
}

#[inline]
fn frequency_phase(m: usize, x: f64) -> f64 {
    TAU * (m as f64 * x).rem_euclid(1.0)
}

/// `psi_i(x)`; `i` must be at least 1.
pub fn eigenfunction_value(i: usize, x: f64) -> f64 {
    assert!(i >= 1, "eigenfunction indices start at 1");
    if i == 1 {
        return 1.0;
    }
    let phase = frequency_phase(i / 2, x);
    if i.is_multiple_of(2) {
        SQRT_2 * phase.cos()
    } else {
        SQRT_2 * phase.sin()
    }
}

/// Steps between exact re-evaluations in the angle-addition recurrence.
const RESEED_EVERY: usize = 32;

/// Fills `out` (n x (i_hi - i_lo + 1)) with `scale(i) * psi_i(x_j)`.
///
/// Frequencies advance by angle addition from an exact `sin_cos` every
/// [`RESEED_EVERY`] steps, so the drift stays at a few ulps.
pub(crate) fn fill_scaled_block(
    points: &[f64],
    i_lo: usize,
    i_hi: usize,
    out: &mut Mat<f64>,
    scale: impl Fn(usize) -> f64,
) {
    let n = points.len();
    debug_assert!(i_lo >= 1 && i_lo <= i_hi);
    debug_assert_eq!(out.nrows(), n);
    debug_assert_eq!(out.ncols(), i_hi - i_lo + 1);

    let step: Vec<(f64, f64)> = points.iter().map(|&x| frequency_phase(1, x).sin_cos()).collect();
    let mut sin_m = vec![0.0; n];
    let mut cos_m = vec![0.0; n];

    let m_lo = i_lo / 2;
    let m_hi = i_hi / 2;
    for (count, m) in (m_lo..=m_hi).enumerate() {
        if count % RESEED_EVERY == 0 {
            for (j, &x) in points.iter().enumerate() {
                let (s, c) = frequency_phase(m, x).sin_cos();
                sin_m[j] = s;
                cos_m[j] = c;
            }
        } else {
            for j in 0..n {
                let (s1, c1) = step[j];
                let (s, c) = (sin_m[j], cos_m[j]);
                cos_m[j] = c * c1 - s * s1;
                sin_m[j] = s * c1 + c * s1;
            }
        }
        if m == 0 {
            // only index 1 lives at frequency zero
            if (i_lo..=i_hi).contains(&1) {
                let w = scale(1);
                out.col_mut(0).iter_mut().for_each(|v| *v = w);
            }
            continue;
        }
        let even = 2 * m;
        if (i_lo..=i_hi).contains(&even) {
            let w = SQRT_2 * scale(even);
            let col = out.col_mut(even - i_lo);
            for (v, c) in col.iter_mut().zip(&cos_m) {
                *v = w * c;
            }
        }
        let odd = 2 * m + 1;
        if (i_lo..=i_hi).contains(&odd) {
            let w = SQRT_2 * scale(odd);
            let col = out.col_mut(odd - i_lo);
            for (v, s) in col.iter_mut().zip(&sin_m) {
                *v = w * s;
            }
        }
    }
}

/// Feature block with entry `(j, i - i_lo)` equal to `psi_i(x_j)`.
pub fn feature_block(design: &DesignSample, i_lo: usize, i_hi: usize) -> Result<Mat<f64>> {
    if i_lo < 1 || i_lo > i_hi {
        return Err(Error::InvalidInput(format!(
            "feature block needs 1 <= i_lo <= i_hi, got [{i_lo}, {i_hi}]"
        )));
    }
    let mut out = Mat::zeros(design.n(), i_hi - i_lo + 1);
    fill_scaled_block(&design.points, i_lo, i_hi, &mut out, |_| 1.0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_design() {
        assert!(matches!(sample_design(0, 1), Err(Error::InvalidSampleSize)));
    }

    #[test]
    fn design_is_deterministic() {
        let a = sample_design(5, 7).unwrap();
        let b = sample_design(5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 5);
        assert_ne!(a.points, sample_design(5, 8).unwrap().points);
        assert!(a.points.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn design_mean_law_of_large_numbers() {
        let d = sample_design(100_000, 1).unwrap();
        let mean = d.points.iter().sum::<f64>() / d.n() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
    }

    #[test]
    fn eigenfunction_examples() {
        for x in [0.0, 0.3, 0.77] {
            assert_eq!(eigenfunction_value(1, x), 1.0);
        }
        assert_eq!(eigenfunction_value(2, 0.0), SQRT_2);
        assert_eq!(eigenfunction_value(3, 0.0), 0.0);
        assert!((eigenfunction_value(2, 0.25)).abs() < 1e-15);
        assert!((eigenfunction_value(3, 0.25) - SQRT_2).abs() < 1e-15);
        assert!((eigenfunction_value(5, 0.125) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn quadrature_orthonormality() {
        let m = 1usize << 14;
        let grid: Vec<f64> = (0..m).map(|g| g as f64 / m as f64).collect();
        let design = DesignSample::from_points(grid, 0).unwrap();
        let f = feature_block(&design, 1, 64).unwrap();
        for a in 0..64 {
            for b in 0..64 {
                let ip: f64 = (0..m).map(|g| f[(g, a)] * f[(g, b)]).sum::<f64>() / m as f64;
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-10, "a={a} b={b} ip={ip}");
            }
        }
        // single pair on a 4096-point grid, using the scalar evaluator
        let mm = 4096;
        let ip: f64 = (0..mm)
            .map(|g| {
                let x = g as f64 / mm as f64;
                eigenfunction_value(2, x) * eigenfunction_value(3, x)
            })
            .sum::<f64>()
            / mm as f64;
        assert!(ip.abs() < 1e-12);
    }

    #[test]
    fn block_examples() {
        let d = DesignSample::from_points(vec![0.0], 0).unwrap();
        let f = feature_block(&d, 1, 3).unwrap();
        assert_eq!((f[(0, 0)], f[(0, 1)], f[(0, 2)]), (1.0, SQRT_2, 0.0));
        assert!(feature_block(&d, 0, 3).is_err());
        assert!(feature_block(&d, 4, 3).is_err());
    }

    #[test]
    fn blocks_concatenate_and_match_scalar_evaluator() {
        let d = sample_design(37, 11).unwrap();
        let full = feature_block(&d, 1, 300).unwrap();
        for k in [1, 2, 33, 150, 299] {
            let head = feature_block(&d, 1, k).unwrap();
            let tail = feature_block(&d, k + 1, 300).unwrap();
            for j in 0..d.n() {
                for i in 0..300 {
                    let v = if i < k { head[(j, i)] } else { tail[(j, i - k)] };
                    assert!(
                        (v - full[(j, i)]).abs() < 1e-12,
                        "k={k} j={j} i={i} {v} {}",
                        full[(j, i)]
                    );
                }
            }
        }
        for j in 0..d.n() {
            for i in 0..300 {
                let exact = eigenfunction_value(i + 1, d.points[j]);
                assert!((full[(j, i)] - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bounded_eigenfunctions() {
        let grid: Vec<f64> = (0..10_000).map(|g| g as f64 / 10_000.0).collect();
        let design = DesignSample::from_points(grid, 0).unwrap();
        let f = feature_block(&design, 1, 1000).unwrap();
        let mut sup = 0.0f64;
        for i in 0..1000 {
            for j in 0..design.n() {
                sup = sup.max(f[(j, i)].abs());
            }
        }
        assert!(sup <= SQRT_2 + 1e-12);
        assert!(sup >= SQRT_2 - 1e-12);
        // beta_k <= 2 follows from psi_i^2 <= 2
        assert!(sup * sup <= 2.0 + 1e-12);
    }
}
