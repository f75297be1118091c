//! Central finite-difference gradient oracle.
//!
//! This stays independent of the tape's reverse pass: callers hand in a
//! closure that evaluates the scalar function (and its claimed analytic
//! gradient) at a point; the oracle re-derives each partial numerically.

use alloc::vec::Vec;

use crate::fmath;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = fmath::fmax(1e-12, fmath::abs(analytic) + fmath::abs(numeric));
    fmath::abs(analytic - numeric) / denom
}

/// Max relative error between the analytic gradient and central differences,
/// over every coordinate of `point`.
///
/// `f` returns the function value and its full analytic gradient. The error
/// per coordinate is `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn finite_difference_check<F>(mut f: F, point: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..point.len()).collect();
    let (_, analytic) = f(point);
    assert_eq!(analytic.len(), point.len(), "gradient length mismatch");
    max_error_over_coords(|x| f(x).0, &analytic, point, step, &coords)
}

/// Like [`finite_difference_check`] but probing only `coords`, with a
/// value-only closure so large models skip the reverse pass on perturbed
/// evaluations.
pub fn finite_difference_check_sampled<V>(
    analytic: &[f64],
    value_fn: V,
    point: &[f64],
    step: f64,
    coords: &[usize],
) -> f64
where
    V: FnMut(&[f64]) -> f64,
{
    assert_eq!(analytic.len(), point.len(), "gradient length mismatch");
    max_error_over_coords(value_fn, analytic, point, step, coords)
}

fn max_error_over_coords<V>(
    mut value_fn: V,
    analytic: &[f64],
    point: &[f64],
    step: f64,
    coords: &[usize],
) -> f64
where
    V: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let original = x[i];
        x[i] = original + step;
        let plus = value_fn(&x);
        x[i] = original - step;
        let minus = value_fn(&x);
        x[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        worst = fmath::fmax(worst, relative_error(analytic[i], numeric));
    }
    worst
}

/// Directional-derivative check: compare `∇f · v` against the central
/// difference of `f` along each direction `v`.
///
/// Per-coordinate differences cannot resolve coordinates whose true partial
/// is exactly zero (cancellation noise dominates); a random direction mixes
/// every coordinate into one generically nonzero derivative, so this is the
/// robust whole-gradient oracle for large models.
pub fn finite_difference_check_directional<V>(
    analytic: &[f64],
    mut value_fn: V,
    point: &[f64],
    step: f64,
    directions: &[alloc::vec::Vec<f64>],
) -> f64
where
    V: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    assert_eq!(analytic.len(), point.len(), "gradient length mismatch");
    let mut worst = 0.0f64;
    let mut x = alloc::vec![0.0; point.len()];
    for v in directions {
        assert_eq!(v.len(), point.len(), "direction length mismatch");
        let analytic_dir: f64 = analytic.iter().zip(v).map(|(g, d)| g * d).sum();
        for (xi, (pi, di)) in x.iter_mut().zip(point.iter().zip(v)) {
            *xi = pi + step * di;
        }
        let plus = value_fn(&x);
        for (xi, (pi, di)) in x.iter_mut().zip(point.iter().zip(v)) {
            *xi = pi - step * di;
        }
        let minus = value_fn(&x);
        let numeric = (plus - minus) / (2.0 * step);
        worst = fmath::fmax(worst, relative_error(analytic_dir, numeric));
    }
    worst
}
