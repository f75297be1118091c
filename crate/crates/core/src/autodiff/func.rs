//! Value-level numeric functions shared by losses, layer weights and tests.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

pub(crate) fn log_softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, fmath::fmax);
    let sum: f64 = logits.iter().map(|&x| fmath::exp(x - max)).sum();
    let lse = fmath::ln(sum);
    logits.iter().map(|&x| x - max - lse).collect()
}

/// Stabilized log-softmax of a logit vector.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid_input("log_softmax of an empty vector"));
    }
    Ok(log_softmax_slice(logits))
}

/// `softmax(logits / tau)`, stabilized by max subtraction.
///
/// Entries land in `(0, 1]` and sum to 1 within 1e-9.
pub fn softmax_with_temperature(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid_parameter(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::invalid_input("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("softmax of non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, fmath::fmax);
    let exps: Vec<f64> = logits.iter().map(|&x| fmath::exp((x - max) / tau)).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Kullback-Leibler divergence `KL(p ‖ q) = Σ p_k ln(p_k / q_k)`.
///
/// `p` is the target/reference distribution. Uses the `0·ln 0 = 0`
/// convention. Both arguments must be distributions (entries in `[0,1]`,
/// summing to 1 within 1e-6); any `q_k = 0` opposite a `p_k > 0` is a domain
/// error.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid_input(format!(
            "kl_divergence length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::invalid_input("kl_divergence of empty vectors"));
    }
    for (name, v) in [("p", p), ("q", q)] {
        if v.iter().any(|&x| !(0.0..=1.0 + 1e-9).contains(&x)) {
            return Err(Error::invalid_input(format!("{name} is not a distribution")));
        }
        let sum: f64 = v.iter().sum();
        if fmath::abs(sum - 1.0) > 1e-6 {
            return Err(Error::invalid_input(format!(
                "{name} sums to {sum}, expected 1"
            )));
        }
    }
    let mut acc = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk == 0.0 {
            continue;
        }
        if qk <= 0.0 {
            return Err(Error::domain("KL against a zero bin with positive mass"));
        }
        acc += pk * fmath::ln(pk / qk);
    }
    Ok(acc)
}
