//! Value-level similarity functions.
//!
//! These mirror the tape operations term-for-term (same accumulation order,
//! same first-wins max), so a score computed here is bit-identical to the
//! same score extracted from a recorded graph.

use alloc::format;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Dual-encoder similarity: inner product of the two CLS vectors.
pub fn score_de(q_cls: &[f64], p_cls: &[f64]) -> Result<f64> {
    if q_cls.len() != p_cls.len() {
        return Err(Error::invalid_input(format!(
            "dimension mismatch: {} vs {}",
            q_cls.len(),
            p_cls.len()
        )));
    }
    let mut acc = 0.0;
    for (&q, &p) in q_cls.iter().zip(p_cls) {
        acc += q * p;
    }
    Ok(acc)
}

/// Late-interaction similarity: sum over query tokens of the maximum inner
/// product against any passage token.
pub fn score_cb(q_tokens: &Tensor, p_tokens: &Tensor) -> Result<f64> {
    if q_tokens.shape().len() != 2 || p_tokens.shape().len() != 2 {
        return Err(Error::invalid_input("token matrices must be rank 2"));
    }
    if q_tokens.rows() == 0 || p_tokens.rows() == 0 {
        return Err(Error::invalid_input("empty token sequence"));
    }
    if q_tokens.cols() != p_tokens.cols() {
        return Err(Error::invalid_input(format!(
            "dimension mismatch: {} vs {}",
            q_tokens.cols(),
            p_tokens.cols()
        )));
    }
    let d = q_tokens.cols();
    let mut total = 0.0;
    for x in 0..q_tokens.rows() {
        let qrow = q_tokens.row(x);
        let mut best = f64::NEG_INFINITY;
        let mut first = true;
        for y in 0..p_tokens.rows() {
            let prow = p_tokens.row(y);
            let mut acc = 0.0;
            for j in 0..d {
                acc += qrow[j] * prow[j];
            }
            if first || acc > best {
                best = acc;
                first = false;
            }
        }
        total += best;
    }
    Ok(total)
}

/// Cross-encoder similarity: projection of the joint CLS vector.
pub fn score_ce(joint_cls: &[f64], w: &[f64]) -> Result<f64> {
    if joint_cls.len() != w.len() {
        return Err(Error::invalid_input(format!(
            "dimension mismatch: {} vs {}",
            joint_cls.len(),
            w.len()
        )));
    }
    let mut acc = 0.0;
    for (&c, &wv) in joint_cls.iter().zip(w) {
        acc += wv * c;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn de_hand_values() {
        assert_eq!(score_de(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(score_de(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(score_de(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(score_de(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cb_degenerates_to_de_for_single_tokens() {
        let q = Tensor::matrix(1, 2, vec![1.0, 2.0]);
        let p = Tensor::matrix(1, 2, vec![3.0, 4.0]);
        assert_eq!(
            score_cb(&q, &p).unwrap(),
            score_de(&[1.0, 2.0], &[3.0, 4.0]).unwrap()
        );
    }

    #[test]
    fn cb_hand_max_sum() {
        let q = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let p = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 3.0]);
        assert_eq!(score_cb(&q, &p).unwrap(), 5.0);
    }

    #[test]
    fn cb_duplicate_passage_token_is_idempotent() {
        let q = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.5, 0.5]);
        let p = Tensor::matrix(2, 2, vec![2.0, 1.0, 0.0, 3.0]);
        let dup = Tensor::matrix(3, 2, vec![2.0, 1.0, 0.0, 3.0, 0.0, 3.0]);
        assert_eq!(score_cb(&q, &p).unwrap(), score_cb(&q, &dup).unwrap());
    }

    #[test]
    fn ce_hand_values() {
        assert_eq!(score_ce(&[0.7, -2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(score_ce(&[0.4, 9.0], &[1.0, 0.0]).unwrap(), 0.4);
        assert!(score_ce(&[1.0], &[1.0, 2.0]).is_err());
    }
}
