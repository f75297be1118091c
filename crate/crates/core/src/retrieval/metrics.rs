//! Ranked-retrieval quality metrics.
//!
//! All four metrics share the same evaluation protocol: queries are those
//! with at least one relevant passage in the judgments (others are excluded
//! from the mean), the run must cover every evaluated query, and unjudged
//! passages count as non-relevant.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::retrieval::types::{group_run, Qrels, RunRecord};

fn mean_over_evaluated(
    run: &[RunRecord],
    qrels: &Qrels,
    per_query: impl Fn(&[&RunRecord], &str) -> f64,
) -> Result<f64> {
    let evaluated = qrels.queries_with_relevant();
    if evaluated.is_empty() {
        return Err(Error::invalid_input(
            "no query has a relevant passage; nothing to evaluate",
        ));
    }
    let grouped = group_run(run)?;
    let mut total = 0.0;
    for qid in &evaluated {
        let records = grouped.get(qid).ok_or_else(|| {
            Error::invalid_input(alloc::format!("run is missing evaluated query {qid}"))
        })?;
        total += per_query(records, qid);
    }
    Ok(total / evaluated.len() as f64)
}

/// Mean reciprocal rank of the first relevant passage within the top `k`.
pub fn mrr_at_k(run: &[RunRecord], qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    mean_over_evaluated(run, qrels, |records, qid| {
        records
            .iter()
            .take(k)
            .find(|r| qrels.is_relevant(qid, &r.passage_id))
            .map(|r| 1.0 / r.rank as f64)
            .unwrap_or(0.0)
    })
}

/// Mean fraction of each query's relevant passages found in the top `k`.
pub fn recall_at_k(run: &[RunRecord], qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    mean_over_evaluated(run, qrels, |records, qid| {
        let found = records
            .iter()
            .take(k)
            .filter(|r| qrels.is_relevant(qid, &r.passage_id))
            .count();
        found as f64 / qrels.relevant_count(qid) as f64
    })
}

/// Mean average precision truncated at `k`, normalized by the query's total
/// relevant count.
pub fn map_at_k(run: &[RunRecord], qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    mean_over_evaluated(run, qrels, |records, qid| {
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (i, r) in records.iter().take(k).enumerate() {
            if qrels.is_relevant(qid, &r.passage_id) {
                hits += 1;
                precision_sum += hits as f64 / (i + 1) as f64;
            }
        }
        precision_sum / qrels.relevant_count(qid) as f64
    })
}

/// Normalized discounted cumulative gain at `k`, with gain `2^grade - 1` and
/// a `log2(rank + 1)` discount.
pub fn ndcg_at_k(run: &[RunRecord], qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    mean_over_evaluated(run, qrels, |records, qid| {
        let dcg: f64 = records
            .iter()
            .take(k)
            .map(|r| gain(qrels.grade(qid, &r.passage_id)) / discount(r.rank))
            .sum();
        let mut grades: Vec<u32> = qrels
            .judgments(qid)
            .map(|m| m.values().copied().filter(|&g| g > 0).collect())
            .unwrap_or_default();
        grades.sort_unstable_by(|a, b| b.cmp(a));
        let ideal: f64 = grades
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain(g) / discount(i + 1))
            .sum();
        if ideal > 0.0 {
            dcg / ideal
        } else {
            0.0
        }
    })
}

fn gain(grade: u32) -> f64 {
    fmath::powf(2.0, grade as f64) - 1.0
}

fn discount(rank: usize) -> f64 {
    fmath::log2((rank + 1) as f64)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid_parameter("metric depth k must be positive"));
    }
    Ok(())
}
