//! Relevance judgments and ranked run records.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relevance grades keyed by query id, then passage id.
///
/// Unjudged pairs count as grade 0 (non-relevant).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, passage_id: impl Into<String>, grade: u32) {
        self.grades
            .entry(query_id.into())
            .or_default()
            .insert(passage_id.into(), grade);
    }

    pub fn grade(&self, query_id: &str, passage_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(passage_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_relevant(&self, query_id: &str, passage_id: &str) -> bool {
        self.grade(query_id, passage_id) > 0
    }

    /// Passage ids judged relevant (grade > 0) for a query.
    pub fn relevant_passages(&self, query_id: &str) -> Vec<&str> {
        self.grades
            .get(query_id)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g > 0)
                    .map(|(pid, _)| pid.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.relevant_passages(query_id).len()
    }

    /// Graded judgments of a query, if any.
    pub fn judgments(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    /// Query ids with at least one relevant passage, in sorted order.
    pub fn queries_with_relevant(&self) -> Vec<&str> {
        self.grades
            .iter()
            .filter(|(_, m)| m.values().any(|&g| g > 0))
            .map(|(qid, _)| qid.as_str())
            .collect()
    }

    /// All (query, passage, grade) rows in sorted order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.grades.iter().flat_map(|(qid, m)| {
            m.iter().map(move |(pid, &g)| (qid.as_str(), pid.as_str(), g))
        })
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

/// One line of a ranked run: a scored passage at a 1-based rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub query_id: String,
    pub passage_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Turn scored candidates into run records: sort by descending score with
/// ascending passage id breaking ties, then assign ranks 1..
pub fn run_from_ranking(query_id: &str, mut scored: Vec<(String, f64)>) -> Vec<RunRecord> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores must be comparable")
            .then_with(|| a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (passage_id, score))| RunRecord {
            query_id: String::from(query_id),
            passage_id,
            rank: i + 1,
            score,
        })
        .collect()
}

/// Group a flat run by query, each group ordered by rank.
///
/// Rejects runs whose ranks are not exactly `1..=k` per query or whose
/// scores increase with rank.
pub(crate) fn group_run<'a>(run: &'a [RunRecord]) -> Result<BTreeMap<&'a str, Vec<&'a RunRecord>>> {
    let mut by_query: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for record in run {
        by_query.entry(&record.query_id).or_default().push(record);
    }
    for (qid, records) in by_query.iter_mut() {
        records.sort_by_key(|r| r.rank);
        for (i, r) in records.iter().enumerate() {
            if r.rank != i + 1 {
                return Err(Error::invalid_input(alloc::format!(
                    "query {qid}: ranks are not contiguous from 1"
                )));
            }
            if i > 0 && r.score > records[i - 1].score {
                return Err(Error::invalid_input(alloc::format!(
                    "query {qid}: scores increase at rank {}",
                    r.rank
                )));
            }
        }
    }
    Ok(by_query)
}
