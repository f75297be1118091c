//! Hard-negative mining with an exact dual-encoder retriever.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::{RetrievalModel, TokenSequence};
use crate::retrieval::index::FlatIndex;
use crate::retrieval::types::Qrels;

/// Build a flat index over every passage with the model's passage encoder.
pub fn build_passage_index(
    model: &RetrievalModel,
    passages: &BTreeMap<String, TokenSequence>,
) -> Result<FlatIndex> {
    let mut index = FlatIndex::new(model.config().hidden_dim);
    for (pid, seq) in passages {
        index.add(pid.clone(), &model.embed_passage(seq)?)?;
    }
    Ok(index)
}

/// For each query, the `top_n` highest-ranked passages with relevance grade
/// 0. Relevant passages are skipped, not counted against `top_n`; a query
/// whose whole ranking is relevant yields a shorter list with a warning.
pub fn mine_hard_negatives(
    model: &RetrievalModel,
    passages: &BTreeMap<String, TokenSequence>,
    queries: &BTreeMap<String, TokenSequence>,
    qrels: &Qrels,
    top_n: usize,
) -> Result<BTreeMap<String, Vec<String>>> {
    let index = build_passage_index(model, passages)?;
    let mut mined = BTreeMap::new();
    for (qid, query) in queries {
        let query_emb = model.embed_query(query)?;
        // Enough depth to still fill top_n after skipping relevant hits.
        let depth = top_n + qrels.relevant_count(qid);
        let hits = index.search_top_k(&query_emb, depth.max(1))?;
        let negatives: Vec<String> = hits
            .into_iter()
            .filter(|(pid, _)| !qrels.is_relevant(qid, pid))
            .take(top_n)
            .map(|(pid, _)| pid)
            .collect();
        if negatives.len() < top_n {
            log::warn!(
                "query {qid}: only {} of {top_n} hard negatives available",
                negatives.len()
            );
        }
        mined.insert(qid.clone(), negatives);
    }
    Ok(mined)
}
