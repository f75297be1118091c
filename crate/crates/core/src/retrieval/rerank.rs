//! Rescoring retrieved candidates with a (usually stronger) model.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{RetrievalModel, TokenSequence, Variant};
use crate::retrieval::types::{run_from_ranking, RunRecord};

/// Rescore `candidates` for one query by the model's final response score
/// and re-sort. Works for any variant; late-interaction and cross-encoder
/// models are the usual rerankers.
pub fn rerank(
    model: &RetrievalModel,
    query_id: &str,
    query: &TokenSequence,
    candidates: &[String],
    passages: &BTreeMap<String, TokenSequence>,
) -> Result<Vec<RunRecord>> {
    if candidates.is_empty() {
        return Err(Error::invalid_input("no candidates to rerank"));
    }
    let mut scored = Vec::with_capacity(candidates.len());
    match model.variant() {
        // Separate-encoding variants: encode the query once up front.
        Variant::De => {
            let q_emb = model.embed_query(query)?;
            for pid in candidates {
                let passage = lookup(passages, pid)?;
                let p_emb = model.embed_passage(passage)?;
                scored.push((pid.clone(), crate::model::score_de(&q_emb, &p_emb)?));
            }
        }
        Variant::Cb => {
            let q_tokens = model.query_token_matrix(query)?;
            for pid in candidates {
                let passage = lookup(passages, pid)?;
                let p_tokens = model.passage_token_matrix(passage)?;
                scored.push((pid.clone(), crate::model::score_cb(&q_tokens, &p_tokens)?));
            }
        }
        Variant::Ce => {
            for pid in candidates {
                let passage = lookup(passages, pid)?;
                scored.push((pid.clone(), model.final_score(query, passage)?));
            }
        }
    }
    Ok(run_from_ranking(query_id, scored))
}

fn lookup<'a>(
    passages: &'a BTreeMap<String, TokenSequence>,
    pid: &str,
) -> Result<&'a TokenSequence> {
    passages
        .get(pid)
        .ok_or_else(|| Error::invalid_input(alloc::format!("unknown candidate id {pid}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::retrieval::mine::build_passage_index;
    use alloc::vec;

    fn model(variant: Variant, seed: u64) -> RetrievalModel {
        let mut cfg = ModelConfig::new(variant, 2);
        cfg.hidden_dim = 4;
        cfg.ff_dim = 8;
        cfg.vocab_size = 32;
        cfg.max_len = 16;
        cfg.seed = seed;
        RetrievalModel::new(cfg).unwrap()
    }

    fn corpus() -> BTreeMap<String, TokenSequence> {
        let mut passages = BTreeMap::new();
        for i in 0..5u32 {
            passages.insert(
                alloc::format!("p{i}"),
                TokenSequence::new(vec![0, 2 + i, 10 + i, 20 + i]).unwrap(),
            );
        }
        passages
    }

    #[test]
    fn single_candidate_gets_rank_one() {
        let m = model(Variant::Ce, 5);
        let passages = corpus();
        let q = TokenSequence::new(vec![0, 3, 4]).unwrap();
        let run = rerank(&m, "q0", &q, &["p2".into()], &passages).unwrap();
        assert_eq!(run.len(), 1);
        assert_eq!(run[0].rank, 1);
        assert_eq!(run[0].passage_id, "p2");
    }

    #[test]
    fn unknown_candidate_is_named_in_the_error() {
        let m = model(Variant::Ce, 5);
        let passages = corpus();
        let q = TokenSequence::new(vec![0, 3, 4]).unwrap();
        let err = rerank(&m, "q0", &q, &["nope".into()], &passages).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("nope"), "{msg}");
    }

    #[test]
    fn reranking_with_the_retriever_preserves_its_ordering() {
        let m = model(Variant::De, 5);
        let passages = corpus();
        let q = TokenSequence::new(vec![0, 3, 4]).unwrap();
        let index = build_passage_index(&m, &passages).unwrap();
        let hits = index
            .search_top_k(&m.embed_query(&q).unwrap(), 5)
            .unwrap();
        let candidate_ids: Vec<String> = hits.iter().map(|(pid, _)| pid.clone()).collect();
        let run = rerank(&m, "q0", &q, &candidate_ids, &passages).unwrap();
        for (record, (pid, score)) in run.iter().zip(&hits) {
            assert_eq!(&record.passage_id, pid);
            assert_eq!(record.score.to_bits(), score.to_bits());
        }
    }

    #[test]
    fn ce_reranking_disagrees_with_de_ordering_on_some_seed() {
        // Different architectures score differently on at least one of a few
        // random initializations.
        let passages = corpus();
        let q = TokenSequence::new(vec![0, 3, 4]).unwrap();
        let candidates: Vec<String> = passages.keys().cloned().collect();
        let mut changed = false;
        for seed in 0..20 {
            let de = model(Variant::De, seed);
            let ce = model(Variant::Ce, seed + 500);
            let de_run = rerank(&de, "q0", &q, &candidates, &passages).unwrap();
            let ce_run = rerank(&ce, "q0", &q, &candidates, &passages).unwrap();
            if de_run
                .iter()
                .zip(&ce_run)
                .any(|(a, b)| a.passage_id != b.passage_id)
            {
                changed = true;
                break;
            }
        }
        assert!(changed, "cross-encoder never reordered in 20 seeds");
    }
}
