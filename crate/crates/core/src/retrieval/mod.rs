//! Exact retrieval, hard-negative mining, reranking, and ranked-retrieval
//! metrics.

mod index;
mod metrics;
mod mine;
mod rerank;
mod types;

pub use index::FlatIndex;
pub use metrics::{map_at_k, mrr_at_k, ndcg_at_k, recall_at_k};
pub use mine::mine_hard_negatives;
pub use rerank::rerank;
pub use types::{run_from_ranking, Qrels, RunRecord};
