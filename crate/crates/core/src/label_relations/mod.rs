//! Stemming, label embeddings and relation-based canonicalization.

pub mod embed;
pub mod relations;
pub mod stem;
pub mod sw;

pub use embed::{train_skipgram, train_subword_embeddings, EmbedConfig, EmbeddingKind, EmbeddingTable};
pub use relations::{
    build_relation_groups, candidate_set, classify_relation, is_abbreviation, ExternalRelations, Relation,
    RelationLexicon, ReviewList,
};
pub use stem::stem;
pub use sw::{sw_relative_similarity, sw_score};
