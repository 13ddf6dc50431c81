//! Turning raw function names into label sequences.

pub mod convention;
pub mod lexicon;
pub mod pipeline;
pub mod rule;
pub mod tf;
pub mod unigram;
pub mod vote;

pub use convention::split_by_convention;
pub use lexicon::{expand_abbreviations, RuleLexicon};
pub use pipeline::{bundled_corpus, parse_corpus, read_corpus, Pipeline, TokenizationResult};
pub use rule::rule_tokenize;
pub use tf::{tf_tokenize, train_tf_model, TfModel};
pub use unigram::{train_unigram, unigram_tokenize, UnigramModel};
pub use vote::vote;
