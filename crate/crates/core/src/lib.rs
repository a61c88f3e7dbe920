//! Generative retrieval over a compressed full-text self-index.
//!
//! A corpus is tokenized, encoded as `title <sep> body <eos>` per document and
//! indexed in an [`FmIndex`]. Retrieval decodes corpus-attested ngrams from a
//! language model under index constraints ([`decode`]), weighs them against
//! their index frequency and aggregates the evidence per document ([`score`]).
//! [`engine`] wires the pipeline together and [`eval`] computes the usual
//! run-file metrics.

pub mod corpus;
pub mod decode;
pub mod engine;
pub mod error;
pub mod eval;
pub mod fm_index;
pub mod lm;
pub mod score;
pub mod tokenizer;
pub mod toy;
pub mod training;
pub mod vocab;

pub use corpus::{Corpus, Document};
pub use decode::{CandidateSet, DecodeConfig, Hypothesis, HypothesisKind};
pub use engine::{Engine, Mode, RetrievalConfig};
pub use error::{Error, Result};
pub use fm_index::{DocIndex, FmIndex, Occurrence, RowRange};
pub use lm::{LanguageModel, LogProbVector};
pub use score::{DocScore, ScoredNgram};
pub use tokenizer::{Tokenizer, WordTokenizer};
pub use vocab::{TokenId, Vocabulary};
