//! Export of (source, target) token-id pairs for fine-tuning an external
//! sequence-to-sequence model to generate corpus ngrams.
//!
//! Every source starts with two control ids: `supervised` or `unsupervised`,
//! then `span` or `title` for the expected target. Output is line-delimited
//! JSON: `{"source_ids": [...], "target_ids": [...], "kind": "...", "doc_id": "..."}`.

use std::collections::HashMap;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::vocab::{Reserved, TokenId};

pub const DEFAULT_SAMPLES: usize = 10;
pub const DEFAULT_NGRAM_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    SupervisedSpan,
    SupervisedTitle,
    UnsupervisedSpan,
    UnsupervisedTitle,
}

impl PairKind {
    pub fn controls(self, r: &Reserved) -> [TokenId; 2] {
        match self {
            PairKind::SupervisedSpan => [r.supervised, r.span],
            PairKind::SupervisedTitle => [r.supervised, r.title],
            PairKind::UnsupervisedSpan => [r.unsupervised, r.span],
            PairKind::UnsupervisedTitle => [r.unsupervised, r.title],
        }
    }

    /// Inverse of [`PairKind::controls`].
    pub fn from_controls(controls: [TokenId; 2], r: &Reserved) -> Option<Self> {
        [
            PairKind::SupervisedSpan,
            PairKind::SupervisedTitle,
            PairKind::UnsupervisedSpan,
            PairKind::UnsupervisedTitle,
        ]
        .into_iter()
        .find(|k| k.controls(r) == controls)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    pub kind: PairKind,
    pub doc_id: String,
}

/// A query with one relevant document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisedQuery {
    pub query: Vec<TokenId>,
    pub gold_doc_id: String,
}

fn trigrams(text: &str) -> HashMap<[char; 3], u32> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = HashMap::new();
    for w in chars.windows(3) {
        *out.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    out
}

/// F1 between the character trigram multisets of `a` and `b`.
pub fn char_trigram_f1(a: &str, b: &str) -> f64 {
    let (ta, tb) = (trigrams(a), trigrams(b));
    let (na, nb): (u32, u32) = (ta.values().sum(), tb.values().sum());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let common: u32 = ta
        .iter()
        .map(|(g, &c)| c.min(tb.get(g).copied().unwrap_or(0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / na as f64;
    let r = common as f64 / nb as f64;
    2.0 * p * r / (p + r)
}

/// Start offsets of the candidate windows of `body`; a single window
/// covering the body when it is shorter than `len`.
fn windows(body: &[TokenId], len: usize) -> (usize, usize) {
    if body.len() <= len {
        (1, body.len())
    } else {
        (body.len() - len + 1, len)
    }
}

fn with_controls(kind: PairKind, r: &Reserved, rest: &[TokenId]) -> Vec<TokenId> {
    let mut out = kind.controls(r).to_vec();
    out.extend_from_slice(rest);
    out
}

/// For each query, `n_samples` spans of its gold document drawn with
/// replacement with probability proportional to `exp(F1)` of their
/// character trigrams against the query, followed by one title pair.
pub fn export_training_pairs(
    corpus: &Corpus,
    queries: &[SupervisedQuery],
    n_samples: usize,
    ngram_len: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    if ngram_len == 0 {
        return Err(Error::InvalidArgument(
            "ngram length must be at least 1".into(),
        ));
    }
    let vocab = corpus.vocabulary();
    let reserved = vocab.reserved();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(queries.len() * (n_samples + 1));
    for q in queries {
        let doc = corpus
            .get(&q.gold_doc_id)
            .ok_or_else(|| Error::UnknownDocId(q.gold_doc_id.clone()))?;
        let query_text = vocab.detokenize(&q.query);
        let (count, len) = windows(&doc.body, ngram_len);
        let weights: Vec<f64> = (0..count)
            .map(|i| char_trigram_f1(&vocab.detokenize(&doc.body[i..i + len]), &query_text).exp())
            .collect();
        let dist = WeightedIndex::new(&weights).expect("weights are positive");
        for _ in 0..n_samples {
            let i = dist.sample(&mut rng);
            out.push(TrainingPair {
                source_ids: with_controls(PairKind::SupervisedSpan, reserved, &q.query),
                target_ids: doc.body[i..i + len].to_vec(),
                kind: PairKind::SupervisedSpan,
                doc_id: doc.doc_id.clone(),
            });
        }
        out.push(TrainingPair {
            source_ids: with_controls(PairKind::SupervisedTitle, reserved, &q.query),
            target_ids: doc.title.clone(),
            kind: PairKind::SupervisedTitle,
            doc_id: doc.doc_id.clone(),
        });
    }
    Ok(out)
}

fn uniform_span<'a>(doc: &'a Document, len: usize, rng: &mut ChaCha8Rng) -> &'a [TokenId] {
    let (count, len) = windows(&doc.body, len);
    let i = rng.gen_range(0..count);
    &doc.body[i..i + len]
}

/// For each document, `pairs_per_doc` pairs whose source is a uniform span
/// and whose target is, with equal probability, another uniform span or the
/// title.
pub fn export_unsupervised_pairs(
    corpus: &Corpus,
    pairs_per_doc: usize,
    ngram_len: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    if ngram_len == 0 {
        return Err(Error::InvalidArgument(
            "ngram length must be at least 1".into(),
        ));
    }
    let reserved = corpus.vocabulary().reserved();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(corpus.len() * pairs_per_doc);
    for doc in corpus.documents() {
        for _ in 0..pairs_per_doc {
            let source = uniform_span(doc, ngram_len, &mut rng);
            let (kind, target) = if rng.gen_bool(0.5) {
                (
                    PairKind::UnsupervisedSpan,
                    uniform_span(doc, ngram_len, &mut rng).to_vec(),
                )
            } else {
                (PairKind::UnsupervisedTitle, doc.title.clone())
            };
            out.push(TrainingPair {
                source_ids: with_controls(kind, reserved, source),
                target_ids: target,
                kind,
                doc_id: doc.doc_id.clone(),
            });
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(pairs: &[TrainingPair], out: &mut W) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut *out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
