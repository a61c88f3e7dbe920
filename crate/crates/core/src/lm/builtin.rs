//! Additively smoothed ngram model over the corpus token streams, with a
//! query-dependent logit boost. It stands in for a fine-tuned seq2seq model
//! so the whole pipeline runs without external dependencies.

use std::collections::HashMap;
use std::sync::Arc;

use super::{LanguageModel, LogProbVector};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fm_index::{DocIndex, FmIndex};
use crate::vocab::{TokenId, Vocabulary};

pub const DEFAULT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    next: Vec<(TokenId, u32)>,
}

#[derive(Debug, Clone)]
pub struct BuiltinLm {
    order: usize,
    query_boost: f64,
    smoothing: f64,
    reserved: Vec<bool>,
    unigram: ContextCounts,
    /// Counts for every observed context of length `1..order`.
    contexts: HashMap<Vec<TokenId>, ContextCounts>,
}

#[derive(Debug, Clone)]
pub struct BuiltinSession {
    /// Sorted, deduplicated content ids of the query.
    boosted: Arc<[TokenId]>,
    history: Vec<TokenId>,
}

impl BuiltinSession {
    pub fn history(&self) -> &[TokenId] {
        &self.history
    }
}

impl BuiltinLm {
    /// Fits on every title and body of `corpus` as separate streams.
    pub fn fit(corpus: &Corpus, order: usize, query_boost: f64) -> Result<Self> {
        let streams = corpus
            .documents()
            .iter()
            .flat_map(|d| [d.title.as_slice(), d.body.as_slice()]);
        Self::fit_streams(streams, corpus.vocabulary(), order, query_boost)
    }

    /// Fits on the titles and bodies recovered from the index itself.
    pub fn fit_index(index: &FmIndex, order: usize, query_boost: f64) -> Result<Self> {
        let docs: Vec<(Vec<TokenId>, usize, usize)> = (0..index.num_docs())
            .map(|d| {
                let doc = DocIndex(d as u32);
                (
                    index.extract_document(doc),
                    index.title_len(doc),
                    index.body_start(doc),
                )
            })
            .collect();
        let streams = docs.iter().flat_map(|(tokens, title_len, body_start)| {
            [&tokens[..*title_len], &tokens[*body_start..]]
        });
        Self::fit_streams(streams, index.vocabulary(), order, query_boost)
    }

    pub fn fit_streams<'a>(
        streams: impl IntoIterator<Item = &'a [TokenId]>,
        vocab: &Vocabulary,
        order: usize,
        query_boost: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "ngram order must be at least 1".into(),
            ));
        }
        if !query_boost.is_finite() {
            return Err(Error::InvalidArgument("query boost must be finite".into()));
        }
        let v = vocab.len();
        let mut unigram = vec![0u64; v];
        let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
        for stream in streams {
            for (i, &t) in stream.iter().enumerate() {
                if t as usize >= v {
                    return Err(Error::TokenOutOfAlphabet {
                        token: t,
                        alphabet: v,
                    });
                }
                unigram[t as usize] += 1;
                for len in 1..order.min(i + 1) {
                    let ctx = stream[i - len..i].to_vec();
                    *raw.entry(ctx).or_default().entry(t).or_default() += 1;
                }
            }
        }
        let contexts = raw
            .into_iter()
            .map(|(ctx, next)| {
                let mut next: Vec<(TokenId, u32)> = next.into_iter().collect();
                next.sort_unstable();
                let total = next.iter().map(|(_, c)| *c as u64).sum();
                (ctx, ContextCounts { total, next })
            })
            .collect();
        let next: Vec<(TokenId, u32)> = unigram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(t, &c)| (t as TokenId, c as u32))
            .collect();
        Ok(BuiltinLm {
            order,
            query_boost,
            smoothing: DEFAULT_SMOOTHING,
            reserved: (0..v as TokenId).map(|t| vocab.is_reserved(t)).collect(),
            unigram: ContextCounts {
                total: unigram.iter().sum(),
                next,
            },
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn query_boost(&self) -> f64 {
        self.query_boost
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        assert!(smoothing > 0.0, "smoothing must be positive");
        self.smoothing = smoothing;
        self
    }

    /// Counts for the longest observed suffix of `history`.
    fn counts_for(&self, history: &[TokenId]) -> &ContextCounts {
        let max = (self.order - 1).min(history.len());
        for len in (1..=max).rev() {
            if let Some(c) = self.contexts.get(&history[history.len() - len..]) {
                return c;
            }
        }
        &self.unigram
    }

    fn check_token(&self, token: TokenId) -> Result<()> {
        match self.reserved.get(token as usize) {
            None => Err(Error::TokenOutOfAlphabet {
                token,
                alphabet: self.reserved.len(),
            }),
            Some(true) => Err(Error::ReservedToken(token)),
            Some(false) => Ok(()),
        }
    }
}

impl LanguageModel for BuiltinLm {
    type Session = BuiltinSession;

    fn vocab_size(&self) -> usize {
        self.reserved.len()
    }

    fn start(&self, query: &[TokenId]) -> Result<BuiltinSession> {
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let mut boosted: Vec<TokenId> = query
            .iter()
            .copied()
            .filter(|&t| self.reserved.get(t as usize) == Some(&false))
            .collect();
        boosted.sort_unstable();
        boosted.dedup();
        Ok(BuiltinSession {
            boosted: boosted.into(),
            history: Vec::new(),
        })
    }

    fn next_logprobs(&self, session: &BuiltinSession) -> Result<LogProbVector> {
        let v = self.vocab_size();
        let counts = self.counts_for(&session.history);
        let denom = counts.total as f64 + self.smoothing * v as f64;
        let prob = |c: u32| (c as f64 + self.smoothing) / denom;

        // boosting multiplies the mass of query tokens by e^b; the normalizer
        // is 1 + sum over boosted tokens of p_t (e^b - 1)
        let factor = self.query_boost.exp() - 1.0;
        let mut z = 1.0;
        for &t in session.boosted.iter() {
            let c = match counts.next.binary_search_by_key(&t, |p| p.0) {
                Ok(i) => counts.next[i].1,
                Err(_) => 0,
            };
            z += prob(c) * factor;
        }
        let log_z = z.ln();

        let mut out = vec![prob(0).ln() - log_z; v];
        for &(t, c) in &counts.next {
            out[t as usize] = prob(c).ln() - log_z;
        }
        for &t in session.boosted.iter() {
            out[t as usize] += self.query_boost;
        }
        Ok(LogProbVector::new(out))
    }

    fn advance(&self, session: &BuiltinSession, token: TokenId) -> Result<BuiltinSession> {
        self.check_token(token)?;
        let mut history = session.history.clone();
        history.push(token);
        Ok(BuiltinSession {
            boosted: session.boosted.clone(),
            history,
        })
    }
}
