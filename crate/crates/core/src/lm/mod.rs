//! Language-model contract consumed by decoding.
//!
//! A backend exposes three operations: [`LanguageModel::start`] conditions a
//! session on a query, [`LanguageModel::next_logprobs`] returns the
//! distribution of the next token, and [`LanguageModel::advance`] extends the
//! session history by one token. Sessions are values: advancing never
//! mutates the parent, which is what beam search needs.

mod bridge;
mod builtin;

#[doc(hidden)]
pub use bridge::stub;
pub use bridge::{
    BridgeLm, BridgeLogprobs, BridgeRequest, BridgeResponse, BridgeSession, Handshake,
    SCHEMA_VERSION,
};
pub use builtin::{BuiltinLm, BuiltinSession, DEFAULT_SMOOTHING};

use crate::error::Result;
use crate::vocab::TokenId;

/// Log-probabilities indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbVector(Vec<f64>);

impl LogProbVector {
    pub fn new(values: Vec<f64>) -> Self {
        LogProbVector(values)
    }

    /// Normalizes arbitrary logits with a log-sum-exp.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return LogProbVector(logits.to_vec());
        }
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let norm = max + sum.ln();
        LogProbVector(logits.iter().map(|l| l - norm).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Log-probability of `token`; `-inf` outside the vector.
    pub fn get(&self, token: TokenId) -> f64 {
        self.0
            .get(token as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn exp_sum(&self) -> f64 {
        self.0.iter().map(|l| l.exp()).sum()
    }

    pub fn argmax(&self) -> Option<TokenId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_nan())
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as TokenId)
    }
}

pub trait LanguageModel: Send + Sync {
    type Session: Clone + Send + Sync;

    /// Size of the distributions returned by [`LanguageModel::next_logprobs`].
    fn vocab_size(&self) -> usize;

    fn start(&self, query: &[TokenId]) -> Result<Self::Session>;

    fn next_logprobs(&self, session: &Self::Session) -> Result<LogProbVector>;

    fn advance(&self, session: &Self::Session, token: TokenId) -> Result<Self::Session>;
}

/// `log P(tokens | query)` by the chain rule.
pub fn sequence_logprob<L: LanguageModel>(
    lm: &L,
    query: &[TokenId],
    tokens: &[TokenId],
) -> Result<f64> {
    let mut session = lm.start(query)?;
    let mut total = 0.0;
    for &t in tokens {
        total += lm.next_logprobs(&session)?.get(t);
        session = lm.advance(&session, t)?;
    }
    Ok(total)
}

/// Either backend, chosen at run time.
pub enum AnyLm {
    Builtin(BuiltinLm),
    Bridge(BridgeLm),
}

#[derive(Clone)]
pub enum AnySession {
    Builtin(BuiltinSession),
    Bridge(BridgeSession),
}

impl LanguageModel for AnyLm {
    type Session = AnySession;

    fn vocab_size(&self) -> usize {
        match self {
            AnyLm::Builtin(lm) => lm.vocab_size(),
            AnyLm::Bridge(lm) => lm.vocab_size(),
        }
    }

    fn start(&self, query: &[TokenId]) -> Result<AnySession> {
        Ok(match self {
            AnyLm::Builtin(lm) => AnySession::Builtin(lm.start(query)?),
            AnyLm::Bridge(lm) => AnySession::Bridge(lm.start(query)?),
        })
    }

    fn next_logprobs(&self, session: &AnySession) -> Result<LogProbVector> {
        match (self, session) {
            (AnyLm::Builtin(lm), AnySession::Builtin(s)) => lm.next_logprobs(s),
            (AnyLm::Bridge(lm), AnySession::Bridge(s)) => lm.next_logprobs(s),
            _ => unreachable!("session from a different backend"),
        }
    }

    fn advance(&self, session: &AnySession, token: TokenId) -> Result<AnySession> {
        Ok(match (self, session) {
            (AnyLm::Builtin(lm), AnySession::Builtin(s)) => {
                AnySession::Builtin(lm.advance(s, token)?)
            }
            (AnyLm::Bridge(lm), AnySession::Bridge(s)) => AnySession::Bridge(lm.advance(s, token)?),
            _ => unreachable!("session from a different backend"),
        })
    }
}
