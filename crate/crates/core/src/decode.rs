//! Beam search over a language model, restricted to token sequences that
//! occur in the index.
//!
//! Two groups of beams run side by side. Span beams start from the full row
//! range and may match anywhere in a title or body. Title beams start from
//! the rows beginning with the document terminator, so every sequence they
//! produce is a prefix of some document's title. Separator and terminator ids
//! never extend a beam, which keeps every hypothesis inside one title or one
//! body.
//!
//! Every candidate that is ever selected into a beam is recorded in a trace;
//! the output is the deduplicated trace, so partial sequences are scored
//! along with the final beams.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fm_index::{FmIndex, RowRange};
use crate::lm::{LanguageModel, LogProbVector};
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam: usize,
    pub steps: usize,
    /// Mask tokens that do not extend an attested sequence.
    pub constrained: bool,
    /// Fraction of the beam reserved for title prefixes.
    pub title_share: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 15,
            steps: 10,
            constrained: true,
            title_share: 1.0 / 3.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::InvalidArgument("beam must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.title_share) {
            return Err(Error::InvalidArgument(format!(
                "title share {} is outside [0, 1]",
                self.title_share
            )));
        }
        Ok(())
    }

    /// Beam slots given to title decoding. Titles never take the whole beam
    /// unless asked to, and are off in unconstrained mode.
    pub fn title_width(&self) -> usize {
        if !self.constrained || self.title_share <= 0.0 {
            return 0;
        }
        let w = (self.beam as f64 * self.title_share).round() as usize;
        if self.title_share < 1.0 {
            w.min(self.beam - 1)
        } else {
            self.beam
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisKind {
    Span,
    Title,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// `log P(tokens | query)`.
    pub logprob: f64,
    /// Rows prefixed by `tokens`; empty only for unattested sequences, which
    /// never leave the decoder.
    pub range: RowRange,
    pub kind: HypothesisKind,
    /// The sequence ended a beam path: it reached the step limit or had no
    /// admissible continuation.
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub hypotheses: Vec<Hypothesis>,
    /// Unmasked next-token distribution for the empty history.
    pub first_step: LogProbVector,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn finished(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter().filter(|h| h.finished)
    }
}

struct Beam<S> {
    tokens: Vec<TokenId>,
    logprob: f64,
    /// Rows matching the beam's pattern (with the leading terminator for
    /// title beams).
    range: RowRange,
    session: S,
}

struct Expansion {
    parent: usize,
    token: TokenId,
    logprob: f64,
    range: RowRange,
}

/// Decodes `query` and returns every attested sequence that was selected at
/// some step.
pub fn constrained_beam_search<L: LanguageModel>(
    query: &[TokenId],
    ix: &FmIndex,
    lm: &L,
    config: &DecodeConfig,
) -> Result<CandidateSet> {
    decode_with_trace(query, ix, lm, config).map(|(set, _)| set)
}

/// Like [`constrained_beam_search`], also returning the raw trace of
/// selected candidates in selection order.
pub fn decode_with_trace<L: LanguageModel>(
    query: &[TokenId],
    ix: &FmIndex,
    lm: &L,
    config: &DecodeConfig,
) -> Result<(CandidateSet, Vec<Hypothesis>)> {
    config.validate()?;
    if lm.vocab_size() != ix.alphabet_size() {
        return Err(Error::InvalidArgument(format!(
            "language model vocabulary ({}) differs from the index alphabet ({})",
            lm.vocab_size(),
            ix.alphabet_size()
        )));
    }
    let root = lm.start(query)?;
    let first_step = lm.next_logprobs(&root)?;

    let title_width = config.title_width();
    let span_width = config.beam - title_width;
    let mut trace = Vec::new();
    let groups = [
        (HypothesisKind::Span, span_width, ix.full_range()),
        (
            HypothesisKind::Title,
            title_width,
            ix.document_start_range(),
        ),
    ];
    for (kind, width, range) in groups {
        if width == 0 {
            continue;
        }
        let beam = Beam {
            tokens: Vec::new(),
            logprob: 0.0,
            range,
            session: root.clone(),
        };
        run_group(ix, lm, config, kind, width, beam, &first_step, &mut trace)?;
    }

    if !config.constrained {
        trace.retain(|h| !h.range.is_empty());
    }
    for h in trace.iter_mut() {
        if h.kind == HypothesisKind::Title {
            h.range = ix.range_of(&h.tokens);
        }
    }
    let hypotheses = harvest_partials(&trace);
    if hypotheses.is_empty() {
        log::warn!(
            "decoding produced no attested sequence for a query of {} tokens",
            query.len()
        );
    }
    Ok((
        CandidateSet {
            hypotheses,
            first_step,
        },
        trace,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_group<L: LanguageModel>(
    ix: &FmIndex,
    lm: &L,
    config: &DecodeConfig,
    kind: HypothesisKind,
    width: usize,
    root: Beam<L::Session>,
    first_step: &LogProbVector,
    trace: &mut Vec<Hypothesis>,
) -> Result<()> {
    let vocab = ix.vocabulary();
    // title beams carry the leading terminator in their pattern
    let offset = usize::from(kind == HypothesisKind::Title);
    let mut beams = vec![root];
    for step in 0..config.steps {
        let mut expansions = Vec::new();
        for (b, beam) in beams.iter().enumerate() {
            let owned;
            let lp = if step == 0 {
                first_step
            } else {
                owned = lm.next_logprobs(&beam.session)?;
                &owned
            };
            let depth = beam.tokens.len() + offset;
            let before = expansions.len();
            if config.constrained {
                for (token, range) in ix.successor_ranges(beam.range, depth) {
                    let l = lp.get(token);
                    if vocab.is_reserved(token) || !l.is_finite() {
                        continue;
                    }
                    expansions.push(Expansion {
                        parent: b,
                        token,
                        logprob: beam.logprob + l,
                        range,
                    });
                }
            } else {
                for (token, l) in top_tokens(lp, width, |t| vocab.is_reserved(t)) {
                    let range = if beam.range.is_empty() {
                        beam.range
                    } else {
                        ix.extend_right(beam.range, depth, token)
                    };
                    expansions.push(Expansion {
                        parent: b,
                        token,
                        logprob: beam.logprob + l,
                        range,
                    });
                }
            }
            if expansions.len() == before && !beam.tokens.is_empty() {
                mark_finished(trace, &beam.tokens, kind);
            }
        }
        expansions.sort_by(|a, b| {
            b.logprob
                .total_cmp(&a.logprob)
                .then(a.parent.cmp(&b.parent))
                .then(a.token.cmp(&b.token))
        });
        expansions.truncate(width);
        if expansions.is_empty() {
            return Ok(());
        }

        let last = step + 1 == config.steps;
        let mut next = Vec::with_capacity(expansions.len());
        for e in expansions {
            let parent = &beams[e.parent];
            let mut tokens = parent.tokens.clone();
            tokens.push(e.token);
            trace.push(Hypothesis {
                tokens: tokens.clone(),
                logprob: e.logprob,
                range: e.range,
                kind,
                finished: last,
            });
            if !last {
                next.push(Beam {
                    tokens,
                    logprob: e.logprob,
                    range: e.range,
                    session: lm.advance(&parent.session, e.token)?,
                });
            }
        }
        beams = next;
    }
    Ok(())
}

/// Flags the trace entry of a beam that could not be extended.
fn mark_finished(trace: &mut [Hypothesis], tokens: &[TokenId], kind: HypothesisKind) {
    if let Some(h) = trace
        .iter_mut()
        .rev()
        .find(|h| h.kind == kind && h.tokens == tokens)
    {
        h.finished = true;
    }
}

/// The `k` most probable non-reserved tokens, best first, ties by id.
fn top_tokens(
    lp: &LogProbVector,
    k: usize,
    reserved: impl Fn(TokenId) -> bool,
) -> Vec<(TokenId, f64)> {
    let mut all: Vec<(TokenId, f64)> = lp
        .as_slice()
        .iter()
        .enumerate()
        .map(|(t, &l)| (t as TokenId, l))
        .filter(|&(t, l)| l.is_finite() && !reserved(t))
        .collect();
    let by_score = |a: &(TokenId, f64), b: &(TokenId, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if all.len() > k {
        all.select_nth_unstable_by(k, by_score);
        all.truncate(k);
    }
    all.sort_by(by_score);
    all
}

/// Deduplicates a decoding trace by token sequence, keeping the best
/// log-probability. A sequence is finished if any of its copies is.
pub fn harvest_partials(trace: &[Hypothesis]) -> Vec<Hypothesis> {
    let mut out: Vec<Hypothesis> = Vec::new();
    let mut seen: HashMap<&[TokenId], usize> = HashMap::new();
    for h in trace {
        match seen.get(h.tokens.as_slice()) {
            Some(&i) => {
                let kept = &mut out[i];
                let finished = kept.finished || h.finished;
                if h.logprob > kept.logprob {
                    *kept = h.clone();
                }
                kept.finished = finished;
            }
            None => {
                seen.insert(&h.tokens, out.len());
                out.push(h.clone());
            }
        }
    }
    out
}
