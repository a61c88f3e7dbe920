//! Document ranking from a decoded candidate set.
//!
//! Three formulations are available:
//!
//! * [`rank_lm`]: a document scores the best conditional log-probability
//!   among the finished hypotheses occurring in it;
//! * [`rank_lm_fm`]: every candidate (including harvested partials and all
//!   attested unigrams) gets a weight that contrasts its conditional
//!   probability with its index frequency, and a document scores its best
//!   weight;
//! * [`rank_intersective`]: a document sums the weights of a non-overlapping
//!   subset of its ngrams, discounting tokens already covered by better ones.
//!
//! Ties are broken by document id; ngrams with zero weight carry no evidence
//! and are never located.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::decode::CandidateSet;
use crate::error::{Error, Result};
use crate::fm_index::{DocIndex, FmIndex, RowRange};
use crate::lm::LogProbVector;
use crate::vocab::TokenId;

/// Probabilities are kept this far from 0 and 1 before taking log-odds.
pub const PROB_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub alpha: f64,
    pub beta: f64,
    /// Count only occurrences outside titles.
    pub ignore_title_matches: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            alpha: 2.0,
            beta: 0.8,
            ignore_title_matches: false,
        }
    }
}

impl ScoreOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredNgram {
    pub tokens: Vec<TokenId>,
    pub logprob_cond: f64,
    pub freq: u64,
    pub prob_uncond: f64,
    pub weight: f64,
    pub range: RowRange,
}

/// One ngram supporting a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub tokens: Vec<TokenId>,
    /// The ngram's score under the ranking mode: its log-probability for
    /// [`rank_lm`], its weight otherwise.
    pub weight: f64,
    /// Coverage factor (1 outside the intersective mode).
    pub cover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub score: f64,
    pub evidence: Vec<Evidence>,
}

/// `freq / total`.
pub fn unconditional_prob(freq: u64, total: u64) -> Result<f64> {
    if total == 0 || freq > total {
        return Err(Error::InvalidFrequency { freq, total });
    }
    Ok(freq as f64 / total as f64)
}

/// Positive part of the log-odds ratio between the conditional and the
/// unconditional probability of an ngram.
pub fn ngram_weight(p_cond: f64, p_uncond: f64) -> f64 {
    let pc = p_cond.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pu = p_uncond.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let w = (pc * (1.0 - pu) / (pu * (1.0 - pc))).ln();
    w.max(0.0)
}

/// `1 - beta + beta * |set(ngram) \ covered| / |set(ngram)|`.
pub fn coverage_weight(ngram: &[TokenId], covered: &HashSet<TokenId>, beta: f64) -> Result<f64> {
    if ngram.is_empty() {
        return Err(Error::EmptyNgram);
    }
    let distinct: HashSet<TokenId> = ngram.iter().copied().collect();
    let fresh = distinct.iter().filter(|t| !covered.contains(t)).count();
    Ok(1.0 - beta + beta * fresh as f64 / distinct.len() as f64)
}

/// `sum w^alpha * cover` over `(weight, cover)` terms.
pub fn aggregate(terms: impl IntoIterator<Item = (f64, f64)>, alpha: f64) -> f64 {
    terms.into_iter().map(|(w, c)| w.powf(alpha) * c).sum()
}

fn scored(tokens: Vec<TokenId>, logprob: f64, range: RowRange, total: u64) -> ScoredNgram {
    let freq = range.width() as u64;
    let prob_uncond = if total == 0 {
        1.0
    } else {
        (freq as f64 / total as f64).min(1.0)
    };
    ScoredNgram {
        weight: ngram_weight(logprob.exp(), prob_uncond),
        tokens,
        logprob_cond: logprob,
        freq,
        prob_uncond,
        range,
    }
}

/// Every attested content token with its probability from the first
/// decoding step.
pub fn unigram_scores(first_step: &LogProbVector, ix: &FmIndex) -> Vec<ScoredNgram> {
    let vocab = ix.vocabulary();
    let total = ix.total_body_tokens();
    (0..ix.alphabet_size() as TokenId)
        .filter(|&t| !vocab.is_reserved(t))
        .filter_map(|t| {
            let range = ix.symbol_range(t);
            (!range.is_empty()).then(|| scored(vec![t], first_step.get(t), range, total))
        })
        .collect()
}

/// The candidate pool used by the frequency-aware modes: all hypotheses
/// plus all unigrams, one entry per token sequence with its best
/// log-probability.
pub fn score_candidates(candidates: &CandidateSet, ix: &FmIndex) -> Vec<ScoredNgram> {
    let total = ix.total_body_tokens();
    let mut out: Vec<ScoredNgram> = Vec::with_capacity(candidates.len());
    let mut seen: HashMap<Vec<TokenId>, usize> = HashMap::new();
    let mut push = |n: ScoredNgram, out: &mut Vec<ScoredNgram>| match seen.get(&n.tokens) {
        Some(&i) => {
            if n.logprob_cond > out[i].logprob_cond {
                out[i] = n;
            }
        }
        None => {
            seen.insert(n.tokens.clone(), out.len());
            out.push(n);
        }
    };
    for h in &candidates.hypotheses {
        if h.range.is_empty() {
            continue;
        }
        push(
            scored(h.tokens.clone(), h.logprob, h.range, total),
            &mut out,
        );
    }
    for u in unigram_scores(&candidates.first_step, ix) {
        push(u, &mut out);
    }
    out
}

/// Order used inside a document: weight desc, longer first, then tokens.
fn evidence_order(a: (f64, &[TokenId]), b: (f64, &[TokenId])) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0)
        .then(b.1.len().cmp(&a.1.len()))
        .then(a.1.cmp(b.1))
}

fn finish_ranking(ix: &FmIndex, scores: HashMap<DocIndex, (f64, Vec<Evidence>)>) -> Vec<DocScore> {
    let mut out: Vec<DocScore> = scores
        .into_iter()
        .map(|(doc, (score, evidence))| DocScore {
            doc_id: ix.doc_id(doc).to_string(),
            score,
            evidence,
        })
        .collect();
    sort_ranking(&mut out);
    out
}

/// Score descending, then document id ascending.
pub fn sort_ranking(ranking: &mut [DocScore]) {
    ranking.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

/// Documents containing each ngram, with the start offsets inside them.
fn occurrences_by_doc(
    ix: &FmIndex,
    range: RowRange,
    options: &ScoreOptions,
) -> HashMap<DocIndex, Vec<u32>> {
    let mut out: HashMap<DocIndex, Vec<u32>> = HashMap::new();
    for occ in ix.locate(range) {
        if options.ignore_title_matches && occ.is_title {
            continue;
        }
        out.entry(occ.doc).or_default().push(occ.offset);
    }
    out
}

pub fn rank_lm(candidates: &CandidateSet, ix: &FmIndex, options: &ScoreOptions) -> Vec<DocScore> {
    let mut best: HashMap<DocIndex, (f64, Vec<Evidence>)> = HashMap::new();
    for h in candidates.finished() {
        if h.range.is_empty() || !h.logprob.is_finite() {
            continue;
        }
        for doc in occurrences_by_doc(ix, h.range, options).into_keys() {
            let entry = best.entry(doc).or_insert((f64::NEG_INFINITY, Vec::new()));
            let better = match entry.1.first() {
                None => true,
                Some(e) => evidence_order((h.logprob, &h.tokens), (e.weight, &e.tokens)).is_lt(),
            };
            if better {
                *entry = (
                    h.logprob,
                    vec![Evidence {
                        tokens: h.tokens.clone(),
                        weight: h.logprob,
                        cover: 1.0,
                    }],
                );
            }
        }
    }
    finish_ranking(ix, best)
}

pub fn rank_lm_fm(
    candidates: &CandidateSet,
    ix: &FmIndex,
    options: &ScoreOptions,
) -> Vec<DocScore> {
    let pool = score_candidates(candidates, ix);
    let mut best: HashMap<DocIndex, (f64, Vec<Evidence>)> = HashMap::new();
    for n in pool.iter().filter(|n| n.weight > 0.0) {
        for doc in occurrences_by_doc(ix, n.range, options).into_keys() {
            let entry = best.entry(doc).or_insert((0.0, Vec::new()));
            let better = match entry.1.first() {
                None => true,
                Some(e) => evidence_order((n.weight, &n.tokens), (e.weight, &e.tokens)).is_lt(),
            };
            if better {
                *entry = (
                    n.weight,
                    vec![Evidence {
                        tokens: n.tokens.clone(),
                        weight: n.weight,
                        cover: 1.0,
                    }],
                );
            }
        }
    }
    finish_ranking(ix, best)
}

/// An ngram occurring in one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocNgram {
    pub weight: f64,
    pub tokens: Vec<TokenId>,
    pub offsets: Vec<u32>,
}

/// Returns which of `items` are admitted for one document of `doc_len`
/// tokens: an ngram is admitted when at least one of its occurrences
/// overlaps no occurrence of an admitted ngram of strictly greater weight.
/// `items` must be sorted by descending weight.
pub fn select_kd(items: &[DocNgram], doc_len: usize) -> Vec<bool> {
    debug_assert!(items.windows(2).all(|w| w[0].weight >= w[1].weight));
    let mut blocked = vec![false; doc_len];
    let mut admitted = vec![false; items.len()];
    let mut group_start = 0;
    while group_start < items.len() {
        let w = items[group_start].weight;
        let group_end = group_start
            + items[group_start..]
                .iter()
                .take_while(|n| n.weight == w)
                .count();
        // equal weights do not block each other, so decide the whole group
        // before marking its occurrences
        for i in group_start..group_end {
            let n = &items[i];
            admitted[i] = n.offsets.iter().any(|&o| {
                let o = o as usize;
                let end = (o + n.tokens.len()).min(doc_len);
                !blocked[o..end].iter().any(|&b| b)
            });
        }
        for i in group_start..group_end {
            if admitted[i] {
                let n = &items[i];
                for &o in &n.offsets {
                    let o = o as usize;
                    let end = (o + n.tokens.len()).min(doc_len);
                    blocked[o..end].iter_mut().for_each(|b| *b = true);
                }
            }
        }
        group_start = group_end;
    }
    admitted
}

/// Coverage factors for the admitted ngrams of one document, sorted by
/// descending weight: tokens of strictly heavier ngrams count as covered.
pub fn coverage_factors(admitted: &[&DocNgram], beta: f64) -> Vec<f64> {
    let mut covered: HashSet<TokenId> = HashSet::new();
    let mut out = Vec::with_capacity(admitted.len());
    let mut group_start = 0;
    while group_start < admitted.len() {
        let w = admitted[group_start].weight;
        let group: Vec<&DocNgram> = admitted[group_start..]
            .iter()
            .take_while(|n| n.weight == w)
            .copied()
            .collect();
        for n in &group {
            out.push(coverage_weight(&n.tokens, &covered, beta).expect("ngrams are non-empty"));
        }
        for n in &group {
            covered.extend(n.tokens.iter().copied());
        }
        group_start += group.len();
    }
    out
}

pub fn rank_intersective(
    candidates: &CandidateSet,
    ix: &FmIndex,
    options: &ScoreOptions,
) -> Vec<DocScore> {
    let pool = score_candidates(candidates, ix);
    let mut per_doc: HashMap<DocIndex, Vec<DocNgram>> = HashMap::new();
    for n in pool.iter().filter(|n| n.weight > 0.0) {
        for (doc, offsets) in occurrences_by_doc(ix, n.range, options) {
            per_doc.entry(doc).or_default().push(DocNgram {
                weight: n.weight,
                tokens: n.tokens.clone(),
                offsets,
            });
        }
    }
    let mut scores = HashMap::with_capacity(per_doc.len());
    for (doc, mut items) in per_doc {
        items.sort_by(|a, b| evidence_order((a.weight, &a.tokens), (b.weight, &b.tokens)));
        let admitted_mask = select_kd(&items, ix.doc_len(doc));
        let admitted: Vec<&DocNgram> = items
            .iter()
            .zip(&admitted_mask)
            .filter(|(_, &a)| a)
            .map(|(n, _)| n)
            .collect();
        let covers = coverage_factors(&admitted, options.beta);
        let score = aggregate(
            admitted.iter().zip(&covers).map(|(n, &c)| (n.weight, c)),
            options.alpha,
        );
        let evidence = admitted
            .iter()
            .zip(&covers)
            .map(|(n, &cover)| Evidence {
                tokens: n.tokens.clone(),
                weight: n.weight,
                cover,
            })
            .collect();
        scores.insert(doc, (score, evidence));
    }
    finish_ranking(ix, scores)
}
