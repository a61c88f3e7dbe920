//! Brute-force reference implementations working directly on the token
//! sequences of a corpus, without the index.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use fmgen::{CandidateSet, Corpus, TokenId};

/// Encoded documents (`title sep body`), without terminators.
pub fn encoded_docs(corpus: &Corpus) -> Vec<Vec<TokenId>> {
    corpus.encoded().collect()
}

/// The indexed text: every encoded document followed by a terminator (0).
pub fn concatenated(corpus: &Corpus) -> Vec<TokenId> {
    let mut text = Vec::new();
    for d in corpus.encoded() {
        text.extend(d);
        text.push(0);
    }
    text
}

/// Start offsets of `pattern` in `text`.
pub fn positions(text: &[TokenId], pattern: &[TokenId]) -> Vec<usize> {
    if pattern.is_empty() || pattern.len() > text.len() {
        return Vec::new();
    }
    (0..=text.len() - pattern.len())
        .filter(|&i| &text[i..i + pattern.len()] == pattern)
        .collect()
}

/// Occurrence counts of every token that follows `pattern` in the cyclic text.
pub fn successors(text: &[TokenId], pattern: &[TokenId]) -> BTreeMap<TokenId, u64> {
    let n = text.len();
    let mut out = BTreeMap::new();
    for i in 0..n {
        if (0..pattern.len()).all(|j| text[(i + j) % n] == pattern[j]) {
            *out.entry(text[(i + pattern.len()) % n]).or_default() += 1;
        }
    }
    out
}

/// Cyclic occurrence count (matches can wrap around the end of the text).
pub fn cyclic_count(text: &[TokenId], pattern: &[TokenId]) -> u64 {
    let n = text.len();
    (0..n)
        .filter(|&i| (0..pattern.len()).all(|j| text[(i + j) % n] == pattern[j]))
        .count() as u64
}

/// Inverts a BWT by repeatedly sorting the partially rebuilt rotation
/// matrix, the textbook way.
pub fn naive_inverse(bwt: &[TokenId], primary_row_of_text: usize) -> Vec<TokenId> {
    let n = bwt.len();
    let mut rows: Vec<Vec<TokenId>> = vec![Vec::new(); n];
    for _ in 0..n {
        for (row, &c) in rows.iter_mut().zip(bwt) {
            row.insert(0, c);
        }
        rows.sort();
    }
    rows[primary_row_of_text].clone()
}

/// BWT of `text` by sorting all rotations, and the row holding `text`.
/// Equal rotations are identical, so their order does not change the BWT.
pub fn naive_bwt(text: &[TokenId]) -> (Vec<TokenId>, usize) {
    let n = text.len();
    let mut rot: Vec<Vec<TokenId>> = (0..n)
        .map(|i| text[i..].iter().chain(&text[..i]).copied().collect())
        .collect();
    rot.sort();
    let primary = rot.iter().position(|r| r.as_slice() == text).unwrap();
    (rot.iter().map(|r| r[n - 1]).collect(), primary)
}

pub struct OracleParams {
    pub alpha: f64,
    pub beta: f64,
}

const EPS: f64 = 1e-9;

fn weight(p_cond: f64, p_uncond: f64) -> f64 {
    let pc = p_cond.clamp(EPS, 1.0 - EPS);
    let pu = p_uncond.clamp(EPS, 1.0 - EPS);
    let odds = (pc / (1.0 - pc)) / (pu / (1.0 - pu));
    odds.ln().max(0.0)
}

struct Ngram {
    tokens: Vec<TokenId>,
    logprob: f64,
    weight: f64,
}

/// Documents with per-token position lists, so that matching an ngram only
/// scans the positions of its first token.
pub struct Scanner {
    ids: Vec<String>,
    docs: Vec<Vec<TokenId>>,
    lists: Vec<HashMap<TokenId, Vec<usize>>>,
    total_body: u64,
    reserved: Vec<bool>,
}

impl Scanner {
    pub fn new(corpus: &Corpus) -> Self {
        let docs = encoded_docs(corpus);
        let lists = docs
            .iter()
            .map(|d| {
                let mut m: HashMap<TokenId, Vec<usize>> = HashMap::new();
                for (i, &t) in d.iter().enumerate() {
                    m.entry(t).or_default().push(i);
                }
                m
            })
            .collect();
        let v = corpus.vocabulary();
        Scanner {
            ids: corpus
                .documents()
                .iter()
                .map(|d| d.doc_id.clone())
                .collect(),
            docs,
            lists,
            total_body: corpus.documents().iter().map(|d| d.body.len() as u64).sum(),
            reserved: (0..v.len() as TokenId).map(|t| v.is_reserved(t)).collect(),
        }
    }

    /// Start offsets of `ngram` in document `d`.
    pub fn positions(&self, d: usize, ngram: &[TokenId]) -> Vec<usize> {
        let doc = &self.docs[d];
        match self.lists[d].get(&ngram[0]) {
            None => Vec::new(),
            Some(starts) => starts
                .iter()
                .copied()
                .filter(|&i| doc.len() >= i + ngram.len() && doc[i..i + ngram.len()] == *ngram)
                .collect(),
        }
    }

    fn freq(&self, ngram: &[TokenId]) -> u64 {
        (0..self.docs.len())
            .map(|d| self.positions(d, ngram).len() as u64)
            .sum()
    }

    /// Every hypothesis plus every content token present in the corpus,
    /// duplicates merged by best logprob.
    fn pool(&self, cands: &CandidateSet) -> Vec<Ngram> {
        let mut best: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
        for h in &cands.hypotheses {
            let e = best.entry(h.tokens.clone()).or_insert(f64::NEG_INFINITY);
            *e = e.max(h.logprob);
        }
        let present: BTreeSet<TokenId> =
            self.lists.iter().flat_map(|m| m.keys().copied()).collect();
        for t in present {
            if self.reserved[t as usize] {
                continue;
            }
            let e = best.entry(vec![t]).or_insert(f64::NEG_INFINITY);
            *e = e.max(cands.first_step.get(t));
        }
        best.into_iter()
            .map(|(tokens, logprob)| {
                let p_uncond = (self.freq(&tokens) as f64 / self.total_body as f64).min(1.0);
                Ngram {
                    weight: weight(logprob.exp(), p_uncond),
                    tokens,
                    logprob,
                }
            })
            .collect()
    }

    /// Document score = best logprob among the finished hypotheses it contains.
    pub fn rank_lm(&self, cands: &CandidateSet) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for d in 0..self.docs.len() {
            let best = cands
                .hypotheses
                .iter()
                .filter(|h| h.finished && !self.positions(d, &h.tokens).is_empty())
                .map(|h| h.logprob)
                .fold(f64::NEG_INFINITY, f64::max);
            if best > f64::NEG_INFINITY {
                out.push((self.ids[d].clone(), best));
            }
        }
        sorted(out)
    }

    /// Document score = best positive weight among the pooled ngrams it contains.
    pub fn rank_lm_fm(&self, cands: &CandidateSet) -> Vec<(String, f64)> {
        let pool: Vec<Ngram> = self
            .pool(cands)
            .into_iter()
            .filter(|n| n.weight > 0.0)
            .collect();
        let mut out = Vec::new();
        for d in 0..self.docs.len() {
            let best = pool
                .iter()
                .filter(|n| !self.positions(d, &n.tokens).is_empty())
                .map(|n| n.weight)
                .fold(0.0, f64::max);
            if best > 0.0 {
                out.push((self.ids[d].clone(), best));
            }
        }
        sorted(out)
    }

    /// Weighted sum over the admitted ngrams of each document with the
    /// coverage discount from strictly better admitted ngrams.
    pub fn rank_intersective(
        &self,
        cands: &CandidateSet,
        params: &OracleParams,
    ) -> Vec<(String, f64)> {
        let pool: Vec<Ngram> = self
            .pool(cands)
            .into_iter()
            .filter(|n| n.weight > 0.0)
            .collect();
        let mut out = Vec::new();
        for d in 0..self.docs.len() {
            let mut present: Vec<(&Ngram, Vec<usize>)> = pool
                .iter()
                .map(|n| (n, self.positions(d, &n.tokens)))
                .filter(|(_, p)| !p.is_empty())
                .collect();
            if present.is_empty() {
                continue;
            }
            // admission in weight order: an ngram is admitted when one of
            // its occurrences avoids every occurrence of strictly heavier
            // admitted ngrams
            present.sort_by(|a, b| {
                b.0.weight
                    .total_cmp(&a.0.weight)
                    .then(b.0.tokens.len().cmp(&a.0.tokens.len()))
                    .then(a.0.tokens.cmp(&b.0.tokens))
            });
            let mut admitted: Vec<&(&Ngram, Vec<usize>)> = Vec::new();
            for item in &present {
                let (n, occ) = item;
                let free = occ.iter().any(|&o| {
                    admitted.iter().filter(|m| m.0.weight > n.weight).all(|m| {
                        m.1.iter()
                            .all(|&p| !overlaps(o, n.tokens.len(), p, m.0.tokens.len()))
                    })
                });
                if free {
                    admitted.push(item);
                }
            }
            let mut total = 0.0;
            for (n, _) in &admitted {
                let covered: BTreeSet<TokenId> = admitted
                    .iter()
                    .filter(|m| m.0.weight > n.weight)
                    .flat_map(|m| m.0.tokens.iter().copied())
                    .collect();
                let distinct: BTreeSet<TokenId> = n.tokens.iter().copied().collect();
                let fresh = distinct.iter().filter(|t| !covered.contains(t)).count();
                let cover = 1.0 - params.beta + params.beta * fresh as f64 / distinct.len() as f64;
                total += n.weight.powf(params.alpha) * cover;
            }
            out.push((self.ids[d].clone(), total));
        }
        sorted(out)
    }
}

fn sorted(mut scores: Vec<(String, f64)>) -> Vec<(String, f64)> {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores
}

fn overlaps(a: usize, la: usize, b: usize, lb: usize) -> bool {
    a < b + lb && b < a + la
}

/// The admitted subset as the unique fixed point of the admission rule,
/// found by trying every subset. `items` are (weight, length, offsets).
pub fn admitted_by_search(items: &[(f64, usize, Vec<usize>)]) -> Vec<bool> {
    let k = items.len();
    assert!(k <= 16, "exhaustive search is exponential");
    let mut found = None;
    for mask in 0u32..(1 << k) {
        let is_in = |i: usize| mask >> i & 1 == 1;
        let consistent = (0..k).all(|i| {
            let (w, len, occ) = &items[i];
            let free = occ.iter().any(|&o| {
                !(0..k).any(|j| {
                    j != i
                        && is_in(j)
                        && items[j].0 > *w
                        && items[j].2.iter().any(|&p| overlaps(o, *len, p, items[j].1))
                })
            });
            free == is_in(i)
        });
        if consistent {
            assert!(found.is_none(), "admission rule has two fixed points");
            found = Some(mask);
        }
    }
    let mask = found.expect("admission rule has a fixed point");
    (0..k).map(|i| mask >> i & 1 == 1).collect()
}
