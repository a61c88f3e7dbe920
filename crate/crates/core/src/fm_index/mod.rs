//! FM-index over the concatenation of encoded documents.
//!
//! The indexed text is `doc_0 $ doc_1 $ ... doc_m $` where `$` is the
//! vocabulary's `eos` id (always 0, the smallest symbol). Rows of the
//! rotation matrix are addressed by [`RowRange`]s:
//!
//! * prepending a token to a pattern is classic backward search
//!   ([`FmIndex::backward_extend`]), independent of the text length;
//! * appending a token ([`FmIndex::extend_right`], [`FmIndex::successors`])
//!   uses the fact that the rows matching a pattern of length `k` are sorted
//!   by the token at offset `k`, which is read through `k` applications of
//!   Ψ (the inverse LF-mapping) and binary searched.
//!
//! Positions are recovered by LF-walking to the nearest sampled row
//! (every `sa_rate`-th text position is sampled).

mod bits;
mod io;
mod rotation;
mod wavelet;

use std::collections::HashMap;

pub use bits::BitVector;
pub use rotation::sort_rotations;
pub use wavelet::WaveletTree;

use crate::corpus::{encode_document, Corpus};
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

pub const DEFAULT_SA_RATE: u32 = 32;
pub const DEFAULT_MAX_ALPHABET: usize = 1 << 24;

/// Half-open interval of rows of the sorted rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RowRange {
    pub lo: usize,
    pub hi: usize,
}

impl RowRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        debug_assert!(lo <= hi);
        RowRange { lo, hi }
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocIndex(pub u32);

impl DocIndex {
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    pub doc: DocIndex,
    /// Token offset inside the encoded document.
    pub offset: u32,
    /// The occurrence starts before the title separator.
    pub is_title: bool,
}

/// A document as the index sees it: a token sequence without terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedDocument {
    pub id: String,
    pub tokens: Vec<TokenId>,
    /// Number of leading title tokens.
    pub title_len: u32,
    /// Offset of the first body token (`title_len + 1` for encoded documents,
    /// 0 for raw sequences).
    pub body_start: u32,
}

impl IndexedDocument {
    /// A raw token sequence with no title.
    pub fn raw(id: impl Into<String>, tokens: Vec<TokenId>) -> Self {
        IndexedDocument {
            id: id.into(),
            tokens,
            title_len: 0,
            body_start: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub sa_rate: u32,
    /// Largest alphabet the wavelet tree accepts.
    pub max_alphabet: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            sa_rate: DEFAULT_SA_RATE,
            max_alphabet: DEFAULT_MAX_ALPHABET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DocTable {
    pub ids: Vec<String>,
    pub title_lens: Vec<u32>,
    pub body_starts: Vec<u32>,
    /// Row of the rotation starting at each document's terminator.
    pub terminator_rows: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct FmIndex {
    /// `counts[c]` = number of text symbols smaller than `c` (the F column).
    counts: Vec<u64>,
    bwt: WaveletTree,
    sampled_rows: BitVector,
    samples: Vec<u32>,
    sa_rate: u32,
    doc_starts: BitVector,
    docs: DocTable,
    doc_lookup: HashMap<String, DocIndex>,
    vocabulary: Vocabulary,
    total_body_tokens: u64,
    primary_row: usize,
}

impl FmIndex {
    /// Indexes every document of `corpus` as `title <sep> body`.
    pub fn build(corpus: &Corpus, sa_rate: u32) -> Result<Self> {
        let vocab = corpus.vocabulary();
        let docs = corpus
            .documents()
            .iter()
            .map(|d| IndexedDocument {
                id: d.doc_id.clone(),
                tokens: encode_document(d, vocab),
                title_len: d.title.len() as u32,
                body_start: d.title.len() as u32 + 1,
            })
            .collect();
        Self::from_documents(
            docs,
            vocab.clone(),
            BuildOptions {
                sa_rate,
                ..BuildOptions::default()
            },
        )
    }

    pub fn from_documents(
        documents: Vec<IndexedDocument>,
        vocabulary: Vocabulary,
        options: BuildOptions,
    ) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if options.sa_rate == 0 {
            return Err(Error::InvalidArgument("sa_rate must be at least 1".into()));
        }
        let alphabet = vocabulary.len();
        if alphabet > options.max_alphabet || alphabet > u32::MAX as usize {
            return Err(Error::AlphabetTooLarge {
                size: alphabet,
                bound: options.max_alphabet,
            });
        }
        let eos = vocabulary.reserved().eos;

        let total: usize = documents.iter().map(|d| d.tokens.len() + 1).sum();
        if total > u32::MAX as usize {
            return Err(Error::InvalidArgument(
                "text longer than 2^32 tokens".into(),
            ));
        }
        let mut text = Vec::with_capacity(total);
        let mut start_bits = vec![false; total];
        let mut total_body_tokens = 0u64;
        for d in &documents {
            if d.tokens.is_empty() {
                return Err(Error::EmptyBody(d.id.clone()));
            }
            if d.body_start as usize > d.tokens.len() || d.title_len > d.body_start {
                return Err(Error::InvalidArgument(format!(
                    "bad title/body split for document {:?}",
                    d.id
                )));
            }
            start_bits[text.len()] = true;
            for &t in &d.tokens {
                if t as usize >= alphabet {
                    return Err(Error::TokenOutOfAlphabet { token: t, alphabet });
                }
                if t == eos {
                    return Err(Error::ReservedToken(t));
                }
            }
            text.extend_from_slice(&d.tokens);
            text.push(eos);
            total_body_tokens += (d.tokens.len() - d.body_start as usize) as u64;
        }
        let n = text.len();

        let order = sort_rotations(&text);
        let bwt: Vec<u32> = order
            .iter()
            .map(|&p| text[(p as usize + n - 1) % n])
            .collect();

        let mut counts = vec![0u64; alphabet + 1];
        for &s in &text {
            counts[s as usize + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }

        let doc_starts = BitVector::from_bits(start_bits);
        let rate = options.sa_rate;
        let sampled_rows = BitVector::from_bits(order.iter().map(|&p| p % rate == 0));
        let samples: Vec<u32> = order.iter().copied().filter(|&p| p % rate == 0).collect();

        let mut terminator_rows = vec![0u32; documents.len()];
        let mut primary_row = 0;
        for (row, &p) in order.iter().enumerate() {
            let p = p as usize;
            if p == 0 {
                primary_row = row;
            }
            if text[p] == eos {
                let doc = doc_starts.rank1(p + 1) - 1;
                terminator_rows[doc] = row as u32;
            }
        }

        let docs = DocTable {
            title_lens: documents.iter().map(|d| d.title_len).collect(),
            body_starts: documents.iter().map(|d| d.body_start).collect(),
            ids: documents.into_iter().map(|d| d.id).collect(),
            terminator_rows,
        };
        Self::assemble(
            counts,
            WaveletTree::new(&bwt, alphabet),
            sampled_rows,
            samples,
            rate,
            doc_starts,
            docs,
            vocabulary,
            total_body_tokens,
            primary_row,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        counts: Vec<u64>,
        bwt: WaveletTree,
        sampled_rows: BitVector,
        samples: Vec<u32>,
        sa_rate: u32,
        doc_starts: BitVector,
        docs: DocTable,
        vocabulary: Vocabulary,
        total_body_tokens: u64,
        primary_row: usize,
    ) -> Result<Self> {
        let mut doc_lookup = HashMap::with_capacity(docs.ids.len());
        for (i, id) in docs.ids.iter().enumerate() {
            if doc_lookup.insert(id.clone(), DocIndex(i as u32)).is_some() {
                return Err(Error::DuplicateDocId(id.clone()));
            }
        }
        Ok(FmIndex {
            counts,
            bwt,
            sampled_rows,
            samples,
            sa_rate,
            doc_starts,
            docs,
            doc_lookup,
            vocabulary,
            total_body_tokens,
            primary_row,
        })
    }

    // ---- basic accessors -------------------------------------------------

    /// Height of the rotation matrix (text length including terminators).
    pub fn len(&self) -> usize {
        self.bwt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bwt.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn sa_rate(&self) -> u32 {
        self.sa_rate
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn total_body_tokens(&self) -> u64 {
        self.total_body_tokens
    }

    /// Cumulative F-column counts; `f_counts()[c]` symbols are smaller than `c`.
    pub fn f_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn full_range(&self) -> RowRange {
        RowRange::new(0, self.len())
    }

    /// Rows whose rotation starts with `token`.
    pub fn symbol_range(&self, token: TokenId) -> RowRange {
        let t = token as usize;
        if t >= self.alphabet_size() {
            return RowRange::new(0, 0);
        }
        RowRange::new(self.counts[t] as usize, self.counts[t + 1] as usize)
    }

    /// Rows starting at a document terminator; extending them to the right by
    /// one position lands on the first token of every document.
    pub fn document_start_range(&self) -> RowRange {
        self.symbol_range(self.vocabulary.reserved().eos)
    }

    pub(crate) fn parts(
        &self,
    ) -> (
        &[u64],
        &WaveletTree,
        &BitVector,
        &[u32],
        &BitVector,
        &DocTable,
        usize,
    ) {
        (
            &self.counts,
            &self.bwt,
            &self.sampled_rows,
            &self.samples,
            &self.doc_starts,
            &self.docs,
            self.primary_row,
        )
    }

    // ---- documents -------------------------------------------------------

    pub fn num_docs(&self) -> usize {
        self.docs.ids.len()
    }

    pub fn doc_id(&self, doc: DocIndex) -> &str {
        &self.docs.ids[doc.get()]
    }

    pub fn doc_index(&self, id: &str) -> Option<DocIndex> {
        self.doc_lookup.get(id).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.ids.iter().map(String::as_str)
    }

    /// Start of `doc` in the concatenated text.
    pub fn doc_start(&self, doc: DocIndex) -> usize {
        self.doc_starts
            .select1(doc.get())
            .expect("document index in range")
    }

    /// Length of `doc` without its terminator.
    pub fn doc_len(&self, doc: DocIndex) -> usize {
        let end = self
            .doc_starts
            .select1(doc.get() + 1)
            .unwrap_or_else(|| self.len());
        end - self.doc_start(doc) - 1
    }

    pub fn title_len(&self, doc: DocIndex) -> usize {
        self.docs.title_lens[doc.get()] as usize
    }

    pub fn body_start(&self, doc: DocIndex) -> usize {
        self.docs.body_starts[doc.get()] as usize
    }

    /// Maps a text position to the document holding it.
    pub fn occurrence_at(&self, pos: usize) -> Occurrence {
        let doc = self.doc_starts.rank1(pos + 1) - 1;
        let start = self.doc_starts.select1(doc).expect("doc start");
        let offset = pos - start;
        Occurrence {
            doc: DocIndex(doc as u32),
            offset: offset as u32,
            is_title: offset < self.docs.title_lens[doc] as usize,
        }
    }

    // ---- LF / Ψ ----------------------------------------------------------

    /// Symbol of the F column at `row`.
    pub fn f_symbol(&self, row: usize) -> TokenId {
        (self.counts.partition_point(|&c| c as usize <= row) - 1) as TokenId
    }

    /// Symbol of the L column (the BWT) at `row`.
    pub fn l_symbol(&self, row: usize) -> TokenId {
        self.bwt.access(row)
    }

    /// Row of the rotation starting one position earlier.
    pub fn lf(&self, row: usize) -> usize {
        let c = self.bwt.access(row);
        self.counts[c as usize] as usize + self.bwt.rank(c, row)
    }

    /// Row of the rotation starting one position later (inverse of [`lf`]).
    ///
    /// [`lf`]: FmIndex::lf
    pub fn psi(&self, row: usize) -> usize {
        let c = self.f_symbol(row);
        self.bwt
            .select(c, row - self.counts[c as usize] as usize)
            .expect("F and L columns hold the same multiset")
    }

    /// Token at `offset` positions into the rotation of `row`.
    pub fn token_at(&self, mut row: usize, offset: usize) -> TokenId {
        for _ in 0..offset {
            row = self.psi(row);
        }
        self.f_symbol(row)
    }

    // ---- search ----------------------------------------------------------

    /// Narrows `range` (rows prefixed by some pattern `P`) to the rows
    /// prefixed by `token ++ P`.
    pub fn backward_extend(&self, range: RowRange, token: TokenId) -> Result<RowRange> {
        if token as usize >= self.alphabet_size() {
            return Err(Error::TokenOutOfAlphabet {
                token,
                alphabet: self.alphabet_size(),
            });
        }
        let base = self.counts[token as usize] as usize;
        Ok(RowRange::new(
            base + self.bwt.rank(token, range.lo),
            base + self.bwt.rank(token, range.hi),
        ))
    }

    /// Rows prefixed by `pattern`; the full range for an empty pattern.
    pub fn range_of(&self, pattern: &[TokenId]) -> RowRange {
        let mut range = self.full_range();
        for &t in pattern.iter().rev() {
            match self.backward_extend(range, t) {
                Ok(r) if !r.is_empty() => range = r,
                _ => return RowRange::new(0, 0),
            }
        }
        range
    }

    /// Occurrences of `ngram` in the indexed text.
    pub fn count(&self, ngram: &[TokenId]) -> u64 {
        self.range_of(ngram).width() as u64
    }

    /// Splits the rows of `range` (prefixed by a pattern of length `depth`)
    /// into runs sharing the token at offset `depth`.
    pub fn successor_ranges(&self, range: RowRange, depth: usize) -> Vec<(TokenId, RowRange)> {
        let mut out = Vec::new();
        let mut pos = range.lo;
        while pos < range.hi {
            let token = self.token_at(pos, depth);
            let end = self.run_end(pos, range.hi, depth, token);
            out.push((token, RowRange::new(pos, end)));
            pos = end;
        }
        out
    }

    /// First row in `(pos, hi)` whose token at `depth` exceeds `token`, or `hi`.
    fn run_end(&self, pos: usize, hi: usize, depth: usize, token: TokenId) -> usize {
        // gallop, then bisect
        let mut step = 1;
        let mut known_equal = pos;
        loop {
            let probe = pos + step;
            if probe >= hi {
                break;
            }
            if self.token_at(probe, depth) != token {
                return self.bisect_end(known_equal, probe, depth, token);
            }
            known_equal = probe;
            step *= 2;
        }
        self.bisect_end(known_equal, hi, depth, token)
    }

    /// With `token_at(lo) == token`, returns the first row in `(lo, hi)` not
    /// holding `token` at `depth` (or `hi`).
    fn bisect_end(&self, mut lo: usize, mut hi: usize, depth: usize, token: TokenId) -> usize {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.token_at(mid, depth) == token {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Tokens that can follow the pattern matched by `range` (of length
    /// `depth`), in text order, with their occurrence counts.
    pub fn successors(&self, range: RowRange, depth: usize) -> Vec<(TokenId, u64)> {
        self.successor_ranges(range, depth)
            .into_iter()
            .map(|(t, r)| (t, r.width() as u64))
            .collect()
    }

    /// Narrows `range` (pattern `P` of length `depth`) to the rows prefixed by
    /// `P ++ token`.
    pub fn extend_right(&self, range: RowRange, depth: usize, token: TokenId) -> RowRange {
        let key = |row: usize| self.token_at(row, depth);
        let (mut lo, mut hi) = (range.lo, range.hi);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if key(mid) < token {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let start = lo;
        let mut hi = range.hi;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if key(mid) <= token {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        RowRange::new(start, lo)
    }

    // ---- locate / extract -----------------------------------------------

    /// Text position of the rotation at `row`.
    pub fn position_of_row(&self, mut row: usize) -> usize {
        let n = self.len();
        let mut steps = 0;
        while !self.sampled_rows.get(row) {
            row = self.lf(row);
            steps += 1;
        }
        (self.samples[self.sampled_rows.rank1(row)] as usize + steps) % n
    }

    pub fn locate(&self, range: RowRange) -> Vec<Occurrence> {
        (range.lo..range.hi)
            .map(|row| self.occurrence_at(self.position_of_row(row)))
            .collect()
    }

    /// The L column as a token sequence.
    pub fn bwt(&self) -> Vec<TokenId> {
        (0..self.len()).map(|r| self.bwt.access(r)).collect()
    }

    /// Inverts the BWT, returning the indexed text including terminators.
    pub fn reconstruct(&self) -> Vec<TokenId> {
        let n = self.len();
        let mut out = vec![0; n];
        let mut row = self.primary_row;
        for slot in out.iter_mut().rev() {
            *slot = self.bwt.access(row);
            row = self.lf(row);
        }
        out
    }

    /// Tokens of `doc` (without terminator), read backwards from its
    /// terminator row.
    pub fn extract_document(&self, doc: DocIndex) -> Vec<TokenId> {
        let len = self.doc_len(doc);
        let mut out = Vec::with_capacity(len);
        let mut row = self.docs.terminator_rows[doc.get()] as usize;
        for _ in 0..len {
            out.push(self.bwt.access(row));
            row = self.lf(row);
        }
        out.reverse();
        out
    }

    /// Approximate resident size of the succinct structures.
    pub fn size_in_bytes(&self) -> usize {
        self.bwt.size_in_bytes()
            + self.sampled_rows.size_in_bytes()
            + self.samples.len() * 4
            + self.doc_starts.size_in_bytes()
            + self.counts.len() * 8
    }
}
