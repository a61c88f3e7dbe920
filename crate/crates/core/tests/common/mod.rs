#![allow(dead_code)]

pub mod oracle;

use fmgen::corpus::{CorpusBuilder, CorpusRecord};
use fmgen::eval::Qrels;
use fmgen::toy::{self, ToyConfig, ToyData};
use fmgen::{
    CandidateSet, Corpus, Document, FmIndex, Hypothesis, HypothesisKind, LogProbVector, TokenId,
    Vocabulary, WordTokenizer,
};
use rand::Rng;

pub fn corpus_from_records(records: &[CorpusRecord]) -> Corpus {
    let tokenizer = WordTokenizer;
    let mut b = CorpusBuilder::new(&tokenizer);
    for r in records {
        b.push(r.clone()).unwrap();
    }
    b.finish().unwrap()
}

pub struct Toy {
    pub data: ToyData,
    pub corpus: Corpus,
    pub index: FmIndex,
    pub qrels: Qrels,
}

pub fn toy(docs: usize, queries: usize, seed: u64) -> Toy {
    let data = toy::generate(&ToyConfig {
        docs,
        queries,
        seed,
        ..Default::default()
    });
    let corpus = corpus_from_records(&data.records);
    let index = FmIndex::build(&corpus, 32).unwrap();
    let qrels = Qrels::new(data.qrels()).unwrap();
    Toy {
        data,
        corpus,
        index,
        qrels,
    }
}

/// A vocabulary with `n` content tokens; returns their ids.
pub fn vocab(n: usize) -> (Vocabulary, Vec<TokenId>) {
    let mut v = Vocabulary::new();
    let ids = (0..n).map(|i| v.add(&format!("t{i}")).unwrap()).collect();
    (v, ids)
}

/// Random documents over a small alphabet so that repeats are common.
pub fn random_corpus<R: Rng>(
    rng: &mut R,
    max_docs: usize,
    alphabet: usize,
    max_len: usize,
) -> Corpus {
    let (v, ids) = vocab(alphabet);
    let n = rng.gen_range(1..=max_docs);
    let docs = (0..n)
        .map(|d| {
            let title_len = rng.gen_range(0..=3);
            let body_len = rng.gen_range(1..=max_len);
            let pick = |rng: &mut R| ids[rng.gen_range(0..ids.len())];
            let title = (0..title_len).map(|_| pick(rng)).collect();
            let body = (0..body_len).map(|_| pick(rng)).collect();
            Document::new(format!("doc{d}"), title, body)
        })
        .collect();
    Corpus::new(docs, v).unwrap()
}

/// A random ngram that is drawn from the text half of the time and is
/// arbitrary (usually unattested) otherwise.
pub fn random_ngram<R: Rng>(rng: &mut R, text: &[TokenId], alphabet: usize) -> Vec<TokenId> {
    let len = rng.gen_range(1..=6);
    if rng.gen_bool(0.5) && text.len() >= len {
        let start = rng.gen_range(0..=text.len() - len);
        text[start..start + len].to_vec()
    } else {
        (0..len)
            .map(|_| rng.gen_range(0..(alphabet + 7) as TokenId))
            .collect()
    }
}

/// Two documents sharing their best ngram (`s1 s2`), where `b` also holds a
/// disjoint ngram (`e1 e2`) of lower but positive weight; eight filler
/// documents keep the shared ngram rare. Unigrams get a first-step
/// probability below their corpus frequency, so they carry no weight.
pub fn tie_fixture() -> (FmIndex, CandidateSet) {
    let mut v = Vocabulary::new();
    let mut t = |w: &str| v.add(w).unwrap();
    let (s1, s2, e1, e2) = (t("s1"), t("s2"), t("e1"), t("e2"));
    let fill: Vec<TokenId> = (0..8).map(|i| t(&format!("f{i}"))).collect();
    let mut docs = vec![
        Document::new("a", vec![], vec![s1, s2, fill[0], fill[1]]),
        Document::new("b", vec![], vec![s1, s2, fill[2], e1, e2, fill[3]]),
    ];
    for i in 0..8 {
        docs.push(Document::new(format!("z{i}"), vec![], fill.clone()));
    }
    let corpus = Corpus::new(docs, v).unwrap();
    let ix = FmIndex::build(&corpus, 4).unwrap();
    let total = ix.total_body_tokens() as f64;
    let mut first = vec![f64::NEG_INFINITY; ix.alphabet_size()];
    let mut content_mass = 0.0;
    for tok in 0..ix.alphabet_size() as TokenId {
        let c = ix.count(&[tok]);
        if !ix.vocabulary().is_reserved(tok) && c > 0 {
            let p = 0.5 * c as f64 / total;
            first[tok as usize] = p.ln();
            content_mass += p;
        }
    }
    first[0] = (1.0 - content_mass).ln();
    let hyp = |tokens: Vec<TokenId>, p: f64| Hypothesis {
        range: ix.range_of(&tokens),
        tokens,
        logprob: p.ln(),
        kind: HypothesisKind::Span,
        finished: true,
    };
    let cands = CandidateSet {
        hypotheses: vec![hyp(vec![s1, s2], 0.5), hyp(vec![e1, e2], 0.1)],
        first_step: LogProbVector::new(first),
    };
    (ix, cands)
}
