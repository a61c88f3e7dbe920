mod common;

use std::collections::HashSet;

use common::oracle::{self, OracleParams, Scanner};
use fmgen::decode::{self, DecodeConfig};
use fmgen::lm::BuiltinLm;
use fmgen::score::{self, DocNgram, ScoreOptions};
use fmgen::{DocScore, Engine, RetrievalConfig, TokenId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_same_ranking(got: &[DocScore], want: &[(String, f64)], what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: ranking length");
    for (i, (g, (id, s))) in got.iter().zip(want).enumerate() {
        assert_eq!(&g.doc_id, id, "{what}: document at rank {i}");
        let tol = 1e-9 * s.abs().max(1.0);
        assert!(
            (g.score - s).abs() <= tol,
            "{what}: score at rank {i}: {} vs {s}",
            g.score
        );
    }
}

#[test]
fn rankings_match_brute_force_on_toy_queries() {
    let toy = common::toy(1000, 50, 23);
    let scanner = Scanner::new(&toy.corpus);
    let engine = Engine::with_builtin(toy.index.clone(), RetrievalConfig::default()).unwrap();
    let opts = ScoreOptions::default();
    let params = OracleParams {
        alpha: opts.alpha,
        beta: opts.beta,
    };
    for q in &toy.data.queries {
        let ids = engine.encode_query(&q.text).unwrap();
        let cands = engine.candidates(&ids).unwrap();
        assert_same_ranking(
            &score::rank_lm(&cands, engine.index(), &opts),
            &scanner.rank_lm(&cands),
            &format!("lm {}", q.query_id),
        );
        assert_same_ranking(
            &score::rank_lm_fm(&cands, engine.index(), &opts),
            &scanner.rank_lm_fm(&cands),
            &format!("lm_fm {}", q.query_id),
        );
        assert_same_ranking(
            &score::rank_intersective(&cands, engine.index(), &opts),
            &scanner.rank_intersective(&cands, &params),
            &format!("intersective {}", q.query_id),
        );
    }
}

#[test]
fn rankings_match_brute_force_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let corpus = common::random_corpus(&mut rng, 6, 5, 15);
        let ix = fmgen::FmIndex::build(&corpus, rng.gen_range(1..5)).unwrap();
        let lm = BuiltinLm::fit(&corpus, 2, 2.0).unwrap();
        let scanner = Scanner::new(&corpus);
        let query: Vec<TokenId> = (0..rng.gen_range(1..4))
            .map(|_| rng.gen_range(7..12))
            .collect();
        let cfg = DecodeConfig {
            beam: rng.gen_range(1..6),
            steps: rng.gen_range(1..5),
            constrained: rng.gen_bool(0.7),
            title_share: 1.0 / 3.0,
        };
        let cands = decode::constrained_beam_search(&query, &ix, &lm, &cfg).unwrap();
        let opts = ScoreOptions {
            alpha: rng.gen_range(0.5..3.0),
            beta: rng.gen_range(0.0..=1.0),
            ignore_title_matches: false,
        };
        let params = OracleParams {
            alpha: opts.alpha,
            beta: opts.beta,
        };
        let what = |m: &str| format!("case {case} {m}");
        assert_same_ranking(
            &score::rank_lm(&cands, &ix, &opts),
            &scanner.rank_lm(&cands),
            &what("lm"),
        );
        assert_same_ranking(
            &score::rank_lm_fm(&cands, &ix, &opts),
            &scanner.rank_lm_fm(&cands),
            &what("lm_fm"),
        );
        assert_same_ranking(
            &score::rank_intersective(&cands, &ix, &opts),
            &scanner.rank_intersective(&cands, &params),
            &what("intersective"),
        );
    }
}

fn random_doc_ngrams(rng: &mut ChaCha8Rng, doc_len: usize) -> Vec<DocNgram> {
    let k = rng.gen_range(1..=5);
    // few distinct weights so that ties are frequent
    let weights = [0.5, 1.0, 2.0];
    let mut items: Vec<DocNgram> = (0..k)
        .map(|i| {
            let len = rng.gen_range(1..=3.min(doc_len));
            let mut offsets: Vec<u32> = (0..rng.gen_range(1..=3))
                .map(|_| rng.gen_range(0..=doc_len - len) as u32)
                .collect();
            offsets.sort();
            offsets.dedup();
            DocNgram {
                weight: *weights.choose(rng).unwrap(),
                tokens: (0..len).map(|j| (7 + i * 3 + j) as TokenId).collect(),
                offsets,
            }
        })
        .collect();
    items.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    items
}

#[test]
fn selection_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..2000 {
        let doc_len = rng.gen_range(3..12);
        let items = random_doc_ngrams(&mut rng, doc_len);
        let triples: Vec<(f64, usize, Vec<usize>)> = items
            .iter()
            .map(|n| {
                (
                    n.weight,
                    n.tokens.len(),
                    n.offsets.iter().map(|&o| o as usize).collect(),
                )
            })
            .collect();
        assert_eq!(
            score::select_kd(&items, doc_len),
            oracle::admitted_by_search(&triples),
            "case {case}: {items:?}"
        );
    }
}

#[test]
fn heaviest_ngram_is_always_admitted() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let doc_len = rng.gen_range(3..12);
        let items = random_doc_ngrams(&mut rng, doc_len);
        assert!(score::select_kd(&items, doc_len)[0]);
    }
}

#[test]
fn unigram_frequencies_are_index_counts() {
    let toy = common::toy(200, 1, 3);
    let scanner = Scanner::new(&toy.corpus);
    let lm = BuiltinLm::fit(&toy.corpus, 2, 2.0).unwrap();
    let query = [toy.corpus.documents()[0].body[0]];
    let first = fmgen::LanguageModel::start(&lm, &query).unwrap();
    let first = fmgen::LanguageModel::next_logprobs(&lm, &first).unwrap();
    let unigrams = score::unigram_scores(&first, &toy.index);
    assert!(!unigrams.is_empty());
    for u in &unigrams {
        let count: usize = (0..toy.corpus.len())
            .map(|d| scanner.positions(d, &u.tokens).len())
            .sum();
        assert_eq!(u.freq, count as u64);
        assert_eq!(u.freq, toy.index.count(&u.tokens));
    }
}

#[test]
fn frequent_words_carry_no_weight_in_lm_fm() {
    let toy = common::toy(300, 10, 9);
    let engine = Engine::with_builtin(toy.index.clone(), RetrievalConfig::default()).unwrap();
    let dot_id = toy.corpus.vocabulary().id(".").unwrap();
    let ids = engine.encode_query(&toy.data.queries[0].text).unwrap();
    let cands = engine.candidates(&ids).unwrap();
    let pool = score::score_candidates(&cands, engine.index());
    let dot = pool.iter().find(|n| n.tokens == [dot_id]).unwrap();
    assert_eq!(dot.weight, 0.0);
    for d in score::rank_lm_fm(&cands, engine.index(), &ScoreOptions::default()) {
        assert!(d.evidence.iter().all(|e| e.tokens != [dot_id]));
    }
}

#[test]
fn pooled_invariants_on_toy_queries() {
    let toy = common::toy(300, 20, 11);
    let engine = Engine::with_builtin(toy.index.clone(), RetrievalConfig::default()).unwrap();
    let opts = ScoreOptions::default();
    for q in &toy.data.queries {
        let ids = engine.encode_query(&q.text).unwrap();
        let cands = engine.candidates(&ids).unwrap();
        let pool = score::score_candidates(&cands, engine.index());
        let seen: HashSet<&Vec<TokenId>> = pool.iter().map(|n| &n.tokens).collect();
        assert_eq!(seen.len(), pool.len(), "pool has duplicates");
        for n in &pool {
            assert!(n.weight >= 0.0 && n.weight.is_finite());
            assert!((0.0..=1.0).contains(&n.prob_uncond));
        }
        // a hypothesis is never more likely than its prefixes
        for h in &cands.hypotheses {
            for p in &cands.hypotheses {
                if p.kind == h.kind
                    && p.tokens.len() < h.tokens.len()
                    && h.tokens.starts_with(&p.tokens)
                {
                    assert!(h.logprob <= p.logprob + 1e-12);
                }
            }
        }
        for d in score::rank_intersective(&cands, engine.index(), &opts) {
            assert!(d.score > 0.0);
            for e in &d.evidence {
                assert!(e.cover >= 1.0 - opts.beta - 1e-12 && e.cover <= 1.0 + 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn weight_is_non_negative_and_monotone(
        pc in 0.0f64..=1.0,
        pu in 0.0f64..=1.0,
        d in 0.0f64..0.5,
    ) {
        let w = score::ngram_weight(pc, pu);
        prop_assert!(w >= 0.0 && w.is_finite());
        prop_assert!(score::ngram_weight((pc + d).min(1.0), pu) >= w);
        prop_assert!(score::ngram_weight(pc, (pu + d).min(1.0)) <= w);
    }

    #[test]
    fn coverage_stays_in_bounds(
        ngram in prop::collection::vec(7u32..15, 1..6),
        covered in prop::collection::hash_set(7u32..15, 0..8),
        beta in 0.0f64..=1.0,
    ) {
        let c = score::coverage_weight(&ngram, &covered, beta).unwrap();
        prop_assert!(c >= 1.0 - beta - 1e-12 && c <= 1.0 + 1e-12);
    }
}
