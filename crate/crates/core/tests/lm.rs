mod common;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use fmgen::decode::{self, DecodeConfig};
use fmgen::lm::{
    self, sequence_logprob, BridgeLm, BridgeLogprobs, BridgeRequest, BridgeResponse, BuiltinLm,
    Handshake, SCHEMA_VERSION,
};
use fmgen::{Corpus, FmIndex, LanguageModel, LogProbVector, TokenId, Vocabulary};

#[test]
fn held_out_perplexity_beats_uniform() {
    let toy = common::toy(1000, 1, 31);
    let docs = toy.corpus.documents();
    let train = Corpus::new(docs[..900].to_vec(), toy.corpus.vocabulary().clone()).unwrap();
    let unk = toy.corpus.vocabulary().reserved().unk;
    for order in [1, 2, 3] {
        let lm = BuiltinLm::fit(&train, order, 0.0).unwrap();
        let (mut nll, mut n) = (0.0, 0usize);
        for d in &docs[900..] {
            nll -= sequence_logprob(&lm, &[unk], &d.body).unwrap();
            n += d.body.len();
        }
        let per_token = nll / n as f64;
        let uniform = (lm.vocab_size() as f64).ln();
        assert!(
            per_token < uniform,
            "order {order}: {per_token} vs {uniform}"
        );
    }
}

fn max_diff(a: &LogProbVector, b: &LogProbVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Serves `model` over the line protocol with dense distributions.
fn serve_model(model: Arc<BuiltinLm>, vocab: &Vocabulary) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let (hash, size) = (vocab.content_hash(), vocab.len());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let (model, hash) = (model.clone(), hash.clone());
            std::thread::spawn(move || serve(stream, &model, &hash, size));
        }
    });
    addr
}

fn serve(stream: TcpStream, model: &BuiltinLm, hash: &str, size: usize) {
    stream.set_nodelay(true).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut sessions = HashMap::new();
    let mut line = String::new();
    while reader.read_line(&mut line).unwrap_or(0) > 0 {
        let reply = match serde_json::from_str::<BridgeRequest>(line.trim_end()).unwrap() {
            BridgeRequest::Handshake(_) => serde_json::to_string(&Handshake {
                schema_version: SCHEMA_VERSION,
                vocab_hash: hash.into(),
                vocab_size: size,
                model: Some("bigram".into()),
                error: None,
            }),
            BridgeRequest::Start {
                session_id,
                query_ids,
            } => {
                sessions.insert(session_id, model.start(&query_ids).unwrap());
                serde_json::to_string(&BridgeResponse {
                    session_id,
                    logprobs: None,
                    error: None,
                })
            }
            BridgeRequest::Advance { session_id, token } => {
                let s = model.advance(&sessions[&session_id], token).unwrap();
                sessions.insert(session_id, s);
                serde_json::to_string(&BridgeResponse {
                    session_id,
                    logprobs: None,
                    error: None,
                })
            }
            BridgeRequest::Next { session_id } => {
                let lp = model.next_logprobs(&sessions[&session_id]).unwrap();
                serde_json::to_string(&BridgeResponse {
                    session_id,
                    logprobs: Some(BridgeLogprobs::Dense(lp.into_inner())),
                    error: None,
                })
            }
        };
        writer.write_all(reply.unwrap().as_bytes()).unwrap();
        writer.write_all(b"\n").unwrap();
        line.clear();
    }
}

#[test]
fn remote_model_decodes_like_the_local_one() {
    let toy = common::toy(60, 5, 37);
    let local = Arc::new(BuiltinLm::fit(&toy.corpus, 2, 2.0).unwrap());
    let addr = serve_model(local.clone(), toy.corpus.vocabulary());
    let remote = BridgeLm::connect(&addr, toy.corpus.vocabulary()).unwrap();
    assert_eq!(remote.model_name(), "bigram");
    let cfg = DecodeConfig {
        beam: 5,
        steps: 4,
        ..Default::default()
    };
    let tokenizer = fmgen::WordTokenizer;
    for q in &toy.data.queries {
        let ids: Vec<TokenId> = fmgen::Tokenizer::tokenize(&tokenizer, &q.text)
            .iter()
            .map(|w| toy.corpus.vocabulary().id_or_unk(w))
            .collect();
        let a = decode::constrained_beam_search(&ids, &toy.index, local.as_ref(), &cfg).unwrap();
        let b = decode::constrained_beam_search(&ids, &toy.index, &remote, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.hypotheses.iter().zip(&b.hypotheses) {
            assert_eq!(
                (&x.tokens, x.kind, x.range, x.finished),
                (&y.tokens, y.kind, y.range, y.finished)
            );
            assert!((x.logprob - y.logprob).abs() < 1e-9);
        }
        assert!(max_diff(&a.first_step, &b.first_step) < 1e-12);
    }
}

#[test]
fn forked_sessions_keep_their_own_history() {
    let toy = common::toy(50, 1, 41);
    let local = Arc::new(BuiltinLm::fit(&toy.corpus, 2, 2.0).unwrap());
    let addr = serve_model(local.clone(), toy.corpus.vocabulary());
    let remote = BridgeLm::connect(&addr, toy.corpus.vocabulary()).unwrap();
    let body = &toy.corpus.documents()[0].body;
    let root = remote.start(&body[..2]).unwrap();
    let (x, y) = (body[3], body[4]);
    let left = remote.advance(&root, x).unwrap();
    let right = remote.advance(&root, y).unwrap();
    let deeper = remote.advance(&left, y).unwrap();
    let lroot = local.start(&body[..2]).unwrap();
    let cases = [
        (&root, lroot.clone()),
        (&left, local.advance(&lroot, x).unwrap()),
        (&right, local.advance(&lroot, y).unwrap()),
        (
            &deeper,
            local
                .advance(&local.advance(&lroot, x).unwrap(), y)
                .unwrap(),
        ),
    ];
    // query in reverse order so that sessions are reopened by replay
    for (i, (r, l)) in cases.iter().enumerate().rev() {
        let (a, b) = (
            remote.next_logprobs(r).unwrap(),
            local.next_logprobs(l).unwrap(),
        );
        assert!(max_diff(&a, &b) < 1e-12, "case {i}");
    }
}

#[test]
fn sparse_stub_decoding_is_attested_and_normalized() {
    let toy = common::toy(200, 5, 43);
    let vocab = toy.corpus.vocabulary();
    let (addr, _server) = lm::stub::spawn_uniform(vocab, 5);
    let remote = BridgeLm::connect(&addr, vocab).unwrap();
    let s = remote.start(&[vocab.reserved().unk]).unwrap();
    let lp = remote.next_logprobs(&s).unwrap();
    assert!((lp.exp_sum() - 1.0).abs() < 1e-9);
    assert_eq!(lp.len(), vocab.len());
    for cfg in [
        DecodeConfig::default(),
        DecodeConfig {
            constrained: false,
            ..Default::default()
        },
    ] {
        let set = decode::constrained_beam_search(&[7, 8], &toy.index, &remote, &cfg).unwrap();
        for h in &set.hypotheses {
            assert!(toy.index.count(&h.tokens) > 0);
        }
    }
}

#[test]
fn mismatched_vocabulary_is_refused() {
    let toy = common::toy(50, 1, 47);
    let (addr, _server) = lm::stub::spawn_uniform(toy.corpus.vocabulary(), 5);
    let (other, _) = common::vocab(3);
    assert!(BridgeLm::connect(&addr, &other).is_err());
    assert!(BridgeLm::connect("127.0.0.1:1", toy.corpus.vocabulary()).is_err());
}

#[test]
fn index_and_corpus_give_the_same_model() {
    let toy = common::toy(100, 1, 53);
    let ix = FmIndex::build(&toy.corpus, 8).unwrap();
    let a = BuiltinLm::fit(&toy.corpus, 3, 2.0).unwrap();
    let b = BuiltinLm::fit_index(&ix, 3, 2.0).unwrap();
    let q = &toy.corpus.documents()[3].body[..4];
    let doc = &toy.corpus.documents()[7].body;
    assert_eq!(
        sequence_logprob(&a, q, doc).unwrap(),
        sequence_logprob(&b, q, doc).unwrap()
    );
}
