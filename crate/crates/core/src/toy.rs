//! Deterministic synthetic corpora for tests, benchmarks and the bundled
//! demo data.
//!
//! Pages describe made-up entities: a two-word name used as title, a
//! category, a location and one fact per passage (`<name> <relation>
//! <value>`), padded with Zipf-distributed filler words. Each query asks for
//! the relation of one passage's fact and is answered by that passage.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::eval::QrelsEntry;

const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

const FILLER_WORDS: usize = 3000;
const CATEGORIES: usize = 30;
const PLACES: usize = 200;
const RELATIONS: usize = 12;
const VALUES: usize = 4000;
/// Size of the name-word pool per page; names are pairs drawn from it, so single
/// name words are ambiguous.
const NAME_POOL_PER_PAGE: f64 = 0.8;

// disjoint index ranges per word class
const CATEGORY_BASE: usize = 10_000;
const PLACE_BASE: usize = 11_000;
const RELATION_BASE: usize = 12_000;
const VALUE_BASE: usize = 20_000;
const NAME_BASE: usize = 100_000;

/// Pseudo-word number `n`: bijective base-80 numeral over CV syllables, so
/// distinct numbers give distinct words.
pub fn word(n: usize) -> String {
    let syllables = CONSONANTS.len() * VOWELS.len();
    let mut n = n + 1;
    let mut out = String::new();
    while n > 0 {
        n -= 1;
        let s = n % syllables;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        n /= syllables;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub docs: usize,
    pub queries: usize,
    pub seed: u64,
    /// Filler words per passage, inclusive range.
    pub filler: (usize, usize),
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            docs: 1000,
            queries: 100,
            seed: 17,
            filler: (30, 60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyQuery {
    pub query_id: String,
    pub text: String,
    #[serde(skip)]
    pub gold_doc_id: String,
    #[serde(skip)]
    pub gold_page_id: String,
    #[serde(skip)]
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyData {
    pub records: Vec<CorpusRecord>,
    pub queries: Vec<ToyQuery>,
}

struct Filler {
    dist: WeightedIndex<f64>,
}

impl Filler {
    fn new() -> Self {
        let weights: Vec<f64> = (1..=FILLER_WORDS)
            .map(|r| 1.0 / (r as f64).powf(1.07))
            .collect();
        Filler {
            dist: WeightedIndex::new(weights).unwrap(),
        }
    }

    fn push(&self, rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<String>) {
        for _ in 0..n {
            out.push(word(self.dist.sample(rng)));
        }
    }
}

/// Generates pages until `config.docs` passages exist, then samples queries
/// from distinct passages.
pub fn generate(config: &ToyConfig) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let filler = Filler::new();
    let mut records = Vec::with_capacity(config.docs);
    let mut facts = Vec::with_capacity(config.docs);
    let name_pool = ((config.docs as f64 / 2.0 * NAME_POOL_PER_PAGE) as usize).max(8);
    let mut used = std::collections::HashSet::new();
    let mut page = 0;
    while records.len() < config.docs {
        let name = loop {
            let a = rng.gen_range(0..name_pool);
            let b = rng.gen_range(0..name_pool);
            if a != b && used.insert((a, b)) {
                break format!("{} {}", word(NAME_BASE + a), word(NAME_BASE + b));
            }
        };
        let category = word(CATEGORY_BASE + rng.gen_range(0..CATEGORIES));
        let place = word(PLACE_BASE + rng.gen_range(0..PLACES));
        let passages = rng.gen_range(1..=3).min(config.docs - records.len());
        let mut relations: Vec<usize> = (0..RELATIONS).collect();
        relations.shuffle(&mut rng);
        for (k, &r) in relations.iter().take(passages).enumerate() {
            let relation = word(RELATION_BASE + r);
            let value = word(VALUE_BASE + rng.gen_range(0..VALUES));
            let mut words: Vec<String> = Vec::new();
            if k == 0 {
                words.extend(
                    format!("{name} is a {category} in {place} .")
                        .split(' ')
                        .map(String::from),
                );
            }
            let n = rng.gen_range(config.filler.0..=config.filler.1);
            let split = rng.gen_range(0..=n);
            filler.push(&mut rng, split, &mut words);
            words.extend(
                format!("{name} {relation} {value} .")
                    .split(' ')
                    .map(String::from),
            );
            filler.push(&mut rng, n - split, &mut words);
            let doc_id = format!("p{page}_{k}");
            records.push(CorpusRecord {
                id: doc_id.clone(),
                title: name.clone(),
                text: words.join(" "),
                page_id: Some(format!("p{page}")),
            });
            facts.push((doc_id, format!("p{page}"), name.clone(), relation, value));
        }
        page += 1;
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);
    let queries = order
        .into_iter()
        .take(config.queries)
        .enumerate()
        .map(|(i, d)| {
            let (doc_id, page_id, name, relation, value) = &facts[d];
            let lead = ["what", "which", "tell me what"][rng.gen_range(0..3)];
            // a third of the queries only give one of the two name words
            let mut parts = name.split(' ');
            let (first, second) = (parts.next().unwrap(), parts.next().unwrap());
            let text = match rng.gen_range(0..6) {
                0 => format!("{lead} {relation} {first}"),
                1 => format!("{lead} {relation} {second}"),
                _ => format!("{lead} {relation} {name}"),
            };
            ToyQuery {
                query_id: format!("q{i}"),
                text,
                gold_doc_id: doc_id.clone(),
                gold_page_id: page_id.clone(),
                answer: value.clone(),
            }
        })
        .collect();
    ToyData { records, queries }
}

/// Pages of filler text totalling at least `tokens` body words.
pub fn filler_corpus(tokens: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler = Filler::new();
    let mut out = Vec::new();
    let mut total = 0;
    while total < tokens {
        let n = rng.gen_range(60..140).min(tokens - total).max(1);
        let mut words = Vec::with_capacity(n);
        filler.push(&mut rng, n, &mut words);
        let i = out.len();
        out.push(CorpusRecord {
            id: format!("d{i}"),
            title: format!(
                "{} {}",
                word(NAME_BASE + 2 * i),
                word(NAME_BASE + 2 * i + 1)
            ),
            text: words.join(" "),
            page_id: None,
        });
        total += n;
    }
    out
}

impl ToyData {
    pub fn qrels(&self) -> Vec<QrelsEntry> {
        self.queries
            .iter()
            .map(|q| QrelsEntry {
                query_id: q.query_id.clone(),
                gold_doc_ids: vec![q.gold_doc_id.clone()],
                gold_page_ids: Some(vec![q.gold_page_id.clone()]),
                answers: Some(vec![q.answer.clone()]),
            })
            .collect()
    }

    /// Writes `corpus.jsonl`, `queries.jsonl` and `qrels.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("corpus.jsonl"), &self.records)?;
        write_jsonl(&dir.join("queries.jsonl"), &self.queries)?;
        write_jsonl(&dir.join("qrels.jsonl"), &self.qrels())
    }
}

/// A query line: `{query_id, text}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(std::io::Error::from)?;
        buf.write_all(b"\n")?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
