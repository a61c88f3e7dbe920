//! Run files, relevance judgements and retrieval metrics.
//!
//! A run file is tab-separated `query_id doc_id rank score mode`, one record
//! per line. Qrels are line-delimited JSON records
//! `{query_id, gold_doc_ids, gold_page_ids?, answers?}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::score::DocScore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub mode: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub records: Vec<RunRecord>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a ranking for one query, ranks starting at 1.
    pub fn push_ranking(&mut self, query_id: &str, ranking: &[DocScore], mode: &str) {
        for (i, d) in ranking.iter().enumerate() {
            self.records.push(RunRecord {
                query_id: query_id.to_string(),
                doc_id: d.doc_id.clone(),
                rank: i + 1,
                score: d.score,
                mode: mode.to_string(),
            });
        }
    }

    /// Records grouped by query, each list sorted by rank.
    pub fn by_query(&self) -> BTreeMap<&str, Vec<&RunRecord>> {
        let mut out: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(&r.query_id).or_default().push(r);
        }
        for list in out.values_mut() {
            list.sort_by_key(|r| r.rank);
        }
        out
    }

    /// Checks that ranks run 1..=n per query and scores never increase.
    pub fn validate(&self) -> Result<()> {
        for (q, list) in self.by_query() {
            for (i, r) in list.iter().enumerate() {
                if r.rank != i + 1 {
                    return Err(Error::Eval(format!(
                        "query {q:?}: ranks are not contiguous from 1 (found {} at position {})",
                        r.rank,
                        i + 1
                    )));
                }
            }
            if list.windows(2).any(|w| w[1].score > w[0].score) {
                return Err(Error::Eval(format!(
                    "query {q:?}: scores increase with rank"
                )));
            }
        }
        Ok(())
    }

    pub fn write_tsv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.query_id, r.doc_id, r.rank, r.score, r.mode
            )?;
        }
        Ok(())
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(bad(format!(
                    "expected 5 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            records.push(RunRecord {
                query_id: fields[0].to_string(),
                doc_id: fields[1].to_string(),
                rank: fields[2]
                    .parse()
                    .map_err(|e| bad(format!("bad rank {:?}: {e}", fields[2])))?,
                score: fields[3]
                    .parse()
                    .map_err(|e| bad(format!("bad score {:?}: {e}", fields[3])))?,
                mode: fields[4].to_string(),
            });
        }
        Ok(RunFile { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelsEntry {
    pub query_id: String,
    pub gold_doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_page_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    entries: BTreeMap<String, QrelsEntry>,
}

impl Qrels {
    pub fn new(entries: impl IntoIterator<Item = QrelsEntry>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            let id = e.query_id.clone();
            if map.insert(id.clone(), e).is_some() {
                return Err(Error::Eval(format!("query {id:?} appears twice in qrels")));
            }
        }
        Ok(Qrels { entries: map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(entries)
    }

    pub fn get(&self, query_id: &str) -> Option<&QrelsEntry> {
        self.entries.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QrelsEntry> {
        self.entries.values()
    }
}

/// Passage texts and the passage-to-page mapping, taken from the corpus
/// records.
#[derive(Debug, Clone, Default)]
pub struct Passages {
    texts: HashMap<String, String>,
    pages: HashMap<String, String>,
}

impl Passages {
    pub fn from_records(records: &[CorpusRecord]) -> Self {
        let mut out = Passages::default();
        for r in records {
            out.texts.insert(r.id.clone(), normalize(&r.text));
            if let Some(p) = &r.page_id {
                out.pages.insert(r.id.clone(), p.clone());
            }
        }
        out
    }

    /// Page of a passage; the passage itself when unmapped.
    pub fn page_of<'a>(&'a self, doc_id: &'a str) -> &'a str {
        self.pages.get(doc_id).map(String::as_str).unwrap_or(doc_id)
    }

    fn contains_answer(&self, doc_id: &str, answers: &[String]) -> bool {
        self.texts.get(doc_id).is_some_and(|text| {
            answers.iter().any(|a| {
                let a = normalize(a);
                !a.is_empty() && text.contains(&a)
            })
        })
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Per-query ranked doc ids for every qrels query, failing on run queries
/// that have no judgements.
fn aligned<'a>(run: &'a RunFile, qrels: &'a Qrels) -> Result<Vec<(&'a QrelsEntry, Vec<&'a str>)>> {
    let by_query = run.by_query();
    if let Some(q) = by_query.keys().find(|q| qrels.get(q).is_none()) {
        return Err(Error::Eval(format!("query {q:?} is missing from qrels")));
    }
    if qrels.is_empty() {
        return Err(Error::Eval("qrels are empty".into()));
    }
    Ok(qrels
        .iter()
        .map(|e| {
            let docs = by_query
                .get(e.query_id.as_str())
                .map(|l| l.iter().map(|r| r.doc_id.as_str()).collect())
                .unwrap_or_default();
            (e, docs)
        })
        .collect())
}

/// Fraction of queries with an answer-bearing passage in the top `k`.
pub fn accuracy_at_k(run: &RunFile, qrels: &Qrels, passages: &Passages, k: usize) -> Result<f64> {
    let rows = aligned(run, qrels)?;
    let mut hits = 0;
    for (e, docs) in &rows {
        let answers = e
            .answers
            .as_ref()
            .ok_or_else(|| Error::Eval(format!("query {:?} has no answers", e.query_id)))?;
        if docs
            .iter()
            .take(k)
            .any(|d| passages.contains_answer(d, answers))
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / rows.len() as f64)
}

/// Fraction of queries with a gold document in the top `k`.
pub fn hits_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<f64> {
    let rows = aligned(run, qrels)?;
    let hits = rows
        .iter()
        .filter(|(e, docs)| {
            docs.iter()
                .take(k)
                .any(|d| e.gold_doc_ids.iter().any(|g| g == d))
        })
        .count();
    Ok(hits as f64 / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Passage,
    Page,
}

/// Macro-averaged precision over the top `R` results, `R` being the number
/// of distinct gold items of the query.
pub fn r_precision(
    run: &RunFile,
    qrels: &Qrels,
    granularity: Granularity,
    passages: Option<&Passages>,
) -> Result<f64> {
    let rows = aligned(run, qrels)?;
    let default = Passages::default();
    let passages = passages.unwrap_or(&default);
    let mut total = 0.0;
    for (e, docs) in &rows {
        let (gold, ranked): (Vec<&str>, Vec<&str>) = match granularity {
            Granularity::Passage => (
                e.gold_doc_ids.iter().map(String::as_str).collect(),
                docs.clone(),
            ),
            Granularity::Page => {
                let gold = match &e.gold_page_ids {
                    Some(pages) => pages.iter().map(String::as_str).collect(),
                    None => e.gold_doc_ids.iter().map(|d| passages.page_of(d)).collect(),
                };
                (gold, docs.iter().map(|d| passages.page_of(d)).collect())
            }
        };
        let gold: HashSet<&str> = gold.into_iter().collect();
        if gold.is_empty() {
            return Err(Error::Eval(format!(
                "query {:?} has no gold items",
                e.query_id
            )));
        }
        let mut seen = HashSet::new();
        let top: Vec<&str> = ranked
            .into_iter()
            .filter(|d| seen.insert(*d))
            .take(gold.len())
            .collect();
        let found = top.iter().filter(|d| gold.contains(*d)).count();
        total += found as f64 / gold.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub queries: usize,
    pub hits: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub accuracy: BTreeMap<usize, f64>,
    pub r_precision_passage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_precision_page: Option<f64>,
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "queries\t{}", self.queries).unwrap();
        for (k, v) in &self.hits {
            writeln!(s, "hits@{k}\t{v:.4}").unwrap();
        }
        for (k, v) in &self.accuracy {
            writeln!(s, "accuracy@{k}\t{v:.4}").unwrap();
        }
        writeln!(s, "r_precision_passage\t{:.4}", self.r_precision_passage).unwrap();
        if let Some(v) = self.r_precision_page {
            writeln!(s, "r_precision_page\t{v:.4}").unwrap();
        }
        s
    }
}

/// Computes every metric the inputs allow. Accuracy needs answers for all
/// queries and passage texts; page-level R-precision needs passages or
/// gold page ids.
pub fn evaluate(
    run: &RunFile,
    qrels: &Qrels,
    passages: Option<&Passages>,
    ks: &[usize],
) -> Result<Report> {
    run.validate()?;
    let queries = aligned(run, qrels)?.len();
    let mut hits = BTreeMap::new();
    let mut accuracy = BTreeMap::new();
    let with_answers = qrels.iter().all(|e| e.answers.is_some());
    for &k in ks {
        hits.insert(k, hits_at_k(run, qrels, k)?);
        if let (Some(p), true) = (passages, with_answers) {
            accuracy.insert(k, accuracy_at_k(run, qrels, p, k)?);
        }
    }
    let page_level = passages.is_some() || qrels.iter().all(|e| e.gold_page_ids.is_some());
    Ok(Report {
        queries,
        hits,
        accuracy,
        r_precision_passage: r_precision(run, qrels, Granularity::Passage, passages)?,
        r_precision_page: if page_level {
            Some(r_precision(run, qrels, Granularity::Page, passages)?)
        } else {
            None
        },
    })
}
