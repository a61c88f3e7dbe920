//! Corpus ingestion and document encoding.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;
use crate::vocab::{TokenId, Vocabulary};

/// One line of the input corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub title: Vec<TokenId>,
    pub body: Vec<TokenId>,
    /// Page the passage belongs to; `None` means the passage is its own page.
    pub page_id: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: Vec<TokenId>, body: Vec<TokenId>) -> Self {
        Document {
            doc_id: doc_id.into(),
            title,
            body,
            page_id: None,
        }
    }

    pub fn page(&self) -> &str {
        self.page_id.as_deref().unwrap_or(&self.doc_id)
    }
}

/// An immutable, validated collection of documents sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    vocabulary: Vocabulary,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocabulary: Vocabulary) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
            if doc.body.is_empty() {
                return Err(Error::EmptyBody(doc.doc_id.clone()));
            }
            for &t in doc.title.iter().chain(&doc.body) {
                if t as usize >= vocabulary.len() {
                    return Err(Error::TokenOutOfAlphabet {
                        token: t,
                        alphabet: vocabulary.len(),
                    });
                }
                if vocabulary.is_reserved(t) {
                    return Err(Error::ReservedToken(t));
                }
            }
        }
        Ok(Corpus {
            documents,
            vocabulary,
            by_id,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.documents[i])
    }

    /// Sum of body lengths over all documents.
    pub fn total_body_tokens(&self) -> u64 {
        self.documents.iter().map(|d| d.body.len() as u64).sum()
    }

    pub fn encoded(&self) -> impl Iterator<Item = Vec<TokenId>> + '_ {
        self.documents
            .iter()
            .map(|d| encode_document(d, &self.vocabulary))
    }
}

/// `title ++ [sep] ++ body`.
pub fn encode_document(doc: &Document, vocab: &Vocabulary) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(doc.title.len() + doc.body.len() + 1);
    out.extend_from_slice(&doc.title);
    out.push(vocab.reserved().sep);
    out.extend_from_slice(&doc.body);
    out
}

/// Splits an encoded document back into `(title, body)` at the first separator.
pub fn decode_document(
    encoded: &[TokenId],
    vocab: &Vocabulary,
) -> Result<(Vec<TokenId>, Vec<TokenId>)> {
    let sep = vocab.reserved().sep;
    let at = encoded
        .iter()
        .position(|&t| t == sep)
        .ok_or_else(|| Error::InvalidArgument("encoded document has no separator".into()))?;
    Ok((encoded[..at].to_vec(), encoded[at + 1..].to_vec()))
}

/// Tokenizes records into documents, growing a vocabulary as it goes.
pub struct CorpusBuilder<'t> {
    tokenizer: &'t dyn Tokenizer,
    vocabulary: Vocabulary,
    documents: Vec<Document>,
    seen: HashMap<String, ()>,
}

impl<'t> CorpusBuilder<'t> {
    pub fn new(tokenizer: &'t dyn Tokenizer) -> Self {
        Self::with_vocabulary(tokenizer, Vocabulary::new())
    }

    /// Starts from an existing vocabulary; its ids are preserved and unseen
    /// tokens are appended.
    pub fn with_vocabulary(tokenizer: &'t dyn Tokenizer, vocabulary: Vocabulary) -> Self {
        CorpusBuilder {
            tokenizer,
            vocabulary,
            documents: Vec::new(),
            seen: HashMap::new(),
        }
    }

    pub fn push(&mut self, record: CorpusRecord) -> Result<()> {
        if self.seen.insert(record.id.clone(), ()).is_some() {
            return Err(Error::DuplicateDocId(record.id));
        }
        let title = self.ids(&record.title)?;
        let body = self.ids(&record.text)?;
        if body.is_empty() {
            return Err(Error::EmptyBody(record.id));
        }
        self.documents.push(Document {
            doc_id: record.id,
            title,
            body,
            page_id: record.page_id,
        });
        Ok(())
    }

    fn ids(&mut self, text: &str) -> Result<Vec<TokenId>> {
        self.tokenizer
            .tokenize(text)
            .iter()
            .map(|t| self.vocabulary.add(t))
            .collect()
    }

    pub fn finish(self) -> Result<Corpus> {
        Corpus::new(self.documents, self.vocabulary)
    }
}

/// Reads line-delimited `{id, title, text, page_id?}` records. Blank lines are
/// skipped; document order follows the file.
pub fn ingest_jsonl(
    path: &Path,
    tokenizer: &dyn Tokenizer,
    vocabulary: Option<Vocabulary>,
) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = match vocabulary {
        Some(v) => CorpusBuilder::with_vocabulary(tokenizer, v),
        None => CorpusBuilder::new(tokenizer),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        builder.push(record).map_err(|e| match e {
            Error::EmptyBody(id) => Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("empty text for document {id:?}"),
            },
            other => other,
        })?;
    }
    builder.finish()
}

/// Reads the raw records without tokenizing them.
pub fn read_records(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
