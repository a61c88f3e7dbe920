//! Token vocabulary with a fixed block of reserved ids.
//!
//! File format: a header block of `#` lines declaring the reserved ids,
//! terminated by `#end`, followed by one token per line. The id of a token is
//! its line number counted from the first line after the header.
//!
//! ```text
//! #fmgen-vocab 1
//! #reserved eos 0
//! #reserved sep 1
//! ...
//! #end
//! <eos>
//! <sep>
//! ...
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

const HEADER: &str = "#fmgen-vocab 1";
const HEADER_END: &str = "#end";

/// Ids that never occur inside document titles or bodies.
///
/// `eos` terminates every encoded document and must be id 0 so that it sorts
/// below every other symbol in the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reserved {
    pub eos: TokenId,
    pub sep: TokenId,
    pub supervised: TokenId,
    pub unsupervised: TokenId,
    pub span: TokenId,
    pub title: TokenId,
    pub unk: TokenId,
}

impl Reserved {
    const NAMES: [&'static str; 7] = [
        "eos",
        "sep",
        "supervised",
        "unsupervised",
        "span",
        "title",
        "unk",
    ];

    fn ids(&self) -> [TokenId; 7] {
        [
            self.eos,
            self.sep,
            self.supervised,
            self.unsupervised,
            self.span,
            self.title,
            self.unk,
        ]
    }

    fn surface(name: &str) -> String {
        format!("<{name}>")
    }
}

impl Default for Reserved {
    fn default() -> Self {
        Reserved {
            eos: 0,
            sep: 1,
            supervised: 2,
            unsupervised: 3,
            span: 4,
            title: 5,
            unk: 6,
        }
    }
}

/// Bijection between surface tokens and dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    reserved: Reserved,
    reserved_mask: Vec<bool>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved ids.
    pub fn new() -> Self {
        let reserved = Reserved::default();
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            reserved,
            reserved_mask: Vec::new(),
        };
        for name in Reserved::NAMES {
            vocab.insert(Reserved::surface(name));
        }
        vocab.reserved_mask = vec![true; vocab.id_to_token.len()];
        vocab
    }

    fn insert(&mut self, token: String) -> TokenId {
        let id = self.id_to_token.len() as TokenId;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        id
    }

    /// Returns the id of `token`, adding it if unseen.
    pub fn add(&mut self, token: &str) -> Result<TokenId> {
        if let Some(&id) = self.token_to_id.get(token) {
            if self.is_reserved(id) {
                return Err(Error::ReservedToken(id));
            }
            return Ok(id);
        }
        if token.is_empty() || token.contains(['\n', '\r']) {
            return Err(Error::Vocabulary(format!("invalid token {token:?}")));
        }
        let id = self.insert(token.to_owned());
        self.reserved_mask.push(false);
        Ok(id)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    /// Content id of `token`, or the reserved `unk` id.
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        match self.id(token) {
            Some(id) if !self.is_reserved(id) => id,
            _ => self.reserved.unk,
        }
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn reserved(&self) -> &Reserved {
        &self.reserved
    }

    pub fn is_reserved(&self, id: TokenId) -> bool {
        self.reserved_mask
            .get(id as usize)
            .copied()
            .unwrap_or(false)
    }

    /// Number of non-reserved tokens.
    pub fn content_len(&self) -> usize {
        self.reserved_mask.iter().filter(|r| !**r).count()
    }

    /// Surface tokens joined by single spaces. Unknown ids render as `<unk>`.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or("<unk>"));
        }
        out
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for (name, id) in Reserved::NAMES.iter().zip(self.reserved.ids()) {
            let _ = writeln!(out, "#reserved {name} {id}");
        }
        out.push_str(HEADER_END);
        out.push('\n');
        for token in &self.id_to_token {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Vocabulary("missing header line".into()));
        }
        let mut declared: HashMap<String, TokenId> = HashMap::new();
        loop {
            let line = lines
                .next()
                .ok_or_else(|| Error::Vocabulary("unterminated header".into()))?;
            if line == HEADER_END {
                break;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("#reserved"), Some(name), Some(id), None) => {
                    let id = id
                        .parse::<TokenId>()
                        .map_err(|_| Error::Vocabulary(format!("bad reserved id in {line:?}")))?;
                    declared.insert(name.to_owned(), id);
                }
                _ => return Err(Error::Vocabulary(format!("bad header line {line:?}"))),
            }
        }
        let get = |name: &str| {
            declared
                .get(name)
                .copied()
                .ok_or_else(|| Error::Vocabulary(format!("reserved id {name:?} not declared")))
        };
        let reserved = Reserved {
            eos: get("eos")?,
            sep: get("sep")?,
            supervised: get("supervised")?,
            unsupervised: get("unsupervised")?,
            span: get("span")?,
            title: get("title")?,
            unk: get("unk")?,
        };
        if reserved.eos != 0 {
            return Err(Error::Vocabulary("eos must be id 0".into()));
        }

        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            reserved,
            reserved_mask: Vec::new(),
        };
        for line in lines {
            if vocab.token_to_id.contains_key(line) {
                return Err(Error::Vocabulary(format!("duplicate token {line:?}")));
            }
            vocab.insert(line.to_owned());
        }
        vocab.reserved_mask = vec![false; vocab.id_to_token.len()];
        let mut seen = Vec::new();
        for (name, id) in Reserved::NAMES.iter().zip(reserved.ids()) {
            let surface = vocab.token(id).ok_or_else(|| {
                Error::Vocabulary(format!("reserved id {id} ({name}) beyond vocabulary"))
            })?;
            if surface != Reserved::surface(name) || seen.contains(&id) {
                return Err(Error::Vocabulary(format!(
                    "reserved id {id} does not hold <{name}>"
                )));
            }
            seen.push(id);
            vocab.reserved_mask[id as usize] = true;
        }
        Ok(vocab)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the vocabulary file representation.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
