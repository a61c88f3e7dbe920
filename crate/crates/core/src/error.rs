use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::vocab::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Stream(#[from] io::Error),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),

    #[error("document {0:?} has an empty body")]
    EmptyBody(String),

    #[error("unknown document id {0:?}")]
    UnknownDocId(String),

    #[error("token id {token} is outside the alphabet (size {alphabet})")]
    TokenOutOfAlphabet { token: TokenId, alphabet: usize },

    #[error("reserved token id {0} is not allowed here")]
    ReservedToken(TokenId),

    #[error("alphabet of {size} symbols exceeds the wavelet tree bound of {bound}")]
    AlphabetTooLarge { size: usize, bound: usize },

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("invalid index file: {0}")]
    IndexFormat(String),

    #[error("index format version {found} is not supported (expected {expected})")]
    IndexVersion { found: u32, expected: u32 },

    #[error("index checksum mismatch")]
    Checksum,

    #[error(
        "probabilities must satisfy 0 <= freq <= total and total > 0 (freq {freq}, total {total})"
    )]
    InvalidFrequency { freq: u64, total: u64 },

    #[error("empty ngram")]
    EmptyNgram,

    #[error("empty query")]
    EmptyQuery,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("language model bridge: {0}")]
    Bridge(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
