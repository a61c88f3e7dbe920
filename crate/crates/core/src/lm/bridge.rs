//! Client for an out-of-process model serving next-token log-probabilities.
//!
//! The wire format is one JSON object per line over TCP (`host:port`) or a
//! unix socket (`unix:/path`). The client opens with a handshake carrying
//! the schema version, the vocabulary hash and size; the server answers with
//! its model name or an error. After that every request names a session:
//!
//! ```text
//! {"op":"start","session_id":3,"query_ids":[12,40]}
//! {"op":"advance","session_id":3,"token":17}
//! {"op":"next","session_id":3}
//! {"session_id":3,"logprobs":{"ids":[17,9],"logprobs":[-0.3,-1.9],"remainder":0.11}}
//! ```
//!
//! `logprobs` is either a dense array over the vocabulary or a sparse top-m
//! object whose `remainder` probability mass is spread uniformly over the ids
//! that were not sent. A response carrying `error` fails the call.
//!
//! Remote decoder state is mutated by `advance`, so a local session owns its
//! remote session until one child claims it; other children replay their
//! history into a fresh remote session when first queried.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
#[cfg(unix)]
use std::os::unix::net::UnixStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{LanguageModel, LogProbVector};
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

pub const SCHEMA_VERSION: u32 = 1;

/// Normalization tolerance applied after densification.
const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub schema_version: u32,
    pub vocab_hash: String,
    pub vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BridgeRequest {
    Handshake(Handshake),
    Start {
        session_id: u64,
        query_ids: Vec<TokenId>,
    },
    Next {
        session_id: u64,
    },
    Advance {
        session_id: u64,
        token: TokenId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BridgeLogprobs {
    Dense(Vec<f64>),
    Sparse {
        ids: Vec<TokenId>,
        logprobs: Vec<f64>,
        remainder: f64,
    },
}

impl BridgeLogprobs {
    /// Expands to a dense vector of `vocab_size` entries and checks that it
    /// is a distribution.
    pub fn densify(&self, vocab_size: usize) -> Result<LogProbVector> {
        let dense = match self {
            BridgeLogprobs::Dense(values) => {
                if values.len() != vocab_size {
                    return Err(Error::Bridge(format!(
                        "dense logprobs have {} entries, vocabulary has {vocab_size}",
                        values.len()
                    )));
                }
                values.clone()
            }
            BridgeLogprobs::Sparse {
                ids,
                logprobs,
                remainder,
            } => {
                if ids.len() != logprobs.len() {
                    return Err(Error::Bridge(
                        "sparse ids and logprobs differ in length".into(),
                    ));
                }
                if !(0.0..=1.0 + NORM_TOLERANCE).contains(remainder) {
                    return Err(Error::Bridge(format!(
                        "remainder mass {remainder} out of range"
                    )));
                }
                let mut sent = vec![false; vocab_size];
                for &id in ids {
                    match sent.get_mut(id as usize) {
                        Some(s) if !*s => *s = true,
                        Some(_) => return Err(Error::Bridge(format!("id {id} sent twice"))),
                        None => return Err(Error::Bridge(format!("id {id} outside vocabulary"))),
                    }
                }
                let unsent = vocab_size - ids.len();
                let fill = if unsent == 0 || *remainder <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (remainder / unsent as f64).ln()
                };
                let mut out = vec![fill; vocab_size];
                for (&id, &lp) in ids.iter().zip(logprobs) {
                    out[id as usize] = lp;
                }
                out
            }
        };
        if dense.iter().any(|l| l.is_nan() || *l > NORM_TOLERANCE) {
            return Err(Error::Bridge(
                "logprobs contain NaN or positive entries".into(),
            ));
        }
        let v = LogProbVector::new(dense);
        let sum = v.exp_sum();
        if (sum - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Bridge(format!("logprobs sum to {sum}, not 1")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub session_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<BridgeLogprobs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Stream {
    Tcp(TcpStream),
    #[cfg(unix)]
    Unix(UnixStream),
}

impl Stream {
    fn try_clone(&self) -> std::io::Result<Stream> {
        Ok(match self {
            Stream::Tcp(s) => Stream::Tcp(s.try_clone()?),
            #[cfg(unix)]
            Stream::Unix(s) => Stream::Unix(s.try_clone()?),
        })
    }
}

impl std::io::Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            #[cfg(unix)]
            Stream::Unix(s) => s.flush(),
        }
    }
}

struct Connection {
    reader: BufReader<Stream>,
    writer: Stream,
    line: String,
}

impl Connection {
    fn send<T: Serialize>(&mut self, message: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec(message).map_err(|e| Error::Bridge(e.to_string()))?;
        bytes.push(b'\n');
        self.writer.write_all(&bytes)?;
        self.writer.flush()?;
        Ok(())
    }

    fn receive<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T> {
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(Error::Bridge("connection closed by server".into()));
        }
        serde_json::from_str(self.line.trim_end())
            .map_err(|e| Error::Bridge(format!("malformed response: {e}")))
    }

    fn call(&mut self, request: &BridgeRequest, session_id: u64) -> Result<BridgeResponse> {
        self.send(request)?;
        let response: BridgeResponse = self.receive()?;
        if let Some(err) = response.error {
            return Err(Error::Bridge(err));
        }
        if response.session_id != session_id {
            return Err(Error::Bridge(format!(
                "response for session {} while waiting for {session_id}",
                response.session_id
            )));
        }
        Ok(response)
    }
}

pub struct BridgeLm {
    conn: Mutex<Connection>,
    next_id: AtomicU64,
    vocab_size: usize,
    model: String,
}

#[derive(Debug, Clone)]
pub struct BridgeSession {
    query: Arc<[TokenId]>,
    history: Vec<TokenId>,
    remote: Arc<Mutex<Option<u64>>>,
}

impl BridgeSession {
    pub fn history(&self) -> &[TokenId] {
        &self.history
    }
}

impl BridgeLm {
    /// Connects to `address` and performs the handshake for `vocab`.
    pub fn connect(address: &str, vocab: &Vocabulary) -> Result<Self> {
        let stream = if let Some(path) = address.strip_prefix("unix:") {
            #[cfg(unix)]
            {
                Stream::Unix(UnixStream::connect(path).map_err(|e| Error::io(path, e))?)
            }
            #[cfg(not(unix))]
            {
                return Err(Error::Bridge(format!("unix sockets unsupported: {path}")));
            }
        } else {
            let s = TcpStream::connect(address)
                .map_err(|e| Error::Bridge(format!("cannot connect to {address}: {e}")))?;
            s.set_nodelay(true)?;
            Stream::Tcp(s)
        };
        let mut conn = Connection {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            line: String::new(),
        };
        let hello = Handshake {
            schema_version: SCHEMA_VERSION,
            vocab_hash: vocab.content_hash(),
            vocab_size: vocab.len(),
            model: None,
            error: None,
        };
        conn.send(&BridgeRequest::Handshake(hello.clone()))?;
        let reply: Handshake = conn.receive()?;
        if let Some(err) = reply.error {
            return Err(Error::Bridge(format!("handshake refused: {err}")));
        }
        if reply.schema_version != SCHEMA_VERSION {
            return Err(Error::Bridge(format!(
                "server speaks schema {}, client {SCHEMA_VERSION}",
                reply.schema_version
            )));
        }
        if reply.vocab_hash != hello.vocab_hash || reply.vocab_size != hello.vocab_size {
            return Err(Error::Bridge(
                "server vocabulary does not match the index".into(),
            ));
        }
        Ok(BridgeLm {
            conn: Mutex::new(conn),
            next_id: AtomicU64::new(1),
            vocab_size: hello.vocab_size,
            model: reply.model.unwrap_or_default(),
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model
    }

    fn open_remote(&self, conn: &mut Connection, session: &BridgeSession) -> Result<u64> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        conn.call(
            &BridgeRequest::Start {
                session_id: id,
                query_ids: session.query.to_vec(),
            },
            id,
        )?;
        for &token in &session.history {
            conn.call(
                &BridgeRequest::Advance {
                    session_id: id,
                    token,
                },
                id,
            )?;
        }
        Ok(id)
    }
}

impl LanguageModel for BridgeLm {
    type Session = BridgeSession;

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn start(&self, query: &[TokenId]) -> Result<BridgeSession> {
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(BridgeSession {
            query: query.into(),
            history: Vec::new(),
            remote: Arc::new(Mutex::new(None)),
        })
    }

    fn next_logprobs(&self, session: &BridgeSession) -> Result<LogProbVector> {
        let mut remote = session.remote.lock().unwrap();
        let mut conn = self.conn.lock().unwrap();
        let id = match *remote {
            Some(id) => id,
            None => {
                let id = self.open_remote(&mut conn, session)?;
                *remote = Some(id);
                id
            }
        };
        let response = conn.call(&BridgeRequest::Next { session_id: id }, id)?;
        drop(conn);
        response
            .logprobs
            .ok_or_else(|| Error::Bridge("next response without logprobs".into()))?
            .densify(self.vocab_size)
    }

    fn advance(&self, session: &BridgeSession, token: TokenId) -> Result<BridgeSession> {
        if token as usize >= self.vocab_size {
            return Err(Error::TokenOutOfAlphabet {
                token,
                alphabet: self.vocab_size,
            });
        }
        let mut history = session.history.clone();
        history.push(token);
        let claimed = session.remote.lock().unwrap().take();
        let remote = match claimed {
            Some(id) => {
                self.conn.lock().unwrap().call(
                    &BridgeRequest::Advance {
                        session_id: id,
                        token,
                    },
                    id,
                )?;
                Some(id)
            }
            None => None,
        };
        Ok(BridgeSession {
            query: session.query.clone(),
            history,
            remote: Arc::new(Mutex::new(remote)),
        })
    }
}

/// A minimal server answering every `next` with a uniform distribution, sent
/// sparsely. Used to exercise the client in tests.
#[doc(hidden)]
pub mod stub {
    use super::*;
    use std::collections::HashMap;
    use std::net::TcpListener;
    use std::thread::JoinHandle;

    /// Binds an ephemeral local port and serves connections on a background
    /// thread until the process exits. Returns the address.
    pub fn spawn_uniform(vocab: &Vocabulary, top_m: usize) -> (String, JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let hash = vocab.content_hash();
        let size = vocab.len();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let hash = hash.clone();
                std::thread::spawn(move || {
                    let _ = serve(stream, &hash, size, top_m);
                });
            }
        });
        (addr, handle)
    }

    fn serve(stream: TcpStream, hash: &str, size: usize, top_m: usize) -> std::io::Result<()> {
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = stream;
        let mut sessions: HashMap<u64, Vec<TokenId>> = HashMap::new();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Ok(());
            }
            let reply = match serde_json::from_str::<BridgeRequest>(line.trim_end()) {
                Err(e) => serde_json::to_string(&BridgeResponse {
                    session_id: 0,
                    logprobs: None,
                    error: Some(format!("malformed request: {e}")),
                }),
                Ok(BridgeRequest::Handshake(h)) => {
                    let error = (h.vocab_hash != hash || h.vocab_size != size)
                        .then(|| "vocabulary mismatch".to_string());
                    serde_json::to_string(&Handshake {
                        schema_version: SCHEMA_VERSION,
                        vocab_hash: hash.to_string(),
                        vocab_size: size,
                        model: Some("uniform-stub".into()),
                        error,
                    })
                }
                Ok(BridgeRequest::Start {
                    session_id,
                    query_ids,
                }) => {
                    sessions.insert(session_id, query_ids);
                    serde_json::to_string(&BridgeResponse {
                        session_id,
                        logprobs: None,
                        error: None,
                    })
                }
                Ok(BridgeRequest::Advance { session_id, token }) => {
                    let error = match sessions.get_mut(&session_id) {
                        Some(h) => {
                            h.push(token);
                            None
                        }
                        None => Some(format!("unknown session {session_id}")),
                    };
                    serde_json::to_string(&BridgeResponse {
                        session_id,
                        logprobs: None,
                        error,
                    })
                }
                Ok(BridgeRequest::Next { session_id }) => {
                    let m = top_m.min(size);
                    let lp = -(size as f64).ln();
                    let response = if !sessions.contains_key(&session_id) {
                        BridgeResponse {
                            session_id,
                            logprobs: None,
                            error: Some(format!("unknown session {session_id}")),
                        }
                    } else {
                        BridgeResponse {
                            session_id,
                            logprobs: Some(BridgeLogprobs::Sparse {
                                ids: (0..m as TokenId).collect(),
                                logprobs: vec![lp; m],
                                remainder: (size - m) as f64 / size as f64,
                            }),
                            error: None,
                        }
                    };
                    serde_json::to_string(&response)
                }
            }
            .unwrap();
            writer.write_all(reply.as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
    }
}
