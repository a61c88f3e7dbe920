//! Index file format.
//!
//! ```text
//! magic        8 bytes  "FMGENIDX"
//! version      u32 LE
//! sa_rate      u32 LE
//! alphabet     u32 LE
//! payload_len  u64 LE
//! payload      payload_len bytes
//! checksum     32 bytes, SHA-256 of everything before it
//! ```
//!
//! Integers inside the payload are LEB128 varints; bitvector words are
//! little-endian u64s. Rank directories are rebuilt on load.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::bits::BitVector;
use super::wavelet::{symbol_width, WaveletTree};
use super::{DocTable, FmIndex};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"FMGENIDX";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn varint(&mut self, mut v: u64) {
        loop {
            let byte = (v & 0x7f) as u8;
            v >>= 7;
            if v == 0 {
                self.buf.push(byte);
                return;
            }
            self.buf.push(byte | 0x80);
        }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.varint(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    fn bitvector(&mut self, bv: &BitVector) {
        self.varint(bv.len() as u64);
        for w in bv.words() {
            self.buf.extend_from_slice(&w.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

fn truncated() -> Error {
    Error::IndexFormat("truncated file".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(truncated());
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.take(1)?[0];
            v |= ((byte & 0x7f) as u64) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::IndexFormat("varint overflow".into()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.varint()? as usize)
    }

    fn u32(&mut self) -> Result<u32> {
        u32::try_from(self.varint()?).map_err(|_| Error::IndexFormat("value exceeds u32".into()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| Error::IndexFormat("invalid utf-8".into()))
    }

    fn bitvector(&mut self) -> Result<BitVector> {
        let len = self.usize()?;
        let words = len.div_ceil(64);
        let raw = self.take(words.checked_mul(8).ok_or_else(truncated)?)?;
        let words = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(BitVector::from_words(words, len))
    }
}

fn checksum(data: &[u8]) -> [u8; CHECKSUM_LEN] {
    Sha256::digest(data).into()
}

impl FmIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (counts, bwt, sampled_rows, samples, doc_starts, docs, primary_row) = self.parts();
        let mut w = Writer { buf: Vec::new() };
        w.varint(self.len() as u64);
        w.varint(primary_row as u64);
        w.varint(self.total_body_tokens());
        w.varint(bwt.width() as u64);
        // per-symbol frequencies; cumulative sums are rebuilt
        for pair in counts.windows(2) {
            w.varint(pair[1] - pair[0]);
        }
        for level in bwt.levels() {
            w.bitvector(level);
        }
        w.bitvector(sampled_rows);
        w.varint(samples.len() as u64);
        for &s in samples {
            w.buf.extend_from_slice(&s.to_le_bytes());
        }
        w.bitvector(doc_starts);
        w.varint(docs.ids.len() as u64);
        for i in 0..docs.ids.len() {
            w.bytes(docs.ids[i].as_bytes());
            w.varint(docs.title_lens[i] as u64);
            w.varint(docs.body_starts[i] as u64);
            w.varint(docs.terminator_rows[i] as u64);
        }
        w.bytes(self.vocabulary().to_file_string().as_bytes());
        let payload = w.buf;

        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sa_rate().to_le_bytes());
        out.extend_from_slice(&(self.alphabet_size() as u32).to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        let sum = checksum(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < MAGIC.len() || &data[..MAGIC.len()] != MAGIC {
            return Err(Error::IndexFormat("bad magic bytes".into()));
        }
        if data.len() < HEADER_LEN {
            return Err(truncated());
        }
        let le32 = |at: usize| u32::from_le_bytes(data[at..at + 4].try_into().unwrap());
        let version = le32(8);
        if version != FORMAT_VERSION {
            return Err(Error::IndexVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let sa_rate = le32(12);
        let alphabet = le32(16) as usize;
        let payload_len = u64::from_le_bytes(data[20..28].try_into().unwrap()) as usize;
        let end = HEADER_LEN
            .checked_add(payload_len)
            .and_then(|e| e.checked_add(CHECKSUM_LEN))
            .ok_or_else(truncated)?;
        if data.len() < end {
            return Err(truncated());
        }
        if data.len() > end {
            return Err(Error::IndexFormat("trailing bytes".into()));
        }
        let body_end = HEADER_LEN + payload_len;
        if checksum(&data[..body_end]) != data[body_end..] {
            return Err(Error::Checksum);
        }
        if sa_rate == 0 {
            return Err(Error::IndexFormat("sa_rate is zero".into()));
        }

        let mut r = Reader {
            buf: &data[HEADER_LEN..body_end],
        };
        let n = r.usize()?;
        let primary_row = r.usize()?;
        let total_body_tokens = r.varint()?;
        let width = r.u32()?;
        if width != symbol_width(alphabet) {
            return Err(Error::IndexFormat(
                "wavelet width does not match alphabet".into(),
            ));
        }
        let mut counts = Vec::with_capacity(alphabet + 1);
        counts.push(0u64);
        for _ in 0..alphabet {
            let next = counts.last().unwrap() + r.varint()?;
            counts.push(next);
        }
        if *counts.last().unwrap() as usize != n {
            return Err(Error::IndexFormat(
                "F column does not sum to text length".into(),
            ));
        }
        let mut levels = Vec::with_capacity(width as usize);
        for _ in 0..width {
            let level = r.bitvector()?;
            if level.len() != n {
                return Err(Error::IndexFormat("wavelet level length mismatch".into()));
            }
            levels.push(level);
        }
        let sampled_rows = r.bitvector()?;
        let num_samples = r.usize()?;
        if sampled_rows.len() != n || sampled_rows.count_ones() != num_samples {
            return Err(Error::IndexFormat("sample table mismatch".into()));
        }
        let raw = r.take(num_samples.checked_mul(4).ok_or_else(truncated)?)?;
        let samples = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let doc_starts = r.bitvector()?;
        let num_docs = r.usize()?;
        if doc_starts.len() != n || doc_starts.count_ones() != num_docs {
            return Err(Error::IndexFormat("document table mismatch".into()));
        }
        let mut docs = DocTable {
            ids: Vec::with_capacity(num_docs),
            title_lens: Vec::with_capacity(num_docs),
            body_starts: Vec::with_capacity(num_docs),
            terminator_rows: Vec::with_capacity(num_docs),
        };
        for _ in 0..num_docs {
            docs.ids.push(r.string()?);
            docs.title_lens.push(r.u32()?);
            docs.body_starts.push(r.u32()?);
            let row = r.u32()?;
            if row as usize >= n {
                return Err(Error::IndexFormat("terminator row out of range".into()));
            }
            docs.terminator_rows.push(row);
        }
        let vocab_text = r.string()?;
        let vocabulary = Vocabulary::parse(&vocab_text)?;
        if vocabulary.len() != alphabet {
            return Err(Error::IndexFormat(
                "vocabulary size differs from alphabet".into(),
            ));
        }
        if !r.buf.is_empty() {
            return Err(Error::IndexFormat("unread payload bytes".into()));
        }
        if primary_row >= n {
            return Err(Error::IndexFormat("primary row out of range".into()));
        }
        FmIndex::assemble(
            counts,
            WaveletTree::from_levels(levels, width, n),
            sampled_rows,
            samples,
            sa_rate,
            doc_starts,
            docs,
            vocabulary,
            total_body_tokens,
            primary_row,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm_index::{BuildOptions, IndexedDocument};

    fn small() -> FmIndex {
        let mut v = Vocabulary::new();
        let a = v.add("a").unwrap();
        let b = v.add("b").unwrap();
        let docs = vec![
            IndexedDocument::raw("x", vec![a, b, a]),
            IndexedDocument::raw("y", vec![b, b]),
        ];
        FmIndex::from_documents(
            docs,
            v,
            BuildOptions {
                sa_rate: 2,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let ix = small();
        let back = FmIndex::from_bytes(&ix.to_bytes()).unwrap();
        assert_eq!(back.bwt(), ix.bwt());
        assert_eq!(back.reconstruct(), ix.reconstruct());
        assert_eq!(back.sa_rate(), 2);
        assert_eq!(back.doc_id(crate::DocIndex(1)), "y");
        assert_eq!(back.total_body_tokens(), ix.total_body_tokens());
    }

    #[test]
    fn header_fields() {
        let bytes = small().to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            FORMAT_VERSION
        );
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 9);
    }

    #[test]
    fn corrupted_files_fail() {
        let bytes = small().to_bytes();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            FmIndex::from_bytes(&bad_magic),
            Err(Error::IndexFormat(_))
        ));

        let mut bad_version = bytes.clone();
        bad_version[8] = 99;
        assert!(matches!(
            FmIndex::from_bytes(&bad_version),
            Err(Error::IndexVersion { found: 99, .. })
        ));

        assert!(FmIndex::from_bytes(&bytes[..bytes.len() - 5]).is_err());
        assert!(FmIndex::from_bytes(&bytes[..10]).is_err());

        let mut flipped = bytes.clone();
        let mid = HEADER_LEN + 3;
        flipped[mid] ^= 0x40;
        assert!(matches!(
            FmIndex::from_bytes(&flipped),
            Err(Error::Checksum)
        ));
    }
}
