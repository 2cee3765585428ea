//! PUE1 corpus files.
//!
//! Layout (little-endian): `"PUE1"`, `u32` version (1), `u32` dimension,
//! `u64` record count, then per record a `u16` id length, the UTF-8 id, a
//! `u8` truth flag (0 unknown, 1 positive, 2 negative) and `dimension` f32s.

use super::{Corpus, DataError, EmbeddedDoc, Truth};
use crate::binio::Reader;
use byteorder::{LittleEndian, WriteBytesExt};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PUE1";
const VERSION: u32 = 1;

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, DataError> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&buf)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    for (index, doc) in corpus.docs().iter().enumerate() {
        super::validate_doc(index, doc, corpus.dim())?;
    }
    let buf = encode(corpus);
    std::fs::write(path, buf).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn encode(corpus: &Corpus) -> Vec<u8> {
    let per_record = 2 + 16 + 1 + 4 * corpus.dim();
    let mut out = Vec::with_capacity(20 + corpus.len() * per_record);
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(corpus.dim() as u32).unwrap();
    out.write_u64::<LittleEndian>(corpus.len() as u64).unwrap();
    for doc in corpus.docs() {
        out.write_u16::<LittleEndian>(doc.id.len() as u16).unwrap();
        out.extend_from_slice(doc.id.as_bytes());
        out.push(match doc.truth {
            None => 0,
            Some(Truth::Positive) => 1,
            Some(Truth::Negative) => 2,
        });
        for &v in &doc.vector {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
    }
    out
}

pub(crate) fn decode(buf: &[u8]) -> Result<Corpus, DataError> {
    let mut r = Reader::new(buf);
    let header = |e: std::io::Error| DataError::Header(e.to_string());
    r.magic(MAGIC).map_err(header)?;
    let version = r.u32().map_err(header)?;
    if version != VERSION {
        return Err(DataError::Header(format!("unsupported version {version}")));
    }
    let dim = r.u32().map_err(header)? as usize;
    if dim == 0 {
        return Err(DataError::Header("dimension 0".into()));
    }
    let count = r.u64().map_err(header)?;
    let mut docs = Vec::with_capacity((count as usize).min(1 << 20));
    for index in 0..count as usize {
        let rec = |message: String| DataError::Record { index, message };
        let id_len = r.u16().map_err(|e| rec(e.to_string()))? as usize;
        let id_bytes = r.bytes(id_len).map_err(|e| rec(e.to_string()))?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|e| rec(format!("id is not UTF-8: {e}")))?
            .to_owned();
        let truth = match r.u8().map_err(|e| rec(e.to_string()))? {
            0 => None,
            1 => Some(Truth::Positive),
            2 => Some(Truth::Negative),
            other => return Err(rec(format!("invalid truth flag {other}"))),
        };
        let vector = r
            .f32s(dim)
            .map_err(|e| rec(format!("expected {dim} values: {e}")))?;
        docs.push(EmbeddedDoc::new(id, vector, truth));
    }
    if r.remaining() > 0 {
        return Err(DataError::Trailing(r.remaining()));
    }
    debug_assert_eq!(r.position(), buf.len());
    Corpus::new(dim, docs).map_err(|e| match e {
        DataError::InvalidDoc { index, message, .. } => DataError::Record { index, message },
        other => other,
    })
}
