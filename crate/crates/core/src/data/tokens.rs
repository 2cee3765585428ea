//! Companion token files: JSON lines of `{"id": ..., "tokens": [...]}`.

use super::{Corpus, DataError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenLine {
    id: String,
    tokens: Vec<String>,
}

pub fn load_tokens(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<String>>, DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TokenLine = serde_json::from_str(&line).map_err(|e| DataError::Tokens {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(parsed.id.clone(), parsed.tokens).is_some() {
            return Err(DataError::Tokens {
                line: i + 1,
                message: format!("duplicate id {:?}", parsed.id),
            });
        }
    }
    Ok(out)
}

/// Writes the tokens of every document that has them, in corpus order.
pub fn save_tokens(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for doc in corpus.docs() {
        if let Some(tokens) = &doc.tokens {
            let line = serde_json::to_string(&TokenLine {
                id: doc.id.clone(),
                tokens: tokens.clone(),
            })
            .expect("token line serializes");
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
