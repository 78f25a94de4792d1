use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::Vocabulary;
use crate::error::{Result, SanError};
use crate::tensor::Tensor;

/// Pretrained vectors arranged by vocabulary index.
#[derive(Clone, Debug)]
pub struct LoadedEmbeddings {
    /// `[vocab × dim]`; rows of tokens absent from the file, and row 0, are zero.
    pub table: Tensor,
    /// Vocabulary entries that received a vector.
    pub found: usize,
}

/// Reads whitespace-separated `token v₁ … v_dim` lines. Every line must carry
/// exactly `dim` values; the first occurrence of a token wins.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize) -> Result<LoadedEmbeddings> {
    let reader = BufReader::new(File::open(path)?);
    let mut data = vec![0.0; vocab.len() * dim];
    let mut filled = vec![false; vocab.len()];
    let parse_error = |line: usize, message: String| SanError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(parse_error(
                i + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        let id = vocab.token_id(token);
        if id == 0 || filled[id] {
            continue;
        }
        for (slot, v) in data[id * dim..(id + 1) * dim].iter_mut().zip(values) {
            *slot = v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_error(i + 1, format!("invalid value {v:?}")))?;
        }
        filled[id] = true;
    }
    Ok(LoadedEmbeddings {
        table: Tensor::new(&[vocab.len(), dim], data)?,
        found: filled.iter().filter(|&&f| f).count(),
    })
}
