//! Tab-separated dataset cache: `id  label  premise tokens  hypothesis tokens`,
//! tokens joined by single spaces.

use std::fs;
use std::path::Path;

use super::TokenizedPair;
use crate::error::{Result, SanError};

pub fn write_cache(path: &Path, pairs: &[TokenizedPair]) -> Result<()> {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.id,
            p.label,
            p.premise.join(" "),
            p.hypothesis.join(" ")
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Vec<TokenizedPair>> {
    let text = fs::read_to_string(path)?;
    let parse_error = |line: usize, message: String| SanError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(parse_error(
                    i + 1,
                    format!("expected 4 columns, found {}", fields.len()),
                ));
            }
            let label = fields[1]
                .parse()
                .map_err(|_| parse_error(i + 1, format!("invalid label index {:?}", fields[1])))?;
            let tokens = |s: &str| s.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
            Ok(TokenizedPair {
                id: fields[0].to_string(),
                label,
                premise: tokens(fields[2]),
                hypothesis: tokens(fields[3]),
            })
        })
        .collect()
}
