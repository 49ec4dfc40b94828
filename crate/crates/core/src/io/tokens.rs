//! Token-stream files: header `rigforge-tokens v1 bits=<n>`, then one
//! whitespace-separated id sequence per line.

use super::IoError;
use crate::tokenizer::{QuantizationSpec, TokenSequence};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub fn write_token_file(path: &Path, sequences: &[TokenSequence]) -> Result<(), IoError> {
    let bits = sequences
        .first()
        .map(|s| s.spec.bits)
        .unwrap_or(QuantizationSpec::default().bits);
    if let Some(bad) = sequences.iter().find(|s| s.spec.bits != bits) {
        return Err(IoError::structure(
            path,
            format!(
                "mixed quantization in one file: {} vs {} bits",
                bits, bad.spec.bits
            ),
        ));
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "rigforge-tokens v1 bits={bits}")?;
    for seq in sequences {
        let ids: Vec<String> = seq.ids().iter().map(|id| id.to_string()).collect();
        writeln!(w, "{}", ids.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_token_file(path: &Path) -> Result<Vec<TokenSequence>, IoError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let header = header.trim();
    let bits = header
        .strip_prefix("rigforge-tokens v1 bits=")
        .and_then(|b| b.parse::<u8>().ok())
        .ok_or_else(|| IoError::parse(path, 1, format!("bad header '{header}'")))?;
    let spec = QuantizationSpec::new(bits)
        .map_err(|e| IoError::parse(path, 1, e.to_string()))?;

    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = ln + 2;
        if line.trim().is_empty() {
            continue;
        }
        let ids: Vec<u32> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| IoError::parse(path, lineno, format!("bad token id '{t}'")))
            })
            .collect::<Result<_, _>>()?;
        let seq = TokenSequence::from_ids(&ids, spec)
            .map_err(|e| IoError::parse(path, lineno, e.to_string()))?;
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::SkeletonTree;
    use crate::tokenizer::tokenize;
    use nalgebra::Vector3;

    #[test]
    fn token_file_round_trip() {
        let dir = std::env::temp_dir().join("rigforge_tokens_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("corpus.tok");

        let t1 = SkeletonTree::from_positions(&[(Vector3::new(0.0, 0.0, 0.0), None)]);
        let t2 = SkeletonTree::from_positions(&[
            (Vector3::new(0.0, 0.0, -0.2), None),
            (Vector3::new(0.1, 0.0, 0.0), Some(0)),
        ]);
        let spec = QuantizationSpec::default();
        let seqs = vec![
            tokenize(&t1, spec).unwrap().sequence,
            tokenize(&t2, spec).unwrap().sequence,
        ];
        write_token_file(&p, &seqs).unwrap();
        let back = read_token_file(&p).unwrap();
        assert_eq!(back, seqs);

        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("rigforge-tokens v1 bits=8\n"));
    }
}
