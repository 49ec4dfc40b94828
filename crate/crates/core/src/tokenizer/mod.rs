//! Connectivity-preserving skeleton tokenization.
//!
//! A skeleton tree is serialized level by level in BFS order. The root's
//! three quantized coordinates open the stream; `<E2>` closes each level's
//! row; within a row, each parent of the previous level contributes its
//! children's coordinate triples (z-sorted) followed by `<E1>` — including an
//! empty group when the parent is a leaf above the last level. Parent links
//! are therefore recoverable from the token stream alone: the i-th `<E1>`
//! group of a row attaches to the i-th BFS joint of the previous level.
//!
//! Excluding the BOS/EOS framing added for autoregressive sampling, a tree
//! with `J` joints, `L` levels, and `M` joints above the last level always
//! serializes to exactly `3J + M + L` tokens.

mod grammar;

pub use grammar::{validate_sequence, GrammarState, GrammarViolation};

use crate::skeleton::{bfs_levels, validate_tree, SkeletonTree};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coordinate quantization: `n`-bit, `2^n` bins over `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub bits: u8,
}

impl Default for QuantizationSpec {
    fn default() -> Self {
        Self { bits: 8 }
    }
}

impl QuantizationSpec {
    pub fn new(bits: u8) -> Result<Self, TokenizerError> {
        if !(1..=16).contains(&bits) {
            return Err(TokenizerError::Domain(format!(
                "quantization bits must be in 1..=16, got {bits}"
            )));
        }
        Ok(Self { bits })
    }

    pub fn bins(&self) -> u32 {
        1u32 << self.bits
    }

    /// Token-id vocabulary: `2^n` coordinate bins plus E1, E2, BOS, EOS.
    pub fn vocab_size(&self) -> u32 {
        self.bins() + 4
    }

    pub fn e1_id(&self) -> u32 {
        self.bins()
    }

    pub fn e2_id(&self) -> u32 {
        self.bins() + 1
    }

    pub fn bos_id(&self) -> u32 {
        self.bins() + 2
    }

    pub fn eos_id(&self) -> u32 {
        self.bins() + 3
    }
}

/// One stream token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    /// Quantized coordinate bin.
    Coord(u16),
    /// Ends the current parent's child group.
    E1,
    /// Ends the current level row.
    E2,
    Bos,
    Eos,
}

impl Token {
    pub fn id(&self, spec: QuantizationSpec) -> u32 {
        match *self {
            Token::Coord(u) => u as u32,
            Token::E1 => spec.e1_id(),
            Token::E2 => spec.e2_id(),
            Token::Bos => spec.bos_id(),
            Token::Eos => spec.eos_id(),
        }
    }

    pub fn from_id(id: u32, spec: QuantizationSpec) -> Result<Token, TokenizerError> {
        if id < spec.bins() {
            Ok(Token::Coord(id as u16))
        } else if id == spec.e1_id() {
            Ok(Token::E1)
        } else if id == spec.e2_id() {
            Ok(Token::E2)
        } else if id == spec.bos_id() {
            Ok(Token::Bos)
        } else if id == spec.eos_id() {
            Ok(Token::Eos)
        } else {
            Err(TokenizerError::Domain(format!(
                "token id {id} out of vocabulary (size {})",
                spec.vocab_size()
            )))
        }
    }
}

/// A token stream with per-token level indices.
///
/// Coordinate tokens carry their joint's BFS level; each `E1`/`E2` carries
/// the level of the row it terminates; BOS/EOS carry 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub level_indices: Vec<u32>,
    pub spec: QuantizationSpec,
}

impl TokenSequence {
    /// Token count excluding the BOS/EOS framing; equals `3J + M + L` for a
    /// sequence produced by [`tokenize`].
    pub fn counted_len(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| !matches!(t, Token::Bos | Token::Eos))
            .count()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id(self.spec)).collect()
    }

    pub fn vocab_size(&self) -> u32 {
        self.spec.vocab_size()
    }

    /// Rebuilds a sequence from token ids. Levels are reassigned by walking
    /// the grammar leniently, so this works even for invalid streams.
    pub fn from_ids(ids: &[u32], spec: QuantizationSpec) -> Result<TokenSequence, TokenizerError> {
        let tokens: Vec<Token> = ids
            .iter()
            .map(|&id| Token::from_id(id, spec))
            .collect::<Result<_, _>>()?;
        let mut state = GrammarState::new();
        let level_indices = tokens.iter().map(|&t| state.advance_lenient(t)).collect();
        Ok(TokenSequence { tokens, level_indices, spec })
    }

    /// Number of levels encoded (= number of E2 tokens).
    pub fn level_count(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, Token::E2)).count()
    }
}

/// Named detokenization failure modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceErrorKind {
    PartialTriple,
    GroupCountMismatch,
    UnterminatedGroup,
    Truncated,
    EmptyLevel,
    Unexpected,
}

impl std::fmt::Display for SequenceErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SequenceErrorKind::PartialTriple => "partial coordinate triple",
            SequenceErrorKind::GroupCountMismatch => "group/parent count mismatch",
            SequenceErrorKind::UnterminatedGroup => "unterminated group",
            SequenceErrorKind::Truncated => "truncated sequence",
            SequenceErrorKind::EmptyLevel => "empty level row",
            SequenceErrorKind::Unexpected => "unexpected token",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("{kind} at token {position}: {message}")]
    Sequence { position: usize, kind: SequenceErrorKind, message: String },
}

impl TokenizerError {
    fn seq(position: usize, kind: SequenceErrorKind, message: impl Into<String>) -> Self {
        TokenizerError::Sequence { position, kind, message: message.into() }
    }

    pub fn sequence_kind(&self) -> Option<SequenceErrorKind> {
        match self {
            TokenizerError::Sequence { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

/// `d = floor((j + 0.5) * 2^n)`, clamped to the last bin at `j = 0.5`.
pub fn quantize_coord(j: f64, spec: QuantizationSpec) -> Result<u16, TokenizerError> {
    if !(-0.5..=0.5).contains(&j) {
        return Err(TokenizerError::Domain(format!(
            "coordinate {j} outside [-0.5, 0.5]"
        )));
    }
    let d = ((j + 0.5) * spec.bins() as f64).floor() as u32;
    Ok(d.min(spec.bins() - 1) as u16)
}

/// Bin-center inverse: `j = (d + 0.5) / 2^n - 0.5`.
pub fn dequantize_coord(d: u16, spec: QuantizationSpec) -> Result<f64, TokenizerError> {
    if (d as u32) >= spec.bins() {
        return Err(TokenizerError::Domain(format!(
            "bin {d} out of range for {}-bit quantization",
            spec.bits
        )));
    }
    Ok((d as f64 + 0.5) / spec.bins() as f64 - 0.5)
}

/// Quantize-dequantize round trip of a position (the tokenizer's view of it).
pub fn snap_position(
    p: Vector3<f64>,
    spec: QuantizationSpec,
) -> Result<Vector3<f64>, TokenizerError> {
    Ok(Vector3::new(
        dequantize_coord(quantize_coord(p.x, spec)?, spec)?,
        dequantize_coord(quantize_coord(p.y, spec)?, spec)?,
        dequantize_coord(quantize_coord(p.z, spec)?, spec)?,
    ))
}

/// Output of [`tokenize`]; `canonicalized` records whether the input tree had
/// to be reordered into canonical child order first.
#[derive(Debug, Clone)]
pub struct TokenizeResult {
    pub sequence: TokenSequence,
    pub canonicalized: bool,
}

/// Serializes a tree into its token sequence.
///
/// The tree is canonicalized defensively (z-ascending child order, BFS
/// numbering); coordinates must lie in `[-0.5, 0.5]`.
pub fn tokenize(
    tree: &SkeletonTree,
    spec: QuantizationSpec,
) -> Result<TokenizeResult, TokenizerError> {
    let violations = validate_tree(tree);
    if !violations.is_empty() {
        return Err(TokenizerError::InvalidTree(violations[0].message.clone()));
    }
    let canon = tree.canonicalize_children_order();
    let canonicalized = !same_ordered_structure(tree, &canon);
    let levels = bfs_levels(&canon).expect("canonical tree is valid");
    let children = canon.children_table();

    // Canonical numbering is BFS order, so each level is a contiguous id run.
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); levels.count];
    for j in 0..canon.len() {
        rows[levels.level_of[j] as usize].push(j);
    }

    let mut tokens = vec![Token::Bos];
    let mut level_indices = vec![0u32];
    let push_coords = |tokens: &mut Vec<Token>,
                       level_indices: &mut Vec<u32>,
                       j: usize,
                       level: u32|
     -> Result<(), TokenizerError> {
        let p = canon.position(j);
        for c in [p.x, p.y, p.z] {
            tokens.push(Token::Coord(quantize_coord(c, spec)?));
            level_indices.push(level);
        }
        Ok(())
    };

    let root = rows[0][0];
    push_coords(&mut tokens, &mut level_indices, root, 0)?;
    tokens.push(Token::E2);
    level_indices.push(0);

    for level in 1..levels.count {
        for &parent in &rows[level - 1] {
            for &child in &children[parent] {
                push_coords(&mut tokens, &mut level_indices, child, level as u32)?;
            }
            tokens.push(Token::E1);
            level_indices.push(level as u32);
        }
        tokens.push(Token::E2);
        level_indices.push(level as u32);
    }

    tokens.push(Token::Eos);
    level_indices.push(0);
    Ok(TokenizeResult {
        sequence: TokenSequence { tokens, level_indices, spec },
        canonicalized,
    })
}

fn same_ordered_structure(a: &SkeletonTree, b: &SkeletonTree) -> bool {
    a.len() == b.len()
        && a.joints()
            .iter()
            .zip(b.joints())
            .all(|(x, y)| x.parent == y.parent && x.position == y.position)
}

/// Reconstructs the skeleton tree encoded by a token sequence.
///
/// Exact inverse of [`tokenize`] up to coordinate quantization: the i-th
/// `E1`-delimited group of a row attaches to the i-th BFS joint of the
/// previous level.
pub fn detokenize(seq: &TokenSequence) -> Result<SkeletonTree, TokenizerError> {
    let spec = seq.spec;
    let toks = &seq.tokens;
    if toks.first() != Some(&Token::Bos) {
        return Err(TokenizerError::seq(
            0,
            SequenceErrorKind::Unexpected,
            "sequence must start with BOS",
        ));
    }
    if toks.last() != Some(&Token::Eos) {
        return Err(TokenizerError::seq(
            toks.len().saturating_sub(1),
            SequenceErrorKind::Truncated,
            "sequence must end with EOS",
        ));
    }
    let body = &toks[1..toks.len() - 1];
    if let Some(bad) = body.iter().position(|t| matches!(t, Token::Bos | Token::Eos)) {
        return Err(TokenizerError::seq(
            bad + 1,
            SequenceErrorKind::Unexpected,
            "BOS/EOS inside the stream",
        ));
    }

    // Split into level rows on E2; remember each row's starting offset for
    // error positions.
    let mut rows: Vec<(usize, &[Token])> = Vec::new();
    let mut start = 0usize;
    for (i, t) in body.iter().enumerate() {
        if *t == Token::E2 {
            rows.push((start, &body[start..i]));
            start = i + 1;
        }
    }
    if start != body.len() {
        return Err(TokenizerError::seq(
            toks.len() - 1,
            SequenceErrorKind::Truncated,
            "sequence ended mid-row (no closing E2)",
        ));
    }
    if rows.is_empty() {
        return Err(TokenizerError::seq(
            toks.len() - 1,
            SequenceErrorKind::Truncated,
            "no level rows",
        ));
    }

    let dequant = |triple: &[u16]| -> Result<Vector3<f64>, TokenizerError> {
        Ok(Vector3::new(
            dequantize_coord(triple[0], spec)?,
            dequantize_coord(triple[1], spec)?,
            dequantize_coord(triple[2], spec)?,
        ))
    };

    // Root row: exactly one coordinate triple.
    let (root_off, root_row) = rows[0];
    let mut root_coords = Vec::new();
    for (i, t) in root_row.iter().enumerate() {
        match t {
            Token::Coord(u) => root_coords.push(*u),
            Token::E1 => {
                return Err(TokenizerError::seq(
                    root_off + i + 1,
                    SequenceErrorKind::Unexpected,
                    "E1 at level 0",
                ))
            }
            _ => unreachable!("rows contain no E2/BOS/EOS"),
        }
    }
    if root_coords.len() % 3 != 0 {
        return Err(TokenizerError::seq(
            root_off + root_row.len() + 1,
            SequenceErrorKind::PartialTriple,
            format!("level 0 holds {} coordinate tokens", root_coords.len()),
        ));
    }
    if root_coords.len() != 3 {
        return Err(TokenizerError::seq(
            root_off + 1,
            SequenceErrorKind::Unexpected,
            format!(
                "level 0 must hold exactly one joint, found {}",
                root_coords.len() / 3
            ),
        ));
    }

    let mut positions: Vec<(Vector3<f64>, Option<usize>)> = vec![(dequant(&root_coords)?, None)];
    // Joints of the previous level, in BFS (construction) order.
    let mut prev_level: Vec<usize> = vec![0];

    for (level, &(row_off, row)) in rows.iter().enumerate().skip(1) {
        let mut groups: Vec<Vec<Vector3<f64>>> = Vec::new();
        let mut triple: Vec<u16> = Vec::new();
        let mut group: Vec<Vector3<f64>> = Vec::new();
        for (i, t) in row.iter().enumerate() {
            match t {
                Token::Coord(u) => {
                    triple.push(*u);
                    if triple.len() == 3 {
                        group.push(dequant(&triple)?);
                        triple.clear();
                    }
                }
                Token::E1 => {
                    if !triple.is_empty() {
                        return Err(TokenizerError::seq(
                            row_off + i + 1,
                            SequenceErrorKind::PartialTriple,
                            format!("group closed after {} of 3 coordinates", triple.len()),
                        ));
                    }
                    groups.push(std::mem::take(&mut group));
                }
                _ => unreachable!(),
            }
        }
        let row_end = row_off + row.len() + 1;
        if !triple.is_empty() {
            return Err(TokenizerError::seq(
                row_end,
                SequenceErrorKind::PartialTriple,
                format!("row ended after {} of 3 coordinates", triple.len()),
            ));
        }
        if !group.is_empty() || row.is_empty() || !matches!(row.last(), Some(Token::E1)) {
            return Err(TokenizerError::seq(
                row_end,
                SequenceErrorKind::UnterminatedGroup,
                format!("E2 closing level {level} is not immediately preceded by E1"),
            ));
        }
        if groups.len() != prev_level.len() {
            return Err(TokenizerError::seq(
                row_end,
                SequenceErrorKind::GroupCountMismatch,
                format!(
                    "level {level} has {} groups for {} parents",
                    groups.len(),
                    prev_level.len()
                ),
            ));
        }
        let mut this_level = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            for p in g {
                let id = positions.len();
                positions.push((*p, Some(prev_level[gi])));
                this_level.push(id);
            }
        }
        if this_level.is_empty() {
            return Err(TokenizerError::seq(
                row_end,
                SequenceErrorKind::EmptyLevel,
                format!("level {level} contains no joints"),
            ));
        }
        prev_level = this_level;
    }

    Ok(SkeletonTree::from_positions(&positions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::SkeletonTree;

    fn spec8() -> QuantizationSpec {
        QuantizationSpec::default()
    }

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn quantize_matches_formula() {
        let s = spec8();
        assert_eq!(quantize_coord(-0.5, s).unwrap(), 0);
        assert_eq!(quantize_coord(0.0, s).unwrap(), 128);
        // floor((0.5 + 0.5) * 256) = 256 exceeds the last bin: clamped.
        assert_eq!(quantize_coord(0.5, s).unwrap(), 255);
        assert!(quantize_coord(0.6, s).is_err());
    }

    #[test]
    fn dequantize_uses_bin_centers() {
        let s = spec8();
        assert_eq!(dequantize_coord(0, s).unwrap(), -0.498046875);
        assert_eq!(dequantize_coord(255, s).unwrap(), 0.498046875);
        assert!(dequantize_coord(256, s).is_err());
    }

    #[test]
    fn quantization_round_trip_bound() {
        let s = spec8();
        let half_bin = 0.5f64.powi(s.bits as i32 + 1);
        for i in 0..=1000 {
            let j = -0.5 + i as f64 / 1000.0;
            let back = dequantize_coord(quantize_coord(j, s).unwrap(), s).unwrap();
            assert!((j - back).abs() <= half_bin + 1e-15, "j={j}, back={back}");
        }
    }

    #[test]
    fn token_id_mapping() {
        let s = spec8();
        assert_eq!(Token::E1.id(s), 256);
        assert_eq!(Token::E2.id(s), 257);
        assert_eq!(Token::Bos.id(s), 258);
        assert_eq!(Token::Eos.id(s), 259);
        assert_eq!(s.vocab_size(), 260);
        for id in [0u32, 17, 255, 256, 257, 258, 259] {
            assert_eq!(Token::from_id(id, s).unwrap().id(s), id);
        }
        assert!(Token::from_id(260, s).is_err());
    }

    #[test]
    fn single_joint_sequence() {
        let t = SkeletonTree::from_positions(&[(v(0.0, 0.1, -0.2), None)]);
        let out = tokenize(&t, spec8()).unwrap();
        assert!(!out.canonicalized);
        let seq = &out.sequence;
        assert_eq!(seq.counted_len(), 4); // 3*1 + 0 + 1
        assert_eq!(seq.tokens.len(), 6);
        assert!(matches!(seq.tokens[4], Token::E2));
    }

    #[test]
    fn root_with_two_children_sequence() {
        let t = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.1, 0.0, -0.1), Some(0)),
            (v(0.1, 0.0, 0.2), Some(0)),
        ]);
        let seq = tokenize(&t, spec8()).unwrap().sequence;
        // [root] E2 [c1][c2] E1 E2 -> 12 counted tokens = 3*3 + 1 + 2.
        assert_eq!(seq.counted_len(), 12);
        let tail: Vec<Token> = seq.tokens[seq.tokens.len() - 3..].to_vec();
        assert_eq!(tail, vec![Token::E1, Token::E2, Token::Eos]);
    }

    #[test]
    fn chain_sequence_has_expected_shape() {
        let t = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, -0.2), None),
            (v(0.0, 0.0, 0.0), Some(0)),
            (v(0.0, 0.0, 0.2), Some(1)),
        ]);
        let seq = tokenize(&t, spec8()).unwrap().sequence;
        // [root] E2 [a] E1 E2 [b] E1 E2 -> 14 counted = 3*3 + 2 + 3; the leaf
        // below the last level emits no group of its own.
        assert_eq!(seq.counted_len(), 14);
        assert_eq!(seq.level_count(), 3);
        let e1_positions: Vec<usize> = (0..seq.tokens.len())
            .filter(|&i| seq.tokens[i] == Token::E1)
            .collect();
        assert_eq!(e1_positions.len(), 2);
        assert_eq!(seq.level_indices[e1_positions[0]], 1);
        assert_eq!(seq.level_indices[e1_positions[1]], 2);
    }

    #[test]
    fn tokenize_flags_uncanonical_input() {
        // Children stored in descending z: tokenize reorders and reports it.
        let t = SkeletonTree::from_positions(&[
            (v(0.0, 0.0, 0.0), None),
            (v(0.1, 0.0, 0.2), Some(0)),
            (v(0.1, 0.0, -0.1), Some(0)),
        ]);
        let out = tokenize(&t, spec8()).unwrap();
        assert!(out.canonicalized);
        let canon_out = tokenize(&t.canonicalize_children_order(), spec8()).unwrap();
        assert!(!canon_out.canonicalized);
        assert_eq!(out.sequence, canon_out.sequence);
    }

    fn assert_same_shape(a: &SkeletonTree, b: &SkeletonTree, spec: QuantizationSpec) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.joints().iter().zip(b.joints()) {
            assert_eq!(x.parent, y.parent, "parent mismatch at joint {}", x.id);
            let snapped = snap_position(x.position, spec).unwrap();
            assert!((snapped - y.position).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_examples() {
        let trees = [
            SkeletonTree::from_positions(&[(v(0.0, 0.1, -0.2), None)]),
            SkeletonTree::from_positions(&[
                (v(0.0, 0.0, 0.0), None),
                (v(0.1, 0.0, -0.1), Some(0)),
                (v(0.1, 0.0, 0.2), Some(0)),
            ]),
            SkeletonTree::from_positions(&[
                (v(0.0, 0.0, -0.2), None),
                (v(0.0, 0.0, 0.0), Some(0)),
                (v(0.0, 0.0, 0.2), Some(1)),
            ]),
        ];
        for t in &trees {
            let seq = tokenize(t, spec8()).unwrap().sequence;
            let back = detokenize(&seq).unwrap();
            assert_same_shape(&t.canonicalize_children_order(), &back, spec8());
        }
    }

    #[test]
    fn detokenize_reports_group_count_mismatch() {
        let s = spec8();
        // Two E1 groups at level 1 but only one level-0 joint.
        let ids = vec![
            s.bos_id(), 10, 10, 10, s.e2_id(),
            20, 20, 20, s.e1_id(), 30, 30, 30, s.e1_id(), s.e2_id(),
            s.eos_id(),
        ];
        let seq = TokenSequence::from_ids(&ids, s).unwrap();
        let err = detokenize(&seq).unwrap_err();
        assert_eq!(err.sequence_kind(), Some(SequenceErrorKind::GroupCountMismatch));
    }

    #[test]
    fn detokenize_reports_partial_triple() {
        let s = spec8();
        let ids = vec![s.bos_id(), 10, 10, s.e2_id(), s.eos_id()];
        let seq = TokenSequence::from_ids(&ids, s).unwrap();
        let err = detokenize(&seq).unwrap_err();
        assert_eq!(err.sequence_kind(), Some(SequenceErrorKind::PartialTriple));
    }

    #[test]
    fn detokenize_reports_unterminated_group() {
        let s = spec8();
        // Level-1 row ends with coordinates instead of E1.
        let ids = vec![
            s.bos_id(), 10, 10, 10, s.e2_id(),
            20, 20, 20, s.e2_id(),
            s.eos_id(),
        ];
        let seq = TokenSequence::from_ids(&ids, s).unwrap();
        let err = detokenize(&seq).unwrap_err();
        assert_eq!(err.sequence_kind(), Some(SequenceErrorKind::UnterminatedGroup));
    }

    #[test]
    fn detokenize_reports_missing_eos() {
        let s = spec8();
        let ids = vec![s.bos_id(), 10, 10, 10, s.e2_id()];
        let seq = TokenSequence::from_ids(&ids, s).unwrap();
        let err = detokenize(&seq).unwrap_err();
        assert_eq!(err.sequence_kind(), Some(SequenceErrorKind::Truncated));
    }
}
