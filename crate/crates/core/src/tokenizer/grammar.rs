//! Prefix automaton for the token grammar.
//!
//! Tracks exactly enough state to decide which tokens may legally follow a
//! prefix: the current level row, how many `E1` groups it has closed versus
//! the parent count inherited from the previous level, and the progress of
//! the current coordinate triple. [`validate_sequence`] accepts precisely the
//! streams [`super::detokenize`] can parse, and the same automaton drives
//! grammar-constrained sampling in the model.

use super::{QuantizationSpec, Token, TokenSequence};

/// First grammar violation in a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarViolation {
    /// Index of the offending token (== stream length when the stream ended
    /// too early).
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    ExpectBos,
    RootCoords { got: u8 },
    ExpectRootE2,
    Row { level: u32, parents: u32, groups_done: u32, joints: u32, triple: u8 },
    AfterRow { level: u32, row_joints: u32 },
    Done,
}

/// Incremental grammar recognizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarState {
    state: State,
}

impl Default for GrammarState {
    fn default() -> Self {
        Self::new()
    }
}

impl GrammarState {
    pub fn new() -> Self {
        Self { state: State::ExpectBos }
    }

    /// True once a complete sequence (through EOS) has been consumed.
    pub fn is_complete(&self) -> bool {
        self.state == State::Done
    }

    /// Whether `token` may appear next.
    pub fn is_allowed(&self, token: Token) -> bool {
        match self.state {
            State::ExpectBos => matches!(token, Token::Bos),
            State::RootCoords { .. } => matches!(token, Token::Coord(_)),
            State::ExpectRootE2 => matches!(token, Token::E2),
            State::Row { parents, groups_done, joints, triple, .. } => {
                if triple > 0 {
                    return matches!(token, Token::Coord(_));
                }
                match token {
                    Token::Coord(_) => groups_done < parents,
                    // Closing the final group of a row that still holds no
                    // joints would encode an empty level, which no tree has.
                    Token::E1 => groups_done < parents && !(groups_done + 1 == parents && joints == 0),
                    Token::E2 => groups_done == parents,
                    _ => false,
                }
            }
            State::AfterRow { row_joints, .. } => match token {
                Token::Eos | Token::Coord(_) => true,
                Token::E1 => row_joints > 1,
                _ => false,
            },
            State::Done => false,
        }
    }

    /// Level index the next token would be tagged with.
    pub fn next_level(&self, token: Token) -> u32 {
        match self.state {
            State::ExpectBos | State::RootCoords { .. } | State::ExpectRootE2 => 0,
            State::Row { level, .. } => level,
            State::AfterRow { level, .. } => match token {
                Token::Eos => 0,
                _ => level + 1,
            },
            State::Done => 0,
        }
    }

    /// Consumes `token`, returning its level index, or a description of why
    /// it is not allowed here.
    pub fn advance(&mut self, token: Token) -> Result<u32, String> {
        if !self.is_allowed(token) {
            return Err(format!("{token:?} not allowed: {}", self.expectation()));
        }
        let level = self.next_level(token);
        self.state = match (self.state, token) {
            (State::ExpectBos, Token::Bos) => State::RootCoords { got: 0 },
            (State::RootCoords { got }, Token::Coord(_)) => {
                if got == 2 {
                    State::ExpectRootE2
                } else {
                    State::RootCoords { got: got + 1 }
                }
            }
            (State::ExpectRootE2, Token::E2) => State::AfterRow { level: 0, row_joints: 1 },
            (State::Row { level, parents, groups_done, joints, triple }, Token::Coord(_)) => {
                if triple == 2 {
                    State::Row { level, parents, groups_done, joints: joints + 1, triple: 0 }
                } else {
                    State::Row { level, parents, groups_done, joints, triple: triple + 1 }
                }
            }
            (State::Row { level, parents, groups_done, joints, .. }, Token::E1) => {
                State::Row { level, parents, groups_done: groups_done + 1, joints, triple: 0 }
            }
            (State::Row { level, joints, .. }, Token::E2) => {
                State::AfterRow { level, row_joints: joints }
            }
            (State::AfterRow { level, row_joints }, Token::Coord(_)) => State::Row {
                level: level + 1,
                parents: row_joints,
                groups_done: 0,
                joints: 0,
                triple: 1,
            },
            (State::AfterRow { level, row_joints }, Token::E1) => State::Row {
                level: level + 1,
                parents: row_joints,
                groups_done: 1,
                joints: 0,
                triple: 0,
            },
            (State::AfterRow { .. }, Token::Eos) => State::Done,
            _ => unreachable!("transition allowed but unhandled"),
        };
        Ok(level)
    }

    /// As [`Self::advance`], but ignores disallowed tokens (state unchanged)
    /// so level indices can still be assigned to malformed streams.
    pub fn advance_lenient(&mut self, token: Token) -> u32 {
        let level = self.next_level(token);
        let _ = self.advance(token);
        level
    }

    /// Human-readable description of what the grammar expects here.
    pub fn expectation(&self) -> String {
        match self.state {
            State::ExpectBos => "expected BOS".into(),
            State::RootCoords { got } => {
                format!("expected root coordinate {} of 3", got + 1)
            }
            State::ExpectRootE2 => "expected E2 closing the root level".into(),
            State::Row { level, parents, groups_done, joints, triple } => {
                if triple > 0 {
                    format!("expected coordinate {} of 3 (level {level})", triple + 1)
                } else if groups_done == parents {
                    format!("expected E2 closing level {level}")
                } else if groups_done + 1 == parents && joints == 0 {
                    format!("expected coordinates (level {level} may not be empty)")
                } else {
                    format!(
                        "expected coordinates or E1 (group {}/{parents} of level {level})",
                        groups_done + 1
                    )
                }
            }
            State::AfterRow { level, row_joints } => {
                if row_joints > 1 {
                    format!("expected EOS or the first group of level {}", level + 1)
                } else {
                    format!("expected EOS or coordinates opening level {}", level + 1)
                }
            }
            State::Done => "sequence already complete".into(),
        }
    }

    /// Per-token-id mask of allowed continuations, length `vocab_size`.
    pub fn allowed_mask(&self, spec: QuantizationSpec) -> Vec<bool> {
        let coord = self.is_allowed(Token::Coord(0));
        let mut mask = vec![coord; spec.bins() as usize];
        mask.push(self.is_allowed(Token::E1));
        mask.push(self.is_allowed(Token::E2));
        mask.push(self.is_allowed(Token::Bos));
        mask.push(self.is_allowed(Token::Eos));
        mask
    }
}

/// Checks a stream against the grammar. Returns an empty list when the
/// stream is valid; otherwise the first violation (later tokens cannot be
/// judged once the prefix is broken).
pub fn validate_sequence(seq: &TokenSequence) -> Vec<GrammarViolation> {
    let mut state = GrammarState::new();
    for (i, &t) in seq.tokens.iter().enumerate() {
        if let Err(message) = state.advance(t) {
            return vec![GrammarViolation { position: i, message }];
        }
    }
    if !state.is_complete() {
        return vec![GrammarViolation {
            position: seq.tokens.len(),
            message: format!("truncated sequence: {}", state.expectation()),
        }];
    }
    Vec::new()
}
