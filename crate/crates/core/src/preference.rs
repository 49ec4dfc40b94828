//! Preference-pair construction for reward-guided fine-tuning.
//!
//! For every unordered pair of scored candidates of one asset: discard it
//! when both rewards fall below the threshold; emit (higher, lower) when the
//! gap exceeds the margin; otherwise skip. Each emitted pair carries the
//! asset's ground-truth sequence for the auxiliary SFT term.

use crate::tokenizer::{QuantizationSpec, TokenSequence};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Default reward floor: pairs where both candidates score below it teach
/// nothing worth preferring.
pub const DEFAULT_THRESHOLD: f64 = 3.0;
/// Default minimum reward gap (strict) between preferred and rejected.
pub const DEFAULT_MARGIN: f64 = 0.5;

/// One sampled candidate skeleton with its composite reward.
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub sequence: TokenSequence,
    pub reward: f64,
}

/// All candidates generated for one conditioning asset.
#[derive(Debug, Clone)]
pub struct AssetCandidates {
    pub asset: String,
    pub ground_truth: TokenSequence,
    pub candidates: Vec<ScoredCandidate>,
}

/// A (preferred, rejected) training pair.
#[derive(Debug, Clone)]
pub struct PreferencePair {
    pub asset: String,
    pub preferred: TokenSequence,
    pub rejected: TokenSequence,
    pub reward_preferred: f64,
    pub reward_rejected: f64,
    pub ground_truth: TokenSequence,
}

/// Pair-selection result; `skipped_assets` counts assets with fewer than two
/// candidates.
#[derive(Debug, Clone, Default)]
pub struct SelectionOutcome {
    pub pairs: Vec<PreferencePair>,
    pub skipped_assets: usize,
}

/// Applies the selection rules to every asset's candidate set.
///
/// Output order is deterministic and independent of candidate input order:
/// sorted by asset, then preferred reward descending.
pub fn select_preference_pairs(
    per_asset: &[AssetCandidates],
    threshold: f64,
    margin: f64,
) -> SelectionOutcome {
    let mut out = SelectionOutcome::default();
    for ac in per_asset {
        if ac.candidates.len() < 2 {
            out.skipped_assets += 1;
            continue;
        }
        for i in 0..ac.candidates.len() {
            for j in i + 1..ac.candidates.len() {
                let (a, b) = (&ac.candidates[i], &ac.candidates[j]);
                if a.reward < threshold && b.reward < threshold {
                    continue;
                }
                if (a.reward - b.reward).abs() <= margin {
                    continue;
                }
                let (hi, lo) = if a.reward > b.reward { (a, b) } else { (b, a) };
                out.pairs.push(PreferencePair {
                    asset: ac.asset.clone(),
                    preferred: hi.sequence.clone(),
                    rejected: lo.sequence.clone(),
                    reward_preferred: hi.reward,
                    reward_rejected: lo.reward,
                    ground_truth: ac.ground_truth.clone(),
                });
            }
        }
    }
    out.pairs.sort_by(|x, y| {
        x.asset
            .cmp(&y.asset)
            .then(y.reward_preferred.total_cmp(&x.reward_preferred))
            .then(y.reward_rejected.total_cmp(&x.reward_rejected))
            .then(x.preferred.ids().cmp(&y.preferred.ids()))
            .then(x.rejected.ids().cmp(&y.rejected.ids()))
    });
    out
}

/// JSONL record layout for the serialized dataset.
#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    asset: String,
    y_g: Vec<u32>,
    y_b: Vec<u32>,
    r_g: f64,
    r_b: f64,
    y_gt: Vec<u32>,
    bits: u8,
}

/// Writes one JSON record per line; returns the record count.
pub fn build_dpo_dataset(pairs: &[PreferencePair], out_path: &Path) -> Result<usize, PreferenceError> {
    let file = std::fs::File::create(out_path)?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let rec = PairRecord {
            asset: p.asset.clone(),
            y_g: p.preferred.ids(),
            y_b: p.rejected.ids(),
            r_g: p.reward_preferred,
            r_b: p.reward_rejected,
            y_gt: p.ground_truth.ids(),
            bits: p.preferred.spec.bits,
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(pairs.len())
}

/// Reads a dataset written by [`build_dpo_dataset`].
pub fn read_dpo_dataset(path: &Path) -> Result<Vec<PreferencePair>, PreferenceError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line)?;
        let spec = QuantizationSpec::new(rec.bits)
            .map_err(|e| PreferenceError::Invalid(e.to_string()))?;
        let seq = |ids: &[u32]| {
            TokenSequence::from_ids(ids, spec).map_err(|e| PreferenceError::Invalid(e.to_string()))
        };
        out.push(PreferencePair {
            asset: rec.asset,
            preferred: seq(&rec.y_g)?,
            rejected: seq(&rec.y_b)?,
            reward_preferred: rec.r_g,
            reward_rejected: rec.r_b,
            ground_truth: seq(&rec.y_gt)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::SkeletonTree;
    use crate::tokenizer::tokenize;
    use nalgebra::Vector3;

    fn seq(tag: f64) -> TokenSequence {
        let t = SkeletonTree::from_positions(&[(Vector3::new(tag, 0.0, 0.0), None)]);
        tokenize(&t, QuantizationSpec::default()).unwrap().sequence
    }

    fn asset_with(rewards: &[f64]) -> AssetCandidates {
        AssetCandidates {
            asset: "a".into(),
            ground_truth: seq(0.0),
            candidates: rewards
                .iter()
                .enumerate()
                .map(|(i, &r)| ScoredCandidate {
                    sequence: seq(0.01 * (i as f64 + 1.0)),
                    reward: r,
                })
                .collect(),
        }
    }

    #[test]
    fn clear_winner_is_emitted() {
        let out = select_preference_pairs(&[asset_with(&[4.2, 3.1])], 3.0, 0.5);
        assert_eq!(out.pairs.len(), 1);
        let p = &out.pairs[0];
        assert_eq!(p.reward_preferred, 4.2);
        assert_eq!(p.reward_rejected, 3.1);
    }

    #[test]
    fn both_below_threshold_discarded() {
        let out = select_preference_pairs(&[asset_with(&[2.9, 2.1])], 3.0, 0.5);
        assert!(out.pairs.is_empty());
    }

    #[test]
    fn margin_is_strict() {
        // Gap 0.2 <= 0.5 skipped; and an exact 0.5 gap is also skipped.
        let out = select_preference_pairs(&[asset_with(&[4.0, 3.8])], 3.0, 0.5);
        assert!(out.pairs.is_empty());
        let out = select_preference_pairs(&[asset_with(&[4.0, 3.5])], 3.0, 0.5);
        assert!(out.pairs.is_empty());
    }

    #[test]
    fn one_side_below_threshold_is_kept() {
        // Only pairs where BOTH fall below the threshold are discarded.
        let out = select_preference_pairs(&[asset_with(&[4.0, 1.0])], 3.0, 0.5);
        assert_eq!(out.pairs.len(), 1);
    }

    #[test]
    fn single_candidate_assets_are_skipped() {
        let out = select_preference_pairs(&[asset_with(&[4.0])], 3.0, 0.5);
        assert!(out.pairs.is_empty());
        assert_eq!(out.skipped_assets, 1);
    }

    #[test]
    fn four_candidates_cap_at_six_pairs() {
        let out = select_preference_pairs(&[asset_with(&[5.0, 4.0, 3.0, 2.0])], 0.0, 0.0);
        assert_eq!(out.pairs.len(), 6);
    }

    #[test]
    fn selection_is_input_order_invariant() {
        let fwd = select_preference_pairs(&[asset_with(&[4.2, 3.1, 2.0, 4.9])], 3.0, 0.5);
        let mut shuffled = asset_with(&[4.2, 3.1, 2.0, 4.9]);
        shuffled.candidates.reverse();
        let rev = select_preference_pairs(&[shuffled], 3.0, 0.5);
        let key = |p: &PreferencePair| (p.reward_preferred.to_bits(), p.reward_rejected.to_bits());
        assert_eq!(
            fwd.pairs.iter().map(key).collect::<Vec<_>>(),
            rev.pairs.iter().map(key).collect::<Vec<_>>()
        );
    }

    #[test]
    fn emitted_pairs_satisfy_invariants() {
        let out = select_preference_pairs(&[asset_with(&[4.9, 4.2, 3.1, 1.0])], 3.0, 0.5);
        for p in &out.pairs {
            assert!(p.reward_preferred - p.reward_rejected > 0.5);
            assert!(p.reward_preferred.max(p.reward_rejected) >= 3.0);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = std::env::temp_dir().join("rigforge_pref_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pairs.jsonl");

        let out = select_preference_pairs(&[asset_with(&[4.2, 3.1, 1.0])], 3.0, 0.5);
        let n = build_dpo_dataset(&out.pairs, &path).unwrap();
        assert_eq!(n, out.pairs.len());
        let back = read_dpo_dataset(&path).unwrap();
        assert_eq!(back.len(), out.pairs.len());
        for (a, b) in back.iter().zip(&out.pairs) {
            assert_eq!(a.preferred.ids(), b.preferred.ids());
            assert_eq!(a.rejected.ids(), b.rejected.ids());
            assert_eq!(a.ground_truth.ids(), b.ground_truth.ids());
            assert_eq!(a.reward_preferred, b.reward_preferred);
        }
    }

    #[test]
    fn empty_dataset_writes_empty_file() {
        let dir = std::env::temp_dir().join("rigforge_pref_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.jsonl");
        assert_eq!(build_dpo_dataset(&[], &path).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(read_dpo_dataset(&path).unwrap().is_empty());
    }
}
