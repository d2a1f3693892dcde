use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scores closer than this are indistinguishable for ranking purposes.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    Match,
    Mismatch,
    Tie,
}

/// Compares a lower-is-better score ordering with the ordering implied by
/// latent quality (higher quality should score lower).
pub fn rank_agreement(scores: &[f64], quality: &[f64]) -> Result<Ranking> {
    if scores.len() != quality.len() {
        return Err(Error::Input(format!(
            "{} scores for {} categories",
            scores.len(),
            quality.len()
        )));
    }
    if scores.len() < 2 {
        return Err(Error::Input("ranking needs at least 2 categories".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Ok(Ranking::Mismatch);
    }
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            if (scores[i] - scores[j]).abs() <= TIE_TOL {
                return Ok(Ranking::Tie);
            }
        }
    }
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if quality[i] > quality[j] && scores[i] >= scores[j] {
                return Ok(Ranking::Mismatch);
            }
        }
    }
    Ok(Ranking::Match)
}
