//! Optimization reward: sum of matched cells on the pooled-imputed table.

use super::{NormalizedScore, ScoringError};
use crate::solvers::{impute_pooled, matching_value, pooled_best};
use crate::worldgen::OptimizationWorld;

/// Checks that `payload[paper] = reviewer` is a permutation of the reviewers.
pub fn check_matching(world: &OptimizationWorld, payload: &[usize]) -> Result<(), ScoringError> {
    if payload.len() != world.k {
        return Err(ScoringError::Schema(format!(
            "matching assigns {} papers, expected {}",
            payload.len(),
            world.k
        )));
    }
    let mut owner: Vec<Option<usize>> = vec![None; world.k];
    for (paper, &reviewer) in payload.iter().enumerate() {
        if reviewer >= world.k {
            return Err(ScoringError::Schema(format!(
                "{}: reviewer id {reviewer} does not exist",
                world.paper_short(paper)
            )));
        }
        if let Some(prev) = owner[reviewer] {
            return Err(ScoringError::Schema(format!(
                "{}: {} is already assigned to {}",
                world.paper_short(paper),
                world.reviewers[reviewer],
                world.paper_short(prev)
            )));
        }
        owner[reviewer] = Some(paper);
    }
    Ok(())
}

pub fn score_matching(world: &OptimizationWorld, payload: &[usize]) -> Result<NormalizedScore, ScoringError> {
    check_matching(world, payload)?;
    let raw = matching_value(&impute_pooled(world).by_paper(), payload);
    let best = pooled_best(world).value;
    Ok(NormalizedScore {
        raw,
        best,
        worst: 0.0,
        normalized: raw / best,
    })
}
