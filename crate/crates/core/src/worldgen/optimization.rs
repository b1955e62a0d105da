//! Reviewer/paper matching worlds.
//!
//! The true affinity table is indexed `[reviewer][paper]`. Each player sees an
//! independent random subset of cells, multiplied by a private display scale.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::solvers::{pooled_best, solo_plan_value};

/// Draws allowed before giving up on the pooled-knowledge criterion.
pub const REJECTION_BUDGET: u32 = 10_000;
/// Pooled optimum must beat every solo plan by this factor.
pub const POOLED_ADVANTAGE: f64 = 1.25;
/// Prior mean of a cell, used to impute unobserved values.
pub const PRIOR_MEAN: f64 = 50.0;

const FIRST_NAMES: &[&str] = &[
    "Ava", "Daniel", "Sofia", "Andrei", "Morgan", "Joseph", "Ethan", "Noah", "Priya", "Mateo",
    "Yuki", "Fatima", "Lars", "Chloe", "Omar", "Ingrid", "Kwame", "Lucia", "Hana", "Tomas",
];

const LAST_NAMES: &[&str] = &[
    "Li", "Nguyen", "Patel", "Petrov", "Reed", "Santos", "Smith", "Wilson", "Okafor", "Garcia",
    "Tanaka", "Haddad", "Berg", "Moreau", "Farouk", "Lund", "Mensah", "Rossi", "Kim", "Novak",
];

/// Titles are `Short: descriptive title` and must not contain commas because
/// the observation table is CSV.
const PAPER_TITLES: &[&str] = &[
    "BERT: Deep Bidirectional Transformers for Language Understanding",
    "ELMo: Deep Contextualized Word Representations",
    "GloVe: Global Vectors for Word Representation",
    "SQuAD: 100000+ Questions for Machine Comprehension of Text",
    "GLUE: A Multi-Task Benchmark for Natural Language Understanding",
    "T5: Exploring the Limits of Transfer Learning",
    "BART: Denoising Sequence-to-Sequence Pre-training",
    "XLNet: Generalized Autoregressive Pretraining",
    "ALBERT: A Lite BERT for Self-supervised Learning",
    "DPR: Dense Passage Retrieval for Open-Domain QA",
    "CoQA: A Conversational Question Answering Challenge",
    "HotpotQA: A Dataset for Multi-hop Question Answering",
    "MNLI: A Broad-Coverage Challenge Corpus for Sentence Understanding",
    "SNLI: A Large Annotated Corpus for Learning Natural Language Inference",
    "ROUGE: A Package for Automatic Evaluation of Summaries",
    "METEOR: An Automatic Metric for MT Evaluation",
    "Word2Vec: Efficient Estimation of Word Representations",
    "Seq2Seq: Sequence to Sequence Learning with Neural Networks",
    "DeBERTa: Decoding-enhanced BERT with Disentangled Attention",
    "SuperGLUE: A Stickier Benchmark for Language Understanding",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationWorld {
    pub k: usize,
    pub p_observed: f64,
    /// Reviewer display names, sorted by last name.
    pub reviewers: Vec<String>,
    /// Paper titles in table column order.
    pub papers: Vec<String>,
    /// True affinities in [0, 100], `table[reviewer][paper]`.
    pub table: Vec<Vec<f64>>,
    /// `masks[player][reviewer][paper]` is true when that player sees the cell.
    pub masks: [Vec<Vec<bool>>; 2],
    /// Per-player display multipliers in [1, 10].
    pub scales: [f64; 2],
    /// Number of draws the rejection loop needed (1 = first draw accepted).
    pub draws: u32,
}

impl OptimizationWorld {
    /// The short name of a paper, the part before the colon.
    pub fn paper_short(&self, paper: usize) -> &str {
        short_title(&self.papers[paper])
    }

    /// What `player` is shown for a cell: the scaled value rounded to an
    /// integer, or `None` when the cell is hidden from them.
    pub fn displayed(&self, player: usize, reviewer: usize, paper: usize) -> Option<u64> {
        self.masks[player][reviewer][paper]
            .then(|| (self.table[reviewer][paper] * self.scales[player]).round() as u64)
    }

    pub fn reviewer_index(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.reviewers
            .iter()
            .position(|r| r.eq_ignore_ascii_case(name))
    }

    /// Matches a paper by short name or full title.
    pub fn paper_index(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.papers.iter().position(|p| {
            p.eq_ignore_ascii_case(name) || short_title(p).eq_ignore_ascii_case(name)
        })
    }

    /// Ratio of the pooled optimum to the better solo plan.
    pub fn pooled_ratio(&self) -> f64 {
        let best = pooled_best(self).value;
        let solo = solo_plan_value(self, 0).max(solo_plan_value(self, 1));
        best / solo
    }

    /// Same test as `pooled_ratio() >= POOLED_ADVANTAGE`, but stops as soon
    /// as one solo plan is good enough to fail it.
    pub fn meets_pooled_criterion(&self) -> bool {
        let best = pooled_best(self).value;
        (0..2).all(|player| best >= POOLED_ADVANTAGE * solo_plan_value(self, player))
    }
}

pub fn short_title(title: &str) -> &str {
    title.split(':').next().unwrap_or(title).trim()
}

fn last_name(full: &str) -> &str {
    full.rsplit(' ').next().unwrap_or(full)
}

pub(super) fn generate(
    rng: &mut ChaCha8Rng,
    seed: u64,
    k: usize,
    p_observed: f64,
) -> Result<OptimizationWorld, GenError> {
    if k < 2 || k > PAPER_TITLES.len().min(LAST_NAMES.len()) {
        return Err(GenError::InvalidParams(format!(
            "table size k={k} must be in 2..={}",
            PAPER_TITLES.len().min(LAST_NAMES.len())
        )));
    }
    if !(p_observed > 0.0 && p_observed < 1.0) {
        return Err(GenError::InvalidParams(format!(
            "p_observed={p_observed} must lie strictly between 0 and 1"
        )));
    }

    let mut last: Vec<&str> = LAST_NAMES.choose_multiple(rng, k).copied().collect();
    last.sort();
    let mut reviewers: Vec<String> = last
        .iter()
        .map(|l| format!("{} {l}", FIRST_NAMES.choose(rng).unwrap()))
        .collect();
    reviewers.sort_by(|a, b| last_name(a).cmp(last_name(b)).then(a.cmp(b)));
    let papers: Vec<String> = PAPER_TITLES
        .choose_multiple(rng, k)
        .map(|s| s.to_string())
        .collect();

    for draw in 1..=REJECTION_BUDGET {
        let table: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(0.0..=100.0)).collect())
            .collect();
        let mut mask = || -> Vec<Vec<bool>> {
            (0..k)
                .map(|_| (0..k).map(|_| rng.random_bool(p_observed)).collect())
                .collect()
        };
        let masks = [mask(), mask()];
        let scales = [rng.random_range(1.0..=10.0), rng.random_range(1.0..=10.0)];
        let world = OptimizationWorld {
            k,
            p_observed,
            reviewers: reviewers.clone(),
            papers: papers.clone(),
            table,
            masks,
            scales,
            draws: draw,
        };
        if world.meets_pooled_criterion() {
            return Ok(world);
        }
    }
    Err(GenError::RejectionBudget {
        seed,
        draws: REJECTION_BUDGET,
    })
}
