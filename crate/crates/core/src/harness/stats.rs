//! Run summaries: per-episode rows plus mean and standard error.

use serde::{Deserialize, Serialize};

use crate::dialogue::{EpisodeLog, Outcome};
use crate::task::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeStatus {
    Terminated,
    Capped,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub status: EpisodeStatus,
    pub normalized_score: Option<f64>,
    pub raw_score: Option<f64>,
    pub words: usize,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl EpisodeRow {
    pub fn from_log(log: &EpisodeLog) -> Self {
        let status = if log.footer.failure.is_some() {
            EpisodeStatus::Failed
        } else if log.footer.outcome == Outcome::Terminated {
            EpisodeStatus::Terminated
        } else {
            EpisodeStatus::Capped
        };
        EpisodeRow {
            seed: log.header.seed,
            status,
            normalized_score: log.footer.normalized_reward,
            raw_score: log.footer.raw_reward,
            words: log.total_words(),
            actions: log.footer.actions,
            failure: log.footer.failure.clone(),
        }
    }

    /// A row for an episode that never got a world or a log.
    pub fn failed(seed: u64, failure: String) -> Self {
        EpisodeRow {
            seed,
            status: EpisodeStatus::Failed,
            normalized_score: None,
            raw_score: None,
            words: 0,
            actions: 0,
            failure: Some(failure),
        }
    }

    fn sort_key(&self) -> (u64, EpisodeStatus, u64, usize, usize) {
        (
            self.seed,
            self.status,
            self.normalized_score.map_or(0, f64::to_bits),
            self.words,
            self.actions,
        )
    }
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(n)`; zero for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
}

/// `None` for no values. Values are summed in sorted order so the result
/// does not depend on input order.
pub fn mean_sem(values: &[f64]) -> Option<MeanSem> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sem = if n < 2 {
        0.0
    } else {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Some(MeanSem { n, mean, sem })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// True when there were no episodes at all.
    pub empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    pub total: usize,
    pub terminated: usize,
    pub capped: usize,
    pub failed: usize,
    /// Over terminated episodes only.
    pub score: Option<MeanSem>,
    /// Over terminated episodes only.
    pub words: Option<MeanSem>,
    pub episodes: Vec<EpisodeRow>,
}

impl RunSummary {
    pub fn from_rows(task: Option<Task>, mut rows: Vec<EpisodeRow>) -> Self {
        rows.sort_by_key(EpisodeRow::sort_key);
        let count = |s: EpisodeStatus| rows.iter().filter(|r| r.status == s).count();
        let done: Vec<&EpisodeRow> = rows.iter().filter(|r| r.status == EpisodeStatus::Terminated).collect();
        let scores: Vec<f64> = done.iter().filter_map(|r| r.normalized_score).collect();
        let words: Vec<f64> = done.iter().map(|r| r.words as f64).collect();
        RunSummary {
            empty: rows.is_empty(),
            task,
            total: rows.len(),
            terminated: count(EpisodeStatus::Terminated),
            capped: count(EpisodeStatus::Capped),
            failed: count(EpisodeStatus::Failed),
            score: mean_sem(&scores),
            words: mean_sem(&words),
            episodes: rows,
        }
    }

    /// One line per aggregate, for terminals.
    pub fn render(&self) -> String {
        if self.empty {
            return "no episodes".into();
        }
        let fmt = |m: Option<MeanSem>| m.map_or("n/a".to_string(), |m| format!("{:.4} ± {:.4} (n={})", m.mean, m.sem, m.n));
        format!(
            "episodes: {} (terminated {}, capped {}, failed {})\nscore: {}\nwords: {}",
            self.total,
            self.terminated,
            self.capped,
            self.failed,
            fmt(self.score),
            fmt(self.words)
        )
    }
}

/// Summarizes a set of episode logs. The task is reported when all logs share it.
pub fn stats(logs: &[EpisodeLog]) -> RunSummary {
    let task = logs.first().map(|l| l.header.task).filter(|t| logs.iter().all(|l| l.header.task == *t));
    RunSummary::from_rows(task, logs.iter().map(EpisodeRow::from_log).collect())
}
