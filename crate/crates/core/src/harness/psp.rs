//! Prompted self-play: agents continue a logged dialogue from a prefix.
//!
//! The prefix is measured in messages (thoughts are carried along but not
//! counted) so a cut always falls on an action boundary. Replayed events keep
//! their recorded origin and therefore serialize exactly as in the source log.
//!
//! Once the live dialogue comes within [`FORCING_WINDOW_WORDS`] of the source
//! dialogue's total length, every agent request carries [`FORCING_NOTICE`]
//! and the harness answers live proposals on the recipients' behalf: a full
//! proposal is accepted, and the first partial one is rejected.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::{build_agents, check_config, drive, finish, EpisodeRow, HarnessError, Mode, RunConfig, RunOutput, RunSummary, Steering};
use crate::agents::Agent;
use crate::dialogue::{ActionKind, EpisodeLog};
use crate::task::Role;
use crate::worldgen::World;

pub const FORCING_NOTICE: &str = "You must make your best final proposal now.";
pub const FORCING_WINDOW_WORDS: usize = 25;

/// Number of leading events that cover the first `⌈fraction × messages⌉`
/// messages of `log`. Thoughts before the last counted message are included.
pub fn prefix_event_count(log: &EpisodeLog, fraction: f64) -> usize {
    let target = (fraction * log.message_count() as f64).ceil() as usize;
    if target == 0 {
        return 0;
    }
    let mut seen = 0;
    for (i, e) in log.events.iter().enumerate() {
        if e.kind != ActionKind::Think {
            seen += 1;
            if seen == target {
                return i + 1;
            }
        }
    }
    log.events.len()
}

struct Plan {
    events: usize,
    steering: Steering,
}

fn plan(mode: Mode, log: &EpisodeLog) -> Result<Plan, HarnessError> {
    let force_at = log.total_words().saturating_sub(FORCING_WINDOW_WORDS);
    let fraction = match mode {
        Mode::Psp50 => 0.5,
        Mode::Psp75 => 0.75,
        Mode::PspProposal => {
            let (index, last) = log
                .events
                .iter()
                .enumerate()
                .rev()
                .find(|(_, e)| e.kind == ActionKind::Propose)
                .ok_or(HarnessError::NoProposal { seed: log.header.seed })?;
            return Ok(Plan {
                events: index,
                steering: Steering {
                    force_at_words: Some(0),
                    must_propose: Some(last.sender),
                    live_from: index,
                    max_agent_actions: Some(1),
                },
            });
        }
        Mode::SelfPlay => return Err(HarnessError::Config("self-play runs take no prefix".into())),
    };
    let events = prefix_event_count(log, fraction);
    Ok(Plan {
        events,
        steering: Steering {
            force_at_words: Some(force_at),
            must_propose: None,
            live_from: events,
            max_agent_actions: None,
        },
    })
}

/// Checks a prefix log before any episode runs.
fn validate(config: &RunConfig, log: &EpisodeLog) -> Result<World, HarnessError> {
    if log.header.task != config.task {
        return Err(HarnessError::PrefixTask {
            expected: config.task,
            found: log.header.task,
        });
    }
    let world = log.world()?;
    log.replay_prefix(&world, log.events.len())?;
    Ok(world)
}

/// Continues one prefix log with caller-supplied agents, one per role.
pub fn continue_prefix(
    mode: Mode,
    log: &EpisodeLog,
    agents: &mut BTreeMap<Role, Box<dyn Agent>>,
    retry_budget: usize,
) -> Result<EpisodeLog, HarnessError> {
    let started = Instant::now();
    let plan = plan(mode, log)?;
    let world = log.world()?;
    log.replay_prefix(&world, log.events.len())?;
    let state = log.replay_prefix(&world, plan.events)?;
    let (state, failure) = drive(state, &world, agents, retry_budget, plan.steering);
    Ok(finish(&state, &log.header.params, &world, failure, started, false))
}

fn continue_episode(config: &RunConfig, log: &EpisodeLog, world: World) -> Result<EpisodeLog, HarnessError> {
    let started = Instant::now();
    let plan = plan(config.mode, log)?;
    let world = Arc::new(world);
    let state = log.replay_prefix(&world, plan.events)?;
    let (state, failure) = match build_agents(config, log.header.seed, &world) {
        Ok(mut agents) => drive(state, &world, &mut agents, config.retry_budget, plan.steering),
        Err(e) => (state, Some(e)),
    };
    Ok(finish(&state, &log.header.params, &world, failure, started, config.record_wall_clock))
}

/// Runs one continuation per prefix log. Every prefix must match the
/// configured task and replay cleanly, otherwise nothing runs.
///
/// The seed list and generation parameters of `config` are ignored; each
/// episode uses the seed and parameters recorded in its prefix.
pub fn run_psp(config: &RunConfig, prefixes: &[EpisodeLog]) -> Result<RunOutput, HarnessError> {
    check_config(config)?;
    if config.mode == Mode::SelfPlay {
        return Err(HarnessError::Config("prompted self-play needs a psp mode".into()));
    }
    let worlds = prefixes.iter().map(|log| validate(config, log)).collect::<Result<Vec<_>, _>>()?;
    for log in prefixes {
        plan(config.mode, log)?;
    }
    let results: Vec<Result<EpisodeLog, HarnessError>> = prefixes
        .par_iter()
        .zip(worlds)
        .map(|(log, world)| continue_episode(config, log, world))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    for (log, result) in prefixes.iter().zip(results) {
        match result {
            Ok(out) => {
                rows.push(EpisodeRow::from_log(&out));
                logs.push(out);
            }
            Err(e) => rows.push(EpisodeRow::failed(log.header.seed, e.to_string())),
        }
    }
    Ok(RunOutput {
        summary: RunSummary::from_rows(Some(config.task), rows),
        logs,
    })
}
