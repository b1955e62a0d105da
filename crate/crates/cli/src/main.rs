//! `dialenv`: generate worlds, run self-play and prompted self-play, score
//! decisions, summarize logs and serve live sessions.
//!
//! Bridge agents (`tcp:` / `cmd:`) wait `DIALENV_BRIDGE_TIMEOUT_MS`
//! milliseconds for each reply (default 30000).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dialenv_core::dialogue::{parse_proposal, render_proposal, Proposal};
use dialenv_core::harness::{run_psp, run_selfplay, stats, AgentSpec, Mode, RunConfig, RunOutput};
use dialenv_core::worldgen::render_observation;
use dialenv_core::{scoring, EpisodeLog, GenParams, Role, Task, WorldFile};
use dialenv_server::ServerOptions;

#[derive(Parser)]
#[command(name = "dialenv", version, about = "Decision-oriented dialogue environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world and write it as JSON.
    Generate {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generation parameters as JSON, e.g. '{"task":"planning","k":3,"s":30}'.
        #[arg(long)]
        params: Option<String>,
        /// Print what this role observes instead of the world file.
        #[arg(long)]
        observation: Option<Role>,
        /// Output file (stdout when omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run self-play episodes.
    Selfplay {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Continue prefixes of existing episode logs (prompted self-play).
    Psp {
        #[command(flatten)]
        run: RunArgs,
        /// psp-50, psp-75 or psp-proposal.
        #[arg(long, default_value = "psp-50")]
        mode: Mode,
        /// Episode logs or directories of `*.jsonl` logs to continue.
        #[arg(long = "prefix", required = true)]
        prefixes: Vec<PathBuf>,
    },
    /// Score a decision against a world file, or re-check an episode log.
    Score {
        /// World file written by `generate`.
        #[arg(long, conflicts_with = "log", required_unless_present = "log")]
        world: Option<PathBuf>,
        /// Proposal as rendered text (e.g. "[Mad Seoul, NULL, Lincoln Park]")
        /// or as JSON (e.g. '{"type":"flights","slots":[3,7]}').
        #[arg(long, requires = "world")]
        proposal: Option<String>,
        /// Replay an episode log and report its final score.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Summarize episode logs (files or directories).
    Stats {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve live sessions over HTTP and websockets.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Directory of static UI assets.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = dialenv_core::agents::DEFAULT_RETRY_BUDGET)]
        retry_budget: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: Task,
    /// Seeds: `7`, `0..100` (end exclusive) or `1,4,9`.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Agent for every role without an explicit `--role-agent`:
    /// random, oracle, tcp:HOST:PORT or cmd:PROGRAM.
    #[arg(long, default_value = "random")]
    agent: AgentSpec,
    /// Agent for one role, as ROLE=AGENT. Repeatable.
    #[arg(long = "role-agent", value_parser = parse_role_agent)]
    role_agents: Vec<(Role, AgentSpec)>,
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    action_cap: Option<usize>,
    #[arg(long, default_value_t = dialenv_core::agents::DEFAULT_RETRY_BUDGET)]
    retry_budget: usize,
    /// Record wall-clock time in log footers.
    #[arg(long)]
    wall_clock: bool,
    /// Directory for episode logs and summary.json.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_role_agent(s: &str) -> Result<(Role, AgentSpec), String> {
    let (role, agent) = s.split_once('=').ok_or("expected ROLE=AGENT")?;
    Ok((role.parse()?, agent.parse()?))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {s}");
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed '{x}'")))
        .collect()
}

fn parse_params(task: Task, json: Option<&str>) -> Result<GenParams> {
    let params = match json {
        Some(j) => serde_json::from_str::<GenParams>(j).context("parsing --params")?,
        None => task.default_params(),
    };
    if params.task() != task {
        bail!("--params are for {}, not {task}", params.task());
    }
    Ok(params)
}

impl RunArgs {
    fn config(&self, mode: Mode) -> Result<RunConfig> {
        let mut c = RunConfig::new(self.task);
        c.params = parse_params(self.task, self.params.as_deref())?;
        c.seeds = parse_seeds(&self.seeds)?;
        c.default_agent = self.agent.clone();
        c.agents = self.role_agents.iter().cloned().collect::<BTreeMap<_, _>>();
        for role in c.agents.keys() {
            if !self.task.roster().contains(role) {
                bail!("{} has no {role} role", self.task);
            }
        }
        c.mode = mode;
        c.action_cap = self.action_cap;
        c.retry_budget = self.retry_budget;
        c.record_wall_clock = self.wall_clock;
        Ok(c)
    }

    fn finish(&self, output: RunOutput) -> Result<()> {
        if let Some(dir) = &self.out {
            output.write(dir).with_context(|| format!("writing {}", dir.display()))?;
        }
        println!("{}", output.summary.render());
        Ok(())
    }
}

/// Episode logs named directly, plus every `*.jsonl` file in named
/// directories (sorted by name).
fn read_logs(paths: &[PathBuf]) -> Result<Vec<EpisodeLog>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files.iter().map(|f| read_log(f)).collect()
}

fn read_log(path: &Path) -> Result<EpisodeLog> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    EpisodeLog::from_jsonl(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_proposal(world: &dialenv_core::World, text: &str) -> Result<Proposal> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).context("parsing proposal JSON");
    }
    parse_proposal(world, text).map_err(|e| anyhow::anyhow!("invalid proposal: {e}"))
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Generate {
            task,
            seed,
            params,
            observation,
            out,
        } => {
            let params = parse_params(task, params.as_deref())?;
            let file = WorldFile::generate(params, seed)?;
            let text = match observation {
                Some(role) => {
                    if !task.roster().contains(&role) {
                        bail!("{task} has no {role} role");
                    }
                    render_observation(&file.world, role)
                }
                None => serde_json::to_string_pretty(&file)? + "\n",
            };
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Selfplay { run } => {
            let output = run_selfplay(&run.config(Mode::SelfPlay)?)?;
            run.finish(output)?;
        }
        Command::Psp { run, mode, prefixes } => {
            if mode == Mode::SelfPlay {
                bail!("psp needs a psp mode (psp-50, psp-75 or psp-proposal)");
            }
            let logs = read_logs(&prefixes)?;
            let output = run_psp(&run.config(mode)?, &logs)?;
            run.finish(output)?;
        }
        Command::Score { world, proposal, log } => {
            if let Some(path) = log {
                let log = read_log(&path)?;
                log.replay().with_context(|| format!("replaying {}", path.display()))?;
                println!("{}", serde_json::to_string_pretty(&log.footer)?);
                return Ok(());
            }
            let path = world.expect("clap requires --world without --log");
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let file: WorldFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let Some(proposal) = proposal else { bail!("--proposal is required with --world") };
            let proposal = read_proposal(&file.world, &proposal)?;
            let score = scoring::evaluate(&file.world, &proposal)?;
            println!("{}", render_proposal(&file.world, &proposal));
            println!("{}", serde_json::to_string_pretty(&score)?);
        }
        Command::Stats { logs, json } => {
            let summary = stats(&read_logs(&logs)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                println!("{}", summary.render());
            }
        }
        Command::Serve {
            bind,
            static_dir,
            retry_budget,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .with_context(|| format!("binding {bind}"))?;
                let options = ServerOptions {
                    static_dir,
                    retry_budget,
                };
                dialenv_server::serve(listener, options).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
