//! Command-line front end: run scenarios, verify logs, compute analytics,
//! and run the bounded grassroots check.
//!
//! Exit codes: 0 success, 1 verification or scenario failure, 2 usage or
//! input error. Set `GRASSROOTS_LOG=debug|info` for diagnostics.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use crate::analytics;
use crate::gcd::{CoinBlock, GcdAction, GcdSystem};
use crate::harness;
use crate::mts::{
    check_grassroots_bounded, check_live_bounded, AgentId, Config, Dmts, GrassrootsCaps,
    GrassrootsVerdict, Run,
};
use crate::nft::forked_objects;
use crate::sc;
use crate::sigma;
use crate::sim::{self, metrics, EventBody, EventLog, Replayed};
use crate::toy::AtaSystem;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "grassroots-coins",
    about = "Sovereign debt-coin protocols: scenario simulator and verification tools",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scenario file and write its artifacts.
    Run {
        /// Scenario TOML (schema = 1).
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the round horizon.
        #[arg(long)]
        horizon: Option<u32>,
        /// Output directory for eventlog.jsonl, metrics.csv, final-state.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a recorded event log.
    Verify {
        eventlog: PathBuf,
        #[arg(long, value_enum, default_value_t = VerifyMode::Refinement)]
        mode: VerifyMode,
        /// Starvation horizon in rounds for liveness checking.
        #[arg(long, default_value_t = 0)]
        horizon_rounds: u32,
    },
    /// Liquidity analytics from a replayed log.
    Analyze {
        eventlog: PathBuf,
        /// Round to analyze (default: final).
        #[arg(long)]
        at: Option<u32>,
        /// Also write a CSV row set to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Quick-ratio search depth.
        #[arg(long, default_value_t = 2)]
        quick_depth: usize,
    },
    /// Bounded behavioral-embedding check on tiny instances.
    Grassroots {
        /// Small group size.
        #[arg(long, default_value_t = 2)]
        p: u32,
        /// Embedding group size.
        #[arg(long, default_value_t = 3)]
        pprime: u32,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = ProtocolChoice::Gcd)]
        protocol: ProtocolChoice,
    },
    /// List every redemption claim in a log with its final status.
    EnumerateClaims { eventlog: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum VerifyMode {
    Refinement,
    Safety,
    Liveness,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum ProtocolChoice {
    Gcd,
    Ata,
}

pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            horizon,
            out,
        } => cmd_run(&scenario, seed, horizon, &out),
        Command::Verify {
            eventlog,
            mode,
            horizon_rounds,
        } => cmd_verify(&eventlog, mode, horizon_rounds),
        Command::Analyze {
            eventlog,
            at,
            csv,
            quick_depth,
        } => cmd_analyze(&eventlog, at, csv.as_deref(), quick_depth),
        Command::Grassroots {
            p,
            pprime,
            depth,
            protocol,
        } => cmd_grassroots(p, pprime, depth, protocol),
        Command::EnumerateClaims { eventlog } => cmd_enumerate_claims(&eventlog),
    }
}

fn read_log(path: &Path) -> Result<Replayed, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        EXIT_USAGE
    })?;
    let log = EventLog::from_jsonl(&text).map_err(|e| {
        eprintln!("{e}");
        EXIT_USAGE
    })?;
    sim::replay(&log).map_err(|e| {
        eprintln!("{e}");
        EXIT_USAGE
    })
}

pub fn cmd_run(scenario: &Path, seed: Option<u64>, horizon: Option<u32>, out: &Path) -> i32 {
    let text = match fs::read_to_string(scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", scenario.display());
            return EXIT_USAGE;
        }
    };
    let spec = match sim::ScenarioSpec::from_toml(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    let opts = sim::EngineOptions {
        seed,
        horizon,
        ..Default::default()
    };
    let outcome = match sim::run_scenario_with(&spec, &opts) {
        Ok(o) => o,
        Err(e @ sim::EngineError::Scenario(_)) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("{e}");
            return EXIT_VERIFICATION;
        }
    };
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("cannot create {}: {e}", out.display());
        return EXIT_USAGE;
    }
    let log_path = out.join("eventlog.jsonl");
    let csv_path = out.join("metrics.csv");
    let state_path = out.join("final-state.json");
    let writes = [
        fs::write(&log_path, outcome.log.to_jsonl()),
        fs::write(&csv_path, metrics::metrics_csv(&outcome.metrics, &outcome.registry)),
        fs::write(&state_path, metrics::final_state_json(&outcome)),
    ];
    if let Some(e) = writes.into_iter().find_map(|r| r.err()) {
        eprintln!("write failed: {e}");
        return EXIT_USAGE;
    }
    info!(
        "wrote {}, {}, {}",
        log_path.display(),
        csv_path.display(),
        state_path.display()
    );
    println!(
        "{}: {} events over {} rounds; log sha256 {}",
        spec.name,
        outcome.log.events.len(),
        outcome
            .log
            .header
            .as_ref()
            .map(|h| h.horizon)
            .unwrap_or_default(),
        outcome.log.sha256_hex()
    );
    EXIT_OK
}

/// Rebuild the per-step actions from a replayed log, marking bypassed
/// (byzantine) steps.
struct RebuiltRun {
    sys: GcdSystem,
    /// (step index, actor, action, guard-checked) for ordinary steps;
    /// byzantine injections carry the raw block instead.
    steps: Vec<RebuiltStep>,
    round_starts: Vec<usize>,
    agents: BTreeSet<AgentId>,
}

enum RebuiltStep {
    Action {
        actor: AgentId,
        action: GcdAction,
        checked: bool,
        round: u32,
    },
    Inject {
        target: AgentId,
        block: CoinBlock,
        round: u32,
        label: String,
    },
}

fn rebuild(replayed: &Replayed) -> RebuiltRun {
    let agents = replayed.registry.agent_set();
    let sys = GcdSystem::new(agents.clone());
    *sys.universe.borrow_mut() = replayed.universe.clone();
    let mut steps = Vec::new();
    let mut round_starts = Vec::new();
    let mut last_round = None;
    for (round, actor, body, verdict) in &replayed.steps {
        if last_round != Some(*round) {
            round_starts.push(steps.len());
            last_round = Some(*round);
        }
        let checked = verdict == "ok";
        let lookup = |name: &str| replayed.registry.id(name).expect("replay validated");
        match body {
            EventBody::Create { block, nft } => {
                let action = match nft {
                    None => GcdAction::CreateInitial,
                    Some(n) => {
                        let built = replayed.universe.get(&n.id).expect("interned").clone();
                        if built.is_object() {
                            GcdAction::CreateFresh(built)
                        } else {
                            GcdAction::CreateTransfer(built)
                        }
                    }
                };
                let _ = block;
                steps.push(RebuiltStep::Action {
                    actor: *actor,
                    action,
                    checked,
                    round: *round,
                });
            }
            EventBody::Follow { of } => steps.push(RebuiltStep::Action {
                actor: *actor,
                action: GcdAction::Follow(lookup(of)),
                checked,
                round: *round,
            }),
            EventBody::Receive { from, block } => steps.push(RebuiltStep::Action {
                actor: *actor,
                action: GcdAction::Receive {
                    from: lookup(from),
                    block: CoinBlock::new(lookup(&block.author), block.index, block.payload)
                        .expect("replay validated"),
                },
                checked,
                round: *round,
            }),
            EventBody::Push { target, block, nft } => steps.push(RebuiltStep::Inject {
                target: lookup(target),
                block: CoinBlock::new(lookup(&block.author), block.index, Some(nft.id))
                    .expect("replay validated"),
                round: *round,
                label: format!("push into {target}"),
            }),
            EventBody::OwnFork { block, nft } => steps.push(RebuiltStep::Inject {
                target: *actor,
                block: CoinBlock::new(lookup(&block.author), block.index, Some(nft.id))
                    .expect("replay validated"),
                round: *round,
                label: "own-chain fork".into(),
            }),
            EventBody::Refusal { .. }
            | EventBody::Detection { .. }
            | EventBody::Skipped { .. }
            | EventBody::Summary { .. } => {}
        }
    }
    RebuiltRun {
        sys,
        steps,
        round_starts,
        agents,
    }
}

pub fn cmd_verify(eventlog: &Path, mode: VerifyMode, horizon_rounds: u32) -> i32 {
    let replayed = match read_log(eventlog) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let rebuilt = rebuild(&replayed);
    let n_agents = rebuilt.agents.len() as u32;
    let horizon_rounds = if horizon_rounds == 0 {
        n_agents
    } else {
        horizon_rounds
    };
    match mode {
        VerifyMode::Safety => {
            let mut config = rebuilt.sys.initial_config();
            let mut violations = 0usize;
            for step in &rebuilt.steps {
                match step {
                    RebuiltStep::Action {
                        actor,
                        action,
                        checked,
                        round,
                    } => {
                        if *checked {
                            if let Err(reason) = rebuilt.sys.admits(&config, *actor, action) {
                                violations += 1;
                                println!(
                                    "violation at round {round}: {} rejected: {reason}",
                                    rebuilt.sys.describe(*actor, action)
                                );
                            }
                        }
                        apply_action(&rebuilt.sys, &mut config, *actor, action);
                    }
                    RebuiltStep::Inject { target, block, round, label } => {
                        println!("byzantine step at round {round}: {label} ({block})");
                        config.local_mut(*target).expect("declared").insert(*block);
                    }
                }
            }
            let byzantine = rebuilt
                .steps
                .iter()
                .filter(|s| matches!(s, RebuiltStep::Inject { .. }))
                .count();
            println!(
                "safety: {} steps, {violations} guard violations, {byzantine} byzantine bypasses",
                rebuilt.steps.len()
            );
            if violations == 0 {
                EXIT_OK
            } else {
                EXIT_VERIFICATION
            }
        }
        VerifyMode::Refinement => {
            // Byzantine injections break the clean action stream; report
            // them and check the prefix before the first one.
            let mut run = Run::new(rebuilt.agents.clone());
            let mut byzantine_at = None;
            for (i, step) in rebuilt.steps.iter().enumerate() {
                match step {
                    RebuiltStep::Action { actor, action, .. } => {
                        run.push(*actor, action.clone())
                    }
                    RebuiltStep::Inject { label, round, .. } => {
                        byzantine_at = Some((i, *round, label.clone()));
                        break;
                    }
                }
            }
            let horizon = harness::horizon_steps(
                &rebuilt.round_starts,
                run.len(),
                horizon_rounds as usize,
            );
            let report = sigma::verify_refinement(&rebuilt.sys, &run, horizon);
            println!("{}", report.to_json());
            let mut failed = !report.is_clean();
            if let Some((step, round, label)) = byzantine_at {
                println!(
                    "byzantine step at index {step} (round {round}): {label}; refinement checked up to it"
                );
                failed = true;
            }
            if failed {
                EXIT_VERIFICATION
            } else {
                EXIT_OK
            }
        }
        VerifyMode::Liveness => {
            let mut run = Run::new(rebuilt.agents.clone());
            let mut config = rebuilt.sys.initial_config();
            for step in &rebuilt.steps {
                match step {
                    RebuiltStep::Action { actor, action, .. } => {
                        run.push(*actor, action.clone());
                        apply_action(&rebuilt.sys, &mut config, *actor, action);
                    }
                    RebuiltStep::Inject { target, block, .. } => {
                        // keep states aligned; injected blocks are part of
                        // the configuration even if not of the clean run
                        config.local_mut(*target).expect("declared").insert(*block);
                    }
                }
            }
            let horizon = harness::horizon_steps(
                &rebuilt.round_starts,
                run.len(),
                horizon_rounds as usize,
            );
            let receive = check_live_bounded(&rebuilt.sys, &run, horizon);
            let image = sigma::verify_refinement(&rebuilt.sys, &run, horizon);
            for flag in &receive.flags {
                println!(
                    "starved dissemination class: {} (enabled {} steps from step {})",
                    flag.class, flag.enabled_for, flag.enabled_from
                );
            }
            for class in &image.starvation {
                println!("starved settlement class: {class}");
            }
            println!(
                "liveness: horizon {horizon_rounds} rounds ({horizon} steps), {} dissemination flags, {} settlement flags",
                receive.flags.len(),
                image.starvation.len()
            );
            if receive.flags.is_empty() && image.starvation.is_empty() {
                EXIT_OK
            } else {
                EXIT_VERIFICATION
            }
        }
    }
}

fn apply_action(
    sys: &GcdSystem,
    config: &mut Config<crate::gcd::GcdLocal>,
    actor: AgentId,
    action: &GcdAction,
) {
    let state = config.local(actor).expect("declared");
    let block = action.block(state, actor);
    config.local_mut(actor).expect("declared").insert(block);
    let _ = sys;
}

pub fn cmd_analyze(
    eventlog: &Path,
    at: Option<u32>,
    csv: Option<&Path>,
    quick_depth: usize,
) -> i32 {
    let replayed = match read_log(eventlog) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let (round, config) = match at {
        None => replayed
            .round_configs
            .last()
            .map(|(r, c)| (*r, c.clone()))
            .expect("replay yields at least one round"),
        Some(r) => match replayed.round_configs.iter().find(|(round, _)| *round == r) {
            Some((r, c)) => (*r, c.clone()),
            None => {
                eprintln!("round {r} not present in the log");
                return EXIT_USAGE;
            }
        },
    };
    let view: BTreeSet<_> = config
        .iter()
        .flat_map(|(_, s)| crate::gcd::coin_view(s))
        .collect();
    let forked = forked_objects(&replayed.universe, &view);
    let filtered: BTreeSet<_> = view
        .iter()
        .filter(|id| {
            replayed
                .universe
                .get(id)
                .map(|n| !forked.contains(&n.object_id()))
                .unwrap_or(false)
        })
        .copied()
        .collect();
    let matrix = match analytics::holdings_of_set(
        &replayed.universe,
        &filtered,
        &replayed.registry.agent_set(),
        round as usize,
    ) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("holdings are not well-defined: {e}");
            return EXIT_VERIFICATION;
        }
    };
    let report = analytics::liquidity_report(&matrix, round, quick_depth);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if !forked.is_empty() {
        println!("note: {} doublespent coin(s) excluded from holdings", forked.len());
    }
    if let Some(path) = csv {
        let text = metrics::metrics_csv(std::slice::from_ref(&report), &replayed.registry);
        if let Err(e) = fs::write(path, text) {
            eprintln!("write failed: {e}");
            return EXIT_USAGE;
        }
    }
    EXIT_OK
}

pub fn cmd_grassroots(p: u32, pprime: u32, depth: usize, protocol: ProtocolChoice) -> i32 {
    let small: BTreeSet<AgentId> = (0..p).map(AgentId).collect();
    let large: BTreeSet<AgentId> = (0..pprime).map(AgentId).collect();
    let caps = GrassrootsCaps {
        depth,
        ..Default::default()
    };
    let verdict = match protocol {
        ProtocolChoice::Gcd => {
            check_grassroots_bounded(|a| GcdSystem::new(a.clone()), &small, &large, &caps)
        }
        ProtocolChoice::Ata => {
            check_grassroots_bounded(|a| AtaSystem::new(a.clone()), &small, &large, &caps)
        }
    };
    match verdict {
        Err(e) => {
            eprintln!("{e}");
            EXIT_USAGE
        }
        Ok(GrassrootsVerdict::ConsistentWithGrassroots {
            small_behaviors,
            new_behavior,
        }) => {
            println!("CONSISTENT-WITH-GRASSROOTS");
            println!(
                "  {small_behaviors} bounded behaviors of the small group all embed; new behavior of length {} found",
                new_behavior.len()
            );
            EXIT_OK
        }
        Ok(GrassrootsVerdict::MissingBehavior { run }) => {
            println!("COUNTEREXAMPLE");
            println!("  small-group run the embedding cannot reproduce:");
            for (i, cfg) in run.iter().enumerate() {
                println!("  step {}: {cfg}", i + 1);
            }
            EXIT_VERIFICATION
        }
        Ok(GrassrootsVerdict::NoNewBehavior) => {
            println!("COUNTEREXAMPLE");
            println!("  the embedding adds no behavior beyond the small group's");
            EXIT_VERIFICATION
        }
    }
}

pub fn cmd_enumerate_claims(eventlog: &Path) -> i32 {
    let replayed = match read_log(eventlog) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let view: BTreeSet<_> = replayed
        .final_config
        .iter()
        .flat_map(|(_, s)| crate::gcd::coin_view(s))
        .collect();
    let claims = sc::claims_with_status(&replayed.universe, &view);
    for (claim, status) in &claims {
        println!(
            "{}",
            serde_json::json!({
                "claim": claim.id,
                "claimant": replayed.registry.name(claim.claimant),
                "obligor": replayed.registry.name(claim.obligor),
                "target": claim.target,
                "status": status,
                "degenerate": claim.degenerate,
            })
        );
    }
    println!("{} claim(s)", claims.len());
    EXIT_OK
}
