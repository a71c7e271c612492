//! Deterministic discrete-event scenario engine.
//!
//! A [`ScenarioSpec`] declares agents (with roles and optional Byzantine
//! behaviors), mutual-credit trust edges, and a round-indexed script of
//! directives. [`run_scenario`] executes it over the dissemination
//! protocol with a fair seeded scheduler, producing the final
//! configuration, a replayable JSON-lines [`EventLog`], and per-round
//! liquidity metrics.

mod engine;
mod eventlog;
pub mod metrics;
mod scenario;

pub use engine::{
    fair_schedule, run_scenario, run_scenario_with, EngineError, EngineOptions, ScenarioOutcome,
};
pub use eventlog::{
    replay, AgentInfo, BlockJson, EventBody, EventLog, EventRecord, LogHeader, NftJson,
    Replayed, ReplayError,
};
pub use scenario::{
    mutual_credit_community, scenario_bank_risk, scenario_doublespend_recovery, scenario_hawala,
    scenario_hawala_broken, scenario_private_banker, AgentDecl, AgentRegistry, Directive, Role,
    ScenarioError, ScenarioSpec, ScriptEntry, TrustDecl,
};
