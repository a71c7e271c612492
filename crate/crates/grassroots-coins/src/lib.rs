//! Sovereign debt-coin protocols: NFT trade, coin redemption, friend-graph
//! dissemination, and the refinement map between the coin ledger and its
//! dissemination-layer implementation, plus a deterministic scenario
//! simulator and economic analytics.
//!
//! The crate is organized in layers:
//!
//! - [`mts`] — a generic distributed multiagent transition-system kernel:
//!   configurations, runs, safety/liveness checking, projection, and a
//!   bounded behavioral-embedding ("grassroots") checker.
//! - [`nft`] — signed transfer records with provenance, consistency and
//!   doublespend detection; the base trade protocol guard.
//! - [`sc`] — the coin instance: redemption claims, settlement, the freeze
//!   rule, and the per-agent prefix order on coin configurations.
//! - [`gcd`] — coin dissemination over a friendship graph: coin blocks,
//!   follow/receive transitions, and reachability.
//! - [`sigma`] — the refinement map from dissemination states to coin
//!   configurations, its inverse, and the run-level refinement checker.
//! - [`analytics`] — holdings, foreign debt, trade balance, velocity,
//!   liquidity ratios, insolvency, and chain-redemption planning.
//! - [`sim`] — the deterministic scenario engine with replayable event logs.
//!
//! Every runnable capability has a matching example under `examples/`;
//! the `grassroots-coins` binary exposes the same machinery as subcommands.

pub mod analytics;
pub mod gcd;
pub mod harness;
pub mod mts;
pub mod nft;
pub mod sc;
pub mod sigma;
pub mod sim;
pub mod toy;

pub mod cli;
