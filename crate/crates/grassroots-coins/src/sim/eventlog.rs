//! Replayable JSON-lines event log.
//!
//! Line 1 is the header; each following line is one event; the final line
//! is a summary with the event count and a digest of the final
//! configuration. Replaying the log from the initial configuration
//! reproduces the final state bit-exactly (record identities are
//! recomputed and checked), so a log is both an audit trail and a
//! transportable run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gcd::{CoinBlock, GcdConfig};
use crate::mts::{AgentId, Config};
use crate::nft::{
    DoublespendEvidence, Metadata, MockSigner, Nft, NftId, NftUniverse, Payload, Signer,
};
use crate::sim::scenario::{AgentRegistry, Role};

pub const LOG_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct AgentInfo {
    pub name: String,
    pub role: Role,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LogHeader {
    pub schema: u32,
    pub scenario: String,
    pub seed: u64,
    pub horizon: u32,
    pub agents: Vec<AgentInfo>,
}

/// Wire form of a block; agents are referenced by name.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct BlockJson {
    pub author: String,
    pub index: u32,
    pub payload: Option<NftId>,
}

/// Wire form of a record, self-contained enough to re-intern: payloads
/// reference earlier records by id, signatures are recomputed by the
/// deterministic signer and the id is checked on replay.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct NftJson {
    pub id: NftId,
    pub payload: PayloadJson,
    pub metadata: Metadata,
    pub sender: String,
    pub recipient: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PayloadJson {
    Object(String),
    Transfer(NftId),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    /// Own-chain extension: initial block (`nft` absent) or a coin block.
    Create {
        block: BlockJson,
        nft: Option<NftJson>,
    },
    /// Adopt another agent's initial block.
    Follow { of: String },
    /// Pull a block from a friend.
    Receive { from: String, block: BlockJson },
    /// Byzantine injection of a block into another agent's state.
    Push {
        target: String,
        block: BlockJson,
        nft: NftJson,
    },
    /// Byzantine same-index block in the actor's own state.
    OwnFork { block: BlockJson, nft: NftJson },
    /// A claim the actor declines to settle (with evidence when known).
    Refusal {
        claim: NftId,
        claimant: String,
        evidence: Option<DoublespendEvidence>,
    },
    /// The actor's view exposed a doublespend.
    Detection {
        object: NftId,
        evidence: DoublespendEvidence,
    },
    /// A scripted directive that could not run (e.g. the agent dodges).
    Skipped { reason: String },
    /// End-of-log marker with integrity data.
    Summary {
        events: u64,
        final_state: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct EventRecord {
    pub round: u32,
    pub actor: String,
    pub label: String,
    /// "ok" for guard-admitted steps; byzantine steps carry their bypass
    /// verdict; bookkeeping events carry their kind.
    pub verdict: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub header: Option<LogHeader>,
    pub events: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(header: LogHeader) -> Self {
        EventLog {
            header: Some(header),
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EventRecord) {
        self.events.push(record);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&serde_json::to_string(h).expect("header serializes"));
            out.push('\n');
        }
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EventLog, ReplayError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines.next().ok_or(ReplayError::Empty)?;
        let header: LogHeader =
            serde_json::from_str(header_line).map_err(|e| ReplayError::Parse(e.to_string()))?;
        if header.schema != LOG_SCHEMA {
            return Err(ReplayError::BadSchema(header.schema));
        }
        let mut events = Vec::new();
        for line in lines {
            let record: EventRecord =
                serde_json::from_str(line).map_err(|e| ReplayError::Parse(e.to_string()))?;
            events.push(record);
        }
        Ok(EventLog {
            header: Some(header),
            events,
        })
    }

    pub fn sha256_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_jsonl().as_bytes());
        let d = h.finalize();
        d.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("empty log")]
    Empty,
    #[error("unsupported log schema {0}")]
    BadSchema(u32),
    #[error("log does not parse: {0}")]
    Parse(String),
    #[error("log does not replay: {0}")]
    Mismatch(String),
}

/// Digest of a configuration: canonical bytes of every (agent, block)
/// pair in order.
pub fn state_digest(config: &GcdConfig) -> String {
    let mut h = Sha256::new();
    for (agent, state) in config.iter() {
        h.update(agent.0.to_be_bytes());
        for block in state {
            h.update(block.canonical_bytes());
        }
    }
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Result of replaying a log: the reconstructed universe, per-round
/// configurations and the final one.
pub struct Replayed {
    pub registry: AgentRegistry,
    pub universe: NftUniverse,
    pub final_config: GcdConfig,
    /// Configuration snapshot after each round, `(round, config)`.
    pub round_configs: Vec<(u32, GcdConfig)>,
    /// Replayed events paired with the acting agent id.
    pub steps: Vec<(u32, AgentId, EventBody, String)>,
}

/// Rebuild the run from a log, re-deriving every record identity.
pub fn replay(log: &EventLog) -> Result<Replayed, ReplayError> {
    let header = log.header.as_ref().ok_or(ReplayError::Empty)?;
    let registry = AgentRegistry::new(header.agents.iter().map(|a| a.name.clone()));
    let mut universe = NftUniverse::new();
    let signer = MockSigner;
    let agents = registry.agent_set();
    let mut states: BTreeMap<AgentId, std::collections::BTreeSet<CoinBlock>> =
        agents.iter().map(|a| (*a, Default::default())).collect();
    let mut round_configs = Vec::new();
    let mut steps = Vec::new();
    let mut current_round = 0u32;
    let mut summary: Option<(u64, String)> = None;
    let mut counted: u64 = 0;

    let lookup = |registry: &AgentRegistry, name: &str| -> Result<AgentId, ReplayError> {
        registry
            .id(name)
            .ok_or_else(|| ReplayError::Mismatch(format!("unknown agent {name:?}")))
    };

    let intern =
        |universe: &mut NftUniverse, nft: &NftJson, registry: &AgentRegistry| -> Result<Nft, ReplayError> {
            let payload = match &nft.payload {
                PayloadJson::Object(s) => Payload::Object(s.clone()),
                PayloadJson::Transfer(id) => Payload::Transfer(*id),
            };
            let sender = lookup(registry, &nft.sender)?;
            let recipient = lookup(registry, &nft.recipient)?;
            let sig = signer
                .sign(sender, &nft.id)
                .map_err(|e| ReplayError::Mismatch(e.to_string()))?;
            let built = universe
                .intern_checked(&signer, payload, nft.metadata.clone(), sender, recipient, sig)
                .map_err(|e| ReplayError::Mismatch(format!("record rebuild failed: {e}")))?;
            if built.id() != nft.id {
                return Err(ReplayError::Mismatch(format!(
                    "record id mismatch: logged {} rebuilt {}",
                    nft.id,
                    built.id()
                )));
            }
            Ok(built)
        };

    let snapshot = |states: &BTreeMap<AgentId, std::collections::BTreeSet<CoinBlock>>| {
        Config::from_states(states.clone())
    };

    for record in &log.events {
        if record.round > current_round {
            round_configs.push((current_round, snapshot(&states)));
            current_round = record.round;
        }
        if summary.is_some() {
            return Err(ReplayError::Mismatch("events after summary".into()));
        }
        let actor = lookup(&registry, &record.actor)?;
        match &record.body {
            EventBody::Create { block, nft } => {
                let author = lookup(&registry, &block.author)?;
                if author != actor {
                    return Err(ReplayError::Mismatch("create by non-author".into()));
                }
                let payload = match nft {
                    Some(n) => Some(intern(&mut universe, n, &registry)?.id()),
                    None => None,
                };
                if payload != block.payload {
                    return Err(ReplayError::Mismatch("block payload mismatch".into()));
                }
                let b = CoinBlock::new(author, block.index, payload)
                    .ok_or_else(|| ReplayError::Mismatch("malformed block".into()))?;
                states.get_mut(&actor).expect("declared").insert(b);
            }
            EventBody::Follow { of } => {
                let of = lookup(&registry, of)?;
                states
                    .get_mut(&actor)
                    .expect("declared")
                    .insert(CoinBlock::initial(of));
            }
            EventBody::Receive { from, block } => {
                let from = lookup(&registry, from)?;
                let author = lookup(&registry, &block.author)?;
                let b = CoinBlock::new(author, block.index, block.payload)
                    .ok_or_else(|| ReplayError::Mismatch("malformed block".into()))?;
                if !states[&from].contains(&b) {
                    return Err(ReplayError::Mismatch(format!(
                        "receive of a block the source never had: {b}"
                    )));
                }
                if let Some(id) = &b.payload {
                    if !universe.contains(id) {
                        return Err(ReplayError::Mismatch(
                            "received block references an unseen record".into(),
                        ));
                    }
                }
                states.get_mut(&actor).expect("declared").insert(b);
            }
            EventBody::Push { target, block, nft } => {
                let target = lookup(&registry, target)?;
                let author = lookup(&registry, &block.author)?;
                let built = intern(&mut universe, nft, &registry)?;
                let b = CoinBlock::new(author, block.index, Some(built.id()))
                    .ok_or_else(|| ReplayError::Mismatch("malformed block".into()))?;
                states.get_mut(&target).expect("declared").insert(b);
            }
            EventBody::OwnFork { block, nft } => {
                let author = lookup(&registry, &block.author)?;
                let built = intern(&mut universe, nft, &registry)?;
                let b = CoinBlock::new(author, block.index, Some(built.id()))
                    .ok_or_else(|| ReplayError::Mismatch("malformed block".into()))?;
                states.get_mut(&actor).expect("declared").insert(b);
            }
            EventBody::Refusal { .. }
            | EventBody::Detection { .. }
            | EventBody::Skipped { .. } => {}
            EventBody::Summary {
                events,
                final_state,
            } => {
                summary = Some((*events, final_state.clone()));
            }
        }
        if !matches!(record.body, EventBody::Summary { .. }) {
            counted += 1;
        }
        steps.push((record.round, actor, record.body.clone(), record.verdict.clone()));
    }

    round_configs.push((current_round, snapshot(&states)));
    let final_config = snapshot(&states);
    match summary {
        None => {
            return Err(ReplayError::Mismatch(
                "log is truncated: no summary record".into(),
            ))
        }
        Some((events, digest)) => {
            if events != counted {
                return Err(ReplayError::Mismatch(format!(
                    "summary counts {events} events, log has {counted}"
                )));
            }
            let actual = state_digest(&final_config);
            if digest != actual {
                return Err(ReplayError::Mismatch(format!(
                    "final state digest mismatch: logged {digest}, replayed {actual}"
                )));
            }
        }
    }
    Ok(Replayed {
        registry,
        universe,
        final_config,
        round_configs,
        steps,
    })
}
