//! Scenario declarations (TOML, `schema = 1`) and the bundled scenario
//! builders.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mts::AgentId;

pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Maximum scheduler rounds.
    pub horizon: u32,
    pub agents: Vec<AgentDecl>,
    /// Mutual credit lines; also the friendship bootstrap. Each side
    /// issues the stated number of own coins to the other in round 1.
    #[serde(default)]
    pub trust: Vec<TrustDecl>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDecl {
    pub name: String,
    #[serde(default)]
    pub role: Role,
    /// Issuer preference when paying without an explicit issuer: coins of
    /// the named agents are spent first, in order. Bank-issued coins come
    /// first by default.
    #[serde(default)]
    pub prefer: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Sovereign,
    Banker,
    Bank,
    Byzantine,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustDecl {
    pub a: String,
    pub b: String,
    /// Coins `a` issues to `b` when the line opens.
    pub a_to_b: u32,
    /// Coins `b` issues to `a`.
    pub b_to_a: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub round: u32,
    #[serde(flatten)]
    pub directive: Directive,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Directive {
    /// Mint fresh own coins and keep them.
    Issue { agent: String, count: u32 },
    /// Open (or widen) a mutual credit line mid-run.
    Exchange {
        a: String,
        b: String,
        a_to_b: u32,
        b_to_a: u32,
    },
    /// Transfer held coins. Without `issuer`, spend by preference order.
    Pay {
        from: String,
        to: String,
        count: u32,
        #[serde(default)]
        issuer: Option<String>,
    },
    /// Redemption claim: `claimant` surrenders a coin of `obligor` it
    /// holds, requesting a coin issued by `target_issuer` (fresh coin of
    /// the obligor when absent).
    Claim {
        claimant: String,
        obligor: String,
        #[serde(default)]
        target_issuer: Option<String>,
    },
    /// Pay across the trust graph via chain redemption: convert held
    /// coins along a liquidity path into a coin of `to`'s issue or of
    /// `to`'s direct creditor, then hand it over.
    ChainPay { from: String, to: String },
    /// Byzantine: fork a held own coin to two victims via equivocating
    /// blocks, disclosed selectively.
    Doublespend {
        agent: String,
        victims: Vec<String>,
    },
    /// Byzantine: equivocate at the next own index in the agent's own
    /// published chain.
    ForkChain { agent: String },
    /// Byzantine: from this round on, ignore claims and scripted duties.
    DodgeClaims { agent: String },
}

impl Directive {
    /// The agent whose turn executes this directive.
    pub fn actor(&self) -> &str {
        match self {
            Directive::Issue { agent, .. } => agent,
            Directive::Exchange { a, .. } => a,
            Directive::Pay { from, .. } => from,
            Directive::Claim { claimant, .. } => claimant,
            Directive::ChainPay { from, .. } => from,
            Directive::Doublespend { agent, .. } => agent,
            Directive::ForkChain { agent } => agent,
            Directive::DodgeClaims { agent } => agent,
        }
    }

    pub fn mentions(&self) -> Vec<&str> {
        match self {
            Directive::Issue { agent, .. } => vec![agent],
            Directive::Exchange { a, b, .. } => vec![a, b],
            Directive::Pay {
                from, to, issuer, ..
            } => {
                let mut v = vec![from.as_str(), to.as_str()];
                if let Some(i) = issuer {
                    v.push(i);
                }
                v
            }
            Directive::Claim {
                claimant,
                obligor,
                target_issuer,
            } => {
                let mut v = vec![claimant.as_str(), obligor.as_str()];
                if let Some(t) = target_issuer {
                    v.push(t);
                }
                v
            }
            Directive::ChainPay { from, to } => vec![from, to],
            Directive::Doublespend { agent, victims } => {
                let mut v = vec![agent.as_str()];
                v.extend(victims.iter().map(|s| s.as_str()));
                v
            }
            Directive::ForkChain { agent } => vec![agent],
            Directive::DodgeClaims { agent } => vec![agent],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unsupported schema {0}; expected {SCENARIO_SCHEMA}")]
    BadSchema(u32),
    #[error("agent name {0:?} is invalid (use [A-Za-z0-9_-]+) or duplicated")]
    BadAgentName(String),
    #[error("reference to undeclared agent {0:?}")]
    UnknownAgent(String),
    #[error("trust edge endpoints must differ ({0:?})")]
    SelfTrust(String),
    #[error("byzantine directive targets non-byzantine agent {0:?}")]
    NotByzantine(String),
    #[error("scenario file error: {0}")]
    Parse(String),
}

/// Stable mapping between declaration-ordered agent names and agent ids.
#[derive(Clone, Debug)]
pub struct AgentRegistry {
    names: Vec<String>,
    ids: BTreeMap<String, AgentId>,
}

impl AgentRegistry {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        let names: Vec<String> = names.into_iter().collect();
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), AgentId(i as u32)))
            .collect();
        AgentRegistry { names, ids }
    }

    pub fn id(&self, name: &str) -> Option<AgentId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: AgentId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn agent_set(&self) -> BTreeSet<AgentId> {
        (0..self.names.len() as u32).map(AgentId).collect()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<AgentRegistry, ScenarioError> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::BadSchema(self.schema));
        }
        let mut seen = BTreeSet::new();
        for a in &self.agents {
            if !valid_name(&a.name) || !seen.insert(a.name.clone()) {
                return Err(ScenarioError::BadAgentName(a.name.clone()));
            }
        }
        let registry = AgentRegistry::new(self.agents.iter().map(|a| a.name.clone()));
        let role_of = |name: &str| -> Option<Role> {
            self.agents.iter().find(|a| a.name == name).map(|a| a.role)
        };
        let check = |name: &str| -> Result<(), ScenarioError> {
            if registry.id(name).is_none() {
                Err(ScenarioError::UnknownAgent(name.to_owned()))
            } else {
                Ok(())
            }
        };
        for t in &self.trust {
            check(&t.a)?;
            check(&t.b)?;
            if t.a == t.b {
                return Err(ScenarioError::SelfTrust(t.a.clone()));
            }
        }
        for entry in &self.script {
            for name in entry.directive.mentions() {
                check(name)?;
            }
            if let Some(prefer) = self
                .agents
                .iter()
                .find(|a| a.name == entry.directive.actor())
                .and_then(|a| a.prefer.as_ref())
            {
                for name in prefer {
                    check(name)?;
                }
            }
            if matches!(
                entry.directive,
                Directive::Doublespend { .. }
                    | Directive::ForkChain { .. }
                    | Directive::DodgeClaims { .. }
            ) && role_of(entry.directive.actor()) != Some(Role::Byzantine)
            {
                return Err(ScenarioError::NotByzantine(
                    entry.directive.actor().to_owned(),
                ));
            }
        }
        Ok(registry)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_toml(text: &str) -> Result<ScenarioSpec, ScenarioError> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn plain_agents(names: &[String]) -> Vec<AgentDecl> {
    names
        .iter()
        .map(|n| AgentDecl {
            name: n.clone(),
            role: Role::Sovereign,
            prefer: None,
        })
        .collect()
}

/// Community of `n` members where every pair exchanges `m` coins each way,
/// then disseminates. Every member ends up holding `(n-1) * m` foreign
/// coins; total foreign holdings are `n * (n-1) * m`.
pub fn mutual_credit_community(n: u32, m: u32) -> ScenarioSpec {
    let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    let mut trust = Vec::new();
    for i in 0..n as usize {
        for j in i + 1..n as usize {
            trust.push(TrustDecl {
                a: names[i].clone(),
                b: names[j].clone(),
                a_to_b: m,
                b_to_a: m,
            });
        }
    }
    ScenarioSpec {
        schema: SCENARIO_SCHEMA,
        name: format!("mutual-credit-community-{n}x{m}"),
        seed: 0,
        horizon: 4,
        agents: plain_agents(&names),
        trust,
        script: Vec::new(),
    }
}

/// A community banker opens mutual credit with every member; one member
/// pays another by a two-step chain payment through the banker.
pub fn scenario_private_banker(n: u32, credit: u32) -> ScenarioSpec {
    assert!(n >= 3, "banker plus at least two members");
    let banker = "banker".to_owned();
    let members: Vec<String> = (1..n).map(|i| format!("m{i}")).collect();
    let mut agents = vec![AgentDecl {
        name: banker.clone(),
        role: Role::Banker,
        prefer: None,
    }];
    agents.extend(plain_agents(&members));
    let mut trust: Vec<TrustDecl> = members
        .iter()
        .map(|m| TrustDecl {
            a: banker.clone(),
            b: m.clone(),
            a_to_b: credit,
            b_to_a: credit,
        })
        .collect();
    // Payer and payee know each other (friendship without credit), so the
    // final hop of the chain payment can be delivered.
    trust.push(TrustDecl {
        a: members[0].clone(),
        b: members[1].clone(),
        a_to_b: 0,
        b_to_a: 0,
    });
    ScenarioSpec {
        schema: SCENARIO_SCHEMA,
        name: format!("private-banker-{n}"),
        seed: 0,
        horizon: 10,
        agents,
        trust,
        script: vec![ScriptEntry {
            round: 3,
            directive: Directive::ChainPay {
                from: members[0].clone(),
                to: members[1].clone(),
            },
        }],
    }
}

/// Trust-based value transfer along a line of `k` agents: each hop pays
/// the next with its own coins, which the next hop values through their
/// mutual credit line.
pub fn scenario_hawala(k: u32, count: u32) -> ScenarioSpec {
    assert!(k >= 2, "a chain needs at least two agents");
    let names: Vec<String> = (0..k).map(|i| format!("h{i}")).collect();
    let trust = names
        .windows(2)
        .map(|w| TrustDecl {
            a: w[0].clone(),
            b: w[1].clone(),
            a_to_b: count,
            b_to_a: count,
        })
        .collect();
    let mut script = Vec::new();
    for i in 0..(k - 1) as usize {
        let round = 2 + i as u32 * 2;
        script.push(ScriptEntry {
            round,
            directive: Directive::Issue {
                agent: names[i].clone(),
                count,
            },
        });
        script.push(ScriptEntry {
            round: round + 1,
            directive: Directive::Pay {
                from: names[i].clone(),
                to: names[i + 1].clone(),
                count,
                issuer: Some(names[i].clone()),
            },
        });
    }
    ScenarioSpec {
        schema: SCENARIO_SCHEMA,
        name: format!("hawala-{k}"),
        seed: 0,
        horizon: 2 + (k - 1) * 2 + 3,
        agents: plain_agents(&names),
        trust,
        script,
    }
}

/// Hawala line where one intermediary goes unresponsive: the transfer
/// stalls there, and the upstream agent's revocation claim against the
/// dodger stays outstanding, which the liveness check flags.
pub fn scenario_hawala_broken(k: u32, count: u32) -> ScenarioSpec {
    assert!(k >= 3, "need an intermediary to break");
    let mut spec = scenario_hawala(k, count);
    spec.name = format!("hawala-broken-{k}");
    let dodger = format!("h{}", k / 2);
    let upstream = format!("h{}", k / 2 - 1);
    for a in &mut spec.agents {
        if a.name == dodger {
            a.role = Role::Byzantine;
        }
    }
    let dodge_round = 2 + (k / 2) as u32 * 2 - 1;
    spec.script.retain(|e| {
        // the dodger abandons its own forwarding duties
        e.directive.actor() != dodger
    });
    spec.script.push(ScriptEntry {
        round: dodge_round,
        directive: Directive::DodgeClaims {
            agent: dodger.clone(),
        },
    });
    // Upstream tries to revoke the credit it extended to the dodger.
    spec.script.push(ScriptEntry {
        round: dodge_round + 2,
        directive: Directive::Claim {
            claimant: upstream.clone(),
            obligor: dodger,
            target_issuer: Some(upstream),
        },
    });
    spec.horizon += 4;
    spec
}

/// A Byzantine issuer forks a coin between two recipients; the first
/// redemption is accepted, the second refused, and the cheated payee
/// recovers from its payer with the fork evidence.
pub fn scenario_doublespend_recovery() -> ScenarioSpec {
    let names = ["issuer", "m1", "m2", "victim"];
    let mut agents = plain_agents(&names.map(String::from));
    agents[0].role = Role::Byzantine;
    let trust = vec![
        TrustDecl {
            a: "issuer".into(),
            b: "m1".into(),
            a_to_b: 0,
            b_to_a: 0,
        },
        TrustDecl {
            a: "issuer".into(),
            b: "m2".into(),
            a_to_b: 0,
            b_to_a: 0,
        },
        TrustDecl {
            a: "m2".into(),
            b: "victim".into(),
            a_to_b: 0,
            b_to_a: 0,
        },
        TrustDecl {
            a: "m1".into(),
            b: "victim".into(),
            a_to_b: 0,
            b_to_a: 0,
        },
        TrustDecl {
            a: "issuer".into(),
            b: "victim".into(),
            a_to_b: 0,
            b_to_a: 0,
        },
    ];
    let script = vec![
        ScriptEntry {
            round: 2,
            directive: Directive::Issue {
                agent: "issuer".into(),
                count: 1,
            },
        },
        ScriptEntry {
            round: 3,
            directive: Directive::Doublespend {
                agent: "issuer".into(),
                victims: vec!["m1".into(), "m2".into()],
            },
        },
        ScriptEntry {
            round: 4,
            directive: Directive::Claim {
                claimant: "m1".into(),
                obligor: "issuer".into(),
                target_issuer: None,
            },
        },
        ScriptEntry {
            round: 4,
            directive: Directive::Pay {
                from: "m2".into(),
                to: "victim".into(),
                count: 1,
                issuer: Some("issuer".into()),
            },
        },
        ScriptEntry {
            round: 7,
            directive: Directive::Claim {
                claimant: "victim".into(),
                obligor: "issuer".into(),
                target_issuer: None,
            },
        },
    ];
    ScenarioSpec {
        schema: SCENARIO_SCHEMA,
        name: "doublespend-recovery".into(),
        seed: 0,
        horizon: 14,
        agents,
        trust,
        script,
    }
}

/// Scaled bank risk management: the bank halves its exposure to a risky
/// member by redeeming member-coins against the member's peer-coins, one
/// per peer, leaving the member's community-coin balance untouched. A
/// final claim against a peer coin the member does not hold is rejected.
pub fn scenario_bank_risk(n: u32) -> ScenarioSpec {
    assert!(n >= 6, "bank, member, and at least four peers");
    let peers: Vec<String> = (0..n - 2).map(|i| format!("q{}", i + 1)).collect();
    let swap_peers = 5.min(peers.len() - 1);
    let mut agents = vec![
        AgentDecl {
            name: "bank".into(),
            role: Role::Bank,
            prefer: None,
        },
        AgentDecl {
            name: "p".into(),
            role: Role::Sovereign,
            prefer: None,
        },
    ];
    agents.extend(plain_agents(&peers));
    let mut trust = vec![TrustDecl {
        a: "bank".into(),
        b: "p".into(),
        a_to_b: 10,
        b_to_a: 10,
    }];
    // p has mutual credit with all but the last peer; the claim against
    // that peer's coin is the one that gets rejected.
    for q in peers.iter().take(peers.len() - 1) {
        trust.push(TrustDecl {
            a: "p".into(),
            b: q.clone(),
            a_to_b: 2,
            b_to_a: 2,
        });
    }
    let outsider = peers.last().expect("n >= 6").clone();
    trust.push(TrustDecl {
        a: "bank".into(),
        b: outsider.clone(),
        a_to_b: 0,
        b_to_a: 0,
    });
    let mut script = vec![ScriptEntry {
        round: 2,
        directive: Directive::Issue {
            agent: outsider.clone(),
            count: 1,
        },
    }];
    for q in peers.iter().take(swap_peers) {
        script.push(ScriptEntry {
            round: 3,
            directive: Directive::Claim {
                claimant: "bank".into(),
                obligor: "p".into(),
                target_issuer: Some(q.clone()),
            },
        });
    }
    // The member holds no coins of the outsider: rejected, plan continues.
    script.push(ScriptEntry {
        round: 3,
        directive: Directive::Claim {
            claimant: "bank".into(),
            obligor: "p".into(),
            target_issuer: Some(outsider),
        },
    });
    ScenarioSpec {
        schema: SCENARIO_SCHEMA,
        name: format!("bank-risk-{n}"),
        seed: 0,
        horizon: 8,
        agents,
        trust,
        script,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_validation() {
        let spec = scenario_private_banker(4, 5);
        let text = spec.to_toml();
        let back = ScenarioSpec::from_toml(&text).unwrap();
        assert_eq!(back.name, spec.name);
        assert_eq!(back.script.len(), spec.script.len());
        assert_eq!(back.trust.len(), spec.trust.len());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = mutual_credit_community(3, 2);
        spec.schema = 9;
        assert!(matches!(
            spec.validate(),
            Err(ScenarioError::BadSchema(9))
        ));

        let mut spec = mutual_credit_community(3, 2);
        spec.agents[1].name = spec.agents[0].name.clone();
        assert!(matches!(
            spec.validate(),
            Err(ScenarioError::BadAgentName(_))
        ));

        let mut spec = mutual_credit_community(3, 2);
        spec.script.push(ScriptEntry {
            round: 1,
            directive: Directive::Issue {
                agent: "ghost".into(),
                count: 1,
            },
        });
        assert!(matches!(
            spec.validate(),
            Err(ScenarioError::UnknownAgent(_))
        ));

        // Byzantine directives demand the byzantine role.
        let mut spec = mutual_credit_community(3, 2);
        spec.script.push(ScriptEntry {
            round: 1,
            directive: Directive::DodgeClaims {
                agent: "p0".into(),
            },
        });
        assert!(matches!(
            spec.validate(),
            Err(ScenarioError::NotByzantine(_))
        ));
    }

    #[test]
    fn unknown_toml_keys_are_rejected() {
        let text = r#"
schema = 1
name = "x"
horizon = 2
surprise = true
[[agents]]
name = "a"
"#;
        assert!(ScenarioSpec::from_toml(text).is_err());
    }
}
