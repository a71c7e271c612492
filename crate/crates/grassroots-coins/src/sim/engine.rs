//! Scenario execution.
//!
//! Rounds proceed under a fair rotation. A correct agent's turn is:
//! drain every pullable block, scan the view for doublespends, answer
//! claims and recovery requests it is obligated on, pursue its own
//! recoveries, then execute its scripted directives. Byzantine agents run
//! the same loop except for their scripted misbehavior: equivocating
//! blocks are injected past the guard (and logged as such), and dodgers
//! skip their obligations. Every guard-admitted step and every bypass is
//! logged, so runs replay exactly.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::analytics::{self, ClaimTemplate};
use crate::gcd::{
    coin_view, friends, max_own_index, CoinBlock, GcdAction, GcdConfig, GcdSystem,
};
use crate::mts::{AgentId, Dmts};
use crate::nft::{
    find_doublespend, is_tip, DoublespendEvidence, Metadata, Nft, NftId, NftUniverse, Payload,
};
use crate::sc::{self, claims_against, outstanding_claims, RedemptionClaim};
use crate::sim::eventlog::{
    state_digest, AgentInfo, BlockJson, EventBody, EventLog, EventRecord, LogHeader, NftJson,
    PayloadJson,
};
use crate::sim::scenario::{
    AgentRegistry, Directive, Role, ScenarioError, ScenarioSpec,
};

#[derive(Clone, Debug)]
pub struct EngineOptions {
    pub seed: Option<u64>,
    pub horizon: Option<u32>,
    /// Liquidity metrics after every round, or only at the end.
    pub metrics_every_round: bool,
    /// Search depth of the quick-ratio lower bound in metrics rows.
    pub quick_depth: usize,
    /// Cap on transitions per agent turn (bounds misbehavior floods).
    pub turn_budget: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            seed: None,
            horizon: None,
            metrics_every_round: true,
            quick_depth: 1,
            turn_budget: 100_000,
        }
    }
}

#[derive(Clone, Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("script error at round {round} ({directive}): {reason}")]
    Script {
        round: u32,
        directive: String,
        reason: String,
    },
}

pub struct ScenarioOutcome {
    pub registry: AgentRegistry,
    pub final_config: GcdConfig,
    pub universe: NftUniverse,
    pub log: EventLog,
    pub metrics: Vec<analytics::LiquidityReport>,
}

/// Turn order for a round: agents in id order, rotated by the seed. The
/// rotation is fixed across rounds so two agents strictly alternate;
/// every agent gets exactly one turn per round.
pub fn fair_schedule(agents: &BTreeSet<AgentId>, seed: u64, _round: u32) -> Vec<AgentId> {
    let mut order: Vec<AgentId> = agents.iter().copied().collect();
    if !order.is_empty() {
        let offset = (seed % order.len() as u64) as usize;
        order.rotate_left(offset);
    }
    order
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome, EngineError> {
    run_scenario_with(spec, &EngineOptions::default())
}

pub fn run_scenario_with(
    spec: &ScenarioSpec,
    opts: &EngineOptions,
) -> Result<ScenarioOutcome, EngineError> {
    let registry = spec.validate()?;
    let mut engine = Engine::new(spec, opts, registry);
    engine.run()?;
    Ok(engine.finish())
}

struct ExchangeTask {
    a: AgentId,
    b: AgentId,
    a_remaining: u32,
    b_remaining: u32,
    round: u32,
}

struct ChainTask {
    from: AgentId,
    to: AgentId,
    round: u32,
    plan: Option<Vec<ClaimTemplate>>,
    stage: usize,
    issued: Option<NftId>,
    done: bool,
}

struct Engine<'s> {
    spec: &'s ScenarioSpec,
    opts: EngineOptions,
    registry: AgentRegistry,
    sys: GcdSystem,
    config: GcdConfig,
    log: EventLog,
    metrics: Vec<analytics::LiquidityReport>,
    round: u32,
    seed: u64,
    horizon: u32,
    roles: BTreeMap<AgentId, Role>,
    dodging: BTreeSet<AgentId>,
    known_evidence: BTreeMap<AgentId, BTreeMap<NftId, DoublespendEvidence>>,
    refused: BTreeSet<NftId>,
    recovered_tips: BTreeSet<NftId>,
    answered_recoveries: BTreeSet<NftId>,
    exchange_tasks: Vec<ExchangeTask>,
    chain_tasks: Vec<ChainTask>,
    script_by_round: BTreeMap<u32, Vec<Directive>>,
    turn_left: usize,
}

impl<'s> Engine<'s> {
    fn new(spec: &'s ScenarioSpec, opts: &EngineOptions, registry: AgentRegistry) -> Self {
        let seed = opts.seed.unwrap_or(spec.seed);
        let horizon = opts.horizon.unwrap_or(spec.horizon);
        let agents = registry.agent_set();
        let sys = GcdSystem::new(agents.clone());
        let config = sys.initial_config();
        let roles: BTreeMap<AgentId, Role> = spec
            .agents
            .iter()
            .map(|a| (registry.id(&a.name).expect("validated"), a.role))
            .collect();
        let header = LogHeader {
            schema: crate::sim::eventlog::LOG_SCHEMA,
            scenario: spec.name.clone(),
            seed,
            horizon,
            agents: spec
                .agents
                .iter()
                .map(|a| AgentInfo {
                    name: a.name.clone(),
                    role: a.role,
                })
                .collect(),
        };
        let exchange_tasks = spec
            .trust
            .iter()
            .map(|t| ExchangeTask {
                a: registry.id(&t.a).expect("validated"),
                b: registry.id(&t.b).expect("validated"),
                a_remaining: t.a_to_b,
                b_remaining: t.b_to_a,
                round: 1,
            })
            .collect();
        let mut script_by_round: BTreeMap<u32, Vec<Directive>> = BTreeMap::new();
        for entry in &spec.script {
            script_by_round
                .entry(entry.round)
                .or_default()
                .push(entry.directive.clone());
        }
        Engine {
            spec,
            opts: opts.clone(),
            registry,
            sys,
            config,
            log: EventLog::new(header),
            metrics: Vec::new(),
            round: 0,
            seed,
            horizon,
            roles,
            dodging: BTreeSet::new(),
            known_evidence: BTreeMap::new(),
            refused: BTreeSet::new(),
            recovered_tips: BTreeSet::new(),
            answered_recoveries: BTreeSet::new(),
            exchange_tasks,
            chain_tasks: Vec::new(),
            script_by_round,
            turn_left: 0,
        }
    }

    fn name(&self, a: AgentId) -> String {
        self.registry.name(a).to_owned()
    }

    fn nft_json(&self, nft: &Nft) -> NftJson {
        NftJson {
            id: nft.id(),
            payload: match nft.payload() {
                Payload::Object(s) => PayloadJson::Object(s.clone()),
                Payload::Transfer(id) => PayloadJson::Transfer(*id),
            },
            metadata: nft.metadata().clone(),
            sender: self.name(nft.sender()),
            recipient: self.name(nft.recipient()),
        }
    }

    fn block_json(&self, b: &CoinBlock) -> BlockJson {
        BlockJson {
            author: self.name(b.author),
            index: b.index,
            payload: b.payload,
        }
    }

    fn log_event(&mut self, actor: AgentId, label: String, verdict: &str, body: EventBody) {
        self.log.push(EventRecord {
            round: self.round,
            actor: self.name(actor),
            label,
            verdict: verdict.to_owned(),
            body,
        });
    }

    /// Apply a guard-admitted action, log it, and charge the turn budget.
    fn step(&mut self, actor: AgentId, action: GcdAction) -> bool {
        if self.turn_left == 0 {
            return false;
        }
        self.turn_left -= 1;
        if let Err(reason) = self.sys.admits(&self.config, actor, &action) {
            panic!(
                "engine proposed a rejected step for {}: {reason} ({action:?})",
                self.name(actor)
            );
        }
        let label = self.sys.describe(actor, &action);
        let state = self.config.local(actor).expect("declared").clone();
        let block = action.block(&state, actor);
        let body = match &action {
            GcdAction::CreateInitial => EventBody::Create {
                block: self.block_json(&block),
                nft: None,
            },
            GcdAction::CreateFresh(nft) | GcdAction::CreateTransfer(nft) => EventBody::Create {
                block: self.block_json(&block),
                nft: Some(self.nft_json(nft)),
            },
            GcdAction::Follow(of) => EventBody::Follow { of: self.name(*of) },
            GcdAction::Receive { from, block } => EventBody::Receive {
                from: self.name(*from),
                block: self.block_json(block),
            },
        };
        self.config
            .local_mut(actor)
            .expect("declared")
            .insert(block);
        self.log_event(actor, label, "ok", body);
        true
    }

    fn view_of(&self, agent: AgentId) -> BTreeSet<NftId> {
        coin_view(self.config.local(agent).expect("declared"))
    }

    fn global_view(&self) -> BTreeSet<NftId> {
        self.config
            .iter()
            .flat_map(|(_, s)| coin_view(s))
            .collect()
    }

    /// Current tip record of `object` within a view, if held by `who`.
    fn tip_of(&self, object: &NftId, view: &BTreeSet<NftId>, who: Option<AgentId>) -> Option<Nft> {
        let u = self.sys.universe.borrow();
        let mut best: Option<Nft> = None;
        for id in view {
            let Some(n) = u.get(id) else { continue };
            if n.object_id() != *object || !is_tip(&u, id, view) {
                continue;
            }
            if let Some(w) = who {
                if n.recipient() != w {
                    continue;
                }
            }
            if best.as_ref().map(|b| n.depth() > b.depth()).unwrap_or(true) {
                best = Some(n.clone());
            }
        }
        best
    }

    /// Held, transferable coins of `agent`: tips addressed to it, not
    /// frozen by a visible claim and not known doublespent.
    fn spendable(&self, agent: AgentId) -> Vec<Nft> {
        let view = self.view_of(agent);
        let u = self.sys.universe.borrow();
        let flagged = self.known_evidence.get(&agent);
        let mut out: Vec<Nft> = view
            .iter()
            .filter_map(|id| u.get(id).cloned())
            .filter(|n| n.recipient() == agent && is_tip(&u, &n.id(), &view))
            .filter(|n| claims_against(&u, &n.id(), &view).is_empty())
            .filter(|n| flagged.map(|f| !f.contains_key(&n.object_id())).unwrap_or(true))
            .collect();
        out.sort_by_key(|n| n.id());
        out
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let agents = self.registry.agent_set();
        // Round 0: initial blocks, then follows along declared trust edges.
        self.round = 0;
        let order = fair_schedule(&agents, self.seed, 0);
        for &p in &order {
            self.turn_left = self.opts.turn_budget;
            self.step(p, GcdAction::CreateInitial);
            let partners: BTreeSet<AgentId> = self
                .spec
                .trust
                .iter()
                .filter_map(|t| {
                    let a = self.registry.id(&t.a).expect("validated");
                    let b = self.registry.id(&t.b).expect("validated");
                    (a == p).then_some(b).or((b == p).then_some(a))
                })
                .collect();
            for q in partners {
                self.step(p, GcdAction::Follow(q));
            }
        }
        if self.opts.metrics_every_round {
            self.record_metrics();
        }

        for round in 1..=self.horizon {
            self.round = round;
            let order = fair_schedule(&agents, self.seed, round);
            for &p in &order {
                self.turn(p)?;
            }
            if self.opts.metrics_every_round {
                self.record_metrics();
            }
        }
        if !self.opts.metrics_every_round {
            self.record_metrics();
        }
        Ok(())
    }

    fn finish(mut self) -> ScenarioOutcome {
        let digest = state_digest(&self.config);
        let events = self.log.events.len() as u64;
        let record = EventRecord {
            round: self.round,
            actor: String::new(),
            label: "summary".into(),
            verdict: "ok".into(),
            body: EventBody::Summary {
                events,
                final_state: digest,
            },
        };
        self.log.push(record);
        ScenarioOutcome {
            registry: self.registry,
            final_config: self.config,
            universe: self.sys.universe.borrow().clone(),
            log: self.log,
            metrics: self.metrics,
        }
    }

    fn turn(&mut self, p: AgentId) -> Result<(), EngineError> {
        self.turn_left = self.opts.turn_budget;
        self.drain(p);
        self.detect(p);
        if !self.dodging.contains(&p) {
            self.answer_claims(p);
            self.answer_recoveries(p);
            self.pursue_recovery(p);
        }
        self.progress_exchanges(p);
        self.progress_chain_pays(p)?;
        let directives: Vec<Directive> = self
            .script_by_round
            .get(&self.round)
            .map(|ds| {
                ds.iter()
                    .filter(|d| self.registry.id(d.actor()) == Some(p))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        for d in directives {
            self.execute(p, d)?;
        }
        Ok(())
    }

    /// Pull everything pullable, one pass per friend until stable.
    fn drain(&mut self, p: AgentId) {
        loop {
            let mut progressed = false;
            let friends_list: Vec<AgentId> = self
                .config
                .agents()
                .filter(|q| friends(&self.config, p, *q))
                .collect();
            for q in friends_list {
                let candidates: Vec<CoinBlock> = {
                    let source = self.config.local(q).expect("declared");
                    source.iter().copied().collect()
                };
                for block in candidates {
                    if block.author == p {
                        continue;
                    }
                    let state = self.config.local(p).expect("declared");
                    if state.contains(&block) || block.index < 2 {
                        continue;
                    }
                    if !crate::gcd::has_indexed_block(state, block.author, block.index - 1) {
                        continue;
                    }
                    if self.step(p, GcdAction::Receive { from: q, block }) {
                        progressed = true;
                    } else {
                        return; // budget exhausted
                    }
                }
            }
            if !progressed {
                return;
            }
        }
    }

    /// Scan the agent's view for forked coins and record fresh evidence.
    fn detect(&mut self, p: AgentId) {
        let view = self.view_of(p);
        let u = self.sys.universe.borrow();
        let Some(ev) = find_doublespend(&u, &view) else {
            return;
        };
        let object = u.get(&ev.fork_a).expect("interned").object_id();
        drop(u);
        let known = self.known_evidence.entry(p).or_default();
        if known.contains_key(&object) {
            return;
        }
        known.insert(object, ev.clone());
        self.log_event(
            p,
            format!("{}-Detects doublespend of {object}", self.name(p)),
            "detected",
            EventBody::Detection { object, evidence: ev },
        );
    }

    /// Answer outstanding claims addressed to this agent, in id order:
    /// hand over the requested coin, mint a fresh one, or return the claim
    /// coin; refuse claims whose coin is known doublespent.
    fn answer_claims(&mut self, p: AgentId) {
        let claims: Vec<RedemptionClaim> = {
            let view = self.view_of(p);
            let u = self.sys.universe.borrow();
            outstanding_claims(&u, &view)
                .into_iter()
                .filter(|c| c.obligor == p && c.claimant != p)
                .collect()
        };
        for claim in claims {
            if self.refused.contains(&claim.id) {
                continue;
            }
            let flagged = self
                .known_evidence
                .get(&p)
                .and_then(|f| f.get(&claim.coin_object))
                .cloned();
            if let Some(evidence) = flagged {
                self.refused.insert(claim.id);
                self.log_event(
                    p,
                    format!("{}-Refuses-{}", self.name(p), claim.id),
                    "refused",
                    EventBody::Refusal {
                        claim: claim.id,
                        claimant: self.name(claim.claimant),
                        evidence: Some(evidence.clone()),
                    },
                );
                // The claimant learns the fork from the refusal.
                self.known_evidence
                    .entry(claim.claimant)
                    .or_default()
                    .insert(claim.coin_object, evidence);
                continue;
            }
            let view = self.view_of(p);
            match claim.target {
                Some(y) => {
                    let held = {
                        let u = self.sys.universe.borrow();
                        view.contains(&y)
                            && u.get(&y).map(|n| n.recipient() == p).unwrap_or(false)
                            && is_tip(&u, &y, &view)
                    };
                    if held {
                        let target = self
                            .sys
                            .universe
                            .borrow()
                            .get(&y)
                            .expect("checked")
                            .clone();
                        let t = self
                            .sys
                            .universe
                            .borrow_mut()
                            .make_transfer(
                                &self.sys.signer,
                                &target,
                                Metadata::Settle(claim.id),
                                p,
                                claim.claimant,
                            )
                            .expect("settlement transfer");
                        self.step(p, GcdAction::CreateTransfer(t));
                    } else {
                        let claim_nft = self
                            .sys
                            .universe
                            .borrow()
                            .get(&claim.id)
                            .expect("claim interned")
                            .clone();
                        let t = self
                            .sys
                            .universe
                            .borrow_mut()
                            .make_transfer(
                                &self.sys.signer,
                                &claim_nft,
                                Metadata::Settle(claim.id),
                                p,
                                claim.claimant,
                            )
                            .expect("rejection transfer");
                        self.step(p, GcdAction::CreateTransfer(t));
                    }
                }
                None => {
                    let Some(fresh) = self.sys.next_fresh_coin(&self.config, p) else {
                        continue;
                    };
                    self.step(p, GcdAction::CreateFresh(fresh.clone()));
                    let t = self
                        .sys
                        .universe
                        .borrow_mut()
                        .make_transfer(
                            &self.sys.signer,
                            &fresh,
                            Metadata::Settle(claim.id),
                            p,
                            claim.claimant,
                        )
                        .expect("fresh settlement transfer");
                    self.step(p, GcdAction::CreateTransfer(t));
                }
            }
        }
    }

    /// Honor evidence-backed returns of doublespent coins this agent paid
    /// out, replacing them with fresh own coins.
    fn answer_recoveries(&mut self, p: AgentId) {
        let view = self.view_of(p);
        let recoveries: Vec<Nft> = {
            let u = self.sys.universe.borrow();
            view.iter()
                .filter_map(|id| u.get(id).cloned())
                .filter(|n| {
                    n.recipient() == p
                        && matches!(n.metadata(), Metadata::Recovery { .. })
                        && !self.answered_recoveries.contains(&n.id())
                })
                .collect()
        };
        for recovery in recoveries {
            self.answered_recoveries.insert(recovery.id());
            let Metadata::Recovery { fork_a, fork_b } = recovery.metadata().clone() else {
                continue;
            };
            let valid = {
                let u = self.sys.universe.borrow();
                let culprit = u.get(&fork_a).map(|n| n.sender());
                match culprit {
                    None => false,
                    Some(culprit) => {
                        let ev = DoublespendEvidence {
                            fork_a,
                            fork_b,
                            culprit,
                        };
                        let same_object = u
                            .get(&fork_a)
                            .map(|n| n.object_id() == recovery.object_id())
                            .unwrap_or(false);
                        let upstream = crate::nft::provenance(&u, &recovery)
                            .map(|prov| {
                                // the payer (this agent) sits two before the
                                // end of the returned coin's provenance
                                prov.len() >= 3 && prov[..prov.len() - 3].contains(&culprit)
                            })
                            .unwrap_or(false);
                        ev.verify(&u) && same_object && upstream
                    }
                }
            };
            let victim = recovery.sender();
            if !valid {
                self.log_event(
                    p,
                    format!("{}-Refuses recovery {}", self.name(p), recovery.id()),
                    "refused",
                    EventBody::Refusal {
                        claim: recovery.id(),
                        claimant: self.name(victim),
                        evidence: None,
                    },
                );
                continue;
            }
            let Some(fresh) = self.sys.next_fresh_coin(&self.config, p) else {
                continue;
            };
            self.step(p, GcdAction::CreateFresh(fresh.clone()));
            let t = self
                .sys
                .universe
                .borrow_mut()
                .make_transfer(
                    &self.sys.signer,
                    &fresh,
                    Metadata::Settle(recovery.id()),
                    p,
                    victim,
                )
                .expect("recovery settlement");
            self.step(p, GcdAction::CreateTransfer(t));
        }
    }

    /// Return known-doublespent coins to their payer with the evidence.
    fn pursue_recovery(&mut self, p: AgentId) {
        let evidence: Vec<(NftId, DoublespendEvidence)> = self
            .known_evidence
            .get(&p)
            .map(|m| m.iter().map(|(o, e)| (*o, e.clone())).collect())
            .unwrap_or_default();
        if evidence.is_empty() {
            return;
        }
        let view = self.view_of(p);
        for (object, ev) in evidence {
            let Some(tip) = self.tip_of(&object, &view, Some(p)) else {
                continue;
            };
            if self.recovered_tips.contains(&tip.id()) || tip.sender() == p {
                continue;
            }
            let issuer = {
                let u = self.sys.universe.borrow();
                sc::issuer(&u, &tip)
            };
            if issuer == Some(p) {
                continue;
            }
            let payer = tip.sender();
            let recovery = {
                let mut u = self.sys.universe.borrow_mut();
                sc::recovery_claim(&mut u, &self.sys.signer, p, payer, &tip, &ev)
            };
            match recovery {
                Ok(nft) => {
                    self.recovered_tips.insert(tip.id());
                    self.step(p, GcdAction::CreateTransfer(nft));
                }
                Err(e) => {
                    self.recovered_tips.insert(tip.id());
                    self.log_event(
                        p,
                        format!("{}-Recovery not possible for {object}", self.name(p)),
                        "skipped",
                        EventBody::Skipped {
                            reason: e.to_string(),
                        },
                    );
                }
            }
        }
    }

    fn progress_exchanges(&mut self, p: AgentId) {
        let mut actions: Vec<(AgentId, u32)> = Vec::new();
        for task in &mut self.exchange_tasks {
            if self.round < task.round {
                continue;
            }
            let (me_side, other, remaining) = if task.a == p {
                (true, task.b, task.a_remaining)
            } else if task.b == p {
                (false, task.a, task.b_remaining)
            } else {
                continue;
            };
            if remaining == 0 {
                continue;
            }
            if !friends(&self.config, p, other) {
                continue; // follows happen in round 0; wait for the pair
            }
            actions.push((other, remaining));
            if me_side {
                task.a_remaining = 0;
            } else {
                task.b_remaining = 0;
            }
        }
        for (other, count) in actions {
            for _ in 0..count {
                let Some(coin) = self.sys.next_fresh_coin(&self.config, p) else {
                    break;
                };
                if !self.step(p, GcdAction::CreateFresh(coin.clone())) {
                    return;
                }
                let t = self
                    .sys
                    .universe
                    .borrow_mut()
                    .make_transfer(
                        &self.sys.signer,
                        &coin,
                        Metadata::Plain("credit-line".into()),
                        p,
                        other,
                    )
                    .expect("credit transfer");
                if !self.step(p, GcdAction::CreateTransfer(t)) {
                    return;
                }
            }
        }
    }

    fn progress_chain_pays(&mut self, p: AgentId) -> Result<(), EngineError> {
        let round = self.round;
        let mut failures: Vec<(u32, String)> = Vec::new();
        let mut moves: Vec<usize> = Vec::new();
        for (i, task) in self.chain_tasks.iter().enumerate() {
            if task.from == p && !task.done && round >= task.round {
                moves.push(i);
            }
        }
        for i in moves {
            let (to, stage_claim) = {
                let task = &self.chain_tasks[i];
                (task.to, task.issued)
            };
            if self.chain_tasks[i].plan.is_none() {
                let view = self.global_view();
                let u = self.sys.universe.borrow();
                let Some(path) = analytics::one_liquidity_path_in_view(&u, &view, p, to) else {
                    failures.push((round, "no liquidity path".into()));
                    continue;
                };
                let plan = analytics::chain_redemption_plan_in_view(&u, &view, &path).map_err(
                    |e| EngineError::Script {
                        round,
                        directive: "chain_pay".into(),
                        reason: e.to_string(),
                    },
                )?;
                drop(u);
                self.chain_tasks[i].plan = Some(plan);
            }
            let plan = self.chain_tasks[i].plan.clone().expect("set above");
            let stage = self.chain_tasks[i].stage;

            if let Some(claim_id) = stage_claim {
                // Wait for the settlement to arrive in the payer's view.
                let view = self.view_of(p);
                let u = self.sys.universe.borrow();
                let claim_nft = u.get(&claim_id).expect("interned").clone();
                let claim = sc::as_claim(&u, &claim_nft).expect("was a claim");
                match sc::claim_status(&u, &claim, &view) {
                    sc::ClaimStatus::SettledAccepted => {
                        drop(u);
                        self.chain_tasks[i].issued = None;
                        self.chain_tasks[i].stage = stage + 1;
                    }
                    sc::ClaimStatus::SettledRejected | sc::ClaimStatus::Invalid => {
                        failures.push((round, format!("chain claim {claim_id} failed")));
                        continue;
                    }
                    sc::ClaimStatus::ValidOutstanding => continue, // try next turn
                }
            }
            let stage = self.chain_tasks[i].stage;
            if stage < plan.len() {
                let template = &plan[stage];
                let view = self.view_of(p);
                let Some(surrender) = self.tip_of(&template.surrender_object, &view, Some(p))
                else {
                    failures.push((round, "surrender coin no longer held".into()));
                    continue;
                };
                let obligor_view = self.view_of(template.obligor);
                let Some(target) =
                    self.tip_of(&template.request_object, &obligor_view, Some(template.obligor))
                else {
                    failures.push((round, "requested coin no longer with obligor".into()));
                    continue;
                };
                let claim_nft = self
                    .sys
                    .universe
                    .borrow_mut()
                    .make_transfer(
                        &self.sys.signer,
                        &surrender,
                        Metadata::Redeem(Some(target.id())),
                        p,
                        template.obligor,
                    )
                    .expect("chain claim");
                self.chain_tasks[i].issued = Some(claim_nft.id());
                self.step(p, GcdAction::CreateTransfer(claim_nft));
            } else {
                // Plan complete: hand the acquired coin over.
                let view = self.view_of(p);
                let object = match plan.last() {
                    Some(t) => t.request_object,
                    None => {
                        // Payer already held a coin of the payee's issue.
                        let Some(direct) = self
                            .spendable(p)
                            .into_iter()
                            .find(|c| {
                                let u = self.sys.universe.borrow();
                                sc::issuer(&u, c) == Some(to)
                            })
                        else {
                            failures.push((round, "no coin of the payee's issue".into()));
                            continue;
                        };
                        direct.object_id()
                    }
                };
                let Some(coin) = self.tip_of(&object, &view, Some(p)) else {
                    failures.push((round, "acquired coin no longer held".into()));
                    continue;
                };
                let t = self
                    .sys
                    .universe
                    .borrow_mut()
                    .make_transfer(
                        &self.sys.signer,
                        &coin,
                        Metadata::Plain("chain-pay".into()),
                        p,
                        to,
                    )
                    .expect("final payment");
                self.step(p, GcdAction::CreateTransfer(t));
                self.chain_tasks[i].done = true;
            }
        }
        if let Some((round, reason)) = failures.into_iter().next() {
            return Err(EngineError::Script {
                round,
                directive: "chain_pay".into(),
                reason,
            });
        }
        Ok(())
    }

    fn execute(&mut self, p: AgentId, directive: Directive) -> Result<(), EngineError> {
        let round = self.round;
        let fail = |directive: &str, reason: String| EngineError::Script {
            round,
            directive: directive.into(),
            reason,
        };
        if self.dodging.contains(&p)
            && !matches!(directive, Directive::DodgeClaims { .. })
        {
            self.log_event(
                p,
                format!("{}-Skips scripted {directive:?}", self.name(p)),
                "byzantine-dodge",
                EventBody::Skipped {
                    reason: "agent is dodging".into(),
                },
            );
            return Ok(());
        }
        match directive {
            Directive::Issue { count, .. } => {
                for _ in 0..count {
                    let Some(coin) = self.sys.next_fresh_coin(&self.config, p) else {
                        return Err(fail("issue", "no initial block yet".into()));
                    };
                    self.step(p, GcdAction::CreateFresh(coin));
                }
            }
            Directive::Exchange { b, a_to_b, b_to_a, .. } => {
                let b = self.registry.id(&b).expect("validated");
                // Mid-run credit line: follow now, transfer once mutual.
                if !crate::gcd::follows(&self.config, p, b) {
                    self.step(p, GcdAction::Follow(b));
                }
                self.exchange_tasks.push(ExchangeTask {
                    a: p,
                    b,
                    a_remaining: a_to_b,
                    b_remaining: b_to_a,
                    round: self.round,
                });
            }
            Directive::Pay {
                to, count, issuer, ..
            } => {
                let to = self.registry.id(&to).expect("validated");
                let issuer = issuer.map(|i| self.registry.id(&i).expect("validated"));
                if !friends(&self.config, p, to) {
                    return Err(fail("pay", format!("{} and {} are not friends", self.name(p), self.name(to))));
                }
                let coins = self.pick_payment_coins(p, count, issuer);
                if coins.len() < count as usize {
                    return Err(fail(
                        "pay",
                        format!(
                            "{} holds {} suitable coins, needs {count}",
                            self.name(p),
                            coins.len()
                        ),
                    ));
                }
                for coin in coins.into_iter().take(count as usize) {
                    let t = self
                        .sys
                        .universe
                        .borrow_mut()
                        .make_transfer(&self.sys.signer, &coin, Metadata::Plain("pay".into()), p, to)
                        .expect("payment");
                    self.step(p, GcdAction::CreateTransfer(t));
                }
            }
            Directive::Claim {
                obligor,
                target_issuer,
                ..
            } => {
                let obligor = self.registry.id(&obligor).expect("validated");
                let target_issuer = target_issuer.map(|i| self.registry.id(&i).expect("validated"));
                let claim_coin = {
                    let u = self.sys.universe.borrow();
                    self.spendable(p)
                        .into_iter()
                        .find(|c| sc::issuer(&u, c) == Some(obligor))
                };
                let Some(claim_coin) = claim_coin else {
                    return Err(fail(
                        "claim",
                        format!("{} holds no coin of {}", self.name(p), self.name(obligor)),
                    ));
                };
                let target = match target_issuer {
                    None => None,
                    Some(r) => {
                        let obligor_view = self.view_of(obligor);
                        let at_obligor = {
                            let u = self.sys.universe.borrow();
                            obligor_view
                                .iter()
                                .filter_map(|id| u.get(id).cloned())
                                .filter(|n| {
                                    n.recipient() == obligor
                                        && is_tip(&u, &n.id(), &obligor_view)
                                        && sc::issuer(&u, n) == Some(r)
                                })
                                .min_by_key(|n| n.id())
                        };
                        match at_obligor {
                            Some(t) => Some(t.id()),
                            None => {
                                // Request a coin the obligor does not hold:
                                // the claim will be rejected.
                                let global = self.global_view();
                                let somewhere = {
                                    let u = self.sys.universe.borrow();
                                    global
                                        .iter()
                                        .filter_map(|id| u.get(id).cloned())
                                        .filter(|n| {
                                            sc::issuer(&u, n) == Some(r)
                                                && is_tip(&u, &n.id(), &global)
                                        })
                                        .min_by_key(|n| n.id())
                                };
                                match somewhere {
                                    Some(t) => Some(t.id()),
                                    None => {
                                        return Err(fail(
                                            "claim",
                                            format!("no coin of {} exists", self.name(r)),
                                        ))
                                    }
                                }
                            }
                        }
                    }
                };
                let claim_nft = self
                    .sys
                    .universe
                    .borrow_mut()
                    .make_transfer(
                        &self.sys.signer,
                        &claim_coin,
                        Metadata::Redeem(target),
                        p,
                        obligor,
                    )
                    .expect("claim transfer");
                self.step(p, GcdAction::CreateTransfer(claim_nft));
            }
            Directive::ChainPay { to, .. } => {
                let to = self.registry.id(&to).expect("validated");
                self.chain_tasks.push(ChainTask {
                    from: p,
                    to,
                    round: self.round,
                    plan: None,
                    stage: 0,
                    issued: None,
                    done: false,
                });
                self.progress_chain_pays(p)?;
            }
            Directive::Doublespend { victims, .. } => {
                let victims: Vec<AgentId> = victims
                    .iter()
                    .map(|v| self.registry.id(v).expect("validated"))
                    .collect();
                if victims.len() != 2 {
                    return Err(fail("doublespend", "exactly two victims required".into()));
                }
                let own_coin = {
                    let u = self.sys.universe.borrow();
                    self.spendable(p)
                        .into_iter()
                        .find(|c| sc::issuer(&u, c) == Some(p))
                };
                let Some(coin) = own_coin else {
                    return Err(fail("doublespend", "agent holds no own coin to fork".into()));
                };
                let state = self.config.local(p).expect("declared");
                let index = max_own_index(state, p) + 1;
                for victim in victims {
                    let fork = self
                        .sys
                        .universe
                        .borrow_mut()
                        .make_transfer(
                            &self.sys.signer,
                            &coin,
                            Metadata::Plain("pay".into()),
                            p,
                            victim,
                        )
                        .expect("fork transfer");
                    let block = CoinBlock::new(p, index, Some(fork.id())).expect("index >= 2");
                    self.config
                        .local_mut(victim)
                        .expect("declared")
                        .insert(block);
                    self.log_event(
                        p,
                        format!("{}-Forks-{} to {}", self.name(p), coin.id(), self.name(victim)),
                        "byzantine-push",
                        EventBody::Push {
                            target: self.name(victim),
                            block: self.block_json(&block),
                            nft: self.nft_json(&fork),
                        },
                    );
                }
            }
            Directive::ForkChain { .. } => {
                let Some(fresh) = self.sys.next_fresh_coin(&self.config, p) else {
                    return Err(fail("fork_chain", "no initial block yet".into()));
                };
                self.step(p, GcdAction::CreateFresh(fresh));
                // Second block at the same index, past the guard.
                let state = self.config.local(p).expect("declared");
                let index = max_own_index(state, p);
                let rogue = self
                    .sys
                    .universe
                    .borrow_mut()
                    .make_object(&self.sys.signer, p, &crate::sc::coin_string(index as u64 + 1000))
                    .expect("rogue coin");
                let block = CoinBlock::new(p, index, Some(rogue.id())).expect("index >= 2");
                self.config.local_mut(p).expect("declared").insert(block);
                self.log_event(
                    p,
                    format!("{}-Forks own chain at {index}", self.name(p)),
                    "byzantine-fork",
                    EventBody::OwnFork {
                        block: self.block_json(&block),
                        nft: self.nft_json(&rogue),
                    },
                );
            }
            Directive::DodgeClaims { .. } => {
                self.dodging.insert(p);
                self.log_event(
                    p,
                    format!("{}-Dodges claims from round {round}", self.name(p)),
                    "byzantine-dodge",
                    EventBody::Skipped {
                        reason: "dodging claims from now on".into(),
                    },
                );
            }
        }
        Ok(())
    }

    /// Payment coin selection: explicit issuer, else the agent's declared
    /// preference order, else bank-issued first, lowest record id within a
    /// rank.
    fn pick_payment_coins(&self, p: AgentId, count: u32, issuer: Option<AgentId>) -> Vec<Nft> {
        let u = self.sys.universe.borrow();
        let prefer: Vec<AgentId> = self
            .spec
            .agents
            .iter()
            .find(|a| self.registry.id(&a.name) == Some(p))
            .and_then(|a| a.prefer.as_ref())
            .map(|names| {
                names
                    .iter()
                    .filter_map(|n| self.registry.id(n))
                    .collect()
            })
            .unwrap_or_default();
        let rank = |coin: &Nft| -> (u32, NftId) {
            let who = sc::issuer(&u, coin);
            let r = match who {
                Some(w) => {
                    if let Some(pos) = prefer.iter().position(|x| *x == w) {
                        pos as u32
                    } else if matches!(
                        self.roles.get(&w),
                        Some(Role::Bank) | Some(Role::Banker)
                    ) {
                        1000
                    } else {
                        2000
                    }
                }
                None => 3000,
            };
            (r, coin.id())
        };
        let mut coins: Vec<Nft> = self
            .spendable(p)
            .into_iter()
            .filter(|c| match issuer {
                Some(i) => sc::issuer(&u, c) == Some(i),
                None => true,
            })
            .collect();
        coins.sort_by_key(rank);
        coins.truncate(count as usize);
        coins
    }

    fn record_metrics(&mut self) {
        let view = self.global_view();
        let u = self.sys.universe.borrow();
        // Forked coins have no well-defined holder; they leave the matrix
        // once the fork exists anywhere.
        let forked = crate::nft::forked_objects(&u, &view);
        let filtered: BTreeSet<NftId> = view
            .iter()
            .filter(|id| {
                u.get(id)
                    .map(|n| !forked.contains(&n.object_id()))
                    .unwrap_or(false)
            })
            .copied()
            .collect();
        let m = analytics::holdings_of_set(&u, &filtered, &self.registry.agent_set(), self.round as usize)
            .expect("fork-filtered view is consistent");
        self.metrics
            .push(analytics::liquidity_report(&m, self.round, self.opts.quick_depth));
    }
}
