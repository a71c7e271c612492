//! Distributed multiagent transition-system kernel.
//!
//! A system is described by the [`Dmts`] trait: per-agent local states, an
//! initial state, actions that extend exactly one agent's state, a guard
//! that decides which actions are correct, and a partition of correct
//! actions into liveness classes. On top of that the kernel provides run
//! recording ([`Run`]), transition application ([`apply`]), safety and
//! bounded-liveness checking, configuration projection, a bounded
//! behavioral-embedding check ([`grassroots`]) and a sampled
//! monotonic-completeness check.

mod grassroots_check;

pub use grassroots_check::{
    check_grassroots_bounded, GrassrootsCaps, GrassrootsError, GrassrootsVerdict,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque agent identity; stands for a public key. Totally ordered so that
/// iteration over agent sets is deterministic.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Debug, Default,
)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// An immutable snapshot mapping each agent to its local state.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Config<S> {
    states: BTreeMap<AgentId, S>,
}

impl<S: Clone> Config<S> {
    pub fn new(agents: &BTreeSet<AgentId>, initial: S) -> Self {
        Config {
            states: agents.iter().map(|a| (*a, initial.clone())).collect(),
        }
    }

    pub fn from_states(states: BTreeMap<AgentId, S>) -> Self {
        Config { states }
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.states.keys().copied()
    }

    pub fn agent_set(&self) -> BTreeSet<AgentId> {
        self.states.keys().copied().collect()
    }

    pub fn local(&self, agent: AgentId) -> Option<&S> {
        self.states.get(&agent)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, &S)> {
        self.states.iter().map(|(a, s)| (*a, s))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// A copy of this configuration with `agent`'s entry replaced.
    pub fn with_local(&self, agent: AgentId, state: S) -> Self {
        let mut states = self.states.clone();
        states.insert(agent, state);
        Config { states }
    }

    /// In-place access for a uniquely owned configuration. Shared
    /// configurations stay immutable snapshots; run recording is
    /// single-writer.
    pub fn local_mut(&mut self, agent: AgentId) -> Option<&mut S> {
        self.states.get_mut(&agent)
    }
}

/// One recorded step: the acting agent and what it did. The full
/// before/after configurations are materialized lazily from the run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step<A> {
    pub actor: AgentId,
    pub action: A,
}

/// A recorded run: the agent set plus the ordered steps taken from the
/// initial configuration.
#[derive(Clone, Debug, Default)]
pub struct Run<A> {
    pub agents: BTreeSet<AgentId>,
    pub steps: Vec<Step<A>>,
}

impl<A> Run<A> {
    pub fn new(agents: BTreeSet<AgentId>) -> Self {
        Run {
            agents,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, actor: AgentId, action: A) {
        self.steps.push(Step { actor, action });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Why a guard rejected a proposed action.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Reject {
    #[error("actor does not hold the object being transferred")]
    NotHolder,
    #[error("malformed object or transfer shape")]
    BadObjectShape,
    #[error("payload coin is frozen by an outstanding redemption claim")]
    CoinFrozen,
    #[error("fresh coin is malformed or its index is out of order")]
    BadFreshCoin,
    #[error("own-block index leaves a gap")]
    IndexGap,
    #[error("sender and recipient are not friends")]
    NotFriends,
    #[error("receiver lacks the block's predecessor")]
    MissingPredecessor,
    #[error("claimed source does not know the block")]
    UnknownSource,
    #[error("block or item already present")]
    AlreadyPresent,
    #[error("reserved metadata")]
    ReservedMetadata,
    #[error("no-op is not an agent transition")]
    NoOp,
}

/// A distributed multiagent transition system.
///
/// Local states grow monotonically under actions; an action by agent `p`
/// changes only `p`'s entry. Guards may read the whole configuration.
pub trait Dmts {
    type Local: Clone + Ord + fmt::Debug;
    type Action: Clone + fmt::Debug;
    /// A liveness class label. Classes partition the correct actions of
    /// each agent.
    type Class: Clone + Ord + fmt::Display;

    fn agents(&self) -> &BTreeSet<AgentId>;

    fn initial_local(&self) -> Self::Local;

    fn initial_config(&self) -> Config<Self::Local> {
        Config::new(self.agents(), self.initial_local())
    }

    /// The local-state effect of an admitted action.
    fn apply_local(&self, state: &Self::Local, actor: AgentId, action: &Self::Action)
        -> Self::Local;

    /// Whether the configuration admits `action` by `actor` as correct.
    fn admits(
        &self,
        config: &Config<Self::Local>,
        actor: AgentId,
        action: &Self::Action,
    ) -> Result<(), Reject>;

    /// All correct actions available to `actor`, bounded by `caps`.
    /// Used by exhaustive exploration; the bounds keep branching finite.
    fn enumerate(
        &self,
        config: &Config<Self::Local>,
        actor: AgentId,
        caps: &EnumCaps,
    ) -> Vec<Self::Action>;

    /// The liveness classes an action belongs to.
    fn action_classes(
        &self,
        config: &Config<Self::Local>,
        actor: AgentId,
        action: &Self::Action,
    ) -> Vec<Self::Class>;

    /// The liveness classes with at least one enabled action in `config`.
    fn enabled_classes(&self, config: &Config<Self::Local>) -> BTreeSet<Self::Class>;

    /// Recover the action from a one-agent state extension, if the pair of
    /// local states is a legal extension shape for this system. The
    /// configuration disambiguates actions whose identity depends on other
    /// agents' states (e.g. the source of a received block).
    fn infer_action(
        &self,
        config: &Config<Self::Local>,
        actor: AgentId,
        before: &Self::Local,
        after: &Self::Local,
    ) -> Option<Self::Action>;

    /// A short human-readable label for reports.
    fn describe(&self, actor: AgentId, action: &Self::Action) -> String {
        format!("{actor}: {action:?}")
    }

    fn apply_step(
        &self,
        config: &Config<Self::Local>,
        actor: AgentId,
        action: &Self::Action,
    ) -> Config<Self::Local> {
        let before = config
            .local(actor)
            .expect("actor must be part of the configuration");
        config.with_local(actor, self.apply_local(before, actor, action))
    }

    /// Materialize every configuration of a run, starting at the initial
    /// configuration. Guards are not consulted; see [`check_safe`].
    fn configs(&self, run: &Run<Self::Action>) -> Vec<Config<Self::Local>> {
        let mut out = Vec::with_capacity(run.steps.len() + 1);
        let mut cur = Config::new(&run.agents, self.initial_local());
        out.push(cur.clone());
        for step in &run.steps {
            cur = self.apply_step(&cur, step.actor, &step.action);
            out.push(cur.clone());
        }
        out
    }
}

/// Alphabet and size caps used when exhaustively enumerating actions.
#[derive(Clone, Debug)]
pub struct EnumCaps {
    /// Cap on per-agent own-authored item count (block index / sequence length).
    pub max_own_index: u32,
    /// Metadata strings allowed on enumerated plain transfers.
    pub plain_metadata: Vec<String>,
    /// Whether to enumerate redemption claims and settlements.
    pub allow_redeem: bool,
    /// Cap on distinct payload strings enumerated per creator.
    pub max_payload_strings: usize,
}

impl Default for EnumCaps {
    fn default() -> Self {
        EnumCaps {
            max_own_index: 5,
            plain_metadata: vec!["m".to_owned()],
            allow_redeem: false,
            max_payload_strings: 2,
        }
    }
}

/// A transition presented as a pair of configurations, for [`apply`].
#[derive(Clone, Debug)]
pub struct Transition<S> {
    pub actor: AgentId,
    pub before: Config<S>,
    pub after: Config<S>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("transition.before does not match the given configuration")]
    BeforeMismatch,
    #[error("transition changes a non-actor state or more than one state")]
    ActorMismatch,
    #[error("guard rejected the transition: {0}")]
    GuardRejected(Reject),
}

/// Apply a transition to a configuration under the system's guard.
///
/// Returns `transition.after` iff the guard admits it as a correct
/// transition of the actor; the result differs from the input only at the
/// actor's entry.
pub fn apply<S: Dmts>(
    sys: &S,
    config: &Config<S::Local>,
    transition: &Transition<S::Local>,
) -> Result<Config<S::Local>, ApplyError> {
    if transition.before != *config {
        return Err(ApplyError::BeforeMismatch);
    }
    let changed: Vec<AgentId> = config
        .iter()
        .filter(|(a, s)| transition.after.local(*a) != Some(s))
        .map(|(a, _)| a)
        .collect();
    if transition.after.agent_set() != config.agent_set() {
        return Err(ApplyError::ActorMismatch);
    }
    match changed.as_slice() {
        [] => Err(ApplyError::GuardRejected(Reject::NoOp)),
        [only] if *only == transition.actor => {
            let before_local = config.local(*only).expect("agent present");
            let after_local = transition.after.local(*only).expect("agent present");
            let action = sys
                .infer_action(config, *only, before_local, after_local)
                .ok_or(ApplyError::GuardRejected(Reject::BadObjectShape))?;
            sys.admits(config, *only, &action)
                .map_err(ApplyError::GuardRejected)?;
            Ok(transition.after.clone())
        }
        _ => Err(ApplyError::ActorMismatch),
    }
}

/// One safety violation: the step index plus the rejection reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafetyViolation {
    pub step: usize,
    pub actor: AgentId,
    pub label: String,
    pub reason: Reject,
}

/// Diagnostic result of replaying a run against the guard. An empty
/// violation list means the run is safe.
#[derive(Clone, Debug, Default)]
pub struct SafetyReport {
    pub violations: Vec<SafetyViolation>,
    pub steps: usize,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replay a run and report every step the guard rejects.
pub fn check_safe<S: Dmts>(sys: &S, run: &Run<S::Action>) -> SafetyReport {
    let mut report = SafetyReport {
        steps: run.steps.len(),
        ..Default::default()
    };
    let mut config = Config::new(&run.agents, sys.initial_local());
    for (i, step) in run.steps.iter().enumerate() {
        if let Err(reason) = sys.admits(&config, step.actor, &step.action) {
            report.violations.push(SafetyViolation {
                step: i,
                actor: step.actor,
                label: sys.describe(step.actor, &step.action),
                reason,
            });
        }
        let next = sys.apply_local(
            config.local(step.actor).expect("actor declared"),
            step.actor,
            &step.action,
        );
        *config.local_mut(step.actor).expect("actor declared") = next;
    }
    report
}

/// A liveness class that stayed enabled for at least the horizon without
/// any of its transitions being taken.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarvationFlag {
    pub class: String,
    /// Step index at which the enabled streak began.
    pub enabled_from: usize,
    /// Length of the streak in steps.
    pub enabled_for: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LivenessReport {
    pub flags: Vec<StarvationFlag>,
}

impl LivenessReport {
    pub fn is_live(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Bounded-horizon surrogate for the liveness condition on finite runs.
///
/// For each liveness class, flag a violation if the class has some enabled
/// transition for `horizon` or more consecutive configurations while no
/// transition of the class is taken. A class that is never enabled over a
/// suffix is vacuously live.
pub fn check_live_bounded<S: Dmts>(
    sys: &S,
    run: &Run<S::Action>,
    horizon: usize,
) -> LivenessReport {
    let mut report = LivenessReport::default();
    if horizon == 0 {
        return report;
    }
    let mut config = Config::new(&run.agents, sys.initial_local());
    // class -> step index where the current continuously-enabled streak began
    let mut streaks: BTreeMap<S::Class, usize> = BTreeMap::new();
    let mut flagged: BTreeSet<S::Class> = BTreeSet::new();

    let total = run.steps.len();
    for i in 0..=total {
        let enabled = sys.enabled_classes(&config);
        streaks.retain(|class, _| enabled.contains(class));
        for class in &enabled {
            streaks.entry(class.clone()).or_insert(i);
        }
        for (class, from) in &streaks {
            if i - from >= horizon && !flagged.contains(class) {
                flagged.insert(class.clone());
                report.flags.push(StarvationFlag {
                    class: class.to_string(),
                    enabled_from: *from,
                    enabled_for: i - from,
                });
            }
        }
        if i < total {
            let step = &run.steps[i];
            for class in sys.action_classes(&config, step.actor, &step.action) {
                streaks.remove(&class);
                flagged.remove(&class);
            }
            config = sys.apply_step(&config, step.actor, &step.action);
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProjectError {
    #[error("projection target is not a subset of the configuration's agents")]
    NotSubset,
}

/// Restrict a configuration to a subset of its agents. Local states are
/// kept verbatim; they may still mention agents outside the subset.
pub fn project<S: Clone>(
    config: &Config<S>,
    agents: &BTreeSet<AgentId>,
) -> Result<Config<S>, ProjectError> {
    let all = config.agent_set();
    if !agents.is_subset(&all) {
        return Err(ProjectError::NotSubset);
    }
    Ok(Config::from_states(
        config
            .iter()
            .filter(|(a, _)| agents.contains(a))
            .map(|(a, s)| (a, s.clone()))
            .collect(),
    ))
}

/// Result of the sampled monotonic-completeness check.
#[derive(Clone, Debug, Default)]
pub struct McReport {
    /// Indices of sampled pairs for which no admitted intermediate
    /// transition exists.
    pub failures: Vec<usize>,
    pub checked: usize,
}

impl McReport {
    pub fn all_found(&self) -> bool {
        self.failures.is_empty()
    }
}

/// For each sampled pair `c < c''`, search for a correct transition
/// `c -> c'` with `c < c' <= c''`. Candidate actions come from the caller
/// (typically: each agent's next item toward the target configuration).
pub fn check_monotonic_complete_sample<S, C, L>(
    sys: &S,
    pairs: &[(Config<S::Local>, Config<S::Local>)],
    candidates: C,
    le: L,
) -> McReport
where
    S: Dmts,
    C: Fn(&Config<S::Local>, &Config<S::Local>) -> Vec<(AgentId, S::Action)>,
    L: Fn(&Config<S::Local>, &Config<S::Local>) -> bool,
{
    let mut report = McReport::default();
    for (i, (c, c_target)) in pairs.iter().enumerate() {
        report.checked += 1;
        if !(le(c, c_target) && c != c_target) {
            report.failures.push(i);
            continue;
        }
        let found = candidates(c, c_target).into_iter().any(|(actor, action)| {
            if sys.admits(c, actor, &action).is_err() {
                return false;
            }
            let next = sys.apply_step(c, actor, &action);
            next != *c && le(c, &next) && le(&next, c_target)
        });
        if !found {
            report.failures.push(i);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal counter system: each agent's state is a number it may
    /// increment by 1 (guard rejects any other delta).
    struct Counter {
        agents: BTreeSet<AgentId>,
    }

    #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
    struct Inc;

    impl fmt::Display for Inc {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "inc")
        }
    }

    impl Dmts for Counter {
        type Local = u32;
        type Action = Inc;
        type Class = AgentId;

        fn agents(&self) -> &BTreeSet<AgentId> {
            &self.agents
        }
        fn initial_local(&self) -> u32 {
            0
        }
        fn apply_local(&self, s: &u32, _actor: AgentId, _a: &Inc) -> u32 {
            s + 1
        }
        fn admits(&self, _c: &Config<u32>, actor: AgentId, _a: &Inc) -> Result<(), Reject> {
            if self.agents.contains(&actor) {
                Ok(())
            } else {
                Err(Reject::BadObjectShape)
            }
        }
        fn enumerate(&self, _c: &Config<u32>, _actor: AgentId, _caps: &EnumCaps) -> Vec<Inc> {
            vec![Inc]
        }
        fn action_classes(&self, _c: &Config<u32>, actor: AgentId, _a: &Inc) -> Vec<AgentId> {
            vec![actor]
        }
        fn enabled_classes(&self, c: &Config<u32>) -> BTreeSet<AgentId> {
            c.agents().collect()
        }
        fn infer_action(
            &self,
            _config: &Config<u32>,
            _actor: AgentId,
            before: &u32,
            after: &u32,
        ) -> Option<Inc> {
            (*after == before + 1).then_some(Inc)
        }
    }

    fn agents(n: u32) -> BTreeSet<AgentId> {
        (0..n).map(AgentId).collect()
    }

    #[test]
    fn apply_accepts_single_agent_increment() {
        let sys = Counter { agents: agents(2) };
        let c0 = sys.initial_config();
        let after = c0.with_local(AgentId(0), 1);
        let t = Transition {
            actor: AgentId(0),
            before: c0.clone(),
            after: after.clone(),
        };
        assert_eq!(apply(&sys, &c0, &t).unwrap(), after);
    }

    #[test]
    fn apply_rejects_identity_transition() {
        let sys = Counter { agents: agents(2) };
        let c0 = sys.initial_config();
        let t = Transition {
            actor: AgentId(0),
            before: c0.clone(),
            after: c0.clone(),
        };
        assert_eq!(
            apply(&sys, &c0, &t),
            Err(ApplyError::GuardRejected(Reject::NoOp))
        );
    }

    #[test]
    fn apply_rejects_two_agent_change() {
        let sys = Counter { agents: agents(2) };
        let c0 = sys.initial_config();
        let after = c0.with_local(AgentId(0), 1).with_local(AgentId(1), 1);
        let t = Transition {
            actor: AgentId(0),
            before: c0.clone(),
            after,
        };
        assert_eq!(apply(&sys, &c0, &t), Err(ApplyError::ActorMismatch));
    }

    #[test]
    fn empty_run_is_safe() {
        let sys = Counter { agents: agents(2) };
        let run = Run::<Inc>::new(agents(2));
        assert!(check_safe(&sys, &run).is_safe());
    }

    #[test]
    fn projection_restricts_and_composes() {
        let sys = Counter { agents: agents(3) };
        let mut c = sys.initial_config();
        c = c.with_local(AgentId(2), 7);
        let p2: BTreeSet<_> = [AgentId(0), AgentId(1)].into();
        let p1: BTreeSet<_> = [AgentId(0)].into();
        let via = project(&project(&c, &p2).unwrap(), &p1).unwrap();
        let direct = project(&c, &p1).unwrap();
        assert_eq!(via, direct);
        assert_eq!(project(&c, &c.agent_set()).unwrap(), c);

        let bad: BTreeSet<_> = [AgentId(0), AgentId(9)].into();
        assert_eq!(project(&c, &bad), Err(ProjectError::NotSubset));
    }

    #[test]
    fn starvation_flagged_at_horizon() {
        let sys = Counter { agents: agents(2) };
        // Agent 1 never acts over 6 steps; horizon 4 must flag its class.
        let mut run = Run::new(agents(2));
        for _ in 0..6 {
            run.push(AgentId(0), Inc);
        }
        let report = check_live_bounded(&sys, &run, 4);
        assert!(report.flags.iter().any(|f| f.class == "a1"));
        assert!(!report.flags.iter().any(|f| f.class == "a0"));
        // Horizon longer than the run: no flags.
        assert!(check_live_bounded(&sys, &run, 10).is_live());
    }
}
