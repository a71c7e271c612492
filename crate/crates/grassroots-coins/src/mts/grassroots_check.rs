//! Bounded behavioral-embedding check.
//!
//! A protocol family is *grassroots* when a group of agents `P` embedded in
//! a larger group `P'` keeps every behavior it has on its own and gains new
//! ones: `TS(P)` is a strict subset of `TS(P')/P`. The exact condition
//! quantifies over all behaviors; this module decides a bounded surrogate by
//! exhaustive enumeration on tiny instances:
//!
//! - every run of `TS(P)` up to the depth cap must be reproducible as a
//!   stutter-free projection of `TS(P')` steps (agents outside `P` move
//!   freely between visible steps, within a hidden-step budget), and
//! - some projected behavior must exist that `TS(P)` cannot produce.
//!
//! Exploration is restricted to configurations reachable from the initial
//! one, with alphabet and state caps, so a `Consistent` verdict is evidence
//! at the explored bound, not a proof.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use thiserror::Error;

use super::{project, AgentId, Config, Dmts, EnumCaps};

#[derive(Clone, Debug)]
pub struct GrassrootsCaps {
    /// Behavior length bound (number of visible steps).
    pub depth: usize,
    /// Budget of hidden (outside-`P`) steps interleaved along one path.
    pub hidden_budget: usize,
    /// Abort once this many configurations have been materialized.
    pub state_cap: usize,
    pub enum_caps: EnumCaps,
}

impl Default for GrassrootsCaps {
    fn default() -> Self {
        GrassrootsCaps {
            depth: 4,
            hidden_budget: 4,
            state_cap: 1_000_000,
            enum_caps: EnumCaps::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GrassrootsError {
    #[error("state cap exceeded during bounded enumeration")]
    BudgetExceeded,
    #[error("agent sets must satisfy {{}} != P, P strictly inside P'")]
    InvalidAgentSets,
}

/// Outcome of the bounded check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GrassrootsVerdict {
    /// Every depth-bounded small-group behavior embeds in the projection,
    /// and the projection offers at least one behavior the small group
    /// lacks.
    ConsistentWithGrassroots {
        small_behaviors: usize,
        new_behavior: Vec<String>,
    },
    /// A small-group run that the projected larger system cannot
    /// reproduce within the bounds; the offending run is rendered
    /// configuration by configuration.
    MissingBehavior { run: Vec<String> },
    /// The projection adds nothing: no behavior beyond the small group's
    /// was found within the bounds, so the strict inclusion fails.
    NoNewBehavior,
}

impl GrassrootsVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, GrassrootsVerdict::ConsistentWithGrassroots { .. })
    }
}

/// Prefix tree of behaviors; behaviors are sequences of configurations
/// after the (shared) initial one.
struct Trie<L> {
    children: BTreeMap<Config<L>, Trie<L>>,
}

impl<L: Clone + Ord> Trie<L> {
    fn new() -> Self {
        Trie {
            children: BTreeMap::new(),
        }
    }

    fn contains_path(&self, path: &[Config<L>]) -> bool {
        match path.split_first() {
            None => true,
            Some((head, rest)) => match self.children.get(head) {
                Some(child) => child.contains_path(rest),
                None => false,
            },
        }
    }

    fn count_paths(&self) -> usize {
        // every node (including inner ones) is a behavior prefix
        self.children
            .values()
            .map(|c| 1 + c.count_paths())
            .sum::<usize>()
    }
}

struct Budget {
    used: usize,
    cap: usize,
}

impl Budget {
    fn charge(&mut self, n: usize) -> Result<(), GrassrootsError> {
        self.used += n;
        if self.used > self.cap {
            Err(GrassrootsError::BudgetExceeded)
        } else {
            Ok(())
        }
    }
}

/// Decide the bounded grassroots condition for the protocol produced by
/// `factory`, for the strict inclusion `small` inside `large`.
pub fn check_grassroots_bounded<S, F>(
    factory: F,
    small: &BTreeSet<AgentId>,
    large: &BTreeSet<AgentId>,
    caps: &GrassrootsCaps,
) -> Result<GrassrootsVerdict, GrassrootsError>
where
    S: Dmts,
    F: Fn(&BTreeSet<AgentId>) -> S,
{
    if small.is_empty() || !small.is_subset(large) || small == large {
        return Err(GrassrootsError::InvalidAgentSets);
    }
    let small_sys = factory(small);
    let large_sys = factory(large);
    let mut budget = Budget {
        used: 0,
        cap: caps.state_cap,
    };

    // All depth-bounded behaviors of the small system, as a prefix tree.
    let mut trie = Trie::new();
    let c0_small = small_sys.initial_config();
    grow_trie(&small_sys, &c0_small, &mut trie, caps, &mut budget)?;
    let small_behaviors = trie.count_paths();

    // Inclusion: walk the trie, simulating the projected large system as a
    // nondeterministic machine whose silent moves are hidden-agent steps.
    let c0_large = large_sys.initial_config();
    let mut frontier: BTreeMap<Config<S::Local>, usize> = BTreeMap::new();
    frontier.insert(c0_large, 0);
    hidden_closure(&large_sys, small, &mut frontier, caps, &mut budget)?;
    if let Some(run) = walk_inclusion(
        &large_sys,
        small,
        &trie,
        &frontier,
        &mut Vec::new(),
        caps,
        &mut budget,
    )? {
        return Ok(GrassrootsVerdict::MissingBehavior { run });
    }

    // Strictness: some projected behavior must escape the trie.
    match find_new_behavior(&large_sys, small, &trie, caps, &mut budget)? {
        Some(run) => Ok(GrassrootsVerdict::ConsistentWithGrassroots {
            small_behaviors,
            new_behavior: run,
        }),
        None => Ok(GrassrootsVerdict::NoNewBehavior),
    }
}

fn successors<S: Dmts>(
    sys: &S,
    config: &Config<S::Local>,
    actors: &BTreeSet<AgentId>,
    caps: &EnumCaps,
) -> Vec<Config<S::Local>> {
    let mut out = BTreeSet::new();
    for actor in actors {
        for action in sys.enumerate(config, *actor, caps) {
            debug_assert!(sys.admits(config, *actor, &action).is_ok());
            let next = sys.apply_step(config, *actor, &action);
            if next != *config {
                out.insert(next);
            }
        }
    }
    out.into_iter().collect()
}

fn grow_trie<S: Dmts>(
    sys: &S,
    config: &Config<S::Local>,
    node: &mut Trie<S::Local>,
    caps: &GrassrootsCaps,
    budget: &mut Budget,
) -> Result<(), GrassrootsError> {
    if caps.depth == 0 {
        return Ok(());
    }
    grow_trie_rec(sys, config, node, caps.depth, caps, budget)
}

fn grow_trie_rec<S: Dmts>(
    sys: &S,
    config: &Config<S::Local>,
    node: &mut Trie<S::Local>,
    depth_left: usize,
    caps: &GrassrootsCaps,
    budget: &mut Budget,
) -> Result<(), GrassrootsError> {
    if depth_left == 0 {
        return Ok(());
    }
    let agents = sys.agents().clone();
    for next in successors(sys, config, &agents, &caps.enum_caps) {
        budget.charge(1)?;
        let child = node.children.entry(next.clone()).or_insert_with(Trie::new);
        grow_trie_rec(sys, &next, child, depth_left - 1, caps, budget)?;
    }
    Ok(())
}

/// Close a frontier under hidden-agent moves, respecting the per-path
/// hidden-step budget. Keys map to the fewest hidden steps used to reach
/// the configuration.
fn hidden_closure<S: Dmts>(
    sys: &S,
    visible: &BTreeSet<AgentId>,
    frontier: &mut BTreeMap<Config<S::Local>, usize>,
    caps: &GrassrootsCaps,
    budget: &mut Budget,
) -> Result<(), GrassrootsError> {
    let hidden: BTreeSet<AgentId> = sys.agents().difference(visible).copied().collect();
    if hidden.is_empty() {
        return Ok(());
    }
    let mut queue: Vec<(Config<S::Local>, usize)> =
        frontier.iter().map(|(c, h)| (c.clone(), *h)).collect();
    while let Some((config, used)) = queue.pop() {
        if used >= caps.hidden_budget {
            continue;
        }
        for next in successors(sys, &config, &hidden, &caps.enum_caps) {
            let entry = frontier.entry(next.clone());
            match entry {
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    if used + 1 < *o.get() {
                        o.insert(used + 1);
                        queue.push((next, used + 1));
                    }
                }
                std::collections::btree_map::Entry::Vacant(v) => {
                    budget.charge(1)?;
                    v.insert(used + 1);
                    queue.push((next, used + 1));
                }
            }
        }
    }
    Ok(())
}

fn render_path<L: std::fmt::Debug>(path: &[Config<L>]) -> Vec<String> {
    path.iter().map(|c| format!("{c:?}")).collect()
}

/// Returns the first small-system behavior (as a rendered run) that the
/// projected large system cannot reproduce, or None if all embed.
fn walk_inclusion<S: Dmts>(
    large: &S,
    small: &BTreeSet<AgentId>,
    node: &Trie<S::Local>,
    frontier: &BTreeMap<Config<S::Local>, usize>,
    path: &mut Vec<Config<S::Local>>,
    caps: &GrassrootsCaps,
    budget: &mut Budget,
) -> Result<Option<Vec<String>>, GrassrootsError> {
    for (target, child) in &node.children {
        let mut next_frontier: BTreeMap<Config<S::Local>, usize> = BTreeMap::new();
        for (config, hidden_used) in frontier {
            for actor in small.iter() {
                for action in large.enumerate(config, *actor, &caps.enum_caps) {
                    let next = large.apply_step(config, *actor, &action);
                    if next == *config {
                        continue;
                    }
                    let projected = project(&next, small).expect("small inside large");
                    if projected != *target {
                        continue;
                    }
                    let entry = next_frontier.entry(next.clone()).or_insert_with(|| {
                        budget.used += 1;
                        *hidden_used
                    });
                    if *entry > *hidden_used {
                        *entry = *hidden_used;
                    }
                }
            }
        }
        if budget.used > budget.cap {
            return Err(GrassrootsError::BudgetExceeded);
        }
        path.push(target.clone());
        if next_frontier.is_empty() {
            return Ok(Some(render_path(path)));
        }
        hidden_closure(large, small, &mut next_frontier, caps, budget)?;
        if let Some(run) =
            walk_inclusion(large, small, child, &next_frontier, path, caps, budget)?
        {
            return Ok(Some(run));
        }
        path.pop();
    }
    Ok(None)
}

/// Depth-first search for a projected behavior of the large system that
/// the small system's behavior trie does not contain.
fn find_new_behavior<S: Dmts>(
    large: &S,
    small: &BTreeSet<AgentId>,
    trie: &Trie<S::Local>,
    caps: &GrassrootsCaps,
    budget: &mut Budget,
) -> Result<Option<Vec<String>>, GrassrootsError> {
    struct Frame<L> {
        config: Config<L>,
        proj: Vec<Config<L>>,
        hidden_used: usize,
    }
    let mut stack = vec![Frame {
        config: large.initial_config(),
        proj: Vec::new(),
        hidden_used: 0,
    }];
    let mut seen: BTreeSet<(Config<S::Local>, usize)> = BTreeSet::new();
    let all: BTreeSet<AgentId> = large.agents().clone();

    while let Some(frame) = stack.pop() {
        if !seen.insert((frame.config.clone(), frame.proj.len())) {
            continue;
        }
        budget.charge(1)?;
        for actor in &all {
            let visible = small.contains(actor);
            if !visible && frame.hidden_used >= caps.hidden_budget {
                continue;
            }
            if visible && frame.proj.len() >= caps.depth {
                continue;
            }
            for action in large.enumerate(&frame.config, *actor, &caps.enum_caps) {
                let next = large.apply_step(&frame.config, *actor, &action);
                if next == frame.config {
                    continue;
                }
                if visible {
                    let mut proj = frame.proj.clone();
                    proj.push(project(&next, small).expect("small inside large"));
                    if !trie.contains_path(&proj) {
                        return Ok(Some(render_path(&proj)));
                    }
                    stack.push(Frame {
                        config: next,
                        proj,
                        hidden_used: frame.hidden_used,
                    });
                } else {
                    stack.push(Frame {
                        config: next,
                        proj: frame.proj.clone(),
                        hidden_used: frame.hidden_used + 1,
                    });
                }
            }
        }
    }
    Ok(None)
}
