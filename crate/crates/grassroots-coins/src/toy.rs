//! A toy all-to-all dissemination protocol, used as the negative control
//! for the bounded grassroots check.
//!
//! Every published message is addressed to *all* agents of the system, and
//! any agent relays any message to anyone. Because the full agent set is
//! baked into each publication, a small group embedded in a larger one can
//! no longer produce the messages it produces on its own — the behavioral
//! embedding fails at depth 1.

use std::collections::BTreeSet;
use std::fmt;

use crate::mts::{AgentId, Config, Dmts, EnumCaps, Reject};

/// A broadcast message: author, per-author sequence number, and the
/// recipient set stamped at publication time.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct AtaMessage {
    pub author: AgentId,
    pub seq: u32,
    pub recipients: BTreeSet<AgentId>,
}

impl fmt::Display for AtaMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "msg({},{})", self.author, self.seq)
    }
}

pub type AtaLocal = BTreeSet<AtaMessage>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtaAction {
    /// Publish the next own message, addressed to every agent.
    Publish,
    /// Copy a message known to any other agent.
    Deliver(AtaMessage),
}

/// All-to-all toy system.
pub struct AtaSystem {
    pub agents: BTreeSet<AgentId>,
}

impl AtaSystem {
    pub fn new(agents: BTreeSet<AgentId>) -> Self {
        AtaSystem { agents }
    }

    fn next_seq(&self, state: &AtaLocal, author: AgentId) -> u32 {
        state
            .iter()
            .filter(|m| m.author == author)
            .map(|m| m.seq)
            .max()
            .unwrap_or(0)
            + 1
    }

    fn publish_message(&self, state: &AtaLocal, author: AgentId) -> AtaMessage {
        AtaMessage {
            author,
            seq: self.next_seq(state, author),
            recipients: self.agents.clone(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct AtaClass(pub AgentId);

impl fmt::Display for AtaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Dmts for AtaSystem {
    type Local = AtaLocal;
    type Action = AtaAction;
    type Class = AtaClass;

    fn agents(&self) -> &BTreeSet<AgentId> {
        &self.agents
    }

    fn initial_local(&self) -> AtaLocal {
        BTreeSet::new()
    }

    fn apply_local(&self, state: &AtaLocal, actor: AgentId, action: &AtaAction) -> AtaLocal {
        let mut next = state.clone();
        match action {
            AtaAction::Publish => {
                next.insert(self.publish_message(state, actor));
            }
            AtaAction::Deliver(m) => {
                next.insert(m.clone());
            }
        }
        next
    }

    fn admits(
        &self,
        config: &Config<AtaLocal>,
        actor: AgentId,
        action: &AtaAction,
    ) -> Result<(), Reject> {
        let state = config.local(actor).ok_or(Reject::BadObjectShape)?;
        match action {
            AtaAction::Publish => Ok(()),
            AtaAction::Deliver(m) => {
                if state.contains(m) {
                    return Err(Reject::AlreadyPresent);
                }
                let known = config
                    .iter()
                    .any(|(a, s)| a != actor && s.contains(m));
                if known {
                    Ok(())
                } else {
                    Err(Reject::UnknownSource)
                }
            }
        }
    }

    fn enumerate(
        &self,
        config: &Config<AtaLocal>,
        actor: AgentId,
        caps: &EnumCaps,
    ) -> Vec<AtaAction> {
        let Some(state) = config.local(actor) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        if self.next_seq(state, actor) <= caps.max_own_index {
            out.push(AtaAction::Publish);
        }
        for (a, s) in config.iter() {
            if a == actor {
                continue;
            }
            for m in s {
                if !state.contains(m) {
                    out.push(AtaAction::Deliver(m.clone()));
                }
            }
        }
        out.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
        out.dedup();
        out
    }

    fn action_classes(
        &self,
        _config: &Config<AtaLocal>,
        actor: AgentId,
        _action: &AtaAction,
    ) -> Vec<AtaClass> {
        vec![AtaClass(actor)]
    }

    fn enabled_classes(&self, config: &Config<AtaLocal>) -> BTreeSet<AtaClass> {
        config.agents().map(AtaClass).collect()
    }

    fn infer_action(
        &self,
        _config: &Config<AtaLocal>,
        actor: AgentId,
        before: &AtaLocal,
        after: &AtaLocal,
    ) -> Option<AtaAction> {
        if after.len() != before.len() + 1 || !before.is_subset(after) {
            return None;
        }
        let added = after.difference(before).next()?.clone();
        if added.author == actor && added.recipients == self.agents {
            Some(AtaAction::Publish)
        } else {
            Some(AtaAction::Deliver(added))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mts::{check_grassroots_bounded, GrassrootsCaps, GrassrootsVerdict};

    #[test]
    fn publications_stamp_the_whole_agent_set() {
        let agents: BTreeSet<AgentId> = (0..3).map(AgentId).collect();
        let sys = AtaSystem::new(agents.clone());
        let c0 = sys.initial_config();
        let c1 = sys.apply_step(&c0, AgentId(0), &AtaAction::Publish);
        let msg = c1.local(AgentId(0)).unwrap().iter().next().unwrap().clone();
        assert_eq!(msg.recipients, agents);

        // Anyone may deliver to anyone: no friendship gating.
        assert!(sys
            .admits(&c1, AgentId(2), &AtaAction::Deliver(msg))
            .is_ok());
    }

    #[test]
    fn all_to_all_is_not_grassroots() {
        let small: BTreeSet<AgentId> = (0..2).map(AgentId).collect();
        let large: BTreeSet<AgentId> = (0..3).map(AgentId).collect();
        let caps = GrassrootsCaps {
            depth: 2,
            ..GrassrootsCaps::default()
        };
        let verdict =
            check_grassroots_bounded(|a| AtaSystem::new(a.clone()), &small, &large, &caps)
                .unwrap();
        assert!(matches!(verdict, GrassrootsVerdict::MissingBehavior { .. }));
    }
}
