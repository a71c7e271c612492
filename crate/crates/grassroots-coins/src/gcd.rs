//! Coin dissemination over a friendship graph.
//!
//! Each agent's local state is a set of *coin blocks* `(author, index,
//! payload)`. An agent extends its own consecutively indexed chain with an
//! initial block, a fresh coin, or a coin transfer (transfers only between
//! friends); it starts following another agent by adopting that agent's
//! initial block; and it receives further blocks of agents it follows from
//! friends, in index order. Friendship is mutual following, and blocks flow
//! only along friendship edges.
//!
//! Holder and freeze conditions on transfers are evaluated against the
//! actor's own view (the coins present in its blocks): an agent cannot be
//! bound by claims it has not seen. Friendship and receive conditions read
//! the whole configuration, as transition guards do.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::mts::{AgentId, Config, Dmts, EnumCaps, Reject};
use crate::nft::{is_tip, Metadata, MockSigner, Nft, NftId, NftUniverse, Payload};
use crate::sc::{
    claims_against, coin_index, coin_string, is_coin, is_coin_object, settles, SettleVerdict,
};

/// A dissemination-layer record: the `index`-th block of `author`, carrying
/// a coin or, for the initial block, nothing.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct CoinBlock {
    pub author: AgentId,
    pub index: u32,
    pub payload: Option<NftId>,
}

impl CoinBlock {
    /// Blocks satisfy: index 1 carries no payload, later indices carry one.
    pub fn new(author: AgentId, index: u32, payload: Option<NftId>) -> Option<CoinBlock> {
        if index == 0 || (index == 1) != payload.is_none() {
            return None;
        }
        Some(CoinBlock {
            author,
            index,
            payload,
        })
    }

    pub fn initial(author: AgentId) -> CoinBlock {
        CoinBlock {
            author,
            index: 1,
            payload: None,
        }
    }

    /// Canonical serialization: (author, index) header followed by the
    /// payload reference.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(41);
        out.extend(self.author.0.to_be_bytes());
        out.extend(self.index.to_be_bytes());
        match self.payload {
            None => out.push(0),
            Some(id) => {
                out.push(1);
                out.extend(id.0);
            }
        }
        out
    }
}

impl fmt::Display for CoinBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.payload {
            None => write!(f, "({},{},-)", self.author, self.index),
            Some(id) => write!(f, "({},{},{id})", self.author, self.index),
        }
    }
}

pub type GcdLocal = BTreeSet<CoinBlock>;
pub type GcdConfig = Config<GcdLocal>;

fn author_range(author: AgentId) -> (Bound<CoinBlock>, Bound<CoinBlock>) {
    let lo = Bound::Included(CoinBlock {
        author,
        index: 0,
        payload: None,
    });
    let hi = if author.0 == u32::MAX {
        Bound::Unbounded
    } else {
        Bound::Excluded(CoinBlock {
            author: AgentId(author.0 + 1),
            index: 0,
            payload: None,
        })
    };
    (lo, hi)
}

/// Blocks authored by `author` within a state.
pub fn blocks_by<'a>(
    state: &'a GcdLocal,
    author: AgentId,
) -> impl Iterator<Item = &'a CoinBlock> + 'a {
    state.range(author_range(author))
}

/// Highest own-block index, 0 when none.
pub fn max_own_index(state: &GcdLocal, author: AgentId) -> u32 {
    blocks_by(state, author).last().map(|b| b.index).unwrap_or(0)
}

pub fn has_indexed_block(state: &GcdLocal, author: AgentId, index: u32) -> bool {
    blocks_by(state, author).any(|b| b.index == index)
}

/// `p` follows `q` in a configuration when `p`'s state holds any `q`-block.
pub fn follows(config: &GcdConfig, p: AgentId, q: AgentId) -> bool {
    config
        .local(p)
        .map(|s| blocks_by(s, q).next().is_some())
        .unwrap_or(false)
}

/// Friendship is mutual following; self-edges are excluded.
pub fn friends(config: &GcdConfig, p: AgentId, q: AgentId) -> bool {
    p != q && follows(config, p, q) && follows(config, q, p)
}

/// The undirected friendship graph induced by a configuration, as a set of
/// ordered pairs (p < q).
pub fn friendship_graph(config: &GcdConfig) -> BTreeSet<(AgentId, AgentId)> {
    let agents: Vec<AgentId> = config.agents().collect();
    let mut edges = BTreeSet::new();
    for (i, &p) in agents.iter().enumerate() {
        for &q in &agents[i + 1..] {
            if friends(config, p, q) {
                edges.insert((p, q));
            }
        }
    }
    edges
}

/// The coins present in a block set: an agent's view of the coin world.
pub fn coin_view(state: &GcdLocal) -> BTreeSet<NftId> {
    state.iter().filter_map(|b| b.payload).collect()
}

/// Actions of the dissemination protocol. Creates carry the minted coin;
/// the block index is derived from the actor's own chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GcdAction {
    /// First own block, carrying no coin.
    CreateInitial,
    /// Next own block carrying a freshly minted own coin.
    CreateFresh(Nft),
    /// Next own block carrying a transfer of a held coin to a friend.
    CreateTransfer(Nft),
    /// Adopt another agent's initial block (start following).
    Follow(AgentId),
    /// Receive a further block of a followed agent from a friend who has it.
    Receive { from: AgentId, block: CoinBlock },
}

impl GcdAction {
    /// The block this action adds to the actor's state.
    pub fn block(&self, state: &GcdLocal, actor: AgentId) -> CoinBlock {
        match self {
            GcdAction::CreateInitial => CoinBlock::initial(actor),
            GcdAction::CreateFresh(nft) | GcdAction::CreateTransfer(nft) => CoinBlock {
                author: actor,
                index: max_own_index(state, actor) + 1,
                payload: Some(nft.id()),
            },
            GcdAction::Follow(of) => CoinBlock::initial(*of),
            GcdAction::Receive { block, .. } => *block,
        }
    }
}

/// Guard of the dissemination protocol.
pub fn gcd_guard(
    universe: &NftUniverse,
    config: &GcdConfig,
    actor: AgentId,
    action: &GcdAction,
) -> Result<(), Reject> {
    let state = config.local(actor).ok_or(Reject::BadObjectShape)?;
    let block = action.block(state, actor);
    if state.contains(&block) {
        return Err(Reject::AlreadyPresent);
    }
    match action {
        GcdAction::CreateInitial => {
            if max_own_index(state, actor) != 0 {
                return Err(Reject::IndexGap);
            }
            Ok(())
        }
        GcdAction::CreateFresh(nft) => {
            let index = max_own_index(state, actor) + 1;
            if index < 2 {
                return Err(Reject::IndexGap);
            }
            let fresh_ok = is_coin_object(nft)
                && nft.sender() == actor
                && nft.recipient() == actor
                && match nft.payload() {
                    Payload::Object(s) => coin_index(s) == Some(index as u64),
                    Payload::Transfer(_) => false,
                };
            if !fresh_ok {
                return Err(Reject::BadFreshCoin);
            }
            Ok(())
        }
        GcdAction::CreateTransfer(nft) => {
            let index = max_own_index(state, actor) + 1;
            if index < 2 {
                return Err(Reject::IndexGap);
            }
            if nft.sender() != actor || !is_coin(universe, nft) || nft.is_object() {
                return Err(Reject::BadObjectShape);
            }
            if !friends(config, actor, nft.recipient()) {
                return Err(Reject::NotFriends);
            }
            // Holder and freeze conditions against the actor's own view.
            let view = coin_view(state);
            let Payload::Transfer(pid) = nft.payload() else {
                return Err(Reject::BadObjectShape);
            };
            let payload_held = view.contains(pid)
                && universe
                    .get(pid)
                    .map(|p| p.recipient() == actor)
                    .unwrap_or(false)
                && is_tip(universe, pid, &view);
            if !payload_held {
                return Err(Reject::NotHolder);
            }
            let frozen_by = claims_against(universe, pid, &view);
            if let Some(chosen) = frozen_by.first() {
                let settling = nft.metadata() == &Metadata::Settle(chosen.id)
                    && settles(universe, nft, chosen, &view) == SettleVerdict::Accepted;
                if !settling {
                    return Err(Reject::CoinFrozen);
                }
            }
            Ok(())
        }
        GcdAction::Follow(of) => {
            if *of == actor {
                return Err(Reject::BadObjectShape);
            }
            Ok(())
        }
        GcdAction::Receive { from, block } => {
            if block.author == actor || *from == actor {
                return Err(Reject::BadObjectShape);
            }
            let source = config.local(*from).ok_or(Reject::UnknownSource)?;
            if !source.contains(block) {
                return Err(Reject::UnknownSource);
            }
            if !friends(config, actor, *from) {
                return Err(Reject::NotFriends);
            }
            // Index order: the initial block is adopted by following; each
            // later block needs its predecessor.
            if block.index < 2 || !has_indexed_block(state, block.author, block.index - 1) {
                return Err(Reject::MissingPredecessor);
            }
            Ok(())
        }
    }
}

/// Blocks of `q` guaranteed to reach `p` under fair scheduling: the
/// `q`-blocks known anywhere in `p`'s connected component of the
/// friendship subgraph induced by followers of `q`. With no friendship
/// path from `p` to `q` through followers of `q`, nothing is guaranteed.
pub fn reachable_blocks(config: &GcdConfig, p: AgentId, q: AgentId) -> BTreeSet<CoinBlock> {
    let own = |a: AgentId| -> BTreeSet<CoinBlock> {
        config
            .local(a)
            .map(|s| blocks_by(s, q).copied().collect())
            .unwrap_or_default()
    };
    if p == q {
        return own(p);
    }
    let followers: BTreeSet<AgentId> = config
        .agents()
        .filter(|a| follows(config, *a, q))
        .collect();
    if !followers.contains(&p) {
        return BTreeSet::new();
    }
    // Connected component of p within the follower-induced friendship graph.
    let mut component = BTreeSet::from([p]);
    let mut queue = vec![p];
    while let Some(a) = queue.pop() {
        for &b in &followers {
            if !component.contains(&b) && friends(config, a, b) {
                component.insert(b);
                queue.push(b);
            }
        }
    }
    if !component.contains(&q) {
        return BTreeSet::new();
    }
    component.iter().flat_map(|a| own(*a)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("coin view undefined for agent {agent}: {reason}")]
pub struct GammaUndefined {
    pub agent: AgentId,
    pub reason: String,
}

/// The dissemination order: per-agent coin views must be defined and
/// ordered under the coin-configuration order.
pub fn gcd_order(
    universe: &NftUniverse,
    a: &GcdConfig,
    b: &GcdConfig,
) -> Result<bool, GammaUndefined> {
    if a.agent_set() != b.agent_set() {
        return Ok(false);
    }
    let agents = a.agent_set();
    for (p, state) in a.iter() {
        let va = crate::sigma::gamma(universe, state, &agents).ok_or_else(|| GammaUndefined {
            agent: p,
            reason: "undefined on the earlier configuration".into(),
        })?;
        let vb = crate::sigma::gamma(universe, b.local(p).expect("same agents"), &agents)
            .ok_or_else(|| GammaUndefined {
                agent: p,
                reason: "undefined on the later configuration".into(),
            })?;
        if !crate::sc::sc_order(universe, &va, &vb) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Liveness classes: one per receivable block, labeled by sender and
/// block, at each receiver. Creates and follows carry no liveness
/// obligation here: on finite runs an agent is always free to mint more,
/// and following is voluntary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct ReceiveClass {
    pub receiver: AgentId,
    pub sender: AgentId,
    pub block: CoinBlock,
}

impl fmt::Display for ReceiveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Sent-{} at {}", self.sender, self.block, self.receiver)
    }
}

/// The dissemination protocol as a transition system.
pub struct GcdSystem {
    pub agents: BTreeSet<AgentId>,
    pub universe: RefCell<NftUniverse>,
    pub signer: MockSigner,
}

impl GcdSystem {
    pub fn new(agents: BTreeSet<AgentId>) -> Self {
        GcdSystem {
            agents,
            universe: RefCell::new(NftUniverse::new()),
            signer: MockSigner,
        }
    }

    /// Mint the fresh coin matching the actor's next block index.
    pub fn next_fresh_coin(&self, config: &GcdConfig, actor: AgentId) -> Option<Nft> {
        let state = config.local(actor)?;
        let index = max_own_index(state, actor) + 1;
        if index < 2 {
            return None;
        }
        Some(
            self.universe
                .borrow_mut()
                .make_object(&self.signer, actor, &coin_string(index as u64))
                .expect("mock signer"),
        )
    }

    /// Blocks `actor` may pull right now, with a source for each.
    pub fn receivable(&self, config: &GcdConfig, actor: AgentId) -> Vec<(AgentId, CoinBlock)> {
        let Some(state) = config.local(actor) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (q, source) in config.iter() {
            if q == actor || !friends(config, actor, q) {
                continue;
            }
            for block in source.iter() {
                if block.author == actor || block.index < 2 || state.contains(block) {
                    continue;
                }
                if has_indexed_block(state, block.author, block.index - 1) {
                    out.push((q, *block));
                }
            }
        }
        out
    }
}

impl Dmts for GcdSystem {
    type Local = GcdLocal;
    type Action = GcdAction;
    type Class = ReceiveClass;

    fn agents(&self) -> &BTreeSet<AgentId> {
        &self.agents
    }

    fn initial_local(&self) -> GcdLocal {
        BTreeSet::new()
    }

    fn apply_local(&self, state: &GcdLocal, actor: AgentId, action: &GcdAction) -> GcdLocal {
        let mut next = state.clone();
        next.insert(action.block(state, actor));
        next
    }

    fn admits(&self, config: &GcdConfig, actor: AgentId, action: &GcdAction) -> Result<(), Reject> {
        gcd_guard(&self.universe.borrow(), config, actor, action)
    }

    fn enumerate(&self, config: &GcdConfig, actor: AgentId, caps: &EnumCaps) -> Vec<GcdAction> {
        let Some(state) = config.local(actor) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let own = max_own_index(state, actor);
        if own == 0 {
            out.push(GcdAction::CreateInitial);
        } else if own < caps.max_own_index {
            if let Some(coin) = self.next_fresh_coin(config, actor) {
                out.push(GcdAction::CreateFresh(coin));
            }
            let view = coin_view(state);
            let universe_snapshot: Vec<Nft> = {
                let u = self.universe.borrow();
                view.iter()
                    .filter_map(|id| u.get(id).cloned())
                    .filter(|n| n.recipient() == actor && is_tip(&u, &n.id(), &view))
                    .collect()
            };
            for payload in universe_snapshot {
                for q in &self.agents {
                    if !friends(config, actor, *q) {
                        continue;
                    }
                    let mut metas: Vec<Metadata> = caps
                        .plain_metadata
                        .iter()
                        .map(|m| Metadata::Plain(m.clone()))
                        .collect();
                    if caps.allow_redeem {
                        metas.push(Metadata::Redeem(None));
                    }
                    for meta in metas {
                        if let Ok(t) = self.universe.borrow_mut().make_transfer(
                            &self.signer,
                            &payload,
                            meta,
                            actor,
                            *q,
                        ) {
                            out.push(GcdAction::CreateTransfer(t));
                        }
                    }
                }
            }
        }
        for of in &self.agents {
            if *of != actor && !state.contains(&CoinBlock::initial(*of)) {
                out.push(GcdAction::Follow(*of));
            }
        }
        for (from, block) in self.receivable(config, actor) {
            out.push(GcdAction::Receive { from, block });
        }
        out.retain(|a| self.admits(config, actor, a).is_ok());
        out
    }

    fn action_classes(
        &self,
        _config: &GcdConfig,
        actor: AgentId,
        action: &GcdAction,
    ) -> Vec<ReceiveClass> {
        match action {
            GcdAction::Receive { from, block } => vec![ReceiveClass {
                receiver: actor,
                sender: *from,
                block: *block,
            }],
            _ => Vec::new(),
        }
    }

    fn enabled_classes(&self, config: &GcdConfig) -> BTreeSet<ReceiveClass> {
        let mut out = BTreeSet::new();
        for p in config.agents() {
            for (from, block) in self.receivable(config, p) {
                out.insert(ReceiveClass {
                    receiver: p,
                    sender: from,
                    block,
                });
            }
        }
        out
    }

    fn infer_action(
        &self,
        config: &GcdConfig,
        actor: AgentId,
        before: &GcdLocal,
        after: &GcdLocal,
    ) -> Option<GcdAction> {
        if after.len() != before.len() + 1 || !before.is_subset(after) {
            return None;
        }
        let block = *after.difference(before).next()?;
        if block.author == actor {
            match block.payload {
                None => Some(GcdAction::CreateInitial),
                Some(id) => {
                    let universe = self.universe.borrow();
                    let nft = universe.get(&id)?.clone();
                    if nft.is_object() {
                        Some(GcdAction::CreateFresh(nft))
                    } else {
                        Some(GcdAction::CreateTransfer(nft))
                    }
                }
            }
        } else if block.index == 1 {
            Some(GcdAction::Follow(block.author))
        } else {
            // The source is existential; pick the least qualifying friend.
            let from = config
                .iter()
                .filter(|(q, s)| *q != actor && s.contains(&block) && friends(config, actor, *q))
                .map(|(q, _)| q)
                .next()
                .or_else(|| {
                    config
                        .iter()
                        .filter(|(q, s)| *q != actor && s.contains(&block))
                        .map(|(q, _)| q)
                        .next()
                })?;
            Some(GcdAction::Receive { from, block })
        }
    }

    fn describe(&self, actor: AgentId, action: &GcdAction) -> String {
        match action {
            GcdAction::CreateInitial => format!("{actor}-Creates-initial"),
            GcdAction::CreateFresh(n) => format!("{actor}-Creates-fresh-{}", n.id()),
            GcdAction::CreateTransfer(n) => format!("{actor}-Creates-transfer-{}", n.id()),
            GcdAction::Follow(of) => format!("{actor}-Follows-{of}"),
            GcdAction::Receive { from, block } => format!("{from}-Sent-{block} to {actor}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nft::MockSigner;

    fn agents(n: u32) -> BTreeSet<AgentId> {
        (0..n).map(AgentId).collect()
    }

    struct Fixture {
        sys: GcdSystem,
        config: GcdConfig,
    }

    impl Fixture {
        fn new(n: u32) -> Self {
            let sys = GcdSystem::new(agents(n));
            let config = sys.initial_config();
            Fixture { sys, config }
        }

        fn step(&mut self, actor: AgentId, action: GcdAction) {
            self.sys
                .admits(&self.config, actor, &action)
                .unwrap_or_else(|e| panic!("guard rejected {action:?}: {e}"));
            self.config = self.sys.apply_step(&self.config, actor, &action);
        }

        fn befriend(&mut self, p: AgentId, q: AgentId) {
            for (a, b) in [(p, q), (q, p)] {
                if !follows(&self.config, a, b) {
                    self.step(a, GcdAction::Follow(b));
                }
            }
        }

        fn init(&mut self, p: AgentId) {
            self.step(p, GcdAction::CreateInitial);
        }
    }

    #[test]
    fn initial_block_then_indexed_chain() {
        let mut f = Fixture::new(2);
        let p = AgentId(0);
        f.init(p);
        assert!(follows(&f.config, p, p)); // literal reading: own block present
        assert_eq!(max_own_index(f.config.local(p).unwrap(), p), 1);

        // A second initial block is already present.
        assert_eq!(
            f.sys.admits(&f.config, p, &GcdAction::CreateInitial),
            Err(Reject::AlreadyPresent)
        );

        let coin = f.sys.next_fresh_coin(&f.config, p).unwrap();
        assert_eq!(coin_index(match coin.payload() {
            Payload::Object(s) => s,
            _ => unreachable!(),
        }), Some(2));
        f.step(p, GcdAction::CreateFresh(coin));
        assert_eq!(max_own_index(f.config.local(p).unwrap(), p), 2);
    }

    #[test]
    fn fresh_coin_before_initial_is_rejected() {
        let f = Fixture::new(1);
        let p = AgentId(0);
        let coin = f
            .sys
            .universe
            .borrow_mut()
            .make_object(&MockSigner, p, "coin_2")
            .unwrap();
        assert_eq!(
            f.sys.admits(&f.config, p, &GcdAction::CreateFresh(coin)),
            Err(Reject::IndexGap)
        );
    }

    #[test]
    fn follows_and_friends() {
        let mut f = Fixture::new(3);
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        assert!(!follows(&f.config, p, q));
        f.init(p);
        f.init(q);
        f.step(p, GcdAction::Follow(q));
        assert!(follows(&f.config, p, q));
        assert!(!friends(&f.config, p, q));
        f.step(q, GcdAction::Follow(p));
        assert!(friends(&f.config, p, q));
        assert!(!friends(&f.config, p, r));
        assert_eq!(friendship_graph(&f.config), BTreeSet::from([(p, q)]));
    }

    #[test]
    fn transfer_requires_friendship_and_holding() {
        let mut f = Fixture::new(3);
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        f.init(p);
        f.init(q);
        f.init(r);
        f.befriend(p, q);
        let coin = f.sys.next_fresh_coin(&f.config, p).unwrap();
        f.step(p, GcdAction::CreateFresh(coin.clone()));

        // Transfer to a non-friend is rejected.
        let to_r = f
            .sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &coin, Metadata::Plain("pay".into()), p, r)
            .unwrap();
        assert_eq!(
            f.sys.admits(&f.config, p, &GcdAction::CreateTransfer(to_r)),
            Err(Reject::NotFriends)
        );

        // Transfer to a friend is admitted, and the coin leaves p's hands.
        let to_q = f
            .sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &coin, Metadata::Plain("pay".into()), p, q)
            .unwrap();
        f.step(p, GcdAction::CreateTransfer(to_q));
        let again = f
            .sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &coin, Metadata::Plain("again".into()), p, q)
            .unwrap();
        assert_eq!(
            f.sys.admits(&f.config, p, &GcdAction::CreateTransfer(again)),
            Err(Reject::NotHolder)
        );
    }

    #[test]
    fn receive_needs_predecessor_source_and_friendship() {
        let mut f = Fixture::new(3);
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        f.init(p);
        f.init(q);
        f.befriend(p, q);
        // q mints two coins: blocks (q,2) and (q,3).
        let c2 = f.sys.next_fresh_coin(&f.config, q).unwrap();
        f.step(q, GcdAction::CreateFresh(c2));
        let c3 = f.sys.next_fresh_coin(&f.config, q).unwrap();
        f.step(q, GcdAction::CreateFresh(c3));
        let b2 = *blocks_by(f.config.local(q).unwrap(), q)
            .find(|b| b.index == 2)
            .unwrap();
        let b3 = *blocks_by(f.config.local(q).unwrap(), q)
            .find(|b| b.index == 3)
            .unwrap();

        // Skipping ahead to (q,3) without (q,2) is a missing predecessor.
        assert_eq!(
            f.sys
                .admits(&f.config, p, &GcdAction::Receive { from: q, block: b3 }),
            Err(Reject::MissingPredecessor)
        );
        f.step(p, GcdAction::Receive { from: q, block: b2 });
        f.step(p, GcdAction::Receive { from: q, block: b3 });

        // r is not q's friend: pulling from q is rejected even though q
        // knows the block.
        f.init(r);
        f.step(r, GcdAction::Follow(q));
        assert_eq!(
            f.sys
                .admits(&f.config, r, &GcdAction::Receive { from: q, block: b2 }),
            Err(Reject::NotFriends)
        );
        // A block nobody offers is an unknown source.
        assert_eq!(
            f.sys.admits(
                &f.config,
                p,
                &GcdAction::Receive {
                    from: q,
                    block: CoinBlock {
                        author: q,
                        index: 9,
                        payload: b2.payload
                    }
                }
            ),
            Err(Reject::UnknownSource)
        );
    }

    #[test]
    fn reachable_blocks_direct_none_and_two_hop() {
        let mut f = Fixture::new(3);
        let [p, m, q] = [AgentId(0), AgentId(1), AgentId(2)];
        f.init(p);
        f.init(m);
        f.init(q);
        // Line p - m - q; everyone follows q.
        f.befriend(p, m);
        f.befriend(m, q);
        f.step(p, GcdAction::Follow(q));
        let coin = f.sys.next_fresh_coin(&f.config, q).unwrap();
        f.step(q, GcdAction::CreateFresh(coin));

        // Direct friends: all of q's blocks at q are guaranteed.
        let direct = reachable_blocks(&f.config, m, q);
        assert_eq!(direct.len(), 2);

        // Two hops: q's blocks known to the intermediary will reach p.
        let b2 = *blocks_by(f.config.local(q).unwrap(), q)
            .find(|b| b.index == 2)
            .unwrap();
        f.step(m, GcdAction::Receive { from: q, block: b2 });
        let two_hop = reachable_blocks(&f.config, p, q);
        assert!(two_hop.contains(&b2));

        // No friendship path: an isolated agent gets nothing.
        let mut g = Fixture::new(3);
        g.init(AgentId(0));
        g.init(AgentId(2));
        assert!(reachable_blocks(&g.config, AgentId(0), AgentId(2)).is_empty());
    }

    #[test]
    fn gcd_order_tracks_extension_and_detects_undefined_views() {
        let mut f = Fixture::new(2);
        let [p, q] = [AgentId(0), AgentId(1)];
        f.init(p);
        f.init(q);
        f.befriend(p, q);
        let before = f.config.clone();
        let coin = f.sys.next_fresh_coin(&f.config, p).unwrap();
        f.step(p, GcdAction::CreateFresh(coin));
        let after = f.config.clone();

        let u = f.sys.universe.borrow();
        assert!(gcd_order(&u, &before, &before).unwrap()); // reflexive
        assert!(gcd_order(&u, &before, &after).unwrap());
        assert!(!gcd_order(&u, &after, &before).unwrap());

        // An index hole makes a view undefined.
        let mut holed = after.local(q).unwrap().clone();
        holed.insert(CoinBlock {
            author: p,
            index: 3,
            payload: Some(crate::nft::NftId([9; 32])),
        });
        let broken = after.with_local(q, holed);
        assert!(gcd_order(&u, &after, &broken).is_err());
    }
}
