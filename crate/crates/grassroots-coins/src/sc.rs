//! The sovereign-coin protocol: debt coins with redemption.
//!
//! Coins are NFTs whose object payload is a coin string `coin_i`. The coin
//! protocol is the trade protocol restricted to coins, extended with
//! *redemption claims*: a holder of a `q`-coin may transfer it back to its
//! issuer `q` with `redeem(y)` metadata, obligating `q` to return the coin
//! `y` it holds (or a fresh coin when `y` is absent), or to reject by
//! returning the claim coin. While a valid claim against a coin is
//! outstanding, that coin is frozen: its holder may transfer it only as a
//! settlement of the claim.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mts::{AgentId, Config, Dmts, EnumCaps, Reject};
use crate::nft::{
    config_union, find_doublespend, is_complete, is_tip, nt_guard, provenance, DoublespendEvidence,
    Metadata, MockSigner, Nft, NftError, NftId, NftUniverse, Payload, Signer,
};

/// Local state of the coin protocol: the sequence of coins an agent has
/// appended (its creations and outgoing transfers), in order.
pub type ScLocal = Vec<NftId>;
pub type ScConfig = Config<ScLocal>;

pub fn coin_string(index: u64) -> String {
    format!("coin_{index}")
}

/// Parse a coin string `coin_i`.
pub fn coin_index(s: &str) -> Option<u64> {
    let rest = s.strip_prefix("coin_")?;
    if rest.is_empty() || rest.len() > 1 && rest.starts_with('0') {
        return None;
    }
    rest.parse().ok()
}

pub fn is_coin_object(nft: &Nft) -> bool {
    match nft.payload() {
        Payload::Object(s) => coin_index(s).is_some(),
        Payload::Transfer(_) => false,
    }
}

/// A coin is an NFT whose object record carries a coin string.
pub fn is_coin(universe: &NftUniverse, nft: &Nft) -> bool {
    universe
        .get(&nft.object_id())
        .map(is_coin_object)
        .unwrap_or(false)
}

/// The coin's issuer: the creator of its object record.
pub fn issuer(universe: &NftUniverse, nft: &Nft) -> Option<AgentId> {
    universe.get(&nft.object_id()).map(|o| o.recipient())
}

/// A fresh coin transfer carries a coin object directly as payload.
pub fn is_fresh_coin_transfer(universe: &NftUniverse, nft: &Nft) -> bool {
    match nft.payload() {
        Payload::Transfer(pid) => universe.get(pid).map(is_coin_object).unwrap_or(false),
        Payload::Object(_) => false,
    }
}

/// A parsed redemption claim: a `q`-coin transfer from claimant `p` back
/// to the issuer `q` with `redeem(target)` metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedemptionClaim {
    pub id: NftId,
    pub claimant: AgentId,
    pub obligor: AgentId,
    /// Requested coin, or None for a fresh coin of the obligor.
    pub target: Option<NftId>,
    /// Object of the coin being surrendered with the claim.
    pub coin_object: NftId,
    /// Issuer claiming against itself; admitted but economically vacuous.
    pub degenerate: bool,
}

/// Interpret an NFT as a redemption claim if it has the right shape.
pub fn as_claim(universe: &NftUniverse, nft: &Nft) -> Option<RedemptionClaim> {
    let Metadata::Redeem(target) = nft.metadata() else {
        return None;
    };
    if nft.is_object() || !is_coin(universe, nft) {
        return None;
    }
    let obligor = issuer(universe, nft)?;
    if nft.recipient() != obligor {
        return None;
    }
    Some(RedemptionClaim {
        id: nft.id(),
        claimant: nft.sender(),
        obligor,
        target: *target,
        coin_object: nft.object_id(),
        degenerate: nft.sender() == obligor,
    })
}

/// Lifecycle of a claim in a configuration; a pure function of the pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimStatus {
    ValidOutstanding,
    Invalid,
    SettledAccepted,
    SettledRejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SettleVerdict {
    Accepted,
    Rejected,
    NotSettling,
}

/// A claim is valid while it is the tip of its coin's record chain: the
/// claimant held the coin when claiming, and nothing has extended past the
/// claim since. A settlement response or any onward move of the claim coin
/// invalidates it.
pub fn claim_valid(universe: &NftUniverse, claim: &RedemptionClaim, view: &BTreeSet<NftId>) -> bool {
    view.contains(&claim.id) && is_tip(universe, &claim.id, view)
}

/// Whether `transfer` settles `claim` in the view, and how.
///
/// Accepted: the obligor hands over the requested coin, or a fresh coin of
/// its own issue when none was named. Rejected: the obligor no longer
/// holds the requested coin and returns the claim coin instead. The
/// settling transfer must reference the claim in its metadata.
pub fn settles(
    universe: &NftUniverse,
    transfer: &Nft,
    claim: &RedemptionClaim,
    view: &BTreeSet<NftId>,
) -> SettleVerdict {
    if transfer.metadata() != &Metadata::Settle(claim.id) {
        return SettleVerdict::NotSettling;
    }
    if transfer.sender() != claim.obligor || transfer.recipient() != claim.claimant {
        return SettleVerdict::NotSettling;
    }
    let Payload::Transfer(paid) = transfer.payload() else {
        return SettleVerdict::NotSettling;
    };
    match claim.target {
        Some(y) => {
            if *paid == y {
                return SettleVerdict::Accepted;
            }
            // Returning the claim coin rejects the claim, provided the
            // obligor indeed no longer holds the requested coin.
            if *paid == claim.id && !holds_exact(universe, claim.obligor, &y, view) {
                return SettleVerdict::Rejected;
            }
            SettleVerdict::NotSettling
        }
        None => {
            let fresh = universe
                .get(paid)
                .map(|p| is_coin_object(p) && p.recipient() == claim.obligor)
                .unwrap_or(false);
            if fresh {
                SettleVerdict::Accepted
            } else {
                SettleVerdict::NotSettling
            }
        }
    }
}

/// Agent `who` holds the exact record `y`: it is present, addressed to
/// `who`, and unextended in the view.
fn holds_exact(universe: &NftUniverse, who: AgentId, y: &NftId, view: &BTreeSet<NftId>) -> bool {
    view.contains(y)
        && universe
            .get(y)
            .map(|n| n.recipient() == who)
            .unwrap_or(false)
        && is_tip(universe, y, view)
}

/// Status of a claim within a view.
pub fn claim_status(
    universe: &NftUniverse,
    claim: &RedemptionClaim,
    view: &BTreeSet<NftId>,
) -> ClaimStatus {
    let mut verdicts: Vec<(NftId, SettleVerdict)> = view
        .iter()
        .filter_map(|id| universe.get(id))
        .filter_map(|n| match settles(universe, n, claim, view) {
            SettleVerdict::NotSettling => None,
            v => Some((n.id(), v)),
        })
        .collect();
    verdicts.sort();
    if let Some((_, verdict)) = verdicts.first() {
        return match verdict {
            SettleVerdict::Accepted => ClaimStatus::SettledAccepted,
            SettleVerdict::Rejected => ClaimStatus::SettledRejected,
            SettleVerdict::NotSettling => unreachable!(),
        };
    }
    if claim_valid(universe, claim, view) {
        ClaimStatus::ValidOutstanding
    } else {
        ClaimStatus::Invalid
    }
}

/// All claims in the view together with their status, id-ordered.
pub fn claims_with_status(
    universe: &NftUniverse,
    view: &BTreeSet<NftId>,
) -> Vec<(RedemptionClaim, ClaimStatus)> {
    let mut out: Vec<(RedemptionClaim, ClaimStatus)> = view
        .iter()
        .filter_map(|id| universe.get(id))
        .filter_map(|n| as_claim(universe, n))
        .map(|c| {
            let s = claim_status(universe, &c, view);
            (c, s)
        })
        .collect();
    out.sort_by_key(|(c, _)| c.id);
    out
}

/// Valid claims with no settling transfer in the view.
pub fn outstanding_claims(universe: &NftUniverse, view: &BTreeSet<NftId>) -> Vec<RedemptionClaim> {
    claims_with_status(universe, view)
        .into_iter()
        .filter(|(_, s)| *s == ClaimStatus::ValidOutstanding)
        .map(|(c, _)| c)
        .collect()
}

/// Valid outstanding claims whose requested coin is exactly `target`;
/// these freeze `target` for its holder.
pub fn claims_against(
    universe: &NftUniverse,
    target: &NftId,
    view: &BTreeSet<NftId>,
) -> Vec<RedemptionClaim> {
    outstanding_claims(universe, view)
        .into_iter()
        .filter(|c| c.target == Some(*target))
        .collect()
}

/// Guard of the coin protocol over a view (the union of a configuration).
///
/// Admits a fresh coin creation (issuer = creator, index continuing the
/// issuer's own numbering) or a transfer of a held coin, subject to the
/// freeze rule: a coin with a valid outstanding claim against it may move
/// only as the accepted settlement of that claim. With several claims
/// against one coin, the lowest claim hash wins the settlement.
pub fn sc_guard_view(
    universe: &NftUniverse,
    view: &BTreeSet<NftId>,
    own_len: usize,
    actor: AgentId,
    proposed: &Nft,
) -> Result<(), Reject> {
    if !is_coin(universe, proposed) {
        return Err(Reject::BadObjectShape);
    }
    match proposed.payload() {
        Payload::Object(s) => {
            if proposed.sender() != actor
                || proposed.recipient() != actor
                || proposed.metadata() != &Metadata::Initial
            {
                return Err(Reject::BadFreshCoin);
            }
            // Coin numbering continues the issuer's own block numbering,
            // whose first slot is the (coin-less) initial block.
            let expected = own_len as u64 + 2;
            if coin_index(s) != Some(expected) {
                return Err(Reject::BadFreshCoin);
            }
            Ok(())
        }
        Payload::Transfer(pid) => {
            nt_guard(universe, view, actor, proposed)?;
            let frozen_by = claims_against(universe, pid, view);
            if let Some(chosen) = frozen_by.first() {
                // id-ordered; the first claim is the designated one
                let settling = proposed.metadata() == &Metadata::Settle(chosen.id)
                    && settles(universe, proposed, chosen, view) == SettleVerdict::Accepted;
                if !settling {
                    return Err(Reject::CoinFrozen);
                }
            }
            Ok(())
        }
    }
}

/// Configuration-level coin guard.
pub fn sc_guard(
    universe: &NftUniverse,
    config: &ScConfig,
    actor: AgentId,
    proposed: &Nft,
) -> Result<(), Reject> {
    let own_len = config.local(actor).map(|s| s.len()).unwrap_or(0);
    sc_guard_view(universe, &config_union(config), own_len, actor, proposed)
}

pub fn config_consistent(universe: &NftUniverse, config: &ScConfig) -> bool {
    find_doublespend(universe, &config_union(config)).is_none()
}

pub fn config_complete(universe: &NftUniverse, config: &ScConfig) -> bool {
    is_complete(universe, &config_union(config))
}

/// The prefix order on coin configurations: both endpoints must be
/// consistent and complete, and each agent's sequence in `a` must be a
/// prefix of its sequence in `b`.
pub fn sc_order(universe: &NftUniverse, a: &ScConfig, b: &ScConfig) -> bool {
    if a.agent_set() != b.agent_set() {
        return false;
    }
    let ok = |c: &ScConfig| config_consistent(universe, c) && config_complete(universe, c);
    if !ok(a) || !ok(b) {
        return false;
    }
    a.iter().all(|(p, s)| {
        b.local(p)
            .map(|t| t.len() >= s.len() && t[..s.len()] == s[..])
            .unwrap_or(false)
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RecoveryError {
    #[error("evidence does not prove a doublespend of this coin's object")]
    EvidenceInvalid,
    #[error("the doublespender does not precede the payer on the coin's provenance")]
    CulpritNotUpstream,
    #[error("coin construction failed: {0}")]
    Nft(#[from] NftError),
}

/// Build the recovery transfer of a doublespent coin back to its payer.
///
/// When a coin a payee received turns out to fork upstream, the payee
/// returns it to the payer carrying the fork evidence; a correct payer
/// honors the return with a replacement coin. The evidence must prove a
/// fork of this coin's object signed by an agent strictly preceding the
/// payer on the coin's provenance.
pub fn recovery_claim(
    universe: &mut NftUniverse,
    signer: &dyn Signer,
    payee: AgentId,
    payer: AgentId,
    coin: &Nft,
    evidence: &DoublespendEvidence,
) -> Result<Nft, RecoveryError> {
    if !evidence.verify(universe) {
        return Err(RecoveryError::EvidenceInvalid);
    }
    let fork_object = universe
        .get(&evidence.fork_a)
        .map(|n| n.object_id())
        .ok_or(RecoveryError::EvidenceInvalid)?;
    if fork_object != coin.object_id() {
        return Err(RecoveryError::EvidenceInvalid);
    }
    if coin.recipient() != payee || coin.sender() != payer {
        return Err(RecoveryError::EvidenceInvalid);
    }
    let prov = provenance(universe, coin).map_err(|_| RecoveryError::EvidenceInvalid)?;
    let payer_pos = prov.len() - 2; // sender of the final hop
    if !prov[..payer_pos].contains(&evidence.culprit) {
        return Err(RecoveryError::CulpritNotUpstream);
    }
    let nft = universe.make_transfer(
        signer,
        coin,
        Metadata::Recovery {
            fork_a: evidence.fork_a,
            fork_b: evidence.fork_b,
        },
        payee,
        payer,
    )?;
    Ok(nft)
}

/// Liveness classes of the coin protocol: one per agent, plus one per
/// outstanding redemption claim obligating its issuer to respond.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum ScClass {
    Agent(AgentId),
    Settle { obligor: AgentId, claim: NftId },
}

impl fmt::Display for ScClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScClass::Agent(a) => write!(f, "{a}"),
            ScClass::Settle { obligor, claim } => {
                write!(f, "{obligor}-Transfers settling {claim}")
            }
        }
    }
}

/// The coin protocol as a transition system.
pub struct ScSystem {
    pub agents: BTreeSet<AgentId>,
    pub universe: RefCell<NftUniverse>,
    pub signer: MockSigner,
}

impl ScSystem {
    pub fn new(agents: BTreeSet<AgentId>) -> Self {
        ScSystem {
            agents,
            universe: RefCell::new(NftUniverse::new()),
            signer: MockSigner,
        }
    }

    /// The fresh coin the guard expects `actor` to create next.
    pub fn next_fresh_coin(&self, config: &ScConfig, actor: AgentId) -> Nft {
        let own_len = config.local(actor).map(|s| s.len()).unwrap_or(0);
        self.universe
            .borrow_mut()
            .make_object(&self.signer, actor, &coin_string(own_len as u64 + 2))
            .expect("mock signer")
    }
}

impl Dmts for ScSystem {
    type Local = ScLocal;
    type Action = Nft;
    type Class = ScClass;

    fn agents(&self) -> &BTreeSet<AgentId> {
        &self.agents
    }

    fn initial_local(&self) -> ScLocal {
        Vec::new()
    }

    fn apply_local(&self, state: &ScLocal, _actor: AgentId, action: &Nft) -> ScLocal {
        let mut next = state.clone();
        next.push(action.id());
        next
    }

    fn admits(&self, config: &ScConfig, actor: AgentId, action: &Nft) -> Result<(), Reject> {
        sc_guard(&self.universe.borrow(), config, actor, action)
    }

    fn enumerate(&self, config: &ScConfig, actor: AgentId, caps: &EnumCaps) -> Vec<Nft> {
        let mut out = Vec::new();
        let own_len = config.local(actor).map(|s| s.len()).unwrap_or(0);
        if own_len as u32 >= caps.max_own_index {
            return out;
        }
        let view = config_union(config);
        let universe = self.universe.borrow();
        let held: Vec<Nft> = view
            .iter()
            .filter_map(|id| universe.get(id).cloned())
            .filter(|n| n.recipient() == actor && is_tip(&universe, &n.id(), &view))
            .collect();
        let outstanding = if caps.allow_redeem {
            outstanding_claims(&universe, &view)
        } else {
            Vec::new()
        };
        drop(universe);

        out.push(self.next_fresh_coin(config, actor));
        let mut universe = self.universe.borrow_mut();
        for payload in &held {
            for meta in &caps.plain_metadata {
                for q in &self.agents {
                    if let Ok(t) = universe.make_transfer(
                        &self.signer,
                        payload,
                        Metadata::Plain(meta.clone()),
                        actor,
                        *q,
                    ) {
                        out.push(t);
                    }
                }
            }
            if caps.allow_redeem {
                if let Some(obligor) = issuer(&universe, payload) {
                    if let Ok(t) = universe.make_transfer(
                        &self.signer,
                        payload,
                        Metadata::Redeem(None),
                        actor,
                        obligor,
                    ) {
                        out.push(t);
                    }
                }
            }
        }
        for claim in &outstanding {
            if claim.obligor != actor {
                continue;
            }
            // accepted settlement when the target is held, rejection otherwise
            match claim.target {
                Some(y) => {
                    if let Some(target) = universe.get(&y).cloned() {
                        if target.recipient() == actor {
                            if let Ok(t) = universe.make_transfer(
                                &self.signer,
                                &target,
                                Metadata::Settle(claim.id),
                                actor,
                                claim.claimant,
                            ) {
                                out.push(t);
                            }
                        }
                    }
                    if let Some(claim_nft) = universe.get(&claim.id).cloned() {
                        if let Ok(t) = universe.make_transfer(
                            &self.signer,
                            &claim_nft,
                            Metadata::Settle(claim.id),
                            actor,
                            claim.claimant,
                        ) {
                            out.push(t);
                        }
                    }
                }
                None => {}
            }
        }
        drop(universe);
        let admitted: Vec<Nft> = out
            .into_iter()
            .filter(|a| self.admits(config, actor, a).is_ok())
            .collect();
        admitted
    }

    fn action_classes(&self, config: &ScConfig, actor: AgentId, action: &Nft) -> Vec<ScClass> {
        let mut classes = vec![ScClass::Agent(actor)];
        if let Metadata::Settle(claim_id) = action.metadata() {
            let universe = self.universe.borrow();
            let view = config_union(config);
            if let Some(claim_nft) = universe.get(claim_id) {
                if let Some(claim) = as_claim(&universe, claim_nft) {
                    if settles(&universe, action, &claim, &view) != SettleVerdict::NotSettling {
                        classes.push(ScClass::Settle {
                            obligor: actor,
                            claim: *claim_id,
                        });
                    }
                }
            }
        }
        classes
    }

    fn enabled_classes(&self, config: &ScConfig) -> BTreeSet<ScClass> {
        let mut classes: BTreeSet<ScClass> = config.agents().map(ScClass::Agent).collect();
        let universe = self.universe.borrow();
        let view = config_union(config);
        for claim in outstanding_claims(&universe, &view) {
            classes.insert(ScClass::Settle {
                obligor: claim.obligor,
                claim: claim.id,
            });
        }
        classes
    }

    fn infer_action(
        &self,
        _config: &ScConfig,
        _actor: AgentId,
        before: &ScLocal,
        after: &ScLocal,
    ) -> Option<Nft> {
        if after.len() != before.len() + 1 || !after.starts_with(before) {
            return None;
        }
        self.universe.borrow().get(after.last()?).cloned()
    }

    fn describe(&self, actor: AgentId, action: &Nft) -> String {
        match action.metadata() {
            Metadata::Initial => format!("{actor}-Creates-{}", action.id()),
            Metadata::Redeem(_) => format!("{actor}-Claims-{}", action.id()),
            Metadata::Settle(c) => format!("{actor}-Settles-{c}"),
            Metadata::Recovery { .. } => format!("{actor}-Recovers-{}", action.id()),
            Metadata::Plain(_) => format!("{actor}-Transfers-{}", action.id()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agents(n: u32) -> BTreeSet<AgentId> {
        (0..n).map(AgentId).collect()
    }

    struct Fixture {
        sys: ScSystem,
        config: ScConfig,
    }

    impl Fixture {
        fn new(n: u32) -> Self {
            let sys = ScSystem::new(agents(n));
            let config = sys.initial_config();
            Fixture { sys, config }
        }

        /// Append an action after asserting the guard admits it.
        fn step(&mut self, actor: AgentId, action: &Nft) {
            self.sys
                .admits(&self.config, actor, action)
                .unwrap_or_else(|e| panic!("guard rejected {}: {e}", action.id()));
            self.config = self.sys.apply_step(&self.config, actor, action);
        }

        fn create_coin(&mut self, actor: AgentId) -> Nft {
            let coin = self.sys.next_fresh_coin(&self.config, actor);
            self.step(actor, &coin);
            coin
        }

        fn transfer(&mut self, payload: &Nft, meta: Metadata, from: AgentId, to: AgentId) -> Nft {
            let t = self
                .sys
                .universe
                .borrow_mut()
                .make_transfer(&MockSigner, payload, meta, from, to)
                .unwrap();
            self.step(from, &t);
            t
        }

        fn view(&self) -> BTreeSet<NftId> {
            config_union(&self.config)
        }
    }

    #[test]
    fn coin_strings_parse() {
        assert_eq!(coin_index("coin_2"), Some(2));
        assert_eq!(coin_index("coin_0"), Some(0));
        assert_eq!(coin_index("coin_"), None);
        assert_eq!(coin_index("coin_01"), None);
        assert_eq!(coin_index("note_2"), None);
        assert_eq!(coin_string(7), "coin_7");
    }

    #[test]
    fn creates_enforce_issuer_numbering() {
        let mut f = Fixture::new(2);
        let [p, q] = [AgentId(0), AgentId(1)];
        let c1 = f.create_coin(p); // coin_2
        assert!(is_coin_object(&c1));
        let c2 = f.create_coin(p); // coin_3
        assert_ne!(c1.id(), c2.id());

        // Out-of-order index is rejected.
        let bad = f
            .sys
            .universe
            .borrow_mut()
            .make_object(&MockSigner, q, "coin_9")
            .unwrap();
        assert_eq!(f.sys.admits(&f.config, q, &bad), Err(Reject::BadFreshCoin));

        // Non-coin objects are not part of the coin protocol.
        let note = f
            .sys
            .universe
            .borrow_mut()
            .make_object(&MockSigner, q, "note")
            .unwrap();
        assert_eq!(f.sys.admits(&f.config, q, &note), Err(Reject::BadObjectShape));
    }

    #[test]
    fn claim_lifecycle_accept() {
        let mut f = Fixture::new(2);
        let [p, q] = [AgentId(0), AgentId(1)];
        // q issues a coin and pays p; p issues a coin and pays q.
        let qc = f.create_coin(q);
        let qc_at_p = f.transfer(&qc, Metadata::Plain("pay".into()), q, p);
        let pc = f.create_coin(p);
        let pc_at_q = f.transfer(&pc, Metadata::Plain("pay".into()), p, q);

        // p redeems its q-coin against the p-coin q holds.
        let claim_nft = f.transfer(&qc_at_p, Metadata::Redeem(Some(pc_at_q.id())), p, q);
        let claim = as_claim(&f.sys.universe.borrow(), &claim_nft).unwrap();
        assert_eq!(claim.claimant, p);
        assert_eq!(claim.obligor, q);
        assert!(!claim.degenerate);
        {
            let u = f.sys.universe.borrow();
            assert!(claim_valid(&u, &claim, &f.view()));
            assert_eq!(claim_status(&u, &claim, &f.view()), ClaimStatus::ValidOutstanding);
            assert_eq!(outstanding_claims(&u, &f.view()).len(), 1);
        }

        // The requested coin is frozen: q cannot move it elsewhere...
        let sneak = f
            .sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &pc_at_q, Metadata::Plain("sneak".into()), q, q)
            .unwrap();
        assert_eq!(f.sys.admits(&f.config, q, &sneak), Err(Reject::CoinFrozen));

        // ...but transferring it to the claimant as settlement is admitted.
        let settle = f.transfer(&pc_at_q, Metadata::Settle(claim_nft.id()), q, p);
        {
            let u = f.sys.universe.borrow();
            assert_eq!(settles(&u, &settle, &claim, &f.view()), SettleVerdict::Accepted);
            assert_eq!(claim_status(&u, &claim, &f.view()), ClaimStatus::SettledAccepted);
            assert!(outstanding_claims(&u, &f.view()).is_empty());
        }
    }

    #[test]
    fn claim_lifecycle_fresh_and_reject() {
        let mut f = Fixture::new(2);
        let [p, q] = [AgentId(0), AgentId(1)];
        let qc = f.create_coin(q);
        let qc_at_p = f.transfer(&qc, Metadata::Plain("pay".into()), q, p);

        // Fresh-coin claim: settled by minting and transferring a fresh q-coin.
        let claim_nft = f.transfer(&qc_at_p, Metadata::Redeem(None), p, q);
        let claim = as_claim(&f.sys.universe.borrow(), &claim_nft).unwrap();
        let fresh = f.create_coin(q);
        let settle = f.transfer(&fresh, Metadata::Settle(claim_nft.id()), q, p);
        {
            let u = f.sys.universe.borrow();
            assert!(is_fresh_coin_transfer(&u, &settle));
            assert_eq!(settles(&u, &settle, &claim, &f.view()), SettleVerdict::Accepted);
        }

        // Claim against a coin q no longer holds: q returns the claim coin.
        let pc = f.create_coin(p);
        let pc_at_q = f.transfer(&pc, Metadata::Plain("pay".into()), p, q);
        let pc_elsewhere = f.transfer(&pc_at_q, Metadata::Plain("spent".into()), q, p);
        let claim2_nft = f.transfer(&settle, Metadata::Redeem(Some(pc_at_q.id())), p, q);
        let claim2 = as_claim(&f.sys.universe.borrow(), &claim2_nft).unwrap();
        let reject = f.transfer(&claim2_nft, Metadata::Settle(claim2_nft.id()), q, p);
        {
            let u = f.sys.universe.borrow();
            assert_eq!(settles(&u, &reject, &claim2, &f.view()), SettleVerdict::Rejected);
            assert_eq!(claim_status(&u, &claim2, &f.view()), ClaimStatus::SettledRejected);
        }
        let _ = pc_elsewhere;
    }

    #[test]
    fn claim_invalidated_when_coin_moves_on() {
        let mut f = Fixture::new(3);
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        let qc = f.create_coin(q);
        let qc_at_p = f.transfer(&qc, Metadata::Plain("pay".into()), q, p);
        // p spends the q-coin onward to r instead of holding it...
        let at_r = f.transfer(&qc_at_p, Metadata::Plain("pay".into()), p, r);
        // ...so a claim p previously could have made is now impossible: p
        // is no longer the holder.
        let stale = f
            .sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &qc_at_p, Metadata::Redeem(None), p, q)
            .unwrap();
        assert_eq!(f.sys.admits(&f.config, p, &stale), Err(Reject::NotHolder));

        // A claim by r stays valid until the claim coin moves again.
        let claim_nft = f.transfer(&at_r, Metadata::Redeem(None), r, q);
        let claim = as_claim(&f.sys.universe.borrow(), &claim_nft).unwrap();
        {
            let u = f.sys.universe.borrow();
            assert!(claim_valid(&u, &claim, &f.view()));
        }
        let fresh = f.create_coin(q);
        let _settle = f.transfer(&fresh, Metadata::Settle(claim_nft.id()), q, r);
        // The settled claim is no longer outstanding.
        let u = f.sys.universe.borrow();
        assert!(outstanding_claims(&u, &f.view()).is_empty());
    }

    #[test]
    fn degenerate_self_claim_is_flagged() {
        let mut f = Fixture::new(1);
        let p = AgentId(0);
        let pc = f.create_coin(p);
        let claim_nft = f.transfer(&pc, Metadata::Redeem(None), p, p);
        let claim = as_claim(&f.sys.universe.borrow(), &claim_nft).unwrap();
        assert!(claim.degenerate);
        let u = f.sys.universe.borrow();
        assert!(claim_valid(&u, &claim, &f.view()));
    }

    #[test]
    fn sc_order_is_prefix_on_consistent_configs() {
        let mut f = Fixture::new(2);
        let [p, q] = [AgentId(0), AgentId(1)];
        let before = f.config.clone();
        let u0 = f.sys.universe.borrow().clone();
        assert!(sc_order(&u0, &before, &before));

        f.create_coin(p);
        let after = f.config.clone();
        let u = f.sys.universe.borrow().clone();
        assert!(sc_order(&u, &before, &after));
        assert!(!sc_order(&u, &after, &before));

        // Incomparable: q extends separately.
        let mut g = Fixture::new(2);
        g.sys.universe = RefCell::new(u.clone());
        g.config = before.clone();
        g.create_coin(q);
        let other = g.config.clone();
        let u2 = g.sys.universe.borrow().clone();
        assert!(!sc_order(&u2, &after, &other));

        // An inconsistent endpoint breaks the order.
        let mut u3 = u.clone();
        let coin = u3.make_object(&MockSigner, p, "coin_2").unwrap();
        let f1 = u3
            .make_transfer(&MockSigner, &coin, Metadata::Plain("a".into()), p, q)
            .unwrap();
        let f2 = u3
            .make_transfer(&MockSigner, &coin, Metadata::Plain("b".into()), p, p)
            .unwrap();
        let forked = after
            .with_local(p, vec![coin.id(), f1.id(), f2.id()]);
        assert!(!sc_order(&u3, &before, &forked));
    }

    #[test]
    fn recovery_claim_checks_evidence_and_position() {
        let mut u = NftUniverse::new();
        let [z, m, b] = [AgentId(0), AgentId(1), AgentId(2)];
        // z forks its own coin: one branch to m (who pays b), one to z itself.
        let coin = u.make_object(&MockSigner, z, "coin_2").unwrap();
        let fork_a = u
            .make_transfer(&MockSigner, &coin, Metadata::Plain("to m".into()), z, m)
            .unwrap();
        let fork_b = u
            .make_transfer(&MockSigner, &coin, Metadata::Plain("again".into()), z, z)
            .unwrap();
        let paid = u
            .make_transfer(&MockSigner, &fork_a, Metadata::Plain("pay".into()), m, b)
            .unwrap();
        let ev = DoublespendEvidence {
            fork_a: fork_a.id(),
            fork_b: fork_b.id(),
            culprit: z,
        };
        assert!(ev.verify(&u));

        let rec = recovery_claim(&mut u, &MockSigner, b, m, &paid, &ev).unwrap();
        assert_eq!(rec.recipient(), m);
        assert!(matches!(rec.metadata(), Metadata::Recovery { .. }));

        // Culprit must strictly precede the payer: recovering straight
        // from the equivocator is not a recovery.
        let err = recovery_claim(&mut u, &MockSigner, m, z, &fork_a, &ev).unwrap_err();
        assert_eq!(err, RecoveryError::CulpritNotUpstream);

        // Evidence about a different object is rejected.
        let other = u.make_object(&MockSigner, z, "coin_3").unwrap();
        let other_t = u
            .make_transfer(&MockSigner, &other, Metadata::Plain("x".into()), z, m)
            .unwrap();
        let other_paid = u
            .make_transfer(&MockSigner, &other_t, Metadata::Plain("y".into()), m, b)
            .unwrap();
        let err = recovery_claim(&mut u, &MockSigner, b, m, &other_paid, &ev).unwrap_err();
        assert_eq!(err, RecoveryError::EvidenceInvalid);
    }

    #[test]
    fn tie_break_picks_lowest_claim_hash() {
        let mut f = Fixture::new(3);
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        // q pays both p and r with its coins; p and r each hold a q-coin.
        let qc1 = f.create_coin(q);
        let qc1_at_p = f.transfer(&qc1, Metadata::Plain("pay".into()), q, p);
        let qc2 = f.create_coin(q);
        let qc2_at_r = f.transfer(&qc2, Metadata::Plain("pay".into()), q, r);
        // p issues a coin and pays q: the shared target.
        let pc = f.create_coin(p);
        let target = f.transfer(&pc, Metadata::Plain("pay".into()), p, q);

        // Both p and r claim against the same target coin.
        let claim_p = f.transfer(&qc1_at_p, Metadata::Redeem(Some(target.id())), p, q);
        let claim_r = f.transfer(&qc2_at_r, Metadata::Redeem(Some(target.id())), r, q);
        let chosen = if claim_p.id() <= claim_r.id() {
            (&claim_p, p)
        } else {
            (&claim_r, r)
        };
        let loser = if chosen.1 == p {
            (&claim_r, r)
        } else {
            (&claim_p, p)
        };

        // Settling the losing claim with the target is frozen out.
        let to_loser = f
            .sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &target, Metadata::Settle(loser.0.id()), q, loser.1)
            .unwrap();
        assert_eq!(f.sys.admits(&f.config, q, &to_loser), Err(Reject::CoinFrozen));

        // Settling the designated claim is admitted.
        let settle = f.transfer(&target, Metadata::Settle(chosen.0.id()), q, chosen.1);
        let u = f.sys.universe.borrow();
        let parsed = as_claim(&u, chosen.0).unwrap();
        assert_eq!(settles(&u, &settle, &parsed, &f.view()), SettleVerdict::Accepted);
    }
}
