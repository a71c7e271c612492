//! Signed transfer records ("NFTs") with content-addressed identity.
//!
//! An NFT is either an *object* — a string turned into a held asset by its
//! creator — or a *transfer* that passes a previously received NFT on to a
//! new recipient. Transfers reference their payload by hash; the full
//! history is resolved through the [`NftUniverse`], which interns every
//! record ever constructed in a run. Identity is the SHA-256 hash of the
//! canonical length-prefixed encoding of (payload, metadata, sender,
//! recipient); signatures attest that encoding's hash and never enter it.
//!
//! The *provenance* of an NFT is the sequence of recipients along its
//! history. Two NFTs of the same object are consistent when one provenance
//! is a prefix of the other; the first divergence of an inconsistent pair
//! names the doublespender, since both diverging transfers carry the same
//! signer.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mts::{AgentId, Config, Dmts, EnumCaps, Reject};

/// Content hash identifying an NFT.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NftId(pub [u8; 32]);

impl NftId {
    pub fn to_hex(self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<NftId> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16)?;
            let lo = (chunk[1] as char).to_digit(16)?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Some(NftId(out))
    }
}

impl fmt::Debug for NftId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NftId({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for NftId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

impl Serialize for NftId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for NftId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        NftId::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad NFT id hex"))
    }
}

/// Transfer metadata. `Initial` is the reserved marker of object records;
/// `Redeem` initiates a redemption claim (`None` requests a fresh coin);
/// `Settle` and `Recovery` reference the claim or doublespend evidence a
/// transfer responds to.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metadata {
    Initial,
    Plain(String),
    Redeem(Option<NftId>),
    Settle(NftId),
    Recovery { fork_a: NftId, fork_b: NftId },
}

impl Metadata {
    fn canonical_bytes(&self, out: &mut Vec<u8>) {
        match self {
            Metadata::Initial => out.push(0),
            Metadata::Plain(s) => {
                out.push(1);
                out.extend((s.len() as u32).to_be_bytes());
                out.extend(s.as_bytes());
            }
            Metadata::Redeem(None) => out.push(2),
            Metadata::Redeem(Some(id)) => {
                out.push(3);
                out.extend(id.0);
            }
            Metadata::Settle(id) => {
                out.push(4);
                out.extend(id.0);
            }
            Metadata::Recovery { fork_a, fork_b } => {
                out.push(5);
                out.extend(fork_a.0);
                out.extend(fork_b.0);
            }
        }
    }
}

/// Object payloads carry the raw string; transfer payloads reference the
/// passed-on NFT by hash.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Object(String),
    Transfer(NftId),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Signature(pub [u8; 32]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex: String = self.0.iter().take(6).map(|b| format!("{b:02x}")).collect();
        write!(f, "Sig({hex})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum NftError {
    #[error("no signing capability for this agent")]
    SignerUnavailable,
    #[error("sender is not the current recipient of the payload")]
    NotCurrentRecipient,
    #[error("the 'initial' metadata marker is reserved for objects")]
    ReservedMetadata,
    #[error("payload is not interned in this universe")]
    UnknownPayload,
    #[error("history element missing from the universe")]
    MissingHistory,
    #[error("signature does not verify")]
    BadSignature,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HolderError {
    #[error("the object's records in the set fork")]
    InconsistentSet,
    #[error("object not present in the set")]
    ObjectUnknown,
}

/// A signed object-or-transfer record. `object` and `depth` are derived at
/// construction and excluded from the content hash.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Nft {
    payload: Payload,
    metadata: Metadata,
    sender: AgentId,
    recipient: AgentId,
    signature: Signature,
    id: NftId,
    object: NftId,
    depth: u32,
}

impl Nft {
    pub fn id(&self) -> NftId {
        self.id
    }
    /// Hash of the object record at the bottom of this NFT's history.
    pub fn object_id(&self) -> NftId {
        self.object
    }
    /// History length: 1 for objects, payload depth + 1 for transfers.
    pub fn depth(&self) -> u32 {
        self.depth
    }
    pub fn payload(&self) -> &Payload {
        &self.payload
    }
    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }
    pub fn sender(&self) -> AgentId {
        self.sender
    }
    pub fn recipient(&self) -> AgentId {
        self.recipient
    }
    pub fn signature(&self) -> Signature {
        self.signature
    }
    pub fn is_object(&self) -> bool {
        matches!(self.payload, Payload::Object(_))
    }

    /// Canonical length-prefixed encoding; the content hash covers exactly
    /// these bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        match &self.payload {
            Payload::Object(s) => {
                out.push(0);
                out.extend((s.len() as u32).to_be_bytes());
                out.extend(s.as_bytes());
            }
            Payload::Transfer(id) => {
                out.push(1);
                out.extend(id.0);
            }
        }
        self.metadata.canonical_bytes(&mut out);
        out.extend(self.sender.0.to_be_bytes());
        out.extend(self.recipient.0.to_be_bytes());
        out
    }
}

fn content_hash(payload: &Payload, metadata: &Metadata, sender: AgentId, recipient: AgentId) -> NftId {
    let probe = Nft {
        payload: payload.clone(),
        metadata: metadata.clone(),
        sender,
        recipient,
        signature: Signature([0; 32]),
        id: NftId([0; 32]),
        object: NftId([0; 32]),
        depth: 0,
    };
    let mut h = Sha256::new();
    h.update(probe.canonical_bytes());
    NftId(h.finalize().into())
}

/// Signing capability. The default [`MockSigner`] is deterministic: an
/// identity-tagged hash over the content hash, good enough for simulation
/// where unforgeability is assumed rather than enforced.
pub trait Signer {
    fn sign(&self, signer: AgentId, content: &NftId) -> Result<Signature, NftError>;
    fn verify(&self, signer: AgentId, content: &NftId, sig: &Signature) -> bool;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MockSigner;

impl Signer for MockSigner {
    fn sign(&self, signer: AgentId, content: &NftId) -> Result<Signature, NftError> {
        let mut h = Sha256::new();
        h.update(b"grassroots-mock-sig");
        h.update(signer.0.to_be_bytes());
        h.update(content.0);
        Ok(Signature(h.finalize().into()))
    }

    fn verify(&self, signer: AgentId, content: &NftId, sig: &Signature) -> bool {
        self.sign(signer, content).map(|s| s == *sig).unwrap_or(false)
    }
}

/// Append-only content-addressed pool of every NFT constructed in a run.
/// Transfers may only be interned after their payload, so history
/// resolution inside the universe is total.
#[derive(Clone, Debug, Default)]
pub struct NftUniverse {
    items: BTreeMap<NftId, Nft>,
}

impl NftUniverse {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &NftId) -> Option<&Nft> {
        self.items.get(id)
    }

    pub fn contains(&self, id: &NftId) -> bool {
        self.items.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Nft> {
        self.items.values()
    }

    /// Turn a string into an object NFT held by its creator.
    pub fn make_object(
        &mut self,
        signer: &dyn Signer,
        creator: AgentId,
        payload: &str,
    ) -> Result<Nft, NftError> {
        let payload = Payload::Object(payload.to_owned());
        let metadata = Metadata::Initial;
        let id = content_hash(&payload, &metadata, creator, creator);
        let signature = signer.sign(creator, &id)?;
        let nft = Nft {
            payload,
            metadata,
            sender: creator,
            recipient: creator,
            signature,
            id,
            object: id,
            depth: 1,
        };
        self.items.insert(id, nft.clone());
        Ok(nft)
    }

    /// Transfer a held NFT onward, extending its provenance by the
    /// recipient. The sender must be the payload's current recipient and
    /// the metadata must not be the reserved object marker.
    pub fn make_transfer(
        &mut self,
        signer: &dyn Signer,
        payload: &Nft,
        metadata: Metadata,
        sender: AgentId,
        recipient: AgentId,
    ) -> Result<Nft, NftError> {
        if metadata == Metadata::Initial {
            return Err(NftError::ReservedMetadata);
        }
        if payload.recipient != sender {
            return Err(NftError::NotCurrentRecipient);
        }
        if !self.contains(&payload.id) {
            return Err(NftError::UnknownPayload);
        }
        let p = Payload::Transfer(payload.id);
        let id = content_hash(&p, &metadata, sender, recipient);
        let signature = signer.sign(sender, &id)?;
        let nft = Nft {
            payload: p,
            metadata,
            sender,
            recipient,
            signature,
            id,
            object: payload.object,
            depth: payload.depth + 1,
        };
        self.items.insert(id, nft.clone());
        Ok(nft)
    }

    /// Intern an externally constructed NFT (e.g. replayed from a log),
    /// re-deriving and checking its content hash and cached fields.
    pub fn intern_checked(
        &mut self,
        signer: &dyn Signer,
        payload: Payload,
        metadata: Metadata,
        sender: AgentId,
        recipient: AgentId,
        signature: Signature,
    ) -> Result<Nft, NftError> {
        let id = content_hash(&payload, &metadata, sender, recipient);
        if !signer.verify(sender, &id, &signature) {
            return Err(NftError::BadSignature);
        }
        let (object, depth) = match &payload {
            Payload::Object(_) => (id, 1),
            Payload::Transfer(pid) => {
                let p = self.get(pid).ok_or(NftError::UnknownPayload)?;
                (p.object, p.depth + 1)
            }
        };
        let nft = Nft {
            payload,
            metadata,
            sender,
            recipient,
            signature,
            id,
            object,
            depth,
        };
        self.items.insert(id, nft.clone());
        Ok(nft)
    }
}

/// The history of an NFT: object first, the argument last, each element
/// the payload of the next.
pub fn history<'a>(universe: &'a NftUniverse, x: &Nft) -> Result<Vec<&'a Nft>, NftError> {
    let mut chain = Vec::with_capacity(x.depth as usize);
    let mut cur = universe.get(&x.id()).ok_or(NftError::MissingHistory)?;
    loop {
        chain.push(cur);
        match &cur.payload {
            Payload::Object(_) => break,
            Payload::Transfer(pid) => {
                cur = universe.get(pid).ok_or(NftError::MissingHistory)?;
            }
        }
    }
    chain.reverse();
    Ok(chain)
}

/// The sequence of recipients along the history, starting at the creator.
pub fn provenance(universe: &NftUniverse, x: &Nft) -> Result<Vec<AgentId>, NftError> {
    Ok(history(universe, x)?.iter().map(|n| n.recipient).collect())
}

/// Two NFTs are consistent when their objects differ, or their provenances
/// are prefix-related.
pub fn consistent(universe: &NftUniverse, a: &Nft, b: &Nft) -> bool {
    if a.object != b.object {
        return true;
    }
    let pa = provenance(universe, a).expect("interned chain resolves");
    let pb = provenance(universe, b).expect("interned chain resolves");
    let n = pa.len().min(pb.len());
    pa[..n] == pb[..n]
}

/// Evidence of a doublespend: two transfers of the same object at the
/// first point of provenance divergence, both signed by the culprit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoublespendEvidence {
    pub fork_a: NftId,
    pub fork_b: NftId,
    pub culprit: AgentId,
}

impl DoublespendEvidence {
    /// Re-derive the evidence invariants against a universe: the forks
    /// share an object, diverge, and are both signed by the culprit.
    pub fn verify(&self, universe: &NftUniverse) -> bool {
        let (Some(a), Some(b)) = (universe.get(&self.fork_a), universe.get(&self.fork_b)) else {
            return false;
        };
        a.object == b.object
            && !consistent(universe, a, b)
            && a.sender == self.culprit
            && b.sender == self.culprit
    }
}

/// A set is complete when it contains the full history of each element;
/// with hash-referenced payloads this reduces to payload membership.
pub fn is_complete(universe: &NftUniverse, xs: &BTreeSet<NftId>) -> bool {
    xs.iter().all(|id| match universe.get(id) {
        None => false,
        Some(nft) => match &nft.payload {
            Payload::Object(_) => true,
            Payload::Transfer(pid) => xs.contains(pid),
        },
    })
}

/// Search the set for an inconsistent pair and name the signer at the
/// first divergence. Returns None iff the set is pairwise consistent.
pub fn find_doublespend(
    universe: &NftUniverse,
    xs: &BTreeSet<NftId>,
) -> Option<DoublespendEvidence> {
    let mut by_object: BTreeMap<NftId, Vec<&Nft>> = BTreeMap::new();
    for id in xs {
        if let Some(nft) = universe.get(id) {
            by_object.entry(nft.object).or_default().push(nft);
        }
    }
    for group in by_object.values() {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if let Some(ev) = divergence(universe, a, b) {
                    return Some(ev);
                }
            }
        }
    }
    None
}

fn divergence(universe: &NftUniverse, a: &Nft, b: &Nft) -> Option<DoublespendEvidence> {
    let ha = history(universe, a).expect("interned chain resolves");
    let hb = history(universe, b).expect("interned chain resolves");
    let n = ha.len().min(hb.len());
    for j in 0..n {
        if ha[j].recipient != hb[j].recipient {
            // First divergence. Both transfers extend the same prefix, so
            // their senders coincide: that agent signed both forks.
            debug_assert_eq!(ha[j].sender, hb[j].sender);
            return Some(DoublespendEvidence {
                fork_a: ha[j].id,
                fork_b: hb[j].id,
                culprit: ha[j].sender,
            });
        }
    }
    // Provenances prefix-related by recipients; distinct same-length chains
    // (same recipients, different metadata) still fork the object.
    if ha.len() == hb.len() && a.id != b.id {
        let j = first_chain_divergence(&ha, &hb)?;
        return Some(DoublespendEvidence {
            fork_a: ha[j].id,
            fork_b: hb[j].id,
            culprit: ha[j].sender,
        });
    }
    None
}

fn first_chain_divergence(ha: &[&Nft], hb: &[&Nft]) -> Option<usize> {
    (0..ha.len().min(hb.len())).find(|&j| ha[j].id != hb[j].id)
}

/// All objects whose records in the set fork.
pub fn forked_objects(universe: &NftUniverse, xs: &BTreeSet<NftId>) -> BTreeSet<NftId> {
    let mut by_object: BTreeMap<NftId, Vec<&Nft>> = BTreeMap::new();
    for id in xs {
        if let Some(nft) = universe.get(id) {
            by_object.entry(nft.object).or_default().push(nft);
        }
    }
    by_object
        .into_iter()
        .filter(|(_, group)| {
            group.iter().enumerate().any(|(i, a)| {
                group[i + 1..]
                    .iter()
                    .any(|b| divergence(universe, a, b).is_some())
            })
        })
        .map(|(object, _)| object)
        .collect()
}

/// The holder of an object within a set: the recipient of the
/// maximal-provenance NFT with that object. Well-defined whenever the
/// object's records in the set do not fork, even if the set is incomplete.
pub fn holder(
    universe: &NftUniverse,
    object: &NftId,
    xs: &BTreeSet<NftId>,
) -> Result<AgentId, HolderError> {
    let mut group: Vec<&Nft> = xs
        .iter()
        .filter_map(|id| universe.get(id))
        .filter(|n| n.object == *object)
        .collect();
    if group.is_empty() {
        return Err(HolderError::ObjectUnknown);
    }
    group.sort_by_key(|n| (n.depth, n.id));
    for (i, a) in group.iter().enumerate() {
        for b in &group[i + 1..] {
            if !consistent(universe, a, b) {
                return Err(HolderError::InconsistentSet);
            }
        }
    }
    Ok(group.last().expect("nonempty").recipient)
}

/// True when `x` has no extension inside `xs`: nothing in the set carries
/// `x` as payload. On a consistent set this is exactly "x is the
/// maximal-provenance record of its object"; on forked sets it means `x`
/// is the tip of its own branch.
pub fn is_tip(universe: &NftUniverse, x: &NftId, xs: &BTreeSet<NftId>) -> bool {
    !xs.iter().any(|id| {
        universe
            .get(id)
            .map(|n| n.payload == Payload::Transfer(*x))
            .unwrap_or(false)
    })
}

/// Guard of the base trade protocol: an agent may append an object it
/// creates for itself, or a transfer whose payload it currently holds.
///
/// Holding is checked as the tip rule: the payload must be present in the
/// configuration, addressed to the actor, and extended by nothing — which
/// on the consistent configurations of correct runs coincides with being
/// the holder of the object, and stays well-defined on forked views.
pub fn nt_guard(
    universe: &NftUniverse,
    view: &BTreeSet<NftId>,
    actor: AgentId,
    proposed: &Nft,
) -> Result<(), Reject> {
    if proposed.sender != actor {
        return Err(Reject::BadObjectShape);
    }
    match (&proposed.payload, &proposed.metadata) {
        (Payload::Object(_), Metadata::Initial) => {
            if proposed.recipient != actor {
                return Err(Reject::BadObjectShape);
            }
            Ok(())
        }
        (Payload::Object(_), _) | (Payload::Transfer(_), Metadata::Initial) => {
            Err(Reject::BadObjectShape)
        }
        (Payload::Transfer(pid), _) => {
            let payload = universe.get(pid).ok_or(Reject::BadObjectShape)?;
            if !view.contains(pid) {
                return Err(Reject::NotHolder);
            }
            if payload.recipient != actor {
                return Err(Reject::NotHolder);
            }
            if !is_tip(universe, pid, view) {
                return Err(Reject::NotHolder);
            }
            Ok(())
        }
    }
}

/// Union of the per-agent sequences of a configuration, as a set.
pub fn config_union(config: &Config<Vec<NftId>>) -> BTreeSet<NftId> {
    config.iter().flat_map(|(_, s)| s.iter().copied()).collect()
}

/// The base trade protocol as a transition system: local states are the
/// sequences of NFTs each agent has issued (creations and outgoing
/// transfers), extended one record per step under [`nt_guard`].
pub struct NtSystem {
    pub agents: BTreeSet<AgentId>,
    pub universe: std::cell::RefCell<NftUniverse>,
    pub signer: MockSigner,
}

impl NtSystem {
    pub fn new(agents: BTreeSet<AgentId>) -> Self {
        NtSystem {
            agents,
            universe: std::cell::RefCell::new(NftUniverse::new()),
            signer: MockSigner,
        }
    }
}

/// Liveness class: one class per agent (each agent individually is live).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct AgentClass(pub AgentId);

impl fmt::Display for AgentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Dmts for NtSystem {
    type Local = Vec<NftId>;
    type Action = Nft;
    type Class = AgentClass;

    fn agents(&self) -> &BTreeSet<AgentId> {
        &self.agents
    }

    fn initial_local(&self) -> Vec<NftId> {
        Vec::new()
    }

    fn apply_local(&self, state: &Vec<NftId>, _actor: AgentId, action: &Nft) -> Vec<NftId> {
        let mut next = state.clone();
        next.push(action.id());
        next
    }

    fn admits(&self, config: &Config<Vec<NftId>>, actor: AgentId, action: &Nft) -> Result<(), Reject> {
        let universe = self.universe.borrow();
        nt_guard(&universe, &config_union(config), actor, action)
    }

    fn enumerate(&self, config: &Config<Vec<NftId>>, actor: AgentId, caps: &EnumCaps) -> Vec<Nft> {
        let mut out = Vec::new();
        let own_len = config.local(actor).map(|s| s.len()).unwrap_or(0) as u32;
        if own_len >= caps.max_own_index {
            return out;
        }
        let mut universe = self.universe.borrow_mut();
        let view = config_union(config);
        for i in 0..caps.max_payload_strings {
            let nft = universe
                .make_object(&self.signer, actor, &format!("item_{i}"))
                .expect("mock signer");
            out.push(nft);
        }
        let held: Vec<Nft> = view
            .iter()
            .filter_map(|id| universe.get(id).cloned())
            .filter(|n| n.recipient == actor && is_tip(&universe, &n.id(), &view))
            .collect();
        for payload in held {
            for meta in &caps.plain_metadata {
                for q in &self.agents {
                    if let Ok(t) = universe.make_transfer(
                        &self.signer,
                        &payload,
                        Metadata::Plain(meta.clone()),
                        actor,
                        *q,
                    ) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    fn action_classes(
        &self,
        _config: &Config<Vec<NftId>>,
        actor: AgentId,
        _action: &Nft,
    ) -> Vec<AgentClass> {
        vec![AgentClass(actor)]
    }

    fn enabled_classes(&self, config: &Config<Vec<NftId>>) -> BTreeSet<AgentClass> {
        // Creation is always available, so every agent's class is enabled.
        config.agents().map(AgentClass).collect()
    }

    fn infer_action(
        &self,
        _config: &Config<Vec<NftId>>,
        _actor: AgentId,
        before: &Vec<NftId>,
        after: &Vec<NftId>,
    ) -> Option<Nft> {
        if after.len() != before.len() + 1 || !after.starts_with(before) {
            return None;
        }
        self.universe.borrow().get(after.last()?).cloned()
    }

    fn describe(&self, actor: AgentId, action: &Nft) -> String {
        if action.is_object() {
            format!("{actor}-Creates-{}", action.id())
        } else {
            format!("{actor}-Transfers-{}", action.id())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u32) -> Vec<AgentId> {
        (0..n).map(AgentId).collect()
    }

    fn set(items: &[&Nft]) -> BTreeSet<NftId> {
        items.iter().map(|n| n.id()).collect()
    }

    #[test]
    fn object_construction_and_shape() {
        let mut u = NftUniverse::new();
        let [p] = [AgentId(0)];
        let coin = u.make_object(&MockSigner, p, "coin_1").unwrap();
        assert!(coin.is_object());
        assert_eq!(coin.sender(), p);
        assert_eq!(coin.recipient(), p);
        assert_eq!(coin.depth(), 1);
        assert_eq!(provenance(&u, &coin).unwrap(), vec![p]);

        // Empty payload strings and arbitrary strings are both valid objects.
        let empty = u.make_object(&MockSigner, p, "").unwrap();
        assert!(empty.is_object());
        let poem = u.make_object(&MockSigner, p, "poem-text").unwrap();
        assert_ne!(poem.id(), coin.id());
    }

    #[test]
    fn transfer_extends_provenance() {
        let mut u = NftUniverse::new();
        let [p, q] = [AgentId(0), AgentId(1)];
        let obj = u.make_object(&MockSigner, p, "coin_1").unwrap();
        let t = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("PO 157".into()), p, q)
            .unwrap();
        assert_eq!(provenance(&u, &t).unwrap(), vec![p, q]);
        assert_eq!(t.depth(), 2);

        // Transfer by a non-recipient is rejected.
        let err = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("x".into()), q, p)
            .unwrap_err();
        assert_eq!(err, NftError::NotCurrentRecipient);

        // The object marker is reserved.
        let err = u
            .make_transfer(&MockSigner, &t, Metadata::Initial, q, p)
            .unwrap_err();
        assert_eq!(err, NftError::ReservedMetadata);
    }

    #[test]
    fn history_unfolds_payload_chain() {
        let mut u = NftUniverse::new();
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        let obj = u.make_object(&MockSigner, p, "coin_1").unwrap();
        assert_eq!(history(&u, &obj).unwrap().len(), 1);

        let t1 = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("a".into()), p, q)
            .unwrap();
        let t2 = u
            .make_transfer(&MockSigner, &t1, Metadata::Plain("b".into()), q, r)
            .unwrap();
        let h = history(&u, &t2).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h[0].id(), obj.id());
        assert_eq!(h[2].id(), t2.id());
        assert_eq!(
            provenance(&u, h.last().unwrap()).unwrap(),
            provenance(&u, &t2).unwrap()
        );
    }

    #[test]
    fn consistency_is_prefix_of_provenance() {
        let mut u = NftUniverse::new();
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        let obj = u.make_object(&MockSigner, p, "coin_1").unwrap();
        let to_q = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("a".into()), p, q)
            .unwrap();
        let onward = u
            .make_transfer(&MockSigner, &to_q, Metadata::Plain("b".into()), q, r)
            .unwrap();
        assert!(consistent(&u, &to_q, &onward)); // [p,q] prefix of [p,q,r]

        let to_r = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("c".into()), p, r)
            .unwrap();
        assert!(!consistent(&u, &to_q, &to_r)); // [p,q] vs [p,r]

        let other = u.make_object(&MockSigner, q, "coin_1").unwrap();
        assert!(consistent(&u, &obj, &other)); // different objects
    }

    #[test]
    fn doublespend_names_the_fork_signer() {
        let mut u = NftUniverse::new();
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        let obj = u.make_object(&MockSigner, p, "coin_1").unwrap();
        let to_q = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("a".into()), p, q)
            .unwrap();
        let to_r = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("b".into()), p, r)
            .unwrap();

        let ev = find_doublespend(&u, &set(&[&obj, &to_q, &to_r])).unwrap();
        assert_eq!(ev.culprit, p);
        assert!(ev.verify(&u));
        assert_eq!(
            BTreeSet::from([ev.fork_a, ev.fork_b]),
            BTreeSet::from([to_q.id(), to_r.id()])
        );

        assert!(find_doublespend(&u, &set(&[&obj, &to_q])).is_none());

        // Three-way fork still yields evidence naming p.
        let to_p2 = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("c".into()), p, p)
            .unwrap();
        let ev = find_doublespend(&u, &set(&[&obj, &to_q, &to_r, &to_p2])).unwrap();
        assert_eq!(ev.culprit, p);
    }

    #[test]
    fn holder_follows_maximal_provenance() {
        let mut u = NftUniverse::new();
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        let obj = u.make_object(&MockSigner, p, "coin_1").unwrap();
        assert_eq!(holder(&u, &obj.object_id(), &set(&[&obj])).unwrap(), p);

        let t1 = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("a".into()), p, q)
            .unwrap();
        let t2 = u
            .make_transfer(&MockSigner, &t1, Metadata::Plain("b".into()), q, r)
            .unwrap();
        assert_eq!(
            holder(&u, &obj.object_id(), &set(&[&obj, &t1, &t2])).unwrap(),
            r
        );

        let fork = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("c".into()), p, r)
            .unwrap();
        assert_eq!(
            holder(&u, &obj.object_id(), &set(&[&obj, &t1, &fork])),
            Err(HolderError::InconsistentSet)
        );
        assert_eq!(
            holder(&u, &t1.id(), &set(&[&obj])),
            Err(HolderError::ObjectUnknown)
        );
    }

    #[test]
    fn completeness_requires_history_membership() {
        let mut u = NftUniverse::new();
        let [p, q] = [AgentId(0), AgentId(1)];
        let obj = u.make_object(&MockSigner, p, "x").unwrap();
        let t = u
            .make_transfer(&MockSigner, &obj, Metadata::Plain("a".into()), p, q)
            .unwrap();
        assert!(is_complete(&u, &set(&[&obj, &t])));
        assert!(!is_complete(&u, &set(&[&t])));
        assert!(is_complete(&u, &BTreeSet::new()));
    }

    #[test]
    fn nt_guard_admits_creates_and_held_transfers() {
        let sys = NtSystem::new(ids(3).into_iter().collect());
        let [p, q, r] = [AgentId(0), AgentId(1), AgentId(2)];
        let c0 = sys.initial_config();

        let obj = sys
            .universe
            .borrow_mut()
            .make_object(&MockSigner, p, "thing")
            .unwrap();
        assert!(sys.admits(&c0, p, &obj).is_ok());
        let c1 = sys.apply_step(&c0, p, &obj);

        // p transfers what it holds.
        let t = sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &obj, Metadata::Plain("s".into()), p, q)
            .unwrap();
        assert!(sys.admits(&c1, p, &t).is_ok());
        let c2 = sys.apply_step(&c1, p, &t);

        // p re-transfers the object it already sent away: holder moved.
        let again = sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &obj, Metadata::Plain("z".into()), p, r)
            .unwrap();
        assert_eq!(sys.admits(&c2, p, &again), Err(Reject::NotHolder));

        // q transfers an object it never received in the configuration.
        let foreign = sys
            .universe
            .borrow_mut()
            .make_object(&MockSigner, q, "other")
            .unwrap();
        let bogus = sys
            .universe
            .borrow_mut()
            .make_transfer(&MockSigner, &foreign, Metadata::Plain("s".into()), q, r)
            .unwrap();
        assert_eq!(sys.admits(&c2, q, &bogus), Err(Reject::NotHolder));
    }

    #[test]
    fn canonical_bytes_are_stable_and_id_defining() {
        let mut u = NftUniverse::new();
        let p = AgentId(7);
        let a = u.make_object(&MockSigner, p, "coin_1").unwrap();
        let b = u.make_object(&MockSigner, p, "coin_1").unwrap();
        assert_eq!(a.id(), b.id());

        let mut h = Sha256::new();
        h.update(a.canonical_bytes());
        assert_eq!(NftId(h.finalize().into()), a.id());
        assert!(MockSigner.verify(p, &a.id(), &a.signature()));
    }
}
