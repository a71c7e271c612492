//! Seeded generators of correct runs, for property testing and the
//! acceptance suite.
//!
//! Generated runs are correct by construction: every step is checked
//! against the protocol guard before it is recorded, agents take turns in
//! a fair rotation, and obligations (pending pulls, outstanding claims
//! against the agent) are discharged before free actions. Free actions are
//! drawn from a seeded RNG, so a run is a pure function of its seed.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::gcd::{coin_view, GcdAction, GcdConfig, GcdSystem};
use crate::mts::{AgentId, Config, Dmts, Run};
use crate::nft::{config_union, is_tip, Metadata, Nft, NftId};
use crate::sc::{claims_against, outstanding_claims, RedemptionClaim, ScConfig, ScSystem};

/// A generated dissemination run with its round structure.
pub struct GcdSample {
    pub sys: GcdSystem,
    pub run: Run<GcdAction>,
    /// Step index at which each scheduler round began.
    pub round_starts: Vec<usize>,
}

/// A generated coin-protocol run with its round structure.
pub struct ScSample {
    pub sys: ScSystem,
    pub run: Run<Nft>,
    pub round_starts: Vec<usize>,
}

/// The largest step span of any window of `window_rounds` consecutive
/// rounds; a starvation streak of this many steps implies the class
/// survived that many rounds untaken. Returns one past the run length
/// when the run has fewer rounds than the window.
pub fn horizon_steps(round_starts: &[usize], total_steps: usize, window_rounds: usize) -> usize {
    if round_starts.len() < window_rounds {
        return total_steps + 1;
    }
    let mut bounds = round_starts.to_vec();
    bounds.push(total_steps);
    bounds
        .windows(window_rounds + 1)
        .map(|w| w[window_rounds] - w[0])
        .max()
        .unwrap_or(total_steps + 1)
        .max(1)
}

fn agent_set(n: u32) -> BTreeSet<AgentId> {
    (0..n).map(AgentId).collect()
}

/// Coins currently held by `who` in `view`: tips addressed to `who`.
fn held_tips(sys_universe: &crate::nft::NftUniverse, who: AgentId, view: &BTreeSet<NftId>) -> Vec<Nft> {
    view.iter()
        .filter_map(|id| sys_universe.get(id).cloned())
        .filter(|n| n.recipient() == who && is_tip(sys_universe, &n.id(), view))
        .collect()
}

/// Generate a correct dissemination run of at most `max_steps` transitions
/// over `n` agents. Friendships form a line plus random chords; each round
/// every agent drains its pullable blocks, answers the claims it is
/// obligated on, and then takes one random free action.
pub fn random_correct_gcd_run(seed: u64, n: u32, max_steps: usize) -> GcdSample {
    let agents = agent_set(n);
    let sys = GcdSystem::new(agents.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6763_645f_7275_6e73);
    let mut config = sys.initial_config();
    let mut run = Run::new(agents.clone());
    let mut round_starts = Vec::new();
    let order: Vec<AgentId> = agents.iter().copied().collect();

    macro_rules! step {
        ($actor:expr, $action:expr) => {{
            if run.len() >= max_steps {
                false
            } else {
                let action = $action;
                assert!(
                    sys.admits(&config, $actor, &action).is_ok(),
                    "generator proposed a rejected action: {action:?}"
                );
                config = sys.apply_step(&config, $actor, &action);
                run.push($actor, action);
                true
            }
        }};
    }

    // Bootstrap: initial blocks, then a connected friendship line with
    // random chords.
    round_starts.push(0);
    for &p in &order {
        if !step!(p, GcdAction::CreateInitial) {
            return GcdSample { sys, run, round_starts };
        }
    }
    let mut edges: BTreeSet<(AgentId, AgentId)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if !edges.contains(&(a, b)) && rng.gen_bool(0.3) {
                edges.insert((a, b));
            }
        }
    }
    for (a, b) in &edges {
        if !step!(*a, GcdAction::Follow(*b)) || !step!(*b, GcdAction::Follow(*a)) {
            return GcdSample { sys, run, round_starts };
        }
    }

    'rounds: while run.len() < max_steps {
        round_starts.push(run.len());
        for &p in &order {
            if run.len() >= max_steps {
                break 'rounds;
            }
            // Drain every pullable block, lowest first for determinism.
            loop {
                let mut receivable = sys.receivable(&config, p);
                receivable.sort();
                match receivable.first() {
                    Some((from, block)) => {
                        if !step!(p, GcdAction::Receive { from: *from, block: *block }) {
                            break 'rounds;
                        }
                    }
                    None => break,
                }
            }

            // Obligations: answer claims addressed to p, in id order, so
            // the designated claim of a contested coin settles first.
            let obligations: Vec<RedemptionClaim> = {
                let u = sys.universe.borrow();
                let view = coin_view(config.local(p).expect("agent present"));
                outstanding_claims(&u, &view)
                    .into_iter()
                    .filter(|c| c.obligor == p)
                    .collect()
            };
            for claim in obligations {
                let view = coin_view(config.local(p).expect("agent present"));
                let (target_held, claim_coin) = {
                    let u = sys.universe.borrow();
                    let th = claim.target.and_then(|y| {
                        let nft = u.get(&y)?.clone();
                        (view.contains(&y)
                            && nft.recipient() == p
                            && is_tip(&u, &y, &view))
                        .then_some(nft)
                    });
                    (th, u.get(&claim.id).cloned())
                };
                match (claim.target, target_held) {
                    (Some(_), Some(target)) => {
                        let t = sys.universe.borrow_mut().make_transfer(
                            &sys.signer,
                            &target,
                            Metadata::Settle(claim.id),
                            p,
                            claim.claimant,
                        ).expect("settlement transfer");
                        if !step!(p, GcdAction::CreateTransfer(t)) {
                            break 'rounds;
                        }
                    }
                    (Some(_), None) => {
                        // Requested coin is gone: reject by returning the
                        // claim coin.
                        let Some(claim_nft) = claim_coin else { continue };
                        let t = sys.universe.borrow_mut().make_transfer(
                            &sys.signer,
                            &claim_nft,
                            Metadata::Settle(claim.id),
                            p,
                            claim.claimant,
                        ).expect("rejection transfer");
                        if !step!(p, GcdAction::CreateTransfer(t)) {
                            break 'rounds;
                        }
                    }
                    (None, _) => {
                        // Fresh-coin claim: mint then hand over, same turn.
                        let Some(fresh) = sys.next_fresh_coin(&config, p) else { continue };
                        if !step!(p, GcdAction::CreateFresh(fresh.clone())) {
                            break 'rounds;
                        }
                        let t = sys.universe.borrow_mut().make_transfer(
                            &sys.signer,
                            &fresh,
                            Metadata::Settle(claim.id),
                            p,
                            claim.claimant,
                        ).expect("fresh settlement transfer");
                        if !step!(p, GcdAction::CreateTransfer(t)) {
                            break 'rounds;
                        }
                    }
                }
            }

            // One random free action.
            let action = random_gcd_action(&sys, &config, p, &mut rng);
            if let Some(action) = action {
                if !step!(p, action) {
                    break 'rounds;
                }
            }
        }
    }
    GcdSample { sys, run, round_starts }
}

fn friends_of(config: &GcdConfig, p: AgentId) -> Vec<AgentId> {
    config
        .agents()
        .filter(|q| crate::gcd::friends(config, p, *q))
        .collect()
}

fn random_gcd_action(
    sys: &GcdSystem,
    config: &GcdConfig,
    p: AgentId,
    rng: &mut ChaCha8Rng,
) -> Option<GcdAction> {
    let state = config.local(p)?;
    let view = coin_view(state);
    let friends = friends_of(config, p);
    let universe = sys.universe.borrow();
    // Transferable: held tips not frozen by a visible claim.
    let transferable: Vec<Nft> = held_tips(&universe, p, &view)
        .into_iter()
        .filter(|c| claims_against(&universe, &c.id(), &view).is_empty())
        .collect();
    // Claimable: held coins issued by a friend.
    let claimable: Vec<(Nft, AgentId)> = transferable
        .iter()
        .filter_map(|c| {
            let obligor = crate::sc::issuer(&universe, c)?;
            (obligor != p && friends.contains(&obligor)).then(|| (c.clone(), obligor))
        })
        .collect();
    drop(universe);

    let mut choices: Vec<(u32, u8)> = vec![(2, 0)]; // mint
    if !transferable.is_empty() && !friends.is_empty() {
        choices.push((3, 1)); // pay
    }
    if !claimable.is_empty() {
        choices.push((2, 2)); // redeem
    }
    let total: u32 = choices.iter().map(|(w, _)| w).sum();
    let mut pick = rng.gen_range(0..total);
    let mut kind = 0;
    for (w, k) in choices {
        if pick < w {
            kind = k;
            break;
        }
        pick -= w;
    }
    match kind {
        1 => {
            let coin = transferable[rng.gen_range(0..transferable.len())].clone();
            let to = friends[rng.gen_range(0..friends.len())];
            let t = sys
                .universe
                .borrow_mut()
                .make_transfer(&sys.signer, &coin, Metadata::Plain("pay".into()), p, to)
                .ok()?;
            sys.admits(config, p, &GcdAction::CreateTransfer(t.clone()))
                .ok()
                .map(|_| GcdAction::CreateTransfer(t))
        }
        2 => {
            let (coin, obligor) = claimable[rng.gen_range(0..claimable.len())].clone();
            // A sensible target: a coin the obligor itself currently
            // holds, or a fresh coin when it has none (or at random).
            let target = {
                let u = sys.universe.borrow();
                let obligor_view = coin_view(config.local(obligor).expect("agent present"));
                let tips = held_tips(&u, obligor, &obligor_view);
                if tips.is_empty() || rng.gen_bool(0.3) {
                    None
                } else {
                    Some(tips[rng.gen_range(0..tips.len())].id())
                }
            };
            let t = sys
                .universe
                .borrow_mut()
                .make_transfer(&sys.signer, &coin, Metadata::Redeem(target), p, obligor)
                .ok()?;
            sys.admits(config, p, &GcdAction::CreateTransfer(t.clone()))
                .ok()
                .map(|_| GcdAction::CreateTransfer(t))
        }
        _ => {
            let coin = sys.next_fresh_coin(config, p)?;
            Some(GcdAction::CreateFresh(coin))
        }
    }
}

/// Generate a correct coin-protocol run of at most `max_steps` appends
/// over `n` agents: obligations first, then one random free action per
/// turn.
pub fn random_correct_sc_run(seed: u64, n: u32, max_steps: usize) -> ScSample {
    let agents = agent_set(n);
    let sys = ScSystem::new(agents.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7363_5f72_756e_7321);
    let mut config = sys.initial_config();
    let mut run = Run::new(agents.clone());
    let mut round_starts = Vec::new();
    let order: Vec<AgentId> = agents.iter().copied().collect();

    macro_rules! step {
        ($actor:expr, $action:expr) => {{
            if run.len() >= max_steps {
                false
            } else {
                let action = $action;
                assert!(
                    sys.admits(&config, $actor, &action).is_ok(),
                    "generator proposed a rejected action: {}",
                    action.id()
                );
                config = sys.apply_step(&config, $actor, &action);
                run.push($actor, action);
                true
            }
        }};
    }

    'rounds: while run.len() < max_steps {
        round_starts.push(run.len());
        for &p in &order {
            if run.len() >= max_steps {
                break 'rounds;
            }
            let view = config_union(&config);
            let obligations: Vec<RedemptionClaim> = {
                let u = sys.universe.borrow();
                outstanding_claims(&u, &view)
                    .into_iter()
                    .filter(|c| c.obligor == p)
                    .collect()
            };
            for claim in obligations {
                let view = config_union(&config);
                let (target_held, claim_coin) = {
                    let u = sys.universe.borrow();
                    let th = claim.target.and_then(|y| {
                        let nft = u.get(&y)?.clone();
                        (view.contains(&y) && nft.recipient() == p && is_tip(&u, &y, &view))
                            .then_some(nft)
                    });
                    (th, u.get(&claim.id).cloned())
                };
                match (claim.target, target_held) {
                    (Some(_), Some(target)) => {
                        let t = sys
                            .universe
                            .borrow_mut()
                            .make_transfer(&sys.signer, &target, Metadata::Settle(claim.id), p, claim.claimant)
                            .expect("settlement");
                        if !step!(p, t) {
                            break 'rounds;
                        }
                    }
                    (Some(_), None) => {
                        let Some(claim_nft) = claim_coin else { continue };
                        let t = sys
                            .universe
                            .borrow_mut()
                            .make_transfer(&sys.signer, &claim_nft, Metadata::Settle(claim.id), p, claim.claimant)
                            .expect("rejection");
                        if !step!(p, t) {
                            break 'rounds;
                        }
                    }
                    (None, _) => {
                        let fresh = sys.next_fresh_coin(&config, p);
                        if !step!(p, fresh.clone()) {
                            break 'rounds;
                        }
                        let t = sys
                            .universe
                            .borrow_mut()
                            .make_transfer(&sys.signer, &fresh, Metadata::Settle(claim.id), p, claim.claimant)
                            .expect("fresh settlement");
                        if !step!(p, t) {
                            break 'rounds;
                        }
                    }
                }
            }

            if let Some(action) = random_sc_action(&sys, &config, p, &mut rng) {
                if !step!(p, action) {
                    break 'rounds;
                }
            }
        }
    }
    ScSample { sys, run, round_starts }
}

fn random_sc_action(
    sys: &ScSystem,
    config: &ScConfig,
    p: AgentId,
    rng: &mut ChaCha8Rng,
) -> Option<Nft> {
    let view = config_union(config);
    let others: Vec<AgentId> = sys.agents.iter().copied().filter(|q| *q != p).collect();
    let universe = sys.universe.borrow();
    let transferable: Vec<Nft> = held_tips(&universe, p, &view)
        .into_iter()
        .filter(|c| claims_against(&universe, &c.id(), &view).is_empty())
        .collect();
    let claimable: Vec<(Nft, AgentId)> = transferable
        .iter()
        .filter_map(|c| {
            let obligor = crate::sc::issuer(&universe, c)?;
            (obligor != p).then(|| (c.clone(), obligor))
        })
        .collect();
    drop(universe);

    let roll = rng.gen_range(0..10u32);
    if roll < 3 || (transferable.is_empty() && claimable.is_empty()) || others.is_empty() {
        return Some(sys.next_fresh_coin(config, p));
    }
    if roll < 7 && !transferable.is_empty() {
        let coin = transferable[rng.gen_range(0..transferable.len())].clone();
        let to = others[rng.gen_range(0..others.len())];
        return sys
            .universe
            .borrow_mut()
            .make_transfer(&sys.signer, &coin, Metadata::Plain("pay".into()), p, to)
            .ok();
    }
    if !claimable.is_empty() {
        let (coin, obligor) = claimable[rng.gen_range(0..claimable.len())].clone();
        let target = {
            let u = sys.universe.borrow();
            let tips = held_tips(&u, obligor, &view);
            if tips.is_empty() || rng.gen_bool(0.3) {
                None
            } else {
                Some(tips[rng.gen_range(0..tips.len())].id())
            }
        };
        return sys
            .universe
            .borrow_mut()
            .make_transfer(&sys.signer, &coin, Metadata::Redeem(target), p, obligor)
            .ok();
    }
    Some(sys.next_fresh_coin(config, p))
}

/// Generate a correct run of the base trade protocol: arbitrary-string
/// objects and transfers of held items between random agents.
pub fn random_correct_nt_run(seed: u64, n: u32, max_steps: usize) -> (crate::nft::NtSystem, Run<Nft>) {
    let agents = agent_set(n);
    let sys = crate::nft::NtSystem::new(agents.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e66_745f_7275_6e73);
    let mut config = sys.initial_config();
    let mut run = Run::new(agents.clone());
    let order: Vec<AgentId> = agents.iter().copied().collect();
    let mut counter = 0u64;

    while run.len() < max_steps {
        for &p in &order {
            if run.len() >= max_steps {
                break;
            }
            let view = config_union(&config);
            let held = {
                let u = sys.universe.borrow();
                held_tips(&u, p, &view)
            };
            let action = if held.is_empty() || rng.gen_bool(0.4) {
                counter += 1;
                sys.universe
                    .borrow_mut()
                    .make_object(&sys.signer, p, &format!("item_{counter}"))
                    .expect("object")
            } else {
                let x = held[rng.gen_range(0..held.len())].clone();
                let to = order[rng.gen_range(0..order.len())];
                sys.universe
                    .borrow_mut()
                    .make_transfer(&sys.signer, &x, Metadata::Plain("s".into()), p, to)
                    .expect("transfer")
            };
            assert!(sys.admits(&config, p, &action).is_ok());
            config = sys.apply_step(&config, p, &action);
            run.push(p, action);
        }
    }
    (sys, run)
}

/// Materialize all configurations of a run under a system.
pub fn run_configs<S: Dmts>(sys: &S, run: &Run<S::Action>) -> Vec<Config<S::Local>> {
    sys.configs(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mts::check_safe;

    #[test]
    fn gcd_generator_produces_safe_deterministic_runs() {
        let a = random_correct_gcd_run(11, 4, 60);
        let b = random_correct_gcd_run(11, 4, 60);
        assert_eq!(a.run.steps.len(), b.run.steps.len());
        for (x, y) in a.run.steps.iter().zip(&b.run.steps) {
            assert_eq!(x.actor, y.actor);
        }
        assert!(check_safe(&a.sys, &a.run).is_safe());
        assert!(a.run.len() > 10);
    }

    #[test]
    fn sc_generator_produces_safe_runs_with_claims() {
        let mut saw_claim = false;
        for seed in 0..8 {
            let s = random_correct_sc_run(seed, 4, 40);
            assert!(check_safe(&s.sys, &s.run).is_safe());
            let u = s.sys.universe.borrow();
            if s
                .run
                .steps
                .iter()
                .any(|st| matches!(st.action.metadata(), Metadata::Redeem(_)))
            {
                saw_claim = true;
            }
            drop(u);
        }
        assert!(saw_claim, "claims should appear across seeds");
    }

    #[test]
    fn horizon_window_translation() {
        // Rounds of 3, 4 and 5 steps; a 2-round window spans at most 9.
        assert_eq!(horizon_steps(&[0, 3, 7], 12, 2), 9);
        // Fewer rounds than the window: no streak can qualify.
        assert_eq!(horizon_steps(&[0], 5, 2), 6);
    }
}
