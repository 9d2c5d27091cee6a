//! Adversary framework: the action surface the model grants an attacker
//! (assemble-and-withhold, timed publication with per-node delivery fronts,
//! honest-delivery reordering) plus pluggable strategies.
//!
//! Strategies act through [`AdversaryCtx`], which validates every action
//! eagerly — a strategy bug aborts the run loudly instead of corrupting the
//! invariant checks — and logs the applied actions for the trace and for
//! budget accounting. The adversary is rushing and omniscient: its private
//! view contains every block ever mined, including this round's honest wins,
//! before it chooses its own actions.

pub mod attacks;
pub mod script;
pub mod strategies;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockdag::{Block, BlockIdx, BlockKind, GlobalDag, Miner, NodeView, Round, TxId};
use crate::mining::{eligible_votes, ArrivalEvent, BlockTarget, IdAllocator};
use crate::params::{DerivedConstants, ProtocolParams};

/// Which honest nodes receive a published block one round after publication.
/// Everyone else gets it a round later via honest rebroadcast, which is the
/// lever behind vote-splitting releases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryFront {
    All,
    Nodes(Vec<u32>),
}

/// A validated, applied adversary action, in application order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppliedAction {
    Assembled { block: BlockIdx, withheld: bool },
    Published { block: BlockIdx, front: DeliveryFront },
    Reordered { node: u32, order: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    /// Strategy bug; the simulator aborts the run with this diagnostic.
    #[error("invalid adversary action: {0}")]
    InvalidAction(String),
    /// A steering request needs more mining wins than have arrived. The
    /// caller is expected to queue the goal and retry, never to fake blocks.
    #[error("insufficient voter budget: need {needed}, have {available}")]
    InsufficientBudget { needed: u32, available: u32 },
}

use AdversaryError::InvalidAction;

/// An adversary strategy, single-owner per run. `on_round` fires at the end
/// of every round, after honest mining, with that round's adversary wins.
pub trait Strategy {
    fn name(&self) -> &'static str;
    fn on_round(&mut self, ctx: &mut AdversaryCtx<'_>) -> Result<(), AdversaryError>;
}

/// Strategy selection, as it appears in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    HonestNull,
    HahDisplace,
    AhhBalance,
    PrivateLevels,
    VoteSplit,
    CustomScript,
}

impl StrategyName {
    /// The config-file spelling of the variant.
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyName::HonestNull => "honest_null",
            StrategyName::HahDisplace => "hah_displace",
            StrategyName::AhhBalance => "ahh_balance",
            StrategyName::PrivateLevels => "private_levels",
            StrategyName::VoteSplit => "vote_split",
            StrategyName::CustomScript => "custom_script",
        }
    }
}

impl std::str::FromStr for StrategyName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest_null" => Ok(StrategyName::HonestNull),
            "hah_displace" => Ok(StrategyName::HahDisplace),
            "ahh_balance" => Ok(StrategyName::AhhBalance),
            "private_levels" => Ok(StrategyName::PrivateLevels),
            "vote_split" => Ok(StrategyName::VoteSplit),
            "custom_script" => Ok(StrategyName::CustomScript),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StrategySpec {
    pub name: StrategyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<script::Script>,
}

impl StrategySpec {
    pub fn named(name: StrategyName) -> Self {
        StrategySpec { name, script: None }
    }
}

/// Builds the strategy and, for scripted ones, the arrival schedule the
/// simulator must pin. Returns an error message on config-level mismatch.
pub fn build_strategy(
    spec: &StrategySpec,
    params: &ProtocolParams,
) -> Result<(Box<dyn Strategy>, Option<script::Script>), String> {
    let scripted = |s: script::Script| -> Result<(Box<dyn Strategy>, Option<script::Script>), String> {
        s.validate(params)?;
        Ok((Box::new(script::ScriptedStrategy::new(s.clone())), Some(s)))
    };
    match spec.name {
        StrategyName::HonestNull => Ok((Box::new(strategies::HonestNull), None)),
        StrategyName::PrivateLevels => {
            Ok((Box::new(strategies::PrivateLevels::default()), None))
        }
        StrategyName::VoteSplit => Ok((Box::new(strategies::VoteSplit::default()), None)),
        StrategyName::HahDisplace => {
            attacks::check_attack_params(params, &attacks::hah_params())?;
            scripted(attacks::hah_script(attacks::periods_for(params.r_max)))
        }
        StrategyName::AhhBalance => {
            attacks::check_attack_params(params, &attacks::ahh_params())?;
            scripted(attacks::ahh_script(attacks::periods_for(params.r_max)))
        }
        StrategyName::CustomScript => match &spec.script {
            Some(s) => scripted(s.clone()),
            None => Err("custom_script strategy requires a script".into()),
        },
    }
}

/// The adversary's handle on the run for one round. Owns the round's
/// remaining mining opportunities; actions consume them and are validated
/// against the blocks the adversary holds (everything mined so far).
pub struct AdversaryCtx<'a> {
    pub round: Round,
    pub params: &'a ProtocolParams,
    pub constants: &'a DerivedConstants,
    pub(crate) dag: &'a mut GlobalDag,
    pub(crate) adv_view: &'a mut NodeView,
    pub(crate) observer: &'a NodeView,
    pub(crate) ids: &'a IdAllocator,
    pub(crate) rng: &'a mut ChaCha8Rng,
    pub(crate) opportunities: Vec<ArrivalEvent>,
    pub(crate) honest_mined: &'a [Vec<BlockIdx>],
    pub(crate) unconfirmed_txs: &'a [TxId],
    pub(crate) actions: Vec<AppliedAction>,
}

impl<'a> AdversaryCtx<'a> {
    pub fn dag(&self) -> &GlobalDag {
        self.dag
    }

    /// Omniscient view: all blocks ever mined, public or private.
    pub fn view(&self) -> &NodeView {
        self.adv_view
    }

    /// The lagged public view every honest node is guaranteed to dominate.
    /// Depth parents notarized here are notarized everywhere, so blocks built
    /// on them survive publication.
    pub fn observer(&self) -> &NodeView {
        self.observer
    }

    /// This round's unconsumed adversary mining wins.
    pub fn opportunities(&self) -> &[ArrivalEvent] {
        &self.opportunities
    }

    /// Honest blocks mined (and broadcast) in `round`, in processing order.
    pub fn honest_mined(&self, round: Round) -> &[BlockIdx] {
        self.honest_mined
            .get(round as usize)
            .map_or(&[], Vec::as_slice)
    }

    /// Transactions arrived but not yet publicly confirmed.
    pub fn unconfirmed_txs(&self) -> &[TxId] {
        self.unconfirmed_txs
    }

    pub fn actions(&self) -> &[AppliedAction] {
        &self.actions
    }

    fn take_opportunity(&mut self, target: BlockTarget) -> Option<ArrivalEvent> {
        let pos = self.opportunities.iter().position(|e| e.target == target)?;
        Some(self.opportunities.remove(pos))
    }

    fn check_block(&self, idx: BlockIdx, what: &str) -> Result<&Block, AdversaryError> {
        if (idx.i()) < self.dag.len() {
            Ok(self.dag.block(idx))
        } else {
            Err(InvalidAction(format!("{what}: unknown block index {idx:?}")))
        }
    }

    /// Mines an adversary proposer block from one of this round's proposer
    /// opportunities. Parents may be private; validity is checked against the
    /// adversary's own holdings. `withhold: false` publishes it immediately
    /// to all nodes.
    pub fn assemble_proposer(
        &mut self,
        level_parent: BlockIdx,
        depth_parent: BlockIdx,
        txs: Vec<TxId>,
        withhold: bool,
    ) -> Result<BlockIdx, AdversaryError> {
        if self.take_opportunity(BlockTarget::Proposer).is_none() {
            return Err(InvalidAction("no proposer opportunity this round".into()));
        }
        for (b, what) in [(level_parent, "level parent"), (depth_parent, "depth parent")] {
            if !matches!(self.check_block(b, what)?.kind, BlockKind::Proposer(_)) {
                return Err(InvalidAction(format!("{what} is not a proposer block")));
            }
        }
        let id = self.ids.fresh(self.dag, self.rng, Miner::Adversary);
        let idx = self
            .dag
            .add_proposer(id, Miner::Adversary, self.round, level_parent, depth_parent, txs);
        self.adopt(idx, withhold)
    }

    /// Mines an adversary voter block on `chain`, with an arbitrary parent
    /// (fork point) and vote list, subject to the same validity rules honest
    /// views enforce.
    pub fn assemble_voter(
        &mut self,
        chain: u32,
        parent: BlockIdx,
        votes: Vec<BlockIdx>,
        withhold: bool,
    ) -> Result<BlockIdx, AdversaryError> {
        if chain >= self.dag.m() {
            return Err(InvalidAction(format!("voter chain {chain} out of range")));
        }
        if self.take_opportunity(BlockTarget::Voter(chain)).is_none() {
            return Err(InvalidAction(format!(
                "no voter opportunity on chain {chain} this round"
            )));
        }
        let (mut last_level, cum_depth) = match self.check_block(parent, "voter parent")?.kind {
            BlockKind::Voter(ref v) if v.chain == chain => (v.cum_voted_level, v.cum_voted_depth),
            _ => return Err(InvalidAction("voter parent not on the same chain".into())),
        };
        for &v in &votes {
            let p = match self.check_block(v, "vote target")?.kind {
                BlockKind::Proposer(ref p) => p,
                BlockKind::Voter(_) => {
                    return Err(InvalidAction("vote target is not a proposer block".into()))
                }
            };
            // the receive rules every view enforces; a violating block would
            // be silently rejected at delivery, so abort at assembly instead
            if p.level <= last_level {
                return Err(InvalidAction(format!(
                    "vote level {} not above the chain's committed level {last_level}",
                    p.level
                )));
            }
            last_level = p.level;
            if p.depth < cum_depth {
                return Err(InvalidAction(format!(
                    "vote depth {} below the chain's committed depth {cum_depth}",
                    p.depth
                )));
            }
        }
        let id = self.ids.fresh(self.dag, self.rng, Miner::Adversary);
        let idx = self
            .dag
            .add_voter(id, Miner::Adversary, self.round, chain, parent, votes);
        self.adopt(idx, withhold)
    }

    fn adopt(&mut self, idx: BlockIdx, withhold: bool) -> Result<BlockIdx, AdversaryError> {
        // bookkeeping view, no receive rules: a withheld fork must never make
        // the adversary's own view refuse later blocks
        self.adv_view.insert_unchecked(self.dag, idx, self.round);
        self.actions.push(AppliedAction::Assembled {
            block: idx,
            withheld: withhold,
        });
        if !withhold {
            self.publish(idx, DeliveryFront::All)?;
        }
        Ok(idx)
    }

    /// Releases a previously withheld adversary block. `front` nodes receive
    /// it next round, ahead of honest broadcasts; the rest one round later.
    pub fn publish(&mut self, block: BlockIdx, front: DeliveryFront) -> Result<(), AdversaryError> {
        let b = self.check_block(block, "publish")?;
        if b.miner != Miner::Adversary {
            return Err(InvalidAction("cannot publish a non-adversary block".into()));
        }
        if b.round_public.is_some() {
            return Err(InvalidAction("block is already public".into()));
        }
        if let DeliveryFront::Nodes(nodes) = &front {
            if let Some(&bad) = nodes
                .iter()
                .find(|&&n| n >= self.params.honest_node_count)
            {
                return Err(InvalidAction(format!("front node {bad} does not exist")));
            }
        }
        self.dag.mark_public(block, self.round);
        self.actions.push(AppliedAction::Published { block, front });
        Ok(())
    }

    /// Permutes next round's honest-broadcast delivery order for one node.
    /// The permutation is validated against the actual queue when applied.
    pub fn reorder_deliveries(
        &mut self,
        node: u32,
        order: Vec<usize>,
    ) -> Result<(), AdversaryError> {
        if node >= self.params.honest_node_count {
            return Err(InvalidAction(format!("node {node} does not exist")));
        }
        self.actions.push(AppliedAction::Reordered { node, order });
        Ok(())
    }

    /// Spends every remaining opportunity exactly as an honest node would:
    /// proposer blocks on the public notarized tip, voter blocks voting the
    /// eligible levels, everything published immediately.
    ///
    /// Mimicked blocks only ever reference public blocks. A block referencing
    /// a still-private one is rejected by every honest view — and stays lost
    /// to them even after the reference is published, because deliveries are
    /// not retried — so spending wins on such blocks builds an invisible fork
    /// that honest nodes adopt wholesale (arbitrarily deep) the first time a
    /// descendant with fully-public ancestry reaches them. Mimicry must not
    /// smuggle in that attack.
    pub fn mimic_honest(&mut self) -> Result<Vec<BlockIdx>, AdversaryError> {
        let mut out = Vec::new();
        while let Some(ev) = self.opportunities.first().copied() {
            match ev.target {
                BlockTarget::Proposer => {
                    let lp = self.public_level_parent();
                    // the observer tip is notarized in every honest view, so
                    // the block cannot be rejected on delivery
                    let dp = self.observer.notarized_tip();
                    let txs = self.unconfirmed_txs.to_vec();
                    out.push(self.assemble_proposer(lp, dp, txs, false)?);
                }
                BlockTarget::Voter(c) => {
                    let parent = self.adv_view.chain_tip(c);
                    let votes: Vec<BlockIdx> = eligible_votes(self.adv_view, self.dag, c)
                        .into_iter()
                        .filter(|&b| self.dag.block(b).round_public.is_some())
                        .collect();
                    out.push(self.assemble_voter(c, parent, votes, false)?);
                }
            }
        }
        Ok(out)
    }

    /// Deepest-level published proposer block the adversary has seen, with
    /// ties to the earliest-received — the level parent an honest node's
    /// choice converges to once deliveries land. Private blocks in the
    /// adversary view (its own banked ones) are skipped.
    fn public_level_parent(&self) -> BlockIdx {
        let mut best = self.dag.proposer_genesis();
        let mut best_level = 0;
        for &b in &self.adv_view.known_proposers {
            if self.dag.block(b).round_public.is_none() {
                continue;
            }
            let level = self.dag.proposer_data(b).level;
            // strict: first (earliest-received) block at the deepest level wins
            if level > best_level {
                best_level = level;
                best = b;
            }
        }
        best
    }

    /// Plans and mines voter blocks so each listed chain's longest-chain vote
    /// at the target's level points at `target`: extend when the level is
    /// still open, fork below the offending vote otherwise. Fails with
    /// [`AdversaryError::InsufficientBudget`] — consuming nothing — when this
    /// round's wins cannot cover every chain; blocks are never faked.
    pub fn steer_votes(
        &mut self,
        chains: &[u32],
        target: BlockIdx,
        withhold: bool,
    ) -> Result<Vec<BlockIdx>, AdversaryError> {
        let level = match self.check_block(target, "steer target")?.kind {
            BlockKind::Proposer(ref p) => p.level,
            BlockKind::Voter(_) => {
                return Err(InvalidAction("steer target is not a proposer block".into()))
            }
        };
        let mut plans = Vec::new();
        let mut needed_total = 0u32;
        for &c in chains {
            if c >= self.dag.m() {
                return Err(InvalidAction(format!("voter chain {c} out of range")));
            }
            if let Some(plan) = self.plan_steer(c, target, level)? {
                needed_total += plan.blocks;
                plans.push((c, plan));
            }
        }
        let available_total: u32 = chains
            .iter()
            .map(|&c| {
                self.opportunities
                    .iter()
                    .filter(|e| e.target == BlockTarget::Voter(c))
                    .count() as u32
            })
            .sum();
        for &(c, ref plan) in &plans {
            let have = self
                .opportunities
                .iter()
                .filter(|e| e.target == BlockTarget::Voter(c))
                .count() as u32;
            if have < plan.blocks {
                return Err(AdversaryError::InsufficientBudget {
                    needed: needed_total,
                    available: available_total,
                });
            }
        }
        let mut out = Vec::new();
        for (c, plan) in plans {
            let mut parent = plan.parent;
            for i in 0..plan.blocks {
                let votes = if i == 0 { vec![target] } else { vec![] };
                parent = self.assemble_voter(c, parent, votes, withhold)?;
                out.push(parent);
            }
        }
        Ok(out)
    }

    fn plan_steer(
        &self,
        chain: u32,
        target: BlockIdx,
        level: u64,
    ) -> Result<Option<SteerPlan>, AdversaryError> {
        let cs = &self.adv_view.chains[chain as usize];
        if cs.votes.get(&level).is_some_and(|cv| cv.proposer == target) {
            return Ok(None);
        }
        let target_depth = match self.dag.block(target).kind {
            BlockKind::Proposer(ref p) => p.depth,
            BlockKind::Voter(_) => unreachable!("checked by caller"),
        };
        let tip = *cs.longest.last().expect("chain has genesis");
        let conflict_pos = cs.votes.range(level..).next().map(|(_, cv)| cv.pos);
        let (parent, blocks) = match conflict_pos {
            // level still open on this chain: extend the tip by one
            None => (tip, 1),
            Some(pos) => {
                debug_assert!(pos >= 1, "genesis holds no votes");
                let parent = cs.longest[pos as usize - 1];
                let len = cs.longest.len() as u32;
                // equal length wins the tie only when fresh adversary ids are
                // forced below the honest id space
                let tie_wins =
                    self.ids.adversary_wins_ties() && self.dag.block(tip).miner.is_honest();
                (parent, len - pos + u32::from(!tie_wins))
            }
        };
        let parent_block = self.dag.voter_data(parent);
        if level <= parent_block.cum_voted_level {
            return Err(InvalidAction(format!(
                "chain {chain} cannot vote level {level} below its committed level {}",
                parent_block.cum_voted_level
            )));
        }
        if target_depth < parent_block.cum_voted_depth {
            return Err(InvalidAction(format!(
                "chain {chain} cannot vote a depth-{target_depth} block after committing to depth {}",
                parent_block.cum_voted_depth
            )));
        }
        Ok(Some(SteerPlan { parent, blocks }))
    }
}

struct SteerPlan {
    parent: BlockIdx,
    blocks: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockdag::InsertOutcome;
    use crate::mining::IdPolicy;
    use crate::params::derive_constants;
    use rand::SeedableRng;

    struct Harness {
        dag: GlobalDag,
        adv: NodeView,
        obs: NodeView,
        params: ProtocolParams,
        constants: DerivedConstants,
        ids: IdAllocator,
        rng: ChaCha8Rng,
        honest_mined: Vec<Vec<BlockIdx>>,
        txs: Vec<TxId>,
    }

    impl Harness {
        fn new(m: u32, policy: IdPolicy) -> Self {
            let params = ProtocolParams {
                m,
                beta: 0.25,
                honest_node_count: 2,
                ..ProtocolParams::default()
            };
            let constants = derive_constants(&params).unwrap();
            let dag = GlobalDag::new(m);
            Harness {
                adv: NodeView::new(u32::MAX, &dag),
                obs: NodeView::new(2, &dag),
                dag,
                params,
                constants,
                ids: IdAllocator::new(32, policy),
                rng: ChaCha8Rng::seed_from_u64(42),
                honest_mined: vec![vec![]; 64],
                txs: vec![],
            }
        }

        fn ctx(&mut self, round: Round, opportunities: Vec<ArrivalEvent>) -> AdversaryCtx<'_> {
            AdversaryCtx {
                round,
                params: &self.params,
                constants: &self.constants,
                dag: &mut self.dag,
                adv_view: &mut self.adv,
                observer: &self.obs,
                ids: &self.ids,
                rng: &mut self.rng,
                opportunities,
                honest_mined: &self.honest_mined,
                unconfirmed_txs: &self.txs,
                actions: vec![],
            }
        }

        /// Mines an honest voter block on `chain` voting `votes`, visible to
        /// the adversary (and inserted in its view) immediately.
        fn honest_voter(&mut self, round: Round, chain: u32, votes: Vec<BlockIdx>) -> BlockIdx {
            let parent = self.adv.chain_tip(chain);
            let id = self.ids.fresh(&self.dag, &mut self.rng, Miner::Honest(0));
            let idx = self
                .dag
                .add_voter(id, Miner::Honest(0), round, chain, parent, votes);
            self.dag.mark_public(idx, round);
            assert_eq!(self.adv.insert_block(&self.dag, idx, round), InsertOutcome::Inserted);
            idx
        }

        fn honest_proposer(&mut self, round: Round) -> BlockIdx {
            let lp = self.adv.level_parent_candidate();
            self.honest_proposer_with_parent(round, lp)
        }

        /// Pins the level parent, so tests can mint same-level rivals.
        fn honest_proposer_with_parent(&mut self, round: Round, lp: BlockIdx) -> BlockIdx {
            let dp = self.adv.notarized_tip();
            let id = self.ids.fresh(&self.dag, &mut self.rng, Miner::Honest(0));
            let idx = self
                .dag
                .add_proposer(id, Miner::Honest(0), round, lp, dp, vec![]);
            self.dag.mark_public(idx, round);
            assert_eq!(self.adv.insert_block(&self.dag, idx, round), InsertOutcome::Inserted);
            idx
        }
    }

    fn opp(target: BlockTarget) -> ArrivalEvent {
        ArrivalEvent {
            round: 1,
            target,
            adversary: true,
        }
    }

    #[test]
    fn mimic_honest_publishes_like_an_honest_node() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let (made, actions) = {
            let mut ctx = h.ctx(1, vec![opp(BlockTarget::Proposer), opp(BlockTarget::Voter(1))]);
            let made = ctx.mimic_honest().unwrap();
            (made, ctx.actions)
        };
        assert_eq!(made.len(), 2);
        let (p, v) = (made[0], made[1]);
        let dag = &h.dag;
        let pd = dag.proposer_data(p);
        assert_eq!((pd.level, pd.depth), (1, 1));
        assert_eq!(dag.block(p).round_public, Some(1), "published immediately");
        let vd = dag.voter_data(v);
        assert_eq!(vd.parent, dag.voter_genesis(1));
        assert_eq!(vd.votes, vec![p], "votes its own fresh proposer at level 1");
        assert_eq!(actions.len(), 4, "two assembles, two publishes");
    }

    #[test]
    fn assembling_without_an_opportunity_is_invalid() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let g = h.dag.proposer_genesis();
        let mut ctx = h.ctx(1, vec![opp(BlockTarget::Voter(0))]);
        let err = ctx.assemble_proposer(g, g, vec![], true).unwrap_err();
        assert!(matches!(err, InvalidAction(_)));
        // the voter opportunity is still intact
        assert_eq!(ctx.opportunities().len(), 1);
    }

    #[test]
    fn withheld_blocks_stay_private_until_published() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let g = h.dag.proposer_genesis();
        let a = {
            let mut ctx = h.ctx(1, vec![opp(BlockTarget::Proposer)]);
            let a = ctx.assemble_proposer(g, g, vec![9], true).unwrap();
            assert_eq!(ctx.actions.len(), 1);
            a
        };
        assert_eq!(h.dag.block(a).round_public, None);
        let mut ctx = h.ctx(3, vec![]);
        ctx.publish(a, DeliveryFront::Nodes(vec![0])).unwrap();
        assert_eq!(h.dag.block(a).round_public, Some(3));
        // double publication is a strategy bug
        let mut ctx = h.ctx(4, vec![]);
        assert!(matches!(
            ctx.publish(a, DeliveryFront::All),
            Err(InvalidAction(_))
        ));
    }

    #[test]
    fn cannot_publish_honest_blocks_or_bad_fronts() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let hp = h.honest_proposer(1);
        let mut ctx = h.ctx(2, vec![opp(BlockTarget::Proposer)]);
        assert!(matches!(
            ctx.publish(hp, DeliveryFront::All),
            Err(InvalidAction(_))
        ));
        let g = ctx.dag.proposer_genesis();
        let a = ctx.assemble_proposer(g, g, vec![], true).unwrap();
        assert!(matches!(
            ctx.publish(a, DeliveryFront::Nodes(vec![7])),
            Err(InvalidAction(_))
        ));
    }

    #[test]
    fn invalid_vote_content_aborts() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let p1 = h.honest_proposer(1);
        let v = h.honest_voter(1, 0, vec![p1]);
        // voting the same level twice violates vote monotonicity
        let mut ctx = h.ctx(2, vec![opp(BlockTarget::Voter(0))]);
        let err = ctx.assemble_voter(0, v, vec![p1], false).unwrap_err();
        assert!(matches!(err, InvalidAction(_)));
    }

    #[test]
    fn steer_noop_when_target_already_voted() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let p1 = h.honest_proposer(1);
        h.honest_voter(1, 0, vec![p1]);
        let mut ctx = h.ctx(2, vec![opp(BlockTarget::Voter(0))]);
        assert_eq!(ctx.steer_votes(&[0], p1, false).unwrap(), vec![]);
        assert_eq!(ctx.opportunities().len(), 1, "nothing consumed");
    }

    #[test]
    fn steer_zero_budget_is_insufficient_not_faked() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let g = h.dag.proposer_genesis();
        let p1 = h.honest_proposer(1);
        let p2 = h.honest_proposer_with_parent(1, g); // same level, different block
        h.honest_voter(1, 0, vec![p1]);
        let before = h.dag.len();
        let mut ctx = h.ctx(2, vec![]);
        let err = ctx.steer_votes(&[0], p2, false).unwrap_err();
        assert_eq!(
            err,
            AdversaryError::InsufficientBudget {
                needed: 2,
                available: 0
            }
        );
        assert_eq!(h.dag.len(), before, "no blocks minted");
    }

    #[test]
    fn steer_forks_one_below_the_vote_and_extends_by_two() {
        // 3-block chain (genesis, keeper, voter-of-p1): flipping the level-1
        // vote to p2 must fork below the voting tip and win strictly, so two
        // blocks are spent under uniform ids
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let g = h.dag.proposer_genesis();
        let p1 = h.honest_proposer(1);
        let p2 = h.honest_proposer_with_parent(1, g);
        let keeper = h.honest_voter(1, 0, vec![]);
        let voter = h.honest_voter(2, 0, vec![p1]);
        let mut ctx = h.ctx(
            3,
            vec![opp(BlockTarget::Voter(0)), opp(BlockTarget::Voter(0))],
        );
        let made = ctx.steer_votes(&[0], p2, false).unwrap();
        assert_eq!(made.len(), 2);
        assert!(ctx.opportunities().is_empty());
        let dag = &h.dag;
        assert_eq!(dag.voter_data(made[0]).parent, keeper, "forked below the vote");
        assert_eq!(dag.voter_data(made[0]).votes, vec![p2]);
        assert!(dag.voter_data(made[1]).votes.is_empty());
        // the adversary's own view has flipped to the new branch
        let cs = &h.adv.chains[0];
        assert_eq!(cs.longest.len(), 4);
        assert_eq!(cs.votes.get(&1).unwrap().proposer, p2);
        let _ = voter;
    }

    #[test]
    fn steer_ties_suffice_when_adversary_ids_win() {
        let mut h = Harness::new(2, IdPolicy::AdversaryWinsTies);
        let g = h.dag.proposer_genesis();
        let p1 = h.honest_proposer(1);
        let p2 = h.honest_proposer_with_parent(1, g);
        h.honest_voter(1, 0, vec![]);
        h.honest_voter(2, 0, vec![p1]);
        // honest tip + forced-low adversary ids: an equal-length fork wins
        let mut ctx = h.ctx(3, vec![opp(BlockTarget::Voter(0))]);
        let made = ctx.steer_votes(&[0], p2, false).unwrap();
        assert_eq!(made.len(), 1);
        assert_eq!(h.adv.chains[0].votes.get(&1).unwrap().proposer, p2);
    }

    #[test]
    fn steer_extends_when_level_is_open() {
        let mut h = Harness::new(2, IdPolicy::Uniform);
        let p1 = h.honest_proposer(1);
        let keeper = h.honest_voter(1, 0, vec![]);
        let mut ctx = h.ctx(2, vec![opp(BlockTarget::Voter(0))]);
        let made = ctx.steer_votes(&[0], p1, false).unwrap();
        assert_eq!(made.len(), 1);
        assert_eq!(h.dag.voter_data(made[0]).parent, keeper);
        assert_eq!(h.dag.voter_data(made[0]).votes, vec![p1]);
    }

    #[test]
    fn budget_soundness_actions_never_exceed_opportunities() {
        let mut h = Harness::new(3, IdPolicy::Uniform);
        let opps = vec![
            opp(BlockTarget::Proposer),
            opp(BlockTarget::Voter(0)),
            opp(BlockTarget::Voter(2)),
        ];
        let mut ctx = h.ctx(1, opps.clone());
        ctx.mimic_honest().unwrap();
        let assembled = ctx
            .actions
            .iter()
            .filter(|a| matches!(a, AppliedAction::Assembled { .. }))
            .count();
        assert_eq!(assembled, opps.len());
        assert!(ctx.opportunities().is_empty());
    }
}
