//! Deterministic round-based simulator.
//!
//! One run advances a fixed number of rounds. Within a round:
//!
//! 1. **Deliveries.** Adversary-released blocks due this round land first
//!    (releases reach their chosen front plus the observer one round after
//!    publication, everyone else a round later). All views then refresh
//!    notarization and confirmation once mid-round, because an honest block
//!    broadcast last round may lean on a depth parent whose notarizing votes
//!    arrive only in the adversary batch. Honest broadcasts from the previous
//!    round land next (every node except the miner, in mined order, subject
//!    to any per-node reorderings the adversary bought), followed by the main
//!    refresh.
//! 2. **Transactions** arrive on a deterministic schedule (`floor(r * rate)`
//!    minus the previous round's total) and enter every node's pool.
//! 3. **Mining.** Wins are drawn from the arrival sampler (or pinned by a
//!    script). Honest wins are assigned a uniformly random node, assembled
//!    from that node's view, self-inserted, queued for broadcast next round,
//!    and mirrored into the adversary's omniscient view at once. Adversary
//!    wins accumulate as opportunities.
//! 4. **Adversary turn.** The strategy spends its opportunities; resulting
//!    publications are queued for delivery and withheld blocks tracked.
//! 5. **Analyzers** close the round: vote-floor checks, series snapshots,
//!    regime evaluation, optional state digest.
//!
//! Everything downstream of the seed is deterministic: rerunning a config
//! reproduces the trace byte for byte.

pub mod analyzers;
pub mod report;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::script::{Script, ScriptMiner};
use crate::adversary::{
    build_strategy, AdversaryCtx, AdversaryError, AppliedAction, DeliveryFront, Strategy,
    StrategySpec,
};
use crate::blockdag::{BlockIdx, GlobalDag, InsertOutcome, Miner, NodeView, Round, TxId};
use crate::confirmation::advance_confirmation;
use crate::mining::{
    assemble_honest_proposer, assemble_honest_voter, ArrivalEvent, ArrivalSampler, BlockTarget,
    IdAllocator, IdPolicy,
};
use crate::notarization::refresh_notarized_set;
use crate::params::{derive_constants, validate_params, DerivedConstants};

use analyzers::Analyzers;
use report::{
    AdversarySummary, ChainSummary, RunReport, Totals, REPORT_SCHEMA,
};
use trace::{DeliveryDisposition, Fnv1a, TraceEvent, TraceLevel, TraceSink, TRACE_SCHEMA};

/// Hard ceiling on the horizon: the engine keeps O(`r_max`) bookkeeping in
/// memory, so configs beyond this are refused rather than left to the OOM
/// killer.
pub const MAX_ROUNDS: u64 = 10_000_000;

/// A complete run configuration. Serializable; the trace header echoes it so
/// any trace can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: crate::params::ProtocolParams,
    #[serde(default)]
    pub strategy: StrategySpec,
    /// Expected transaction arrivals per round (deterministic schedule).
    #[serde(default)]
    pub tx_rate: f64,
    /// Last round transactions may arrive; later rounds only drain the
    /// pipeline. `None` keeps the schedule running to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_stop_round: Option<Round>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trace_level: TraceLevel,
    /// Abort with an error on the first model violation instead of counting.
    #[serde(default)]
    pub strict: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            params: crate::params::ProtocolParams::default(),
            strategy: StrategySpec::default(),
            tx_rate: 0.0,
            tx_stop_round: None,
            seed: 0,
            trace_level: TraceLevel::default(),
            strict: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("adversary strategy aborted: {0}")]
    Adversary(#[from] AdversaryError),
    #[error("model violation: {0}")]
    ModelViolation(String),
    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs one configuration to completion, streaming events into `sink`.
pub fn run(config: &SimConfig, sink: &mut dyn TraceSink) -> Result<RunReport, SimError> {
    let checked = validate_params(&config.params);
    let fatal: Vec<String> = checked
        .iter()
        .filter(|v| v.fatal)
        .map(|v| v.to_string())
        .collect();
    if !fatal.is_empty() {
        return Err(SimError::Config(fatal.join("; ")));
    }
    if !config.tx_rate.is_finite() || config.tx_rate < 0.0 {
        return Err(SimError::Config(format!(
            "tx_rate must be finite and >= 0, got {}",
            config.tx_rate
        )));
    }
    if config.params.r_max > MAX_ROUNDS {
        return Err(SimError::Config(format!(
            "r_max {} exceeds the in-memory horizon cap {MAX_ROUNDS}",
            config.params.r_max
        )));
    }
    let constants =
        derive_constants(&config.params).map_err(|e| SimError::Config(e.to_string()))?;
    let (mut strategy, script) =
        build_strategy(&config.strategy, &config.params).map_err(SimError::Config)?;

    let mut engine = Engine::new(config.clone(), constants, script);
    for warning in checked {
        engine.analyzers.note_param_warning(warning.to_string());
    }
    sink.emit(&TraceEvent::Header {
        schema: TRACE_SCHEMA,
        config: config.clone(),
        constants: engine.constants.clone(),
    })?;

    let r_max = config.params.r_max;
    for r in 1..=r_max {
        engine.round(r, strategy.as_mut(), sink)?;
    }
    engine.finish(r_max, sink)
}

/// Per-round, per-view delivery queues.
type Lanes = BTreeMap<Round, Vec<Vec<BlockIdx>>>;

struct Engine {
    config: SimConfig,
    constants: DerivedConstants,
    /// Honest node count; `views[n]` is the observer.
    n: usize,
    obs: usize,
    dag: GlobalDag,
    views: Vec<NodeView>,
    adv_view: NodeView,
    ids: IdAllocator,
    rng: ChaCha8Rng,
    sampler: Option<ArrivalSampler>,
    script_arrivals: BTreeMap<Round, Vec<crate::adversary::script::ScriptArrival>>,
    adv_lane: Lanes,
    honest_lane: Lanes,
    reorders: HashMap<(Round, u32), Vec<usize>>,
    honest_mined: Vec<Vec<BlockIdx>>,
    // transactions
    next_tx: TxId,
    txs_arrived: u64,
    /// Per honest node: arrived and not confirmed in that node's view.
    mempools: Vec<BTreeSet<TxId>>,
    /// Arrived and not confirmed in the observer's view (public knowledge;
    /// this is the pool honest-mimicking adversary blocks draw from).
    obs_mempool: BTreeSet<TxId>,
    adv_mempool_snapshot: Vec<TxId>,
    // counters
    honest_wins: u64,
    adversary_wins: u64,
    adv_assembled: u64,
    adv_published: u64,
    adv_unused: u64,
    withheld_outstanding: HashSet<BlockIdx>,
    analyzers: Analyzers,
}

impl Engine {
    fn new(config: SimConfig, constants: DerivedConstants, script: Option<Script>) -> Self {
        let params = &config.params;
        let n = params.honest_node_count as usize;
        let dag = GlobalDag::new(params.m);
        let views: Vec<NodeView> = (0..=n).map(|i| NodeView::new(i as u32, &dag)).collect();
        let adv_view = NodeView::new(u32::MAX, &dag);
        let policy = script
            .as_ref()
            .map_or(IdPolicy::Uniform, |s| s.id_policy);
        let ids = IdAllocator::new(params.kappa, policy);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (sampler, script_arrivals) = match &script {
            Some(s) => (None, s.arrivals_by_round()),
            None => (Some(ArrivalSampler::new(params)), BTreeMap::new()),
        };
        let analyzers = Analyzers::new(params, &constants);
        let honest_mined = vec![Vec::new(); params.r_max as usize + 2];
        let mempools = vec![BTreeSet::new(); n];
        Engine {
            config,
            constants,
            n,
            obs: n,
            dag,
            views,
            adv_view,
            ids,
            rng,
            sampler,
            script_arrivals,
            adv_lane: BTreeMap::new(),
            honest_lane: BTreeMap::new(),
            reorders: HashMap::new(),
            honest_mined,
            next_tx: 1,
            txs_arrived: 0,
            mempools,
            obs_mempool: BTreeSet::new(),
            adv_mempool_snapshot: Vec::new(),
            honest_wins: 0,
            adversary_wins: 0,
            adv_assembled: 0,
            adv_published: 0,
            adv_unused: 0,
            withheld_outstanding: HashSet::new(),
            analyzers,
        }
    }

    fn round(
        &mut self,
        r: Round,
        strategy: &mut dyn Strategy,
        sink: &mut dyn TraceSink,
    ) -> Result<(), SimError> {
        // 1a. adversary-released blocks due this round
        if let Some(lanes) = self.adv_lane.remove(&r) {
            self.deliver(lanes, r, sink)?;
        }
        // 1b. mid-round refresh: released votes may notarize the depth parent
        //     an honest broadcast from last round is about to rely on
        self.settle(r, sink)?;
        // 1c. honest broadcasts from last round
        if let Some(lanes) = self.honest_lane.remove(&r) {
            let lanes = self.apply_reorders(lanes, r)?;
            self.deliver(lanes, r, sink)?;
        }
        // 1d. main refresh
        self.settle(r, sink)?;
        // 2. transaction arrivals
        self.arrive_txs(r, sink)?;
        // 3. mining
        let opportunities = self.mine(r, sink)?;
        // 4. adversary turn
        self.adversary_turn(r, opportunities, strategy, sink)?;
        // 5. end-of-round analysis
        self.close_round(r, sink)
    }

    fn deliver(
        &mut self,
        lanes: Vec<Vec<BlockIdx>>,
        r: Round,
        sink: &mut dyn TraceSink,
    ) -> Result<(), SimError> {
        for (w, queue) in lanes.into_iter().enumerate() {
            for b in queue {
                let outcome = self.views[w].insert_block(&self.dag, b, r);
                if sink.enabled() {
                    let disposition = match &outcome {
                        InsertOutcome::Inserted => DeliveryDisposition::Inserted,
                        InsertOutcome::AlreadyKnown => DeliveryDisposition::AlreadyKnown,
                        InsertOutcome::Rejected(rej) => DeliveryDisposition::Rejected {
                            reason: rej.to_string(),
                        },
                    };
                    sink.emit(&TraceEvent::Delivered {
                        round: r,
                        node: w as u32,
                        block: self.dag.block(b).id,
                        disposition,
                    })?;
                }
                if let InsertOutcome::Rejected(rej) = outcome {
                    if self.dag.block(b).miner.is_adversary() {
                        self.analyzers.note_adversary_reject();
                    } else {
                        self.analyzers
                            .note_honest_reject(format!("view {w}, round {r}: {rej}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies any delivery reorderings bought for this round. An order must
    /// be a permutation of the node's queue.
    fn apply_reorders(
        &mut self,
        mut lanes: Vec<Vec<BlockIdx>>,
        r: Round,
    ) -> Result<Vec<Vec<BlockIdx>>, SimError> {
        for (w, queue) in lanes.iter_mut().enumerate() {
            let Some(order) = self.reorders.remove(&(r, w as u32)) else {
                continue;
            };
            let valid = order.len() == queue.len() && {
                let mut seen = vec![false; queue.len()];
                order.iter().all(|&i| {
                    i < queue.len() && !std::mem::replace(&mut seen[i], true)
                })
            };
            if !valid {
                return Err(SimError::Adversary(AdversaryError::InvalidAction(format!(
                    "delivery reorder for node {w} at round {r} is not a permutation of \
                     its {}-block queue",
                    queue.len()
                ))));
            }
            *queue = order.into_iter().map(|i| queue[i]).collect();
        }
        Ok(lanes)
    }

    /// Refreshes notarization and confirmation in every view (the adversary's
    /// bookkeeping view included, without analysis).
    fn settle(&mut self, r: Round, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        for w in 0..self.views.len() {
            let removed = self.views[w].take_vote_removals();
            self.analyzers.note_removals(w, &removed);
            let out = refresh_notarized_set(&mut self.views[w], &self.dag, &self.constants);
            self.analyzers.on_refresh(w, &self.dag, &out, r);
            if out.newly_notarized.is_empty() {
                continue;
            }
            if sink.enabled() {
                for info in &out.newly_notarized {
                    let blk = self.dag.block(info.block);
                    let data = self.dag.proposer_data(info.block);
                    sink.emit(&TraceEvent::Notarized {
                        round: r,
                        node: w as u32,
                        block: blk.id,
                        level: data.level,
                        depth: data.depth,
                        votes: info.votes,
                        v_underbar: info.v_underbar,
                        round_mined: blk.round_mined,
                        round_public: blk
                            .round_public
                            .expect("honest views only notarize published blocks"),
                    })?;
                }
            }
            let newly: Vec<BlockIdx> = out.newly_notarized.iter().map(|i| i.block).collect();
            let conf = advance_confirmation(&mut self.views[w], &self.dag, &newly);
            let first = self
                .analyzers
                .on_confirm(w, &self.views[w], &self.dag, &conf, r);
            if w < self.n {
                for &tx in &first {
                    self.mempools[w].remove(&tx);
                }
            } else if w == self.obs {
                for &tx in &first {
                    self.obs_mempool.remove(&tx);
                }
            }
            if sink.enabled() {
                for &b in &conf.newly_confirmed {
                    let data = self.dag.proposer_data(b);
                    sink.emit(&TraceEvent::Confirmed {
                        round: r,
                        node: w as u32,
                        block: self.dag.block(b).id,
                        level: data.level,
                        depth: data.depth,
                    })?;
                }
                if w == self.obs {
                    for &tx in &first {
                        sink.emit(&TraceEvent::TxConfirmed {
                            round: r,
                            node: w as u32,
                            tx,
                        })?;
                    }
                }
            }
        }
        // the omniscient view keeps the same schedule but feeds no analyzers
        let _ = self.adv_view.take_vote_removals();
        let _ = refresh_notarized_set(&mut self.adv_view, &self.dag, &self.constants);
        Ok(())
    }

    fn arrive_txs(&mut self, r: Round, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        let rate = self.config.tx_rate;
        if rate <= 0.0 || self.config.tx_stop_round.is_some_and(|stop| r > stop) {
            return Ok(());
        }
        let due = (rate * r as f64).floor() as u64;
        let prior = (rate * (r - 1) as f64).floor() as u64;
        for _ in prior..due {
            let tx = self.next_tx;
            self.next_tx += 1;
            self.txs_arrived += 1;
            self.analyzers.note_tx_arrival(tx, r);
            for pool in &mut self.mempools {
                pool.insert(tx);
            }
            self.obs_mempool.insert(tx);
            if sink.enabled() {
                sink.emit(&TraceEvent::TxArrived { round: r, tx })?;
            }
        }
        Ok(())
    }

    fn mine(&mut self, r: Round, sink: &mut dyn TraceSink) -> Result<Vec<ArrivalEvent>, SimError> {
        let mut opportunities = Vec::new();
        if self.sampler.is_some() {
            let drawn = self
                .sampler
                .as_ref()
                .expect("checked")
                .draw(r, &mut self.rng);
            for ev in drawn {
                if ev.target == BlockTarget::Proposer {
                    self.analyzers.note_proposer_win(r, ev.adversary);
                }
                if ev.adversary {
                    self.adversary_wins += 1;
                    opportunities.push(ev);
                } else {
                    self.honest_wins += 1;
                    let node = self.rng.random_range(0..self.n as u32);
                    self.assemble_honest(node, ev.target, r, sink)?;
                }
            }
        } else {
            let arrivals = self.script_arrivals.remove(&r).unwrap_or_default();
            for arrival in arrivals {
                if arrival.target == BlockTarget::Proposer {
                    self.analyzers
                        .note_proposer_win(r, arrival.miner == ScriptMiner::Adversary);
                }
                match arrival.miner {
                    ScriptMiner::Honest { node } => {
                        self.honest_wins += 1;
                        self.assemble_honest(node, arrival.target, r, sink)?;
                    }
                    ScriptMiner::Adversary => {
                        self.adversary_wins += 1;
                        opportunities.push(ArrivalEvent {
                            round: r,
                            target: arrival.target,
                            adversary: true,
                        });
                    }
                }
            }
        }
        Ok(opportunities)
    }

    fn assemble_honest(
        &mut self,
        node: u32,
        target: BlockTarget,
        r: Round,
        sink: &mut dyn TraceSink,
    ) -> Result<(), SimError> {
        let id = self.ids.fresh(&self.dag, &mut self.rng, Miner::Honest(node));
        let view = &self.views[node as usize];
        let idx = match target {
            BlockTarget::Proposer => {
                let txs: Vec<TxId> = self.mempools[node as usize].iter().copied().collect();
                let idx = assemble_honest_proposer(&mut self.dag, view, id, node, r, txs);
                self.analyzers
                    .note_honest_proposer_level(self.dag.proposer_data(idx).level);
                idx
            }
            BlockTarget::Voter(chain) => {
                assemble_honest_voter(&mut self.dag, view, id, node, r, chain)
            }
        };
        self.dag.mark_public(idx, r);
        let inserted = self.views[node as usize].insert_block(&self.dag, idx, r);
        if let InsertOutcome::Rejected(rej) = inserted {
            // impossible by construction; a failure here is an engine bug
            self.analyzers
                .note_honest_reject(format!("self-insert by node {node}, round {r}: {rej}"));
        }
        self.adv_view.insert_unchecked(&self.dag, idx, r);
        self.honest_mined[r as usize].push(idx);
        let view_count = self.views.len();
        let lanes = self
            .honest_lane
            .entry(r + 1)
            .or_insert_with(|| vec![Vec::new(); view_count]);
        for (w, lane) in lanes.iter_mut().enumerate() {
            if w != node as usize {
                lane.push(idx);
            }
        }
        if sink.enabled() {
            sink.emit(&self.mined_event(idx, r, true))?;
        }
        Ok(())
    }

    fn mined_event(&self, idx: BlockIdx, r: Round, public: bool) -> TraceEvent {
        let blk = self.dag.block(idx);
        match &blk.kind {
            crate::blockdag::BlockKind::Proposer(p) => TraceEvent::MinedProposer {
                round: r,
                block: blk.id,
                miner: blk.miner,
                level: p.level,
                depth: p.depth,
                txs: p.txs.len() as u32,
                public,
            },
            crate::blockdag::BlockKind::Voter(v) => TraceEvent::MinedVoter {
                round: r,
                block: blk.id,
                miner: blk.miner,
                chain: v.chain,
                votes: v.votes.iter().map(|&b| self.dag.block(b).id).collect(),
                public,
            },
        }
    }

    fn adversary_turn(
        &mut self,
        r: Round,
        opportunities: Vec<ArrivalEvent>,
        strategy: &mut dyn Strategy,
        sink: &mut dyn TraceSink,
    ) -> Result<(), SimError> {
        // every strategy gets its turn even with nothing to spend: releases
        // and bank flushes trigger on what the round brought, not on wins
        if opportunities
            .iter()
            .any(|o| o.target == BlockTarget::Proposer)
        {
            self.adv_mempool_snapshot = self.obs_mempool.iter().copied().collect();
        }
        let mut ctx = AdversaryCtx {
            round: r,
            params: &self.config.params,
            constants: &self.constants,
            dag: &mut self.dag,
            adv_view: &mut self.adv_view,
            observer: &self.views[self.obs],
            ids: &self.ids,
            rng: &mut self.rng,
            opportunities,
            honest_mined: &self.honest_mined,
            unconfirmed_txs: &self.adv_mempool_snapshot,
            actions: vec![],
        };
        strategy.on_round(&mut ctx)?;
        self.adv_unused += ctx.opportunities.len() as u64;
        let actions = ctx.actions;
        for action in actions {
            self.apply_action(action, r, sink)?;
        }
        Ok(())
    }

    fn apply_action(
        &mut self,
        action: AppliedAction,
        r: Round,
        sink: &mut dyn TraceSink,
    ) -> Result<(), SimError> {
        match action {
            AppliedAction::Assembled { block, withheld } => {
                self.adv_assembled += 1;
                if withheld {
                    self.withheld_outstanding.insert(block);
                    if self.dag.block(block).is_proposer() {
                        self.analyzers.record_withheld_proposer(block);
                    }
                }
                if sink.enabled() {
                    let public = self.dag.block(block).round_public.is_some();
                    sink.emit(&self.mined_event(block, r, public))?;
                }
            }
            AppliedAction::Published { block, front } => {
                self.adv_published += 1;
                self.withheld_outstanding.remove(&block);
                self.analyzers.record_published(block);
                let view_count = self.views.len();
                let in_front: Vec<bool> = match &front {
                    DeliveryFront::All => vec![true; self.n],
                    DeliveryFront::Nodes(nodes) => {
                        let mut f = vec![false; self.n];
                        for &w in nodes {
                            f[w as usize] = true;
                        }
                        f
                    }
                };
                let near = self
                    .adv_lane
                    .entry(r + 1)
                    .or_insert_with(|| vec![Vec::new(); view_count]);
                for (w, &is_front) in in_front.iter().enumerate() {
                    if is_front {
                        near[w].push(block);
                    }
                }
                near[self.obs].push(block);
                if in_front.iter().any(|&f| !f) {
                    let far = self
                        .adv_lane
                        .entry(r + 2)
                        .or_insert_with(|| vec![Vec::new(); view_count]);
                    for (w, &is_front) in in_front.iter().enumerate() {
                        if !is_front {
                            far[w].push(block);
                        }
                    }
                }
                if sink.enabled() {
                    sink.emit(&TraceEvent::Published {
                        round: r,
                        block: self.dag.block(block).id,
                        front,
                    })?;
                }
            }
            AppliedAction::Reordered { node, order } => {
                self.reorders.insert((r + 1, node), order);
            }
        }
        Ok(())
    }

    fn close_round(&mut self, r: Round, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        if let Some(genesis) = self.analyzers.end_of_round(r, &self.views, &self.dag) {
            sink.emit(&if genesis {
                TraceEvent::GenesisEnter { round: r }
            } else {
                TraceEvent::GenesisExit { round: r }
            })?;
        }
        if self.config.trace_level == TraceLevel::StateHash && sink.enabled() {
            sink.emit(&TraceEvent::StateHash {
                round: r,
                hash: self.state_hash(r),
            })?;
        }
        if self.config.strict && self.analyzers.violations().total() > 0 {
            let detail = self
                .analyzers
                .flags()
                .first()
                .cloned()
                .unwrap_or_else(|| "violation detected".into());
            return Err(SimError::ModelViolation(detail));
        }
        Ok(())
    }

    /// Digest of the protocol-visible state, for lockstep run comparison.
    fn state_hash(&self, r: Round) -> u64 {
        let mut h = Fnv1a::default();
        h.write_u64(r);
        h.write_u64(self.dag.len() as u64);
        for view in &self.views {
            h.write_u64(view.notarized_blocks().len() as u64);
            h.write_u64(self.dag.block(view.notarized_tip()).id);
            h.write_u64(view.max_notarized_level());
            h.write_u64(view.confirmed_chain().len() as u64);
            if let Some(&last) = view.confirmed_chain().last() {
                h.write_u64(self.dag.block(last).id);
            }
            for chain in 0..self.config.params.m {
                h.write_u64(self.dag.block(view.chain_tip(chain)).id);
            }
        }
        h.finish()
    }

    fn finish(mut self, r_max: Round, sink: &mut dyn TraceSink) -> Result<RunReport, SimError> {
        let analysis = self.analyzers.finalize(&self.dag, &self.views, r_max);
        if self.config.strict && self.analyzers.violations().total() > 0 {
            let detail = self
                .analyzers
                .flags()
                .first()
                .cloned()
                .unwrap_or_else(|| "violation detected".into());
            return Err(SimError::ModelViolation(detail));
        }
        let mut proposer_blocks = 0u64;
        let mut voter_blocks = 0u64;
        for idx in self.dag.indices().skip(self.config.params.m as usize + 1) {
            if self.dag.block(idx).is_proposer() {
                proposer_blocks += 1;
            } else {
                voter_blocks += 1;
            }
        }
        let observer = &self.views[self.obs];
        let honest_notarized = observer
            .notarized_blocks()
            .iter()
            .filter(|&&b| matches!(self.dag.block(b).miner, Miner::Honest(_)))
            .count() as u64;
        let mut honest_on_notarized_chains = 0u64;
        for view in &self.views {
            let mut b = view.notarized_tip();
            while self.dag.block(b).miner != Miner::Genesis {
                if matches!(self.dag.block(b).miner, Miner::Honest(_)) {
                    honest_on_notarized_chains += 1;
                }
                b = self.dag.proposer_data(b).depth_parent;
            }
        }
        let chain = ChainSummary {
            observer_notarized: observer.notarized_blocks().len() as u64 - 1,
            observer_confirmed: observer.confirmed_chain().len() as u64,
            observer_tip_depth: observer.notarized_tip_depth(&self.dag),
            observer_max_level: observer.max_notarized_level(),
            honest_notarized,
            honest_on_notarized_chains,
        };
        let violations = *self.analyzers.violations();
        let soft = *self.analyzers.soft();
        let report = RunReport {
            schema: REPORT_SCHEMA,
            config: self.config.clone(),
            constants: self.constants.clone(),
            verdict: RunReport::compute_verdict(&violations, &soft),
            totals: Totals {
                rounds: r_max,
                honest_wins: self.honest_wins,
                adversary_wins: self.adversary_wins,
                proposer_blocks,
                voter_blocks,
                txs_arrived: self.txs_arrived,
            },
            chain,
            violations,
            soft,
            adversary: AdversarySummary {
                assembled: self.adv_assembled,
                published: self.adv_published,
                withheld_unpublished: self.withheld_outstanding.len() as u64,
                unused_wins: self.adv_unused,
            },
            genesis: analysis.genesis,
            classification: analysis.classification,
            latency: analysis.latency,
            flags: self.analyzers.flags().to_vec(),
        };
        sink.emit(&TraceEvent::End {
            rounds: r_max,
            blocks: self.dag.len() as u64,
            observer_notarized: chain.observer_notarized,
            observer_confirmed: chain.observer_confirmed,
        })?;
        sink.finish()?;
        Ok(report)
    }
}
