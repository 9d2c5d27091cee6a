//! Online invariant trackers and end-of-run trace analyses.
//!
//! The trackers ride along with the simulation and check, per view and per
//! round, the structural promises the protocol makes:
//!
//! * **vote lower bound** — once a refresh records a discounted tally for a
//!   proposer block, that block's raw vote count in the same view never sinks
//!   below it (reorgs may shuffle votes but not un-earn them);
//! * **level uniqueness** — no view notarizes two blocks at one level;
//! * **private level order** — a block mined withheld and published later can
//!   only notarize above every level the observer had notarized before the
//!   publication round;
//! * **depth floor** — no block published after round `r` with depth below
//!   the observer's round-`r` notarized tip is ever notarized;
//! * **ledger consistency** — all views' confirmed chains agree pointwise
//!   (each is a prefix of the longest seen so far), and no single view ever
//!   replaces its confirmed chain rather than extending it.
//!
//! At the end of a run the analyzer closes the regime bookkeeping, checks the
//! proposer-win counting bound over every no-progress interval, classifies
//! each honest proposer block by why it did or did not notarize quickly, and
//! aggregates confirmation latency over the honest nodes.

use std::collections::{HashMap, HashSet};

use super::report::{
    ClassificationHistogram, GenesisInterval, GenesisSummary, LatencyStats, SoftFlags,
    ViolationCounts,
};
use crate::blockdag::{BlockIdx, Depth, GlobalDag, Level, NodeView, Round, TxId};
use crate::confirmation::ConfirmOutcome;
use crate::notarization::{notarization_threshold, RefreshOutcome};
use crate::params::{DerivedConstants, ProtocolParams};

/// Detail messages stop accumulating past this count (the counters keep
/// counting).
const MAX_FLAGS: usize = 64;

/// Absolute slack when comparing a raw vote count against a recorded
/// discounted tally (tallies are sums of small floats).
const VOTE_FLOOR_SLACK: f64 = 1e-9;

/// Whether a withheld proposer block could still be notarized in the given
/// view: nothing is notarized at or above its level, its depth is not behind
/// the view's notarized tip, and fewer than a notarization quorum of chains
/// have committed (with a deep vote) to something that excludes it.
///
/// A chain is committed against the block if it carries a vote at the block's
/// level for a different proposer at depth `k_min` or more, or if it skipped
/// the level and its first vote above is that deep (revoting the level would
/// mean forking below a counted vote).
pub fn is_notarizable(
    dag: &GlobalDag,
    view: &NodeView,
    block: BlockIdx,
    k_min: u64,
    m: u32,
) -> bool {
    if view.is_notarized(block) {
        return false;
    }
    let data = dag.proposer_data(block);
    if view.max_notarized_level() >= data.level {
        return false;
    }
    if data.depth < view.notarized_tip_depth(dag) {
        return false;
    }
    let mut committed_against = 0u32;
    for chain in 0..m {
        let cs = &view.chains[chain as usize];
        let deep_above = || {
            cs.votes
                .range(data.level + 1..)
                .next()
                .is_some_and(|(_, cv)| view.vote_depth(chain, cv.pos) >= k_min)
        };
        let against = match cs.votes.get(&data.level) {
            Some(cv) if cv.proposer == block => false,
            Some(cv) => view.vote_depth(chain, cv.pos) >= k_min || deep_above(),
            None => deep_above(),
        };
        committed_against += u32::from(against);
    }
    committed_against < notarization_threshold(m)
}

/// What [`Analyzers::finalize`] hands back for the report.
pub struct FinalAnalysis {
    pub genesis: GenesisSummary,
    pub classification: ClassificationHistogram,
    pub latency: LatencyStats,
}

pub struct Analyzers {
    /// Honest node count; the observer sits at view index `n`.
    n: usize,
    m: u32,
    k_min: u64,
    delta_r: u64,
    // --- per-round series, index = round (entry 0 is the initial state) ---
    d_series: Vec<Depth>,
    l_series: Vec<Level>,
    cum_wins_honest: Vec<u64>,
    cum_wins_adversary: Vec<u64>,
    wins_honest: u64,
    wins_adversary: u64,
    /// Every proposer-target win round, both miners, in order (loner check).
    proposer_arrivals: Vec<Round>,
    // --- vote lower bound (per view) ---
    vote_floor: Vec<HashMap<BlockIdx, f64>>,
    removed_this_round: Vec<HashSet<BlockIdx>>,
    // --- level uniqueness (per view) ---
    notarized_levels: Vec<HashMap<Level, BlockIdx>>,
    // --- observer notarization history ---
    obs_not_rounds: Vec<(Round, BlockIdx)>,
    obs_not_round_of: HashMap<BlockIdx, Round>,
    // --- cross-view ledger registry ---
    registry: Vec<BlockIdx>,
    checked_len: Vec<usize>,
    // --- regime bookkeeping ---
    private_proposers: Vec<BlockIdx>,
    max_honest_level: Level,
    in_genesis: bool,
    open_interval_start: Option<Round>,
    intervals: Vec<GenesisInterval>,
    // --- latency ---
    tx_arrival: HashMap<TxId, Round>,
    first_confirm: Vec<HashMap<TxId, Round>>,
    // --- findings ---
    violations: ViolationCounts,
    soft: SoftFlags,
    flags: Vec<String>,
}

impl Analyzers {
    pub fn new(params: &ProtocolParams, constants: &DerivedConstants) -> Self {
        let n = params.honest_node_count as usize;
        let views = n + 1;
        Analyzers {
            n,
            m: params.m,
            k_min: constants.k_min,
            delta_r: constants.delta_r,
            d_series: vec![0],
            l_series: vec![0],
            cum_wins_honest: vec![0],
            cum_wins_adversary: vec![0],
            wins_honest: 0,
            wins_adversary: 0,
            proposer_arrivals: Vec::new(),
            vote_floor: vec![HashMap::new(); views],
            removed_this_round: vec![HashSet::new(); views],
            notarized_levels: vec![HashMap::new(); views],
            obs_not_rounds: Vec::new(),
            obs_not_round_of: HashMap::new(),
            registry: Vec::new(),
            checked_len: vec![0; views],
            private_proposers: Vec::new(),
            max_honest_level: 0,
            in_genesis: true,
            open_interval_start: None,
            intervals: Vec::new(),
            tx_arrival: HashMap::new(),
            first_confirm: vec![HashMap::new(); views],
            violations: ViolationCounts::default(),
            soft: SoftFlags::default(),
            flags: Vec::new(),
        }
    }

    pub fn violations(&self) -> &ViolationCounts {
        &self.violations
    }

    pub fn soft(&self) -> &SoftFlags {
        &self.soft
    }

    pub fn flags(&self) -> &[String] {
        &self.flags
    }

    pub fn flag(&mut self, msg: String) {
        if self.flags.len() < MAX_FLAGS {
            self.flags.push(msg);
        }
    }

    pub fn note_param_warning(&mut self, msg: String) {
        self.soft.param_warnings += 1;
        self.flag(msg);
    }

    /// Records a proposer-target mining win (used by the counting bound).
    pub fn note_proposer_win(&mut self, round: Round, adversary: bool) {
        self.proposer_arrivals.push(round);
        if adversary {
            self.wins_adversary += 1;
        } else {
            self.wins_honest += 1;
        }
    }

    /// Tracks the highest level any honestly mined proposer block has reached.
    pub fn note_honest_proposer_level(&mut self, level: Level) {
        self.max_honest_level = self.max_honest_level.max(level);
    }

    pub fn note_honest_reject(&mut self, detail: String) {
        self.violations.honest_rejects += 1;
        self.flag(format!("honest block rejected: {detail}"));
    }

    pub fn note_adversary_reject(&mut self) {
        self.soft.adversary_rejects += 1;
    }

    pub fn note_tx_arrival(&mut self, tx: TxId, round: Round) {
        self.tx_arrival.insert(tx, round);
    }

    /// A withheld adversary proposer block entered the private set.
    pub fn record_withheld_proposer(&mut self, block: BlockIdx) {
        self.private_proposers.push(block);
    }

    /// A block was released; it leaves the private set if it was in it.
    pub fn record_published(&mut self, block: BlockIdx) {
        self.private_proposers.retain(|&b| b != block);
    }

    /// Reorg vote removals drained from a view; checked against recorded
    /// floors at the end of the round.
    pub fn note_removals(&mut self, view: usize, removed: &[(u32, BlockIdx)]) {
        let set = &mut self.removed_this_round[view];
        for &(_, block) in removed {
            set.insert(block);
        }
    }

    /// Processes one notarization refresh of one view.
    pub fn on_refresh(
        &mut self,
        view_idx: usize,
        dag: &GlobalDag,
        out: &RefreshOutcome,
        round: Round,
    ) {
        for &(block, _count, v_underbar) in &out.tallies {
            if v_underbar > 0.0 {
                let floor = self.vote_floor[view_idx].entry(block).or_insert(0.0);
                if v_underbar > *floor {
                    *floor = v_underbar;
                }
            }
        }
        for info in &out.newly_notarized {
            let data = dag.proposer_data(info.block);
            match self.notarized_levels[view_idx].entry(data.level) {
                std::collections::hash_map::Entry::Occupied(e) if *e.get() != info.block => {
                    self.violations.level_uniqueness += 1;
                    let prior = *e.get();
                    self.flag(format!(
                        "view {view_idx} notarized two blocks at level {}: {} then {}",
                        data.level,
                        dag.block(prior).id,
                        dag.block(info.block).id,
                    ));
                }
                std::collections::hash_map::Entry::Occupied(_) => {}
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(info.block);
                }
            }
            if view_idx == self.n {
                self.obs_not_rounds.push((round, info.block));
                self.obs_not_round_of.insert(info.block, round);
                let blk = dag.block(info.block);
                let round_public = blk
                    .round_public
                    .expect("a block notarized by an honest view has been published");
                // series entries exist through round - 1, and publication
                // precedes delivery precedes notarization by at least a round
                let before = (round_public - 1) as usize;
                if round_public > blk.round_mined {
                    let l_before = self.l_series[before.min(self.l_series.len() - 1)];
                    if data.level <= l_before {
                        self.violations.private_level_order += 1;
                        self.flag(format!(
                            "withheld block {} notarized at level {} <= {} already notarized \
                             when it was published (round {round_public})",
                            blk.id, data.level, l_before,
                        ));
                    }
                }
                let d_before = self.d_series[before.min(self.d_series.len() - 1)];
                if data.depth < d_before {
                    self.violations.depth_floor += 1;
                    self.flag(format!(
                        "block {} notarized at depth {} below the observer tip depth {} at \
                         its publication round {round_public}",
                        blk.id, data.depth, d_before,
                    ));
                }
            }
        }
    }

    /// Processes one confirmation advance of one view. Returns the
    /// transactions this view confirmed for the first time.
    pub fn on_confirm(
        &mut self,
        view_idx: usize,
        view: &NodeView,
        dag: &GlobalDag,
        out: &ConfirmOutcome,
        round: Round,
    ) -> Vec<TxId> {
        if out.rewrite {
            self.violations.ledger_rewrites += 1;
            self.flag(format!(
                "view {view_idx} replaced its confirmed chain at round {round}"
            ));
            self.checked_len[view_idx] = 0;
        }
        if out.fork_conflict {
            self.soft.fork_conflicts += 1;
            self.flag(format!(
                "view {view_idx} saw confirmation triples on forked notarized chains at \
                 round {round}"
            ));
        }
        let mut first = Vec::new();
        for &block in &out.newly_confirmed {
            for &tx in &dag.proposer_data(block).txs {
                if let std::collections::hash_map::Entry::Vacant(e) =
                    self.first_confirm[view_idx].entry(tx)
                {
                    e.insert(round);
                    first.push(tx);
                }
            }
        }
        if out.newly_confirmed.is_empty() && !out.rewrite {
            return first;
        }
        // cross-view agreement: every confirmed chain must extend or prefix
        // the longest confirmed chain any view has shown so far
        let chain = view.confirmed_chain();
        for i in self.checked_len[view_idx]..chain.len() {
            if i < self.registry.len() {
                if chain[i] != self.registry[i] {
                    self.violations.consistency += 1;
                    self.flag(format!(
                        "view {view_idx} confirmed {} at position {i} where another view \
                         confirmed {}",
                        dag.block(chain[i]).id,
                        dag.block(self.registry[i]).id,
                    ));
                    break;
                }
            } else {
                self.registry.push(chain[i]);
            }
        }
        self.checked_len[view_idx] = chain.len();
        first
    }

    /// Whether every withheld adversary proposer block is both harmless in
    /// level (not above all honest proposer blocks) and no longer
    /// notarizable. Blocks that can never matter again are pruned.
    fn evaluate_genesis(&mut self, dag: &GlobalDag, observer: &NodeView) -> bool {
        let l_notarized = observer.max_notarized_level();
        let max_honest = self.max_honest_level;
        self.private_proposers.retain(|&b| {
            let level = dag.proposer_data(b).level;
            // below both ceilings: can never again be notarizable (levels at
            // or under the notarized max are dead) nor lead the honest levels
            !(level <= l_notarized && level <= max_honest)
        });
        if self.private_proposers.is_empty() {
            return true;
        }
        for i in 0..self.private_proposers.len() {
            let b = self.private_proposers[i];
            if dag.proposer_data(b).level > max_honest {
                return false;
            }
            if is_notarizable(dag, observer, b, self.k_min, self.m) {
                return false;
            }
        }
        true
    }

    fn close_interval(&mut self, start: Round, end: Round) {
        let honest =
            self.cum_wins_honest[end as usize] - self.cum_wins_honest[start as usize - 1];
        let adversary =
            self.cum_wins_adversary[end as usize] - self.cum_wins_adversary[start as usize - 1];
        let pass = adversary + 1 >= honest;
        // The counting bound is proved for loner arrivals only: every proposer
        // win at least delta_r rounds from the next. A closer pair near the
        // interval voids the claim for it, so a failed check is downgraded to
        // a soft flag.
        let lo = start.saturating_sub(self.delta_r);
        let hi = end.saturating_add(self.delta_r);
        let loner_breach = self
            .proposer_arrivals
            .windows(2)
            .any(|w| w[1] - w[0] < self.delta_r && w[1] >= lo && w[0] <= hi);
        if !pass {
            let detail = format!(
                "no-progress interval [{start}, {end}]: {honest} honest proposer wins vs \
                 {adversary} adversary wins"
            );
            if loner_breach {
                self.soft.loner_breaches += 1;
                self.flag(format!("{detail} (arrivals within delta_r, counting not claimed)"));
            } else {
                self.violations.counting_failures += 1;
                self.flag(detail);
            }
        }
        self.intervals.push(GenesisInterval {
            start,
            end,
            honest_proposer_wins: honest,
            adversary_proposer_wins: adversary,
            pass,
            loner_breach,
        });
    }

    /// End-of-round bookkeeping: vote-floor checks, series snapshots, regime
    /// evaluation. Returns `Some(is_genesis)` when the regime flipped.
    pub fn end_of_round(
        &mut self,
        round: Round,
        views: &[NodeView],
        dag: &GlobalDag,
    ) -> Option<bool> {
        // vote lower bound: every block knocked off a chain this round must
        // still hold its recorded floor at the round boundary
        for view_idx in 0..views.len() {
            if self.removed_this_round[view_idx].is_empty() {
                continue;
            }
            let mut removed: Vec<BlockIdx> =
                self.removed_this_round[view_idx].drain().collect();
            removed.sort_unstable();
            for block in removed {
                let Some(&floor) = self.vote_floor[view_idx].get(&block) else {
                    continue;
                };
                let count = f64::from(views[view_idx].vote_count(block));
                if count < floor - VOTE_FLOOR_SLACK {
                    self.violations.vote_lower_bound += 1;
                    self.flag(format!(
                        "view {view_idx} round {round}: block {} vote count {count} fell \
                         below its recorded tally {floor}",
                        dag.block(block).id,
                    ));
                }
            }
        }
        // per-round series
        let observer = &views[self.n];
        self.d_series.push(observer.notarized_tip_depth(dag));
        self.l_series.push(observer.max_notarized_level());
        self.cum_wins_honest.push(self.wins_honest);
        self.cum_wins_adversary.push(self.wins_adversary);
        debug_assert_eq!(self.d_series.len() as u64, round + 1);
        // regime transition
        let genesis = self.evaluate_genesis(dag, observer);
        let flipped = genesis != self.in_genesis;
        if flipped {
            if genesis {
                let start = self
                    .open_interval_start
                    .take()
                    .expect("leaving the regime records a start");
                self.close_interval(start, round - 1);
            } else {
                self.open_interval_start = Some(round);
            }
            self.in_genesis = genesis;
        }
        flipped.then_some(genesis)
    }

    /// Confirmation latency over the honest nodes: a transaction counts once
    /// every honest node has it confirmed, at the round the last one does.
    fn latency(&self) -> LatencyStats {
        let mut samples: Vec<u64> = Vec::new();
        let mut censored = 0u64;
        for (&tx, &arrived) in &self.tx_arrival {
            let mut worst = 0;
            let mut everywhere = true;
            for node in 0..self.n {
                match self.first_confirm[node].get(&tx) {
                    Some(&r) => worst = worst.max(r),
                    None => {
                        everywhere = false;
                        break;
                    }
                }
            }
            if everywhere {
                samples.push(worst - arrived);
            } else {
                censored += 1;
            }
        }
        samples.sort_unstable();
        let confirmed = samples.len() as u64;
        if samples.is_empty() {
            return LatencyStats {
                confirmed,
                censored,
                ..LatencyStats::default()
            };
        }
        let nearest_rank = |q: f64| samples[((q * samples.len() as f64).ceil() as usize).max(1) - 1];
        LatencyStats {
            confirmed,
            censored,
            mean: Some(samples.iter().sum::<u64>() as f64 / samples.len() as f64),
            p50: Some(nearest_rank(0.50)),
            p95: Some(nearest_rank(0.95)),
            max: samples.last().copied(),
        }
    }

    /// Classifies every honestly mined proposer block by why it did or did
    /// not notarize within the settling window after its mining round.
    fn classify(&mut self, dag: &GlobalDag) -> ClassificationHistogram {
        let mut hist = ClassificationHistogram::default();
        let mut by_level: HashMap<Level, Vec<BlockIdx>> = HashMap::new();
        let mut honest: Vec<BlockIdx> = Vec::new();
        for idx in dag.indices() {
            let blk = dag.block(idx);
            if !blk.is_proposer() || blk.miner == crate::blockdag::Miner::Genesis {
                continue;
            }
            by_level
                .entry(dag.proposer_data(idx).level)
                .or_default()
                .push(idx);
            if blk.miner.is_honest() {
                honest.push(idx);
            }
        }
        honest.sort_unstable_by_key(|&h| (dag.block(h).round_mined, h));
        // stalled blocks already classified as balanced, for the honest /
        // adversary attribution of depth displacements: (round, level, depth)
        let mut balanced: Vec<(Round, Level, Depth)> = Vec::new();
        let not_before = |block: BlockIdx, end: Round, map: &HashMap<BlockIdx, Round>| {
            map.get(&block).is_some_and(|&rn| rn < end)
        };
        for h in honest {
            let blk = dag.block(h);
            let data = dag.proposer_data(h);
            let mined = blk.round_mined;
            let window_end = mined.saturating_add(self.delta_r);
            // 1. notarized in time
            if not_before(h, window_end, &self.obs_not_round_of) {
                hist.notarized += 1;
                continue;
            }
            // 2 & 3. an adversary block at the same level, released within
            // the window: notarized in time displaces, unnotarized stalls
            let mut displaced = false;
            let mut stalled = false;
            for &a in by_level.get(&data.level).into_iter().flatten() {
                if a == h || !dag.block(a).miner.is_adversary() {
                    continue;
                }
                let Some(published) = dag.block(a).round_public else {
                    continue;
                };
                if published >= window_end {
                    continue;
                }
                if not_before(a, window_end, &self.obs_not_round_of) {
                    displaced = true;
                    break;
                }
                stalled = true;
            }
            if displaced {
                hist.level_private += 1;
                continue;
            }
            if stalled {
                hist.balance += 1;
                balanced.push((mined, data.level, data.depth));
                continue;
            }
            // 4–6. depth displacement: something else notarized during the
            // window at exactly the depth the observer tip was about to take
            let depth_target = self.d_series[mined as usize] + 1;
            let from = self.obs_not_rounds.partition_point(|&(rn, _)| rn < mined);
            let in_window = self.obs_not_rounds[from..]
                .iter()
                .take_while(|&&(rn, _)| rn < window_end)
                .map(|&(_, b)| b)
                .filter(|&b| dag.proposer_data(b).depth == depth_target);
            let mut long_public: Option<BlockIdx> = None;
            let mut fresh_small: Option<BlockIdx> = None;
            let mut fresh_large: Option<BlockIdx> = None;
            for b in in_window {
                let Some(published) = dag.block(b).round_public else {
                    continue;
                };
                if published < mined.saturating_sub(self.delta_r) {
                    long_public.get_or_insert(b);
                } else if dag.block(b).miner.is_adversary() && published < window_end {
                    let level = dag.proposer_data(b).level;
                    if level < data.level {
                        fresh_small.get_or_insert(b);
                    } else if level > data.level {
                        fresh_large.get_or_insert(b);
                    }
                }
            }
            if let Some(b) = long_public {
                if dag.block(b).miner.is_honest() {
                    hist.public_honest += 1;
                } else {
                    let level = dag.proposer_data(b).level;
                    let published = dag.block(b).round_public.unwrap();
                    let matched = balanced.iter().find(|&&(r_stall, l_stall, _)| {
                        r_stall < mined
                            && l_stall == level
                            && published >= r_stall
                            && published < r_stall.saturating_add(self.delta_r)
                    });
                    match matched {
                        Some(&(_, _, stall_depth)) => {
                            hist.public_honest += 1;
                            // the displacing pair must sit at one depth
                            if data.depth != stall_depth {
                                self.violations.fact_one += 1;
                                self.flag(format!(
                                    "depth-displaced block {} at depth {} matched a stalled \
                                     block at depth {stall_depth}",
                                    blk.id, data.depth,
                                ));
                            }
                        }
                        None => hist.public_adversary += 1,
                    }
                }
                continue;
            }
            if fresh_small.is_some() {
                hist.depth_private_small += 1;
                continue;
            }
            if fresh_large.is_some() {
                hist.depth_private_large += 1;
                continue;
            }
            hist.unclassified += 1;
            self.soft.unclassified_blocks += 1;
            self.flag(format!(
                "honest proposer block {} (round {mined}, level {}, depth {}) fits no \
                 stall class",
                blk.id, data.level, data.depth,
            ));
        }
        hist
    }

    /// Closes the bookkeeping after the last round and runs the end-of-run
    /// analyses.
    pub fn finalize(
        &mut self,
        dag: &GlobalDag,
        views: &[NodeView],
        r_max: Round,
    ) -> FinalAnalysis {
        if let Some(start) = self.open_interval_start.take() {
            self.close_interval(start, r_max);
            self.in_genesis = true;
        }
        // final vote-floor sweep: every recorded tally must still be covered
        for view_idx in 0..views.len() {
            let mut floors: Vec<(BlockIdx, f64)> = self.vote_floor[view_idx]
                .iter()
                .map(|(&b, &f)| (b, f))
                .collect();
            floors.sort_unstable_by_key(|&(b, _)| b);
            for (block, floor) in floors {
                let count = f64::from(views[view_idx].vote_count(block));
                if count < floor - VOTE_FLOOR_SLACK {
                    self.violations.vote_lower_bound += 1;
                    self.flag(format!(
                        "view {view_idx} final state: block {} vote count {count} below its \
                         recorded tally {floor}",
                        dag.block(block).id,
                    ));
                }
            }
        }
        let non_genesis_rounds = self
            .intervals
            .iter()
            .map(|i| i.end - i.start + 1)
            .sum::<u64>();
        let classification = self.classify(dag);
        FinalAnalysis {
            genesis: GenesisSummary {
                non_genesis_rounds,
                intervals: std::mem::take(&mut self.intervals),
            },
            classification,
            latency: self.latency(),
        }
    }
}
