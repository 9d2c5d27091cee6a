//! Arrival generation, sortition, id allocation, and honest block assembly.
//!
//! The simulator draws aggregate arrival counts per round (Poisson or
//! Bernoulli) and then assembles content from the winning node's view — the
//! nonce search and header hashing of a real miner collapse away under the
//! random-oracle model. The hash-interval [`sortition`] classifier is kept as
//! its own operation: it documents the type intervals and backs the
//! statistical acceptance test, while the round loop samples counts directly
//! (identical in distribution).

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockdag::{BlockId, BlockIdx, GlobalDag, Miner, Round, TxId};
use crate::blockdag::NodeView;
use crate::params::{ArrivalMode, ProtocolParams};

/// What kind of block a mining win produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTarget {
    Proposer,
    Voter(u32),
}

/// One mining win. Honest wins are assigned to a node by the simulator when
/// the block is assembled; adversary wins go to the strategy as raw
/// opportunities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub round: Round,
    pub target: BlockTarget,
    pub adversary: bool,
}

/// Per-round arrival sampler: proposer count, then per-chain voter counts in
/// chain order, each win independently adversary with probability β. The
/// fixed draw order is part of the determinism contract.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    mode: ArrivalMode,
    beta: f64,
    m: u32,
    fp_bar: f64,
    fv_bar: f64,
    poisson_p: Option<Poisson<f64>>,
    poisson_v: Option<Poisson<f64>>,
}

impl ArrivalSampler {
    pub fn new(p: &ProtocolParams) -> Self {
        let mk = |rate: f64| {
            (rate > 0.0).then(|| Poisson::new(rate).expect("positive finite rate"))
        };
        ArrivalSampler {
            mode: p.arrival_mode,
            beta: p.beta,
            m: p.m,
            fp_bar: p.fp_bar,
            fv_bar: p.fv_bar,
            poisson_p: match p.arrival_mode {
                ArrivalMode::Poisson => mk(p.fp_bar),
                ArrivalMode::Bernoulli => None,
            },
            poisson_v: match p.arrival_mode {
                ArrivalMode::Poisson => mk(p.fv_bar),
                ArrivalMode::Bernoulli => None,
            },
        }
    }

    pub fn draw<R: Rng>(&self, round: Round, rng: &mut R) -> Vec<ArrivalEvent> {
        let mut events = Vec::new();
        let push = |target: BlockTarget, count: u64, rng: &mut R, out: &mut Vec<ArrivalEvent>| {
            for _ in 0..count {
                out.push(ArrivalEvent {
                    round,
                    target,
                    adversary: rng.random_bool(self.beta),
                });
            }
        };
        match self.mode {
            ArrivalMode::Poisson => {
                let cp = self.poisson_p.map_or(0, |d| d.sample(rng) as u64);
                push(BlockTarget::Proposer, cp, rng, &mut events);
                for c in 0..self.m {
                    let cv = self.poisson_v.map_or(0, |d| d.sample(rng) as u64);
                    push(BlockTarget::Voter(c), cv, rng, &mut events);
                }
            }
            ArrivalMode::Bernoulli => {
                let cp = u64::from(self.fp_bar > 0.0 && rng.random_bool(self.fp_bar));
                push(BlockTarget::Proposer, cp, rng, &mut events);
                for c in 0..self.m {
                    let cv = u64::from(self.fv_bar > 0.0 && rng.random_bool(self.fv_bar));
                    push(BlockTarget::Voter(c), cv, rng, &mut events);
                }
            }
        }
        events
    }
}

/// Convenience wrapper matching the one-shot operation shape.
pub fn draw_arrivals<R: Rng>(round: Round, p: &ProtocolParams, rng: &mut R) -> Vec<ArrivalEvent> {
    ArrivalSampler::new(p).draw(round, rng)
}

/// The configured type intervals do not fit in the hash range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sortition intervals need {needed} hash values but the range is {available}")]
pub struct RangeOverflow {
    pub needed: u128,
    pub available: u128,
}

/// Sortition result for one hash value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortitionResult {
    Voter(u32),
    Proposer,
    None,
}

/// Classifies a hash value into a block type by interval position:
/// `hash ≤ m·f_v` → voter chain `min(hash / f_v, m−1)`;
/// `m·f_v < hash ≤ m·f_v + f_p` → proposer (boundary inclusive);
/// anything above → none. `f_v` and `f_p` are interval widths in hash units.
pub fn sortition(
    hash_value: u128,
    m: u32,
    f_v: u128,
    f_p: u128,
    kappa: u32,
) -> Result<SortitionResult, RangeOverflow> {
    debug_assert!(m >= 1 && kappa <= 64);
    let range = 1u128 << kappa;
    let mv = u128::from(m) * f_v;
    let needed = mv + f_p;
    if needed > range {
        return Err(RangeOverflow {
            needed,
            available: range,
        });
    }
    if f_v > 0 && hash_value <= mv {
        let i = (hash_value / f_v) as u32;
        return Ok(SortitionResult::Voter(i.min(m - 1)));
    }
    if hash_value > mv && hash_value <= mv + f_p {
        return Ok(SortitionResult::Proposer);
    }
    Ok(SortitionResult::None)
}

/// How fresh ids are positioned within the κ-bit space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdPolicy {
    /// Uniform over the whole range (stochastic runs).
    #[default]
    Uniform,
    /// Adversary ids get the top bit cleared, honest ids get it set, so every
    /// smallest-id tie-break resolves toward the adversary. Scripted attacks
    /// use this to pin down the worst-case hash luck the analysis grants the
    /// adversary; it is a harness parameter, not a protocol feature.
    AdversaryWinsTies,
}

/// Draws fresh κ-bit block ids, redrawing on collision with any existing id.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    kappa: u32,
    policy: IdPolicy,
}

impl IdAllocator {
    pub fn new(kappa: u32, policy: IdPolicy) -> Self {
        assert!((8..=64).contains(&kappa), "kappa out of range");
        IdAllocator { kappa, policy }
    }

    pub fn adversary_wins_ties(&self) -> bool {
        self.policy == IdPolicy::AdversaryWinsTies
    }

    pub fn fresh<R: Rng>(&self, dag: &GlobalDag, rng: &mut R, miner: Miner) -> BlockId {
        let mask = if self.kappa == 64 {
            u64::MAX
        } else {
            (1u64 << self.kappa) - 1
        };
        let top = 1u64 << (self.kappa - 1);
        loop {
            let mut id = rng.random::<u64>() & mask;
            if self.policy == IdPolicy::AdversaryWinsTies {
                id = match miner {
                    Miner::Adversary => id & !top,
                    _ => id | top,
                };
            }
            if dag.idx_of(id).is_none() {
                return id;
            }
        }
    }
}

/// Assembles an honest proposer block from `view`: level parent is the
/// deepest-level proposer seen (earliest received on ties), depth parent is
/// the notarized tip, payload is the caller's unconfirmed transactions. The
/// block is added to the DAG but not published or inserted anywhere.
pub fn assemble_honest_proposer(
    dag: &mut GlobalDag,
    view: &NodeView,
    id: BlockId,
    node: u32,
    round: Round,
    txs: Vec<TxId>,
) -> BlockIdx {
    let level_parent = view.level_parent_candidate();
    let depth_parent = view.notarized_tip();
    dag.add_proposer(id, Miner::Honest(node), round, level_parent, depth_parent, txs)
}

/// The proposer blocks an honest voter block on `chain` would vote for right
/// now: for each level above everything the chain's longest-chain ancestors
/// voted, the earliest-received block at depth (notarized tip + 1), in
/// increasing level order. Levels with no block at that depth are skipped.
pub fn eligible_votes(view: &NodeView, dag: &GlobalDag, chain: u32) -> Vec<BlockIdx> {
    let tip = view.chain_tip(chain);
    let min_level = dag.voter_data(tip).cum_voted_level + 1;
    let target_depth = view.notarized_tip_depth(dag) + 1;
    match view.eligible_by_depth.get(target_depth as usize) {
        Some(by_level) => by_level.range(min_level..).map(|(_, &b)| b).collect(),
        None => Vec::new(),
    }
}

/// Assembles an honest voter block on `chain`: parent is the longest-chain
/// tip, votes are [`eligible_votes`] (possibly empty). Added to the DAG but
/// not published or inserted.
pub fn assemble_honest_voter(
    dag: &mut GlobalDag,
    view: &NodeView,
    id: BlockId,
    node: u32,
    round: Round,
    chain: u32,
) -> BlockIdx {
    let parent = view.chain_tip(chain);
    let votes = eligible_votes(view, dag, chain);
    dag.add_voter(id, Miner::Honest(node), round, chain, parent, votes)
}
