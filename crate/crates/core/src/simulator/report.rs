//! End-of-run report: everything a run learned, in one serializable value.
//!
//! The report splits findings into hard **violations** (invariants the
//! protocol model promises; any nonzero count fails the run) and **soft
//! flags** (conditions worth surfacing that are legitimate under attack or
//! heavy load, such as notarized forks short of a ledger rewrite). The
//! verdict is `Fail` on any violation, `Flagged` on soft findings only, and
//! `Pass` otherwise.

use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::blockdag::{Depth, Level, Round};
use crate::params::DerivedConstants;

/// Bumped whenever the report schema changes shape.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Flagged,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Flagged => "flagged",
            Verdict::Fail => "fail",
        })
    }
}

/// Mining and transaction volume totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub rounds: Round,
    pub honest_wins: u64,
    pub adversary_wins: u64,
    pub proposer_blocks: u64,
    pub voter_blocks: u64,
    pub txs_arrived: u64,
}

/// Final shape of the observer's chain state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub observer_notarized: u64,
    pub observer_confirmed: u64,
    pub observer_tip_depth: Depth,
    pub observer_max_level: Level,
    /// Honest-mined blocks in the observer's notarized set.
    pub honest_notarized: u64,
    /// Honest-mined blocks on any view's depth-parent path from its notarized
    /// tip back to genesis, summed over views. Zero means the adversary owns
    /// every longest notarized chain outright.
    pub honest_on_notarized_chains: u64,
}

/// Hard invariant failures. Every field is a count of independent detections;
/// any nonzero field makes the verdict `Fail`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    /// Two views' confirmed chains disagreed at some position.
    pub consistency: u64,
    /// A proposer block's raw vote count in some view sank below a discounted
    /// tally previously recorded for it.
    pub vote_lower_bound: u64,
    /// One view notarized two blocks at the same proposer level.
    pub level_uniqueness: u64,
    /// A withheld-then-published block was notarized at or below a level the
    /// observer had already notarized before publication.
    pub private_level_order: u64,
    /// A block was notarized whose depth is below the observer's notarized
    /// tip depth at publication time.
    pub depth_floor: u64,
    /// A view's confirmed chain was replaced rather than extended.
    pub ledger_rewrites: u64,
    /// An honestly mined block was rejected by some view's receive rules.
    pub honest_rejects: u64,
    /// A no-progress interval where the adversary's proposer wins could not
    /// account for the stall.
    pub counting_failures: u64,
    /// A displacing block and its matched stalled block disagreed in depth.
    pub fact_one: u64,
}

impl ViolationCounts {
    pub fn total(&self) -> u64 {
        self.consistency
            + self.vote_lower_bound
            + self.level_uniqueness
            + self.private_level_order
            + self.depth_floor
            + self.ledger_rewrites
            + self.honest_rejects
            + self.counting_failures
            + self.fact_one
    }
}

/// Findings that are legitimate under attack but worth surfacing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftFlags {
    /// Qualifying confirmation triples on forked notarized chains (the
    /// incumbent middle was kept).
    pub fork_conflicts: u64,
    /// Honest proposer blocks the stall classifier could not place.
    pub unclassified_blocks: u64,
    /// Adversary-assembled blocks rejected by some view's receive rules.
    pub adversary_rejects: u64,
    /// Non-fatal configuration warnings (for example a consistency-only run).
    pub param_warnings: u64,
    /// Proposer-win counting checks voided by proposer arrivals closer than
    /// `delta_r` near the checked interval. Counting is only guaranteed for
    /// loner arrivals, so these intervals are excluded rather than failed.
    pub loner_breaches: u64,
}

impl SoftFlags {
    pub fn any(&self) -> bool {
        self.fork_conflicts
            + self.unclassified_blocks
            + self.adversary_rejects
            + self.param_warnings
            + self.loner_breaches
            > 0
    }
}

/// Adversary resource usage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySummary {
    pub assembled: u64,
    pub published: u64,
    /// Assembled withheld and still unpublished at the end of the run.
    pub withheld_unpublished: u64,
    /// Mining wins the strategy left on the table.
    pub unused_wins: u64,
}

/// One maximal interval of rounds outside the all-clear regime, with the
/// proposer-win counting check for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisInterval {
    /// First round outside the regime.
    pub start: Round,
    /// Last round outside the regime (inclusive).
    pub end: Round,
    pub honest_proposer_wins: u64,
    pub adversary_proposer_wins: u64,
    /// `adversary_proposer_wins + 1 >= honest_proposer_wins`.
    pub pass: bool,
    /// Two proposer arrivals landed within `delta_r` of each other near this
    /// interval, voiding the counting guarantee for it: a failed check is
    /// then reported as a soft flag instead of a violation.
    pub loner_breach: bool,
}

/// All-clear-regime bookkeeping for the whole run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisSummary {
    pub non_genesis_rounds: u64,
    pub intervals: Vec<GenesisInterval>,
}

impl GenesisSummary {
    /// Counting holds on every interval whose arrivals kept loner spacing.
    pub fn counting_pass(&self) -> bool {
        self.intervals.iter().all(|i| i.pass || i.loner_breach)
    }
}

/// Where each honestly mined proposer block landed in the stall taxonomy.
/// Classes are tried in field order; the first match wins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationHistogram {
    /// Notarized within the settling window.
    pub notarized: u64,
    /// Displaced by an adversary block at the same level that also notarized
    /// within the window.
    pub level_private: u64,
    /// Stalled by an adversary block at the same level that stayed
    /// unnotarized through the window.
    pub balance: u64,
    /// Displaced in depth by a long-public honest block, or by an adversary
    /// block that was itself balancing an earlier stalled honest block.
    pub public_honest: u64,
    /// Displaced in depth by a long-public adversary block with no matching
    /// earlier stall.
    pub public_adversary: u64,
    /// Displaced in depth by a recently published adversary block at a lower
    /// level.
    pub depth_private_small: u64,
    /// Displaced in depth by a recently published adversary block at a higher
    /// level.
    pub depth_private_large: u64,
    pub unclassified: u64,
}

impl ClassificationHistogram {
    pub fn total(&self) -> u64 {
        self.notarized
            + self.level_private
            + self.balance
            + self.public_honest
            + self.public_adversary
            + self.depth_private_small
            + self.depth_private_large
            + self.unclassified
    }
}

/// Confirmation latency over all honest nodes: a transaction counts once all
/// honest nodes have it confirmed, at the round the last of them does.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub confirmed: u64,
    /// Arrived but not confirmed by every honest node by the horizon.
    pub censored: u64,
    pub mean: Option<f64>,
    pub p50: Option<u64>,
    pub p95: Option<u64>,
    pub max: Option<u64>,
}

/// Everything a run learned. Serializes to JSON; [`RunReport::csv_row`] gives
/// a flat one-line form for sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: SimConfig,
    pub constants: DerivedConstants,
    pub verdict: Verdict,
    pub totals: Totals,
    pub chain: ChainSummary,
    pub violations: ViolationCounts,
    pub soft: SoftFlags,
    pub adversary: AdversarySummary,
    pub genesis: GenesisSummary,
    pub classification: ClassificationHistogram,
    pub latency: LatencyStats,
    /// Human-readable detail for each violation or soft finding, capped.
    pub flags: Vec<String>,
}

impl RunReport {
    pub fn compute_verdict(violations: &ViolationCounts, soft: &SoftFlags) -> Verdict {
        if violations.total() > 0 {
            Verdict::Fail
        } else if soft.any() {
            Verdict::Flagged
        } else {
            Verdict::Pass
        }
    }

    /// Column names for [`Self::csv_row`], comma-joined.
    pub fn csv_header() -> String {
        [
            "seed",
            "strategy",
            "m",
            "beta",
            "fp_bar",
            "fv_bar",
            "r_max",
            "honest_nodes",
            "tx_rate",
            "k_min",
            "delta_r",
            "verdict",
            "honest_wins",
            "adversary_wins",
            "proposer_blocks",
            "voter_blocks",
            "txs_arrived",
            "observer_notarized",
            "observer_confirmed",
            "observer_tip_depth",
            "observer_max_level",
            "honest_notarized",
            "honest_on_notarized_chains",
            "v_consistency",
            "v_vote_lower_bound",
            "v_level_uniqueness",
            "v_private_level_order",
            "v_depth_floor",
            "v_ledger_rewrites",
            "v_honest_rejects",
            "v_counting",
            "v_fact_one",
            "fork_conflicts",
            "unclassified",
            "adversary_rejects",
            "non_genesis_rounds",
            "genesis_intervals",
            "counting_pass",
            "class_notarized",
            "class_level_private",
            "class_balance",
            "class_public_honest",
            "class_public_adversary",
            "class_depth_small",
            "class_depth_large",
            "lat_confirmed",
            "lat_censored",
            "lat_mean",
            "lat_p50",
            "lat_p95",
            "lat_max",
        ]
        .join(",")
    }

    /// One flat CSV line matching [`Self::csv_header`].
    pub fn csv_row(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map_or_else(String::new, |x| x.to_string())
        }
        let p = &self.config.params;
        let v = &self.violations;
        let s = &self.soft;
        let c = &self.classification;
        let l = &self.latency;
        [
            self.config.seed.to_string(),
            self.config.strategy.name.as_str().to_string(),
            p.m.to_string(),
            p.beta.to_string(),
            p.fp_bar.to_string(),
            p.fv_bar.to_string(),
            p.r_max.to_string(),
            p.honest_node_count.to_string(),
            self.config.tx_rate.to_string(),
            self.constants.k_min.to_string(),
            self.constants.delta_r.to_string(),
            self.verdict.to_string(),
            self.totals.honest_wins.to_string(),
            self.totals.adversary_wins.to_string(),
            self.totals.proposer_blocks.to_string(),
            self.totals.voter_blocks.to_string(),
            self.totals.txs_arrived.to_string(),
            self.chain.observer_notarized.to_string(),
            self.chain.observer_confirmed.to_string(),
            self.chain.observer_tip_depth.to_string(),
            self.chain.observer_max_level.to_string(),
            self.chain.honest_notarized.to_string(),
            self.chain.honest_on_notarized_chains.to_string(),
            v.consistency.to_string(),
            v.vote_lower_bound.to_string(),
            v.level_uniqueness.to_string(),
            v.private_level_order.to_string(),
            v.depth_floor.to_string(),
            v.ledger_rewrites.to_string(),
            v.honest_rejects.to_string(),
            v.counting_failures.to_string(),
            v.fact_one.to_string(),
            s.fork_conflicts.to_string(),
            s.unclassified_blocks.to_string(),
            s.adversary_rejects.to_string(),
            self.genesis.non_genesis_rounds.to_string(),
            self.genesis.intervals.len().to_string(),
            self.genesis.counting_pass().to_string(),
            c.notarized.to_string(),
            c.level_private.to_string(),
            c.balance.to_string(),
            c.public_honest.to_string(),
            c.public_adversary.to_string(),
            c.depth_private_small.to_string(),
            c.depth_private_large.to_string(),
            l.confirmed.to_string(),
            l.censored.to_string(),
            opt(l.mean),
            opt(l.p50),
            opt(l.p95),
            opt(l.max),
        ]
        .join(",")
    }
}
