//! Vote counting with depth discounts and the notarization predicate.
//!
//! A proposer block's raw support is the number of voter chains whose current
//! longest chain carries a vote for it. Raw support can be reversed by chain
//! reorganizations, so notarization instead uses the discounted lower bound
//!
//! ```text
//! V̲_B = max over k ≥ k_min of (V^k_B − δ_k · m)₊
//! ```
//!
//! where `V^k_B` counts only votes at depth ≥ k. A block is notarized once
//! `V̲_B` reaches the strict majority `floor(m/2) + 1`; within a view the
//! notarized set only grows (a later drop in raw support is a model violation
//! flagged by the analyzers, never a rollback).

use crate::blockdag::{BlockIdx, Depth, GlobalDag, NodeView};
use crate::params::DerivedConstants;

/// Strict-majority notarization threshold `floor(m/2) + 1`.
#[inline]
pub fn notarization_threshold(m: u32) -> u32 {
    m / 2 + 1
}

/// One chain's counted vote for a proposer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountedVote {
    /// The voter block carrying the vote (on its chain's longest chain).
    pub voter_block: BlockIdx,
    /// Vote depth: on-chain descendants of the voter block + 1.
    pub depth: Depth,
}

/// The vote profile of one proposer block in one view.
#[derive(Debug, Clone)]
pub struct VoteTally {
    pub proposer: BlockIdx,
    /// Per-chain counted vote; `None` when the chain's longest chain carries
    /// no vote for this block (off-chain votes do not count).
    pub per_chain: Vec<Option<CountedVote>>,
    /// Raw on-chain vote count (any depth). Equals `v_k(1)`.
    pub v: u32,
    /// Discounted lower bound; compared against [`notarization_threshold`].
    pub v_underbar: f64,
}

impl VoteTally {
    /// Number of counted votes at depth ≥ k.
    pub fn v_k(&self, k: Depth) -> u32 {
        self.per_chain
            .iter()
            .flatten()
            .filter(|cv| cv.depth >= k)
            .count() as u32
    }
}

/// Computes `v_underbar` from the multiset of vote depths. The maximand is
/// constant in k between consecutive distinct depths and `δ_k` shrinks as k
/// grows, so only k values equal to some vote depth (clamped to ≥ k_min) can
/// attain the maximum.
fn v_underbar_from_depths(depths: &mut Vec<Depth>, c: &DerivedConstants, m: u32) -> f64 {
    depths.sort_unstable_by(|a, b| b.cmp(a));
    let mut best = 0.0f64;
    for (i, &d) in depths.iter().enumerate() {
        if d < c.k_min {
            break;
        }
        if i + 1 < depths.len() && depths[i + 1] == d {
            continue; // evaluate each plateau at its deepest k only
        }
        let candidate = (i + 1) as f64 - c.delta_k(d) * f64::from(m);
        best = best.max(candidate);
    }
    best
}

/// Scans every chain's longest chain for a vote on `proposer` and computes
/// the raw and discounted counts.
pub fn tally_votes(
    view: &NodeView,
    dag: &GlobalDag,
    proposer: BlockIdx,
    c: &DerivedConstants,
) -> VoteTally {
    let m = dag.m();
    let level = dag.proposer_data(proposer).level;
    let mut per_chain = Vec::with_capacity(m as usize);
    let mut depths = Vec::new();
    for chain in 0..m {
        let counted = view.chain_vote_at(chain, level).and_then(|cv| {
            if cv.proposer != proposer {
                return None;
            }
            let depth = view.vote_depth(chain, cv.pos);
            depths.push(depth);
            Some(CountedVote {
                voter_block: view.longest_chain(chain)[cv.pos as usize],
                depth,
            })
        });
        per_chain.push(counted);
    }
    let v = depths.len() as u32;
    let v_underbar = v_underbar_from_depths(&mut depths, c, m);
    VoteTally {
        proposer,
        per_chain,
        v,
        v_underbar,
    }
}

/// The notarization predicate: discounted support reaches a strict majority.
#[inline]
pub fn is_notarized(tally: &VoteTally, m: u32) -> bool {
    tally.v_underbar >= f64::from(notarization_threshold(m))
}

/// A notarization that happened during a refresh, with the counts that
/// justified it (traced as a Notarized event).
#[derive(Debug, Clone, PartialEq)]
pub struct NotarizedInfo {
    pub block: BlockIdx,
    pub votes: u32,
    pub v_underbar: f64,
}

/// Outcome of one per-round refresh of a view's notarized set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefreshOutcome {
    /// Blocks notarized by this refresh, in scan order.
    pub newly_notarized: Vec<NotarizedInfo>,
    /// Whether the notarized tip moved (deeper block, or smaller id at equal
    /// depth).
    pub tip_changed: bool,
    /// Every `(block, raw count, v_underbar)` tallied by this refresh,
    /// including sub-threshold results. The vote lower-bound analyzer records
    /// these as floors the raw count must never sink below.
    pub tallies: Vec<(BlockIdx, u32, f64)>,
}

/// Re-evaluates the notarization predicate and updates the view's notarized
/// set and tip. Called once per node per round, after deliveries.
///
/// Only queued candidates are tallied: the view queues a proposer block when
/// its raw count reaches the threshold (`v_underbar` never exceeds the raw
/// count, so no other block can pass), and this refresh keeps a block queued
/// until it notarizes or its raw count falls back below the threshold — the
/// discounted count of a queued block can still grow as votes deepen with no
/// change in the raw count.
pub fn refresh_notarized_set(
    view: &mut NodeView,
    dag: &GlobalDag,
    c: &DerivedConstants,
) -> RefreshOutcome {
    let m = dag.m();
    let threshold = notarization_threshold(m);
    let mut out = RefreshOutcome::default();
    let mut candidates = std::mem::take(&mut view.notarization_candidates);
    if candidates.is_empty() {
        return out;
    }
    // a block can cross the threshold twice between refreshes (reorg down and
    // back up queues it again)
    candidates.sort_unstable();
    candidates.dedup();
    candidates.retain(|&p| !view.is_notarized(p) && view.vote_count(p) >= threshold);
    for i in 0..candidates.len() {
        let p = candidates[i];
        let tally = tally_votes(view, dag, p, c);
        debug_assert!(tally.v == view.vote_count(p));
        out.tallies.push((p, tally.v, tally.v_underbar));
        if !is_notarized(&tally, m) {
            continue;
        }
        view.notarized[p.i()] = true;
        view.notarized_blocks.push(p);
        let data = dag.proposer_data(p);
        view.max_notarized_level = view.max_notarized_level.max(data.level);
        let tip_depth = view.notarized_tip_depth(dag);
        let deeper = data.depth > tip_depth;
        let smaller_at_tie =
            data.depth == tip_depth && dag.block(p).id < dag.block(view.notarized_tip).id;
        if deeper || smaller_at_tie {
            view.notarized_tip = p;
            out.tip_changed = true;
        }
        out.newly_notarized.push(NotarizedInfo {
            block: p,
            votes: tally.v,
            v_underbar: tally.v_underbar,
        });
    }
    candidates.retain(|&p| !view.is_notarized(p));
    view.notarization_candidates = candidates;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockdag::{BlockId, Miner};
    use crate::params::{derive_constants, LogConvention, ProtocolParams};

    /// Hand-rolled constants for tally arithmetic tests; not derivable from
    /// any β, which is fine — the tally code only reads the fields.
    fn fixture_constants(k_min: u64, c1: f64) -> DerivedConstants {
        DerivedConstants {
            gamma: 0.01,
            c1,
            k_min,
            k_min_formula: None,
            delta_k_floor: 0.0,
            epsilon_m: 1.0,
            delta_r: 100,
            log_convention: LogConvention::Natural,
        }
    }

    fn desk_constants(m: u32, k_min: u32) -> DerivedConstants {
        derive_constants(&ProtocolParams {
            m,
            beta: 0.25,
            k_min_override: Some(k_min),
            ..ProtocolParams::default()
        })
        .unwrap()
    }

    struct Fixture {
        dag: GlobalDag,
        view: NodeView,
        next_id: BlockId,
    }

    impl Fixture {
        fn new(m: u32) -> Self {
            let dag = GlobalDag::new(m);
            let view = NodeView::new(0, &dag);
            Fixture {
                dag,
                view,
                next_id: 1000,
            }
        }

        fn id(&mut self) -> BlockId {
            self.next_id += 1;
            self.next_id
        }

        fn proposer_with_id(
            &mut self,
            id: BlockId,
            level_parent: BlockIdx,
            depth_parent: BlockIdx,
        ) -> BlockIdx {
            let idx = self
                .dag
                .add_proposer(id, Miner::Honest(0), 1, level_parent, depth_parent, vec![]);
            self.dag.mark_public(idx, 1);
            assert_eq!(
                self.view.insert_block(&self.dag, idx, 1),
                crate::blockdag::InsertOutcome::Inserted
            );
            idx
        }

        fn proposer(&mut self, level_parent: BlockIdx, depth_parent: BlockIdx) -> BlockIdx {
            let id = self.id();
            self.proposer_with_id(id, level_parent, depth_parent)
        }

        /// Extends `chain` by one voter block carrying `votes`.
        fn vote(&mut self, chain: u32, votes: Vec<BlockIdx>) -> BlockIdx {
            let id = self.id();
            let parent = self.view.chain_tip(chain);
            let idx = self
                .dag
                .add_voter(id, Miner::Honest(0), 1, chain, parent, votes);
            self.dag.mark_public(idx, 1);
            assert_eq!(
                self.view.insert_block(&self.dag, idx, 1),
                crate::blockdag::InsertOutcome::Inserted
            );
            idx
        }

        /// Extends `chain` by `n` empty voter blocks (deepens earlier votes).
        fn extend(&mut self, chain: u32, n: usize) {
            for _ in 0..n {
                self.vote(chain, vec![]);
            }
        }
    }

    #[test]
    fn no_votes_means_zero_tally() {
        let mut fx = Fixture::new(4);
        let g = fx.dag.proposer_genesis();
        let p = fx.proposer(g, g);
        let c = desk_constants(4, 2);
        let tally = tally_votes(&fx.view, &fx.dag, p, &c);
        assert_eq!(tally.v, 0);
        assert_eq!(tally.v_underbar, 0.0);
        assert!(!is_notarized(&tally, 4));
    }

    #[test]
    fn discounted_count_matches_hand_oracle() {
        // 8 of 10 chains vote at depth exactly 5; k_min = 2 and c1 chosen so
        // δ_5·m = (c1/11)·10 = 0.3. The maximum over k sits at k = 5:
        // 8 − 0.3 = 7.7 (shallower k values carry bigger discounts).
        let mut fx = Fixture::new(10);
        let g = fx.dag.proposer_genesis();
        let p = fx.proposer(g, g);
        for chain in 0..8 {
            fx.vote(chain, vec![p]);
            fx.extend(chain, 4); // vote now 5 deep
        }
        let c = fixture_constants(2, 0.33);
        let tally = tally_votes(&fx.view, &fx.dag, p, &c);
        assert_eq!(tally.v, 8);
        assert_eq!(tally.v_k(1), 8);
        assert_eq!(tally.v_k(5), 8);
        assert_eq!(tally.v_k(6), 0);
        assert!((tally.v_underbar - 7.7).abs() < 1e-9, "{}", tally.v_underbar);
        // threshold for m=10 is 6: 7.7 ≥ 6 notarizes
        assert!(is_notarized(&tally, 10));
    }

    #[test]
    fn off_chain_votes_do_not_count() {
        let mut fx = Fixture::new(2);
        let g = fx.dag.proposer_genesis();
        let p = fx.proposer(g, g);
        let fork_base = fx.view.chain_tip(0);
        fx.vote(0, vec![p]);
        // two-block branch from the old tip abandons the voting block
        let a = fx.dag.add_voter(8000, Miner::Honest(0), 1, 0, fork_base, vec![]);
        fx.dag.mark_public(a, 1);
        fx.view.insert_block(&fx.dag, a, 1);
        let b = fx.dag.add_voter(8001, Miner::Honest(0), 1, 0, a, vec![]);
        fx.dag.mark_public(b, 1);
        fx.view.insert_block(&fx.dag, b, 1);
        assert_eq!(fx.view.chain_tip(0), b);
        let c = desk_constants(2, 1);
        let tally = tally_votes(&fx.view, &fx.dag, p, &c);
        assert_eq!(tally.v, 0);
        assert_eq!(tally.v_underbar, 0.0);
    }

    #[test]
    fn threshold_boundaries() {
        let mk = |v_underbar: f64| VoteTally {
            proposer: BlockIdx(0),
            per_chain: vec![],
            v: 0,
            v_underbar,
        };
        assert!(is_notarized(&mk(10.0), 10)); // V̲ = m
        assert!(!is_notarized(&mk(5.0), 10)); // V̲ = m/2 exactly: strict majority missed
        assert!(is_notarized(&mk(51.0), 101)); // floor(101/2)+1 = 51
        assert!(!is_notarized(&mk(50.999), 101));
    }

    #[test]
    fn single_block_levels_notarize_in_level_order() {
        // One proposer block per level, every chain votes, votes deepened
        // past k_min: each level's block notarizes, in level order.
        let mut fx = Fixture::new(4);
        let g = fx.dag.proposer_genesis();
        let c = desk_constants(4, 2);
        let p1 = fx.proposer(g, g);
        for chain in 0..4 {
            fx.vote(chain, vec![p1]);
            fx.extend(chain, 1);
        }
        let out = refresh_notarized_set(&mut fx.view, &fx.dag, &c);
        assert_eq!(out.newly_notarized.len(), 1);
        assert_eq!(out.newly_notarized[0].block, p1);
        assert_eq!(out.newly_notarized[0].votes, 4);
        assert!(out.tip_changed);
        assert_eq!(fx.view.notarized_tip(), p1);
        assert_eq!(fx.view.max_notarized_level(), 1);

        let p2 = fx.proposer(p1, p1);
        for chain in 0..4 {
            fx.vote(chain, vec![p2]);
            fx.extend(chain, 1);
        }
        let out = refresh_notarized_set(&mut fx.view, &fx.dag, &c);
        assert_eq!(out.newly_notarized.len(), 1);
        assert_eq!(out.newly_notarized[0].block, p2);
        assert_eq!(fx.view.notarized_tip(), p2);
        assert_eq!(fx.view.notarized_blocks(), &[g, p1, p2]);
    }

    #[test]
    fn split_votes_block_a_level_but_not_the_next() {
        // Two blocks at level 2 split the chains 2–2: neither notarizes.
        // A unique level-3 block then collects all four chains.
        let mut fx = Fixture::new(4);
        let g = fx.dag.proposer_genesis();
        let c = desk_constants(4, 2);
        let p1 = fx.proposer(g, g);
        for chain in 0..4 {
            fx.vote(chain, vec![p1]);
            fx.extend(chain, 1);
        }
        refresh_notarized_set(&mut fx.view, &fx.dag, &c);

        let p2a = fx.proposer(p1, p1);
        let p2b = fx.proposer(p1, p1);
        for chain in 0..2 {
            fx.vote(chain, vec![p2a]);
            fx.extend(chain, 1);
        }
        for chain in 2..4 {
            fx.vote(chain, vec![p2b]);
            fx.extend(chain, 1);
        }
        let out = refresh_notarized_set(&mut fx.view, &fx.dag, &c);
        assert!(out.newly_notarized.is_empty());
        assert!(!fx.view.is_notarized(p2a) && !fx.view.is_notarized(p2b));
        assert_eq!(fx.view.notarized_tip(), p1);

        // level-3 block at depth 2 (depth parent = notarized tip p1)
        let p3 = fx.proposer(p2a, p1);
        for chain in 0..4 {
            fx.vote(chain, vec![p3]);
            fx.extend(chain, 1);
        }
        let out = refresh_notarized_set(&mut fx.view, &fx.dag, &c);
        assert_eq!(out.newly_notarized.len(), 1);
        assert_eq!(out.newly_notarized[0].block, p3);
        assert_eq!(fx.view.notarized_tip(), p3);
        assert_eq!(fx.view.max_notarized_level(), 3);
    }

    #[test]
    fn equal_depth_notarized_tip_prefers_smaller_id() {
        // Two blocks notarized at the same depth (levels 1 and 2, both depth
        // parents = genesis): once the second — smaller-id — block notarizes,
        // the tip must flip to it even though the depth does not grow.
        let mut fx = Fixture::new(4);
        let g = fx.dag.proposer_genesis();
        let c = desk_constants(4, 2);
        let big = fx.proposer_with_id(9012, g, g); // level 1, depth 1
        for chain in 0..4 {
            fx.vote(chain, vec![big]);
            fx.extend(chain, 1);
        }
        let out = refresh_notarized_set(&mut fx.view, &fx.dag, &c);
        assert_eq!(out.newly_notarized.len(), 1);
        assert_eq!(fx.view.notarized_tip(), big);

        let small = fx.proposer_with_id(9007, big, g); // level 2, depth 1
        for chain in 0..4 {
            fx.vote(chain, vec![small]);
            fx.extend(chain, 1);
        }
        let out = refresh_notarized_set(&mut fx.view, &fx.dag, &c);
        assert_eq!(out.newly_notarized.len(), 1);
        assert_eq!(out.newly_notarized[0].block, small);
        assert!(out.tip_changed);
        assert_eq!(fx.view.notarized_tip(), small, "depth tie broken by id");
        assert_eq!(fx.view.notarized_tip_depth(&fx.dag), 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// v_underbar computed via the distinct-depth shortcut must match
            /// a brute-force maximization over every k in [k_min, max depth].
            #[test]
            fn v_underbar_matches_brute_force(
                depths in proptest::collection::vec(1u64..40, 0..30),
                k_min in 1u64..10,
                c1 in 0.01f64..0.5,
                m in 1u32..64,
            ) {
                let c = fixture_constants(k_min, c1);
                let mut sorted = depths.clone();
                let fast = v_underbar_from_depths(&mut sorted, &c, m);
                let max_d = depths.iter().copied().max().unwrap_or(0);
                let mut brute = 0.0f64;
                for k in k_min..=max_d.max(k_min) {
                    let vk = depths.iter().filter(|&&d| d >= k).count() as f64;
                    brute = brute.max(vk - c.delta_k(k) * f64::from(m));
                }
                prop_assert!((fast - brute).abs() < 1e-12, "fast={fast} brute={brute}");
            }

            /// V_k is non-increasing in k and V_k(1) = V.
            #[test]
            fn v_k_monotone(depths in proptest::collection::vec(1u64..20, 0..20)) {
                let per_chain: Vec<Option<CountedVote>> = depths
                    .iter()
                    .map(|&d| Some(CountedVote { voter_block: BlockIdx(0), depth: d }))
                    .collect();
                let tally = VoteTally {
                    proposer: BlockIdx(0),
                    v: per_chain.len() as u32,
                    per_chain,
                    v_underbar: 0.0,
                };
                prop_assert_eq!(tally.v_k(1), tally.v);
                for k in 1..22 {
                    prop_assert!(tally.v_k(k) >= tally.v_k(k + 1));
                }
            }
        }
    }
}
