//! Block arena and per-node chain state.
//!
//! A run owns a single [`GlobalDag`]: an append-only arena of every block
//! ever mined, honest or adversary, public or private. Blocks are immutable
//! once created (publication round aside), so structural facts — levels,
//! depths, chain lengths, cumulative vote maxima — are computed once at
//! creation and shared by all views.
//!
//! Each [`NodeView`] tracks what one node has received: its proposer tree,
//! the `m` voter trees with their current longest chains, the on-chain votes
//! per chain, the notarized set with its tip, and the confirmed prefix. A
//! view only dereferences blocks it has received (or fetched); private blocks
//! of other parties are invisible to it.
//!
//! Tie-breaking is deterministic everywhere: equal-length voter chains and
//! equal-depth notarized tips resolve toward the smallest block id, while
//! equal-level proposer blocks (for the level-parent choice and for voting)
//! resolve toward the earliest delivery stamp.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// κ-bit block identifier drawn from the run's seeded generator. Unique per
/// run; the total order on ids is the deterministic tie-breaker.
pub type BlockId = u64;
/// Round counter (rounds run 1..=r_max; 0 is reserved for genesis).
pub type Round = u64;
/// Proposer-tree level ℓ(B); genesis sits at level 0.
pub type Level = u64;
/// Notarized-chain depth d(B); genesis sits at depth 0.
pub type Depth = u64;
/// Transaction identifier (structural only — no content semantics).
pub type TxId = u64;

/// Dense arena index of a block; stable for the lifetime of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockIdx(pub u32);

impl BlockIdx {
    #[inline]
    pub fn i(self) -> usize {
        self.0 as usize
    }
}

/// Position sentinel for "not on the current longest chain".
const NO_POS: u32 = u32::MAX;

/// Who mined a block. Genesis blocks belong to neither party and are skipped
/// by the honest/adversary analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Miner {
    Genesis,
    Honest(u32),
    Adversary,
}

impl Miner {
    #[inline]
    pub fn is_honest(self) -> bool {
        matches!(self, Miner::Honest(_))
    }
    #[inline]
    pub fn is_adversary(self) -> bool {
        matches!(self, Miner::Adversary)
    }
}

/// Immutable payload of a proposer block.
#[derive(Debug, Clone)]
pub struct ProposerData {
    pub level: Level,
    pub depth: Depth,
    pub level_parent: BlockIdx,
    pub depth_parent: BlockIdx,
    pub txs: Vec<TxId>,
}

/// Immutable payload of a voter block. `cum_voted_level` / `cum_voted_depth`
/// are the maxima over this block and all its chain ancestors, so descendants
/// can validate the vote-monotonicity rules in O(1).
#[derive(Debug, Clone)]
pub struct VoterData {
    pub chain: u32,
    pub parent: BlockIdx,
    /// Distance from the chain's genesis (genesis = 0).
    pub chain_len: u32,
    /// Voted proposer blocks; honest assembly orders them by strictly
    /// increasing level, and views reject blocks that violate that order.
    pub votes: Vec<BlockIdx>,
    pub cum_voted_level: Level,
    pub cum_voted_depth: Depth,
}

#[derive(Debug, Clone)]
pub enum BlockKind {
    Proposer(ProposerData),
    Voter(VoterData),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub id: BlockId,
    pub miner: Miner,
    pub round_mined: Round,
    /// Set when the block is broadcast or released; `None` while private.
    pub round_public: Option<Round>,
    pub kind: BlockKind,
}

impl Block {
    #[inline]
    pub fn is_proposer(&self) -> bool {
        matches!(self.kind, BlockKind::Proposer(_))
    }
    #[inline]
    pub fn is_voter(&self) -> bool {
        matches!(self.kind, BlockKind::Voter(_))
    }
}

/// Append-only arena of all blocks in a run plus the id → index registry.
#[derive(Debug)]
pub struct GlobalDag {
    blocks: Vec<Block>,
    by_id: HashMap<BlockId, BlockIdx>,
    m: u32,
}

impl GlobalDag {
    /// Creates the arena with the proposer genesis (index 0, id 0) and one
    /// voter genesis per chain (index c+1, id c+1).
    pub fn new(m: u32) -> Self {
        let mut dag = GlobalDag {
            blocks: Vec::new(),
            by_id: HashMap::new(),
            m,
        };
        dag.push(Block {
            id: 0,
            miner: Miner::Genesis,
            round_mined: 0,
            round_public: Some(0),
            kind: BlockKind::Proposer(ProposerData {
                level: 0,
                depth: 0,
                level_parent: BlockIdx(0),
                depth_parent: BlockIdx(0),
                txs: Vec::new(),
            }),
        });
        for c in 0..m {
            let idx = BlockIdx(c + 1);
            dag.push(Block {
                id: u64::from(c + 1),
                miner: Miner::Genesis,
                round_mined: 0,
                round_public: Some(0),
                kind: BlockKind::Voter(VoterData {
                    chain: c,
                    parent: idx,
                    chain_len: 0,
                    votes: Vec::new(),
                    cum_voted_level: 0,
                    cum_voted_depth: 0,
                }),
            });
        }
        dag
    }

    fn push(&mut self, block: Block) -> BlockIdx {
        let idx = BlockIdx(u32::try_from(self.blocks.len()).expect("arena overflow"));
        let prev = self.by_id.insert(block.id, idx);
        assert!(prev.is_none(), "duplicate block id {}", block.id);
        self.blocks.push(block);
        idx
    }

    #[inline]
    pub fn m(&self) -> u32 {
        self.m
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // genesis always present
    }

    #[inline]
    pub fn proposer_genesis(&self) -> BlockIdx {
        BlockIdx(0)
    }

    #[inline]
    pub fn voter_genesis(&self, chain: u32) -> BlockIdx {
        debug_assert!(chain < self.m);
        BlockIdx(chain + 1)
    }

    #[inline]
    pub fn block(&self, idx: BlockIdx) -> &Block {
        &self.blocks[idx.i()]
    }

    pub fn idx_of(&self, id: BlockId) -> Option<BlockIdx> {
        self.by_id.get(&id).copied()
    }

    /// All block indices in creation order.
    pub fn indices(&self) -> impl Iterator<Item = BlockIdx> + '_ {
        (0..self.blocks.len() as u32).map(BlockIdx)
    }

    #[inline]
    pub fn proposer_data(&self, idx: BlockIdx) -> &ProposerData {
        match &self.blocks[idx.i()].kind {
            BlockKind::Proposer(p) => p,
            BlockKind::Voter(_) => panic!("block {} is not a proposer block", idx.0),
        }
    }

    #[inline]
    pub fn voter_data(&self, idx: BlockIdx) -> &VoterData {
        match &self.blocks[idx.i()].kind {
            BlockKind::Voter(v) => v,
            BlockKind::Proposer(_) => panic!("block {} is not a voter block", idx.0),
        }
    }

    /// Adds a proposer block. Level and depth are derived from the parents;
    /// the caller supplies a fresh id (the allocator guarantees uniqueness).
    pub fn add_proposer(
        &mut self,
        id: BlockId,
        miner: Miner,
        round_mined: Round,
        level_parent: BlockIdx,
        depth_parent: BlockIdx,
        txs: Vec<TxId>,
    ) -> BlockIdx {
        let level = self.proposer_data(level_parent).level + 1;
        let depth = self.proposer_data(depth_parent).depth + 1;
        self.push(Block {
            id,
            miner,
            round_mined,
            round_public: None,
            kind: BlockKind::Proposer(ProposerData {
                level,
                depth,
                level_parent,
                depth_parent,
                txs,
            }),
        })
    }

    /// Adds a voter block on `chain` extending `parent`. Chain length and the
    /// cumulative vote maxima are derived here; vote-monotonicity is *not*
    /// enforced (views reject invalid blocks on receipt).
    pub fn add_voter(
        &mut self,
        id: BlockId,
        miner: Miner,
        round_mined: Round,
        chain: u32,
        parent: BlockIdx,
        votes: Vec<BlockIdx>,
    ) -> BlockIdx {
        let parent_data = self.voter_data(parent);
        assert_eq!(parent_data.chain, chain, "voter parent on a different chain");
        let chain_len = parent_data.chain_len + 1;
        let mut cum_level = parent_data.cum_voted_level;
        let mut cum_depth = parent_data.cum_voted_depth;
        for &v in &votes {
            let p = self.proposer_data(v);
            cum_level = cum_level.max(p.level);
            cum_depth = cum_depth.max(p.depth);
        }
        self.push(Block {
            id,
            miner,
            round_mined,
            round_public: None,
            kind: BlockKind::Voter(VoterData {
                chain,
                parent,
                chain_len,
                votes,
                cum_voted_level: cum_level,
                cum_voted_depth: cum_depth,
            }),
        })
    }

    /// Marks a block as published in `round`. Idempotent: the first
    /// publication round sticks.
    pub fn mark_public(&mut self, idx: BlockIdx, round: Round) {
        let b = &mut self.blocks[idx.i()];
        if b.round_public.is_none() {
            assert!(round >= b.round_mined, "published before mined");
            b.round_public = Some(round);
        }
    }

    /// Whether the block is visible to the network at (the deliveries of)
    /// `round` — the fetch rule for missing ancestors.
    #[inline]
    pub fn is_public_by(&self, idx: BlockIdx, round: Round) -> bool {
        self.blocks[idx.i()].round_public.is_some_and(|p| p <= round)
    }

    /// References a block makes to other blocks (parents plus voted blocks).
    fn refs(&self, idx: BlockIdx) -> impl Iterator<Item = BlockIdx> + '_ {
        let (a, b, votes): (BlockIdx, Option<BlockIdx>, &[BlockIdx]) =
            match &self.blocks[idx.i()].kind {
                BlockKind::Proposer(p) => (p.level_parent, Some(p.depth_parent), &[]),
                BlockKind::Voter(v) => (v.parent, None, &v.votes),
            };
        std::iter::once(a)
            .chain(b)
            .chain(votes.iter().copied())
    }
}

/// Why a view refused a delivered block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertRejection {
    /// A referenced block is neither known to the view nor fetchable from the
    /// public block set (it is private or does not exist yet).
    MissingParent { block: BlockId, missing: BlockId },
    /// A proposer block's depth parent is not notarized in this view.
    DepthParentNotNotarized { block: BlockId, depth_parent: BlockId },
    /// A vote's level fails the strictly-increasing rule (within the block or
    /// against chain ancestors).
    VoteLevelViolation { block: BlockId },
    /// A voted proposer's depth is below a depth already voted by ancestors.
    VoteDepthViolation { block: BlockId },
}

impl std::fmt::Display for InsertRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InsertRejection::MissingParent { block, missing } => {
                write!(f, "block {block}: referenced block {missing} unavailable")
            }
            InsertRejection::DepthParentNotNotarized { block, depth_parent } => {
                write!(f, "block {block}: depth parent {depth_parent} not notarized in view")
            }
            InsertRejection::VoteLevelViolation { block } => {
                write!(f, "block {block}: vote level not strictly increasing")
            }
            InsertRejection::VoteDepthViolation { block } => {
                write!(f, "block {block}: voted depth below ancestor-voted depth")
            }
        }
    }
}

/// Result of offering a block to a view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    AlreadyKnown,
    Rejected(InsertRejection),
}

/// A vote currently sitting on a chain's longest chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainVote {
    pub proposer: BlockIdx,
    /// Position of the voter block carrying the vote (genesis = 0).
    pub pos: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct ChainState {
    /// The current longest chain, genesis first. Among equal-length chains
    /// the one with the smallest tip id wins.
    pub(crate) longest: Vec<BlockIdx>,
    /// Votes cast by blocks on the current longest chain, keyed by proposer
    /// level (a chain's on-chain vote levels are strictly increasing, so each
    /// level holds at most one vote).
    pub(crate) votes: BTreeMap<Level, ChainVote>,
}

/// One node's view of the DAG: received blocks, longest chains, votes,
/// notarized set, confirmed prefix.
#[derive(Debug)]
pub struct NodeView {
    node_id: u32,
    // receipt state, indexed by BlockIdx
    known: Vec<bool>,
    recv_round: Vec<Round>,
    recv_seq: Vec<u32>,
    seq_counter: u32,
    // proposer tree
    max_proposer_level: Level,
    level_parent_candidate: BlockIdx,
    /// All received proposer blocks in receipt order (notarization scans it).
    pub(crate) known_proposers: Vec<BlockIdx>,
    /// depth → level → earliest-received proposer block at that cell; the
    /// vote-eligibility index.
    pub(crate) eligible_by_depth: Vec<BTreeMap<Level, BlockIdx>>,
    // voter trees
    pub(crate) chains: Vec<ChainState>,
    pos_on_chain: Vec<u32>,
    /// Raw on-chain vote count per proposer block (any depth).
    pub(crate) vote_counts: Vec<u32>,
    /// Votes knocked off a longest chain by reorgs since the last drain;
    /// consumed by the vote lower-bound analyzer.
    pub(crate) vote_removals: Vec<(u32, BlockIdx)>,
    /// Raw-count notarization threshold `floor(m/2) + 1`, cached for the
    /// crossing hook in [`Self::reorg`].
    vote_threshold: u32,
    /// Unnotarized proposer blocks whose raw count has reached the threshold.
    /// The per-round notarization refresh tallies only these: the discounted
    /// count never exceeds the raw count, so no other block can pass.
    pub(crate) notarization_candidates: Vec<BlockIdx>,
    // notarization (maintained by the notarization module)
    pub(crate) notarized: Vec<bool>,
    pub(crate) notarized_blocks: Vec<BlockIdx>,
    pub(crate) notarized_tip: BlockIdx,
    pub(crate) max_notarized_level: Level,
    // confirmation (maintained by the confirmation module)
    pub(crate) confirmed: Vec<BlockIdx>,
    /// Deepest middle block of any qualifying notarized triple seen so far.
    pub(crate) best_middle: Option<(Depth, BlockIdx)>,
}

impl NodeView {
    pub fn new(node_id: u32, dag: &GlobalDag) -> Self {
        let n = dag.len();
        let m = dag.m() as usize;
        let mut view = NodeView {
            node_id,
            known: vec![false; n],
            recv_round: vec![0; n],
            recv_seq: vec![0; n],
            seq_counter: 0,
            max_proposer_level: 0,
            level_parent_candidate: dag.proposer_genesis(),
            known_proposers: Vec::new(),
            eligible_by_depth: Vec::new(),
            chains: Vec::with_capacity(m),
            pos_on_chain: vec![NO_POS; n],
            vote_counts: vec![0; n],
            vote_removals: Vec::new(),
            vote_threshold: crate::notarization::notarization_threshold(dag.m()),
            notarization_candidates: Vec::new(),
            notarized: vec![false; n],
            notarized_blocks: Vec::new(),
            notarized_tip: dag.proposer_genesis(),
            max_notarized_level: 0,
            confirmed: Vec::new(),
            best_middle: None,
        };
        let gp = dag.proposer_genesis();
        view.known[gp.i()] = true;
        view.notarized[gp.i()] = true;
        view.notarized_blocks.push(gp);
        for c in 0..dag.m() {
            let g = dag.voter_genesis(c);
            view.known[g.i()] = true;
            view.pos_on_chain[g.i()] = 0;
            view.chains.push(ChainState {
                longest: vec![g],
                votes: BTreeMap::new(),
            });
        }
        view
    }

    #[inline]
    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    fn grow(&mut self, dag: &GlobalDag) {
        let n = dag.len();
        if self.known.len() < n {
            self.known.resize(n, false);
            self.recv_round.resize(n, 0);
            self.recv_seq.resize(n, 0);
            self.pos_on_chain.resize(n, NO_POS);
            self.vote_counts.resize(n, 0);
            self.notarized.resize(n, false);
        }
    }

    #[inline]
    pub fn knows(&self, idx: BlockIdx) -> bool {
        self.known.get(idx.i()).copied().unwrap_or(false)
    }

    /// Delivery stamp (round, sequence-within-view) of a known block.
    pub fn receipt(&self, idx: BlockIdx) -> Option<(Round, u32)> {
        if self.knows(idx) {
            Some((self.recv_round[idx.i()], self.recv_seq[idx.i()]))
        } else {
            None
        }
    }

    #[inline]
    pub fn max_proposer_level_seen(&self) -> Level {
        self.max_proposer_level
    }

    /// The deepest-level proposer block seen, earliest-received on ties —
    /// the level parent for honest proposer assembly.
    #[inline]
    pub fn level_parent_candidate(&self) -> BlockIdx {
        self.level_parent_candidate
    }

    /// Genesis-to-tip longest chain of a voter tree.
    pub fn longest_chain(&self, chain: u32) -> &[BlockIdx] {
        &self.chains[chain as usize].longest
    }

    pub fn chain_tip(&self, chain: u32) -> BlockIdx {
        *self.chains[chain as usize].longest.last().unwrap()
    }

    /// Number of longest-chain blocks strictly after this voter block; 0 when
    /// the block is off its chain's current longest chain.
    pub fn descendants_on_chain(&self, dag: &GlobalDag, idx: BlockIdx) -> u32 {
        let pos = self.pos_on_chain[idx.i()];
        if pos == NO_POS {
            return 0;
        }
        let chain = dag.voter_data(idx).chain;
        self.chains[chain as usize].longest.len() as u32 - 1 - pos
    }

    /// Depth of an on-chain vote cast at position `pos` of `chain`:
    /// descendants + 1 (a tip vote is 1-deep).
    #[inline]
    pub(crate) fn vote_depth(&self, chain: u32, pos: u32) -> u64 {
        self.chains[chain as usize].longest.len() as u64 - u64::from(pos)
    }

    /// The on-chain vote of `chain` at `level`, if any.
    pub fn chain_vote_at(&self, chain: u32, level: Level) -> Option<ChainVote> {
        self.chains[chain as usize].votes.get(&level).copied()
    }

    /// Raw on-chain vote count for a proposer block (all depths).
    pub fn vote_count(&self, idx: BlockIdx) -> u32 {
        self.vote_counts.get(idx.i()).copied().unwrap_or(0)
    }

    #[inline]
    pub fn is_notarized(&self, idx: BlockIdx) -> bool {
        self.notarized.get(idx.i()).copied().unwrap_or(false)
    }

    /// Notarized blocks in notarization order (genesis first).
    pub fn notarized_blocks(&self) -> &[BlockIdx] {
        &self.notarized_blocks
    }

    #[inline]
    pub fn notarized_tip(&self) -> BlockIdx {
        self.notarized_tip
    }

    pub fn notarized_tip_depth(&self, dag: &GlobalDag) -> Depth {
        dag.proposer_data(self.notarized_tip).depth
    }

    #[inline]
    pub fn max_notarized_level(&self) -> Level {
        self.max_notarized_level
    }

    /// The confirmed proposer chain in depth order, genesis excluded.
    pub fn confirmed_chain(&self) -> &[BlockIdx] {
        &self.confirmed
    }

    /// Drains the reorg vote-removal log (observer-side analyzers call this
    /// once per batch of deliveries).
    pub(crate) fn take_vote_removals(&mut self) -> Vec<(u32, BlockIdx)> {
        std::mem::take(&mut self.vote_removals)
    }

    /// Marks a proposer block notarized without any votes, maintaining the
    /// tip and level bookkeeping. Fixture shortcut only.
    #[cfg(test)]
    pub(crate) fn force_notarize_for_tests(&mut self, dag: &GlobalDag, b: BlockIdx) {
        if self.notarized[b.i()] {
            return;
        }
        self.notarized[b.i()] = true;
        self.notarized_blocks.push(b);
        let d = dag.proposer_data(b);
        self.max_notarized_level = self.max_notarized_level.max(d.level);
        let tip = dag.proposer_data(self.notarized_tip);
        if d.depth > tip.depth
            || (d.depth == tip.depth && dag.block(b).id < dag.block(self.notarized_tip).id)
        {
            self.notarized_tip = b;
        }
    }

    /// Offers a block to the view at `round`. Unknown referenced ancestors
    /// are fetched from the public block set (in dependency order) before the
    /// block itself; a private missing ancestor rejects the block. Each
    /// inserted block is validated: proposer depth parents must be notarized
    /// in this view, voter votes must respect the level/depth monotonicity
    /// rules. A rejection of a fetched ancestor rejects the offered block and
    /// leaves already-inserted ancestors in place.
    pub fn insert_block(&mut self, dag: &GlobalDag, idx: BlockIdx, round: Round) -> InsertOutcome {
        self.grow(dag);
        if self.known[idx.i()] {
            return InsertOutcome::AlreadyKnown;
        }
        if let Some(missing) = self.first_unknown_ref(dag, idx) {
            // Slow path: topologically fetch public ancestors.
            let mut order: Vec<BlockIdx> = Vec::new();
            let mut planned: HashSet<BlockIdx> = HashSet::new();
            let mut stack = vec![idx];
            let _ = missing;
            while let Some(&top) = stack.last() {
                let next = dag
                    .refs(top)
                    .find(|r| !self.known[r.i()] && !planned.contains(r));
                match next {
                    None => {
                        stack.pop();
                        planned.insert(top);
                        order.push(top);
                    }
                    Some(r) => {
                        if !dag.is_public_by(r, round) {
                            return InsertOutcome::Rejected(InsertRejection::MissingParent {
                                block: dag.block(idx).id,
                                missing: dag.block(r).id,
                            });
                        }
                        stack.push(r);
                    }
                }
            }
            for b in order {
                if let Some(rej) = self.validate(dag, b) {
                    return InsertOutcome::Rejected(rej);
                }
                self.commit(dag, b, round);
            }
            InsertOutcome::Inserted
        } else {
            match self.validate(dag, idx) {
                Some(rej) => InsertOutcome::Rejected(rej),
                None => {
                    self.commit(dag, idx, round);
                    InsertOutcome::Inserted
                }
            }
        }
    }

    fn first_unknown_ref(&self, dag: &GlobalDag, idx: BlockIdx) -> Option<BlockIdx> {
        dag.refs(idx).find(|r| !self.known[r.i()])
    }

    /// Inserts a block bypassing the receive rules, fetching unknown
    /// references regardless of publicity. Only for the adversary's
    /// omniscient bookkeeping view, which is not a protocol participant and
    /// must absorb every block — including ones an honest view would reject
    /// (their rejection happens at delivery, in the receiving views).
    pub(crate) fn insert_unchecked(&mut self, dag: &GlobalDag, idx: BlockIdx, round: Round) {
        self.grow(dag);
        if self.known[idx.i()] {
            return;
        }
        let mut order: Vec<BlockIdx> = Vec::new();
        let mut planned: HashSet<BlockIdx> = HashSet::new();
        let mut stack = vec![idx];
        while let Some(&top) = stack.last() {
            let next = dag
                .refs(top)
                .find(|r| !self.known[r.i()] && !planned.contains(r));
            match next {
                None => {
                    stack.pop();
                    planned.insert(top);
                    order.push(top);
                }
                Some(r) => stack.push(r),
            }
        }
        for b in order {
            self.commit(dag, b, round);
        }
    }

    /// Receive-rule validation; all references are already known to the view.
    fn validate(&self, dag: &GlobalDag, idx: BlockIdx) -> Option<InsertRejection> {
        match &dag.block(idx).kind {
            BlockKind::Proposer(p) => {
                if !self.notarized[p.depth_parent.i()] {
                    return Some(InsertRejection::DepthParentNotNotarized {
                        block: dag.block(idx).id,
                        depth_parent: dag.block(p.depth_parent).id,
                    });
                }
                None
            }
            BlockKind::Voter(v) => {
                let parent = dag.voter_data(v.parent);
                let mut last_level = parent.cum_voted_level;
                for &vote in &v.votes {
                    let p = dag.proposer_data(vote);
                    if p.level <= last_level {
                        return Some(InsertRejection::VoteLevelViolation {
                            block: dag.block(idx).id,
                        });
                    }
                    last_level = p.level;
                    if p.depth < parent.cum_voted_depth {
                        return Some(InsertRejection::VoteDepthViolation {
                            block: dag.block(idx).id,
                        });
                    }
                }
                None
            }
        }
    }

    fn commit(&mut self, dag: &GlobalDag, idx: BlockIdx, round: Round) {
        self.known[idx.i()] = true;
        self.recv_round[idx.i()] = round;
        self.recv_seq[idx.i()] = self.seq_counter;
        self.seq_counter += 1;
        match &dag.block(idx).kind {
            BlockKind::Proposer(p) => {
                self.known_proposers.push(idx);
                if p.level > self.max_proposer_level {
                    self.max_proposer_level = p.level;
                    self.level_parent_candidate = idx;
                }
                let d = p.depth as usize;
                if self.eligible_by_depth.len() <= d {
                    self.eligible_by_depth.resize_with(d + 1, BTreeMap::new);
                }
                self.eligible_by_depth[d].entry(p.level).or_insert(idx);
            }
            BlockKind::Voter(v) => {
                let c = v.chain as usize;
                let tip = *self.chains[c].longest.last().unwrap();
                let tip_len = self.chains[c].longest.len() as u32 - 1;
                let adopt = v.chain_len > tip_len
                    || (v.chain_len == tip_len && dag.block(idx).id < dag.block(tip).id);
                if adopt {
                    self.reorg(dag, c, idx);
                }
            }
        }
    }

    /// Switches chain `c`'s longest chain to end at `new_tip`, unwinding the
    /// abandoned suffix's votes and replaying the new branch's votes.
    fn reorg(&mut self, dag: &GlobalDag, c: usize, new_tip: BlockIdx) {
        let NodeView {
            chains,
            pos_on_chain,
            vote_counts,
            vote_removals,
            vote_threshold,
            notarization_candidates,
            notarized,
            ..
        } = self;
        // Walk up the new branch to the fork point (a block still marked as
        // on-chain; at worst the chain's genesis).
        let mut fresh: Vec<BlockIdx> = Vec::new();
        let mut x = new_tip;
        while pos_on_chain[x.i()] == NO_POS {
            fresh.push(x);
            x = dag.voter_data(x).parent;
        }
        let fork_pos = pos_on_chain[x.i()] as usize;
        let state = &mut chains[c];
        for b in state.longest.drain(fork_pos + 1..) {
            pos_on_chain[b.i()] = NO_POS;
            for &vote in &dag.voter_data(b).votes {
                let level = dag.proposer_data(vote).level;
                let removed = state.votes.remove(&level);
                debug_assert_eq!(removed.map(|cv| cv.proposer), Some(vote));
                vote_counts[vote.i()] -= 1;
                vote_removals.push((c as u32, vote));
            }
        }
        for x in fresh.into_iter().rev() {
            let pos = state.longest.len() as u32;
            pos_on_chain[x.i()] = pos;
            state.longest.push(x);
            for &vote in &dag.voter_data(x).votes {
                let level = dag.proposer_data(vote).level;
                // on-chain vote levels strictly increase along a chain
                let prev = state.votes.insert(level, ChainVote { proposer: vote, pos });
                debug_assert!(prev.is_none());
                vote_counts[vote.i()] += 1;
                if vote_counts[vote.i()] == *vote_threshold && !notarized[vote.i()] {
                    notarization_candidates.push(vote);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ids for hand-built blocks: keep clear of the genesis range [0, m].
    const BASE_ID: BlockId = 1000;

    fn dag_and_view(m: u32) -> (GlobalDag, NodeView) {
        let dag = GlobalDag::new(m);
        let view = NodeView::new(0, &dag);
        (dag, view)
    }

    /// Adds a proposer block, marks it public at its mining round, and
    /// returns its index.
    fn public_proposer(
        dag: &mut GlobalDag,
        id: BlockId,
        round: Round,
        level_parent: BlockIdx,
        depth_parent: BlockIdx,
    ) -> BlockIdx {
        let idx = dag.add_proposer(id, Miner::Honest(0), round, level_parent, depth_parent, vec![]);
        dag.mark_public(idx, round);
        idx
    }

    fn public_voter(
        dag: &mut GlobalDag,
        id: BlockId,
        round: Round,
        chain: u32,
        parent: BlockIdx,
        votes: Vec<BlockIdx>,
    ) -> BlockIdx {
        let idx = dag.add_voter(id, Miner::Honest(0), round, chain, parent, votes);
        dag.mark_public(idx, round);
        idx
    }

    #[test]
    fn fresh_view_is_genesis_only() {
        let (dag, view) = dag_and_view(3);
        assert_eq!(view.max_proposer_level_seen(), 0);
        assert_eq!(view.level_parent_candidate(), dag.proposer_genesis());
        assert_eq!(view.notarized_tip(), dag.proposer_genesis());
        for c in 0..3 {
            assert_eq!(view.longest_chain(c), &[dag.voter_genesis(c)]);
        }
        assert!(view.confirmed_chain().is_empty());
    }

    #[test]
    fn proposer_on_genesis_inserts_and_raises_level() {
        let (mut dag, mut view) = dag_and_view(2);
        let g = dag.proposer_genesis();
        let p = public_proposer(&mut dag, BASE_ID, 1, g, g);
        assert_eq!(view.insert_block(&dag, p, 1), InsertOutcome::Inserted);
        assert_eq!(view.max_proposer_level_seen(), 1);
        assert_eq!(view.level_parent_candidate(), p);
        assert_eq!(dag.proposer_data(p).level, 1);
        assert_eq!(dag.proposer_data(p).depth, 1);
        assert_eq!(view.insert_block(&dag, p, 2), InsertOutcome::AlreadyKnown);
    }

    #[test]
    fn equal_level_keeps_earliest_received_level_parent() {
        let (mut dag, mut view) = dag_and_view(1);
        let g = dag.proposer_genesis();
        let a = public_proposer(&mut dag, BASE_ID, 1, g, g);
        let b = public_proposer(&mut dag, BASE_ID + 1, 1, g, g);
        view.insert_block(&dag, a, 1);
        view.insert_block(&dag, b, 1);
        assert_eq!(view.level_parent_candidate(), a);
        assert_eq!(view.receipt(a), Some((1, 0)));
        assert_eq!(view.receipt(b), Some((1, 1)));
    }

    #[test]
    fn equal_length_chains_resolve_to_smallest_tip_id() {
        let (mut dag, mut view) = dag_and_view(1);
        let g = dag.voter_genesis(0);
        let twelve = public_voter(&mut dag, 12 + BASE_ID, 1, 0, g, vec![]);
        let seven = public_voter(&mut dag, 7 + BASE_ID, 1, 0, g, vec![]);
        view.insert_block(&dag, twelve, 1);
        assert_eq!(view.chain_tip(0), twelve);
        // same length, smaller id: the view must switch branches
        view.insert_block(&dag, seven, 1);
        assert_eq!(view.chain_tip(0), seven);
        assert_eq!(view.longest_chain(0), &[g, seven]);
        // and a larger-id same-length arrival must not displace it
        let nine = public_voter(&mut dag, 9 + BASE_ID, 1, 0, g, vec![]);
        view.insert_block(&dag, nine, 1);
        assert_eq!(view.chain_tip(0), seven);
    }

    #[test]
    fn linear_chain_lists_all_blocks_in_order() {
        let (mut dag, mut view) = dag_and_view(1);
        let mut parent = dag.voter_genesis(0);
        let mut expect = vec![parent];
        for k in 0..4 {
            parent = public_voter(&mut dag, BASE_ID + k, 1 + k, 0, parent, vec![]);
            expect.push(parent);
            view.insert_block(&dag, parent, 1 + k);
        }
        assert_eq!(view.longest_chain(0), expect.as_slice());
        // descendant counts: tip has 0, genesis of the 4-deep chain has 4
        assert_eq!(view.descendants_on_chain(&dag, parent), 0);
        assert_eq!(view.descendants_on_chain(&dag, expect[1]), 3);
    }

    #[test]
    fn abandoned_fork_has_zero_descendants() {
        let (mut dag, mut view) = dag_and_view(1);
        let g = dag.voter_genesis(0);
        let fork = public_voter(&mut dag, BASE_ID, 1, 0, g, vec![]);
        view.insert_block(&dag, fork, 1);
        // a two-block branch overtakes it
        let a = public_voter(&mut dag, BASE_ID + 1, 2, 0, g, vec![]);
        let b = public_voter(&mut dag, BASE_ID + 2, 3, 0, a, vec![]);
        view.insert_block(&dag, a, 2);
        view.insert_block(&dag, b, 3);
        assert_eq!(view.chain_tip(0), b);
        assert_eq!(view.descendants_on_chain(&dag, fork), 0);
        assert_eq!(view.descendants_on_chain(&dag, a), 1);
    }

    #[test]
    fn ancestor_voted_level_rejects_duplicate_vote() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let gv = dag.voter_genesis(0);
        let p1 = public_proposer(&mut dag, BASE_ID, 1, gp, gp);
        view.insert_block(&dag, p1, 1);
        let v1 = public_voter(&mut dag, BASE_ID + 1, 2, 0, gv, vec![p1]);
        assert_eq!(view.insert_block(&dag, v1, 2), InsertOutcome::Inserted);
        // child votes the same level again
        let v2 = public_voter(&mut dag, BASE_ID + 2, 3, 0, v1, vec![p1]);
        assert_eq!(
            view.insert_block(&dag, v2, 3),
            InsertOutcome::Rejected(InsertRejection::VoteLevelViolation {
                block: dag.block(v2).id
            })
        );
        assert!(!view.knows(v2));
    }

    #[test]
    fn votes_within_one_block_must_increase_in_level() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let gv = dag.voter_genesis(0);
        let p1 = public_proposer(&mut dag, BASE_ID, 1, gp, gp);
        let p2 = public_proposer(&mut dag, BASE_ID + 1, 2, p1, gp);
        view.insert_block(&dag, p1, 1);
        view.insert_block(&dag, p2, 2);
        let bad = public_voter(&mut dag, BASE_ID + 2, 3, 0, gv, vec![p2, p1]);
        assert!(matches!(
            view.insert_block(&dag, bad, 3),
            InsertOutcome::Rejected(InsertRejection::VoteLevelViolation { .. })
        ));
    }

    #[test]
    fn voted_depth_below_ancestor_voted_depth_rejects() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let gv = dag.voter_genesis(0);
        // p2 sits at depth 2; p3 at level 3 but depth 1
        let p1 = public_proposer(&mut dag, BASE_ID, 1, gp, gp);
        view.insert_block(&dag, p1, 1);
        view.notarized[p1.i()] = true; // hand-notarize so p2 can build on it
        let p2 = public_proposer(&mut dag, BASE_ID + 1, 2, p1, p1);
        let p3 = public_proposer(&mut dag, BASE_ID + 2, 3, p2, gp);
        view.insert_block(&dag, p2, 2);
        view.insert_block(&dag, p3, 3);
        assert_eq!(dag.proposer_data(p2).depth, 2);
        assert_eq!(dag.proposer_data(p3).depth, 1);
        let v1 = public_voter(&mut dag, BASE_ID + 3, 4, 0, gv, vec![p2]);
        view.insert_block(&dag, v1, 4);
        let v2 = public_voter(&mut dag, BASE_ID + 4, 5, 0, v1, vec![p3]);
        assert_eq!(
            view.insert_block(&dag, v2, 5),
            InsertOutcome::Rejected(InsertRejection::VoteDepthViolation {
                block: dag.block(v2).id
            })
        );
    }

    #[test]
    fn unnotarized_depth_parent_rejects() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let p1 = public_proposer(&mut dag, BASE_ID, 1, gp, gp);
        view.insert_block(&dag, p1, 1);
        // p2 claims p1 as depth parent but p1 is not notarized in this view
        let p2 = public_proposer(&mut dag, BASE_ID + 1, 2, p1, p1);
        assert_eq!(
            view.insert_block(&dag, p2, 2),
            InsertOutcome::Rejected(InsertRejection::DepthParentNotNotarized {
                block: dag.block(p2).id,
                depth_parent: dag.block(p1).id,
            })
        );
        view.notarized[p1.i()] = true;
        assert_eq!(view.insert_block(&dag, p2, 2), InsertOutcome::Inserted);
    }

    #[test]
    fn private_ancestor_rejects_then_fetch_succeeds_when_public() {
        let (mut dag, mut view) = dag_and_view(1);
        let gv = dag.voter_genesis(0);
        let hidden = dag.add_voter(BASE_ID, Miner::Adversary, 1, 0, gv, vec![]);
        let child = dag.add_voter(BASE_ID + 1, Miner::Adversary, 1, 0, hidden, vec![]);
        dag.mark_public(child, 2);
        assert_eq!(
            view.insert_block(&dag, child, 2),
            InsertOutcome::Rejected(InsertRejection::MissingParent {
                block: dag.block(child).id,
                missing: dag.block(hidden).id,
            })
        );
        dag.mark_public(hidden, 3);
        assert_eq!(view.insert_block(&dag, child, 3), InsertOutcome::Inserted);
        assert!(view.knows(hidden));
        assert_eq!(view.longest_chain(0), &[gv, hidden, child]);
        // the fetched ancestor is stamped with the fetch round
        assert_eq!(view.receipt(hidden), Some((3, 0)));
        assert_eq!(view.receipt(child), Some((3, 1)));
    }

    #[test]
    fn fetch_pulls_voted_proposer_too() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let gv = dag.voter_genesis(0);
        let p = dag.add_proposer(BASE_ID, Miner::Adversary, 1, gp, gp, vec![]);
        dag.mark_public(p, 2);
        let v = public_voter(&mut dag, BASE_ID + 1, 2, 0, gv, vec![p]);
        assert_eq!(view.insert_block(&dag, v, 2), InsertOutcome::Inserted);
        assert!(view.knows(p));
        assert_eq!(view.vote_count(p), 1);
    }

    #[test]
    fn reorg_moves_votes_and_reports_removals() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let gv = dag.voter_genesis(0);
        let p = public_proposer(&mut dag, BASE_ID, 1, gp, gp);
        view.insert_block(&dag, p, 1);
        // branch A votes for p; branch B (longer) does not
        let a = public_voter(&mut dag, BASE_ID + 1, 2, 0, gv, vec![p]);
        view.insert_block(&dag, a, 2);
        assert_eq!(view.vote_count(p), 1);
        assert_eq!(view.chain_vote_at(0, 1), Some(ChainVote { proposer: p, pos: 1 }));
        let b1 = public_voter(&mut dag, BASE_ID + 2, 3, 0, gv, vec![]);
        let b2 = public_voter(&mut dag, BASE_ID + 3, 4, 0, b1, vec![]);
        view.insert_block(&dag, b1, 3);
        view.insert_block(&dag, b2, 4);
        assert_eq!(view.chain_tip(0), b2);
        assert_eq!(view.vote_count(p), 0);
        assert_eq!(view.chain_vote_at(0, 1), None);
        assert_eq!(view.take_vote_removals(), vec![(0, p)]);
        // extending branch A again re-flips and restores the vote
        let a2 = public_voter(&mut dag, BASE_ID + 4, 5, 0, a, vec![]);
        let a3 = public_voter(&mut dag, BASE_ID + 5, 6, 0, a2, vec![]);
        view.insert_block(&dag, a2, 5);
        view.insert_block(&dag, a3, 6);
        assert_eq!(view.chain_tip(0), a3);
        assert_eq!(view.vote_count(p), 1);
        assert_eq!(view.vote_depth(0, 1), 3);
    }

    #[test]
    fn earliest_received_wins_the_eligibility_cell() {
        let (mut dag, mut view) = dag_and_view(1);
        let gp = dag.proposer_genesis();
        let first = public_proposer(&mut dag, BASE_ID + 5, 1, gp, gp);
        let second = public_proposer(&mut dag, BASE_ID + 1, 1, gp, gp);
        view.insert_block(&dag, first, 1);
        view.insert_block(&dag, second, 1);
        // same (depth 1, level 1) cell: receipt order beats id order
        assert_eq!(view.eligible_by_depth[1][&1], first);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Brute-force oracle for the longest-chain rule: max length, then
        /// smallest tip id, path read off parent links.
        fn oracle_longest(dag: &GlobalDag, view: &NodeView, chain: u32) -> Vec<BlockIdx> {
            let mut best: Option<BlockIdx> = None;
            for idx in dag.indices() {
                if !view.knows(idx) || !dag.block(idx).is_voter() {
                    continue;
                }
                let v = dag.voter_data(idx);
                if v.chain != chain {
                    continue;
                }
                best = Some(match best {
                    None => idx,
                    Some(b) => {
                        let bl = dag.voter_data(b).chain_len;
                        if v.chain_len > bl
                            || (v.chain_len == bl && dag.block(idx).id < dag.block(b).id)
                        {
                            idx
                        } else {
                            b
                        }
                    }
                });
            }
            let mut path = Vec::new();
            let mut x = best.unwrap();
            loop {
                path.push(x);
                let v = dag.voter_data(x);
                if v.chain_len == 0 {
                    break;
                }
                x = v.parent;
            }
            path.reverse();
            path
        }

        proptest! {
            /// Random insert sequences on one voter tree: the incremental
            /// longest chain, vote map, and vote counts must match a scratch
            /// recomputation after every insert, and the tip length must
            /// never decrease.
            #[test]
            fn incremental_chain_state_matches_oracle(
                ops in proptest::collection::vec((0usize..8, 0u8..3), 1..60)
            ) {
                let mut dag = GlobalDag::new(1);
                let mut view = NodeView::new(0, &dag);
                let gp = dag.proposer_genesis();
                // a pool of proposer blocks to vote for, one per level
                let mut proposers = vec![];
                for lvl in 0..6u64 {
                    let parent = if lvl == 0 { gp } else { proposers[lvl as usize - 1] };
                    let p = dag.add_proposer(500 + lvl, Miner::Honest(0), 1, parent, gp, vec![]);
                    dag.mark_public(p, 1);
                    view.insert_block(&dag, p, 1);
                    proposers.push(p);
                }
                let mut voters = vec![dag.voter_genesis(0)];
                let mut next_id = BASE_ID;
                let mut prev_len = 0u32;
                for (parent_sel, vote_sel) in ops {
                    let parent = voters[parent_sel % voters.len()];
                    // votes: none, or the lowest level still above the
                    // parent's cumulative voted level
                    let cum = dag.voter_data(parent).cum_voted_level;
                    let votes = match vote_sel {
                        0 => vec![],
                        _ => {
                            let lvl = cum + 1;
                            if lvl as usize <= proposers.len() {
                                vec![proposers[lvl as usize - 1]]
                            } else {
                                vec![]
                            }
                        }
                    };
                    let b = dag.add_voter(next_id, Miner::Honest(0), 1, 0, parent, votes);
                    dag.mark_public(b, 1);
                    next_id += 1;
                    voters.push(b);
                    let out = view.insert_block(&dag, b, 1);
                    prop_assert_eq!(out, InsertOutcome::Inserted);

                    let expect = oracle_longest(&dag, &view, 0);
                    prop_assert_eq!(view.longest_chain(0), expect.as_slice());
                    // chain links: each element is the parent of the next
                    for w in view.longest_chain(0).windows(2) {
                        prop_assert_eq!(dag.voter_data(w[1]).parent, w[0]);
                    }
                    let len = view.longest_chain(0).len() as u32 - 1;
                    prop_assert!(len >= prev_len);
                    prev_len = len;
                    // vote map matches a scratch scan of the longest chain
                    let mut expect_votes = BTreeMap::new();
                    let mut expect_counts: HashMap<BlockIdx, u32> = HashMap::new();
                    for (pos, &vb) in view.longest_chain(0).iter().enumerate() {
                        for &vote in &dag.voter_data(vb).votes {
                            let lvl = dag.proposer_data(vote).level;
                            expect_votes.insert(lvl, ChainVote { proposer: vote, pos: pos as u32 });
                            *expect_counts.entry(vote).or_default() += 1;
                        }
                    }
                    prop_assert_eq!(&view.chains[0].votes, &expect_votes);
                    for &p in &proposers {
                        prop_assert_eq!(view.vote_count(p), expect_counts.get(&p).copied().unwrap_or(0));
                    }
                }
            }
        }
    }
}
