//! The confirmation rule and ledger construction.
//!
//! Three notarized blocks linked by depth-parent edges and sitting on three
//! consecutive levels confirm the middle block of the triple together with
//! its whole depth-ancestry. Genesis (level 0, depth 0) is a valid bottom
//! element of a triple. When several qualifying triples exist the deepest
//! middle block wins; two distinct middles at the same depth can only come
//! from forked notarized chains and are reported as a conflict rather than
//! tie-broken.
//!
//! The ledger is the concatenation of the confirmed blocks' transaction lists
//! in depth order. Duplicate transactions are retained (honest mining never
//! includes already-confirmed transactions, so a duplicate is analyzer food,
//! not something to sanitize away).

use crate::blockdag::{BlockIdx, GlobalDag, NodeView, TxId};

/// Outcome of folding newly notarized blocks into the confirmed prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfirmOutcome {
    /// Blocks appended to the confirmed chain, in depth order.
    pub newly_confirmed: Vec<BlockIdx>,
    /// The new confirmed chain is *not* an extension of the previous one —
    /// a cross-round consistency violation (reported, then adopted).
    pub rewrite: bool,
    /// Two qualifying triples with distinct middle blocks at the same depth —
    /// forked notarized chains (reported; the incumbent middle is kept).
    pub fork_conflict: bool,
}

/// Depth-ancestry of `block` from depth 1 down to the block itself (genesis
/// excluded), read off depth-parent links.
fn depth_ancestry(dag: &GlobalDag, block: BlockIdx) -> Vec<BlockIdx> {
    let mut path = Vec::with_capacity(dag.proposer_data(block).depth as usize);
    let mut x = block;
    while dag.proposer_data(x).depth > 0 {
        path.push(x);
        x = dag.proposer_data(x).depth_parent;
    }
    path.reverse();
    path
}

/// Whether `top` completes a qualifying triple: its depth parent and depth
/// grandparent exist and the three sit on consecutive levels. Returns the
/// middle block.
fn triple_middle(dag: &GlobalDag, top: BlockIdx) -> Option<BlockIdx> {
    let t = dag.proposer_data(top);
    if t.depth < 2 {
        return None;
    }
    let mid = t.depth_parent;
    let m = dag.proposer_data(mid);
    let bot = m.depth_parent;
    let b = dag.proposer_data(bot);
    (m.level + 1 == t.level && b.level + 1 == m.level).then_some(mid)
}

/// Folds freshly notarized blocks into the view's confirmed prefix. A new
/// triple can only be completed by its top block's notarization (a block's
/// depth ancestors are always notarized in-view before the block is even
/// received), so only `newly_notarized` tops need checking.
pub fn advance_confirmation(
    view: &mut NodeView,
    dag: &GlobalDag,
    newly_notarized: &[BlockIdx],
) -> ConfirmOutcome {
    let mut out = ConfirmOutcome::default();
    let mut adopted = false;
    for &top in newly_notarized {
        let Some(mid) = triple_middle(dag, top) else {
            continue;
        };
        let mid_depth = dag.proposer_data(mid).depth;
        match view.best_middle {
            None => {
                view.best_middle = Some((mid_depth, mid));
                adopted = true;
            }
            Some((best_depth, best)) => {
                if mid_depth > best_depth {
                    view.best_middle = Some((mid_depth, mid));
                    adopted = true;
                } else if mid != best && !is_depth_ancestor(dag, mid, best) {
                    // same depth or shallower, off the incumbent's ancestry
                    out.fork_conflict = true;
                }
            }
        }
    }
    if adopted {
        let (_, mid) = view.best_middle.unwrap();
        let target = depth_ancestry(dag, mid);
        if target.starts_with(view.confirmed_chain()) {
            out.newly_confirmed = target[view.confirmed_chain().len()..].to_vec();
        } else {
            out.rewrite = true;
        }
        view.confirmed = target;
    }
    out
}

/// Whether `b` lies on the depth-ancestry of `a` (inclusive).
fn is_depth_ancestor(dag: &GlobalDag, b: BlockIdx, a: BlockIdx) -> bool {
    let target_depth = dag.proposer_data(b).depth;
    let mut x = a;
    while dag.proposer_data(x).depth > target_depth {
        x = dag.proposer_data(x).depth_parent;
    }
    x == b
}

/// Pure recomputation of the confirmed prefix from the notarized set: scans
/// every notarized block as a potential triple top and returns the deepest
/// middle's ancestry. Oracle for the incremental path and for trace replay.
pub fn confirmed_prefix(view: &NodeView, dag: &GlobalDag) -> Vec<BlockIdx> {
    let mut best: Option<(u64, BlockIdx)> = None;
    for &top in view.notarized_blocks() {
        if let Some(mid) = triple_middle(dag, top) {
            let d = dag.proposer_data(mid).depth;
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, mid));
            }
        }
    }
    match best {
        Some((_, mid)) => depth_ancestry(dag, mid),
        None => Vec::new(),
    }
}

/// Concatenation of the confirmed blocks' transactions in chain order;
/// duplicates retained.
pub fn build_ledger(view: &NodeView, dag: &GlobalDag) -> Vec<TxId> {
    view.confirmed_chain()
        .iter()
        .flat_map(|&b| dag.proposer_data(b).txs.iter().copied())
        .collect()
}

/// Membership of a transaction in the view's current ledger.
pub fn is_tx_confirmed(tx: TxId, view: &NodeView, dag: &GlobalDag) -> bool {
    view.confirmed_chain()
        .iter()
        .any(|&b| dag.proposer_data(b).txs.contains(&tx))
}
