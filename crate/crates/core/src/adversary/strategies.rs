//! Stock stochastic strategies: a null adversary that plays honestly, a
//! withholder that banks private proposer blocks on fresh levels, and a
//! vote splitter that releases banked rivals against same-level honest
//! arrivals with a divided delivery front.

use std::collections::BTreeMap;

use crate::blockdag::{BlockIdx, BlockKind, Level};
use crate::mining::BlockTarget;

use super::{AdversaryCtx, AdversaryError, DeliveryFront, Strategy};

/// Spends every win exactly like an honest node and publishes immediately.
pub struct HonestNull;

impl Strategy for HonestNull {
    fn name(&self) -> &'static str {
        "honest_null"
    }

    fn on_round(&mut self, ctx: &mut AdversaryCtx<'_>) -> Result<(), AdversaryError> {
        ctx.mimic_honest()?;
        Ok(())
    }
}

/// Banks one private proposer block per fresh level (voter wins are played
/// honestly). A banked block is held while it could still outrun the public
/// chain and released once a public block is notarized at or above its level,
/// which kills it for good.
#[derive(Default)]
pub struct PrivateLevels {
    banked: Vec<BlockIdx>,
}

impl Strategy for PrivateLevels {
    fn name(&self) -> &'static str {
        "private_levels"
    }

    fn on_round(&mut self, ctx: &mut AdversaryCtx<'_>) -> Result<(), AdversaryError> {
        while ctx
            .opportunities()
            .iter()
            .any(|e| e.target == BlockTarget::Proposer)
        {
            // private blocks already sit in the adversary view, so each new
            // one lands on the next unseen level
            let lp = ctx.view().level_parent_candidate();
            let dp = ctx.observer().notarized_tip();
            let b = ctx.assemble_proposer(lp, dp, vec![], true)?;
            self.banked.push(b);
        }
        ctx.mimic_honest()?; // remaining voter wins

        let dead_line = ctx.observer().max_notarized_level();
        let mut still_banked = Vec::new();
        for b in self.banked.drain(..) {
            let level = match ctx.dag().block(b).kind {
                BlockKind::Proposer(ref p) => p.level,
                BlockKind::Voter(_) => unreachable!("only proposers are banked"),
            };
            if level <= dead_line {
                ctx.publish(b, DeliveryFront::All)?;
            } else {
                still_banked.push(b);
            }
        }
        self.banked = still_banked;
        Ok(())
    }
}

/// Banks a private proposer rival per level and releases it the round an
/// honest block arrives on that level, delivered early to only half the
/// nodes so the level's votes split. Dead rivals (level already notarized
/// past) are flushed publicly.
#[derive(Default)]
pub struct VoteSplit {
    banked: BTreeMap<Level, BlockIdx>,
}

impl Strategy for VoteSplit {
    fn name(&self) -> &'static str {
        "vote_split"
    }

    fn on_round(&mut self, ctx: &mut AdversaryCtx<'_>) -> Result<(), AdversaryError> {
        while ctx
            .opportunities()
            .iter()
            .any(|e| e.target == BlockTarget::Proposer)
        {
            let lp = ctx.view().level_parent_candidate();
            let dp = ctx.observer().notarized_tip();
            let b = ctx.assemble_proposer(lp, dp, vec![], true)?;
            let level = match ctx.dag().block(b).kind {
                BlockKind::Proposer(ref p) => p.level,
                BlockKind::Voter(_) => unreachable!(),
            };
            self.banked.insert(level, b);
        }
        ctx.mimic_honest()?;

        // rushing release: an honest proposer mined this round on a banked
        // level triggers the split publication in the same round (removal on
        // collection — two same-level honest arrivals must release only once)
        let mut release = Vec::new();
        for &h in ctx.honest_mined(ctx.round) {
            if let BlockKind::Proposer(ref p) = ctx.dag().block(h).kind {
                if let Some(b) = self.banked.remove(&p.level) {
                    release.push(b);
                }
            }
        }
        let front: Vec<u32> = (0..ctx.params.honest_node_count / 2).collect();
        for b in release {
            ctx.publish(b, DeliveryFront::Nodes(front.clone()))?;
        }

        let dead_line = ctx.observer().max_notarized_level();
        let dead: Vec<Level> = self
            .banked
            .range(..=dead_line)
            .map(|(&l, _)| l)
            .collect();
        for l in dead {
            let b = self.banked.remove(&l).expect("key just seen");
            ctx.publish(b, DeliveryFront::All)?;
        }
        Ok(())
    }
}
