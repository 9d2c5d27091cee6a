//! Declarative deterministic schedules: pinned arrival sequences plus
//! round-keyed adversary directives. Scripts drive the regression attacks and
//! can be supplied as config documents for custom scenarios.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::blockdag::{BlockIdx, Round};
use crate::mining::{BlockTarget, IdPolicy};
use crate::params::ProtocolParams;

use super::{AdversaryCtx, AdversaryError, DeliveryFront, Strategy};

/// Who mines a pinned arrival. Honest wins name the assembling node so
/// delivery-order effects are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMiner {
    Honest { node: u32 },
    Adversary,
}

/// One pinned mining win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptArrival {
    pub round: Round,
    pub target: BlockTarget,
    pub miner: ScriptMiner,
}

/// A symbolic block reference, resolved at execution time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRef {
    ProposerGenesis,
    VoterGenesis { chain: u32 },
    /// A block assembled by an earlier script step.
    Tag { tag: String },
    /// The `index`-th honest block mined in `round` (processing order).
    Arrival { round: Round, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptAction {
    AssembleProposer {
        tag: String,
        level_parent: BlockRef,
        depth_parent: BlockRef,
        withhold: bool,
    },
    AssembleVoter {
        tag: String,
        chain: u32,
        parent: BlockRef,
        votes: Vec<BlockRef>,
        withhold: bool,
    },
    Publish {
        block: BlockRef,
        front: DeliveryFront,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub round: Round,
    pub action: ScriptAction,
}

/// A full deterministic schedule. Arrivals replace the stochastic sampler;
/// steps run inside the adversary's turn of their round, in listed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub id_policy: IdPolicy,
    pub arrivals: Vec<ScriptArrival>,
    pub steps: Vec<ScriptStep>,
}

impl Script {
    pub fn arrivals_by_round(&self) -> BTreeMap<Round, Vec<ScriptArrival>> {
        let mut out: BTreeMap<Round, Vec<ScriptArrival>> = BTreeMap::new();
        for &a in &self.arrivals {
            out.entry(a.round).or_default().push(a);
        }
        out
    }

    pub fn last_round(&self) -> Round {
        self.arrivals
            .iter()
            .map(|a| a.round)
            .chain(self.steps.iter().map(|s| s.round))
            .max()
            .unwrap_or(0)
    }

    /// Static structural checks: indices in range, every reference resolvable
    /// by the time its step runs, and every assemble step covered by a
    /// scripted adversary win of the right kind in its round.
    pub fn validate(&self, params: &ProtocolParams) -> Result<(), String> {
        let m = params.m;
        let n = params.honest_node_count;
        let mut honest_per_round: HashMap<Round, usize> = HashMap::new();
        let mut adv_budget: HashMap<(Round, BlockTarget), i64> = HashMap::new();
        for a in &self.arrivals {
            if a.round == 0 {
                return Err("arrival scheduled in round 0 (rounds start at 1)".into());
            }
            if a.round > params.r_max {
                return Err(format!("arrival in round {} beyond r_max {}", a.round, params.r_max));
            }
            if let BlockTarget::Voter(c) = a.target {
                if c >= m {
                    return Err(format!("arrival on voter chain {c}, but m = {m}"));
                }
            }
            match a.miner {
                ScriptMiner::Honest { node } if node >= n => {
                    return Err(format!("arrival assigned to node {node}, but n = {n}"));
                }
                ScriptMiner::Honest { .. } => {
                    *honest_per_round.entry(a.round).or_default() += 1;
                }
                ScriptMiner::Adversary => {
                    *adv_budget.entry((a.round, a.target)).or_default() += 1;
                }
            }
        }
        let mut tags: HashSet<&str> = HashSet::new();
        let check_ref = |r: &BlockRef, step_round: Round, tags: &HashSet<&str>| {
            match r {
                BlockRef::ProposerGenesis => Ok(()),
                BlockRef::VoterGenesis { chain } if *chain >= m => {
                    Err(format!("reference to voter genesis {chain}, but m = {m}"))
                }
                BlockRef::VoterGenesis { .. } => Ok(()),
                BlockRef::Tag { tag } if !tags.contains(tag.as_str()) => {
                    Err(format!("tag {tag:?} referenced before assembly"))
                }
                BlockRef::Tag { .. } => Ok(()),
                BlockRef::Arrival { round, index } => {
                    if *round > step_round {
                        return Err(format!(
                            "step in round {step_round} references a round-{round} arrival"
                        ));
                    }
                    let have = honest_per_round.get(round).copied().unwrap_or(0);
                    if *index >= have {
                        return Err(format!(
                            "arrival index {index} out of range: round {round} has {have} honest wins"
                        ));
                    }
                    Ok(())
                }
            }
        };
        for s in &self.steps {
            if s.round == 0 || s.round > params.r_max {
                return Err(format!("step round {} outside 1..={}", s.round, params.r_max));
            }
            match &s.action {
                ScriptAction::AssembleProposer {
                    tag,
                    level_parent,
                    depth_parent,
                    ..
                } => {
                    check_ref(level_parent, s.round, &tags)?;
                    check_ref(depth_parent, s.round, &tags)?;
                    let b = adv_budget.entry((s.round, BlockTarget::Proposer)).or_default();
                    *b -= 1;
                    if *b < 0 {
                        return Err(format!(
                            "round {}: more proposer assemblies than adversary wins",
                            s.round
                        ));
                    }
                    if !tags.insert(tag) {
                        return Err(format!("duplicate tag {tag:?}"));
                    }
                }
                ScriptAction::AssembleVoter {
                    tag,
                    chain,
                    parent,
                    votes,
                    ..
                } => {
                    if *chain >= m {
                        return Err(format!("assembly on voter chain {chain}, but m = {m}"));
                    }
                    check_ref(parent, s.round, &tags)?;
                    for v in votes {
                        check_ref(v, s.round, &tags)?;
                    }
                    let b = adv_budget
                        .entry((s.round, BlockTarget::Voter(*chain)))
                        .or_default();
                    *b -= 1;
                    if *b < 0 {
                        return Err(format!(
                            "round {}: more chain-{chain} assemblies than adversary wins",
                            s.round
                        ));
                    }
                    if !tags.insert(tag) {
                        return Err(format!("duplicate tag {tag:?}"));
                    }
                }
                ScriptAction::Publish { block, front } => {
                    check_ref(block, s.round, &tags)?;
                    if let DeliveryFront::Nodes(nodes) = front {
                        if let Some(&bad) = nodes.iter().find(|&&x| x >= n) {
                            return Err(format!("publish front names node {bad}, but n = {n}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Executes a [`Script`]'s steps; the simulator separately pins its arrivals.
pub struct ScriptedStrategy {
    steps: BTreeMap<Round, Vec<ScriptAction>>,
    tags: HashMap<String, BlockIdx>,
}

impl ScriptedStrategy {
    pub fn new(script: Script) -> Self {
        let mut steps: BTreeMap<Round, Vec<ScriptAction>> = BTreeMap::new();
        for s in script.steps {
            steps.entry(s.round).or_default().push(s.action);
        }
        ScriptedStrategy {
            steps,
            tags: HashMap::new(),
        }
    }

    fn resolve(&self, ctx: &AdversaryCtx<'_>, r: &BlockRef) -> Result<BlockIdx, AdversaryError> {
        match r {
            BlockRef::ProposerGenesis => Ok(ctx.dag().proposer_genesis()),
            BlockRef::VoterGenesis { chain } => {
                if *chain >= ctx.dag().m() {
                    return Err(AdversaryError::InvalidAction(format!(
                        "voter genesis {chain} out of range"
                    )));
                }
                Ok(ctx.dag().voter_genesis(*chain))
            }
            BlockRef::Tag { tag } => self.tags.get(tag).copied().ok_or_else(|| {
                AdversaryError::InvalidAction(format!("unknown tag {tag:?}"))
            }),
            BlockRef::Arrival { round, index } => ctx
                .honest_mined(*round)
                .get(*index)
                .copied()
                .ok_or_else(|| {
                    AdversaryError::InvalidAction(format!(
                        "no honest arrival {index} in round {round}"
                    ))
                }),
        }
    }
}

impl Strategy for ScriptedStrategy {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn on_round(&mut self, ctx: &mut AdversaryCtx<'_>) -> Result<(), AdversaryError> {
        let Some(actions) = self.steps.remove(&ctx.round) else {
            return Ok(());
        };
        for action in actions {
            match action {
                ScriptAction::AssembleProposer {
                    tag,
                    level_parent,
                    depth_parent,
                    withhold,
                } => {
                    let lp = self.resolve(ctx, &level_parent)?;
                    let dp = self.resolve(ctx, &depth_parent)?;
                    let idx = ctx.assemble_proposer(lp, dp, vec![], withhold)?;
                    self.tags.insert(tag, idx);
                }
                ScriptAction::AssembleVoter {
                    tag,
                    chain,
                    parent,
                    votes,
                    withhold,
                } => {
                    let p = self.resolve(ctx, &parent)?;
                    let vs = votes
                        .iter()
                        .map(|v| self.resolve(ctx, v))
                        .collect::<Result<Vec<_>, _>>()?;
                    let idx = ctx.assemble_voter(chain, p, vs, withhold)?;
                    self.tags.insert(tag, idx);
                }
                ScriptAction::Publish { block, front } => {
                    let b = self.resolve(ctx, &block)?;
                    ctx.publish(b, front)?;
                }
            }
        }
        Ok(())
    }
}
