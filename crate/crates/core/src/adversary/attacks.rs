//! Canned regression attacks with pinned arrival schedules.
//!
//! Both scenarios run 48-round periods on `m = 12` chains with a one-third
//! adversary and vote-depth threshold 2, and both need 8 adversary-controlled
//! chains per period: the notarization bar is `floor(12/2) + 1 = 7`, and the
//! per-chain discount at depth 2 subtracts `12 * (1/240) = 0.05`, so 8 deep
//! votes score 7.95 (enough) while 7 score only 6.95.
//!
//! * `hah`: the adversary withholds a proposer one level above the honest
//!   tip, then publishes it alongside a burst of deep votes, displacing the
//!   honest block mined at that level moments earlier.
//! * `ahh`: the adversary mines a proposer first, shows it to half the
//!   honest nodes just before the honest rival appears, and lets receipt
//!   order split the vote so only the adversary block ever notarizes.
//!
//! Period cadence (rounds are relative to the period base):
//!
//! ```text
//! hah   base+0   honest proposer (level 2p-1)      — notarized by base+3
//!       base+1,2 honest voters on all 12 chains
//!       base+16  adversary proposer win: assemble A_p withheld (level 2p)
//!       base+32  honest proposer (level 2p, same level as A_p), and the
//!                adversary publishes A_p plus two deep votes on each of
//!                8 chains; A_p notarizes at base+33, the honest rival never
//!                collects more than 4 votes
//!
//! ahh   base+0   adversary proposer win: assemble A_p withheld
//!       base+16  honest rival at A_p's level; A_p published to node 0 only
//!       base+17  voter wins: node 0 chains vote A_p (it arrived first),
//!                node 1 chains vote the honest rival — a 8/4 split
//!       base+32  honest proposer (level above); adversary extends the 8
//!                split chains by one empty block each, deepening the A_p
//!                votes past the threshold; A_p notarizes at base+33
//! ```

use crate::blockdag::Round;
use crate::mining::{BlockTarget, IdPolicy};
use crate::params::{ArrivalMode, ProtocolParams};

use super::script::{BlockRef, Script, ScriptAction, ScriptArrival, ScriptMiner, ScriptStep};
use super::DeliveryFront;

/// Rounds per attack period.
pub const PERIOD: Round = 48;

fn attack_params() -> ProtocolParams {
    ProtocolParams {
        m: 12,
        beta: 1.0 / 3.0,
        // Nominal rates for reporting; scripted arrivals replace the sampler.
        // fv_bar enters delta_r: ceil(2*2 / ((1/3) * 1.0)) = 12 rounds.
        fp_bar: 0.0625,
        fv_bar: 1.0,
        r_max: 6 * PERIOD,
        kappa: 32,
        k_min_override: Some(2),
        arrival_mode: ArrivalMode::Bernoulli,
        honest_node_count: 2,
    }
}

pub fn hah_params() -> ProtocolParams {
    attack_params()
}

pub fn ahh_params() -> ProtocolParams {
    attack_params()
}

/// Number of whole attack periods that fit in `r_max` rounds.
pub fn periods_for(r_max: Round) -> u32 {
    (r_max / PERIOD) as u32
}

/// Rejects parameter overrides that would silently change the attack
/// geometry. Only the horizon may vary (it scales the period count).
pub fn check_attack_params(got: &ProtocolParams, want: &ProtocolParams) -> Result<(), String> {
    let mut fixed_want = want.clone();
    fixed_want.r_max = got.r_max;
    if *got != fixed_want {
        return Err(format!(
            "attack scripts require the canned parameters (only r_max may change): \
             expected {fixed_want:?}, got {got:?}"
        ));
    }
    if periods_for(got.r_max) == 0 {
        return Err(format!(
            "r_max = {} is shorter than one {PERIOD}-round attack period",
            got.r_max
        ));
    }
    Ok(())
}

fn tag(b: &str) -> BlockRef {
    BlockRef::Tag { tag: b.into() }
}

/// Displacement schedule: honest level is answered by a withheld adversary
/// block at the next level, released with enough instant vote depth to
/// notarize while the honest block mined at that level starves.
pub fn hah_script(periods: u32) -> Script {
    let mut arrivals = Vec::new();
    let mut steps = Vec::new();
    for p in 1..=periods {
        let base = 1 + PERIOD * u64::from(p - 1);
        arrivals.push(ScriptArrival {
            round: base,
            target: BlockTarget::Proposer,
            miner: ScriptMiner::Honest { node: 0 },
        });
        for r in [base + 1, base + 2] {
            for c in 0..12 {
                arrivals.push(ScriptArrival {
                    round: r,
                    target: BlockTarget::Voter(c),
                    miner: ScriptMiner::Honest { node: 1 },
                });
            }
        }
        arrivals.push(ScriptArrival {
            round: base + 16,
            target: BlockTarget::Proposer,
            miner: ScriptMiner::Adversary,
        });
        arrivals.push(ScriptArrival {
            round: base + 32,
            target: BlockTarget::Proposer,
            miner: ScriptMiner::Honest { node: 0 },
        });
        for c in 0..8 {
            for _ in 0..2 {
                arrivals.push(ScriptArrival {
                    round: base + 32,
                    target: BlockTarget::Voter(c),
                    miner: ScriptMiner::Adversary,
                });
            }
        }

        let a = format!("A{p}");
        let depth_parent = if p == 1 {
            BlockRef::ProposerGenesis
        } else {
            tag(&format!("A{}", p - 1))
        };
        steps.push(ScriptStep {
            round: base + 16,
            action: ScriptAction::AssembleProposer {
                tag: a.clone(),
                level_parent: BlockRef::Arrival {
                    round: base,
                    index: 0,
                },
                depth_parent,
                withhold: true,
            },
        });
        steps.push(ScriptStep {
            round: base + 32,
            action: ScriptAction::Publish {
                block: tag(&a),
                front: DeliveryFront::All,
            },
        });
        for c in 0..8u32 {
            let first = format!("F{p}_{c}");
            steps.push(ScriptStep {
                round: base + 32,
                action: ScriptAction::AssembleVoter {
                    tag: first.clone(),
                    chain: c,
                    parent: BlockRef::Arrival {
                        round: base + 2,
                        index: c as usize,
                    },
                    votes: vec![tag(&a)],
                    withhold: false,
                },
            });
            steps.push(ScriptStep {
                round: base + 32,
                action: ScriptAction::AssembleVoter {
                    tag: format!("G{p}_{c}"),
                    chain: c,
                    parent: tag(&first),
                    votes: vec![],
                    withhold: false,
                },
            });
        }
    }
    Script {
        id_policy: IdPolicy::AdversaryWinsTies,
        arrivals,
        steps,
    }
}

/// Balance schedule: the adversary's withheld proposer reaches half the
/// network one round before the equal-level honest block, splitting the vote
/// 8/4; one empty extension per split chain later deepens the adversary's
/// votes past the threshold.
pub fn ahh_script(periods: u32) -> Script {
    let mut arrivals = Vec::new();
    let mut steps = Vec::new();
    for p in 1..=periods {
        let base = 1 + PERIOD * u64::from(p - 1);
        arrivals.push(ScriptArrival {
            round: base,
            target: BlockTarget::Proposer,
            miner: ScriptMiner::Adversary,
        });
        arrivals.push(ScriptArrival {
            round: base + 16,
            target: BlockTarget::Proposer,
            miner: ScriptMiner::Honest { node: 1 },
        });
        for c in 0..12 {
            arrivals.push(ScriptArrival {
                round: base + 17,
                target: BlockTarget::Voter(c),
                miner: ScriptMiner::Honest {
                    node: if c < 8 { 0 } else { 1 },
                },
            });
        }
        arrivals.push(ScriptArrival {
            round: base + 32,
            target: BlockTarget::Proposer,
            miner: ScriptMiner::Honest { node: 1 },
        });
        for c in 0..8 {
            arrivals.push(ScriptArrival {
                round: base + 32,
                target: BlockTarget::Voter(c),
                miner: ScriptMiner::Adversary,
            });
        }

        let a = format!("A{p}");
        let (level_parent, depth_parent) = if p == 1 {
            (BlockRef::ProposerGenesis, BlockRef::ProposerGenesis)
        } else {
            (
                // the honest proposer mined one level up, 16 rounds earlier
                BlockRef::Arrival {
                    round: base - 16,
                    index: 0,
                },
                tag(&format!("A{}", p - 1)),
            )
        };
        steps.push(ScriptStep {
            round: base,
            action: ScriptAction::AssembleProposer {
                tag: a.clone(),
                level_parent,
                depth_parent,
                withhold: true,
            },
        });
        steps.push(ScriptStep {
            round: base + 16,
            action: ScriptAction::Publish {
                block: tag(&a),
                front: DeliveryFront::Nodes(vec![0]),
            },
        });
        for c in 0..8u32 {
            steps.push(ScriptStep {
                round: base + 32,
                action: ScriptAction::AssembleVoter {
                    tag: format!("E{p}_{c}"),
                    chain: c,
                    parent: BlockRef::Arrival {
                        round: base + 17,
                        index: c as usize,
                    },
                    votes: vec![],
                    withhold: false,
                },
            });
        }
    }
    Script {
        id_policy: IdPolicy::AdversaryWinsTies,
        arrivals,
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_constants;

    #[test]
    fn attack_constants_match_the_hand_calculation() {
        let p = hah_params();
        let c = derive_constants(&p).unwrap();
        assert_eq!(c.k_min, 2);
        assert_eq!(c.delta_r, 12);
        // 8 deep votes clear the bar of 7, 7 votes do not
        let discount = 12.0 * c.delta_k(2);
        assert!((discount - 0.05).abs() < 1e-12);
        assert!(8.0 - discount >= 7.0);
        assert!(7.0 - discount < 7.0);
    }

    #[test]
    fn scripts_validate_against_their_params() {
        let p = hah_params();
        let periods = periods_for(p.r_max);
        assert_eq!(periods, 6);
        hah_script(periods).validate(&p).unwrap();
        ahh_script(periods).validate(&ahh_params()).unwrap();
    }

    #[test]
    fn per_period_schedule_sizes() {
        let s = hah_script(1);
        // 2 honest proposers + 24 honest voters + 1 adv proposer + 16 adv voters
        assert_eq!(s.arrivals.len(), 43);
        // assemble + publish + 16 voter assemblies
        assert_eq!(s.steps.len(), 18);
        assert_eq!(s.last_round(), 33);

        let s = ahh_script(1);
        // 2 honest proposers + 12 honest voters + 1 adv proposer + 8 adv voters
        assert_eq!(s.arrivals.len(), 23);
        // assemble + publish + 8 voter assemblies
        assert_eq!(s.steps.len(), 10);
        assert_eq!(s.last_round(), 33);

        // multi-period scripts chain depth parents across periods
        hah_script(3).validate(&hah_params()).unwrap();
        ahh_script(3).validate(&ahh_params()).unwrap();
    }

    #[test]
    fn parameter_guard_pins_everything_but_the_horizon() {
        let want = hah_params();
        let mut got = hah_params();
        got.r_max = 2 * PERIOD;
        check_attack_params(&got, &want).unwrap();

        got.r_max = 10; // shorter than one period
        assert!(check_attack_params(&got, &want).unwrap_err().contains("period"));

        let mut got = hah_params();
        got.m = 13;
        assert!(check_attack_params(&got, &want).is_err());
    }
}
