//! Human-readable rendering of run reports and derived constants.

use std::fmt::Write;

use taiji_core::params::{DerivedConstants, LogConvention, ProtocolParams, DELTA_R_UNBOUNDED};
use taiji_core::simulator::report::RunReport;

/// Multi-section plain-text summary of a run.
pub fn render_report(r: &RunReport) -> String {
    let mut out = String::new();
    let p = &r.config.params;
    let w = &mut out;

    let _ = writeln!(w, "verdict: {}", r.verdict);
    let _ = writeln!(
        w,
        "run: strategy={} seed={} rounds={} m={} beta={} fp={} fv={} arrivals={:?} honest_nodes={}",
        r.config.strategy.name.as_str(),
        r.config.seed,
        p.r_max,
        p.m,
        p.beta,
        p.fp_bar,
        p.fv_bar,
        p.arrival_mode,
        p.honest_node_count,
    );
    let _ = writeln!(
        w,
        "constants: k_min={} delta_r={} gamma={:.3e} c1={:.3e} epsilon_m={:.3e}",
        r.constants.k_min,
        if r.constants.delta_r == DELTA_R_UNBOUNDED {
            "unbounded".into()
        } else {
            r.constants.delta_r.to_string()
        },
        r.constants.gamma,
        r.constants.c1,
        r.constants.epsilon_m,
    );

    let t = &r.totals;
    let _ = writeln!(
        w,
        "mining: {} proposer + {} voter blocks ({} honest wins, {} adversary wins), {} txs",
        t.proposer_blocks, t.voter_blocks, t.honest_wins, t.adversary_wins, t.txs_arrived
    );
    let c = &r.chain;
    let _ = writeln!(
        w,
        "observer chain: {} notarized ({} honest-mined), {} confirmed, tip depth {}, max level {}; honest blocks on longest notarized chains: {}",
        c.observer_notarized,
        c.honest_notarized,
        c.observer_confirmed,
        c.observer_tip_depth,
        c.observer_max_level,
        c.honest_on_notarized_chains,
    );
    let a = &r.adversary;
    let _ = writeln!(
        w,
        "adversary: {} assembled, {} published, {} withheld at end, {} wins unused",
        a.assembled, a.published, a.withheld_unpublished, a.unused_wins
    );

    if r.violations.total() == 0 {
        let _ = writeln!(w, "violations: none");
    } else {
        let _ = writeln!(w, "violations: {:?}", r.violations);
    }
    if r.soft.any() {
        let _ = writeln!(w, "soft flags: {:?}", r.soft);
    }

    let g = &r.genesis;
    let _ = writeln!(
        w,
        "regime: {} rounds outside the all-clear state in {} intervals (counting {})",
        g.non_genesis_rounds,
        g.intervals.len(),
        if g.counting_pass() { "pass" } else { "FAIL" }
    );
    for i in g.intervals.iter().take(10) {
        let _ = writeln!(
            w,
            "  [{:>6}, {:>6}] adversary wins {} vs honest {}{}{}",
            i.start,
            i.end,
            i.adversary_proposer_wins,
            i.honest_proposer_wins,
            if i.pass { "" } else { " — counting FAILED" },
            if i.loner_breach {
                " (screened: arrivals too close)"
            } else {
                ""
            },
        );
    }
    if g.intervals.len() > 10 {
        let _ = writeln!(w, "  ... {} more intervals", g.intervals.len() - 10);
    }

    let h = &r.classification;
    if h.total() > 0 {
        let _ = writeln!(w, "honest proposer blocks by outcome:");
        for (name, count) in [
            ("notarized in window", h.notarized),
            ("displaced by withheld same-level block", h.level_private),
            ("stalled by a balancing block", h.balance),
            ("depth-displaced by a public honest block", h.public_honest),
            ("depth-displaced by a public adversary block", h.public_adversary),
            ("depth-displaced by a fresh lower-level block", h.depth_private_small),
            ("depth-displaced by a fresh higher-level block", h.depth_private_large),
            ("unclassified", h.unclassified),
        ] {
            if count > 0 {
                let _ = writeln!(w, "  {count:>6}  {name}");
            }
        }
    }

    let l = &r.latency;
    if l.confirmed + l.censored > 0 {
        let _ = writeln!(
            w,
            "latency: {} confirmed, {} censored, mean {} p50 {} p95 {} max {} rounds",
            l.confirmed,
            l.censored,
            l.mean.map_or("-".into(), |v| format!("{v:.1}")),
            l.p50.map_or("-".into(), |v| v.to_string()),
            l.p95.map_or("-".into(), |v| v.to_string()),
            l.max.map_or("-".into(), |v| v.to_string()),
        );
    }

    if !r.flags.is_empty() {
        let _ = writeln!(w, "findings:");
        for f in r.flags.iter().take(8) {
            let _ = writeln!(w, "  - {f}");
        }
        if r.flags.len() > 8 {
            let _ = writeln!(w, "  ... {} more", r.flags.len() - 8);
        }
    }
    out
}

/// Key-value printout of the derived analysis constants.
pub fn render_constants(p: &ProtocolParams, c: &DerivedConstants) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "m: {}", p.m);
    let _ = writeln!(w, "beta: {}", p.beta);
    let _ = writeln!(w, "fp_bar: {}", p.fp_bar);
    let _ = writeln!(w, "fv_bar: {}", p.fv_bar);
    let _ = writeln!(w, "r_max: {}", p.r_max);
    let _ = writeln!(w, "gamma: {}", c.gamma);
    let _ = writeln!(w, "c1: {}", c.c1);
    match c.k_min_formula {
        Some(k) => {
            let _ = writeln!(w, "k_min_formula: {k}");
        }
        None => {
            let _ = writeln!(w, "k_min_formula: undefined (beta >= 1/2)");
        }
    }
    let _ = writeln!(
        w,
        "k_min: {}{}",
        c.k_min,
        if p.k_min_override.is_some() {
            " (override)"
        } else {
            ""
        }
    );
    let _ = writeln!(w, "delta_k_floor: {}", c.delta_k_floor);
    let _ = writeln!(w, "epsilon_m: {}", c.epsilon_m);
    if c.delta_r == DELTA_R_UNBOUNDED {
        let _ = writeln!(w, "delta_r: unbounded (voting cannot make progress)");
    } else {
        let _ = writeln!(w, "delta_r: {}", c.delta_r);
    }
    let _ = writeln!(
        w,
        "log_convention: {}",
        match c.log_convention {
            LogConvention::Natural => "natural",
        }
    );
    out
}
