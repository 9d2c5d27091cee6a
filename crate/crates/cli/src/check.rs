//! Event-level audit of a stored trace: re-derives every invariant that the
//! event stream alone can witness and reports each as PASS or FAIL.
//!
//! The audit is weaker than the in-run analyzers (it cannot re-run views or
//! tallies), but it is independent of the engine: a fresh trace from a
//! non-failing run must pass every check here, and tampering with
//! notarizations, confirmations, or totals is caught.

use std::collections::{HashMap, HashSet};

use anyhow::{bail, Result};
use taiji_core::blockdag::{BlockId, Depth, Level, Round};
use taiji_core::notarization::notarization_threshold;
use taiji_core::simulator::trace::{TraceEvent, TRACE_SCHEMA};

pub struct Check {
    pub name: &'static str,
    pub failures: Vec<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        // keep a handful of examples; the count is reported either way
        if self.failures.len() < 5 {
            self.failures.push(msg);
        } else if self.failures.len() == 5 {
            self.failures.push("...".into());
        }
    }

    fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Audits a parsed trace. Structural problems (no header, wrong schema,
/// nothing after the header) are errors — the file is not a readable trace —
/// while invariant breaks are FAIL entries in the returned list.
pub fn audit(events: &[TraceEvent]) -> Result<Vec<Check>> {
    let Some(TraceEvent::Header { schema, config, .. }) = events.first() else {
        bail!("trace does not start with a header line");
    };
    if *schema != TRACE_SCHEMA {
        bail!("trace schema {schema} not supported (this build reads schema {TRACE_SCHEMA})");
    }
    let m = config.params.m;
    let observer = config.params.honest_node_count;
    let r_max = config.params.r_max;
    let threshold = f64::from(notarization_threshold(m));

    let mut checks = Vec::new();

    // one header, one end line, nothing outside them
    let mut c = Check::new("single header and terminal end line");
    let headers = events
        .iter()
        .filter(|e| matches!(e, TraceEvent::Header { .. }))
        .count();
    if headers != 1 {
        c.fail(format!("{headers} header lines"));
    }
    match events.last() {
        Some(TraceEvent::End { .. }) => {}
        other => c.fail(format!("last line is {other:?}, not an end line")),
    }
    let ends = events
        .iter()
        .filter(|e| matches!(e, TraceEvent::End { .. }))
        .count();
    if ends != 1 {
        c.fail(format!("{ends} end lines"));
    }
    checks.push(c);

    // event rounds never go backwards
    let mut c = Check::new("event rounds are non-decreasing");
    let mut prev = 0;
    for (i, e) in events.iter().enumerate() {
        if let Some(r) = e.round() {
            if r < prev {
                c.fail(format!("line {}: round {r} after round {prev}", i + 1));
            }
            prev = r;
        }
    }
    checks.push(c);

    // every block is mined exactly once
    let mut c = Check::new("mined block ids are unique");
    let mut mined: HashSet<BlockId> = HashSet::new();
    for e in events {
        if let TraceEvent::MinedProposer { block, .. } | TraceEvent::MinedVoter { block, .. } = e {
            if !mined.insert(*block) {
                c.fail(format!("block {block} mined twice"));
            }
        }
    }
    checks.push(c);

    // block references resolve to earlier mining events
    let mut c = Check::new("block references resolve to earlier mined blocks");
    let mut seen: HashSet<BlockId> = HashSet::new();
    for e in events {
        let mut need: Vec<BlockId> = Vec::new();
        match e {
            TraceEvent::MinedProposer { block, .. } => {
                seen.insert(*block);
            }
            TraceEvent::MinedVoter { block, votes, .. } => {
                need.extend(votes.iter().copied());
                seen.insert(*block);
            }
            TraceEvent::Published { block, .. }
            | TraceEvent::Delivered { block, .. }
            | TraceEvent::Notarized { block, .. }
            | TraceEvent::Confirmed { block, .. } => need.push(*block),
            _ => {}
        }
        for b in need {
            if !seen.contains(&b) {
                c.fail(format!("block {b} referenced before it was mined"));
            }
        }
    }
    checks.push(c);

    // a view notarizes at most one block per proposer level
    let mut c = Check::new("one notarization per level per node");
    let mut notarized_at: HashMap<(u32, Level), BlockId> = HashMap::new();
    for e in events {
        if let TraceEvent::Notarized {
            node, level, block, ..
        } = e
        {
            if let Some(prev) = notarized_at.insert((*node, *level), *block) {
                c.fail(format!(
                    "node {node} notarized both {prev} and {block} at level {level}"
                ));
            }
        }
    }
    checks.push(c);

    // the discounted tally behind each notarization is sound
    let mut c = Check::new("notarization tallies reach the majority and stay under the raw count");
    for e in events {
        if let TraceEvent::Notarized {
            node,
            block,
            votes,
            v_underbar,
            ..
        } = e
        {
            if *v_underbar < threshold {
                c.fail(format!(
                    "node {node}, block {block}: discounted tally {v_underbar} below majority {threshold}"
                ));
            }
            if f64::from(*votes) < *v_underbar {
                c.fail(format!(
                    "node {node}, block {block}: raw count {votes} below discounted tally {v_underbar}"
                ));
            }
        }
    }
    checks.push(c);

    // all views agree on the confirmed block at every chain position
    let mut c = Check::new("confirmed chains agree across nodes");
    let mut confirmed_at: HashMap<Depth, (u32, BlockId)> = HashMap::new();
    for e in events {
        if let TraceEvent::Confirmed {
            node, block, depth, ..
        } = e
        {
            match confirmed_at.get(depth) {
                Some(&(first_node, prev)) if prev != *block => c.fail(format!(
                    "depth {depth}: node {first_node} confirmed {prev}, node {node} confirmed {block}"
                )),
                Some(_) => {}
                None => {
                    confirmed_at.insert(*depth, (*node, *block));
                }
            }
        }
    }
    checks.push(c);

    // each view's confirmed chain only ever extends, one depth at a time
    let mut c = Check::new("confirmed chains extend one depth at a time per node");
    let mut tip: HashMap<u32, Depth> = HashMap::new();
    for e in events {
        if let TraceEvent::Confirmed { node, depth, .. } = e {
            let prev = tip.entry(*node).or_insert(0);
            if *depth != *prev + 1 {
                c.fail(format!(
                    "node {node}: confirmed depth {depth} after depth {prev}"
                ));
            }
            *prev = *depth;
        }
    }
    checks.push(c);

    // a view confirms only blocks it has notarized
    let mut c = Check::new("confirmations follow notarization in the same view");
    let mut notarized_by: HashMap<u32, HashSet<BlockId>> = HashMap::new();
    for e in events {
        match e {
            TraceEvent::Notarized { node, block, .. } => {
                notarized_by.entry(*node).or_default().insert(*block);
            }
            TraceEvent::Confirmed { node, block, .. } => {
                if !notarized_by.get(node).is_some_and(|s| s.contains(block)) {
                    c.fail(format!(
                        "node {node} confirmed {block} without notarizing it"
                    ));
                }
            }
            _ => {}
        }
    }
    checks.push(c);

    // transactions are confirmed only after arriving, once per node
    let mut c = Check::new("tx confirmations follow arrival, at most once per node");
    let mut arrived: HashMap<u64, Round> = HashMap::new();
    let mut tx_seen: HashSet<(u32, u64)> = HashSet::new();
    for e in events {
        match e {
            TraceEvent::TxArrived { round, tx } => {
                if arrived.insert(*tx, *round).is_some() {
                    c.fail(format!("tx {tx} arrived twice"));
                }
            }
            TraceEvent::TxConfirmed { round, node, tx } => {
                match arrived.get(tx) {
                    Some(a) if a <= round => {}
                    Some(a) => c.fail(format!(
                        "tx {tx} confirmed at round {round} before arriving at {a}"
                    )),
                    None => c.fail(format!("tx {tx} confirmed but never arrived")),
                }
                if !tx_seen.insert((*node, *tx)) {
                    c.fail(format!("tx {tx} confirmed twice on node {node}"));
                }
            }
            _ => {}
        }
    }
    checks.push(c);

    // regime exit/enter lines strictly alternate, starting with an exit
    let mut c = Check::new("regime transitions alternate exit/enter");
    let mut outside = false;
    for e in events {
        match e {
            TraceEvent::GenesisExit { round } => {
                if outside {
                    c.fail(format!("round {round}: exit while already outside"));
                }
                outside = true;
            }
            TraceEvent::GenesisEnter { round } => {
                if !outside {
                    c.fail(format!("round {round}: enter while already inside"));
                }
                outside = false;
            }
            _ => {}
        }
    }
    checks.push(c);

    // the end line's totals match the stream
    let mut c = Check::new("end-line totals match the event stream");
    if let Some(TraceEvent::End {
        rounds,
        blocks,
        observer_notarized,
        observer_confirmed,
    }) = events.last()
    {
        if *rounds != r_max {
            c.fail(format!("end line says {rounds} rounds, header says {r_max}"));
        }
        if *blocks != mined.len() as u64 {
            c.fail(format!(
                "end line says {blocks} blocks, stream mined {}",
                mined.len()
            ));
        }
        let n = events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Notarized { node, .. } if *node == observer))
            .count() as u64;
        if *observer_notarized != n {
            c.fail(format!(
                "end line says observer notarized {observer_notarized}, stream shows {n}"
            ));
        }
        let n = events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Confirmed { node, .. } if *node == observer))
            .count() as u64;
        if *observer_confirmed != n {
            c.fail(format!(
                "end line says observer confirmed {observer_confirmed}, stream shows {n}"
            ));
        }
    }
    checks.push(c);

    Ok(checks)
}

/// Prints one PASS/FAIL line per check; returns whether everything passed.
pub fn print_results(checks: &[Check]) -> bool {
    let mut all_ok = true;
    for check in checks {
        if check.ok() {
            println!("PASS  {}", check.name);
        } else {
            all_ok = false;
            println!("FAIL  {}", check.name);
            for f in &check.failures {
                println!("      {f}");
            }
        }
    }
    all_ok
}
