//! Run traces: a schema-versioned JSONL event stream plus the sinks that
//! consume it.
//!
//! The first line of every trace is a [`TraceEvent::Header`] carrying the full
//! run configuration and the derived constants, so a trace is self-describing:
//! feeding the header's config back into the simulator reproduces the stream
//! byte for byte. Subsequent lines are events in emission order, which is
//! deterministic for a fixed config.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::adversary::DeliveryFront;
use crate::blockdag::{BlockId, Depth, Level, Miner, Round, TxId};
use crate::params::DerivedConstants;

/// Bumped whenever the event schema changes shape.
pub const TRACE_SCHEMA: u32 = 1;

/// How much a run writes to its trace sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Protocol events only (mining, delivery, notarization, confirmation,
    /// transactions, regime transitions).
    #[default]
    Events,
    /// Events plus one state digest per round, for lockstep comparison of two
    /// runs that should be identical.
    StateHash,
}

/// Outcome of one block delivery, as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryDisposition {
    Inserted,
    AlreadyKnown,
    Rejected { reason: String },
}

/// One line of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceEvent {
    /// First line of every trace.
    Header {
        schema: u32,
        config: SimConfig,
        constants: DerivedConstants,
    },
    MinedProposer {
        round: Round,
        block: BlockId,
        miner: Miner,
        level: Level,
        depth: Depth,
        txs: u32,
        /// `false` for adversary blocks assembled withheld.
        public: bool,
    },
    MinedVoter {
        round: Round,
        block: BlockId,
        miner: Miner,
        chain: u32,
        votes: Vec<BlockId>,
        public: bool,
    },
    /// A withheld adversary block released to some delivery front.
    Published {
        round: Round,
        block: BlockId,
        front: DeliveryFront,
    },
    Delivered {
        round: Round,
        node: u32,
        block: BlockId,
        disposition: DeliveryDisposition,
    },
    /// A view's notarization refresh admitted a block.
    Notarized {
        round: Round,
        node: u32,
        block: BlockId,
        level: Level,
        depth: Depth,
        votes: u32,
        v_underbar: f64,
        round_mined: Round,
        round_public: Round,
    },
    /// A view appended a block to its confirmed chain.
    Confirmed {
        round: Round,
        node: u32,
        block: BlockId,
        level: Level,
        depth: Depth,
    },
    TxArrived {
        round: Round,
        tx: TxId,
    },
    /// First confirmation of a transaction in the observer's ledger.
    TxConfirmed {
        round: Round,
        node: u32,
        tx: TxId,
    },
    /// The run left the all-clear regime (some withheld adversary proposer
    /// block is notarizable or leads all honest levels).
    GenesisExit { round: Round },
    /// The run returned to the all-clear regime.
    GenesisEnter { round: Round },
    /// Per-round digest of the engine state (`TraceLevel::StateHash` only).
    StateHash { round: Round, hash: u64 },
    /// Last line of every complete trace.
    End {
        rounds: Round,
        blocks: u64,
        observer_notarized: u64,
        observer_confirmed: u64,
    },
}

impl TraceEvent {
    /// The round an event belongs to (`None` for the header).
    pub fn round(&self) -> Option<Round> {
        match self {
            TraceEvent::Header { .. } => None,
            TraceEvent::MinedProposer { round, .. }
            | TraceEvent::MinedVoter { round, .. }
            | TraceEvent::Published { round, .. }
            | TraceEvent::Delivered { round, .. }
            | TraceEvent::Notarized { round, .. }
            | TraceEvent::Confirmed { round, .. }
            | TraceEvent::TxArrived { round, .. }
            | TraceEvent::TxConfirmed { round, .. }
            | TraceEvent::GenesisExit { round }
            | TraceEvent::GenesisEnter { round }
            | TraceEvent::StateHash { round, .. } => Some(*round),
            TraceEvent::End { rounds, .. } => Some(*rounds),
        }
    }
}

/// Destination for trace events. Emission must preserve order; errors abort
/// the run.
pub trait TraceSink {
    /// Cheap pre-check so hot paths can skip building events nobody keeps.
    fn enabled(&self) -> bool {
        true
    }
    fn emit(&mut self, ev: &TraceEvent) -> io::Result<()>;
    /// Flushes buffered output; called once after the final event.
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn enabled(&self) -> bool {
        false
    }
    fn emit(&mut self, _ev: &TraceEvent) -> io::Result<()> {
        Ok(())
    }
}

/// Collects events in memory, for tests and for analyses that want the whole
/// stream at once.
#[derive(Default)]
pub struct MemorySink {
    pub events: Vec<TraceEvent>,
}

impl TraceSink for MemorySink {
    fn emit(&mut self, ev: &TraceEvent) -> io::Result<()> {
        self.events.push(ev.clone());
        Ok(())
    }
}

/// Writes JSONL to a file, one event per line.
pub struct FileSink {
    out: BufWriter<File>,
}

impl FileSink {
    pub fn create<P: AsRef<Path>>(path: P) -> io::Result<Self> {
        Ok(FileSink {
            out: BufWriter::new(File::create(path)?),
        })
    }
}

impl TraceSink for FileSink {
    fn emit(&mut self, ev: &TraceEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, ev)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        self.out.write_all(b"\n")
    }
    fn finish(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Reads a JSONL trace back. Fails on unreadable lines (truncation, foreign
/// schema) with the offending line number in the message.
pub fn read_trace<P: AsRef<Path>>(path: P) -> io::Result<Vec<TraceEvent>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: TraceEvent = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("trace line {}: {e}", i + 1),
            )
        })?;
        events.push(ev);
    }
    Ok(events)
}

/// Incremental 64-bit FNV-1a, used for per-round state digests.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_through_jsonl() {
        let events = vec![
            TraceEvent::MinedProposer {
                round: 3,
                block: 42,
                miner: Miner::Honest(1),
                level: 2,
                depth: 1,
                txs: 0,
                public: true,
            },
            TraceEvent::Delivered {
                round: 4,
                node: 0,
                block: 42,
                disposition: DeliveryDisposition::Rejected {
                    reason: "x".into(),
                },
            },
            TraceEvent::Notarized {
                round: 9,
                node: 2,
                block: 42,
                level: 2,
                depth: 1,
                votes: 31,
                v_underbar: 30.25,
                round_mined: 3,
                round_public: 3,
            },
            TraceEvent::GenesisExit { round: 11 },
            TraceEvent::StateHash {
                round: 11,
                hash: 0xdead_beef,
            },
        ];
        for ev in &events {
            let line = serde_json::to_string(ev).unwrap();
            let back: TraceEvent = serde_json::from_str(&line).unwrap();
            assert_eq!(&back, ev);
        }
        assert_eq!(events[0].round(), Some(3));
    }

    #[test]
    fn fnv_digest_is_order_sensitive() {
        let mut a = Fnv1a::default();
        a.write_u64(1);
        a.write_u64(2);
        let mut b = Fnv1a::default();
        b.write_u64(2);
        b.write_u64(1);
        assert_ne!(a.finish(), b.finish());
        // reference value for the empty digest (FNV-1a offset basis)
        assert_eq!(Fnv1a::default().finish(), 0xcbf2_9ce4_8422_2325);
    }

    #[test]
    fn file_sink_round_trips_and_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let events = vec![
            TraceEvent::TxArrived { round: 1, tx: 7 },
            TraceEvent::End {
                rounds: 1,
                blocks: 0,
                observer_notarized: 0,
                observer_confirmed: 0,
            },
        ];
        {
            let mut sink = FileSink::create(&path).unwrap();
            for ev in &events {
                sink.emit(ev).unwrap();
            }
            sink.finish().unwrap();
        }
        assert_eq!(read_trace(&path).unwrap(), events);

        // chop the file mid-line: the reader must fail loudly
        let raw = std::fs::read(&path).unwrap();
        std::fs::write(&path, &raw[..raw.len() - 10]).unwrap();
        let err = read_trace(&path).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
    }
}
