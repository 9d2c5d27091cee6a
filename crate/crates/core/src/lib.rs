//! Deterministic round-based simulator and protocol library for a hybrid
//! proof-of-work consensus protocol that combines a longest-chain backbone
//! with BFT-style notarization.
//!
//! The protocol maintains three interlocking structures:
//!
//! * a **proposer tree** of blocks that carry transactions, where each block
//!   references a *level parent* (deepest proposer level its miner has seen)
//!   and a *depth parent* (the tip of the notarized chain in its miner's
//!   view);
//! * **m voter chains**, each an independent longest-chain instance whose
//!   blocks cast votes for proposer blocks, one vote per proposer level;
//! * a **notarized chain** of proposer blocks linked by depth parents, where
//!   a block is notarized once a discounted count of sufficiently deep votes
//!   reaches a strict majority of the voter chains.
//!
//! Mining is simulated round-by-round: block arrivals are sampled per round,
//! each arrival is attributed to the adversary with probability `beta`, and a
//! rushing adversary may withhold blocks, steer votes, and reorder message
//! delivery. The crate ships trace analyzers that verify the protocol's
//! safety and liveness bookkeeping on every run: vote lower-bound soundness,
//! uniqueness of notarization per level, level/depth ordering locks,
//! quiet-period ("genesis state") classification with block-count matching,
//! and a seven-way classification of honest proposer blocks by how the
//! adversary disrupted them.
//!
//! Everything is deterministic: a run is fully determined by its seed, and
//! emitted traces are byte-identical across repeated runs.

pub mod adversary;
pub mod blockdag;
pub mod confirmation;
pub mod mining;
pub mod notarization;
pub mod params;
pub mod simulator;

pub use adversary::{
    AdversaryCtx, AdversaryError, DeliveryFront, Strategy, StrategyName, StrategySpec,
};
pub use blockdag::{
    Block, BlockId, BlockIdx, GlobalDag, InsertOutcome, InsertRejection, Miner, NodeView,
};
pub use params::{derive_constants, validate_params, DerivedConstants, ParamsError, ProtocolParams};
pub use simulator::report::{RunReport, Verdict};
pub use simulator::trace::{FileSink, MemorySink, NullSink, TraceLevel, TraceSink};
pub use simulator::{run, SimConfig, SimError};
