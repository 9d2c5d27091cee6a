//! Protocol parameters and the sizing constants derived from them.
//!
//! The derivations follow the protocol's security analysis, instantiated at
//! whatever scale the caller asks for. All logarithms are natural logs; the
//! choice is recorded in [`DerivedConstants::log_convention`] so that reports
//! are self-describing.
//!
//! The derived quantities are:
//!
//! * `gamma = (1 - 2*beta)^2 / 36` — the security-margin rate that sizes the
//!   minimum counted vote depth;
//! * `c1 = (1 - 2*beta) / 16` — the base discount applied to vote tallies;
//! * `k_min = ceil((4 / gamma) * ln(200 / (gamma * c1)))` — the minimum vote
//!   depth at which votes are counted. The formula value is astronomically
//!   large for realistic `beta`, so desk-scale runs override it via
//!   [`ProtocolParams::k_min_override`];
//! * `delta_k(k) = max(c1 / (1 + 2k), (1 - 2*beta) * c1 / (1 + 32 ln m))` —
//!   the per-depth tally discount, non-increasing in `k` with a positive
//!   floor;
//! * `epsilon_m = r_max^2 * exp(-(1 - 2*beta) * c1 * m / (2 + 64 ln m))` —
//!   the failure-probability bound for a whole run. It is near (or above) 1
//!   for desk-scale `m`; it is reported as-is, never clamped;
//! * `delta_r = ceil(2 * k_min / ((1 - 2*beta) * fv_bar))` — the settling
//!   window, in rounds, used by the trace analyzers as the "quickly
//!   notarized" horizon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How per-round block arrivals are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Independent Poisson counts per round (multiple wins per round allowed).
    Poisson,
    /// At most one win per round per target; rates must be probabilities.
    Bernoulli,
}

/// Static configuration of a simulated protocol instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of voter chains.
    pub m: u32,
    /// Fraction of mining power held by the adversary, in `[0, 1]`.
    /// Liveness analysis requires `beta < 0.5`; consistency experiments may
    /// go up to 1.0 (with a validation warning).
    pub beta: f64,
    /// Expected proposer-block arrivals per round (whole network).
    pub fp_bar: f64,
    /// Expected voter-block arrivals per round *per chain* (whole network).
    pub fv_bar: f64,
    /// Simulation horizon in rounds.
    pub r_max: u64,
    /// Bit width of block identifiers, in `[8, 64]`.
    pub kappa: u32,
    /// Desk-scale override for the minimum counted vote depth. The formula
    /// value of `k_min` is impractically large for any simulation, so shipped
    /// configurations set this (default 6). `None` uses the formula.
    pub k_min_override: Option<u32>,
    /// Arrival sampling mode.
    pub arrival_mode: ArrivalMode,
    /// Number of honest nodes sharing the honest mining power.
    pub honest_node_count: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            m: 50,
            beta: 0.25,
            fp_bar: 0.02,
            fv_bar: 0.05,
            r_max: 20_000,
            kappa: 64,
            k_min_override: Some(6),
            arrival_mode: ArrivalMode::Poisson,
            honest_node_count: 3,
        }
    }
}

/// A single violated parameter invariant, in human-readable form.
///
/// `fatal` violations make the configuration unusable; non-fatal ones are
/// warnings (for example `beta >= 0.5`, which disables liveness analysis but
/// still permits consistency experiments).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
    pub fatal: bool,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = if self.fatal { "error" } else { "warning" };
        write!(f, "{kind}: {}: {}", self.field, self.message)
    }
}

/// Checks every parameter invariant and returns all violations found.
///
/// Returns an empty vector for a fully valid configuration. Callers that only
/// care about usability should filter on [`Violation::fatal`].
pub fn validate_params(p: &ProtocolParams) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut fatal = |field, message: String| {
        v.push(Violation {
            field,
            message,
            fatal: true,
        })
    };

    if p.m < 1 {
        fatal("m", format!("m must be >= 1, got {}", p.m));
    }
    if !p.beta.is_finite() || !(0.0..=1.0).contains(&p.beta) {
        fatal("beta", format!("beta must lie in [0, 1], got {}", p.beta));
    }
    if !p.fp_bar.is_finite() || p.fp_bar < 0.0 {
        fatal(
            "fp_bar",
            format!("proposer rate must be finite and >= 0, got {}", p.fp_bar),
        );
    }
    if !p.fv_bar.is_finite() || p.fv_bar < 0.0 {
        fatal(
            "fv_bar",
            format!("voter rate must be finite and >= 0, got {}", p.fv_bar),
        );
    }
    if p.arrival_mode == ArrivalMode::Bernoulli {
        if p.fp_bar > 1.0 {
            fatal(
                "fp_bar",
                format!("bernoulli arrivals need fp_bar <= 1, got {}", p.fp_bar),
            );
        }
        if p.fv_bar > 1.0 {
            fatal(
                "fv_bar",
                format!("bernoulli arrivals need fv_bar <= 1, got {}", p.fv_bar),
            );
        }
    }
    if !(8..=64).contains(&p.kappa) {
        fatal(
            "kappa",
            format!("id width must lie in [8, 64] bits, got {}", p.kappa),
        );
    }
    if p.honest_node_count < 1 {
        fatal(
            "honest_node_count",
            format!("need at least one honest node, got {}", p.honest_node_count),
        );
    }
    if let Some(k) = p.k_min_override {
        if k < 1 {
            fatal("k_min_override", format!("k_min must be >= 1, got {k}"));
        }
    }
    if p.beta.is_finite() && (0.5..=1.0).contains(&p.beta) {
        v.push(Violation {
            field: "beta",
            message: format!(
                "beta = {} >= 0.5: liveness analysis unavailable, verdict is consistency-only",
                p.beta
            ),
            fatal: false,
        });
    }
    v
}

/// Errors from [`derive_constants`].
#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    /// `beta >= 0.5` makes `gamma * c1 <= 0`, so the `k_min` formula is
    /// undefined. Supplying `k_min_override` lifts the restriction (the run
    /// is then consistency-only).
    #[error("beta = {beta} >= 0.5: k_min formula undefined and no override supplied")]
    DegenerateBeta { beta: f64 },
    /// The parameters fail fatal validation; derivation refuses to proceed.
    #[error("invalid parameters: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { violations: Vec<Violation> },
}

/// Sentinel for "no finite settling window" (degenerate `beta` or zero voter
/// rate). Callers must use saturating arithmetic when adding `delta_r` to a
/// round number.
pub const DELTA_R_UNBOUNDED: u64 = u64::MAX;

/// Which logarithm the derivations use. There is only one sane answer, but
/// recording it keeps reports self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogConvention {
    #[default]
    Natural,
}

/// Sizing constants derived from [`ProtocolParams`]. See the module docs for
/// the formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Security-margin rate `(1 - 2*beta)^2 / 36`.
    pub gamma: f64,
    /// Base tally discount `(1 - 2*beta) / 16`.
    pub c1: f64,
    /// Effective minimum counted vote depth (override if supplied, formula
    /// value otherwise).
    pub k_min: u64,
    /// Formula value of `k_min`, kept for reporting even when overridden.
    /// `None` when `beta >= 0.5` leaves the formula undefined.
    pub k_min_formula: Option<u64>,
    /// The depth-independent floor of `delta_k`.
    pub delta_k_floor: f64,
    /// Failure-probability bound for the whole run; near or above 1 at desk
    /// scale, reported as-is.
    pub epsilon_m: f64,
    /// Settling window in rounds ([`DELTA_R_UNBOUNDED`] when infinite).
    pub delta_r: u64,
    /// Logarithm convention used throughout the derivations.
    pub log_convention: LogConvention,
}

impl DerivedConstants {
    /// Per-depth tally discount `delta_k(k)`, non-increasing in `k` and
    /// bounded below by [`Self::delta_k_floor`].
    pub fn delta_k(&self, k: u64) -> f64 {
        let varying = self.c1 / (1.0 + 2.0 * k as f64);
        varying.max(self.delta_k_floor)
    }
}

/// Derives all sizing constants from a validated parameter set.
///
/// Fails with [`ParamsError::DegenerateBeta`] when `beta >= 0.5` and no
/// `k_min_override` is supplied; with an override the degenerate quantities
/// are still well-defined (`delta_k` keeps its non-negative floor, and
/// `delta_r` becomes [`DELTA_R_UNBOUNDED`]).
pub fn derive_constants(p: &ProtocolParams) -> Result<DerivedConstants, ParamsError> {
    let violations: Vec<Violation> = validate_params(p).into_iter().filter(|v| v.fatal).collect();
    if !violations.is_empty() {
        return Err(ParamsError::Invalid { violations });
    }

    let margin = 1.0 - 2.0 * p.beta; // <= 0 once beta >= 0.5
    let gamma = margin * margin / 36.0;
    let c1 = margin / 16.0;
    let ln_m = (p.m as f64).ln();

    let k_min_formula = if margin > 0.0 {
        let raw = (4.0 / gamma) * (200.0 / (gamma * c1)).ln();
        Some(raw.ceil() as u64)
    } else {
        None
    };
    let k_min = match (p.k_min_override, k_min_formula) {
        (Some(k), _) => u64::from(k),
        (None, Some(k)) => k,
        (None, None) => return Err(ParamsError::DegenerateBeta { beta: p.beta }),
    };

    // (1 - 2b) * c1 = (1 - 2b)^2 / 16 >= 0 even for degenerate beta.
    let delta_k_floor = margin * c1 / (1.0 + 32.0 * ln_m);
    let r = p.r_max as f64;
    let epsilon_m = r * r * (-(margin * c1) * p.m as f64 / (2.0 + 64.0 * ln_m)).exp();

    let delta_r = if margin > 0.0 && p.fv_bar > 0.0 {
        let raw = (2.0 * k_min as f64 / (margin * p.fv_bar)).ceil();
        if raw.is_finite() && raw < DELTA_R_UNBOUNDED as f64 {
            raw as u64
        } else {
            DELTA_R_UNBOUNDED
        }
    } else {
        DELTA_R_UNBOUNDED
    };

    Ok(DerivedConstants {
        gamma,
        c1,
        k_min,
        k_min_formula,
        delta_k_floor,
        epsilon_m,
        delta_r,
        log_convention: LogConvention::Natural,
    })
}
