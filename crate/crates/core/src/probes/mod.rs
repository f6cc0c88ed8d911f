//! Cognitive-bias probes built on the oracle and the attribution engine.

pub mod battery;
mod framing;
mod grading;
mod influence;
mod peaks;
mod representativeness;
mod sweep;

pub use battery::{
    run_battery, summarize, BatteryOptions, BatteryReport, BatterySummary, Bias, CellStatus,
    Probe, ProbeBattery, ProbeKind, ProbeOutcome, ProbeResult, COST_GATE_CALLS,
};
pub use framing::{compare_frames, run_framing, FramingPair, FramingResult};
pub use grading::{parse_grade, run_grading, GradingConfig, Histogram};
pub use influence::{run_anchoring, run_priming, AnchoringResult, PrimingResult};
pub use peaks::{round_number_peaks, PeakConfig, PeakReport};
pub use representativeness::{
    run_representativeness, RepresentativenessResult, REPRESENTATIVENESS_MAX_TOKENS,
};
pub use sweep::{
    detect_barrier, parse_range, run_sweep, SweepPoint, SweepSeries, SweepSpec,
    DEFAULT_BARRIER_THRESHOLD, DEFAULT_BARRIER_WINDOW,
};
