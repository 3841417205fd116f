//! Synthetic benchmark sequences, tracking protocols and summaries.

pub mod protocol;
pub mod sequence;
pub mod stats;

pub use protocol::{
    init_perturbation_bench, occlusion_sweep, run_tracking_benchmark, BenchReport, FrameRecord, InitConfig,
    InitReport, InitRow, LostEvent, PerturbAxis, ResetSchedule, SweepCell, SweepConfig, SweepReport,
};
pub use sequence::{
    occluded_fraction, read_sequence_dir, synth_sequence, write_sequence_dir, Orientation, SequenceFrame,
    SequenceKind, SequenceSpec, SyntheticSequence,
};
pub use stats::{percentile_sorted, summarize_values, Summary};
