//! Bit-exact integer datapath built from add, subtract, compare and shift,
//! with per-stage operation counting and a multiplier audit.

mod alu;
mod csd;
mod format;
mod pipeline;
mod trace;
pub mod width;

pub use alu::{fx_add, fx_fir_mp, fx_mp, fx_sub, water_level_wide, Alu, Overflow};
pub use csd::{ShiftAdd, ShiftTerm};
pub use format::{signed_width, FixedPointFormat};
pub use pipeline::{
    fixed_linear_reference, fixed_pipeline, quantize_audio, run_fixed, DatapathConfig, FixedRun,
};
pub use trace::{audit, AuditReport, OpCounts, OpTrace, Stage, StageTrace, TRACE_CSV_HEADER};
