//! Static detection of virtualization-obfuscation structure in a textual
//! IR subset.
//!
//! The pipeline: parse IR ([`ir`]), build per-function control-flow graphs
//! ([`cfg`]), locate the dispatcher / handlers / VM start / VM ends
//! ([`detect`]), and optionally tag the findings in the IR as dummy marker
//! calls ([`annotate`]). The [`synth`] module generates obfuscated-shaped
//! corpora with known ground truth for the three dispatch styles, and
//! [`merge`] models the block merging an optimizing compiler applies.
//!
//! Everything is a pure function over immutable values; analyses for
//! distinct functions can run concurrently without shared state.

pub mod annotate;
pub mod cfg;
pub mod detect;
pub mod ir;
pub mod merge;
pub mod synth;

pub use annotate::{annotate, strip_markers, AnnotateError, MarkerSpec};
pub use cfg::{build_cfg, Cfg, CfgError};
pub use detect::{
    detect, detect_with, DetectOptions, DetectionResult, Diagnostic, DiagnosticCode, VmEndMode,
};
pub use ir::{parse_module, print_module, IrModule, Label, ParseError};
pub use merge::{merge_linear_blocks, merge_transform};
pub use synth::{generate, DispatchMode, GroundTruth, SynthConfig, SynthError};
