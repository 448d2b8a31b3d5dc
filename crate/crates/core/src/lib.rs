//! Static cycle estimation and few-shot energy/latency prediction for deep
//! learning inference on microcontrollers.
//!
//! The pipeline maps loops of each kernel's source CFG onto the loops of its
//! compiled disassembly, transfers trip-count expressions across that
//! mapping, and stores per-loop instruction histograms in an instruction
//! library. Model cycle counts then come from evaluating the library against
//! each operator's shape parameters, and a linear `a * cycles + b` model
//! fitted on a handful of measurements turns cycles into joules or seconds.

pub mod cfg;
pub mod cli;
pub mod disasm;
pub mod expr;
pub mod features;
pub mod instlib;
pub mod mapper;
pub mod modelparse;
pub mod predictor;
pub mod srcfeat;
