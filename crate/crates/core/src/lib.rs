//! Neural tracking of speech in EEG.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: the multichannel sample container and its on-disk formats
//! - [`dsp`]: least-squares FIR design, resampling, referencing, envelopes
//! - [`speechfeat`]: onset trains, cohort statistics and n-gram word values
//! - [`mmtask`]: match-mismatch segment pairs and temporal splits
//! - [`nn`]: dilated convolutional match-mismatch networks trained with Adam
//! - [`cohortsim`]: synthetic stories and cohorts with implanted deficits
//! - [`classify`]: rank-sum statistics, RBF-SVM, nested CV, ROC and Shapley
//! - [`pipeline`]: the end-to-end experiment tying the stages together

pub mod classify;
pub mod cohortsim;
pub mod dsp;
pub mod error;
pub mod mmtask;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod speechfeat;

pub use error::{Error, Result};
pub use signal::MultichannelSignal;
