//! Std companion to `pprgat-core`: canonical dataset directories, PPR caches
//! with a threaded precompute driver, parameter checkpoints, the training
//! harness and the `pprgat` command line.

mod alloc_tuning;
pub mod benchmark;
pub mod checkpoint;
pub mod cli;
pub mod dataset_io;
pub mod harness;
pub mod ppr_cache;
