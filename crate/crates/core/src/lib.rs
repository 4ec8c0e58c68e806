//! Sparse approximate personalized PageRank and PPR-aware graph attention.
//!
//! This crate holds everything that is pure computation: the CSR graph
//! container, the forward-push PPR engine, a small reverse-mode autodiff
//! engine with the kernels attention networks need, the attention layers
//! themselves and the full models built on them. It is `no_std` and only
//! needs `alloc`; file formats, thread pools and the command line live in
//! the `pprgat-lab` companion crate.
//!
//! The main flow is:
//!
//! 1. build a [`graph::CsrGraph`] (symmetrized, sorted rows),
//! 2. precompute the top-k PPR matrix with [`ppr::compute_ppr_matrix`],
//! 3. build a [`models::Model`] and call [`models::Model::forward`] on a
//!    [`autodiff::Tape`] to get logits and gradients.
#![no_std]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

extern crate alloc;

pub mod attention;
pub mod autodiff;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod models;
pub mod ppr;
pub mod real;
pub mod rng;

pub use real::Real;
