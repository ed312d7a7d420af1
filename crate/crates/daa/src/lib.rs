//! Docking-aware attention pooling over protein residues.
//!
//! The crate turns an ensemble of ligand poses plus per-residue embeddings
//! into a single pooled embedding: per-residue Lennard-Jones interaction
//! scores are computed against every pose, smoothed toward their mean, and
//! injected as an additive bias into an attention head whose weights pool
//! the residue embeddings. Everything is seeded and single-precision-free;
//! the same inputs give byte-identical outputs.

pub mod analysis;
pub mod attention;
pub mod cli;
pub mod fmt;
pub mod ljscore;
pub mod mat;
pub mod rng;
pub mod structio;
pub mod train;

pub use cli::run;
