//! Desk-scale simulator for coordinated mmWave beamforming with learned beam
//! selection.
//!
//! The library is organised as a pipeline:
//!
//! * [`geometry`] — street-canyon scenes and a deterministic image-method ray
//!   tracer that produces per-path delays, gains and arrival angles.
//! * [`channel`] — uniform planar array responses and wideband OFDM channel
//!   construction (delay taps, then per-subcarrier frequency responses).
//! * [`codebook`] — beamsteering codebooks quantised uniformly in directional
//!   cosine space, plus the omni (single-antenna) probing pattern.
//! * [`beamforming`] — per-beam achievable rates, disjoint and joint beam
//!   search, the optimal single-user baseband combiner, and training-overhead
//!   accounting against the beam coherence time.
//! * [`dataset`] — omni pilot reception, grid sampling and a binary dataset
//!   format for (received signature, per-beam rate) pairs.
//! * [`mlp`] / [`learning`] — a small fully-connected network trained per base
//!   station to predict beam quality from the omni signatures, with the
//!   normalisation, candidate refinement and effective-rate bookkeeping used
//!   by the experiments.

pub mod beamforming;
pub mod channel;
pub mod codebook;
pub mod dataset;
pub mod geometry;
pub mod learning;
pub mod mlp;

pub use ndarray;
pub use num_complex::Complex64;
