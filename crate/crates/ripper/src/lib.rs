//! Functionality stealing against a sealed black-box classifier.
//!
//! The attack never sees the victim's weights, architecture, gradients, or
//! training data. It only sends inputs and reads back predictions. From that
//! alone it trains a substitute ("student") model that mimics the victim:
//!
//! 1. [`vae`] — fit a small VAE on *proxy* data that shares no samples and no
//!    classes with the victim's true data, giving a compact latent space of
//!    plausible inputs.
//! 2. [`evolution`] — search that latent space with an elitist evolutionary
//!    loop so decoded samples drive the victim towards confident predictions
//!    for a chosen class.
//! 3. [`distill`] — train the student on the victim's soft labels for the
//!    synthesized samples (or for baselines, raw proxy / random-latent
//!    samples).
//!
//! Everything runs on a self-contained `f64` dense-network engine ([`nn`],
//! [`tensor`]) with no external ML dependency, so results are reproducible
//! bit-for-bit from a seed. The [`pipeline`] module wires the stages together
//! behind the `ripper` command-line binary.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod evolution;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod tensor;
pub mod vae;

pub use error::{Error, Result};
