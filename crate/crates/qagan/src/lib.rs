//! Desk-scale laboratory for domain-adversarial extractive question
//! answering: a self-contained differentiable core, a small transformer
//! encoder, conditional span-prediction heads, a domain discriminator, the
//! adversarial training loop with annealing, augmentation ports, synthetic
//! multi-domain corpora, and EM/F1 plus embedding-gap evaluation.

pub mod error;
pub mod data;
pub mod discriminator;
pub mod encoder;
pub mod eval;
pub mod heads;
pub mod numerics;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
