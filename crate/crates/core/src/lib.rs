//! Community recovery on geometrically confounded graphs.
//!
//! The crate covers the full experimental loop:
//!
//! - [`sbm`]: latent-kernel stochastic block model sampling and the
//!   exact/weak recovery thresholds it induces.
//! - [`embed`]: random-walk corpora, windowed co-occurrence, PPMI, and
//!   low-rank node embeddings.
//! - [`maso`]: motif-attention spectral operator clustering.
//! - [`baselines`]: Bethe-Hessian, non-backtracking, motif-Laplacian, and
//!   weighted belief-propagation references.
//! - [`geode`]: iterative geometric edge denoising with community and
//!   geometry steps, plus the residual noise metric.
//! - [`bench`]: paired benchmark sweeps, accuracy scoring, and threshold
//!   validation.
//! - [`ingest`]: binary-attribute graph loading.

pub mod baselines;
pub mod bench;
pub mod clustering;
pub mod embed;
pub mod error;
pub mod geode;
pub mod graph;
pub mod ingest;
pub mod maso;
pub mod sbm;
pub mod seeding;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{LabelVector, WeightedGraph};
