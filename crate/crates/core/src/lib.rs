//! Structure-frequency attention masks for graph transformers.
//!
//! The pipeline for one graph:
//!
//! 1. [`spectral::normalized_laplacian`] and [`spectral::eig_sym`] give the
//!    eigenpairs `L = U diag(λ) Uᵀ`.
//! 2. [`sfmask`] splits node features into low (`λ ≤ 1`) and high bands,
//!    measures per-node band energy, and combines the structural matrix
//!    `S[i,j] = λ_i + λ_j` with the energy filter into `M = ReLU(S ⊙ F)`.
//! 3. [`attention`] multiplies `M` into the pre-softmax scores of every head.
//!
//! [`harness`] adds synthetic datasets, a gradient-descent trainer, mask
//! ablations and a randomized invariant suite; [`export`] writes the
//! intermediate matrices as CSV or JSON.

pub mod attention;
pub mod error;
pub mod export;
pub mod graph;
pub mod harness;
pub mod sfmask;
pub mod spectral;

pub use ndarray;

pub use attention::{AttentionParams, ModelConfig};
pub use error::{Error, Result};
pub use graph::{Graph, GraphDataset, Split};
pub use sfmask::{EnergyProfile, FrequencyMasks, MaskMode, StructureFrequencyMask};
pub use spectral::SpectralDecomposition;
