//! Random dot product graph embeddings as masked low-rank factorizations.
//!
//! Undirected graphs are fit with `A ≈ XXᵀ` by gradient descent or row-wise block coordinate
//! descent. Directed graphs are fit with `A ≈ Xˡ(Xʳ)ᵀ` by Riemannian gradient descent on
//! matrices with orthogonal columns, which keeps the two factors interpretable. The
//! [`streaming`] module tracks embeddings across graph snapshots.

pub mod directed;
pub mod error;
pub mod graph;
pub mod io;
pub mod manifold;
pub mod numerics;
pub mod streaming;
pub mod undirected;

pub use directed::{
    ase_directed, cost_directed, grad_directed, rescale_columns, solve_riemannian_gd,
    verify_ambiguity_reduction, ArmijoConfig, DirectedEmbedding,
};
pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, ObservationMask, ProbabilityMatrix, SbmConfig, SenateConfig};
pub use manifold::{ManifoldPoint, TangentVector};
pub use streaming::{
    tracking_error, FilterMode, FilterState, TrackMethod, TrackStep, TrackerConfig, TrackerState,
};
pub use undirected::{
    ase, bcd_row_update, cost_undirected, elbow_dimension, grad_undirected, solve_bcd,
    solve_bcd_masked, solve_gd, EmbeddingMatrix, Init, SolveReport, SolverConfig,
};

pub use nalgebra::{DMatrix, DVector};
