//! Part-aware mesh autoencoding.
//!
//! Meshes in full correspondence are encoded by Chebyshev spectral graph
//! convolutions over a quadric-decimation hierarchy into a latent vector,
//! split into per-part encodings by learned projection matrices, bound to
//! spatial regions through non-negative local weights, and decoded back.
//! Part encodings can then be interpolated or swapped between faces.

pub mod chebconv;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod nmf;
pub mod optim;
pub mod pipeline;
pub mod sampling;
pub mod tape;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SparseMatrix};
pub use mesh::Mesh;
