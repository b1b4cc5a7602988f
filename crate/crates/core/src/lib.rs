//! Global-descriptor image instance retrieval.
//!
//! The pipeline runs dense SIFT extraction, PCA, a diagonal GMM and Fisher
//! Vector encoding to produce one global vector per image. Database images
//! can be rendered under rotations or downscalings and pooled into a single
//! entry (max / average) or kept as an ordered sequence matched by minimum
//! vertex distance or by distance to the piecewise-linear polyline through
//! the sequence. Ranking is an exact L2 scan; evaluation reports MAP or
//! 4×Recall@4.
//!
//! Externally computed descriptors (e.g. CNN activations) enter through the
//! GDSC file format in [`store`] and take part in every experiment.

pub mod dsift;
pub mod error;
pub mod fisher;
pub mod imaging;
pub mod pipeline;
pub mod pooling;
pub mod retrieval;
pub mod store;
pub mod synth;

mod binio;
pub(crate) mod linalg;

pub use error::{Error, Result};
