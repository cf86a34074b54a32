//! Consensus segmentation from multiple expert annotations.
//!
//! The pipeline imputes missing annotations with a semi-supervised random
//! forest, scores each expert's self-consistency against image features, and
//! fuses the annotations by minimizing a pairwise MRF energy with an exact
//! s-t minimum cut. A synthetic benchmark generator, a majority-voting
//! baseline and segmentation metrics round out the crate.

pub mod cli;
pub mod consistency;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod graphcut;
pub mod image;
pub mod pgm;
pub mod synthgen;

pub use error::{Error, Result};
pub use image::{AnnotatedSlice, AnnotationSet, ImageGrid, Mask, Roi};
