//! Peritumoral-expansion radiomics for lung nodule classification.
//!
//! The pipeline segments a nodule inside its annotated box, optionally grows
//! the mask by a physical radius into the surrounding tissue, extracts a fixed
//! radiomics feature vector, and trains/evaluates benign-vs-malignant
//! classifiers with ROC AUC and bootstrap confidence intervals. A synthetic
//! CT cohort generator and an experiment harness drive the whole thing.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod models;
pub mod morphology;
pub mod harness;
pub mod nifti;
pub mod phantom;
pub mod radiomics;
pub mod seeding;
pub mod segmentation;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BoundingBox, Mask3D, Volume3D};
