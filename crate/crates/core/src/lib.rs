//! Radiomics engine for comparing 2D, 2.5D and 3D CT feature pipelines.
//!
//! The crate covers the whole numerical path from a CT volume plus a tumor
//! annotation to a trained classifier:
//!
//! * [`imgio`]: volume and mask model, NRRD subset I/O, cohort manifests.
//! * [`resample`]: isotropic B-spline resampling of volumes and masks.
//! * [`wavelet`]: single-level undecimated 3D Haar filter bank.
//! * [`features`]: discretization, shape, first-order and texture features.
//! * [`stats`]: z-scores, ICC, Mann-Whitney U, Pearson, MI, ROC/AUC, bootstrap.
//! * [`select`]: ICC → U-test → decorrelation → mRMR → LASSO chain.
//! * [`learn`]: logistic regression, RBF-SVM (SMO) and CV grid search.
//! * [`phantom`]: synthetic cohorts with planted texture signal.

pub mod error;
pub mod features;
pub mod imgio;
pub mod learn;
pub mod phantom;
pub mod resample;
pub mod rng;
pub mod select;
pub mod stats;
pub mod wavelet;

pub use error::{Error, Result};
pub use imgio::{Geometry, ImageVolume, MaskKind, RoiMask};
