//! Pairwise variational registration, robust PCA and low-rank groupwise
//! motion tracking on 2-D image grids.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod flow;
pub mod grid;
pub mod phantoms;
pub mod registration;
pub mod render;
pub mod rpca;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
pub use grid::{FlowField, Image, ImageStack, LabelMap};
pub use registration::{register_pair, RegistrationConfig, RegistrationResult};
pub use rpca::{rpca_decompose, RpcaConfig, RpcaResult};
pub use tracker::{track, TrackingConfig, TrackingResult};
