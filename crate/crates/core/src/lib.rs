//! Federated contrastive representation learning at desk scale.
//!
//! The crate contains the local and federated SimCLR objectives (plus the
//! client-ID "user verification" head, label-dependent semi-supervised
//! variants, spectral contrastive and SimSiam), a FedAvg-delta simulator with
//! a server-side Adam optimizer, non-i.i.d. partitioners, linear-probe
//! evaluation, and an exact mutual-information oracle for small discrete
//! joints that checks every variational bound numerically.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod federation;
pub mod losses;
pub mod mi_oracle;
pub mod model;
pub mod numerics;
pub mod validation;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
