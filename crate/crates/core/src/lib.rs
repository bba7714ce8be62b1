//! ACS (axial-coronal-sagittal) convolutions and the machinery to turn 2D
//! convolutional networks into 3D ones.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. Everything in here is a pure function of its inputs; file
//! formats, the CLI and experiment drivers live in the `acs` crate.
//!
//! Layout conventions: 3D activations are `N×C×D×H×W`, 2D activations are
//! `N×C×H×W`. Every spatial operator accepts both and treats a rank-4 tensor
//! as a 3D tensor with a unit depth axis.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod acs;
pub mod data;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod profile;
pub mod real;
pub mod store;
pub mod tensor;

pub use error::{Error, Result};
pub use real::{DType, Real};
pub use store::{AnyTensor, ParamStore, WeightStore};
pub use tensor::Tensor;
