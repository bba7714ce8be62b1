//! Files, datasets, reports and experiment drivers around `acs-core`.
//!
//! - [`weights`]: the `ACSW` tensor container.
//! - [`model_file`]: JSON model descriptions.
//! - [`dataset`]: synthetic datasets stored as containers.
//! - [`report`]: cost report rendering.
//! - [`poc`]: the 2D→3D transfer experiment.
//! - [`cli`]: the `acs` command.

pub mod cli;
pub mod dataset;
pub mod model_file;
pub mod poc;
pub mod report;
pub mod weights;
