//! Group-level template graphs for populations of connectivity matrices.
//!
//! - [`graph`]: Pearson connectivity, validation, template augmentation.
//! - [`template`]: sparse per-group templates by block coordinate descent.
//! - [`net`]: template-augmented structured classifier with manual backprop.
//! - [`explain`]: contrast subgraphs between two templates.
//! - [`synth`], [`split`], [`metrics`], [`manifest`], [`persist`]: data
//!   generation, evaluation protocol and file formats.

pub mod error;
pub mod explain;
pub mod graph;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod net;
pub mod persist;
pub mod split;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
pub use graph::{
    augment, global_template, pearson_connectivity, validate_connectivity, ConnectivityMatrix,
    GlobalTemplate, TimeSeriesTable, ValidationMode, Violation,
};
pub use template::{
    fit_templates, HingeDirection, LabeledDataset, Subject, TemplateHyperParams, TemplateSet,
    WeightTable,
};
