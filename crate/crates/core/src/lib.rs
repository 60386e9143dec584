//! Core library for urbanlens: a tool-grounded analysis agent for urban
//! environment change questions over heterogeneous data (tables, vector
//! geometry, class rasters, rendered maps).
//!
//! The crate is organised around a GUID-keyed asset registry with lineage
//! tracking ([`asset`]), modality-specific engines ([`table`], [`geo`],
//! [`raster`], [`analytics`], [`viz`]), a query router ([`controller`]),
//! and a ReAct-style agent loop with pluggable completion providers
//! ([`agent`]). The [`harness`] module carries the synthetic fixture
//! generator, the question bank, and the ablation evaluation grid used by
//! the CLI and the acceptance suite.

pub mod agent;
pub mod analytics;
pub mod asset;
pub mod controller;
pub mod geo;
pub mod harness;
pub mod raster;
pub mod table;
pub mod util;
pub mod viz;
pub mod workspace;

pub use asset::{AssetRegistry, DataAsset, Guid, Modality};
pub use workspace::Workspace;
