//! A workspace bundles the asset registry with an in-memory payload cache
//! and the run directory where derived files are materialized.
//!
//! Payloads are immutable once inserted; engines derive new assets instead
//! of mutating existing ones, so shared references are safe across threads.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::asset::{AssetError, AssetRegistry, Guid, Modality};
use crate::geo::FeatureTable;
use crate::raster::ClassRaster;
use crate::table::Table;

#[derive(Clone)]
pub enum Payload {
    Table(Arc<Table>),
    Vector(Arc<FeatureTable>),
    Raster(Arc<ClassRaster>),
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("asset {guid} is {actual}, expected {expected}")]
    WrongModality {
        guid: Guid,
        expected: Modality,
        actual: Modality,
    },
    #[error("no payload cached for asset {0}")]
    MissingPayload(Guid),
}

pub struct Workspace {
    pub registry: AssetRegistry,
    payloads: RwLock<HashMap<Guid, Payload>>,
    run_dir: PathBuf,
}

impl Workspace {
    /// Create a workspace materializing derived files under `run_dir`.
    /// The directory is created if missing.
    pub fn new(run_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let run_dir = run_dir.into();
        std::fs::create_dir_all(&run_dir)?;
        Ok(Workspace {
            registry: AssetRegistry::new(),
            payloads: RwLock::new(HashMap::new()),
            run_dir,
        })
    }

    /// Same as [`Workspace::new`] but with a journaled registry.
    pub fn with_journal(run_dir: impl Into<PathBuf>, journal: &Path) -> Result<Self, WorkspaceError> {
        let run_dir = run_dir.into();
        std::fs::create_dir_all(&run_dir).map_err(AssetError::Journal)?;
        Ok(Workspace {
            registry: AssetRegistry::with_journal(journal)?,
            payloads: RwLock::new(HashMap::new()),
            run_dir,
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    /// Absolute path for a run-directory file named after a GUID.
    pub fn run_path(&self, guid: Guid, ext: &str) -> PathBuf {
        self.run_dir.join(format!("{guid}.{ext}"))
    }

    pub fn insert_payload(&self, guid: Guid, payload: Payload) {
        self.payloads
            .write()
            .expect("payload lock")
            .insert(guid, payload);
    }

    pub fn payload(&self, guid: Guid) -> Option<Payload> {
        self.payloads.read().expect("payload lock").get(&guid).cloned()
    }

    pub fn table(&self, guid: Guid) -> Result<Arc<Table>, WorkspaceError> {
        let asset = self.registry.resolve(guid)?;
        match self.payload(guid) {
            Some(Payload::Table(t)) => Ok(t),
            Some(_) => Err(WorkspaceError::WrongModality {
                guid,
                expected: Modality::Table,
                actual: asset.modality,
            }),
            None => Err(WorkspaceError::MissingPayload(guid)),
        }
    }

    pub fn vector(&self, guid: Guid) -> Result<Arc<FeatureTable>, WorkspaceError> {
        let asset = self.registry.resolve(guid)?;
        match self.payload(guid) {
            Some(Payload::Vector(v)) => Ok(v),
            Some(_) => Err(WorkspaceError::WrongModality {
                guid,
                expected: Modality::Vector,
                actual: asset.modality,
            }),
            None => Err(WorkspaceError::MissingPayload(guid)),
        }
    }

    pub fn raster(&self, guid: Guid) -> Result<Arc<ClassRaster>, WorkspaceError> {
        let asset = self.registry.resolve(guid)?;
        match self.payload(guid) {
            Some(Payload::Raster(r)) => Ok(r),
            Some(_) => Err(WorkspaceError::WrongModality {
                guid,
                expected: Modality::Raster,
                actual: asset.modality,
            }),
            None => Err(WorkspaceError::MissingPayload(guid)),
        }
    }
}
