//! Dataset manifests: `subject_id,label,path` CSV files.
//!
//! Paths are resolved relative to the manifest's directory. Labels are
//! mapped to group indices in first-seen order.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{pearson_connectivity, ConnectivityMatrix};
use crate::io::{read_matrix_csv, read_timeseries_csv, write_matrix_csv};
use crate::template::{LabeledDataset, Subject};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// `(label, group index)` in first-seen order.
    pub label_map: Vec<(String, usize)>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut label_map: Vec<(String, usize)> = Vec::new();
        for e in &entries {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate subject id {:?}",
                    e.subject_id
                )));
            }
            if !label_map.iter().any(|(l, _)| *l == e.label) {
                let idx = label_map.len();
                label_map.push((e.label.clone(), idx));
            }
        }
        Ok(Self { entries, label_map })
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_map
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, i)| *i)
    }

    pub fn num_labels(&self) -> usize {
        self.label_map.len()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["subject_id", "label", "path"] {
            return Err(Error::format(
                path,
                "manifest header must be subject_id,label,path",
            ));
        }
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Self::new(entries)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        if self.entries.is_empty() {
            wtr.write_record(["subject_id", "label", "path"])?;
        }
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Reads the manifest and every matrix it lists.
pub fn load_dataset(manifest_path: &Path) -> Result<(LabeledDataset, DatasetManifest)> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = base_dir(manifest_path);
    let subjects = manifest
        .entries
        .iter()
        .map(|e| {
            let weights = read_matrix_csv(&base.join(&e.path))?;
            Ok(Subject {
                id: e.subject_id.clone(),
                matrix: ConnectivityMatrix::new(weights)?,
                label: manifest
                    .label_index(&e.label)
                    .expect("label mapped at read"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = LabeledDataset::new(subjects, manifest.num_labels())?;
    Ok((data, manifest))
}

/// Converts every time-series file listed in the manifest at
/// `manifest_path` into a connectivity matrix under `out_dir/matrices/`, and
/// writes `out_dir/manifest.csv` pointing at the new files.
pub fn ingest(manifest_path: &Path, out_dir: &Path) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = base_dir(manifest_path);
    let matrix_dir = out_dir.join("matrices");
    fs::create_dir_all(&matrix_dir).map_err(|e| Error::io(&matrix_dir, e))?;
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let wrap = |err: Error| Error::Subject {
            id: e.subject_id.clone(),
            source: Box::new(err),
        };
        let table = read_timeseries_csv(&base.join(&e.path)).map_err(wrap)?;
        let m = pearson_connectivity(&table).map_err(wrap)?;
        let rel = format!("matrices/{}.csv", e.subject_id);
        write_matrix_csv(&out_dir.join(&rel), &m.weights)?;
        entries.push(ManifestEntry {
            subject_id: e.subject_id.clone(),
            label: e.label.clone(),
            path: rel,
        });
    }
    let out = DatasetManifest::new(entries)?;
    out.write(&out_dir.join("manifest.csv"))?;
    Ok(out)
}
