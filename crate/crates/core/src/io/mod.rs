//! File formats: F3D field dumps, data bundles, VTK and CSV exports, and
//! content hashes for manifests.

mod bundle;
mod f3d;
mod vtk;

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

pub use bundle::{
    face_file, read_manifest, read_projected, read_travel_times, write_manifest, write_projected, write_travel_times,
    NoiseRecord, MANIFEST,
};
pub use f3d::{lattice_matches, F3d};
pub use vtk::{slice_csv, vtk_string, write_slice_csv, write_vtk};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash over the names and contents of the regular files directly inside
/// `dir`, in name order.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update(Sha256::digest(&bytes));
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
