//! `basis.npy` + `basis.json`: a part basis without its projection maps.
//!
//! The array is flat: `k * channels` direction values (row per component) followed
//! by `k` eigenvalues. The sidecar records where each block starts and ends.

use std::fs;
use std::ops::Range;
use std::path::Path;

use affordmap_core::npy::ArrayFile;
use affordmap_core::{PartBasis, Roi};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{read_array, write_array};

pub const BASIS_ARRAY: &str = "basis.npy";
pub const BASIS_SIDECAR: &str = "basis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisOffsets {
    pub directions: Range<usize>,
    pub eigenvalues: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSidecar {
    pub k: usize,
    pub channels: usize,
    pub grid: [usize; 2],
    pub offsets: BasisOffsets,
    pub roi: Roi,
    pub sign_flips: Vec<bool>,
    pub mean_vec: Vec<f32>,
}

/// Directions, eigenvalues and sidecar as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredBasis {
    pub sidecar: BasisSidecar,
    pub directions: Vec<f32>,
    pub eigenvalues: Vec<f32>,
}

pub fn write_basis(dir: &Path, basis: &PartBasis) -> Result<()> {
    let kc = basis.k * basis.channels;
    let mut flat = basis.directions.clone();
    flat.extend_from_slice(&basis.explained_var);
    write_array(&dir.join(BASIS_ARRAY), &ArrayFile::new(vec![flat.len()], flat)?)?;

    let sidecar = BasisSidecar {
        k: basis.k,
        channels: basis.channels,
        grid: [basis.grid_h, basis.grid_w],
        offsets: BasisOffsets { directions: 0..kc, eigenvalues: kc..kc + basis.k },
        roi: basis.roi,
        sign_flips: basis.sign_flips.clone(),
        mean_vec: basis.mean_vec.clone(),
    };
    let path = dir.join(BASIS_SIDECAR);
    fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|source| Error::Io { path, source })
}

pub fn read_basis(dir: &Path) -> Result<StoredBasis> {
    let json_path = dir.join(BASIS_SIDECAR);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: BasisSidecar =
        serde_json::from_str(&text).map_err(|e| Error::Meta { path: json_path.clone(), reason: e.to_string() })?;
    let arr_path = dir.join(BASIS_ARRAY);
    let arr = read_array(&arr_path)?;
    let o = &sidecar.offsets;
    let consistent = o.directions.len() == sidecar.k * sidecar.channels
        && o.eigenvalues.len() == sidecar.k
        && o.directions.end <= arr.data.len()
        && o.eigenvalues.end <= arr.data.len()
        && sidecar.mean_vec.len() == sidecar.channels
        && sidecar.sign_flips.len() == sidecar.k;
    if !consistent {
        return Err(Error::ShapeMismatch {
            path: json_path,
            reason: format!(
                "offsets do not describe a {}x{} basis in {} values",
                sidecar.k,
                sidecar.channels,
                arr.data.len()
            ),
        });
    }
    Ok(StoredBasis {
        directions: arr.data[o.directions.clone()].to_vec(),
        eigenvalues: arr.data[o.eigenvalues.clone()].to_vec(),
        sidecar,
    })
}
