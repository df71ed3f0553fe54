//! Volume file I/O: multi-page 32-bit-float TIFF for image stacks and JSON
//! sidecars for provenance.

use crate::error::{Error, Result};
use crate::grid::Volume2DT;
use crate::linops::BoundaryPolicy;
use crate::sim::{DegradeSpec, PhantomSpec};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

/// Writes a volume as one grayscale float page per frame.
pub fn write_volume_tiff(path: &Path, v: &Volume2DT) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = TiffEncoder::new(file)?;
    let (w, h, t) = v.dims();
    for i in 0..t {
        let frame: Vec<f32> = v.frame_values(i).iter().map(|&x| x as f32).collect();
        enc.write_image::<colortype::Gray32Float>(w as u32, h as u32, &frame)?;
    }
    Ok(())
}

/// Reads a multi-page float TIFF back into a volume.
pub fn read_volume_tiff(path: &Path) -> Result<Volume2DT> {
    let file = BufReader::new(File::open(path)?);
    let mut dec = Decoder::new(file)?;
    let mut frames: Vec<Vec<f64>> = Vec::new();
    let (mut w, mut h) = (0u32, 0u32);
    loop {
        let (fw, fh) = dec.dimensions()?;
        if frames.is_empty() {
            (w, h) = (fw, fh);
        } else if (fw, fh) != (w, h) {
            return Err(Error::Dim("tiff pages have mismatched dims".into()));
        }
        let data = match dec.read_image()? {
            DecodingResult::F32(d) => d.iter().map(|&x| x as f64).collect::<Vec<f64>>(),
            DecodingResult::F64(d) => d,
            _ => return Err(Error::Param("expected float tiff samples".into())),
        };
        frames.push(data);
        if !dec.more_images() {
            break;
        }
        dec.next_image()?;
    }
    let t = frames.len();
    let flat: Vec<f64> = frames.into_iter().flatten().collect();
    Volume2DT::from_vec(w as usize, h as usize, t, flat)
}

/// Provenance of one simulated dataset cell: everything needed to
/// regenerate the files bit-identically.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSidecar {
    pub phantom: PhantomSpec,
    pub degrade: DegradeSpec,
    pub noise_seed: u64,
}

impl DatasetSidecar {
    /// Boundary used by the simulated blur, convenient for solver setup.
    pub fn blur_boundary(&self) -> BoundaryPolicy {
        self.degrade.boundary
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, value).map_err(|e| Error::Manifest(e.to_string()))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = BufReader::new(File::open(path)?);
    serde_json::from_reader(file).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}
