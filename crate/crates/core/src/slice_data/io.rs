//! On-disk slice stacks: a TOML manifest plus one image per plane.
//!
//! ```toml
//! grid = 40
//!
//! [metadata]
//! geometry = "hourglass"
//! seed = 1
//!
//! [[plane]]
//! z = 0.0
//! image = "plane_000.pgm"
//! ```
//!
//! Images are portable graymaps (binary or ASCII; an 8-bit sample `v` reads as
//! `v/255`, a 16-bit one as `v/65535`) or CSV files of floats in `[0, 1]`.
//! Image paths are relative to the manifest's directory.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageEncoder};
use serde::{Deserialize, Serialize};

use super::{SlicePlane, SliceStack};
use crate::error::{Error, Result};
use crate::fsutil;

/// Image format written by [`save_stack`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    /// 8-bit binary graymap. Exact for pixels on the `k/255` lattice.
    Pgm,
    /// Shortest round-trip decimal floats. Always exact.
    Csv,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Csv => "csv",
        }
    }
}

/// Provenance recorded alongside the planes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StackMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    grid: usize,
    #[serde(default)]
    metadata: StackMetadata,
    #[serde(rename = "plane")]
    planes: Vec<PlaneEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlaneEntry {
    z: f64,
    image: String,
}

pub fn load_stack(manifest_path: &Path) -> Result<(SliceStack, StackMetadata)> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut planes = Vec::with_capacity(manifest.planes.len());
    for entry in &manifest.planes {
        let path = base.join(&entry.image);
        let (size, pixels) = read_image(&path)?;
        if size != manifest.grid {
            return Err(Error::Format(format!(
                "{}: image is {size}×{size} but the manifest grid is {1}×{1}",
                path.display(),
                manifest.grid
            )));
        }
        planes.push(SlicePlane::new(entry.z, size, pixels).map_err(|e| in_file(&path, e))?);
    }
    Ok((SliceStack::new(planes)?, manifest.metadata))
}

/// Write `manifest_path` and one image per plane next to it.
pub fn save_stack(
    stack: &SliceStack,
    manifest_path: &Path,
    format: ImageFormat,
    metadata: &StackMetadata,
) -> Result<()> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("stack");
    let mut entries = Vec::with_capacity(stack.planes().len());
    for (i, plane) in stack.planes().iter().enumerate() {
        let name = format!("{stem}_plane_{i:03}.{}", format.extension());
        let bytes = match format {
            ImageFormat::Pgm => encode_pgm(plane)?,
            ImageFormat::Csv => encode_csv(plane)?,
        };
        fsutil::write_atomic(&dir.join(&name), &bytes)?;
        entries.push(PlaneEntry { z: plane.z(), image: name });
    }
    let manifest = Manifest {
        grid: stack.grid_size(),
        metadata: metadata.clone(),
        planes: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fsutil::write_atomic(manifest_path, text.as_bytes())
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Read a square image; returns `(side, row-major pixels)`.
pub fn read_image(path: &Path) -> Result<(usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let (w, h, pixels) = match ext.as_str() {
        "csv" => decode_csv(&bytes).map_err(|e| in_file(path, e))?,
        _ => decode_pgm(&bytes).map_err(|e| in_file(path, e))?,
    };
    if w != h || w == 0 {
        return Err(Error::Format(format!("{}: image must be square and non-empty, got {w}×{h}", path.display())));
    }
    Ok((w, pixels))
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("unreadable graymap: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(Error::Format(format!("expected a single-channel graymap, got {:?}", other.color())));
        }
    };
    Ok((w, h, pixels))
}

fn decode_csv(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut pixels = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("bad CSV: {e}")))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::Format("ragged CSV rows".into()));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("bad pixel value `{field}`")))?;
            pixels.push(v);
        }
        rows += 1;
    }
    Ok((width.unwrap_or(0), rows, pixels))
}

/// 8-bit binary graymap; values are rounded to the nearest `k/255`.
pub fn encode_pgm_values(size_x: usize, size_y: usize, values: &[f64]) -> Result<Vec<u8>> {
    let raw: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&raw, size_x as u32, size_y as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Format(format!("graymap encoding failed: {e}")))?;
    Ok(out)
}

/// Rows of comma-separated floats in shortest round-trip form.
pub fn encode_csv_values(size_x: usize, values: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in values.chunks(size_x) {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn encode_pgm(plane: &SlicePlane) -> Result<Vec<u8>> {
    encode_pgm_values(plane.size(), plane.size(), plane.pixels())
}

fn encode_csv(plane: &SlicePlane) -> Result<Vec<u8>> {
    encode_csv_values(plane.size(), plane.pixels())
}
