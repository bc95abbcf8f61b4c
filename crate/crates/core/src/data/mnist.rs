use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset as u64, "truncated IDX header"))
}

/// Parses an IDX3 image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("bad IDX image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != need {
        return Err(Error::format(
            16 + payload.len().min(need) as u64,
            format!("image payload has {} bytes, header implies {need}", payload.len()),
        ));
    }
    Ok((count, rows, cols, payload.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            0,
            format!("bad IDX label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(
            8 + payload.len().min(count) as u64,
            format!("label payload has {} bytes, header implies {count}", payload.len()),
        ));
    }
    Ok(payload.to_vec())
}

/// Loads MNIST-style IDX files (optionally gzip-compressed, by `.gz`
/// extension). Pixels are scaled by `1/255`.
pub fn load_mnist_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_idx_images(&read_all(images)?)?;
    let labels = labels
        .map(|p| -> Result<Vec<u32>> {
            let l = parse_idx_labels(&read_all(p)?)?;
            if l.len() != count {
                return Err(Error::format(
                    4,
                    format!("{} labels for {count} images", l.len()),
                ));
            }
            Ok(l.into_iter().map(u32::from).collect())
        })
        .transpose()?;
    let data = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let name = images
        .file_name()
        .map_or_else(|| "mnist".to_string(), |n| n.to_string_lossy().into_owned());
    Dataset::new(Tensor::matrix(count, rows * cols, data)?, labels, name)
}

/// Writes a dataset in IDX layout (images quantized to bytes, square side
/// inferred from the pixel count). Labels are written when present and a
/// path is given.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: Option<&Path>) -> Result<()> {
    let side = (dataset.pixels() as f64).sqrt() as usize;
    if side * side != dataset.pixels() {
        return Err(Error::Config(format!(
            "{} pixels is not a square image",
            dataset.pixels()
        )));
    }
    let mut out = Vec::with_capacity(16 + dataset.images().len());
    for v in [IMAGE_MAGIC, dataset.len() as u32, side as u32, side as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(dataset.images().data().iter().map(|&v| (v * 255.0).round() as u8));
    File::create(images)?.write_all(&out)?;
    if let (Some(path), Some(l)) = (labels, dataset.labels()) {
        let mut out = Vec::with_capacity(8 + l.len());
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(l.len() as u32).to_be_bytes());
        out.extend(l.iter().map(|&v| v as u8));
        File::create(path)?.write_all(&out)?;
    }
    Ok(())
}
