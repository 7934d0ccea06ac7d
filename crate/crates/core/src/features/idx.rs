//! IDX container reader (the MNIST distribution format). Files may be
//! gzip-compressed; compression is detected from the content.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::features::GrayImage;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(bytes.len(), "file ends inside the header"))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(format_err(
            0,
            format!("bad magic number {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    Ok(())
}

/// Parses an in-memory image file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let need = 16 + count * size;
    if bytes.len() < need {
        return Err(format_err(
            bytes.len(),
            format!("truncated: header declares {count} images of {rows}x{cols}, need {need} bytes"),
        ));
    }
    if bytes.len() > need {
        return Err(format_err(need, "trailing bytes after the last image"));
    }
    (0..count)
        .map(|i| {
            let start = 16 + i * size;
            let pixels = bytes[start..start + size]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            GrayImage::new(cols, rows, pixels)
        })
        .collect()
}

/// Parses an in-memory label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(format_err(
            bytes.len(),
            format!("truncated: header declares {count} labels"),
        ));
    }
    if bytes.len() > need {
        return Err(format_err(need, "trailing bytes after the last label"));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

pub fn read_idx(path: &Path) -> Result<Vec<GrayImage>> {
    parse_idx_images(&read_bytes(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    parse_idx_labels(&read_bytes(path)?)
}

/// Reads an image file and its label file, checking the counts agree.
pub fn read_idx_pair(images: &Path, labels: &Path) -> Result<(Vec<GrayImage>, Vec<usize>)> {
    let imgs = read_idx(images)?;
    let labs = read_idx_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} labels",
            imgs.len(),
            labs.len()
        )));
    }
    Ok((imgs, labs))
}

/// Encodes byte images as an uncompressed IDX image file.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size");
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
