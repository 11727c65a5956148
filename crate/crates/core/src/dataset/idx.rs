//! IDX container reader (the MNIST distribution format).
//!
//! Images: big-endian `0x00000803`, count, rows, cols, then `count*rows*cols`
//! bytes. Labels: `0x00000801`, count, then `count` bytes. Gzipped files are
//! detected by their magic bytes and decompressed on the fly.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::transforms::GrayImage;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a whole file, transparently gunzipping it.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!("gzip stream is corrupt: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

fn header(bytes: &[u8], path: &Path, words: usize) -> Result<Vec<u32>> {
    if bytes.len() < words * 4 {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("header needs {} bytes, file has {}", words * 4, bytes.len()),
        ));
    }
    Ok(bytes[..words * 4]
        .chunks_exact(4)
        .map(|w| u32::from_be_bytes([w[0], w[1], w[2], w[3]]))
        .collect())
}

fn check_magic(path: &Path, found: u32, expected: u32) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(format_err(
            path,
            0,
            format!("magic number {found:#010x}, expected {expected:#010x}"),
        ))
    }
}

fn payload<'a>(bytes: &'a [u8], path: &Path, start: usize, len: usize) -> Result<&'a [u8]> {
    let available = bytes.len() - start;
    if available < len {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!(
                "truncated payload: expected {len} bytes from offset {start}, found {available}"
            ),
        ));
    }
    Ok(&bytes[start..start + len])
}

pub fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<GrayImage>> {
    check_magic(path, header(bytes, path, 1)?[0], IMAGES_MAGIC)?;
    let h = header(bytes, path, 4)?;
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let per_image = rows * cols;
    let data = payload(bytes, path, 16, count * per_image)?;
    if per_image == 0 {
        return Ok((0..count).map(|_| GrayImage::zeros(rows, cols)).collect());
    }
    data.chunks_exact(per_image)
        .map(|chunk| GrayImage::from_bytes(rows, cols, chunk))
        .collect()
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(path, header(bytes, path, 1)?[0], LABELS_MAGIC)?;
    let h = header(bytes, path, 2)?;
    let data = payload(bytes, path, 8, h[1] as usize)?;
    if let Some((i, &bad)) = data.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Range(format!(
            "{}: label {bad} at byte offset {} is not a digit",
            path.display(),
            8 + i
        )));
    }
    Ok(data.to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    let path = path.as_ref();
    parse_images(&read_maybe_gzip(path)?, path)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_labels(&read_maybe_gzip(path)?, path)
}

/// Serialises images to an uncompressed IDX3 container.
pub fn encode_images(images: &[GrayImage], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend(img.pixels().iter().map(|&v| (v * 255.0).round() as u8));
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
