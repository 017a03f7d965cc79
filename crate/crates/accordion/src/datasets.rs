//! MNIST IDX and CIFAR-10 binary readers.
//!
//! Pixel bytes are scaled by 1/255. Files whose name ends in `.gz` are
//! decompressed transparently; a missing plain file falls back to its `.gz`
//! sibling.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use accordion_core::data::Dataset;
use flate2::read::GzDecoder;

use crate::error::{format_err, io_err, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
const CIFAR_CLASSES: usize = 10;

/// Reads a whole file, gunzipping when needed.
pub fn read_maybe_gz(path: &Path) -> Result<(PathBuf, Vec<u8>)> {
    let path = if !path.exists() && path.extension().is_none_or(|e| e != "gz") {
        let mut gz = path.as_os_str().to_owned();
        gz.push(".gz");
        let gz = PathBuf::from(gz);
        if gz.exists() {
            gz
        } else {
            path.to_path_buf()
        }
    } else {
        path.to_path_buf()
    };
    let raw = fs::read(&path).map_err(io_err(&path))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io_err(&path))?;
        Ok((path, out))
    } else {
        Ok((path, raw))
    }
}

fn be_u32(path: &Path, bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, offset as u64, "truncated header"))
}

fn idx_body<'a>(path: &Path, bytes: &'a [u8], magic: u32, dims: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(path, bytes, 0)?;
    if found != magic {
        return Err(format_err(path, 0, format!("bad magic {found:#010x}, expected {magic:#010x}")));
    }
    let shape = (0..dims).map(|d| be_u32(path, bytes, 4 + 4 * d).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * dims;
    let want: usize = shape.iter().product();
    let body = &bytes[header..];
    if body.len() < want {
        return Err(format_err(
            path,
            (header + body.len()) as u64,
            format!("truncated: header promises {want} data bytes, found {}", body.len()),
        ));
    }
    if body.len() > want {
        return Err(format_err(path, (header + want) as u64, "trailing bytes after data"));
    }
    Ok((shape, body))
}

/// Loads an IDX image file (`0x803`) and its label file (`0x801`).
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (ipath, ibytes) = read_maybe_gz(images_path)?;
    let (lpath, lbytes) = read_maybe_gz(labels_path)?;
    let (ishape, pixels) = idx_body(&ipath, &ibytes, IDX_IMAGES, 3)?;
    let (lshape, labels) = idx_body(&lpath, &lbytes, IDX_LABELS, 1)?;
    if ishape[0] != lshape[0] {
        return Err(format_err(&lpath, 4, format!("{} labels for {} images", lshape[0], ishape[0])));
    }
    if let Some(pos) = labels.iter().position(|&l| l >= 10) {
        return Err(format_err(&lpath, 8 + pos as u64, format!("label {} is not a digit", labels[pos])));
    }
    let pixels = pixels.iter().map(|&b| b as f32 / 255.0).collect();
    let labels = labels.iter().map(|&l| l as usize).collect();
    Ok(Dataset::new([ishape[1], ishape[2], 1], pixels, labels, 10)?)
}

/// Loads and concatenates CIFAR-10 binary batches. Each record is a label
/// byte followed by the red, green and blue 32x32 planes; images come out
/// NHWC `[32, 32, 3]`.
pub fn load_cifar10_bin<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for p in batch_paths {
        let (path, bytes) = read_maybe_gz(p.as_ref())?;
        if bytes.len() % CIFAR_RECORD != 0 {
            let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
            return Err(format_err(
                &path,
                whole as u64,
                format!("{} bytes is not a whole number of {CIFAR_RECORD}-byte records", bytes.len()),
            ));
        }
        for (r, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            let label = record[0] as usize;
            if label >= CIFAR_CLASSES {
                return Err(format_err(&path, (r * CIFAR_RECORD) as u64, format!("label {label} out of range")));
            }
            labels.push(label);
            let planes = &record[1..];
            for i in 0..plane {
                for c in 0..3 {
                    pixels.push(planes[c * plane + i] as f32 / 255.0);
                }
            }
        }
    }
    Ok(Dataset::new([CIFAR_SIDE, CIFAR_SIDE, 3], pixels, labels, CIFAR_CLASSES)?)
}
