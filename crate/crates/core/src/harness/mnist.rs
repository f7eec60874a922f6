//! Reader for the IDX files of the MNIST distribution.

use std::path::Path;

use crate::error::{Error, Result};
use crate::objectives::Dataset;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn format_err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_path_buf(), offset: offset as u64, message: message.into() }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let bytes = self.take(4, what)?;
        Ok(u32::from_be_bytes(bytes.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(out)
            }
            None => Err(self.format_err(
                self.bytes.len(),
                format!("truncated while reading {what}: need {n} bytes at offset {}, file has {}", self.offset, self.bytes.len()),
            )),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::DatasetNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Reads an image file (magic `0x00000803`) into `(count, rows·cols, pixels
/// scaled to [0, 1])`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = read(path)?;
    let mut cur = Cursor { bytes: &bytes, offset: 0, path };
    let magic = cur.u32("magic")?;
    if magic != IMAGE_MAGIC {
        return Err(cur.format_err(0, format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let count = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let dim = rows * cols;
    let pixels = cur.take(count * dim, "pixels")?;
    if cur.offset != bytes.len() {
        return Err(cur.format_err(cur.offset, format!("{} trailing bytes", bytes.len() - cur.offset)));
    }
    Ok((count, dim, pixels.iter().map(|&p| p as f64 / 255.0).collect()))
}

/// Reads a label file (magic `0x00000801`).
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read(path)?;
    let mut cur = Cursor { bytes: &bytes, offset: 0, path };
    let magic = cur.u32("magic")?;
    if magic != LABEL_MAGIC {
        return Err(cur.format_err(0, format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let count = cur.u32("label count")? as usize;
    let start = cur.offset;
    let labels = cur.take(count, "labels")?;
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(cur.format_err(start + pos, format!("label {} outside 0..=9", labels[pos])));
    }
    if cur.offset != bytes.len() {
        return Err(cur.format_err(cur.offset, format!("{} trailing bytes", bytes.len() - cur.offset)));
    }
    Ok(labels.iter().map(|&l| l as usize).collect())
}

/// Loads an image/label file pair as a 10-class dataset.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (count, dim, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::Data(format!(
            "{} holds {count} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    Dataset::new(pixels, labels, dim, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGE_MAGIC, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn truncated_image_file_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        std::fs::write(&path, image_file(2, 2, 2, &[1, 2, 3])).unwrap();
        match read_idx_images(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn magic_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        let mut bytes = image_file(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_idx_images(&path), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(read_idx_labels(&dir.path().join("missing")), Err(Error::DatasetNotFound(_))));
    }
}
