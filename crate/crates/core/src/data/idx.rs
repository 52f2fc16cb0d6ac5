//! MNIST-family IDX containers (big-endian, uncompressed).

use std::path::Path;

use super::{Dataset, Task};
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const CLASSES: usize = 10;

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::Format {
                path: self.path.to_owned(),
                message: format!(
                    "truncated: need {len} bytes at offset {}, file has {}",
                    self.at,
                    self.bytes.len()
                ),
            }),
        }
    }
}

fn format_err(path: &Path, message: String) -> Error {
    Error::Format {
        path: path.to_owned(),
        message,
    }
}

/// Loads an image/label IDX pair as a 10-class dataset with one flattened row
/// per image. Pixel values are kept on their raw `0..=255` scale.
pub fn load_idx_images(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let image_bytes = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let label_bytes = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;

    let mut img = Cursor {
        path: images,
        bytes: &image_bytes,
        at: 0,
    };
    let magic = img.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(
            images,
            format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;

    let mut lab = Cursor {
        path: labels,
        bytes: &label_bytes,
        at: 0,
    };
    let magic = lab.u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(
            labels,
            format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(format_err(labels, format!("{label_count} labels for {count} images")));
    }
    if rows == 0 || cols == 0 {
        return Err(format_err(images, "zero-sized images".into()));
    }

    let n = limit.map_or(count, |l| l.min(count));
    let p = rows * cols;
    let pixels = img.take(n * p)?;
    let classes = lab.take(n)?;
    // The full payload must be present even when only a prefix is loaded.
    img.take((count - n) * p)?;
    lab.take(count - n)?;

    let features: Vec<f64> = pixels.iter().map(|&b| b as f64).collect();
    let mut ys = Vec::with_capacity(n);
    for (i, &c) in classes.iter().enumerate() {
        if c as usize >= CLASSES {
            return Err(format_err(labels, format!("label {c} at index {i} is not below 10")));
        }
        ys.push(c as f64);
    }
    let name = images
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, Task::Classification(CLASSES), p, features, ys)?.with_image_shape([1, rows, cols])
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn idx_pair(count: u32, rows: u32, cols: u32) -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&count.to_be_bytes());
        images.extend_from_slice(&rows.to_be_bytes());
        images.extend_from_slice(&cols.to_be_bytes());
        for i in 0..count * rows * cols {
            images.push((i % 256) as u8);
        }
        let mut labels = Vec::new();
        labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&count.to_be_bytes());
        for i in 0..count {
            labels.push((i % 10) as u8);
        }
        (images, labels)
    }

    fn files(images: &[u8], labels: &[u8]) -> (tempfile::NamedTempFile, tempfile::NamedTempFile) {
        let mut a = tempfile::NamedTempFile::new().unwrap();
        a.write_all(images).unwrap();
        let mut b = tempfile::NamedTempFile::new().unwrap();
        b.write_all(labels).unwrap();
        (a, b)
    }

    #[test]
    fn loads_and_limits() {
        let (i, l) = idx_pair(12, 28, 28);
        let (fi, fl) = files(&i, &l);
        let d = load_idx_images(fi.path(), fl.path(), None).unwrap();
        assert_eq!((d.n(), d.p()), (12, 784));
        assert_eq!(d.image_shape(), Some([1, 28, 28]));
        assert_eq!(d.task(), Task::Classification(10));
        assert_eq!(d.label(11), 1.0);
        assert!(d.features().iter().all(|&v| (0.0..=255.0).contains(&v)));
        assert_eq!(d.row(0)[255], 255.0);
        let d = load_idx_images(fi.path(), fl.path(), Some(5)).unwrap();
        assert_eq!(d.n(), 5);
    }

    #[test]
    fn rejects_bad_magic() {
        let (mut i, l) = idx_pair(2, 2, 2);
        i[3] = 0x01;
        let (fi, fl) = files(&i, &l);
        let err = load_idx_images(fi.path(), fl.path(), None).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
        let (i, mut l) = idx_pair(2, 2, 2);
        l[3] = 0x03;
        let (fi, fl) = files(&i, &l);
        assert!(load_idx_images(fi.path(), fl.path(), None).is_err());
    }

    #[test]
    fn rejects_count_mismatch() {
        let (i, _) = idx_pair(3, 2, 2);
        let (_, l) = idx_pair(4, 2, 2);
        let (fi, fl) = files(&i, &l);
        let err = load_idx_images(fi.path(), fl.path(), None).unwrap_err();
        assert!(err.to_string().contains("4 labels for 3 images"), "{err}");
    }

    #[test]
    fn rejects_truncation() {
        let (i, l) = idx_pair(3, 2, 2);
        let (fi, fl) = files(&i[..i.len() - 1], &l);
        let err = load_idx_images(fi.path(), fl.path(), Some(1)).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}
