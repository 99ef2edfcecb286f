//! IDX dataset files: big-endian magic, big-endian dimension sizes, raw
//! unsigned bytes. Gzip-compressed variants are detected by the `.gz`
//! suffix.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::nn::Sample;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_u32_be(reader: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| format_err(path, "truncated header"))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_payload(reader: &mut dyn Read, len: usize, path: &Path) -> Result<Vec<u8>> {
    let mut data = vec![0u8; len];
    reader
        .read_exact(&mut data)
        .map_err(|_| format_err(path, format!("truncated payload, expected {len} bytes")))?;
    Ok(data)
}

/// Loads an images/labels file pair into samples with features in `[0, 1]`
/// (byte / 255).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<Sample>> {
    let mut images = open(images_path)?;
    let magic = read_u32_be(images.as_mut(), images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(
            images_path,
            format!("bad images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(images.as_mut(), images_path)? as usize;
    let rows = read_u32_be(images.as_mut(), images_path)? as usize;
    let cols = read_u32_be(images.as_mut(), images_path)? as usize;
    let pixels = read_payload(images.as_mut(), count * rows * cols, images_path)?;

    let mut labels = open(labels_path)?;
    let magic = read_u32_be(labels.as_mut(), labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(format_err(
            labels_path,
            format!("bad labels magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = read_u32_be(labels.as_mut(), labels_path)? as usize;
    if label_count != count {
        return Err(format_err(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }
    let label_bytes = read_payload(labels.as_mut(), label_count, labels_path)?;

    let dim = rows * cols;
    let samples = pixels
        .chunks_exact(dim)
        .zip(&label_bytes)
        .map(|(chunk, &label)| Sample {
            features: chunk.iter().map(|&b| f32::from(b) / 255.0).collect(),
            label: usize::from(label),
        })
        .collect();
    Ok(samples)
}

/// Header fields and checksum of one IDX file, for `inspect-data`.
#[derive(Debug, Clone)]
pub struct IdxSummary {
    pub path: PathBuf,
    pub magic: u32,
    pub kind: &'static str,
    pub dims: Vec<u32>,
    /// CRC-32 of the raw file bytes (compressed bytes for `.gz` files).
    pub crc32: u32,
    pub file_len: u64,
}

/// Parses the header of any IDX file and checksums its bytes.
pub fn inspect_idx(path: &Path) -> Result<IdxSummary> {
    let raw = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut crc = flate2::Crc::new();
    crc.update(&raw);

    let mut reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(&raw[..]))
    } else {
        Box::new(&raw[..])
    };
    let magic = read_u32_be(reader.as_mut(), path)?;
    let kind = match magic {
        IMAGES_MAGIC => "images",
        LABELS_MAGIC => "labels",
        _ => "unknown",
    };
    // Magic layout: 0x00 0x00 <dtype> <ndims>.
    if magic >> 16 != 0 {
        return Err(format_err(path, format!("bad IDX magic {magic:#010x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(read_u32_be(reader.as_mut(), path)?);
    }
    Ok(IdxSummary {
        path: path.to_path_buf(),
        magic,
        kind,
        dims,
        crc32: crc.sum(),
        file_len: raw.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, count: u32, rows: u32, cols: u32, pixels: &[u8]) {
        let mut buf = Vec::new();
        buf.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        buf.extend_from_slice(&count.to_be_bytes());
        buf.extend_from_slice(&rows.to_be_bytes());
        buf.extend_from_slice(&cols.to_be_bytes());
        buf.extend_from_slice(pixels);
        std::fs::write(path, buf).unwrap();
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut buf = Vec::new();
        buf.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        buf.extend_from_slice(labels);
        std::fs::write(path, buf).unwrap();
    }

    #[test]
    fn loads_matching_pair() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img-idx3-ubyte");
        let labels = dir.path().join("lab-idx1-ubyte");
        write_images(&images, 3, 2, 2, &[0, 255, 128, 64, 1, 2, 3, 4, 10, 20, 30, 40]);
        write_labels(&labels, &[7, 0, 9]);
        let samples = load_idx(&images, &labels).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].features.len(), 4);
        assert_eq!(samples[0].label, 7);
        assert_eq!(samples[0].features[1], 1.0);
        assert!(samples
            .iter()
            .flat_map(|s| &s.features)
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gzip_variant_loads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img-idx3-ubyte");
        let labels = dir.path().join("lab-idx1-ubyte");
        write_images(&images, 2, 1, 3, &[9, 8, 7, 6, 5, 4]);
        write_labels(&labels, &[1, 2]);

        let gz_images = dir.path().join("img-idx3-ubyte.gz");
        let mut enc =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&std::fs::read(&images).unwrap()).unwrap();
        std::fs::write(&gz_images, enc.finish().unwrap()).unwrap();

        let plain = load_idx(&images, &labels).unwrap();
        let zipped = load_idx(&gz_images, &labels).unwrap();
        assert_eq!(plain, zipped);
    }

    #[test]
    fn bad_label_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lab");
        write_images(&images, 1, 1, 1, &[0]);
        // wrong magic on purpose
        let mut buf = Vec::new();
        buf.extend_from_slice(&0x0000_0802u32.to_be_bytes());
        buf.extend_from_slice(&1u32.to_be_bytes());
        buf.push(0);
        std::fs::write(&labels, buf).unwrap();
        let err = load_idx(&images, &labels).unwrap_err();
        match err {
            Error::Format { path, reason } => {
                assert_eq!(path, labels);
                assert!(reason.contains("magic"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lab");
        write_images(&images, 4, 2, 2, &[0; 7]); // needs 16 bytes
        write_labels(&labels, &[0, 1, 2, 3]);
        let err = load_idx(&images, &labels).unwrap_err();
        assert!(matches!(err, Error::Format { path, .. } if path == images));
    }

    #[test]
    fn count_mismatch_names_labels_file() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lab");
        write_images(&images, 2, 1, 1, &[0, 1]);
        write_labels(&labels, &[0, 1, 2]);
        let err = load_idx(&images, &labels).unwrap_err();
        assert!(matches!(err, Error::Format { path, .. } if path == labels));
    }

    #[test]
    fn inspect_reports_header_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        write_images(&images, 5, 3, 3, &[1; 45]);
        let summary = inspect_idx(&images).unwrap();
        assert_eq!(summary.magic, IMAGES_MAGIC);
        assert_eq!(summary.kind, "images");
        assert_eq!(summary.dims, vec![5, 3, 3]);
        assert_eq!(summary.file_len, 16 + 45);
        let again = inspect_idx(&images).unwrap();
        assert_eq!(summary.crc32, again.crc32);
    }
}
