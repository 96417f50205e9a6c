//! Pixel and feature I/O: a minimal binary PPM (P6) codec and the feature
//! binary format (JSON header line + little-endian f32 payload).

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// Immutable map from recipe id to its input tensor (image `[c, h, w]` or
/// feature vector `[d]`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageStore {
    map: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    shape: Vec<usize>,
    dtype: String,
    ids: Vec<String>,
}

impl ImageStore {
    pub fn new() -> Self {
        ImageStore::default()
    }

    pub fn insert(&mut self, id: String, tensor: Tensor) {
        self.map.insert(id, tensor);
    }

    pub fn get(&self, id: &str) -> Option<&Tensor> {
        self.map.get(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Write every tensor (uniform shape required) as one feature file:
    /// a JSON header line with shape `[n, ...]`, dtype `f32` and the sample
    /// ids, followed by the little-endian payload.
    pub fn write_feature_file(&self, path: &Path) -> Result<()> {
        let first = self
            .map
            .values()
            .next()
            .ok_or_else(|| Error::BadFeatureFile("no samples to write".into()))?;
        let sample_shape = first.shape().to_vec();
        let mut shape = vec![self.map.len()];
        shape.extend_from_slice(&sample_shape);
        let ids: Vec<String> = self.map.keys().cloned().collect();
        let header = FeatureHeader {
            shape,
            dtype: "f32".into(),
            ids,
        };
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
        let mut w = std::io::BufWriter::new(file);
        let ctx = || format!("write {}", path.display());
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
        for (id, tensor) in &self.map {
            if tensor.shape() != sample_shape.as_slice() {
                return Err(Error::BadFeatureFile(format!(
                    "sample {id:?} shaped {:?}, expected {:?}",
                    tensor.shape(),
                    sample_shape
                )));
            }
            for &v in tensor.data() {
                w.write_all(&(v as f32).to_le_bytes())
                    .map_err(|e| Error::io(ctx(), e))?;
            }
        }
        w.flush().map_err(|e| Error::io(ctx(), e))
    }

    pub fn read_feature_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let mut r = std::io::BufReader::new(file);
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            let n = r
                .read(&mut byte)
                .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
            if n == 0 {
                return Err(Error::BadFeatureFile("missing header newline".into()));
            }
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: FeatureHeader = serde_json::from_slice(&header_bytes)?;
        if header.dtype != "f32" {
            return Err(Error::BadFeatureFile(format!(
                "unsupported dtype {:?}",
                header.dtype
            )));
        }
        if header.shape.is_empty() || header.shape[0] != header.ids.len() {
            return Err(Error::BadFeatureFile(format!(
                "shape {:?} inconsistent with {} ids",
                header.shape,
                header.ids.len()
            )));
        }
        let sample_shape: Vec<usize> = header.shape[1..].to_vec();
        let sample_len: usize = sample_shape.iter().product();
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let expected = header.ids.len() * sample_len * 4;
        if payload.len() != expected {
            return Err(Error::BadFeatureFile(format!(
                "payload {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let mut store = ImageStore::new();
        for (i, id) in header.ids.iter().enumerate() {
            let base = i * sample_len * 4;
            let data: Vec<f64> = (0..sample_len)
                .map(|j| {
                    let at = base + j * 4;
                    f32::from_le_bytes([
                        payload[at],
                        payload[at + 1],
                        payload[at + 2],
                        payload[at + 3],
                    ]) as f64
                })
                .collect();
            store.insert(id.clone(), Tensor::new(sample_shape.clone(), data)?);
        }
        Ok(store)
    }

    /// Decode all PPM images referenced by `(id, path)` pairs.
    pub fn from_ppm_files<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut store = ImageStore::new();
        for (id, path) in entries {
            store.insert(id.to_string(), read_ppm(Path::new(path))?);
        }
        Ok(store)
    }
}

fn ppm_error(path: &Path, message: impl Into<String>) -> Error {
    Error::BadImage {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Read a binary (P6) PPM into a `[3, h, w]` tensor scaled to [0, 1].
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ppm_error(path, "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).to_string())
    };
    if token(&bytes)? != "P6" {
        return Err(ppm_error(path, "not a binary PPM (P6)"));
    }
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|_| ppm_error(path, "bad width"))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|_| ppm_error(path, "bad height"))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| ppm_error(path, "bad maxval"))?;
    if maxval != 255 {
        return Err(ppm_error(path, format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(ppm_error(path, "truncated pixel data"));
    }
    // Interleaved RGB on disk, planar [3, h, w] in memory.
    let mut data = vec![0.0f64; need];
    for y in 0..h {
        for x in 0..w {
            let at = pos + (y * w + x) * 3;
            for c in 0..3 {
                data[c * h * w + y * w + x] = bytes[at + c] as f64 / 255.0;
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Write a `[3, h, w]` tensor as binary PPM, values clamped to [0, 1].
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    if image.rank() != 3 || image.shape()[0] != 3 {
        return Err(ppm_error(path, format!("shape {:?} is not [3, h, w]", image.shape())));
    }
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let data = image.data();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = data[c * h * w + y * w + x].clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("write {}", path.display()), e))
}
