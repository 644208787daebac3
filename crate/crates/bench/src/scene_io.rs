//! Scene container.
//!
//! ```text
//! bytes 0..8    magic "ADPXSCN1"
//! bytes 8..16   header length H, u64 little-endian
//! bytes 16..16+H JSON header
//! rest          payload: little-endian IEEE-754 f64
//! ```
//!
//! The header holds `kind` (`nmf` or `astro`), `dtype` (always `f64le`), the
//! generator `seed`, scalar `metadata`, and one `{name, shape, offset, len}`
//! entry per array, with `offset` and `len` counted in doubles from the start
//! of the payload. Arrays are stored row-major.

use std::fs;
use std::path::Path;

use adaprox::datagen::{AstroScene, NmfScene};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::BenchError;

pub const MAGIC: &[u8; 8] = b"ADPXSCN1";
const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    Nmf(NmfScene),
    Astro(AstroScene),
}

impl Scene {
    pub fn seed(&self) -> u64 {
        match self {
            Scene::Nmf(s) => s.seed,
            Scene::Astro(s) => s.seed,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Scene::Nmf(_) => "nmf",
            Scene::Astro(_) => "astro",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHeader {
    pub kind: String,
    pub dtype: String,
    pub seed: u64,
    pub metadata: serde_json::Map<String, serde_json::Value>,
    pub arrays: Vec<ArrayEntry>,
}

struct Writer {
    arrays: Vec<ArrayEntry>,
    payload: Vec<f64>,
}

impl Writer {
    fn new() -> Self {
        Self {
            arrays: Vec::new(),
            payload: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, shape: Vec<usize>, values: impl IntoIterator<Item = f64>) {
        let offset = self.payload.len();
        self.payload.extend(values);
        self.arrays.push(ArrayEntry {
            name: name.to_string(),
            shape,
            offset,
            len: self.payload.len() - offset,
        });
    }

    fn matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.push(name, m.shape().to_vec(), m.iter().copied());
    }
}

pub fn encode_scene(scene: &Scene) -> Result<Vec<u8>, BenchError> {
    let mut w = Writer::new();
    let mut metadata = serde_json::Map::new();
    match scene {
        Scene::Nmf(s) => {
            w.matrix("s_true", &s.s_true);
            w.matrix("a_true", &s.a_true);
            w.matrix("y", &s.y);
            w.push("noise_sigma", vec![1], [s.noise_sigma]);
            metadata.insert("noise_sigma".into(), s.noise_sigma.into());
        }
        Scene::Astro(s) => {
            w.matrix("y", &s.y);
            w.matrix("s_true", &s.s_true);
            w.matrix("a_true", &s.a_true);
            w.matrix("seds", &s.seds);
            w.push("sigma", vec![s.sigma.len()], s.sigma.iter().copied());
            w.push(
                "centers",
                vec![s.centers.len(), 2],
                s.centers.iter().flat_map(|&(y, x)| [y, x]),
            );
            w.push("sizes", vec![s.sizes.len()], s.sizes.iter().copied());
            w.push("fluxes", vec![s.fluxes.len()], s.fluxes.iter().copied());
            metadata.insert("image_shape".into(), serde_json::json!([s.image_shape.0, s.image_shape.1]));
            metadata.insert("sigma".into(), serde_json::json!(s.sigma));
        }
    }
    let header = SceneHeader {
        kind: scene.kind().to_string(),
        dtype: DTYPE.to_string(),
        seed: scene.seed(),
        metadata,
        arrays: w.arrays,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * w.payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in w.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses only the header, e.g. to inspect the seed.
pub fn decode_header(bytes: &[u8]) -> Result<(SceneHeader, usize), BenchError> {
    let bad = |field: &str, message: String| BenchError::SceneFormat {
        field: field.to_string(),
        message,
    };
    if bytes.len() < 16 {
        return Err(bad("magic", format!("file is only {} bytes long", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("magic", "not an adaprox scene file".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|h| h.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("header_len", format!("header length {header_len} exceeds file size {}", bytes.len())))?;
    let header: SceneHeader = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| bad("header", format!("invalid JSON header: {e}")))?;
    if header.dtype != DTYPE {
        return Err(bad("dtype", format!("unsupported dtype '{}', expected '{DTYPE}'", header.dtype)));
    }
    Ok((header, header_end))
}

pub fn decode_scene(bytes: &[u8]) -> Result<Scene, BenchError> {
    let (header, start) = decode_header(bytes)?;
    let payload = &bytes[start..];
    let expected: usize = header.arrays.iter().map(|a| a.len).sum();
    if payload.len() != expected * 8 {
        return Err(BenchError::LengthMismatch {
            field: "payload".into(),
            expected: expected * 8,
            got: payload.len(),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let r = Reader {
        header: &header,
        values: &values,
    };

    match header.kind.as_str() {
        "nmf" => Ok(Scene::Nmf(NmfScene {
            s_true: r.matrix("s_true")?,
            a_true: r.matrix("a_true")?,
            y: r.matrix("y")?,
            noise_sigma: r.scalar("noise_sigma")?,
            seed: header.seed,
        })),
        "astro" => {
            let centers = r.array("centers", 2)?;
            let y = r.matrix("y")?;
            let image_shape = header
                .metadata
                .get("image_shape")
                .and_then(|v| serde_json::from_value::<(usize, usize)>(v.clone()).ok())
                .ok_or_else(|| BenchError::SceneFormat {
                    field: "metadata.image_shape".into(),
                    message: "missing or malformed".into(),
                })?;
            if image_shape.0 * image_shape.1 != y.ncols() {
                return Err(BenchError::SceneFormat {
                    field: "metadata.image_shape".into(),
                    message: format!("{image_shape:?} does not match {} pixels", y.ncols()),
                });
            }
            Ok(Scene::Astro(AstroScene {
                y,
                s_true: r.matrix("s_true")?,
                a_true: r.matrix("a_true")?,
                sigma: r.array("sigma", 1)?,
                centers: centers.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
                sizes: r.array("sizes", 1)?,
                fluxes: r.array("fluxes", 1)?,
                seds: r.matrix("seds")?,
                image_shape,
                seed: header.seed,
            }))
        }
        other => Err(BenchError::SceneFormat {
            field: "kind".into(),
            message: format!("unknown scene kind '{other}'"),
        }),
    }
}

struct Reader<'a> {
    header: &'a SceneHeader,
    values: &'a [f64],
}

impl Reader<'_> {
    fn entry(&self, name: &str) -> Result<&ArrayEntry, BenchError> {
        let e = self
            .header
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| BenchError::SceneFormat {
                field: name.to_string(),
                message: "array missing from header".into(),
            })?;
        let count: usize = e.shape.iter().product();
        if count != e.len {
            return Err(BenchError::LengthMismatch {
                field: name.to_string(),
                expected: count,
                got: e.len,
            });
        }
        if e.offset.checked_add(e.len).is_none_or(|end| end > self.values.len()) {
            return Err(BenchError::SceneFormat {
                field: name.to_string(),
                message: format!("range {}..+{} lies outside the payload", e.offset, e.len),
            });
        }
        Ok(e)
    }

    fn slice(&self, e: &ArrayEntry) -> &[f64] {
        &self.values[e.offset..e.offset + e.len]
    }

    fn matrix(&self, name: &str) -> Result<Array2<f64>, BenchError> {
        let e = self.entry(name)?;
        let [rows, cols] = e.shape[..] else {
            return Err(BenchError::SceneFormat {
                field: name.to_string(),
                message: format!("expected a 2-d shape, got {:?}", e.shape),
            });
        };
        Ok(Array2::from_shape_vec((rows, cols), self.slice(e).to_vec()).expect("length checked"))
    }

    fn array(&self, name: &str, ndim: usize) -> Result<Vec<f64>, BenchError> {
        let e = self.entry(name)?;
        if e.shape.len() != ndim {
            return Err(BenchError::SceneFormat {
                field: name.to_string(),
                message: format!("expected {ndim} dimensions, got {:?}", e.shape),
            });
        }
        Ok(self.slice(e).to_vec())
    }

    fn scalar(&self, name: &str) -> Result<f64, BenchError> {
        let v = self.array(name, 1)?;
        match v[..] {
            [x] => Ok(x),
            _ => Err(BenchError::LengthMismatch {
                field: name.to_string(),
                expected: 1,
                got: v.len(),
            }),
        }
    }
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), BenchError> {
    let bytes = encode_scene(scene)?;
    fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Scene, BenchError> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    decode_scene(&bytes)
}
