//! Byte layout, little-endian throughout:
//!
//! ```text
//! 0..4     magic "ATPF"
//! 4..8     version, u32 (= 1)
//! 8..16    manifest length M, u64
//! 16..16+M UTF-8 JSON manifest
//! 16+M..   payload: row-major binary32 tensors at manifest offsets
//! ```
//!
//! Tensor offsets are relative to the start of the payload. The writer packs
//! tensors back to back in the order `patch_embeddings`, `attention`,
//! `text_embedding`, `projection`, `planted_indices`, and serializes the
//! manifest as compact JSON with fields in declaration order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AtpError, Result};
use crate::saliency::{AttentionMap, Grid, PatchTokenSet, ProjectionMatrix, TextEmbedding};

pub const MAGIC: &[u8; 4] = b"ATPF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

const PATCHES: &str = "patch_embeddings";
const ATTENTION: &str = "attention";
const TEXT: &str = "text_embedding";
const PROJECTION: &str = "projection";
const PLANTED: &str = "planted_indices";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<u64>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub n: u64,
    pub d_v: u64,
    pub d_t: u64,
    pub heads: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_rows: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cols: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
    pub metadata: Metadata,
}

/// Everything the engine consumes for one image–prompt pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub patches: PatchTokenSet,
    pub attention: AttentionMap,
    pub text: TextEmbedding,
    pub projection: Option<ProjectionMatrix>,
    /// Ground-truth salient patches, ascending. Synthetic fixtures only.
    pub planted_indices: Option<Vec<usize>>,
    pub prompt: Option<String>,
    pub model: Option<String>,
    pub generator_seed: Option<u64>,
}

fn invalid(tensor: &str, reason: impl Into<String>) -> AtpError {
    AtpError::Validation {
        tensor: tensor.to_string(),
        reason: reason.into(),
    }
}

fn named(tensor: &str) -> impl Fn(AtpError) -> AtpError + '_ {
    move |e| invalid(tensor, e.to_string())
}

impl Fixture {
    /// Checks that the parts agree with each other.
    pub fn validate(&self) -> Result<()> {
        let n = self.patches.len();
        if self.attention.patches() != n {
            return Err(invalid(
                ATTENTION,
                format!(
                    "covers {} patches, embeddings have {n}",
                    self.attention.patches()
                ),
            ));
        }
        if let Some(p) = &self.projection {
            if p.rows() != self.patches.dim() || p.cols() != self.text.dim() {
                return Err(invalid(
                    PROJECTION,
                    format!(
                        "shape [{}, {}] does not match D_v={} D_t={}",
                        p.rows(),
                        p.cols(),
                        self.patches.dim(),
                        self.text.dim()
                    ),
                ));
            }
        }
        if let Some(planted) = &self.planted_indices {
            if planted.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(PLANTED, "indices not strictly ascending"));
            }
            if planted.iter().any(|&i| i >= n) {
                return Err(invalid(
                    PLANTED,
                    format!("index out of range for {n} patches"),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Option<Grid> {
        self.patches.grid()
    }
}

fn push_f32s(payload: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) -> u64 {
    let start = payload.len();
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    (payload.len() - start) as u64
}

/// Serializes a fixture to ATPF bytes.
pub fn encode(fixture: &Fixture) -> Result<Vec<u8>> {
    fixture.validate()?;
    let n = fixture.patches.len() as u64;
    let d_v = fixture.patches.dim() as u64;
    let d_t = fixture.text.dim() as u64;
    let heads = fixture.attention.heads() as u64;

    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    let mut add = |name: &str,
                   shape: Vec<u64>,
                   payload: &mut Vec<u8>,
                   data: &mut dyn Iterator<Item = f32>| {
        let offset = payload.len() as u64;
        let length = push_f32s(payload, data);
        tensors.push(TensorEntry {
            name: name.to_string(),
            dtype: "f32".to_string(),
            shape,
            offset,
            length,
        });
    };
    add(
        PATCHES,
        vec![n, d_v],
        &mut payload,
        &mut fixture.patches.as_slice().iter().copied(),
    );
    add(
        ATTENTION,
        vec![heads, n + 1, n + 1],
        &mut payload,
        &mut fixture.attention.as_slice().iter().copied(),
    );
    add(
        TEXT,
        vec![d_t],
        &mut payload,
        &mut fixture.text.as_slice().iter().copied(),
    );
    if let Some(p) = &fixture.projection {
        add(
            PROJECTION,
            vec![d_v, d_t],
            &mut payload,
            &mut p.as_slice().iter().copied(),
        );
    }
    if let Some(planted) = &fixture.planted_indices {
        add(
            PLANTED,
            vec![planted.len() as u64],
            &mut payload,
            &mut planted.iter().map(|&i| i as f32),
        );
    }

    let grid = fixture.grid();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        tensors,
        metadata: Metadata {
            n,
            d_v,
            d_t,
            heads,
            grid_rows: grid.map(|g| g.rows as u64),
            grid_cols: grid.map(|g| g.cols as u64),
            prompt: fixture.prompt.clone(),
            model: fixture.model.clone(),
            generator_seed: fixture.generator_seed,
        },
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn tensor_values(payload: &[u8], entry: &TensorEntry) -> Vec<f32> {
    let start = entry.offset as usize;
    payload[start..start + entry.length as usize]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

fn expect_shape(entry: &TensorEntry, want: &[u64]) -> Result<()> {
    if entry.shape != want {
        return Err(invalid(
            &entry.name,
            format!("shape {:?} does not match metadata {:?}", entry.shape, want),
        ));
    }
    Ok(())
}

/// Parses and fully validates ATPF bytes.
pub fn decode(bytes: &[u8]) -> Result<Fixture> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(AtpError::NotAContainer);
    }
    if bytes.len() < HEADER_LEN {
        return Err(AtpError::Corrupt("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(AtpError::UnsupportedVersion(version));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if manifest_len > body.len() as u64 {
        return Err(AtpError::Corrupt(format!(
            "manifest length {manifest_len} exceeds file body of {} bytes",
            body.len()
        )));
    }
    let (json, payload) = body.split_at(manifest_len as usize);
    let manifest: Manifest = serde_json::from_slice(json)
        .map_err(|e| AtpError::Corrupt(format!("manifest is not valid JSON: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(AtpError::UnsupportedVersion(manifest.version));
    }

    let mut spans = Vec::with_capacity(manifest.tensors.len());
    for (i, t) in manifest.tensors.iter().enumerate() {
        if manifest.tensors[..i].iter().any(|o| o.name == t.name) {
            return Err(AtpError::Corrupt(format!("duplicate tensor `{}`", t.name)));
        }
        if t.dtype != "f32" {
            return Err(invalid(&t.name, format!("unsupported dtype `{}`", t.dtype)));
        }
        let elems = t
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|e| e.checked_mul(4));
        if elems != Some(t.length) {
            return Err(AtpError::Corrupt(format!(
                "tensor `{}` length {} disagrees with shape {:?}",
                t.name, t.length, t.shape
            )));
        }
        match t.offset.checked_add(t.length) {
            Some(end) if end <= payload.len() as u64 => spans.push((t.offset, end, &t.name)),
            _ => {
                return Err(AtpError::Corrupt(format!(
                    "tensor `{}` extends past the {}-byte payload",
                    t.name,
                    payload.len()
                )))
            }
        }
    }
    spans.sort();
    if let Some(w) = spans.windows(2).find(|w| w[0].1 > w[1].0) {
        return Err(AtpError::Corrupt(format!(
            "tensors `{}` and `{}` overlap",
            w[0].2, w[1].2
        )));
    }

    let find = |name: &str| manifest.tensors.iter().find(|t| t.name == name);
    let required = |name: &str| find(name).ok_or_else(|| invalid(name, "missing required tensor"));
    let meta = &manifest.metadata;
    let (n, d_v, d_t, heads) = (meta.n, meta.d_v, meta.d_t, meta.heads);

    let grid = match (meta.grid_rows, meta.grid_cols) {
        (Some(r), Some(c)) => Some(Grid {
            rows: r as usize,
            cols: c as usize,
        }),
        (None, None) => None,
        _ => return Err(invalid(PATCHES, "grid metadata needs both rows and cols")),
    };

    let pe = required(PATCHES)?;
    expect_shape(pe, &[n, d_v])?;
    let patches = PatchTokenSet::new(tensor_values(payload, pe), n as usize, d_v as usize, grid)
        .map_err(named(PATCHES))?;

    let at = required(ATTENTION)?;
    expect_shape(at, &[heads, n + 1, n + 1])?;
    let attention = AttentionMap::new(heads as usize, (n + 1) as usize, tensor_values(payload, at))
        .map_err(named(ATTENTION))?;

    let te = required(TEXT)?;
    expect_shape(te, &[d_t])?;
    let text = TextEmbedding::new(tensor_values(payload, te)).map_err(named(TEXT))?;

    let projection = find(PROJECTION)
        .map(|p| {
            expect_shape(p, &[d_v, d_t])?;
            ProjectionMatrix::new(d_v as usize, d_t as usize, tensor_values(payload, p))
                .map_err(named(PROJECTION))
        })
        .transpose()?;

    let planted_indices = find(PLANTED)
        .map(|p| {
            if p.shape.len() != 1 {
                return Err(invalid(PLANTED, "must be one-dimensional"));
            }
            tensor_values(payload, p)
                .into_iter()
                .map(|v| {
                    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(invalid(PLANTED, format!("{v} is not a patch index")))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let fixture = Fixture {
        patches,
        attention,
        text,
        projection,
        planted_indices,
        prompt: meta.prompt.clone(),
        model: meta.model.clone(),
        generator_seed: meta.generator_seed,
    };
    fixture.validate()?;
    Ok(fixture)
}

pub fn write_container(fixture: &Fixture, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(fixture)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Fixture> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}
