//! Deterministic fixtures with a planted salient rectangle.
//!
//! Construction, with all random draws taken from one
//! [`Xoshiro256StarStar`] normal stream seeded by `spec.seed`:
//!
//! 1. `t`: `D` normals, normalized to unit length.
//! 2. For each patch in row-major order, `g`: `D` normals. Planted patches
//!    become `normalize(s·t + (1−s)·g)`; background patches become
//!    `normalize(g − (g·t)·t)`.
//! 3. Every head is identical. The CLS row gives 0 to itself, `s` spread
//!    uniformly over planted patches, `1−s` uniformly over background; all
//!    other rows are uniform. Rows are renormalized to sum to 1.
//!
//! Arithmetic is `f64`, stored as `f32`.

use crate::error::{AtpError, Result};
use crate::fixtures::Fixture;
use crate::rng::Xoshiro256StarStar;
use crate::saliency::{AttentionMap, Grid, PatchTokenSet, TextEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedBlock {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Shared patch and text embedding width, at least 2.
    pub dim: usize,
    pub heads: usize,
    pub block: PlantedBlock,
    pub signal_strength: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AtpError::InvalidArgument(m.to_string()));
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("grid must be non-empty");
        }
        // a 1-d background vector orthogonal to t is zero
        if self.dim < 2 {
            return bad("dim must be >= 2");
        }
        if self.heads == 0 {
            return bad("heads must be >= 1");
        }
        let b = self.block;
        if b.height == 0 || b.width == 0 {
            return bad("planted block must be non-empty");
        }
        if b.row0 + b.height > self.grid_rows || b.col0 + b.width > self.grid_cols {
            return bad("planted block exceeds the grid");
        }
        if !(self.signal_strength > 0.0 && self.signal_strength <= 1.0) {
            return bad("signal strength must be in (0, 1]");
        }
        Ok(())
    }

    pub fn planted_indices(&self) -> Vec<usize> {
        let b = self.block;
        (b.row0..b.row0 + b.height)
            .flat_map(|r| (b.col0..b.col0 + b.width).map(move |c| r * self.grid_cols + c))
            .collect()
    }
}

fn unit(v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(AtpError::ZeroNorm("synthetic embedding".into()));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

fn normalized_row(raw: &[f64]) -> impl Iterator<Item = f32> + '_ {
    let z: f64 = raw.iter().sum();
    raw.iter().map(move |&w| (w / z) as f32)
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Fixture> {
    spec.validate()?;
    let n = spec.grid_rows * spec.grid_cols;
    let d = spec.dim;
    let s = spec.signal_strength;
    let planted = spec.planted_indices();
    let mut is_planted = vec![false; n];
    planted.iter().for_each(|&i| is_planted[i] = true);

    let mut rng = Xoshiro256StarStar::seed_from_u64(spec.seed);
    let t = unit((0..d).map(|_| rng.next_normal()).collect())?;

    let mut embeddings = Vec::with_capacity(n * d);
    for &hot in &is_planted {
        let g: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
        let e = if hot {
            g.iter()
                .zip(&t)
                .map(|(gi, ti)| s * ti + (1.0 - s) * gi)
                .collect()
        } else {
            let proj: f64 = g.iter().zip(&t).map(|(gi, ti)| gi * ti).sum();
            g.iter().zip(&t).map(|(gi, ti)| gi - proj * ti).collect()
        };
        embeddings.extend(unit(e)?.into_iter().map(|x| x as f32));
    }

    let tokens = n + 1;
    let background = n - planted.len();
    let mut cls = vec![0.0f64; tokens];
    for (i, &hot) in is_planted.iter().enumerate() {
        cls[i + 1] = if hot {
            s / planted.len() as f64
        } else {
            (1.0 - s) / background as f64
        };
    }
    let uniform = vec![1.0f64; tokens];
    let mut weights = Vec::with_capacity(spec.heads * tokens * tokens);
    for _ in 0..spec.heads {
        weights.extend(normalized_row(&cls));
        for _ in 1..tokens {
            weights.extend(normalized_row(&uniform));
        }
    }

    Ok(Fixture {
        patches: PatchTokenSet::new(
            embeddings,
            n,
            d,
            Some(Grid {
                rows: spec.grid_rows,
                cols: spec.grid_cols,
            }),
        )?,
        attention: AttentionMap::new(spec.heads, tokens, weights)?,
        text: TextEmbedding::new(t.iter().map(|&x| x as f32).collect())?,
        projection: None,
        planted_indices: Some(planted),
        prompt: None,
        model: None,
        generator_seed: Some(spec.seed),
    })
}
