//! Per-patch saliency signals.
//!
//! Intra-modal saliency comes from the final vision layer's attention map.
//! Inter-modal relevance is the cosine between each patch embedding and the
//! prompt's text embedding, optionally after a projection into the text
//! embedding space.

use serde::{Deserialize, Serialize};

use crate::error::{AtpError, Result};
use crate::math::{cosine, l2_norm, ScoreVector};

/// Tolerance on attention row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

/// `N` patch embeddings of width `D_v`, stored row-major.
///
/// `grid` is present for the encoder's rectangular patch layout and absent
/// once a set has been pruned (or when the source did not record a layout).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTokenSet {
    embeddings: Vec<f32>,
    n: usize,
    dim: usize,
    grid: Option<Grid>,
}

impl PatchTokenSet {
    pub fn new(embeddings: Vec<f32>, n: usize, dim: usize, grid: Option<Grid>) -> Result<Self> {
        if n == 0 {
            return Err(AtpError::Empty("patch token set"));
        }
        if dim == 0 {
            return Err(AtpError::InvalidArgument(
                "patch embedding dim must be >= 1".into(),
            ));
        }
        if embeddings.len() != n * dim {
            return Err(AtpError::DimensionMismatch {
                left: embeddings.len(),
                right: n * dim,
            });
        }
        if let Some(g) = grid {
            if g.rows == 0 || g.cols == 0 || g.rows * g.cols != n {
                return Err(AtpError::InvalidArgument(format!(
                    "grid {}x{} does not cover {n} patches",
                    g.rows, g.cols
                )));
            }
        }
        if let Some(k) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(AtpError::NonFinite(format!("patch row {}", k / dim)));
        }
        Ok(Self {
            embeddings,
            n,
            dim,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> Option<Grid> {
        self.grid
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.embeddings.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.embeddings
    }

    /// Same layout, entries transformed by `f(row, column, value)`.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f32) -> f32) -> Result<Self> {
        let embeddings = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k / self.dim, k % self.dim, v))
            .collect();
        Self::new(embeddings, self.n, self.dim, self.grid)
    }
}

/// Multi-head attention over `CLS + N` tokens. Row = query, column = key,
/// index 0 is CLS.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    heads: usize,
    tokens: usize,
    weights: Vec<f32>,
}

impl AttentionMap {
    /// Validates shape, range, and row-stochasticity.
    pub fn new(heads: usize, tokens: usize, weights: Vec<f32>) -> Result<Self> {
        let map = Self::new_relaxed(heads, tokens, weights)?;
        for h in 0..heads {
            for q in 0..tokens {
                let s: f64 = map.row(h, q).iter().map(|&w| f64::from(w)).sum();
                if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(AtpError::InvalidArgument(format!(
                        "attention head {h} row {q} sums to {s}"
                    )));
                }
            }
        }
        Ok(map)
    }

    /// Validates shape, finiteness and `[0, 1]` range but not row sums, for
    /// post-hoc masked maps.
    pub fn new_relaxed(heads: usize, tokens: usize, weights: Vec<f32>) -> Result<Self> {
        if heads == 0 {
            return Err(AtpError::InvalidArgument(
                "attention needs at least one head".into(),
            ));
        }
        if tokens < 2 {
            return Err(AtpError::Empty("attention map has no patch tokens"));
        }
        if weights.len() != heads * tokens * tokens {
            return Err(AtpError::DimensionMismatch {
                left: weights.len(),
                right: heads * tokens * tokens,
            });
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(AtpError::NonFinite(format!("attention entry {k}")));
        }
        if let Some(k) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(AtpError::InvalidArgument(format!(
                "attention entry {k} = {} outside [0, 1]",
                weights[k]
            )));
        }
        Ok(Self {
            heads,
            tokens,
            weights,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// `N + 1`.
    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn patches(&self) -> usize {
        self.tokens - 1
    }

    pub fn row(&self, head: usize, query: usize) -> &[f32] {
        let start = (head * self.tokens + query) * self.tokens;
        &self.weights[start..start + self.tokens]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.weights
    }
}

/// The prompt embedding from the text encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding(Vec<f32>);

impl TextEmbedding {
    pub fn new(vector: Vec<f32>) -> Result<Self> {
        if vector.is_empty() {
            return Err(AtpError::Empty("text embedding"));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(AtpError::NonFinite("text embedding".into()));
        }
        if l2_norm(&vector) == 0.0 {
            return Err(AtpError::ZeroNorm("text embedding".into()));
        }
        Ok(Self(vector))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// `D_v × D_t` map from patch space into text-embedding space, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ProjectionMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(AtpError::InvalidArgument(
                "projection must be non-empty".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(AtpError::DimensionMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AtpError::NonFinite("projection".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// `x · P` accumulated in `f64`.
    pub fn project(&self, x: &[f32]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0f64; self.cols];
        for (&xi, prow) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            let xi = f64::from(xi);
            for (o, &p) in out.iter_mut().zip(prow) {
                *o += xi * f64::from(p);
            }
        }
        out
    }
}

/// How the intra-modal signal is read off the attention map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraMode {
    /// CLS query row over patch keys.
    #[default]
    ClsRow,
    /// Total outgoing attention of each patch query row.
    RowSum,
}

impl IntraMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IntraMode::ClsRow => "cls_row",
            IntraMode::RowSum => "row_sum",
        }
    }
}

impl std::str::FromStr for IntraMode {
    type Err = AtpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls_row" => Ok(IntraMode::ClsRow),
            "row_sum" => Ok(IntraMode::RowSum),
            other => Err(AtpError::InvalidArgument(format!(
                "unknown intra mode `{other}`"
            ))),
        }
    }
}

fn normalize_mass(raw: Vec<f64>, what: &'static str) -> Result<ScoreVector> {
    let z: f64 = raw.iter().sum();
    if z <= 0.0 || z.is_nan() {
        return Err(AtpError::DegenerateAttention(what));
    }
    Ok(ScoreVector::from_finite(
        raw.into_iter().map(|v| v / z).collect(),
    ))
}

/// Head-averaged CLS→patch attention, renormalized to sum to 1.
/// CLS self-attention is excluded.
pub fn intra_cls(attn: &AttentionMap) -> Result<ScoreVector> {
    let n = attn.patches();
    if n == 0 {
        return Err(AtpError::Empty("attention map has no patch tokens"));
    }
    let mut acc = vec![0.0f64; n];
    for h in 0..attn.heads() {
        for (a, &w) in acc.iter_mut().zip(&attn.row(h, 0)[1..]) {
            *a += f64::from(w);
        }
    }
    let heads = attn.heads() as f64;
    acc.iter_mut().for_each(|a| *a /= heads);
    normalize_mass(acc, "CLS row places no mass on patches")
}

/// Head-averaged Σ_j attention over each patch query row, renormalized to
/// sum to 1. Uniform whenever the map is row-stochastic.
pub fn intra_rowsum(attn: &AttentionMap) -> Result<ScoreVector> {
    let n = attn.patches();
    if n == 0 {
        return Err(AtpError::Empty("attention map has no patch tokens"));
    }
    let mut acc = vec![0.0f64; n];
    for h in 0..attn.heads() {
        for (i, a) in acc.iter_mut().enumerate() {
            *a += attn
                .row(h, i + 1)
                .iter()
                .map(|&w| f64::from(w))
                .sum::<f64>();
        }
    }
    let heads = attn.heads() as f64;
    acc.iter_mut().for_each(|a| *a /= heads);
    normalize_mass(acc, "patch rows carry no attention mass")
}

pub fn intra_scores(attn: &AttentionMap, mode: IntraMode) -> Result<ScoreVector> {
    match mode {
        IntraMode::ClsRow => intra_cls(attn),
        IntraMode::RowSum => intra_rowsum(attn),
    }
}

/// Cosine of every patch embedding (projected when `proj` is given) with the
/// text embedding.
pub fn inter_scores(
    patches: &PatchTokenSet,
    text: &TextEmbedding,
    proj: Option<&ProjectionMatrix>,
) -> Result<ScoreVector> {
    let zero_row = |i: usize| AtpError::ZeroNorm(format!("patch row {i}"));
    let scores = match proj {
        None => {
            if patches.dim() != text.dim() {
                return Err(AtpError::DimensionMismatch {
                    left: patches.dim(),
                    right: text.dim(),
                });
            }
            patches
                .rows()
                .enumerate()
                .map(|(i, row)| {
                    cosine(row, text.as_slice()).map_err(|e| match e {
                        AtpError::ZeroNorm(_) => zero_row(i),
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Some(p) => {
            if p.rows() != patches.dim() || p.cols() != text.dim() {
                return Err(AtpError::InvalidArgument(format!(
                    "projection is {}x{} but patches are D_v={} and text is D_t={}",
                    p.rows(),
                    p.cols(),
                    patches.dim(),
                    text.dim()
                )));
            }
            let t: Vec<f64> = text.as_slice().iter().map(|&v| f64::from(v)).collect();
            patches
                .rows()
                .enumerate()
                .map(|(i, row)| {
                    cosine(&p.project(row), &t).map_err(|e| match e {
                        AtpError::ZeroNorm(_) => zero_row(i),
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ScoreVector::from_finite(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One head; CLS row as given, every other row uniform.
    fn single_head(cls: &[f32]) -> AttentionMap {
        let t = cls.len();
        let mut w = cls.to_vec();
        for _ in 1..t {
            w.extend(std::iter::repeat_n(1.0 / t as f32, t));
        }
        AttentionMap::new(1, t, w).unwrap()
    }

    #[test]
    fn cls_uniform_and_delta() {
        let u = intra_cls(&single_head(&[0.0, 0.25, 0.25, 0.25, 0.25])).unwrap();
        assert_eq!(u.as_slice(), &[0.25; 4]);
        let d = intra_cls(&single_head(&[0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn cls_excludes_self_attention() {
        let s = intra_cls(&single_head(&[0.5, 0.25, 0.25])).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn cls_two_heads_averaged() {
        let third = 1.0f32 / 3.0;
        let rest = [third; 6];
        let mut w = vec![0.0, 0.6, 0.4];
        w.extend_from_slice(&rest);
        w.extend_from_slice(&[0.0, 0.2, 0.8]);
        w.extend_from_slice(&rest);
        let attn = AttentionMap::new(2, 3, w).unwrap();
        let s = intra_cls(&attn).unwrap();
        // (0.6+0.2)/2 = 0.4, (0.4+0.8)/2 = 0.6, already summing to 1
        assert!((s[0] - 0.4).abs() < 1e-7);
        assert!((s[1] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn cls_without_patch_mass_is_degenerate() {
        let attn = single_head(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            intra_cls(&attn),
            Err(AtpError::DegenerateAttention(_))
        ));
    }

    #[test]
    fn rowsum_is_uniform_for_stochastic_maps() {
        let s = intra_rowsum(&single_head(&[0.0, 0.9, 0.1])).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        let t = 5;
        let mut id = vec![0.0f32; t * t];
        for i in 0..t {
            id[i * t + i] = 1.0;
        }
        let s = intra_rowsum(&AttentionMap::new(1, t, id).unwrap()).unwrap();
        assert_eq!(s.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn attention_validation() {
        assert!(AttentionMap::new(1, 2, vec![0.5, 0.4, 0.5, 0.5]).is_err());
        assert!(AttentionMap::new(1, 2, vec![1.5, -0.5, 0.5, 0.5]).is_err());
        assert!(AttentionMap::new(1, 1, vec![1.0]).is_err());
        assert!(AttentionMap::new(0, 2, vec![]).is_err());
        assert!(AttentionMap::new_relaxed(1, 2, vec![0.5, 0.4, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn inter_parallel_and_orthogonal() {
        let p = PatchTokenSet::new(vec![1.0, 2.0, -2.0, 1.0], 2, 2, None).unwrap();
        let t = TextEmbedding::new(vec![1.0, 2.0]).unwrap();
        let s = inter_scores(&p, &t, None).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn inter_dimension_mismatch_names_both() {
        let p = PatchTokenSet::new(vec![1.0; 8], 2, 4, None).unwrap();
        let t = TextEmbedding::new(vec![1.0, 2.0]).unwrap();
        let msg = inter_scores(&p, &t, None).unwrap_err().to_string();
        assert!(msg.contains('4') && msg.contains('2'), "{msg}");
        let bad = ProjectionMatrix::new(3, 2, vec![1.0; 6]).unwrap();
        assert!(inter_scores(&p, &t, Some(&bad)).is_err());
    }

    #[test]
    fn inter_zero_row_names_index() {
        let p = PatchTokenSet::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 3, 2, None).unwrap();
        let t = TextEmbedding::new(vec![1.0, 1.0]).unwrap();
        match inter_scores(&p, &t, None) {
            Err(AtpError::ZeroNorm(m)) => assert_eq!(m, "patch row 1"),
            other => panic!("{other:?}"),
        }
        // a row in the projection's null space is also degenerate
        let proj = ProjectionMatrix::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        match inter_scores(&p, &t, Some(&proj)) {
            Err(AtpError::ZeroNorm(m)) => assert_eq!(m, "patch row 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn patch_set_validation() {
        assert!(PatchTokenSet::new(vec![], 0, 2, None).is_err());
        assert!(PatchTokenSet::new(vec![1.0; 6], 3, 2, Some(Grid { rows: 2, cols: 2 })).is_err());
        assert!(PatchTokenSet::new(vec![1.0, f32::INFINITY], 1, 2, None).is_err());
        assert!(TextEmbedding::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn intra_mode_parse() {
        assert_eq!("cls_row".parse::<IntraMode>().unwrap(), IntraMode::ClsRow);
        assert_eq!("row_sum".parse::<IntraMode>().unwrap(), IntraMode::RowSum);
        assert!("softmax".parse::<IntraMode>().is_err());
    }
}
