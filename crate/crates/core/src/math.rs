//! Dense vector arithmetic shared by the scoring modules.
//!
//! Embeddings are stored as `f32`; every reduction accumulates in `f64`.

use crate::error::{AtpError, Result};

/// A finite, non-empty dense vector in storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

impl Vector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(AtpError::Empty("vector"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(AtpError::NonFinite(format!("vector entry {k}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// One score per patch token.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(k) = scores.iter().position(|v| !v.is_finite()) {
            return Err(AtpError::NonFinite(format!("score {k}")));
        }
        Ok(Self(scores))
    }

    pub(crate) fn from_finite(scores: Vec<f64>) -> Self {
        debug_assert!(scores.iter().all(|v| v.is_finite()));
        Self(scores)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Σ a_k·b_k accumulated in `f64`.
pub fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AtpError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum())
}

pub fn l2_norm<T: Copy + Into<f64>>(a: &[T]) -> f64 {
    a.iter()
        .map(|&x| {
            let x = x.into();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`.
///
/// Fails with [`AtpError::ZeroNorm`] naming `"a"` or `"b"` when either
/// argument has zero length in the L2 sense.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    let num = dot(a, b)?;
    let na = l2_norm(a);
    if na == 0.0 {
        return Err(AtpError::ZeroNorm("argument a".into()));
    }
    let nb = l2_norm(b);
    if nb == 0.0 {
        return Err(AtpError::ZeroNorm("argument b".into()));
    }
    Ok((num / (na * nb)).clamp(-1.0, 1.0))
}

/// Min-max normalization to `[0, 1]`. A constant vector maps to all `0.5`.
pub fn minmax_normalize(s: &ScoreVector) -> Result<ScoreVector> {
    let v = s.as_slice();
    if v.is_empty() {
        return Err(AtpError::Empty("score vector"));
    }
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let out = if hi > lo {
        let span = hi - lo;
        v.iter()
            .map(|&x| ((x - lo) / span).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.5; v.len()]
    };
    Ok(ScoreVector::from_finite(out))
}
