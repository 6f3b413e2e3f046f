//! Analytical prefill cost of the language model as a function of sequence
//! length.
//!
//! Per layer, a token costs `24·d²` FLOPs in the dense projections (QKVO plus
//! a 4× MLP) and each pair of tokens costs `4·d` in the attention score and
//! value products. Biases, norms and embedding lookups are ignored.

use serde::Serialize;

use crate::error::{AtpError, Result};

pub const DEFAULT_DECODE_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LmShape {
    pub layers: u64,
    pub hidden: u64,
    pub kv_bytes_per_element: u64,
}

impl LmShape {
    pub fn new(layers: u64, hidden: u64, kv_bytes_per_element: u64) -> Result<Self> {
        if layers == 0 || hidden == 0 || kv_bytes_per_element == 0 {
            return Err(AtpError::InvalidArgument(
                "layers, hidden and kv-bytes must all be >= 1".into(),
            ));
        }
        Ok(Self {
            layers,
            hidden,
            kv_bytes_per_element,
        })
    }
}

impl Default for LmShape {
    /// A 7B-class decoder: 32 layers, width 4096, 16-bit cache.
    fn default() -> Self {
        Self {
            layers: 32,
            hidden: 4096,
            kv_bytes_per_element: 2,
        }
    }
}

/// `L · (24·d²·S + 4·d·S²)`.
pub fn prefill_flops(seq_len: u64, shape: &LmShape) -> f64 {
    let s = seq_len as f64;
    let d = shape.hidden as f64;
    shape.layers as f64 * (24.0 * d * d * s + 4.0 * d * s * s)
}

/// `2 · L · S · d · bytes` (keys and values).
pub fn kv_bytes(seq_len: u64, shape: &LmShape) -> u64 {
    2u64.saturating_mul(shape.layers)
        .saturating_mul(seq_len)
        .saturating_mul(shape.hidden)
        .saturating_mul(shape.kv_bytes_per_element)
}

/// Linear-term-only ratio `(K+T)/(N+T)`.
pub fn linear_prefill_ratio(n: u64, k: u64, text_len: u64) -> f64 {
    (k + text_len) as f64 / (n + text_len) as f64
}

/// Amdahl split: the prefill share `1−f` scales by `rel_prefill`, decode is
/// untouched.
pub fn latency_speedup(rel_prefill: f64, decode_fraction: f64) -> Result<f64> {
    if !(rel_prefill.is_finite() && rel_prefill > 0.0) {
        return Err(AtpError::InvalidArgument(format!(
            "relative prefill cost {rel_prefill} must be > 0"
        )));
    }
    check_fraction(decode_fraction)?;
    Ok(1.0 / ((1.0 - decode_fraction) * rel_prefill + decode_fraction))
}

fn check_fraction(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(AtpError::InvalidArgument(format!(
            "decode fraction {f} outside [0, 1]"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub n: u64,
    pub k: u64,
    pub text_len: u64,
    pub decode_fraction: f64,
    pub shape: LmShape,
    pub flops_full: f64,
    pub flops_pruned: f64,
    pub rel_flops_full_seq: f64,
    /// `K / N`.
    pub rel_flops_visual_only: f64,
    pub kv_full: u64,
    pub kv_pruned: u64,
    pub rel_kv: f64,
    /// Speedup from `rel_flops_full_seq` at `decode_fraction`.
    pub modeled_speedup: f64,
}

pub fn relative_report(
    n: u64,
    k: u64,
    text_len: u64,
    shape: &LmShape,
    decode_fraction: f64,
) -> Result<CostReport> {
    if k == 0 || n == 0 {
        return Err(AtpError::InvalidArgument("N and K must be >= 1".into()));
    }
    if k > n {
        return Err(AtpError::InvalidArgument(format!("K={k} exceeds N={n}")));
    }
    check_fraction(decode_fraction)?;
    let flops_full = prefill_flops(n + text_len, shape);
    let flops_pruned = prefill_flops(k + text_len, shape);
    let kv_full = kv_bytes(n + text_len, shape);
    let kv_pruned = kv_bytes(k + text_len, shape);
    let rel_flops_full_seq = flops_pruned / flops_full;
    Ok(CostReport {
        n,
        k,
        text_len,
        decode_fraction,
        shape: *shape,
        flops_full,
        flops_pruned,
        rel_flops_full_seq,
        rel_flops_visual_only: k as f64 / n as f64,
        kv_full,
        kv_pruned,
        rel_kv: kv_pruned as f64 / kv_full as f64,
        modeled_speedup: latency_speedup(rel_flops_full_seq, decode_fraction)?,
    })
}
