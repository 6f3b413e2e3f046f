//! Score fusion, top-K selection and the end-to-end pruning pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{AtpError, Result};
use crate::math::{minmax_normalize, ScoreVector};
use crate::rng::Xoshiro256StarStar;
use crate::saliency::{
    inter_scores, intra_scores, AttentionMap, IntraMode, PatchTokenSet, ProjectionMatrix,
    TextEmbedding,
};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_KEEP_RATIO: f64 = 0.6;

/// How many tokens survive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    /// Fraction of `N` in `(0, 1]`.
    Ratio(f64),
    /// Absolute count, at least 1.
    Count(usize),
}

impl Keep {
    /// `max(1, round(r·N))` for ratios, `min(K, N)` for counts.
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            Keep::Ratio(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(AtpError::InvalidArgument(format!(
                        "keep ratio {r} outside (0, 1]"
                    )));
                }
                // f64::round rounds half away from zero
                Ok(((r * n as f64).round() as usize).clamp(1, n.max(1)))
            }
            Keep::Count(0) => Err(AtpError::InvalidArgument("keep count must be >= 1".into())),
            Keep::Count(k) => Ok(k.min(n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub alpha: f64,
    pub keep: Keep,
    pub intra_mode: IntraMode,
    /// Only consumed by the stability probe.
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            keep: Keep::Ratio(DEFAULT_KEEP_RATIO),
            intra_mode: IntraMode::ClsRow,
            seed: 0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        match self.keep {
            Keep::Ratio(r) if !(r > 0.0 && r <= 1.0) => Err(AtpError::InvalidArgument(format!(
                "keep ratio {r} outside (0, 1]"
            ))),
            Keep::Count(0) => Err(AtpError::InvalidArgument("keep count must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(AtpError::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    /// Strictly ascending patch indices.
    pub kept_indices: Vec<usize>,
    pub mask: Vec<bool>,
    pub inter_raw: ScoreVector,
    pub intra_raw: ScoreVector,
    pub inter_norm: ScoreVector,
    pub intra_norm: ScoreVector,
    pub fused: ScoreVector,
    pub config: PruneConfig,
}

impl PruneResult {
    pub fn k(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }
}

/// `α·inter + (1−α)·intra`, elementwise.
///
/// Each output is clamped into the interval spanned by its two inputs so the
/// convex-combination bound holds exactly under rounding.
pub fn fuse(inter_norm: &ScoreVector, intra_norm: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    check_alpha(alpha)?;
    if inter_norm.len() != intra_norm.len() {
        return Err(AtpError::DimensionMismatch {
            left: inter_norm.len(),
            right: intra_norm.len(),
        });
    }
    let out = inter_norm
        .as_slice()
        .iter()
        .zip(intra_norm.as_slice())
        .map(|(&e, &a)| (alpha * e + (1.0 - alpha) * a).clamp(e.min(a), e.max(a)))
        .collect();
    ScoreVector::new(out)
}

/// Indices of the `min(k, N)` largest scores, ascending by index.
/// Equal scores prefer the lower index.
pub fn top_k(scores: &ScoreVector, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(AtpError::InvalidArgument("top-k needs k >= 1".into()));
    }
    let s = scores.as_slice();
    let mut idx: Vec<usize> = (0..s.len()).collect();
    if k < idx.len() {
        let rank = |&a: &usize, &b: &usize| s[b].total_cmp(&s[a]).then(a.cmp(&b));
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
        idx.sort_unstable();
    }
    Ok(idx)
}

/// Gathers the kept rows in their original order. The result carries no
/// grid since a pruned set is no longer rectangular.
pub fn apply_prune(patches: &PatchTokenSet, kept: &[usize]) -> Result<PatchTokenSet> {
    if kept.is_empty() {
        return Err(AtpError::InvalidArgument("kept index list is empty".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&i| i >= patches.len()) {
        return Err(AtpError::InvalidArgument(format!(
            "kept index {bad} out of range for {} patches",
            patches.len()
        )));
    }
    if kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AtpError::InvalidArgument(
            "kept indices must be strictly ascending".into(),
        ));
    }
    let mut rows = Vec::with_capacity(kept.len() * patches.dim());
    for &i in kept {
        rows.extend_from_slice(patches.row(i));
    }
    PatchTokenSet::new(rows, kept.len(), patches.dim(), None)
}

/// Scores, fuses and selects in one pass.
pub fn atp_pipeline(
    patches: &PatchTokenSet,
    attn: &AttentionMap,
    text: &TextEmbedding,
    proj: Option<&ProjectionMatrix>,
    config: &PruneConfig,
) -> Result<PruneResult> {
    config.validate()?;
    if attn.patches() != patches.len() {
        return Err(AtpError::DimensionMismatch {
            left: attn.patches(),
            right: patches.len(),
        });
    }
    let n = patches.len();
    let k = config.keep.resolve(n)?;

    let inter_raw = inter_scores(patches, text, proj)?;
    let intra_raw = intra_scores(attn, config.intra_mode)?;
    let inter_norm = minmax_normalize(&inter_raw)?;
    let intra_norm = minmax_normalize(&intra_raw)?;
    let fused = fuse(&inter_norm, &intra_norm, config.alpha)?;
    let kept_indices = top_k(&fused, k)?;

    let mut mask = vec![false; n];
    for &i in &kept_indices {
        mask[i] = true;
    }
    Ok(PruneResult {
        kept_indices,
        mask,
        inter_raw,
        intra_raw,
        inter_norm,
        intra_norm,
        fused,
        config: *config,
    })
}

/// `|A ∩ B| / |A ∪ B|` over ascending index lists. Two empty sets give 1.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub mean_jaccard: f64,
    pub min_jaccard: f64,
    pub max_jaccard: f64,
    pub per_trial: Vec<f64>,
}

/// Kept-set overlap under Gaussian embedding noise.
///
/// Trial `t` perturbs every embedding entry with `N(0, sigma²)` noise drawn
/// from stream `(config.seed, t)`, so trials are independent of execution
/// order. Attention is left untouched.
pub fn kept_set_stability(
    patches: &PatchTokenSet,
    attn: &AttentionMap,
    text: &TextEmbedding,
    proj: Option<&ProjectionMatrix>,
    config: &PruneConfig,
    sigma: f64,
    trials: usize,
) -> Result<StabilitySummary> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(AtpError::InvalidArgument(format!(
            "sigma {sigma} must be finite and >= 0"
        )));
    }
    if trials == 0 {
        return Err(AtpError::InvalidArgument("trials must be >= 1".into()));
    }
    let reference = atp_pipeline(patches, attn, text, proj, config)?;
    let per_trial = (0..trials)
        .map(|t| {
            let mut rng = Xoshiro256StarStar::for_stream(config.seed, t as u64);
            let noisy =
                patches.map_entries(|_, _, v| (f64::from(v) + sigma * rng.next_normal()) as f32)?;
            let run = atp_pipeline(&noisy, attn, text, proj, config)?;
            Ok(jaccard(&reference.kept_indices, &run.kept_indices))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let min = per_trial.iter().copied().fold(f64::INFINITY, f64::min);
    let max = per_trial.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilitySummary {
        sigma,
        trials,
        seed: config.seed,
        k: reference.k(),
        n: reference.n(),
        mean_jaccard: mean,
        min_jaccard: min,
        max_jaccard: max,
        per_trial,
    })
}
