use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use atp_core::{
    atp_pipeline, gen_synthetic, kept_set_stability, read_container, relative_report,
    write_container, AtpError, Fixture, IntraMode, Keep, LmShape, PruneConfig, PruneResult,
    SyntheticSpec,
};
use log::info;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{emit, patch_grid_ppm, sig9, to_json};

fn load(path: &Path) -> Result<Fixture, CliError> {
    let fx = read_container(path).map_err(|e| match e {
        AtpError::Io(io) => CliError::Io(format!("cannot read {}: {io}", path.display())),
        other => CliError::Invalid(format!("{}: {other}", path.display())),
    })?;
    info!(
        "loaded {}: N={} D_v={} D_t={} heads={}",
        path.display(),
        fx.patches.len(),
        fx.patches.dim(),
        fx.text.dim(),
        fx.attention.heads()
    );
    Ok(fx)
}

fn run_pipeline(fx: &Fixture, cfg: &PruneConfig) -> Result<PruneResult, CliError> {
    Ok(atp_pipeline(
        &fx.patches,
        &fx.attention,
        &fx.text,
        fx.projection.as_ref(),
        cfg,
    )?)
}

#[derive(Serialize)]
struct PruneReport<'a> {
    n: usize,
    k: usize,
    kept_indices: &'a [usize],
    mask: &'a [bool],
    inter_raw: &'a [f64],
    intra_raw: &'a [f64],
    inter_norm: &'a [f64],
    intra_norm: &'a [f64],
    fused: &'a [f64],
    config: &'a PruneConfig,
}

pub fn prune(fixture: &Path, cfg: &PruneConfig, out: Option<&Path>) -> Result<(), CliError> {
    let fx = load(fixture)?;
    let r = run_pipeline(&fx, cfg)?;
    info!("kept {} of {} patches", r.k(), r.n());
    let report = PruneReport {
        n: r.n(),
        k: r.k(),
        kept_indices: &r.kept_indices,
        mask: &r.mask,
        inter_raw: r.inter_raw.as_slice(),
        intra_raw: r.intra_raw.as_slice(),
        inter_norm: r.inter_norm.as_slice(),
        intra_norm: r.intra_norm.as_slice(),
        fused: r.fused.as_slice(),
        config: &r.config,
    };
    emit(out, &to_json(&report))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub fixture: PathBuf,
    pub alphas: Vec<f64>,
    pub keep_ratios: Vec<f64>,
    pub intra_mode: IntraMode,
    pub shape: LmShape,
    pub text_len: u64,
    pub decode_fraction: f64,
}

pub fn sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<(), CliError> {
    if spec.alphas.is_empty() || spec.keep_ratios.is_empty() {
        return Err(CliError::Invalid(
            "sweep needs at least one alpha and one keep ratio".into(),
        ));
    }
    let fx = load(&spec.fixture)?;
    let planted = fx.planted_indices.as_deref();

    let mut csv = String::from("alpha,keep_ratio,K,rel_flops_visual,rel_flops_full,rel_kv,speedup");
    if planted.is_some() {
        csv.push_str(",planted_recall");
    }
    csv.push('\n');
    for &alpha in &spec.alphas {
        for &ratio in &spec.keep_ratios {
            let cfg = PruneConfig {
                alpha,
                keep: Keep::Ratio(ratio),
                intra_mode: spec.intra_mode,
                seed: 0,
            };
            cfg.validate()?;
            let r = run_pipeline(&fx, &cfg)?;
            let cost = relative_report(
                r.n() as u64,
                r.k() as u64,
                spec.text_len,
                &spec.shape,
                spec.decode_fraction,
            )?;
            write!(
                csv,
                "{},{},{},{},{},{},{}",
                sig9(alpha),
                sig9(ratio),
                r.k(),
                sig9(cost.rel_flops_visual_only),
                sig9(cost.rel_flops_full_seq),
                sig9(cost.rel_kv),
                sig9(cost.modeled_speedup)
            )
            .unwrap();
            if let Some(p) = planted {
                let hit = p.iter().filter(|&&i| r.mask[i]).count();
                let recall = if p.is_empty() {
                    1.0
                } else {
                    hit as f64 / p.len() as f64
                };
                write!(csv, ",{}", sig9(recall)).unwrap();
            }
            csv.push('\n');
        }
    }
    emit(out, csv.as_bytes())
}

pub fn cost(
    n: u64,
    k: u64,
    text_len: u64,
    shape: &LmShape,
    decode_fraction: f64,
) -> Result<(), CliError> {
    let report = relative_report(n, k, text_len, shape, decode_fraction)?;
    emit(None, &to_json(&report))
}

pub fn viz(fixture: &Path, cfg: &PruneConfig, cell: usize, out: &Path) -> Result<(), CliError> {
    if cell == 0 {
        return Err(CliError::Invalid("cell size must be >= 1".into()));
    }
    let fx = load(fixture)?;
    let grid = fx
        .grid()
        .ok_or_else(|| CliError::Invalid(format!("{} has no grid metadata", fixture.display())))?;
    let r = run_pipeline(&fx, cfg)?;
    emit(
        Some(out),
        &patch_grid_ppm(&r.mask, grid.rows, grid.cols, cell),
    )
}

pub fn stability(
    fixture: &Path,
    cfg: &PruneConfig,
    sigma: f64,
    trials: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let fx = load(fixture)?;
    let summary = kept_set_stability(
        &fx.patches,
        &fx.attention,
        &fx.text,
        fx.projection.as_ref(),
        cfg,
        sigma,
        trials,
    )?;
    info!(
        "mean Jaccard {:.4} over {trials} trials",
        summary.mean_jaccard
    );
    emit(out, &to_json(&summary))
}

pub fn generate(spec: &SyntheticSpec, out: &Path) -> Result<(), CliError> {
    let fx = gen_synthetic(spec)?;
    write_container(&fx, out).map_err(|e| match e {
        AtpError::Io(io) => CliError::Io(format!("cannot write {}: {io}", out.display())),
        other => other.into(),
    })
}
