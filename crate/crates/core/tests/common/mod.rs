#![allow(dead_code)]

use atp_core::rng::Xoshiro256StarStar;
use atp_core::{AttentionMap, Fixture, Grid, PatchTokenSet, ProjectionMatrix, TextEmbedding};

/// Random row-stochastic attention from softmaxed normals.
pub fn random_attention(rng: &mut Xoshiro256StarStar, heads: usize, tokens: usize) -> Vec<f32> {
    let mut w = Vec::with_capacity(heads * tokens * tokens);
    for _ in 0..heads * tokens {
        let logits: Vec<f64> = (0..tokens).map(|_| 2.0 * rng.next_normal()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        w.extend(e.iter().map(|x| (x / z) as f32));
    }
    w
}

pub fn random_fixture(seed: u64, n: usize, dv: usize, dt: usize, heads: usize) -> Fixture {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let emb: Vec<f32> = (0..n * dv).map(|_| rng.next_normal() as f32).collect();
    let grid = (1..=n)
        .rev()
        .find(|r| n.is_multiple_of(*r) && r * r <= n)
        .map(|r| Grid {
            rows: r,
            cols: n / r,
        });
    let patches = PatchTokenSet::new(emb, n, dv, grid).unwrap();
    let attention =
        AttentionMap::new(heads, n + 1, random_attention(&mut rng, heads, n + 1)).unwrap();
    let text = TextEmbedding::new((0..dt).map(|_| rng.next_normal() as f32).collect()).unwrap();
    let projection = (dv != dt).then(|| {
        ProjectionMatrix::new(
            dv,
            dt,
            (0..dv * dt).map(|_| rng.next_normal() as f32).collect(),
        )
        .unwrap()
    });
    Fixture {
        patches,
        attention,
        text,
        projection,
        planted_indices: None,
        prompt: Some(format!("prompt {seed}")),
        model: None,
        generator_seed: None,
    }
}

/// Kahan-compensated dot product.
pub fn oracle_dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for k in 0..a.len() {
        let y = a[k] * b[k] - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    oracle_dot(a, b) / (oracle_dot(a, a).sqrt() * oracle_dot(b, b).sqrt())
}

pub fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Full stable sort by descending score; equal scores keep index order.
pub fn oracle_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut kept: Vec<usize> = idx.into_iter().take(k).collect();
    kept.sort();
    kept
}

pub fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    idx
}
