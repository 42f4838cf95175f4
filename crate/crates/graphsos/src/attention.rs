//! Scaled dot-product and multi-head cross-attention over embeddings, with
//! trainable per-head projections and analytic gradients.
//!
//! The attention here is weight-producing only: downstream consumers (walk
//! transition probabilities, order selection) use the weight distribution
//! directly and never materialize a value product.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A probability distribution over keys: non-negative, sums to 1.
pub type WeightVector = Vec<f64>;

/// Per-head query/key projections. Each head's matrix is `dim x d_k`
/// row-major with `d_k = dim / heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub dim: usize,
    pub w_q: Vec<Vec<f64>>,
    pub w_k: Vec<Vec<f64>>,
}

impl AttentionParams {
    /// Fresh parameters with entries i.i.d. uniform on `[-1/sqrt(dim), 1/sqrt(dim)]`.
    pub fn seeded(heads: usize, dim: usize, seed: u64) -> Result<Self> {
        if heads == 0 || dim == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::InvalidParameter(format!(
                "dim {dim} must be a positive multiple of heads {heads}"
            )));
        }
        let d_k = dim / heads;
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = || -> Vec<f64> {
            (0..dim * d_k).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        let w_q = (0..heads).map(|_| matrix()).collect();
        let w_k = (0..heads).map(|_| matrix()).collect();
        Ok(Self { heads, dim, w_q, w_k })
    }

    pub fn d_k(&self) -> usize {
        self.dim / self.heads
    }

    /// `W_q[head]^T v`: project an input vector into head space.
    pub fn project_query(&self, head: usize, v: &[f64]) -> Vec<f64> {
        project(&self.w_q[head], v, self.d_k())
    }

    /// `W_k[head]^T v`: project an input vector into head space.
    pub fn project_key(&self, head: usize, v: &[f64]) -> Vec<f64> {
        project(&self.w_k[head], v, self.d_k())
    }

    /// Write an `attn <heads> <dim>` checkpoint. Floats use shortest
    /// round-trip formatting so a load reproduces the parameters bit for
    /// bit.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let d_k = self.d_k();
        let mut out = format!("attn {} {}\n", self.heads, self.dim);
        for matrix in self.w_q.iter().chain(self.w_k.iter()) {
            for row in matrix.chunks(d_k) {
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{v}");
                }
                out.push('\n');
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let mut tokens = content.split_whitespace();
        if tokens.next() != Some("attn") {
            return Err(Error::Format("expected `attn <heads> <dim>` header".into()));
        }
        let heads: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Format("bad head count in checkpoint header".into()))?;
        let dim: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Format("bad dimension in checkpoint header".into()))?;
        if heads == 0 || dim == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Format(format!(
                "checkpoint dim {dim} is not a positive multiple of heads {heads}"
            )));
        }
        let d_k = dim / heads;
        let per_matrix = dim * d_k;
        let mut values = Vec::with_capacity(2 * heads * per_matrix);
        for token in tokens {
            let v: f64 = token
                .parse()
                .map_err(|_| Error::Format(format!("bad float {token:?} in checkpoint")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("attention checkpoint".into()));
            }
            values.push(v);
        }
        if values.len() != 2 * heads * per_matrix {
            return Err(Error::Format(format!(
                "checkpoint has {} values, expected {}",
                values.len(),
                2 * heads * per_matrix
            )));
        }
        let mut chunks = values.chunks(per_matrix).map(<[f64]>::to_vec);
        let w_q = (0..heads).map(|_| chunks.next().unwrap()).collect();
        let w_k = (0..heads).map(|_| chunks.next().unwrap()).collect();
        Ok(Self { heads, dim, w_q, w_k })
    }
}

fn project(matrix: &[f64], v: &[f64], d_k: usize) -> Vec<f64> {
    let mut out = vec![0.0; d_k];
    for (i, &x) in v.iter().enumerate() {
        if x != 0.0 {
            let row = &matrix[i * d_k..(i + 1) * d_k];
            for (o, m) in out.iter_mut().zip(row) {
                *o += x * m;
            }
        }
    }
    out
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax of scaled dot products `q . k_j / sqrt(d_k)` over the keys,
/// stabilized by max-subtraction. `d_k` is the scaling dimension.
pub fn sdp_weights(query: &[f64], keys: &[Vec<f64>], d_k: usize) -> Result<WeightVector> {
    if keys.is_empty() {
        return Err(Error::EmptyKeys);
    }
    if d_k == 0 {
        return Err(Error::InvalidParameter("d_k must be positive".into()));
    }
    let scale = (d_k as f64).sqrt();
    let mut logits = Vec::with_capacity(keys.len());
    for key in keys {
        if key.len() != query.len() {
            return Err(Error::DimensionMismatch { expected: query.len(), got: key.len() });
        }
        logits.push(dot(query, key) / scale);
    }
    Ok(softmax(&logits))
}

/// Multi-head cross-attention weights: the per-head softmaxes of projected
/// query/key dot products, averaged over heads.
pub fn multihead_weights(
    params: &AttentionParams,
    target: &[f64],
    neighbors: &[Vec<f64>],
) -> Result<WeightVector> {
    if neighbors.is_empty() {
        return Err(Error::EmptyKeys);
    }
    if target.len() != params.dim {
        return Err(Error::DimensionMismatch { expected: params.dim, got: target.len() });
    }
    for nb in neighbors {
        if nb.len() != params.dim {
            return Err(Error::DimensionMismatch { expected: params.dim, got: nb.len() });
        }
    }
    let d_k = params.d_k();
    let mut out = vec![0.0; neighbors.len()];
    for head in 0..params.heads {
        let q = params.project_query(head, target);
        let keys: Vec<Vec<f64>> = neighbors.iter().map(|n| params.project_key(head, n)).collect();
        let w = sdp_weights(&q, &keys, d_k)?;
        for (o, wi) in out.iter_mut().zip(w) {
            *o += wi;
        }
    }
    let h = params.heads as f64;
    for o in out.iter_mut() {
        *o /= h;
    }
    Ok(out)
}

/// Gradients of a scalar loss with respect to every projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub w_q: Vec<Vec<f64>>,
    pub w_k: Vec<Vec<f64>>,
}

impl AttentionGrads {
    pub fn zeros_like(params: &AttentionParams) -> Self {
        let shape = params.dim * params.d_k();
        Self {
            w_q: vec![vec![0.0; shape]; params.heads],
            w_k: vec![vec![0.0; shape]; params.heads],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for matrix in self.w_q.iter_mut().chain(self.w_k.iter_mut()) {
            for v in matrix.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.w_q
            .iter()
            .chain(self.w_k.iter())
            .flat_map(|m| m.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w_q
            .iter()
            .chain(self.w_k.iter())
            .flat_map(|m| m.iter())
            .all(|v| v.is_finite())
    }
}

/// Analytic gradient of `loss = upstream . multihead_weights(...)` with
/// respect to the projections: the softmax Jacobian `diag(w) - w w^T` chained
/// through the bilinear projections, per head.
pub fn multihead_grad(
    params: &AttentionParams,
    target: &[f64],
    neighbors: &[Vec<f64>],
    upstream: &[f64],
) -> Result<AttentionGrads> {
    if upstream.len() != neighbors.len() {
        return Err(Error::DimensionMismatch { expected: neighbors.len(), got: upstream.len() });
    }
    // Re-validates dimensions.
    multihead_weights(params, target, neighbors)?;

    let d_k = params.d_k();
    let scale = (d_k as f64).sqrt();
    let h = params.heads as f64;
    let mut grads = AttentionGrads::zeros_like(params);

    for head in 0..params.heads {
        let q = params.project_query(head, target);
        let keys: Vec<Vec<f64>> = neighbors.iter().map(|n| params.project_key(head, n)).collect();
        let w = sdp_weights(&q, &keys, d_k)?;

        // dL/dz_j through the head-averaged softmax.
        let mixed = dot(upstream, &w);
        let dz: Vec<f64> = w
            .iter()
            .zip(upstream)
            .map(|(wj, uj)| wj * (uj - mixed) / h)
            .collect();

        // z_j = q . k_j / scale
        let mut dq = vec![0.0; d_k];
        for (dzj, key) in dz.iter().zip(&keys) {
            for (dqi, ki) in dq.iter_mut().zip(key) {
                *dqi += dzj * ki / scale;
            }
        }
        // q = W_q^T t  =>  dW_q = t (dq)^T
        let gq = &mut grads.w_q[head];
        for (i, &ti) in target.iter().enumerate() {
            if ti != 0.0 {
                for (b, &dqb) in dq.iter().enumerate() {
                    gq[i * d_k + b] += ti * dqb;
                }
            }
        }
        // k_j = W_k^T n_j  =>  dW_k = sum_j n_j (dz_j q / scale)^T
        let gk = &mut grads.w_k[head];
        for (dzj, nb) in dz.iter().zip(neighbors) {
            if *dzj == 0.0 {
                continue;
            }
            for (i, &ni) in nb.iter().enumerate() {
                if ni != 0.0 {
                    for (b, &qb) in q.iter().enumerate() {
                        gk[i * d_k + b] += ni * dzj * qb / scale;
                    }
                }
            }
        }
    }
    Ok(grads)
}

/// Apply `params += step * grads` in place.
pub fn apply_update(params: &mut AttentionParams, grads: &AttentionGrads, step: f64) {
    for (matrix, g) in params
        .w_q
        .iter_mut()
        .chain(params.w_k.iter_mut())
        .zip(grads.w_q.iter().chain(grads.w_k.iter()))
    {
        for (m, gv) in matrix.iter_mut().zip(g) {
            *m += step * gv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_params(dim: usize) -> AttentionParams {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        AttentionParams { heads: 1, dim, w_q: vec![w.clone()], w_k: vec![w] }
    }

    #[test]
    fn single_key_gets_all_mass() {
        let w = sdp_weights(&[0.3, -0.2], &[vec![1.0, 1.0]], 2).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn identical_keys_are_uniform() {
        for n in [2, 3, 7] {
            let keys = vec![vec![0.4, -1.0, 2.0]; n];
            let w = sdp_weights(&[1.0, 0.5, -0.5], &keys, 3).unwrap();
            for wi in &w {
                assert!((wi - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_derived_two_key_case() {
        let w = sdp_weights(&[2.0], &[vec![1.0], vec![0.0]], 1).unwrap();
        assert!((w[0] - 0.8808).abs() < 1e-4, "w0={}", w[0]);
        assert!((w[1] - 0.1192).abs() < 1e-4, "w1={}", w[1]);
    }

    #[test]
    fn zero_keys_is_an_error() {
        assert!(matches!(sdp_weights(&[1.0], &[], 1), Err(Error::EmptyKeys)));
    }

    #[test]
    fn single_head_identity_projection_reduces_to_sdp() {
        let params = identity_params(4);
        let target = vec![0.2, -0.4, 0.6, 0.1];
        let neighbors = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.1, 0.9, -0.2, 0.3]];
        let mh = multihead_weights(&params, &target, &neighbors).unwrap();
        let sdp = sdp_weights(&target, &neighbors, 4).unwrap();
        for (a, b) in mh.iter().zip(&sdp) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_neighbors_uniform_regardless_of_params() {
        let params = AttentionParams::seeded(4, 8, 11).unwrap();
        let target: Vec<f64> = (0..8).map(|i| (i as f64) * 0.1 - 0.3).collect();
        let neighbors = vec![vec![0.5; 8]; 5];
        let w = multihead_weights(&params, &target, &neighbors).unwrap();
        for wi in &w {
            assert!((wi - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn multihead_equals_mean_of_independent_heads() {
        let params = AttentionParams::seeded(2, 8, 11).unwrap();
        let target: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let neighbors: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..8).map(|i| ((i + j * 3) as f64 * 0.4).cos()).collect())
            .collect();
        let combined = multihead_weights(&params, &target, &neighbors).unwrap();

        let d_k = params.d_k();
        let mut mean = vec![0.0; neighbors.len()];
        for head in 0..2 {
            let q = params.project_query(head, &target);
            let keys: Vec<Vec<f64>> =
                neighbors.iter().map(|n| params.project_key(head, n)).collect();
            let w = sdp_weights(&q, &keys, d_k).unwrap();
            for (m, wi) in mean.iter_mut().zip(w) {
                *m += wi / 2.0;
            }
        }
        for (a, b) in combined.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_distributions() {
        let params = AttentionParams::seeded(4, 16, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let target: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = rng.gen_range(1..6);
            let neighbors: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let w = multihead_weights(&params, &target, &neighbors).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_key_translation_leaves_weights_unchanged() {
        let params = AttentionParams::seeded(2, 8, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let target: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let neighbors: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let shift: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let shifted: Vec<Vec<f64>> = neighbors
            .iter()
            .map(|n| n.iter().zip(&shift).map(|(a, b)| a + b).collect())
            .collect();

        let w0 = multihead_weights(&params, &target, &neighbors).unwrap();
        let w1 = multihead_weights(&params, &target, &shifted).unwrap();
        let argmax = |w: &[f64]| {
            w.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&w0), argmax(&w1));
        for (a, b) in w0.iter().zip(&w1) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let params = AttentionParams::seeded(2, 8, 5).unwrap();
        let target = vec![0.1; 8];
        let neighbors = vec![vec![0.2; 8], vec![-0.1; 8]];
        let grads = multihead_grad(&params, &target, &neighbors, &[0.0, 0.0]).unwrap();
        assert_eq!(grads.norm(), 0.0);
    }

    fn finite_difference_check(seed: u64) -> f64 {
        let params = AttentionParams::seeded(2, 8, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let target: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let neighbors: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let upstream: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let analytic = multihead_grad(&params, &target, &neighbors, &upstream).unwrap();
        let loss = |p: &AttentionParams| -> f64 {
            let w = multihead_weights(p, &target, &neighbors).unwrap();
            w.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };

        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for is_query in [true, false] {
            for head in 0..params.heads {
                let len = params.dim * params.d_k();
                for e in 0..len {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    {
                        let (p, m) = if is_query {
                            (&mut plus.w_q[head][e], &mut minus.w_q[head][e])
                        } else {
                            (&mut plus.w_k[head][e], &mut minus.w_k[head][e])
                        };
                        *p += eps;
                        *m -= eps;
                    }
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                    let a = if is_query { analytic.w_q[head][e] } else { analytic.w_k[head][e] };
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
        worst
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let worst = finite_difference_check(5);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn identical_neighbors_pin_weights_against_key_perturbations() {
        let mut params = AttentionParams::seeded(2, 8, 13).unwrap();
        let target = vec![0.3; 8];
        let neighbors = vec![vec![0.7; 8]; 4];
        let before = multihead_weights(&params, &target, &neighbors).unwrap();
        params.w_k[0][5] += 0.37;
        params.w_k[1][11] -= 0.52;
        let after = multihead_weights(&params, &target, &neighbors).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-15);
            assert!((a - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let params = AttentionParams::seeded(4, 16, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.ckpt");
        params.save(&path).unwrap();
        let loaded = AttentionParams::load(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn checkpoint_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "attn 2 4\n1 2\n").unwrap();
        assert!(matches!(AttentionParams::load(&path), Err(Error::Format(_))));
    }
}
