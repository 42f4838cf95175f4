//! Scaled dot-product and multi-head attention weights over text
//! embeddings, plus a finite-difference check of the analytic gradient.
//!
//! Run with: cargo run --example attention_weights

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphsos::attention::{
    multihead_grad, multihead_weights, sdp_weights, AttentionParams,
};
use graphsos::encoder::EncoderHandle;

fn main() -> Result<()> {
    // The two-logit hand case: logits [2, 0].
    let weights = sdp_weights(&[2.0], &[vec![1.0], vec![0.0]], 1)?;
    println!("sdp weights for logits [2, 0]: [{:.4}, {:.4}]", weights[0], weights[1]);

    // Multi-head weights between real text embeddings.
    let encoder = EncoderHandle::builtin(16, 1);
    let params = AttentionParams::seeded(4, 16, 5)?;
    let target = encoder.embed("graph attention networks")?;
    let neighbors = vec![
        encoder.embed("attention networks for graphs")?,
        encoder.embed("cooking pasta at altitude")?,
        encoder.embed("graph sampling methods")?,
    ];
    let weights = multihead_weights(&params, &target, &neighbors)?;
    println!("multi-head weights over 3 neighbor texts: {weights:?}");
    println!("weights sum to {:.12}", weights.iter().sum::<f64>());

    // Analytic gradient vs central differences on one random instance.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let upstream: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let analytic = multihead_grad(&params, &target, &neighbors, &upstream)?;
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for head in 0..params.heads {
        for entry in 0..params.dim * params.d_k() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.w_q[head][entry] += eps;
            minus.w_q[head][entry] -= eps;
            let loss = |p: &AttentionParams| -> f64 {
                multihead_weights(p, &target, &neighbors)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let a = analytic.w_q[head][entry];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    println!("worst relative gradient error vs finite differences: {worst:.2e}");
    Ok(())
}
