//! Selecting one of m candidate orderings by cross-attending the question
//! against candidate embeddings, with the Gumbel-softmax mask in view.
//!
//! Run with: cargo run --example order_selection

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use graphsos::attention::AttentionParams;
use graphsos::encoder::BigramEmbedder;
use graphsos::graph::synth_planted_graph;
use graphsos::osm::{gumbel_softmax, select_order, OrderCandidateSet};
use graphsos::serialize::SerializationKind;

fn main() -> Result<()> {
    // Gumbel-softmax at three temperatures over the same logits.
    let logits = vec![1.2, 0.3, -0.5, 0.0];
    for tau in [2.0, 0.5, 0.05] {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mask = gumbel_softmax(&logits, tau, &mut rng)?;
        let soft: Vec<String> = mask.soft.iter().map(|s| format!("{s:.3}")).collect();
        println!("tau {tau:>4}: hard index {} soft [{}]", mask.hard, soft.join(", "));
    }

    // Candidate selection for a question.
    let graph = synth_planted_graph(6, 2, 0.4, 3)?;
    let cands = OrderCandidateSet::build(
        &graph,
        "What is the degree of node 2?",
        5,
        8,
        SerializationKind::FeatureEdge,
    )?;
    let params = AttentionParams::seeded(4, 64, 2)?;
    let encoder = BigramEmbedder::new(64, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (chosen, mask, weights) = select_order(&cands, &params, &encoder, 0.5, &mut rng)?;

    println!("\nattention weights over {} candidates:", cands.m());
    for (i, w) in weights.iter().enumerate() {
        let marker = if i == mask.hard { " <- chosen" } else { "" };
        println!("  [{i}] {w:.4}{marker}");
    }
    println!("\nchosen rendering:\n{}", chosen.text);
    Ok(())
}
