//! Attention-guided random-walk sampling around a target node, with the
//! transition log that training consumes.
//!
//! Run with: cargo run --example subgraph_sampling

use anyhow::Result;

use graphsos::attention::AttentionParams;
use graphsos::encoder::EncoderHandle;
use graphsos::graph::synth_planted_graph;
use graphsos::serialize::{default_kind, identity_ordering, serialize};
use graphsos::ssm::{sample_subgraph, same_class_proportion, SampleConfig};

fn main() -> Result<()> {
    let graph = synth_planted_graph(60, 3, 0.4, 21)?;
    let labels = graph.label_assignment()?;
    let params = AttentionParams::seeded(4, 32, 2)?;
    let encoder = EncoderHandle::builtin(32, 1);

    let target = 5;
    let cfg = SampleConfig { n_max: 8, k: 2, restart: true, seed: 17 };
    let trace = sample_subgraph(&graph, target, &params, &encoder, &cfg)?;

    println!(
        "target {target} ({}), 2-hop neighborhood of {} nodes",
        labels.get(target).unwrap(),
        trace.neighborhood.len()
    );
    println!("walk transitions:");
    for step in &trace.steps {
        println!(
            "  {} -> {}  (weight index {}, log-prob {:.3})",
            step.from, step.chosen, step.weight_index, step.log_prob
        );
    }
    println!(
        "subgraph: {} nodes, {} edges, exhausted = {}",
        trace.subgraph.node_count(),
        trace.subgraph.edge_count(),
        trace.exhausted
    );
    if let Some(p) = same_class_proportion(&trace.subgraph, target, &labels) {
        println!("same-class proportion among sampled nodes: {p:.3}");
    }

    let rendered = serialize(
        &trace.subgraph,
        &identity_ordering(&trace.subgraph),
        default_kind(&trace.subgraph),
    )?;
    println!("\nserialized subgraph:\n{}", rendered.text);
    Ok(())
}
