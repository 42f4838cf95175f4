//! Edge homophily on hand-built and planted synthetic graphs.
//!
//! Run with: cargo run --example homophily_metrics

use anyhow::Result;

use graphsos::graph::{
    edge_homophily, k_hop_neighborhood, synth_planted_graph, NodeRecord, TextGraph,
};

fn main() -> Result<()> {
    let triangle = TextGraph::new(
        (0..3)
            .map(|i| NodeRecord::labeled(i, format!("paper {i}"), "ml"))
            .collect(),
        vec![(0, 1), (0, 2), (1, 2)],
    )?;
    let labels = triangle.label_assignment()?;
    println!(
        "triangle, one class            -> edge homophily {:.2}",
        edge_homophily(&triangle, &labels)?
    );

    for target in [0.9, 0.5, 0.25] {
        let graph = synth_planted_graph(200, 4, target, 7)?;
        let labels = graph.label_assignment()?;
        let measured = edge_homophily(&graph, &labels)?;
        println!(
            "planted n=200 classes=4 target {target:.2} -> measured {measured:.3} \
             ({} nodes, {} edges)",
            graph.node_count(),
            graph.edge_count()
        );
    }

    let graph = synth_planted_graph(200, 4, 0.25, 7)?;
    let hop1 = k_hop_neighborhood(&graph, 0, 1)?;
    let hop2 = k_hop_neighborhood(&graph, 0, 2)?;
    println!(
        "node 0 neighborhood sizes: 1-hop {} nodes, 2-hop {} nodes",
        hop1.len(),
        hop2.len()
    );
    Ok(())
}
