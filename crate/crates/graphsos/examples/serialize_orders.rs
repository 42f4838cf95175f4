//! Rendering one graph under several element orderings, and parsing the
//! text back to verify that every ordering describes the same graph.
//!
//! Run with: cargo run --example serialize_orders

use anyhow::Result;

use graphsos::graph::{NodeRecord, TextGraph};
use graphsos::serialize::{gen_orderings, parse, serialize, SerializationKind};

fn main() -> Result<()> {
    let graph = TextGraph::new(
        vec![
            NodeRecord::with_text(0, "neural networks survey"),
            NodeRecord::with_text(1, "graph attention"),
            NodeRecord::with_text(2, "random walks"),
        ],
        vec![(0, 1), (0, 2)],
    )?;

    println!("feature + edge renderings under four orderings:");
    let mut parsed = Vec::new();
    for (i, ordering) in gen_orderings(&graph, 4, 11).iter().enumerate() {
        let rendered = serialize(&graph, ordering, SerializationKind::FeatureEdge)?;
        println!("  [{i}] {}", rendered.text);
        parsed.push(parse(&rendered.text, SerializationKind::FeatureEdge)?);
    }
    assert!(parsed.windows(2).all(|w| w[0] == w[1]));
    println!("all candidates parse back to the same graph\n");

    let bare = TextGraph::new(
        (0..4).map(NodeRecord::bare).collect(),
        vec![(0, 1), (1, 2), (2, 3), (3, 0)],
    )?;
    let rendered = serialize(
        &bare,
        &graphsos::serialize::identity_ordering(&bare),
        SerializationKind::EdgeOnly,
    )?;
    println!("bare graph:   {}", rendered.text);

    let kg = TextGraph::with_triples(
        Vec::new(),
        Vec::new(),
        vec![
            ("Lore".into(), "release_year".into(), "2012".into()),
            ("Lore".into(), "directed_by".into(), "Robert Kolodny".into()),
        ],
        false,
    )?;
    let rendered = serialize(
        &kg,
        &graphsos::serialize::identity_ordering(&kg),
        SerializationKind::TripleList,
    )?;
    println!("triple graph: {}", rendered.text);
    Ok(())
}
