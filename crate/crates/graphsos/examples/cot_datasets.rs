//! Two-step answer prompts, distillation through a (mock) chat endpoint,
//! preference-pair assembly, and the supervised/preference losses.
//!
//! Run with: cargo run --example cot_datasets

use anyhow::Result;

use graphsos::backend::MockChat;
use graphsos::graph::{NodeRecord, TextGraph};
use graphsos::serialize::SerializationKind;
use graphsos::tuning::{
    build_cot_prompt, build_dpo_dataset, distill, dpo_loss, sft_loss, write_dpo_jsonl,
    write_sft_jsonl, DistillConfig, DistillInput, TokenLogProbs,
};

fn main() -> Result<()> {
    let graph = TextGraph::new(
        vec![
            NodeRecord::labeled(0, "reinforcement learning for robots", "robotics"),
            NodeRecord::labeled(1, "policy gradients in control", "robotics"),
            NodeRecord::labeled(2, "protein folding networks", "biology"),
        ],
        vec![(0, 1), (0, 2)],
    )?;

    let prompt = build_cot_prompt(&graph, "What class is node 0?", SerializationKind::FeatureEdge)?;
    println!("prompt:\n{prompt}\n");

    let inputs = vec![
        DistillInput { prompt: prompt.clone(), sft_answer: "robotics".into() },
        DistillInput {
            prompt: build_cot_prompt(&graph, "What class is node 2?", SerializationKind::FeatureEdge)?,
            sft_answer: "biology".into(),
        },
    ];
    let chat = MockChat::new();
    let report = distill(&inputs, &chat, &DistillConfig::default())?;
    println!(
        "distilled {} record(s), dropped {}; first two-step answer:\n{}\n",
        report.records.len(),
        report.dropped,
        report.records[0].cot_answer
    );

    let dpo = build_dpo_dataset(&report.records);
    println!("built {} preference pair(s), skipped {}", dpo.pairs.len(), dpo.skipped);

    let dir = std::env::temp_dir().join("graphsos_cot_example");
    std::fs::create_dir_all(&dir)?;
    let sft_path = dir.join("sft.jsonl");
    let dpo_path = dir.join("dpo.jsonl");
    write_sft_jsonl(&sft_path, inputs.iter().map(|i| (i.prompt.as_str(), i.sft_answer.as_str())))?;
    write_dpo_jsonl(&dpo_path, &dpo.pairs)?;
    println!("wrote {} and {}\n", sft_path.display(), dpo_path.display());

    // The loss functions over externally supplied log-probabilities.
    let batch = vec![
        TokenLogProbs::new(vec![-0.5, -0.25])?,
        TokenLogProbs::new(vec![-0.1, -0.2, -0.05])?,
    ];
    println!("sft loss over 2 examples: {:.4}", sft_loss(&batch)?);
    println!("dpo loss at zero margin:  {:.4} (= ln 2)", dpo_loss(-4.0, -4.0, -9.0, -9.0, 0.1));
    println!(
        "dpo loss, winner 1 nat ahead at beta=0.1: {:.4}",
        dpo_loss(-4.0, -5.0, -9.0, -9.0, 0.1)
    );
    Ok(())
}
