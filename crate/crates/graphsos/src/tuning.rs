//! Two-step answer prompts, distillation through a chat endpoint, and the
//! supervised/preference loss functions evaluated over supplied token
//! log-probabilities. No model inference happens in-process: the losses
//! consume externally computed values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{extract_chat_content, ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::graph::TextGraph;
use crate::serialize::{identity_ordering, serialize, SerializationKind};

pub const ANALYSIS_MARKER: &str = "Analysis:";
pub const REASONING_MARKER: &str = "Reasoning:";
pub const ANSWER_MARKER: &str = "Answer:";

/// A prompt with its plain answer and its two-step answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CotRecord {
    pub prompt: String,
    /// The label/answer alone.
    pub sft_answer: String,
    /// Analysis step, then reasoning step, then the answer.
    pub cot_answer: String,
}

impl CotRecord {
    /// Check the section-marker invariant: `Analysis:` then `Reasoning:` in
    /// order, both answers non-empty.
    pub fn validate(&self) -> Result<()> {
        if self.sft_answer.is_empty() || self.cot_answer.is_empty() {
            return Err(Error::Format("record with an empty answer".into()));
        }
        let analysis = self
            .cot_answer
            .find(ANALYSIS_MARKER)
            .ok_or_else(|| Error::Format("cot answer lacks the analysis marker".into()))?;
        let reasoning = self
            .cot_answer
            .find(REASONING_MARKER)
            .ok_or_else(|| Error::Format("cot answer lacks the reasoning marker".into()))?;
        if reasoning < analysis {
            return Err(Error::Format("cot answer markers out of order".into()));
        }
        Ok(())
    }
}

/// A preference triple: prompt, winning answer, losing answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub prompt: String,
    #[serde(rename = "chosen")]
    pub winning: String,
    #[serde(rename = "rejected")]
    pub losing: String,
}

/// Per-token log-probabilities of an answer under one policy; all entries
/// finite and non-positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs(Vec<f64>);

impl TokenLogProbs {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite("token log-probability".into()));
            }
            if v > 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "log-probability {v} is positive"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Deterministic two-step prompt: the serialized graph (identity ordering),
/// the question, then the instruction to analyze before reasoning.
pub fn build_cot_prompt(
    graph: &TextGraph,
    question: &str,
    kind: SerializationKind,
) -> Result<String> {
    let serialized = serialize(graph, &identity_ordering(graph), kind)?;
    Ok(format!(
        "{}\nQuestion: {}\nFirst analyze the graph's features and structure under 'Analysis:', \
         then derive the answer under 'Reasoning:', ending with 'Answer:'.",
        serialized.text, question
    ))
}

/// A prompt awaiting distillation, with its plain answer already known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistillInput {
    pub prompt: String,
    pub sft_answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    /// In-flight request cap; 1 runs sequentially.
    pub concurrency: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { temperature: 0.9, max_tokens: 512, concurrency: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct DistillReport {
    pub records: Vec<CotRecord>,
    /// Completions dropped after failing the section-marker check twice.
    pub dropped: usize,
}

fn distill_one(
    input: &DistillInput,
    chat: &dyn ChatBackend,
    cfg: &DistillConfig,
) -> Result<Option<CotRecord>> {
    for _ in 0..2 {
        let body = serde_json::to_string(&ChatRequest::user(
            &input.prompt,
            cfg.temperature,
            cfg.max_tokens,
        ))?;
        let content = extract_chat_content(&chat.send(&body)?)?;
        let record = CotRecord {
            prompt: input.prompt.clone(),
            sft_answer: input.sft_answer.clone(),
            cot_answer: content,
        };
        if record.validate().is_ok() {
            return Ok(Some(record));
        }
    }
    Ok(None)
}

/// Request one completion per prompt at the configured temperature and token
/// cap; completions failing the section-marker invariant are retried once
/// and then dropped. Transport failures (after the chat backend's own
/// retries) abort the run.
pub fn distill(
    inputs: &[DistillInput],
    chat: &dyn ChatBackend,
    cfg: &DistillConfig,
) -> Result<DistillReport> {
    let results: Vec<Result<Option<CotRecord>>> = if cfg.concurrency > 1 {
        let mut slots: Vec<Option<Result<Option<CotRecord>>>> = Vec::new();
        slots.resize_with(inputs.len(), || None);
        std::thread::scope(|scope| {
            for (chunk_inputs, chunk_slots) in inputs
                .chunks(cfg.concurrency)
                .zip(slots.chunks_mut(cfg.concurrency))
            {
                let mut handles = Vec::new();
                for input in chunk_inputs {
                    handles.push(scope.spawn(move || distill_one(input, chat, cfg)));
                }
                for (handle, slot) in handles.into_iter().zip(chunk_slots.iter_mut()) {
                    *slot = Some(handle.join().expect("distill worker panicked"));
                }
            }
        });
        slots.into_iter().map(|s| s.expect("slot filled")).collect()
    } else {
        inputs.iter().map(|input| distill_one(input, chat, cfg)).collect()
    };

    let mut records = Vec::new();
    let mut dropped = 0;
    for result in results {
        match result? {
            Some(record) => records.push(record),
            None => dropped += 1,
        }
    }
    Ok(DistillReport { records, dropped })
}

/// Negative sum of all token log-probabilities across the batch.
pub fn sft_loss(batch: &[TokenLogProbs]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("sft_loss over an empty batch".into()));
    }
    Ok(-batch.iter().map(TokenLogProbs::total).sum::<f64>())
}

/// `softplus(x) = ln(1 + e^x)`, stable for large |x|.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Preference loss `-log sigmoid(beta * margin)` where the margin is
/// `(lw_theta - lw_ref) - (ll_theta - ll_ref)` over total answer log-probs.
pub fn dpo_loss(lw_theta: f64, lw_ref: f64, ll_theta: f64, ll_ref: f64, beta: f64) -> f64 {
    let margin = (lw_theta - lw_ref) - (ll_theta - ll_ref);
    softplus(-beta * margin)
}

#[derive(Debug, Clone)]
pub struct DpoBuildReport {
    pub pairs: Vec<PreferenceRecord>,
    /// Records skipped for a missing answer or identical answers.
    pub skipped: usize,
}

/// One preference pair per record: the two-step answer wins, the plain
/// answer loses. Records violating `winning != losing` (or missing either
/// answer) are skipped and counted.
pub fn build_dpo_dataset(records: &[CotRecord]) -> DpoBuildReport {
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for record in records {
        if record.sft_answer.is_empty()
            || record.cot_answer.is_empty()
            || record.sft_answer == record.cot_answer
        {
            skipped += 1;
            continue;
        }
        pairs.push(PreferenceRecord {
            prompt: record.prompt.clone(),
            winning: record.cot_answer.clone(),
            losing: record.sft_answer.clone(),
        });
    }
    DpoBuildReport { pairs, skipped }
}

#[derive(Serialize)]
struct SftRow<'a> {
    prompt: &'a str,
    answer: &'a str,
}

/// Write `{"prompt", "answer"}` lines.
pub fn write_sft_jsonl<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<()> {
    let mut out = String::new();
    for (prompt, answer) in rows {
        out.push_str(&serde_json::to_string(&SftRow { prompt, answer })?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write `{"prompt", "chosen", "rejected"}` lines.
pub fn write_dpo_jsonl(path: impl AsRef<Path>, pairs: &[PreferenceRecord]) -> Result<()> {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
