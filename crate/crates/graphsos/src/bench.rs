//! Order-sensitivity benchmark harness: repeated trials with independently
//! permuted serializations against an answering backend, normalized answer
//! grading, and distribution statistics over per-trial accuracy.

use serde::Serialize;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionParams;
use crate::backend::LlmBackend;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::graph::TextGraph;
use crate::jsonl::GraphRecord;
use crate::osm::{select_order, OrderCandidateSet};
use crate::serialize::{
    default_kind, identity_ordering, random_ordering, serialize, SerializationKind,
};

/// One benchmark item: a graph, its question, and the gold answer.
#[derive(Debug, Clone)]
pub struct BenchExample {
    pub graph: TextGraph,
    pub question: String,
    pub gold: String,
}

impl BenchExample {
    /// Convert an interchange record; the question and answer fields are
    /// required here.
    pub fn from_record(record: GraphRecord) -> Result<Self> {
        let question = record
            .question
            .ok_or_else(|| Error::MissingAttribute("question".into()))?;
        let gold = record
            .answer
            .ok_or_else(|| Error::MissingAttribute("answer (gold)".into()))?;
        Ok(Self { graph: record.graph, question, gold })
    }
}

/// The plain answering prompt used by the harness and by order-selector
/// training.
pub fn qa_prompt(serialized_text: &str, question: &str) -> String {
    format!("{serialized_text}\nQuestion: {question}\nAnswer:")
}

/// How each example's ordering is produced.
pub enum OrderPolicy<'a> {
    /// One fresh uniform ordering per example per trial.
    Random,
    /// Route through the order selector with a trained checkpoint.
    Osm {
        params: &'a AttentionParams,
        encoder: &'a dyn Encoder,
        m: usize,
        tau: f64,
    },
}

pub struct BenchConfig<'a> {
    pub trials: usize,
    pub base_seed: u64,
    /// Serialization kind override; each graph's natural kind when `None`.
    pub kind: Option<SerializationKind>,
    /// Label set for grading; plain substring matching when `None`.
    pub labels: Option<Vec<String>>,
    /// Pin trial 0 to the identity ordering.
    pub pin_identity_first: bool,
    /// In-flight cap on backend calls within a trial; 1 runs sequentially.
    pub concurrency: usize,
    pub order: OrderPolicy<'a>,
}

impl Default for BenchConfig<'_> {
    fn default() -> Self {
        Self {
            trials: 10,
            base_seed: 0,
            kind: None,
            labels: None,
            pin_identity_first: false,
            concurrency: 1,
            order: OrderPolicy::Random,
        }
    }
}

/// Per-trial outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub flags: Vec<bool>,
    pub accuracy: f64,
    pub errors: usize,
}

/// Distribution statistics of per-trial accuracy. Standard deviation is the
/// population form; quartiles use linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub trials: Vec<TrialResult>,
    pub stats: TrialStats,
    pub backend_errors: usize,
}

/// Run `trials` independent passes over the dataset. Trial `t` derives all
/// of its randomness from `base_seed + t`, drawing one fresh ordering (or
/// one order-selector pass) per example; answers are graded against the
/// gold. Backend errors grade as incorrect and are counted separately.
pub fn run_order_trials(
    dataset: &[BenchExample],
    backend: &dyn LlmBackend,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty benchmark dataset".into()));
    }
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut backend_errors = 0usize;

    for t in 0..cfg.trials {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(cfg.base_seed.wrapping_add(t as u64));
        // Draw every per-example seed up front, in index order, so the
        // outcome does not depend on call interleaving.
        let seeds: Vec<(u64, u64)> =
            dataset.iter().map(|_| (trial_rng.gen(), trial_rng.gen())).collect();

        let pin_identity = cfg.pin_identity_first && t == 0;
        let prompts: Vec<Result<String>> = dataset
            .iter()
            .zip(&seeds)
            .map(|(example, &(order_seed, select_seed))| {
                let kind = cfg.kind.unwrap_or_else(|| default_kind(&example.graph));
                let text = if pin_identity {
                    serialize(&example.graph, &identity_ordering(&example.graph), kind)?.text
                } else {
                    match &cfg.order {
                        OrderPolicy::Random => {
                            serialize(&example.graph, &random_ordering(&example.graph, order_seed), kind)?
                                .text
                        }
                        OrderPolicy::Osm { params, encoder, m, tau } => {
                            let cands = OrderCandidateSet::build(
                                &example.graph,
                                &example.question,
                                *m,
                                order_seed,
                                kind,
                            )?;
                            let mut rng = ChaCha8Rng::seed_from_u64(select_seed);
                            let (chosen, _, _) = select_order(&cands, params, *encoder, *tau, &mut rng)?;
                            chosen.text.clone()
                        }
                    }
                };
                Ok(qa_prompt(&text, &example.question))
            })
            .collect();

        let answers = complete_all(backend, &prompts, cfg.concurrency);

        let mut flags = Vec::with_capacity(dataset.len());
        let mut errors = 0usize;
        for (example, answer) in dataset.iter().zip(answers) {
            match answer {
                Ok(response) => flags.push(grade_answer(
                    &response,
                    &example.gold,
                    cfg.labels.as_deref(),
                )),
                Err(_) => {
                    errors += 1;
                    flags.push(false);
                }
            }
        }
        let correct = flags.iter().filter(|&&f| f).count();
        backend_errors += errors;
        trials.push(TrialResult {
            trial: t,
            accuracy: correct as f64 / flags.len() as f64,
            flags,
            errors,
        });
    }

    let stats = summarize(&trials);
    Ok(BenchReport { trials, stats, backend_errors })
}

fn complete_all(
    backend: &dyn LlmBackend,
    prompts: &[Result<String>],
    concurrency: usize,
) -> Vec<Result<String>> {
    if concurrency > 1 {
        let mut out: Vec<Option<Result<String>>> = Vec::new();
        out.resize_with(prompts.len(), || None);
        std::thread::scope(|scope| {
            for (chunk_prompts, chunk_out) in
                prompts.chunks(concurrency).zip(out.chunks_mut(concurrency))
            {
                let mut handles = Vec::new();
                for prompt in chunk_prompts {
                    handles.push(scope.spawn(move || match prompt {
                        Ok(p) => backend.complete(p),
                        Err(e) => Err(Error::Backend(e.to_string())),
                    }));
                }
                for (handle, slot) in handles.into_iter().zip(chunk_out.iter_mut()) {
                    *slot = Some(handle.join().expect("bench worker panicked"));
                }
            }
        });
        out.into_iter().map(|s| s.expect("slot filled")).collect()
    } else {
        prompts
            .iter()
            .map(|prompt| match prompt {
                Ok(p) => backend.complete(p),
                Err(e) => Err(Error::Backend(e.to_string())),
            })
            .collect()
    }
}

fn normalize(s: &str) -> String {
    let lowered: String = s
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Grade a response against the gold answer. Both sides are lowercased,
/// punctuation-stripped, and whitespace-collapsed. With a label set the
/// response is correct iff the gold label occurs and no other label occurs
/// at an earlier position; without one, iff the normalized gold occurs as a
/// substring.
pub fn grade_answer(response: &str, gold: &str, labels: Option<&[String]>) -> bool {
    let response = normalize(response);
    let gold = normalize(gold);
    if gold.is_empty() {
        return false;
    }
    match labels {
        None => response.contains(&gold),
        Some(labels) => {
            let Some(gold_pos) = response.find(&gold) else {
                return false;
            };
            for label in labels {
                let label = normalize(label);
                if label == gold {
                    continue;
                }
                if let Some(pos) = response.find(&label) {
                    if pos < gold_pos {
                        return false;
                    }
                }
            }
            true
        }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Distribution statistics over the per-trial accuracies.
pub fn summarize(results: &[TrialResult]) -> TrialStats {
    let mut accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    accuracies.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let variance = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    TrialStats {
        mean,
        std: variance.sqrt(),
        min: accuracies[0],
        max: *accuracies.last().expect("non-empty"),
        q1: quantile(&accuracies, 0.25),
        median: quantile(&accuracies, 0.5),
        q3: quantile(&accuracies, 0.75),
    }
}

/// `trial,accuracy,errors` rows.
pub fn report_to_csv(report: &BenchReport) -> String {
    let mut out = String::from("trial,accuracy,errors\n");
    for trial in &report.trials {
        out.push_str(&format!("{},{:?},{}\n", trial.trial, trial.accuracy, trial.errors));
    }
    out
}
