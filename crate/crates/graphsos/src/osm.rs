//! Order selection: embed candidate serializations and the question,
//! cross-attend with the question as query, pick one candidate through a
//! Gumbel-softmax mask, and train the attention projections against a frozen
//! model's negative log-likelihood.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    apply_update, multihead_grad, multihead_weights, AttentionParams, WeightVector,
};
use crate::backend::LlmBackend;
use crate::bench::qa_prompt;
use crate::encoder::{Embedding, Encoder};
use crate::error::{Error, Result};
use crate::graph::TextGraph;
use crate::serialize::{
    default_kind, gen_orderings, serialize, SerializationKind, SerializedGraph,
};

/// `m` candidate serializations of one graph plus the question they will be
/// ranked against. All candidates parse back to the same graph.
#[derive(Debug, Clone)]
pub struct OrderCandidateSet {
    candidates: Vec<SerializedGraph>,
    pub question: String,
}

impl OrderCandidateSet {
    /// Wrap pre-rendered candidates, checking they all describe one graph.
    pub fn new(candidates: Vec<SerializedGraph>, question: impl Into<String>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("need at least one candidate".into()));
        }
        let first = crate::serialize::parse(&candidates[0].text, candidates[0].kind)?;
        for cand in &candidates[1..] {
            let parsed = crate::serialize::parse(&cand.text, cand.kind)?;
            if parsed != first {
                return Err(Error::InvalidParameter(
                    "candidates do not describe the same graph".into(),
                ));
            }
        }
        Ok(Self { candidates: candidates.clone(), question: question.into() })
    }

    /// Render `m` candidates of `graph` (candidate 0 is the identity
    /// ordering) for `question`.
    pub fn build(
        graph: &TextGraph,
        question: impl Into<String>,
        m: usize,
        seed: u64,
        kind: SerializationKind,
    ) -> Result<Self> {
        let candidates = gen_orderings(graph, m, seed)
            .iter()
            .map(|ordering| serialize(graph, ordering, kind))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { candidates, question: question.into() })
    }

    pub fn candidates(&self) -> &[SerializedGraph] {
        &self.candidates
    }

    pub fn m(&self) -> usize {
        self.candidates.len()
    }
}

/// A Gumbel-softmax draw: the soft relaxation and the hard argmax index.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelMask {
    pub soft: Vec<f64>,
    pub hard: usize,
    pub tau: f64,
}

/// Soft mask `softmax((logits + g) / tau)` with standard Gumbel noise
/// `g = -log(-log U)`; the hard index is the argmax with ties broken by
/// lowest index.
pub fn gumbel_softmax<R: Rng>(logits: &[f64], tau: f64, rng: &mut R) -> Result<GumbelMask> {
    if logits.is_empty() {
        return Err(Error::InvalidParameter("gumbel_softmax needs at least one logit".into()));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("gumbel_softmax logits".into()));
    }
    let perturbed: Vec<f64> = logits
        .iter()
        .map(|l| {
            let u: f64 = rng.gen::<f64>().max(1e-300);
            let g = -(-u.ln()).ln();
            (l + g) / tau
        })
        .collect();
    let max = perturbed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = perturbed.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let soft: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    let mut hard = 0;
    for (i, &s) in soft.iter().enumerate() {
        if s > soft[hard] {
            hard = i;
        }
    }
    Ok(GumbelMask { soft, hard, tau })
}

/// Cross-attend the question against the candidate texts and draw one
/// candidate: the Gumbel logits are the log of the attention weights. The
/// chosen text is byte-equal to one of the inputs.
pub fn select_order<'a, R: Rng>(
    cands: &'a OrderCandidateSet,
    params: &AttentionParams,
    encoder: &dyn Encoder,
    tau: f64,
    rng: &mut R,
) -> Result<(&'a SerializedGraph, GumbelMask, WeightVector)> {
    let question_emb = encoder.embed(&cands.question)?;
    let candidate_embs: Vec<Embedding> = cands
        .candidates
        .iter()
        .map(|c| encoder.embed(&c.text))
        .collect::<Result<_>>()?;
    let weights = multihead_weights(params, &question_emb, &candidate_embs)?;
    let logits: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mask = gumbel_softmax(&logits, tau, rng)?;
    Ok((&cands.candidates[mask.hard], mask, weights))
}

/// One training example: a graph, the question asked about it, and the
/// target answer whose likelihood the frozen model scores.
#[derive(Debug, Clone)]
pub struct OsmExample {
    pub graph: TextGraph,
    pub question: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsmTrainConfig {
    pub m: usize,
    pub tau: f64,
    pub steps: usize,
    pub lr: f64,
    /// Evaluate every candidate's NLL and descend the expected loss instead
    /// of the single-sample straight-through estimate, at m times the
    /// backend cost.
    pub exact_expectation: bool,
    /// Serialization kind override; the graph's natural kind when `None`.
    pub kind: Option<SerializationKind>,
    pub seed: u64,
    /// Backend attempts per NLL query before the step is skipped.
    pub max_attempts: u32,
}

impl Default for OsmTrainConfig {
    fn default() -> Self {
        Self {
            m: 10,
            tau: 0.5,
            steps: 300,
            lr: 32.0,
            exact_expectation: false,
            kind: None,
            seed: 0,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OsmTrainReport {
    pub params: AttentionParams,
    pub losses: Vec<f64>,
    /// Steps abandoned after repeated backend failures.
    pub skipped_steps: usize,
}

fn nll_with_retries(
    llm: &dyn LlmBackend,
    prompt: &str,
    target: &str,
    max_attempts: u32,
) -> Result<f64> {
    let mut last = None;
    for _ in 0..max_attempts.max(1) {
        match llm.score_nll(prompt, target) {
            Ok(nll) => return Ok(nll),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Train the order-selector attention against a frozen model.
///
/// Per step: build `m` candidates, select with straight-through Gumbel
/// (hard forward), query the model for the negative log-likelihood of the
/// target under the chosen prompt, and backpropagate through the soft mask
/// and the attention weights into the projections. The model itself never
/// changes. With `exact_expectation` the loss is `sum_i soft_i * nll_i`
/// over all candidates.
pub fn train_osm(
    params: AttentionParams,
    dataset: &[OsmExample],
    llm: &dyn LlmBackend,
    encoder: &dyn Encoder,
    cfg: &OsmTrainConfig,
) -> Result<OsmTrainReport> {
    if cfg.steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty training dataset".into()));
    }
    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut skipped_steps = 0usize;

    for step in 0..cfg.steps {
        let example = &dataset[step % dataset.len()];
        let kind = cfg.kind.unwrap_or_else(|| default_kind(&example.graph));
        let cands =
            OrderCandidateSet::build(&example.graph, &example.question, cfg.m, rng.gen(), kind)?;

        let question_emb = encoder.embed(&cands.question)?;
        let candidate_embs: Vec<Embedding> = cands
            .candidates
            .iter()
            .map(|c| encoder.embed(&c.text))
            .collect::<Result<_>>()?;
        let weights = multihead_weights(&params, &question_emb, &candidate_embs)?;
        let logits: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mask = gumbel_softmax(&logits, cfg.tau, &mut rng)?;

        // d(loss)/d(soft): the chosen candidate's NLL under the
        // straight-through estimator, the full NLL vector in exact mode.
        let mut d_soft = vec![0.0; cands.m()];
        let loss;
        if cfg.exact_expectation {
            let mut nlls = Vec::with_capacity(cands.m());
            let mut failed = false;
            for cand in cands.candidates() {
                let prompt = qa_prompt(&cand.text, &example.question);
                match nll_with_retries(llm, &prompt, &example.target, cfg.max_attempts) {
                    Ok(nll) => nlls.push(nll),
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                skipped_steps += 1;
                continue;
            }
            loss = mask.soft.iter().zip(&nlls).map(|(s, n)| s * n).sum();
            d_soft.copy_from_slice(&nlls);
        } else {
            let chosen = &cands.candidates()[mask.hard];
            let prompt = qa_prompt(&chosen.text, &example.question);
            match nll_with_retries(llm, &prompt, &example.target, cfg.max_attempts) {
                Ok(nll) => {
                    loss = nll;
                    d_soft[mask.hard] = nll;
                }
                Err(_) => {
                    skipped_steps += 1;
                    continue;
                }
            }
        }
        losses.push(loss);

        // Softmax Jacobian through the Gumbel relaxation, then through the
        // log into the attention weights.
        let mixed: f64 = d_soft.iter().zip(&mask.soft).map(|(d, s)| d * s).sum();
        let d_weights: Vec<f64> = mask
            .soft
            .iter()
            .zip(&d_soft)
            .zip(&weights)
            .map(|((s, d), w)| s * (d - mixed) / cfg.tau / w)
            .collect();

        let mut grads = multihead_grad(&params, &question_emb, &candidate_embs, &d_weights)?;
        let norm = grads.norm();
        if !grads.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite(format!("osm gradient at step {step}")));
        }
        if norm > 1.0 {
            grads.scale(1.0 / norm);
        }
        apply_update(&mut params, &grads, -cfg.lr);
    }

    Ok(OsmTrainReport { params, losses, skipped_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{BigramEmbedder, EncoderHandle};
    use crate::graph::{synth_planted_graph, NodeRecord};
    use crate::serialize::identity_ordering;

    #[test]
    fn single_logit_is_certain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mask = gumbel_softmax(&[0.7], 1.0, &mut rng).unwrap();
        assert_eq!(mask.soft, vec![1.0]);
        assert_eq!(mask.hard, 0);
    }

    #[test]
    fn uniform_logits_select_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = 10;
        let mut counts = vec![0usize; m];
        let draws = 100_000;
        for _ in 0..draws {
            let mask = gumbel_softmax(&[0.0; 10], 1.0, &mut rng).unwrap();
            counts[mask.hard] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.01, "index {i} frequency {freq}");
        }
    }

    #[test]
    fn dominant_logit_concentrates_at_low_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0;
        for _ in 0..1000 {
            let mask = gumbel_softmax(&[10.0, 0.0, 0.0], 0.1, &mut rng).unwrap();
            if mask.hard == 0 {
                hits += 1;
            }
        }
        assert!(hits >= 990, "hits={hits}");
    }

    #[test]
    fn soft_mask_is_a_distribution_consistent_with_hard() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mask = gumbel_softmax(&logits, 0.7, &mut rng).unwrap();
            assert!((mask.soft.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(mask.soft.iter().all(|&s| s >= 0.0));
            let argmax = mask
                .soft
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(mask.hard, argmax);
        }
    }

    #[test]
    fn tiny_tau_saturates_the_soft_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mask = gumbel_softmax(&logits, 1e-3, &mut rng).unwrap();
            assert!(mask.soft[mask.hard] >= 0.999, "max soft {}", mask.soft[mask.hard]);
        }
    }

    #[test]
    fn non_finite_logits_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            gumbel_softmax(&[f64::NAN, 0.0], 1.0, &mut rng),
            Err(Error::NonFinite(_))
        ));
    }

    fn qa_graph(seed: u64) -> TextGraph {
        synth_planted_graph(6, 2, 0.4, seed).unwrap()
    }

    #[test]
    fn sole_candidate_is_always_chosen() {
        let g = qa_graph(1);
        let cands = OrderCandidateSet::build(&g, "q", 1, 0, SerializationKind::FeatureEdge).unwrap();
        let params = AttentionParams::seeded(2, 16, 1).unwrap();
        let enc = EncoderHandle::builtin(16, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (chosen, mask, _) = select_order(&cands, &params, &enc, 0.5, &mut rng).unwrap();
        assert_eq!(mask.soft, vec![1.0]);
        assert_eq!(chosen.text, cands.candidates()[0].text);
    }

    #[test]
    fn identical_candidates_yield_uniform_weights() {
        let g = TextGraph::new(vec![NodeRecord::with_text(0, "only")], vec![]).unwrap();
        let cands = OrderCandidateSet::build(&g, "q", 4, 3, SerializationKind::FeatureEdge).unwrap();
        let params = AttentionParams::seeded(2, 16, 9).unwrap();
        let enc = EncoderHandle::builtin(16, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (chosen, _, weights) = select_order(&cands, &params, &enc, 0.5, &mut rng).unwrap();
        for w in &weights {
            assert!((w - 0.25).abs() < 1e-12);
        }
        assert_eq!(chosen.text, cands.candidates()[0].text);
    }

    #[test]
    fn chosen_text_is_byte_equal_to_an_input_and_parses_alike() {
        let g = qa_graph(2);
        let cands = OrderCandidateSet::build(&g, "q", 6, 8, SerializationKind::FeatureEdge).unwrap();
        let params = AttentionParams::seeded(4, 32, 4).unwrap();
        let enc = BigramEmbedder::new(32, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let reference = crate::serialize::parse(&cands.candidates()[0].text, cands.candidates()[0].kind).unwrap();
        for _ in 0..20 {
            let (chosen, _, _) = select_order(&cands, &params, &enc, 0.5, &mut rng).unwrap();
            assert!(cands.candidates().iter().any(|c| c.text == chosen.text));
            let parsed = crate::serialize::parse(&chosen.text, chosen.kind).unwrap();
            assert_eq!(parsed, reference);
        }
    }

    #[test]
    fn forced_weights_concentrate_selection() {
        // Table embeddings duplicate the question vector on candidate 0 and
        // spread the rest across orthogonal axes; scaled-identity
        // projections pin the weights near [0.97, 0.01, 0.01, 0.01].
        let g = TextGraph::new(
            (0..5).map(|i| NodeRecord::with_text(i, format!("t{i}"))).collect(),
            vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        )
        .unwrap();
        let orderings = gen_orderings(&g, 4, 5);
        let candidates: Vec<SerializedGraph> = orderings
            .iter()
            .map(|o| serialize(&g, o, SerializationKind::FeatureEdge).unwrap())
            .collect();
        let distinct: std::collections::BTreeSet<&str> =
            candidates.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(distinct.len(), 4, "seed must give four distinct renderings");

        let dim = 4;
        let basis = |i: usize| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            v
        };
        let mut table = vec![("the question".to_string(), basis(0))];
        table.extend(
            candidates
                .iter()
                .enumerate()
                .map(|(i, cand)| (cand.text.clone(), basis(i.min(dim - 1)))),
        );
        let enc = EncoderHandle::table(table).unwrap();

        let gamma = (97.0_f64.ln() * (dim as f64).sqrt()).sqrt();
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = gamma;
        }
        let params = AttentionParams { heads: 1, dim, w_q: vec![eye.clone()], w_k: vec![eye] };

        let cands = OrderCandidateSet::new(candidates, "the question").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (_, _, weights) = select_order(&cands, &params, &enc, 0.01, &mut rng).unwrap();
        assert!((weights[0] - 0.97).abs() < 0.01, "weights {weights:?}");

        let mut hits = 0;
        for _ in 0..1000 {
            let (_, mask, _) = select_order(&cands, &params, &enc, 0.01, &mut rng).unwrap();
            if mask.hard == 0 {
                hits += 1;
            }
        }
        assert!(hits >= 950, "hits={hits}");
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let dataset: Vec<OsmExample> = (0..4)
            .map(|i| OsmExample {
                graph: qa_graph(i),
                question: format!("What is the degree of node {i}?"),
                target: "0".into(),
            })
            .collect();
        let params = AttentionParams::seeded(2, 32, 3).unwrap();
        let enc = BigramEmbedder::new(32, 1);
        let llm = crate::backend::KtauMock::new(4.0, 0.25);
        let report = train_osm(
            params.clone(),
            &dataset,
            &llm,
            &enc,
            &OsmTrainConfig { m: 4, steps: 10, lr: 0.0, ..Default::default() },
        )
        .unwrap();
        assert_eq!(report.params, params);
        assert_eq!(report.losses.len(), 10);
    }

    #[test]
    fn constant_nll_keeps_selection_near_uniform() {
        let dataset: Vec<OsmExample> = (0..4)
            .map(|i| OsmExample {
                graph: qa_graph(10 + i),
                question: "What is the degree of node 0?".into(),
                target: "1".into(),
            })
            .collect();
        let params = AttentionParams::seeded(2, 32, 6).unwrap();
        let enc = BigramEmbedder::new(32, 2);
        // alpha = 0: the mock's NLL ignores ordering entirely.
        let llm = crate::backend::KtauMock::new(0.0, 0.5);
        let report = train_osm(
            params,
            &dataset,
            &llm,
            &enc,
            &OsmTrainConfig { m: 4, steps: 200, lr: 0.1, seed: 3, ..Default::default() },
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut counts = [0usize; 4];
        let draws = 2000;
        for i in 0..draws {
            let example = &dataset[i % dataset.len()];
            let cands = OrderCandidateSet::build(
                &example.graph,
                &example.question,
                4,
                rng.gen(),
                SerializationKind::FeatureEdge,
            )
            .unwrap();
            let (_, mask, _) =
                select_order(&cands, &report.params, &enc, 0.5, &mut rng).unwrap();
            counts[mask.hard] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() <= 0.05, "index {i} frequency {freq}");
        }
    }

    #[test]
    fn skipped_steps_count_backend_failures() {
        struct FailingLlm;
        impl LlmBackend for FailingLlm {
            fn complete(&self, _p: &str) -> Result<String> {
                Err(Error::Backend("down".into()))
            }
            fn score_nll(&self, _p: &str, _t: &str) -> Result<f64> {
                Err(Error::Backend("down".into()))
            }
        }
        let dataset = vec![OsmExample {
            graph: qa_graph(30),
            question: "q".into(),
            target: "t".into(),
        }];
        let params = AttentionParams::seeded(2, 16, 1).unwrap();
        let enc = EncoderHandle::builtin(16, 1);
        let report = train_osm(
            params,
            &dataset,
            &FailingLlm,
            &enc,
            &OsmTrainConfig { m: 2, steps: 5, ..Default::default() },
        )
        .unwrap();
        assert_eq!(report.skipped_steps, 5);
        assert!(report.losses.is_empty());
    }

    #[test]
    fn identity_serialization_of_candidates_is_candidate_zero() {
        let g = qa_graph(4);
        let cands = OrderCandidateSet::build(&g, "q", 5, 9, SerializationKind::FeatureEdge).unwrap();
        let identity = serialize(&g, &identity_ordering(&g), SerializationKind::FeatureEdge).unwrap();
        assert_eq!(cands.candidates()[0].text, identity.text);
    }
}
