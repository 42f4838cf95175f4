//! HTTP wire-contract tests against an in-process scripted server: the
//! scoring, likelihood, and chat request shapes, retry behavior, and the
//! bearer token injected from the environment.

mod common;

use common::TestServer;

use graphsos::backend::{
    ChatBackend, HttpChat, HttpLlm, HttpOracle, LlmBackend, ScoringOracle, BACKEND_TOKEN_ENV,
};
use graphsos::error::Error;
use graphsos::tuning::{distill, DistillConfig, DistillInput};

#[test]
fn oracle_speaks_the_text_logits_contract() {
    let server = TestServer::spawn(vec![(200, r#"{"logits":[0.0,1.0986122886681098]}"#.into())]);
    let oracle = HttpOracle::new(server.url.clone());
    let score = oracle.score("Edge List: [(0, 1)]").unwrap();
    assert!((score.p1 - 0.75).abs() < 1e-12);

    let requests = server.finish();
    let body: serde_json::Value = serde_json::from_str(&requests[0].body).unwrap();
    assert_eq!(body["text"], serde_json::json!("Edge List: [(0, 1)]"));
    assert_eq!(requests[0].header("content-type"), Some("application/json"));
}

#[test]
fn llm_speaks_the_prompt_target_nll_contract() {
    let server = TestServer::spawn(vec![(200, r#"{"nll":1.25}"#.into())]);
    let llm = HttpLlm::new(server.url.clone());
    let nll = llm.score_nll("some prompt", "the target").unwrap();
    assert_eq!(nll, 1.25);

    let requests = server.finish();
    let body: serde_json::Value = serde_json::from_str(&requests[0].body).unwrap();
    assert_eq!(body["prompt"], serde_json::json!("some prompt"));
    assert_eq!(body["target"], serde_json::json!("the target"));
}

#[test]
fn transient_server_errors_are_retried() {
    let server = TestServer::spawn(vec![
        (500, "oops".into()),
        (200, r#"{"logits":[0.0,0.0]}"#.into()),
    ]);
    let oracle = HttpOracle::new(server.url.clone());
    let score = oracle.score("Edge List: [(0, 1)]").unwrap();
    assert!((score.p1 - 0.5).abs() < 1e-12);
    assert_eq!(server.finish().len(), 2);
}

#[test]
fn exhausted_retries_report_the_attempt_count() {
    let oracle = HttpOracle::new(TestServer::dead_url());
    match oracle.score("Edge List: [(0, 1)]") {
        Err(Error::Http { retries, .. }) => assert_eq!(retries, 3),
        other => panic!("expected http error, got {other:?}"),
    }
}

#[test]
fn client_errors_fail_without_retry() {
    let server = TestServer::spawn(vec![(404, "missing".into())]);
    let llm = HttpLlm::new(server.url.clone());
    match llm.score_nll("p", "t") {
        Err(Error::Http { retries, .. }) => assert_eq!(retries, 1),
        other => panic!("expected http error, got {other:?}"),
    }
    assert_eq!(server.finish().len(), 1);
}

#[test]
fn distill_defaults_reach_the_wire_and_token_is_injected() {
    let chat_body = serde_json::json!({
        "choices": [{"message": {"role": "assistant",
            "content": "Analysis: a\nReasoning: b\nAnswer: c"}}]
    })
    .to_string();
    let server = TestServer::spawn(vec![(200, chat_body)]);

    std::env::set_var(BACKEND_TOKEN_ENV, "sekrit");
    let chat = HttpChat::new(server.url.clone());
    std::env::remove_var(BACKEND_TOKEN_ENV);

    let inputs = vec![DistillInput { prompt: "graph prompt".into(), sft_answer: "x".into() }];
    let report = distill(&inputs, &chat, &DistillConfig::default()).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.dropped, 0);

    let requests = server.finish();
    let body: serde_json::Value = serde_json::from_str(&requests[0].body).unwrap();
    assert_eq!(body["temperature"], serde_json::json!(0.9));
    assert_eq!(body["max_tokens"], serde_json::json!(512));
    assert_eq!(body["messages"][0]["role"], serde_json::json!("user"));
    assert_eq!(body["messages"][0]["content"], serde_json::json!("graph prompt"));
    assert_eq!(requests[0].header("authorization"), Some("Bearer sekrit"));
}

#[test]
fn chat_completion_for_answers_parses_choices() {
    let chat_body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "faculty"}}]
    })
    .to_string();
    let server = TestServer::spawn(vec![(200, chat_body)]);
    let llm = HttpLlm::new(server.url.clone());
    assert_eq!(llm.complete("who?").unwrap(), "faculty");
    server.finish();
}

#[test]
fn malformed_chat_reply_is_a_backend_error() {
    let server = TestServer::spawn(vec![(200, r#"{"choices":[]}"#.into())]);
    let chat = HttpChat::new(server.url.clone());
    let body = chat.send("{}").unwrap();
    assert!(matches!(
        graphsos::backend::extract_chat_content(&body),
        Err(Error::Backend(_))
    ));
    server.finish();
}
