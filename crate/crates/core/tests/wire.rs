use std::path::PathBuf;
use std::time::Duration;

use famicom::backend::{embed_token, generate, score_tokens, Backend, GenerationRequest, HttpBackend, HttpConfig};
use famicom::Error;
use serde_json::Value;

#[path = "support/wire_server.rs"]
mod wire_server;

use wire_server::{closed_port_url, Canned, WireServer};

fn fixture(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/http")
        .join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn backend(url: &str) -> HttpBackend {
    let mut config = HttpConfig::new(url, "tiny-lm");
    config.backoff_base = Duration::from_millis(5);
    config.timeout = Duration::from_secs(5);
    HttpBackend::new(config).unwrap()
}

fn serve(fx: &Value) -> WireServer {
    WireServer::start(vec![Canned::ok(fx["response"].to_string())])
}

fn assert_request(server: &WireServer, fx: &Value) {
    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].method, "POST");
    assert_eq!(requests[0].path, fx["path"].as_str().unwrap());
    assert_eq!(requests[0].body, fx["request"].as_str().unwrap());
}

#[test]
fn completions_round_trip() {
    let fx = fixture("completions.json");
    let server = serve(&fx);
    let scored = score_tokens(fx["input"]["text"].as_str().unwrap(), &backend(&server.url())).unwrap();
    assert_request(&server, &fx);
    let texts: Vec<&str> = scored.tokens.iter().map(|t| t.token_text.as_str()).collect();
    let expected: Vec<&str> = fx["expected"]["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(texts, expected);
    let logprobs: Vec<f64> = scored.logprobs().collect();
    let expected: Vec<f64> = fx["expected"]["logprobs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(logprobs, expected);
    assert_eq!(scored.model_id, "tiny-lm");
}

#[test]
fn embeddings_round_trip() {
    let fx = fixture("embeddings.json");
    let server = serve(&fx);
    let e = embed_token(fx["input"]["text"].as_str().unwrap(), &backend(&server.url())).unwrap();
    assert_request(&server, &fx);
    let expected = fx["expected"]["values"].as_array().unwrap();
    assert_eq!(e.dim, 3);
    for (got, want) in e.values.iter().zip(expected) {
        assert!((got - want.as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn chat_round_trip() {
    let fx = fixture("chat.json");
    let server = serve(&fx);
    let input = &fx["input"];
    let request = GenerationRequest::new(input["prompt"].as_str().unwrap())
        .with_temperature(input["temperature"].as_f64().unwrap())
        .with_max_tokens(input["max_tokens"].as_u64().unwrap() as u32)
        .with_seed(input["seed"].as_u64().unwrap());
    let g = generate(&request, &backend(&server.url())).unwrap();
    assert_request(&server, &fx);
    assert_eq!(g.text, fx["expected"]["text"].as_str().unwrap());
    assert_eq!(g.truncated, fx["expected"]["truncated"].as_bool().unwrap());
}

#[test]
fn trailing_v1_in_base_url_is_accepted() {
    let fx = fixture("embeddings.json");
    let server = serve(&fx);
    let url = format!("{}/v1/", server.url());
    embed_token(" cat", &backend(&url)).unwrap();
    assert_request(&server, &fx);
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let fx = fixture("chat.json");
    let server = WireServer::start(vec![
        Canned::status(503, "{}"),
        Canned::status(429, "{}"),
        Canned::ok(fx["response"].to_string()),
    ]);
    let b = backend(&server.url());
    let g = generate(&GenerationRequest::new("hi"), &b).unwrap();
    assert_eq!(g.attempts, 3);
    assert_eq!(b.attempts_made(), 3);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let server = WireServer::start(vec![]);
    let b = backend(&server.url());
    let err = generate(&GenerationRequest::new("hi"), &b).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { attempts: 3, .. }), "{err}");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn unreachable_backend_is_unavailable_after_three_attempts() {
    let b = backend(&closed_port_url());
    let err = b.score("a b").unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { attempts: 3, .. }), "{err}");
    assert_eq!(b.attempts_made(), 3);
}

#[test]
fn rejected_scoring_request_means_unsupported() {
    let server = WireServer::start(vec![Canned::status(400, "{\"error\":\"echo not supported\"}")]);
    let err = score_tokens("a b", &backend(&server.url())).unwrap_err();
    assert!(matches!(err, Error::ScoringUnsupported(_)), "{err}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn response_without_logprobs_means_unsupported() {
    let server = WireServer::start(vec![Canned::ok(r#"{"choices":[{"text":"a b"}]}"#)]);
    let err = score_tokens("a b", &backend(&server.url())).unwrap_err();
    assert!(matches!(err, Error::ScoringUnsupported(_)), "{err}");
}

#[test]
fn embed_model_override_is_sent() {
    let fx = fixture("embeddings.json");
    let server = serve(&fx);
    let mut config = HttpConfig::new(server.url(), "tiny-lm");
    config.embed_model = Some("tiny-embed".into());
    let b = HttpBackend::new(config).unwrap();
    embed_token(" cat", &b).unwrap();
    let body: Value = serde_json::from_str(&server.requests()[0].body).unwrap();
    assert_eq!(body["model"], "tiny-embed");
}
