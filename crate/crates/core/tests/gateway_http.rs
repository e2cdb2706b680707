use codeqe_core::gateway::{BackendConfig, Gateway, GatewayError, Granularity, RetryPolicy, Role};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

type Handler = dyn Fn(usize, &Seen) -> (u16, String) + Send + Sync;

/// One-request-per-connection HTTP server answering from `handler`.
fn serve(handler: Arc<Handler>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let (mut length, mut authorization) = (0usize, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            let entry = Seen { path, authorization, body: serde_json::from_slice(&body).unwrap_or(Value::Null) };
            let n = {
                let mut log = log.lock().unwrap();
                log.push(entry.clone());
                log.len()
            };
            let (status, reply) = handler(n, &entry);
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (base, seen)
}

fn backend(role: Role, endpoint: &str) -> BackendConfig {
    BackendConfig {
        endpoint: endpoint.to_string(),
        retry: RetryPolicy { attempts: 3, base_delay_ms: 1 },
        ..BackendConfig::stub(role, "remote-model")
    }
}

fn yes_no_body(yes: f64, no: f64) -> String {
    json!({"choices": [{"index": 0, "text": " yes", "logprobs": {
        "tokens": [" yes"], "token_logprobs": [yes],
        "top_logprobs": [{" yes": yes, " No": no, "maybe": -5.0}]}}]})
    .to_string()
}

#[test]
fn predictor_reads_first_position_logprobs() {
    let (base, seen) = serve(Arc::new(|_, _| (200, yes_no_body(-0.1, -2.3))));
    std::env::set_var("CODEQE_TEST_KEY", "sekret");
    let cfg = BackendConfig { api_key_env: Some("CODEQE_TEST_KEY".into()), ..backend(Role::Predictor, &base) };
    let g = Gateway::from_config(cfg).unwrap();
    let post = g.yes_no_posterior("Is it correct?", None).unwrap();
    assert!((post.p_yes - 0.900).abs() < 1e-3);
    assert!(!post.fallback_used);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/completions");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sekret"));
    let body = &seen[0].body;
    assert_eq!(body["model"], "remote-model");
    assert_eq!(body["prompt"], "Is it correct?");
    assert_eq!(body["max_tokens"], 1);
    assert_eq!(body["logprobs"], 5);
}

#[test]
fn embeddings_pooled_and_per_token() {
    let (base, seen) = serve(Arc::new(|_, req: &Seen| {
        let body = if req.body.get("granularity").is_some() {
            json!({"data": [{"embedding": [[3.0, 4.0], [0.0, 2.0]]}]})
        } else {
            json!({"data": [{"embedding": [3.0, 4.0]}]})
        };
        (200, body.to_string())
    }));
    let g = Gateway::from_config(backend(Role::Encoder, &base)).unwrap();
    let pooled = g.embed("def f(): pass", Granularity::Pooled).unwrap();
    assert_eq!(pooled.vectors, vec![vec![0.6, 0.8]]);
    let tokens = g.embed("def f(): pass", Granularity::PerToken).unwrap();
    assert_eq!(tokens.vectors, vec![vec![0.6, 0.8], vec![0.0, 1.0]]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body, json!({"model": "remote-model", "input": "def f(): pass"}));
    assert_eq!(seen[1].body["granularity"], "per_token");
}

#[test]
fn server_errors_are_retried() {
    let (base, seen) = serve(Arc::new(|n, _| if n < 3 { (503, "busy".into()) } else { (200, yes_no_body(-1.0, -1.0)) }));
    let g = Gateway::from_config(backend(Role::Predictor, &base)).unwrap();
    assert_eq!(g.yes_no_posterior("p", None).unwrap().p_yes, 0.5);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = serve(Arc::new(|_, _| (400, "{\"error\":\"bad model\"}".into())));
    let g = Gateway::from_config(backend(Role::Predictor, &base)).unwrap();
    match g.yes_no_posterior("p", None) {
        Err(GatewayError::Remote { attempts, message, .. }) => {
            assert_eq!(attempts, 1);
            assert!(message.contains("400") && message.contains("bad model"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_reports_url_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let base = format!("http://127.0.0.1:{port}/v1");
    let g = Gateway::from_config(backend(Role::Predictor, &base)).unwrap();
    match g.yes_no_posterior("p", None) {
        Err(e @ GatewayError::Remote { attempts: 3, .. }) => assert!(e.to_string().contains(&base), "{e}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn responses_without_yes_or_no_are_errors() {
    let body = json!({"choices": [{"index": 0, "text": "maybe", "logprobs": {
        "tokens": ["maybe"], "token_logprobs": [-0.1], "top_logprobs": [{"maybe": -0.1, "perhaps": -3.0}]}}]})
    .to_string();
    let (base, _) = serve(Arc::new(move |_, _| (200, body.clone())));
    let g = Gateway::from_config(backend(Role::Predictor, &base)).unwrap();
    assert!(matches!(g.yes_no_posterior("p", None), Err(GatewayError::NoYesNoClass)));
}

#[test]
fn disk_cache_avoids_repeat_requests() {
    let (base, seen) = serve(Arc::new(|_, _| (200, yes_no_body(-0.5, -1.5))));
    let cache = tempfile::tempdir().unwrap();
    let cfg = BackendConfig { cache_dir: Some(cache.path().to_path_buf()), ..backend(Role::Predictor, &base) };
    let first = Gateway::from_config(cfg.clone()).unwrap().yes_no_posterior("same prompt", None).unwrap();
    let g = Gateway::from_config(cfg).unwrap();
    let second = g.yes_no_posterior("same prompt", None).unwrap();
    assert_eq!(first, second);
    assert_eq!(g.cache().hits(), 1);
    assert_eq!(seen.lock().unwrap().len(), 1);
}
