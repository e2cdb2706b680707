use super::wire::WireRequest;
use super::{Granularity, Transport, TransportError};
use serde_json::json;
use std::time::Duration;

/// OpenAI-compatible HTTP backend (`{base}/completions`, `{base}/embeddings`).
pub struct HttpTransport {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::fatal(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn endpoint(&self) -> &str {
        &self.base_url
    }

    fn send(&self, request: &WireRequest, _subject: Option<&str>) -> Result<String, TransportError> {
        let (path, body) = match request {
            WireRequest::Completion(c) => ("completions", serde_json::to_value(c).expect("request serializes")),
            WireRequest::Embedding(e) => {
                let mut body = json!({ "model": e.model, "input": e.input });
                if e.granularity != Granularity::Pooled {
                    // non-standard extension understood by token-level encoder services
                    body["granularity"] = serde_json::to_value(e.granularity).expect("granularity serializes");
                }
                ("embeddings", body)
            }
        };
        let url = format!("{}/{}", self.base_url, path);
        let mut builder = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| TransportError::retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::retryable(e.to_string()))?;
        if status.is_success() {
            Ok(text)
        } else {
            let snippet: String = text.chars().take(300).collect();
            let message = format!("HTTP {status} from {url}: {snippet}");
            if status.is_server_error() || status.as_u16() == 429 {
                Err(TransportError::retryable(message))
            } else {
                Err(TransportError::fatal(message))
            }
        }
    }
}
