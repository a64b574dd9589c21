//! HTTP backend speaking the OpenAI-style chat/embeddings JSON shape.
//!
//! Requests go to `<role url>/chat/completions` and
//! `<embedding url>/embeddings`. The API key is read from the
//! environment variable named in the gateway config and sent as a
//! bearer token. 429 and 5xx responses and transport failures are
//! transient (retried by the gateway); other non-2xx responses are
//! terminal.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, EndpointConfig, GatewayConfig, ModelRole, Transport, TransportError};
use crate::error::{Error, Result};

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    roles: BTreeMap<ModelRole, EndpointConfig>,
    embedding: Option<EndpointConfig>,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: String,
}

#[derive(Serialize)]
struct WireEmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct WireEmbeddingResponse {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    embedding: Vec<f64>,
}

impl HttpTransport {
    pub fn from_config(config: &GatewayConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::gateway(format!("cannot build http client: {e}")))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(HttpTransport {
            client,
            roles: config.roles.clone(),
            embedding: config.embedding.clone(),
            api_key,
        })
    }

    fn post_json<T: Serialize>(
        &self,
        url: &str,
        body: &T,
    ) -> std::result::Result<String, TransportError> {
        let mut request = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| TransportError::Transient(format!("transport: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| TransportError::Transient(format!("read body: {e}")))?;
        if status.is_success() {
            Ok(text)
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(TransportError::Transient(format!("status {status}: {text}")))
        } else {
            Err(TransportError::Terminal(format!("status {status}: {text}")))
        }
    }
}

impl Transport for HttpTransport {
    fn chat(&self, request: &ChatRequest) -> std::result::Result<String, TransportError> {
        let endpoint = self.roles.get(&request.role).ok_or_else(|| {
            TransportError::Terminal(format!(
                "no endpoint configured for role {}",
                request.role.as_str()
            ))
        })?;
        let url = format!("{}/chat/completions", endpoint.url.trim_end_matches('/'));
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(WireMessage {
                role: "system",
                content: &request.system,
            });
        }
        messages.push(WireMessage {
            role: "user",
            content: &request.user,
        });
        let body = WireChatRequest {
            model: &endpoint.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let text = self.post_json(&url, &body)?;
        let parsed: WireChatResponse = serde_json::from_str(&text)
            .map_err(|e| TransportError::Terminal(format!("malformed chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Terminal("chat response had no choices".into()))
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, TransportError> {
        let endpoint = self.embedding.as_ref().ok_or_else(|| {
            TransportError::Terminal("no embedding endpoint configured".into())
        })?;
        let url = format!("{}/embeddings", endpoint.url.trim_end_matches('/'));
        let body = WireEmbeddingRequest {
            model: &endpoint.model,
            input: texts,
        };
        let text = self.post_json(&url, &body)?;
        let parsed: WireEmbeddingResponse = serde_json::from_str(&text).map_err(|e| {
            TransportError::Terminal(format!("malformed embedding response: {e}"))
        })?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server returning a canned response.
    fn serve_once(status: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let trimmed = line.trim();
                if let Some(v) = trimmed.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                if trimmed.is_empty() {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            let response = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        format!("http://{addr}")
    }

    fn config_with(url: String) -> GatewayConfig {
        let endpoint = EndpointConfig {
            url,
            model: "test-model".into(),
        };
        GatewayConfig {
            mock: false,
            roles: [(ModelRole::Tagger, endpoint.clone())].into_iter().collect(),
            embedding: Some(endpoint),
            timeout_ms: 2_000,
            ..GatewayConfig::default()
        }
    }

    #[test]
    fn chat_round_trip_parses_the_first_choice() {
        let url = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"tagged"}}]}"#,
        );
        let transport = HttpTransport::from_config(&config_with(url)).unwrap();
        let req = ChatRequest::new(ModelRole::Tagger, "sys", "hello");
        assert_eq!(transport.chat(&req).unwrap(), "tagged");
    }

    #[test]
    fn embeddings_round_trip() {
        let url = serve_once(
            "200 OK",
            r#"{"data":[{"embedding":[0.1,0.2]},{"embedding":[0.3,0.4]}]}"#,
        );
        let transport = HttpTransport::from_config(&config_with(url)).unwrap();
        let out = transport
            .embed(&["a".to_string(), "b".to_string()])
            .unwrap();
        assert_eq!(out, vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
    }

    #[test]
    fn client_errors_are_terminal_and_server_errors_transient() {
        let url = serve_once("400 Bad Request", r#"{"error":"nope"}"#);
        let transport = HttpTransport::from_config(&config_with(url)).unwrap();
        let req = ChatRequest::new(ModelRole::Tagger, "", "x");
        match transport.chat(&req) {
            Err(TransportError::Terminal(_)) => {}
            other => panic!("expected terminal error, got {other:?}"),
        }

        let url = serve_once("500 Internal Server Error", "oops");
        let transport = HttpTransport::from_config(&config_with(url)).unwrap();
        match transport.chat(&req) {
            Err(TransportError::Transient(_)) => {}
            other => panic!("expected transient error, got {other:?}"),
        }
    }

    #[test]
    fn missing_role_endpoint_is_terminal() {
        let transport = HttpTransport::from_config(&config_with("http://unused".into())).unwrap();
        let req = ChatRequest::new(ModelRole::Judge, "", "x");
        match transport.chat(&req) {
            Err(TransportError::Terminal(m)) => assert!(m.contains("judge")),
            other => panic!("expected terminal error, got {other:?}"),
        }
    }
}
