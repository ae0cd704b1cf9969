//! Adapter for OpenAI-compatible chat completion endpoints.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::adapter::{AdapterError, LlmAdapter};
use super::prompt::RegulatedPrompt;

/// Environment variable holding the endpoint credential.
pub const API_KEY_ENV: &str = "DELIB_LLM_API_KEY";

#[derive(Clone, Debug)]
pub struct HttpAdapter {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl HttpAdapter {
    /// `endpoint` is the full chat-completions URL.
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, AdapterError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AdapterError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            temperature: 0.0,
        })
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(endpoint: &str, model: &str, timeout: Duration) -> Result<Self, AdapterError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(endpoint, model, key, timeout)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

impl LlmAdapter for HttpAdapter {
    fn complete(&self, prompt: &RegulatedPrompt) -> Result<String, AdapterError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_directives},
                {"role": "user", "content": prompt.render_user()},
            ],
        });
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                AdapterError::Timeout
            } else {
                AdapterError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| AdapterError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AdapterError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| AdapterError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AdapterError::Malformed("no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Schema;
    use crate::llm::prompt::{classify_prompt, DialogueContext};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves one request with the given status and body, and sends back the
    /// raw request it received.
    fn serve_once(status: &str, body: &str) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        let status = status.to_string();
        let body = body.to_string();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8_lossy(&payload));
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            tx.send(head).unwrap();
        });
        (url, rx)
    }

    fn prompt() -> RegulatedPrompt {
        classify_prompt(&Schema::admissions(), "Is the GPA low?", &DialogueContext::default())
    }

    #[test]
    fn sends_chat_request_and_reads_content() {
        let (url, rx) = serve_once("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#);
        let adapter = HttpAdapter::new(&url, "test-model", Some("secret".into()), Duration::from_secs(5)).unwrap();
        assert_eq!(adapter.complete(&prompt()).unwrap(), "hello");
        let request = rx.recv().unwrap();
        assert!(request.to_ascii_lowercase().contains("authorization: bearer secret"));
        assert!(request.contains("\"model\":\"test-model\""));
        assert!(request.contains("Is the GPA low?"));
    }

    #[test]
    fn server_error_is_retryable_status() {
        let (url, _rx) = serve_once("503 Service Unavailable", "{}");
        let adapter = HttpAdapter::new(&url, "m", None, Duration::from_secs(5)).unwrap();
        let err = adapter.complete(&prompt()).unwrap_err();
        assert!(matches!(err, AdapterError::Status { status: 503, .. }));
        assert!(err.is_retryable());
    }

    #[test]
    fn missing_content_is_malformed() {
        let (url, _rx) = serve_once("200 OK", r#"{"choices":[]}"#);
        let adapter = HttpAdapter::new(&url, "m", None, Duration::from_secs(5)).unwrap();
        assert!(matches!(adapter.complete(&prompt()).unwrap_err(), AdapterError::Malformed(_)));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let adapter = HttpAdapter::new(&format!("http://127.0.0.1:{port}/x"), "m", None, Duration::from_secs(2)).unwrap();
        assert!(adapter.complete(&prompt()).unwrap_err().is_retryable());
    }
}
