//! Listwise reranking through an HTTP chat-completion style endpoint.
//!
//! Request body: `{"model", "system", "messages": [{"role": "user", "content"}]}`
//! plus `max_tokens` when configured. The ranking text and token usage are read
//! from the response with dotted JSON paths such as `content.0.text`.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::rerank::{parse_ranking, PromptTemplate, Reranker, WindowRequest, WindowResponse};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Builtin template id or a path to a template file.
    pub template: String,
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// Requests per second across all threads; `None` means unlimited.
    pub rate_limit: Option<f64>,
    pub retry_backoff_ms: u64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub auth_header: String,
    pub max_tokens: Option<u32>,
    pub response_text_path: String,
    pub usage_in_path: String,
    pub usage_out_path: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            template: super::DEFAULT_TEMPLATE.to_string(),
            max_retries: 3,
            timeout_secs: 60.0,
            rate_limit: None,
            retry_backoff_ms: 500,
            api_key_env: "RGS_API_KEY".to_string(),
            auth_header: "authorization".to_string(),
            max_tokens: None,
            response_text_path: "content.0.text".to_string(),
            usage_in_path: "usage.input_tokens".to_string(),
            usage_out_path: "usage.output_tokens".to_string(),
        }
    }
}

impl HttpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(Error::invalid("http reranker needs an endpoint"));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::invalid("http timeout must be positive"));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0) {
                return Err(Error::invalid("rate limit must be positive"));
            }
        }
        Ok(())
    }
}

pub struct HttpReranker {
    config: HttpConfig,
    template: PromptTemplate,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    next_slot: Mutex<Option<Instant>>,
}

impl HttpReranker {
    pub fn new(config: HttpConfig) -> Result<Self> {
        config.validate()?;
        let template = PromptTemplate::resolve(&config.template)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without credentials", config.api_key_env);
        }
        Ok(Self {
            config,
            template,
            client,
            api_key,
            next_slot: Mutex::new(None),
        })
    }

    fn wait_for_slot(&self) {
        let Some(rate) = self.config.rate_limit else { return };
        let interval = Duration::from_secs_f64(1.0 / rate);
        let mut slot = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
        let now = Instant::now();
        let start = match *slot {
            Some(t) if t > now => {
                std::thread::sleep(t - now);
                t
            }
            _ => now,
        };
        *slot = Some(start + interval);
    }

    fn post(&self, body: &Value) -> Result<Value> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms << (attempt - 1).min(6)));
            }
            self.wait_for_slot();
            let mut req = self.client.post(&self.config.endpoint).json(body);
            if let Some(key) = &self.api_key {
                let value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                    format!("Bearer {key}")
                } else {
                    key.clone()
                };
                req = req.header(self.config.auth_header.as_str(), value);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().map_err(|e| Error::Backend(e.to_string()));
                    if status.is_success() {
                        let text = text?;
                        return serde_json::from_str(&text)
                            .map_err(|e| Error::Backend(format!("response is not JSON: {e}")));
                    }
                    last = format!("HTTP {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("reranker request attempt {} failed: {last}", attempt + 1);
        }
        Err(Error::Backend(last))
    }
}

/// Follow a dotted path; numeric segments index arrays.
pub fn json_path<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').filter(|s| !s.is_empty()).try_fold(value, |v, seg| match v {
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        Value::Object(map) => map.get(seg),
        _ => None,
    })
}

fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl Reranker for HttpReranker {
    fn name(&self) -> &str {
        "http_llm"
    }

    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse> {
        let query = request
            .query
            .text
            .as_deref()
            .ok_or_else(|| Error::Backend(format!("query {} has no text", request.query.qid)))?;
        let passages = request
            .docs
            .iter()
            .map(|&d| {
                request
                    .corpus
                    .text(d)
                    .ok_or_else(|| Error::Backend(format!("document {} has no text", request.corpus.id(d))))
            })
            .collect::<Result<Vec<&str>>>()?;
        let prompt = self.template.render(query, &passages);
        let mut body = json!({
            "model": self.config.model,
            "system": prompt.system,
            "messages": [{"role": "user", "content": prompt.user}],
        });
        if let Some(m) = self.config.max_tokens {
            body["max_tokens"] = json!(m);
        }
        let response = self.post(&body)?;
        let text = json_path(&response, &self.config.response_text_path)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Backend(format!("no text at {}", self.config.response_text_path)))?;
        let usage_in = json_path(&response, &self.config.usage_in_path).and_then(Value::as_u64);
        let usage_out = json_path(&response, &self.config.usage_out_path).and_then(Value::as_u64);
        let (tokens_in, tokens_out) = match (usage_in, usage_out) {
            (Some(i), Some(o)) => (i, o),
            _ => (
                approx_tokens(&prompt.system) + approx_tokens(&prompt.user),
                approx_tokens(text),
            ),
        };
        // An unparseable answer yields an empty order, which the caller treats
        // as a non-permutation and keeps the window as it was.
        let order = parse_ranking(text, passages.len()).unwrap_or_default();
        Ok(WindowResponse {
            order,
            tokens_in,
            tokens_out,
        })
    }
}
