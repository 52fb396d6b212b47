use std::rc::Rc;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{Backend, BackendFuture, CallKind, LlmRequest};
use crate::effects::Context;
use crate::error::{Error, Result};
use crate::runtime::offload;

pub const DEFAULT_BASE_URL: &str = "http://127.0.0.1:8080/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

/// Connection settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: DEFAULT_BASE_URL.into(),
            api_key: None,
            model: DEFAULT_MODEL.into(),
            temperature: 0.7,
            timeout: Duration::from_secs(60),
        }
    }
}

impl LlmConfig {
    /// Reads `LLM_API_KEY`, `LLM_BASE_URL` and `LLM_MODEL`.
    pub fn from_env() -> Self {
        let var = |k| std::env::var(k).ok().filter(|v: &String| !v.is_empty());
        let mut c = LlmConfig::default();
        c.api_key = var("LLM_API_KEY");
        if let Some(url) = var("LLM_BASE_URL") {
            c.base_url = url;
        }
        if let Some(model) = var("LLM_MODEL") {
            c.model = model;
        }
        c
    }

    fn host(&self) -> &str {
        let rest = self
            .base_url
            .split_once("://")
            .map_or(self.base_url.as_str(), |(_, r)| r);
        let authority = rest.split('/').next().unwrap_or("");
        if let Some(v6) = authority.strip_prefix('[') {
            return v6.split(']').next().unwrap_or("");
        }
        authority.split(':').next().unwrap_or("")
    }

    pub fn is_local(&self) -> bool {
        matches!(self.host(), "localhost" | "127.0.0.1" | "::1")
    }

    /// A key is required unless the endpoint is on this machine.
    pub fn validate(&self) -> Result<()> {
        if self.api_key.is_none() && !self.is_local() {
            return Err(Error::Config(format!(
                "LLM_API_KEY is not set and {} is not a local endpoint",
                self.base_url
            )));
        }
        if !self.base_url.starts_with("http://") && !self.base_url.starts_with("https://") {
            return Err(Error::Config(format!("bad base url {}", self.base_url)));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub fn chat_request_body(config: &LlmConfig, req: &LlmRequest) -> Json {
    let mut body = json!({
        "model": config.model,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": config.temperature,
    });
    if let (CallKind::Parse, Some(schema)) = (req.kind, &req.schema) {
        body["response_format"] = json!({
            "type": "json_schema",
            "json_schema": {
                "name": schema.id(),
                "schema": schema.json_schema(),
                "strict": true,
            },
        });
    }
    body
}

pub fn extract_content(resp: &Json) -> Result<String> {
    resp.pointer("/choices/0/message/content")
        .and_then(Json::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::Backend {
            status: None,
            body: format!("response has no message content: {}", excerpt(&resp.to_string())),
        })
}

fn excerpt(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Calls a remote endpoint over HTTP. Requests run on worker threads via
/// `offload`, so several can be in flight at once.
pub struct LiveBackend {
    config: Arc<LlmConfig>,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(config: LlmConfig) -> Result<Self> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(LiveBackend {
            config: Arc::new(config),
            agent,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }
}

fn post(agent: &ureq::Agent, config: &LlmConfig, body: Json) -> Result<String> {
    let mut request = agent.post(&config.endpoint());
    if let Some(key) = &config.api_key {
        request = request.set("Authorization", &format!("Bearer {key}"));
    }
    match request.send_json(body) {
        Ok(resp) => {
            let json: Json = resp.into_json().map_err(|e| Error::Backend {
                status: None,
                body: format!("unreadable response: {e}"),
            })?;
            extract_content(&json)
        }
        Err(ureq::Error::Status(code, resp)) => Err(Error::Backend {
            status: Some(code),
            body: excerpt(&resp.into_string().unwrap_or_default()),
        }),
        Err(ureq::Error::Transport(t)) => {
            let msg = t.to_string();
            if msg.contains("timed out") || msg.contains("timeout") {
                Err(Error::Timeout(config.timeout.as_millis() as u64))
            } else {
                Err(Error::Backend {
                    status: None,
                    body: msg,
                })
            }
        }
    }
}

impl Backend for LiveBackend {
    fn model(&self) -> String {
        self.config.model.clone()
    }

    fn call(&self, ctx: Rc<Context>, req: LlmRequest) -> BackendFuture {
        let body = chat_request_body(&self.config, &req);
        let config = Arc::clone(&self.config);
        let agent = self.agent.clone();
        Box::pin(async move {
            let job = Box::new(move || post(&agent, &config, body));
            let v = offload(&ctx, job)?.await?;
            v.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::bad_arg("offload", "expected text"))
        }) as BackendFuture
    }
}
