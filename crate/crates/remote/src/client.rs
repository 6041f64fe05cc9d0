//! Blocking HTTP client for the chat-completions and image-generation
//! protocols. Calls are single-shot; retrying transient failures is the
//! caller's business.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::Serialize;
use serde_json::{json, Value};

use cothought_core::{
    BackendError, ImagePayload, LayoutConstraints, RasterImage, TextualThought, VisualThought,
};

use crate::config::EndpointConfig;
use crate::messages::ChatMessage;

const BODY_LIMIT: u64 = 64 * 1024 * 1024;
const EXCERPT: usize = 300;

const REFUSAL_CODES: &[&str] = &[
    "content_policy_violation",
    "moderation_blocked",
    "content_filter",
    "safety_violation",
];

#[derive(Debug, Clone, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    image_size: String,
}

impl HttpClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            image_size: "1024x1024".into(),
        }
    }

    pub fn with_image_size(mut self, size: impl Into<String>) -> Self {
        self.image_size = size.into();
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Strips the credential from text that may echo request data.
    fn redact(&self, text: &str) -> String {
        let key = self.config.api_key.expose();
        let text: String = text.chars().take(EXCERPT).collect();
        if key.is_empty() {
            text
        } else {
            text.replace(key, "[redacted]")
        }
    }

    fn transport(&self, e: ureq::Error) -> BackendError {
        BackendError::Unavailable(self.redact(&e.to_string()))
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.config.endpoint(path);
        log::debug!("POST {url} model={}", self.config.model_name);
        let mut resp = self
            .agent
            .post(&url)
            .header(
                "Authorization",
                format!("Bearer {}", self.config.api_key.expose()),
            )
            .send_json(body)
            .map_err(|e| self.transport(e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_string()
            .map_err(|e| self.transport(e))?;
        log::debug!("{url} -> {status} ({} bytes)", text.len());
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| {
                BackendError::MalformedOutput(format!("response is not JSON: {e}"))
            }),
            401 | 403 => Err(BackendError::Auth(format!(
                "HTTP {status}: {}",
                self.redact(&text)
            ))),
            408 | 429 | 500..=599 => Err(BackendError::Unavailable(format!(
                "HTTP {status}: {}",
                self.redact(&text)
            ))),
            _ => {
                let body: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
                if is_refusal(&body) {
                    Err(BackendError::GenerationRejected(self.redact(&error_message(&body, &text))))
                } else {
                    Err(BackendError::InvalidRequest(format!(
                        "HTTP {status}: {}",
                        self.redact(&text)
                    )))
                }
            }
        }
    }

    /// `POST /v1/chat/completions`; returns the first choice's text.
    pub fn call_chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let request = ChatRequest {
            model: &self.config.model_name,
            messages,
            temperature: self.config.temperature,
        };
        let body = serde_json::to_value(&request).expect("chat request serializes");
        let resp = self.post("/v1/chat/completions", &body)?;
        let message = resp
            .pointer("/choices/0/message")
            .ok_or_else(|| BackendError::MalformedOutput("no choices[0].message".into()))?;
        match (message.get("content"), message.get("refusal")) {
            (Some(Value::String(s)), _) => Ok(s.clone()),
            (_, Some(Value::String(r))) => Err(BackendError::GenerationRejected(r.clone())),
            _ => Err(BackendError::MalformedOutput(
                "choices[0].message.content is not a string".into(),
            )),
        }
    }

    /// `POST /v1/images/generations`. Layout boxes travel both as a `layout`
    /// field and as plain text appended to the prompt.
    pub fn call_image(&self, prompt: &TextualThought) -> Result<VisualThought, BackendError> {
        let mut body = json!({
            "model": self.config.model_name,
            "prompt": prompt_with_layout(prompt.prompt(), prompt.layout()),
            "size": self.image_size,
            "response_format": "b64_json",
            "n": 1,
        });
        if let Some(layout) = prompt.layout() {
            body["layout"] = serde_json::to_value(layout).expect("layout serializes");
        }
        let resp = self.post("/v1/images/generations", &body)?;
        if is_refusal(&resp) {
            return Err(BackendError::GenerationRejected(error_message(&resp, "refused")));
        }
        let item = resp
            .pointer("/data/0")
            .ok_or_else(|| BackendError::MalformedOutput("no data[0] in image response".into()))?;
        let bytes = match (item.get("b64_json"), item.get("url")) {
            (Some(Value::String(b64)), _) => BASE64
                .decode(b64.trim())
                .map_err(|e| BackendError::MalformedOutput(format!("bad base64 image: {e}")))?,
            (_, Some(Value::String(url))) => self.fetch(url)?,
            _ => {
                return Err(BackendError::MalformedOutput(
                    "image response has neither b64_json nor url".into(),
                ))
            }
        };
        let image = RasterImage::from_png(&bytes)
            .map_err(|e| BackendError::MalformedOutput(format!("undecodable image: {e}")))?;
        Ok(VisualThought::new(
            prompt.step_index(),
            ImagePayload::Inline(image),
            format!("remote:{}", self.config.model_name),
        ))
    }

    /// Downloads a returned image URL. The credential is not sent along:
    /// such URLs are usually presigned and may point at another host.
    fn fetch(&self, url: &str) -> Result<Vec<u8>, BackendError> {
        let mut resp = self.agent.get(url).call().map_err(|e| self.transport(e))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let err = format!("image download returned HTTP {status}");
            return Err(if status >= 500 {
                BackendError::Unavailable(err)
            } else {
                BackendError::MalformedOutput(err)
            });
        }
        resp.body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_vec()
            .map_err(|e| self.transport(e))
    }
}

fn is_refusal(body: &Value) -> bool {
    let err = body.get("error");
    let code = err.and_then(|e| e.get("code")).and_then(Value::as_str);
    let kind = err.and_then(|e| e.get("type")).and_then(Value::as_str);
    code.or(kind).is_some_and(|c| REFUSAL_CODES.contains(&c))
        || body.get("refusal").is_some_and(|r| r.is_string())
}

fn error_message(body: &Value, fallback: &str) -> String {
    body.pointer("/error/message")
        .or_else(|| body.get("refusal"))
        .and_then(Value::as_str)
        .unwrap_or(fallback)
        .to_string()
}

/// Appends a textual rendering of the layout boxes to the prompt.
pub fn prompt_with_layout(prompt: &str, layout: Option<&LayoutConstraints>) -> String {
    let Some(layout) = layout.filter(|l| !l.boxes().is_empty()) else {
        return prompt.to_string();
    };
    let boxes: Vec<String> = layout
        .boxes()
        .iter()
        .map(|b| {
            format!(
                "{} in the box from ({:.3}, {:.3}) to ({:.3}, {:.3})",
                b.label, b.x0, b.y0, b.x1, b.y1
            )
        })
        .collect();
    format!(
        "{prompt}\n\nLayout (normalized coordinates, origin top left): {}.",
        boxes.join("; ")
    )
}

/// `data:image/png;base64,...` URL for an image payload.
pub fn image_data_url(image: &ImagePayload) -> Result<String, BackendError> {
    let png = cothought_core::store::png_bytes(image)
        .map_err(|e| BackendError::InvalidRequest(format!("cannot encode image: {e}")))?;
    Ok(format!("data:image/png;base64,{}", BASE64.encode(png)))
}
