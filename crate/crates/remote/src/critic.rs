use serde::{Deserialize, Serialize};
use serde_json::Value;

use cothought_core::{BackendError, Verification};

/// The JSON object a critic model is asked to emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticStructuredOutput {
    pub score: f64,
    pub feedback: Option<String>,
}

impl CriticStructuredOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

fn malformed(msg: impl Into<String>) -> BackendError {
    BackendError::MalformedOutput(msg.into())
}

/// First JSON object embedded in `raw`, skipping prose and code fences.
fn first_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

/// Parses `{"score": number, "feedback": string|null}` out of model text.
/// Scores outside [0, 1] are rejected, never clamped.
pub fn parse_critic_output(raw: &str) -> Result<Verification, BackendError> {
    let obj = first_object(raw).ok_or_else(|| malformed("no JSON object in critic output"))?;
    let score = match obj.get("score") {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| malformed("score is not a finite number"))?,
        Some(other) => return Err(malformed(format!("score is not a number: {other}"))),
        None => return Err(malformed("missing score")),
    };
    if !(0.0..=1.0).contains(&score) {
        return Err(malformed(format!("score {score} outside [0, 1]")));
    }
    let feedback = match obj.get("feedback") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(malformed(format!("feedback is not a string: {other}"))),
    };
    Ok(Verification::new(score, feedback)?)
}
