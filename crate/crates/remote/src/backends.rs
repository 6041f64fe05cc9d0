use cothought_core::{
    Answerer, BackendError, Critic, CritiqueRequest, LayoutConstraints, Planner, PlannerRequest,
    Query, Simulator, SimulatorRequest, TextualThought, Verification, VisualThought,
};

use crate::client::{image_data_url, HttpClient};
use crate::critic::parse_critic_output;
use crate::messages::{
    answer_text, critic_text, render_planner_messages, ChatMessage, ANSWER_SYSTEM, CRITIC_RETRY,
    CRITIC_SYSTEM,
};

/// Splits an optional trailing `<layout>{json}</layout>` block off the
/// planner's reply.
pub fn parse_planner_output(
    raw: &str,
) -> Result<(String, Option<LayoutConstraints>), BackendError> {
    let (text, layout) = match (raw.find("<layout>"), raw.rfind("</layout>")) {
        (Some(start), Some(end)) if start < end => {
            let json = &raw[start + "<layout>".len()..end];
            let layout: LayoutConstraints = serde_json::from_str(json.trim())
                .map_err(|e| BackendError::MalformedOutput(format!("bad layout block: {e}")))?;
            let text = format!("{}{}", &raw[..start], &raw[end + "</layout>".len()..]);
            (text, Some(layout))
        }
        _ => (raw.to_string(), None),
    };
    let text = text.trim();
    if text.is_empty() {
        return Err(BackendError::MalformedOutput("planner returned an empty prompt".into()));
    }
    Ok((text.to_string(), layout))
}

#[derive(Debug, Clone)]
pub struct RemotePlanner {
    client: HttpClient,
}

impl RemotePlanner {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl Planner for RemotePlanner {
    fn id(&self) -> &str {
        "remote-planner"
    }

    fn plan(&self, request: &PlannerRequest<'_>) -> Result<TextualThought, BackendError> {
        let raw = self.client.call_chat(&render_planner_messages(request))?;
        let (prompt, layout) = parse_planner_output(&raw)?;
        Ok(TextualThought::new(request.step_index(), prompt)?.with_layout(layout))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteSimulator {
    client: HttpClient,
}

impl RemoteSimulator {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl Simulator for RemoteSimulator {
    fn id(&self) -> &str {
        "remote-simulator"
    }

    /// Remote generators are not reproducible, so the seed is not forwarded.
    fn simulate(&self, request: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError> {
        self.client.call_image(request.prompt)
    }
}

/// Vision critic. It sees the image and the query only, never the prompt
/// that produced the image.
#[derive(Debug, Clone)]
pub struct RemoteCritic {
    client: HttpClient,
}

impl RemoteCritic {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl Critic for RemoteCritic {
    fn id(&self) -> &str {
        "remote-critic"
    }

    fn critique(&self, request: &CritiqueRequest<'_>) -> Result<Verification, BackendError> {
        let mut messages = vec![
            ChatMessage::system(CRITIC_SYSTEM),
            ChatMessage::user_with_image(
                critic_text(request.query),
                image_data_url(request.visual.image())?,
            ),
        ];
        let raw = self.client.call_chat(&messages)?;
        match parse_critic_output(&raw) {
            Ok(v) => Ok(v),
            Err(BackendError::MalformedOutput(first)) => {
                log::warn!("critic output unparsable ({first}); asking again");
                messages.push(ChatMessage::assistant(raw));
                messages.push(ChatMessage::user(CRITIC_RETRY));
                parse_critic_output(&self.client.call_chat(&messages)?)
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteAnswerer {
    client: HttpClient,
}

impl RemoteAnswerer {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl Answerer for RemoteAnswerer {
    fn id(&self) -> &str {
        "remote-answerer"
    }

    fn answer(&self, query: &Query, best: &VisualThought) -> Result<String, BackendError> {
        let messages = [
            ChatMessage::system(ANSWER_SYSTEM),
            ChatMessage::user_with_image(answer_text(query), image_data_url(best.image())?),
        ];
        Ok(self.client.call_chat(&messages)?.trim().to_string())
    }
}
