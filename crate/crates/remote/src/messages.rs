//! Chat message shapes and the prompt templates for each role.
//!
//! User-supplied text is embedded in tag-delimited sections with `&`, `<`
//! and `>` escaped, so a section can always be extracted back verbatim.

use serde::{Deserialize, Serialize};

use cothought_core::{PlannerRequest, Query, Verification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Content {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: Content,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: Content::Text(text.into()),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: Content::Text(text.into()),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: Content::Text(text.into()),
        }
    }

    /// A user turn carrying text followed by one image.
    pub fn user_with_image(text: impl Into<String>, data_url: String) -> Self {
        Self {
            role: Role::User,
            content: Content::Parts(vec![
                ContentPart::Text { text: text.into() },
                ContentPart::ImageUrl {
                    image_url: ImageUrl { url: data_url },
                },
            ]),
        }
    }

    /// Text content, with image parts skipped.
    pub fn text(&self) -> String {
        match &self.content {
            Content::Text(t) => t.clone(),
            Content::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&")
}

fn section(tag: &str, body: &str) -> String {
    format!("<{tag}>{}</{tag}>\n", escape(body))
}

pub const PLANNER_SYSTEM: &str = "You plan visual simulations for spatial and physical reasoning. \
Read the query and extract the spatial and physical constraints it implies: support, contact, \
relative position, orientation, occlusion and counts. Then write one self-contained scene \
description that an image generator can render faithfully. When feedback on earlier attempts \
is given, revise the latest description to fix what the feedback names and keep what was \
already right. Reply with the scene description only. You may append bounding boxes as \
<layout>{\"boxes\":[{\"label\":\"A\",\"x0\":0.1,\"y0\":0.1,\"x1\":0.4,\"y1\":0.5}]}</layout> \
with coordinates normalized to [0,1] and the origin at the top left.";

pub const CRITIC_SYSTEM: &str = "You are a strict visual critic. Decide how well the image \
satisfies the spatial and physical constraints of the query. Reply with a single JSON object \
{\"score\": <number between 0 and 1>, \"feedback\": <string or null>}. The score is the \
fraction of constraints the image satisfies. The feedback names the most important violated \
constraint and how to correct it, or is null when nothing is wrong.";

pub const CRITIC_RETRY: &str = "Your previous reply could not be parsed. Reply with only the \
JSON object {\"score\": <number between 0 and 1>, \"feedback\": <string or null>} and no \
other text.";

pub const ANSWER_SYSTEM: &str = "Answer the query. The image is a verified simulation of the \
scene the query describes; ground your answer in what it shows. Reply with the answer only.";

/// System message plus one user message holding the query, every prior
/// (prompt, feedback) pair in step order, and the latest feedback last.
pub fn render_planner_messages(request: &PlannerRequest<'_>) -> Vec<ChatMessage> {
    let mut user = section("query", request.query.text());
    if let Some(hint) = request.query.constraints_hint() {
        user.push_str(&section("hint", hint));
    }
    for state in request.history {
        user.push_str(&format!("<attempt index=\"{}\">\n", state.step_index()));
        user.push_str(&section("prompt", state.textual().prompt()));
        if let Some(fb) = state.verification().and_then(Verification::feedback) {
            user.push_str(&section("feedback", fb));
        }
        user.push_str("</attempt>\n");
    }
    if let Some(fb) = request.prior_feedback {
        user.push_str(&section("latest_feedback", fb));
    }
    vec![ChatMessage::system(PLANNER_SYSTEM), ChatMessage::user(user)]
}

/// The sections of a rendered planner user message.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlannerSections {
    pub query: String,
    pub hint: Option<String>,
    pub attempts: Vec<(String, Option<String>)>,
    pub latest_feedback: Option<String>,
}

fn take_section(rest: &mut &str, tag: &str) -> Option<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>\n");
    let body = rest.strip_prefix(open.as_str())?;
    let end = body.find(close.as_str())?;
    *rest = &body[end + close.len()..];
    Some(unescape(&body[..end]))
}

/// Inverse of the user message built by [`render_planner_messages`].
pub fn extract_planner_sections(user: &str) -> Option<PlannerSections> {
    let mut rest = user;
    let mut out = PlannerSections {
        query: take_section(&mut rest, "query")?,
        ..Default::default()
    };
    out.hint = take_section(&mut rest, "hint");
    while let Some(after) = rest.strip_prefix("<attempt index=\"") {
        let close = after.find("\">\n")?;
        rest = &after[close + 3..];
        let prompt = take_section(&mut rest, "prompt")?;
        let feedback = take_section(&mut rest, "feedback");
        rest = rest.strip_prefix("</attempt>\n")?;
        out.attempts.push((prompt, feedback));
    }
    out.latest_feedback = take_section(&mut rest, "latest_feedback");
    rest.is_empty().then_some(out)
}

pub fn critic_text(query: &Query) -> String {
    section("query", query.text())
}

pub fn answer_text(query: &Query) -> String {
    let mut text = section("query", query.text());
    if let Some(hint) = query.constraints_hint() {
        text.push_str(&section("hint", hint));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use cothought_core::{
        ImagePayload, RasterImage, ReasoningState, TaskMode, TextualThought, VisualThought,
    };
    use proptest::prelude::*;

    fn step(t: usize, prompt: &str, feedback: Option<&str>) -> ReasoningState {
        let img = RasterImage::filled(1, 1, [0, 0, 0]).unwrap();
        ReasoningState::new(
            TextualThought::new(t, prompt).unwrap(),
            Some(VisualThought::new(t, ImagePayload::Inline(img), "g")),
            Some(Verification::new(0.5, feedback.map(str::to_owned)).unwrap()),
        )
        .unwrap()
    }

    fn query(text: &str) -> Query {
        Query::new("q", text, TaskMode::QuestionAnswering).unwrap()
    }

    #[test]
    fn initial_request_has_only_query() {
        let q = query("stack A on B");
        let msgs = render_planner_messages(&PlannerRequest::initial(&q));
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        assert_eq!(msgs[1].text(), "<query>stack A on B</query>\n");
    }

    #[test]
    fn history_in_order() {
        let q = query("q");
        let history = [step(0, "first", Some("fb one")), step(1, "second", Some("fb two"))];
        let req = PlannerRequest {
            query: &q,
            prior_feedback: Some("fb two"),
            history: &history,
        };
        let text = render_planner_messages(&req)[1].text();
        let first = text.find("first").unwrap();
        let second = text.find("second").unwrap();
        assert!(first < text.find("fb one").unwrap());
        assert!(text.find("fb one").unwrap() < second);
        assert!(text.ends_with("<latest_feedback>fb two</latest_feedback>\n"));
    }

    #[test]
    fn message_wire_shape() {
        let m = ChatMessage::user_with_image("look", "data:image/png;base64,AA".into());
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["role"], "user");
        assert_eq!(v["content"][0]["type"], "text");
        assert_eq!(v["content"][1]["image_url"]["url"], "data:image/png;base64,AA");
        assert_eq!(serde_json::to_value(ChatMessage::system("s")).unwrap()["content"], "s");
    }

    fn nasty() -> impl Strategy<Value = String> {
        "[a-z<>&/\"= \n]{1,24}|</prompt>\n|&lt;|<attempt index=\"0\">\n"
            .prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    proptest! {
        #[test]
        fn sections_round_trip(
            q in nasty(),
            hint in proptest::option::of(nasty()),
            pairs in prop::collection::vec((nasty(), proptest::option::of(nasty())), 0..4),
            latest in proptest::option::of(nasty()),
        ) {
            let query = query(&q).with_hint(hint.clone());
            let history: Vec<_> = pairs
                .iter()
                .enumerate()
                .map(|(i, (p, f))| step(i, p, f.as_deref()))
                .collect();
            let req = PlannerRequest { query: &query, prior_feedback: latest.as_deref(), history: &history };
            let user = render_planner_messages(&req)[1].text();
            let back = extract_planner_sections(&user).unwrap();
            prop_assert_eq!(back.query, q);
            prop_assert_eq!(back.hint, hint);
            prop_assert_eq!(back.attempts, pairs);
            prop_assert_eq!(back.latest_feedback, latest);
        }
    }
}
