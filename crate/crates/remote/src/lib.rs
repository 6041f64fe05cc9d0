//! Remote model backends: a chat-completions protocol for the planner,
//! critic and answerer, and an image-generation protocol for the simulator.

mod backends;
mod client;
mod config;
mod critic;
mod messages;

pub use backends::{
    parse_planner_output, RemoteAnswerer, RemoteCritic, RemotePlanner, RemoteSimulator,
};
pub use client::{image_data_url, prompt_with_layout, HttpClient};
pub use config::{
    ConfigError, EndpointConfig, Secret, API_KEY_VAR, BASE_URL_VAR, DEFAULT_BASE_URL,
    DEFAULT_CHAT_MODEL, DEFAULT_IMAGE_MODEL,
};
pub use critic::{parse_critic_output, CriticStructuredOutput};
pub use messages::{
    extract_planner_sections, render_planner_messages, ChatMessage, Content, ContentPart,
    ImageUrl, PlannerSections, Role,
};
