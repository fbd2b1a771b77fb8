use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

/// Request body for `POST <base_url>/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    #[serde(default)]
    pub index: usize,
    pub message: ChatMessage,
}

impl ChatResponse {
    pub fn single(content: impl Into<String>) -> Self {
        ChatResponse { choices: vec![Choice { index: 0, message: ChatMessage::assistant(content) }] }
    }
}

/// `choices[0].message.content` from a response body.
pub fn extract_content(body: &str) -> Result<String, String> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| format!("bad response body: {e}"))?;
    resp.choices.into_iter().next().map(|c| c.message.content).ok_or_else(|| "response has no choices".to_string())
}
