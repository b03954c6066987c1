use codecal_core::prompting::ChatMessage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One chat-completions call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub prompt_version: String,
}

/// The fields that identify a request, in a fixed order.
#[derive(Serialize)]
struct KeyFields<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    prompt_version: &'a str,
}

impl ChatRequest {
    pub fn new(
        model: impl Into<String>,
        messages: Vec<ChatMessage>,
        prompt_version: impl Into<String>,
    ) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: None,
            prompt_version: prompt_version.into(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: Option<u32>) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// Compact JSON of model, messages, temperature and prompt version.
    /// `max_tokens` is deliberately left out.
    pub fn canonical(&self) -> String {
        serde_json::to_string(&KeyFields {
            model: &self.model,
            messages: &self.messages,
            temperature: self.temperature,
            prompt_version: &self.prompt_version,
        })
        .expect("request fields serialize")
    }

    /// SHA-256 hex digest of [`canonical`](Self::canonical).
    pub fn request_key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use codecal_core::prompting::Role;

    fn request() -> ChatRequest {
        ChatRequest::new(
            "m",
            vec![
                ChatMessage::new(Role::System, "s"),
                ChatMessage::new(Role::User, "u"),
            ],
            "v1",
        )
    }

    #[test]
    fn temperature_defaults_to_zero() {
        assert_eq!(request().temperature, 0.0);
    }

    #[test]
    fn key_is_a_pure_function_of_identity_fields() {
        let a = request();
        assert_eq!(a.request_key(), request().request_key());
        assert_eq!(a.request_key().len(), 64);
        assert_eq!(
            a.canonical(),
            r#"{"model":"m","messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}],"temperature":0.0,"prompt_version":"v1"}"#
        );
        assert_eq!(
            a.request_key(),
            a.clone().with_max_tokens(Some(10)).request_key()
        );
    }

    #[test]
    fn each_identity_field_changes_the_key() {
        let base = request().request_key();
        assert_ne!(base, request().with_temperature(0.7).request_key());
        let mut other = request();
        other.model = "n".into();
        assert_ne!(base, other.request_key());
        let mut other = request();
        other.prompt_version = "v2".into();
        assert_ne!(base, other.request_key());
        let mut other = request();
        other.messages[1].role = Role::Assistant;
        assert_ne!(base, other.request_key());
    }
}
