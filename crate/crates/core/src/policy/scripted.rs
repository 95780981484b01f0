//! Deterministic policies for tests and offline pipelines. A script is a
//! pure function of the message history, the declared tools and the sample
//! seed.

use sha2::{Digest, Sha256};

use super::{AssistantTurn, ChatMessage, PolicyError, Role, ToolDecl};

pub trait Script: Send + Sync {
    fn respond(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDecl],
        sample_seed: u64,
    ) -> Result<AssistantTurn, PolicyError>;
}

impl<F> Script for F
where
    F: Fn(&[ChatMessage], &[ToolDecl], u64) -> Result<AssistantTurn, PolicyError> + Send + Sync,
{
    fn respond(&self, messages: &[ChatMessage], tools: &[ToolDecl], seed: u64) -> Result<AssistantTurn, PolicyError> {
        self(messages, tools, seed)
    }
}

/// Replays a fixed list of turns; the n-th assistant turn of a conversation
/// is `turns[n]`.
#[derive(Debug, Clone)]
pub struct Sequence {
    turns: Vec<AssistantTurn>,
}

impl Sequence {
    pub fn new(turns: Vec<AssistantTurn>) -> Self {
        Sequence { turns }
    }
}

impl Script for Sequence {
    fn respond(&self, messages: &[ChatMessage], _: &[ToolDecl], _: u64) -> Result<AssistantTurn, PolicyError> {
        let n = messages.iter().filter(|m| m.role == Role::Assistant).count();
        self.turns
            .get(n)
            .cloned()
            .ok_or_else(|| PolicyError::Transport(format!("script exhausted after {n} turns")))
    }
}

/// Stable 64-bit hash of a list of strings and a seed.
pub fn stable_hash(parts: &[&str], seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// Text of the first user message, or "" if none.
pub fn first_user_text(messages: &[ChatMessage]) -> &str {
    messages
        .iter()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_seed_sensitive() {
        assert_eq!(stable_hash(&["a", "b"], 1), stable_hash(&["a", "b"], 1));
        assert_ne!(stable_hash(&["a", "b"], 1), stable_hash(&["a", "b"], 2));
        assert_ne!(stable_hash(&["ab", ""], 1), stable_hash(&["a", "b"], 1));
    }

    #[test]
    fn sequence_exhaustion_is_an_error() {
        let s = Sequence::new(vec![AssistantTurn::finish("x")]);
        let hist = vec![ChatMessage::user("q"), ChatMessage::assistant("x", vec![]), ChatMessage::user("more")];
        assert!(s.respond(&hist, &[], 0).is_err());
        assert_eq!(s.respond(&hist[..1], &[], 0).unwrap().reasoning_text, "x");
    }
}
