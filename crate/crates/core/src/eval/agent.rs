//! Agents: a local oracle, a seeded random baseline and a remote
//! chat-completions endpoint.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::env::{oracle_actions, Action};
use crate::puzzle::PuzzleInstance;
use crate::voxel::Coord;

use super::metrics::Pricing;
use super::prompt::{Prompt, SYSTEM_PROMPT};
use super::EvalMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentReply {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

pub trait Agent: Send {
    fn id(&self) -> String;
    fn act(&mut self, prompt: &Prompt) -> Result<AgentReply, AgentError>;
}

/// Replays the manifest solution: places the first still-unplaced piece in
/// assembly order, or returns the whole plan in one-shot mode.
pub struct OracleAgent {
    plan: Vec<Action>,
}

impl OracleAgent {
    pub fn new(instance: &PuzzleInstance) -> Self {
        OracleAgent {
            plan: oracle_actions(instance),
        }
    }
}

impl Agent for OracleAgent {
    fn id(&self) -> String {
        "oracle".into()
    }

    fn act(&mut self, prompt: &Prompt) -> Result<AgentReply, AgentError> {
        let text = match prompt.mode {
            EvalMode::OneShot => serde_json::to_string(&self.plan).expect("actions serialize"),
            EvalMode::Interactive => {
                let next = self.plan.iter().find(|a| match a {
                    Action::Place { color, .. } => prompt.remaining.contains(color),
                    _ => false,
                });
                serde_json::to_string(next.unwrap_or(&Action::Done)).expect("actions serialize")
            }
        };
        Ok(AgentReply {
            text,
            usage: Usage::default(),
        })
    }
}

/// Uniformly random placements over remaining colours, rotations and
/// in-box anchors.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn random_place(&mut self, prompt: &Prompt, colors: &[String]) -> Action {
        let Some(color) = colors.choose(&mut self.rng) else {
            return Action::Done;
        };
        let d = prompt.box_dims;
        Action::place(
            color,
            self.rng.random_range(0..24),
            Coord::new(
                self.rng.random_range(0..d.a),
                self.rng.random_range(0..d.b),
                self.rng.random_range(0..d.c),
            ),
        )
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> String {
        "random".into()
    }

    fn act(&mut self, prompt: &Prompt) -> Result<AgentReply, AgentError> {
        let action = match prompt.mode {
            EvalMode::Interactive => {
                let colors = prompt.remaining.clone();
                self.random_place(prompt, &colors)
            }
            EvalMode::OneShot => {
                let colors: Vec<String> = prompt.color_map.keys().cloned().collect();
                let plan: Vec<Action> = colors
                    .iter()
                    .map(|c| self.random_place(prompt, std::slice::from_ref(c)))
                    .collect();
                return Ok(AgentReply {
                    text: serde_json::to_string(&plan).expect("actions serialize"),
                    usage: Usage::default(),
                });
            }
        };
        Ok(AgentReply {
            text: serde_json::to_string(&action).expect("actions serialize"),
            usage: Usage::default(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Oracle,
    Random,
    Remote,
}

fn default_temperature() -> f64 {
    0.6
}
fn default_top_p() -> f64 {
    0.95
}
fn default_history_window() -> usize {
    5
}
fn default_timeout() -> u64 {
    120
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Name of an environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_history_window")]
    pub history_window: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub pricing: Option<Pricing>,
    #[serde(default)]
    pub name: Option<String>,
}

impl AgentConfig {
    pub fn of_kind(kind: AgentKind) -> Self {
        AgentConfig {
            kind,
            endpoint: None,
            model: None,
            api_key_env: None,
            temperature: default_temperature(),
            top_p: default_top_p(),
            history_window: default_history_window(),
            timeout_s: default_timeout(),
            pricing: None,
            name: None,
        }
    }

    pub fn agent_id(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (self.kind, &self.model) {
            (AgentKind::Remote, Some(m)) => m.clone(),
            (AgentKind::Oracle, _) => "oracle".into(),
            (AgentKind::Random, _) => "random".into(),
            (AgentKind::Remote, None) => "remote".into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kind == AgentKind::Remote && (self.endpoint.is_none() || self.model.is_none()) {
            return Err("remote agents need endpoint and model".into());
        }
        if self.history_window == 0 {
            return Err("history_window must be at least 1".into());
        }
        if let Some(p) = self.pricing {
            Pricing::new(p.p_in, p.p_out).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn build(&self, instance: &PuzzleInstance, seed: u64) -> Result<Box<dyn Agent>, AgentError> {
        Ok(match self.kind {
            AgentKind::Oracle => Box::new(OracleAgent::new(instance)),
            AgentKind::Random => Box::new(RandomAgent::new(seed)),
            AgentKind::Remote => Box::new(RemoteAgent::new(self)?),
        })
    }
}

/// Chat-completions style multimodal endpoint.
pub struct RemoteAgent {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    top_p: f64,
    id: String,
}

impl RemoteAgent {
    pub fn new(cfg: &AgentConfig) -> Result<Self, AgentError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| AgentError::Protocol("missing endpoint".into()))?;
        let model = cfg
            .model
            .clone()
            .ok_or_else(|| AgentError::Protocol("missing model".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_s))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(RemoteAgent {
            client,
            endpoint,
            model,
            api_key: cfg.api_key_env.as_ref().and_then(|v| std::env::var(v).ok()),
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            id: cfg.agent_id(),
        })
    }

    pub fn request_body(&self, prompt: &Prompt) -> Value {
        request_body(&self.model, self.temperature, self.top_p, prompt)
    }
}

pub fn request_body(model: &str, temperature: f64, top_p: f64, prompt: &Prompt) -> Value {
    let mut content = vec![json!({"type": "text", "text": prompt.render_text()})];
    for v in &prompt.views {
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:image/png;base64,{}", STANDARD.encode(&v.png))},
        }));
    }
    json!({
        "model": model,
        "temperature": temperature,
        "top_p": top_p,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": content},
        ],
    })
}

impl Agent for RemoteAgent {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn act(&mut self, prompt: &Prompt) -> Result<AgentReply, AgentError> {
        let mut req = self.client.post(&self.endpoint).json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AgentError::Transport(format!("endpoint returned {status}")));
        }
        let body: Value = resp.json().map_err(|e| AgentError::Protocol(e.to_string()))?;
        let text = body["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| AgentError::Protocol("no message content".into()))?
            .to_string();
        let usage = Usage {
            tokens_in: body["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            tokens_out: body["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(AgentReply { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults() {
        let cfg: AgentConfig = serde_json::from_str(r#"{"kind":"oracle"}"#).unwrap();
        assert_eq!(cfg.temperature, 0.6);
        assert_eq!(cfg.top_p, 0.95);
        assert_eq!(cfg.history_window, 5);
        assert!(cfg.validate().is_ok());
        let remote: AgentConfig = serde_json::from_str(r#"{"kind":"remote"}"#).unwrap();
        assert!(remote.validate().is_err());
        assert!(serde_json::from_str::<AgentConfig>(r#"{"kind":"oracle","tempature":1}"#).is_err());
    }
}
