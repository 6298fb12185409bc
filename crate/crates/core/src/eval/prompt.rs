//! Prompt context for agents and the strict reply grammar.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, ActionResult, PieceInfo, RenderedView, Status};
use crate::voxel::BoxDims;

use super::EvalMode;

pub const SYSTEM_PROMPT: &str = "You control a 3D stacking puzzle. Pieces are addressed by colour. \
Coordinates are [x, y, z] box cells, origin at a bottom corner; z points up. \
A piece is placed by choosing one of 24 rotation indices and an anchor: the box cell \
receiving the minimum corner of the rotated piece. \
The goal is to fill the box exactly with all pieces.";

const INTERACTIVE_GRAMMAR: &str = "Reply with exactly one JSON action and nothing else, one of:\n\
{\"kind\":\"place\",\"color\":\"red\",\"rotation_index\":0,\"anchor\":[0,0,0]}\n\
{\"kind\":\"remove\",\"color\":\"red\"}\n\
{\"kind\":\"done\"}";

const ONE_SHOT_GRAMMAR: &str = "Reply with a single JSON array holding your complete plan, \
each element an action of the form {\"kind\":\"place\",\"color\":\"red\",\"rotation_index\":0,\"anchor\":[0,0,0]}, \
{\"kind\":\"remove\",\"color\":\"red\"} or {\"kind\":\"done\"}. The plan runs without feedback.";

/// One earlier turn, numbered from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub turn: u32,
    pub action: Action,
    pub result: ActionResult,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub mode: EvalMode,
    /// Number of the turn being requested (1-based).
    pub turn: u32,
    pub instruction: String,
    pub history: Vec<HistoryTurn>,
    pub views: Vec<RenderedView>,
    pub text_grid: Option<String>,
    pub color_map: BTreeMap<String, PieceInfo>,
    pub remaining: Vec<String>,
    pub steps_left: u32,
    pub status: Status,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
}

pub fn instruction(dims: BoxDims, mode: EvalMode) -> String {
    let grammar = match mode {
        EvalMode::Interactive => INTERACTIVE_GRAMMAR,
        EvalMode::OneShot => ONE_SHOT_GRAMMAR,
    };
    format!("Fill the {dims} box (x by y by z) exactly with the listed pieces.\n{grammar}")
}

/// The last `window` turns.
pub fn window(history: &[HistoryTurn], window: usize) -> Vec<HistoryTurn> {
    history[history.len().saturating_sub(window)..].to_vec()
}

impl Prompt {
    /// Text body of the user message; images travel separately.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push_str("\n\nPieces (colour: cells in the piece's own frame):\n");
        for (color, info) in &self.color_map {
            let cells = serde_json::to_string(&info.cells).unwrap_or_default();
            let state = if info.placed { "placed" } else { "unplaced" };
            out.push_str(&format!("- {color} [{}] {state}: {cells}\n", info.symbol));
        }
        if !self.history.is_empty() {
            out.push_str("\nRecent turns:\n");
            for h in &self.history {
                let action = serde_json::to_string(&h.action).unwrap_or_default();
                let verdict = match h.result.reason {
                    None => "ok".to_string(),
                    Some(r) => format!("rejected: {r}"),
                };
                out.push_str(&format!("turn {}: {action} -> {verdict}\n", h.turn));
            }
        }
        if let Some(grid) = &self.text_grid {
            out.push_str("\nOccupancy by layer (rows y, columns x):\n");
            out.push_str(grid);
        }
        out.push_str(&format!(
            "\nRemaining: {}\nSteps left: {}\n",
            self.remaining.join(", "),
            self.steps_left
        ));
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply is neither JSON nor a single fenced JSON block")]
    NoJson,
    #[error("reply contains {0} fenced blocks")]
    AmbiguousBlocks(usize),
    #[error("invalid action JSON: {0}")]
    BadAction(String),
}

/// Bodies of ``` fenced blocks, with an optional language tag dropped.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let Some(end) = after.find("```") else { break };
        let body = &after[..end];
        let body = match body.find('\n') {
            Some(nl) if !body[..nl].trim().starts_with(['{', '[']) => &body[nl + 1..],
            _ => body,
        };
        out.push(body.trim());
        rest = &after[end + 3..];
    }
    out
}

fn json_payload(text: &str) -> Result<&str, ParseError> {
    let trimmed = text.trim();
    if serde_json::from_str::<serde_json::Value>(trimmed).is_ok() {
        return Ok(trimmed);
    }
    match fenced_blocks(text).as_slice() {
        [one] => Ok(one),
        [] => Err(ParseError::NoJson),
        many => Err(ParseError::AmbiguousBlocks(many.len())),
    }
}

fn agent_action(v: serde_json::Value) -> Result<Action, ParseError> {
    let a: Action = serde_json::from_value(v).map_err(|e| ParseError::BadAction(e.to_string()))?;
    if matches!(a, Action::Unparseable { .. }) {
        return Err(ParseError::BadAction("reserved action kind".into()));
    }
    Ok(a)
}

pub fn parse_action(text: &str) -> Result<Action, ParseError> {
    let payload = json_payload(text)?;
    let v: serde_json::Value =
        serde_json::from_str(payload).map_err(|e| ParseError::BadAction(e.to_string()))?;
    agent_action(v)
}

pub fn parse_plan(text: &str) -> Result<Vec<Action>, ParseError> {
    let payload = json_payload(text)?;
    let v: serde_json::Value =
        serde_json::from_str(payload).map_err(|e| ParseError::BadAction(e.to_string()))?;
    let serde_json::Value::Array(items) = v else {
        return Err(ParseError::BadAction("plan must be a JSON array".into()));
    };
    items.into_iter().map(agent_action).collect()
}
