//! Wire types. Every response body carries `schema_version`.

use std::collections::BTreeMap;

use forge_core::env::{ActionResult, PieceInfo, Status};
use forge_core::eval::calibration::{CalibrationRecord, CalibrationSummary, Tier};
use forge_core::voxel::{BoxDims, Shape};
use forge_core::Difficulty;
use serde::{Deserialize, Serialize};

pub const API_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    BadRequest,
    Conflict,
    Unauthorized,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> u16 {
        match self {
            ErrorCode::NotFound => 404,
            ErrorCode::BadRequest => 400,
            ErrorCode::Conflict => 409,
            ErrorCode::Unauthorized => 401,
            ErrorCode::Internal => 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("unknown {what} {id:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub id: String,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
    pub difficulty: Difficulty,
    pub pieces: usize,
    pub minimal_steps: usize,
    pub signature: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceList {
    pub schema_version: u32,
    pub instances: Vec<InstanceSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceView {
    pub color: String,
    pub symbol: char,
    pub rgb: [u8; 3],
    pub cells: Shape,
}

/// Everything about an instance except its solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetail {
    pub schema_version: u32,
    pub id: String,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
    pub difficulty: Difficulty,
    pub minimal_steps: usize,
    pub signature: String,
    pub pieces: Vec<PieceView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSummary>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateEpisode {
    pub instance_id: String,
    #[serde(default)]
    pub budget: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewRef {
    pub name: String,
    /// Server-relative, content-addressed.
    pub url: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireObservation {
    pub schema_version: u32,
    pub views: Vec<ViewRef>,
    pub text_grid: String,
    pub color_map: BTreeMap<String, PieceInfo>,
    pub remaining: Vec<String>,
    pub steps_taken: u32,
    pub steps_left: u32,
    pub status: Status,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeHandle {
    pub schema_version: u32,
    pub episode_id: String,
    pub instance_id: String,
    pub created_at_unix: u64,
    pub status: Status,
    pub budget: u32,
    #[serde(default)]
    pub interrupted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedEpisode {
    #[serde(flatten)]
    pub handle: EpisodeHandle,
    pub observation: WireObservation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResponse {
    pub schema_version: u32,
    pub result: ActionResult,
    pub observation: WireObservation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRequest {
    pub instance_id: String,
    pub solve_time_s: f64,
    pub annotator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResponse {
    pub schema_version: u32,
    pub record: CalibrationRecord,
    /// Tier of this annotation alone.
    pub tier: Tier,
    /// Averaged over annotators, including this one.
    pub summary: CalibrationSummary,
}
