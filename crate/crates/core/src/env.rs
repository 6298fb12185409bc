//! Interactive stacking episodes: action validation, budgeting, success
//! detection and multi-view observations.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::palette;
use crate::puzzle::PuzzleInstance;
use crate::render::{self, ViewKind, Voxel};
use crate::voxel::{normalize, rotate, BoxDims, Coord, Rotation, Shape};

pub const MIN_BUDGET: u32 = 1;
pub const MAX_BUDGET: u32 = 1000;
pub const DEFAULT_BUDGET_RANGE: (u32, u32) = (30, 60);

/// Agent-facing action grammar. `Unparseable` marks a reply that could not
/// be turned into an action; it is recorded and consumes a step like any
/// other invalid action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Action {
    Place {
        color: String,
        rotation_index: usize,
        anchor: Coord,
    },
    Remove {
        color: String,
    },
    Done,
    Unparseable {
        raw: String,
    },
}

impl Action {
    pub fn place(color: &str, rotation_index: usize, anchor: Coord) -> Action {
        Action::Place {
            color: color.to_string(),
            rotation_index,
            anchor,
        }
    }

    pub fn remove(color: &str) -> Action {
        Action::Remove {
            color: color.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    UnknownColor,
    AlreadyPlaced,
    NotPlaced,
    OutOfBounds,
    Collision,
    EpisodeEnded,
    InvalidRotation,
    UnparseableAction,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownColor => "unknown-color",
            RejectReason::AlreadyPlaced => "already-placed",
            RejectReason::NotPlaced => "not-placed",
            RejectReason::OutOfBounds => "out-of-bounds",
            RejectReason::Collision => "collision",
            RejectReason::EpisodeEnded => "episode-ended",
            RejectReason::InvalidRotation => "invalid-rotation",
            RejectReason::UnparseableAction => "unparseable-action",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Running,
    Solved,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Solved => "solved",
            Status::Failed => "failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    pub status: Status,
    pub steps_taken: u32,
    pub steps_left: u32,
    pub solved: bool,
}

/// One executed step with a digest of the state after it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: Action,
    pub result: ActionResult,
    pub digest: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("budget {0} outside supported range {MIN_BUDGET}..={MAX_BUDGET}")]
    BadBudget(u32),
    #[error("malformed instance: {0}")]
    BadInstance(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub budget: u32,
    /// Invalid actions cost a step unless disabled for ablations.
    pub invalid_consumes_step: bool,
}

impl EpisodeConfig {
    pub fn with_budget(budget: u32) -> Self {
        EpisodeConfig {
            budget,
            invalid_consumes_step: true,
        }
    }
}

pub fn sample_budget(rng: &mut impl Rng) -> u32 {
    rng.random_range(DEFAULT_BUDGET_RANGE.0..=DEFAULT_BUDGET_RANGE.1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedPiece {
    pub rotation_index: usize,
    pub anchor: Coord,
    pub cells: Vec<Coord>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    instance: Arc<PuzzleInstance>,
    config: EpisodeConfig,
    occupancy: HashMap<Coord, usize>,
    placed: BTreeMap<usize, PlacedPiece>,
    steps_taken: u32,
    status: Status,
    log: Vec<StepRecord>,
}

/// Cells of `piece` rotated, normalized, then moved so its minimum corner
/// sits at `anchor`.
pub fn placement_cells(piece: &Shape, rotation: &Rotation, anchor: Coord) -> Vec<Coord> {
    normalize(&rotate(piece, rotation)).translate(anchor).into_cells()
}

impl Episode {
    pub fn new(instance: Arc<PuzzleInstance>, config: EpisodeConfig) -> Result<Episode, EnvError> {
        if !(MIN_BUDGET..=MAX_BUDGET).contains(&config.budget) {
            return Err(EnvError::BadBudget(config.budget));
        }
        instance.check_well_formed().map_err(EnvError::BadInstance)?;
        Ok(Episode {
            instance,
            config,
            occupancy: HashMap::new(),
            placed: BTreeMap::new(),
            steps_taken: 0,
            status: Status::Running,
            log: Vec::new(),
        })
    }

    pub fn instance(&self) -> &PuzzleInstance {
        &self.instance
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps_taken
    }

    pub fn budget(&self) -> u32 {
        self.config.budget
    }

    pub fn steps_left(&self) -> u32 {
        self.config.budget - self.steps_taken
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    /// The last `window` steps, oldest first.
    pub fn recent(&self, window: usize) -> &[StepRecord] {
        &self.log[self.log.len().saturating_sub(window)..]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn occupant(&self, at: Coord) -> Option<usize> {
        self.occupancy.get(&at).copied()
    }

    pub fn placed(&self) -> &BTreeMap<usize, PlacedPiece> {
        &self.placed
    }

    pub fn is_solved(&self) -> bool {
        self.occupancy.len() == self.instance.dims.volume()
    }

    /// Unplaced colours in piece order.
    pub fn remaining(&self) -> Vec<String> {
        self.instance
            .pieces
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.placed.contains_key(i))
            .map(|(_, p)| p.color.clone())
            .collect()
    }

    fn result(&self, reason: Option<RejectReason>) -> ActionResult {
        ActionResult {
            valid: reason.is_none(),
            reason,
            status: self.status,
            steps_taken: self.steps_taken,
            steps_left: self.steps_left(),
            solved: self.status == Status::Solved,
        }
    }

    fn try_apply(&mut self, action: &Action) -> Result<(), RejectReason> {
        match action {
            Action::Place {
                color,
                rotation_index,
                anchor,
            } => {
                let piece = self
                    .instance
                    .piece_by_color(color)
                    .ok_or(RejectReason::UnknownColor)?;
                if self.placed.contains_key(&piece) {
                    return Err(RejectReason::AlreadyPlaced);
                }
                let rot = Rotation::from_index(*rotation_index).map_err(|_| RejectReason::InvalidRotation)?;
                let cells = placement_cells(&self.instance.pieces[piece].cells, &rot, *anchor);
                if !cells.iter().all(|&c| self.instance.dims.contains(c)) {
                    return Err(RejectReason::OutOfBounds);
                }
                if cells.iter().any(|c| self.occupancy.contains_key(c)) {
                    return Err(RejectReason::Collision);
                }
                self.occupancy.extend(cells.iter().map(|&c| (c, piece)));
                self.placed.insert(
                    piece,
                    PlacedPiece {
                        rotation_index: *rotation_index,
                        anchor: *anchor,
                        cells,
                    },
                );
                if self.is_solved() {
                    self.status = Status::Solved;
                }
                Ok(())
            }
            Action::Remove { color } => {
                let piece = self
                    .instance
                    .piece_by_color(color)
                    .ok_or(RejectReason::UnknownColor)?;
                let gone = self.placed.remove(&piece).ok_or(RejectReason::NotPlaced)?;
                for c in gone.cells {
                    self.occupancy.remove(&c);
                }
                Ok(())
            }
            Action::Done => {
                self.status = if self.is_solved() {
                    Status::Solved
                } else {
                    Status::Failed
                };
                Ok(())
            }
            Action::Unparseable { .. } => Err(RejectReason::UnparseableAction),
        }
    }

    /// Applies one action. Actions on an ended episode are rejected with
    /// `episode-ended` and leave everything, including the step count and
    /// the log, untouched.
    pub fn apply(&mut self, action: Action) -> ActionResult {
        if self.status != Status::Running {
            return self.result(Some(RejectReason::EpisodeEnded));
        }
        let outcome = self.try_apply(&action);
        if outcome.is_ok() || self.config.invalid_consumes_step {
            self.steps_taken += 1;
        }
        if self.status == Status::Running && self.steps_taken >= self.config.budget {
            self.status = Status::Failed;
        }
        let result = self.result(outcome.err());
        self.log.push(StepRecord {
            action,
            result: result.clone(),
            digest: self.digest(),
        });
        result
    }

    pub fn symbol_at(&self, at: Coord) -> Option<char> {
        let piece = self.occupant(at)?;
        Some(palette::lookup(&self.instance.pieces[piece].color).map_or('?', |p| p.symbol))
    }

    pub fn text_grid(&self) -> String {
        render::text_grid(self.instance.dims, |c| self.symbol_at(c))
    }

    /// Short hash of status, step count and occupancy.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.status.as_str());
        h.update(self.steps_taken.to_le_bytes());
        h.update(self.text_grid());
        hex::encode(&h.finalize()[..8])
    }

    pub fn voxels(&self) -> Vec<Voxel> {
        let mut out: Vec<Voxel> = self
            .occupancy
            .iter()
            .map(|(&at, &piece)| Voxel {
                at,
                rgb: piece_rgb(&self.instance, piece),
            })
            .collect();
        out.sort_by_key(|v| v.at);
        out
    }

    pub fn render_view(&self, kind: ViewKind) -> Vec<u8> {
        render::encode_png(&render::render(kind, self.instance.dims, &self.voxels()))
    }

    pub fn observe(&self, views: &[ViewKind]) -> Observation {
        let color_map = self
            .instance
            .pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let entry = palette::lookup(&p.color);
                (
                    p.color.clone(),
                    PieceInfo {
                        symbol: entry.map_or('?', |e| e.symbol),
                        rgb: entry.map_or([128; 3], |e| e.rgb),
                        cells: p.cells.clone(),
                        placed: self.placed.contains_key(&i),
                    },
                )
            })
            .collect();
        Observation {
            schema_version: crate::puzzle::SCHEMA_VERSION,
            views: views
                .iter()
                .map(|&kind| RenderedView {
                    name: kind.name().to_string(),
                    png: self.render_view(kind),
                })
                .collect(),
            text_grid: self.text_grid(),
            color_map,
            remaining: self.remaining(),
            steps_taken: self.steps_taken,
            steps_left: self.steps_left(),
            status: self.status,
            box_dims: self.instance.dims,
        }
    }
}

fn piece_rgb(inst: &PuzzleInstance, piece: usize) -> [u8; 3] {
    palette::lookup(&inst.pieces[piece].color).map_or([128; 3], |p| p.rgb)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceInfo {
    pub symbol: char,
    pub rgb: [u8; 3],
    pub cells: Shape,
    pub placed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedView {
    pub name: String,
    #[serde(with = "png_base64")]
    pub png: Vec<u8>,
}

mod png_base64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub schema_version: u32,
    pub views: Vec<RenderedView>,
    pub text_grid: String,
    pub color_map: BTreeMap<String, PieceInfo>,
    pub remaining: Vec<String>,
    pub steps_taken: u32,
    pub steps_left: u32,
    pub status: Status,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
}

/// Isometric render of one piece under a rotation, sized to its own extents.
pub fn piece_preview(piece: &Shape, rotation: &Rotation, rgb: [u8; 3]) -> Vec<u8> {
    let rotated = normalize(&rotate(piece, rotation));
    let [a, b, c] = rotated.extents();
    let dims = BoxDims::new(a, b, c).expect("non-empty piece");
    let vox: Vec<Voxel> = rotated.cells().iter().map(|&at| Voxel { at, rgb }).collect();
    render::encode_png(&render::render_iso(dims, &vox, false))
}

/// The manifest solution as place actions, in assembly order when present.
pub fn oracle_actions(inst: &PuzzleInstance) -> Vec<Action> {
    inst.placement_order()
        .into_iter()
        .filter_map(|piece| {
            let e = inst.entry_for(piece)?;
            Some(Action::place(
                &inst.pieces[piece].color,
                e.rotation_index,
                e.offset,
            ))
        })
        .collect()
}

/// Runs `actions` on a fresh episode.
pub fn replay(
    instance: Arc<PuzzleInstance>,
    config: EpisodeConfig,
    actions: impl IntoIterator<Item = Action>,
) -> Result<Episode, EnvError> {
    let mut ep = Episode::new(instance, config)?;
    for a in actions {
        ep.apply(a);
    }
    Ok(ep)
}

/// Index of the first recorded step whose state digest differs from a
/// replay of the same actions, or `None` if they agree throughout.
pub fn first_divergence(ep: &Episode, recorded: &[StepRecord]) -> Option<usize> {
    let log = ep.log();
    for (i, rec) in recorded.iter().enumerate() {
        match log.get(i) {
            Some(got) if got.digest == rec.digest && got.result == rec.result => {}
            _ => return Some(i),
        }
    }
    (log.len() != recorded.len()).then_some(recorded.len())
}
