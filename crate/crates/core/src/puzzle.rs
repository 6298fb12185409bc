//! Puzzle instances and their on-disk manifest.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::AssemblyStep;
use crate::cover::Placement;
use crate::palette;
use crate::voxel::{BoxDims, Coord, Shape, Signature};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest {path} is inconsistent: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Mid,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Mid, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Mid => "mid",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "mid" | "medium" => Ok(Difficulty::Mid),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(format!("unknown difficulty {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceSpec {
    pub color: String,
    pub cells: Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionEntry {
    pub piece: usize,
    pub rotation_index: usize,
    pub offset: Coord,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenStats {
    pub visited_nodes: u64,
    pub attempts: u64,
}

/// One benchmark level, serialized verbatim as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleInstance {
    pub schema_version: u32,
    #[serde(rename = "box")]
    pub dims: BoxDims,
    pub difficulty: Difficulty,
    pub pieces: Vec<PieceSpec>,
    pub solution: Vec<SolutionEntry>,
    pub assembly_order: Vec<AssemblyStep>,
    pub minimal_steps: usize,
    pub signature: Signature,
    pub stats: GenStats,
}

impl PuzzleInstance {
    pub fn shapes(&self) -> Vec<Shape> {
        self.pieces.iter().map(|p| p.cells.clone()).collect()
    }

    pub fn piece_by_color(&self, color: &str) -> Option<usize> {
        self.pieces.iter().position(|p| p.color == color)
    }

    pub fn entry_for(&self, piece: usize) -> Option<&SolutionEntry> {
        self.solution.iter().find(|s| s.piece == piece)
    }

    /// Cells of each piece in the stored solution, indexed by piece.
    pub fn solved_cells(&self) -> Option<Vec<Vec<Coord>>> {
        (0..self.pieces.len())
            .map(|i| {
                let e = self.entry_for(i)?;
                Placement::realize(&self.pieces[i].cells, e.rotation_index, e.offset)
            })
            .collect()
    }

    pub fn solution_placements(&self) -> Option<Vec<Placement>> {
        let cells = self.solved_cells()?;
        Some(
            cells
                .into_iter()
                .enumerate()
                .map(|(i, cells)| {
                    let e = self.entry_for(i).expect("checked above");
                    Placement {
                        piece_index: i,
                        rotation: e.rotation_index,
                        offset: e.offset,
                        cells,
                    }
                })
                .collect(),
        )
    }

    /// Piece indices in the order a pure-placement replay should use:
    /// assembly order when present, otherwise ascending index.
    pub fn placement_order(&self) -> Vec<usize> {
        if self.assembly_order.len() == self.pieces.len() {
            self.assembly_order.iter().map(|s| s.piece).collect()
        } else {
            (0..self.pieces.len()).collect()
        }
    }

    /// Checks that load-time invariants hold: schema version, known unique
    /// colours, in-range solution references, consistent volumes.
    pub fn check_well_formed(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.pieces.is_empty() {
            return Err("no pieces".into());
        }
        let mut colors: Vec<&str> = self.pieces.iter().map(|p| p.color.as_str()).collect();
        if let Some(bad) = colors.iter().find(|c| palette::lookup(c).is_none()) {
            return Err(format!("unknown color {bad:?}"));
        }
        colors.sort_unstable();
        colors.dedup();
        if colors.len() != self.pieces.len() {
            return Err("duplicate piece colors".into());
        }
        let volume: usize = self.pieces.iter().map(|p| p.cells.len()).sum();
        if volume != self.dims.volume() {
            return Err(format!(
                "piece volume {volume} does not match box volume {}",
                self.dims.volume()
            ));
        }
        for s in &self.solution {
            if s.piece >= self.pieces.len() || s.rotation_index >= 24 {
                return Err(format!("solution entry out of range: {s:?}"));
            }
        }
        for s in &self.assembly_order {
            if s.piece >= self.pieces.len() {
                return Err(format!("assembly step out of range: {s:?}"));
            }
        }
        Ok(())
    }
}

/// A puzzle with the identifier it is stored under.
#[derive(Clone, Debug)]
pub struct StoredPuzzle {
    pub id: String,
    pub instance: PuzzleInstance,
}

pub fn read_manifest(path: &Path) -> Result<PuzzleInstance, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let inst: PuzzleInstance = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    inst.check_well_formed().map_err(|reason| DatasetError::Invalid {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(inst)
}

/// Every `<dir>/<id>/manifest.json`, sorted by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<StoredPuzzle>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let manifest = entry.path().join(MANIFEST_FILE);
        if !manifest.is_file() {
            continue;
        }
        let id = entry.file_name().to_string_lossy().into_owned();
        out.push(StoredPuzzle {
            id,
            instance: read_manifest(&manifest)?,
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}
