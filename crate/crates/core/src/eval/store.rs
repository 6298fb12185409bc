//! Run directories: `run.json` metadata plus an append-only
//! `trajectories.jsonl`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::AgentConfig;
use super::{EvalMode, TrajectoryRecord};

pub const RUN_META_FILE: &str = "run.json";
pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad record in {path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub run_id: String,
    pub agent: AgentConfig,
    pub mode: EvalMode,
    pub k: u32,
    pub budget: Option<u32>,
    pub history_window: usize,
    pub seed: u64,
    pub suite: String,
    pub instances: usize,
}

pub fn write_meta(dir: &Path, meta: &RunMeta) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let path = dir.join(RUN_META_FILE);
    let json = serde_json::to_vec_pretty(meta).expect("meta serializes");
    fs::write(&path, json).map_err(io_at(&path))
}

pub fn read_meta(dir: &Path) -> Result<RunMeta, StoreError> {
    let path = dir.join(RUN_META_FILE);
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path,
        line: 0,
        source,
    })
}

/// Appends one JSON line per record and flushes after each.
pub struct TrajectoryWriter {
    file: File,
    path: PathBuf,
}

impl TrajectoryWriter {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_at(parent))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_at(path))?;
        Ok(TrajectoryWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rec: &TrajectoryRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(rec).expect("record serializes");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_at(&self.path))?;
        self.file.flush().map_err(io_at(&self.path))
    }
}

/// Reads all records. A final line without a newline is a torn write and
/// is skipped with a warning; any other bad line is an error.
pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>, StoreError> {
    let file = File::open(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(io_at(path))?;
        if read == 0 {
            break;
        }
        n += 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line.trim()) {
            Ok(rec) => out.push(rec),
            Err(e) if !complete => {
                log::warn!("skipping torn final line {n} in {}: {e}", path.display());
            }
            Err(source) => {
                return Err(StoreError::Json {
                    path: path.to_path_buf(),
                    line: n,
                    source,
                })
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub meta: Option<RunMeta>,
    pub records: Vec<TrajectoryRecord>,
}

/// `dir` itself if it holds a trajectory file, otherwise each immediate
/// subdirectory that does, sorted by path.
pub fn load_runs(dir: &Path) -> Result<Vec<LoadedRun>, StoreError> {
    let mut dirs = Vec::new();
    if dir.join(TRAJECTORY_FILE).is_file() {
        dirs.push(dir.to_path_buf());
    } else if dir.is_dir() {
        for e in fs::read_dir(dir).map_err(io_at(dir))? {
            let p = e.map_err(io_at(dir))?.path();
            if p.join(TRAJECTORY_FILE).is_file() {
                dirs.push(p);
            }
        }
    }
    dirs.sort();
    dirs.into_iter()
        .map(|d| {
            Ok(LoadedRun {
                meta: read_meta(&d).ok(),
                records: read_trajectories(&d.join(TRAJECTORY_FILE))?,
                dir: d,
            })
        })
        .collect()
}
