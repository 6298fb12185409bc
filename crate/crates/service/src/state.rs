//! Service state: the immutable dataset, live episodes behind their own
//! locks, the image cache and calibration records, plus their on-disk logs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use forge_core::env::{
    first_divergence, replay, sample_budget, Action, ActionResult, Episode, EpisodeConfig, Status,
    StepRecord, MAX_BUDGET, MIN_BUDGET,
};
use forge_core::eval::calibration::{summarize, tier_for, CalibrationRecord};
use forge_core::eval::driver::EpisodeResult;
use forge_core::palette;
use forge_core::puzzle::{load_dataset, StoredPuzzle};
use forge_core::render::ViewKind;
use forge_core::PuzzleInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::api::*;

pub const EPISODE_DIR: &str = "episodes";
pub const CALIBRATION_FILE: &str = "calibration.jsonl";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Episode logs and calibration records; defaults to
    /// `<data_dir>/.service`.
    pub state_dir: Option<PathBuf>,
    pub token: Option<String>,
    pub port: u16,
    /// Seed for default budgets; random when absent.
    pub seed: Option<u64>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            state_dir: None,
            token: None,
            port: 8080,
            seed: None,
        }
    }

    /// `FORGE_DATA_DIR` (default `data`), `FORGE_PORT` (default 8080),
    /// `FORGE_TOKEN` (unset or empty disables auth).
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = ServiceConfig::new(std::env::var("FORGE_DATA_DIR").unwrap_or_else(|_| "data".into()));
        if let Ok(p) = std::env::var("FORGE_PORT") {
            cfg.port = p
                .parse()
                .map_err(|_| format!("FORGE_PORT: not a port number: {p:?}"))?;
        }
        cfg.token = std::env::var("FORGE_TOKEN").ok().filter(|t| !t.is_empty());
        Ok(cfg)
    }

    pub fn state_dir(&self) -> PathBuf {
        self.state_dir
            .clone()
            .unwrap_or_else(|| self.data_dir.join(".service"))
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error("loading dataset: {0}")]
    Dataset(#[from] forge_core::puzzle::DatasetError),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// One line of an episode's event log.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum EpisodeEvent {
    Created {
        schema_version: u32,
        episode_id: String,
        instance_id: String,
        budget: u32,
        created_at_unix: u64,
    },
    Step {
        record: StepRecord,
    },
    Interrupted,
}

pub struct Slot {
    pub instance_id: String,
    pub created_at_unix: u64,
    pub episode: Episode,
    pub interrupted: bool,
    log: Option<File>,
    log_path: PathBuf,
}

impl Slot {
    pub fn status(&self) -> Status {
        if self.interrupted {
            Status::Failed
        } else {
            self.episode.status()
        }
    }

    pub fn handle(&self, episode_id: &str) -> EpisodeHandle {
        EpisodeHandle {
            schema_version: API_SCHEMA_VERSION,
            episode_id: episode_id.to_string(),
            instance_id: self.instance_id.clone(),
            created_at_unix: self.created_at_unix,
            status: self.status(),
            budget: self.episode.budget(),
            interrupted: self.interrupted,
        }
    }

    pub fn result(&self, episode_id: &str) -> EpisodeResult {
        let r = EpisodeResult::of(episode_id, &self.instance_id, &self.episode);
        if self.interrupted {
            r.interrupted()
        } else {
            r
        }
    }

    fn append(&mut self, ev: &EpisodeEvent) {
        let Some(f) = self.log.as_mut() else { return };
        let mut line = serde_json::to_vec(ev).expect("event serializes");
        line.push(b'\n');
        if let Err(e) = f.write_all(&line).and_then(|_| f.flush()) {
            log::error!("episode log {}: {e}", self.log_path.display());
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub dataset: BTreeMap<String, Arc<PuzzleInstance>>,
    episodes: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    images: RwLock<HashMap<String, Bytes>>,
    calibration: Mutex<(Vec<CalibrationRecord>, Option<File>)>,
    rng: Mutex<ChaCha8Rng>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StartError + '_ {
    move |source| StartError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses JSON lines, tolerating a torn final line.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line.trim()) {
            Ok(v) => out.push(v),
            Err(e) if !line.ends_with('\n') => log::warn!("{}: torn final line skipped: {e}", path.display()),
            Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
        }
    }
    Ok(out)
}

fn open_append(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

impl AppState {
    /// Loads the dataset and restores episode logs. Episodes that were
    /// still running when the previous process stopped are marked
    /// interrupted, both in memory and in their logs.
    pub fn open(config: ServiceConfig) -> Result<AppState, StartError> {
        let stored = load_dataset(&config.data_dir)?;
        Self::with_dataset(config, stored)
    }

    pub fn with_dataset(config: ServiceConfig, stored: Vec<StoredPuzzle>) -> Result<AppState, StartError> {
        let dataset: BTreeMap<String, Arc<PuzzleInstance>> =
            stored.into_iter().map(|s| (s.id, Arc::new(s.instance))).collect();
        let state_dir = config.state_dir();
        let ep_dir = state_dir.join(EPISODE_DIR);
        fs::create_dir_all(&ep_dir).map_err(io_at(&ep_dir))?;

        let cal_path = state_dir.join(CALIBRATION_FILE);
        let records = if cal_path.is_file() {
            read_jsonl(&cal_path).map_err(io_at(&cal_path))?
        } else {
            Vec::new()
        };
        let cal_file = open_append(&cal_path).map_err(io_at(&cal_path))?;

        let mut episodes = HashMap::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(&ep_dir)
            .map_err(io_at(&ep_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        entries.sort();
        for path in entries {
            match restore(&path, &dataset) {
                Ok(Some((id, slot))) => {
                    episodes.insert(id, Arc::new(Mutex::new(slot)));
                }
                Ok(None) => {}
                Err(e) => log::warn!("skipping episode log {}: {e}", path.display()),
            }
        }
        if !episodes.is_empty() {
            log::info!("restored {} episode(s)", episodes.len());
        }
        let seed = config.seed.unwrap_or_else(|| rand::rng().random());
        Ok(AppState {
            config,
            dataset,
            episodes: RwLock::new(episodes),
            images: RwLock::new(HashMap::new()),
            calibration: Mutex::new((records, Some(cal_file))),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    pub fn instance(&self, id: &str) -> Result<&Arc<PuzzleInstance>, ApiError> {
        self.dataset
            .get(id)
            .ok_or_else(|| ApiError::not_found("instance", id))
    }

    pub fn instances(&self) -> InstanceList {
        InstanceList {
            schema_version: API_SCHEMA_VERSION,
            instances: self
                .dataset
                .iter()
                .map(|(id, inst)| InstanceSummary {
                    id: id.clone(),
                    box_dims: inst.dims,
                    difficulty: inst.difficulty,
                    pieces: inst.pieces.len(),
                    minimal_steps: inst.minimal_steps,
                    signature: inst.signature.as_str().to_string(),
                })
                .collect(),
        }
    }

    pub fn instance_detail(&self, id: &str) -> Result<InstanceDetail, ApiError> {
        let inst = self.instance(id)?;
        let pieces = inst
            .pieces
            .iter()
            .map(|p| {
                let entry = palette::lookup(&p.color);
                PieceView {
                    color: p.color.clone(),
                    symbol: entry.map_or('?', |e| e.symbol),
                    rgb: entry.map_or([128; 3], |e| e.rgb),
                    cells: p.cells.clone(),
                }
            })
            .collect();
        let calibration = summarize(id, &self.calibration.lock().unwrap().0);
        Ok(InstanceDetail {
            schema_version: API_SCHEMA_VERSION,
            id: id.to_string(),
            box_dims: inst.dims,
            difficulty: inst.difficulty,
            minimal_steps: inst.minimal_steps,
            signature: inst.signature.as_str().to_string(),
            pieces,
            calibration,
        })
    }

    pub fn image(&self, sha: &str) -> Option<Bytes> {
        self.images.read().unwrap().get(sha).cloned()
    }

    fn store_image(&self, png: Vec<u8>) -> String {
        let sha = hex::encode(Sha256::digest(&png));
        self.images
            .write()
            .unwrap()
            .entry(sha.clone())
            .or_insert_with(|| Bytes::from(png));
        sha
    }

    pub fn observation(&self, slot: &Slot) -> WireObservation {
        let obs = slot.episode.observe(&ViewKind::ALL);
        let views = obs
            .views
            .into_iter()
            .map(|v| {
                let sha = self.store_image(v.png);
                ViewRef {
                    name: v.name,
                    url: format!("/images/{sha}.png"),
                    sha256: sha,
                }
            })
            .collect();
        WireObservation {
            schema_version: API_SCHEMA_VERSION,
            views,
            text_grid: obs.text_grid,
            color_map: obs.color_map,
            remaining: obs.remaining,
            steps_taken: obs.steps_taken,
            steps_left: obs.steps_left,
            status: slot.status(),
            box_dims: obs.box_dims,
        }
    }

    pub fn slot(&self, episode_id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.episodes
            .read()
            .unwrap()
            .get(episode_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("episode", episode_id))
    }

    pub fn episode_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.episodes.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create_episode(&self, req: &CreateEpisode) -> Result<CreatedEpisode, ApiError> {
        let inst = self.instance(&req.instance_id)?.clone();
        let budget = match req.budget {
            Some(b) if !(MIN_BUDGET..=MAX_BUDGET).contains(&b) => {
                return Err(ApiError::bad_request(format!(
                    "budget {b} outside {MIN_BUDGET}..={MAX_BUDGET}"
                )))
            }
            Some(b) => b,
            None => sample_budget(&mut *self.rng.lock().unwrap()),
        };
        let episode = Episode::new(inst, EpisodeConfig::with_budget(budget))
            .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
        let id = format!("ep-{}", uuid::Uuid::new_v4().simple());
        let log_path = self
            .config
            .state_dir()
            .join(EPISODE_DIR)
            .join(format!("{id}.jsonl"));
        let log = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&log_path)
            .map_err(|e| ApiError::new(ErrorCode::Internal, format!("episode log: {e}")))?;
        let mut slot = Slot {
            instance_id: req.instance_id.clone(),
            created_at_unix: now_unix(),
            episode,
            interrupted: false,
            log: Some(log),
            log_path,
        };
        slot.append(&EpisodeEvent::Created {
            schema_version: API_SCHEMA_VERSION,
            episode_id: id.clone(),
            instance_id: slot.instance_id.clone(),
            budget,
            created_at_unix: slot.created_at_unix,
        });
        let created = CreatedEpisode {
            handle: slot.handle(&id),
            observation: self.observation(&slot),
        };
        self.episodes
            .write()
            .unwrap()
            .insert(id, Arc::new(Mutex::new(slot)));
        Ok(created)
    }

    /// Applies one action under the episode's lock and logs it before the
    /// lock is released, so log order is application order.
    pub fn step(&self, episode_id: &str, action: Action) -> Result<StepResponse, ApiError> {
        let slot = self.slot(episode_id)?;
        let mut slot = slot.lock().unwrap();
        if slot.status() != Status::Running {
            return Err(ApiError::new(
                ErrorCode::Conflict,
                format!("episode {episode_id} already ended"),
            ));
        }
        let result: ActionResult = slot.episode.apply(action);
        let record = slot.episode.log().last().expect("apply logs").clone();
        slot.append(&EpisodeEvent::Step { record });
        if slot.status() != Status::Running {
            slot.log = None;
        }
        Ok(StepResponse {
            schema_version: API_SCHEMA_VERSION,
            result,
            observation: self.observation(&slot),
        })
    }

    pub fn calibrate(&self, req: &CalibrationRequest) -> Result<CalibrationResponse, ApiError> {
        self.instance(&req.instance_id)?;
        if req.annotator.trim().is_empty() {
            return Err(ApiError::bad_request("annotator must not be empty"));
        }
        let tier = tier_for(req.solve_time_s).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let record = CalibrationRecord {
            schema_version: API_SCHEMA_VERSION,
            instance_id: req.instance_id.clone(),
            annotator: req.annotator.clone(),
            solve_time_s: req.solve_time_s,
        };
        let mut guard = self.calibration.lock().unwrap();
        let (records, file) = &mut *guard;
        if let Some(f) = file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            f.write_all(&line)
                .and_then(|_| f.flush())
                .map_err(|e| ApiError::new(ErrorCode::Internal, format!("calibration log: {e}")))?;
        }
        records.push(record.clone());
        let summary = summarize(&req.instance_id, records).expect("just recorded");
        Ok(CalibrationResponse {
            schema_version: API_SCHEMA_VERSION,
            record,
            tier,
            summary,
        })
    }
}

/// Rebuilds one episode from its log by replaying the recorded actions.
fn restore(
    path: &Path,
    dataset: &BTreeMap<String, Arc<PuzzleInstance>>,
) -> io::Result<Option<(String, Slot)>> {
    let events: Vec<EpisodeEvent> = read_jsonl(path)?;
    let mut it = events.iter();
    let Some(EpisodeEvent::Created {
        episode_id,
        instance_id,
        budget,
        created_at_unix,
        ..
    }) = it.next()
    else {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "log does not start with a created event",
        ));
    };
    let Some(inst) = dataset.get(instance_id) else {
        log::warn!("episode {episode_id}: instance {instance_id} no longer in dataset");
        return Ok(None);
    };
    let mut recorded = Vec::new();
    let mut interrupted = false;
    for ev in it {
        match ev {
            EpisodeEvent::Step { record } => recorded.push(record.clone()),
            EpisodeEvent::Interrupted => interrupted = true,
            EpisodeEvent::Created { .. } => {}
        }
    }
    let episode = replay(
        inst.clone(),
        EpisodeConfig::with_budget(*budget),
        recorded.iter().map(|r| r.action.clone()),
    )
    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    if let Some(i) = first_divergence(&episode, &recorded) {
        log::warn!("episode {episode_id}: replay diverges from its log at step {i}");
    }
    let mut slot = Slot {
        instance_id: instance_id.clone(),
        created_at_unix: *created_at_unix,
        episode,
        interrupted,
        log: None,
        log_path: path.to_path_buf(),
    };
    if slot.episode.status() == Status::Running && !slot.interrupted {
        slot.log = Some(open_append(path)?);
        slot.append(&EpisodeEvent::Interrupted);
        slot.log = None;
        slot.interrupted = true;
    }
    Ok(Some((episode_id.clone(), slot)))
}
