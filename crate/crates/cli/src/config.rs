//! Config file: TOML with one optional table per subcommand. Keys are the
//! long flag names; a flag given on the command line wins.
//!
//! ```toml
//! [gen]
//! box = ["2x3x3", "3x3x4"]
//! mode = ["mid", "hard"]
//! count = 50
//! seed = 7
//! out = "data"
//!
//! [eval]
//! suite = "data"
//! agent = "agents/model.toml"
//! mode = "interactive"
//! k = 4
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub gen: GenFile,
    #[serde(default)]
    pub serve: ServeFile,
    #[serde(default)]
    pub eval: EvalFile,
    #[serde(default)]
    pub replay: ReplayFile,
    #[serde(default)]
    pub report: ReportFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenFile {
    #[serde(rename = "box")]
    pub boxes: Option<Vec<String>>,
    #[serde(rename = "mode")]
    pub modes: Option<Vec<String>>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub require_assembly: Option<bool>,
    pub removability: Option<String>,
    pub workers: Option<usize>,
    pub min_piece: Option<Vec<usize>>,
    pub max_piece: Option<usize>,
    pub max_pieces: Option<usize>,
    pub attempts: Option<usize>,
    pub hard_threshold: Option<u64>,
    pub node_budget: Option<u64>,
    pub max_calls_factor: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ServeFile {
    pub data: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub token: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalFile {
    pub suite: Option<PathBuf>,
    pub agent: Option<String>,
    pub mode: Option<String>,
    pub k: Option<u32>,
    pub budget: Option<u32>,
    pub history_window: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub service: Option<String>,
    pub token: Option<String>,
    pub via_service: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReplayFile {
    pub trajectory: Option<PathBuf>,
    pub suite: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportFile {
    pub runs: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile, String> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
