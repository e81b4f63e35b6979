//! Run configuration file (TOML, `version = 1`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mqne_core::evolution::Schedule;
use mqne_core::gateblock::LibraryMode;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mnist,
    Cancer,
    Spt,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Mnist => "mnist",
            Task::Cancer => "cancer",
            Task::Spt => "spt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub task: Task,
    /// Mandatory; nothing is seeded from the clock.
    pub master_seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub library: LibrarySection,
    #[serde(default)]
    pub graph: GraphSection,
    pub data: DataSection,
    pub train: TrainSection,
    #[serde(default)]
    pub mqne: Option<MqneSection>,
    #[serde(default)]
    pub genetic: Option<GeneticSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySection {
    /// Defaults to the data qubits plus one readout qubit.
    #[serde(default)]
    pub qubits: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "yes")]
    pub include_empty: bool,
}

impl Default for LibrarySection {
    fn default() -> Self {
        LibrarySection {
            qubits: None,
            mode: default_mode(),
            include_empty: true,
        }
    }
}

impl LibrarySection {
    pub fn mode(&self) -> Result<LibraryMode> {
        self.mode.parse().with_context(|| format!("library.mode = `{}`", self.mode))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default = "yes")]
    pub exclude_empty: bool,
    #[serde(default)]
    pub max_nodes: Option<usize>,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            exclude_empty: true,
            max_nodes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Pre-built cache from `mqne dataset`; its split is used as is.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub digits: Option<[u8; 2]>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub spins: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
    /// `[train, validation, test]`.
    #[serde(default)]
    pub split: Option<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Random,
    Fixed,
    Inherit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub max_updates: Option<usize>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_init")]
    pub init: InitKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqneSection {
    pub n: Schedule,
    pub t: Schedule,
    pub l: usize,
    pub l_prime: usize,
    pub f_c: f64,
    pub g_c: usize,
    /// `all_rotations`, `uniform`, or a block index.
    #[serde(default = "default_start")]
    pub start: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneticSection {
    pub n: Schedule,
    pub t: Schedule,
    pub mutation_p: f64,
    pub length: usize,
    pub f_c: f64,
    pub g_c: usize,
    #[serde(default = "yes")]
    pub exclude_empty: bool,
}

fn yes() -> bool {
    true
}
fn default_mode() -> String {
    "full".into()
}
fn default_init() -> InitKind {
    InitKind::Random
}
fn default_start() -> String {
    "all_rotations".into()
}

impl RunConfig {
    /// Parses `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            bail!("{}: unsupported config version {} (expected {CONFIG_VERSION})", path.display(), cfg.version);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output);
        for p in [&mut cfg.data.cache, &mut cfg.data.images, &mut cfg.data.labels, &mut cfg.data.csv]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1
task = "spt"
master_seed = 3
output = "out"

[data]
spins = 4
samples = 20
split = [14, 6, 0]

[train]
learning_rate = 0.01
batch_size = 5
epochs = 2

[mqne]
n = 3
t = 1
l = 2
l_prime = 1
f_c = 1.0
g_c = 2
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, SAMPLE).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.output, dir.path().join("out"));
        assert_eq!(cfg.library.mode().unwrap(), LibraryMode::Full);
        assert_eq!(cfg.train.init, InitKind::Random);
        let again: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(toml::from_str::<RunConfig>(&SAMPLE.replace("epochs = 2", "epochs = 2\nepoch = 3")).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, SAMPLE.replace("version = 1", "version = 9")).unwrap();
        assert!(RunConfig::load(&p).is_err());
    }
}
