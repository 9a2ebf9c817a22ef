//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{KMeansInit, KWindowsConfig, Norm};
use crate::coordinator::{ExecutionMode, Schedule};
use crate::data::{generate_clusters, generate_regression, load_csv, ClusterShape, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::gp::{CombinationRule, Kernel};
use crate::learners::{Objective, Theta, UpdateMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Paramserver,
    AggregateLs,
    GpCommittee,
    Kwindows,
    Kmeans,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Linear regression data; `weights` defaults to `(1, −1, 1, …)`.
    Regression {
        n_points: usize,
        dim: usize,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        intercept: f64,
        noise_sigma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Clusters {
        centers: Vec<Vec<f64>>,
        spread: f64,
        per_cluster: usize,
        shape: ClusterShape,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
    },
}

impl DatasetSource {
    /// Builds the dataset; unseeded generators use `default_seed`. Relative CSV
    /// paths resolve against `base_dir`.
    pub fn load(&self, default_seed: u64, base_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Regression {
                n_points,
                dim,
                weights,
                intercept,
                noise_sigma,
                seed,
            } => {
                let weights = weights
                    .clone()
                    .unwrap_or_else(|| (0..*dim).map(|d| if d % 2 == 0 { 1.0 } else { -1.0 }).collect());
                Error::check_dim(*dim, weights.len())?;
                let truth = Theta::new(weights, *intercept);
                generate_regression(*n_points, *dim, &truth, *noise_sigma, seed.unwrap_or(default_seed))
            }
            DatasetSource::Clusters {
                centers,
                spread,
                per_cluster,
                shape,
                seed,
            } => generate_clusters(centers, *spread, *per_cluster, *shape, seed.unwrap_or(default_seed)),
            DatasetSource::Csv { path } => load_csv(base_dir.join(path)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransportConfig {
    #[default]
    Inprocess,
    /// Serves on `host:port` (0 picks a free port) in this process and
    /// connects to it over TCP.
    Tcp { host: String, port: u16 },
}

fn one() -> usize {
    1
}

fn full_gradient() -> UpdateMode {
    UpdateMode::DeterministicFullGradient
}

fn serialized() -> ExecutionMode {
    ExecutionMode::Serialized
}

fn oracle_epochs() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// `None` picks `0.5 / L` on the pooled data.
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default = "one")]
    pub epochs: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "full_gradient")]
    pub mode: UpdateMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            epochs: 1,
            batch_size: None,
            mode: UpdateMode::DeterministicFullGradient,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamServerParams {
    pub objective: Objective,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub schedule: Schedule,
    #[serde(default = "serialized")]
    pub mode: ExecutionMode,
    pub contacts: u64,
    /// Full-gradient iterations for the centralized reference when no closed
    /// form exists.
    #[serde(default = "oracle_epochs")]
    pub oracle_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per dimension.
    pub steps: usize,
}

impl PredictGrid {
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        Error::check_dim(self.lo.len(), self.hi.len())?;
        if self.steps == 0 {
            return Err(Error::invalid("grid steps must be at least 1"));
        }
        let axis = |d: usize, i: usize| {
            if self.steps == 1 {
                0.5 * (self.lo[d] + self.hi[d])
            } else {
                self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (self.steps - 1) as f64
            }
        };
        let dim = self.lo.len();
        let total = self.steps.checked_pow(dim as u32).ok_or_else(|| Error::invalid("grid too large"))?;
        Ok((0..total)
            .map(|mut flat| {
                let mut x = vec![0.0; dim];
                for (d, v) in x.iter_mut().enumerate().rev() {
                    *v = axis(d, flat % self.steps);
                    flat /= self.steps;
                }
                x
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpParams {
    pub kernel_grid: Vec<Kernel>,
    /// Rules to report; BCM-type rules without a prior variance use the
    /// selected kernel's signal variance. Defaults to all four.
    #[serde(default)]
    pub rules: Option<Vec<CombinationRule>>,
    pub predict: PredictGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KWindowsParams {
    pub windows: KWindowsConfig,
    /// Run per-shard and merge on the server (needs `split`).
    #[serde(default)]
    pub distributed: bool,
}

fn kmeans_iters() -> usize {
    300
}

fn kmeans_init() -> KMeansInit {
    KMeansInit::SeededRandomPoints
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansParams {
    pub k: usize,
    pub norm: Norm,
    #[serde(default = "kmeans_init")]
    pub init: KMeansInit,
    #[serde(default = "kmeans_iters")]
    pub max_iters: usize,
    /// Seeds `seed, seed+1, …`; the lowest objective wins.
    #[serde(default = "one")]
    pub restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub paramserver: Option<ParamServerParams>,
    #[serde(default)]
    pub gp: Option<GpParams>,
    #[serde(default)]
    pub kwindows: Option<KWindowsParams>,
    #[serde(default)]
    pub kmeans: Option<KMeansParams>,
    /// Directory relative CSV paths resolve against; set by [`load_config`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses a JSON document, reporting the path of the first offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Cross-field checks that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        let needs_split = match self.task {
            TaskKind::Paramserver | TaskKind::AggregateLs | TaskKind::GpCommittee => true,
            TaskKind::Kwindows => self.kwindows.as_ref().is_some_and(|k| k.distributed),
            TaskKind::Kmeans => false,
        };
        if needs_split && self.split.is_none() {
            return Err(config_error("split", "this task needs a split"));
        }
        if let Some(split) = &self.split {
            if split.k == 0 {
                return Err(config_error("split.k", "must be at least 1"));
            }
        }
        match self.task {
            TaskKind::Paramserver => {
                let p = self
                    .paramserver
                    .as_ref()
                    .ok_or_else(|| config_error("paramserver", "missing section for task paramserver"))?;
                p.objective
                    .validate()
                    .map_err(|e| config_error("paramserver.objective", e.to_string()))?;
                p.schedule
                    .validate()
                    .map_err(|e| config_error("paramserver.schedule", e.to_string()))?;
                let k = self.split.map(|s| s.k).unwrap_or(0);
                if p.schedule.k() != k {
                    return Err(config_error(
                        "paramserver.schedule",
                        format!("covers {} nodes but split.k is {k}", p.schedule.k()),
                    ));
                }
                if let ExecutionMode::Overlapped { delays } = &p.mode {
                    delays
                        .validate(k)
                        .map_err(|e| config_error("paramserver.mode.delays", e.to_string()))?;
                }
                if p.contacts == 0 {
                    return Err(config_error("paramserver.contacts", "must be at least 1"));
                }
            }
            TaskKind::GpCommittee => {
                let g = self
                    .gp
                    .as_ref()
                    .ok_or_else(|| config_error("gp", "missing section for task gp-committee"))?;
                if g.kernel_grid.is_empty() {
                    return Err(config_error("gp.kernel_grid", "must not be empty"));
                }
                for (i, k) in g.kernel_grid.iter().enumerate() {
                    k.validate()
                        .map_err(|e| config_error(&format!("gp.kernel_grid[{i}]"), e.to_string()))?;
                }
                g.predict
                    .points()
                    .map_err(|e| config_error("gp.predict", e.to_string()))?;
            }
            TaskKind::Kwindows => {
                let k = self
                    .kwindows
                    .as_ref()
                    .ok_or_else(|| config_error("kwindows", "missing section for task kwindows"))?;
                k.windows
                    .validate()
                    .map_err(|e| config_error("kwindows.windows", e.to_string()))?;
            }
            TaskKind::Kmeans => {
                let k = self
                    .kmeans
                    .as_ref()
                    .ok_or_else(|| config_error("kmeans", "missing section for task kmeans"))?;
                if k.k == 0 {
                    return Err(config_error("kmeans.k", "must be at least 1"));
                }
                if k.restarts == 0 {
                    return Err(config_error("kmeans.restarts", "must be at least 1"));
                }
            }
            TaskKind::AggregateLs => {}
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const AGG: &str = r#"{
        "task": "aggregate-ls",
        "dataset": {"regression": {"n_points": 40, "dim": 2, "noise_sigma": 0.1}},
        "split": {"mode": "contiguous", "k": 2}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::from_json(AGG).unwrap();
        assert_eq!(c.task, TaskKind::AggregateLs);
        assert_eq!(c.transport, TransportConfig::Inprocess);
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let text = AGG.replace("\"noise_sigma\"", "\"noise_sigmaa\"");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "dataset.regression.noise_sigmaa"),
            other => panic!("{other:?}"),
        }
        let text = AGG.replace("\"task\"", "\"tsak\"");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn missing_task_section_is_a_config_error() {
        let text = AGG.replace("aggregate-ls", "paramserver");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "paramserver"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_points_enumerate_row_major() {
        let g = PredictGrid {
            lo: vec![0.0, 10.0],
            hi: vec![1.0, 20.0],
            steps: 2,
        };
        assert_eq!(
            g.points().unwrap(),
            vec![vec![0.0, 10.0], vec![0.0, 20.0], vec![1.0, 10.0], vec![1.0, 20.0]]
        );
    }
}
