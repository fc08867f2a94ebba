//! Run configuration: a TOML file, then environment, then flags.

use std::path::{Path, PathBuf};

use idtrack::baselines::BaselineConfig;
use idtrack::eval::{MethodKind, SwapConfig};
use idtrack::net::TrainConfig;
use idtrack::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "IDTRACK_OUT";
pub const RESOLVED_NAME: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub frames: usize,
    pub sequences: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { frames: 1000, sequences: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<MethodKind>,
    /// Fail the run if the net's success rate is below this.
    pub min_net_success: Option<f64>,
    /// Fail the run unless the net beats Kalman-HA by this many points.
    pub min_margin_over_kalman_ha: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { methods: MethodKind::ALL.to_vec(), min_net_success: None, min_margin_over_kalman_ha: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShuffleConfig {
    pub seed: u64,
    /// Fail the run unless ordered beats shuffled by this many points.
    pub min_gap: Option<f64>,
}

impl Default for ShuffleConfig {
    fn default() -> Self {
        ShuffleConfig { seed: 0, min_gap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { host: "127.0.0.1".into(), port: 8080, static_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub fine_tune: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { out: PathBuf::from("out"), manifest: None, checkpoint: None, fine_tune: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub sim: SimConfig,
    pub simulate: SimulateConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub eval: EvalConfig,
    pub swap: SwapConfig,
    pub shuffle: ShuffleConfig,
    pub serve: ServeConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sim.validate()?;
        self.train.validate()?;
        self.baselines.validate()?;
        let s = &self.swap;
        if s.stable_frames == 0 {
            return Err(CliError::Invalid("swap.stable_frames must be at least 1".into()));
        }
        for (name, v) in [
            ("eval.min_net_success", self.eval.min_net_success),
            ("eval.min_margin_over_kalman_ha", self.eval.min_margin_over_kalman_ha),
            ("shuffle.min_gap", self.shuffle.min_gap),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(CliError::Invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Writes the configuration the run actually used next to its outputs.
    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(RESOLVED_NAME);
        std::fs::write(&path, self.to_toml()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.sim.n_robots = 3;
        c.sim.max_detections = 5;
        c.paths.checkpoint = Some(PathBuf::from("a/b.ckpt"));
        c.eval.min_net_success = Some(0.85);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_take_defaults_and_unknown_keys_fail() {
        let c: RunConfig = toml::from_str("[sim]\nn_robots = 3\nmax_detections = 4\n").unwrap();
        assert_eq!(c.sim.n_robots, 3);
        assert_eq!(c.train, TrainConfig::default());
        assert!(toml::from_str::<RunConfig>("[sim]\nrobots = 3\n").is_err());
        let methods: RunConfig = toml::from_str("[eval]\nmethods = [\"jpda\", \"net\"]\n").unwrap();
        assert_eq!(methods.eval.methods, vec![MethodKind::Jpda, MethodKind::Net]);
    }
}
