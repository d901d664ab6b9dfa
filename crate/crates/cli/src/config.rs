//! Run-spec parsing: a TOML file describes the scenario, the algorithm
//! roster, the SNR sweep, and the trial budget, so whole experiments are
//! reproducible from a checked-in file plus one seed.

use std::fmt;
use std::path::PathBuf;

use onebit_core::biht::BihtConfig;
use onebit_core::bsbl::SolverConfig;
use onebit_core::doa::{Algorithm, NamedAlgorithm, NoiseVarianceMode, Scenario};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub seed: u64,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub snr_sweep_db: Vec<f64>,
    pub scenario: ScenarioSpec,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub grid_start_deg: f64,
    pub grid_stop_deg: f64,
    pub grid_step_deg: f64,
    pub true_doas_deg: Vec<f64>,
    pub amplitudes_db: Vec<f64>,
    pub sensors: usize,
    pub snapshots: usize,
    #[serde(default = "default_spacing")]
    pub d_over_lambda: f64,
}

fn default_spacing() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum AlgorithmSpec {
    Bsbl {
        id: String,
        #[serde(default = "default_noise")]
        noise: NoiseSpec,
        #[serde(default)]
        restrict_top_k: bool,
        #[serde(default = "default_bsbl_iters")]
        iters: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    Biht {
        id: String,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default = "default_biht_iters")]
        iters: usize,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSpec {
    /// Solver is told the calibrated noise variance.
    True,
    /// Solver assumes unit complex noise variance (mismatched runs).
    Unit,
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::True
}
fn default_bsbl_iters() -> usize {
    500
}
fn default_gamma() -> f64 {
    0.6
}
fn default_a() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    1.0
}
fn default_biht_iters() -> usize {
    100
}

impl AlgorithmSpec {
    pub fn id(&self) -> &str {
        match self {
            AlgorithmSpec::Bsbl { id, .. } | AlgorithmSpec::Biht { id, .. } => id,
        }
    }
}

impl RunSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        // toml reports line/column positions in its error display
        let spec: RunSpec = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return err("trials must be at least 1");
        }
        if self.snr_sweep_db.is_empty() {
            return err("snr_sweep_db must list at least one SNR");
        }
        if self.algorithms.is_empty() {
            return err("at least one [[algorithm]] table is required");
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if a.id().is_empty() {
                return err(format!("algorithm {} has an empty id", i + 1));
            }
            if self.algorithms[..i].iter().any(|b| b.id() == a.id()) {
                return err(format!("duplicate algorithm id {:?}", a.id()));
            }
        }
        let s = &self.scenario;
        if s.grid_step_deg.is_nan() || s.grid_step_deg <= 0.0 || s.grid_stop_deg < s.grid_start_deg
        {
            return err("grid must have positive step and stop >= start");
        }
        // the full Scenario checks (grid membership of the DOAs, sensor
        // count, amplitude list length) run via the core validator
        self.scenario(self.snr_sweep_db[0])
            .validate()
            .map_err(|e| ConfigError(e.to_string()))
    }

    /// Materialize the scenario at one SNR point of the sweep.
    pub fn scenario(&self, snr_db: f64) -> Scenario {
        let s = &self.scenario;
        let n = ((s.grid_stop_deg - s.grid_start_deg) / s.grid_step_deg).round() as usize + 1;
        Scenario {
            grid: (0..n)
                .map(|i| s.grid_start_deg + i as f64 * s.grid_step_deg)
                .collect(),
            true_doas: s.true_doas_deg.clone(),
            amplitudes_db: s.amplitudes_db.clone(),
            sensors: s.sensors,
            snapshots: s.snapshots,
            snr_db,
            d_over_lambda: s.d_over_lambda,
        }
    }

    pub fn named_algorithms(&self) -> Vec<NamedAlgorithm> {
        self.algorithms
            .iter()
            .map(|spec| match spec {
                AlgorithmSpec::Bsbl {
                    id,
                    noise,
                    restrict_top_k,
                    iters,
                    gamma,
                    a,
                    b,
                } => NamedAlgorithm {
                    id: id.clone(),
                    algorithm: Algorithm::Bsbl {
                        config: SolverConfig {
                            a: *a,
                            b: *b,
                            gamma: *gamma,
                            iters: *iters,
                            ..SolverConfig::default()
                        },
                        noise: match noise {
                            NoiseSpec::True => NoiseVarianceMode::True,
                            NoiseSpec::Unit => NoiseVarianceMode::Unit,
                        },
                        restrict_top_k: *restrict_top_k,
                    },
                },
                AlgorithmSpec::Biht { id, tau, iters } => NamedAlgorithm {
                    id: id.clone(),
                    algorithm: Algorithm::Biht(BihtConfig {
                        k: self.scenario.true_doas_deg.len(),
                        tau: *tau,
                        iters: *iters,
                    }),
                },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
seed = 7
trials = 4
output_dir = "out"
snr_sweep_db = [0.0, 10.0]

[scenario]
grid_start_deg = -90.0
grid_stop_deg = 90.0
grid_step_deg = 0.5
true_doas_deg = [-3.0, 2.0, 75.0]
amplitudes_db = [12.0, 22.0, 20.0]
sensors = 16
snapshots = 5

[[algorithm]]
kind = "bsbl"
id = "bsbl"
iters = 10
"#;

    #[test]
    fn parses_and_builds_grid() {
        let spec = RunSpec::parse(GOOD).unwrap();
        let sc = spec.scenario(10.0);
        assert_eq!(sc.grid.len(), 361);
        assert_eq!(sc.grid_index_of(75.0), Some(330));
        assert_eq!(sc.snr_db, 10.0);
        assert_eq!(spec.named_algorithms().len(), 1);
    }

    #[test]
    fn rejects_empty_roster_and_sweep() {
        let no_alg = GOOD.split("[[algorithm]]").next().unwrap();
        assert!(RunSpec::parse(no_alg).is_err());
        let no_sweep = GOOD.replace("snr_sweep_db = [0.0, 10.0]", "snr_sweep_db = []");
        assert!(RunSpec::parse(&no_sweep).is_err());
    }

    #[test]
    fn rejects_duplicate_ids_and_unknown_keys() {
        let dup = format!("{GOOD}\n[[algorithm]]\nkind = \"bsbl\"\nid = \"bsbl\"\n");
        assert!(RunSpec::parse(&dup).is_err());
        let unknown = GOOD.replace("trials = 4", "trials = 4\nbogus = 1");
        assert!(RunSpec::parse(&unknown).is_err());
    }

    #[test]
    fn off_grid_doa_is_a_config_error() {
        let bad = GOOD.replace("75.0]", "75.3]");
        assert!(RunSpec::parse(&bad).is_err());
    }
}
