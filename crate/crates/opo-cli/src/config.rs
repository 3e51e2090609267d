//! One JSON document drives every subcommand. Defaults reproduce the
//! reference experiment: the measured cavity constants, the pump coupling
//! derived from the measured gain, and the calibrated noise budget of the
//! benchmark scenarios.

use std::path::{Path, PathBuf};

use error_signals::{PdhConfig, SpsConfig};
use lock_sim::{bench_configs, bench_pdh_config, BenchScenario, LockConfig, NoiseConfig};
use opo_core::{OpoParams, PumpConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use squeezed_states::GaussianStateParams;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub opo: OpoParams,
    pub pump: PumpConfig,
    pub pdh: PdhConfig,
    pub sps: SpsConfig,
    pub lock: LockConfig,
    pub noise: NoiseConfig,
    pub state: GaussianStateParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (pump, lock, noise) = bench_configs(BenchScenario::FullPi, 20220613);
        Self {
            opo: OpoParams { r1: 0.9988, r2: 0.917, delta: 2.4e-3, fsr: 3.025e9 },
            pump,
            pdh: bench_pdh_config(),
            sps: SpsConfig { sps_offset: 0.0, power_comp_gain: 0.0 },
            lock,
            noise,
            state: GaussianStateParams {
                alpha: 2.93,
                xi_mag: 0.46,
                xi_arg: std::f64::consts::FRAC_PI_2,
                n_th: 0.13,
            },
            output_dir: default_output_dir(),
        }
    }
}

impl ExperimentConfig {
    /// Built-in defaults when `path` is `None`, otherwise the parsed file.
    /// Unknown keys and malformed JSON are configuration errors.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Every sub-config checked by its own rules, plus the cross-cutting
    /// guard: the pump must stay below the resonant lock threshold.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.opo.validate().map_err(|e| cfg(&e))?;
        self.pump.validate().map_err(|e| cfg(&e))?;
        self.pdh.validate().map_err(|e| cfg(&e))?;
        self.sps.validate().map_err(|e| cfg(&e))?;
        self.lock.validate().map_err(|e| cfg(&e))?;
        self.noise.validate().map_err(|e| cfg(&e))?;
        self.state.validate().map_err(|e| cfg(&e))?;
        let threshold = self.opo.threshold_gamma();
        if self.pump.gamma_mag >= threshold {
            return Err(CliError::Config(format!(
                "pump coupling |gamma| = {} is at or above the resonant threshold \
                 1 - sqrt(R) = {threshold:.6e}; the steady-state model has no \
                 bounded solution there",
                self.pump.gamma_mag
            )));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::Config("output_dir must not be empty".into()));
        }
        Ok(())
    }

    /// Hash of the physics configuration in canonical field order. The
    /// output directory is excluded: where results land must not change
    /// what is in them.
    pub fn content_hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.output_dir = PathBuf::new();
        let canon = serde_json::to_string(&hashed).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
