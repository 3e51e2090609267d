//! Time-domain simulation of the two stabilization loops that hold the
//! seeded cavity on resonance and the pump at a fixed relative phase.
//!
//! The plant is quasi-static: mirror and pump-path disturbances move the
//! detuning `phi` and the pump phase `phi_p`, and every optical observable
//! is recomputed from the steady-state field expressions at the disturbed
//! operating point. Disturbances are a fixed-frequency mechanical line on
//! each phase, a slow random walk, and low-pass-filtered laser intensity
//! noise. Noise amplitudes are calibrated against the published residual
//! intensity noise levels, not measured from hardware.
//!
//! Both servos are discrete PI controllers stepped at `sample_rate`. The
//! integrator accumulates once per sample; the proportional branch models
//! an analog stage that settles within one sample, so each step solves the
//! error/command fixed point implicitly instead of applying the command one
//! sample late. A delayed proportional branch would pin the closed-loop
//! pole at `-kp * slope` and cap the usable gain below one, which no analog
//! proportional stage suffers.
//!
//! The frequency loop acts on the demodulated reflection signal. The pump
//! phase loop is a side-of-dip lock on reflected power: away from the
//! quadrature phases the reflected minimum has a nonzero slope in `phi_p`,
//! which is what the loop regulates to zero after offset subtraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod acquire;
mod plant;
mod servo;

pub use acquire::{
    acquire_lock, bench_configs, bench_pdh_config, scan_pump_phase, BenchScenario,
    CalibratedOffsets,
};
pub use plant::{step_plant, PlantObservables, PlantState};
pub use servo::{pi_step, PiState};

#[derive(Debug, Error)]
pub enum LockError {
    #[error("invalid lock configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Signal(#[from] error_signals::SignalError),
    #[error(
        "lock failed to settle: closed-loop error rms {closed_rms:.3e} exceeds \
         {threshold:.3e} (5x open-loop rms {open_rms:.3e})"
    )]
    LockFailed { open_rms: f64, closed_rms: f64, threshold: f64 },
    #[error("analysis window [{start}, {end}) holds {got} samples, need at least {needed}")]
    EmptyWindow { start: f64, end: f64, got: usize, needed: usize },
}

/// Servo gains and run timing for one lock acquisition.
///
/// Gains map a dimensionless error sample to an actuator phase command in
/// radians. `actuator_range` saturates each commanded phase correction and
/// `integrator_clamp` bounds each integrator state, so a wound-up loop
/// recovers instead of running away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    pub sample_rate: f64,
    pub kp_pdh: f64,
    pub ki_pdh: f64,
    pub kp_sps: f64,
    pub ki_sps: f64,
    pub actuator_range: f64,
    pub integrator_clamp: f64,
    pub seed: u64,
    /// Seconds of staged loop engagement before the analysis segment.
    #[serde(default = "default_settle")]
    pub settle: f64,
    /// Seconds recorded with both loops closed, after settling.
    pub duration: f64,
}

fn default_settle() -> f64 {
    0.4
}

impl LockConfig {
    pub fn validate(&self) -> Result<(), LockError> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "sample_rate must be positive and finite, got {}",
                self.sample_rate
            )));
        }
        for (name, g) in [
            ("kp_pdh", self.kp_pdh),
            ("ki_pdh", self.ki_pdh),
            ("kp_sps", self.kp_sps),
            ("ki_sps", self.ki_sps),
        ] {
            if !g.is_finite() {
                return Err(LockError::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if !(self.actuator_range.is_finite() && self.actuator_range > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "actuator_range must be positive, got {}",
                self.actuator_range
            )));
        }
        if !(self.integrator_clamp.is_finite() && self.integrator_clamp > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "integrator_clamp must be positive, got {}",
                self.integrator_clamp
            )));
        }
        if !(self.settle.is_finite() && self.settle > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "settle must be positive, got {}",
                self.settle
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// Disturbance amplitudes for the simulated plant.
///
/// `mech_amp_phi` and `mech_amp_phip` are the radian amplitudes of a single
/// mechanical line at `mech_freq` on the detuning and pump-phase paths.
/// `walk_sigma` is the per-root-second strength of an unbounded random walk
/// applied to both paths. Laser intensity noise is unit-variance Gaussian
/// noise low-passed at `laser_rin_corner`, scaled by `laser_rin_amp`, and
/// added to the nominal unit laser power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub mech_amp_phi: f64,
    pub mech_amp_phip: f64,
    pub mech_freq: f64,
    pub walk_sigma: f64,
    pub laser_rin_amp: f64,
    pub laser_rin_corner: f64,
}

impl NoiseConfig {
    /// All disturbance channels switched off.
    pub fn quiet() -> Self {
        NoiseConfig {
            mech_amp_phi: 0.0,
            mech_amp_phip: 0.0,
            mech_freq: 1_000.0,
            walk_sigma: 0.0,
            laser_rin_amp: 0.0,
            laser_rin_corner: 100.0,
        }
    }

    pub fn validate(&self) -> Result<(), LockError> {
        for (name, v) in [
            ("mech_amp_phi", self.mech_amp_phi),
            ("mech_amp_phip", self.mech_amp_phip),
            ("walk_sigma", self.walk_sigma),
            ("laser_rin_amp", self.laser_rin_amp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LockError::InvalidConfig(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.mech_freq.is_finite() && self.mech_freq > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "mech_freq must be positive, got {}",
                self.mech_freq
            )));
        }
        if !(self.laser_rin_corner.is_finite() && self.laser_rin_corner > 0.0) {
            return Err(LockError::InvalidConfig(format!(
                "laser_rin_corner must be positive, got {}",
                self.laser_rin_corner
            )));
        }
        Ok(())
    }
}

/// One recorded servo sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockSample {
    pub t: f64,
    pub phi: f64,
    pub phi_p: f64,
    pub p_trans: f64,
    pub p_refl: f64,
    pub eps_pdh: f64,
    pub eps_sps: f64,
    pub u_pdh: f64,
    pub u_sps: f64,
    pub p_laser: f64,
}

/// Full time series of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockTrace {
    pub sample_rate: f64,
    pub samples: Vec<LockSample>,
}

/// Relative intensity noise of transmitted power over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RinReport {
    pub rin: f64,
    pub window: (f64, f64),
}

/// Minimum sample count for a meaningful noise statistic.
const RIN_MIN_SAMPLES: usize = 100;

/// Standard deviation over mean of `p_trans` for samples with
/// `window.0 <= t < window.1`.
pub fn rin(trace: &LockTrace, window: (f64, f64)) -> Result<RinReport, LockError> {
    let selected: Vec<f64> = trace
        .samples
        .iter()
        .filter(|s| s.t >= window.0 && s.t < window.1)
        .map(|s| s.p_trans)
        .collect();
    if selected.len() < RIN_MIN_SAMPLES {
        return Err(LockError::EmptyWindow {
            start: window.0,
            end: window.1,
            got: selected.len(),
            needed: RIN_MIN_SAMPLES,
        });
    }
    let n = selected.len() as f64;
    let mean = selected.iter().sum::<f64>() / n;
    if !(mean.is_finite() && mean.abs() > 0.0) {
        return Err(LockError::InvalidConfig(format!(
            "transmitted power mean {mean} over the window admits no relative noise figure"
        )));
    }
    let var = selected.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
    Ok(RinReport { rin: var.sqrt() / mean.abs(), window })
}
