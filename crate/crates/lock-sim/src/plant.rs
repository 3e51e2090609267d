use opo_core::{intracavity_field, reflected_field, Detuning, OpoParams, PumpConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::NoiseConfig;

/// Phase offset between the mechanical line on the detuning path and the
/// one on the pump path. Any value away from 0 and pi works; sharing a
/// phase would correlate the two paths at the line frequency.
const MECH_PHASE_SPLIT: f64 = 2.1;

/// Dynamic state of the simulated plant: slow noise processes plus the two
/// actuator commands currently applied.
#[derive(Debug, Clone)]
pub struct PlantState {
    pub t: f64,
    pub phi_base: f64,
    pub phi_p_base: f64,
    pub u_pdh: f64,
    pub u_sps: f64,
    walk_phi: f64,
    walk_phi_p: f64,
    laser_lp: f64,
    rng: ChaCha8Rng,
}

/// Disturbance values for one sample, before actuator corrections.
#[derive(Debug, Clone, Copy)]
pub struct Disturbance {
    pub d_phi: f64,
    pub d_phi_p: f64,
    pub laser_power: f64,
}

/// Optical observables at the disturbed operating point.
#[derive(Debug, Clone, Copy)]
pub struct PlantObservables {
    pub t: f64,
    pub phi: f64,
    pub phi_p: f64,
    pub p_trans: f64,
    pub p_refl: f64,
    pub laser_power: f64,
}

impl PlantState {
    /// Plant at rest at the given operating point. The laser low-pass state
    /// starts from one stationary draw so traces begin in steady state.
    pub fn new(phi_base: f64, phi_p_base: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let laser_lp: f64 = StandardNormal.sample(&mut rng);
        PlantState {
            t: 0.0,
            phi_base,
            phi_p_base,
            u_pdh: 0.0,
            u_sps: 0.0,
            walk_phi: 0.0,
            walk_phi_p: 0.0,
            laser_lp,
            rng,
        }
    }

    /// Advances every noise process by `dt` and returns the disturbance for
    /// the new time. Exactly three Gaussian draws happen per call, so the
    /// realization for a given seed does not depend on servo settings.
    pub fn advance_noise(&mut self, noise: &NoiseConfig, dt: f64) -> Disturbance {
        self.t += dt;
        let n_phi: f64 = StandardNormal.sample(&mut self.rng);
        let n_phi_p: f64 = StandardNormal.sample(&mut self.rng);
        let n_laser: f64 = StandardNormal.sample(&mut self.rng);

        let sqrt_dt = dt.sqrt();
        self.walk_phi += noise.walk_sigma * sqrt_dt * n_phi;
        self.walk_phi_p += noise.walk_sigma * sqrt_dt * n_phi_p;

        // One-pole low-pass driven to unit stationary variance.
        let alpha = (-2.0 * std::f64::consts::PI * noise.laser_rin_corner * dt).exp();
        self.laser_lp = alpha * self.laser_lp + (1.0 - alpha * alpha).sqrt() * n_laser;

        let line = 2.0 * std::f64::consts::PI * noise.mech_freq * self.t;
        Disturbance {
            d_phi: self.walk_phi + noise.mech_amp_phi * line.sin(),
            d_phi_p: self.walk_phi_p + noise.mech_amp_phip * (line + MECH_PHASE_SPLIT).sin(),
            laser_power: 1.0 + noise.laser_rin_amp * self.laser_lp,
        }
    }

    /// Operating point for a given disturbance and the stored commands.
    pub fn operating_point(&self, d: &Disturbance) -> (f64, f64) {
        (self.phi_base + d.d_phi + self.u_pdh, self.phi_p_base + d.d_phi_p + self.u_sps)
    }
}

/// Detected powers at an operating point, both scaled by the instantaneous
/// laser power. Transmission through the back mirror is proportional to the
/// circulating power; the constant transmission factor is left at one
/// because only relative noise figures are consumed downstream.
pub fn detected_powers(
    params: &OpoParams,
    pump: &PumpConfig,
    phi: f64,
    phi_p: f64,
    laser_power: f64,
) -> Result<(f64, f64), opo_core::CavityError> {
    let pump_here = pump.with_phase(phi_p);
    let det = Detuning::from_phase(phi);
    let e_c = intracavity_field(params, &pump_here, det)?;
    let e_r = reflected_field(params, &pump_here, det)?;
    Ok((e_c.norm_sqr() * laser_power, e_r.norm_sqr() * laser_power))
}

/// Advances the plant one sample and reports the observables at the new
/// operating point. Commands stored in `state` are applied as-is; closing
/// a loop means updating `state.u_pdh` / `state.u_sps` between calls.
pub fn step_plant(
    state: &mut PlantState,
    params: &OpoParams,
    pump: &PumpConfig,
    noise: &NoiseConfig,
    dt: f64,
) -> Result<PlantObservables, opo_core::CavityError> {
    let d = state.advance_noise(noise, dt);
    let (phi, phi_p) = state.operating_point(&d);
    let (p_trans, p_refl) = detected_powers(params, pump, phi, phi_p, d.laser_power)?;
    Ok(PlantObservables { t: state.t, phi, phi_p, p_trans, p_refl, laser_power: d.laser_power })
}
