use error_signals::{pdh_error_raw, reflected_min, reflected_min_in, PdhConfig};
use opo_core::{Detuning, OpoParams, PumpConfig};
use serde::{Deserialize, Serialize};

use crate::plant::{detected_powers, PlantState};
use crate::servo::{pi_step, PiState};
use crate::{LockConfig, LockError, LockSample, LockTrace, NoiseConfig};

/// Half-width of the detuning window scanned during calibration.
const CAL_WINDOW: f64 = 0.3;
/// Reflected-power minima live within a fraction of a linewidth of zero
/// detuning for every pump phase, so a tracker re-centered on the previous
/// minimum never needs more than this half-width.
const TRACK_HALF_WIDTH: f64 = 5e-4;
const TRACK_COARSE: usize = 33;
/// Noise-free runs would otherwise compare rounding noise against rounding
/// noise in the settle criterion.
const LOCK_RMS_FLOOR: f64 = 1e-9;
/// Newton solve of the per-sample error/command fixed point.
const SOLVE_TOL: f64 = 1e-12;
const SOLVE_MAX_ITER: usize = 50;
/// Steps between Jacobian refreshes; the loop response drifts on the scale
/// of the disturbances, far slower than this.
const JACOBIAN_REFRESH: u32 = 8;

/// Calibration outcome of one lock acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedOffsets {
    /// Detuning of minimal reflected power at the target pump phase.
    pub phi_lock: f64,
    /// Raw demodulated error at `phi_lock`, subtracted by the servo.
    pub pdh_offset: f64,
    /// Reflected power the pump-phase loop regulates to.
    pub sps_offset: f64,
    /// Reflected-power response to laser power, fitted with the frequency
    /// loop closed so detuning noise does not bias the regression.
    pub power_comp_gain: f64,
    /// Open-loop error rms at the lock point, the settle-check reference.
    pub open_loop_rms: f64,
    /// End of the staged-engagement window; analysis starts here.
    pub settle_end: f64,
}

struct Measured {
    e_pdh: f64,
    e_sps: f64,
    phi: f64,
    phi_p: f64,
    p_trans: f64,
    p_refl: f64,
    u_pdh: f64,
    u_sps: f64,
}

/// Closed-loop stepper. The integrators advance once per sample; the
/// proportional branches respond within the sample, so each step solves
/// `e = measurement(command(e))` for the error pair instead of applying
/// commands one sample late. A trailing-command discretization would cap
/// the usable proportional gain at `kp * slope < 1` (closed-loop pole at
/// `-kp * slope`), which misrepresents an analog proportional stage.
struct LoopDriver<'a> {
    params: &'a OpoParams,
    gamma_mag: f64,
    phi_m: f64,
    lock: LockConfig,
    pdh_offset: f64,
    sps_offset: f64,
    power_comp_gain: f64,
    pdh_on: bool,
    sps_on: bool,
    pi_pdh: PiState,
    pi_sps: PiState,
    warm: (f64, f64),
    jac: Option<[[f64; 2]; 2]>,
    jac_age: u32,
}

impl<'a> LoopDriver<'a> {
    fn new(params: &'a OpoParams, gamma_mag: f64, phi_m: f64, lock: LockConfig) -> Self {
        LoopDriver {
            params,
            gamma_mag,
            phi_m,
            lock,
            pdh_offset: 0.0,
            sps_offset: 0.0,
            power_comp_gain: 0.0,
            pdh_on: false,
            sps_on: false,
            pi_pdh: PiState::default(),
            pi_sps: PiState::default(),
            warm: (0.0, 0.0),
            jac: None,
            jac_age: 0,
        }
    }

    fn engage_pdh(&mut self) {
        self.pdh_on = true;
        self.jac = None;
    }

    fn engage_sps(&mut self) {
        self.sps_on = true;
        self.jac = None;
    }

    /// Command a branch would issue for a trial error, without mutating the
    /// integrator. Mirrors `pi_step` exactly.
    fn trial_command(&self, pi: &PiState, e: f64, kp: f64, ki: f64) -> f64 {
        let i_new = (pi.integrator + ki * e * self.lock.dt())
            .clamp(-self.lock.integrator_clamp, self.lock.integrator_clamp);
        (kp * e + i_new).clamp(-self.lock.actuator_range, self.lock.actuator_range)
    }

    fn measure(
        &self,
        state: &PlantState,
        d: &crate::plant::Disturbance,
        e_trial: (f64, f64),
    ) -> Result<Measured, LockError> {
        let u_pdh = if self.pdh_on {
            self.trial_command(&self.pi_pdh, e_trial.0, self.lock.kp_pdh, self.lock.ki_pdh)
        } else {
            state.u_pdh
        };
        let u_sps = if self.sps_on {
            self.trial_command(&self.pi_sps, e_trial.1, self.lock.kp_sps, self.lock.ki_sps)
        } else {
            state.u_sps
        };
        let phi = state.phi_base + d.d_phi + u_pdh;
        let phi_p = state.phi_p_base + d.d_phi_p + u_sps;
        let pump_here =
            PumpConfig::new(self.gamma_mag, phi_p).map_err(error_signals::SignalError::from)?;
        let raw = pdh_error_raw(self.params, &pump_here, Detuning::from_phase(phi), self.phi_m)?;
        let (p_trans, p_refl) = detected_powers(self.params, &pump_here, phi, phi_p, d.laser_power)
            .map_err(error_signals::SignalError::from)?;
        Ok(Measured {
            e_pdh: raw * d.laser_power - self.pdh_offset,
            e_sps: p_refl - self.power_comp_gain * (d.laser_power - 1.0) - self.sps_offset,
            phi,
            phi_p,
            p_trans,
            p_refl,
            u_pdh,
            u_sps,
        })
    }

    fn refresh_jacobian(
        &self,
        state: &PlantState,
        d: &crate::plant::Disturbance,
        e: (f64, f64),
        base: &Measured,
    ) -> Result<[[f64; 2]; 2], LockError> {
        let h = 1e-9;
        let mut jac = [[0.0; 2]; 2];
        if self.pdh_on {
            let m = self.measure(state, d, (e.0 + h, e.1))?;
            jac[0][0] = (m.e_pdh - base.e_pdh) / h;
            jac[1][0] = (m.e_sps - base.e_sps) / h;
        }
        if self.sps_on {
            let m = self.measure(state, d, (e.0, e.1 + h))?;
            jac[0][1] = (m.e_pdh - base.e_pdh) / h;
            jac[1][1] = (m.e_sps - base.e_sps) / h;
        }
        Ok(jac)
    }

    /// Newton iteration on g(e) = e - m(e). `None` means the fixed point
    /// was not reached: the iteration hit its cap or (I - J) went singular,
    /// which happens once a runaway drives the operating point off the
    /// monotonic stretch of the error signal.
    fn solve_implicit(
        &mut self,
        state: &PlantState,
        d: &crate::plant::Disturbance,
    ) -> Result<Option<((f64, f64), Measured)>, LockError> {
        let mut e = self.warm;
        let mut base = self.measure(state, d, e)?;
        for iter in 0..SOLVE_MAX_ITER {
            let r = (e.0 - base.e_pdh, e.1 - base.e_sps);
            if r.0.abs() < SOLVE_TOL && r.1.abs() < SOLVE_TOL {
                return Ok(Some((e, base)));
            }
            let stale = self.jac.is_none() || self.jac_age >= JACOBIAN_REFRESH || iter >= 10;
            if stale {
                self.jac = Some(self.refresh_jacobian(state, d, e, &base)?);
                self.jac_age = 0;
            }
            let j = self.jac.as_ref().unwrap();
            // Solve (I - J) de = -r.
            let a = [[1.0 - j[0][0], -j[0][1]], [-j[1][0], 1.0 - j[1][1]]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-12 {
                return Ok(None);
            }
            let de =
                ((-r.0 * a[1][1] + r.1 * a[0][1]) / det, (-r.1 * a[0][0] + r.0 * a[1][0]) / det);
            e = (e.0 + de.0, e.1 + de.1);
            base = self.measure(state, d, e)?;
        }
        Ok(None)
    }

    /// Advances the plant one sample, solves the implicit error pair,
    /// commits the integrator updates, and records the sample.
    ///
    /// When the implicit solve fails the analog stage is treated as
    /// slew-limited for that sample: the command formed from the previous
    /// error is held, the detectors are read at that command, and the
    /// integrators consume the measured error. A diverging loop therefore
    /// rails its actuator and keeps producing samples for the settle check
    /// instead of aborting the run.
    fn step(
        &mut self,
        state: &mut PlantState,
        noise: &NoiseConfig,
    ) -> Result<LockSample, LockError> {
        let dt = self.lock.dt();
        let d = state.advance_noise(noise, dt);
        let solved = self.solve_implicit(state, &d)?;
        let settled = solved.is_some();
        let (e, base) = match solved {
            Some(pair) => pair,
            None => {
                let held = self.measure(state, &d, self.warm)?;
                self.jac = None;
                ((held.e_pdh, held.e_sps), held)
            }
        };
        self.jac_age += 1;
        self.warm = e;

        // Commit through the canonical servo update. On a held step the
        // recorded command is the one actually applied, so the freshly
        // integrated command only takes effect from the next sample.
        if self.pdh_on {
            let u = pi_step(
                &mut self.pi_pdh,
                e.0,
                self.lock.kp_pdh,
                self.lock.ki_pdh,
                dt,
                self.lock.integrator_clamp,
                self.lock.actuator_range,
            );
            if settled {
                debug_assert_eq!(u, base.u_pdh);
            }
            state.u_pdh = base.u_pdh;
        }
        if self.sps_on {
            let u = pi_step(
                &mut self.pi_sps,
                e.1,
                self.lock.kp_sps,
                self.lock.ki_sps,
                dt,
                self.lock.integrator_clamp,
                self.lock.actuator_range,
            );
            if settled {
                debug_assert_eq!(u, base.u_sps);
            }
            state.u_sps = base.u_sps;
        }
        Ok(LockSample {
            t: state.t,
            phi: base.phi,
            phi_p: base.phi_p,
            p_trans: base.p_trans,
            p_refl: base.p_refl,
            eps_pdh: e.0,
            eps_sps: e.1,
            u_pdh: base.u_pdh,
            u_sps: base.u_sps,
            p_laser: d.laser_power,
        })
    }
}

/// Full lock acquisition against a noisy plant.
///
/// Stages, each one quarter of `lock.settle`:
/// 1. noise-free calibration scan, then an open-loop segment at the lock
///    point that sets the settle-check reference rms;
/// 2. frequency loop engaged;
/// 3. frequency loop held while reflected power is regressed on laser power
///    to calibrate the power compensation and refine the lock target;
/// 4. pump-phase loop engaged as well.
///
/// The error rms over the last tenth of the settle window must stay within
/// five times the open-loop reference or the acquisition reports
/// [`LockError::LockFailed`]. After settling, `lock.duration` seconds are
/// recorded with both loops closed; that segment is the analysis window.
///
/// `cfg_pdh` supplies the demodulation sideband offset `phi_m`; the
/// electronic offsets are outputs of this procedure, not inputs.
pub fn acquire_lock(
    params: &OpoParams,
    pump: &PumpConfig,
    cfg_pdh: &PdhConfig,
    lock: &LockConfig,
    noise: &NoiseConfig,
) -> Result<(CalibratedOffsets, LockTrace), LockError> {
    lock.validate()?;
    noise.validate()?;
    cfg_pdh.validate().map_err(LockError::Signal)?;
    let n_seg = (0.25 * lock.settle * lock.sample_rate).round() as usize;
    if n_seg < 50 {
        return Err(LockError::InvalidConfig(format!(
            "settle window of {} s at {} Hz leaves {} samples per stage, need at least 50",
            lock.settle, lock.sample_rate, n_seg
        )));
    }
    let n_steady = (lock.duration * lock.sample_rate).round() as usize;
    if n_steady == 0 {
        return Err(LockError::InvalidConfig(format!(
            "duration {} s at {} Hz records no samples",
            lock.duration, lock.sample_rate
        )));
    }

    let (phi_lock, p_min) = reflected_min(params, pump, CAL_WINDOW)?;
    let pdh_offset = pdh_error_raw(params, pump, Detuning::from_phase(phi_lock), cfg_pdh.phi_m)?;

    let mut driver = LoopDriver::new(params, pump.gamma_mag, cfg_pdh.phi_m, *lock);
    driver.pdh_offset = pdh_offset;
    driver.sps_offset = p_min;
    let mut state = PlantState::new(phi_lock, pump.phi_p, lock.seed);
    let mut samples = Vec::with_capacity(4 * n_seg + n_steady);

    // Stage 1: open loop.
    let mut open_sq = 0.0;
    for _ in 0..n_seg {
        let s = driver.step(&mut state, noise)?;
        open_sq += s.eps_pdh * s.eps_pdh;
        samples.push(s);
    }
    let open_rms = (open_sq / n_seg as f64).sqrt();

    // Stage 2: frequency loop.
    driver.engage_pdh();
    for _ in 0..n_seg {
        samples.push(driver.step(&mut state, noise)?);
    }

    // Stage 3: power-compensation regression with the detuning held.
    let mut xs = Vec::with_capacity(n_seg);
    let mut ys = Vec::with_capacity(n_seg);
    for _ in 0..n_seg {
        let s = driver.step(&mut state, noise)?;
        xs.push(s.p_laser - 1.0);
        ys.push(s.p_refl);
        samples.push(s);
    }
    let (intercept, slope) = linear_fit(&xs, &ys);
    driver.sps_offset = intercept;
    driver.power_comp_gain = slope;

    // Stage 4: pump-phase loop.
    driver.engage_sps();
    let settle_samples = 4 * n_seg;
    let tail_from = settle_samples - ((0.1 * settle_samples as f64).round() as usize).max(1);
    let mut closed_sq = 0.0;
    let mut closed_n = 0usize;
    for k in 0..n_seg {
        let s = driver.step(&mut state, noise)?;
        if 3 * n_seg + k >= tail_from {
            closed_sq += s.eps_pdh * s.eps_pdh;
            closed_n += 1;
        }
        samples.push(s);
    }
    let closed_rms = (closed_sq / closed_n as f64).sqrt();
    let threshold = (5.0 * open_rms).max(LOCK_RMS_FLOOR);
    if closed_rms > threshold {
        return Err(LockError::LockFailed { open_rms, closed_rms, threshold });
    }

    for _ in 0..n_steady {
        samples.push(driver.step(&mut state, noise)?);
    }

    let offsets = CalibratedOffsets {
        phi_lock,
        pdh_offset,
        sps_offset: driver.sps_offset,
        power_comp_gain: driver.power_comp_gain,
        open_loop_rms: open_rms,
        settle_end: settle_samples as f64 * lock.dt(),
    };
    Ok((offsets, LockTrace { sample_rate: lock.sample_rate, samples }))
}

/// Least-squares line `y = intercept + slope * x`. A degenerate abscissa
/// (noise-free laser) yields slope 0 and the plain mean as intercept.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx < 1e-30 {
        return (my, 0.0);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Noise-free pump-phase ramp with the frequency loop closed.
///
/// The pump phase advances at `phi_p_rate` rad/s while the demodulation
/// offset and lock target are recalibrated every step by tracking the
/// reflected minimum, so the loop follows the compensated lock point
/// rather than the drifting uncompensated zero crossing. The recorded
/// `eps_sps` keeps the initial reflected-minimum offset and no power
/// compensation, which exposes the reflected-power swing over the ramp.
pub fn scan_pump_phase(
    params: &OpoParams,
    pump_start: &PumpConfig,
    cfg_pdh: &PdhConfig,
    lock: &LockConfig,
    phi_p_rate: f64,
    duration: f64,
) -> Result<LockTrace, LockError> {
    lock.validate()?;
    cfg_pdh.validate().map_err(LockError::Signal)?;
    if !phi_p_rate.is_finite() {
        return Err(LockError::InvalidConfig(format!(
            "phi_p_rate must be finite, got {phi_p_rate}"
        )));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(LockError::InvalidConfig(format!(
            "scan duration must be positive, got {duration}"
        )));
    }
    let n = (duration * lock.sample_rate).round() as usize;
    if n == 0 {
        return Err(LockError::InvalidConfig(format!(
            "scan duration {duration} s at {} Hz records no samples",
            lock.sample_rate
        )));
    }

    let (mut phi_min, p_min) = reflected_min(params, pump_start, CAL_WINDOW)?;
    let mut driver = LoopDriver::new(params, pump_start.gamma_mag, cfg_pdh.phi_m, *lock);
    driver.sps_offset = p_min;
    driver.engage_pdh();
    let mut state = PlantState::new(phi_min, pump_start.phi_p, lock.seed);
    let quiet = NoiseConfig::quiet();
    let dt = lock.dt();
    let mut samples = Vec::with_capacity(n);
    for k in 1..=n {
        state.phi_p_base = pump_start.phi_p + phi_p_rate * k as f64 * dt;
        let pump_here = PumpConfig::new(pump_start.gamma_mag, state.phi_p_base)
            .map_err(error_signals::SignalError::from)?;
        let (pm, _) = reflected_min_in(
            params,
            &pump_here,
            (phi_min - TRACK_HALF_WIDTH, phi_min + TRACK_HALF_WIDTH),
            TRACK_COARSE,
        )?;
        phi_min = pm;
        driver.pdh_offset =
            pdh_error_raw(params, &pump_here, Detuning::from_phase(pm), cfg_pdh.phi_m)?;
        // The lock target moved, so the cached loop response is refreshed
        // on the usual schedule; the shift per step is far below it.
        samples.push(driver.step(&mut state, &quiet)?);
    }
    Ok(LockTrace { sample_rate: lock.sample_rate, samples })
}

/// The three benchmark scenarios for the residual-intensity-noise table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchScenario {
    /// Pump blocked; only laser intensity noise reaches the cavity output.
    PumpOff,
    /// Pump on, both loops with full PI gains.
    FullPi,
    /// Pump on, pump-phase proportional branch switched off.
    IntegratorOnly,
}

/// Pump amplitude of the benchmark runs.
pub const BENCH_GAMMA: f64 = 1.85e-2;

/// Demodulation sideband offset shared by the benchmark runs.
pub fn bench_pdh_config() -> PdhConfig {
    PdhConfig::new(0.1, 0.0).expect("benchmark sideband offset is valid")
}

/// Scenario configurations for the noise benchmarks. The disturbance
/// realization depends only on the seed, so scenarios with the same seed
/// see identical noise and differ purely in pump and servo settings.
/// Amplitudes are calibrated against the published residual noise levels.
pub fn bench_configs(scenario: BenchScenario, seed: u64) -> (PumpConfig, LockConfig, NoiseConfig) {
    let lock = LockConfig {
        sample_rate: 1e5,
        kp_pdh: 1.35,
        ki_pdh: 1_350.0,
        kp_sps: -120.0,
        ki_sps: -50_000.0,
        actuator_range: 1.0,
        integrator_clamp: 0.5,
        seed,
        settle: 0.4,
        duration: 0.5,
    };
    let noise = NoiseConfig {
        mech_amp_phi: 5e-4,
        mech_amp_phip: 0.1274,
        mech_freq: 1_000.0,
        walk_sigma: 2e-4,
        laser_rin_amp: 0.006,
        laser_rin_corner: 100.0,
    };
    match scenario {
        BenchScenario::PumpOff => (
            PumpConfig::new(0.0, 0.0).expect("valid pump"),
            LockConfig { kp_sps: 0.0, ki_sps: 0.0, ..lock },
            noise,
        ),
        BenchScenario::FullPi => {
            (PumpConfig::new(BENCH_GAMMA, 0.0).expect("valid pump"), lock, noise)
        }
        BenchScenario::IntegratorOnly => (
            PumpConfig::new(BENCH_GAMMA, 0.0).expect("valid pump"),
            LockConfig { kp_sps: 0.0, ..lock },
            noise,
        ),
    }
}
