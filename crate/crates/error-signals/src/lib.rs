//! Error signals for the two stabilization loops, both derived from the
//! beam reflected off the cavity input coupler.
//!
//! The frequency lock uses the demodulated Pound-Drever-Hall combination of
//! the carrier with two sidebands offset by the round-trip phase `phi_m`:
//!
//! ```text
//! eps_PDH = Im[ E_R(phi) E_R*(phi - phi_m) - E_R*(phi) E_R(phi + phi_m) ]
//! ```
//!
//! With the pump on, this signal no longer crosses zero at the reflected
//! minimum unless the pump sits exactly at quadrature (`phi_p = +-pi/2`),
//! so an electronic offset is subtracted before the servo sees it.
//!
//! The pump-phase lock ("SPS") needs no extra modulation at all: the depth
//! of the reflected-power dip is monotone in `phi_p` between the two
//! quadrature points, so the dip value itself, offset to zero at the chosen
//! operating point and compensated for laser power drift, serves as the
//! error signal.
//!
//! [`bowen_error`] implements the alternative pump-phase signal obtained by
//! modulating the pump instead; it is kept for side-by-side comparison.

use opo_core::{intracavity_field, reflected_field, CavityError, Detuning, OpoParams, PumpConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error(transparent)]
    Cavity(#[from] CavityError),
    #[error(
        "reflected-power minimum sits on the search boundary (phi = {phi} rad); \
         widen the window"
    )]
    WindowTooNarrow { phi: f64 },
    #[error("scan needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("scan contains no valid (below-threshold) samples")]
    NoValidSamples,
}

/// Pound-Drever-Hall configuration: sideband offset in round-trip-phase
/// units and the electronic offset subtracted from the demodulated signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdhConfig {
    pub phi_m: f64,
    pub pdh_offset: f64,
}

impl PdhConfig {
    pub fn new(phi_m: f64, pdh_offset: f64) -> Result<Self, SignalError> {
        let cfg = Self { phi_m, pdh_offset };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.phi_m > 0.0 && self.phi_m < std::f64::consts::PI) {
            return Err(CavityError::InvalidParams(
                "phi_m must lie in (0, pi): sidebands within one free spectral range".to_string(),
            )
            .into());
        }
        if !self.pdh_offset.is_finite() {
            return Err(CavityError::InvalidParams("pdh_offset must be finite".to_string()).into());
        }
        Ok(())
    }

    /// Same sidebands, zero electronic offset.
    pub fn raw(&self) -> Self {
        Self { phi_m: self.phi_m, pdh_offset: 0.0 }
    }
}

/// Seed-pump-stabilizer configuration: offset that zeroes the reflected dip
/// at the operating point, and the gain of the laser-power subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpsConfig {
    pub sps_offset: f64,
    pub power_comp_gain: f64,
}

impl SpsConfig {
    pub fn new(sps_offset: f64, power_comp_gain: f64) -> Result<Self, SignalError> {
        let cfg = Self { sps_offset, power_comp_gain };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.power_comp_gain >= 0.0 && self.power_comp_gain.is_finite()) {
            return Err(CavityError::InvalidParams(
                "power_comp_gain must be finite and >= 0".to_string(),
            )
            .into());
        }
        if !self.sps_offset.is_finite() {
            return Err(CavityError::InvalidParams("sps_offset must be finite".to_string()).into());
        }
        Ok(())
    }
}

/// One point of a cavity scan. `valid` is false where the configuration
/// crossed threshold; such samples keep their grid position but carry NaN
/// observables so downstream consumers cannot silently average them in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub phi: f64,
    pub phi_p: f64,
    pub eps_pdh: f64,
    pub eps_sps: f64,
    pub reflected_power: f64,
    pub transmitted_power: f64,
    pub valid: bool,
}

/// Demodulated PDH error without any electronic offset.
pub fn pdh_error_raw(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
    phi_m: f64,
) -> Result<f64, SignalError> {
    let carrier = reflected_field(params, pump, det)?;
    let lower = reflected_field(params, pump, Detuning::from_phase(det.phi - phi_m))?;
    let upper = reflected_field(params, pump, Detuning::from_phase(det.phi + phi_m))?;
    Ok((carrier * lower.conj() - carrier.conj() * upper).im)
}

/// PDH error as the servo sees it: demodulated signal minus the configured
/// electronic offset.
pub fn pdh_error(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
    cfg: &PdhConfig,
) -> Result<f64, SignalError> {
    Ok(pdh_error_raw(params, pump, det, cfg.phi_m)? - cfg.pdh_offset)
}

/// Raw PDH value at zero detuning: the offset the electronic compensation
/// must subtract to restore a zero crossing at resonance. Vanishes at
/// `phi_p = +-pi/2` and is antisymmetric under `phi_p -> -pi - phi_p`.
pub fn pdh_offset_at_resonance(
    params: &OpoParams,
    pump: &PumpConfig,
    cfg: &PdhConfig,
) -> Result<f64, SignalError> {
    pdh_error_raw(params, pump, Detuning::from_phase(0.0), cfg.phi_m)
}

const GOLDEN_TOL: f64 = 1e-9;
const COARSE_GRID: usize = 1001;

/// Locates the reflected-power minimum within `[-phi_search_window,
/// +phi_search_window]`: coarse grid, golden-section refinement of the
/// bracketing interval, then one parabolic polish step. The dip is smooth
/// but loses its symmetry whenever `phi_p` is away from quadrature, so the
/// whole search assumes nothing beyond unimodality inside the bracket.
///
/// Golden section alone stalls near sqrt(machine-eps) of the dip width:
/// within ~1e-8 rad of the true minimum the power values are flat to float
/// precision and the bracket drifts on rounding noise. The final parabolic
/// step samples at +-3e-6 rad, where curvature still dominates rounding,
/// and lands within ~1e-9 rad of the true minimum.
pub fn reflected_min(
    params: &OpoParams,
    pump: &PumpConfig,
    phi_search_window: f64,
) -> Result<(f64, f64), SignalError> {
    assert!(
        phi_search_window > 0.0 && phi_search_window.is_finite(),
        "search window must be a positive half-width in rad"
    );
    reflected_min_in(params, pump, (-phi_search_window, phi_search_window), COARSE_GRID)
}

/// Ranged variant of [`reflected_min`] for callers tracking a known dip:
/// searches `[range.0, range.1]` with `coarse` grid points before refining.
/// The coarse grid must be dense enough that at least one point lands
/// inside the dip, so wide windows need hundreds of points while a tracker
/// re-centering on the previous minimum gets away with a few dozen.
pub fn reflected_min_in(
    params: &OpoParams,
    pump: &PumpConfig,
    range: (f64, f64),
    coarse: usize,
) -> Result<(f64, f64), SignalError> {
    let (lo, hi) = range;
    assert!(lo.is_finite() && hi.is_finite() && lo < hi, "search range must be finite and ordered");
    assert!(coarse >= 5, "coarse grid needs at least 5 points");
    let power = |phi: f64| -> Result<f64, SignalError> {
        Ok(reflected_field(params, pump, Detuning::from_phase(phi))?.norm_sqr())
    };
    let grid_phi = |i: usize| lo + (hi - lo) * i as f64 / (coarse - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..coarse {
        let p = power(grid_phi(i))?;
        if p < best.1 {
            best = (i, p);
        }
    }
    if best.0 == 0 || best.0 == coarse - 1 {
        return Err(SignalError::WindowTooNarrow { phi: grid_phi(best.0) });
    }
    let (mut a, mut b) = (grid_phi(best.0 - 1), grid_phi(best.0 + 1));
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = power(c)?;
    let mut fd = power(d)?;
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = power(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = power(d)?;
        }
    }
    let mut phi_min = 0.5 * (a + b);
    // Parabolic polish on a stencil wide enough to rise above rounding.
    let h = 3e-6;
    let f_lo = power(phi_min - h)?;
    let f_mid = power(phi_min)?;
    let f_hi = power(phi_min + h)?;
    let curvature = f_lo - 2.0 * f_mid + f_hi;
    if curvature > 0.0 {
        let shift = 0.5 * h * (f_lo - f_hi) / curvature;
        phi_min += shift.clamp(-h, h);
    }
    Ok((phi_min, power(phi_min)?))
}

/// Seed-pump-stabilizer error: the reflected power, compensated for laser
/// power drift around its nominal value of 1 and shifted by the calibrated
/// offset. Pure arithmetic on already-measured powers.
pub fn sps_error(reflected_power: f64, laser_power: f64, cfg: &SpsConfig) -> f64 {
    reflected_power - cfg.power_comp_gain * (laser_power - 1.0) - cfg.sps_offset
}

/// Pump-modulation error signal (the alternative that needs its own
/// modulation/demodulation stage): `eps_B = Im[E_R E_m* - E_R* E_m]` with
/// the sideband field `E_m = i gamma sqrt(1-R1)/sqrt(R1) conj(E_c)`.
/// The modulation depth scales the signal linearly and is fixed at 1 here;
/// use [`bowen_error_scaled`] for other depths.
pub fn bowen_error(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
) -> Result<f64, SignalError> {
    bowen_error_scaled(params, pump, det, 1.0)
}

/// [`bowen_error`] with an explicit modulation-depth scale `beta`.
pub fn bowen_error_scaled(
    params: &OpoParams,
    pump: &PumpConfig,
    det: Detuning,
    beta: f64,
) -> Result<f64, SignalError> {
    let ec = intracavity_field(params, pump, det)?;
    let er = reflected_field(params, pump, det)?;
    let em = opo_core::ComplexAmplitude::i()
        * pump.gamma()
        * ((1.0 - params.r1).sqrt() / params.r1.sqrt())
        * ec.conj();
    // Im(z - conj(z)) = 2 Im(z)
    Ok(beta * 2.0 * (er * em.conj()).im)
}

/// Sweeps a uniform detuning grid and records every observable the two
/// servos and the scan displays use. Above-threshold grid points are kept
/// (grid position intact) but flagged invalid with NaN observables.
/// Transmitted power is reported as `|E_c|^2`: the output coupling to the
/// detector is a fixed proportionality constant absorbed into the units.
pub fn scan_cavity(
    params: &OpoParams,
    pump: &PumpConfig,
    cfg_pdh: &PdhConfig,
    cfg_sps: &SpsConfig,
    phi_range: (f64, f64),
    n_points: usize,
) -> Result<Vec<ErrorSample>, SignalError> {
    if n_points < 2 {
        return Err(SignalError::TooFewPoints { needed: 2, got: n_points });
    }
    let (lo, hi) = phi_range;
    let mut samples = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let phi = lo + (hi - lo) * i as f64 / (n_points - 1) as f64;
        let det = Detuning::from_phase(phi);
        let fields = intracavity_field(params, pump, det)
            .and_then(|ec| Ok((ec, reflected_field(params, pump, det)?)));
        let sample = match fields {
            Ok((ec, er)) => {
                let reflected = er.norm_sqr();
                // The PDH sidebands reach further than the carrier; a
                // threshold crossing there invalidates the sample too.
                match pdh_error(params, pump, det, cfg_pdh) {
                    Ok(eps_pdh) => ErrorSample {
                        phi,
                        phi_p: pump.phi_p,
                        eps_pdh,
                        eps_sps: sps_error(reflected, 1.0, cfg_sps),
                        reflected_power: reflected,
                        transmitted_power: ec.norm_sqr(),
                        valid: true,
                    },
                    Err(_) => invalid_sample(phi, pump.phi_p),
                }
            }
            Err(_) => invalid_sample(phi, pump.phi_p),
        };
        samples.push(sample);
    }
    Ok(samples)
}

fn invalid_sample(phi: f64, phi_p: f64) -> ErrorSample {
    ErrorSample {
        phi,
        phi_p,
        eps_pdh: f64::NAN,
        eps_sps: f64::NAN,
        reflected_power: f64::NAN,
        transmitted_power: f64::NAN,
        valid: false,
    }
}

/// Reads the two electronic offsets off a recorded scan: the PDH and SPS
/// signal values at the sample of minimal reflected power.
///
/// The returned values are increments relative to whatever offsets the scan
/// was taken with. For a raw scan (both offsets zero) they are the absolute
/// calibration: the raw PDH value at the dip and the dip power itself.
/// Re-calibrating a scan taken with these offsets applied returns values
/// below grid resolution, which is the idempotence the lock acquisition
/// relies on.
pub fn calibrate_offsets(scan: &[ErrorSample]) -> Result<(f64, f64), SignalError> {
    let mut min_idx = None;
    let mut min_power = f64::INFINITY;
    for (i, s) in scan.iter().enumerate() {
        if s.valid && s.reflected_power < min_power {
            min_power = s.reflected_power;
            min_idx = Some(i);
        }
    }
    let idx = min_idx.ok_or(SignalError::NoValidSamples)?;
    if idx == 0 || idx == scan.len() - 1 {
        return Err(SignalError::WindowTooNarrow { phi: scan[idx].phi });
    }
    Ok((scan[idx].eps_pdh, scan[idx].eps_sps))
}
