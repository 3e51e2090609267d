//! Symmetry properties of the error signals. Each of these has an analytic
//! proof sketch behind it (the reflected field obeys E_R(-phi, phi_p at
//! quadrature) = conj(E_R(phi))), but the tests check the implementation,
//! not the proof.

use error_signals::{pdh_error_raw, pdh_offset_at_resonance, reflected_min, PdhConfig};
use opo_core::{Detuning, OpoParams, PumpConfig};
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

const PHI_M: f64 = 0.1;

fn theory() -> OpoParams {
    OpoParams::new(0.999, 0.9, 3.0e-3, 3.025e9).unwrap()
}

fn experimental() -> OpoParams {
    OpoParams::new(0.9988, 0.917, 2.4e-3, 3.025e9).unwrap()
}

proptest! {
    /// At quadrature pump phases the raw PDH curve is an odd function of
    /// detuning, for any below-threshold cavity.
    #[test]
    fn pdh_is_odd_in_detuning_at_quadrature(
        r1 in 0.99..0.9995f64,
        r2 in 0.85..0.95f64,
        delta in 1e-3..5e-3f64,
        gamma_frac in 0.0..0.6f64,
        quadrature_sign in prop::bool::ANY,
        phi in 0.0..0.25f64,
    ) {
        let params = OpoParams::new(r1, r2, delta, 3.025e9).unwrap();
        let phi_p = if quadrature_sign { FRAC_PI_2 } else { -FRAC_PI_2 };
        let pump = PumpConfig::new(gamma_frac * params.threshold_gamma(), phi_p).unwrap();
        let plus = pdh_error_raw(&params, &pump, Detuning::from_phase(phi), PHI_M).unwrap();
        let minus = pdh_error_raw(&params, &pump, Detuning::from_phase(-phi), PHI_M).unwrap();
        prop_assert!((plus + minus).abs() <= 1e-10, "odd-part residual {:e}", plus + minus);
    }

    /// Reflecting the pump phase about -pi/2 flips the sign of the
    /// resonant PDH offset.
    #[test]
    fn resonant_offset_is_antisymmetric_about_minus_quadrature(
        phi_p in -PI..PI,
        gamma_frac in 0.05..0.6f64,
    ) {
        let params = theory();
        let cfg = PdhConfig::new(PHI_M, 0.0).unwrap();
        let gamma = gamma_frac * params.threshold_gamma();
        let here = pdh_offset_at_resonance(
            &params, &PumpConfig::new(gamma, phi_p).unwrap(), &cfg,
        ).unwrap();
        let mirrored = pdh_offset_at_resonance(
            &params, &PumpConfig::new(gamma, -PI - phi_p).unwrap(), &cfg,
        ).unwrap();
        prop_assert!((here + mirrored).abs() <= 1e-10);
    }
}

#[test]
fn resonant_offset_sweep_has_quadrature_zeros_and_regime_signs() {
    let params = theory();
    let cfg = PdhConfig::new(PHI_M, 0.0).unwrap();
    let off = |phi_p: f64| {
        pdh_offset_at_resonance(&params, &PumpConfig::new(2.0e-2, phi_p).unwrap(), &cfg).unwrap()
    };
    assert!(off(-FRAC_PI_2).abs() < 1e-12);
    assert!(off(FRAC_PI_2).abs() < 1e-12);
    let n = 400;
    let mut prev = off(-PI);
    for k in 1..=n {
        let phi_p = -PI + 2.0 * PI * k as f64 / n as f64;
        let v = off(phi_p);
        // Continuity at the sweep resolution.
        assert!(
            (v - prev).abs() < 0.05,
            "offset jumped by {} at phi_p = {phi_p}",
            (v - prev).abs()
        );
        prev = v;
        // Sign pattern: positive outside the open interval (-pi/2, pi/2),
        // negative inside it.
        if phi_p.abs() < FRAC_PI_2 - 0.05 {
            assert!(v < 0.0, "expected negative offset at phi_p = {phi_p}, got {v}");
        } else if phi_p.abs() > FRAC_PI_2 + 0.05 {
            assert!(v > 0.0, "expected positive offset at phi_p = {phi_p}, got {v}");
        }
    }
}

#[test]
fn reflected_dip_is_monotone_between_quadratures() {
    for params in [theory(), experimental()] {
        let gamma = 0.4 * params.threshold_gamma();
        let mut prev = f64::NEG_INFINITY;
        let n = 200;
        for k in 0..n {
            let lo = -FRAC_PI_2 + 0.05;
            let hi = FRAC_PI_2 - 0.05;
            let phi_p = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let pump = PumpConfig::new(gamma, phi_p).unwrap();
            let (_, p_min) = reflected_min(&params, &pump, 0.2).unwrap();
            assert!(
                p_min > prev,
                "dip depth not strictly increasing at phi_p = {phi_p}: {p_min} <= {prev}"
            );
            prev = p_min;
        }
    }
}

#[test]
fn reflected_dip_extremes_and_pump_period() {
    let params = theory();
    let pump = |phi_p: f64| PumpConfig::new(2.0e-2, phi_p).unwrap();
    let dip = |phi_p: f64| reflected_min(&params, &pump(phi_p), 0.2).unwrap().1;
    let at_amp = dip(-FRAC_PI_2);
    let at_deamp = dip(FRAC_PI_2);
    for k in 0..40 {
        let phi_p = -PI + 2.0 * PI * k as f64 / 40.0;
        let v = dip(phi_p);
        assert!(v >= at_amp - 1e-12 && v <= at_deamp + 1e-12);
        // One full pump turn changes nothing (up to the trig reduction).
        assert!((dip(phi_p + 2.0 * PI) - v).abs() < 1e-10);
    }
}

#[test]
fn unpumped_dip_sits_at_zero_detuning() {
    let params = experimental();
    let pump = PumpConfig::new(0.0, 0.0).unwrap();
    let (phi_min, p_min) = reflected_min(&params, &pump, 0.2).unwrap();
    // Symmetric dip: the refinement tolerance is the only slack.
    assert!(phi_min.abs() < 1e-9, "phi_min = {phi_min:e}");
    assert!(p_min < 1.0);
}

#[test]
fn boundary_minimum_is_rejected() {
    let params = experimental();
    // At phi_p = 0 the dip sits near -2.6e-4 rad; a 1e-4 window cannot
    // contain it.
    let pump = PumpConfig::new(1.85e-2, 0.0).unwrap();
    let err = reflected_min(&params, &pump, 1e-4);
    assert!(matches!(err, Err(error_signals::SignalError::WindowTooNarrow { .. })));
}
