use std::f64::consts::{FRAC_PI_2, PI, TAU};

use approx::{assert_abs_diff_eq, assert_relative_eq};
use proptest::prelude::*;
use squeezed_states::{arg_xi_from_pump, quadrature_stats, squeezing_db, GaussianStateParams};

#[test]
fn vacuum_has_zero_mean_and_unit_variance() {
    let vac = GaussianStateParams::vacuum();
    for k in 0..64 {
        let theta = -7.0 + 14.0 * k as f64 / 63.0;
        let (mean, var) = quadrature_stats(&vac, theta);
        assert_abs_diff_eq!(mean, 0.0);
        assert_relative_eq!(var, 1.0, max_relative = 1e-14);
    }
}

#[test]
fn displaced_state_mean_tracks_the_local_oscillator() {
    let state = GaussianStateParams::new(2.93, 0.46, 0.0, 0.13).unwrap();
    let (mean, _) = quadrature_stats(&state, 0.0);
    assert_relative_eq!(mean, 5.86, max_relative = 1e-12);
    let (quad_mean, _) = quadrature_stats(&state, FRAC_PI_2);
    assert_abs_diff_eq!(quad_mean, 0.0, epsilon = 1e-12);
}

#[test]
fn variance_extremes_sit_on_the_squeezing_axes() {
    let state = GaussianStateParams::new(2.93, 0.46, 0.0, 0.13).unwrap();
    let (_, v_min) = quadrature_stats(&state, 0.0);
    let (_, v_max) = quadrature_stats(&state, FRAC_PI_2);
    assert_relative_eq!(v_min, 1.26 * (-0.92f64).exp(), max_relative = 1e-12);
    assert_relative_eq!(v_max, 1.26 * (0.92f64).exp(), max_relative = 1e-12);
    // Half-step offset keeps the grid off the axes themselves.
    for k in 0..100 {
        let theta = PI * (k as f64 + 0.5) / 100.0;
        let (_, v) = quadrature_stats(&state, theta);
        assert!(v > v_min && v < v_max, "variance not bracketed at theta = {theta}");
    }
}

#[test]
fn squeezing_metric_anchors() {
    assert_abs_diff_eq!(squeezing_db(0.0, 0.0), 0.0);
    let anchor = squeezing_db(0.46, 0.13);
    assert_relative_eq!(anchor, 2.9918037823342885, max_relative = 1e-12);
    // Same quantity through the log identity rather than through log10(exp).
    assert_relative_eq!(
        anchor,
        10.0 * (2.0 * 0.46 - 1.26f64.ln()) / 10f64.ln(),
        max_relative = 1e-12
    );
    // The dB level is quoted against the variance floor of the state.
    let state = GaussianStateParams::new(0.0, 0.46, 0.0, 0.13).unwrap();
    let (_, v_min) = quadrature_stats(&state, 0.0);
    assert_relative_eq!(anchor, -10.0 * v_min.log10(), max_relative = 1e-12);
}

#[test]
fn pump_phase_sets_the_squeezing_angle_exactly() {
    assert_eq!(arg_xi_from_pump(-FRAC_PI_2), 0.0);
    assert_eq!(arg_xi_from_pump(0.0), FRAC_PI_2);
    assert_eq!(arg_xi_from_pump(FRAC_PI_2), PI);
}

proptest! {
    #[test]
    fn squeezing_angle_always_lands_in_range(phi_p in -1e3f64..1e3) {
        let psi = arg_xi_from_pump(phi_p);
        prop_assert!((0.0..TAU).contains(&psi));
        // Valid as a state parameter straight away.
        prop_assert!(GaussianStateParams::new(0.0, 0.1, psi, 0.0).is_ok());
    }

    #[test]
    fn half_turn_flips_the_mean_and_keeps_the_variance(
        alpha in -3.0f64..3.0,
        r in 0.0f64..1.2,
        psi in 0.0f64..6.28,
        n_th in 0.0f64..0.5,
        theta in -7.0f64..7.0,
    ) {
        let state = GaussianStateParams::new(alpha, r, psi, n_th).unwrap();
        let (m0, v0) = quadrature_stats(&state, theta);
        let (m1, v1) = quadrature_stats(&state, theta + PI);
        prop_assert!((m0 + m1).abs() < 1e-12 * (1.0 + m0.abs()));
        prop_assert!((v0 - v1).abs() < 1e-12 * v0);
    }

    #[test]
    fn conjugate_quadratures_obey_the_uncertainty_bound(
        r in 0.0f64..1.2,
        psi in 0.0f64..6.28,
        n_th in 0.0f64..0.5,
        theta in -7.0f64..7.0,
    ) {
        let state = GaussianStateParams::new(0.0, r, psi, n_th).unwrap();
        let (_, v0) = quadrature_stats(&state, theta);
        let (_, v1) = quadrature_stats(&state, theta + FRAC_PI_2);
        let floor = (1.0 + 2.0 * n_th) * (1.0 + 2.0 * n_th);
        prop_assert!(v0 * v1 >= floor * (1.0 - 1e-12));
    }

    #[test]
    fn pure_squeezed_states_saturate_the_bound_on_axis(
        r in 0.0f64..1.2,
        psi in 0.0f64..6.28,
    ) {
        let state = GaussianStateParams::new(0.0, r, psi, 0.0).unwrap();
        let (_, v0) = quadrature_stats(&state, psi / 2.0);
        let (_, v1) = quadrature_stats(&state, psi / 2.0 + FRAC_PI_2);
        prop_assert!((v0 * v1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_is_minimal_at_half_the_squeezing_angle(
        r in 0.05f64..1.2,
        psi in 0.0f64..6.28,
        n_th in 0.0f64..0.5,
        theta in -7.0f64..7.0,
    ) {
        let state = GaussianStateParams::new(0.0, r, psi, n_th).unwrap();
        let (_, v_axis) = quadrature_stats(&state, psi / 2.0);
        let (_, v) = quadrature_stats(&state, theta);
        prop_assert!(v_axis <= v + 1e-12);
    }

    #[test]
    fn deeper_squeezing_raises_the_db_level(
        r in 0.0f64..2.0,
        dr in 1e-6f64..1.0,
        n_th in 0.0f64..1.0,
    ) {
        prop_assert!(squeezing_db(r + dr, n_th) > squeezing_db(r, n_th));
    }

    #[test]
    fn thermal_photons_lower_the_db_level(
        r in 0.0f64..2.0,
        n_th in 0.0f64..1.0,
        dn in 1e-6f64..1.0,
    ) {
        prop_assert!(squeezing_db(r, n_th + dn) < squeezing_db(r, n_th));
    }

    #[test]
    fn bare_thermal_states_are_anti_squeezed(n_th in 1e-9f64..5.0) {
        prop_assert!(squeezing_db(0.0, n_th) < 0.0);
    }
}
