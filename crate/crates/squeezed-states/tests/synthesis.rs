use std::f64::consts::TAU;

use approx::assert_relative_eq;
use squeezed_states::{quadrature_stats, synthesize_trace, GaussianStateParams};

#[test]
fn same_seed_reproduces_the_trace_bitwise() {
    let state = GaussianStateParams::new(1.5, 0.3, 2.0, 0.1).unwrap();
    let a = synthesize_trace(&state, (0.0, TAU, 4096), 42);
    let b = synthesize_trace(&state, (0.0, TAU, 4096), 42);
    assert_eq!(a, b);
    let c = synthesize_trace(&state, (0.0, TAU, 4096), 43);
    assert!(a.samples.iter().zip(&c.samples).any(|(x, y)| x.x != y.x));
}

#[test]
fn ramp_endpoints_and_metadata_are_exact() {
    let state = GaussianStateParams::vacuum();
    let trace = synthesize_trace(&state, (0.25, 5.75, 1000), 9);
    assert_eq!(trace.samples.first().unwrap().theta, 0.25);
    assert_eq!(trace.samples.last().unwrap().theta, 5.75);
    assert_eq!(trace.seed, Some(9));
    assert_eq!(trace.ramp, Some((0.25, 5.75)));
    assert_eq!(trace.n_samples(), 1000);
}

#[test]
fn squeezed_axis_noise_floor_matches_theory() {
    // Strong pure squeezing probed along its quiet axis: the sample spread
    // collapses to exp(-|xi|) of the vacuum level.
    let r = 2.0;
    let state = GaussianStateParams::new(0.0, r, 1.2, 0.0).unwrap();
    let axis = state.xi_arg / 2.0;
    let trace = synthesize_trace(&state, (axis, axis, 100_000), 7);
    let n = trace.n_samples() as f64;
    let mean = trace.samples.iter().map(|s| s.x).sum::<f64>() / n;
    let var = trace.samples.iter().map(|s| (s.x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert_relative_eq!(var.sqrt(), (-r).exp(), max_relative = 0.02);
}

#[test]
fn undisplaced_trace_averages_to_zero() {
    let state = GaussianStateParams::new(0.0, 0.5, 0.8, 0.2).unwrap();
    let trace = synthesize_trace(&state, (0.0, TAU, 100_000), 13);
    let n = trace.n_samples() as f64;
    let mean = trace.samples.iter().map(|s| s.x).sum::<f64>() / n;
    let worst_sigma = ((1.0 + 2.0 * state.n_th) * (2.0 * state.xi_mag).exp()).sqrt();
    assert!(mean.abs() < 5.0 * worst_sigma / n.sqrt(), "mean {mean} outside 5 sigma band");
}

#[test]
fn binned_mean_curve_matches_the_homodyne_model() {
    let state = GaussianStateParams::new(2.93, 0.46, 0.0, 0.13).unwrap();
    let trace = synthesize_trace(&state, (0.0, TAU, 10_000), 21);
    let bins = 50usize;
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); bins];
    for s in &trace.samples {
        let idx = ((s.theta / TAU) * bins as f64) as usize;
        let b = &mut sums[idx.min(bins - 1)];
        b.0 += 1;
        b.1 += s.theta;
        b.2 += s.x;
    }
    let means: Vec<(f64, f64)> = sums
        .iter()
        .map(|&(count, theta_sum, x_sum)| {
            assert!(count > 0, "empty phase bin");
            (theta_sum / count as f64, x_sum / count as f64)
        })
        .collect();
    let grand = means.iter().map(|&(_, m)| m).sum::<f64>() / bins as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(theta, m) in &means {
        let model = 2.0 * state.alpha * theta.cos();
        ss_res += (m - model) * (m - model);
        ss_tot += (m - grand) * (m - grand);
    }
    let r2 = 1.0 - ss_res / ss_tot;
    assert!(r2 > 0.99, "R^2 = {r2}");
}

#[test]
fn sample_variance_tracks_the_phase_dependent_model() {
    // One bin per ramp segment of constant variance: hold theta fixed at a
    // few phases and compare the spread against quadrature_stats.
    let state = GaussianStateParams::new(1.0, 0.46, 2.4, 0.13).unwrap();
    for (i, &theta) in [0.0, 0.7, 1.2, 2.9].iter().enumerate() {
        let trace = synthesize_trace(&state, (theta, theta, 20_000), 100 + i as u64);
        let n = trace.n_samples() as f64;
        let mean = trace.samples.iter().map(|s| s.x).sum::<f64>() / n;
        let var = trace.samples.iter().map(|s| (s.x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (model_mean, model_var) = quadrature_stats(&state, theta);
        assert_relative_eq!(mean, model_mean, epsilon = 5.0 * (model_var / n).sqrt());
        assert_relative_eq!(var, model_var, max_relative = 0.05);
    }
}
