/// Integrator state of one PI controller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PiState {
    pub integrator: f64,
}

/// One PI update. The integrator accumulates `ki * error * dt` and is
/// clamped to `±integrator_clamp` before use, so the proportional branch
/// stays live while the integral branch is saturated. The returned command
/// is saturated to `±actuator_range`.
pub fn pi_step(
    state: &mut PiState,
    error: f64,
    kp: f64,
    ki: f64,
    dt: f64,
    integrator_clamp: f64,
    actuator_range: f64,
) -> f64 {
    state.integrator =
        (state.integrator + ki * error * dt).clamp(-integrator_clamp, integrator_clamp);
    (kp * error + state.integrator).clamp(-actuator_range, actuator_range)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_combines_proportional_and_integral_parts() {
        let mut st = PiState::default();
        let u = pi_step(&mut st, 0.5, 2.0, 10.0, 0.1, 10.0, 10.0);
        // integrator: 10 * 0.5 * 0.1 = 0.5; command: 2 * 0.5 + 0.5
        assert_eq!(st.integrator, 0.5);
        assert_eq!(u, 1.5);
    }

    #[test]
    fn integrator_winds_up_to_the_clamp_and_no_further() {
        let mut st = PiState::default();
        for _ in 0..1000 {
            pi_step(&mut st, 1.0, 0.0, 50.0, 0.01, 2.0, 100.0);
        }
        assert_eq!(st.integrator, 2.0);
        let mut st_neg = PiState::default();
        for _ in 0..1000 {
            pi_step(&mut st_neg, -1.0, 0.0, 50.0, 0.01, 2.0, 100.0);
        }
        assert_eq!(st_neg.integrator, -2.0);
    }

    #[test]
    fn command_saturates_at_actuator_range() {
        let mut st = PiState::default();
        let u = pi_step(&mut st, 100.0, 1.0, 0.0, 0.01, 1.0, 0.25);
        assert_eq!(u, 0.25);
        let u = pi_step(&mut st, -100.0, 1.0, 0.0, 0.01, 1.0, 0.25);
        assert_eq!(u, -0.25);
    }

    #[test]
    fn clamped_integrator_recovers_when_the_error_reverses() {
        let mut st = PiState::default();
        for _ in 0..100 {
            pi_step(&mut st, 1.0, 0.0, 1.0, 1.0, 3.0, 10.0);
        }
        assert_eq!(st.integrator, 3.0);
        // One reversed sample pulls the integrator straight off the clamp.
        pi_step(&mut st, -1.0, 0.0, 1.0, 1.0, 3.0, 10.0);
        assert_eq!(st.integrator, 2.0);
    }
}
