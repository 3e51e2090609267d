//! The five subcommands. Each one loads nothing on its own: it receives the
//! validated configuration and the content hash, computes, writes artifacts
//! into `output_dir`, and prints a short summary to stdout.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;
use std::path::PathBuf;

use error_signals::{
    bowen_error, pdh_error_raw, pdh_offset_at_resonance, reflected_min, sps_error, SpsConfig,
};
use lock_sim::{acquire_lock, rin, scan_pump_phase, LockTrace};
use opo_core::Detuning;
use squeezed_states::{
    arg_xi_from_pump, reconstruct, squeezing_db, synthesize_trace, GaussianStateParams,
};

use crate::config::ExperimentConfig;
use crate::output::{preamble, write_atomic};
use crate::CliError;

/// Half-width of the detuning window searched for the reflected dip during
/// calibration; generous next to the dip width at realistic couplings.
const CAL_HALF_WIDTH: f64 = 0.3;

fn artifact(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn trace_csv(trace: &LockTrace, head: &str) -> String {
    let mut out = String::with_capacity(head.len() + trace.samples.len() * 64);
    out.push_str(head);
    out.push_str("t,phi,phi_p,p_trans,p_refl,eps_pdh,eps_sps,u_pdh,u_sps,p_laser\n");
    for s in &trace.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.phi,
            s.phi_p,
            s.p_trans,
            s.p_refl,
            s.eps_pdh,
            s.eps_sps,
            s.u_pdh,
            s.u_sps,
            s.p_laser
        );
    }
    out
}

pub fn scan_cavity(
    cfg: &ExperimentConfig,
    sha: &str,
    phi_start: f64,
    phi_end: f64,
    points: usize,
) -> Result<(), CliError> {
    if !(phi_start.is_finite() && phi_end.is_finite() && phi_start < phi_end) {
        return Err(CliError::Config(format!(
            "scan range [{phi_start}, {phi_end}] must be finite and ordered"
        )));
    }
    let (phi_min, p_min) = reflected_min(&cfg.opo, &cfg.pump, CAL_HALF_WIDTH)?;
    let pdh_offset_dip =
        pdh_error_raw(&cfg.opo, &cfg.pump, Detuning::from_phase(phi_min), cfg.pdh.phi_m)?;
    let pdh_offset_res = pdh_offset_at_resonance(&cfg.opo, &cfg.pump, &cfg.pdh)?;

    let rows = error_signals::scan_cavity(
        &cfg.opo,
        &cfg.pump,
        &cfg.pdh,
        &cfg.sps,
        (phi_start, phi_end),
        points,
    )?;
    let n_valid = rows.iter().filter(|s| s.valid).count();
    if n_valid == 0 {
        return Err(CliError::Config(
            "every grid point is above threshold; widen the scan or lower the pump".into(),
        ));
    }

    let mut out = preamble("scan-cavity", sha, cfg.lock.seed);
    out.push_str("phi,phi_p,eps_pdh,eps_sps,reflected_power,transmitted_power,valid\n");
    for s in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.phi, s.phi_p, s.eps_pdh, s.eps_sps, s.reflected_power, s.transmitted_power, s.valid
        );
    }
    let path = artifact(cfg, "scan_cavity.csv");
    write_atomic(&path, out.as_bytes())?;

    println!("phi_min = {phi_min}");
    println!("sps_offset = {p_min}");
    println!("pdh_offset = {pdh_offset_dip}");
    println!("pdh_offset_at_resonance = {pdh_offset_res}");
    println!("wrote {} ({} rows, {} valid)", path.display(), rows.len(), n_valid);
    Ok(())
}

pub fn lock(cfg: &ExperimentConfig, sha: &str) -> Result<(), CliError> {
    let (offsets, trace) = acquire_lock(&cfg.opo, &cfg.pump, &cfg.pdh, &cfg.lock, &cfg.noise)?;
    let window = (offsets.settle_end, offsets.settle_end + cfg.lock.duration);
    let report = rin(&trace, window)?;

    let trace_path = artifact(cfg, "lock_trace.csv");
    write_atomic(&trace_path, trace_csv(&trace, &preamble("lock", sha, cfg.lock.seed)).as_bytes())?;

    let mut rep = preamble("lock", sha, cfg.lock.seed);
    for (k, v) in [
        ("rin", report.rin),
        ("window_start", report.window.0),
        ("window_end", report.window.1),
        ("phi_lock", offsets.phi_lock),
        ("pdh_offset", offsets.pdh_offset),
        ("sps_offset", offsets.sps_offset),
        ("power_comp_gain", offsets.power_comp_gain),
        ("open_loop_rms", offsets.open_loop_rms),
        ("settle_end", offsets.settle_end),
    ] {
        let _ = writeln!(rep, "{k} = {v}");
    }
    let report_path = artifact(cfg, "lock_report.txt");
    write_atomic(&report_path, rep.as_bytes())?;

    println!("rin = {} over [{}, {}) s", report.rin, report.window.0, report.window.1);
    println!("wrote {}", trace_path.display());
    println!("wrote {}", report_path.display());
    Ok(())
}

pub fn scan_pump(
    cfg: &ExperimentConfig,
    sha: &str,
    rate: f64,
    duration: f64,
) -> Result<(), CliError> {
    let trace = scan_pump_phase(&cfg.opo, &cfg.pump, &cfg.pdh, &cfg.lock, rate, duration)?;
    let path = artifact(cfg, "pump_scan.csv");
    write_atomic(&path, trace_csv(&trace, &preamble("scan-pump", sha, cfg.lock.seed)).as_bytes())?;
    println!("wrote {} ({} samples, {} rad/s)", path.display(), trace.samples.len(), rate);
    Ok(())
}

pub fn state(cfg: &ExperimentConfig, sha: &str, samples: usize) -> Result<(), CliError> {
    // The squeezing angle is not free: the pump phase the loops hold fixes
    // it. Magnitude, displacement, and thermal occupation come from config.
    let truth = GaussianStateParams::new(
        cfg.state.alpha,
        cfg.state.xi_mag,
        arg_xi_from_pump(cfg.pump.phi_p),
        cfg.state.n_th,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let trace = synthesize_trace(&truth, (0.0, TAU, samples), cfg.lock.seed);
    let mut csv = preamble("state", sha, cfg.lock.seed).into_bytes();
    trace.to_csv(&mut csv)?;
    let trace_path = artifact(cfg, "homodyne.csv");
    write_atomic(&trace_path, &csv)?;

    let est = reconstruct(&trace)?;
    let mut rep = preamble("state", sha, cfg.lock.seed);
    for (k, v) in [
        ("truth_alpha", truth.alpha),
        ("truth_xi_mag", truth.xi_mag),
        ("truth_xi_arg", truth.xi_arg),
        ("truth_n_th", truth.n_th),
        ("truth_squeezing_db", squeezing_db(truth.xi_mag, truth.n_th)),
    ] {
        let _ = writeln!(rep, "{k} = {v}");
    }
    rep.push_str(&est.to_key_value());
    let report_path = artifact(cfg, "state_estimate.txt");
    write_atomic(&report_path, rep.as_bytes())?;

    println!(
        "squeezing_db: truth = {}, estimate = {}",
        squeezing_db(truth.xi_mag, truth.n_th),
        squeezing_db(est.params.xi_mag, est.params.n_th)
    );
    println!("wrote {}", trace_path.display());
    println!("wrote {}", report_path.display());
    Ok(())
}

pub fn compare_error_signals(
    cfg: &ExperimentConfig,
    sha: &str,
    points: usize,
) -> Result<(), CliError> {
    if points < 3 {
        return Err(CliError::Config(format!(
            "pump-phase grid needs at least 3 points, got {points}"
        )));
    }
    // Reference dip power at the configured pump phase: the offset a servo
    // holding that phase would have calibrated away.
    let (_, p_ref) = reflected_min(&cfg.opo, &cfg.pump, CAL_HALF_WIDTH)?;
    let sps_cfg = SpsConfig { sps_offset: p_ref, power_comp_gain: 0.0 };

    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let f = i as f64 / (points - 1) as f64;
        let phi_p = -PI * (1.0 - f) + PI * f;
        let pump = cfg.pump.with_phase(phi_p);
        let (phi_lock, p_min) = reflected_min(&cfg.opo, &pump, CAL_HALF_WIDTH)?;
        let eps_sps = sps_error(p_min, 1.0, &sps_cfg);
        let eps_b = bowen_error(&cfg.opo, &pump, Detuning::from_phase(phi_lock))?;
        rows.push((phi_p, phi_lock, p_min, eps_sps, eps_b));
    }

    let mut out = preamble("compare-error-signals", sha, cfg.lock.seed);
    out.push_str("phi_p,phi_lock,reflected_min,eps_sps,eps_bowen\n");
    for (phi_p, phi_lock, p_min, eps_sps, eps_b) in &rows {
        let _ = writeln!(out, "{phi_p},{phi_lock},{p_min},{eps_sps},{eps_b}");
    }
    let path = artifact(cfg, "error_signals.csv");
    write_atomic(&path, out.as_bytes())?;

    let cross = |pick: fn(&(f64, f64, f64, f64, f64)) -> f64| -> Vec<f64> {
        let mut hits = Vec::new();
        for pair in rows.windows(2) {
            let (a, b) = (pick(&pair[0]), pick(&pair[1]));
            if a == 0.0 {
                hits.push(pair[0].0);
            } else if a * b < 0.0 {
                hits.push(pair[0].0 + (pair[1].0 - pair[0].0) * a / (a - b));
            }
        }
        if let Some(last) = rows.last() {
            if pick(last) == 0.0 {
                hits.push(last.0);
            }
        }
        hits
    };
    let fmt = |hits: &[f64]| {
        if hits.is_empty() {
            "none".to_string()
        } else {
            hits.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(", ")
        }
    };
    let sps_hits = cross(|r| r.3);
    let bowen_hits = cross(|r| r.4);

    // Side-of-dip locks die where the power signal goes flat in phi_p;
    // report the slope at the two quadratures for that comparison.
    let slope_at = |phi_p: f64| -> Result<f64, CliError> {
        let h = 1e-4;
        let lo = reflected_min(&cfg.opo, &cfg.pump.with_phase(phi_p - h), CAL_HALF_WIDTH)?;
        let hi = reflected_min(&cfg.opo, &cfg.pump.with_phase(phi_p + h), CAL_HALF_WIDTH)?;
        Ok((hi.1 - lo.1) / (2.0 * h))
    };

    println!("sps zero crossings (rad): {}", fmt(&sps_hits));
    println!("bowen zero crossings (rad): {}", fmt(&bowen_hits));
    println!("d(reflected_min)/d(phi_p) at -pi/2 = {}", slope_at(-FRAC_PI_2)?);
    println!("d(reflected_min)/d(phi_p) at +pi/2 = {}", slope_at(FRAC_PI_2)?);
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}
