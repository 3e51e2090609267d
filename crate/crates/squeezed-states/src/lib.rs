//! Displaced squeezed thermal states and their homodyne signatures.
//!
//! The output state is modeled as a thermal state with `n_th` mean photons,
//! squeezed by `S(xi)` and then displaced by `D(alpha)` with real `alpha`.
//! Quadratures follow the convention
//!
//! ```text
//! x_theta = a e^{-i theta} + a^dagger e^{i theta}
//! ```
//!
//! so the vacuum variance is 1 and the mean of `x_theta` is
//! `2 * alpha * cos(theta)`. Under this convention the variance at local
//! oscillator phase `theta` is
//!
//! ```text
//! Var(theta) = (1 + 2 n_th) * ( e^{-2|xi|} cos^2(theta - arg(xi)/2)
//!                             + e^{+2|xi|} sin^2(theta - arg(xi)/2) )
//! ```
//!
//! which is minimal at `theta = arg(xi)/2` where it equals
//! `(1 + 2 n_th) e^{-2|xi|}`, the quantity the squeezing level in dB is
//! quoted against. `n_th` is an effective parameter: detection and
//! propagation losses are folded into it rather than modeled separately.
//!
//! Synthesis draws one Gaussian sample per local-oscillator phase along a
//! ramp ([`synthesize_trace`]); reconstruction ([`reconstruct`]) bins a trace
//! by phase and fits the binned moments back to the model. The states are
//! Gaussian by construction, so means and variances are sufficient: the fit
//! is moment-based, not a full pattern-function tomography. The variance
//! model is fitted through its harmonic form
//!
//! ```text
//! Var(theta) = C0 + C1 cos(2 theta) + C2 sin(2 theta)
//! ```
//!
//! with `C0 = (1+2n) cosh(2|xi|)` and `(C1, C2) = -(1+2n) sinh(2|xi|) *
//! (cos arg(xi), sin arg(xi))`, so a reconstruction exercises a different
//! algebraic route than [`quadrature_stats`] itself.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("invalid state parameters: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomographyError {
    #[error("homodyne trace cannot support a fit: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected a finite 'theta,x' pair, got '{content}'")]
    Malformed { line: usize, content: String },
}

/// Displacement, squeezing, and effective thermal occupation of the state.
///
/// `alpha` is real by convention (the seed defines the phase origin);
/// `xi_arg` lives in `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianStateParams {
    pub alpha: f64,
    pub xi_mag: f64,
    pub xi_arg: f64,
    pub n_th: f64,
}

impl GaussianStateParams {
    pub fn new(alpha: f64, xi_mag: f64, xi_arg: f64, n_th: f64) -> Result<Self, StateError> {
        let p = Self { alpha, xi_mag, xi_arg, n_th };
        p.validate()?;
        Ok(p)
    }

    /// Checks the stored values; call after deserializing from a config file.
    pub fn validate(&self) -> Result<(), StateError> {
        let bad = |what: &str| Err(StateError::InvalidState(what.to_string()));
        if !self.alpha.is_finite() {
            return bad("alpha must be a finite real amplitude");
        }
        if !(self.xi_mag >= 0.0 && self.xi_mag.is_finite()) {
            return bad("xi_mag must be finite and >= 0");
        }
        if !(self.xi_arg >= 0.0 && self.xi_arg < TAU) {
            return bad("xi_arg must lie in [0, 2*pi)");
        }
        if !(self.n_th >= 0.0 && self.n_th.is_finite()) {
            return bad("n_th must be finite and >= 0");
        }
        Ok(())
    }

    pub fn vacuum() -> Self {
        Self { alpha: 0.0, xi_mag: 0.0, xi_arg: 0.0, n_th: 0.0 }
    }
}

/// Mean and variance of the quadrature `x_theta` for this state.
///
/// Mean is `2 * alpha * cos(theta)`; the variance formula is the module-level
/// one, minimal at `theta = xi_arg / 2`.
pub fn quadrature_stats(state: &GaussianStateParams, theta: f64) -> (f64, f64) {
    let mean = 2.0 * state.alpha * theta.cos();
    let u = theta - state.xi_arg / 2.0;
    let (s, c) = u.sin_cos();
    let var = (1.0 + 2.0 * state.n_th)
        * ((-2.0 * state.xi_mag).exp() * c * c + (2.0 * state.xi_mag).exp() * s * s);
    (mean, var)
}

/// Squeezing level in dB below the vacuum variance:
/// `-10 * log10((1 + 2 n_th) * e^{-2 xi_mag})`.
///
/// Zero for vacuum, negative when thermal noise outweighs the squeezing.
pub fn squeezing_db(xi_mag: f64, n_th: f64) -> f64 {
    -10.0 * ((1.0 + 2.0 * n_th) * (-2.0 * xi_mag).exp()).log10()
}

/// Squeezing angle produced by an OPO locked at pump phase `phi_p`:
/// `arg(xi) = phi_p + pi/2`, wrapped to `[0, 2*pi)`.
pub fn arg_xi_from_pump(phi_p: f64) -> f64 {
    wrap_tau(phi_p + std::f64::consts::FRAC_PI_2)
}

/// `rem_euclid` can round up to exactly `2*pi` for tiny negative inputs;
/// fold that edge back to 0 so the `[0, 2*pi)` invariant holds.
fn wrap_tau(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One homodyne reading: local oscillator phase and quadrature value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneSample {
    pub theta: f64,
    pub x: f64,
}

/// A record of homodyne readings, usually along a phase ramp.
///
/// `seed` and `ramp` describe how the trace was synthesized; both are `None`
/// for traces imported from CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HomodyneTrace {
    pub samples: Vec<HomodyneSample>,
    pub seed: Option<u64>,
    pub ramp: Option<(f64, f64)>,
}

impl HomodyneTrace {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Writes `theta,x` rows after a header line. Floats use the shortest
    /// representation that round-trips, so export followed by [`Self::from_csv`]
    /// reproduces the samples bit for bit.
    pub fn to_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,x")?;
        for s in &self.samples {
            writeln!(w, "{},{}", s.theta, s.x)?;
        }
        Ok(())
    }

    /// Reads `theta,x` rows. Blank lines, `#` comment lines, and one header
    /// line are skipped; every sample must be finite.
    pub fn from_csv<R: BufRead>(r: R) -> Result<Self, TraceCsvError> {
        let mut samples = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t == "theta,x" {
                continue;
            }
            let malformed = || TraceCsvError::Malformed { line: idx + 1, content: t.to_string() };
            let (a, b) = t.split_once(',').ok_or_else(malformed)?;
            let theta: f64 = a.trim().parse().map_err(|_| malformed())?;
            let x: f64 = b.trim().parse().map_err(|_| malformed())?;
            if !(theta.is_finite() && x.is_finite()) {
                return Err(malformed());
            }
            samples.push(HomodyneSample { theta, x });
        }
        Ok(Self { samples, seed: None, ramp: None })
    }
}

/// Draws one Gaussian quadrature sample at each phase of a linear ramp.
///
/// The ramp runs from `theta_ramp.0` to `theta_ramp.1` (inclusive at both
/// ends) in `theta_ramp.2` steps; a single-sample ramp sits at the start
/// point. Identical seeds give bit-identical traces.
pub fn synthesize_trace(
    state: &GaussianStateParams,
    theta_ramp: (f64, f64, usize),
    seed: u64,
) -> HomodyneTrace {
    let (start, end, n) = theta_ramp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let f = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
        let theta = start * (1.0 - f) + end * f;
        let (mean, var) = quadrature_stats(state, theta);
        let z: f64 = rng.sample(StandardNormal);
        samples.push(HomodyneSample { theta, x: mean + var.sqrt() * z });
    }
    HomodyneTrace { samples, seed: Some(seed), ramp: Some((start, end)) }
}

/// Reconstructed state with asymptotic standard errors from the moment fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyEstimate {
    pub params: GaussianStateParams,
    pub alpha_se: f64,
    pub xi_mag_se: f64,
    pub xi_arg_se: f64,
    pub n_th_se: f64,
    /// Squeezing magnitude is consistent with zero, so the squeezing angle
    /// is unidentifiable: `xi_arg` is reported as 0 with infinite standard
    /// error rather than guessed from noise.
    pub degenerate: bool,
    pub n_samples: usize,
    pub bins_used: usize,
}

impl TomographyEstimate {
    /// Flat `key = value` record, one line per field, fixed key order.
    pub fn to_key_value(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        for (k, v) in [
            ("alpha", p.alpha),
            ("alpha_se", self.alpha_se),
            ("xi_mag", p.xi_mag),
            ("xi_mag_se", self.xi_mag_se),
            ("xi_arg", p.xi_arg),
            ("xi_arg_se", self.xi_arg_se),
            ("n_th", p.n_th),
            ("n_th_se", self.n_th_se),
            ("squeezing_db", squeezing_db(p.xi_mag, p.n_th)),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("degenerate = {}\n", self.degenerate));
        out.push_str(&format!("n_samples = {}\n", self.n_samples));
        out.push_str(&format!("bins_used = {}\n", self.bins_used));
        out
    }
}

/// Default phase-bin count: at the minimum accepted trace size this still
/// leaves about 20 samples per bin.
pub const DEFAULT_BINS: usize = 50;
/// Fewest samples a trace may hold for reconstruction.
pub const MIN_SAMPLES: usize = 1000;
/// Narrowest phase span a trace may cover: half the quadrature period, the
/// full period of the variance model.
pub const MIN_SPAN: f64 = std::f64::consts::PI;

const VAR_FLOOR: f64 = 1e-12;
/// Fewest occupied bins the two fits need between them.
const MIN_USABLE_BINS: usize = 8;
/// Fewest samples a bin needs for a stable variance estimate.
const MIN_BIN_COUNT: usize = 5;

/// Moment-based tomography with [`DEFAULT_BINS`] phase bins.
pub fn reconstruct(trace: &HomodyneTrace) -> Result<TomographyEstimate, TomographyError> {
    reconstruct_binned(trace, DEFAULT_BINS)
}

/// Moment-based tomography of a Gaussian state from a homodyne trace.
///
/// Two stages:
/// 1. `alpha` from an ordinary least-squares fit of `x` on `2 cos(theta)`
///    over the raw samples.
/// 2. residuals about the fitted mean are binned by phase; each bin's sample
///    variance is fitted to `C0 + C1 cos(2 theta) + C2 sin(2 theta)` by
///    weighted least squares, with weights from the chi-squared variance of
///    a variance estimate, `Var(v) ~ 2 v^2 / (count - 1)`.
///
/// Binning the residuals rather than the raw samples keeps the slope of the
/// mean across a bin's width out of the variance estimate. The harmonic
/// coefficients invert to the state parameters via
/// `S = sqrt(C1^2 + C2^2) = (1+2n) sinh(2|xi|)` and
/// `(1+2n) = sqrt(C0^2 - S^2)`; standard errors propagate from the fit
/// covariance by the delta method. When `S` is consistent with zero the
/// estimate is flagged [`TomographyEstimate::degenerate`].
pub fn reconstruct_binned(
    trace: &HomodyneTrace,
    bins: usize,
) -> Result<TomographyEstimate, TomographyError> {
    assert!(bins >= MIN_USABLE_BINS, "need at least {MIN_USABLE_BINS} phase bins");
    let n = trace.samples.len();
    if n < MIN_SAMPLES {
        return Err(TomographyError::InsufficientData(format!(
            "{n} samples, need at least {MIN_SAMPLES}"
        )));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &trace.samples {
        lo = lo.min(s.theta);
        hi = hi.max(s.theta);
    }
    let span = hi - lo;
    if !(span >= MIN_SPAN - 1e-9) {
        return Err(TomographyError::InsufficientData(format!(
            "phases cover {span:.3} rad, need at least pi"
        )));
    }

    // Stage 1: mean amplitude over raw samples.
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in &trace.samples {
        let c = 2.0 * s.theta.cos();
        sxx += c * c;
        sxy += c * s.x;
    }
    let alpha = sxy / sxx;

    // Stage 2: binned residual variances.
    struct Bin {
        count: usize,
        theta_sum: f64,
        mean: f64,
        m2: f64,
    }
    let mut grid: Vec<Bin> =
        (0..bins).map(|_| Bin { count: 0, theta_sum: 0.0, mean: 0.0, m2: 0.0 }).collect();
    for s in &trace.samples {
        let idx = (((s.theta - lo) / span) * bins as f64) as usize;
        let b = &mut grid[idx.min(bins - 1)];
        let res = s.x - 2.0 * alpha * s.theta.cos();
        b.count += 1;
        b.theta_sum += s.theta;
        let d = res - b.mean;
        b.mean += d / b.count as f64;
        b.m2 += d * (res - b.mean);
    }

    // Weighted least squares for Var(theta) = C0 + C1 cos 2t + C2 sin 2t.
    let mut a = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let mut usable = 0usize;
    let mut alpha_var_num = 0.0;
    for b in &grid {
        if b.count < MIN_BIN_COUNT {
            continue;
        }
        usable += 1;
        let theta = b.theta_sum / b.count as f64;
        let v = (b.m2 / (b.count - 1) as f64).max(VAR_FLOOR);
        let w = (b.count - 1) as f64 / (2.0 * v * v);
        let x = [1.0, (2.0 * theta).cos(), (2.0 * theta).sin()];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += w * x[i] * x[j];
            }
            rhs[i] += w * x[i] * v;
        }
        // Per-sample variance of the alpha fit, evaluated with this bin's v.
        let c = 2.0 * theta.cos();
        alpha_var_num += b.count as f64 * c * c * v;
    }
    if usable < MIN_USABLE_BINS {
        return Err(TomographyError::InsufficientData(format!(
            "only {usable} phase bins hold {MIN_BIN_COUNT}+ samples, need {MIN_USABLE_BINS}"
        )));
    }
    let alpha_se = (alpha_var_num / (sxx * sxx)).sqrt();

    let cov = invert_3x3(&a).ok_or_else(|| {
        TomographyError::InsufficientData("variance fit is singular over these phases".into())
    })?;
    let c0 = cov[0][0] * rhs[0] + cov[0][1] * rhs[1] + cov[0][2] * rhs[2];
    let c1 = cov[1][0] * rhs[0] + cov[1][1] * rhs[1] + cov[1][2] * rhs[2];
    let c2 = cov[2][0] * rhs[0] + cov[2][1] * rhs[1] + cov[2][2] * rhs[2];

    // Invert the harmonic coefficients to state parameters.
    let s_amp = (c1 * c1 + c2 * c2).sqrt();
    let degenerate = s_amp * s_amp <= 4.0 * (cov[1][1] + cov[2][2]);
    let s_safe = s_amp.max(1e-12);
    let c0_safe = c0.max(s_safe + 1e-12);
    let u = (s_amp / c0_safe).min(1.0 - 1e-12);
    let xi_mag = 0.5 * u.atanh();
    let b_sq = (c0_safe * c0_safe - s_amp * s_amp).max(1.0);
    let b = b_sq.sqrt();
    let n_th = 0.5 * (b - 1.0);
    let xi_arg = if degenerate { 0.0 } else { wrap_tau((-c2).atan2(-c1)) };

    // Delta-method standard errors from the (C0, C1, C2) covariance.
    let var_s =
        (c1 * c1 * cov[1][1] + 2.0 * c1 * c2 * cov[1][2] + c2 * c2 * cov[2][2]) / (s_safe * s_safe);
    let cov_0s = (c1 * cov[0][1] + c2 * cov[0][2]) / s_safe;
    let xi_arg_se = if degenerate {
        f64::INFINITY
    } else {
        ((c2 * c2 * cov[1][1] - 2.0 * c1 * c2 * cov[1][2] + c1 * c1 * cov[2][2]).max(0.0)).sqrt()
            / (s_amp * s_amp)
    };
    let one_minus_u2 = (1.0 - u * u).max(1e-12);
    let dr_ds = 1.0 / (2.0 * c0_safe * one_minus_u2);
    let dr_dc0 = -s_amp / (2.0 * c0_safe * c0_safe * one_minus_u2);
    let xi_mag_se =
        (dr_ds * dr_ds * var_s + dr_dc0 * dr_dc0 * cov[0][0] + 2.0 * dr_ds * dr_dc0 * cov_0s)
            .max(0.0)
            .sqrt();
    let db_dc0 = c0_safe / b;
    let db_ds = -s_amp / b;
    let n_th_se = 0.5
        * (db_dc0 * db_dc0 * cov[0][0] + db_ds * db_ds * var_s + 2.0 * db_dc0 * db_ds * cov_0s)
            .max(0.0)
            .sqrt();

    let params = GaussianStateParams::new(alpha, xi_mag, xi_arg, n_th)
        .expect("inversion clamps keep the estimate inside the parameter domain");
    Ok(TomographyEstimate {
        params,
        alpha_se,
        xi_mag_se,
        xi_arg_se,
        n_th_se,
        degenerate,
        n_samples: n,
        bins_used: usable,
    })
}

/// Inverse of a symmetric 3x3 matrix by cofactors; `None` when singular.
fn invert_3x3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-12 * scale * scale * scale) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c0, c1) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // Adjugate transpose: cofactor of (i, j) lands at (j, i).
            inv[j][i] = sign * minor / det;
        }
    }
    Some(inv)
}
