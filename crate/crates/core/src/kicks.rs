//! Kick variables on a dyadic foliation.
//!
//! A level-`n` foliation has `2^n` slices and `2^n - 1` interior nodes. Node
//! `k = odd * 2^(n - j)` belongs to level `j`: its neighbours are `k -+ 2^(n - j)`
//! and its half-step is `dt_j = T / 2^j`. The recursion
//! `x_k = (x_{k-s} + x_{k+s}) / 2 + gamma_k dt_j / 2` makes the free action
//! separable: `S = m |dx|^2 / (2T) + sum_k m |gamma_k|^2 dt_k / 4`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{free_kernel, gaussian_prefactor, straight_line_action, KernelValue, Params, TimeInterval};
use crate::numerics::{
    fresnel_log, oscillatory_quadrature_extrapolated, pairwise_sum_real, FresnelCoeff, QuadratureSpec,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest level accepted anywhere in this module.
pub const MAX_LEVEL: usize = 20;

/// Kick history on a dyadic foliation; `kicks[k - 1]` belongs to node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPath {
    level: usize,
    kicks: Vec<Vec<f64>>,
    interval: TimeInterval,
}

impl GammaPath {
    pub fn new(level: usize, kicks: Vec<Vec<f64>>, interval: TimeInterval) -> Result<Self> {
        check_level(level, MAX_LEVEL)?;
        let expected = (1usize << level) - 1;
        if kicks.len() != expected {
            return Err(Error::InvalidParams(format!(
                "level {level} needs {expected} kicks, got {}",
                kicks.len()
            )));
        }
        let dim = kicks[0].len();
        if !(1..=3).contains(&dim) || kicks.iter().any(|g| g.len() != dim) {
            return Err(Error::InvalidParams("kicks must share one dimension in 1..=3".into()));
        }
        if kicks.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite kick".into()));
        }
        Ok(GammaPath { level, kicks, interval })
    }

    pub fn zero(level: usize, dim: usize, interval: TimeInterval) -> Result<Self> {
        check_level(level, MAX_LEVEL)?;
        Self::new(level, vec![vec![0.0; dim]; (1usize << level) - 1], interval)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn kicks(&self) -> &[Vec<f64>] {
        &self.kicks
    }

    pub fn interval(&self) -> &TimeInterval {
        &self.interval
    }

    pub fn dim(&self) -> usize {
        self.kicks[0].len()
    }

    /// Number of slices `2^n`.
    pub fn slices(&self) -> usize {
        1 << self.level
    }

    /// Half-step `dt_j` of node `k`.
    pub fn node_dt(&self, k: usize) -> f64 {
        self.interval.duration() / (1u64 << node_level(self.level, k)) as f64
    }
}

fn check_level(level: usize, max: usize) -> Result<()> {
    if level == 0 || level > max {
        return Err(Error::InvalidParams(format!("level must be 1..={max}, got {level}")));
    }
    Ok(())
}

/// Level `j` of node `k` in a level-`n` tree.
pub fn node_level(n: usize, k: usize) -> usize {
    n - k.trailing_zeros() as usize
}

/// `gamma = (2 / dt) (x_mid - (x_prev + x_next) / 2)`.
pub fn kick_from_midpoint(x_mid: &[f64], x_prev: &[f64], x_next: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    Ok(x_mid
        .iter()
        .zip(x_prev.iter().zip(x_next))
        .map(|(m, (a, b))| 2.0 / dt * (m - 0.5 * (a + b)))
        .collect())
}

/// `x_mid = (x_prev + x_next) / 2 + gamma dt / 2`.
pub fn midpoint_from_kick(x_prev: &[f64], x_next: &[f64], gamma: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    Ok(x_prev
        .iter()
        .zip(x_next.iter().zip(gamma))
        .map(|(a, (b, g))| 0.5 * (a + b) + 0.5 * g * dt)
        .collect())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    Ok(())
}

/// Positions `x_0..x_{2^n}` built by descending the dyadic tree.
pub fn gamma_to_positions(x_i: &[f64], x_f: &[f64], gp: &GammaPath) -> Result<Vec<Vec<f64>>> {
    if x_i.len() != gp.dim() || x_f.len() != gp.dim() {
        return Err(Error::InvalidParams(
            "endpoint dimension differs from kick dimension".into(),
        ));
    }
    let n = gp.level;
    let big_n = gp.slices();
    let mut x = vec![Vec::new(); big_n + 1];
    x[0] = x_i.to_vec();
    x[big_n] = x_f.to_vec();
    for j in 1..=n {
        let s = 1usize << (n - j);
        let dt = gp.interval.duration() / (1u64 << j) as f64;
        for k in (s..big_n).step_by(2 * s) {
            x[k] = midpoint_from_kick(&x[k - s], &x[k + s], &gp.kicks[k - 1], dt)?;
        }
    }
    Ok(x)
}

/// Level-wise inverse of [`gamma_to_positions`].
pub fn positions_to_gamma(positions: &[Vec<f64>], level: usize, interval: TimeInterval) -> Result<GammaPath> {
    check_level(level, MAX_LEVEL)?;
    let big_n = 1usize << level;
    if positions.len() != big_n + 1 {
        return Err(Error::InvalidParams(format!(
            "level {level} needs {} positions, got {}",
            big_n + 1,
            positions.len()
        )));
    }
    let mut kicks = vec![Vec::new(); big_n - 1];
    for k in 1..big_n {
        let j = node_level(level, k);
        let s = 1usize << (level - j);
        let dt = interval.duration() / (1u64 << j) as f64;
        kicks[k - 1] = kick_from_midpoint(&positions[k], &positions[k - s], &positions[k + s], dt)?;
    }
    GammaPath::new(level, kicks, interval)
}

/// Separable kick-form action `m |dx|^2 / (2T) + sum_k m |gamma_k|^2 dt_k / 4`.
pub fn eqq_action(params: &Params, x_i: &[f64], x_f: &[f64], gp: &GammaPath) -> Result<f64> {
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    if gp.dim() != params.dim {
        return Err(Error::InvalidParams("kick dimension differs from params.dim".into()));
    }
    let mut terms = vec![straight_line_action(params, x_i, x_f, gp.interval.duration())];
    for (k, g) in gp.kicks.iter().enumerate() {
        let sq: f64 = g.iter().map(|v| v * v).sum();
        terms.push(0.25 * params.mass * sq * gp.node_dt(k + 1));
    }
    Ok(pairwise_sum_real(&terms))
}

/// Flat discretized action `sum m |x_{k+1} - x_k|^2 / (2 dt)` of a sampled path.
pub fn flat_action(mass: f64, positions: &[Vec<f64>], dt: f64) -> f64 {
    let terms: Vec<f64> = positions
        .windows(2)
        .map(|w| {
            let sq: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) * (b - a)).sum();
            mass * sq / (2.0 * dt)
        })
        .collect();
    pairwise_sum_real(&terms)
}

/// Kick-measure normalization: measured per-level product against the printed constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureNorm {
    pub level: usize,
    pub c_measured: Complex64,
    pub c_paper: Complex64,
    pub log_c_measured: Complex64,
    pub log_c_paper: Complex64,
}

impl MeasureNorm {
    /// `c_paper / c_measured`, computed from the logs.
    pub fn ratio(&self) -> Complex64 {
        (self.log_c_paper - self.log_c_measured).exp()
    }
}

/// Largest level for which the normalization is evaluated.
pub const MAX_NORM_LEVEL: usize = 8;

/// Constant `C` with `C prod_k int d^d gamma_k exp(i dS_k / hbar) = 1`, one Fresnel
/// integral per kick; the printed value is `(T m / (2 pi i hbar))^(d N / 2)`.
pub fn measure_normalization(params: &Params, level: usize, duration: f64) -> Result<MeasureNorm> {
    params.validate()?;
    check_level(level, MAX_NORM_LEVEL)?;
    let iv = TimeInterval::span(duration)?;
    let d = params.dim as f64;
    let mut log_integrals = Complex64::new(0.0, 0.0);
    for j in 1..=level {
        let dt = iv.duration() / (1u64 << j) as f64;
        let a = params.mass * dt / (4.0 * params.hbar);
        let per_kick = d * fresnel_log(FresnelCoeff::real(a, 0.0))?;
        log_integrals += (1u64 << (j - 1)) as f64 * per_kick;
    }
    let log_c_measured = -log_integrals;
    let n_kicks = ((1u64 << level) - 1) as f64;
    let base = duration * params.mass / (2.0 * std::f64::consts::PI * params.hbar);
    let log_c_paper = 0.5 * d * n_kicks * (base.ln() - I * std::f64::consts::FRAC_PI_2);
    Ok(MeasureNorm {
        level,
        c_measured: log_c_measured.exp(),
        c_paper: log_c_paper.exp(),
        log_c_measured,
        log_c_paper,
    })
}

/// Jacobian `prod_k (dt_k / 2)^d` of the map from intermediate positions to kicks.
pub fn kick_jacobian(dim: usize, level: usize, duration: f64) -> Result<f64> {
    check_level(level, MAX_NORM_LEVEL)?;
    let mut log_j = 0.0;
    for j in 1..=level {
        let dt = duration / (1u64 << j) as f64;
        log_j += (1u64 << (j - 1)) as f64 * dim as f64 * (0.5 * dt).ln();
    }
    Ok(log_j.exp())
}

/// How the kick integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KickIntegration {
    /// Closed-form Fresnel integrals.
    Analytic,
    /// Damped real-axis quadrature of the position-form action, one kick at a time;
    /// `half_width_factor` multiplies the Gaussian width of each kick.
    BruteForce {
        points: usize,
        epsilon: f64,
        half_width_factor: f64,
    },
}

impl KickIntegration {
    pub fn brute_force_default() -> Self {
        KickIntegration::BruteForce {
            points: 6001,
            epsilon: 48.0,
            half_width_factor: 50.0,
        }
    }
}

/// Kernel from the kick integrals with the measured normalization.
pub fn eqq_kernel(
    params: &Params,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
    level: usize,
    method: KickIntegration,
) -> Result<KernelValue> {
    params.validate()?;
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    let t = iv.duration();
    let norm = measure_normalization(params, level, t)?;
    let log_integrals = match method {
        KickIntegration::Analytic => {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=level {
                let dt = t / (1u64 << j) as f64;
                let a = params.mass * dt / (4.0 * params.hbar);
                acc += (1u64 << (j - 1)) as f64 * params.dim as f64 * fresnel_log(FresnelCoeff::real(a, 0.0))?;
            }
            acc
        }
        KickIntegration::BruteForce {
            points,
            epsilon,
            half_width_factor,
        } => brute_force_log_integrals(params, x_i, x_f, iv, level, points, epsilon, half_width_factor)?,
    };
    let s_line = straight_line_action(params, x_i, x_f, t);
    let amp = gaussian_prefactor(params, t) * (norm.log_c_measured + log_integrals + I * s_line / params.hbar).exp();
    Ok(KernelValue::new(amp))
}

#[allow(clippy::too_many_arguments)]
fn brute_force_log_integrals(
    params: &Params,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
    level: usize,
    points: usize,
    epsilon: f64,
    half_width_factor: f64,
) -> Result<Complex64> {
    let d = params.dim;
    let base = GammaPath::zero(level, d, *iv)?;
    let dt_flat = iv.duration() / base.slices() as f64;
    let s_line = flat_action(params.mass, &gamma_to_positions(x_i, x_f, &base)?, dt_flat);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..base.slices() {
        let width = (4.0 * params.hbar / (params.mass * base.node_dt(k))).sqrt();
        let spec = QuadratureSpec::new(half_width_factor * width, points, epsilon)?;
        for axis in 0..d {
            let mut path = base.clone();
            let mut failure = None;
            let v = oscillatory_quadrature_extrapolated(
                |g| {
                    path.kicks[k - 1][axis] = g;
                    match gamma_to_positions(x_i, x_f, &path) {
                        Ok(x) => {
                            let ds = flat_action(params.mass, &x, dt_flat) - s_line;
                            Complex64::from_polar(1.0, ds / params.hbar)
                        }
                        Err(e) => {
                            failure.get_or_insert(e);
                            Complex64::new(0.0, 0.0)
                        }
                    }
                },
                &spec,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            acc += v.ln();
        }
    }
    Ok(acc)
}

/// Relative error of [`eqq_kernel`] against the closed free kernel.
pub fn eqq_error(
    params: &Params,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
    level: usize,
    method: KickIntegration,
) -> Result<f64> {
    let k = eqq_kernel(params, x_i, x_f, iv, level, method)?;
    Ok(k.rel_error(&free_kernel(params, x_i, x_f, iv)?))
}

/// Straight-line point at time `s` of a flight of duration `t`.
fn line_point(x_i: &[f64], x_f: &[f64], s: f64, t: f64) -> Vec<f64> {
    x_i.iter().zip(x_f).map(|(a, b)| a + s / t * (b - a)).collect()
}

fn check_slice(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0 && s < t && t.is_finite()) {
        return Err(Error::DegenerateSlice { s, t });
    }
    Ok(())
}

/// `gamma_s = t / (s (t - s)) (x_s - x_line(s))`.
pub fn general_slice_kick(x_s: &[f64], x_i: &[f64], x_f: &[f64], s: f64, t: f64) -> Result<Vec<f64>> {
    check_slice(s, t)?;
    let line = line_point(x_i, x_f, s, t);
    let f = t / (s * (t - s));
    Ok(x_s.iter().zip(&line).map(|(x, l)| f * (x - l)).collect())
}

/// Inverse of [`general_slice_kick`].
pub fn general_slice_position(gamma: &[f64], x_i: &[f64], x_f: &[f64], s: f64, t: f64) -> Result<Vec<f64>> {
    check_slice(s, t)?;
    let line = line_point(x_i, x_f, s, t);
    let f = s * (t - s) / t;
    Ok(gamma.iter().zip(&line).map(|(g, l)| l + f * g).collect())
}

/// One velocity kick followed by free flight: `v_f = v_i - gamma`, `x_f = x_i + v_f dt`.
pub fn velocity_kick_variables(x_i: &[f64], v_i: &[f64], gamma_i: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dt(dt)?;
    let v_f: Vec<f64> = v_i.iter().zip(gamma_i).map(|(v, g)| v - g).collect();
    let x_f = x_i.iter().zip(&v_f).map(|(x, v)| x + v * dt).collect();
    Ok((x_f, v_f))
}

/// Initial position reached backwards from `x_f` for given velocity and kick.
pub fn kick_source_position(x_f: &[f64], v_i: &[f64], gamma_i: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    Ok(x_f
        .iter()
        .zip(v_i.iter().zip(gamma_i))
        .map(|(x, (v, g))| x - (v - g) * dt)
        .collect())
}
