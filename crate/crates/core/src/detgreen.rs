//! Sturm-Liouville spectra, determinant ratios and Dirichlet Green's functions
//! of `-m d^2/dt^2 - m Omega^2`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Params, TimeInterval};
use crate::numerics::{fresnel_log, ldl_pivots, solve_tridiagonal, tridiag_det, FresnelCoeff, TridiagComplex};

#[derive(Debug, Clone, PartialEq)]
pub struct SLSpectrum {
    pub omega: f64,
    pub t: f64,
    pub lambdas: Vec<f64>,
}

impl SLSpectrum {
    pub fn is_positive(&self) -> bool {
        self.lambdas.iter().all(|&l| l > 0.0)
    }
}

/// `lambda_n = m ((n pi / T)^2 - Omega^2)`, `n = 1..=n_max`.
pub fn sl_eigenvalues(params: &Params, omega: f64, t: f64, n_max: usize) -> Result<SLSpectrum> {
    params.validate()?;
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::InvalidParams(format!("omega must be >= 0, got {omega}")));
    }
    TimeInterval::span(t)?;
    if n_max == 0 {
        return Err(Error::InvalidParams("n_max must be >= 1".into()));
    }
    let lambdas = (1..=n_max)
        .map(|n| params.mass * ((n as f64 * PI / t).powi(2) - omega * omega))
        .collect();
    Ok(SLSpectrum { omega, t, lambdas })
}

fn check_omega_t(omega_t: f64) -> Result<()> {
    if !(omega_t > 0.0 && omega_t < PI) {
        return Err(Error::Domain(format!("omega*T = {omega_t} outside (0, pi)")));
    }
    Ok(())
}

/// `prod_{n <= n_max} (1 - z^2 / n^2)` with `z = Omega T / pi`.
pub fn det_ratio_product(omega_t: f64, n_max: usize) -> Result<f64> {
    check_omega_t(omega_t)?;
    if n_max == 0 {
        return Err(Error::InvalidParams("n_max must be >= 1".into()));
    }
    let z2 = (omega_t / PI).powi(2);
    let log: f64 = (1..=n_max).map(|n| (-z2 / (n as f64).powi(2)).ln_1p()).sum();
    Ok(log.exp())
}

/// Per-axis determinant ratio `sin(Omega T) / (Omega T)` and the exponent it
/// carries in a `d`-dimensional kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetRatio {
    pub value: f64,
    pub exponent: f64,
}

impl DetRatio {
    /// `value^exponent`, the factor multiplying the free prefactor modulus.
    pub fn kernel_factor(&self) -> f64 {
        self.value.powf(self.exponent)
    }
}

pub fn det_ratio_exact(omega_t: f64, dim: usize) -> Result<DetRatio> {
    check_omega_t(omega_t)?;
    Ok(DetRatio {
        value: omega_t.sin() / omega_t,
        exponent: -0.5 * dim as f64,
    })
}

fn check_interior(t: f64, iv: &TimeInterval) -> Result<()> {
    if !(t > iv.t_i() && t < iv.t_f()) {
        return Err(Error::Domain(format!(
            "time {t} not interior to ({}, {})",
            iv.t_i(),
            iv.t_f()
        )));
    }
    Ok(())
}

/// `(t_< - t_i)(t_f - t_>) / (m T)`.
pub fn green_free(t: f64, t_prime: f64, iv: &TimeInterval, mass: f64) -> Result<f64> {
    check_interior(t, iv)?;
    check_interior(t_prime, iv)?;
    let (lo, hi) = (t.min(t_prime), t.max(t_prime));
    Ok((lo - iv.t_i()) * (iv.t_f() - hi) / (mass * iv.duration()))
}

/// `sin(Omega (t_< - t_i)) sin(Omega (t_f - t_>)) / (m Omega sin(Omega T))`.
pub fn green_harmonic(t: f64, t_prime: f64, iv: &TimeInterval, mass: f64, omega: f64) -> Result<f64> {
    let omega_t = omega * iv.duration();
    if !(omega_t > 0.0 && omega_t < PI) {
        return Err(Error::Caustic { omega_t });
    }
    check_interior(t, iv)?;
    check_interior(t_prime, iv)?;
    let (lo, hi) = (t.min(t_prime), t.max(t_prime));
    Ok((omega * (lo - iv.t_i())).sin() * (omega * (iv.t_f() - hi)).sin() / (mass * omega * omega_t.sin()))
}

fn green_value(t: f64, t_prime: f64, iv: &TimeInterval, mass: f64, omega: f64) -> Result<f64> {
    if omega == 0.0 {
        green_free(t, t_prime, iv, mass)
    } else {
        green_harmonic(t, t_prime, iv, mass, omega)
    }
}

/// Discrete delta test of a Green's function: samples `g(., t_j')` on `points`
/// nodes including the endpoints, applies `-m D^2 - m Omega^2` and returns
/// `max_j |h (L g)_j - delta_{j j'}|`. `source_index` selects `t_j'`.
pub fn green_operator_residual(
    iv: &TimeInterval,
    mass: f64,
    omega: f64,
    points: usize,
    source_index: usize,
) -> Result<f64> {
    if points < 5 {
        return Err(Error::InsufficientData { needed: 5, got: points });
    }
    if source_index == 0 || source_index + 1 >= points {
        return Err(Error::InvalidParams("source must be an interior node".into()));
    }
    let h = iv.duration() / (points - 1) as f64;
    let node = |j: usize| iv.t_i() + j as f64 * h;
    let tp = node(source_index);
    let g: Vec<f64> = (0..points)
        .map(|j| {
            if j == 0 || j + 1 == points {
                Ok(0.0)
            } else {
                green_value(node(j), tp, iv, mass, omega)
            }
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for j in 1..points - 1 {
        let lg = -mass * (g[j + 1] - 2.0 * g[j] + g[j - 1]) / (h * h) - mass * omega * omega * g[j];
        let target = if j == source_index { 1.0 } else { 0.0 };
        worst = worst.max((h * lg - target).abs());
    }
    Ok(worst)
}

/// Discrete Dirichlet solve of `(-m D^2 - m Omega^2) g = delta_{j'} / h` on the
/// interior of a `points`-node grid.
pub fn green_discrete_solve(
    iv: &TimeInterval,
    mass: f64,
    omega: f64,
    points: usize,
    source_index: usize,
) -> Result<Vec<f64>> {
    if points < 3 || source_index == 0 || source_index + 1 >= points {
        return Err(Error::InvalidParams("need an interior source on >= 3 nodes".into()));
    }
    let n = points - 2;
    let h = iv.duration() / (points - 1) as f64;
    let c = |v: f64| Complex64::new(v, 0.0);
    let diag = vec![c(2.0 * mass / (h * h) - mass * omega * omega); n];
    let off = vec![c(-mass / (h * h)); n - 1];
    let mut rhs = vec![c(0.0); n];
    rhs[source_index - 1] = c(1.0 / h);
    let x = solve_tridiagonal(&off, &diag, &off, &rhs)?;
    Ok(x.iter().map(|z| z.re).collect())
}

/// Finite-M fluctuation data for the discrete operator on `M` interior points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationCheck {
    pub det_ratio_discrete: f64,
    pub gaussian_ratio: f64,
    /// Ratio of the kick Gaussians alone, `~ det_ratio^(+1/2)`.
    pub kick_gaussian_ratio: f64,
    /// Ratio of the position-delta Jacobians, `det_ratio^(-1)`.
    pub jacobian_ratio: f64,
}

fn discrete_operator(mass: f64, omega: f64, t: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let h = t / (m + 1) as f64;
    (
        vec![2.0 * mass / (h * h) - mass * omega * omega; m],
        vec![-mass / (h * h); m - 1],
    )
}

/// `det(2 - h^2 Omega^2, -1) / (M + 1)` with `h = T / (M + 1)`.
pub fn discrete_det_ratio(omega: f64, t: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParams("M must be >= 1".into()));
    }
    let h = t / (m + 1) as f64;
    let tri = TridiagComplex::from_real(&vec![2.0 - h * h * omega * omega; m], &vec![-1.0; m - 1])?;
    Ok(tridiag_det(&tri).re / (m + 1) as f64)
}

/// Gaussian over kicks `int d^M Gamma exp(i Gamma.G.Gamma / (2 hbar))` and the
/// delta over positions for the harmonic and free operators, as ratios.
pub fn discrete_fluctuation_check(params: &Params, omega: f64, t: f64, m: usize) -> Result<FluctuationCheck> {
    params.validate()?;
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, got: m });
    }
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::InvalidParams(format!("omega must be >= 0, got {omega}")));
    }
    TimeInterval::span(t)?;
    let det_ratio_discrete = discrete_det_ratio(omega, t, m)?;
    let (hd, ho) = discrete_operator(params.mass, omega, t, m);
    let pivots = ldl_pivots(&hd, &ho)?;
    if pivots.iter().any(|&p| p <= 0.0) {
        return Err(Error::Caustic { omega_t: omega * t });
    }
    let log_gauss_h = log_kick_gaussian(params.hbar, &hd, &ho)?;
    let (fd, fo) = discrete_operator(params.mass, 0.0, t, m);
    let log_gauss_f = log_kick_gaussian(params.hbar, &fd, &fo)?;
    let kick = (log_gauss_h - log_gauss_f).exp();
    let log_det_h: f64 = pivots.iter().map(|p| p.ln()).sum();
    let log_det_f: f64 = ldl_pivots(&fd, &fo)?.iter().map(|p| p.ln()).sum();
    let jacobian_ratio = (log_det_f - log_det_h).exp();
    Ok(FluctuationCheck {
        det_ratio_discrete,
        gaussian_ratio: (kick * jacobian_ratio).re,
        kick_gaussian_ratio: kick.re,
        jacobian_ratio,
    })
}

/// `ln prod_e int exp(i g_e u^2 / (2 hbar)) du` over the eigenvalues of `G = A^{-1}`.
fn log_kick_gaussian(hbar: f64, diag: &[f64], off: &[f64]) -> Result<Complex64> {
    let n = diag.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i.abs_diff(j) == 1 {
            off[i.min(j)]
        } else {
            0.0
        }
    });
    let g = a.try_inverse().ok_or(Error::SingularChain)?;
    let eig = SymmetricEigen::new(g);
    let mut acc = Complex64::new(0.0, 0.0);
    for &ge in eig.eigenvalues.iter() {
        acc += fresnel_log(FresnelCoeff::real(ge / (2.0 * hbar), 0.0))?;
    }
    Ok(acc)
}
