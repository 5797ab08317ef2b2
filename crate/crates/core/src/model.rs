//! Physical parameters, potentials and the closed-form propagators.
//!
//! Every kernel here uses one branch for the complex Gaussian prefactor:
//! `(m / (2 pi i hbar tau))^(d/2) = (m / (2 pi hbar tau))^(d/2) * exp(-i pi d / 4)`
//! for `tau > 0`. All other modules call [`gaussian_prefactor`] rather than
//! taking complex powers themselves.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass, Planck constant and spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub mass: f64,
    pub hbar: f64,
    pub dim: usize,
}

impl Params {
    pub fn new(mass: f64, hbar: f64, dim: usize) -> Result<Self> {
        let p = Params { mass, hbar, dim };
        p.validate()?;
        Ok(p)
    }

    /// `m = hbar = 1` in the given dimension.
    pub fn unit(dim: usize) -> Self {
        Params {
            mass: 1.0,
            hbar: 1.0,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidParams(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidParams(format!("hbar must be > 0, got {}", self.hbar)));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidParams(format!("dim must be 1..=3, got {}", self.dim)));
        }
        Ok(())
    }

    /// Checks that `x` is a finite point of this dimension.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidParams(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite coordinate".into()));
        }
        Ok(())
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::unit(1)
    }
}

/// Time interval with strict ordering `t_f > t_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    t_i: f64,
    t_f: f64,
}

impl TimeInterval {
    pub fn new(t_i: f64, t_f: f64) -> Result<Self> {
        if !(t_i.is_finite() && t_f.is_finite()) || t_f <= t_i {
            return Err(Error::TimeOrdering { t_i, t_f });
        }
        Ok(TimeInterval { t_i, t_f })
    }

    /// Interval `[0, t]`.
    pub fn span(t: f64) -> Result<Self> {
        Self::new(0.0, t)
    }

    pub fn t_i(&self) -> f64 {
        self.t_i
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn duration(&self) -> f64 {
        self.t_f - self.t_i
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_i && t <= self.t_f
    }
}

/// Time-independent external potential.
///
/// In `d > 1` the polynomial acts on each axis: `V(x) = c0 + sum_axes sum_{j>=1} c_j x_a^j`,
/// so the constant term is counted once. The harmonic well is `m Omega^2 |x|^2 / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Potential {
    Free,
    Harmonic { omega: f64 },
    Polynomial { coefficients: Vec<f64> },
}

impl Potential {
    pub fn harmonic(omega: f64) -> Self {
        Potential::Harmonic { omega }
    }

    pub fn polynomial(coefficients: impl Into<Vec<f64>>) -> Self {
        Potential::Polynomial {
            coefficients: coefficients.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if omega.is_finite() && *omega > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!("omega must be > 0, got {omega}")))
                }
            }
            Potential::Polynomial { coefficients } => {
                if coefficients.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidParams("non-finite polynomial coefficient".into()))
                }
            }
        }
    }

    /// Per-axis polynomial form of the potential for the given mass.
    pub fn axis_polynomial(&self, mass: f64) -> Polynomial {
        match self {
            Potential::Free => Polynomial::new(vec![]),
            Potential::Harmonic { omega } => Polynomial::new(vec![0.0, 0.0, 0.5 * mass * omega * omega]),
            Potential::Polynomial { coefficients } => Polynomial::new(coefficients.clone()),
        }
    }

    /// `V(x)` at a point of any dimension.
    pub fn value(&self, mass: f64, x: &[f64]) -> f64 {
        self.axis_polynomial(mass).value_at_point(x)
    }
}

/// Real polynomial `sum_j c_j x^j`, coefficients lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree, with the zero polynomial reported as 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn constant(&self) -> f64 {
        self.coeffs.first().copied().unwrap_or(0.0)
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        )
    }

    /// Same polynomial with the constant term removed.
    pub fn without_constant(&self) -> Polynomial {
        let mut c = self.coeffs.clone();
        if let Some(c0) = c.first_mut() {
            *c0 = 0.0;
        }
        Polynomial::new(c)
    }

    /// Separable evaluation `c0 + sum_a (p(x_a) - c0)`.
    pub fn value_at_point(&self, x: &[f64]) -> f64 {
        let c0 = self.constant();
        c0 + x.iter().map(|&xa| self.eval(xa) - c0).sum::<f64>()
    }
}

/// Amplitude density of a propagator, units length^(-d).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub amp: Complex64,
}

impl KernelValue {
    pub fn new(amp: Complex64) -> Self {
        KernelValue { amp }
    }

    pub fn is_finite(&self) -> bool {
        self.amp.re.is_finite() && self.amp.im.is_finite()
    }

    /// `|self - reference| / |reference|`.
    pub fn rel_error(&self, reference: &KernelValue) -> f64 {
        (self.amp - reference.amp).norm() / reference.amp.norm()
    }
}

/// `(m / (2 pi i hbar tau))^(d/2)` on the fixed branch `exp(-i pi d / 4) * positive root`.
pub fn gaussian_prefactor(params: &Params, tau: f64) -> Complex64 {
    let d = params.dim as f64;
    let modulus = (params.mass / (2.0 * PI * params.hbar * tau)).powf(0.5 * d);
    Complex64::from_polar(modulus, -PI * d / 4.0)
}

/// One-axis free kernel factor for flight time `tau`.
pub fn free_axis_kernel(params: &Params, x_a: f64, x_b: f64, tau: f64) -> Complex64 {
    let one = Params { dim: 1, ..*params };
    let dx = x_b - x_a;
    gaussian_prefactor(&one, tau) * Complex64::from_polar(1.0, params.mass * dx * dx / (2.0 * params.hbar * tau))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Straight-line action `m |x_f - x_i|^2 / (2T)`.
pub fn straight_line_action(params: &Params, x_i: &[f64], x_f: &[f64], duration: f64) -> f64 {
    params.mass * squared_distance(x_i, x_f) / (2.0 * duration)
}

pub fn free_kernel(params: &Params, x_i: &[f64], x_f: &[f64], iv: &TimeInterval) -> Result<KernelValue> {
    params.validate()?;
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    let t = iv.duration();
    if t <= 0.0 {
        return Err(Error::TimeOrdering {
            t_i: iv.t_i(),
            t_f: iv.t_f(),
        });
    }
    let phase = straight_line_action(params, x_i, x_f, t) / params.hbar;
    Ok(KernelValue::new(
        gaussian_prefactor(params, t) * Complex64::from_polar(1.0, phase),
    ))
}

fn check_caustic(omega: f64, duration: f64) -> Result<f64> {
    let omega_t = omega * duration;
    if !(omega_t > 0.0 && omega_t < PI) {
        return Err(Error::Caustic { omega_t });
    }
    Ok(omega_t)
}

/// Mehler kernel on the caustic-free domain `0 < Omega T < pi`.
pub fn harmonic_kernel(
    params: &Params,
    omega: f64,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
) -> Result<KernelValue> {
    params.validate()?;
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    let omega_t = check_caustic(omega, iv.duration())?;
    let tau = omega_t.sin() / omega;
    let action = harmonic_action(params.mass, omega, omega_t, x_i, x_f);
    Ok(KernelValue::new(
        gaussian_prefactor(params, tau) * Complex64::from_polar(1.0, action / params.hbar),
    ))
}

fn harmonic_action(mass: f64, omega: f64, omega_t: f64, x_i: &[f64], x_f: &[f64]) -> f64 {
    let (s, c) = omega_t.sin_cos();
    let sq = dot(x_i, x_i) + dot(x_f, x_f);
    0.5 * mass * omega * (sq * c / s - 2.0 * dot(x_i, x_f) / s)
}

/// Classical harmonic trajectory through `x_i` at `t_i` and `x_f` at `t_f`.
pub fn classical_path_harmonic(omega: f64, x_i: &[f64], x_f: &[f64], iv: &TimeInterval, t: f64) -> Result<Vec<f64>> {
    let omega_t = check_caustic(omega, iv.duration())?;
    if !iv.contains(t) {
        return Err(Error::Domain(format!("t = {t} outside [{}, {}]", iv.t_i(), iv.t_f())));
    }
    let s = omega_t.sin();
    let wa = (omega * (iv.t_f() - t)).sin() / s;
    let wb = (omega * (t - iv.t_i())).sin() / s;
    Ok(x_i.iter().zip(x_f).map(|(a, b)| a * wa + b * wb).collect())
}

/// Action of the classical path for the Free and Harmonic potentials.
pub fn classical_action(
    params: &Params,
    potential: &Potential,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
) -> Result<f64> {
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    match potential {
        Potential::Free => Ok(straight_line_action(params, x_i, x_f, iv.duration())),
        Potential::Harmonic { omega } => {
            let omega_t = check_caustic(*omega, iv.duration())?;
            Ok(harmonic_action(params.mass, *omega, omega_t, x_i, x_f))
        }
        Potential::Polynomial { .. } => Err(Error::InvalidParams(
            "classical action has a closed form only for free and harmonic potentials".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn free_kernel_at_zero_displacement() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.0).unwrap();
        let k = free_kernel(&p, &[0.0], &[0.0], &iv).unwrap();
        assert!((k.amp - c(0.2820948, -0.2820948)).norm() < 1e-7);
        let exact = Complex64::from_polar(1.0 / (2.0 * PI).sqrt(), -PI / 4.0);
        assert!((k.amp - exact).norm() < 1e-15);
    }

    #[test]
    fn free_kernel_phase_is_straight_line_action() {
        let p = Params::new(2.5, 0.7, 2).unwrap();
        let iv = TimeInterval::new(0.3, 1.9).unwrap();
        let (xi, xf) = ([0.1, -0.4], [1.2, 0.8]);
        let k = free_kernel(&p, &xi, &xf, &iv).unwrap();
        let pref = gaussian_prefactor(&p, iv.duration());
        let phase = (k.amp / pref).arg();
        let expected = straight_line_action(&p, &xi, &xf, iv.duration()) / p.hbar;
        let wrapped = (expected + PI).rem_euclid(2.0 * PI) - PI;
        assert!((phase - wrapped).abs() < 1e-12);
    }

    #[test]
    fn time_ordering_is_enforced() {
        assert!(matches!(TimeInterval::new(1.0, 1.0), Err(Error::TimeOrdering { .. })));
        assert!(TimeInterval::new(2.0, 1.0).is_err());
    }

    #[test]
    fn harmonic_quarter_period_at_origin() {
        let p = Params::unit(1);
        let omega = 2.0;
        let iv = TimeInterval::span(PI / 2.0 / omega).unwrap();
        let k = harmonic_kernel(&p, omega, &[0.0], &[0.0], &iv).unwrap();
        let expected = (c(omega, 0.0) / (2.0 * PI * c(0.0, 1.0))).sqrt();
        assert!((k.amp - expected).norm() < 1e-14);
    }

    #[test]
    fn harmonic_reduces_to_free_for_small_omega() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.0).unwrap();
        let h = harmonic_kernel(&p, 1e-4, &[0.3], &[-0.7], &iv).unwrap();
        let f = free_kernel(&p, &[0.3], &[-0.7], &iv).unwrap();
        assert!(h.rel_error(&f) < 1e-8);
    }

    #[test]
    fn harmonic_caustic_rejected() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(PI).unwrap();
        assert!(matches!(
            harmonic_kernel(&p, 1.0, &[0.0], &[1.0], &iv),
            Err(Error::Caustic { .. })
        ));
        let iv = TimeInterval::span(4.0).unwrap();
        assert!(harmonic_kernel(&p, 1.0, &[0.0], &[1.0], &iv).is_err());
    }

    #[test]
    fn classical_path_boundaries_and_midpoint() {
        let iv = TimeInterval::new(0.5, 0.5 + PI / 2.0).unwrap();
        let at = |t| classical_path_harmonic(1.0, &[0.0], &[1.0], &iv, t).unwrap()[0];
        assert!(at(0.5).abs() < 1e-15);
        assert!((at(0.5 + PI / 2.0) - 1.0).abs() < 1e-15);
        assert!((at(0.5 + PI / 4.0) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(classical_path_harmonic(1.0, &[0.0], &[1.0], &iv, 3.0).is_err());
    }

    #[test]
    fn classical_path_small_omega_is_linear() {
        let iv = TimeInterval::new(0.0, 2.0).unwrap();
        for &t in &[0.3, 1.0, 1.7] {
            let x = classical_path_harmonic(1e-5, &[1.0], &[3.0], &iv, t).unwrap()[0];
            assert!((x - (1.0 + t)).abs() < 1e-9);
        }
    }

    #[test]
    fn classical_actions() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.0).unwrap();
        let s = classical_action(&p, &Potential::Free, &[0.0], &[2.0], &iv).unwrap();
        assert_eq!(s, 2.0);
        let s = classical_action(&p, &Potential::harmonic(0.8), &[0.0], &[0.0], &iv).unwrap();
        assert_eq!(s, 0.0);
        assert!(classical_action(&p, &Potential::polynomial([1.0]), &[0.0], &[0.0], &iv).is_err());
    }

    #[test]
    fn harmonic_action_small_omega_difference_is_second_order() {
        // series oracle: cot(x) = 1/x - x/3 + ..., csc(x) = 1/x + x/6 + ...
        // so S_h - S_free = -m Omega^2 T (x_i^2 + x_i x_f + x_f^2) / 6 + O(Omega^4)
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.3).unwrap();
        let (xi, xf) = (0.4, 1.1);
        let free = classical_action(&p, &Potential::Free, &[xi], &[xf], &iv).unwrap();
        for &omega in &[1e-2, 2e-2, 4e-2] {
            let h = classical_action(&p, &Potential::harmonic(omega), &[xi], &[xf], &iv).unwrap();
            let series = -omega * omega * 1.3 * (xi * xi + xi * xf + xf * xf) / 6.0;
            assert!(((h - free) - series).abs() < omega.powi(4));
        }
    }

    #[test]
    fn polynomial_helpers() {
        let q = Polynomial::new(vec![1.0, 2.0, 0.0, 4.0, 0.0]);
        assert_eq!(q.degree(), 3);
        assert_eq!(q.eval(2.0), 1.0 + 4.0 + 32.0);
        assert_eq!(q.derivative().coefficients(), &[2.0, 0.0, 12.0]);
        let z = Complex64::new(0.5, -1.0);
        assert!((q.eval_complex(z) - (1.0 + 2.0 * z + 4.0 * z * z * z)).norm() < 1e-14);
        // constant counted once in d = 3
        assert_eq!(q.value_at_point(&[0.0, 0.0, 0.0]), 1.0);
        assert_eq!(q.value_at_point(&[1.0, 1.0, 0.0]), 1.0 + 2.0 * 6.0);
        assert_eq!(Potential::harmonic(2.0).value(3.0, &[1.0, 1.0]), 12.0);
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(0.0, 1.0, 1).is_err());
        assert!(Params::new(1.0, -1.0, 1).is_err());
        assert!(Params::new(1.0, 1.0, 4).is_err());
        assert!(Params::new(1.0, 1.0, 0).is_err());
        let p = Params::unit(2);
        assert!(free_kernel(&p, &[0.0], &[0.0, 0.0], &TimeInterval::span(1.0).unwrap()).is_err());
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, d)
    }

    proptest! {
        #[test]
        fn kernels_symmetric_under_endpoint_exchange(
            d in 1usize..=3, seed in point(6), t in 0.1f64..2.0, w in 0.05f64..1.5
        ) {
            let p = Params::unit(d);
            let (xi, xf) = (&seed[..d], &seed[3..3 + d]);
            let iv = TimeInterval::span(t).unwrap();
            let a = free_kernel(&p, xi, xf, &iv).unwrap();
            let b = free_kernel(&p, xf, xi, &iv).unwrap();
            prop_assert!((a.amp - b.amp).norm() <= 1e-14 * a.amp.norm());
            let omega = w / t;
            let a = harmonic_kernel(&p, omega, xi, xf, &iv).unwrap();
            let b = harmonic_kernel(&p, omega, xf, xi, &iv).unwrap();
            prop_assert!((a.amp - b.amp).norm() <= 1e-13 * a.amp.norm());
        }

        #[test]
        fn kernels_factorize_over_axes(
            d in 2usize..=3, seed in point(6), t in 0.1f64..2.0, w in 0.05f64..3.0
        ) {
            let p = Params::new(1.3, 0.9, d).unwrap();
            let p1 = Params { dim: 1, ..p };
            let (xi, xf) = (&seed[..d], &seed[3..3 + d]);
            let iv = TimeInterval::span(t).unwrap();
            let omega = w / t;
            let full = harmonic_kernel(&p, omega, xi, xf, &iv).unwrap().amp;
            let prod: Complex64 = (0..d)
                .map(|a| harmonic_kernel(&p1, omega, &xi[a..a + 1], &xf[a..a + 1], &iv).unwrap().amp)
                .product();
            prop_assert!((full - prod).norm() <= 1e-12 * full.norm());
            let full = free_kernel(&p, xi, xf, &iv).unwrap().amp;
            let prod: Complex64 = (0..d).map(|a| free_axis_kernel(&p, xi[a], xf[a], t)).product();
            prop_assert!((full - prod).norm() <= 1e-12 * full.norm());
        }

        #[test]
        fn free_modulus_is_endpoint_independent(d in 1usize..=3, seed in point(6), t in 0.05f64..3.0) {
            let p = Params::new(0.7, 1.1, d).unwrap();
            let iv = TimeInterval::span(t).unwrap();
            let k = free_kernel(&p, &seed[..d], &seed[3..3 + d], &iv).unwrap();
            let expected = (p.mass / (2.0 * PI * p.hbar * t)).powf(d as f64 / 2.0);
            prop_assert!((k.amp.norm() - expected).abs() <= 1e-14 * expected);
        }

        #[test]
        fn action_phase_matches_kernel_phase(seed in point(2), t in 0.1f64..2.0, w in 0.05f64..3.0) {
            let p = Params::new(1.0, 0.8, 1).unwrap();
            let iv = TimeInterval::span(t).unwrap();
            let omega = w / t;
            let (xi, xf) = (&seed[..1], &seed[1..2]);
            for pot in [Potential::Free, Potential::harmonic(omega)] {
                let k = match &pot {
                    Potential::Free => free_kernel(&p, xi, xf, &iv).unwrap(),
                    _ => harmonic_kernel(&p, omega, xi, xf, &iv).unwrap(),
                };
                let s = classical_action(&p, &pot, xi, xf, &iv).unwrap();
                let unit = k.amp / k.amp.norm() / Complex64::from_polar(1.0, -PI / 4.0);
                let expected = Complex64::from_polar(1.0, s / p.hbar);
                prop_assert!((unit - expected).norm() < 1e-9);
            }
        }
    }
}
