//! Born series `K = K0 + K1 + K2` for time-independent polynomial potentials.
//!
//! The free kernels in each term combine into a complex Brownian bridge: for
//! `0 < s < t` the slice point has mean `x_line(s)` and per-axis variance
//! `v(s) = i hbar s (t - s) / (m t)`, and for `s1 < s2` the covariance is
//! `i hbar s1 (t - s2) / (m t)`. The inner position integrals are bridge
//! expectations times `K0(t)`.

use std::f64::consts::{FRAC_PI_4, PI};

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{free_kernel, gaussian_prefactor, Params, Polynomial, Potential, TimeInterval};
use crate::numerics::{
    centered_moment, oscillatory_quadrature_extrapolated, pairwise_sum, GaussLegendreRule, QuadratureSpec,
};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BornTerm {
    pub order: usize,
    pub value: Complex64,
}

/// Inner position-integral rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum InnerRule {
    /// Closed-form Gaussian moments.
    #[default]
    Exact,
    /// Trapezoid along the rotated line `x = mu + exp(i pi / 4) u`; `half_width`
    /// and the grid are in units of the bridge width.
    Contour { half_width: f64, points: usize },
    /// Damped real-axis quadrature extrapolated in the damping; `half_width` in
    /// units of the bridge width.
    Damped {
        half_width: f64,
        points: usize,
        epsilon: f64,
    },
}

impl InnerRule {
    pub fn contour_default() -> Self {
        InnerRule::Contour {
            half_width: 12.0,
            points: 401,
        }
    }

    pub fn damped_default() -> Self {
        InnerRule::Damped {
            half_width: 100.0,
            points: 12001,
            epsilon: 80.0,
        }
    }
}

/// Outer time-integration settings: composite Gauss-Legendre with panel doubling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BornOptions {
    #[serde(default)]
    pub inner: InnerRule,
    pub degree: usize,
    pub initial_panels: usize,
    pub max_panels: usize,
    pub rel_tol: f64,
}

impl Default for BornOptions {
    fn default() -> Self {
        BornOptions {
            inner: InnerRule::Exact,
            degree: 12,
            initial_panels: 2,
            max_panels: 256,
            rel_tol: 1e-13,
        }
    }
}

impl BornOptions {
    pub fn with_inner(inner: InnerRule) -> Self {
        BornOptions {
            inner,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.initial_panels == 0 || self.max_panels < self.initial_panels {
            return Err(Error::InvalidParams("invalid Born outer-rule settings".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidParams("rel_tol must be > 0".into()));
        }
        match self.inner {
            InnerRule::Exact => Ok(()),
            InnerRule::Contour { half_width, points } => QuadratureSpec::new(half_width, points, 0.0).map(|_| ()),
            InnerRule::Damped {
                half_width,
                points,
                epsilon,
            } => QuadratureSpec::new(half_width, points, epsilon).map(|_| ()),
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `E[q(mu + Y)]` for `Y` centred with variance `var`.
fn expect_single(q: &Polynomial, mu: f64, var: Complex64) -> Complex64 {
    let mut acc = ZERO;
    for (j, &c) in q.coefficients().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut e = ZERO;
        for k in (0..=j).step_by(2) {
            e += binomial(j, k) * mu.powi((j - k) as i32) * centered_moment(k, var);
        }
        acc += c * e;
    }
    acc
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add_scaled(acc: &mut Vec<Complex64>, p: &[Complex64], s: Complex64) {
    if acc.len() < p.len() {
        acc.resize(p.len(), ZERO);
    }
    for (a, &x) in acc.iter_mut().zip(p) {
        *a += s * x;
    }
}

/// `q(mu + Y)` expanded as a polynomial in `Y`.
fn shifted(q: &Polynomial, mu: Complex64, slope: Complex64) -> Vec<Complex64> {
    let lin = [mu, slope];
    let mut out = Vec::new();
    let mut power = vec![Complex64::new(1.0, 0.0)];
    for &c in q.coefficients() {
        poly_add_scaled(&mut out, &power, Complex64::new(c, 0.0));
        power = poly_mul(&power, &lin);
    }
    out
}

/// `E[q(mu1 + Y1) q(mu2 + Y2)]` for a centred Gaussian pair written as
/// `Y2 = rho Y1 + W` with `W` independent of `Y1`.
fn expect_pair(q: &Polynomial, mu1: f64, mu2: f64, v11: Complex64, rho: Complex64, var_w: Complex64) -> Complex64 {
    // q(L + W) = sum_l W^l P_l(Y1) with L = mu2 + rho Y1
    let lin = [Complex64::new(mu2, 0.0), rho];
    let coeffs = q.coefficients();
    let mut l_pow = vec![vec![Complex64::new(1.0, 0.0)]];
    for k in 1..coeffs.len() {
        let next = poly_mul(&l_pow[k - 1], &lin);
        l_pow.push(next);
    }
    let mut inner = Vec::new();
    for (k, &c) in coeffs.iter().enumerate() {
        for l in (0..=k).step_by(2) {
            let weight = c * binomial(k, l) * centered_moment(l, var_w);
            poly_add_scaled(&mut inner, &l_pow[k - l], weight);
        }
    }
    let outer = shifted(q, Complex64::new(mu1, 0.0), Complex64::new(1.0, 0.0));
    poly_mul(&outer, &inner)
        .iter()
        .enumerate()
        .map(|(n, &c)| c * centered_moment(n, v11))
        .sum()
}

struct Bridge<'a> {
    params: &'a Params,
    x_i: &'a [f64],
    x_f: &'a [f64],
    t: f64,
}

impl Bridge<'_> {
    fn mean(&self, axis: usize, s: f64) -> f64 {
        self.x_i[axis] + s / self.t * (self.x_f[axis] - self.x_i[axis])
    }

    fn variance(&self, s: f64) -> Complex64 {
        I * self.params.hbar * s * (self.t - s) / (self.params.mass * self.t)
    }

    /// `E[V(X_s)]`.
    fn expect_v(&self, poly: &Polynomial, s: f64) -> Complex64 {
        let c0 = poly.constant();
        let q = poly.without_constant();
        let v = self.variance(s);
        let mut acc = Complex64::new(c0, 0.0);
        for a in 0..self.params.dim {
            acc += expect_single(&q, self.mean(a, s), v);
        }
        acc
    }

    /// `E[V(X_s1) V(X_s2)]` for `s1 < s2`.
    fn expect_vv(&self, poly: &Polynomial, s1: f64, s2: f64) -> Complex64 {
        let (m, hbar, t) = (self.params.mass, self.params.hbar, self.t);
        let c0 = poly.constant();
        let q = poly.without_constant();
        let (v1, v2) = (self.variance(s1), self.variance(s2));
        let rho = Complex64::new((t - s2) / (t - s1), 0.0);
        let var_w = I * hbar * (t - s2) * (s2 - s1) / (m * (t - s1));
        let e1: Vec<Complex64> = (0..self.params.dim)
            .map(|a| expect_single(&q, self.mean(a, s1), v1))
            .collect();
        let e2: Vec<Complex64> = (0..self.params.dim)
            .map(|a| expect_single(&q, self.mean(a, s2), v2))
            .collect();
        let mut acc = Complex64::new(c0 * c0, 0.0);
        acc += c0 * (e1.iter().sum::<Complex64>() + e2.iter().sum::<Complex64>());
        for (a, x1) in e1.iter().enumerate() {
            for (b, x2) in e2.iter().enumerate() {
                acc += if a == b {
                    expect_pair(&q, self.mean(a, s1), self.mean(a, s2), v1, rho, var_w)
                } else {
                    x1 * x2
                };
            }
        }
        acc
    }
}

fn check_inputs(params: &Params, potential: &Potential, x_i: &[f64], x_f: &[f64]) -> Result<()> {
    params.validate()?;
    potential.validate()?;
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    Ok(())
}

/// Composite Gauss-Legendre on `[0, t]` with panel doubling until the relative
/// change drops below `rel_tol`.
fn integrate_doubling<F>(opts: &BornOptions, t: f64, mut f: F) -> Result<Complex64>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    let rule = GaussLegendreRule::new(opts.degree)?;
    let mut eval = |panels: usize| -> Result<Complex64> {
        let terms = rule
            .composite_nodes(0.0, t, panels)
            .into_iter()
            .map(|(s, w)| Ok(f(s)? * w))
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum(&terms))
    };
    let mut panels = opts.initial_panels;
    let mut prev = eval(panels)?;
    while panels < opts.max_panels {
        panels *= 2;
        let cur = eval(panels)?;
        if (cur - prev).norm() <= opts.rel_tol * cur.norm() || cur == prev {
            return Ok(cur);
        }
        prev = cur;
    }
    warn!("outer time integral stopped at {panels} panels without reaching rel_tol");
    Ok(prev)
}

/// Same on the simplex `0 < s1 < s2 < t`.
fn integrate_simplex<F>(opts: &BornOptions, t: f64, mut f: F) -> Result<Complex64>
where
    F: FnMut(f64, f64) -> Result<Complex64>,
{
    let rule = GaussLegendreRule::new(opts.degree)?;
    let mut eval = |panels: usize| -> Result<Complex64> {
        let mut outer = Vec::new();
        for (s2, w2) in rule.composite_nodes(0.0, t, panels) {
            let inner = rule
                .composite_nodes(0.0, s2, panels)
                .into_iter()
                .map(|(s1, w1)| Ok(f(s1, s2)? * w1))
                .collect::<Result<Vec<_>>>()?;
            outer.push(pairwise_sum(&inner) * w2);
        }
        Ok(pairwise_sum(&outer))
    };
    let mut panels = opts.initial_panels;
    let mut prev = eval(panels)?;
    while panels < opts.max_panels {
        panels *= 2;
        let cur = eval(panels)?;
        if (cur - prev).norm() <= opts.rel_tol * cur.norm() || cur == prev {
            return Ok(cur);
        }
        prev = cur;
    }
    warn!("simplex integral stopped at {panels} panels without reaching rel_tol");
    Ok(prev)
}

pub fn born_k0(params: &Params, x_i: &[f64], x_f: &[f64], iv: &TimeInterval) -> Result<BornTerm> {
    Ok(BornTerm {
        order: 0,
        value: free_kernel(params, x_i, x_f, iv)?.amp,
    })
}

/// `K1 = -(i / hbar) int_0^t ds F_s`.
pub fn born_k1(
    params: &Params,
    potential: &Potential,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
    opts: &BornOptions,
) -> Result<BornTerm> {
    check_inputs(params, potential, x_i, x_f)?;
    opts.validate()?;
    let t = iv.duration();
    let k0 = free_kernel(params, x_i, x_f, iv)?.amp;
    let poly = potential.axis_polynomial(params.mass);
    let bridge = Bridge { params, x_i, x_f, t };
    let integral = match opts.inner {
        InnerRule::Exact => integrate_doubling(opts, t, |s| Ok(k0 * bridge.expect_v(&poly, s)))?,
        rule => integrate_doubling(opts, t, |s| fs_position_form(params, potential, s, iv, x_i, x_f, rule))?,
    };
    Ok(BornTerm {
        order: 1,
        value: -I / params.hbar * integral,
    })
}

/// `K2 = (-i / hbar)^2 int_{s1 < s2} K0 E[V(X_s1) V(X_s2)]`; exact inner rule only.
pub fn born_k2(
    params: &Params,
    potential: &Potential,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
    opts: &BornOptions,
) -> Result<BornTerm> {
    check_inputs(params, potential, x_i, x_f)?;
    opts.validate()?;
    if opts.inner != InnerRule::Exact {
        return Err(Error::InvalidParams(
            "second order supports only the exact inner rule".into(),
        ));
    }
    let t = iv.duration();
    let k0 = free_kernel(params, x_i, x_f, iv)?.amp;
    let poly = potential.axis_polynomial(params.mass);
    let bridge = Bridge { params, x_i, x_f, t };
    let integral = integrate_simplex(opts, t, |s1, s2| Ok(bridge.expect_vv(&poly, s1, s2)))?;
    let c = -I / params.hbar;
    Ok(BornTerm {
        order: 2,
        value: c * c * k0 * integral,
    })
}

/// `[K0, K1, K2]`.
pub fn born_series(
    params: &Params,
    potential: &Potential,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
    opts: &BornOptions,
) -> Result<[BornTerm; 3]> {
    Ok([
        born_k0(params, x_i, x_f, iv)?,
        born_k1(params, potential, x_i, x_f, iv, opts)?,
        born_k2(params, potential, x_i, x_f, iv, opts)?,
    ])
}

fn check_slice(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0 && s < t) {
        return Err(Error::DegenerateSlice { s, t });
    }
    Ok(())
}

/// One-axis factor `K0(a -> z; s) K0(z -> b; t - s)` at a complex point.
fn axis_pair_kernel(params: &Params, a: f64, b: f64, z: Complex64, s: f64, t: f64) -> Complex64 {
    let one = Params { dim: 1, ..*params };
    let pref = gaussian_prefactor(&one, s) * gaussian_prefactor(&one, t - s);
    let expo = I * params.mass / (2.0 * params.hbar) * ((z - a).powu(2) / s + (b - z).powu(2) / (t - s));
    pref * expo.exp()
}

/// Per-axis integrals `(int k, int k q)` along a line parametrized by `map(u)`
/// with `dz/du = jac`.
fn axis_integrals<M>(
    rule: InnerRule,
    scale: f64,
    map: M,
    jac: Complex64,
    kq: &dyn Fn(Complex64) -> (Complex64, Complex64),
) -> Result<(Complex64, Complex64)>
where
    M: Fn(f64) -> Complex64,
{
    let (spec, extrapolate) = match rule {
        InnerRule::Contour { half_width, points } => (QuadratureSpec::new(half_width * scale, points, 0.0)?, false),
        InnerRule::Damped {
            half_width,
            points,
            epsilon,
        } => (QuadratureSpec::new(half_width * scale, points, epsilon)?, true),
        InnerRule::Exact => unreachable!("exact rule handled by the bridge moments"),
    };
    let run = |pick: usize| {
        let f = |u: f64| {
            let (k, q) = kq(map(u));
            jac * if pick == 0 { k } else { q }
        };
        if extrapolate {
            oscillatory_quadrature_extrapolated(f, &spec)
        } else {
            crate::numerics::oscillatory_quadrature(f, &spec)
        }
    };
    Ok((run(0)?, run(1)?))
}

fn combine_axes(c0: f64, per_axis: &[(Complex64, Complex64)]) -> Complex64 {
    let all: Complex64 = per_axis.iter().map(|p| p.0).product();
    let mut acc = c0 * all;
    for a in 0..per_axis.len() {
        let others: Complex64 = per_axis
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, p)| p.0)
            .product();
        acc += per_axis[a].1 * others;
    }
    acc
}

/// `F_s = int d^d x K0(x_i -> x; s) V(x) K0(x -> x_f; t - s)` in position variables.
pub fn fs_position_form(
    params: &Params,
    potential: &Potential,
    s: f64,
    iv: &TimeInterval,
    x_i: &[f64],
    x_f: &[f64],
    rule: InnerRule,
) -> Result<Complex64> {
    check_inputs(params, potential, x_i, x_f)?;
    let t = iv.duration();
    check_slice(s, t)?;
    let poly = potential.axis_polynomial(params.mass);
    if rule == InnerRule::Exact {
        let bridge = Bridge { params, x_i, x_f, t };
        return Ok(free_kernel(params, x_i, x_f, iv)?.amp * bridge.expect_v(&poly, s));
    }
    let q = poly.without_constant();
    let width = (params.hbar * s * (t - s) / (params.mass * t)).sqrt();
    let rot = Complex64::from_polar(1.0, FRAC_PI_4);
    let per_axis = (0..params.dim)
        .map(|a| {
            let mu = x_i[a] + s / t * (x_f[a] - x_i[a]);
            let kq = |z: Complex64| {
                let k = axis_pair_kernel(params, x_i[a], x_f[a], z, s, t);
                (k, k * q.eval_complex(z))
            };
            match rule {
                InnerRule::Contour { .. } => axis_integrals(rule, width, |u| mu + rot * u, rot, &kq),
                _ => axis_integrals(
                    rule,
                    width,
                    |u| Complex64::new(mu + u, 0.0),
                    Complex64::new(1.0, 0.0),
                    &kq,
                ),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_axes(poly.constant(), &per_axis))
}

/// The same integral in the slice-kick variable `gamma_s`, with
/// `x = x_line(s) + gamma s (t - s) / t` and Jacobian `(s (t - s) / t)^d`.
pub fn fs_gamma_form(
    params: &Params,
    potential: &Potential,
    s: f64,
    iv: &TimeInterval,
    x_i: &[f64],
    x_f: &[f64],
    rule: InnerRule,
) -> Result<Complex64> {
    check_inputs(params, potential, x_i, x_f)?;
    let t = iv.duration();
    check_slice(s, t)?;
    let poly = potential.axis_polynomial(params.mass);
    let lever = s * (t - s) / t;
    if rule == InnerRule::Exact {
        // gamma_s is centred Gaussian with variance v(s) / lever^2; V is evaluated at the mapped point
        let k0 = free_kernel(params, x_i, x_f, iv)?.amp;
        let var_gamma = I * params.hbar / (params.mass * lever);
        let q = poly.without_constant();
        let mut e = Complex64::new(poly.constant(), 0.0);
        for a in 0..params.dim {
            let mu = x_i[a] + s / t * (x_f[a] - x_i[a]);
            let mapped = Polynomial::new(compose_affine(&q, mu, lever));
            e += expect_single(&mapped, 0.0, var_gamma);
        }
        return Ok(k0 * e);
    }
    let q = poly.without_constant();
    let width = (params.hbar / (params.mass * lever)).sqrt();
    let rot = Complex64::from_polar(1.0, FRAC_PI_4);
    let per_axis = (0..params.dim)
        .map(|a| {
            let mu = x_i[a] + s / t * (x_f[a] - x_i[a]);
            let kq = |g: Complex64| {
                let z = mu + lever * g;
                let k = axis_pair_kernel(params, x_i[a], x_f[a], z, s, t) * lever;
                (k, k * q.eval_complex(z))
            };
            match rule {
                InnerRule::Contour { .. } => axis_integrals(rule, width, |u| rot * u, rot, &kq),
                _ => axis_integrals(rule, width, |u| Complex64::new(u, 0.0), Complex64::new(1.0, 0.0), &kq),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_axes(poly.constant(), &per_axis))
}

/// Coefficients of `x -> q(mu + lever x)`.
fn compose_affine(q: &Polynomial, mu: f64, lever: f64) -> Vec<f64> {
    shifted(q, Complex64::new(mu, 0.0), Complex64::new(lever, 0.0))
        .iter()
        .map(|c| c.re)
        .collect()
}

/// Composed two-kernel prefactor of `F_s` against the printed constant
/// `(-4 m^2 / (pi^2 hbar^2 s (t - s)))^(d/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefactorComparison {
    pub composed: Complex64,
    pub printed: Complex64,
}

impl PrefactorComparison {
    pub fn ratio(&self) -> Complex64 {
        self.printed / self.composed
    }

    pub fn modulus_ratio(&self) -> f64 {
        self.printed.norm() / self.composed.norm()
    }
}

pub fn fs_prefactor(params: &Params, s: f64, t: f64) -> Result<PrefactorComparison> {
    params.validate()?;
    check_slice(s, t)?;
    let composed = gaussian_prefactor(params, s) * gaussian_prefactor(params, t - s);
    let base = Complex64::new(
        -4.0 * params.mass.powi(2) / (PI * PI * params.hbar.powi(2) * s * (t - s)),
        0.0,
    );
    let printed = base.powf(0.5 * params.dim as f64);
    Ok(PrefactorComparison { composed, printed })
}
