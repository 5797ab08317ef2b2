//! Complex Gaussian integrals, tridiagonal algebra, the exact Gaussian chain
//! and the damped oscillatory quadrature oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gaussian_prefactor, KernelValue, Params, Potential, TimeInterval};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coefficients of `exp(i (a x^2 + b x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelCoeff {
    pub a: Complex64,
    pub b: Complex64,
}

impl FresnelCoeff {
    pub fn new(a: Complex64, b: Complex64) -> Self {
        FresnelCoeff { a, b }
    }

    pub fn real(a: f64, b: f64) -> Self {
        FresnelCoeff::new(Complex64::new(a, 0.0), Complex64::new(b, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParams("non-finite Fresnel coefficient".into()));
        }
        if self.a == Complex64::new(0.0, 0.0) {
            return Err(Error::DegenerateQuadratic);
        }
        if self.a.im < 0.0 {
            return Err(Error::Divergent(self.a.im));
        }
        Ok(())
    }
}

/// `int exp(i (a x^2 + b x)) dx = sqrt(i pi / a) exp(-i b^2 / (4a))`, principal root.
pub fn fresnel_integral(c: FresnelCoeff) -> Result<Complex64> {
    Ok(fresnel_log(c)?.exp())
}

/// Natural log of [`fresnel_integral`], for products of many factors.
pub fn fresnel_log(c: FresnelCoeff) -> Result<Complex64> {
    c.validate()?;
    let root = 0.5 * (I * std::f64::consts::PI / c.a).ln();
    Ok(root - I * c.b * c.b / (4.0 * c.a))
}

/// `E[Y^k]` for a centred complex Gaussian with variance `var`.
pub fn centered_moment(k: usize, var: Complex64) -> Complex64 {
    if k % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    let double_factorial: f64 = (1..k).step_by(2).map(|j| j as f64).product();
    double_factorial * var.powu((k / 2) as u32)
}

/// Pairwise summation with a fixed split, so results do not depend on
/// evaluation order.
pub fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().fold(Complex64::new(0.0, 0.0), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_real(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_real(&xs[..mid]) + pairwise_sum_real(&xs[mid..])
}

/// Truncated, damped trapezoid grid on `[center - L, center + L]`.
///
/// The envelope is `exp(-epsilon (x - center)^2 / L^2)`; `epsilon = 0` gives a raw trapezoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub half_width: f64,
    pub points: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub center: f64,
}

impl QuadratureSpec {
    pub const MAX_EPSILON: f64 = 200.0;

    pub fn new(half_width: f64, points: usize, epsilon: f64) -> Result<Self> {
        let s = QuadratureSpec {
            half_width,
            points,
            epsilon,
            center: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Oracle defaults for an integrand whose Gaussian phase has width `w`.
    pub fn for_width(w: f64) -> Self {
        QuadratureSpec {
            half_width: 50.0 * w,
            points: 6001,
            epsilon: 48.0,
            center: 0.0,
        }
    }

    pub fn centered(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidParams(format!(
                "half_width must be > 0, got {}",
                self.half_width
            )));
        }
        if self.points < 3 || self.points.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "points must be odd and >= 3, got {}",
                self.points
            )));
        }
        if !(0.0..=Self::MAX_EPSILON).contains(&self.epsilon) {
            return Err(Error::InvalidParams(format!(
                "epsilon must lie in [0, {}], got {}",
                Self::MAX_EPSILON,
                self.epsilon
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::InvalidParams("non-finite quadrature center".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        let x0 = self.center - self.half_width;
        (0..self.points).map(move |j| x0 + j as f64 * h)
    }

    fn trapezoid_weight(&self, j: usize) -> f64 {
        let h = self.step();
        if j == 0 || j + 1 == self.points {
            0.5 * h
        } else {
            h
        }
    }

    fn envelope(&self, x: f64, epsilon: f64) -> f64 {
        let u = (x - self.center) / self.half_width;
        (-epsilon * u * u).exp()
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::for_width(1.0)
    }
}

/// Damped trapezoid sum of `f` at the spec's own `epsilon`.
pub fn oscillatory_quadrature<F>(mut f: F, spec: &QuadratureSpec) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    spec.validate()?;
    let terms: Vec<Complex64> = spec
        .nodes()
        .enumerate()
        .map(|(j, x)| f(x) * spec.trapezoid_weight(j) * spec.envelope(x, spec.epsilon))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `epsilon -> 0` limit from values at `epsilon`, `epsilon/2`, `epsilon/4`,
/// removing the linear and quadratic terms.
pub fn richardson3(i_eps: Complex64, i_half: Complex64, i_quarter: Complex64) -> Complex64 {
    (i_eps - 6.0 * i_half + 8.0 * i_quarter) / 3.0
}

/// Damped quadrature extrapolated to `epsilon -> 0`; `f` is evaluated once per node.
pub fn oscillatory_quadrature_extrapolated<F>(mut f: F, spec: &QuadratureSpec) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    spec.validate()?;
    let samples: Vec<(f64, Complex64)> = spec
        .nodes()
        .enumerate()
        .map(|(j, x)| (x, f(x) * spec.trapezoid_weight(j)))
        .collect();
    let at = |eps: f64| {
        let terms: Vec<Complex64> = samples.iter().map(|&(x, fx)| fx * spec.envelope(x, eps)).collect();
        pairwise_sum(&terms)
    };
    let e = spec.epsilon;
    if e == 0.0 {
        return Ok(at(0.0));
    }
    Ok(richardson3(at(e), at(0.5 * e), at(0.25 * e)))
}

/// Symmetric complex tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagComplex {
    pub diag: Vec<Complex64>,
    pub off: Vec<Complex64>,
}

impl TridiagComplex {
    pub fn new(diag: Vec<Complex64>, off: Vec<Complex64>) -> Result<Self> {
        let t = TridiagComplex { diag, off };
        t.validate()?;
        Ok(t)
    }

    pub fn from_real(diag: &[f64], off: &[f64]) -> Result<Self> {
        Self::new(
            diag.iter().map(|&d| d.into()).collect(),
            off.iter().map(|&o| o.into()).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.diag.is_empty() {
            return Err(Error::InvalidParams("tridiagonal matrix must have size >= 1".into()));
        }
        if self.off.len() + 1 != self.diag.len() {
            return Err(Error::InvalidParams(format!(
                "off-diagonal length {} does not match size {}",
                self.off.len(),
                self.diag.len()
            )));
        }
        if !self.diag.iter().chain(&self.off).all(|z| z.is_finite()) {
            return Err(Error::InvalidParams("non-finite tridiagonal entry".into()));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }
}

/// Three-term recurrence `D_k = diag_k D_{k-1} - off_{k-1}^2 D_{k-2}`.
pub fn tridiag_det(t: &TridiagComplex) -> Complex64 {
    let mut prev = Complex64::new(1.0, 0.0);
    let mut cur = t.diag[0];
    for k in 1..t.size() {
        let next = t.diag[k] * cur - t.off[k - 1] * t.off[k - 1] * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Solves a general tridiagonal system by the Thomas algorithm.
///
/// `lower[j]` multiplies `x[j]` in row `j + 1`; `upper[j]` multiplies `x[j + 1]` in row `j`.
pub fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n || rhs.len() != n {
        return Err(Error::InvalidParams("inconsistent tridiagonal system sizes".into()));
    }
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    let mut pivot = diag[0];
    if pivot.norm() == 0.0 {
        return Err(Error::LinearSolve(0));
    }
    if n > 1 {
        c[0] = upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for j in 1..n {
        pivot = diag[j] - lower[j - 1] * c[j - 1];
        if pivot.norm() == 0.0 || !pivot.is_finite() {
            return Err(Error::LinearSolve(j));
        }
        if j + 1 < n {
            c[j] = upper[j] / pivot;
        }
        d[j] = (rhs[j] - lower[j - 1] * d[j - 1]) / pivot;
    }
    for j in (0..n - 1).rev() {
        d[j] = d[j] - c[j] * d[j + 1];
    }
    Ok(d)
}

/// LDL^T pivots of a real symmetric tridiagonal matrix; their signs give the
/// inertia (Sturm count) and their product the determinant.
pub fn ldl_pivots(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    if diag.is_empty() || off.len() + 1 != diag.len() {
        return Err(Error::InvalidParams("inconsistent tridiagonal sizes".into()));
    }
    let scale = diag.iter().chain(off).fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut pivots = Vec::with_capacity(diag.len());
    let mut prev = diag[0];
    pivots.push(prev);
    for k in 1..diag.len() {
        if prev.abs() <= 1e-13 * scale {
            return Err(Error::SingularChain);
        }
        prev = diag[k] - off[k - 1] * off[k - 1] / prev;
        pivots.push(prev);
    }
    if prev.abs() <= 1e-13 * scale {
        return Err(Error::SingularChain);
    }
    Ok(pivots)
}

/// Number of negative eigenvalues of a real symmetric tridiagonal matrix.
pub fn sturm_negative_count(diag: &[f64], off: &[f64]) -> Result<usize> {
    Ok(ldl_pivots(diag, off)?.iter().filter(|&&p| p < 0.0).count())
}

/// How the potential is sampled on each slice of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialSampling {
    /// `(V(x_k) + V(x_{k+1})) / 2`.
    #[default]
    Trapezoid,
    /// `V((x_k + x_{k+1}) / 2)`.
    Midpoint,
}

/// Exact N-slice Gaussian chain for potentials of degree <= 2 per axis.
pub fn chain_gaussian(
    params: &Params,
    potential: &Potential,
    n: usize,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
) -> Result<KernelValue> {
    chain_gaussian_with(params, potential, n, PotentialSampling::default(), x_i, x_f, iv)
}

pub fn chain_gaussian_with(
    params: &Params,
    potential: &Potential,
    n: usize,
    sampling: PotentialSampling,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
) -> Result<KernelValue> {
    params.validate()?;
    potential.validate()?;
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    if n == 0 {
        return Err(Error::InvalidParams("slice count must be >= 1".into()));
    }
    let poly = potential.axis_polynomial(params.mass);
    if poly.degree() > 2 {
        return Err(Error::InvalidParams(format!(
            "Gaussian chain needs a potential of degree <= 2, got {}",
            poly.degree()
        )));
    }
    let (c1, c2) = (poly.coeff(1), poly.coeff(2));
    let t = iv.duration();
    let mut amp = Complex64::from_polar(1.0, -poly.constant() * t / params.hbar);
    for (&a, &b) in x_i.iter().zip(x_f) {
        amp *= chain_axis(params, c1, c2, n, sampling, a, b, t)?;
    }
    Ok(KernelValue::new(amp))
}

/// Discretized action of one axis path `x_0..x_N` under `c1 x + c2 x^2`.
pub fn chain_axis_action(mass: f64, c1: f64, c2: f64, sampling: PotentialSampling, path: &[f64], dt: f64) -> f64 {
    let v = |x: f64| c1 * x + c2 * x * x;
    let terms: Vec<f64> = path
        .windows(2)
        .map(|w| {
            let kin = mass * (w[1] - w[0]).powi(2) / (2.0 * dt);
            let pot = match sampling {
                PotentialSampling::Trapezoid => 0.5 * (v(w[0]) + v(w[1])),
                PotentialSampling::Midpoint => v(0.5 * (w[0] + w[1])),
            };
            kin - dt * pot
        })
        .collect();
    pairwise_sum_real(&terms)
}

#[allow(clippy::too_many_arguments)]
fn chain_axis(
    params: &Params,
    c1: f64,
    c2: f64,
    n: usize,
    sampling: PotentialSampling,
    x_i: f64,
    x_f: f64,
    t: f64,
) -> Result<Complex64> {
    let m = params.mass;
    let dt = t / n as f64;
    let one = Params { dim: 1, ..*params };
    if n == 1 {
        let s = chain_axis_action(m, c1, c2, sampling, &[x_i, x_f], dt);
        return Ok(gaussian_prefactor(&one, dt) * Complex64::from_polar(1.0, s / params.hbar));
    }
    // Hessian of the full action over x_0..x_N, tridiagonal.
    let np = n + 1;
    let mut hd = vec![0.0; np];
    let mut ho = vec![0.0; n];
    let mut g = vec![0.0; np];
    for k in 0..n {
        hd[k] += m / dt;
        hd[k + 1] += m / dt;
        ho[k] -= m / dt;
        match sampling {
            PotentialSampling::Trapezoid => {
                hd[k] -= dt * c2;
                hd[k + 1] -= dt * c2;
            }
            PotentialSampling::Midpoint => {
                hd[k] -= 0.5 * dt * c2;
                hd[k + 1] -= 0.5 * dt * c2;
                ho[k] -= 0.5 * dt * c2;
            }
        }
        g[k] -= 0.5 * dt * c1;
        g[k + 1] -= 0.5 * dt * c1;
    }
    let interior = n - 1;
    let scaled_diag: Vec<f64> = hd[1..n].iter().map(|h| h * dt / m).collect();
    let scaled_off: Vec<f64> = ho[1..n - 1].iter().map(|h| h * dt / m).collect();
    let pivots = ldl_pivots(&scaled_diag, &scaled_off)?;
    let negative = pivots.iter().filter(|&&p| p < 0.0).count();
    let log_det: f64 = pivots.iter().map(|p| p.abs().ln()).sum();

    let mut rhs = vec![Complex64::new(0.0, 0.0); interior];
    for (j, r) in rhs.iter_mut().enumerate() {
        *r = Complex64::new(-g[j + 1], 0.0);
    }
    rhs[0] -= ho[0] * x_i;
    rhs[interior - 1] -= ho[n - 1] * x_f;
    let cplx = |v: &[f64]| v.iter().map(|&a| Complex64::new(a, 0.0)).collect::<Vec<_>>();
    let off = cplx(&ho[1..n - 1]);
    let y = solve_tridiagonal(&off, &cplx(&hd[1..n]), &off, &rhs)?;
    let mut path = Vec::with_capacity(np);
    path.push(x_i);
    path.extend(y.iter().map(|z| z.re));
    path.push(x_f);
    let s_min = chain_axis_action(m, c1, c2, sampling, &path, dt);

    let modulus = (m / (2.0 * std::f64::consts::PI * params.hbar * dt)).sqrt() * (-0.5 * log_det).exp();
    let phase = -std::f64::consts::FRAC_PI_4 - std::f64::consts::FRAC_PI_2 * negative as f64 + s_min / params.hbar;
    Ok(Complex64::from_polar(modulus, phase))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidParams("slope inputs differ in length".into()));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Composite Gauss-Legendre rule with a fixed number of nodes per panel.
#[derive(Debug, Clone)]
pub struct GaussLegendreRule {
    pairs: Vec<(f64, f64)>,
}

impl GaussLegendreRule {
    pub fn new(degree: usize) -> Result<Self> {
        let rule = gauss_quad::GaussLegendre::new(degree)
            .map_err(|e| Error::InvalidParams(format!("Gauss-Legendre rule: {e}")))?;
        Ok(GaussLegendreRule {
            pairs: rule.as_node_weight_pairs().to_vec(),
        })
    }

    pub fn degree(&self) -> usize {
        self.pairs.len()
    }

    /// Nodes and weights of `panels` equal panels on `[a, b]`.
    pub fn composite_nodes(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let w = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.pairs.len());
        for p in 0..panels {
            let lo = a + p as f64 * w;
            for &(x, wt) in &self.pairs {
                out.push((lo + 0.5 * w * (x + 1.0), 0.5 * w * wt));
            }
        }
        out
    }

    pub fn integrate<F>(&self, a: f64, b: f64, panels: usize, mut f: F) -> Complex64
    where
        F: FnMut(f64) -> Complex64,
    {
        let terms: Vec<Complex64> = self
            .composite_nodes(a, b, panels)
            .into_iter()
            .map(|(x, w)| f(x) * w)
            .collect();
        pairwise_sum(&terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{free_kernel, harmonic_kernel};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fresnel_examples() {
        let v = fresnel_integral(FresnelCoeff::new(I, c(0.0, 0.0))).unwrap();
        assert!((v - PI.sqrt()).norm() < 1e-15);
        let v = fresnel_integral(FresnelCoeff::real(1.0, 0.0)).unwrap();
        assert!((v - PI.sqrt() * Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-15);
        let closed = fresnel_integral(FresnelCoeff::real(1.0, 2.0)).unwrap();
        let expected = PI.sqrt() * Complex64::from_polar(1.0, PI / 4.0 - 1.0);
        assert!((closed - expected).norm() < 1e-14);
        let spec = QuadratureSpec::for_width(1.0).centered(-1.0);
        let oracle = oscillatory_quadrature_extrapolated(|x| (I * (x * x + 2.0 * x)).exp(), &spec).unwrap();
        assert!((oracle - closed).norm() < 1e-5);
    }

    #[test]
    fn fresnel_errors() {
        assert_eq!(
            fresnel_integral(FresnelCoeff::real(0.0, 1.0)),
            Err(Error::DegenerateQuadratic)
        );
        assert!(matches!(
            fresnel_integral(FresnelCoeff::new(c(1.0, -0.1), c(0.0, 0.0))),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn fresnel_negative_real_coefficient_uses_conjugate_branch() {
        let v = fresnel_integral(FresnelCoeff::real(-1.0, 0.0)).unwrap();
        assert!((v - PI.sqrt() * Complex64::from_polar(1.0, -PI / 4.0)).norm() < 1e-15);
    }

    #[test]
    fn raw_trapezoid_on_real_gaussian() {
        let spec = QuadratureSpec::new(10.0, 2001, 0.0).unwrap();
        let v = oscillatory_quadrature(|x| c((-x * x).exp(), 0.0), &spec).unwrap();
        assert!((v - PI.sqrt()).norm() < 1e-10);
    }

    #[test]
    fn extrapolated_fresnel_phase() {
        let v = oscillatory_quadrature_extrapolated(|x| (I * x * x).exp(), &QuadratureSpec::default()).unwrap();
        let exact = fresnel_integral(FresnelCoeff::real(1.0, 0.0)).unwrap();
        assert!((v - exact).norm() < 1e-4);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let spec = QuadratureSpec::default();
        let v = oscillatory_quadrature(|x| x * (I * x * x).exp(), &spec).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn refinement_schedule_is_monotone() {
        let exact = fresnel_integral(FresnelCoeff::real(1.0, 0.0)).unwrap();
        let schedule = [
            (10.0, 501, 6.0),
            (20.0, 1501, 12.0),
            (35.0, 3001, 24.0),
            (50.0, 6001, 48.0),
        ];
        let errs: Vec<f64> = schedule
            .iter()
            .map(|&(l, m, e)| {
                let spec = QuadratureSpec::new(l, m, e).unwrap();
                (oscillatory_quadrature_extrapolated(|x| (I * x * x).exp(), &spec).unwrap() - exact).norm()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(1.0, 4, 1.0).is_err());
        assert!(QuadratureSpec::new(1.0, 1, 1.0).is_err());
        assert!(QuadratureSpec::new(0.0, 5, 1.0).is_err());
        assert!(QuadratureSpec::new(1.0, 5, -1.0).is_err());
        assert!(QuadratureSpec::new(1.0, 5, 1e3).is_err());
    }

    #[test]
    fn tridiag_det_examples() {
        for m in 1..=10 {
            let t = TridiagComplex::from_real(&vec![2.0; m], &vec![-1.0; m - 1]).unwrap();
            assert!((tridiag_det(&t) - (m as f64 + 1.0)).norm() < 1e-12);
        }
        let t = TridiagComplex::new(vec![c(0.3, -2.0)], vec![]).unwrap();
        assert_eq!(tridiag_det(&t), c(0.3, -2.0));
        assert!(TridiagComplex::from_real(&[1.0, 2.0], &[]).is_err());
    }

    #[allow(clippy::needless_range_loop)]
    fn dense_det(mut a: Vec<Vec<Complex64>>) -> Complex64 {
        let n = a.len();
        let mut det = c(1.0, 0.0);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())
                .unwrap();
            if piv != col {
                a.swap(piv, col);
                det = -det;
            }
            let p = a[col][col];
            det *= p;
            for r in col + 1..n {
                let f = a[r][col] / p;
                for k in col..n {
                    let v = a[col][k];
                    a[r][k] -= f * v;
                }
            }
        }
        det
    }

    proptest! {
        #[test]
        fn completion_of_squares(ar in 0.2f64..3.0, ai in 0.0f64..2.0, br in -3.0f64..3.0, bi in -1.0f64..1.0) {
            let a = c(ar, ai);
            let base = fresnel_integral(FresnelCoeff::new(a, c(0.0, 0.0))).unwrap();
            let b = c(br, bi);
            let v = fresnel_integral(FresnelCoeff::new(a, b)).unwrap() * (I * b * b / (4.0 * a)).exp();
            prop_assert!((v - base).norm() < 1e-12 * base.norm());
        }

        #[test]
        fn tridiag_matches_dense(
            m in 1usize..=8,
            vals in proptest::collection::vec(-2.0f64..2.0, 32)
        ) {
            let diag: Vec<Complex64> = (0..m).map(|k| c(vals[2 * k], vals[2 * k + 1])).collect();
            let off: Vec<Complex64> = (0..m - 1).map(|k| c(vals[16 + 2 * k], vals[17 + 2 * k])).collect();
            let t = TridiagComplex::new(diag.clone(), off.clone()).unwrap();
            let mut dense = vec![vec![c(0.0, 0.0); m]; m];
            for k in 0..m {
                dense[k][k] = diag[k];
                if k + 1 < m {
                    dense[k][k + 1] = off[k];
                    dense[k + 1][k] = off[k];
                }
            }
            let d = dense_det(dense);
            prop_assert!((tridiag_det(&t) - d).norm() <= 1e-12 * (1.0 + d.norm()));
        }

        #[test]
        fn thomas_solves_general_systems(
            m in 1usize..=12,
            vals in proptest::collection::vec(-1.0f64..1.0, 96)
        ) {
            let diag: Vec<Complex64> = (0..m).map(|k| c(4.0 + vals[k], vals[24 + k])).collect();
            let lower: Vec<Complex64> = (0..m - 1).map(|k| c(vals[48 + k], 0.3)).collect();
            let upper: Vec<Complex64> = (0..m - 1).map(|k| c(-0.2, vals[72 + k])).collect();
            let rhs: Vec<Complex64> = (0..m).map(|k| c(vals[k + 12], 1.0)).collect();
            let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
            for j in 0..m {
                let mut r = diag[j] * x[j];
                if j > 0 { r += lower[j - 1] * x[j - 1]; }
                if j + 1 < m { r += upper[j] * x[j + 1]; }
                prop_assert!((r - rhs[j]).norm() < 1e-12);
            }
        }

        #[test]
        fn free_chain_is_exact_for_every_n(n in 1usize..40, xi in -2.0f64..2.0, xf in -2.0f64..2.0, t in 0.2f64..3.0) {
            let p = Params::unit(1);
            let iv = TimeInterval::span(t).unwrap();
            let k = chain_gaussian(&p, &Potential::Free, n, &[xi], &[xf], &iv).unwrap();
            let e = free_kernel(&p, &[xi], &[xf], &iv).unwrap();
            prop_assert!(k.rel_error(&e) < 1e-11);
        }
    }

    #[test]
    fn harmonic_single_slice_substitution() {
        // trapezoid sampling: sin -> Omega dt, cot -> 1/(Omega dt) - Omega dt / 2
        let p = Params::unit(1);
        let (omega, t, xi, xf) = (1.3, 0.4, 0.7, -0.2);
        let iv = TimeInterval::span(t).unwrap();
        let k = chain_gaussian(&p, &Potential::harmonic(omega), 1, &[xi], &[xf], &iv).unwrap();
        let ot = omega * t;
        let cot = 1.0 / ot - ot / 2.0;
        let phase = 0.5 * omega * ((xi * xi + xf * xf) * cot - 2.0 * xi * xf / ot);
        let expected = (c(omega, 0.0) / (2.0 * PI * I * ot)).sqrt() * Complex64::from_polar(1.0, phase);
        assert!((k.amp - expected).norm() < 1e-14);
    }

    #[test]
    fn harmonic_chain_converges_at_second_order() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.0).unwrap();
        let exact = harmonic_kernel(&p, 1.0, &[0.3], &[0.8], &iv).unwrap();
        for sampling in [PotentialSampling::Trapezoid] {
            let errs: Vec<f64> = [4usize, 8, 16, 32]
                .iter()
                .map(|&n| {
                    chain_gaussian_with(&p, &Potential::harmonic(1.0), n, sampling, &[0.3], &[0.8], &iv)
                        .unwrap()
                        .rel_error(&exact)
                })
                .collect();
            for w in errs.windows(2) {
                let r = w[0] / w[1];
                assert!((r - 4.0).abs() < 0.3, "{errs:?}");
            }
        }
    }

    #[test]
    fn midpoint_sampling_is_first_order() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.0).unwrap();
        let exact = harmonic_kernel(&p, 1.0, &[0.3], &[0.8], &iv).unwrap();
        let err = |n| {
            chain_gaussian_with(
                &p,
                &Potential::harmonic(1.0),
                n,
                PotentialSampling::Midpoint,
                &[0.3],
                &[0.8],
                &iv,
            )
            .unwrap()
            .rel_error(&exact)
        };
        let r = err(32) / err(64);
        assert!((r - 2.0).abs() < 0.2, "{r}");
    }

    #[test]
    fn chain_handles_dimension_and_constant() {
        let p = Params::unit(3);
        let iv = TimeInterval::span(0.8).unwrap();
        let pot = Potential::polynomial([0.4, 0.0, 0.5 * 1.2 * 1.2]);
        let a = chain_gaussian(&p, &pot, 12, &[0.1, 0.2, 0.3], &[0.0, -0.5, 1.0], &iv).unwrap();
        let b = chain_gaussian(
            &p,
            &Potential::harmonic(1.2),
            12,
            &[0.1, 0.2, 0.3],
            &[0.0, -0.5, 1.0],
            &iv,
        )
        .unwrap();
        let expected = b.amp * Complex64::from_polar(1.0, -0.4 * 0.8);
        assert!((a.amp - expected).norm() < 1e-13 * a.amp.norm());
    }

    #[test]
    fn linear_potential_chain_matches_closed_form() {
        // V = F x: K = K_free * exp(-i F T (x_i + x_f) / (2 hbar) - i F^2 T^3 / (24 m hbar)),
        // which trapezoid slicing reproduces up to O(dt^2) in the last term.
        let p = Params::unit(1);
        let f = 0.7;
        let iv = TimeInterval::span(1.5).unwrap();
        let exact = free_kernel(&p, &[0.2], &[1.1], &iv).unwrap().amp
            * Complex64::from_polar(1.0, -f * 1.5 * 1.3 / 2.0 - f * f * 1.5f64.powi(3) / 24.0);
        let k = chain_gaussian(&p, &Potential::polynomial([0.0, f]), 400, &[0.2], &[1.1], &iv).unwrap();
        assert!((k.amp - exact).norm() < 1e-5);
    }

    #[test]
    fn chain_rejects_high_degree_and_caustics() {
        let p = Params::unit(1);
        let iv = TimeInterval::span(1.0).unwrap();
        assert!(chain_gaussian(&p, &Potential::polynomial([0.0, 0.0, 0.0, 1.0]), 4, &[0.0], &[0.0], &iv).is_err());
        // two slices, potential tuned so that the single interior Hessian entry vanishes
        let omega = (2.0f64 / (0.5 * 0.5)).sqrt();
        let r = chain_gaussian(&p, &Potential::harmonic(omega), 2, &[0.0], &[0.3], &iv);
        assert_eq!(r, Err(Error::SingularChain));
    }

    #[test]
    fn sturm_count_matches_diagonal_signs() {
        assert_eq!(sturm_negative_count(&[1.0, -2.0, 3.0], &[0.0, 0.0]).unwrap(), 1);
        assert_eq!(sturm_negative_count(&[2.0, 2.0, 2.0], &[-1.0, -1.0]).unwrap(), 0);
        // eigenvalues 1 +- 2
        assert_eq!(sturm_negative_count(&[1.0, 1.0], &[2.0]).unwrap(), 1);
    }

    #[test]
    fn slope_fits() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / (x * x)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 2.0).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[1.0; 4]).unwrap().abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let rule = GaussLegendreRule::new(6).unwrap();
        let v = rule.integrate(0.0, 2.0, 3, |x| c(x.powi(11), 0.0));
        assert!((v.re - 2f64.powi(12) / 12.0).abs() < 1e-10);
    }

    #[test]
    fn moments() {
        let v = c(0.0, 0.5);
        assert_eq!(centered_moment(0, v), c(1.0, 0.0));
        assert_eq!(centered_moment(3, v), c(0.0, 0.0));
        assert!((centered_moment(4, v) - 3.0 * v * v).norm() < 1e-15);
        assert!((centered_moment(6, v) - 15.0 * v * v * v).norm() < 1e-15);
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs: Vec<Complex64> = (0..100_000).map(|_| c(0.1, -0.1)).collect();
        let s = pairwise_sum(&xs);
        assert!((s - c(10_000.0, -10_000.0)).norm() < 1e-9);
    }
}
