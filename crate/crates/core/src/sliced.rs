//! Position-variable time slicing: Kolmogorov composition, N-slice kernels
//! and convergence measurement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    free_axis_kernel, free_kernel, gaussian_prefactor, harmonic_kernel, KernelValue, Params, Polynomial, Potential,
    TimeInterval,
};
use crate::numerics::{
    chain_gaussian, chain_gaussian_with, fresnel_integral, loglog_slope, oscillatory_quadrature_extrapolated,
    pairwise_sum, pairwise_sum_real, richardson3, FresnelCoeff, PotentialSampling, QuadratureSpec,
};

/// Uniform forward slicing of an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foliation {
    n_slices: usize,
    dt: f64,
    interval: TimeInterval,
}

impl Foliation {
    pub fn new(n_slices: usize, interval: TimeInterval) -> Result<Self> {
        if n_slices == 0 {
            return Err(Error::InvalidParams("slice count must be >= 1".into()));
        }
        Ok(Foliation {
            n_slices,
            dt: interval.duration() / n_slices as f64,
            interval,
        })
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn interval(&self) -> &TimeInterval {
        &self.interval
    }

    /// Time of the `k`-th slice boundary, `k = 0..=N`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_slices {
            self.interval.t_f()
        } else {
            self.interval.t_i() + k as f64 * self.dt
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicedResult {
    pub value: KernelValue,
    pub n_slices: usize,
    pub error_vs_exact: Option<f64>,
}

/// A propagator that factorizes over axes into identical one-axis kernels
/// times a constant phase.
pub trait SeparableKernel {
    fn duration(&self) -> f64;
    fn axis_amp(&self, x_a: f64, x_b: f64) -> Result<Complex64>;
    fn constant_factor(&self) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
}

/// Closed-form or exactly chained kernel for potentials of degree <= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisKernel {
    params: Params,
    potential: Potential,
    duration: f64,
    slices: Option<usize>,
}

impl AxisKernel {
    /// Free or Harmonic closed form over `duration`.
    pub fn exact(params: &Params, potential: &Potential, duration: f64) -> Result<Self> {
        params.validate()?;
        potential.validate()?;
        TimeInterval::span(duration)?;
        if matches!(potential, Potential::Polynomial { .. }) {
            return Err(Error::InvalidParams(
                "closed-form kernels exist only for free and harmonic potentials".into(),
            ));
        }
        Ok(AxisKernel {
            params: Params { dim: 1, ..*params },
            potential: potential.clone(),
            duration,
            slices: None,
        })
    }

    /// Exact Gaussian chain with `n` slices over `duration`.
    pub fn chained(params: &Params, potential: &Potential, duration: f64, n: usize) -> Result<Self> {
        params.validate()?;
        potential.validate()?;
        TimeInterval::span(duration)?;
        Ok(AxisKernel {
            params: Params { dim: 1, ..*params },
            potential: potential.clone(),
            duration,
            slices: Some(n),
        })
    }

    fn axis_potential(&self) -> Potential {
        match &self.potential {
            Potential::Polynomial { .. } => Potential::polynomial(
                self.potential
                    .axis_polynomial(self.params.mass)
                    .without_constant()
                    .coefficients()
                    .to_vec(),
            ),
            other => other.clone(),
        }
    }
}

impl SeparableKernel for AxisKernel {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn axis_amp(&self, x_a: f64, x_b: f64) -> Result<Complex64> {
        let iv = TimeInterval::span(self.duration)?;
        let pot = self.axis_potential();
        let k = match (self.slices, &pot) {
            (Some(n), _) => chain_gaussian(&self.params, &pot, n, &[x_a], &[x_b], &iv)?,
            (None, Potential::Harmonic { omega }) => harmonic_kernel(&self.params, *omega, &[x_a], &[x_b], &iv)?,
            (None, _) => free_kernel(&self.params, &[x_a], &[x_b], &iv)?,
        };
        Ok(k.amp)
    }

    fn constant_factor(&self) -> Complex64 {
        let c0 = self.potential.axis_polynomial(self.params.mass).constant();
        Complex64::from_polar(1.0, -c0 * self.duration / self.params.hbar)
    }
}

impl AxisKernel {
    /// `(K(x_a, 0), q, l)` with `K(x_a, y) = K(x_a, 0) exp(i (q y^2 + l y))`;
    /// closed-form kernels only.
    pub fn endpoint_gaussian(&self, x_a: f64) -> Result<(Complex64, f64, f64)> {
        if self.slices.is_some() {
            return Err(Error::InvalidParams("endpoint form needs a closed-form kernel".into()));
        }
        let (m, hbar, tau) = (self.params.mass, self.params.hbar, self.duration);
        let (q, l) = match self.potential {
            Potential::Harmonic { omega } if omega != 0.0 => {
                let (s, c) = (omega * tau).sin_cos();
                if s.abs() < 1e-12 {
                    return Err(Error::Caustic { omega_t: omega * tau });
                }
                let a = m * omega / (2.0 * hbar * s);
                (a * c, -2.0 * a * x_a)
            }
            _ => {
                let a = m / (2.0 * hbar * tau);
                (a, -2.0 * a * x_a)
            }
        };
        Ok((self.axis_amp(x_a, 0.0)?, q, l))
    }
}

/// Composition with the intermediate point integrated out in closed form.
pub fn compose_analytic(
    params: &Params,
    k_ab: &AxisKernel,
    k_bc: &AxisKernel,
    x_a: &[f64],
    x_c: &[f64],
) -> Result<KernelValue> {
    params.validate()?;
    params.check_point(x_a)?;
    params.check_point(x_c)?;
    let mut amp = k_ab.constant_factor() * k_bc.constant_factor();
    for (&a, &c) in x_a.iter().zip(x_c) {
        let (p1, q1, l1) = k_ab.endpoint_gaussian(a)?;
        let (p2, q2, l2) = k_bc.endpoint_gaussian(c)?;
        amp *= p1 * p2 * fresnel_integral(FresnelCoeff::real(q1 + q2, l1 + l2))?;
    }
    Ok(KernelValue::new(amp))
}

/// Oracle spec for composing two kernels of durations `t1` and `t2`.
pub fn compose_spec(params: &Params, t1: f64, t2: f64) -> QuadratureSpec {
    let a = 0.5 * params.mass / params.hbar * (1.0 / t1 + 1.0 / t2);
    QuadratureSpec::for_width(1.0 / a.sqrt())
}

/// `int d^d x_b k_ab(x_a -> x_b) k_bc(x_b -> x_c)`, one damped quadrature per axis.
///
/// On each axis `spec.center` is an offset from the straight-line point at the
/// intermediate time.
pub fn compose<A: SeparableKernel, B: SeparableKernel>(
    params: &Params,
    k_ab: &A,
    k_bc: &B,
    x_a: &[f64],
    x_c: &[f64],
    spec: &QuadratureSpec,
) -> Result<KernelValue> {
    params.validate()?;
    params.check_point(x_a)?;
    params.check_point(x_c)?;
    spec.validate()?;
    let (t1, t2) = (k_ab.duration(), k_bc.duration());
    let mut amp = k_ab.constant_factor() * k_bc.constant_factor();
    for (&a, &c) in x_a.iter().zip(x_c) {
        let mid = a + t1 / (t1 + t2) * (c - a);
        let axis_spec = spec.centered(mid + spec.center);
        let mut failure = None;
        let v = oscillatory_quadrature_extrapolated(
            |y| match (k_ab.axis_amp(a, y), k_bc.axis_amp(y, c)) {
                (Ok(p), Ok(q)) => p * q,
                (Err(e), _) | (_, Err(e)) => {
                    failure.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            &axis_spec,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        amp *= v;
    }
    Ok(KernelValue::new(amp))
}

/// Grid settings for slice-by-slice composition of non-Gaussian potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSliceSpec {
    /// Grid radius in units of `sqrt(hbar T / m)`, added to half the displacement.
    pub radius_factor: f64,
    pub points: usize,
    pub epsilon: f64,
}

impl Default for GridSliceSpec {
    fn default() -> Self {
        GridSliceSpec {
            radius_factor: 30.0,
            points: 8001,
            epsilon: 48.0,
        }
    }
}

impl GridSliceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_factor.is_finite() && self.radius_factor > 0.0) {
            return Err(Error::InvalidParams("radius_factor must be > 0".into()));
        }
        QuadratureSpec::new(1.0, self.points, self.epsilon).map(|_| ())
    }
}

/// N-slice kernel with trapezoid potential sampling.
///
/// Potentials of degree <= 2 use the exact Gaussian chain; higher polynomials
/// are composed slice by slice on a grid with [`GridSliceSpec::default`].
pub fn sliced_kernel(
    params: &Params,
    potential: &Potential,
    fol: &Foliation,
    x_i: &[f64],
    x_f: &[f64],
) -> Result<SlicedResult> {
    sliced_kernel_with(params, potential, fol, x_i, x_f, &GridSliceSpec::default())
}

pub fn sliced_kernel_with(
    params: &Params,
    potential: &Potential,
    fol: &Foliation,
    x_i: &[f64],
    x_f: &[f64],
    grid: &GridSliceSpec,
) -> Result<SlicedResult> {
    params.validate()?;
    potential.validate()?;
    params.check_point(x_i)?;
    params.check_point(x_f)?;
    let iv = fol.interval();
    let n = fol.n_slices();
    let poly = potential.axis_polynomial(params.mass);
    let value = if poly.degree() <= 2 {
        chain_gaussian(params, potential, n, x_i, x_f, iv)?
    } else {
        grid.validate()?;
        let t = iv.duration();
        let mut amp = Complex64::from_polar(1.0, -poly.constant() * t / params.hbar);
        let p = poly.without_constant();
        for (&a, &b) in x_i.iter().zip(x_f) {
            amp *= grid_axis_kernel(params, &p, n, a, b, t, grid)?;
        }
        KernelValue::new(amp)
    };
    let exact = match potential {
        Potential::Free => Some(free_kernel(params, x_i, x_f, iv)?),
        Potential::Harmonic { omega } => harmonic_kernel(params, *omega, x_i, x_f, iv).ok(),
        Potential::Polynomial { .. } => None,
    };
    Ok(SlicedResult {
        value,
        n_slices: n,
        error_vs_exact: exact.map(|e| value.rel_error(&e)),
    })
}

/// Same as [`sliced_kernel`] with an explicit sampling rule; degree <= 2 only.
pub fn sliced_kernel_sampled(
    params: &Params,
    potential: &Potential,
    fol: &Foliation,
    sampling: PotentialSampling,
    x_i: &[f64],
    x_f: &[f64],
) -> Result<SlicedResult> {
    let iv = fol.interval();
    let value = chain_gaussian_with(params, potential, fol.n_slices(), sampling, x_i, x_f, iv)?;
    let exact = match potential {
        Potential::Free => Some(free_kernel(params, x_i, x_f, iv)?),
        Potential::Harmonic { omega } => harmonic_kernel(params, *omega, x_i, x_f, iv).ok(),
        Potential::Polynomial { .. } => None,
    };
    Ok(SlicedResult {
        value,
        n_slices: fol.n_slices(),
        error_vs_exact: exact.map(|e| value.rel_error(&e)),
    })
}

fn grid_axis_kernel(
    params: &Params,
    p: &Polynomial,
    n: usize,
    x_i: f64,
    x_f: f64,
    t: f64,
    grid: &GridSliceSpec,
) -> Result<Complex64> {
    let dt = t / n as f64;
    let hbar = params.hbar;
    let half_phase = |x: f64| Complex64::from_polar(1.0, -0.5 * dt * p.eval(x) / hbar);
    let direct = free_axis_kernel(params, x_i, x_f, dt) * half_phase(x_i) * half_phase(x_f);
    if n == 1 {
        return Ok(direct);
    }
    let m = grid.points;
    let center = 0.5 * (x_i + x_f);
    let radius = grid.radius_factor * (hbar * t / params.mass).sqrt() + 0.5 * (x_f - x_i).abs();
    let h = 2.0 * radius / (m - 1) as f64;
    let ys: Vec<f64> = (0..m).map(|j| center - radius + j as f64 * h).collect();
    let d: Vec<Complex64> = ys.iter().map(|&y| half_phase(y)).collect();
    let weight = |j: usize| if j == 0 || j + 1 == m { 0.5 * h } else { h };
    // free kernel by grid index difference
    let toeplitz: Vec<Complex64> = (0..m)
        .map(|k| free_axis_kernel(params, 0.0, k as f64 * h, dt))
        .collect();
    let first: Vec<Complex64> = ys
        .iter()
        .zip(&d)
        .map(|(&y, &dy)| free_axis_kernel(params, x_i, y, dt) * half_phase(x_i) * dy)
        .collect();
    let last: Vec<Complex64> = ys
        .iter()
        .zip(&d)
        .map(|(&y, &dy)| free_axis_kernel(params, y, x_f, dt) * dy * half_phase(x_f))
        .collect();

    let run = |eps: f64| -> Complex64 {
        let env: Vec<f64> = ys
            .iter()
            .enumerate()
            .map(|(j, &y)| {
                let u = (y - center) / radius;
                weight(j) * (-eps * u * u).exp()
            })
            .collect();
        let mut psi = first.clone();
        let mut u = vec![Complex64::new(0.0, 0.0); m];
        let mut row = vec![Complex64::new(0.0, 0.0); m];
        for _ in 1..n - 1 {
            for j in 0..m {
                u[j] = psi[j] * env[j] * d[j];
            }
            for i in 0..m {
                for j in 0..m {
                    row[j] = toeplitz[i.abs_diff(j)] * u[j];
                }
                psi[i] = d[i] * pairwise_sum(&row);
            }
        }
        let terms: Vec<Complex64> = (0..m).map(|j| psi[j] * env[j] * last[j]).collect();
        pairwise_sum(&terms)
    };
    let e = grid.epsilon;
    if e == 0.0 {
        return Ok(run(0.0));
    }
    Ok(richardson3(run(e), run(0.5 * e), run(0.25 * e)))
}

/// Fitted slope of `ln(error)` against `ln(N)`; second-order slicing gives -2.
pub fn convergence_order(results: &[SlicedResult]) -> Result<f64> {
    let with_error: Vec<&SlicedResult> = results.iter().filter(|r| r.error_vs_exact.is_some()).collect();
    if with_error.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: with_error.len(),
        });
    }
    let ns: Vec<f64> = with_error.iter().map(|r| r.n_slices as f64).collect();
    let errs: Vec<f64> = with_error.iter().filter_map(|r| r.error_vs_exact).collect();
    loglog_slope(&ns, &errs)
}

/// Discretized action of a sampled path `x_0..x_N` (each a d-vector) with
/// the given potential sampling.
pub fn discretized_action(
    params: &Params,
    potential: &Potential,
    sampling: PotentialSampling,
    path: &[Vec<f64>],
    dt: f64,
) -> f64 {
    let poly = potential.axis_polynomial(params.mass);
    let terms: Vec<f64> = path
        .windows(2)
        .map(|w| {
            let sq: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) * (b - a)).sum();
            let pot = match sampling {
                PotentialSampling::Trapezoid => 0.5 * (poly.value_at_point(&w[0]) + poly.value_at_point(&w[1])),
                PotentialSampling::Midpoint => {
                    let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
                    poly.value_at_point(&mid)
                }
            };
            params.mass * sq / (2.0 * dt) - dt * pot
        })
        .collect();
    pairwise_sum_real(&terms)
}

/// Normalization `(m / (2 pi i hbar dt))^(d N / 2)` of the N-slice measure.
pub fn slice_measure(params: &Params, fol: &Foliation) -> Complex64 {
    gaussian_prefactor(params, fol.dt()).powu(fol.n_slices() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> Params {
        Params::unit(1)
    }

    #[test]
    fn foliation_bookkeeping() {
        let iv = TimeInterval::new(0.2, 1.7).unwrap();
        let f = Foliation::new(7, iv).unwrap();
        assert!((f.dt() * 7.0 - 1.5).abs() <= f64::EPSILON * 2.0);
        assert_eq!(f.time(7), 1.7);
        assert!(Foliation::new(0, iv).is_err());
    }

    #[test]
    fn free_and_harmonic_recompose() {
        let p = unit();
        let free = AxisKernel::exact(&p, &Potential::Free, 0.5).unwrap();
        let k = compose(&p, &free, &free, &[0.2], &[0.9], &compose_spec(&p, 0.5, 0.5)).unwrap();
        let e = free_kernel(&p, &[0.2], &[0.9], &TimeInterval::span(1.0).unwrap()).unwrap();
        assert!(k.rel_error(&e) < 1e-3);

        let h = AxisKernel::exact(&p, &Potential::harmonic(1.0), 0.5).unwrap();
        let k = compose(&p, &h, &h, &[0.2], &[0.9], &compose_spec(&p, 0.5, 0.5)).unwrap();
        let e = harmonic_kernel(&p, 1.0, &[0.2], &[0.9], &TimeInterval::span(1.0).unwrap()).unwrap();
        assert!(k.rel_error(&e) < 1e-3);
    }

    #[test]
    fn analytic_composition_is_exact() {
        let p = Params::new(1.3, 0.8, 2).unwrap();
        for (pot, t1, t2) in [(Potential::Free, 0.3, 0.9), (Potential::harmonic(1.1), 0.6, 1.4)] {
            let a = AxisKernel::exact(&p, &pot, t1).unwrap();
            let b = AxisKernel::exact(&p, &pot, t2).unwrap();
            let k = compose_analytic(&p, &a, &b, &[0.2, -0.5], &[0.9, 0.3]).unwrap();
            let e = AxisKernel::exact(&p, &pot, t1 + t2).unwrap();
            let iv = TimeInterval::span(t1 + t2).unwrap();
            let exact = match pot {
                Potential::Free => free_kernel(&p, &[0.2, -0.5], &[0.9, 0.3], &iv).unwrap(),
                _ => harmonic_kernel(&p, 1.1, &[0.2, -0.5], &[0.9, 0.3], &iv).unwrap(),
            };
            assert!(k.rel_error(&exact) < 1e-12, "{}", k.rel_error(&exact));
            assert!(e.endpoint_gaussian(0.0).is_ok());
        }
        let chained = AxisKernel::chained(&p, &Potential::Free, 1.0, 4).unwrap();
        assert!(compose_analytic(&p, &chained, &chained, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn delta_kernel_composition_is_identity() {
        let p = unit();
        let delta = AxisKernel::exact(&p, &Potential::Free, 1e-8).unwrap();
        let one = AxisKernel::exact(&p, &Potential::Free, 1.0).unwrap();
        let k = compose(&p, &delta, &one, &[0.3], &[-0.4], &compose_spec(&p, 1e-8, 1.0)).unwrap();
        let e = free_kernel(&p, &[0.3], &[-0.4], &TimeInterval::span(1.0).unwrap()).unwrap();
        assert!(k.rel_error(&e) < 1e-4);
    }

    #[test]
    fn composition_in_two_dimensions() {
        let p = Params::unit(2);
        let h = AxisKernel::exact(&p, &Potential::harmonic(0.7), 0.4).unwrap();
        let g = AxisKernel::exact(&p, &Potential::harmonic(0.7), 0.8).unwrap();
        let k = compose(&p, &h, &g, &[0.1, -0.3], &[0.5, 0.6], &compose_spec(&p, 0.4, 0.8)).unwrap();
        let iv = TimeInterval::span(1.2).unwrap();
        let e = harmonic_kernel(&p, 0.7, &[0.1, -0.3], &[0.5, 0.6], &iv).unwrap();
        assert!(k.rel_error(&e) < 1e-3);
    }

    #[test]
    fn free_slicing_is_n_independent() {
        let p = Params::unit(2);
        let iv = TimeInterval::span(1.0).unwrap();
        let r = sliced_kernel(
            &p,
            &Potential::Free,
            &Foliation::new(16, iv).unwrap(),
            &[0.0, 1.0],
            &[1.0, 0.5],
        )
        .unwrap();
        assert!(r.error_vs_exact.unwrap() < 1e-12);
    }

    #[test]
    fn harmonic_slicing_order() {
        let p = unit();
        let iv = TimeInterval::span(1.0).unwrap();
        let results: Vec<SlicedResult> = [4, 8, 16, 32]
            .iter()
            .map(|&n| {
                sliced_kernel(
                    &p,
                    &Potential::harmonic(1.0),
                    &Foliation::new(n, iv).unwrap(),
                    &[0.2],
                    &[0.9],
                )
                .unwrap()
            })
            .collect();
        let order = convergence_order(&results).unwrap();
        assert!((order + 2.0).abs() < 0.2, "{order}");
        for w in results.windows(2) {
            let r = w[0].error_vs_exact.unwrap() / w[1].error_vs_exact.unwrap();
            assert!((r - 4.0).abs() < 0.4);
        }
    }

    #[test]
    fn convergence_order_edge_cases() {
        let mk = |n: usize, e: f64| SlicedResult {
            value: KernelValue::new(Complex64::new(1.0, 0.0)),
            n_slices: n,
            error_vs_exact: Some(e),
        };
        let synth: Vec<SlicedResult> = [4usize, 8, 16, 32]
            .iter()
            .map(|&n| mk(n, 5.0 / (n * n) as f64))
            .collect();
        assert!((convergence_order(&synth).unwrap() + 2.0).abs() < 1e-6);
        let flat: Vec<SlicedResult> = [4usize, 8, 16].iter().map(|&n| mk(n, 1e-3)).collect();
        assert!(convergence_order(&flat).unwrap().abs() < 1e-12);
        assert!(matches!(
            convergence_order(&synth[..2]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn semigroup_split_of_chains() {
        let p = unit();
        let pot = Potential::harmonic(1.1);
        let (n1, n2, dt) = (3usize, 5usize, 0.125);
        let whole = chain_gaussian(&p, &pot, n1 + n2, &[0.4], &[-0.3], &TimeInterval::span(1.0).unwrap()).unwrap();
        let a = AxisKernel::chained(&p, &pot, n1 as f64 * dt, n1).unwrap();
        let b = AxisKernel::chained(&p, &pot, n2 as f64 * dt, n2).unwrap();
        let spec = compose_spec(&p, n1 as f64 * dt, n2 as f64 * dt);
        let k = compose(&p, &a, &b, &[0.4], &[-0.3], &spec).unwrap();
        assert!(k.rel_error(&whole) < 1e-4);
    }

    #[test]
    fn constant_potential_normalization() {
        let p = unit();
        let t = 0.7;
        let v0 = 0.9;
        let fol = Foliation::new(6, TimeInterval::span(t).unwrap()).unwrap();
        let pot = Potential::polynomial([v0]);
        let spec = QuadratureSpec::for_width((2.0 * t).sqrt()).centered(0.3);
        let total = oscillatory_quadrature_extrapolated(
            |x| sliced_kernel(&p, &pot, &fol, &[0.3], &[x]).unwrap().value.amp,
            &spec,
        )
        .unwrap();
        let expected = Complex64::from_polar(1.0, -v0 * t);
        assert!((total - expected).norm() < 1e-5);
    }

    #[test]
    fn grid_path_matches_exact_chain_for_quadratic() {
        let p = unit();
        let iv = TimeInterval::span(1.0).unwrap();
        let c = Polynomial::new(vec![0.0, 0.0, 0.5]);
        let grid = GridSliceSpec {
            radius_factor: 20.0,
            points: 4001,
            epsilon: 48.0,
        };
        let g = grid_axis_kernel(&p, &c, 4, 0.2, 0.9, 1.0, &grid).unwrap();
        let e = chain_gaussian(&p, &Potential::harmonic(1.0), 4, &[0.2], &[0.9], &iv).unwrap();
        assert!((g - e.amp).norm() / e.amp.norm() < 1e-3);
    }

    #[test]
    fn sliced_measure_modulus() {
        let p = Params::unit(2);
        let fol = Foliation::new(4, TimeInterval::span(2.0).unwrap()).unwrap();
        let m = slice_measure(&p, &fol);
        assert!((m.norm() - (1.0 / (2.0 * PI * 0.5)).powi(4)).abs() < 1e-12);
    }

    #[test]
    fn discretized_action_sampling_rules() {
        let p = unit();
        let pot = Potential::harmonic(2.0);
        let path = vec![vec![0.0], vec![1.0]];
        let t = discretized_action(&p, &pot, PotentialSampling::Trapezoid, &path, 0.5);
        assert!((t - (1.0 - 0.5 * 0.5 * 2.0 * 1.0)).abs() < 1e-15);
        let m = discretized_action(&p, &pot, PotentialSampling::Midpoint, &path, 0.5);
        assert!((m - (1.0 - 0.5 * 2.0 * 0.25)).abs() < 1e-15);
    }
}
