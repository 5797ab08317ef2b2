//! One-dimensional wavefunction evolution by kernel convolution and by an
//! implicit finite-difference stepper, with Ehrenfest observables.

use std::f64::consts::PI;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{free_axis_kernel, Params, Polynomial, Potential};
use crate::numerics::{loglog_slope, pairwise_sum, pairwise_sum_real, solve_tridiagonal};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniform grid `x_j = x0 + j h`, `j < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub h: f64,
    pub count: usize,
}

impl Grid {
    pub fn new(x0: f64, h: f64, count: usize) -> Result<Self> {
        let g = Grid { x0, h, count };
        g.validate()?;
        Ok(g)
    }

    /// `count` nodes on `[center - half_width, center + half_width]`.
    pub fn centered(center: f64, half_width: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidParams("grid needs >= 2 points".into()));
        }
        Self::new(center - half_width, 2.0 * half_width / (count - 1) as f64, count)
    }

    /// Default grid for a packet of width `sigma0`: 1024 points over `+-10 sigma0`.
    pub fn for_packet(center: f64, sigma0: f64) -> Result<Self> {
        Self::centered(center, 10.0 * sigma0, 1024)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 5 {
            return Err(Error::InvalidParams(format!(
                "grid needs >= 5 points, got {}",
                self.count
            )));
        }
        if !(self.h.is_finite() && self.h > 0.0 && self.x0.is_finite()) {
            return Err(Error::InvalidParams("grid spacing must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.x(j)).collect()
    }

    pub fn length(&self) -> f64 {
        (self.count - 1) as f64 * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub time: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>, time: f64) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.count {
            return Err(Error::InvalidParams(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.count
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite wavefunction value".into()));
        }
        Ok(WaveFunction { grid, values, time })
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: Grid, f: F) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect(), 0.0)
    }

    /// `sum |psi|^2 h`.
    pub fn norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        pairwise_sum_real(&sq) * self.grid.h
    }

    pub fn normalized(mut self) -> Self {
        let s = self.norm().sqrt();
        if s > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= s);
        }
        self
    }

    /// Largest modulus among the two end nodes.
    pub fn edge_amplitude(&self) -> f64 {
        self.values[0].norm().max(self.values[self.grid.count - 1].norm())
    }

    /// `sqrt(sum |a - b|^2 h)`.
    pub fn distance(&self, other: &WaveFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidParams("wavefunctions live on different grids".into()));
        }
        let sq: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .collect();
        Ok((pairwise_sum_real(&sq) * self.grid.h).sqrt())
    }

    /// `sum conj(self) other h`.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        let terms: Vec<Complex64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .collect();
        pairwise_sum(&terms) * self.grid.h
    }
}

/// Normalized packet `(2 pi sigma^2)^(-1/4) exp(-(x - x0)^2 / (4 sigma^2) + i k0 x)`;
/// `|psi|^2` has standard deviation `sigma`.
pub fn gaussian_packet(grid: Grid, x0: f64, sigma: f64, k0: f64) -> Result<WaveFunction> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParams(format!("sigma must be > 0, got {sigma}")));
    }
    let a = (2.0 * PI * sigma * sigma).powf(-0.25);
    WaveFunction::from_fn(grid, |x| {
        let u = x - x0;
        Complex64::from_polar(a * (-u * u / (4.0 * sigma * sigma)).exp(), k0 * x)
    })
}

/// Ground state of `m Omega^2 x^2 / 2` displaced to `x0`.
pub fn coherent_packet(grid: Grid, params: &Params, omega: f64, x0: f64) -> Result<WaveFunction> {
    gaussian_packet(grid, x0, ground_state_sigma(params, omega), 0.0)
}

pub fn ground_state_sigma(params: &Params, omega: f64) -> f64 {
    (params.hbar / (2.0 * params.mass * omega)).sqrt()
}

/// Width of a free Gaussian after time `t`.
pub fn free_gaussian_width(params: &Params, sigma0: f64, t: f64) -> f64 {
    let r = params.hbar * t / (2.0 * params.mass * sigma0 * sigma0);
    sigma0 * (1.0 + r * r).sqrt()
}

fn one_dim(params: &Params) -> Result<()> {
    params.validate()?;
    if params.dim != 1 {
        return Err(Error::InvalidParams("wavefunction evolution is one-dimensional".into()));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    Ok(())
}

/// Kernel step on a grid: `K0(x_j -> x_f; dt) exp(-(i/hbar) V((x_f + x_j)/2) dt)`
/// summed with trapezoid weights. The matrix is built once and reused.
#[derive(Debug, Clone)]
pub struct KernelPropagator {
    grid: Grid,
    dt: f64,
    matrix: Vec<Complex64>,
}

impl KernelPropagator {
    pub fn new(grid: Grid, params: &Params, potential: &Potential, dt: f64) -> Result<Self> {
        one_dim(params)?;
        potential.validate()?;
        check_dt(dt)?;
        check_kernel_resolution(&grid, params, dt)?;
        let poly = potential.axis_polynomial(params.mass);
        let n = grid.count;
        let mut matrix = vec![ZERO; n * n];
        for f in 0..n {
            let xf = grid.x(f);
            for j in 0..n {
                matrix[f * n + j] = kernel_entry(params, &poly, &grid, xf, j, dt);
            }
        }
        Ok(KernelPropagator { grid, dt, matrix })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn apply(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        if psi.grid != self.grid {
            return Err(Error::InvalidParams(
                "wavefunction grid differs from propagator grid".into(),
            ));
        }
        let n = self.grid.count;
        let values = (0..n)
            .map(|f| {
                let row = &self.matrix[f * n..(f + 1) * n];
                row.iter().zip(&psi.values).fold(ZERO, |acc, (k, v)| acc + k * v)
            })
            .collect();
        let out = WaveFunction {
            grid: self.grid,
            values,
            time: psi.time + self.dt,
        };
        debug!("kernel step norm drift {:e}", out.norm() - psi.norm());
        Ok(out)
    }
}

fn kernel_entry(params: &Params, poly: &Polynomial, grid: &Grid, xf: f64, j: usize, dt: f64) -> Complex64 {
    let xj = grid.x(j);
    let w = if j == 0 || j + 1 == grid.count {
        0.5 * grid.h
    } else {
        grid.h
    };
    let v = poly.eval(0.5 * (xf + xj));
    free_axis_kernel(params, xj, xf, dt) * Complex64::from_polar(w, -v * dt / params.hbar)
}

/// Requires `sqrt(hbar dt / m) > 2h`, and `dt >= m h L / (2 pi hbar)` so the
/// first alias of the sampled kernel falls outside the grid of length `L`.
pub fn check_kernel_resolution(grid: &Grid, params: &Params, dt: f64) -> Result<()> {
    let width = (params.hbar * dt / params.mass).sqrt();
    if width <= 2.0 * grid.h {
        return Err(Error::GridResolution(format!(
            "kernel width {width:e} does not exceed twice the spacing {:e}",
            grid.h
        )));
    }
    let alias_time = params.mass * grid.h * grid.length() / (2.0 * PI * params.hbar);
    if dt < alias_time {
        return Err(Error::GridResolution(format!(
            "dt = {dt:e} below alias-free minimum {alias_time:e} for this grid"
        )));
    }
    Ok(())
}

/// One kernel step; the matrix is applied row by row without caching.
pub fn evolve_kernel_step(psi: &WaveFunction, params: &Params, potential: &Potential, dt: f64) -> Result<WaveFunction> {
    one_dim(params)?;
    potential.validate()?;
    check_dt(dt)?;
    let grid = psi.grid;
    check_kernel_resolution(&grid, params, dt)?;
    let poly = potential.axis_polynomial(params.mass);
    let n = grid.count;
    let values = (0..n)
        .map(|f| {
            let xf = grid.x(f);
            (0..n).fold(ZERO, |acc, j| {
                acc + kernel_entry(params, &poly, &grid, xf, j, dt) * psi.values[j]
            })
        })
        .collect();
    let out = WaveFunction {
        grid,
        values,
        time: psi.time + dt,
    };
    debug!("kernel step norm drift {:e}", out.norm() - psi.norm());
    Ok(out)
}

/// Numerov-Crank-Nicolson step with Dirichlet ends:
/// `(B + c (k D + B V)) psi' = (B - c (k D + B V)) psi`, `B = tridiag(1, 10, 1) / 12`,
/// `D` the second difference over `h^2`, `k = -hbar^2 / (2m)`, `c = i dt / (2 hbar)`.
#[derive(Debug, Clone)]
pub struct FdStepper {
    grid: Grid,
    dt: f64,
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    upper: Vec<Complex64>,
    r_lower: Vec<Complex64>,
    r_diag: Vec<Complex64>,
    r_upper: Vec<Complex64>,
}

impl FdStepper {
    pub fn new(grid: Grid, params: &Params, potential: &Potential, dt: f64) -> Result<Self> {
        one_dim(params)?;
        potential.validate()?;
        check_dt(dt)?;
        grid.validate()?;
        let poly = potential.axis_polynomial(params.mass);
        let v: Vec<f64> = grid.points().iter().map(|&x| poly.eval(x)).collect();
        let n = grid.count;
        let k = -params.hbar * params.hbar / (2.0 * params.mass);
        let c = Complex64::new(0.0, dt / (2.0 * params.hbar));
        let kd = k / (grid.h * grid.h);
        let side = |sign: f64| {
            let lower: Vec<Complex64> = (1..n).map(|j| 1.0 / 12.0 + sign * c * (kd + v[j - 1] / 12.0)).collect();
            let diag: Vec<Complex64> = (0..n)
                .map(|j| 10.0 / 12.0 + sign * c * (-2.0 * kd + 10.0 * v[j] / 12.0))
                .collect();
            let upper: Vec<Complex64> = (0..n - 1)
                .map(|j| 1.0 / 12.0 + sign * c * (kd + v[j + 1] / 12.0))
                .collect();
            (lower, diag, upper)
        };
        let (lower, diag, upper) = side(1.0);
        let (r_lower, r_diag, r_upper) = side(-1.0);
        Ok(FdStepper {
            grid,
            dt,
            lower,
            diag,
            upper,
            r_lower,
            r_diag,
            r_upper,
        })
    }

    pub fn step(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        if psi.grid != self.grid {
            return Err(Error::InvalidParams(
                "wavefunction grid differs from stepper grid".into(),
            ));
        }
        let n = self.grid.count;
        let p = &psi.values;
        let rhs: Vec<Complex64> = (0..n)
            .map(|j| {
                let mut r = self.r_diag[j] * p[j];
                if j > 0 {
                    r += self.r_lower[j - 1] * p[j - 1];
                }
                if j + 1 < n {
                    r += self.r_upper[j] * p[j + 1];
                }
                r
            })
            .collect();
        let values = solve_tridiagonal(&self.lower, &self.diag, &self.upper, &rhs)?;
        Ok(WaveFunction {
            grid: self.grid,
            values,
            time: psi.time + self.dt,
        })
    }
}

pub fn evolve_fd_step(psi: &WaveFunction, params: &Params, potential: &Potential, dt: f64) -> Result<WaveFunction> {
    FdStepper::new(psi.grid, params, potential, dt)?.step(psi)
}

/// Fitted order of `||kernel_step - fd_step||` against `dt`, from one step of each.
pub fn consistency_order(psi0: &WaveFunction, params: &Params, potential: &Potential, dt_list: &[f64]) -> Result<f64> {
    Ok(consistency_differences(psi0, params, potential, dt_list)?.1)
}

/// Per-step differences and their fitted order.
pub fn consistency_differences(
    psi0: &WaveFunction,
    params: &Params,
    potential: &Potential,
    dt_list: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if dt_list.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: dt_list.len(),
        });
    }
    let diffs = dt_list
        .iter()
        .map(|&dt| {
            let a = evolve_kernel_step(psi0, params, potential, dt)?;
            let b = evolve_fd_step(psi0, params, potential, dt)?;
            a.distance(&b)
        })
        .collect::<Result<Vec<f64>>>()?;
    let order = loglog_slope(dt_list, &diffs)?;
    Ok((diffs, order))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub time: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub mean_grad_v: f64,
    pub norm: f64,
}

/// Eighth-order centred first-derivative weights for offsets `1..=4`.
const D8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
const D6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
const D4: [f64; 2] = [2.0 / 3.0, -1.0 / 12.0];
const D2: [f64; 1] = [0.5];

/// First derivative: eighth-order centred inside, lower orders near the
/// edges and a one-sided difference on the end nodes.
pub fn derivative(values: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = values.len();
    (0..n)
        .map(|j| {
            let reach = j.min(n - 1 - j);
            let w: &[f64] = match reach {
                0 => {
                    return if j == 0 {
                        (values[1] - values[0]) / h
                    } else {
                        (values[n - 1] - values[n - 2]) / h
                    }
                }
                1 => &D2,
                2 => &D4,
                3 => &D6,
                _ => &D8,
            };
            w.iter()
                .enumerate()
                .fold(ZERO, |acc, (o, &c)| acc + c * (values[j + o + 1] - values[j - o - 1]))
                / h
        })
        .collect()
}

/// Expectation values normalized by the current norm; the norm itself is reported.
pub fn observables(psi: &WaveFunction, params: &Params, potential: &Potential) -> Observables {
    let grid = psi.grid;
    let poly = potential.axis_polynomial(params.mass);
    let dv = poly.derivative();
    let norm = psi.norm();
    let h = grid.h;
    let dens: Vec<f64> = psi.values.iter().map(|v| v.norm_sqr()).collect();
    let xs: Vec<f64> = dens.iter().enumerate().map(|(j, d)| grid.x(j) * d).collect();
    let gv: Vec<f64> = dens.iter().enumerate().map(|(j, d)| dv.eval(grid.x(j)) * d).collect();
    let dpsi = derivative(&psi.values, h);
    let p: Vec<f64> = psi
        .values
        .iter()
        .zip(&dpsi)
        .map(|(v, d)| (v.conj() * Complex64::new(0.0, -params.hbar) * d).re)
        .collect();
    Observables {
        time: psi.time,
        mean_x: pairwise_sum_real(&xs) * h / norm,
        mean_p: pairwise_sum_real(&p) * h / norm,
        mean_grad_v: pairwise_sum_real(&gv) * h / norm,
        norm,
    }
}

/// `max_j |m (x_{j+1} - 2 x_j + x_{j-1}) / dt^2 + <V'>_j|` over interior samples.
pub fn ehrenfest_residual(history: &[Observables], params: &Params) -> Result<f64> {
    let dt = uniform_step(history)?;
    Ok(history
        .windows(3)
        .map(|w| (params.mass * (w[2].mean_x - 2.0 * w[1].mean_x + w[0].mean_x) / (dt * dt) + w[1].mean_grad_v).abs())
        .fold(0.0, f64::max))
}

/// `max_j |(x_{j+1} - x_{j-1}) / (2 dt) - <p>_j / m|` over interior samples.
pub fn velocity_residual(history: &[Observables], params: &Params) -> Result<f64> {
    let dt = uniform_step(history)?;
    Ok(history
        .windows(3)
        .map(|w| ((w[2].mean_x - w[0].mean_x) / (2.0 * dt) - w[1].mean_p / params.mass).abs())
        .fold(0.0, f64::max))
}

fn uniform_step(history: &[Observables]) -> Result<f64> {
    if history.len() < 5 {
        return Err(Error::InsufficientData {
            needed: 5,
            got: history.len(),
        });
    }
    let dt = history[1].time - history[0].time;
    let uniform = history
        .windows(2)
        .all(|w| ((w[1].time - w[0].time) - dt).abs() <= 1e-9 * dt.abs().max(1e-300));
    if dt.is_nan() || dt <= 0.0 || !uniform {
        return Err(Error::InvalidParams("history is not uniformly sampled".into()));
    }
    Ok(dt)
}

/// Time stepper used for a recorded run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stepper {
    Kernel,
    Fd,
}

/// Evolves for `records` intervals of `record_dt`, each split into `substeps`
/// equal steps, and returns the final state and the observables at every record.
pub fn evolve_history(
    psi0: &WaveFunction,
    params: &Params,
    potential: &Potential,
    stepper: Stepper,
    record_dt: f64,
    records: usize,
    substeps: usize,
) -> Result<(WaveFunction, Vec<Observables>)> {
    if substeps == 0 {
        return Err(Error::InvalidParams("substeps must be >= 1".into()));
    }
    let dt = record_dt / substeps as f64;
    let mut history = vec![observables(psi0, params, potential)];
    let mut psi = psi0.clone();
    let start = psi0.time;
    match stepper {
        Stepper::Kernel => {
            let prop = KernelPropagator::new(psi0.grid, params, potential, dt)?;
            for r in 1..=records {
                for _ in 0..substeps {
                    psi = prop.apply(&psi)?;
                }
                psi.time = start + r as f64 * record_dt;
                history.push(observables(&psi, params, potential));
            }
        }
        Stepper::Fd => {
            let fd = FdStepper::new(psi0.grid, params, potential, dt)?;
            for r in 1..=records {
                for _ in 0..substeps {
                    psi = fd.step(&psi)?;
                }
                psi.time = start + r as f64 * record_dt;
                history.push(observables(&psi, params, potential));
            }
        }
    }
    Ok((psi, history))
}

/// Position variance `<x^2> - <x>^2` of the normalized density.
pub fn position_variance(psi: &WaveFunction) -> f64 {
    let norm = psi.norm();
    let h = psi.grid.h;
    let dens: Vec<f64> = psi.values.iter().map(|v| v.norm_sqr()).collect();
    let m1: Vec<f64> = dens.iter().enumerate().map(|(j, d)| psi.grid.x(j) * d).collect();
    let m2: Vec<f64> = dens
        .iter()
        .enumerate()
        .map(|(j, d)| psi.grid.x(j).powi(2) * d)
        .collect();
    let mean = pairwise_sum_real(&m1) * h / norm;
    pairwise_sum_real(&m2) * h / norm - mean * mean
}

/// Classical map of the midpoint kernel for a harmonic well: rotation by
/// `theta` with `tan(theta / 2) = Omega dt / 2`.
pub fn midpoint_kernel_angle(omega: f64, dt: f64) -> f64 {
    2.0 * (0.5 * omega * dt).atan()
}
