//! Batch front end: one experiment per invocation, emitted as CSV or JSON records.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::checks;
use crate::detgreen::{
    det_ratio_exact, det_ratio_product, discrete_det_ratio, discrete_fluctuation_check, green_operator_residual,
};
use crate::error::{Error, Result};
use crate::evolution::{
    coherent_packet, ehrenfest_residual, evolve_history, gaussian_packet, ground_state_sigma, velocity_residual, Grid,
    Stepper,
};
use crate::kicks::{eqq_kernel, kick_jacobian, measure_normalization, KickIntegration};
use crate::model::{free_kernel, harmonic_kernel, KernelValue, Params, Potential, TimeInterval};
use crate::numerics::QuadratureSpec;
use crate::perturbation::{born_series, fs_gamma_form, fs_position_form, fs_prefactor, BornOptions, InnerRule};
use crate::sliced::{compose, compose_analytic, compose_spec, sliced_kernel, AxisKernel, Foliation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Kernel,
    Compose,
    EqqVerify,
    MeasureNorm,
    Det,
    Green,
    Perturb,
    Evolve,
    Ehrenfest,
    AllChecks,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Compose => "compose",
            Command::EqqVerify => "eqq-verify",
            Command::MeasureNorm => "measure-norm",
            Command::Det => "det",
            Command::Green => "green",
            Command::Perturb => "perturb",
            Command::Evolve => "evolve",
            Command::Ehrenfest => "ehrenfest",
            Command::AllChecks => "all-checks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KickMethod {
    Analytic,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center: f64,
    pub half_width: f64,
    pub points: usize,
}

/// Initial Gaussian packet; `sigma` defaults to the ground-state width for a
/// harmonic potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub x0: f64,
    pub sigma: Option<f64>,
    #[serde(default)]
    pub k0: f64,
}

/// One experiment. Knobs not used by `command` are ignored; missing ones take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub params: Option<Params>,
    pub potential: Option<Potential>,
    pub x_i: Option<Vec<f64>>,
    pub x_f: Option<Vec<f64>>,
    pub duration: Option<f64>,
    /// Number of time slices.
    pub slices: Option<usize>,
    /// Fraction of the duration covered by the first kernel in `compose`.
    pub split: Option<f64>,
    pub level: Option<usize>,
    pub n_max: Option<usize>,
    /// Interior points of the discrete fluctuation operator.
    pub m: Option<usize>,
    pub omega_t: Option<f64>,
    pub omega: Option<f64>,
    /// Slice time for the single-insertion integral.
    pub s: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub substeps: Option<usize>,
    pub grid: Option<GridConfig>,
    pub packet: Option<PacketConfig>,
    pub stepper: Option<Stepper>,
    pub points: Option<usize>,
    pub source_index: Option<usize>,
    pub spec: Option<QuadratureSpec>,
    pub method: Option<KickMethod>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            params: None,
            potential: None,
            x_i: None,
            x_f: None,
            duration: None,
            slices: None,
            split: None,
            level: None,
            n_max: None,
            m: None,
            omega_t: None,
            omega: None,
            s: None,
            dt: None,
            steps: None,
            substeps: None,
            grid: None,
            packet: None,
            stepper: None,
            points: None,
            source_index: None,
            spec: None,
            method: None,
            output: None,
            format: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("config: {e}")))
    }

    fn params(&self) -> Result<Params> {
        let p = self.params.unwrap_or(Params::unit(1));
        p.validate()?;
        Ok(p)
    }

    fn potential(&self) -> Result<Potential> {
        let v = self.potential.clone().unwrap_or(Potential::Free);
        v.validate()?;
        Ok(v)
    }

    fn endpoints(&self, p: &Params) -> Result<(Vec<f64>, Vec<f64>)> {
        let x_i = self.x_i.clone().unwrap_or_else(|| vec![0.0; p.dim]);
        let x_f = self.x_f.clone().unwrap_or_else(|| vec![0.5; p.dim]);
        p.check_point(&x_i)?;
        p.check_point(&x_f)?;
        Ok((x_i, x_f))
    }

    fn interval(&self) -> Result<TimeInterval> {
        TimeInterval::span(self.duration.unwrap_or(1.0))
    }
}

fn in_range(name: &str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if v < lo || v > hi {
        return Err(Error::InvalidParams(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

/// One output cell; complex values expand to `name_re`, `name_im`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Complex(Complex64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Complex64> for Cell {
    fn from(v: Complex64) -> Self {
        Cell::Complex(v)
    }
}

impl From<KernelValue> for Cell {
    fn from(v: KernelValue) -> Self {
        Cell::Complex(v.amp)
    }
}

impl From<&[f64]> for Cell {
    fn from(v: &[f64]) -> Self {
        Cell::Text(v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub experiment: String,
    pub inputs: BTreeMap<String, Cell>,
    pub outputs: BTreeMap<String, Cell>,
}

impl OutputRecord {
    pub fn new(experiment: &str) -> Self {
        OutputRecord {
            experiment: experiment.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, name: &str, v: impl Into<Cell>) -> Self {
        self.inputs.insert(name.to_string(), v.into());
        self
    }

    pub fn output(mut self, name: &str, v: impl Into<Cell>) -> Self {
        self.outputs.insert(name.to_string(), v.into());
        self
    }

    /// Flat columns: experiment, inputs, outputs, each group in key order.
    pub fn columns(&self) -> Vec<(String, Cell)> {
        let mut cols = vec![("experiment".to_string(), Cell::Text(self.experiment.clone()))];
        for (k, v) in self.inputs.iter().chain(&self.outputs) {
            match v {
                Cell::Complex(z) => {
                    cols.push((format!("{k}_re"), Cell::Real(z.re)));
                    cols.push((format!("{k}_im"), Cell::Real(z.im)));
                }
                other => cols.push((k.clone(), other.clone())),
            }
        }
        cols
    }
}

fn csv_field(c: &Cell) -> String {
    match c {
        Cell::Real(v) => format!("{v:e}"),
        Cell::Int(v) => v.to_string(),
        Cell::Bool(v) => v.to_string(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
        Cell::Complex(_) => unreachable!("complex cells are expanded by columns()"),
    }
}

fn json_value(c: &Cell) -> serde_json::Value {
    match c {
        Cell::Real(v) => serde_json::Number::from_f64(*v)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Cell::Int(v) => (*v).into(),
        Cell::Bool(v) => (*v).into(),
        Cell::Text(s) => s.clone().into(),
        Cell::Complex(_) => unreachable!("complex cells are expanded by columns()"),
    }
}

/// CSV with the header taken from the first record; every record must share it.
pub fn render_csv(records: &[OutputRecord]) -> Result<String> {
    let mut out = String::new();
    let Some(first) = records.first() else {
        return Ok(out);
    };
    let header: Vec<String> = first.columns().into_iter().map(|(k, _)| k).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in records {
        let cols = r.columns();
        if cols.len() != header.len() || cols.iter().zip(&header).any(|((k, _), h)| k != h) {
            return Err(Error::InvalidParams("records do not share one column set".into()));
        }
        let row: Vec<String> = cols.iter().map(|(_, c)| csv_field(c)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}

/// JSON array of flat objects with the CSV columns.
pub fn render_json(records: &[OutputRecord]) -> String {
    let arr: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            let obj: serde_json::Map<String, serde_json::Value> =
                r.columns().iter().map(|(k, c)| (k.clone(), json_value(c))).collect();
            serde_json::Value::Object(obj)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&arr).unwrap_or_default();
    s.push('\n');
    s
}

/// Records of one run and whether every embedded check passed.
pub struct RunOutput {
    pub records: Vec<OutputRecord>,
    pub all_passed: bool,
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    info!("running {}", config.command.name());
    let mut all_passed = true;
    let records = match config.command {
        Command::Kernel => kernel(config)?,
        Command::Compose => compose_cmd(config)?,
        Command::EqqVerify => eqq_verify(config)?,
        Command::MeasureNorm => measure_norm(config)?,
        Command::Det => det(config)?,
        Command::Green => green(config)?,
        Command::Perturb => perturb(config)?,
        Command::Evolve => evolve(config)?,
        Command::Ehrenfest => ehrenfest(config)?,
        Command::AllChecks => {
            let (records, passed) = all_checks();
            all_passed = passed;
            records
        }
    };
    Ok(RunOutput { records, all_passed })
}

fn with_common(r: OutputRecord, p: &Params, pot: &Potential) -> OutputRecord {
    let (kind, coeffs) = match pot {
        Potential::Free => ("free", Vec::new()),
        Potential::Harmonic { omega } => ("harmonic", vec![*omega]),
        Potential::Polynomial { coefficients } => ("polynomial", coefficients.clone()),
    };
    r.input("dim", p.dim)
        .input("hbar", p.hbar)
        .input("mass", p.mass)
        .input("potential", kind)
        .input("potential_params", coeffs.as_slice())
}

fn closed_form(
    p: &Params,
    pot: &Potential,
    x_i: &[f64],
    x_f: &[f64],
    iv: &TimeInterval,
) -> Result<Option<KernelValue>> {
    Ok(match pot {
        Potential::Free => Some(free_kernel(p, x_i, x_f, iv)?),
        Potential::Harmonic { omega } => Some(harmonic_kernel(p, *omega, x_i, x_f, iv)?),
        Potential::Polynomial { .. } => None,
    })
}

fn kernel(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let pot = c.potential()?;
    let (x_i, x_f) = c.endpoints(&p)?;
    let iv = c.interval()?;
    let rec = with_common(OutputRecord::new("kernel"), &p, &pot)
        .input("duration", iv.duration())
        .input("x_f", x_f.as_slice())
        .input("x_i", x_i.as_slice());
    match c.slices {
        Some(n) => {
            let n = in_range("slices", n, 1, 4096)?;
            let r = sliced_kernel(&p, &pot, &Foliation::new(n, iv)?, &x_i, &x_f)?;
            Ok(vec![rec
                .input("slices", n)
                .output("kernel", r.value)
                .output("rel_error", r.error_vs_exact.unwrap_or(f64::NAN))])
        }
        None => {
            let k = closed_form(&p, &pot, &x_i, &x_f, &iv)?
                .ok_or_else(|| Error::InvalidParams("polynomial potentials need `slices`".into()))?;
            Ok(vec![rec
                .input("slices", 0usize)
                .output("kernel", k)
                .output("rel_error", 0.0)])
        }
    }
}

fn compose_cmd(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let pot = c.potential()?;
    let (x_i, x_f) = c.endpoints(&p)?;
    let iv = c.interval()?;
    let split = c.split.unwrap_or(0.5);
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidParams(format!("split must lie in (0, 1), got {split}")));
    }
    let (t1, t2) = (split * iv.duration(), (1.0 - split) * iv.duration());
    let a = AxisKernel::exact(&p, &pot, t1)?;
    let b = AxisKernel::exact(&p, &pot, t2)?;
    let spec = c.spec.unwrap_or_else(|| compose_spec(&p, t1, t2));
    let analytic = compose_analytic(&p, &a, &b, &x_i, &x_f)?;
    let quad = compose(&p, &a, &b, &x_i, &x_f, &spec)?;
    let exact = closed_form(&p, &pot, &x_i, &x_f, &iv)?
        .ok_or_else(|| Error::InvalidParams("compose needs a free or harmonic potential".into()))?;
    Ok(vec![with_common(OutputRecord::new("compose"), &p, &pot)
        .input("duration", iv.duration())
        .input("split", split)
        .input("x_f", x_f.as_slice())
        .input("x_i", x_i.as_slice())
        .output("analytic", analytic)
        .output("analytic_rel_error", analytic.rel_error(&exact))
        .output("exact", exact)
        .output("quadrature", quad)
        .output("quadrature_rel_error", quad.rel_error(&exact))])
}

fn kick_method(c: &RunConfig) -> KickIntegration {
    match (c.method, c.spec) {
        (Some(KickMethod::Analytic), _) => KickIntegration::Analytic,
        (_, Some(s)) => KickIntegration::BruteForce {
            points: s.points,
            epsilon: s.epsilon,
            half_width_factor: s.half_width,
        },
        _ => KickIntegration::brute_force_default(),
    }
}

fn eqq_verify(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let (x_i, x_f) = c.endpoints(&p)?;
    let iv = c.interval()?;
    let level = in_range("level", c.level.unwrap_or(2), 1, 8)?;
    let norm = measure_normalization(&p, level, iv.duration())?;
    let exact = free_kernel(&p, &x_i, &x_f, &iv)?;
    let analytic = eqq_kernel(&p, &x_i, &x_f, &iv, level, KickIntegration::Analytic)?;
    let method = kick_method(c);
    let mut rec = with_common(OutputRecord::new("eqq-verify"), &p, &Potential::Free)
        .input("duration", iv.duration())
        .input("level", level)
        .input("x_f", x_f.as_slice())
        .input("x_i", x_i.as_slice())
        .output("c_measured", norm.c_measured)
        .output("c_paper", norm.c_paper)
        .output("ratio", norm.ratio())
        .output("eqq_kernel", analytic)
        .output("free_kernel", exact)
        .output("rel_error", analytic.rel_error(&exact));
    if method != KickIntegration::Analytic {
        let brute = eqq_kernel(&p, &x_i, &x_f, &iv, level, method)?;
        rec = rec.output("brute_force_rel_error", brute.rel_error(&exact));
    } else {
        rec = rec.output("brute_force_rel_error", f64::NAN);
    }
    Ok(vec![rec])
}

fn measure_norm(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let t = c.interval()?.duration();
    let top = in_range("level", c.level.unwrap_or(3), 1, 8)?;
    (1..=top)
        .map(|level| {
            let n = measure_normalization(&p, level, t)?;
            Ok(with_common(OutputRecord::new("measure-norm"), &p, &Potential::Free)
                .input("duration", t)
                .input("level", level)
                .output("c_measured", n.c_measured)
                .output("c_paper", n.c_paper)
                .output("jacobian", kick_jacobian(p.dim, level, t)?)
                .output("ratio", n.ratio()))
        })
        .collect()
}

fn det(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let omega_t = c
        .omega_t
        .ok_or_else(|| Error::InvalidParams("det needs omega_t".into()))?;
    let n_max = in_range("n_max", c.n_max.unwrap_or(10_000), 1, 100_000_000)?;
    let exact = det_ratio_exact(omega_t, 1)?;
    let value = det_ratio_product(omega_t, n_max)?;
    let mut rec = OutputRecord::new("det")
        .input("n_max", n_max)
        .input("omega_t", omega_t)
        .output("abs_error", (value - exact.value).abs())
        .output("exact", exact.value)
        .output("value", value);
    if let Some(m) = c.m {
        let m = in_range("m", m, 1, 10_000_000)?;
        rec = rec
            .input("m", m)
            .output("discrete", discrete_det_ratio(omega_t, 1.0, m)?);
    }
    Ok(vec![rec])
}

fn green(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let iv = c.interval()?;
    let omega = c.omega.unwrap_or(1.0);
    let points = in_range("points", c.points.unwrap_or(2001), 5, 1_000_000)?;
    let source = c.source_index.unwrap_or(points / 2);
    let residual = green_operator_residual(&iv, p.mass, omega, points, source)?;
    let free_residual = green_operator_residual(&iv, p.mass, 0.0, points, source)?;
    let m = in_range("m", c.m.unwrap_or(64), 3, 4096)?;
    let fl = discrete_fluctuation_check(&p, omega, iv.duration(), m)?;
    Ok(vec![OutputRecord::new("green")
        .input("duration", iv.duration())
        .input("hbar", p.hbar)
        .input("m", m)
        .input("mass", p.mass)
        .input("omega", omega)
        .input("points", points)
        .input("source_index", source)
        .output("det_ratio_discrete", fl.det_ratio_discrete)
        .output("free_residual", free_residual)
        .output("gaussian_ratio", fl.gaussian_ratio)
        .output("harmonic_residual", residual)
        .output(
            "identity_deviation",
            (fl.gaussian_ratio * fl.det_ratio_discrete.sqrt() - 1.0).abs(),
        )])
}

fn perturb(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let pot = c.potential()?;
    let (x_i, x_f) = c.endpoints(&p)?;
    let iv = c.interval()?;
    let t = iv.duration();
    let s = c.s.unwrap_or(0.5 * t);
    let [k0, k1, k2] = born_series(&p, &pot, &x_i, &x_f, &iv, &BornOptions::default())?;
    let pre = fs_prefactor(&p, s, t)?;
    let rule = InnerRule::contour_default();
    let fx = fs_position_form(&p, &pot, s, &iv, &x_i, &x_f, rule)?;
    let fg = fs_gamma_form(&p, &pot, s, &iv, &x_i, &x_f, rule)?;
    let (r1, r2) = match closed_form(&p, &pot, &x_i, &x_f, &iv) {
        Ok(Some(k)) => (
            (k.amp - k0.value - k1.value).norm(),
            (k.amp - k0.value - k1.value - k2.value).norm(),
        ),
        _ => (f64::NAN, f64::NAN),
    };
    Ok(vec![with_common(OutputRecord::new("perturb"), &p, &pot)
        .input("duration", t)
        .input("s", s)
        .input("x_f", x_f.as_slice())
        .input("x_i", x_i.as_slice())
        .output("fs_forms_rel_difference", (fx - fg).norm() / fx.norm())
        .output("fs_position", fx)
        .output("k0", k0.value)
        .output("k1", k1.value)
        .output("k2", k2.value)
        .output("prefactor_composed", pre.composed)
        .output("prefactor_printed", pre.printed)
        .output("prefactor_ratio", pre.modulus_ratio())
        .output("residual_first", r1)
        .output("residual_second", r2)])
}

fn initial_state(
    c: &RunConfig,
    p: &Params,
    pot: &Potential,
) -> Result<(crate::evolution::WaveFunction, PacketConfig, GridConfig)> {
    let packet = c.packet.unwrap_or(PacketConfig {
        x0: 1.0,
        sigma: None,
        k0: 0.0,
    });
    let sigma = match (packet.sigma, pot) {
        (Some(s), _) => s,
        (None, Potential::Harmonic { omega }) => ground_state_sigma(p, *omega),
        (None, _) => 1.0,
    };
    let grid_cfg = c.grid.unwrap_or(GridConfig {
        center: packet.x0,
        half_width: 10.0 * sigma + packet.x0.abs(),
        points: 1024,
    });
    in_range("grid.points", grid_cfg.points, 5, 20_000)?;
    let grid = Grid::centered(grid_cfg.center, grid_cfg.half_width, grid_cfg.points)?;
    let psi = match (packet.sigma, pot) {
        (None, Potential::Harmonic { omega }) => coherent_packet(grid, p, *omega, packet.x0)?,
        _ => gaussian_packet(grid, packet.x0, sigma, packet.k0)?,
    };
    Ok((
        psi,
        PacketConfig {
            sigma: Some(sigma),
            ..packet
        },
        grid_cfg,
    ))
}

fn evolve(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let pot = c.potential()?;
    let (psi, packet, g) = initial_state(c, &p, &pot)?;
    let dt = c.dt.unwrap_or(0.01);
    let steps = in_range("steps", c.steps.unwrap_or(100), 1, 1_000_000)?;
    let substeps = in_range("substeps", c.substeps.unwrap_or(1), 1, 10_000)?;
    let stepper = c.stepper.unwrap_or(Stepper::Fd);
    let (_, hist) = evolve_history(&psi, &p, &pot, stepper, dt, steps, substeps)?;
    let stepper_name = match stepper {
        Stepper::Fd => "fd",
        Stepper::Kernel => "kernel",
    };
    Ok(hist
        .iter()
        .map(|o| {
            with_common(OutputRecord::new("evolve"), &p, &pot)
                .input("dt", dt)
                .input("grid_points", g.points)
                .input("k0", packet.k0)
                .input("sigma", packet.sigma.unwrap_or(f64::NAN))
                .input("stepper", stepper_name)
                .input("substeps", substeps)
                .input("x0", packet.x0)
                .output("mean_grad_v", o.mean_grad_v)
                .output("mean_p", o.mean_p)
                .output("mean_x", o.mean_x)
                .output("norm", o.norm)
                .output("time", o.time)
        })
        .collect())
}

fn ehrenfest(c: &RunConfig) -> Result<Vec<OutputRecord>> {
    let p = c.params()?;
    let pot = c.potential.clone().unwrap_or(Potential::harmonic(1.0));
    pot.validate()?;
    let (psi, packet, g) = initial_state(c, &p, &pot)?;
    let omega = match pot {
        Potential::Harmonic { omega } => omega,
        _ => 1.0,
    };
    let dt = c.dt.unwrap_or(2.0 * std::f64::consts::PI / (256.0 * omega));
    let steps = in_range("steps", c.steps.unwrap_or(256), 5, 1_000_000)?;
    let substeps = in_range("substeps", c.substeps.unwrap_or(8), 1, 10_000)?;
    let (_, a) = evolve_history(&psi, &p, &pot, Stepper::Fd, dt, steps, substeps)?;
    let (_, b) = evolve_history(&psi, &p, &pot, Stepper::Fd, 0.5 * dt, 2 * steps, substeps)?;
    let ra = ehrenfest_residual(&a, &p)?;
    let rb = ehrenfest_residual(&b, &p)?;
    Ok(vec![with_common(OutputRecord::new("ehrenfest"), &p, &pot)
        .input("dt", dt)
        .input("grid_points", g.points)
        .input("steps", steps)
        .input("substeps", substeps)
        .input("x0", packet.x0)
        .output("halving_ratio", ra / rb)
        .output("residual", ra)
        .output("residual_half_dt", rb)
        .output("scaled_residual", ra / (p.mass * omega * omega * packet.x0.abs()))
        .output("velocity_residual", velocity_residual(&a, &p)?)])
}

fn all_checks() -> (Vec<OutputRecord>, bool) {
    let reports = checks::run_all();
    let mut records = Vec::new();
    for r in &reports {
        eprintln!("{}", r.summary_line());
        let base = OutputRecord::new("all-checks")
            .input("check_id", r.id)
            .input("title", r.title);
        if let Some(e) = &r.error {
            records.push(
                base.clone()
                    .input("metric", "error")
                    .output("limit", e.as_str())
                    .output("passed", false)
                    .output("value", f64::NAN),
            );
        }
        for m in &r.metrics {
            records.push(
                base.clone()
                    .input("metric", m.name.as_str())
                    .output("limit", m.limit.as_str())
                    .output("passed", m.passed)
                    .output("value", m.value),
            );
        }
    }
    (records, reports.iter().all(|r| r.passed()))
}

#[derive(Debug, Parser)]
#[command(name = "eqq", version, about = "Propagator experiments and self-checks")]
pub struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Closed-form or sliced kernel.
    Kernel(Knobs),
    /// Two-kernel composition, analytic and by quadrature.
    Compose(Knobs),
    /// Kick-variable kernel against the free kernel.
    EqqVerify(Knobs),
    /// Kick-measure normalization per level.
    MeasureNorm(Knobs),
    /// Truncated determinant-ratio product.
    Det(Knobs),
    /// Green's function residuals and the finite-M fluctuation identity.
    Green(Knobs),
    /// Born terms and the single-insertion integral.
    Perturb(Knobs),
    /// Wavefunction evolution; one record per recorded time.
    Evolve(Knobs),
    /// Ehrenfest residual and its dt-halving ratio.
    Ehrenfest(Knobs),
    /// Every acceptance check; exits 1 if any fails.
    AllChecks(Knobs),
    /// Run a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Knobs {
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// free, harmonic (uses --omega) or polynomial (uses --coefficients).
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub coefficients: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x_i: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x_f: Option<Vec<f64>>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_t: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k0: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub stepper: Option<String>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub source_index: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<KickMethod>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Knobs {
    pub fn into_config(self, command: Command) -> Result<RunConfig> {
        let params = match (self.mass, self.hbar, self.dim) {
            (None, None, None) => None,
            (m, h, d) => Some(Params::new(m.unwrap_or(1.0), h.unwrap_or(1.0), d.unwrap_or(1))?),
        };
        let potential = match self.potential.as_deref() {
            None => None,
            Some("free") => Some(Potential::Free),
            Some("harmonic") => {
                Some(Potential::harmonic(self.omega.ok_or_else(|| {
                    Error::InvalidParams("harmonic potential needs --omega".into())
                })?))
            }
            Some("polynomial") => {
                Some(Potential::polynomial(self.coefficients.clone().ok_or_else(|| {
                    Error::InvalidParams("polynomial potential needs --coefficients".into())
                })?))
            }
            Some(other) => return Err(Error::InvalidParams(format!("unknown potential `{other}`"))),
        };
        let stepper = match self.stepper.as_deref() {
            None => None,
            Some("fd") => Some(Stepper::Fd),
            Some("kernel") => Some(Stepper::Kernel),
            Some(other) => return Err(Error::InvalidParams(format!("unknown stepper `{other}`"))),
        };
        let packet = match (self.x0, self.sigma, self.k0) {
            (None, None, None) => None,
            (x0, sigma, k0) => Some(PacketConfig {
                x0: x0.unwrap_or(1.0),
                sigma,
                k0: k0.unwrap_or(0.0),
            }),
        };
        let grid = match (self.grid_points, self.half_width) {
            (None, None) => None,
            (pts, hw) => Some(GridConfig {
                center: 0.0,
                half_width: hw.unwrap_or(10.0),
                points: pts.unwrap_or(1024),
            }),
        };
        Ok(RunConfig {
            params,
            potential,
            x_i: self.x_i,
            x_f: self.x_f,
            duration: self.duration,
            slices: self.slices,
            split: self.split,
            level: self.level,
            n_max: self.n_max,
            m: self.m,
            omega_t: self.omega_t,
            omega: self.omega,
            s: self.s,
            dt: self.dt,
            steps: self.steps,
            substeps: self.substeps,
            grid,
            packet,
            stepper,
            points: self.points,
            source_index: self.source_index,
            spec: None,
            method: self.method,
            output: self.output,
            format: self.format,
            ..RunConfig::new(command)
        })
    }
}

fn config_from_cli(cmd: Cmd) -> Result<RunConfig> {
    let (command, knobs) = match cmd {
        Cmd::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::InvalidParams(format!("cannot read {}: {e}", config.display())))?;
            return RunConfig::from_json(&text);
        }
        Cmd::Kernel(k) => (Command::Kernel, k),
        Cmd::Compose(k) => (Command::Compose, k),
        Cmd::EqqVerify(k) => (Command::EqqVerify, k),
        Cmd::MeasureNorm(k) => (Command::MeasureNorm, k),
        Cmd::Det(k) => (Command::Det, k),
        Cmd::Green(k) => (Command::Green, k),
        Cmd::Perturb(k) => (Command::Perturb, k),
        Cmd::Evolve(k) => (Command::Evolve, k),
        Cmd::Ehrenfest(k) => (Command::Ehrenfest, k),
        Cmd::AllChecks(k) => (Command::AllChecks, k),
    };
    knobs.into_config(command)
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

/// Parses arguments, runs and writes output; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(if cli.verbose {
            LevelFilter::Debug
        } else {
            LevelFilter::Warn
        })
        .try_init();
    let config = match config_from_cli(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let out = match run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let text = match config.format.unwrap_or_default() {
        Format::Csv => match render_csv(&out.records) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_NUMERICAL;
            }
        },
        Format::Json => render_json(&out.records),
    };
    match &config.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_CHECK_FAILED;
            }
        }
        None => print!("{text}"),
    }
    if out.all_passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_expand_complex_values_in_key_order() {
        let r = OutputRecord::new("x")
            .input("b", 1.0)
            .input("a", 2usize)
            .output("z", Complex64::new(1.0, -2.0))
            .output("y", true);
        let names: Vec<String> = r.columns().into_iter().map(|(k, _)| k).collect();
        assert_eq!(names, ["experiment", "a", "b", "y", "z_re", "z_im"]);
        let csv = render_csv(std::slice::from_ref(&r)).unwrap();
        assert_eq!(csv, "experiment,a,b,y,z_re,z_im\nx,2,1e0,true,1e0,-2e0\n");
        let json = render_json(&[r]);
        assert!(json.find("\"a\"").unwrap() < json.find("\"z_im\"").unwrap());
    }

    #[test]
    fn mismatched_records_rejected() {
        let a = OutputRecord::new("x").output("a", 1.0);
        let b = OutputRecord::new("x").output("b", 1.0);
        assert!(render_csv(&[a, b]).is_err());
    }

    #[test]
    fn text_fields_are_quoted() {
        assert_eq!(csv_field(&Cell::Text("a,b".into())), "\"a,b\"");
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(RunConfig::from_json(r#"{"command":"det","omega_t":1.0}"#).is_ok());
        let e = RunConfig::from_json(r#"{"command":"det","omegat":1.0}"#).unwrap_err();
        assert!(e.is_validation());
        assert!(RunConfig::from_json(r#"{"command":"nope"}"#).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn det_command_hits_two_over_pi() {
        let mut c = RunConfig::new(Command::Det);
        c.omega_t = Some(1.5707963);
        c.n_max = Some(100_000);
        let out = run(&c).unwrap();
        let Cell::Real(v) = out.records[0].outputs["value"] else {
            panic!()
        };
        assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-4);
    }

    #[test]
    fn caustic_maps_to_numerical_exit() {
        let mut c = RunConfig::new(Command::Kernel);
        c.potential = Some(Potential::harmonic(std::f64::consts::PI));
        let e = run(&c).err().unwrap();
        assert_eq!(exit_code(&e), EXIT_NUMERICAL);
    }

    #[test]
    fn every_small_command_runs() {
        for cmd in [
            Command::Kernel,
            Command::Compose,
            Command::EqqVerify,
            Command::MeasureNorm,
            Command::Green,
            Command::Perturb,
        ] {
            let out = run(&RunConfig::new(cmd)).unwrap();
            assert!(!out.records.is_empty());
            render_csv(&out.records).unwrap();
        }
        let mut c = RunConfig::new(Command::Evolve);
        c.steps = Some(5);
        assert_eq!(run(&c).unwrap().records.len(), 6);
    }
}
