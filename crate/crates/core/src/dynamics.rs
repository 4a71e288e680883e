//! Schrödinger and Lindblad time evolution with fixed-step RK4.
//!
//! The step is bounded by `1/(steps_per_unit · ρ)` where `ρ` bounds the
//! generator's spectral radius. Hamiltonians are shifted by the midpoint of
//! their Gershgorin interval before integrating, which only changes a global
//! phase but shrinks `ρ`. When the norm (trace) drift exceeds the tolerance the
//! step is halved and the run repeated.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{excited, number, pauli, DensityMatrix, FockError, Operator, Pauli, SpaceSpec, StateVector, SubsystemKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("norm drift {drift:e} exceeds {tolerance:e} after {refinements} step refinements")]
    NormDrift {
        drift: f64,
        tolerance: f64,
        refinements: usize,
    },
    #[error("density matrix eigenvalue {min_eigenvalue:e} at t = {time:e} s is below the positivity floor")]
    PositivityViolation { min_eigenvalue: f64, time: f64 },
    #[error("non-finite state at t = {0:e} s")]
    NonFinite(f64),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("time grids differ")]
    GridMismatch,
    #[error("invalid collapse channel {index}: {reason}")]
    InvalidChannel { index: usize, reason: String },
    #[error("unknown observable '{0}'")]
    UnknownObservable(String),
    #[error("operator and state live on different spaces")]
    SpaceMismatch,
    #[error(transparent)]
    Fock(#[from] FockError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Steps per inverse spectral-radius bound.
    pub steps_per_unit: f64,
    pub norm_tolerance: f64,
    pub max_refinements: usize,
    pub positivity_floor: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            steps_per_unit: 50.0,
            norm_tolerance: 1e-8,
            max_refinements: 2,
            positivity_floor: -1e-6,
        }
    }
}

pub fn uniform_grid(t_end: f64, samples: usize) -> Vec<f64> {
    if samples < 2 {
        return vec![0.0];
    }
    (0..samples)
        .map(|k| t_end * k as f64 / (samples - 1) as f64)
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<(), DynamicsError> {
    if grid.is_empty() {
        return Err(DynamicsError::InvalidGrid("empty".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::InvalidGrid("non-finite time".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::InvalidGrid("not strictly increasing".into()));
    }
    Ok(())
}

/// A named Hermitian operator whose expectation value is recorded.
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub operator: Operator,
}

impl Observable {
    pub fn custom(name: &str, operator: Operator) -> Self {
        Self {
            name: name.to_string(),
            operator,
        }
    }

    /// Registry lookup: `n_<label>` (boson number, or excited population of a
    /// two-level system), `sz_<label>` and `pe_<label>` for two-level systems.
    pub fn named(space: &SpaceSpec, name: &str) -> Result<Self, DynamicsError> {
        let unknown = || DynamicsError::UnknownObservable(name.to_string());
        let (kind, label) = name.split_once('_').ok_or_else(unknown)?;
        let sub = space
            .subsystems()
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(unknown)?;
        let op = match (kind, sub.kind) {
            ("n", SubsystemKind::Boson { .. }) => number(space, label)?,
            ("n", SubsystemKind::TwoLevel) | ("pe", SubsystemKind::TwoLevel) => excited(space, label)?,
            ("sz", SubsystemKind::TwoLevel) => pauli(space, label, Pauli::Z)?,
            _ => return Err(unknown()),
        };
        Ok(Self::custom(name, op))
    }

    pub fn list(space: &SpaceSpec, names: &[&str]) -> Result<Vec<Self>, DynamicsError> {
        names.iter().map(|n| Self::named(space, n)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub step: f64,
    pub steps: usize,
    pub refinements: usize,
    pub max_norm_drift: f64,
    /// Closed evolution only: max relative change of `⟨H⟩`.
    pub max_energy_drift: Option<f64>,
    /// Open evolution only: smallest eigenvalue over the reported samples.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub metadata: Vec<(String, String)>,
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub diagnostics: Diagnostics,
}

impl TimeSeries {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    /// Renames every column with a common prefix.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        for (name, _) in &mut self.columns {
            *name = format!("{prefix}{name}");
        }
        self
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}")?;
        }
        let d = &self.diagnostics;
        writeln!(out, "# integrator = rk4")?;
        writeln!(out, "# step = {:.16e}", d.step)?;
        writeln!(out, "# steps = {}", d.steps)?;
        writeln!(out, "# refinements = {}", d.refinements)?;
        writeln!(out, "# max_norm_drift = {:.3e}", d.max_norm_drift)?;
        if let Some(e) = d.max_energy_drift {
            writeln!(out, "# max_energy_drift = {e:.3e}")?;
        }
        if let Some(e) = d.min_eigenvalue {
            writeln!(out, "# min_eigenvalue = {e:.3e}")?;
        }
        let mut header = vec!["t".to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(self.columns.iter().map(|(_, v)| format!("{:.16e}", v[i])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Per-observable max and RMS absolute deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub name: String,
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub deviations: Vec<Deviation>,
}

impl DeviationReport {
    pub fn get(&self, name: &str) -> Option<&Deviation> {
        self.deviations.iter().find(|d| d.name == name)
    }

    pub fn max(&self) -> f64 {
        self.deviations.iter().map(|d| d.max).fold(0.0, f64::max)
    }
}

/// Compares the columns the two series share by name.
pub fn compare_levels(a: &TimeSeries, b: &TimeSeries) -> Result<DeviationReport, DynamicsError> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(y.abs()))
    {
        return Err(DynamicsError::GridMismatch);
    }
    let deviations = a
        .columns
        .iter()
        .filter_map(|(name, va)| {
            let vb = b.column(name)?;
            let diffs: Vec<f64> = va.iter().zip(vb).map(|(x, y)| (x - y).abs()).collect();
            let max = diffs.iter().copied().fold(0.0, f64::max);
            let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
            Some(Deviation {
                name: name.clone(),
                max,
                rms,
            })
        })
        .collect();
    Ok(DeviationReport { deviations })
}

fn cz(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Hamiltonian shifted by its Gershgorin midpoint, plus the residual radius.
fn shifted(h: &Operator) -> (Operator, f64) {
    let (lo, hi) = h.gershgorin_bounds();
    let mid = 0.5 * (lo + hi);
    let hs = (h - &(&Operator::identity(h.space()) * mid)).pruned();
    (hs, 0.5 * (hi - lo))
}

fn substeps(dt: f64, h_max: f64) -> usize {
    ((dt / h_max).ceil() as usize).max(1)
}

fn step_bound(radius: f64, max_abs: f64, opts: &IntegratorOptions) -> f64 {
    let scale = radius.max(max_abs);
    if scale > 0.0 {
        1.0 / (opts.steps_per_unit * scale)
    } else {
        f64::INFINITY
    }
}

fn rk4_state(h: &Operator, psi: &mut [Complex64], dt: f64, n: usize, work: &mut [Vec<Complex64>; 5]) {
    let step = dt / n as f64;
    let mi = Complex64::new(0.0, -1.0);
    let dim = psi.len();
    for _ in 0..n {
        let [k1, k2, k3, k4, tmp] = work;
        h.apply_into(psi, k1);
        k1.iter_mut().for_each(|v| *v *= mi);
        for i in 0..dim {
            tmp[i] = psi[i] + k1[i] * (0.5 * step);
        }
        h.apply_into(tmp, k2);
        k2.iter_mut().for_each(|v| *v *= mi);
        for i in 0..dim {
            tmp[i] = psi[i] + k2[i] * (0.5 * step);
        }
        h.apply_into(tmp, k3);
        k3.iter_mut().for_each(|v| *v *= mi);
        for i in 0..dim {
            tmp[i] = psi[i] + k3[i] * step;
        }
        h.apply_into(tmp, k4);
        k4.iter_mut().for_each(|v| *v *= mi);
        for i in 0..dim {
            psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (step / 6.0);
        }
    }
}

fn expectation(op: &Operator, psi: &[Complex64], scratch: &mut [Complex64]) -> f64 {
    op.apply_into(psi, scratch);
    psi.iter().zip(scratch.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>().re
}

/// Integrates `i dψ/dt = H ψ` and records the observables on `grid`.
pub fn evolve_state(
    h: &Operator,
    psi0: &StateVector,
    grid: &[f64],
    observables: &[Observable],
    opts: &IntegratorOptions,
) -> Result<TimeSeries, DynamicsError> {
    check_grid(grid)?;
    if h.space() != psi0.space() || observables.iter().any(|o| o.operator.space() != h.space()) {
        return Err(DynamicsError::SpaceMismatch);
    }
    let (hs, radius) = shifted(h);
    let mut h_max = step_bound(radius, h.max_abs(), opts);
    let mut refinements = 0;
    loop {
        let run = run_state(h, &hs, psi0, grid, observables, h_max)?;
        if run.diagnostics.max_norm_drift <= opts.norm_tolerance {
            let mut series = run;
            series.diagnostics.refinements = refinements;
            return Ok(series);
        }
        if refinements == opts.max_refinements {
            return Err(DynamicsError::NormDrift {
                drift: run.diagnostics.max_norm_drift,
                tolerance: opts.norm_tolerance,
                refinements,
            });
        }
        refinements += 1;
        h_max *= 0.5;
    }
}

fn run_state(
    h: &Operator,
    hs: &Operator,
    psi0: &StateVector,
    grid: &[f64],
    observables: &[Observable],
    h_max: f64,
) -> Result<TimeSeries, DynamicsError> {
    let dim = h.dim();
    let mut psi: Vec<Complex64> = psi0.data().iter().copied().collect();
    let mut work: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![cz(0.0); dim]);
    let mut scratch = vec![cz(0.0); dim];
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); observables.len()];
    let norm0 = psi0.norm();
    let e0 = expectation(h, &psi, &mut scratch);
    let e_scale = e0.abs().max(f64::MIN_POSITIVE);
    let mut max_norm_drift: f64 = 0.0;
    let mut max_energy_drift: f64 = 0.0;
    let mut steps = 0;
    let mut step = 0.0;
    let mut t_prev = 0.0;
    for (k, &t) in grid.iter().enumerate() {
        if k == 0 && t != 0.0 || k > 0 {
            let dt = t - t_prev;
            let n = substeps(dt, h_max);
            rk4_state(hs, &mut psi, dt, n, &mut work);
            steps += n;
            step = f64::max(step, dt / n as f64);
        }
        t_prev = t;
        if psi.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DynamicsError::NonFinite(t));
        }
        let norm = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        max_norm_drift = max_norm_drift.max((norm - norm0).abs());
        let e = expectation(h, &psi, &mut scratch);
        max_energy_drift = max_energy_drift.max((e - e0).abs() / e_scale);
        for (col, obs) in columns.iter_mut().zip(observables) {
            col.push(expectation(&obs.operator, &psi, &mut scratch));
        }
    }
    Ok(TimeSeries {
        metadata: Vec::new(),
        times: grid.to_vec(),
        columns: observables
            .iter()
            .map(|o| o.name.clone())
            .zip(columns)
            .collect(),
        diagnostics: Diagnostics {
            step,
            steps,
            refinements: 0,
            max_norm_drift,
            max_energy_drift: Some(max_energy_drift),
            min_eigenvalue: None,
        },
    })
}

/// Hamiltonian plus Lindblad channels `rate · D[o]`.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    hamiltonian: Operator,
    channels: Vec<(Operator, f64)>,
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, channels: Vec<(Operator, f64)>) -> Result<Self, DynamicsError> {
        for (index, (op, rate)) in channels.iter().enumerate() {
            if !(rate.is_finite() && *rate >= 0.0) {
                return Err(DynamicsError::InvalidChannel {
                    index,
                    reason: format!("rate {rate} must be finite and non-negative"),
                });
            }
            if op.space() != hamiltonian.space() {
                return Err(DynamicsError::InvalidChannel {
                    index,
                    reason: "collapse operator lives on a different space".into(),
                });
            }
        }
        Ok(Self {
            hamiltonian,
            channels,
        })
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[(Operator, f64)] {
        &self.channels
    }
}

struct DenseGenerator {
    /// `−iH_s − ½ Σ rate·L†L`.
    k: DMatrix<Complex64>,
    jumps: Vec<(DMatrix<Complex64>, f64)>,
}

impl DenseGenerator {
    fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let kr = &self.k * rho;
        let mut out = &kr + kr.adjoint();
        for (l, rate) in &self.jumps {
            out += (l * rho * l.adjoint()) * cz(*rate);
        }
        out
    }
}

/// Integrates `dρ/dt = −i[H, ρ] + Σ rate·D[o]ρ` and records the observables.
pub fn evolve_density(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    grid: &[f64],
    observables: &[Observable],
    opts: &IntegratorOptions,
) -> Result<TimeSeries, DynamicsError> {
    check_grid(grid)?;
    let h = &model.hamiltonian;
    if h.space() != rho0.space() || observables.iter().any(|o| o.operator.space() != h.space()) {
        return Err(DynamicsError::SpaceMismatch);
    }
    let (hs, radius) = shifted(h);
    let mut k = hs.to_dense() * Complex64::new(0.0, -1.0);
    let mut dissipative = 0.0;
    let mut jumps = Vec::new();
    for (op, rate) in &model.channels {
        let ltl = &op.adjoint() * op;
        let (_, hi) = ltl.gershgorin_bounds();
        dissipative += rate * hi.max(0.0);
        k -= ltl.to_dense() * cz(0.5 * rate);
        jumps.push((op.to_dense(), *rate));
    }
    let gen = DenseGenerator { k, jumps };
    // The commutator doubles the Hamiltonian's spectral spread.
    let mut h_max = step_bound(2.0 * radius + dissipative, h.max_abs(), opts);
    let mut refinements = 0;
    loop {
        let run = run_density(&gen, rho0, grid, observables, h_max, opts)?;
        if run.diagnostics.max_norm_drift <= opts.norm_tolerance {
            let mut series = run;
            series.diagnostics.refinements = refinements;
            return Ok(series);
        }
        if refinements == opts.max_refinements {
            return Err(DynamicsError::NormDrift {
                drift: run.diagnostics.max_norm_drift,
                tolerance: opts.norm_tolerance,
                refinements,
            });
        }
        refinements += 1;
        h_max *= 0.5;
    }
}

fn run_density(
    gen: &DenseGenerator,
    rho0: &DensityMatrix,
    grid: &[f64],
    observables: &[Observable],
    h_max: f64,
    opts: &IntegratorOptions,
) -> Result<TimeSeries, DynamicsError> {
    let space = rho0.space();
    let mut rho = rho0.data().clone();
    let tr0 = rho.trace().re;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); observables.len()];
    let mut max_drift: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut steps = 0;
    let mut step = 0.0;
    let mut t_prev = 0.0;
    for (idx, &t) in grid.iter().enumerate() {
        if idx > 0 || t != 0.0 {
            let dt = t - t_prev;
            let n = substeps(dt, h_max);
            let s = dt / n as f64;
            for _ in 0..n {
                let k1 = gen.apply(&rho);
                let k2 = gen.apply(&(&rho + &k1 * cz(0.5 * s)));
                let k3 = gen.apply(&(&rho + &k2 * cz(0.5 * s)));
                let k4 = gen.apply(&(&rho + &k3 * cz(s)));
                rho += (k1 + (k2 + k3) * cz(2.0) + k4) * cz(s / 6.0);
                rho = (&rho + rho.adjoint()) * cz(0.5);
            }
            steps += n;
            step = f64::max(step, s);
        }
        t_prev = t;
        if rho.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DynamicsError::NonFinite(t));
        }
        max_drift = max_drift.max((rho.trace().re - tr0).abs());
        let state = DensityMatrix::from_raw(space, rho.clone());
        let eig = state.min_eigenvalue();
        if eig < opts.positivity_floor {
            return Err(DynamicsError::PositivityViolation {
                min_eigenvalue: eig,
                time: t,
            });
        }
        min_eig = min_eig.min(eig);
        for (col, obs) in columns.iter_mut().zip(observables) {
            col.push(state.expectation(&obs.operator).re);
        }
    }
    Ok(TimeSeries {
        metadata: Vec::new(),
        times: grid.to_vec(),
        columns: observables
            .iter()
            .map(|o| o.name.clone())
            .zip(columns)
            .collect(),
        diagnostics: Diagnostics {
            step,
            steps,
            refinements: 0,
            max_norm_drift: max_drift,
            max_energy_drift: None,
            min_eigenvalue: Some(min_eig),
        },
    })
}

/// Local maxima of a sampled signal, refined by a parabola through the three
/// samples around each peak. Returns `(time, value)` pairs.
pub fn local_maxima(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    extrema(times, values, 1.0)
}

pub fn local_minima(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    extrema(times, values, -1.0)
}

fn extrema(times: &[f64], values: &[f64], sign: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (y0, y1, y2) = (sign * values[i - 1], sign * values[i], sign * values[i + 1]);
        if y1 > y0 && y1 >= y2 {
            let denom = y0 - 2.0 * y1 + y2;
            let h = times[i + 1] - times[i];
            let (dt, peak) = if denom != 0.0 {
                let off = 0.5 * (y0 - y2) / denom;
                (off * h, y1 - 0.25 * (y0 - y2) * off)
            } else {
                (0.0, y1)
            };
            out.push((times[i] + dt, sign * peak));
        }
    }
    out
}
