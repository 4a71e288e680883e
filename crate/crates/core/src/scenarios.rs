//! Configuration and the named protocols behind the command line.
//!
//! A configuration is a flat list of `key = value` assignments. Every key has a
//! default (the strong-coupling parameter set), so an empty file is valid.
//! Frequencies, couplings and rates are given in Hz and converted to rad/s
//! here; times are in seconds.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    compare_levels, evolve_density, evolve_state, local_maxima, local_minima, uniform_grid, DeviationReport,
    DynamicsError, IntegratorOptions, LindbladModel, Observable, TimeSeries,
};
use crate::fock::{
    build_h_eff, build_h_eff_smp, build_h_l, build_h_polariton, build_h_t, ladder, pauli, FockError, Operator, Pauli,
    SpaceSpec, StateVector, CAVITY_A, MAGNON, QUBIT,
};
use crate::params::{
    cp_effective_couplings, derive, hz, polariton_spectrum, validate_regime, CascadeError, CascadeInput,
    DerivedParams, DetuningSpec, LbpSpec, OptomechSource, PhysicalParams, RegimeReport, RegimeThresholds,
};
use crate::quadratic::{ideal_cp_a_plus, ideal_cp_c_plus, stability_classify};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{0}' assigned twice")]
    Duplicate(String),
    #[error("{key}: cannot parse '{value}' as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("regime validation failed: {0} (use --force to run anyway)")]
    Regime(String),
    #[error("cascade: {0}")]
    Cascade(#[from] CascadeError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("operator construction: {0}")]
    Fock(#[from] FockError),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Cascade(CascadeError::InvalidParameter { .. }) => 2,
            ScenarioError::Regime(_) => 3,
            ScenarioError::Cascade(_)
            | ScenarioError::Dynamics(_)
            | ScenarioError::Fock(_)
            | ScenarioError::Numerical(_) => 4,
            ScenarioError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// Number in Hz, stored in rad/s.
    Hz,
    Real,
    Count,
    Flag,
    Choice(&'static [&'static str]),
    /// `frequencies`, a number in Hz, or `<x>G` for a multiple of the coupling.
    Detuning,
    /// Comma-separated reals.
    List,
}

struct KeySpec {
    name: &'static str,
    kind: Kind,
    default: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str) -> KeySpec {
    KeySpec { name, kind, default }
}

const KEYS: &[KeySpec] = &[
    key("omega_a", Kind::Hz, "0"),
    key("omega_c", Kind::Hz, "0"),
    key("omega_b", Kind::Hz, "1e9"),
    key("omega_q", Kind::Hz, "0"),
    key("omega_m", Kind::Hz, "0"),
    key("omega_a_d", Kind::Hz, "0"),
    key("omega_c_d", Kind::Hz, "0"),
    key("f_a", Kind::Hz, "0"),
    key("f_c", Kind::Hz, "0"),
    key("g_a", Kind::Hz, "0"),
    key("g_c", Kind::Hz, "0"),
    key("g_q", Kind::Hz, "2e4"),
    key("g_m", Kind::Hz, "2e4"),
    key("kappa_a", Kind::Hz, "0"),
    key("kappa_b", Kind::Hz, "0"),
    key("kappa_c", Kind::Hz, "0"),
    key("kappa_m", Kind::Hz, "1e6"),
    key("gamma_q", Kind::Hz, "1e3"),
    key("decay_sq", Kind::Hz, "0"),
    key("optomech", Kind::Choice(&["linearized", "driven"]), "linearized"),
    key("delta_a_p", Kind::Hz, "-1e3"),
    key("delta_c_p", Kind::Hz, "-1e3"),
    key("g_lin_a", Kind::Hz, "1e8"),
    key("g_lin_c", Kind::Hz, "1e8"),
    key("delta_q", Kind::Detuning, "10G"),
    key("delta_m", Kind::Detuning, "10G"),
    key("lbp_mode", Kind::Choice(&["ratio", "fraction", "cascade"]), "ratio"),
    key("wc_over_omega_a", Kind::Real, "1e6"),
    key("g_sq_frac", Kind::Real, "0.5"),
    key("n_lbp", Kind::Real, "1"),
    key("regime_mechanical_ratio", Kind::Real, "10"),
    key("regime_chi_ratio", Kind::Real, "100"),
    key("regime_rwa_ratio", Kind::Real, "10"),
    key("regime_zeta_max", Kind::Real, "0.2"),
    key("regime_projection_ratio", Kind::Real, "1e-2"),
    key("cutoff_a", Kind::Count, "5"),
    key("cutoff_b", Kind::Count, "5"),
    key("cutoff_c", Kind::Count, "5"),
    key("cutoff_m", Kind::Count, "3"),
    key("cutoff_lbp", Kind::Count, "3"),
    key("steps_per_unit", Kind::Real, "50"),
    key("fig2_t_max", Kind::Real, "5e-10"),
    key("fig2_samples", Kind::Count, "101"),
    key("fig2_photons", Kind::Count, "1"),
    key("fig2_convergence", Kind::Flag, "true"),
    key("fig2_convergence_tol", Kind::Real, "1e-3"),
    key("fig3_wa_over_wc", Kind::Real, "1"),
    key("fig3_k_over_wc", Kind::Real, "0"),
    key("fig3_x_max", Kind::Real, "1"),
    key("fig3_points", Kind::Count, "201"),
    key("fig4_x_min", Kind::Real, "1e-6"),
    key("fig4_x_max", Kind::Real, "1"),
    key("fig4_points", Kind::Count, "61"),
    key("fig4_r", Kind::List, "1,2,3"),
    key("fig5_periods", Kind::Real, "3"),
    key("fig5_samples", Kind::Count, "3001"),
    key("fig5_lbp_threshold", Kind::Real, "0.05"),
    key("appc_x_min", Kind::Real, "0.01"),
    key("appc_x_max", Kind::Real, "100"),
    key("appc_points", Kind::Count, "81"),
    key("sweep_var", Kind::Choice(SWEEPABLE), "decay_sq"),
    key("sweep_from", Kind::Real, "0"),
    key("sweep_to", Kind::Real, "1e6"),
    key("sweep_points", Kind::Count, "11"),
    key("sweep_scale", Kind::Choice(&["linear", "log"]), "linear"),
];

/// Keys a sweep may vary: every plain numeric cascade input.
const SWEEPABLE: &[&str] = &[
    "omega_a", "omega_c", "omega_b", "omega_q", "omega_m", "omega_a_d", "omega_c_d", "f_a", "f_c", "g_a", "g_c",
    "g_q", "g_m", "kappa_a", "kappa_b", "kappa_c", "kappa_m", "gamma_q", "decay_sq", "delta_a_p", "delta_c_p",
    "g_lin_a", "g_lin_c", "wc_over_omega_a", "g_sq_frac", "n_lbp",
];

fn spec_of(name: &str) -> Option<(usize, &'static KeySpec)> {
    KEYS.iter().enumerate().find(|(_, k)| k.name == name)
}

fn parse_real(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            expected: "a finite number",
        })
}

fn check_value(spec: &KeySpec, value: &str) -> Result<(), ConfigError> {
    let bad = |expected| ConfigError::BadValue {
        key: spec.name.into(),
        value: value.into(),
        expected,
    };
    match spec.kind {
        Kind::Hz | Kind::Real => parse_real(spec.name, value).map(|_| ()),
        Kind::Count => value.parse::<usize>().map(|_| ()).map_err(|_| bad("a non-negative integer")),
        Kind::Flag => value.parse::<bool>().map(|_| ()).map_err(|_| bad("true or false")),
        Kind::Choice(options) => {
            if options.contains(&value) {
                Ok(())
            } else {
                Err(bad("one of the listed choices"))
            }
        }
        Kind::Detuning => {
            if value == "frequencies" {
                Ok(())
            } else if let Some(x) = value.strip_suffix('G') {
                parse_real(spec.name, x).map(|_| ())
            } else {
                parse_real(spec.name, value).map(|_| ())
            }
        }
        Kind::List => value
            .split(',')
            .try_for_each(|v| parse_real(spec.name, v.trim()).map(|_| ())),
    }
}

/// Resolved key/value configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    values: Vec<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| k.default.to_string()).collect(),
        }
    }
}

impl ScenarioConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let k = k.trim();
            if seen.iter().any(|s| s == k) {
                return Err(ConfigError::Duplicate(k.to_string()));
            }
            cfg.set(k, v.trim())?;
            seen.push(k.to_string());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (i, spec) = spec_of(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let value = value.trim();
        check_value(spec, value)?;
        self.values[i] = value.to_string();
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(k.trim(), v)
    }

    /// Every key with its configured text, in declaration order.
    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &str)> {
        KEYS.iter().zip(&self.values).map(|(k, v)| (k.name, v.as_str()))
    }

    pub fn raw(&self, key: &str) -> &str {
        let (i, _) = spec_of(key).unwrap_or_else(|| panic!("undeclared key {key}"));
        &self.values[i]
    }

    /// Numeric value in internal units (rad/s for `Hz` keys).
    pub fn number(&self, key: &str) -> f64 {
        let (_, spec) = spec_of(key).unwrap_or_else(|| panic!("undeclared key {key}"));
        let v: f64 = self.raw(key).parse().expect("validated on assignment");
        if spec.kind == Kind::Hz {
            hz(v)
        } else {
            v
        }
    }

    pub fn count(&self, key: &str) -> usize {
        self.raw(key).parse().expect("validated on assignment")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.raw(key).parse().expect("validated on assignment")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        self.raw(key)
            .split(',')
            .map(|v| v.trim().parse().expect("validated on assignment"))
            .collect()
    }

    fn detuning(&self, key: &str) -> DetuningSpec {
        let raw = self.raw(key);
        if raw == "frequencies" {
            DetuningSpec::FromFrequencies
        } else if let Some(x) = raw.strip_suffix('G') {
            DetuningSpec::PerCoupling(x.parse().expect("validated on assignment"))
        } else {
            DetuningSpec::Absolute(hz(raw.parse().expect("validated on assignment")))
        }
    }

    pub fn cascade_input(&self) -> CascadeInput {
        let n = |k: &str| self.number(k);
        let physical = PhysicalParams {
            omega_a: n("omega_a"),
            omega_c: n("omega_c"),
            omega_b: n("omega_b"),
            omega_q: n("omega_q"),
            omega_m: n("omega_m"),
            omega_a_d: n("omega_a_d"),
            omega_c_d: n("omega_c_d"),
            f_a: n("f_a"),
            f_c: n("f_c"),
            g_a: n("g_a"),
            g_c: n("g_c"),
            g_q: n("g_q"),
            g_m: n("g_m"),
            kappa_a: n("kappa_a"),
            kappa_b: n("kappa_b"),
            kappa_c: n("kappa_c"),
            kappa_m: n("kappa_m"),
            gamma_q: n("gamma_q"),
            decay_sq: n("decay_sq"),
        };
        let optomech = match self.raw("optomech") {
            "driven" => OptomechSource::Driven,
            _ => OptomechSource::Linearized {
                delta_a_p: n("delta_a_p"),
                delta_c_p: n("delta_c_p"),
                g_lin_a: n("g_lin_a"),
                g_lin_c: n("g_lin_c"),
            },
        };
        let lbp = match self.raw("lbp_mode") {
            "cascade" => LbpSpec::Cascade,
            "fraction" => LbpSpec::CouplingFraction(n("g_sq_frac")),
            _ => LbpSpec::FrequencyRatio(n("wc_over_omega_a")),
        };
        CascadeInput {
            physical,
            optomech,
            spin_detuning: self.detuning("delta_q"),
            magnon_detuning: self.detuning("delta_m"),
            lbp,
            n_lbp: n("n_lbp"),
        }
    }

    pub fn thresholds(&self) -> RegimeThresholds {
        RegimeThresholds {
            mechanical_ratio: self.number("regime_mechanical_ratio"),
            chi_ratio: self.number("regime_chi_ratio"),
            rwa_ratio: self.number("regime_rwa_ratio"),
            zeta_max: self.number("regime_zeta_max"),
            projection_ratio: self.number("regime_projection_ratio"),
        }
    }

    pub fn integrator(&self) -> IntegratorOptions {
        IntegratorOptions {
            steps_per_unit: self.number("steps_per_unit"),
            ..Default::default()
        }
    }

    fn metadata(&self) -> Vec<(String, String)> {
        self.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }
}

fn require(cond: bool, msg: impl Into<String>) -> Result<(), ScenarioError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg.into()).into())
    }
}

/// One cell of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v:.16e}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

/// Table of outputs over a strictly monotone grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub x: Vec<f64>,
    pub rows: Vec<Vec<Cell>>,
}

impl SweepSeries {
    fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column; text cells become NaN.
    pub fn numeric(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Num(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn text(&self, name: &str) -> Option<Vec<String>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i].to_string()).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "x,{}", self.columns.join(","))?;
        for (x, row) in self.x.iter().zip(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{x:.16e},{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn linear_grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![from];
    }
    (0..points)
        .map(|k| from + (to - from) * k as f64 / (points - 1) as f64)
        .collect()
}

fn log_grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    linear_grid(from.ln(), to.ln(), points)
        .into_iter()
        .map(f64::exp)
        .collect()
}

// ---------------------------------------------------------------- derive

pub struct DeriveOutput {
    pub derived: DerivedParams,
    pub report: RegimeReport,
}

pub fn run_derive(cfg: &ScenarioConfig) -> Result<DeriveOutput, ScenarioError> {
    let derived = derive(&cfg.cascade_input())?;
    let report = validate_regime(&derived, &cfg.thresholds());
    Ok(DeriveOutput { derived, report })
}

/// `(quantity, value, unit)` rows covering every stage of the cascade.
pub fn derive_table(d: &DerivedParams) -> Vec<(&'static str, f64, &'static str)> {
    let l = &d.linear;
    let x = &d.dispersive;
    let mut rows = vec![
        ("delta_a_p", l.delta_a_p, "rad/s"),
        ("delta_c_p", l.delta_c_p, "rad/s"),
        ("g_lin_a", l.g_lin_a, "rad/s"),
        ("g_lin_c", l.g_lin_c, "rad/s"),
        ("mean_a_re", d.mean_a.re, "1"),
        ("mean_a_im", d.mean_a.im, "1"),
        ("mean_c_re", d.mean_c.re, "1"),
        ("mean_c_im", d.mean_c.im, "1"),
        ("mean_b_re", d.mean_b.re, "1"),
        ("mean_b_im", d.mean_b.im, "1"),
        ("xi_a_p", x.xi_a_p, "1"),
        ("xi_a_m", x.xi_a_m, "1"),
        ("xi_c_p", x.xi_c_p, "1"),
        ("xi_c_m", x.xi_c_m, "1"),
        ("g_ac", x.g_ac, "rad/s"),
        ("chi_a", x.chi_a, "rad/s"),
        ("chi_c", x.chi_c, "rad/s"),
        ("r_a", d.r_a, "1"),
        ("r_c", d.r_c, "1"),
        ("w_a", d.w_a(), "rad/s"),
        ("w_c", d.w_c(), "rad/s"),
        ("g_sq_cascade", d.squeezed.g_sq, "rad/s"),
        ("g_sq", d.g_sq, "rad/s"),
        ("g_cp", d.critical.g_cp, "rad/s"),
        ("g_cp_prime", d.critical.g_cp_prime, "rad/s"),
        ("omega_lbp_sq", d.spectrum.omega_lbp_sq, "rad^2/s^2"),
        ("omega_ubp_sq", d.spectrum.omega_ubp_sq, "rad^2/s^2"),
        ("theta", d.spectrum.theta, "rad"),
        ("delta_q", d.delta_q, "rad/s"),
        ("delta_m", d.delta_m, "rad/s"),
        ("kappa_m", d.kappa_m, "rad/s"),
        ("gamma_q", d.gamma_q, "rad/s"),
        ("decay_sq", d.decay_sq, "rad/s"),
    ];
    if let Some(lbp) = &d.lbp {
        let s = &lbp.spin_magnon;
        rows.extend([
            ("omega_lbp", lbp.omega_lbp, "rad/s"),
            ("omega_ubp", lbp.omega_ubp, "rad/s"),
            ("x_zpf", lbp.couplings.x_zpf, "1"),
            ("gq_cp", lbp.couplings.gq_cp, "rad/s"),
            ("gm_cp", lbp.couplings.gm_cp, "rad/s"),
            ("zeta_q", s.zeta_q, "1"),
            ("zeta_m", s.zeta_m, "1"),
            ("g_eff", s.g_eff, "rad/s"),
            ("delta_q_eff", s.delta_q_eff, "rad/s"),
            ("delta_m_eff", s.delta_m_eff, "rad/s"),
            ("stark_shift", s.stark_shift, "rad/s"),
            ("n_lbp", d.n_lbp, "1"),
            ("g_eff_over_kappa_m", s.g_eff / d.kappa_m, "1"),
        ]);
    }
    rows
}

pub fn write_derive_csv<W: Write>(cfg: &ScenarioConfig, out: &DeriveOutput, mut w: W) -> io::Result<()> {
    for (k, v) in cfg.entries() {
        writeln!(w, "# {k} = {v}")?;
    }
    writeln!(w, "quantity,value,unit")?;
    for (name, value, unit) in derive_table(&out.derived) {
        writeln!(w, "{name},{value:.16e},{unit}")?;
    }
    let d = &out.derived;
    let stability = stability_classify(d.w_a(), d.w_c(), d.g_sq, d.decay_sq);
    writeln!(w, "stability,{},", stability.as_str())?;
    Ok(())
}

pub fn write_regime_csv<W: Write>(report: &RegimeReport, mut w: W) -> io::Result<()> {
    writeln!(w, "condition,left,right,margin,pass,mandatory")?;
    for c in &report.conditions {
        writeln!(
            w,
            "\"{}\",{:.16e},{:.16e},{:.16e},{},{}",
            c.name, c.left, c.right, c.margin, c.pass, c.mandatory
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- fig2

pub struct Fig2Output {
    /// With the mechanical mode.
    pub lab: TimeSeries,
    /// Mechanical mode eliminated.
    pub eliminated: TimeSeries,
    pub deviation: DeviationReport,
    /// Largest change of either series when every cutoff is doubled.
    pub convergence: Option<f64>,
}

fn fig2_pair(
    cfg: &ScenarioConfig,
    d: &DerivedParams,
    cut: [usize; 4],
) -> Result<(TimeSeries, TimeSeries), ScenarioError> {
    let [ca, cb, cc, cm] = cut;
    let grid = uniform_grid(cfg.number("fig2_t_max"), cfg.count("fig2_samples"));
    let photons = cfg.count("fig2_photons");
    let opts = cfg.integrator();
    let run = |space: SpaceSpec, lab: bool| -> Result<TimeSeries, ScenarioError> {
        let h = if lab { build_h_l(d, &space)? } else { build_h_t(d, &space)? };
        let psi = StateVector::basis(&space, &[(CAVITY_A, photons)])?;
        let obs = Observable::list(&space, &["n_a", "n_c"])?;
        let mut ts = evolve_state(&h, &psi, &grid, &obs, &opts)?;
        ts.metadata = cfg.metadata();
        ts.push_meta("hamiltonian", if lab { "linearized" } else { "mechanics_eliminated" });
        ts.push_meta("space", space.describe());
        Ok(ts)
    };
    Ok((
        run(SpaceSpec::lab(ca, cb, cc, cm)?, true)?,
        run(SpaceSpec::cavities(ca, cc, cm)?, false)?,
    ))
}

pub fn run_fig2(cfg: &ScenarioConfig) -> Result<Fig2Output, ScenarioError> {
    require(cfg.count("fig2_samples") >= 2, "fig2_samples must be at least 2")?;
    require(cfg.number("fig2_t_max") > 0.0, "fig2_t_max must be positive")?;
    require(
        cfg.count("fig2_photons") < cfg.count("cutoff_a"),
        "fig2_photons must be below cutoff_a",
    )?;
    let d = derive(&cfg.cascade_input())?;
    let cut = [
        cfg.count("cutoff_a"),
        cfg.count("cutoff_b"),
        cfg.count("cutoff_c"),
        cfg.count("cutoff_m"),
    ];
    let (lab, eliminated) = fig2_pair(cfg, &d, cut)?;
    let deviation = compare_levels(&lab, &eliminated)?;
    let convergence = if cfg.flag("fig2_convergence") {
        let (lab2, elim2) = fig2_pair(cfg, &d, cut.map(|c| 2 * c))?;
        let change = compare_levels(&lab, &lab2)?
            .max()
            .max(compare_levels(&eliminated, &elim2)?.max());
        let tol = cfg.number("fig2_convergence_tol");
        if change > tol {
            return Err(ScenarioError::Numerical(format!(
                "cutoff doubling changes the photon numbers by {change:.3e} > {tol:.1e}; raise the cutoffs or shorten fig2_t_max"
            )));
        }
        Some(change)
    } else {
        None
    };
    Ok(Fig2Output {
        lab,
        eliminated,
        deviation,
        convergence,
    })
}

// ---------------------------------------------------------------- fig3

/// Polariton spectrum against `G_sq/W_c` with `W_c = 1`.
pub fn run_fig3(cfg: &ScenarioConfig) -> Result<SweepSeries, ScenarioError> {
    let ratio = cfg.number("fig3_wa_over_wc");
    let k = cfg.number("fig3_k_over_wc");
    let points = cfg.count("fig3_points");
    require(ratio > 0.0, "fig3_wa_over_wc must be positive")?;
    require(k >= 0.0, "fig3_k_over_wc must be non-negative")?;
    require(points >= 2, "fig3_points must be at least 2")?;
    require(cfg.number("fig3_x_max") > 0.0, "fig3_x_max must be positive")?;
    let (w_a, w_c) = (ratio, 1.0);
    let x = linear_grid(0.0, cfg.number("fig3_x_max"), points);
    let rows = x
        .iter()
        .map(|&g| {
            let s = polariton_spectrum(w_a, w_c, g);
            vec![
                Cell::Num(s.omega_lbp_sq),
                Cell::Num(s.omega_ubp_sq),
                Cell::Text(stability_classify(w_a, w_c, g, k).as_str().to_string()),
            ]
        })
        .collect();
    Ok(SweepSeries {
        metadata: cfg.metadata(),
        columns: vec!["omega_lbp_sq".into(), "omega_ubp_sq".into(), "stability".into()],
        x,
        rows,
    })
}

/// First `G_sq/W_c` where `Ω_A²` reaches zero, by linear interpolation.
pub fn fig3_crossing(series: &SweepSeries) -> Option<f64> {
    let y = series.numeric("omega_lbp_sq")?;
    series.x.windows(2).zip(y.windows(2)).find_map(|(x, y)| {
        (y[0] > 0.0 && y[1] <= 0.0).then(|| x[0] + (x[1] - x[0]) * y[0] / (y[0] - y[1]))
    })
}

// ---------------------------------------------------------------- fig4

/// `|G_q/g_q|` against `Ω_A/W_c` for each configured squeezing parameter.
pub fn run_fig4(cfg: &ScenarioConfig) -> Result<SweepSeries, ScenarioError> {
    let (lo, hi) = (cfg.number("fig4_x_min"), cfg.number("fig4_x_max"));
    let points = cfg.count("fig4_points");
    require(lo > 0.0 && hi <= 1.0 && lo < hi, "fig4 grid must satisfy 0 < fig4_x_min < fig4_x_max <= 1")?;
    require(points >= 2, "fig4_points must be at least 2")?;
    let rs = cfg.list("fig4_r");
    let x = log_grid(lo, hi, points);
    let mut rows = Vec::with_capacity(points);
    for &omega in &x {
        let mut row = Vec::with_capacity(rs.len());
        for &r in &rs {
            let c = cp_effective_couplings(1.0, omega, 1.0, 1.0, r, r)?;
            row.push(Cell::Num(c.gq_cp.abs()));
        }
        rows.push(row);
    }
    Ok(SweepSeries {
        metadata: cfg.metadata(),
        columns: rs.iter().map(|r| format!("ratio_r{r}")).collect(),
        x,
        rows,
    })
}

// ---------------------------------------------------------------- fig5

pub struct Fig5Report {
    pub deviation_second_order: DeviationReport,
    pub deviation_effective: DeviationReport,
    pub max_lbp_occupation: f64,
    pub transfer_time: f64,
    pub expected_transfer_time: f64,
    pub open_maxima: Vec<(f64, f64)>,
    pub regime: RegimeReport,
}

pub struct Fig5Output {
    pub polariton: TimeSeries,
    pub second_order: TimeSeries,
    pub effective: TimeSeries,
    pub effective_open: TimeSeries,
    pub report: Fig5Report,
}

impl Fig5Report {
    pub fn transfer_error(&self) -> f64 {
        (self.transfer_time - self.expected_transfer_time).abs() / self.expected_transfer_time
    }

    pub fn maxima_decreasing(&self) -> bool {
        self.open_maxima.len() >= 2 && self.open_maxima.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

pub fn run_fig5(cfg: &ScenarioConfig, force: bool) -> Result<Fig5Output, ScenarioError> {
    require(cfg.count("fig5_samples") >= 3, "fig5_samples must be at least 3")?;
    require(cfg.number("fig5_periods") > 0.0, "fig5_periods must be positive")?;
    let mut input = cfg.cascade_input();
    // The protocol starts from the polariton vacuum.
    input.n_lbp = 0.0;
    let d = derive(&input)?;
    let regime = validate_regime(&d, &cfg.thresholds());
    if !force && !regime.all_mandatory_pass() {
        let failed: Vec<&str> = regime.mandatory_failures().map(|c| c.name).collect();
        return Err(ScenarioError::Regime(failed.join("; ")));
    }
    let lbp = d
        .lbp
        .ok_or_else(|| ScenarioError::Numerical("no lower polariton below criticality".into()))?;
    let g_eff = lbp.spin_magnon.g_eff.abs();
    if !(g_eff > 0.0) {
        return Err(ScenarioError::Numerical("effective exchange vanishes".into()));
    }
    let t_end = cfg.number("fig5_periods") * PI / g_eff;
    let grid = uniform_grid(t_end, cfg.count("fig5_samples"));
    let opts = cfg.integrator();

    let three = SpaceSpec::polariton(cfg.count("cutoff_m"), cfg.count("cutoff_lbp"))?;
    let two = SpaceSpec::spin_magnon(cfg.count("cutoff_m"))?;
    let closed = |space: &SpaceSpec, h: &Operator, label: &str, names: &[&str]| -> Result<TimeSeries, ScenarioError> {
        let psi = StateVector::basis(space, &[(QUBIT, 1)])?;
        let obs = Observable::list(space, names)?;
        let mut ts = evolve_state(h, &psi, &grid, &obs, &opts)?;
        ts.metadata = cfg.metadata();
        ts.push_meta("hamiltonian", label);
        ts.push_meta("space", space.describe());
        Ok(ts)
    };
    let full_obs = ["sz_q", "pe_q", "n_m", "n_A"];
    let polariton = closed(&three, &build_h_polariton(&d, &three)?, "polariton", &full_obs)?;
    let second_order = closed(&three, &build_h_eff_smp(&d, &three)?, "second_order", &full_obs)?;
    let h_eff = build_h_eff(&d, &two)?;
    let effective = closed(&two, &h_eff, "effective", &["sz_q", "pe_q", "n_m"])?;

    let model = LindbladModel::new(
        h_eff,
        vec![
            (ladder(&two, MAGNON)?, d.kappa_m),
            (pauli(&two, QUBIT, Pauli::Minus)?, d.gamma_q),
        ],
    )?;
    let rho0 = StateVector::basis(&two, &[(QUBIT, 1)])?.projector();
    let obs = Observable::list(&two, &["sz_q", "pe_q", "n_m"])?;
    let mut effective_open = evolve_density(&model, &rho0, &grid, &obs, &opts)?;
    effective_open.metadata = cfg.metadata();
    effective_open.push_meta("hamiltonian", "effective_lindblad");
    effective_open.push_meta("space", two.describe());

    let pick = |ts: &TimeSeries| -> TimeSeries {
        let mut out = ts.clone();
        out.columns.retain(|(n, _)| n == "pe_q" || n == "n_m");
        out
    };
    let deviation_second_order = compare_levels(&pick(&polariton), &pick(&second_order))?;
    let deviation_effective = compare_levels(&pick(&polariton), &pick(&effective))?;
    let max_lbp_occupation = polariton
        .column("n_A")
        .expect("requested")
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let pe = effective.column("pe_q").expect("requested");
    let transfer_time = local_minima(&grid, pe)
        .first()
        .map(|(t, _)| *t)
        .ok_or_else(|| ScenarioError::Numerical("no population minimum inside the window".into()))?;
    let open_maxima = local_maxima(&grid, effective_open.column("pe_q").expect("requested"));

    Ok(Fig5Output {
        polariton,
        second_order,
        effective,
        effective_open,
        report: Fig5Report {
            deviation_second_order,
            deviation_effective,
            max_lbp_occupation,
            transfer_time,
            expected_transfer_time: PI / (2.0 * g_eff),
            open_maxima,
            regime,
        },
    })
}

// ---------------------------------------------------------------- appendix C

/// Decay-dressed coupling magnitudes at the critical point against `W/K`.
pub fn run_appendix_c(cfg: &ScenarioConfig) -> Result<SweepSeries, ScenarioError> {
    let (lo, hi) = (cfg.number("appc_x_min"), cfg.number("appc_x_max"));
    let points = cfg.count("appc_points");
    require(lo > 0.0 && lo < hi, "appendix grid must satisfy 0 < appc_x_min < appc_x_max")?;
    require(points >= 2, "appc_points must be at least 2")?;
    let x = log_grid(lo, hi, points);
    let rows = x
        .iter()
        .map(|&w| {
            let (c_p, c_m) = ideal_cp_c_plus(w, 1.0);
            vec![Cell::Num(ideal_cp_a_plus(w, 1.0)), Cell::Num(c_p), Cell::Num(c_m)]
        })
        .collect();
    Ok(SweepSeries {
        metadata: cfg.metadata(),
        columns: vec!["a_plus".into(), "c_plus_p".into(), "c_plus_m".into()],
        x,
        rows,
    })
}

// ---------------------------------------------------------------- sweep

pub const SWEEP_COLUMNS: &[&str] = &[
    "g_sq", "g_cp", "g_cp_prime", "omega_lbp_sq", "omega_ubp_sq", "stability", "r_a", "r_c", "chi_a", "w_a", "w_c",
    "gq_cp", "gm_cp", "g_eff", "delta_q_eff", "error",
];

fn sweep_row(cfg: &ScenarioConfig, var: &str, x: f64) -> Vec<Cell> {
    let failed = |msg: String| {
        let mut row: Vec<Cell> = SWEEP_COLUMNS[..SWEEP_COLUMNS.len() - 1]
            .iter()
            .map(|c| {
                if *c == "stability" {
                    Cell::Text(String::new())
                } else {
                    Cell::Num(f64::NAN)
                }
            })
            .collect();
        row.push(Cell::Text(format!("\"{}\"", msg.replace('"', "'"))));
        row
    };
    let mut point = cfg.clone();
    if let Err(e) = point.set(var, &format!("{x:e}")) {
        return failed(e.to_string());
    }
    let d = match derive(&point.cascade_input()) {
        Ok(d) => d,
        Err(e) => return failed(e.to_string()),
    };
    let opt = |f: fn(&crate::params::LbpDerived) -> f64| Cell::Num(d.lbp.as_ref().map_or(f64::NAN, f));
    vec![
        Cell::Num(d.g_sq),
        Cell::Num(d.critical.g_cp),
        Cell::Num(d.critical.g_cp_prime),
        Cell::Num(d.spectrum.omega_lbp_sq),
        Cell::Num(d.spectrum.omega_ubp_sq),
        Cell::Text(stability_classify(d.w_a(), d.w_c(), d.g_sq, d.decay_sq).as_str().to_string()),
        Cell::Num(d.r_a),
        Cell::Num(d.r_c),
        Cell::Num(d.dispersive.chi_a),
        Cell::Num(d.w_a()),
        Cell::Num(d.w_c()),
        opt(|l| l.couplings.gq_cp),
        opt(|l| l.couplings.gm_cp),
        opt(|l| l.spin_magnon.g_eff),
        opt(|l| l.spin_magnon.delta_q_eff),
        Cell::Text(String::new()),
    ]
}

/// Runs the cascade at every grid value of `var` (given in the key's
/// configuration units), in parallel; rows keep the grid order.
pub fn run_sweep(cfg: &ScenarioConfig, var: &str, grid: &[f64]) -> Result<SweepSeries, ScenarioError> {
    require(SWEEPABLE.contains(&var), format!("'{var}' cannot be swept"))?;
    require(!grid.is_empty(), "sweep grid is empty")?;
    require(
        grid.iter().all(|x| x.is_finite())
            && (grid.windows(2).all(|w| w[1] > w[0]) || grid.windows(2).all(|w| w[1] < w[0])),
        "sweep grid must be strictly monotone",
    )?;
    let rows: Vec<Vec<Cell>> = grid.par_iter().map(|&x| sweep_row(cfg, var, x)).collect();
    let mut metadata = cfg.metadata();
    metadata.push(("sweep_variable".into(), var.into()));
    Ok(SweepSeries {
        metadata,
        columns: SWEEP_COLUMNS.iter().map(|c| c.to_string()).collect(),
        x: grid.to_vec(),
        rows,
    })
}

/// Grid from the `sweep_*` keys.
pub fn sweep_grid(cfg: &ScenarioConfig) -> Result<Vec<f64>, ScenarioError> {
    let (from, to, n) = (cfg.number("sweep_from"), cfg.number("sweep_to"), cfg.count("sweep_points"));
    require(n >= 1, "sweep_points must be at least 1")?;
    require(n == 1 || from != to, "sweep_from and sweep_to must differ")?;
    if cfg.raw("sweep_scale") == "log" {
        require(from > 0.0 && to > 0.0, "log sweeps need positive bounds")?;
        Ok(log_grid(from, to, n))
    } else {
        Ok(linear_grid(from, to, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_reproduce_reference_cascade() {
        let cfg = ScenarioConfig::default();
        let d = run_derive(&cfg).unwrap().derived;
        assert_relative_eq!(d.dispersive.chi_a, -1.256_637e8, max_relative = 1e-5);
        assert_relative_eq!(d.r_a, 2.649, max_relative = 1e-3);
        let lbp = d.lbp.unwrap();
        assert_relative_eq!(lbp.couplings.x_zpf, 353.55, max_relative = 1e-4);
        assert_relative_eq!(lbp.spin_magnon.g_eff, 3.14e7, max_relative = 1e-2);
    }

    #[test]
    fn parser_handles_comments_and_rejects_unknown_keys() {
        let cfg = ScenarioConfig::parse("# header\n\ng_q = 1e4  # Hz\ncutoff_m=4\n").unwrap();
        assert_relative_eq!(cfg.number("g_q"), hz(1e4));
        assert_eq!(cfg.count("cutoff_m"), 4);
        assert!(matches!(ScenarioConfig::parse("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ScenarioConfig::parse("g_q 1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ScenarioConfig::parse("g_q = fast"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(
            ScenarioConfig::parse("g_q = 1\ng_q = 2"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse("lbp_mode = sideways"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn detuning_forms() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("delta_q", "frequencies").unwrap();
        cfg.set("delta_m", "2.5e6").unwrap();
        let input = cfg.cascade_input();
        assert_eq!(input.spin_detuning, DetuningSpec::FromFrequencies);
        assert_eq!(input.magnon_detuning, DetuningSpec::Absolute(hz(2.5e6)));
        cfg.set("delta_q", "7G").unwrap();
        assert_eq!(cfg.cascade_input().spin_detuning, DetuningSpec::PerCoupling(7.0));
        assert!(cfg.set("delta_q", "xG").is_err());
    }

    #[test]
    fn near_threshold_override() {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_override("lbp_mode=fraction").unwrap();
        cfg.apply_override("g_sq_frac = 0.999999").unwrap();
        let d = run_derive(&cfg).unwrap().derived;
        let ratio = d.lbp.unwrap().omega_lbp / d.w_c();
        assert_relative_eq!(ratio, 1e-3, max_relative = 1e-3);
    }

    #[test]
    fn derive_csv_is_complete() {
        let cfg = ScenarioConfig::default();
        let out = run_derive(&cfg).unwrap();
        let mut buf = Vec::new();
        write_derive_csv(&cfg, &out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\nquantity,value,unit\n"));
        assert!(text.contains("\ng_eff,"));
        // W_c/Ω_A = 1e6 sits within the critical tolerance of G_cp.
        assert!(text.contains("\nstability,critical,"));
        assert!(text.contains("# cutoff_a = 5\n"));
        let mut buf = Vec::new();
        write_regime_csv(&out.report, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("\"G_eff > kappa_m\""));
    }

    #[test]
    fn fig3_crossings() {
        let cfg = ScenarioConfig::default();
        let s = run_fig3(&cfg).unwrap();
        let lbp = s.numeric("omega_lbp_sq").unwrap();
        assert_relative_eq!(lbp[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(s.numeric("omega_ubp_sq").unwrap()[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(fig3_crossing(&s).unwrap(), 0.5, epsilon = 1e-12);
        let stab = s.text("stability").unwrap();
        assert_eq!(stab[0], "stable");
        assert_eq!(stab[stab.len() - 1], "unstable");

        let mut cfg = ScenarioConfig::default();
        cfg.set("fig3_wa_over_wc", "4").unwrap();
        cfg.set("fig3_x_max", "2").unwrap();
        let s = run_fig3(&cfg).unwrap();
        assert_relative_eq!(fig3_crossing(&s).unwrap(), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn fig4_ratios() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("fig4_r", "0, 2, 3").unwrap();
        cfg.set("fig4_x_min", "0.125").unwrap();
        cfg.set("fig4_points", "5").unwrap();
        let s = run_fig4(&cfg).unwrap();
        assert_relative_eq!(s.numeric("ratio_r0").unwrap()[0], 0.5, max_relative = 1e-14);
        let r2 = s.numeric("ratio_r2").unwrap();
        let r3 = s.numeric("ratio_r3").unwrap();
        for (a, b) in r2.iter().zip(&r3) {
            assert_relative_eq!(b / a, std::f64::consts::E, max_relative = 1e-14);
        }

        let mut cfg = ScenarioConfig::default();
        cfg.set("fig4_r", "2.649").unwrap();
        cfg.set("fig4_points", "2").unwrap();
        let s = run_fig4(&cfg).unwrap();
        let at_min = s.numeric("ratio_r2.649").unwrap()[0];
        assert!(at_min > 2e3 && at_min < 3e3, "{at_min}");
    }

    #[test]
    fn appendix_c_table() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("appc_x_min", "1e-3").unwrap();
        cfg.set("appc_x_max", "1").unwrap();
        cfg.set("appc_points", "4").unwrap();
        let s = run_appendix_c(&cfg).unwrap();
        let a = s.numeric("a_plus").unwrap();
        assert_relative_eq!(a[3], 1.0 / (2.0 * 2f64.sqrt()), max_relative = 1e-12);
        assert!(a[0] < 1e-2);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sweep_over_decay_keeps_order_and_monotone_threshold() {
        let cfg = ScenarioConfig::default();
        let grid = linear_grid(0.0, 1e5, 21);
        let s = run_sweep(&cfg, "decay_sq", &grid).unwrap();
        assert_eq!(s.x, grid);
        let g = s.numeric("g_cp_prime").unwrap();
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(g[0], s.numeric("g_cp").unwrap()[0]);
    }

    #[test]
    fn sweep_through_threshold_flips_classification() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("lbp_mode", "fraction").unwrap();
        cfg.set("delta_q", "1e9").unwrap();
        cfg.set("delta_m", "1e9").unwrap();
        let s = run_sweep(&cfg, "g_sq_frac", &[0.5, 0.9, 1.1, 1.5]).unwrap();
        let stab = s.text("stability").unwrap();
        assert_eq!(stab, vec!["stable", "stable", "unstable", "unstable"]);
        let err = s.text("error").unwrap();
        assert!(err.iter().all(|e| e.is_empty()));
    }

    #[test]
    fn sweep_records_point_failures() {
        let cfg = ScenarioConfig::default();
        let s = run_sweep(&cfg, "wc_over_omega_a", &[1e6, 0.5]).unwrap();
        let err = s.text("error").unwrap();
        assert!(err[0].is_empty());
        assert!(err[1].contains("lower-polariton frequency"));
        assert!(s.numeric("g_eff").unwrap()[1].is_nan());
        assert!(run_sweep(&cfg, "cutoff_a", &[1.0]).is_err());
        assert!(run_sweep(&cfg, "g_q", &[1.0, 1.0]).is_err());
    }

    #[test]
    fn single_point_sweep_matches_derive() {
        let cfg = ScenarioConfig::default();
        let s = run_sweep(&cfg, "g_q", &[2e4]).unwrap();
        let d = run_derive(&cfg).unwrap().derived;
        assert_eq!(s.numeric("g_eff").unwrap()[0], d.lbp.unwrap().spin_magnon.g_eff);
        assert_eq!(s.numeric("g_sq").unwrap()[0], d.g_sq);
    }

    #[test]
    fn fig2_without_coupling_is_flat() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("g_lin_a", "0").unwrap();
        cfg.set("g_lin_c", "0").unwrap();
        cfg.set("delta_q", "1e9").unwrap();
        cfg.set("delta_m", "1e9").unwrap();
        cfg.set("g_q", "0").unwrap();
        cfg.set("g_m", "0").unwrap();
        cfg.set("cutoff_a", "3").unwrap();
        cfg.set("cutoff_b", "3").unwrap();
        cfg.set("cutoff_c", "3").unwrap();
        cfg.set("cutoff_m", "2").unwrap();
        cfg.set("fig2_samples", "11").unwrap();
        let out = run_fig2(&cfg).unwrap();
        for ts in [&out.lab, &out.eliminated] {
            assert!(ts.column("n_a").unwrap().iter().all(|v| (v - 1.0).abs() < 1e-8));
            assert!(ts.column("n_c").unwrap().iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn fig5_refuses_outside_regime() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("delta_q", "1G").unwrap();
        let err = run_fig5(&cfg, false).err().unwrap();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ScenarioError::Config(ConfigError::UnknownKey("x".into())).exit_code(), 2);
        assert_eq!(ScenarioError::Numerical("x".into()).exit_code(), 4);
    }
}
