//! Truncated tensor-product Fock spaces and the Hamiltonians of the reduction
//! chain.
//!
//! Subsystems are ordered first-most-significant. Two-level systems use
//! index 0 for the ground state and 1 for the excited state, so
//! `σ_z = diag(−1, +1)` and `σ⁺ = |1⟩⟨0|`. Operators are stored in CSR form.

use std::fmt;
use std::io::{self, Write};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use thiserror::Error;

use crate::params::DerivedParams;
use crate::quadratic::DecayDressedCoeffs;

pub const QUBIT: &str = "q";
pub const CAVITY_A: &str = "a";
pub const MECHANICS: &str = "b";
pub const CAVITY_C: &str = "c";
pub const MAGNON: &str = "m";
pub const LBP: &str = "A";
pub const UBP: &str = "C";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("unknown subsystem '{0}'")]
    UnknownLabel(String),
    #[error("subsystem '{label}' is {actual}, expected {expected}")]
    WrongKind {
        label: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("subsystem '{0}' is registered twice")]
    DuplicateLabel(String),
    #[error("cutoff of '{label}' is {cutoff}; at least 2 levels are required")]
    CutoffTooSmall { label: String, cutoff: usize },
    #[error("space must not contain subsystem '{0}'")]
    UnexpectedSubsystem(String),
    #[error("no lower polariton: the form is at or beyond criticality")]
    NoLowerPolariton,
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("level {level} of '{label}' is outside the truncated space")]
    LevelOutOfRange { label: String, level: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsystemKind {
    Boson { cutoff: usize },
    TwoLevel,
}

impl SubsystemKind {
    pub fn dim(&self) -> usize {
        match self {
            SubsystemKind::Boson { cutoff } => *cutoff,
            SubsystemKind::TwoLevel => 2,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SubsystemKind::Boson { .. } => "a boson",
            SubsystemKind::TwoLevel => "a two-level system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub kind: SubsystemKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceSpec {
    subsystems: Vec<Subsystem>,
}

impl SpaceSpec {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self, FockError> {
        for (i, s) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|o| o.label == s.label) {
                return Err(FockError::DuplicateLabel(s.label.clone()));
            }
            if let SubsystemKind::Boson { cutoff } = s.kind {
                if cutoff < 2 {
                    return Err(FockError::CutoffTooSmall {
                        label: s.label.clone(),
                        cutoff,
                    });
                }
            }
        }
        Ok(Self { subsystems })
    }

    /// Builds a space from `(label, cutoff)` pairs; `None` marks a two-level system.
    pub fn from_pairs(pairs: &[(&str, Option<usize>)]) -> Result<Self, FockError> {
        Self::new(
            pairs
                .iter()
                .map(|(label, cutoff)| Subsystem {
                    label: label.to_string(),
                    kind: match cutoff {
                        Some(n) => SubsystemKind::Boson { cutoff: *n },
                        None => SubsystemKind::TwoLevel,
                    },
                })
                .collect(),
        )
    }

    /// (q, a, b, c, m).
    pub fn lab(cut_a: usize, cut_b: usize, cut_c: usize, cut_m: usize) -> Result<Self, FockError> {
        Self::from_pairs(&[
            (QUBIT, None),
            (CAVITY_A, Some(cut_a)),
            (MECHANICS, Some(cut_b)),
            (CAVITY_C, Some(cut_c)),
            (MAGNON, Some(cut_m)),
        ])
    }

    /// (q, a, c, m).
    pub fn cavities(cut_a: usize, cut_c: usize, cut_m: usize) -> Result<Self, FockError> {
        Self::from_pairs(&[
            (QUBIT, None),
            (CAVITY_A, Some(cut_a)),
            (CAVITY_C, Some(cut_c)),
            (MAGNON, Some(cut_m)),
        ])
    }

    /// (q, m, A).
    pub fn polariton(cut_m: usize, cut_lbp: usize) -> Result<Self, FockError> {
        Self::from_pairs(&[(QUBIT, None), (MAGNON, Some(cut_m)), (LBP, Some(cut_lbp))])
    }

    /// (q, m).
    pub fn spin_magnon(cut_m: usize) -> Result<Self, FockError> {
        Self::from_pairs(&[(QUBIT, None), (MAGNON, Some(cut_m))])
    }

    /// (q, m, A, C).
    pub fn polaritons(cut_m: usize, cut_lbp: usize, cut_ubp: usize) -> Result<Self, FockError> {
        Self::from_pairs(&[
            (QUBIT, None),
            (MAGNON, Some(cut_m)),
            (LBP, Some(cut_lbp)),
            (UBP, Some(cut_ubp)),
        ])
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.kind.dim()).collect()
    }

    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.label == label)
    }

    fn lookup(&self, label: &str) -> Result<(usize, &Subsystem), FockError> {
        self.position(label)
            .map(|i| (i, &self.subsystems[i]))
            .ok_or_else(|| FockError::UnknownLabel(label.to_string()))
    }

    fn require(&self, labels: &[&str]) -> Result<(), FockError> {
        for l in labels {
            self.lookup(l)?;
        }
        Ok(())
    }

    /// Flat index of a product basis state given one level per subsystem.
    pub fn basis_index(&self, levels: &[usize]) -> usize {
        debug_assert_eq!(levels.len(), self.subsystems.len());
        levels
            .iter()
            .zip(self.dims())
            .fold(0, |acc, (&l, d)| acc * d + l)
    }

    /// Flat index with the listed `(label, level)` occupations and every other
    /// subsystem in its ground state.
    pub fn index_of(&self, occupied: &[(&str, usize)]) -> Result<usize, FockError> {
        let mut levels = vec![0; self.subsystems.len()];
        for (label, level) in occupied {
            let (i, s) = self.lookup(label)?;
            if *level >= s.kind.dim() {
                return Err(FockError::LevelOutOfRange {
                    label: label.to_string(),
                    level: *level,
                });
            }
            levels[i] = *level;
        }
        Ok(self.basis_index(&levels))
    }

    pub fn describe(&self) -> String {
        self.subsystems
            .iter()
            .map(|s| match s.kind {
                SubsystemKind::Boson { cutoff } => format!("{}:{}", s.label, cutoff),
                SubsystemKind::TwoLevel => format!("{}:2", s.label),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

fn cz(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Operator on a [`SpaceSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: SpaceSpec,
    matrix: CsrMatrix<Complex64>,
}

impl Operator {
    pub fn identity(space: &SpaceSpec) -> Self {
        Self {
            space: space.clone(),
            matrix: CsrMatrix::identity(space.dim()),
        }
    }

    pub fn zero(space: &SpaceSpec) -> Self {
        let n = space.dim();
        Self {
            space: space.clone(),
            matrix: CsrMatrix::zeros(n, n),
        }
    }

    pub fn from_dense(space: &SpaceSpec, m: &DMatrix<Complex64>) -> Result<Self, FockError> {
        let n = space.dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(FockError::DimensionMismatch {
                expected: n,
                actual: m.nrows(),
            });
        }
        let mut coo = CooMatrix::new(n, n);
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if v != cz(0.0) {
                    coo.push(i, j, v);
                }
            }
        }
        Ok(Self {
            space: space.clone(),
            matrix: CsrMatrix::from(&coo),
        })
    }

    /// Embeds a local `d×d` matrix acting on `label`, with identities elsewhere.
    pub fn embed(space: &SpaceSpec, label: &str, local: &DMatrix<Complex64>) -> Result<Self, FockError> {
        let (pos, sub) = space.lookup(label)?;
        let dims = space.dims();
        let d = sub.kind.dim();
        if local.nrows() != d || local.ncols() != d {
            return Err(FockError::DimensionMismatch {
                expected: d,
                actual: local.nrows(),
            });
        }
        let left: usize = dims[..pos].iter().product();
        let right: usize = dims[pos + 1..].iter().product();
        let n = space.dim();
        let nonzeros: Vec<(usize, usize, Complex64)> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = local[(i, j)];
                (v != cz(0.0)).then_some((i, j, v))
            })
            .collect();
        let mut coo = CooMatrix::new(n, n);
        for l in 0..left {
            for &(i, j, v) in &nonzeros {
                for r in 0..right {
                    coo.push((l * d + i) * right + r, (l * d + j) * right + r, v);
                }
            }
        }
        Ok(Self {
            space: space.clone(),
            matrix: CsrMatrix::from(&coo),
        })
    }

    /// Drops explicitly stored zeros.
    pub fn pruned(&self) -> Self {
        let n = self.dim();
        let mut coo = CooMatrix::new(n, n);
        for (i, j, v) in self.matrix.triplet_iter() {
            if *v != cz(0.0) {
                coo.push(i, j, *v);
            }
        }
        Self {
            space: self.space.clone(),
            matrix: CsrMatrix::from(&coo),
        }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn csr(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn adjoint(&self) -> Self {
        let mut t = self.matrix.transpose();
        for v in t.values_mut() {
            *v = v.conj();
        }
        Self {
            space: self.space.clone(),
            matrix: t,
        }
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.matrix
            .get_entry(row, col)
            .map_or(cz(0.0), |e| e.into_value())
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖H − H†‖_max`.
    pub fn hermiticity_error(&self) -> f64 {
        (self - &self.adjoint()).max_abs()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= 1e-12 * self.max_abs()
    }

    /// Gershgorin enclosure `[lo, hi]` of the real parts of the spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, row) in self.matrix.row_iter().enumerate() {
            let mut center = 0.0;
            let mut radius = 0.0;
            for (&j, v) in row.col_indices().iter().zip(row.values()) {
                if j == i {
                    center = v.re;
                    radius += v.im.abs();
                } else {
                    radius += v.norm();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// `y ← self · x`.
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (offsets, cols, vals) = self.matrix.csr_data();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = cz(0.0);
            for k in offsets[i]..offsets[i + 1] {
                acc += vals[k] * x[cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut y = DVector::zeros(x.len());
        self.apply_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.matrix.triplet_iter() {
            m[(i, j)] += *v;
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.diagonal_as_csr().values().iter().sum()
    }

    /// Row-major dump, one matrix row per line as `re,im,re,im,…`.
    pub fn write_golden_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let dense = self.to_dense();
        for i in 0..dense.nrows() {
            let row: Vec<String> = (0..dense.ncols())
                .map(|j| {
                    let v = dense[(i, j)];
                    format!("{:.16e},{:.16e}", v.re, v.im)
                })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_space(a: &Operator, b: &Operator) {
    assert_eq!(a.space, b.space, "operators live on different spaces");
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        check_space(self, rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        check_space(self, rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        check_space(self, rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Mul<Complex64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: Complex64) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix * rhs,
        }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self * cz(rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self * -1.0
    }
}

/// Spin operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    Z,
    Plus,
    Minus,
}

fn require_kind(space: &SpaceSpec, label: &str, boson: bool) -> Result<(), FockError> {
    let (_, s) = space.lookup(label)?;
    let ok = matches!(
        (s.kind, boson),
        (SubsystemKind::Boson { .. }, true) | (SubsystemKind::TwoLevel, false)
    );
    if ok {
        Ok(())
    } else {
        Err(FockError::WrongKind {
            label: label.to_string(),
            expected: if boson { "a boson" } else { "a two-level system" },
            actual: s.kind.name(),
        })
    }
}

/// Annihilation operator of a bosonic subsystem.
pub fn ladder(space: &SpaceSpec, label: &str) -> Result<Operator, FockError> {
    require_kind(space, label, true)?;
    let (_, s) = space.lookup(label)?;
    let n = s.kind.dim();
    let mut local = DMatrix::zeros(n, n);
    for k in 1..n {
        local[(k - 1, k)] = cz((k as f64).sqrt());
    }
    Operator::embed(space, label, &local)
}

pub fn number(space: &SpaceSpec, label: &str) -> Result<Operator, FockError> {
    require_kind(space, label, true)?;
    let (_, s) = space.lookup(label)?;
    let n = s.kind.dim();
    let local = DMatrix::from_fn(n, n, |i, j| if i == j { cz(i as f64) } else { cz(0.0) });
    Operator::embed(space, label, &local)
}

pub fn pauli(space: &SpaceSpec, label: &str, which: Pauli) -> Result<Operator, FockError> {
    require_kind(space, label, false)?;
    let mut local = DMatrix::zeros(2, 2);
    match which {
        Pauli::Z => {
            local[(0, 0)] = cz(-1.0);
            local[(1, 1)] = cz(1.0);
        }
        Pauli::Plus => local[(1, 0)] = cz(1.0),
        Pauli::Minus => local[(0, 1)] = cz(1.0),
    }
    Operator::embed(space, label, &local)
}

/// Excited-state projector `σ⁺σ⁻` of a two-level subsystem.
pub fn excited(space: &SpaceSpec, label: &str) -> Result<Operator, FockError> {
    require_kind(space, label, false)?;
    let mut local = DMatrix::zeros(2, 2);
    local[(1, 1)] = cz(1.0);
    Operator::embed(space, label, &local)
}

/// Sum of boson numbers and two-level excitations over every subsystem.
pub fn total_excitations(space: &SpaceSpec) -> Operator {
    let mut n = Operator::zero(space);
    for s in space.subsystems() {
        let term = match s.kind {
            SubsystemKind::Boson { .. } => number(space, &s.label),
            SubsystemKind::TwoLevel => excited(space, &s.label),
        }
        .expect("label taken from the space");
        n = &n + &term;
    }
    n
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: SpaceSpec,
    data: DVector<Complex64>,
}

impl StateVector {
    pub fn new(space: &SpaceSpec, data: DVector<Complex64>) -> Result<Self, FockError> {
        if data.len() != space.dim() {
            return Err(FockError::DimensionMismatch {
                expected: space.dim(),
                actual: data.len(),
            });
        }
        let norm = data.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(FockError::NotNormalized(norm));
        }
        Ok(Self {
            space: space.clone(),
            data,
        })
    }

    /// Product basis state with the given occupations and all else in ground.
    pub fn basis(space: &SpaceSpec, occupied: &[(&str, usize)]) -> Result<Self, FockError> {
        let idx = space.index_of(occupied)?;
        let mut data = DVector::zeros(space.dim());
        data[idx] = cz(1.0);
        Ok(Self {
            space: space.clone(),
            data,
        })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn data(&self) -> &DVector<Complex64> {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn expectation(&self, op: &Operator) -> Complex64 {
        self.data.dotc(&op.apply(&self.data))
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix {
            space: self.space.clone(),
            data: &self.data * self.data.adjoint(),
        }
    }
}

/// Density matrix, stored dense.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: SpaceSpec,
    data: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(space: &SpaceSpec, data: DMatrix<Complex64>) -> Result<Self, FockError> {
        let rho = Self {
            space: space.clone(),
            data,
        };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(space: &SpaceSpec, data: DMatrix<Complex64>) -> Self {
        Self {
            space: space.clone(),
            data,
        }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn data(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.data - self.data.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * cz(0.5);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<(), FockError> {
        let n = self.space.dim();
        if self.data.nrows() != n || self.data.ncols() != n {
            return Err(FockError::DimensionMismatch {
                expected: n,
                actual: self.data.nrows(),
            });
        }
        if self.hermiticity_error() > 1e-12 {
            return Err(FockError::InvalidDensity("not Hermitian".into()));
        }
        let tr = self.trace();
        if (tr - cz(1.0)).norm() > 1e-10 {
            return Err(FockError::InvalidDensity(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(FockError::InvalidDensity(format!("eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// `tr(ρ O)`.
    pub fn expectation(&self, op: &Operator) -> Complex64 {
        let mut acc = cz(0.0);
        for (i, j, v) in op.csr().triplet_iter() {
            acc += v * self.data[(j, i)];
        }
        acc
    }
}

/// Position-like quadrature `x = a + a†` of a boson.
fn quadrature(space: &SpaceSpec, label: &str) -> Result<Operator, FockError> {
    let a = ladder(space, label)?;
    Ok(&a + &a.adjoint())
}

/// `g (x σ⁺ + x† σ⁻)` for an arbitrary operator `x`.
fn exchange(x: &Operator, y_dag: &Operator, g: Complex64) -> Operator {
    let term = &(x * y_dag) * g;
    &term + &term.adjoint()
}

struct Ops {
    space: SpaceSpec,
}

impl Ops {
    fn a(&self, label: &str) -> Result<Operator, FockError> {
        ladder(&self.space, label)
    }

    fn n(&self, label: &str) -> Result<Operator, FockError> {
        number(&self.space, label)
    }

    fn sz(&self) -> Result<Operator, FockError> {
        pauli(&self.space, QUBIT, Pauli::Z)
    }

    fn sm(&self) -> Result<Operator, FockError> {
        pauli(&self.space, QUBIT, Pauli::Minus)
    }
}

fn sum(terms: &[Operator]) -> Operator {
    let mut it = terms.iter();
    let first = it.next().expect("at least one term").clone();
    it.fold(first, |acc, t| &acc + t).pruned()
}

/// Spin and magnon free terms with their bare exchange to the cavities:
/// `½Δ_q σ_z + g_q(a†σ⁻ + aσ⁺) + Δ_m m†m + g_m(c†m + m†c)`.
fn bare_spin_magnon(d: &DerivedParams, ops: &Ops) -> Result<Operator, FockError> {
    let a = ops.a(CAVITY_A)?;
    let c = ops.a(CAVITY_C)?;
    let m = ops.a(MAGNON)?;
    Ok(sum(&[
        &ops.sz()? * (0.5 * d.delta_q),
        exchange(&a.adjoint(), &ops.sm()?, cz(d.g_q)),
        &ops.n(MAGNON)? * d.delta_m,
        exchange(&c.adjoint(), &m, cz(d.g_m)),
    ]))
}

/// Linearized optomechanical Hamiltonian with spin and magnon, on (q, a, b, c, m).
pub fn build_h_l(d: &DerivedParams, space: &SpaceSpec) -> Result<Operator, FockError> {
    space.require(&[QUBIT, CAVITY_A, MECHANICS, CAVITY_C, MAGNON])?;
    let ops = Ops { space: space.clone() };
    let l = &d.linear;
    let xb = quadrature(space, MECHANICS)?;
    Ok(sum(&[
        &ops.n(CAVITY_A)? * l.delta_a_p,
        &ops.n(MECHANICS)? * d.omega_b,
        &ops.n(CAVITY_C)? * l.delta_c_p,
        &(&quadrature(space, CAVITY_A)? * &xb) * l.g_lin_a,
        &(&quadrature(space, CAVITY_C)? * &xb) * l.g_lin_c,
        bare_spin_magnon(d, &ops)?,
    ]))
}

/// Hamiltonian after eliminating the mechanical mode, on (q, a, c, m).
pub fn build_h_t(d: &DerivedParams, space: &SpaceSpec) -> Result<Operator, FockError> {
    if space.contains(MECHANICS) {
        return Err(FockError::UnexpectedSubsystem(MECHANICS.into()));
    }
    space.require(&[QUBIT, CAVITY_A, CAVITY_C, MAGNON])?;
    let ops = Ops { space: space.clone() };
    let l = &d.linear;
    let x = &d.dispersive;
    let xa = quadrature(space, CAVITY_A)?;
    let xc = quadrature(space, CAVITY_C)?;
    Ok(sum(&[
        &ops.n(CAVITY_A)? * l.delta_a_p,
        &ops.n(CAVITY_C)? * l.delta_c_p,
        &(&xa * &xc) * x.g_ac,
        &(&xa * &xa) * (0.5 * x.chi_a),
        &(&xc * &xc) * (0.5 * x.chi_c),
        bare_spin_magnon(d, &ops)?,
    ]))
}

/// Which spin/magnon couplings are kept in the squeezing frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqueezedVariant {
    /// Both the `e^{+r}` and the `e^{−r}` terms.
    Full,
    /// Only the `e^{+r}` terms.
    Leading,
    /// Leading terms with counter-rotating parts dropped.
    Rwa,
}

/// Hamiltonian in the squeezing frame, on (q, a, c, m); `a`, `c` are the
/// squeezed modes.
pub fn build_h_squeezed(
    d: &DerivedParams,
    space: &SpaceSpec,
    variant: SqueezedVariant,
) -> Result<Operator, FockError> {
    space.require(&[QUBIT, CAVITY_A, CAVITY_C, MAGNON])?;
    let ops = Ops { space: space.clone() };
    let a = ops.a(CAVITY_A)?;
    let c = ops.a(CAVITY_C)?;
    let m = ops.a(MAGNON)?;
    let sm = ops.sm()?;
    let sp = sm.adjoint();
    let xa = &a + &a.adjoint();
    let xc = &c + &c.adjoint();
    let (up_a, down_a) = (0.5 * d.g_q * d.r_a.exp(), 0.5 * d.g_q * (-d.r_a).exp());
    let (up_c, down_c) = (0.5 * d.g_m * d.r_c.exp(), 0.5 * d.g_m * (-d.r_c).exp());

    let mut terms = vec![
        &ops.n(CAVITY_A)? * d.w_a(),
        &ops.n(CAVITY_C)? * d.w_c(),
        &(&xa * &xc) * d.g_sq,
        &ops.sz()? * (0.5 * d.delta_q),
        &ops.n(MAGNON)? * d.delta_m,
    ];
    match variant {
        SqueezedVariant::Rwa => {
            terms.push(exchange(&a.adjoint(), &sm, cz(up_a)));
            terms.push(exchange(&c.adjoint(), &m, cz(up_c)));
        }
        SqueezedVariant::Full | SqueezedVariant::Leading => {
            let sx = &sp + &sm;
            let mx = &m + &m.adjoint();
            terms.push(&(&xa * &sx) * up_a);
            terms.push(&(&xc * &mx) * up_c);
            if variant == SqueezedVariant::Full {
                let pa = &a.adjoint() - &a;
                let pc = &c.adjoint() - &c;
                terms.push(&(&pa * &(&sp - &sm)) * -down_a);
                terms.push(&(&pc * &(&m.adjoint() - &m)) * -down_c);
            }
        }
    }
    Ok(sum(&terms))
}

fn lbp_or_err(d: &DerivedParams) -> Result<&crate::params::LbpDerived, FockError> {
    d.lbp.as_ref().ok_or(FockError::NoLowerPolariton)
}

/// Spin, magnon and lower polariton in the rotating-wave approximation, on
/// (q, m, A).
pub fn build_h_polariton(d: &DerivedParams, space: &SpaceSpec) -> Result<Operator, FockError> {
    space.require(&[QUBIT, MAGNON, LBP])?;
    let lbp = lbp_or_err(d)?;
    let ops = Ops { space: space.clone() };
    let big_a = ops.a(LBP)?;
    let m = ops.a(MAGNON)?;
    Ok(sum(&[
        &ops.sz()? * (0.5 * d.delta_q),
        &ops.n(MAGNON)? * d.delta_m,
        &ops.n(LBP)? * lbp.omega_lbp,
        exchange(&big_a.adjoint(), &ops.sm()?, cz(lbp.couplings.gq_cp)),
        exchange(&big_a.adjoint(), &m, cz(lbp.couplings.gm_cp)),
    ]))
}

/// Second-order spin–magnon–polariton Hamiltonian, on (q, m, A).
pub fn build_h_eff_smp(d: &DerivedParams, space: &SpaceSpec) -> Result<Operator, FockError> {
    space.require(&[QUBIT, MAGNON, LBP])?;
    let lbp = lbp_or_err(d)?;
    let sm_params = &lbp.spin_magnon;
    let ops = Ops { space: space.clone() };
    let n_a = ops.n(LBP)?;
    let n_m = ops.n(MAGNON)?;
    let sz = ops.sz()?;
    let half = &Operator::identity(space) * 0.5;
    let gq_zq = lbp.couplings.gq_cp * sm_params.zeta_q;
    let gm_zm = lbp.couplings.gm_cp * sm_params.zeta_m;
    Ok(sum(&[
        &sz * (0.5 * d.delta_q),
        &n_m * d.delta_m,
        &n_a * lbp.omega_lbp,
        &(&(&n_a + &half) * &sz) * gq_zq,
        &(&n_a - &n_m) * -gm_zm,
        exchange(&ops.a(MAGNON)?.adjoint(), &ops.sm()?, cz(sm_params.g_eff)),
    ]))
}

/// Effective spin–magnon exchange Hamiltonian, on (q, m).
pub fn build_h_eff(d: &DerivedParams, space: &SpaceSpec) -> Result<Operator, FockError> {
    space.require(&[QUBIT, MAGNON])?;
    let sm_params = &lbp_or_err(d)?.spin_magnon;
    let ops = Ops { space: space.clone() };
    Ok(sum(&[
        &ops.sz()? * (0.5 * sm_params.delta_q_eff),
        &ops.n(MAGNON)? * sm_params.delta_m_eff,
        exchange(&ops.a(MAGNON)?.adjoint(), &ops.sm()?, cz(sm_params.g_eff)),
    ]))
}

/// Spin and magnon coupled to both polaritons through decay-dressed
/// coefficients, on (q, m, A, C). `omega_lbp`, `omega_ubp` are the (real)
/// polariton frequencies.
pub fn build_h_decay_full(
    d: &DerivedParams,
    coeffs: &DecayDressedCoeffs,
    omega_lbp: f64,
    omega_ubp: f64,
    space: &SpaceSpec,
) -> Result<Operator, FockError> {
    space.require(&[QUBIT, MAGNON, LBP, UBP])?;
    let ops = Ops { space: space.clone() };
    let big_a = ops.a(LBP)?;
    let big_c = ops.a(UBP)?;
    let m = ops.a(MAGNON)?;
    let sm = ops.sm()?;
    let eq = d.g_q * d.r_a.exp();
    let em = d.g_m * d.r_c.exp();
    let phase_a = Complex64::from_polar(1.0, coeffs.phase_a_plus);
    let phase_c = Complex64::from_polar(1.0, coeffs.phase_c_plus);
    // (G A + G' C) σ⁺ + h.c. is the exchange of σ⁻ with A† and C†.
    let spin = sum(&[
        exchange(&sm.adjoint(), &big_a, phase_a * (eq * coeffs.a_plus)),
        exchange(&sm.adjoint(), &big_c, phase_c * (eq * coeffs.c_plus)),
    ]);
    let magnon = sum(&[
        exchange(&m.adjoint(), &big_a, phase_a * (-em * coeffs.a_plus)),
        exchange(&m.adjoint(), &big_c, phase_c * (-em * coeffs.c_plus)),
    ]);
    Ok(sum(&[
        &ops.sz()? * (0.5 * d.delta_q),
        &ops.n(MAGNON)? * d.delta_m,
        &ops.n(LBP)? * omega_lbp,
        &ops.n(UBP)? * omega_ubp,
        spin,
        magnon,
    ]))
}
