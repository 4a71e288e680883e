//! Two-mode quadratic bosonic forms
//! `W_a a†a + W_c c†c + G (a† + a)(c† + c)`.
//!
//! Operator vectors are ordered `(a, a†, c, c†)`. The commutation metric is
//! `η = diag(1, −1, 1, −1)`, and the form is written `H = ½ R† M R`.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use thiserror::Error;

use crate::params::{critical_coupling, mixing_angle, polariton_spectrum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadraticError {
    #[error("form is not below criticality (Omega_A^2 = {omega_lbp_sq:e}); no Bogoliubov map")]
    NotDiagonalizable { omega_lbp_sq: f64 },
    #[error("mode frequencies must be positive (W_a = {w_a}, W_c = {w_c})")]
    NonPositiveFrequency { w_a: f64, w_c: f64 },
    #[error("near-critical projection invalid: {reason} ({value:e} > {bound:e})")]
    ProjectionInvalid {
        reason: &'static str,
        value: f64,
        bound: f64,
    },
    #[error("degenerate normalization: eigenvalue {0} vanishes")]
    DegenerateNormalization(&'static str),
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `η = diag(1, −1, 1, −1)`.
pub fn metric() -> Matrix4<Complex64> {
    Matrix4::from_diagonal(&Vector4::new(c(1.0), c(-1.0), c(1.0), c(-1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBosonForm {
    pub w_a: f64,
    pub w_c: f64,
    pub g: f64,
}

impl QuadraticBosonForm {
    pub fn new(w_a: f64, w_c: f64, g: f64) -> Self {
        Self { w_a, w_c, g }
    }

    /// Coefficient matrix `M` of `H = ½ R† M R` (zero-point constants dropped).
    pub fn coefficient_matrix(&self) -> Matrix4<Complex64> {
        let (wa, wc, g) = (c(self.w_a), c(self.w_c), c(self.g));
        let z = c(0.0);
        Matrix4::new(
            wa, z, g, g, //
            z, wa, g, g, //
            g, g, wc, z, //
            g, g, z, wc,
        )
    }
}

/// Langevin coefficient matrix: `dR/dt = D R + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalMatrix {
    pub d: Matrix4<Complex64>,
    pub k_a: f64,
    pub k_c: f64,
}

impl DynamicalMatrix {
    /// Frequency matrix `iD`; its eigenvalues are complex frequencies whose
    /// imaginary parts are (minus) the decay rates.
    pub fn frequency_matrix(&self) -> Matrix4<Complex64> {
        self.d * Complex64::i()
    }

    /// Eigenvalues of `iD` from a complex Schur decomposition.
    pub fn eigenvalues(&self) -> [Complex64; 4] {
        let ev = self
            .frequency_matrix()
            .schur()
            .eigenvalues()
            .expect("complex Schur form is triangular");
        [ev[0], ev[1], ev[2], ev[3]]
    }
}

pub fn dynamical_matrix(form: &QuadraticBosonForm, k_a: f64, k_c: f64) -> DynamicalMatrix {
    let i = Complex64::i();
    let decay = Matrix4::from_diagonal(&Vector4::new(c(k_a), c(k_a), c(k_c), c(k_c)));
    let d = -decay - metric() * form.coefficient_matrix() * i;
    DynamicalMatrix { d, k_a, k_c }
}

/// Square root of a real radicand; negative radicands go to the lower half
/// plane so that the decaying branch labels stay attached to the same roots.
fn branch_sqrt(x: f64) -> Complex64 {
    if x >= 0.0 {
        c(x.sqrt())
    } else {
        Complex64::new(0.0, -(-x).sqrt())
    }
}

/// The four equal-decay eigenvalues `−iK ∓ Ω_A`, `−iK ∓ Ω_C` of `iD`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormEigenvalues {
    pub lbp_minus: Complex64,
    pub lbp_plus: Complex64,
    pub ubp_minus: Complex64,
    pub ubp_plus: Complex64,
}

impl ClosedFormEigenvalues {
    pub fn as_array(&self) -> [Complex64; 4] {
        [self.lbp_minus, self.lbp_plus, self.ubp_minus, self.ubp_plus]
    }
}

pub fn closed_form_eigenvalues(w_a: f64, w_c: f64, g: f64, k: f64) -> ClosedFormEigenvalues {
    let s = polariton_spectrum(w_a, w_c, g);
    let shift = Complex64::new(0.0, -k);
    let lbp = branch_sqrt(s.omega_lbp_sq);
    let ubp = branch_sqrt(s.omega_ubp_sq);
    ClosedFormEigenvalues {
        lbp_minus: shift - lbp,
        lbp_plus: shift + lbp,
        ubp_minus: shift - ubp,
        ubp_plus: shift + ubp,
    }
}

/// Polariton operators `P = (A, A†, C, C†) = T R` and the inverse `R = S P`.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovMap {
    pub forward: Matrix4<Complex64>,
    pub inverse: Matrix4<Complex64>,
    pub omega_lbp: f64,
    pub omega_ubp: f64,
    pub theta: f64,
}

impl BogoliubovMap {
    /// `‖T η T† − η‖_max`.
    pub fn metric_error(&self) -> f64 {
        let eta = metric();
        max_abs(&(self.forward * eta * self.forward.adjoint() - eta))
    }

    /// `‖S T − 1‖_max`.
    pub fn round_trip_error(&self) -> f64 {
        max_abs(&(self.inverse * self.forward - Matrix4::identity()))
    }

    /// `S† M S`, which should equal `diag(Ω_A, Ω_A, Ω_C, Ω_C)`.
    pub fn transformed_form(&self, form: &QuadraticBosonForm) -> Matrix4<Complex64> {
        self.inverse.adjoint() * form.coefficient_matrix() * self.inverse
    }

    /// Coefficient of `A` in `a_s`; tends to `x_zpf` near the critical point.
    pub fn lbp_amplitude_in_a(&self) -> Complex64 {
        self.inverse[(0, 0)]
    }

    /// Coefficient of `A` in `c_s`; tends to `−x_zpf` near the critical point.
    pub fn lbp_amplitude_in_c(&self) -> Complex64 {
        self.inverse[(2, 0)]
    }
}

pub fn max_abs(m: &Matrix4<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn bogoliubov_diagonalize(form: &QuadraticBosonForm) -> Result<BogoliubovMap, QuadraticError> {
    let (wa, wc) = (form.w_a, form.w_c);
    if !(wa > 0.0 && wc > 0.0) {
        return Err(QuadraticError::NonPositiveFrequency { w_a: wa, w_c: wc });
    }
    let s = polariton_spectrum(wa, wc, form.g);
    let oa = s
        .omega_lbp()
        .ok_or(QuadraticError::NotDiagonalizable { omega_lbp_sq: s.omega_lbp_sq })?;
    let oc = s.omega_ubp();
    let theta = mixing_angle(wa, wc, form.g);
    let (sin, cos) = theta.sin_cos();

    // (u, v) pair of a single squeezed quadrature projected on a polariton.
    let pair = |omega: f64, w: f64| {
        let n = 2.0 * (w * omega).sqrt();
        ((omega + w) / n, (omega - w) / n)
    };
    let (ua, va) = pair(oa, wa);
    let (uca, vca) = pair(oa, wc);
    let (uac, vac) = pair(oc, wa);
    let (uc, vc) = pair(oc, wc);

    let row_a = [cos * ua, cos * va, -sin * uca, -sin * vca];
    let row_c = [sin * uac, sin * vac, cos * uc, cos * vc];
    let mut t = Matrix4::zeros();
    for j in 0..4 {
        t[(0, j)] = c(row_a[j]);
        t[(2, j)] = c(row_c[j]);
    }
    // Daggered rows: swap the roles of each annihilation/creation pair.
    for (dst, src) in [(1, 0), (3, 2)] {
        for (j, jj) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            t[(dst, j)] = t[(src, jj)].conj();
        }
    }
    let eta = metric();
    let inverse = eta * t.adjoint() * eta;
    Ok(BogoliubovMap {
        forward: t,
        inverse,
        omega_lbp: oa,
        omega_ubp: oc,
        theta,
    })
}

/// `a_s ≈ x_zpf (A + A†)`, `c_s ≈ −x_zpf (A + A†)` close to the resonant
/// critical point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProjection {
    pub a_coeff: f64,
    pub c_coeff: f64,
    pub x_zpf: f64,
}

pub fn cp_mode_projection(
    w_a: f64,
    w_c: f64,
    omega_lbp: f64,
    max_ratio: f64,
) -> Result<ModeProjection, QuadraticError> {
    if !(omega_lbp > 0.0) {
        return Err(QuadraticError::DegenerateNormalization("Omega_A"));
    }
    let mismatch = (w_a - w_c).abs() / w_c;
    if mismatch > max_ratio {
        return Err(QuadraticError::ProjectionInvalid {
            reason: "|W_a - W_c|/W_c",
            value: mismatch,
            bound: max_ratio,
        });
    }
    let ratio = omega_lbp / w_c;
    if ratio > max_ratio {
        return Err(QuadraticError::ProjectionInvalid {
            reason: "Omega_A/W_c",
            value: ratio,
            bound: max_ratio,
        });
    }
    let x_zpf = (w_c / (8.0 * omega_lbp)).sqrt();
    Ok(ModeProjection {
        a_coeff: x_zpf,
        c_coeff: -x_zpf,
        x_zpf,
    })
}

/// Decay-dressed coefficients of the resonant equal-decay map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayDressedCoeffs {
    pub a_plus: f64,
    pub a_minus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub phase_a_plus: f64,
    pub phase_a_minus: f64,
    pub phase_c_plus: f64,
    pub phase_c_minus: f64,
}

fn dressed_magnitude(w: f64, k: f64, omega: Complex64, sign: f64) -> f64 {
    let w_tilde = Complex64::new(w, -k);
    let num = w_tilde.norm_sqr() + omega.norm_sqr() + sign * 2.0 * (k * omega.im - w * omega.re);
    num / (2.0 * w_tilde.norm() * omega.norm())
}

fn dressed_phase(w: f64, k: f64, omega: Complex64, sign: f64) -> f64 {
    let w_tilde = Complex64::new(w, -k);
    ((w_tilde + sign * omega) / (2.0 * w_tilde * omega).sqrt()).arg()
}

/// Magnitudes follow the closed expressions in `(W̃, Ω)` with `W̃ = W − iK`;
/// phases are the principal arguments of `(W̃ ± Ω)/√(2W̃Ω)`.
pub fn decay_dressed_coeffs(
    w: f64,
    k: f64,
    omega_lbp: Complex64,
    omega_ubp: Complex64,
) -> Result<DecayDressedCoeffs, QuadraticError> {
    if omega_lbp.norm() == 0.0 {
        return Err(QuadraticError::DegenerateNormalization("Omega_A"));
    }
    if omega_ubp.norm() == 0.0 {
        return Err(QuadraticError::DegenerateNormalization("Omega_C"));
    }
    if w == 0.0 && k == 0.0 {
        return Err(QuadraticError::DegenerateNormalization("W - iK"));
    }
    Ok(DecayDressedCoeffs {
        a_plus: dressed_magnitude(w, k, omega_lbp, 1.0),
        a_minus: dressed_magnitude(w, k, omega_lbp, -1.0),
        c_plus: dressed_magnitude(w, k, omega_ubp, 1.0),
        c_minus: dressed_magnitude(w, k, omega_ubp, -1.0),
        phase_a_plus: dressed_phase(w, k, omega_lbp, 1.0),
        phase_a_minus: dressed_phase(w, k, omega_lbp, -1.0),
        phase_c_plus: dressed_phase(w, k, omega_ubp, 1.0),
        phase_c_minus: dressed_phase(w, k, omega_ubp, -1.0),
    })
}

/// `|a_+|` at the dissipationless critical coupling with decay `k`.
pub fn ideal_cp_a_plus(w: f64, k: f64) -> f64 {
    w * w / (2.0 * k * (w * w + k * k).sqrt())
}

/// The two `|c_+|` values at the dissipationless critical coupling, for
/// `Ω_C = −√2W − iK` and `Ω_C = +√2W − iK` respectively.
pub fn ideal_cp_c_plus(w: f64, k: f64) -> (f64, f64) {
    let den = 2.0 * ((w * w + k * k) * (k * k + 2.0 * w * w)).sqrt();
    let r2 = 2f64.sqrt();
    ((3.0 + 2.0 * r2) * w * w / den, (3.0 - 2.0 * r2) * w * w / den)
}

/// Dressed coefficients at the dissipationless critical coupling, taking the
/// lower branch `Ω_C = −√2W − iK` for `c`.
pub fn ideal_cp_coeffs(w: f64, k: f64) -> Result<DecayDressedCoeffs, QuadraticError> {
    let ev = closed_form_eigenvalues(w, w, 0.5 * w, k);
    decay_dressed_coeffs(w, k, ev.lbp_minus, ev.ubp_minus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Critical,
    Unstable,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Critical => "critical",
            Stability::Unstable => "unstable",
        }
    }
}

pub const CRITICAL_TOLERANCE: f64 = 1e-9;

/// Critical within `1e-9` relative of `G'_cp`; stable below it (every complex
/// frequency has a non-positive imaginary part); unstable above.
pub fn stability_classify(w_a: f64, w_c: f64, g: f64, k: f64) -> Stability {
    let g_crit = critical_coupling(w_a, w_c, k).g_cp_prime;
    let excess = g.abs() - g_crit;
    if excess.abs() <= CRITICAL_TOLERANCE * g_crit {
        Stability::Critical
    } else if excess < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// Pairs numeric eigenvalues to reference values by greedy nearest distance
/// and returns, for each reference, the matched numeric value.
pub fn pair_nearest(reference: &[Complex64; 4], numeric: &[Complex64; 4]) -> [Complex64; 4] {
    let mut used = [false; 4];
    let mut out = [Complex64::new(0.0, 0.0); 4];
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(16);
    for (i, r) in reference.iter().enumerate() {
        for (j, n) in numeric.iter().enumerate() {
            pairs.push(((r - n).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut done = [false; 4];
    for (_, i, j) in pairs {
        if !done[i] && !used[j] {
            out[i] = numeric[j];
            done[i] = true;
            used[j] = true;
        }
    }
    out
}
