//! Steady-state population redistribution among the four tripod levels.
//!
//! The diagonal density-matrix elements satisfy a 4×4 linear system whose
//! coefficients follow from eliminating the optical coherences at lowest order
//! in the weak fields. The system is solved two ways: by its closed-form
//! solution and by generic Gaussian elimination. The two are kept independent
//! so each checks the other.

use crate::params::{DetuningSet, SystemParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Tolerance on populations outside `[0, 1]` before a point is flagged.
pub const PHYSICAL_SLACK: f64 = 1e-9;
/// Default floor on |M| for the closed-form solution.
pub const DEFAULT_M_FLOOR: f64 = 1e-14;
/// Condition number above which the generic solve is refused.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PopulationError {
    #[error("spontaneous rate `{field}` must be > 0 (it divides the rate equations)")]
    NonPositiveSpontaneousRate { field: &'static str },
    #[error("ξ is undefined: {group} rates are unequal ({values:?})")]
    XiAmbiguity {
        group: &'static str,
        values: [f64; 3],
    },
    #[error("population coefficient `{name}` is not finite at this detuning")]
    NonFinite { name: &'static str },
    #[error("closed-form denominator |M| = {m:e} is below the floor {floor:e}")]
    SingularM { m: f64, floor: f64 },
    #[error("population matrix is singular (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },
}

/// Which coupling intensity enters the population rate coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingIntensity {
    /// Spatial average S_c² = |Ω_c⁺|² + |Ω_c⁻|².
    #[default]
    Mean,
    /// Lattice antinode |Ω_c⁺ + Ω_c⁻|².
    Peak,
    /// Forward component only, |Ω_c⁺|².
    Forward,
}

impl CouplingIntensity {
    pub fn evaluate(self, params: &SystemParams) -> f64 {
        match self {
            CouplingIntensity::Mean => params.coupling_intensity_mean(),
            CouplingIntensity::Peak => (params.omega_c_plus + params.omega_c_minus).norm_sqr(),
            CouplingIntensity::Forward => params.omega_c_plus.norm_sqr(),
        }
    }
}

/// Field intensities feeding the rate coefficients [rad²/µs²].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldIntensities {
    pub probe: f64,
    pub trigger: f64,
    pub coupling: f64,
}

impl FieldIntensities {
    /// Incident probe/trigger intensities with the chosen coupling intensity.
    pub fn incident(params: &SystemParams, coupling: CouplingIntensity) -> Self {
        FieldIntensities {
            probe: params.omega_p0.norm_sqr(),
            trigger: params.omega_t0.norm_sqr(),
            coupling: coupling.evaluate(params),
        }
    }
}

/// Coefficients α, α₁, β, β₁, γ, δ, ε and ξ of the population rate equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationCoeffs {
    pub alpha: f64,
    pub alpha1: f64,
    pub beta: f64,
    pub beta1: f64,
    pub gamma_c: f64,
    pub delta_c: f64,
    pub epsilon_c: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationMethod {
    ClosedForm,
    LinearSolve,
    Balanced,
}

/// Diagonal density-matrix elements σ₀₀…σ₃₃.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub s00: f64,
    pub s11: f64,
    pub s22: f64,
    pub s33: f64,
    pub physical: bool,
    /// Largest excursion outside `[0, 1]` (negative below 0, positive above 1);
    /// zero when every population is inside.
    pub worst_violation: f64,
    pub method: PopulationMethod,
}

impl Populations {
    pub fn new(s00: f64, s11: f64, s22: f64, s33: f64, method: PopulationMethod) -> Self {
        validate_populations(Populations {
            s00,
            s11,
            s22,
            s33,
            physical: true,
            worst_violation: 0.0,
            method,
        })
    }

    /// σ₁₁ = σ₃₃ = ½, σ₀₀ = σ₂₂ = 0.
    pub fn balanced() -> Self {
        Populations::new(0.0, 0.5, 0.0, 0.5, PopulationMethod::Balanced)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.s00, self.s11, self.s22, self.s33]
    }

    pub fn total(&self) -> f64 {
        self.s00 + self.s11 + self.s22 + self.s33
    }

    /// Populations relabelled 1 ↔ 3, as seen by the trigger formulas.
    pub fn swapped(&self) -> Self {
        Populations {
            s11: self.s33,
            s33: self.s11,
            ..*self
        }
    }
}

/// Sets the `physical` flag and the worst violation. Values are never clamped.
pub fn validate_populations(p: Populations) -> Populations {
    let mut worst = 0.0f64;
    for s in p.as_array() {
        let excess = if s < 0.0 {
            s
        } else if s > 1.0 {
            s - 1.0
        } else {
            0.0
        };
        if excess.abs() > worst.abs() {
            worst = excess;
        }
    }
    let physical = p
        .as_array()
        .iter()
        .all(|&s| s.is_finite() && (-PHYSICAL_SLACK..=1.0 + PHYSICAL_SLACK).contains(&s));
    Populations {
        physical,
        worst_violation: worst,
        ..p
    }
}

fn equal_group(values: [f64; 3]) -> bool {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spread = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        - values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    spread <= 1e-12 * max
}

/// ξ = γ_{jk}/γ_{kk}; requires equal lower-level rates and equal spontaneous rates.
pub fn relaxation_ratio(params: &SystemParams) -> Result<f64, PopulationError> {
    for (field, v) in [
        ("gamma_11", params.gamma_11),
        ("gamma_22", params.gamma_22),
        ("gamma_33", params.gamma_33),
    ] {
        if !(v > 0.0) {
            return Err(PopulationError::NonPositiveSpontaneousRate { field });
        }
    }
    let lower = [params.gamma_12, params.gamma_13, params.gamma_23];
    if !equal_group(lower) {
        return Err(PopulationError::XiAmbiguity {
            group: "lower-level",
            values: lower,
        });
    }
    let spont = [params.gamma_11, params.gamma_22, params.gamma_33];
    if !equal_group(spont) {
        return Err(PopulationError::XiAmbiguity {
            group: "spontaneous",
            values: spont,
        });
    }
    Ok(params.gamma_12 / params.gamma_11)
}

/// Rate coefficients using the incident probe/trigger amplitudes.
pub fn population_coeffs(
    det: &DetuningSet,
    params: &SystemParams,
    coupling: CouplingIntensity,
) -> Result<PopulationCoeffs, PopulationError> {
    population_coeffs_with(det, params, FieldIntensities::incident(params, coupling))
}

pub fn population_coeffs_with(
    det: &DetuningSet,
    params: &SystemParams,
    fields: FieldIntensities,
) -> Result<PopulationCoeffs, PopulationError> {
    let xi = relaxation_ratio(params)?;
    let (op2, ot2, c2) = (fields.probe, fields.trigger, fields.coupling);
    let (g11, g22, g33) = (params.gamma_11, params.gamma_22, params.gamma_33);
    let one = Complex64::new(1.0, 0.0);

    let d = det.d20.conj() + op2 / det.d12 + ot2 / det.d32;
    let e1 = det.d10 * det.d12 - c2;
    let e3 = det.d30 * det.d32 - c2;
    let im_inv = |z: Complex64| (one / z).im;

    let alpha = 2.0 / g11 * op2 * im_inv(det.d10.conj() - c2 / det.d12.conj());
    let alpha1 = 2.0 / g11 * op2 * c2 * im_inv(d.conj() * e1.conj());
    let beta = 2.0 / g33 * ot2 * im_inv(det.d30.conj() - c2 / det.d32.conj());
    let beta1 = 2.0 / g33 * ot2 * c2 * im_inv(d.conj() * e3.conj());
    let gamma_c = 2.0 / g22 * c2 * op2 * im_inv(d * e1);
    let delta_c = 2.0 / g22 * c2 * ot2 * im_inv(d * e3);
    let epsilon_c = 2.0 / g22
        * c2
        * (im_inv(d)
            - c2 * op2 * im_inv(det.d12 * d * d * e1)
            - c2 * ot2 * im_inv(det.d32 * d * d * e3));

    let coeffs = PopulationCoeffs {
        alpha,
        alpha1,
        beta,
        beta1,
        gamma_c,
        delta_c,
        epsilon_c,
        xi,
    };
    for (name, v) in coeffs.named() {
        if !v.is_finite() {
            return Err(PopulationError::NonFinite { name });
        }
    }
    Ok(coeffs)
}

impl PopulationCoeffs {
    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("alpha", self.alpha),
            ("alpha1", self.alpha1),
            ("beta", self.beta),
            ("beta1", self.beta1),
            ("gamma", self.gamma_c),
            ("delta", self.delta_c),
            ("epsilon", self.epsilon_c),
            ("xi", self.xi),
        ]
    }

    /// Denominator M of the closed-form solution.
    pub fn denominator(&self) -> f64 {
        let PopulationCoeffs {
            alpha: a,
            alpha1: a1,
            beta: b,
            beta1: b1,
            gamma_c: g,
            delta_c: d,
            epsilon_c: e,
            xi: x,
        } = *self;
        b1 * (d - g)
            + b * (e - g + 4.0 * a1 * g)
            + a1 * (b + g - d)
            + (2.0 * b - d + 4.0 * e + 4.0 * b * e - 3.0 * g
                + 2.0 * a1 * (1.0 - b + 3.0 * g + d)
                + b1 * (2.0 + 4.0 * g + 4.0 * d))
                * x
            + 2.0 * (3.0 - 2.0 * a1 - 2.0 * b1 + b + g + d + 2.0 * e) * x * x
            + a * (b - d
                + e
                + 4.0 * b * e
                + b1 * (1.0 + 4.0 * d - 2.0 * x)
                + 3.0 * x
                + 2.0 * x * (b + d + 3.0 * e + x))
    }

    /// Row-major matrix and right-hand side of the four linear equations in
    /// the unknowns `[σ₀₀, σ₁₁, σ₂₂, σ₃₃]`.
    pub fn linear_system(&self) -> ([[f64; 4]; 4], [f64; 4]) {
        let PopulationCoeffs {
            alpha: a,
            alpha1: a1,
            beta: b,
            beta1: b1,
            gamma_c: g,
            delta_c: d,
            epsilon_c: e,
            xi: x,
        } = *self;
        let m = [
            // σ₀₀ = α(σ₁₁−σ₀₀) − α₁(σ₂₂−σ₀₀) + ξ(σ₁₁−σ₃₃)
            [-1.0 - a + a1, a + x, -a1, -x],
            // σ₀₀ = β(σ₃₃−σ₀₀) − β₁(σ₂₂−σ₀₀) + 2ξσ₃₃
            [-1.0 - b + b1, 0.0, -b1, b + 2.0 * x],
            // σ₀₀ = γ(σ₁₁−σ₀₀) + δ(σ₃₃−σ₀₀) + ε(σ₂₂−σ₀₀) − ξ(σ₁₁+σ₃₃)
            [-1.0 - g - d - e, g - x, e, d - x],
            [1.0, 1.0, 1.0, 1.0],
        ];
        (m, [0.0, 0.0, 0.0, 1.0])
    }
}

/// Closed-form solution with σ₀₀ from probability conservation.
pub fn solve_populations_closed(c: &PopulationCoeffs) -> Result<Populations, PopulationError> {
    solve_populations_closed_with_floor(c, DEFAULT_M_FLOOR)
}

pub fn solve_populations_closed_with_floor(
    c: &PopulationCoeffs,
    m_floor: f64,
) -> Result<Populations, PopulationError> {
    let PopulationCoeffs {
        alpha: a,
        alpha1: a1,
        beta: b,
        beta1: b1,
        gamma_c: g,
        delta_c: d,
        epsilon_c: e,
        xi: x,
    } = *c;
    let m = c.denominator();
    if !(m.abs() >= m_floor) {
        return Err(PopulationError::SingularM { m, floor: m_floor });
    }
    let s11 = ((1.0 + a) * (b1 * d + b * e)
        + (3.0 + 2.0 * a + b) * e * x
        + b1 * (-a + d + g) * x
        + a1 * (-d + 3.0 * x + 2.0 * (d + g) * x + b * (1.0 + g + x)))
        / m;
    let s22 = ((-1.0 + a1) * b * g
        + ((-1.0 + b1) * d + b * (2.0 - a1 + e) + g * (-3.0 + 2.0 * a1 + b1)) * x
        + 2.0 * (3.0 - a1 - b1 + b + d + g + e) * x * x
        + a * ((-1.0 + b1) * d + (3.0 - b1) * x + 2.0 * x * (d + e + x) + b * (1.0 + e + 2.0 * x)))
        / m;
    let s33 = (-b1 * g
        + a1 * (1.0 + b) * (g - x)
        + ((1.0 + b) * e + b1 * (2.0 + d + g)) * x
        + a * ((1.0 + b) * e + b1 * (1.0 + d + x)))
        / m;
    let s00 = 1.0 - s11 - s22 - s33;
    Ok(Populations::new(
        s00,
        s11,
        s22,
        s33,
        PopulationMethod::ClosedForm,
    ))
}

/// Result of the generic elimination, with its 1-norm condition estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolution {
    pub populations: Populations,
    pub condition: f64,
}

/// Solves the population equations by Gaussian elimination with partial
/// pivoting, independent of the closed form.
pub fn solve_populations_linear(c: &PopulationCoeffs) -> Result<LinearSolution, PopulationError> {
    let (m, rhs) = c.linear_system();
    let (inverse, condition) = invert4(m);
    let inverse = match inverse {
        Some(inv) if condition <= MAX_CONDITION => inv,
        _ => return Err(PopulationError::SingularMatrix { condition }),
    };
    let mut s = [0.0; 4];
    for (i, si) in s.iter_mut().enumerate() {
        *si = (0..4).map(|j| inverse[i][j] * rhs[j]).sum();
    }
    Ok(LinearSolution {
        populations: Populations::new(s[0], s[1], s[2], s[3], PopulationMethod::LinearSolve),
        condition,
    })
}

/// Gauss-Jordan inverse with partial pivoting; returns `κ₁ = ‖A‖₁‖A⁻¹‖₁`.
fn invert4(a: [[f64; 4]; 4]) -> (Option<[[f64; 4]; 4]>, f64) {
    let norm1 = |m: &[[f64; 4]; 4]| {
        (0..4)
            .map(|j| (0..4).map(|i| m[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut work = a;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| work[i][col].abs().total_cmp(&work[j][col].abs()))
            .unwrap_or(col);
        if work[pivot][col] == 0.0 || !work[pivot][col].is_finite() {
            return (None, f64::INFINITY);
        }
        work.swap(col, pivot);
        inv.swap(col, pivot);
        let p = work[col][col];
        for j in 0..4 {
            work[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..4 {
            if i != col {
                let f = work[i][col];
                if f != 0.0 {
                    for j in 0..4 {
                        work[i][j] -= f * work[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    let condition = norm1(&a) * norm1(&inv);
    (Some(inv), condition)
}

/// Computed populations at one detuning, falling back to the generic solve when
/// the closed form's denominator is degenerate.
pub fn compute_populations(
    det: &DetuningSet,
    params: &SystemParams,
    fields: FieldIntensities,
) -> Result<Populations, PopulationError> {
    let coeffs = population_coeffs_with(det, params, fields)?;
    match solve_populations_closed(&coeffs) {
        Ok(p) => Ok(p),
        Err(PopulationError::SingularM { .. }) => {
            solve_populations_linear(&coeffs).map(|s| s.populations)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_params, detunings};
    use num_complex::Complex64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn coeffs_at(params: &SystemParams, delta1: f64) -> PopulationCoeffs {
        population_coeffs(&detunings(params, delta1), params, CouplingIntensity::Mean).unwrap()
    }

    fn no_lower_relaxation(mut p: SystemParams) -> SystemParams {
        p.gamma_12 = 0.0;
        p.gamma_13 = 0.0;
        p.gamma_23 = 0.0;
        p
    }

    #[test]
    fn field_free_coefficients_vanish() {
        let mut p = default_params();
        p.omega_p0 = Complex64::new(0.0, 0.0);
        p.omega_t0 = Complex64::new(0.0, 0.0);
        let c = coeffs_at(&p, 5.0);
        for v in [c.alpha, c.alpha1, c.beta, c.beta1, c.gamma_c, c.delta_c] {
            assert_eq!(v, 0.0);
        }
        assert!(c.epsilon_c > 0.0);
        assert_eq!(coeffs_at(&no_lower_relaxation(p), 5.0).xi, 0.0);
    }

    #[test]
    fn single_beam_coefficients() {
        let c = coeffs_at(&default_params().without_trigger(), 4.0);
        assert_eq!((c.beta, c.beta1, c.delta_c), (0.0, 0.0, 0.0));
        let mut p = default_params();
        p.omega_p0 = Complex64::new(0.0, 0.0);
        let c = coeffs_at(&p, 4.0);
        assert_eq!((c.alpha, c.alpha1, c.gamma_c), (0.0, 0.0, 0.0));
    }

    #[test]
    fn no_trigger_without_relaxation_pumps_into_level_three() {
        let p = no_lower_relaxation(default_params().without_trigger());
        for delta1 in [3.0, 5.5, 8.0] {
            let c = coeffs_at(&p, delta1);
            let closed = solve_populations_closed(&c).unwrap();
            let lin = solve_populations_linear(&c).unwrap().populations;
            for s in [closed, lin] {
                assert!((s.s33 - 1.0).abs() < 1e-10, "{s:?}");
                assert!(s.s00.abs() < 1e-10 && s.s11.abs() < 1e-10 && s.s22.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn field_free_reduced_system() {
        let mut p = default_params();
        p.omega_p0 = Complex64::new(0.0, 0.0);
        p.omega_t0 = Complex64::new(0.0, 0.0);
        let c = coeffs_at(&p, 5.0);
        assert!(c.xi > 0.0);
        let s = solve_populations_linear(&c).unwrap().populations;
        assert!((s.total() - 1.0).abs() < 1e-12);
        assert!((s.s00 - 2.0 * c.xi * s.s33).abs() < 1e-12);
        let closed = solve_populations_closed(&c).unwrap();
        for (a, b) in closed.as_array().iter().zip(s.as_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_linear_solve_on_random_draws() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut compared = 0;
        while compared < 200 {
            let p = crate::check::random_physical_params(&mut rng);
            let delta1 = rng.random_range(-10.0..10.0);
            let c = coeffs_at(&p, delta1);
            if c.denominator().abs() <= 1e-8 {
                continue;
            }
            let closed = solve_populations_closed(&c).unwrap();
            let lin = solve_populations_linear(&c).unwrap().populations;
            for (a, b) in closed.as_array().iter().zip(lin.as_array()) {
                assert!((a - b).abs() < 1e-9, "{closed:?} vs {lin:?}");
            }
            assert!((closed.total() - 1.0).abs() < 1e-10);
            assert!((lin.total() - 1.0).abs() < 1e-10);
            compared += 1;
        }
    }

    #[test]
    fn swap_symmetry_without_lower_relaxation() {
        let mut p = no_lower_relaxation(default_params());
        p.omega_p0 = Complex64::new(0.5, 0.0);
        p.omega_t0 = Complex64::new(0.8, 0.0);
        let (delta1, delta3) = (5.2, 7.4);
        p.delta3 = delta3;
        let s = solve_populations_closed(&coeffs_at(&p, delta1)).unwrap();
        let mut q = p.clone();
        q.omega_p0 = p.omega_t0;
        q.omega_t0 = p.omega_p0;
        q.delta3 = delta1;
        let t = solve_populations_closed(&coeffs_at(&q, delta3)).unwrap();
        assert!((s.s11 - t.s33).abs() < 1e-12 && (s.s33 - t.s11).abs() < 1e-12);
        assert!((s.s00 - t.s00).abs() < 1e-12 && (s.s22 - t.s22).abs() < 1e-12);
    }

    #[test]
    fn far_from_resonance_upper_and_coupled_levels_are_empty() {
        let p = default_params();
        let mut delta1 = 3.0;
        while delta1 <= 10.0 {
            if (delta1 - p.delta2).abs() > 0.1 {
                let s = solve_populations_closed(&coeffs_at(&p, delta1)).unwrap();
                assert!(s.s00 + s.s22 < 0.05, "δ₁={delta1}: {s:?}");
                assert!(s.physical);
            }
            delta1 += 0.05;
        }
    }

    #[test]
    fn near_resonance_points_can_be_unphysical() {
        let p = default_params();
        let flagged = (0..400)
            .map(|i| 6.6 + 0.1 * i as f64 / 400.0)
            .filter(|&d| {
                !solve_populations_closed(&coeffs_at(&p, d))
                    .unwrap()
                    .physical
            })
            .count();
        assert!(flagged > 0);
    }

    #[test]
    fn validation_flags() {
        assert!(Populations::new(0.0, 0.5, 0.0, 0.5, PopulationMethod::Balanced).physical);
        assert!(Populations::new(0.02, 0.47, 0.01, 0.50, PopulationMethod::Balanced).physical);
        let bad = Populations::new(-0.1, 0.6, 0.0, 0.5, PopulationMethod::Balanced);
        assert!(!bad.physical);
        assert_eq!(bad.worst_violation, -0.1);
        assert_eq!(bad.s00, -0.1);
    }

    #[test]
    fn xi_requires_equal_rates() {
        let mut p = default_params();
        p.gamma_13 = 2.0 * p.gamma_12;
        assert!(matches!(
            relaxation_ratio(&p),
            Err(PopulationError::XiAmbiguity {
                group: "lower-level",
                ..
            })
        ));
        let mut p = default_params();
        p.gamma_22 = 0.0;
        assert!(matches!(
            relaxation_ratio(&p),
            Err(PopulationError::NonPositiveSpontaneousRate { .. })
        ));
    }

    #[test]
    fn singular_inputs_are_reported() {
        let c = PopulationCoeffs {
            alpha: 0.0,
            alpha1: 0.0,
            beta: 0.0,
            beta1: 0.0,
            gamma_c: 0.0,
            delta_c: 0.0,
            epsilon_c: 0.0,
            xi: 0.0,
        };
        assert!(matches!(
            solve_populations_closed(&c),
            Err(PopulationError::SingularM { .. })
        ));
        assert!(matches!(
            solve_populations_linear(&c),
            Err(PopulationError::SingularMatrix { .. })
        ));
    }
}
