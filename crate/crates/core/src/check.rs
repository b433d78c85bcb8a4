//! Self-checks of the closed forms against independent numerical oracles:
//! lattice integrals against trapezoidal quadrature, Fourier components of
//! the susceptibilities against quadrature of the pointwise expressions, and
//! closed-form populations against a generic linear solve.

use crate::lattice::{lattice_f1, lattice_f2};
use crate::oracle::{f1_quadrature, f2_quadrature};
use crate::params::{default_params, detunings, Beam, SystemParams};
use crate::populations::{
    compute_populations, population_coeffs, solve_populations_closed, solve_populations_linear,
    CouplingIntensity, FieldIntensities,
};
use crate::susceptibility::{fourier_coeffs, quadrature_coeffs, SusceptibilityCoeffs};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const QUADRATURE_POINTS: usize = 4096;
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error and the bound it was held to.
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, bound: f64, what: &str) -> Self {
        CheckResult {
            name,
            passed: worst.is_finite() && worst < bound,
            detail: format!("worst {what} {worst:.3e} (bound {bound:e})"),
        }
    }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Random parameters inside the physical domain: positive couplings and
/// rates, lower-level relaxation far below the upper-state rates.
pub fn random_physical_params<R: Rng>(rng: &mut R) -> SystemParams {
    let mut p = default_params();
    let amp = |rng: &mut R, lo: f64, hi: f64| Complex64::new(rng.random_range(lo..hi), 0.0);
    p.omega_c_plus = amp(rng, 1.0, 8.0);
    p.omega_c_minus = amp(rng, 0.0, 4.0);
    p.omega_p0 = amp(rng, 0.05, 1.0);
    p.omega_t0 = amp(rng, 0.05, 1.0);
    p.delta2 = rng.random_range(-8.0..8.0);
    p.delta3 = rng.random_range(-8.0..8.0);
    let up = rng.random_range(0.2..2.0);
    p.gamma_10 = up;
    p.gamma_20 = up;
    p.gamma_30 = up;
    let sp = rng.random_range(0.1..1.0);
    p.gamma_11 = sp;
    p.gamma_22 = sp;
    p.gamma_33 = sp;
    let low = 10f64.powf(rng.random_range(-4.0..-1.0));
    p.gamma_12 = low;
    p.gamma_13 = low;
    p.gamma_23 = low;
    p
}

/// Complex μ with 0.05 ≤ |μ| ≤ 0.9 and uniform argument.
pub fn random_mu<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(
        rng.random_range(0.05..=0.9),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// F⁽¹⁾ₙ and F⁽²⁾ₙ for n = 0..3 against quadrature at `draws` random μ.
pub fn lattice_oracle(seed: u64, draws: usize) -> CheckResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let mu = random_mu(&mut rng);
        for n in 0..4 {
            let e1 = lattice_f1(n, mu).map_or(f64::INFINITY, |v| {
                rel(v, f1_quadrature(n, mu, QUADRATURE_POINTS))
            });
            let e2 = lattice_f2(n, mu).map_or(f64::INFINITY, |v| {
                rel(v, f2_quadrature(n, mu, QUADRATURE_POINTS))
            });
            worst = worst.max(e1).max(e2);
        }
    }
    CheckResult::new(
        "lattice integrals vs quadrature",
        worst,
        1e-9,
        "relative error",
    )
}

fn components(c: &SusceptibilityCoeffs) -> [Complex64; 8] {
    let [a, b] = c.chi1();
    let [x0, x2, x4] = c.cross();
    let [s0, s2, s4] = c.self_kerr();
    [a, b, x0, x2, x4, s0, s2, s4]
}

/// Every Fourier component at default parameters and `points` detunings in
/// [3, 10] against quadrature of the pointwise susceptibility.
pub fn susceptibility_oracle(points: usize) -> CheckResult {
    let p = default_params();
    let mut worst = 0.0f64;
    for delta1 in crate::spectra::linspace(3.0, 10.0, points) {
        let det = detunings(&p, delta1);
        let fields = FieldIntensities::incident(&p, CouplingIntensity::Mean);
        let pops = match compute_populations(&det, &p, fields) {
            Ok(pops) => pops,
            Err(_) => {
                return CheckResult::new(
                    "Fourier components vs quadrature",
                    f64::NAN,
                    1e-8,
                    "relative error",
                )
            }
        };
        for side in [Beam::Probe, Beam::Trigger] {
            let pair = fourier_coeffs(&det, &pops, &p, side)
                .ok()
                .zip(quadrature_coeffs(&det, &pops, &p, side, QUADRATURE_POINTS).ok());
            let Some((closed, quad)) = pair else {
                worst = f64::INFINITY;
                continue;
            };
            for (a, b) in components(&closed).iter().zip(components(&quad)) {
                worst = worst.max(rel(*a, b));
            }
        }
    }
    CheckResult::new(
        "Fourier components vs quadrature",
        worst,
        1e-8,
        "relative error",
    )
}

/// Closed-form populations against the generic 4×4 solve on `draws` random
/// physical parameter sets, together with the trace condition.
pub fn population_oracle(seed: u64, draws: usize) -> (CheckResult, CheckResult) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut worst_trace = 0.0f64;
    for _ in 0..draws {
        let p = random_physical_params(&mut rng);
        let delta1 = rng.random_range(-8.0..8.0);
        let outcome = population_coeffs(&detunings(&p, delta1), &p, CouplingIntensity::Mean)
            .ok()
            .and_then(|c| {
                Some((
                    solve_populations_closed(&c).ok()?,
                    solve_populations_linear(&c).ok()?,
                ))
            });
        let Some((closed, linear)) = outcome else {
            worst = f64::INFINITY;
            continue;
        };
        for (a, b) in closed.as_array().iter().zip(linear.populations.as_array()) {
            worst = worst.max((a - b).abs());
        }
        worst_trace = worst_trace
            .max((closed.total() - 1.0).abs())
            .max((linear.populations.total() - 1.0).abs());
    }
    (
        CheckResult::new(
            "populations closed form vs linear solve",
            worst,
            1e-9,
            "abs difference",
        ),
        CheckResult::new("population trace", worst_trace, 1e-10, "|Σσ − 1|"),
    )
}

/// All self-checks with their acceptance sizes.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let (pops, trace) = population_oracle(seed, 200);
    vec![
        lattice_oracle(seed, 50),
        susceptibility_oracle(50),
        pops,
        trace,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        assert!(lattice_oracle(1, 5).passed);
        assert!(susceptibility_oracle(3).passed);
        let (a, b) = population_oracle(1, 20);
        assert!(a.passed && b.passed, "{a:?} {b:?}");
    }

    #[test]
    fn random_mu_stays_in_the_disc() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let m = random_mu(&mut rng).norm();
            assert!((0.05 - 1e-15..=0.9 + 1e-15).contains(&m));
        }
    }
}
