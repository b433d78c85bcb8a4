//! Fourier integrals of the lattice kernels `1/(1+μ cos x)` and
//! `1/(1+μ cos x)²`, evaluated in closed form from the residue at the pole
//! inside the unit circle.

use num_complex::Complex64;

/// Branch-selection failure of the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("lattice parameter μ = {mu} lies on the branch cut (|μ| >= 1 on the real axis)")]
    BranchAmbiguity { mu: Complex64 },
    #[error("harmonic n = {n} is outside the supported range 0..=3")]
    Domain { n: u32 },
}

/// Root `w` of `w² = 1 − μ²` together with the ratio `r = (w − 1)/μ`, chosen so
/// that `|r| ≤ 1`.
///
/// `r` is computed as `−μ/(1 + w)`, which has no cancellation as μ → 0. The two
/// candidate ratios multiply to one, so flipping the root inverts the ratio.
fn decaying_root(mu: Complex64) -> Result<(Complex64, Complex64), LatticeError> {
    let one = Complex64::new(1.0, 0.0);
    let mut w = (one - mu * mu).sqrt();
    let mut r = -mu / (one + w);
    if !r.is_finite() || r.norm() > 1.0 {
        w = -w;
        r = -mu / (one + w);
    }
    if !r.is_finite() || (r.norm() - 1.0).abs() < 1e-12 {
        return Err(LatticeError::BranchAmbiguity { mu });
    }
    Ok((w, r))
}

/// F⁽¹⁾ₙ(μ) = (1/2π)∫ cos(nx)/(1+μ cos x) dx = rⁿ/w.
pub fn lattice_f1(n: u32, mu: Complex64) -> Result<Complex64, LatticeError> {
    let (w, r) = decaying_root(mu)?;
    Ok(r.powu(n) / w)
}

/// F⁽²⁾ₙ(μ) = (1/2π)∫ cos(nx)/(1+μ cos x)² dx for n ≤ 3.
///
/// Evaluated as `rⁿ (1 + n w)/w³`, which equals `F⁽¹⁾ₙ + μ dF⁽¹⁾ₙ/dμ` and
/// reproduces the textbook forms (e.g. `2/μ² + (3 − 2/μ²)/w³` for n = 2)
/// without their `1/μⁿ` cancellation near the running-wave limit.
pub fn lattice_f2(n: u32, mu: Complex64) -> Result<Complex64, LatticeError> {
    if n > 3 {
        return Err(LatticeError::Domain { n });
    }
    let (w, r) = decaying_root(mu)?;
    Ok(r.powu(n) * (1.0 + f64::from(n) * w) / (w * w * w))
}

/// The conventional closed forms of F⁽²⁾₀…F⁽²⁾₃, kept for cross-checking. They lose
/// accuracy as `μ → 0`.
pub fn lattice_f2_textbook(n: u32, mu: Complex64) -> Result<Complex64, LatticeError> {
    let (w, _) = decaying_root(mu)?;
    let w3 = w * w * w;
    Ok(match n {
        0 => 1.0 / w3,
        1 => -mu / w3,
        2 => 2.0 / (mu * mu) + (3.0 - 2.0 / (mu * mu)) / w3,
        3 => {
            let mu3 = mu * mu * mu;
            -8.0 / mu3 + (8.0 / mu3 - 12.0 / mu + 3.0 * mu) / w3
        }
        _ => return Err(LatticeError::Domain { n }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{f1_quadrature, f2_quadrature};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn values_at_half() {
        let mu = c(0.5, 0.0);
        assert_eq!(lattice_f1(0, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        // Frozen from 30-digit adaptive quadrature of the defining integrals.
        let cases = [
            (lattice_f1(1, mu).unwrap(), -0.309_401_076_758_503_04),
            (lattice_f1(2, mu).unwrap(), 0.082_903_768_654_760_70),
            (lattice_f2(0, mu).unwrap(), 1.539_600_717_839_002),
            (lattice_f2(1, mu).unwrap(), -0.769_800_358_919_501),
            (lattice_f2(2, mu).unwrap(), 0.301_996_410_804_989_8),
            (lattice_f2(3, mu).unwrap(), -0.106_570_209_681_415_39),
        ];
        for (got, want) in cases {
            assert!(
                (got.re - want).abs() < 1e-12 && got.im.abs() < 1e-15,
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn matches_quadrature_off_axis() {
        for mu in [
            c(0.3, 0.4),
            c(-0.7, 0.2),
            c(0.05, -0.85),
            c(1.2, 0.3),
            c(0.99, 0.05),
        ] {
            for n in 0..4 {
                let q1 = f1_quadrature(n, mu, 8192);
                let q2 = f2_quadrature(n, mu, 8192);
                assert!(
                    rel(lattice_f1(n, mu).unwrap(), q1) < 1e-9,
                    "F1 n={n} mu={mu}"
                );
                assert!(
                    rel(lattice_f2(n, mu).unwrap(), q2) < 1e-9,
                    "F2 n={n} mu={mu}"
                );
            }
        }
    }

    #[test]
    fn textbook_forms_agree_away_from_zero() {
        for mu in [c(0.5, 0.0), c(0.3, 0.4), c(-0.6, -0.5)] {
            for n in 0..4 {
                let a = lattice_f2(n, mu).unwrap();
                let b = lattice_f2_textbook(n, mu).unwrap();
                assert!(rel(a, b) < 1e-12, "n={n} mu={mu}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn small_mu_limits() {
        let mu = c(1e-6, 0.0);
        assert!((lattice_f1(0, mu).unwrap() - 1.0).norm() < 1e-9);
        assert!((lattice_f2(0, mu).unwrap() - 1.0).norm() < 1e-9);
        // n = 1 is first order in μ: F⁽¹⁾₁ ≈ −μ/2, F⁽²⁾₁ ≈ −μ.
        assert!((lattice_f1(1, mu).unwrap() + 0.5e-6).norm() < 1e-15);
        assert!((lattice_f2(1, mu).unwrap() + 1e-6).norm() < 1e-15);
        for n in 2..4 {
            assert!(lattice_f1(n, mu).unwrap().norm() < 1e-9);
            assert!(lattice_f2(n, mu).unwrap().norm() < 1e-9);
        }
        // Leading terms: F⁽²⁾₂ ≈ 3μ²/4, F⁽²⁾₃ ≈ −μ³/2.
        let mu = c(1e-3, 0.0);
        assert!(rel(lattice_f2(2, mu).unwrap(), c(7.500_012_500_016_406e-7, 0.0)) < 1e-9);
        assert!(
            rel(
                lattice_f2(3, mu).unwrap(),
                c(-5.000_009_375_013_125e-10, 0.0)
            ) < 1e-9
        );
        assert_eq!(lattice_f2(3, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn branch_cut_and_domain_errors() {
        assert!(matches!(
            lattice_f1(0, c(1.5, 0.0)),
            Err(LatticeError::BranchAmbiguity { .. })
        ));
        assert!(matches!(
            lattice_f2(1, c(-2.0, 0.0)),
            Err(LatticeError::BranchAmbiguity { .. })
        ));
        assert_eq!(
            lattice_f2(4, c(0.1, 0.0)),
            Err(LatticeError::Domain { n: 4 })
        );
    }

    proptest! {
        #[test]
        fn coefficient_sequence_does_not_grow(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let mu = c(re, im);
            prop_assume!(im.abs() > 1e-3 || re.abs() < 0.999);
            let f: Vec<_> = (0..5).map(|n| lattice_f1(n, mu).unwrap()).collect();
            for pair in f.windows(2) {
                prop_assert!(pair[1].norm() <= pair[0].norm() * (1.0 + 1e-12));
            }
        }
    }
}
