//! Quadrature references used to check the closed-form lattice integrals and
//! Fourier coefficients. Nothing here shares code with the closed forms.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `(1/2π)∫₋π^π f(x) e^{−inx} dx` by the `points`-node trapezoidal rule, which
/// converges geometrically for analytic periodic integrands.
pub fn fourier_coefficient<F>(f: F, n: i32, points: usize) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let h = 2.0 * PI / points as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..points {
        let x = -PI + h * j as f64;
        sum += f(x) * Complex64::from_polar(1.0, -f64::from(n) * x);
    }
    sum / points as f64
}

/// Quadrature of F⁽¹⁾ₙ(μ) = (1/2π)∫ cos(nx)/(1+μ cos x) dx.
pub fn f1_quadrature(n: u32, mu: Complex64, points: usize) -> Complex64 {
    let n = n as i32;
    fourier_coefficient(|x| 1.0 / (1.0 + mu * x.cos()), n, points)
}

/// Quadrature of F⁽²⁾ₙ(μ) = (1/2π)∫ cos(nx)/(1+μ cos x)² dx.
pub fn f2_quadrature(n: u32, mu: Complex64, points: usize) -> Complex64 {
    let n = n as i32;
    fourier_coefficient(
        |x| {
            let k = 1.0 + mu * x.cos();
            1.0 / (k * k)
        },
        n,
        points,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_cosine() {
        let one = fourier_coefficient(|_| Complex64::new(1.0, 0.0), 0, 64);
        assert!((one - 1.0).norm() < 1e-15);
        let c = fourier_coefficient(|x| Complex64::new(x.cos(), 0.0), 1, 64);
        assert!((c - 0.5).norm() < 1e-15);
        assert!(f1_quadrature(0, Complex64::new(0.0, 0.0), 16).re == 1.0);
    }
}
