//! Physical parameters, unit conventions and the complex detunings shared by
//! every other module.
//!
//! Frequencies (Rabi amplitudes, detunings, relaxation rates) are angular
//! frequencies in rad/µs. Their numerical values coincide with the MHz-labelled
//! inputs used in configuration files. Only the susceptibility prefactor
//! `N|d|²/(ħε₀)` and the carrier wave number need absolute SI units; those
//! conversions live here.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Reduced Planck constant [J·s] (CODATA 2018).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity [F/m] (CODATA 2018).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Conversions between configuration-file units and internal units.
pub mod units {
    /// Seconds per microsecond; rad/µs → rad/s multiplies by `1 / MICROSECOND`.
    pub const MICROSECOND: f64 = 1e-6;

    pub fn rate_to_per_second(rad_per_us: f64) -> f64 {
        rad_per_us / MICROSECOND
    }

    pub fn rate_from_per_second(rad_per_s: f64) -> f64 {
        rad_per_s * MICROSECOND
    }

    pub fn mm_to_m(mm: f64) -> f64 {
        mm * 1e-3
    }

    pub fn m_to_mm(m: f64) -> f64 {
        m * 1e3
    }

    pub fn nm_to_m(nm: f64) -> f64 {
        nm * 1e-9
    }

    pub fn m_to_nm(m: f64) -> f64 {
        m * 1e9
    }

    pub fn per_cm3_to_per_m3(n: f64) -> f64 {
        n * 1e6
    }

    pub fn per_m3_to_per_cm3(n: f64) -> f64 {
        n * 1e-6
    }
}

/// The two weak beams. The trigger is described by the probe formulas with the
/// level indices `{p,1} ↔ {t,3}` interchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beam {
    Probe,
    Trigger,
}

impl Beam {
    pub fn other(self) -> Beam {
        match self {
            Beam::Probe => Beam::Trigger,
            Beam::Trigger => Beam::Probe,
        }
    }
}

/// All physical inputs of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Forward coupling component Ω_c⁺ [rad/µs].
    pub omega_c_plus: Complex64,
    /// Backward coupling component Ω_c⁻ [rad/µs].
    pub omega_c_minus: Complex64,
    /// Incident probe amplitude Ω_p0 [rad/µs].
    pub omega_p0: Complex64,
    /// Incident trigger amplitude Ω_t0 [rad/µs].
    pub omega_t0: Complex64,
    /// Coupling detuning δ₂ [rad/µs].
    pub delta2: f64,
    /// Trigger detuning δ₃ [rad/µs].
    pub delta3: f64,
    pub gamma_10: f64,
    pub gamma_20: f64,
    pub gamma_30: f64,
    /// Spontaneous-emission rates from level 0 into levels 1, 2, 3.
    pub gamma_11: f64,
    pub gamma_22: f64,
    pub gamma_33: f64,
    /// Lower-level collisional relaxation and decoherence rates.
    pub gamma_12: f64,
    pub gamma_13: f64,
    pub gamma_23: f64,
    /// Atom number density [m⁻³].
    pub density_n: f64,
    /// Dipole matrix elements [C·m].
    pub d10: f64,
    pub d30: f64,
    /// Sample length [m].
    pub length_l: f64,
    /// Probe carrier wavelength [m]; fixes ω₁ = 2πc/λ.
    pub lambda_probe: f64,
    /// Carrier offset Δω₁ = ω₂ − ω₁ [rad/µs].
    pub delta_omega1: f64,
}

/// Hard constraint violated by a parameter set.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parameter `{field}` {constraint}")]
pub struct ParamError {
    pub field: &'static str,
    pub constraint: &'static str,
}

impl Default for SystemParams {
    fn default() -> Self {
        default_params()
    }
}

/// Defaults taken from the cross-Kerr tripod study; λ = 780 nm and Δω₁ = 0
/// are configuration choices, not published values.
pub fn default_params() -> SystemParams {
    let re = |x: f64| Complex64::new(x, 0.0);
    SystemParams {
        omega_c_plus: re(4.0),
        omega_c_minus: re(2.0),
        omega_p0: re(0.67),
        omega_t0: re(0.67),
        delta2: 6.67,
        delta3: 1.002 * 6.67,
        gamma_10: 0.67,
        gamma_20: 0.67,
        gamma_30: 0.67,
        gamma_11: 0.44,
        gamma_22: 0.44,
        gamma_33: 0.44,
        gamma_12: 6.67e-4,
        gamma_13: 6.67e-4,
        gamma_23: 6.67e-4,
        density_n: units::per_cm3_to_per_m3(1.3e13),
        d10: 8e-30,
        d30: 8e-30,
        length_l: units::mm_to_m(1.06),
        lambda_probe: units::nm_to_m(780.0),
        delta_omega1: 0.0,
    }
}

impl SystemParams {
    /// Upper-state coherence decay rate of the simplified relaxation model,
    /// γ₀ₖ = ½(γ₁₁ + γ₂₂ + γ₃₃).
    pub fn simplified_upper_rate(&self) -> f64 {
        0.5 * (self.gamma_11 + self.gamma_22 + self.gamma_33)
    }

    /// Overwrites γ₁₀, γ₂₀, γ₃₀ with the simplified-model value.
    pub fn with_simplified_upper_rates(mut self) -> Self {
        let g = self.simplified_upper_rate();
        self.gamma_10 = g;
        self.gamma_20 = g;
        self.gamma_30 = g;
        self
    }

    /// Same parameters with the trigger switched off.
    pub fn without_trigger(&self) -> Self {
        SystemParams {
            omega_t0: Complex64::new(0.0, 0.0),
            ..self.clone()
        }
    }

    /// S_c² = |Ω_c⁺|² + |Ω_c⁻|² [rad²/µs²].
    pub fn coupling_intensity_mean(&self) -> f64 {
        self.omega_c_plus.norm_sqr() + self.omega_c_minus.norm_sqr()
    }

    /// Ω_c⁺·Ω_c⁻*; for real amplitudes this is the lattice modulation depth / 2.
    pub fn coupling_cross(&self) -> Complex64 {
        self.omega_c_plus * self.omega_c_minus.conj()
    }

    /// Probe carrier angular frequency ω₁ [rad/s].
    pub fn omega1(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / self.lambda_probe
    }

    /// Coupling carrier ω₂ = ω₁ + Δω₁ [rad/s].
    pub fn omega2(&self) -> f64 {
        self.omega1() + units::rate_to_per_second(self.delta_omega1)
    }

    /// Coupling wave number k₂ = ω₂/c [1/m].
    pub fn k2(&self) -> f64 {
        self.omega2() / SPEED_OF_LIGHT
    }

    /// ω₁/(2c) [1/m], the coupling strength of χ in the envelope equations.
    pub fn propagation_scale(&self) -> f64 {
        self.omega1() / (2.0 * SPEED_OF_LIGHT)
    }

    /// N|d|²/(ħε₀) in rad/µs for the given beam's dipole.
    pub fn chi_prefactor(&self, beam: Beam) -> f64 {
        let d = match beam {
            Beam::Probe => self.d10,
            Beam::Trigger => self.d30,
        };
        units::rate_from_per_second(self.density_n * d * d / (HBAR * EPSILON_0))
    }

    pub fn incident(&self, beam: Beam) -> Complex64 {
        match beam {
            Beam::Probe => self.omega_p0,
            Beam::Trigger => self.omega_t0,
        }
    }

    /// Checks the hard invariants. Returns the list of soft warnings (weak-field
    /// regime, complex relative coupling phase) on success.
    pub fn validate(&self) -> Result<Vec<String>, ParamError> {
        let rates = [
            ("gamma_10", self.gamma_10),
            ("gamma_20", self.gamma_20),
            ("gamma_30", self.gamma_30),
            ("gamma_11", self.gamma_11),
            ("gamma_22", self.gamma_22),
            ("gamma_33", self.gamma_33),
            ("gamma_12", self.gamma_12),
            ("gamma_13", self.gamma_13),
            ("gamma_23", self.gamma_23),
        ];
        for (field, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ParamError {
                    field,
                    constraint: "must be a finite rate >= 0",
                });
            }
        }
        if !(self.density_n >= 0.0) || !self.density_n.is_finite() {
            return Err(ParamError {
                field: "density_n",
                constraint: "must be finite and >= 0",
            });
        }
        if !(self.length_l > 0.0) || !self.length_l.is_finite() {
            return Err(ParamError {
                field: "length_l",
                constraint: "must be finite and > 0",
            });
        }
        if !(self.lambda_probe > 0.0) || !self.lambda_probe.is_finite() {
            return Err(ParamError {
                field: "lambda_probe",
                constraint: "must be finite and > 0",
            });
        }
        let mut warnings = Vec::new();
        let weak = self.omega_p0.norm_sqr() + self.omega_t0.norm_sqr();
        if weak >= self.coupling_intensity_mean() {
            warnings.push(format!(
                "weak-field regime violated: |Ωp0|²+|Ωt0|² = {weak} >= S_c² = {}",
                self.coupling_intensity_mean()
            ));
        }
        let cross = self.coupling_cross();
        if cross.im.abs() > 1e-12 * cross.norm().max(f64::MIN_POSITIVE) {
            warnings.push(
                "coupling components carry a relative phase; lattice uses Re(Ωc⁺Ωc⁻*)".to_string(),
            );
        }
        Ok(warnings)
    }
}

/// The complex detunings Δ_{j0} = δ_j + iγ_{j0} and Δ_{jk} = δ_j − δ_k + iγ_{jk}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuningSet {
    pub d10: Complex64,
    pub d20: Complex64,
    pub d30: Complex64,
    pub d12: Complex64,
    pub d13: Complex64,
    pub d23: Complex64,
    pub d32: Complex64,
    pub d21: Complex64,
    pub d31: Complex64,
}

pub fn detunings(params: &SystemParams, delta1: f64) -> DetuningSet {
    let c = Complex64::new;
    let (d1, d2, d3) = (delta1, params.delta2, params.delta3);
    DetuningSet {
        d10: c(d1, params.gamma_10),
        d20: c(d2, params.gamma_20),
        d30: c(d3, params.gamma_30),
        d12: c(d1 - d2, params.gamma_12),
        d13: c(d1 - d3, params.gamma_13),
        d23: c(d2 - d3, params.gamma_23),
        d32: c(d3 - d2, params.gamma_23),
        d21: c(d2 - d1, params.gamma_12),
        d31: c(d3 - d1, params.gamma_13),
    }
}

impl DetuningSet {
    /// Relabels levels 1 ↔ 3, turning probe formulas into trigger formulas.
    pub fn swapped(&self) -> DetuningSet {
        DetuningSet {
            d10: self.d30,
            d20: self.d20,
            d30: self.d10,
            d12: self.d32,
            d13: self.d31,
            d23: self.d21,
            d32: self.d12,
            d21: self.d23,
            d31: self.d13,
        }
    }

    /// The detuning set as seen by `beam`'s formulas.
    pub fn for_beam(&self, beam: Beam) -> DetuningSet {
        match beam {
            Beam::Probe => *self,
            Beam::Trigger => self.swapped(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_inputs() {
        let p = default_params();
        assert!((p.delta3 - 6.68334).abs() < 1e-12);
        assert!((p.density_n - 1.3e19).abs() < 1e4);
        assert_eq!(p.lambda_probe, 780e-9);
        assert_eq!(p.delta_omega1, 0.0);
        assert!(p.validate().unwrap().is_empty());
    }

    #[test]
    fn detuning_definitions() {
        let p = default_params();
        let d = detunings(&p, 6.67);
        assert_eq!(d.d10, Complex64::new(6.67, 0.67));
        assert_eq!(d.d12, Complex64::new(0.0, 6.67e-4));

        let mut lossless = p.clone();
        for g in [
            &mut lossless.gamma_10,
            &mut lossless.gamma_20,
            &mut lossless.gamma_30,
            &mut lossless.gamma_12,
            &mut lossless.gamma_13,
            &mut lossless.gamma_23,
        ] {
            *g = 0.0;
        }
        let d = detunings(&lossless, 0.0);
        for z in [
            d.d10, d.d20, d.d30, d.d12, d.d13, d.d23, d.d32, d.d21, d.d31,
        ] {
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn reversed_pairs_share_decay_and_flip_detuning() {
        let d = detunings(&default_params(), 4.3);
        for (a, b) in [(d.d12, d.d21), (d.d13, d.d31), (d.d23, d.d32)] {
            assert_eq!(a.re, -b.re);
            assert_eq!(a.im, b.im);
        }
    }

    #[test]
    fn swap_matches_relabelled_parameters() {
        let mut p = default_params();
        p.gamma_30 = 0.5;
        let delta1 = 5.1;
        let d = detunings(&p, delta1);
        // Relabel 1 <-> 3 in the parameters and evaluate at δ₁ := δ₃.
        let mut q = p.clone();
        q.delta3 = delta1;
        q.gamma_10 = p.gamma_30;
        q.gamma_30 = p.gamma_10;
        let e = detunings(&q, p.delta3);
        let s = d.swapped();
        assert_eq!(s.d10, e.d10);
        assert_eq!(s.d30, e.d30);
        assert_eq!(s.d12, e.d12);
        assert_eq!(s.d32, e.d32);
        assert_eq!(s.d13, e.d13);
        assert_eq!(s.d23, e.d23);
        assert_eq!(s.swapped(), d);
    }

    #[test]
    fn unit_round_trip() {
        for x in [1.06, 780.0, 1.3e13, 6.67, 3.2e-7] {
            let checks = [
                units::m_to_mm(units::mm_to_m(x)),
                units::m_to_nm(units::nm_to_m(x)),
                units::per_m3_to_per_cm3(units::per_cm3_to_per_m3(x)),
                units::rate_from_per_second(units::rate_to_per_second(x)),
            ];
            for y in checks {
                assert!(((y - x) / x).abs() <= 1e-15, "{x} -> {y}");
            }
        }
    }

    #[test]
    fn validation_rejects_negative_rates_and_warns_on_strong_fields() {
        let mut p = default_params();
        p.gamma_12 = -1.0;
        assert_eq!(p.validate().unwrap_err().field, "gamma_12");
        let mut p = default_params();
        p.length_l = 0.0;
        assert_eq!(p.validate().unwrap_err().field, "length_l");
        let mut p = default_params();
        p.omega_p0 = Complex64::new(5.0, 0.0);
        assert_eq!(p.validate().unwrap().len(), 1);
    }

    #[test]
    fn simplified_relaxation_model() {
        let p = default_params().with_simplified_upper_rates();
        assert!((p.gamma_10 - 0.66).abs() < 1e-15);
        assert_eq!(p.gamma_10, p.gamma_30);
    }

    #[test]
    fn prefactor_order_of_magnitude() {
        // N d² / (ħ ε₀) ≈ 8.9e5 s⁻¹ for the default medium.
        let k = default_params().chi_prefactor(Beam::Probe);
        assert!((k - 0.8912).abs() < 1e-3, "{k}");
    }
}
