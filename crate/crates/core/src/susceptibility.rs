//! Taylor-expanded susceptibilities of the probe and trigger transitions and
//! their Fourier components across the coupling-field lattice.
//!
//! Probe formulas are written once; trigger values come from relabelling
//! levels 1 ↔ 3 (detunings, populations and dipole).

use crate::lattice::{lattice_f1, lattice_f2, LatticeError};
use crate::params::{Beam, DetuningSet, SystemParams};
use crate::populations::Populations;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Default floor on dressed-state denominators [rad²/µs²].
pub const DEFAULT_RESONANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SusceptibilityError {
    #[error("local coupling intensity must be >= 0, got {0}")]
    NegativeIntensity(f64),
    #[error(
        "dressed-state resonance: |{which}| = {value:e} is below the floor {floor:e}; nudge δ₁"
    )]
    DegenerateDenominator {
        which: &'static str,
        value: f64,
        floor: f64,
    },
    #[error("lattice function failed for μ = {which}: {source}")]
    Lattice {
        which: &'static str,
        #[source]
        source: LatticeError,
    },
    #[error("susceptibility `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Local linear, self-Kerr and cross-Kerr susceptibilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorChi {
    pub chi1: Complex64,
    pub chi3_self: Complex64,
    pub chi3_cross: Complex64,
}

fn check_floor(which: &'static str, z: Complex64, floor: f64) -> Result<(), SusceptibilityError> {
    if z.norm() < floor {
        return Err(SusceptibilityError::DegenerateDenominator {
            which,
            value: z.norm(),
            floor,
        });
    }
    Ok(())
}

fn check_finite(name: &'static str, z: Complex64) -> Result<Complex64, SusceptibilityError> {
    if z.is_finite() {
        Ok(z)
    } else {
        Err(SusceptibilityError::NonFinite(name))
    }
}

/// Susceptibilities of `beam` at coupling intensity `local_coupling_sq`.
///
/// `det` and `pops` are given in the probe labelling; the trigger view is
/// derived internally.
pub fn taylor_chi(
    det: &DetuningSet,
    pops: &Populations,
    params: &SystemParams,
    local_coupling_sq: f64,
    beam: Beam,
) -> Result<TaylorChi, SusceptibilityError> {
    taylor_chi_with_floor(
        det,
        pops,
        params,
        local_coupling_sq,
        beam,
        DEFAULT_RESONANCE_FLOOR,
    )
}

pub fn taylor_chi_with_floor(
    det: &DetuningSet,
    pops: &Populations,
    params: &SystemParams,
    local_coupling_sq: f64,
    beam: Beam,
    floor: f64,
) -> Result<TaylorChi, SusceptibilityError> {
    if !(local_coupling_sq >= 0.0) {
        return Err(SusceptibilityError::NegativeIntensity(local_coupling_sq));
    }
    let d = det.for_beam(beam);
    let (s_own, s_other) = own_and_other(pops, beam);
    let p = params.chi_prefactor(beam);
    let c2 = local_coupling_sq;

    let e1 = d.d10 * d.d12 - c2;
    let e3 = d.d30 * d.d32 - c2;
    let g = -d.d30.conj() * d.d23 - c2;
    check_floor("Δ₁₀Δ₁₂ − |Ωc|²", e1, floor)?;
    check_floor("Δ₃₀Δ₃₂ − |Ωc|²", e3, floor)?;
    check_floor("Δ₃₀*Δ₂₃ + |Ωc|²", g, floor)?;

    let d20c = d.d20.conj();
    let chi1 = -p * s_own * d.d12 / e1;
    let chi3_self = p * s_own * c2 / (d20c * e1 * e1);
    let chi3_cross = -p
        * ((d.d12 / d.d13) / e1 * (s_own * d.d12 / e1 + s_other * d.d23 / g)
            - s_other * c2 / (d20c * e1 * e3));
    Ok(TaylorChi {
        chi1: check_finite("chi1", chi1)?,
        chi3_self: check_finite("chi3_self", chi3_self)?,
        chi3_cross: check_finite("chi3_cross", chi3_cross)?,
    })
}

fn own_and_other(pops: &Populations, beam: Beam) -> (f64, f64) {
    match beam {
        Beam::Probe => (pops.s11, pops.s33),
        Beam::Trigger => (pops.s33, pops.s11),
    }
}

/// Intermediates of the lattice expansion for one beam.
///
/// `cross` carries Re(Ω_c⁺Ω_c⁻*), the modulation amplitude of |Ω_c(z)|².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub s_c2: f64,
    pub cross: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub c_coef: Complex64,
    pub d_coef: Complex64,
    pub nu: Complex64,
    pub nu_prime: Complex64,
    pub eta: Complex64,
    pub eta_prime: Complex64,
}

pub fn lattice_geometry(
    det: &DetuningSet,
    pops: &Populations,
    params: &SystemParams,
    beam: Beam,
) -> Result<LatticeGeometry, SusceptibilityError> {
    let d = det.for_beam(beam);
    let (s_own, s_other) = own_and_other(pops, beam);
    let s_c2 = params.coupling_intensity_mean();
    let cross = Complex64::new(params.coupling_cross().re, 0.0);

    let a = 1.0 / (s_c2 - d.d10 * d.d12);
    let c_coef = 1.0 / (s_c2 + d.d30.conj() * d.d23);
    let nu_prime = s_own * a * a;
    let nu = d.d12 * d.d12 / d.d13 * nu_prime;
    let eta = -(s_other * d.d12 * d.d23 / d.d13) / (d.d30.conj() * d.d23 + d.d10 * d.d12);
    let eta_prime = (s_other / d.d20.conj()) / (d.d30 * d.d32 - d.d10 * d.d12);
    let geometry = LatticeGeometry {
        s_c2,
        cross,
        a,
        b: 2.0 * cross * a,
        c_coef,
        d_coef: 2.0 * cross * c_coef,
        nu,
        nu_prime,
        eta,
        eta_prime,
    };
    for (name, z) in [
        ("A", a),
        ("C", c_coef),
        ("ν", nu),
        ("η", eta),
        ("η′", eta_prime),
    ] {
        check_finite(name, z)?;
    }
    Ok(geometry)
}

/// Fourier components of one beam's susceptibilities over the lattice period.
/// Index suffix is the harmonic order 2n of the spatial factor `e^{2inkz}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityCoeffs {
    pub side: Beam,
    pub chi1_0: Complex64,
    pub chi1_2: Complex64,
    pub chi3_cross_0: Complex64,
    pub chi3_cross_2: Complex64,
    pub chi3_cross_4: Complex64,
    pub chi3_self_0: Complex64,
    pub chi3_self_2: Complex64,
    pub chi3_self_4: Complex64,
}

impl SusceptibilityCoeffs {
    pub fn chi1(&self) -> [Complex64; 2] {
        [self.chi1_0, self.chi1_2]
    }
    pub fn cross(&self) -> [Complex64; 3] {
        [self.chi3_cross_0, self.chi3_cross_2, self.chi3_cross_4]
    }
    pub fn self_kerr(&self) -> [Complex64; 3] {
        [self.chi3_self_0, self.chi3_self_2, self.chi3_self_4]
    }

    /// The same set with every third-order coefficient multiplied by `s`.
    pub fn with_kerr_scale(&self, s: f64) -> Self {
        SusceptibilityCoeffs {
            chi3_cross_0: s * self.chi3_cross_0,
            chi3_cross_2: s * self.chi3_cross_2,
            chi3_cross_4: s * self.chi3_cross_4,
            chi3_self_0: s * self.chi3_self_0,
            chi3_self_2: s * self.chi3_self_2,
            chi3_self_4: s * self.chi3_self_4,
            ..*self
        }
    }
}

/// Probe and trigger coefficient sets at one detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumCoeffs {
    pub probe: SusceptibilityCoeffs,
    pub trigger: SusceptibilityCoeffs,
}

impl MediumCoeffs {
    pub fn get(&self, beam: Beam) -> &SusceptibilityCoeffs {
        match beam {
            Beam::Probe => &self.probe,
            Beam::Trigger => &self.trigger,
        }
    }

    pub fn with_kerr_scale(&self, s: f64) -> Self {
        MediumCoeffs {
            probe: self.probe.with_kerr_scale(s),
            trigger: self.trigger.with_kerr_scale(s),
        }
    }
}

pub fn medium_coeffs(
    det: &DetuningSet,
    pops: &Populations,
    params: &SystemParams,
) -> Result<MediumCoeffs, SusceptibilityError> {
    Ok(MediumCoeffs {
        probe: fourier_coeffs(det, pops, params, Beam::Probe)?,
        trigger: fourier_coeffs(det, pops, params, Beam::Trigger)?,
    })
}

fn lattice_err(which: &'static str) -> impl Fn(LatticeError) -> SusceptibilityError {
    move |source| SusceptibilityError::Lattice { which, source }
}

/// Closed-form Fourier components for `side`.
pub fn fourier_coeffs(
    det: &DetuningSet,
    pops: &Populations,
    params: &SystemParams,
    side: Beam,
) -> Result<SusceptibilityCoeffs, SusceptibilityError> {
    let geo = lattice_geometry(det, pops, params, side)?;
    let d = det.for_beam(side);
    let (s_own, _) = own_and_other(pops, side);
    let p = params.chi_prefactor(side);
    let x = geo.cross;
    let s2 = geo.s_c2;
    let d20c = d.d20.conj();

    // F values for n = 0..=3; index −1 mirrors index 1.
    let f1 = |mu: Complex64, which| -> Result<[Complex64; 4], SusceptibilityError> {
        let mut out = [Complex64::default(); 4];
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = lattice_f1(n as u32, mu).map_err(lattice_err(which))?;
        }
        Ok(out)
    };
    let f1b = f1(geo.b, "B")?;
    let f1d = f1(geo.d_coef, "D")?;
    let f1dc = f1(geo.d_coef.conj(), "D*")?;
    let mut f2b = [Complex64::default(); 4];
    for (n, slot) in f2b.iter_mut().enumerate() {
        *slot = lattice_f2(n as u32, geo.b).map_err(lattice_err("B"))?;
    }
    let neighbours = |f: &[Complex64; 4], n: usize| {
        if n == 0 {
            2.0 * f[1]
        } else {
            f[n - 1] + f[n + 1]
        }
    };
    let (a, c) = (geo.a, geo.c_coef);

    let chi1 = |n: usize| p * s_own * a * d.d12 * f1b[n];
    let cross = |n: usize| {
        -p * (geo.nu * f2b[n] - geo.eta * (a * f1b[n] - c * f1d[n])
            + geo.eta_prime * s2 * (a * f1b[n] - c.conj() * f1dc[n])
            + geo.eta_prime * x * (a * neighbours(&f1b, n) - c.conj() * neighbours(&f1dc, n)))
    };
    let self_kerr = |n: usize| p * geo.nu_prime / d20c * (s2 * f2b[n] + x * neighbours(&f2b, n));

    let out = SusceptibilityCoeffs {
        side,
        chi1_0: check_finite("chi1_0", chi1(0))?,
        chi1_2: check_finite("chi1_2", chi1(1))?,
        chi3_cross_0: check_finite("chi3_cross_0", cross(0))?,
        chi3_cross_2: check_finite("chi3_cross_2", cross(1))?,
        chi3_cross_4: check_finite("chi3_cross_4", cross(2))?,
        chi3_self_0: check_finite("chi3_self_0", self_kerr(0))?,
        chi3_self_2: check_finite("chi3_self_2", self_kerr(1))?,
        chi3_self_4: check_finite("chi3_self_4", self_kerr(2))?,
    };
    Ok(out)
}

/// Fourier components obtained by trapezoidal quadrature of [`taylor_chi`]
/// over one lattice period, with |Ω_c(x)|² = S_c² + 2Re(Ω_c⁺Ω_c⁻*)cos x.
pub fn quadrature_coeffs(
    det: &DetuningSet,
    pops: &Populations,
    params: &SystemParams,
    side: Beam,
    points: usize,
) -> Result<SusceptibilityCoeffs, SusceptibilityError> {
    let s2 = params.coupling_intensity_mean();
    let x = params.coupling_cross().re;
    let nodes: Vec<TaylorChi> = (0..points)
        .map(|j| {
            let phase =
                -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / points as f64;
            taylor_chi(
                det,
                pops,
                params,
                (s2 + 2.0 * x * phase.cos()).max(0.0),
                side,
            )
        })
        .collect::<Result<_, _>>()?;
    let h = 2.0 * std::f64::consts::PI / points as f64;
    let node = |phase: f64| &nodes[((phase + std::f64::consts::PI) / h).round() as usize % points];
    let coefficient = |field: fn(&TaylorChi) -> Complex64, n: i32| {
        crate::oracle::fourier_coefficient(|phase| field(node(phase)), n, points)
    };
    Ok(SusceptibilityCoeffs {
        side,
        chi1_0: coefficient(|t| t.chi1, 0),
        chi1_2: coefficient(|t| t.chi1, 1),
        chi3_cross_0: coefficient(|t| t.chi3_cross, 0),
        chi3_cross_2: coefficient(|t| t.chi3_cross, 1),
        chi3_cross_4: coefficient(|t| t.chi3_cross, 2),
        chi3_self_0: coefficient(|t| t.chi3_self, 0),
        chi3_self_2: coefficient(|t| t.chi3_self, 1),
        chi3_self_4: coefficient(|t| t.chi3_self, 2),
    })
}
