//! Probe spectra: transmission, reflection, phases and trigger-induced phase
//! shifts over a detuning sweep.

use crate::par::{self, Execution};
use crate::params::{detunings, Beam, ParamError, SystemParams};
use crate::populations::{compute_populations, CouplingIntensity, FieldIntensities, Populations};
use crate::propagation::{
    self_consistent_solve, FieldProfile, PropagationError, SolveReport, SolverOptions,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Backward amplitudes below this fraction of |Ω₀| carry no phase.
pub const PHASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectraError {
    #[error("{0:?} has zero incident amplitude")]
    ZeroIncident(Beam),
    #[error("detuning grid is empty")]
    EmptyGrid,
    #[error("detuning grid contains a non-finite value")]
    NonFiniteGrid,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Solver(#[from] PropagationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationMode {
    /// Steady-state populations at each detuning.
    #[default]
    Computed,
    /// σ₁₁ = σ₃₃ = ½ everywhere.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerMode {
    On,
    Off,
    /// Both solves; the point reports the trigger-on values plus the shifts.
    #[default]
    Both,
}

/// Populations used for the trigger-off reference solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffPopulations {
    /// Recomputed with Ω_t0 = 0.
    #[default]
    Own,
    /// The trigger-on populations, for sensitivity studies.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    pub populations: PopulationMode,
    pub trigger: TriggerMode,
    pub off_populations: OffPopulations,
    pub coupling: CouplingIntensity,
    pub execution: Execution,
    /// Worker cap for parallel execution.
    pub threads: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            solver: SolverOptions::default(),
            populations: PopulationMode::Computed,
            trigger: TriggerMode::Both,
            off_populations: OffPopulations::Own,
            coupling: CouplingIntensity::Mean,
            execution: Execution::Parallel,
            threads: None,
        }
    }
}

/// One row of a probe spectrum. Failed solves keep their row with NaN values
/// and both flags cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub delta1: f64,
    #[serde(rename = "T_p")]
    pub t_p: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    pub phi_plus: f64,
    pub phi_minus: Option<f64>,
    pub dphi_plus: Option<f64>,
    pub dphi_minus: Option<f64>,
    pub s00: f64,
    pub s11: f64,
    pub s22: f64,
    pub s33: f64,
    pub physical: bool,
    pub converged: bool,
}

/// Principal value in (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Continuity unwrapping along a sequence: jumps larger than π are removed
/// by multiples of 2π. Non-finite entries pass through and restart the
/// unwrapping.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut previous: Option<f64> = None;
    for &p in phases {
        let value = match previous {
            Some(last) if p.is_finite() => last + wrap_phase(p - last),
            _ => p,
        };
        previous = value.is_finite().then_some(value);
        out.push(value);
    }
    out
}

/// T = |Ω⁺(L)/Ω₀|², R = |Ω⁻(0)/Ω₀|² for `beam`.
pub fn transmission_reflection(
    profile: &FieldProfile,
    omega0: Complex64,
    beam: Beam,
) -> Result<(f64, f64), SpectraError> {
    if omega0.norm() == 0.0 {
        return Err(SpectraError::ZeroIncident(beam));
    }
    let plus = profile.plus(beam);
    let minus = profile.minus(beam);
    let t = (plus[plus.len() - 1] / omega0).norm_sqr();
    let r = (minus[0] / omega0).norm_sqr();
    Ok((t, r))
}

/// Transmitted and reflected phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phases {
    /// arg Ω⁺(L).
    pub plus: f64,
    /// arg Ω⁻(0), absent when |Ω⁻(0)| is below the floor.
    pub minus: Option<f64>,
}

pub fn phases(profile: &FieldProfile, omega0: Complex64, beam: Beam) -> Phases {
    let plus = profile.plus(beam);
    let back = profile.minus(beam)[0];
    Phases {
        plus: plus[plus.len() - 1].arg(),
        minus: (back.norm() > PHASE_FLOOR * omega0.norm()).then(|| back.arg()),
    }
}

/// Trigger-induced shifts Δφ± = φ±(on) − φ±(off), wrapped.
pub fn kerr_shift(on: &Phases, off: &Phases) -> (f64, Option<f64>) {
    let minus = match (on.minus, off.minus) {
        (Some(a), Some(b)) => Some(wrap_phase(a - b)),
        _ => None,
    };
    (wrap_phase(on.plus - off.plus), minus)
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

struct Solved {
    t: f64,
    r: f64,
    phases: Phases,
    report: SolveReport,
}

fn populations_for(
    params: &SystemParams,
    delta1: f64,
    options: &SweepOptions,
) -> Result<Populations, SpectraError> {
    match options.populations {
        PopulationMode::Balanced => Ok(Populations::balanced()),
        PopulationMode::Computed => {
            let fields = FieldIntensities::incident(params, options.coupling);
            compute_populations(&detunings(params, delta1), params, fields)
                .map_err(|e| PropagationError::from(e).into())
        }
    }
}

fn solve_probe(
    params: &SystemParams,
    delta1: f64,
    trigger_on: bool,
    populations: &Populations,
    solver: &SolverOptions,
) -> Result<Solved, SpectraError> {
    let (profile, report) = self_consistent_solve(params, delta1, trigger_on, populations, solver)?;
    let omega0 = params.omega_p0;
    let (t, r) = transmission_reflection(&profile, omega0, Beam::Probe)?;
    Ok(Solved {
        t,
        r,
        phases: phases(&profile, omega0, Beam::Probe),
        report,
    })
}

fn failed_point(delta1: f64, populations: Option<&Populations>) -> SpectrumPoint {
    let s = populations.map_or([f64::NAN; 4], |p| p.as_array());
    SpectrumPoint {
        delta1,
        t_p: f64::NAN,
        r_p: f64::NAN,
        phi_plus: f64::NAN,
        phi_minus: None,
        dphi_plus: None,
        dphi_minus: None,
        s00: s[0],
        s11: s[1],
        s22: s[2],
        s33: s[3],
        physical: false,
        converged: false,
    }
}

/// A spectrum point with the solver diagnostics behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDetail {
    pub point: SpectrumPoint,
    pub on: Option<SolveReport>,
    pub off: Option<SolveReport>,
}

/// One spectrum point. Errors are logged and reported through the flags.
pub fn spectrum_point(params: &SystemParams, delta1: f64, options: &SweepOptions) -> SpectrumPoint {
    point_detail(params, delta1, options).point
}

pub fn point_detail(params: &SystemParams, delta1: f64, options: &SweepOptions) -> PointDetail {
    let failed = |pops: Option<&Populations>| PointDetail {
        point: failed_point(delta1, pops),
        on: None,
        off: None,
    };
    let off_params = params.without_trigger();
    let on_pops = match options.trigger {
        TriggerMode::Off => None,
        _ => match populations_for(params, delta1, options) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("δ₁ = {delta1}: trigger-on populations failed: {e}");
                return failed(None);
            }
        },
    };
    let off_pops = match (options.trigger, options.off_populations, &on_pops) {
        (TriggerMode::On, _, _) => None,
        (_, OffPopulations::Frozen, Some(p)) => Some(*p),
        _ => match populations_for(&off_params, delta1, options) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("δ₁ = {delta1}: trigger-off populations failed: {e}");
                return failed(on_pops.as_ref());
            }
        },
    };
    let reported = on_pops
        .or(off_pops)
        .expect("one of the solves is requested");

    let solve = |trigger_on: bool, pops: &Populations| {
        solve_probe(params, delta1, trigger_on, pops, &options.solver).map_err(|e| {
            log::warn!(
                "δ₁ = {delta1}, trigger {}: {e}",
                if trigger_on { "on" } else { "off" }
            );
        })
    };
    let on = on_pops.as_ref().map(|p| solve(true, p));
    let off = off_pops.as_ref().map(|p| solve(false, p));
    let primary = match (&on, &off) {
        (Some(Ok(s)), _) | (None, Some(Ok(s))) => s,
        _ => return failed(Some(&reported)),
    };

    let mut converged = primary.report.converged;
    let mut physical = reported.physical;
    let (mut dphi_plus, mut dphi_minus) = (None, None);
    if let (Some(on), Some(off)) = (&on, &off) {
        match (on, off) {
            (Ok(a), Ok(b)) => {
                converged &= b.report.converged;
                if a.report.converged && b.report.converged {
                    let (p, m) = kerr_shift(&a.phases, &b.phases);
                    dphi_plus = Some(p);
                    dphi_minus = m;
                }
            }
            _ => converged = false,
        }
        physical &= off_pops.is_some_and(|p| p.physical);
    }

    let point = SpectrumPoint {
        delta1,
        t_p: primary.t,
        r_p: primary.r,
        phi_plus: primary.phases.plus,
        phi_minus: primary.phases.minus,
        dphi_plus,
        dphi_minus,
        s00: reported.s00,
        s11: reported.s11,
        s22: reported.s22,
        s33: reported.s33,
        physical,
        converged,
    };
    let report = |s: Option<Result<Solved, ()>>| s.and_then(|r| r.ok()).map(|s| s.report);
    PointDetail {
        point,
        on: report(on),
        off: report(off),
    }
}

/// Spectrum over `grid`, one point per detuning in grid order.
pub fn sweep(
    params: &SystemParams,
    grid: &[f64],
    options: &SweepOptions,
) -> Result<Vec<SpectrumPoint>, SpectraError> {
    if grid.is_empty() {
        return Err(SpectraError::EmptyGrid);
    }
    if grid.iter().any(|d| !d.is_finite()) {
        return Err(SpectraError::NonFiniteGrid);
    }
    for warning in params.validate()? {
        log::info!("{warning}");
    }
    options.solver.validate()?;
    if params.omega_p0.norm() == 0.0 {
        return Err(SpectraError::ZeroIncident(Beam::Probe));
    }
    Ok(par::map(grid, options.execution, options.threads, |&d| {
        spectrum_point(params, d, options)
    }))
}
