//! Two-mode envelope equations for the forward (Ω⁺) and backward (Ω⁻)
//! components of each beam, solved as a two-point boundary-value problem and
//! iterated to self-consistency between probe and trigger.
//!
//! Within one iteration the partner beam and the beam's own Kerr terms are
//! frozen at the previous iterate, so each solve is a linear ODE
//!
//! ```text
//! dΩ⁺/dz =  i q Ω⁺ + i k (X Ω⁺ + Y Ω⁻)
//! dΩ⁻/dz = −i q Ω⁻ − i k (X Ω⁻ + Z Ω⁺)
//! ```
//!
//! with `q = (δ − Δω₁)/c` and `k = ω₁/2c`.

use crate::params::{detunings, units, Beam, SystemParams, SPEED_OF_LIGHT};
use crate::populations::{compute_populations, FieldIntensities, PopulationError, Populations};
use crate::quasilinear::{newton_step, Envelopes};
use crate::susceptibility::{
    medium_coeffs, MediumCoeffs, SusceptibilityCoeffs, SusceptibilityError,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
const NEWTON_HALVINGS: usize = 8;
pub const DEFAULT_NEWTON_SWITCH: f64 = 0.3;

pub const DEFAULT_MAX_ITERATIONS: usize = 50;

const RESCALE_ABOVE: f64 = 1e100;
const RESCALE_BY: f64 = 1e-100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagationError {
    #[error("non-finite {beam:?} envelope at z = {z:e} m: ({plus}, {minus})")]
    NonFinite {
        beam: Beam,
        z: f64,
        plus: Complex64,
        minus: Complex64,
    },
    #[error("degenerate {beam:?} basis: boundary determinant {ratio:e} relative to its scale")]
    DegenerateBasis { beam: Beam, ratio: f64 },
    #[error("invalid solver option: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Susceptibility(#[from] SusceptibilityError),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// Envelopes of both beams sampled on a uniform grid over `[0, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub z_grid: Vec<f64>,
    pub p_plus: Vec<Complex64>,
    pub p_minus: Vec<Complex64>,
    pub t_plus: Vec<Complex64>,
    pub t_minus: Vec<Complex64>,
}

/// Envelope values of both beams at one position.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrozenSample {
    pub p_plus: Complex64,
    pub p_minus: Complex64,
    pub t_plus: Complex64,
    pub t_minus: Complex64,
}

impl FrozenSample {
    pub(crate) fn lerp(a: &FrozenSample, b: &FrozenSample) -> FrozenSample {
        FrozenSample {
            p_plus: 0.5 * (a.p_plus + b.p_plus),
            p_minus: 0.5 * (a.p_minus + b.p_minus),
            t_plus: 0.5 * (a.t_plus + b.t_plus),
            t_minus: 0.5 * (a.t_minus + b.t_minus),
        }
    }

    /// (own⁺, own⁻, other⁺, other⁻) from `beam`'s point of view.
    fn oriented(&self, beam: Beam) -> [Complex64; 4] {
        match beam {
            Beam::Probe => [self.p_plus, self.p_minus, self.t_plus, self.t_minus],
            Beam::Trigger => [self.t_plus, self.t_minus, self.p_plus, self.p_minus],
        }
    }
}

/// `points` nodes from 0 to `length` inclusive, endpoints exact.
pub fn uniform_grid(length: f64, points: usize) -> Vec<f64> {
    let last = points - 1;
    (0..points)
        .map(|j| {
            if j == last {
                length
            } else {
                length * j as f64 / last as f64
            }
        })
        .collect()
}

impl FieldProfile {
    /// Constant forward incident amplitudes, no backward waves.
    pub fn incident(params: &SystemParams, points: usize) -> Self {
        FieldProfile {
            z_grid: uniform_grid(params.length_l, points),
            p_plus: vec![params.omega_p0; points],
            p_minus: vec![Complex64::default(); points],
            t_plus: vec![params.omega_t0; points],
            t_minus: vec![Complex64::default(); points],
        }
    }

    pub fn len(&self) -> usize {
        self.z_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_grid.is_empty()
    }

    pub fn sample(&self, j: usize) -> FrozenSample {
        FrozenSample {
            p_plus: self.p_plus[j],
            p_minus: self.p_minus[j],
            t_plus: self.t_plus[j],
            t_minus: self.t_minus[j],
        }
    }

    pub fn plus(&self, beam: Beam) -> &[Complex64] {
        match beam {
            Beam::Probe => &self.p_plus,
            Beam::Trigger => &self.t_plus,
        }
    }

    pub fn minus(&self, beam: Beam) -> &[Complex64] {
        match beam {
            Beam::Probe => &self.p_minus,
            Beam::Trigger => &self.t_minus,
        }
    }

    fn set(&mut self, beam: Beam, plus: Vec<Complex64>, minus: Vec<Complex64>) {
        match beam {
            Beam::Probe => {
                self.p_plus = plus;
                self.p_minus = minus;
            }
            Beam::Trigger => {
                self.t_plus = plus;
                self.t_minus = minus;
            }
        }
    }

    /// Spatial mean of |Ω⁺|² + |Ω⁻|² for `beam` (trapezoidal).
    pub fn mean_intensity(&self, beam: Beam) -> f64 {
        let (plus, minus) = (self.plus(beam), self.minus(beam));
        let n = self.len();
        if n < 2 {
            return plus
                .first()
                .map_or(0.0, |p| p.norm_sqr() + minus[0].norm_sqr());
        }
        let f = |j: usize| plus[j].norm_sqr() + minus[j].norm_sqr();
        let inner: f64 = (1..n - 1).map(f).sum();
        (inner + 0.5 * (f(0) + f(n - 1))) / (n - 1) as f64
    }
}

/// Grating coupling coefficients at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrixXYZ {
    pub x_coef: Complex64,
    pub y_coef: Complex64,
    pub z_coef: Complex64,
    pub s_p2: f64,
    pub s_t2: f64,
}

/// X, Y, Z for `coeffs.side` with all envelopes taken from `frozen`.
pub fn assemble_xyz(coeffs: &SusceptibilityCoeffs, frozen: &FrozenSample) -> CouplingMatrixXYZ {
    let [sp, sm, op, om] = frozen.oriented(coeffs.side);
    let s_own = sp.norm_sqr() + sm.norm_sqr();
    let s_other = op.norm_sqr() + om.norm_sqr();
    let c = coeffs;

    let x_coef = c.chi1_0
        + c.chi3_cross_0 * s_other
        + c.chi3_self_0 * s_own
        + 2.0 * c.chi3_cross_2 * (op * om.conj()).re
        + 2.0 * c.chi3_self_2 * (sp * sm.conj()).re;
    let common = c.chi1_2 + c.chi3_cross_2 * s_other + c.chi3_self_2 * s_own;
    let y_coef = common
        + c.chi3_cross_0 * op * om.conj()
        + c.chi3_cross_4 * om * op.conj()
        + c.chi3_self_0 * sp * sm.conj()
        + c.chi3_self_4 * sm * sp.conj();
    let z_coef = common
        + c.chi3_cross_0 * op.conj() * om
        + c.chi3_cross_4 * om.conj() * op
        + c.chi3_self_0 * sp.conj() * sm
        + c.chi3_self_4 * sm.conj() * sp;
    let (s_p2, s_t2) = match coeffs.side {
        Beam::Probe => (s_own, s_other),
        Beam::Trigger => (s_other, s_own),
    };
    CouplingMatrixXYZ {
        x_coef,
        y_coef,
        z_coef,
        s_p2,
        s_t2,
    }
}

/// Vacuum wave-number offset q = (δ − Δω₁)/c [1/m] for a detuning in rad/µs.
pub fn vacuum_offset(delta: f64, params: &SystemParams) -> f64 {
    units::rate_to_per_second(delta - params.delta_omega1) / SPEED_OF_LIGHT
}

/// Right-hand side (dΩ⁺/dz, dΩ⁻/dz) of the envelope equations.
pub fn envelope_rhs(
    state: (Complex64, Complex64),
    xyz: &CouplingMatrixXYZ,
    delta: f64,
    params: &SystemParams,
) -> (Complex64, Complex64) {
    envelope_derivative(
        state,
        xyz,
        vacuum_offset(delta, params),
        params.propagation_scale(),
    )
}

#[inline]
pub(crate) fn envelope_derivative(
    (plus, minus): (Complex64, Complex64),
    xyz: &CouplingMatrixXYZ,
    q: f64,
    k: f64,
) -> (Complex64, Complex64) {
    let i = Complex64::i();
    (
        i * (q * plus + k * (xyz.x_coef * plus + xyz.y_coef * minus)),
        -i * (q * minus + k * (xyz.x_coef * minus + xyz.z_coef * plus)),
    )
}

/// X, Y, Z at grid nodes and at interval midpoints.
struct XyzTable {
    nodes: Vec<CouplingMatrixXYZ>,
    halves: Vec<CouplingMatrixXYZ>,
}

impl XyzTable {
    fn new(coeffs: &SusceptibilityCoeffs, frozen: &FieldProfile) -> Self {
        let samples: Vec<FrozenSample> = (0..frozen.len()).map(|j| frozen.sample(j)).collect();
        XyzTable {
            nodes: samples.iter().map(|s| assemble_xyz(coeffs, s)).collect(),
            halves: samples
                .windows(2)
                .map(|w| assemble_xyz(coeffs, &FrozenSample::lerp(&w[0], &w[1])))
                .collect(),
        }
    }
}

type State = (Complex64, Complex64);

#[inline]
fn rk4_step(
    y: State,
    h: f64,
    start: &CouplingMatrixXYZ,
    mid: &CouplingMatrixXYZ,
    end: &CouplingMatrixXYZ,
    q: f64,
    k: f64,
) -> State {
    let axpy = |a: State, s: f64, b: State| (a.0 + s * b.0, a.1 + s * b.1);
    let k1 = envelope_derivative(y, start, q, k);
    let k2 = envelope_derivative(axpy(y, 0.5 * h, k1), mid, q, k);
    let k3 = envelope_derivative(axpy(y, 0.5 * h, k2), mid, q, k);
    let k4 = envelope_derivative(axpy(y, h, k3), end, q, k);
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Profiles of one or more basis solutions sharing a common scale factor.
struct Basis {
    plus: Vec<Vec<Complex64>>,
    minus: Vec<Vec<Complex64>>,
}

/// Integrates the basis states `initial` across the grid, from z = 0 when
/// `forward` and from z = L otherwise, rescaling all of them together when any
/// grows beyond `1e100`.
fn integrate_basis(
    initial: &[State],
    forward: bool,
    table: &XyzTable,
    z_grid: &[f64],
    q: f64,
    k: f64,
    beam: Beam,
    rescale: bool,
) -> Result<Basis, PropagationError> {
    let n = z_grid.len();
    let mut basis = Basis {
        plus: vec![vec![Complex64::default(); n]; initial.len()],
        minus: vec![vec![Complex64::default(); n]; initial.len()],
    };
    let mut states = initial.to_vec();
    let first = if forward { 0 } else { n - 1 };
    for (b, s) in states.iter().enumerate() {
        basis.plus[b][first] = s.0;
        basis.minus[b][first] = s.1;
    }
    for step in 0..n - 1 {
        let (from, to) = if forward {
            (step, step + 1)
        } else {
            (n - 1 - step, n - 2 - step)
        };
        let h = z_grid[to] - z_grid[from];
        let mid = &table.halves[from.min(to)];
        let mut largest = 0.0f64;
        for (b, s) in states.iter_mut().enumerate() {
            *s = rk4_step(*s, h, &table.nodes[from], mid, &table.nodes[to], q, k);
            if !(s.0.is_finite() && s.1.is_finite()) {
                return Err(PropagationError::NonFinite {
                    beam,
                    z: z_grid[to],
                    plus: s.0,
                    minus: s.1,
                });
            }
            basis.plus[b][to] = s.0;
            basis.minus[b][to] = s.1;
            largest = largest.max(s.0.norm()).max(s.1.norm());
        }
        if rescale && largest > RESCALE_ABOVE {
            for s in states.iter_mut() {
                s.0 *= RESCALE_BY;
                s.1 *= RESCALE_BY;
            }
            let visited: Vec<usize> = if forward {
                (0..=to).collect()
            } else {
                (to..n).collect()
            };
            for b in 0..states.len() {
                for &j in &visited {
                    basis.plus[b][j] *= RESCALE_BY;
                    basis.minus[b][j] *= RESCALE_BY;
                }
            }
        }
    }
    Ok(basis)
}

/// Fourth-order integration of the frozen-field equations from z = 0 to L.
pub fn integrate_ivp(
    initial: (Complex64, Complex64),
    frozen: &FieldProfile,
    coeffs: &SusceptibilityCoeffs,
    delta: f64,
    params: &SystemParams,
) -> Result<(Vec<Complex64>, Vec<Complex64>), PropagationError> {
    let table = XyzTable::new(coeffs, frozen);
    let q = vacuum_offset(delta, params);
    let k = params.propagation_scale();
    let mut basis = integrate_basis(
        &[initial],
        true,
        &table,
        &frozen.z_grid,
        q,
        k,
        coeffs.side,
        false,
    )?;
    Ok((basis.plus.remove(0), basis.minus.remove(0)))
}

/// Where the basis solutions of the boundary-value solve start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Launch {
    /// One solution with (Ω⁺, Ω⁻) = (1, 0) at z = L, integrated towards z = 0.
    /// The exit condition Ω⁻(L) = 0 then holds exactly and the growing mode of
    /// an absorbing medium is followed in its stable direction.
    #[default]
    Exit,
    /// Solutions (Ω₀, 0) and (0, 1) at z = 0, integrated towards z = L and
    /// combined. Loses accuracy at large optical depth.
    Entrance,
}

/// Solution of the frozen-field boundary-value problem Ω⁺(0) = `omega0`,
/// Ω⁻(L) = 0 for `coeffs.side`.
pub fn solve_bvp(
    omega0: Complex64,
    frozen: &FieldProfile,
    coeffs: &SusceptibilityCoeffs,
    delta: f64,
    params: &SystemParams,
    launch: Launch,
) -> Result<(Vec<Complex64>, Vec<Complex64>), PropagationError> {
    let beam = coeffs.side;
    let n = frozen.len();
    let table = XyzTable::new(coeffs, frozen);
    let q = vacuum_offset(delta, params);
    let k = params.propagation_scale();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::default();

    let (basis, forward) = match launch {
        Launch::Exit => (
            integrate_basis(
                &[(one, zero)],
                false,
                &table,
                &frozen.z_grid,
                q,
                k,
                beam,
                true,
            )?,
            false,
        ),
        Launch::Entrance => (
            integrate_basis(
                &[(omega0, zero), (zero, one)],
                true,
                &table,
                &frozen.z_grid,
                q,
                k,
                beam,
                true,
            )?,
            true,
        ),
    };

    // Coefficients c of Σ c_b·basis_b meeting both boundary conditions.
    let coefficients: Vec<Complex64> = if !forward {
        let u0 = basis.plus[0][0];
        let scale = basis.plus[0].iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if !(u0.norm() > 1e-12 * scale) {
            return Err(PropagationError::DegenerateBasis {
                beam,
                ratio: u0.norm() / scale,
            });
        }
        vec![omega0 / u0]
    } else {
        let (u0, v0) = (basis.plus[0][0], basis.plus[1][0]);
        let (ul, vl) = (basis.minus[0][n - 1], basis.minus[1][n - 1]);
        let det = u0 * vl - v0 * ul;
        let scale = (u0 * vl).norm() + (v0 * ul).norm();
        if !(det.norm() > 1e-12 * scale) {
            return Err(PropagationError::DegenerateBasis {
                beam,
                ratio: if scale > 0.0 { det.norm() / scale } else { 0.0 },
            });
        }
        vec![omega0 * vl / det, -omega0 * ul / det]
    };
    let combine = |parts: &Vec<Vec<Complex64>>| -> Vec<Complex64> {
        (0..n)
            .map(|j| coefficients.iter().zip(parts).map(|(c, p)| c * p[j]).sum())
            .collect()
    };
    let plus = combine(&basis.plus);
    let mut minus = combine(&basis.minus);
    if !forward {
        minus[n - 1] = zero;
    }
    Ok((plus, minus))
}

/// Iteration used to reach the self-consistent fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Alternating sweeps until the residual falls below `newton_switch`,
    /// then damped Newton steps on the coupled probe/trigger equations; each
    /// Newton step solves one linear boundary-value problem for all four
    /// envelopes.
    Newton,
    /// Probe then trigger re-solved in turn with the other beam and their own
    /// Kerr terms frozen at the previous iterate.
    Alternating,
}

/// Fixed-point update rule of the alternating scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acceleration {
    /// Plain (optionally under-relaxed) substitution of the new iterate.
    None,
    /// Anderson mixing over the last `anderson_depth` iterates.
    Anderson,
}

/// Controls of the self-consistent iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grid_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scheme: Scheme,
    /// Weight λ of each new iterate, in (0, 1]; also the mixing weight of
    /// Anderson steps.
    pub damping: f64,
    /// Without acceleration, halve λ (down to `min_damping`) whenever the
    /// residual grows.
    pub adaptive_damping: bool,
    pub min_damping: f64,
    pub acceleration: Acceleration,
    pub anderson_depth: usize,
    pub launch: Launch,
    /// Recompute populations each iteration from the z-averaged intensities.
    pub recompute_populations: bool,
    /// Under [`Scheme::Newton`], residual below which Newton steps take over
    /// from alternating sweeps.
    pub newton_switch: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grid_points: DEFAULT_GRID_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            scheme: Scheme::Newton,
            damping: 1.0,
            adaptive_damping: false,
            min_damping: 1.0 / 64.0,
            acceleration: Acceleration::Anderson,
            anderson_depth: 5,
            launch: Launch::Exit,
            recompute_populations: false,
            newton_switch: DEFAULT_NEWTON_SWITCH,
        }
    }
}

impl SolverOptions {
    /// The unaccelerated, undamped alternating scheme.
    pub fn plain() -> Self {
        SolverOptions {
            scheme: Scheme::Alternating,
            acceleration: Acceleration::None,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        let bad = |m: &str| Err(PropagationError::InvalidOptions(m.to_string()));
        if self.grid_points < 3 {
            return bad("grid_points must be >= 3");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.min_damping > 0.0 && self.min_damping <= self.damping) {
            return bad("min_damping must lie in (0, damping]");
        }
        if self.acceleration == Acceleration::Anderson && self.anderson_depth == 0 {
            return bad("anderson_depth must be >= 1");
        }
        Ok(())
    }
}

/// Diagnostics of one self-consistent solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Largest |Ω⁻(L)| over both beams after each iteration.
    pub bvp_residuals: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Under-relaxation weight in effect at the last iteration.
    pub damping: f64,
}

/// Real coordinates of the active envelopes, each beam scaled by its incident
/// amplitude so that both weigh equally in the mixing.
struct Packing {
    beams: Vec<(Beam, f64)>,
}

impl Packing {
    fn pack(&self, profile: &FieldProfile) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.beams.len() * 4 * profile.len());
        for &(beam, scale) in &self.beams {
            for part in [profile.plus(beam), profile.minus(beam)] {
                for z in part {
                    out.push(z.re / scale);
                    out.push(z.im / scale);
                }
            }
        }
        out
    }

    fn unpack(&self, v: &[f64], template: &FieldProfile) -> FieldProfile {
        let n = template.len();
        let mut profile = template.clone();
        let mut chunks = v.chunks_exact(2 * n);
        for &(beam, scale) in &self.beams {
            let mut read = || -> Vec<Complex64> {
                chunks
                    .next()
                    .expect("vector matches packing")
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0] * scale, c[1] * scale))
                    .collect()
            };
            let plus = read();
            let minus = read();
            profile.set(beam, plus, minus);
        }
        profile
    }
}

/// Anderson mixing (type II) with a sliding window of past iterates.
struct Anderson {
    depth: usize,
    xs: std::collections::VecDeque<Vec<f64>>,
    fs: std::collections::VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            xs: Default::default(),
            fs: Default::default(),
        }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    /// Next iterate from the current point `x` and its residual `f = g(x) − x`.
    fn step(&mut self, x: Vec<f64>, f: Vec<f64>, beta: f64) -> Vec<f64> {
        self.xs.push_back(x);
        self.fs.push_back(f);
        if self.xs.len() > self.depth + 1 {
            self.xs.pop_front();
            self.fs.pop_front();
        }
        let x = self.xs.back().expect("just pushed");
        let f = self.fs.back().expect("just pushed");
        let mut next: Vec<f64> = x.iter().zip(f).map(|(a, b)| a + beta * b).collect();
        let m = self.xs.len() - 1;
        if m == 0 {
            return next;
        }
        let n = x.len();
        let diff = |h: &std::collections::VecDeque<Vec<f64>>, j: usize| {
            h[j + 1]
                .iter()
                .zip(&h[j])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()
        };
        let dx: Vec<Vec<f64>> = (0..m).map(|j| diff(&self.xs, j)).collect();
        let df: Vec<Vec<f64>> = (0..m).map(|j| diff(&self.fs, j)).collect();
        let a = nalgebra::DMatrix::from_fn(n, m, |i, j| df[j][i]);
        let b = nalgebra::DVector::from_column_slice(f);
        let gamma = match a.svd(true, true).solve(&b, 1e-12) {
            Ok(g) => g,
            Err(_) => return next,
        };
        for j in 0..m {
            let g = gamma[j];
            if !g.is_finite() {
                continue;
            }
            for (i, v) in next.iter_mut().enumerate() {
                *v -= g * (dx[j][i] + beta * df[j][i]);
            }
        }
        next
    }
}

fn sup_change(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

fn relax(old: &[Complex64], new: Vec<Complex64>, weight: f64) -> Vec<Complex64> {
    if weight == 1.0 {
        return new;
    }
    old.iter()
        .zip(new)
        .map(|(o, n)| (1.0 - weight) * o + weight * n)
        .collect()
}

/// Largest step length, relative to incident amplitude, between two profiles.
fn relative_change(
    a: &FieldProfile,
    b: &FieldProfile,
    beams: &[Beam],
    params: &SystemParams,
) -> f64 {
    beams
        .iter()
        .filter(|&&beam| params.incident(beam).norm() > 0.0)
        .map(|&beam| {
            sup_change(a.plus(beam), b.plus(beam)).max(sup_change(a.minus(beam), b.minus(beam)))
                / params.incident(beam).norm()
        })
        .fold(0.0, f64::max)
}

fn blend(from: &FieldProfile, to: &FieldProfile, beams: &[Beam], t: f64) -> FieldProfile {
    let mut out = from.clone();
    for &beam in beams {
        out.set(
            beam,
            relax(from.plus(beam), to.plus(beam).to_vec(), t),
            relax(from.minus(beam), to.minus(beam).to_vec(), t),
        );
    }
    out
}

/// A Newton target computed about some iterate, with the relative length of
/// the correction leading to it.
struct NewtonTarget {
    target: FieldProfile,
    length: f64,
}

fn newton_target(
    env: &Envelopes,
    at: &FieldProfile,
    beams: &[Beam],
    params: &SystemParams,
) -> Option<NewtonTarget> {
    let target = newton_step(env, at)?;
    let length = relative_change(&target, at, beams, params);
    length
        .is_finite()
        .then_some(NewtonTarget { target, length })
}

/// Damped Newton step under a monotonicity test: a step of fraction `t` is
/// accepted when the Newton correction at the trial point is shorter than
/// `(1 − t/4)` times the current one. Fractions are halved on rejection; when
/// none is accepted, or the linearized problem cannot be integrated, one
/// alternating sweep is taken instead. Returns the new iterate, the relative
/// step length, and the Newton target about the new iterate when known.
fn newton_line_search<S>(
    env: &Envelopes,
    profile: &FieldProfile,
    cached: Option<NewtonTarget>,
    beams: &[Beam],
    params: &SystemParams,
    sweep: &S,
) -> Result<(FieldProfile, f64, Option<NewtonTarget>), PropagationError>
where
    S: Fn(&FieldProfile) -> Result<(FieldProfile, f64, f64), PropagationError>,
{
    if let Some(current) = cached.or_else(|| newton_target(env, profile, beams, params)) {
        let mut t = 1.0;
        for _ in 0..NEWTON_HALVINGS {
            let trial = blend(profile, &current.target, beams, t);
            if let Some(ahead) = newton_target(env, &trial, beams, params) {
                if ahead.length < (1.0 - 0.25 * t) * current.length {
                    return Ok((trial, t * current.length, Some(ahead)));
                }
            }
            t *= 0.5;
        }
    }
    let (next, step, _) = sweep(profile)?;
    Ok((next, step, None))
}

/// One alternating sweep: each active beam is re-solved with the others frozen
/// at their latest values, relaxed by `weight`. Returns the new profile, the
/// residual (largest sup-norm change over incident amplitude) and the largest
/// |Ω⁻(L)|.
#[allow(clippy::too_many_arguments)]
fn alternating_sweep(
    profile: &FieldProfile,
    coeffs: &MediumCoeffs,
    beams: &[Beam],
    params: &SystemParams,
    delta1: f64,
    launch: Launch,
    weight: f64,
) -> Result<(FieldProfile, f64, f64), PropagationError> {
    let mut next = profile.clone();
    let mut residual = 0.0f64;
    let mut bvp_residual = 0.0f64;
    for &beam in beams {
        let omega0 = params.incident(beam);
        let delta = match beam {
            Beam::Probe => delta1,
            Beam::Trigger => params.delta3,
        };
        let (plus, minus) = solve_bvp(omega0, &next, coeffs.get(beam), delta, params, launch)?;
        let plus = relax(next.plus(beam), plus, weight);
        let minus = relax(next.minus(beam), minus, weight);
        if omega0.norm() > 0.0 {
            let change =
                sup_change(&plus, profile.plus(beam)).max(sup_change(&minus, profile.minus(beam)));
            residual = residual.max(change / omega0.norm());
        }
        bvp_residual = bvp_residual.max(minus[minus.len() - 1].norm());
        next.set(beam, plus, minus);
    }
    Ok((next, residual, bvp_residual))
}

/// Iterates probe and trigger solves to a joint fixed point.
///
/// Each sweep solves the probe with the trigger frozen, then the trigger with
/// the new probe frozen, starting from the constant incident amplitudes. Under
/// [`Scheme::Newton`] the sweeps only bring the iterate close to the fixed
/// point, which Newton steps then resolve. With
/// `trigger_on == false` the trigger is absent from every susceptibility
/// assembly. Non-convergence is not an error: the iterate with the smallest
/// residual is returned with `converged == false`.
pub fn self_consistent_solve(
    params: &SystemParams,
    delta1: f64,
    trigger_on: bool,
    populations: &Populations,
    options: &SolverOptions,
) -> Result<(FieldProfile, SolveReport), PropagationError> {
    self_consistent_solve_from(params, delta1, trigger_on, populations, options, None)
}

/// As [`self_consistent_solve`], starting from `initial` when given. The
/// profile must be on the grid of `options`.
pub fn self_consistent_solve_from(
    params: &SystemParams,
    delta1: f64,
    trigger_on: bool,
    populations: &Populations,
    options: &SolverOptions,
    initial: Option<&FieldProfile>,
) -> Result<(FieldProfile, SolveReport), PropagationError> {
    options.validate()?;
    let params = if trigger_on {
        params.clone()
    } else {
        params.without_trigger()
    };
    let det = detunings(&params, delta1);
    let mut coeffs: MediumCoeffs = medium_coeffs(&det, populations, &params)?;
    let mut profile = FieldProfile::incident(&params, options.grid_points);
    let beams: Vec<Beam> = if trigger_on {
        vec![Beam::Probe, Beam::Trigger]
    } else {
        vec![Beam::Probe]
    };
    let packing = Packing {
        beams: beams
            .iter()
            .map(|&b| (b, params.incident(b).norm()))
            .filter(|&(_, s)| s > 0.0)
            .collect(),
    };
    let mut anderson = Anderson::new(options.anderson_depth);
    let jacobian_step = 1e-6
        * beams
            .iter()
            .map(|&b| params.incident(b).norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);

    if let Some(start) = initial {
        if start.len() != options.grid_points {
            return Err(PropagationError::InvalidOptions(
                "initial profile does not match grid_points".to_string(),
            ));
        }
        profile = start.clone();
        if !trigger_on {
            let n = profile.len();
            profile.set(
                Beam::Trigger,
                vec![Complex64::default(); n],
                vec![Complex64::default(); n],
            );
        }
    }

    let mut report = SolveReport {
        iterations: 0,
        final_residual: f64::INFINITY,
        converged: false,
        bvp_residuals: Vec::new(),
        residual_history: Vec::new(),
        damping: options.damping,
    };
    let mut best: Option<(f64, FieldProfile)> = None;
    let mut weight = options.damping;
    // A supplied profile is taken to be close enough for Newton steps.
    let mut previous = match initial {
        Some(_) => options.newton_switch,
        None => f64::INFINITY,
    };
    let mut pending: Option<NewtonTarget> = None;

    for iteration in 1..=options.max_iterations {
        let newton_now = options.scheme == Scheme::Newton && previous <= options.newton_switch;
        let (mapped, residual, bvp_residual) = match newton_now {
            true => {
                let env = Envelopes {
                    coeffs: &coeffs,
                    q_probe: vacuum_offset(delta1, &params),
                    q_trigger: vacuum_offset(params.delta3, &params),
                    k: params.propagation_scale(),
                    step: jacobian_step,
                };
                let sweep = |x: &FieldProfile| {
                    alternating_sweep(x, &coeffs, &beams, &params, delta1, options.launch, 1.0)
                };
                let (next, step, ahead) =
                    newton_line_search(&env, &profile, pending.take(), &beams, &params, &sweep)?;
                pending = ahead;
                let bvp = beams
                    .iter()
                    .map(|&b| next.minus(b)[next.len() - 1].norm())
                    .fold(0.0, f64::max);
                (next, step, bvp)
            }
            false => {
                pending = None;
                let sweep_weight = match options.acceleration {
                    Acceleration::None => weight,
                    Acceleration::Anderson => 1.0,
                };
                alternating_sweep(
                    &profile,
                    &coeffs,
                    &beams,
                    &params,
                    delta1,
                    options.launch,
                    sweep_weight,
                )?
            }
        };
        report.iterations = iteration;
        report.final_residual = residual;
        report.residual_history.push(residual);
        report.bvp_residuals.push(bvp_residual);
        report.damping = weight;

        if residual <= options.tolerance {
            report.converged = true;
            return Ok((mapped, report));
        }
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, mapped.clone()));
        }

        profile = match (newton_now, options.acceleration) {
            (true, _) | (false, Acceleration::None) => {
                if options.adaptive_damping && residual > previous {
                    weight = (0.5 * weight).max(options.min_damping);
                }
                mapped
            }
            (false, Acceleration::Anderson) => {
                if residual > 1e3 * best.as_ref().map_or(f64::INFINITY, |(r, _)| *r) {
                    anderson.reset();
                }
                let x = packing.pack(&profile);
                let f: Vec<f64> = packing
                    .pack(&mapped)
                    .iter()
                    .zip(&x)
                    .map(|(g, x)| g - x)
                    .collect();
                packing.unpack(&anderson.step(x, f, weight), &profile)
            }
        };
        previous = residual;

        if options.recompute_populations {
            let fields = FieldIntensities {
                probe: profile.mean_intensity(Beam::Probe),
                trigger: profile.mean_intensity(Beam::Trigger),
                coupling: params.coupling_intensity_mean(),
            };
            let pops = compute_populations(&det, &params, fields)?;
            coeffs = medium_coeffs(&det, &pops, &params)?;
            pending = None;
        }
    }
    let (residual, best_profile) = best.expect("at least one iteration ran");
    report.final_residual = residual;
    Ok((best_profile, report))
}
