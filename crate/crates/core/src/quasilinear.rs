//! Newton iteration (quasilinearization) for the coupled nonlinear envelope
//! equations of probe and trigger.
//!
//! With the eight real envelope components split into forward `u` and
//! backward `v` parts, each step solves the linear problem
//!
//! ```text
//! u' = A u + B v + s_u,   u(0) = incident
//! v' = C u + D v + s_v,   v(L) = 0
//! ```
//!
//! obtained by linearizing the right-hand side about the previous iterate.
//! The boundary-value problem is reduced by the invariant imbedding
//! `v = R u + w`: the reflection matrix `R` and offset `w` are integrated from
//! the exit face towards the entrance, then `u` is integrated forwards. Both
//! directions are the decaying directions of a passive medium, so the sweep
//! stays accurate at large optical depth.

use crate::propagation::{assemble_xyz, envelope_derivative, FieldProfile, FrozenSample};
use crate::susceptibility::MediumCoeffs;
use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

type M4 = SMatrix<f64, 4, 4>;
type V4 = SVector<f64, 4>;
type V8 = SVector<f64, 8>;
type M8 = SMatrix<f64, 8, 8>;

/// Everything the nonlinear right-hand side depends on besides the state.
pub(crate) struct Envelopes<'a> {
    pub coeffs: &'a MediumCoeffs,
    /// Vacuum offsets q of probe and trigger [1/m].
    pub q_probe: f64,
    pub q_trigger: f64,
    /// ω₁/2c [1/m].
    pub k: f64,
    /// Finite-difference step for the Jacobian, in field units.
    pub step: f64,
}

fn to_state(s: &FrozenSample) -> V8 {
    V8::from([
        s.p_plus.re,
        s.p_plus.im,
        s.t_plus.re,
        s.t_plus.im,
        s.p_minus.re,
        s.p_minus.im,
        s.t_minus.re,
        s.t_minus.im,
    ])
}

fn to_sample(y: &V8) -> FrozenSample {
    FrozenSample {
        p_plus: Complex64::new(y[0], y[1]),
        t_plus: Complex64::new(y[2], y[3]),
        p_minus: Complex64::new(y[4], y[5]),
        t_minus: Complex64::new(y[6], y[7]),
    }
}

impl Envelopes<'_> {
    /// Full nonlinear derivative with every X, Y, Z taken at the state itself.
    fn derivative(&self, y: &V8) -> V8 {
        let s = to_sample(y);
        let xp = assemble_xyz(&self.coeffs.probe, &s);
        let xt = assemble_xyz(&self.coeffs.trigger, &s);
        let (dpp, dpm) = envelope_derivative((s.p_plus, s.p_minus), &xp, self.q_probe, self.k);
        let (dtp, dtm) = envelope_derivative((s.t_plus, s.t_minus), &xt, self.q_trigger, self.k);
        to_state(&FrozenSample {
            p_plus: dpp,
            p_minus: dpm,
            t_plus: dtp,
            t_minus: dtm,
        })
    }

    /// Jacobian J (central differences, exact up to rounding for the cubic
    /// right-hand side) and source `s = f(y) − J y`.
    fn linearize(&self, y: &V8) -> Linearization {
        let mut j = M8::zeros();
        for c in 0..8 {
            let mut up = *y;
            let mut down = *y;
            up[c] += self.step;
            down[c] -= self.step;
            let col = (self.derivative(&up) - self.derivative(&down)) / (2.0 * self.step);
            j.set_column(c, &col);
        }
        let s = self.derivative(y) - j * y;
        Linearization {
            a: j.fixed_view::<4, 4>(0, 0).into_owned(),
            b: j.fixed_view::<4, 4>(0, 4).into_owned(),
            c: j.fixed_view::<4, 4>(4, 0).into_owned(),
            d: j.fixed_view::<4, 4>(4, 4).into_owned(),
            s_u: s.fixed_rows::<4>(0).into_owned(),
            s_v: s.fixed_rows::<4>(4).into_owned(),
        }
    }
}

struct Linearization {
    a: M4,
    b: M4,
    c: M4,
    d: M4,
    s_u: V4,
    s_v: V4,
}

impl Linearization {
    fn imbedding_rhs(&self, r: &M4, w: &V4) -> (M4, V4) {
        let dr = self.c + self.d * r - r * self.a - r * self.b * r;
        let dw = (self.d - r * self.b) * w + self.s_v - r * self.s_u;
        (dr, dw)
    }

    fn forward_rhs(&self, u: &V4, r: &M4, w: &V4) -> V4 {
        (self.a + self.b * r) * u + self.b * w + self.s_u
    }
}

/// One Newton step: the linearized boundary-value problem about `current`,
/// solved on its grid. Returns the new profile.
pub(crate) fn newton_step(env: &Envelopes, current: &FieldProfile) -> Option<FieldProfile> {
    let n = current.len();
    let z = &current.z_grid;
    let samples: Vec<FrozenSample> = (0..n).map(|j| current.sample(j)).collect();
    let nodes: Vec<Linearization> = samples
        .iter()
        .map(|s| env.linearize(&to_state(s)))
        .collect();
    let halves: Vec<Linearization> = samples
        .windows(2)
        .map(|w| env.linearize(&to_state(&FrozenSample::lerp(&w[0], &w[1]))))
        .collect();

    // Exit to entrance: R(L) = 0, w(L) = 0.
    let mut r = vec![M4::zeros(); n];
    let mut w = vec![V4::zeros(); n];
    let mut dr = vec![M4::zeros(); n];
    let mut dw = vec![V4::zeros(); n];
    let (r_end, w_end) = nodes[n - 1].imbedding_rhs(&r[n - 1], &w[n - 1]);
    dr[n - 1] = r_end;
    dw[n - 1] = w_end;
    for j in (1..n).rev() {
        let h = z[j - 1] - z[j];
        let (r0, w0) = (r[j], w[j]);
        let (k1r, k1w) = (dr[j], dw[j]);
        let mid = &halves[j - 1];
        let (k2r, k2w) = mid.imbedding_rhs(&(r0 + 0.5 * h * k1r), &(w0 + 0.5 * h * k1w));
        let (k3r, k3w) = mid.imbedding_rhs(&(r0 + 0.5 * h * k2r), &(w0 + 0.5 * h * k2w));
        let (k4r, k4w) = nodes[j - 1].imbedding_rhs(&(r0 + h * k3r), &(w0 + h * k3w));
        r[j - 1] = r0 + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        w[j - 1] = w0 + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        let (a, b) = nodes[j - 1].imbedding_rhs(&r[j - 1], &w[j - 1]);
        dr[j - 1] = a;
        dw[j - 1] = b;
        if !(r[j - 1].iter().all(|x| x.is_finite()) && w[j - 1].iter().all(|x| x.is_finite())) {
            return None;
        }
    }

    // Entrance to exit, with R and w at midpoints from cubic Hermite data.
    let first = to_state(&samples[0]);
    let mut u = vec![V4::zeros(); n];
    u[0] = first.fixed_rows::<4>(0).into_owned();
    for j in 0..n - 1 {
        let h = z[j + 1] - z[j];
        let r_mid = 0.5 * (r[j] + r[j + 1]) + h / 8.0 * (dr[j] - dr[j + 1]);
        let w_mid = 0.5 * (w[j] + w[j + 1]) + h / 8.0 * (dw[j] - dw[j + 1]);
        let mid = &halves[j];
        let u0 = u[j];
        let k1 = nodes[j].forward_rhs(&u0, &r[j], &w[j]);
        let k2 = mid.forward_rhs(&(u0 + 0.5 * h * k1), &r_mid, &w_mid);
        let k3 = mid.forward_rhs(&(u0 + 0.5 * h * k2), &r_mid, &w_mid);
        let k4 = nodes[j + 1].forward_rhs(&(u0 + h * k3), &r[j + 1], &w[j + 1]);
        u[j + 1] = u0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !u[j + 1].iter().all(|x| x.is_finite()) {
            return None;
        }
    }

    let mut next = current.clone();
    for j in 0..n {
        let v = r[j] * u[j] + w[j];
        let mut y = V8::zeros();
        y.fixed_rows_mut::<4>(0).copy_from(&u[j]);
        y.fixed_rows_mut::<4>(4).copy_from(&v);
        let s = to_sample(&y);
        next.p_plus[j] = s.p_plus;
        next.p_minus[j] = s.p_minus;
        next.t_plus[j] = s.t_plus;
        next.t_minus[j] = s.t_minus;
    }
    let last = n - 1;
    next.p_minus[last] = Complex64::default();
    next.t_minus[last] = Complex64::default();
    Some(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_params, detunings};
    use crate::populations::Populations;
    use crate::propagation::vacuum_offset;
    use crate::susceptibility::medium_coeffs;

    fn env(coeffs: &MediumCoeffs) -> Envelopes<'_> {
        let p = default_params();
        Envelopes {
            coeffs,
            q_probe: vacuum_offset(6.0, &p),
            q_trigger: vacuum_offset(p.delta3, &p),
            k: p.propagation_scale(),
            step: 1e-6,
        }
    }

    #[test]
    fn linearization_reproduces_derivative() {
        let p = default_params();
        let coeffs = medium_coeffs(&detunings(&p, 6.0), &Populations::balanced(), &p).unwrap();
        let e = env(&coeffs);
        let y = V8::from([0.5, 0.1, 0.3, -0.2, -0.05, 0.12, 0.2, 0.02]);
        let lin = e.linearize(&y);
        let dy = V8::from([1e-4, -2e-4, 3e-4, 1e-4, -1e-4, 2e-4, 0.0, 1e-4]);
        let mut j = M8::zeros();
        j.fixed_view_mut::<4, 4>(0, 0).copy_from(&lin.a);
        j.fixed_view_mut::<4, 4>(0, 4).copy_from(&lin.b);
        j.fixed_view_mut::<4, 4>(4, 0).copy_from(&lin.c);
        j.fixed_view_mut::<4, 4>(4, 4).copy_from(&lin.d);
        let exact = e.derivative(&(y + dy)) - e.derivative(&y);
        let linear = j * dy;
        assert!((exact - linear).norm() < 1e-3 * linear.norm());
        let mut s = V8::zeros();
        s.fixed_rows_mut::<4>(0).copy_from(&lin.s_u);
        s.fixed_rows_mut::<4>(4).copy_from(&lin.s_v);
        assert!((j * y + s - e.derivative(&y)).norm() < 1e-12 * e.derivative(&y).norm());
    }
}
