use num_complex::Complex64;
use proptest::prelude::*;
use tripod_kerr::populations::{
    compute_populations, CouplingIntensity, FieldIntensities, Populations,
};
use tripod_kerr::propagation::{
    self_consistent_solve, self_consistent_solve_from, Acceleration, Scheme, SolverOptions,
};
use tripod_kerr::spectra::{
    spectrum_point, sweep, transmission_reflection, SweepOptions, TriggerMode,
};
use tripod_kerr::{default_params, detunings, Beam, SystemParams};

fn computed(p: &SystemParams, delta1: f64) -> Populations {
    compute_populations(
        &detunings(p, delta1),
        p,
        FieldIntensities::incident(p, CouplingIntensity::Mean),
    )
    .unwrap()
}

fn coarse() -> SolverOptions {
    SolverOptions {
        grid_points: 401,
        ..Default::default()
    }
}

#[test]
fn default_point_converges_within_budget() {
    let p = default_params();
    let (profile, report) =
        self_consistent_solve(&p, 6.0, true, &computed(&p, 6.0), &SolverOptions::default())
            .unwrap();
    assert!(report.converged);
    assert!(report.final_residual <= 1e-8);
    assert!(report.iterations <= 50);
    let n = profile.len();
    for beam in [Beam::Probe, Beam::Trigger] {
        assert!(profile.minus(beam)[n - 1].norm() <= 1e-10 * p.incident(beam).norm());
    }
}

#[test]
fn newton_and_alternating_agree_as_the_grid_refines() {
    let p = default_params();
    let pops = computed(&p, 5.0);
    let gap = |grid_points: usize| {
        let fine = SolverOptions {
            grid_points,
            ..Default::default()
        };
        let newton = self_consistent_solve(&p, 5.0, true, &pops, &fine).unwrap();
        let alternating = self_consistent_solve(
            &p,
            5.0,
            true,
            &pops,
            &SolverOptions {
                scheme: Scheme::Alternating,
                acceleration: Acceleration::Anderson,
                max_iterations: 400,
                ..fine
            },
        )
        .unwrap();
        assert!(newton.1.converged && alternating.1.converged);
        let (tn, rn) = transmission_reflection(&newton.0, p.omega_p0, Beam::Probe).unwrap();
        let (ta, ra) = transmission_reflection(&alternating.0, p.omega_p0, Beam::Probe).unwrap();
        (tn - ta).abs().max((rn - ra).abs())
    };
    let (coarse_gap, fine_gap) = (gap(801), gap(3201));
    assert!(fine_gap < 1e-6, "{fine_gap:e}");
    assert!(
        fine_gap < coarse_gap / 8.0,
        "{coarse_gap:e} -> {fine_gap:e}"
    );
}

#[test]
fn warm_start_from_a_solution_stops_immediately() {
    let p = default_params();
    let pops = computed(&p, 7.0);
    let (profile, first) = self_consistent_solve(&p, 7.0, true, &pops, &coarse()).unwrap();
    assert!(first.converged);
    let (_, again) =
        self_consistent_solve_from(&p, 7.0, true, &pops, &coarse(), Some(&profile)).unwrap();
    assert!(again.converged);
    assert!(again.iterations <= 2, "{again:?}");
}

#[test]
fn warm_start_rejects_mismatched_grid() {
    let p = default_params();
    let pops = computed(&p, 7.0);
    let (profile, _) = self_consistent_solve(&p, 7.0, true, &pops, &coarse()).unwrap();
    let other = SolverOptions {
        grid_points: 201,
        ..Default::default()
    };
    assert!(self_consistent_solve_from(&p, 7.0, true, &pops, &other, Some(&profile)).is_err());
}

#[test]
fn kerr_shift_vanishes_for_a_weak_trigger() {
    let mut p = default_params();
    p.omega_t0 = Complex64::new(1e-4, 0.0);
    let opts = SweepOptions {
        solver: coarse(),
        ..Default::default()
    };
    for delta1 in [4.0, 5.5, 8.0] {
        let pt = spectrum_point(&p, delta1, &opts);
        assert!(pt.converged);
        assert!(pt.dphi_plus.unwrap().abs() < 1e-4, "{pt:?}");
    }
}

#[test]
fn sweeps_are_deterministic() {
    let p = default_params();
    let grid = [4.2, 6.1, 8.8];
    let opts = SweepOptions {
        solver: coarse(),
        ..Default::default()
    };
    let a = sweep(&p, &grid, &opts).unwrap();
    let b = sweep(&p, &grid, &opts).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn trigger_off_mode_has_no_shift_columns() {
    let p = default_params();
    let opts = SweepOptions {
        solver: coarse(),
        trigger: TriggerMode::Off,
        ..Default::default()
    };
    let pt = spectrum_point(&p, 6.0, &opts);
    assert!(pt.converged);
    assert_eq!((pt.dphi_plus, pt.dphi_minus), (None, None));
    assert!(pt.phi_minus.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn converged_exactly_when_residual_meets_tolerance(delta1 in 3.0f64..10.0) {
        let p = default_params();
        let (_, r) = self_consistent_solve(&p, delta1, true, &computed(&p, delta1), &coarse()).unwrap();
        prop_assert_eq!(r.converged, r.final_residual <= coarse().tolerance);
    }

    #[test]
    fn lossy_medium_does_not_amplify(delta1 in 3.0f64..10.0, c_minus in 0.0f64..3.0) {
        let mut p = default_params();
        p.omega_c_minus = Complex64::new(c_minus, 0.0);
        let pt = spectrum_point(&p, delta1, &SweepOptions { solver: coarse(), ..Default::default() });
        prop_assert!(pt.t_p >= 0.0 && pt.r_p >= 0.0);
        if pt.physical && pt.converged {
            prop_assert!(pt.t_p + pt.r_p <= 1.0 + 1e-6, "{:?}", pt);
        }
    }
}
