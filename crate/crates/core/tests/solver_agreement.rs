//! Cross-checks between the three prevalence solution routes on shared
//! inputs: closed form, integral-solution quadrature, and direct RK4
//! integration. Any serious defect in one route breaks a pairwise
//! comparison here.

use previnc_core::idm::{
    integral_g, prevalence_closed_form, prevalence_differential_many, prevalence_ode_many,
    GompertzIncidence, InitialCondition, SolverOptions,
};
use previnc_core::rates::PiecewiseConstantRate;

const REFERENCE_INCIDENCE: GompertzIncidence = GompertzIncidence {
    beta0: -7.8237,
    beta1: 0.075_59,
};

fn test_ages() -> Vec<f64> {
    (0..=18).map(|k| 20.0 + 2.5 * k as f64).collect()
}

fn general_mortality() -> PiecewiseConstantRate {
    PiecewiseConstantRate::new(
        (0..10).map(|k| 20.0 + 5.0 * k as f64).collect(),
        vec![
            0.001_042_6, 0.001_061_1, 0.001_479_4, 0.002_373_1, 0.004_038_7, 0.007_041_0,
            0.012_432_5, 0.021_515_6, 0.037_234_6,
        ],
    )
    .unwrap()
}

#[test]
fn three_routes_agree_pairwise_without_differential_mortality() {
    let ic = InitialCondition::new(20.0, 0.0).unwrap();
    let m = general_mortality();
    let ages = test_ages();
    let opts = SolverOptions::default();

    let closed: Vec<f64> = ages
        .iter()
        .map(|&a| prevalence_closed_form(&REFERENCE_INCIDENCE, &ic, a).unwrap())
        .collect();
    let quad =
        prevalence_differential_many(&REFERENCE_INCIDENCE, &m, &m, &ic, &ages, &opts).unwrap();
    let ode = prevalence_ode_many(&REFERENCE_INCIDENCE, &m, &m, &ic, &ages, &opts).unwrap();

    for k in 0..ages.len() {
        assert!(
            (closed[k] - quad[k]).abs() < 1e-8,
            "closed vs quadrature at {}: {} vs {}",
            ages[k],
            closed[k],
            quad[k]
        );
        assert!(
            (closed[k] - ode[k]).abs() < 1e-8,
            "closed vs ode at {}: {} vs {}",
            ages[k],
            closed[k],
            ode[k]
        );
        assert!(
            (quad[k] - ode[k]).abs() < 1e-8,
            "quadrature vs ode at {}: {} vs {}",
            ages[k],
            quad[k],
            ode[k]
        );
    }
}

#[test]
fn halving_the_step_moves_results_less_than_1e9() {
    let ic = InitialCondition::new(20.0, 0.0).unwrap();
    let m = general_mortality();
    let ages = test_ages();

    let base = SolverOptions::default();
    let halved = SolverOptions {
        step: base.step / 2.0,
        ..base
    };
    let quad_base =
        prevalence_differential_many(&REFERENCE_INCIDENCE, &m, &m, &ic, &ages, &base).unwrap();
    let quad_halved =
        prevalence_differential_many(&REFERENCE_INCIDENCE, &m, &m, &ic, &ages, &halved).unwrap();
    let ode_base = prevalence_ode_many(&REFERENCE_INCIDENCE, &m, &m, &ic, &ages, &base).unwrap();
    let ode_halved =
        prevalence_ode_many(&REFERENCE_INCIDENCE, &m, &m, &ic, &ages, &halved).unwrap();
    for k in 0..ages.len() {
        assert!((quad_base[k] - quad_halved[k]).abs() < 1e-9);
        assert!((ode_base[k] - ode_halved[k]).abs() < 1e-9);
    }
}

#[test]
fn integral_g_agrees_with_a_trapezoid_refinement_oracle() {
    // Independent route: brute-force trapezoid on a very fine grid.
    let m = general_mortality();
    let m1 = PiecewiseConstantRate::new(
        (0..10).map(|k| 20.0 + 5.0 * k as f64).collect(),
        vec![
            0.006_257_3, 0.007_891_6, 0.010_336_7, 0.013_582_5, 0.017_268_2, 0.022_496_2,
            0.030_035_5, 0.041_178_2, 0.056_454_6,
        ],
    )
    .unwrap();
    let integrand = |a: f64| {
        use previnc_core::rates::Rate;
        m1.rate(a) - m.rate(a) + REFERENCE_INCIDENCE.rate_at(a)
    };
    let lo = 20.0;
    let hi = 62.5;
    let n = 2_000_000usize;
    let h = (hi - lo) / n as f64;
    let mut brute = 0.5 * (integrand(lo) + integrand(hi.next_down()));
    for k in 1..n {
        brute += integrand(lo + h * k as f64);
    }
    brute *= h;

    let g = integral_g(
        &REFERENCE_INCIDENCE,
        &m1,
        &m,
        lo,
        hi,
        &SolverOptions::default(),
    )
    .unwrap();
    // trapezoid at h = 2e-5 with piecewise-constant jumps is itself
    // only ~1e-7 accurate; this guards against gross errors while the
    // step-halving check inside integral_g guards the fine scale
    assert!(
        (g - brute).abs() < 1e-6,
        "integral_g {} vs brute force {}",
        g,
        brute
    );
}
