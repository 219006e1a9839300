//! Independent checks of the simulated quantities against closed forms.

use num::BigRational;
use revsle_core::cft::{kac_weight_of, params_from_kappa_exact, KacLabel, Sector};
use revsle_core::driving::{sample_brownian, DrivingPath, TimeGrid};
use revsle_core::loewner::{evolve_backward, evolve_forward};
use revsle_core::observables::{
    bpz_generator, bpz_relative_residual, covariant_field, drift_residual, eval_one_point, null_vector_operator,
    one_point_exponents, BoundaryPoint, Correlator, ObservableSpec,
};
use revsle_core::virasoro::{is_singular, level_two_vector};
use revsle_core::Complex64;

/// `E[f(Z)]` for a standard normal `Z` by composite Simpson on `[-10, 10]`.
fn gaussian_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let n = 4000;
    let (lo, hi) = (-10.0f64, 10.0f64);
    let h = (hi - lo) / n as f64;
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = 0.0;
    for i in 0..=n {
        let z = lo + h * i as f64;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * f(z) * density(z);
    }
    sum * h / 3.0
}

/// One backward step of `(g′)^a (g − ξ)^b` averaged over the Gaussian
/// increment, against the Itô drift `(2a − 2b + κb(b−1)/2) M/X²`.
#[test]
fn one_step_expectation_matches_ito_drift() {
    let dt = 1e-6;
    let y = 1.0;
    for &kappa in &[2.0, 4.0, 6.0] {
        for &(a, b) in &[(-3.0, 3.0), (-3.0, 2.0), (0.5, 1.0), (1.0, 0.0)] {
            let grid = TimeGrid::new(dt, 1).unwrap();
            let mean = gaussian_expectation(|z| {
                let xi1 = (kappa * dt).sqrt() * z;
                let path = DrivingPath::explicit(grid, kappa, vec![0.0, xi1]).unwrap();
                let evo = evolve_backward(&path);
                eval_one_point(&evo, y, a, b, 1, 0.0).unwrap().value
            });
            let m0 = y.powf(b);
            let predicted = drift_residual(kappa, a, b) * m0 / (y * y);
            let observed = (mean - m0) / dt;
            assert!(
                (observed - predicted).abs() <= 1e-3 * (1.0 + predicted.abs()),
                "kappa {kappa} ({a}, {b}): {observed} vs {predicted}"
            );
        }
    }
}

#[test]
fn driving_ensemble_variance_is_kappa_t() {
    let kappa = 3.0;
    let horizon = 0.7;
    let grid = TimeGrid::new(horizon, 50).unwrap();
    let n = 4000;
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut half = 0.0;
    for seed in 0..n {
        let p = sample_brownian(grid, kappa, seed).unwrap();
        let end = *p.values().last().unwrap();
        s1 += end;
        s2 += end * end;
        half += p.value(25).powi(2);
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let tol = 5.0 * (2.0 / n as f64).sqrt();
    assert!(mean.abs() <= 5.0 * (kappa * horizon / n as f64).sqrt());
    assert!((var / (kappa * horizon) - 1.0).abs() <= tol, "{var}");
    assert!((half / n as f64 / (kappa * horizon / 2.0) - 1.0).abs() <= tol);
}

#[test]
fn generator_is_twice_the_null_vector_operator() {
    let correlators: Vec<(ObservableSpec, Box<Correlator>)> = vec![
        (
            ObservableSpec::generic(vec![BoundaryPoint { y: 1.3, weight: 0.4 }]).unwrap(),
            Box::new(|xi, ys| (ys[0] - xi).powf(1.7)),
        ),
        (
            ObservableSpec::generic(vec![
                BoundaryPoint { y: -0.8, weight: -0.3 },
                BoundaryPoint { y: 2.1, weight: 1.1 },
            ])
            .unwrap(),
            Box::new(|xi, ys| (xi - ys[0]).powf(0.6) * (ys[1] - xi).powf(-1.2) * (ys[1] - ys[0]).powf(0.3)),
        ),
        (
            ObservableSpec::generic(vec![BoundaryPoint { y: 0.9, weight: 0.0 }]).unwrap(),
            Box::new(|xi, ys| (2.0 * xi).sin() + ys[0] * ys[0]),
        ),
    ];
    for &kappa in &[2.0, 8.0 / 3.0, 4.0, 6.0] {
        for (spec, f) in &correlators {
            let generator = bpz_generator(spec, f.as_ref(), kappa, 0.1).unwrap();
            let null = null_vector_operator(spec, f.as_ref(), kappa / 4.0, 0.1).unwrap();
            assert!(
                (generator - 2.0 * null).abs() <= 1e-9 * (1.0 + generator.abs()),
                "{generator} vs {null}"
            );
        }
    }
}

/// Both roots of the exponent quadratic are annihilated by the generator.
#[test]
fn generator_agrees_with_oracle_on_a_sweep() {
    for i in 1..=20 {
        let kappa = 0.5 * i as f64;
        for &h in &[
            0.0,
            kac_weight_of(&(kappa / 4.0), 1, 2),
            kac_weight_of(&(kappa / 4.0), 1, 3),
            0.1,
        ] {
            let roots = one_point_exponents(kappa, h).real().unwrap();
            for b in roots {
                let spec = ObservableSpec::one_point(2.0, h, b).unwrap();
                let f = move |xi: f64, ys: &[f64]| (ys[0] - xi).powf(b);
                let residual = bpz_relative_residual(&spec, &f, kappa, 0.5).unwrap();
                assert!(residual <= 1e-4, "kappa {kappa} h {h} b {b}: {residual}");
                assert!((drift_residual(kappa, h, b)).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn covariance_composes_along_segments() {
    let path = sample_brownian(TimeGrid::new(1.0, 200).unwrap(), 6.0, 99).unwrap();
    for evo in [evolve_forward(&path), evolve_backward(&path)] {
        let z = Complex64::new(0.4, 1.5);
        for &h in &[1.0, 2.0, 0.0] {
            for split in [1, 73, 199] {
                let whole = covariant_field(&evo, z, h, 200).unwrap();
                let first = covariant_field(&evo.segment(0, split).unwrap(), z, h, split).unwrap();
                let second = covariant_field(&evo.segment(split, 200).unwrap(), first.image, h, 200 - split).unwrap();
                assert!((whole.image - second.image).norm() <= 1e-10);
                let product = first.factor * second.factor;
                assert!(
                    (whole.factor - product).norm() <= 1e-9 * whole.factor.norm(),
                    "h {h} split {split}"
                );
            }
        }
    }
}

#[test]
fn boundary_derivative_is_real_and_positive_under_backward_flow() {
    let path = sample_brownian(TimeGrid::new(0.05, 100).unwrap(), 4.0, 5).unwrap();
    let evo = evolve_backward(&path);
    let v = covariant_field(&evo, Complex64::new(1.0, 0.0), -3.0, 20).unwrap();
    assert_eq!(v.factor.im, 0.0);
    assert!(v.factor.re > 0.0);
}

#[test]
fn null_vectors_from_rational_parameters() {
    let kappa = BigRational::new(8.into(), 3.into());
    for sector in [Sector::Liouville, Sector::Matter] {
        let p = params_from_kappa_exact(&kappa, sector).unwrap();
        let h = p.kac_weight(KacLabel::DEGENERATE_12);
        assert!(is_singular(&level_two_vector(&p.b_squared, h.clone(), p.c.clone())));
        let other = BigRational::new(3.into(), 2.into()) * &p.b_squared;
        assert!(!is_singular(&level_two_vector(&other, h, p.c.clone())));
    }
}

#[test]
fn one_step_variance_over_a_large_ensemble() {
    let grid = TimeGrid::new(1.0, 1).unwrap();
    let n = 100_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for seed in 0..n {
        let end = sample_brownian(grid, 2.0, seed).unwrap().value(1);
        s1 += end;
        s2 += end * end;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let se = 2.0 * (2.0 / n as f64).sqrt();
    assert!((var - 2.0).abs() <= 3.0 * se, "{var}");
}

#[test]
fn mean_quadratic_variation_is_kappa_t() {
    let (m, n, kappa) = (200, 1000, 4.0);
    let grid = TimeGrid::new(1.0, n).unwrap();
    let mean = (0..m)
        .map(|seed| revsle_core::driving::quadratic_variation(&sample_brownian(grid, kappa, seed).unwrap()))
        .sum::<f64>()
        / (m as f64 * kappa);
    let tol = 5.0 / (m as f64 * n as f64).sqrt();
    assert!((mean - 1.0).abs() <= tol, "{mean}");
}

#[test]
fn kappa_two_trace_stays_above_the_axis() {
    let grid = TimeGrid::new(1.0, 400).unwrap();
    for seed in 0..10 {
        let evo = evolve_forward(&sample_brownian(grid, 2.0, seed).unwrap());
        let indices: Vec<usize> = (1..=400).collect();
        for tip in revsle_core::loewner::trace(&evo, &indices).unwrap() {
            assert!(tip.unwrap().im > 0.0);
        }
    }
}
