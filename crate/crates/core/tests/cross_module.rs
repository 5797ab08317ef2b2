use eqq::detgreen::{det_ratio_exact, discrete_fluctuation_check};
use eqq::kicks::{eqq_kernel, KickIntegration};
use eqq::model::{free_kernel, harmonic_kernel, Params, Potential, TimeInterval};
use eqq::perturbation::{born_k0, born_k1, BornOptions};
use eqq::sliced::{sliced_kernel, Foliation};

#[test]
fn quartic_slicing_agrees_with_first_order_series() {
    let p = Params::unit(1);
    let iv = TimeInterval::span(0.1).unwrap();
    let pot = Potential::polynomial([0.0, 0.0, 0.0, 0.0, 0.25]);
    let (x_i, x_f) = ([0.2], [0.5]);
    let k4 = sliced_kernel(&p, &pot, &Foliation::new(4, iv).unwrap(), &x_i, &x_f)
        .unwrap()
        .value;
    let k8 = sliced_kernel(&p, &pot, &Foliation::new(8, iv).unwrap(), &x_i, &x_f)
        .unwrap()
        .value;
    assert!(k4.rel_error(&k8) < 1e-3);
    let k0 = born_k0(&p, &x_i, &x_f, &iv).unwrap().value;
    let k1 = born_k1(&p, &pot, &x_i, &x_f, &iv, &BornOptions::default())
        .unwrap()
        .value;
    // grid quadrature bias (~4e-5) dominates the second-order remainder (~1e-6) here
    assert!((k8.amp - k0 - k1).norm() < 1e-4 * k0.norm());
    // the first-order correction itself is resolved
    assert!((k8.amp - k0).norm() > 10.0 * (k8.amp - k0 - k1).norm());
}

#[test]
fn kick_kernel_and_sliced_free_kernel_coincide() {
    let p = Params::new(0.8, 1.1, 3).unwrap();
    let iv = TimeInterval::new(0.5, 2.0).unwrap();
    let (x_i, x_f) = ([0.1, 0.3, -0.2], [0.9, -0.4, 0.6]);
    let exact = free_kernel(&p, &x_i, &x_f, &iv).unwrap();
    for level in 1..=4 {
        let e = eqq_kernel(&p, &x_i, &x_f, &iv, level, KickIntegration::Analytic).unwrap();
        let s = sliced_kernel(
            &p,
            &Potential::Free,
            &Foliation::new(1 << level, iv).unwrap(),
            &x_i,
            &x_f,
        )
        .unwrap()
        .value;
        assert!(e.rel_error(&exact) < 1e-12);
        assert!(s.rel_error(&exact) < 1e-12);
    }
}

#[test]
fn harmonic_prefactor_carries_determinant_ratio() {
    for d in 1..=3 {
        let p = Params::unit(d);
        let iv = TimeInterval::span(1.0).unwrap();
        let origin = vec![0.0; d];
        for omega in [0.5, 1.0, 2.5] {
            let h = harmonic_kernel(&p, omega, &origin, &origin, &iv).unwrap().amp.norm();
            let f = free_kernel(&p, &origin, &origin, &iv).unwrap().amp.norm();
            let ratio = det_ratio_exact(omega, d).unwrap().kernel_factor();
            assert!((h / f - ratio).abs() < 1e-12 * ratio);
        }
    }
}

#[test]
fn discrete_fluctuation_ratio_approaches_continuum() {
    let p = Params::unit(1);
    let c = discrete_fluctuation_check(&p, 1.0, 1.0, 400).unwrap();
    let exact = det_ratio_exact(1.0, 1).unwrap().value;
    assert!((c.det_ratio_discrete - exact).abs() < 1e-5);
    assert!((c.gaussian_ratio - exact.powf(-0.5)).abs() < 1e-5);
}
