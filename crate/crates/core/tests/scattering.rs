use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use radtherm_core::grids::{gauss_legendre, legendre};
use radtherm_core::scattering::{PhaseFunction, ScatteringOperator, DEFAULT_L_MAX};
use radtherm_core::{AngularQuadrature, Error};
use std::f64::consts::PI;

fn slab(kernel: PhaseFunction<f64>, order: usize) -> ScatteringOperator<f64> {
    let quad = AngularQuadrature::slab(order).unwrap();
    ScatteringOperator::new(&kernel, &quad, DEFAULT_L_MAX).unwrap()
}

fn sphere(kernel: PhaseFunction<f64>, order: usize) -> ScatteringOperator<f64> {
    let quad = AngularQuadrature::full_sphere(order).unwrap();
    ScatteringOperator::new(&kernel, &quad, DEFAULT_L_MAX).unwrap()
}

fn hg(g: f64) -> PhaseFunction<f64> {
    PhaseFunction::henyey_greenstein(g).unwrap()
}

fn preset_kernels() -> Vec<PhaseFunction<f64>> {
    let mut k = vec![PhaseFunction::Isotropic];
    for g in [0.1, 0.3, 0.5, 0.7, 0.9] {
        k.push(hg(g));
    }
    k.push(PhaseFunction::cutoff_forward(0.5).unwrap());
    k
}

/// Azimuthally averaged kernel by brute-force quadrature of the phase function.
fn azimuthal_average(p: &PhaseFunction<f64>, mu: f64, mup: f64) -> f64 {
    let n = 4000;
    let (s, sp) = ((1.0 - mu * mu).sqrt(), (1.0 - mup * mup).sqrt());
    let mut acc = 0.0;
    for k in 0..n {
        let phi = 2.0 * PI * (k as f64 + 0.5) / n as f64;
        acc += p.eval(mu * mup + s * sp * phi.cos());
    }
    acc * 2.0 * PI / n as f64
}

#[test]
fn hg_first_moment_matches_brute_force_quadrature() {
    let op = slab(hg(0.5), 16);
    let mu = op.quadrature().mus();
    let out = op.apply(&mu).unwrap();
    let (x, w) = gauss_legendre::<f64>(200);
    let kernel = hg(0.5);
    for (i, &m) in mu.iter().enumerate().step_by(3) {
        let oracle: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xp, &wp)| wp * azimuthal_average(&kernel, m, xp) * xp)
            .sum();
        assert_abs_diff_eq!(oracle, 0.5 * m, epsilon = 1e-6);
        assert_abs_diff_eq!(out[i], 0.5 * m, epsilon = 1e-8);
    }
}

#[test]
fn spectral_suite_at_order_16() {
    for kernel in preset_kernels() {
        let op = slab(kernel.clone(), 16);
        let ones = vec![1.0; op.len()];
        for v in op.apply(&ones).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        }
        let sd = op.spectral_diagnostics();
        assert_abs_diff_eq!(sd.leading, 1.0, epsilon = 1e-10);
        assert!(sd.flatness < 1e-8, "{kernel:?}: flatness {}", sd.flatness);
        assert!(sd.gap > 0.0, "{kernel:?}: gap {}", sd.gap);
        if let PhaseFunction::HenyeyGreenstein { g } = kernel {
            assert_abs_diff_eq!(sd.second, g, epsilon = 1e-6);
        }
    }
}

#[test]
fn full_sphere_spectral_structure() {
    for kernel in [PhaseFunction::Isotropic, hg(0.5), PhaseFunction::cutoff_forward(0.5).unwrap()] {
        let op = sphere(kernel, 8);
        let sd = op.spectral_diagnostics();
        assert_abs_diff_eq!(sd.leading, 1.0, epsilon = 1e-10);
        assert!(sd.flatness < 1e-8);
        assert!(sd.gap > 0.0);
        assert!(op.diagnostics().row_defect_after < 1e-12);
    }
}

#[test]
fn isotropic_is_the_mean_projector() {
    let op = sphere(PhaseFunction::Isotropic, 6);
    let quad = op.quadrature();
    let field: Vec<f64> = (0..op.len()).map(|i| (i as f64 * 0.37).sin() + 2.0).collect();
    let mean = quad.mean(&field);
    for v in op.apply(&field).unwrap() {
        assert_abs_diff_eq!(v, mean, epsilon = 1e-12);
    }
    let z: Vec<f64> = quad.directions().iter().map(|d| d[2]).collect();
    for v in op.apply(&z).unwrap() {
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }
    let sd = op.spectral_diagnostics();
    assert_abs_diff_eq!(sd.gap, 1.0, epsilon = 1e-10);
    assert!(sd.eigenvalues[1..].iter().all(|e| e.abs() < 1e-10));
}

#[test]
fn hg_second_legendre_mode() {
    let op = slab(hg(0.3), 16);
    let p2: Vec<f64> = op.quadrature().mus().iter().map(|&m| legendre(2, m)).collect();
    for (o, p) in op.apply(&p2).unwrap().iter().zip(&p2) {
        assert_abs_diff_eq!(*o, 0.09 * p, epsilon = 1e-8);
    }
}

#[test]
fn apply_rejects_wrong_length() {
    let op = slab(PhaseFunction::Isotropic, 4);
    assert_eq!(
        op.apply(&[1.0; 3]),
        Err(Error::Shape {
            expected: 4,
            got: 3
        })
    );
}

#[test]
fn unnormalized_tabulated_kernel_is_rejected() {
    let raw = PhaseFunction::tabulated_raw(vec![-1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
    let quad = AngularQuadrature::slab(8).unwrap();
    assert!(matches!(
        ScatteringOperator::new(&raw, &quad, 8),
        Err(Error::KernelNormalization { .. })
    ));
    // Normalized copy of the same table is the isotropic kernel.
    let t = PhaseFunction::tabulated(vec![-1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
    assert_abs_diff_eq!(t.eval(0.3), 1.0 / (4.0 * PI), epsilon = 1e-15);
    let op = ScatteringOperator::new(&t, &quad, 8).unwrap();
    let mu = quad.mus();
    for v in op.apply(&mu).unwrap() {
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn deflection_identities() {
    let iso = sphere(PhaseFunction::Isotropic, 6);
    let x: Vec<f64> = iso.quadrature().directions().iter().map(|d| d[0]).collect();
    for (a, b) in iso.solve_deflection(&x).unwrap().iter().zip(&x) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    for g in [0.1, 0.5, 0.9] {
        let op = slab(hg(g), 16);
        let mu = op.quadrature().mus();
        let phi = op.solve_deflection(&mu).unwrap();
        // Dense oracle: bordered system [Id − M, 1; wᵀ, 0] fixing the mean by a multiplier.
        let n = op.len();
        let w = op.quadrature().weights();
        let a = nalgebra::DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => (if i == j { 1.0 } else { 0.0 }) - op.matrix()[(i, j)],
            (true, false) => 1.0,
            (false, true) => w[j],
            (false, false) => 0.0,
        });
        let mut b = mu.clone();
        b.push(0.0);
        let dense = a.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(phi[i], mu[i] / (1.0 - g), epsilon = 1e-8);
            assert_abs_diff_eq!(phi[i], dense[i], epsilon = 1e-8);
        }
    }
    let op = slab(hg(0.5), 8);
    assert!(matches!(
        op.solve_deflection(&[1.0; 8]),
        Err(Error::RangeCondition { .. })
    ));
}

#[test]
fn diffusion_tensors() {
    let iso = sphere(PhaseFunction::Isotropic, 8).diffusion_tensor().unwrap();
    let expected = 4.0 * PI / 3.0;
    for a in 0..3 {
        for b in 0..3 {
            let e = if a == b { expected } else { 0.0 };
            assert_abs_diff_eq!(iso[(a, b)], e, epsilon = 1e-10);
        }
    }
    for g in [0.5, 0.9] {
        let d = slab(hg(g), 16).diffusion_tensor().unwrap();
        assert_abs_diff_eq!(d[(0, 0)], expected / (1.0 - g), epsilon = 1e-8);
        assert_abs_diff_eq!(d[(1, 1)], expected / (1.0 - g), epsilon = 1e-8);
    }
    let k1 = PhaseFunction::cutoff_forward(0.5).unwrap().moments(1)[1];
    assert_abs_diff_eq!(k1, 0.75, epsilon = 1e-15);
    let d = slab(PhaseFunction::cutoff_forward(0.5).unwrap(), 16)
        .diffusion_tensor()
        .unwrap();
    assert_abs_diff_eq!(d[(0, 0)], expected / (1.0 - k1), epsilon = 1e-8);
}

#[test]
fn full_sphere_tensor_is_symmetric_and_consistent_with_slab() {
    let op = sphere(hg(0.3), 12);
    let d = op.diffusion_tensor().unwrap();
    for a in 0..3 {
        for b in 0..3 {
            assert_abs_diff_eq!(d[(a, b)], d[(b, a)], epsilon = 1e-10);
        }
    }
    assert!(d.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    let slab_xx = slab(hg(0.3), 12).diffusion_tensor().unwrap()[(0, 0)];
    assert!((d[(0, 0)] - slab_xx).abs() < 1e-3 * slab_xx, "{} vs {slab_xx}", d[(0, 0)]);
}

#[test]
fn slab_and_full_sphere_agree_on_band_limited_fields() {
    let g = 0.3;
    let s = slab(hg(g), 16);
    let f = sphere(hg(g), 16);
    for l in 0..4 {
        let fs: Vec<f64> = f.quadrature().directions().iter().map(|d| legendre(l, d[0])).collect();
        let out = f.apply(&fs).unwrap();
        for (i, d) in f.quadrature().directions().iter().enumerate() {
            let exact = g.powi(l as i32) * legendre(l, d[0]);
            assert!((out[i] - exact).abs() < 1e-6, "l={l}: {} vs {exact}", out[i]);
        }
        let ss: Vec<f64> = s.quadrature().mus().iter().map(|&m| legendre(l, m)).collect();
        for (o, v) in s.apply(&ss).unwrap().iter().zip(&ss) {
            assert_abs_diff_eq!(*o, g.powi(l as i32) * v, epsilon = 1e-8);
        }
    }
}

#[test]
fn positivity_chains() {
    let iso = slab(PhaseFunction::Isotropic, 8);
    assert_eq!(iso.positivity_chain(0, 7).unwrap(), vec![0, 7]);
    let cut = slab(PhaseFunction::cutoff_forward(0.5).unwrap(), 16);
    let chain = cut.positivity_chain(0, 15).unwrap();
    assert!(chain.len() >= 3, "{chain:?}");
    let quad = AngularQuadrature::full_sphere(8).unwrap();
    let op = ScatteringOperator::new(&PhaseFunction::cutoff_forward(0.5).unwrap(), &quad, 8).unwrap();
    for i in (0..op.len()).step_by(7) {
        for j in (0..op.len()).step_by(5) {
            let c = op.positivity_chain(i, j).unwrap();
            assert_eq!((c[0], *c.last().unwrap()), (i, j));
            for w in c.windows(2) {
                let (a, b) = (&quad.directions()[w[0]], &quad.directions()[w[1]]);
                assert!(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] > 0.5);
            }
        }
    }
}

#[test]
fn combined_operator() {
    let op = slab(hg(0.6), 12);
    let n = op.len();
    let theta = 0.9;
    let a = op.combined(theta).unwrap();
    let b = 2.5;
    for v in a.solve(&vec![(1.0 - theta) * b; n]).unwrap() {
        assert_abs_diff_eq!(v, b, epsilon = 1e-10);
    }
    let src: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
    assert_eq!(op.combined(0.0).unwrap().solve(&src).unwrap(), src);
    let phi = a.solve(&src).unwrap();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - theta * op.matrix()[(i, j)]
    });
    let dense = m.lu().solve(&nalgebra::DVector::from_column_slice(&src)).unwrap();
    for i in 0..n {
        assert_abs_diff_eq!(phi[i], dense[i], epsilon = 1e-10);
    }
    assert!(matches!(op.combined(1.0), Err(Error::Contraction { .. })));
}

#[test]
fn non_rotation_invariant_fixture_has_a_non_flat_eigenvector() {
    let quad = AngularQuadrature::full_sphere(6).unwrap();
    // K(n, n′) = k(n) with ∫k = 1: H maps everything onto multiples of k.
    let k = |n: &[f64; 3]| (1.0 + 0.8 * n[0]) / (4.0 * PI);
    let op = ScatteringOperator::from_kernel_fn(&quad, |n, _| k(n));
    let sd = op.spectral_diagnostics();
    assert_abs_diff_eq!(sd.leading, 1.0, epsilon = 1e-10);
    assert!(sd.flatness > 0.5, "flatness {}", sd.flatness);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_invariants(g in -0.9f64..0.9, order in 4usize..24, seed in 0u64..1000) {
        let op = slab(hg(g), order);
        let quad = op.quadrature().clone();
        let n = op.len();
        let f: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 997) as f64 / 997.0).collect();
        let h: Vec<f64> = (0..n).map(|i| ((i as u64 * 40503 + 7 * seed) % 991) as f64 / 991.0 - 0.5).collect();
        let hf = op.apply(&f).unwrap();
        let hh = op.apply(&h).unwrap();
        for v in op.apply(&vec![1.0; n]).unwrap() {
            prop_assert!((v - 1.0).abs() < 1e-10);
        }
        // ⟨Hf, h⟩_w = ⟨f, Hh⟩_w
        let w = quad.weights();
        let lhs: f64 = (0..n).map(|i| w[i] * hf[i] * h[i]).sum();
        let rhs: f64 = (0..n).map(|i| w[i] * f[i] * hh[i]).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
        prop_assert!((quad.integrate(&hf) - quad.integrate(&f)).abs() < 1e-10);
        // Deflection round trip on the mean-zero part of h.
        let mean = quad.mean(&h);
        let h0: Vec<f64> = h.iter().map(|v| v - mean).collect();
        let phi = op.solve_deflection(&h0).unwrap();
        let back = op.apply(&phi).unwrap();
        for i in 0..n {
            prop_assert!((phi[i] - back[i] - h0[i]).abs() < 1e-9);
        }
        prop_assert!(quad.integrate(&phi).abs() < 1e-10);
    }

    #[test]
    fn positivity_is_preserved_for_moderate_asymmetry(g in 0.0f64..0.6, order in 4usize..17) {
        let op = slab(hg(g), order);
        prop_assert!(op.diagnostics().min_entry >= -1e-12, "min entry {}", op.diagnostics().min_entry);
    }

    #[test]
    fn full_sphere_entries_are_nonnegative(g in -0.9f64..0.9, order in 2usize..7) {
        let op = sphere(hg(g), order);
        prop_assert!(op.diagnostics().min_entry >= 0.0);
        let n = op.len();
        let f: Vec<f64> = (0..n).map(|i| (i % 5) as f64).collect();
        prop_assert!(op.apply(&f).unwrap().iter().all(|&v| v >= -1e-12));
    }
}
