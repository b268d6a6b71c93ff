use damlab_core::dam::{trace_kernel, ApparatusConfig, DamRun, PointerSampler};
use damlab_core::estimation::LinkFunction;
use damlab_core::liouvillian::{gad_model, product_gad_model, steady_state_bundle, ParamDomain};
use damlab_core::operator::{
    lindblad_superoperator, mat_exp, qubit, spectrum, Operator, SuperOperator, C64,
    ZERO_EIGENVALUE_TOL,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_generator(seed: u64, d: usize, jumps: usize) -> SuperOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = Operator::random(d, &mut rng).hermitian_part();
    let list: Vec<(Operator, f64)> = (0..jumps)
        .map(|k| (Operator::random(d, &mut rng), 0.2 + 0.4 * k as f64))
        .collect();
    lindblad_superoperator(&h, &list).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn liouvillian_preserves_hermiticity_and_kills_trace(seed in any::<u64>(), d in 2usize..4, jumps in 1usize..4) {
        let l = random_generator(seed, d, jumps);
        prop_assert!(l.trace_defect() < 1e-12 * l.max_abs().max(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..100 {
            let x = Operator::random(d, &mut rng).hermitian_part();
            let y = l.apply(&x);
            prop_assert!(y.hermiticity_defect() < 1e-12 * l.max_abs().max(1.0));
            prop_assert!(y.trace().norm() < 1e-12 * l.max_abs().max(1.0));
        }
    }

    #[test]
    fn evolution_keeps_density_matrices(seed in any::<u64>(), d in 2usize..4, t in 0.0f64..50.0) {
        let l = random_generator(seed, d, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let rho = Operator::random_density(d, &mut rng);
        let out = mat_exp(&l, t).unwrap().apply(&rho);
        prop_assert!(out.is_density_matrix(1e-9), "{:?}", out);
    }

    #[test]
    fn spectrum_matches_propagator_trace(seed in any::<u64>(), d in 2usize..4, t in 0.05f64..3.0) {
        let l = random_generator(seed, d, 2);
        let report = spectrum(&l, ZERO_EIGENVALUE_TOL).unwrap();
        let from_spectrum: C64 = report.eigenvalues.iter().map(|z| (z * t).exp()).sum();
        let from_exp = mat_exp(&l, t).unwrap().matrix().trace();
        prop_assert!((from_spectrum - from_exp).norm() < 1e-8 * from_exp.norm().max(1.0));
        prop_assert!(report.gap > 0.0);
    }

    #[test]
    fn pseudoinverse_identities_on_product_model(a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let bundle = steady_state_bundle(&product_gad_model(2).unwrap(), &[a, b]).unwrap();
        let ls = &bundle.liouvillian * &bundle.pseudoinverse;
        prop_assert!(ls.max_abs_diff(&bundle.complement) < 1e-9);
        let expected = Operator::diag(&[a, 1.0 - a]).kron(&Operator::diag(&[b, 1.0 - b]));
        prop_assert!(bundle.rho.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn kernel_is_conjugate_symmetric(theta in 0.05f64..0.95, p in -30.0f64..30.0, q in -30.0f64..30.0, t in 20.0f64..2000.0, n in 1.0f64..20.0) {
        let run = DamRun::new(
            gad_model(),
            &[theta],
            &qubit::ground_projector() + &qubit::sigma_x().scale_real(0.3),
            t,
            n,
            ApparatusConfig::new(0.1).unwrap(),
        ).unwrap();
        let k = trace_kernel(&run, p, q).unwrap();
        let swapped = trace_kernel(&run, q, p).unwrap();
        prop_assert!((swapped - k.conj()).norm() < 1e-10);
        prop_assert!((trace_kernel(&run, p, p).unwrap() - 1.0).norm() < 1e-10);
        prop_assert!(k.norm() <= 1.0 + 1e-10);
    }

    #[test]
    fn link_round_trip(t in 0.001f64..0.999, slope in 0.2f64..3.0, offset in -1.0f64..1.0) {
        let thetas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let values: Vec<f64> = thetas.iter().map(|x| offset - slope * x).collect();
        let link = LinkFunction::from_table(thetas, values).unwrap();
        let back = link.inverse(&link.forward(&[t]).unwrap()).unwrap();
        prop_assert!((back[0] - t).abs() < 1e-8);
        let id = LinkFunction::identity(ParamDomain::unit_box(2));
        prop_assert_eq!(id.inverse(&id.forward(&[t, 1.0 - t]).unwrap()).unwrap(), vec![t, 1.0 - t]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sampler_quantile_is_monotone(theta in 0.2f64..0.8, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let run = DamRun::new(
            gad_model(),
            &[theta],
            qubit::ground_projector(),
            300.0,
            2.0,
            ApparatusConfig::new(0.1).unwrap(),
        ).unwrap();
        let dist = damlab_core::dam::pointer_distribution(&run, damlab_core::dam::KernelSource::Perturbative).unwrap();
        let s = PointerSampler::new(&dist);
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assert!(s.quantile(lo) <= s.quantile(hi));
        prop_assert!(dist.density.iter().all(|w| *w >= 0.0));
    }
}
