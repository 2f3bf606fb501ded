use proptest::prelude::*;
use sia_sim::channel::{alignment_operator, draw_channel, ExtensionConfig, GainModel};
use sia_sim::numerics::{orthonormal_basis, subspace_equal, subspace_residual};
use sia_sim::precoding::{construct_precoders, verify_alignment, Generator};
use sia_sim::receivers::PowerAllocation;
use sia_sim::strong_ia::{run_linear_fallback, SchemeOptions};
use sia_sim::{CMat, C64, Tolerance};

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| CMat::from_iterator(rows, cols, v.into_iter().map(|(re, im)| C64::new(re, im))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn column_scaling_keeps_span(m in complex_matrix(6, 3), scales in prop::collection::vec((0.1f64..10.0, 0.0..std::f64::consts::TAU), 3)) {
        let tol = Tolerance::default();
        let mut scaled = m.clone();
        for (j, (mag, phase)) in scales.iter().enumerate() {
            let f = C64::from_polar(*mag, *phase);
            for i in 0..6 {
                scaled[(i, j)] *= f;
            }
        }
        let a = orthonormal_basis(&m, &tol).unwrap();
        let b = orthonormal_basis(&scaled, &tol).unwrap();
        prop_assert!(subspace_equal(&a, &b, &tol).unwrap());
    }

    #[test]
    fn basis_of_basis_is_same_subspace(m in complex_matrix(5, 3)) {
        let tol = Tolerance::default();
        let a = orthonormal_basis(&m, &tol).unwrap();
        let b = orthonormal_basis(a.basis(), &tol).unwrap();
        prop_assert_eq!(a.dim(), b.dim());
        prop_assert!(subspace_residual(&a, &b).unwrap() < 1e-12);
        let gram = a.basis().adjoint() * a.basis();
        prop_assert!((gram - CMat::identity(a.dim(), a.dim())).norm() < 1e-12);
    }

    #[test]
    fn alignment_holds_for_any_generator(n in 1usize..=3, index in 0u64..1000, gen_seed in any::<u64>()) {
        let tol = Tolerance::default();
        let cfg = ExtensionConfig::new(n).unwrap();
        let ch = draw_channel(&cfg, &GainModel::UnboundedGaussian, 77, index).unwrap();
        let ones = construct_precoders(&ch, n, &Generator::Ones, &tol).unwrap();
        let random = construct_precoders(&ch, n, &Generator::Random { seed: gen_seed }, &tol).unwrap();
        let a = verify_alignment(&ch, &ones, &tol).unwrap();
        let b = verify_alignment(&ch, &random, &tol).unwrap();
        prop_assert!(a.holds());
        prop_assert_eq!(a.holds(), b.holds());
        prop_assert_eq!(a.droppable, b.droppable);
    }

    #[test]
    fn alignment_operator_commutes_with_channels(n in 1usize..=3, index in 0u64..1000) {
        let cfg = ExtensionConfig::new(n).unwrap();
        let ch = draw_channel(&cfg, &GainModel::UnboundedGaussian, 78, index).unwrap();
        let t = alignment_operator(&ch).unwrap().matrix();
        for rx in 1..=3 {
            for tx in 1..=3 {
                let h = ch.matrix(rx, tx);
                let scale = 1.0 + (&t * &h).norm();
                prop_assert!((&t * &h - &h * &t).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn fallback_rates_are_finite_and_nonnegative(snr_db in 0.0f64..50.0, index in 0u64..500) {
        let cfg = ExtensionConfig::new(2).unwrap();
        let ch = draw_channel(&cfg, &GainModel::UnboundedGaussian, 79, index).unwrap();
        let pa = PowerAllocation::uniform(10f64.powf(snr_db / 10.0), 2).unwrap();
        let r = run_linear_fallback(&[ch], &pa, &SchemeOptions::default()).unwrap();
        prop_assert!(r.rates.iter().all(|&x| x >= 0.0 && x.is_finite()));
        prop_assert_eq!(r.dof_streams, [2, 1, 2]);
        prop_assert!((r.sum_rate - r.rates.iter().sum::<f64>()).abs() < 1e-12);
    }
}
