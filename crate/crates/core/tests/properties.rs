use bellbound::bell::ch;
use bellbound::lb::{horodecki_values, seesaw, SeesawConfig};
use bellbound::nonstandard::{
    apply_filter, ncopy_pure_ch_value, ncopy_two_qubit_value, pure_ch_value, tensor_power, witness_value, FilterPair,
};
use bellbound::qcore::{ginibre, kron, min_eigenvalue, random_density, CMatrix, DensityMatrix};
use bellbound::ub::{ub_enumerate_profiles, QcqpInstance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..5)
        .prop_filter("nonzero", |c| c.iter().any(|x| *x > 1e-3))
        .prop_map(|c| {
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter().map(|x| x / norm).collect()
        })
}

/// A random separable two-qubit state: a mixture of product states.
fn separable(seed: u64, terms: usize) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = CMatrix::zeros(4, 4);
    for _ in 0..terms {
        let a = random_density((2, 1), 2, &mut rng);
        let b = random_density((2, 1), 2, &mut rng);
        acc += kron(a.matrix(), b.matrix());
    }
    DensityMatrix::from_unnormalized(acc, (2, 2)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn pure_ch_ignores_coefficient_order(c in coeffs(), seed in any::<u64>()) {
        let mut shuffled = c.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let d = c.len().max(2);
        let a = pure_ch_value(&c, d).unwrap();
        let b = pure_ch_value(&shuffled, d).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pure_ch_positive_iff_entangled(c in coeffs()) {
        let d = c.len().max(2);
        let v = pure_ch_value(&c, d).unwrap();
        let rank = c.iter().filter(|x| **x > 1e-9).count();
        if rank > 1 {
            prop_assert!(v > 0.0);
        } else {
            prop_assert!(v.abs() < 1e-12);
        }
        prop_assert!(v <= 0.5 + 1e-12);
    }

    #[test]
    fn ncopy_values_do_not_decrease(phi in 0.05f64..std::f64::consts::FRAC_PI_4, c in coeffs()) {
        let mut prev = f64::NEG_INFINITY;
        for n in 1..=4 {
            let v = ncopy_two_qubit_value(phi, n).unwrap();
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
        if c.len() <= 3 {
            let one = ncopy_pure_ch_value(&c, 1).unwrap();
            let two = ncopy_pure_ch_value(&c, 2).unwrap();
            prop_assert!(two >= one - 1e-12);
        }
    }

    #[test]
    fn tensor_power_is_a_state(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density((2, 2), 2, &mut rng);
        let t = tensor_power(&rho, n).unwrap();
        prop_assert_eq!(t.split(), (1 << n, 1 << n));
        prop_assert!((t.matrix().trace().re - 1.0).abs() < 1e-10);
        prop_assert!(min_eigenvalue(t.matrix()) > -1e-10);
    }

    #[test]
    fn filtered_separable_states_stay_local(seed in any::<u64>(), terms in 1usize..5) {
        let rho = separable(seed, terms);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let f = FilterPair::new(ginibre(2, 2, &mut rng), ginibre(2, 2, &mut rng)).unwrap();
        let (filtered, p) = apply_filter(&rho, &[f]).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
        prop_assert!(!horodecki_values(&filtered).unwrap().violates);
    }

    #[test]
    fn witness_nonnegative_on_separable(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::FRAC_PI_4) {
        let rho = separable(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let w = witness_value(&rho, &ginibre(2, 2, &mut rng), &ginibre(2, 2, &mut rng), theta).unwrap();
        prop_assert!(w >= -1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn seesaw_below_dual_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density((2, 2), 2, &mut rng);
        let ineq = ch();
        let cfg = SeesawConfig { restarts: 3, rng_seed: seed, ..SeesawConfig::default() };
        let lb = seesaw(&rho, &ineq, &cfg).unwrap().value;
        let ub = ub_enumerate_profiles(&QcqpInstance::probability(&ineq, &rho).unwrap()).unwrap().value;
        prop_assert!(lb <= ub + 1e-6, "lb {} > ub {}", lb, ub);
        prop_assert!(lb >= ineq.classical_bound().unwrap() - 1e-9);
    }
}
