//! Randomized invariant checks. Alternating-maximization values are
//! certified lower bounds, so every inequality below is oriented to stay
//! true under underestimation on the finer side.

use proptest::prelude::*;

use ubound::kernel::{random_canonical_ensemble, random_ensemble};
use ubound::rng::derived_rng;
use ubound::tensor::{
    enumerate_partitions, multilinear_eval, partition_norm, MultiIndexArray,
    NormConfig, NormMethod, Partition,
};

fn norm(a: &MultiIndexArray, j: &Partition) -> f64 {
    partition_norm(a, j, NormMethod::Auto, &NormConfig::default())
        .expect("norm computes")
        .value
}

fn cube(values: Vec<f64>) -> MultiIndexArray {
    MultiIndexArray::new(vec![2, 2, 2], values).expect("valid cube")
}

fn value_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn norms_are_absolutely_homogeneous(
        values in value_vec(8),
        c in -3.0f64..3.0,
    ) {
        let a = cube(values.clone());
        let scaled = cube(values.iter().map(|v| c * v).collect());
        for j in enumerate_partitions(&[1, 2, 3]).expect("partitions") {
            let lhs = norm(&scaled, &j);
            let rhs = c.abs() * norm(&a, &j);
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            prop_assert!(
                (lhs - rhs).abs() <= 1e-12 * scale.max(1.0),
                "partition {j}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn coarsening_orders_the_norms(values in value_vec(8)) {
        let a = cube(values);
        let partitions = enumerate_partitions(&[1, 2, 3]).expect("partitions");
        for p in &partitions {
            for q in &partitions {
                if p.coarsens_to(q).expect("same ground") {
                    prop_assert!(
                        norm(&a, p) <= norm(&a, q) + 1e-10,
                        "{p} finer than {q}"
                    );
                }
            }
        }
    }

    #[test]
    fn frobenius_dominates_every_partition(values in value_vec(8)) {
        let a = cube(values);
        let frobenius = norm(&a, &Partition::one_block(&[1, 2, 3]).unwrap());
        for j in enumerate_partitions(&[1, 2, 3]).expect("partitions") {
            prop_assert!(norm(&a, &j) <= frobenius + 1e-10, "{j}");
        }
    }

    #[test]
    fn spectral_norm_is_transpose_invariant(values in value_vec(6)) {
        let a = MultiIndexArray::new(vec![2, 3], values.clone()).unwrap();
        let mut transposed = vec![0.0; 6];
        for r in 0..2 {
            for c in 0..3 {
                transposed[c * 2 + r] = values[r * 3 + c];
            }
        }
        let at = MultiIndexArray::new(vec![3, 2], transposed).unwrap();
        let j = Partition::singletons(&[1, 2]).unwrap();
        prop_assert!((norm(&a, &j) - norm(&at, &j)).abs() <= 1e-10);
    }

    #[test]
    fn evaluation_never_beats_the_reported_norm(
        values in value_vec(8),
        witness_seed in 0u64..1_000,
    ) {
        let a = cube(values);
        let j = Partition::singletons(&[1, 2, 3]).unwrap();
        let reported = norm(&a, &j);
        let mut rng = derived_rng(witness_seed, 0);
        let witnesses: Vec<Vec<f64>> = (0..3)
            .map(|_| ubound::rng::random_unit_vector(&mut rng, 2))
            .collect();
        let eval = multilinear_eval(&a, &j, &witnesses).expect("evaluates");
        prop_assert!(eval.abs() <= reported + 1e-9);
    }

    #[test]
    fn canonicalize_lands_on_canonical_kernels(seed in 0u64..500) {
        let k = random_ensemble(2, 2, &[2, 3], seed, false).expect("kernel");
        let canonical = k.canonicalize();
        prop_assert!(canonical.require_canonical(1e-10).is_ok());
    }

    #[test]
    fn canonicalize_is_idempotent(seed in 0u64..500) {
        let k = random_ensemble(2, 2, &[3, 2], seed, true).expect("kernel");
        let once = k.canonicalize();
        let twice = once.canonicalize();
        let dims = once.index_dims();
        let mut idx = vec![0usize; 2];
        let states: usize = dims.iter().product();
        for _ in 0..states {
            let shape: Vec<usize> =
                (0..2).map(|ax| once.space(ax, idx[ax]).len()).collect();
            let mut atom = vec![0usize; 2];
            let cells: usize = shape.iter().product();
            for _ in 0..cells {
                let a = once.value(&idx, &atom);
                let b = twice.value(&idx, &atom);
                prop_assert!((a - b).abs() <= 1e-12, "entry drifted: {a} vs {b}");
                // Odometer over atom assignments.
                for ax in (0..2).rev() {
                    atom[ax] += 1;
                    if atom[ax] < shape[ax] {
                        break;
                    }
                    atom[ax] = 0;
                }
            }
            for ax in (0..2).rev() {
                idx[ax] += 1;
                if idx[ax] < dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
    }

    #[test]
    fn random_canonical_families_pass_the_gate(seed in 0u64..500) {
        let k = random_canonical_ensemble(3, 1, &[2, 2, 2], seed, false)
            .expect("kernel");
        prop_assert!(k.require_canonical(1e-10).is_ok());
    }
}
