//! Cross-module property tests: pseudo-inverse identities, rank-oracle
//! agreement, path evaluation and certification invariants, and byte-level
//! determinism of manifests.

use proptest::prelude::*;

use parampath::activations::Activation;
use parampath::linalg::{self, Matrix};
use parampath::network::{self, Dataset, LossKind, NetworkSpec, Params};
use parampath::pathkit::{self, Contract, ParamPath, PathSegment};

fn exact_integer_rank(a: &Matrix) -> usize {
    // Gaussian elimination over rationals is overkill for entries this small;
    // the integer minor determinant is exact well past these magnitudes.
    fn det(m: &[Vec<i64>]) -> i64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        let mut acc = 0;
        for j in 0..n {
            let sub: Vec<Vec<i64>> = (1..n)
                .map(|i| {
                    (0..n)
                        .filter(|&c| c != j)
                        .map(|c| m[i][c])
                        .collect::<Vec<_>>()
                })
                .collect();
            let sign = if j % 2 == 0 { 1 } else { -1 };
            acc += sign * m[0][j] * det(&sub);
        }
        acc
    }
    fn combos(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        if k > n {
            return vec![];
        }
        let mut out = Vec::new();
        for first in 0..=(n - k) {
            for mut rest in combos(n - first - 1, k - 1) {
                for r in rest.iter_mut() {
                    *r += first + 1;
                }
                let mut c = vec![first];
                c.append(&mut rest);
                out.push(c);
            }
        }
        out
    }
    let (m, n) = a.shape();
    for k in (1..=m.min(n)).rev() {
        for rows in combos(m, k) {
            for cols in combos(n, k) {
                let sub: Vec<Vec<i64>> = rows
                    .iter()
                    .map(|&i| cols.iter().map(|&j| a[(i, j)] as i64).collect())
                    .collect();
                if det(&sub) != 0 {
                    return k;
                }
            }
        }
    }
    0
}

proptest! {
    #[test]
    fn numerical_rank_agrees_with_minor_oracle(
        rows in 1usize..=4,
        cols in 1usize..=4,
        entries in proptest::collection::vec(-3i64..=3, 16),
    ) {
        let a = Matrix::from_fn(rows, cols, |i, j| entries[i * 4 + j] as f64);
        let got = linalg::numerical_rank(&a, 1e-9).unwrap().rank;
        prop_assert_eq!(got, exact_integer_rank(&a));
    }

    #[test]
    fn pinv_identities_on_full_rank_rectangles(seed in 0u64..5000) {
        let mut rng = linalg::rng_from(seed, 0x91);
        let wide = linalg::random_normal_matrix(3, 6, &mut rng);
        let tall = linalg::random_normal_matrix(6, 3, &mut rng);
        // Gaussian rectangles are full rank essentially always; skip the
        // exceptional draw instead of asserting on it.
        if linalg::numerical_rank(&wide, 1e-9).unwrap().rank == 3 {
            let p = linalg::pseudo_inverse(&wide, 1e-12).unwrap();
            let err = (&wide * &p - Matrix::identity(3, 3)).norm();
            prop_assert!(err <= 1e-8 * wide.norm().max(1.0));
        }
        if linalg::numerical_rank(&tall, 1e-9).unwrap().rank == 3 {
            let p = linalg::pseudo_inverse(&tall, 1e-12).unwrap();
            let err = (&p * &tall - Matrix::identity(3, 3)).norm();
            prop_assert!(err <= 1e-8 * tall.norm().max(1.0));
        }
    }

    #[test]
    fn basis_and_coefficients_reconstruct_low_rank(seed in 0u64..2000) {
        let mut rng = linalg::rng_from(seed, 0x92);
        let a = linalg::random_normal_matrix(5, 2, &mut rng)
            * linalg::random_normal_matrix(2, 7, &mut rng);
        let basis = linalg::independent_column_basis(&a, 1e-9).unwrap();
        prop_assert_eq!(basis.len(), 2);
        let e = linalg::coefficient_matrix(&a, &basis, 1e-9).unwrap();
        let comp: Vec<usize> = (0..7).filter(|j| !basis.contains(j)).collect();
        let resid = (a.select_columns(basis.iter()) * e
            - a.select_columns(comp.iter()))
        .norm();
        prop_assert!(resid <= 1e-9 * a.norm().max(1.0));
    }

    #[test]
    fn activation_inverse_roundtrip(values in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
        let acts = [Activation::leaky_relu(0.01).unwrap(), Activation::Linear];
        for act in acts {
            let y = Matrix::from_fn(values.len(), 1, |i, _| values[i]);
            let x = act.invert(&y).unwrap();
            let back = act.apply(&x);
            let worst = (&back - &y).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            prop_assert!(worst <= 1e-12 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn evaluate_endpoints_are_exact_for_linear_segments(seed in 0u64..2000) {
        let spec = NetworkSpec::new(
            vec![2, 4, 2],
            Activation::leaky_relu(0.01).unwrap(),
            LossKind::Square,
        )
        .unwrap();
        let a = Params::random_init(&spec, seed);
        let b = Params::random_init(&spec, seed.wrapping_add(1));
        let path = ParamPath::new(
            vec![PathSegment::linear(
                a.clone(),
                b.clone(),
                Contract::LossBounded { bound: 1e12 },
            )],
            Contract::LossBounded { bound: 1e12 },
        )
        .unwrap();
        prop_assert_eq!(path.evaluate(0.0).unwrap(), a);
        prop_assert_eq!(path.evaluate(1.0).unwrap(), b);
    }

    #[test]
    fn contract_merge_is_associative_on_samples(
        a in 0usize..3, b in 0usize..3, c in 0usize..3,
    ) {
        let pick = |i: usize| match i {
            0 => Contract::LossConstant,
            1 => Contract::LossNonincreasing,
            _ => Contract::LossBounded { bound: i as f64 },
        };
        let (x, y, z) = (pick(a), pick(b), pick(c));
        prop_assert_eq!(x.merge(y).merge(z), x.merge(y.merge(z)));
    }
}

fn seeded_dataset(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
    let mut rng = linalg::rng_from(seed, 0xDA);
    Dataset::new(
        linalg::random_normal_matrix(n, d, &mut rng),
        linalg::random_normal_matrix(n, m, &mut rng),
    )
    .unwrap()
}

#[test]
fn certify_is_deterministic_for_fixed_inputs() {
    let spec = NetworkSpec::new(
        vec![3, 6, 4, 2],
        Activation::leaky_relu(0.01).unwrap(),
        LossKind::Square,
    )
    .unwrap();
    let data = seeded_dataset(3, 3, 2, 11);
    let theta = Params::random_init(&spec, 21);
    let theta_prime = Params::random_init(&spec, 22);
    let path = parampath::constructions::connect_lin_data(&spec, &data, &theta, &theta_prime, 1e-2, 31)
        .unwrap();
    let c1 = pathkit::certify(&path, &spec, &data, 32, 1e-6).unwrap();
    let c2 = pathkit::certify(&path, &spec, &data, 32, 1e-6).unwrap();
    assert_eq!(
        serde_json::to_string(&c1).unwrap(),
        serde_json::to_string(&c2).unwrap()
    );
}

#[test]
fn manifest_bytes_are_deterministic_and_recertifiable() {
    let spec = NetworkSpec::new(
        vec![3, 6, 4, 2],
        Activation::leaky_relu(0.01).unwrap(),
        LossKind::Square,
    )
    .unwrap();
    let data = seeded_dataset(3, 3, 2, 13);
    let theta = Params::random_init(&spec, 41);
    let theta_prime = Params::random_init(&spec, 42);
    let build = || {
        parampath::constructions::connect_lin_data(&spec, &data, &theta, &theta_prime, 1e-2, 51)
            .unwrap()
    };
    let bytes_1 = serde_json::to_vec_pretty(&build()).unwrap();
    let bytes_2 = serde_json::to_vec_pretty(&build()).unwrap();
    assert_eq!(bytes_1, bytes_2, "identical seeds must give identical manifests");

    let reloaded: ParamPath = serde_json::from_slice(&bytes_1).unwrap();
    let cert = pathkit::certify(&reloaded, &spec, &data, 32, 1e-6).unwrap();
    assert!(cert.passed, "reloaded manifest failed: drift {:.3e}", cert.max_constant_drift);
    assert_eq!(reloaded.end().unwrap().max_norm_diff(&theta_prime), 0.0);
}

#[test]
fn trace_of_constant_path_is_flat_and_counted() {
    let spec = NetworkSpec::new(
        vec![2, 4, 2],
        Activation::leaky_relu(0.01).unwrap(),
        LossKind::Square,
    )
    .unwrap();
    let data = seeded_dataset(2, 2, 2, 17);
    let params = Params::random_init(&spec, 61);
    let path = parampath::constructions::unbounded_ray_lin_data(&spec, &data, &params, 10.0, 3)
        .unwrap();
    let rows = pathkit::export_trace(&path, &spec, &data, 101).unwrap();
    assert_eq!(rows.len(), 101);
    let min = rows.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.loss).fold(f64::NEG_INFINITY, f64::max);
    assert!(max - min <= 1e-6 * (1.0 + max.abs()));
}

#[test]
fn forward_composed_with_loss_equals_loss_on_output() {
    let spec = NetworkSpec::new(
        vec![3, 5, 2],
        Activation::leaky_relu(0.01).unwrap(),
        LossKind::Square,
    )
    .unwrap();
    let data = seeded_dataset(4, 3, 2, 19);
    let params = Params::random_init(&spec, 71);
    let f_l = network::forward_to_layer(&spec, &params, &data, 2).unwrap();
    let via_output = network::loss_of_output(LossKind::Square, &f_l, &data).unwrap();
    let direct = network::loss(&spec, &params, &data).unwrap().value;
    assert_eq!(via_output, direct);
}
