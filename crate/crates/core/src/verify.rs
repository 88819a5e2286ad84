//! Built-in invariant suites: a machine-readable battery of the library's own
//! correctness properties, runnable from the command line.

use serde::Serialize;

use crate::activations::{falsify_assumption2, Activation, SampleGrid};
use crate::constructions;
use crate::linalg::{self, Matrix};
use crate::network::{self, Dataset, LossKind, NetworkSpec, Params};
use crate::pathkit::{self, Contract, ParamPath, PathSegment};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

fn run_suite(
    results: &mut Vec<SuiteResult>,
    name: &str,
    body: impl FnOnce() -> Result<String, String>,
) {
    let (passed, detail) = match body() {
        Ok(detail) => (true, detail),
        Err(detail) => (false, detail),
    };
    results.push(SuiteResult {
        name: name.to_string(),
        passed,
        detail,
    });
}

fn leaky() -> Activation {
    Activation::leaky_relu(0.01).unwrap()
}

fn square_data(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
    let mut rng = linalg::rng_from(seed, 0x7E57);
    Dataset::new(
        linalg::random_normal_matrix(n, d, &mut rng),
        linalg::random_normal_matrix(n, m, &mut rng),
    )
    .unwrap()
}

/// Run every invariant suite at the given scale and seed.
pub fn run_all(seed: u64, instances: usize) -> VerifyReport {
    let mut results = Vec::new();

    run_suite(&mut results, "pinv_identities", || {
        let mut rng = linalg::rng_from(seed, 1);
        let mut worst = 0.0_f64;
        for _ in 0..instances {
            let a = linalg::random_normal_matrix(3, 6, &mut rng);
            let p = linalg::pseudo_inverse(&a, 1e-12).map_err(|e| e.to_string())?;
            worst = worst.max((&a * &p - Matrix::identity(3, 3)).norm() / a.norm().max(1.0));
            let b = linalg::random_normal_matrix(7, 4, &mut rng);
            let q = linalg::pseudo_inverse(&b, 1e-12).map_err(|e| e.to_string())?;
            worst = worst.max((&q * &b - Matrix::identity(4, 4)).norm() / b.norm().max(1.0));
        }
        if worst <= 1e-8 {
            Ok(format!("worst identity residual {worst:.3e}"))
        } else {
            Err(format!("identity residual {worst:.3e} exceeds 1e-8"))
        }
    });

    run_suite(&mut results, "rank_matches_minor_oracle", || {
        use rand::RngExt;
        let mut rng = linalg::rng_from(seed, 2);
        for i in 0..(instances * 10) {
            let m = rng.random_range(1usize..=4);
            let n = rng.random_range(1usize..=4);
            let a = if rng.random::<f64>() < 0.5 {
                Matrix::from_fn(m, n, |_, _| rng.random_range(-3i64..=3) as f64)
            } else {
                let k = rng.random_range(1usize..=m.min(n));
                Matrix::from_fn(m, k, |_, _| rng.random_range(-2i64..=2) as f64)
                    * Matrix::from_fn(k, n, |_, _| rng.random_range(-2i64..=2) as f64)
            };
            let got = linalg::numerical_rank(&a, 1e-9).map_err(|e| e.to_string())?.rank;
            let want = minor_rank(&a);
            if got != want {
                return Err(format!("case {i}: rank {got} but minors say {want}"));
            }
        }
        Ok(format!("{} integer matrices agreed", instances * 10))
    });

    run_suite(&mut results, "kernel_basis_annihilates", || {
        let mut rng = linalg::rng_from(seed, 3);
        let mut worst = 0.0_f64;
        for _ in 0..instances {
            let a = linalg::random_normal_matrix(3, 7, &mut rng);
            let k = linalg::kernel_basis(&a, 1e-10).map_err(|e| e.to_string())?;
            if k.ncols() != 4 {
                return Err(format!("kernel width {} instead of 4", k.ncols()));
            }
            worst = worst.max((&a * &k).norm());
        }
        if worst <= 1e-9 {
            Ok(format!("worst product norm {worst:.3e}"))
        } else {
            Err(format!("product norm {worst:.3e}"))
        }
    });

    run_suite(&mut results, "column_basis_reconstruction", || {
        let mut rng = linalg::rng_from(seed, 4);
        let mut worst = 0.0_f64;
        for _ in 0..instances {
            let a = linalg::random_normal_matrix(5, 3, &mut rng)
                * linalg::random_normal_matrix(3, 8, &mut rng);
            let basis = linalg::independent_column_basis(&a, 1e-9).map_err(|e| e.to_string())?;
            if basis.len() != 3 {
                return Err(format!("basis size {} instead of 3", basis.len()));
            }
            let e = linalg::coefficient_matrix(&a, &basis, 1e-9).map_err(|e| e.to_string())?;
            let comp: Vec<usize> = (0..8).filter(|j| !basis.contains(j)).collect();
            let resid =
                (a.select_columns(basis.iter()) * e - a.select_columns(comp.iter())).norm();
            worst = worst.max(resid / a.norm());
        }
        if worst <= 1e-9 {
            Ok(format!("worst relative residual {worst:.3e}"))
        } else {
            Err(format!("residual {worst:.3e}"))
        }
    });

    run_suite(&mut results, "full_rank_path_certified", || {
        let mut rng = linalg::rng_from(seed, 5);
        for i in 0..instances.min(8) {
            let a = linalg::random_normal_matrix(3, 5, &mut rng);
            let b = linalg::random_normal_matrix(3, 5, &mut rng);
            let p = linalg::full_rank_matrix_path(&a, &b, 1e-8, seed ^ (i as u64), 8)
                .map_err(|e| e.to_string())?;
            if p.certified_floor <= 1e-8 {
                return Err(format!("floor {:.3e}", p.certified_floor));
            }
        }
        Ok("all detours certified".into())
    });

    run_suite(&mut results, "activation_inverse_roundtrip", || {
        let act = leaky();
        let mut rng = linalg::rng_from(seed, 6);
        let y = linalg::random_normal_matrix(50, 20, &mut rng);
        let x = act.invert(&y).map_err(|e| e.to_string())?;
        let worst = (act.apply(&x) - &y)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if worst <= 1e-12 {
            Ok(format!("worst roundtrip error {worst:.3e}"))
        } else {
            Err(format!("roundtrip error {worst:.3e}"))
        }
    });

    run_suite(&mut results, "falsifier_matches_flags", || {
        for act in [leaky(), Activation::Relu, Activation::elu(1.0).unwrap(), Activation::Linear] {
            let report = falsify_assumption2(&act, 2, SampleGrid::default(), 1e-6, seed)
                .map_err(|e| e.to_string())?;
            if report.found == act.satisfies_a2() {
                return Err(format!(
                    "{}: falsifier found={} contradicts flag satisfies_a2={}",
                    act.kind_name(),
                    report.found,
                    act.satisfies_a2()
                ));
            }
        }
        Ok("all four built-ins match".into())
    });

    run_suite(&mut results, "loss_convexity_witness", || {
        let mut rng = linalg::rng_from(seed, 7);
        for _ in 0..instances {
            let f = linalg::random_normal_matrix(4, 3, &mut rng);
            let g = linalg::random_normal_matrix(4, 3, &mut rng);
            let data = square_data(4, 2, 3, seed ^ 0x11);
            let mid = (&f + &g) * 0.5;
            let phi_mid =
                network::loss_of_output(LossKind::Square, &mid, &data).map_err(|e| e.to_string())?;
            let phi_f =
                network::loss_of_output(LossKind::Square, &f, &data).map_err(|e| e.to_string())?;
            let phi_g =
                network::loss_of_output(LossKind::Square, &g, &data).map_err(|e| e.to_string())?;
            if phi_mid > 0.5 * (phi_f + phi_g) + 1e-9 {
                return Err("midpoint above the chord".into());
            }
        }
        Ok("convexity held on all pairs".into())
    });

    run_suite(&mut results, "forward_matches_reference", || {
        let spec = NetworkSpec::new(vec![3, 5, 2], leaky(), LossKind::Square).unwrap();
        let data = square_data(4, 3, 2, seed ^ 0x22);
        let mut worst = 0.0_f64;
        for i in 0..instances {
            let params = Params::random_init(&spec, seed ^ (0x9000 + i as u64));
            let fast = network::forward_to_layer(&spec, &params, &data, 2)
                .map_err(|e| e.to_string())?;
            let slow = straight_line_forward(&spec, &params, data.x());
            worst = worst.max((fast - slow).norm());
        }
        if worst <= 1e-12 {
            Ok(format!("worst deviation {worst:.3e}"))
        } else {
            Err(format!("deviation {worst:.3e}"))
        }
    });

    run_suite(&mut results, "map_h_round_trip", || {
        let spec = NetworkSpec::new(vec![3, 6, 4, 2], leaky(), LossKind::Square).unwrap();
        let data = full_row_rank_data(3, 3, 2, seed ^ 0x33);
        let mut worst = 0.0_f64;
        for i in 0..instances {
            let params = well_conditioned_params(&spec, seed ^ (0xA000 + i as u64));
            let mut rng = linalg::rng_from(seed, 0xB000 + i as u64);
            let a = linalg::random_normal_matrix(3, 2, &mut rng);
            let (w1, b1) = constructions::map_h(&spec, &data, &params.layers[1..3], &a, 3)
                .map_err(|e| e.to_string())?;
            let mut layers = vec![network::Layer::new(w1, b1)];
            layers.extend(params.layers[1..].iter().cloned());
            let rebuilt = Params { layers };
            let f = network::forward_to_layer(&spec, &rebuilt, &data, 3)
                .map_err(|e| e.to_string())?;
            worst = worst.max((f - &a).norm() / (1.0 + a.norm()));
        }
        if worst <= 1e-7 {
            Ok(format!("worst relative residual {worst:.3e}"))
        } else {
            Err(format!("residual {worst:.3e}"))
        }
    });

    run_suite(&mut results, "rewire_product_invariance", || {
        let mut rng = linalg::rng_from(seed, 8);
        let mut worst = 0.0_f64;
        for _ in 0..instances {
            let f = linalg::random_normal_matrix(4, 2, &mut rng)
                * linalg::random_normal_matrix(2, 6, &mut rng);
            let w = linalg::random_normal_matrix(6, 3, &mut rng);
            let basis = linalg::independent_column_basis(&f, 1e-9).map_err(|e| e.to_string())?;
            let curve = constructions::rewire_redundant_columns(&f, &w, &basis, 1e-9)
                .map_err(|e| e.to_string())?;
            let base = &f * &w;
            for s in 0..32 {
                let lam = s as f64 / 31.0;
                worst = worst.max((&f * curve.at(lam) - &base).norm());
            }
        }
        if worst <= 1e-9 {
            Ok(format!("worst drift {worst:.3e}"))
        } else {
            Err(format!("drift {worst:.3e}"))
        }
    });

    run_suite(&mut results, "equalize_terminal_equality", || {
        let act = leaky();
        let mut rng = linalg::rng_from(seed, 9);
        for _ in 0..instances.min(8) {
            let x = linalg::random_normal_matrix(2, 3, &mut rng);
            let w = linalg::random_normal_matrix(3, 4, &mut rng);
            let v = linalg::random_normal_matrix(4, 2, &mut rng);
            let wp = linalg::random_normal_matrix(3, 4, &mut rng);
            let curve = constructions::equalize_layer(&x, &act, &w, &v, &wp, 1e-9)
                .map_err(|e| e.to_string())?;
            if curve.end().0 != wp {
                return Err("terminal weight differs from the target".into());
            }
            let z0 = act.apply(&(&x * &w)) * &v;
            for s in 0..64 {
                let lam = s as f64 / 63.0;
                let (wl, vl) = curve.eval(lam);
                let drift = (act.apply(&(&x * &wl)) * &vl - &z0).norm();
                if drift > 1e-8 {
                    return Err(format!("Z drift {drift:.3e}"));
                }
            }
        }
        Ok("terminal equality exact, product invariant".into())
    });

    run_suite(&mut results, "certify_rejects_corrupted_path", || {
        let spec = NetworkSpec::new(vec![2, 3, 2], leaky(), LossKind::Square).unwrap();
        let data = square_data(3, 2, 2, seed ^ 0x44);
        let a = Params::random_init(&spec, seed ^ 0x5000);
        let mut b = a.clone();
        b.layers[1].w[(0, 0)] += 2.0;
        let path = ParamPath::new(
            vec![PathSegment::linear(a, b, Contract::LossConstant)],
            Contract::LossConstant,
        )
        .map_err(|e| e.to_string())?;
        let cert =
            pathkit::certify(&path, &spec, &data, 32, 1e-6).map_err(|e| e.to_string())?;
        if cert.passed {
            Err("corrupted loss_constant segment was accepted".into())
        } else {
            Ok(format!(
                "rejected with drift {:.3e}",
                cert.max_constant_drift
            ))
        }
    });

    let passed = results.iter().all(|r| r.passed);
    VerifyReport {
        suites: results,
        passed,
    }
}

fn minor_rank(a: &Matrix) -> usize {
    fn det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        let mut acc = 0.0;
        for j in 0..n {
            let sub: Vec<Vec<f64>> = (1..n)
                .map(|i| {
                    (0..n)
                        .filter(|&c| c != j)
                        .map(|c| m[i][c])
                        .collect::<Vec<_>>()
                })
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
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
                let sub: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&i| cols.iter().map(|&j| a[(i, j)]).collect())
                    .collect();
                if det(&sub).abs() > 0.5 {
                    return k;
                }
            }
        }
    }
    0
}

#[allow(clippy::needless_range_loop)] // index loops keep the oracle primitive
fn straight_line_forward(spec: &NetworkSpec, params: &Params, x: &Matrix) -> Matrix {
    let n = x.nrows();
    let l_total = spec.num_layers();
    let mut cur: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect())
        .collect();
    for l in 1..=l_total {
        let layer = &params.layers[l - 1];
        let (rows, cols) = layer.w.shape();
        let mut next = vec![vec![0.0; cols]; n];
        for i in 0..n {
            for j in 0..cols {
                let mut acc = layer.b[(j, 0)];
                for p in 0..rows {
                    acc += cur[i][p] * layer.w[(p, j)];
                }
                next[i][j] = if l == l_total {
                    acc
                } else {
                    spec.activation.scalar(acc)
                };
            }
        }
        cur = next;
    }
    Matrix::from_fn(n, cur[0].len(), |i, j| cur[i][j])
}

fn full_row_rank_data(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
    let mut rng = linalg::rng_from(seed, 0xF00);
    loop {
        let x = linalg::random_normal_matrix(n, d, &mut rng);
        if linalg::numerical_rank(&x, 1e-9).unwrap().rank == n {
            let y = linalg::random_normal_matrix(n, m, &mut rng);
            return Dataset::new(x, y).unwrap();
        }
    }
}

fn well_conditioned_params(spec: &NetworkSpec, seed: u64) -> Params {
    let mut salt = 0;
    loop {
        let p = Params::random_init(spec, seed.wrapping_add(salt));
        let ok = (2..=spec.num_layers()).all(|l| {
            let w = &p.layers[l - 1].w;
            let r = linalg::numerical_rank(w, 1e-9).unwrap();
            r.rank == w.ncols().min(w.nrows())
                && r.min_singular_value > 1e-3 * r.max_singular_value.max(1.0)
        });
        if ok {
            return p;
        }
        salt += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_battery_passes() {
        let report = run_all(7, 6);
        for suite in &report.suites {
            assert!(suite.passed, "{}: {}", suite.name, suite.detail);
        }
        assert!(report.passed);
    }

    #[test]
    fn report_serializes_with_one_row_per_suite() {
        let report = run_all(3, 2);
        let json = serde_json::to_string(&report).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(
            parsed["suites"].as_array().unwrap().len(),
            report.suites.len()
        );
    }
}
