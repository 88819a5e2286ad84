//! The rewiring curve: move a weight matrix's dependence off redundant
//! feature columns while keeping the product F * W fixed, so the product at
//! the end ignores those feature columns entirely.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::pathkit::MatrixCurve;

/// The straight curve c(lambda) with c(0) = W, F c(lambda) = F W everywhere,
/// and F c(1) independent of the complement columns of F.
#[derive(Debug, Clone)]
pub struct RewireCurve {
    pub curve: MatrixCurve,
    pub basis: Vec<usize>,
    pub complement: Vec<usize>,
}

impl RewireCurve {
    pub fn at(&self, lambda: f64) -> Matrix {
        self.curve.at(lambda)
    }

    pub fn start(&self) -> Matrix {
        self.curve.at(0.0)
    }

    pub fn end(&self) -> Matrix {
        self.curve.at(1.0)
    }
}

/// Build the rewiring curve for (F, W) against a spanning column basis of F.
/// Rows of W indexed by the basis absorb the complement rows through the
/// coefficient matrix; complement rows shrink to zero.
pub fn rewire_redundant_columns(
    f: &Matrix,
    w: &Matrix,
    basis: &[usize],
    tol_rel: f64,
) -> Result<RewireCurve> {
    linalg::ensure_finite(f, "rewire F")?;
    linalg::ensure_finite(w, "rewire W")?;
    if f.ncols() != w.nrows() {
        return Err(Error::InvalidInput(format!(
            "F has {} columns but W has {} rows",
            f.ncols(),
            w.nrows()
        )));
    }
    let rank = linalg::numerical_rank(f, tol_rel)?.rank;
    if rank >= f.ncols() {
        return Err(Error::InvalidInput(
            "nothing to rewire: F has full column rank".into(),
        ));
    }
    if basis.len() >= f.ncols() {
        return Err(Error::InvalidInput(
            "basis must leave at least one redundant column".into(),
        ));
    }
    // E with F(:, complement) = F(:, basis) E; errors when basis cannot span.
    let e = linalg::coefficient_matrix(f, basis, tol_rel)?;
    let complement: Vec<usize> = (0..f.ncols()).filter(|j| !basis.contains(j)).collect();

    let w_comp = w.select_rows(complement.iter());
    let absorbed = &e * &w_comp;
    let mut end = w.clone();
    for (pos, &bi) in basis.iter().enumerate() {
        for c in 0..w.ncols() {
            end[(bi, c)] += absorbed[(pos, c)];
        }
    }
    for &ci in &complement {
        for c in 0..w.ncols() {
            end[(ci, c)] = 0.0;
        }
    }
    Ok(RewireCurve {
        curve: MatrixCurve::Line {
            from: w.clone(),
            to: end,
        },
        basis: basis.to_vec(),
        complement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn hand_checked_single_row_case() {
        // F = [1 2], basis {0}, E = [2], W = [3; 4]:
        // c(1) = [3 + 2*4; 0] = [11; 0] and F c(lambda) = [11] throughout.
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let w = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        let curve = rewire_redundant_columns(&f, &w, &[0], 1e-9).unwrap();
        let end = curve.end();
        assert!((end[(0, 0)] - 11.0).abs() < 1e-12);
        assert_eq!(end[(1, 0)], 0.0);
        for i in 0..=16 {
            let lam = i as f64 / 16.0;
            let prod = &f * curve.at(lam);
            assert!((prod[(0, 0)] - 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn product_invariance_on_seeded_rank_deficient_f() {
        let mut rng = linalg::rng_from(17, 1);
        let f = linalg::random_normal_matrix(5, 3, &mut rng)
            * linalg::random_normal_matrix(3, 8, &mut rng);
        let w = linalg::random_normal_matrix(8, 4, &mut rng);
        let basis = linalg::independent_column_basis(&f, 1e-9).unwrap();
        let curve = rewire_redundant_columns(&f, &w, &basis, 1e-9).unwrap();
        let base = &f * &w;
        for i in 0..64 {
            let lam = i as f64 / 63.0;
            let drift = (&f * curve.at(lam) - &base).norm();
            assert!(drift <= 1e-9, "drift {drift:.3e} at lambda {lam}");
        }
    }

    #[test]
    fn endpoint_ignores_replaced_complement_columns() {
        let mut rng = linalg::rng_from(29, 2);
        let f = linalg::random_normal_matrix(4, 2, &mut rng)
            * linalg::random_normal_matrix(2, 6, &mut rng);
        let w = linalg::random_normal_matrix(6, 3, &mut rng);
        let basis = linalg::independent_column_basis(&f, 1e-9).unwrap();
        let curve = rewire_redundant_columns(&f, &w, &basis, 1e-9).unwrap();
        let end = curve.end();
        let base = &f * &end;
        // Replace the complement columns of F with fresh noise.
        let mut f2 = f.clone();
        for &j in &curve.complement {
            for i in 0..f2.nrows() {
                f2[(i, j)] = linalg::standard_normal(&mut rng);
            }
        }
        let perturbed = &f2 * &end;
        assert!((&perturbed - &base).norm() <= 1e-9);
    }

    #[test]
    fn full_rank_f_is_rejected() {
        let f = DMatrix::<f64>::identity(3, 3);
        let w = DMatrix::<f64>::zeros(3, 2);
        assert!(matches!(
            rewire_redundant_columns(&f, &w, &[0, 1, 2], 1e-9),
            Err(Error::InvalidInput(_))
        ));
    }
}
