//! Dense real-matrix primitives: pseudo-inverses, numerical rank, kernel bases,
//! column bases with coefficient matrices, and certified full-rank matrix paths.
//!
//! Everything here is a pure function of its inputs; randomized operations take
//! explicit seeds.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default relative tolerance for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Numerical rank summary of one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    pub tolerance_used: f64,
}

impl RankReport {
    /// True when the rank equals min(rows, cols).
    pub fn is_full_rank(&self, rows: usize, cols: usize) -> bool {
        self.rank == rows.min(cols)
    }
}

pub fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

fn ensure_tol(tol: f64, what: &str) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} must lie in (0, 1), got {tol}"
        )))
    }
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Smallest and largest of the min(m, n) singular values.
pub fn extreme_singular_values(a: &Matrix) -> (f64, f64) {
    let s = singular_values(a);
    (*s.last().unwrap(), s[0])
}

/// Moore-Penrose inverse with singular values below `sv_cutoff_rel * sigma_max`
/// treated as zero.
pub fn pseudo_inverse(a: &Matrix, sv_cutoff_rel: f64) -> Result<Matrix> {
    ensure_finite(a, "pseudo_inverse input")?;
    ensure_tol(sv_cutoff_rel, "sv_cutoff_rel")?;
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = sv_cutoff_rel * smax;
    // pinv = V * diag(1/s or 0) * U^T
    let k = svd.singular_values.len();
    let mut sinv = DMatrix::zeros(k, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cutoff && s > 0.0 {
            sinv[(i, i)] = 1.0 / s;
        }
    }
    Ok(v_t.transpose() * sinv * u.transpose())
}

/// Rank = number of singular values above `tol_rel * sigma_max`; rank 0 iff the
/// zero matrix.
pub fn numerical_rank(a: &Matrix, tol_rel: f64) -> Result<RankReport> {
    ensure_finite(a, "numerical_rank input")?;
    ensure_tol(tol_rel, "tol_rel")?;
    let s = singular_values(a);
    let smax = s[0];
    let smin = *s.last().unwrap();
    let tol = tol_rel * smax;
    let rank = if smax == 0.0 {
        0
    } else {
        s.iter().filter(|&&v| v > tol).count()
    };
    Ok(RankReport {
        rank,
        min_singular_value: smin,
        max_singular_value: smax,
        tolerance_used: tol,
    })
}

/// Greedy lowest-index column basis: sweep columns in index order, keep a column
/// when its residual against the span of the kept ones clears the tolerance.
/// Returns exactly `numerical_rank(a, tol_rel)` indices, ascending.
pub fn independent_column_basis(a: &Matrix, tol_rel: f64) -> Result<Vec<usize>> {
    ensure_finite(a, "independent_column_basis input")?;
    let report = numerical_rank(a, tol_rel)?;
    let r = report.rank;
    if r == 0 {
        return Ok(Vec::new());
    }
    let mut threshold = tol_rel * report.max_singular_value;
    for _ in 0..5 {
        if let Some(basis) = greedy_sweep(a, r, threshold) {
            return Ok(basis);
        }
        // Residual norms and singular values are not identical scales; loosen
        // and retry until the sweep can fill the rank.
        threshold /= 16.0;
    }
    Err(Error::Internal(
        "column sweep could not reach the numerical rank".into(),
    ))
}

fn greedy_sweep(a: &Matrix, r: usize, threshold: f64) -> Option<Vec<usize>> {
    let mut q: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(r);
    let mut basis = Vec::with_capacity(r);
    for j in 0..a.ncols() {
        if basis.len() == r {
            break;
        }
        let mut v = a.column(j).clone_owned();
        // Modified Gram-Schmidt with one reorthogonalization pass.
        for _ in 0..2 {
            for qi in &q {
                let c = qi.dot(&v);
                v -= qi * c;
            }
        }
        let norm = v.norm();
        if norm > threshold {
            q.push(v / norm);
            basis.push(j);
        }
    }
    if basis.len() == r {
        Some(basis)
    } else {
        None
    }
}

fn complement_of(basis: &[usize], n: usize) -> Vec<usize> {
    let mut in_basis = vec![false; n];
    for &j in basis {
        in_basis[j] = true;
    }
    (0..n).filter(|&j| !in_basis[j]).collect()
}

fn check_index_set(basis: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &j in basis {
        if j >= n {
            return Err(Error::InvalidInput(format!(
                "basis index {j} out of range for {n} columns"
            )));
        }
        if seen[j] {
            return Err(Error::InvalidInput(format!("basis index {j} repeated")));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Solve A(:, basis) * E = A(:, complement) by least squares. The basis must
/// span the column space; the reconstruction residual is checked against
/// `tol_rel * ||A||_F`.
pub fn coefficient_matrix(a: &Matrix, basis: &[usize], tol_rel: f64) -> Result<Matrix> {
    ensure_finite(a, "coefficient_matrix input")?;
    check_index_set(basis, a.ncols())?;
    let comp = complement_of(basis, a.ncols());
    let ab = a.select_columns(basis.iter());
    let ac = a.select_columns(comp.iter());
    if comp.is_empty() {
        return Ok(DMatrix::zeros(basis.len(), 0));
    }
    if basis.is_empty() {
        // Only consistent when the complement is all zero.
        if ac.norm() <= tol_rel * a.norm().max(1.0) {
            return Ok(DMatrix::zeros(0, comp.len()));
        }
        return Err(Error::RankDeficient(
            "empty basis cannot express nonzero columns".into(),
        ));
    }
    let e = pseudo_inverse(&ab, 1e-13)? * &ac;
    let residual = (&ab * &e - &ac).norm();
    let scale = a.norm();
    if residual > tol_rel.max(1e-12) * scale.max(1.0) {
        return Err(Error::RankDeficient(format!(
            "basis does not span the column space (residual {residual:.3e})"
        )));
    }
    Ok(e)
}

/// Orthonormal basis of the right null space of `a` (zero-width when trivial).
pub fn kernel_basis(a: &Matrix, tol_rel: f64) -> Result<Matrix> {
    ensure_finite(a, "kernel_basis input")?;
    let n = a.ncols();
    let r = numerical_rank(a, tol_rel)?.rank;
    let dim = n - r;
    if dim == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    // Row space of a = column space of a^T; the kernel is its orthogonal
    // complement, extracted by sweeping identity columns against it.
    let at = a.transpose();
    let mut frame: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(r + dim);
    if r > 0 {
        let (_, smax) = extreme_singular_values(&at);
        let mut threshold = tol_rel * smax;
        'outer: for _ in 0..5 {
            frame.clear();
            for j in 0..at.ncols() {
                if frame.len() == r {
                    break 'outer;
                }
                let mut v = at.column(j).clone_owned();
                for _ in 0..2 {
                    for qi in &frame {
                        let c = qi.dot(&v);
                        v -= qi * c;
                    }
                }
                let norm = v.norm();
                if norm > threshold {
                    frame.push(v / norm);
                }
            }
            if frame.len() == r {
                break;
            }
            threshold /= 16.0;
        }
        if frame.len() != r {
            return Err(Error::Internal("row-space sweep fell short".into()));
        }
    }
    let mut kernel_cols = Vec::with_capacity(dim);
    for j in 0..n {
        if kernel_cols.len() == dim {
            break;
        }
        let mut v = nalgebra::DVector::zeros(n);
        v[j] = 1.0;
        for _ in 0..2 {
            for qi in frame.iter().chain(kernel_cols.iter()) {
                let c = qi.dot(&v);
                v -= qi * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            kernel_cols.push(v / norm);
        }
    }
    if kernel_cols.len() != dim {
        return Err(Error::Internal("kernel completion fell short".into()));
    }
    let mut out = DMatrix::zeros(n, dim);
    for (j, col) in kernel_cols.iter().enumerate() {
        out.set_column(j, col);
    }
    Ok(out)
}

/// Two straight pieces A -> C -> B staying inside the full-rank set, with the
/// certified minimum singular value along the sampled pieces.
#[derive(Debug, Clone)]
pub struct TwoPieceMatrixPath {
    pub start: Matrix,
    pub mid: Matrix,
    pub end: Matrix,
    /// Smallest singular value observed over both certified pieces.
    pub certified_floor: f64,
    pub retries_used: usize,
}

impl TwoPieceMatrixPath {
    /// Piecewise-linear evaluation; the waypoint sits at lambda = 1/2.
    pub fn eval(&self, lambda: f64) -> Matrix {
        if lambda <= 0.5 {
            lerp(&self.start, &self.mid, lambda * 2.0)
        } else {
            lerp(&self.mid, &self.end, lambda * 2.0 - 1.0)
        }
    }
}

pub fn lerp(a: &Matrix, b: &Matrix, t: f64) -> Matrix {
    if t == 0.0 {
        return a.clone();
    }
    if t == 1.0 {
        return b.clone();
    }
    a * (1.0 - t) + b * t
}

/// Samples per piece when certifying a full-rank segment.
pub const PATH_CERT_SAMPLES: usize = 64;

fn min_sv_on_segment(a: &Matrix, b: &Matrix) -> f64 {
    let f = |t: f64| extreme_singular_values(&lerp(a, b, t)).0;
    let n = PATH_CERT_SAMPLES;
    let mut best = f64::INFINITY;
    let mut best_i = 0usize;
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let v = f(t);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // Golden-section refinement around the sampled minimum.
    let lo = if best_i == 0 {
        0.0
    } else {
        (best_i - 1) as f64 / (n - 1) as f64
    };
    let hi = if best_i == n - 1 {
        1.0
    } else {
        (best_i + 1) as f64 / (n - 1) as f64
    };
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a0, mut b0) = (lo, hi);
    let mut x1 = b0 - phi * (b0 - a0);
    let mut x2 = a0 + phi * (b0 - a0);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..48 {
        if f1 < f2 {
            b0 = x2;
            x2 = x1;
            f2 = f1;
            x1 = b0 - phi * (b0 - a0);
            f1 = f(x1);
        } else {
            a0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = a0 + phi * (b0 - a0);
            f2 = f(x2);
        }
    }
    best.min(f1).min(f2)
}

/// Deterministic sub-generator for (seed, salt) pairs.
pub fn rng_from(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Standard normal draw via Box-Muller.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

/// Connect two full-rank m x n matrices (m != n) by a two-piece straight path
/// through a seeded random midpoint, certified to keep the minimum singular
/// value above `min_sv_floor` along both pieces.
pub fn full_rank_matrix_path(
    a: &Matrix,
    b: &Matrix,
    min_sv_floor: f64,
    seed: u64,
    max_retries: usize,
) -> Result<TwoPieceMatrixPath> {
    ensure_finite(a, "full_rank_matrix_path A")?;
    ensure_finite(b, "full_rank_matrix_path B")?;
    if a.shape() != b.shape() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, n) = a.shape();
    if m == n {
        // The square full-rank set is disconnected by determinant sign.
        return Err(Error::UnsupportedShape(format!(
            "full-rank paths require m != n, got {m} x {n}"
        )));
    }
    for (name, mat) in [("A", a), ("B", b)] {
        let (smin, _) = extreme_singular_values(mat);
        if smin <= min_sv_floor {
            return Err(Error::RankDeficient(format!(
                "{name} is not full rank above the floor (min sv {smin:.3e})"
            )));
        }
    }
    if a == b {
        let (smin, _) = extreme_singular_values(a);
        return Ok(TwoPieceMatrixPath {
            start: a.clone(),
            mid: a.clone(),
            end: b.clone(),
            certified_floor: smin,
            retries_used: 0,
        });
    }
    let target_norm = (a.norm() + b.norm()) / 2.0;
    let mut best_floor = f64::NEG_INFINITY;
    for retry in 0..=max_retries {
        let mut rng = rng_from(seed, retry as u64 + 1);
        let mut c = random_normal_matrix(m, n, &mut rng);
        let cn = c.norm();
        if cn == 0.0 {
            continue;
        }
        c *= target_norm / cn;
        let floor1 = min_sv_on_segment(a, &c);
        let floor2 = min_sv_on_segment(&c, b);
        let floor = floor1.min(floor2);
        best_floor = best_floor.max(floor);
        if floor > min_sv_floor {
            return Ok(TwoPieceMatrixPath {
                start: a.clone(),
                mid: c,
                end: b.clone(),
                certified_floor: floor,
                retries_used: retry,
            });
        }
    }
    Err(Error::PathNotFound {
        retries: max_retries,
        best_floor,
        floor: min_sv_floor,
    })
}
