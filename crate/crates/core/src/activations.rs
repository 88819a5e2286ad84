//! Activation functions with forward maps, inverses where they exist, and
//! machine-checkable flags for the two structural assumptions the path
//! constructions depend on: invertibility onto the whole real line, and
//! non-expressibility as a finite combination of shifted copies of itself.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// max(x, slope * x) with slope in (0, 1).
    LeakyRelu { slope: f64 },
    Relu,
    /// x for x >= 0, alpha * (e^x - 1) otherwise, alpha > 0.
    Elu { alpha: f64 },
    Linear,
}

impl Activation {
    pub fn leaky_relu(slope: f64) -> Result<Self> {
        if slope > 0.0 && slope < 1.0 {
            Ok(Activation::LeakyRelu { slope })
        } else {
            Err(Error::InvalidInput(format!(
                "leaky_relu slope must lie in (0, 1), got {slope}"
            )))
        }
    }

    pub fn elu(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(Activation::Elu { alpha })
        } else {
            Err(Error::InvalidInput(format!(
                "elu alpha must be positive, got {alpha}"
            )))
        }
    }

    /// Strictly monotonic with range equal to all of R (so a continuous inverse
    /// exists). True for leaky-relu and linear only.
    pub fn satisfies_a1(&self) -> bool {
        matches!(
            self,
            Activation::LeakyRelu { .. } | Activation::Linear
        )
    }

    /// Not expressible as a nontrivial finite combination of its own shifts.
    /// True for every nonlinear kind here; false for linear.
    pub fn satisfies_a2(&self) -> bool {
        !matches!(self, Activation::Linear)
    }

    pub fn scalar(&self, x: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Elu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            }
            Activation::Linear => x,
        }
    }

    fn scalar_inverse(&self, y: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { slope } => {
                if y >= 0.0 {
                    y
                } else {
                    y / slope
                }
            }
            Activation::Linear => y,
            // Guarded by satisfies_a1 before use.
            _ => f64::NAN,
        }
    }

    /// Elementwise forward map.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        x.map(|v| self.scalar(v))
    }

    /// Elementwise inverse; errors when no continuous inverse onto R exists.
    pub fn invert(&self, y: &Matrix) -> Result<Matrix> {
        if !self.satisfies_a1() {
            return Err(Error::UnsupportedActivation(format!(
                "{} is not invertible on all of R",
                self.kind_name()
            )));
        }
        Ok(y.map(|v| self.scalar_inverse(v)))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Relu => "relu",
            Activation::Elu { .. } => "elu",
            Activation::Linear => "linear",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            Activation::LeakyRelu { slope } => Some(slope),
            Activation::Elu { alpha } => Some(alpha),
            _ => None,
        }
    }
}

// Wire format: a string tag plus an optional numeric parameter.
#[derive(Serialize, Deserialize)]
struct ActivationJson {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    param: Option<f64>,
}

impl Serialize for Activation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ActivationJson {
            kind: self.kind_name().to_string(),
            param: self.param(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Activation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ActivationJson::deserialize(d)?;
        let act = match raw.kind.as_str() {
            "leaky_relu" => Activation::leaky_relu(raw.param.unwrap_or(0.01)),
            "relu" => Ok(Activation::Relu),
            "elu" => Activation::elu(raw.param.unwrap_or(1.0)),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidInput(format!("unknown activation kind {other}"))),
        };
        act.map_err(serde::de::Error::custom)
    }
}

/// Outcome of the numeric search for a shift combination reproducing sigma.
#[derive(Debug, Clone, Serialize)]
pub struct FalsifierReport {
    pub found: bool,
    pub best_residual: f64,
    /// Shifts of the best candidate, for inspection.
    pub best_shifts: Vec<f64>,
    pub best_coefficients: Vec<f64>,
}

/// Grid description for the falsifier: `points` samples uniformly covering
/// [lo, hi].
#[derive(Debug, Clone, Copy)]
pub struct SampleGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        SampleGrid {
            lo: -10.0,
            hi: 10.0,
            points: 512,
        }
    }
}

const MIN_SHIFT: f64 = 0.25;
const MIN_SHIFT_GAP: f64 = 0.125;
const MIN_COEFF_NORM: f64 = 1e-3;

/// Search for nonzero coefficients and distinct nonzero shifts such that
/// sigma(x) matches the combination of shifted copies on the grid. Coefficients
/// are solved by least squares per shift set; shifts come from a fixed small
/// grid plus seeded draws kept away from zero so the search cannot win by
/// taking a vanishing shift.
///
/// This is a numeric cross-check of the structural flag, not a proof.
pub fn falsify_assumption2(
    act: &Activation,
    num_shifts: usize,
    grid: SampleGrid,
    tol: f64,
    seed: u64,
) -> Result<FalsifierReport> {
    if !(1..=8).contains(&num_shifts) {
        return Err(Error::InvalidInput(format!(
            "num_shifts must lie in [1, 8], got {num_shifts}"
        )));
    }
    if grid.points < 512 || !(grid.lo < grid.hi) {
        return Err(Error::InvalidInput(
            "grid must cover an interval with at least 512 points".into(),
        ));
    }
    let xs: Vec<f64> = (0..grid.points)
        .map(|i| grid.lo + (grid.hi - grid.lo) * i as f64 / (grid.points - 1) as f64)
        .collect();
    let target: Vec<f64> = xs.iter().map(|&x| act.scalar(x)).collect();

    // Candidate shift pool: deterministic dyadic values plus seeded draws.
    let mut pool: Vec<f64> = Vec::new();
    for &base in &[0.25, 0.5, 1.0, 2.0, 4.0] {
        pool.push(base);
        pool.push(-base);
    }
    let mut rng = linalg::rng_from(seed, 0xFA15);
    while pool.len() < 40 {
        let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
        let mag = MIN_SHIFT + rng.random::<f64>() * 3.75;
        pool.push(sign * mag);
    }

    let mut best = FalsifierReport {
        found: false,
        best_residual: f64::INFINITY,
        best_shifts: Vec::new(),
        best_coefficients: Vec::new(),
    };
    let trials = 96usize;
    for trial in 0..trials {
        let mut shifts: Vec<f64> = Vec::with_capacity(num_shifts);
        let mut trng = linalg::rng_from(seed, 0x5F17 + trial as u64);
        let mut guard = 0;
        while shifts.len() < num_shifts && guard < 400 {
            guard += 1;
            let cand = pool[trng.random_range(0..pool.len())];
            if shifts
                .iter()
                .all(|&s: &f64| (s - cand).abs() >= MIN_SHIFT_GAP)
            {
                shifts.push(cand);
            }
        }
        if shifts.len() < num_shifts {
            continue;
        }
        // Least squares for the coefficients on the grid.
        let design = Matrix::from_fn(xs.len(), num_shifts, |i, j| act.scalar(xs[i] - shifts[j]));
        let y = Matrix::from_fn(xs.len(), 1, |i, _| target[i]);
        let coeffs = linalg::pseudo_inverse(&design, 1e-12)? * &y;
        let coeff_norm = coeffs.norm();
        if coeff_norm < MIN_COEFF_NORM {
            continue;
        }
        let resid = &design * &coeffs - &y;
        let max_resid = resid.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_resid < best.best_residual {
            best.best_residual = max_resid;
            best.best_shifts = shifts.clone();
            best.best_coefficients = coeffs.iter().copied().collect();
        }
        if max_resid <= tol {
            best.found = true;
            return Ok(best);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn leaky_relu_forward() {
        let act = Activation::leaky_relu(0.1).unwrap();
        let x = DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 2.0]);
        let y = act.apply(&x);
        assert_eq!(y, DMatrix::from_row_slice(1, 3, &[-0.1, 0.0, 2.0]));
    }

    #[test]
    fn relu_forward() {
        let x = DMatrix::from_row_slice(1, 2, &[-3.0, 5.0]);
        assert_eq!(
            Activation::Relu.apply(&x),
            DMatrix::from_row_slice(1, 2, &[0.0, 5.0])
        );
    }

    #[test]
    fn elu_forward_closed_form() {
        let act = Activation::elu(1.0).unwrap();
        let x = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let y = act.apply(&x);
        assert!((y[(0, 0)] - (-0.6321205588285577)).abs() < 1e-15);
    }

    #[test]
    fn leaky_relu_inverse() {
        let act = Activation::leaky_relu(0.1).unwrap();
        let y = DMatrix::from_row_slice(1, 2, &[-0.1, 2.0]);
        let x = act.invert(&y).unwrap();
        assert!((x[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((x[(0, 1)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn linear_inverse_is_identity() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        assert_eq!(Activation::Linear.invert(&y).unwrap(), y);
    }

    #[test]
    fn relu_and_elu_refuse_inversion() {
        let y = DMatrix::zeros(1, 1);
        assert!(Activation::Relu.invert(&y).is_err());
        assert!(Activation::elu(1.0).unwrap().invert(&y).is_err());
    }

    #[test]
    fn inverse_roundtrip_on_seeded_values() {
        let act = Activation::leaky_relu(0.01).unwrap();
        let mut rng = crate::linalg::rng_from(42, 9);
        let y = crate::linalg::random_normal_matrix(40, 25, &mut rng);
        let x = act.invert(&y).unwrap();
        let back = act.apply(&x);
        let worst = (&back - &y).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-12);
    }

    #[test]
    fn monotonicity_on_sorted_grid() {
        let acts = [
            Activation::leaky_relu(0.01).unwrap(),
            Activation::Relu,
            Activation::elu(1.0).unwrap(),
            Activation::Linear,
        ];
        let mut rng = crate::linalg::rng_from(7, 7);
        let mut xs: Vec<f64> = (0..200)
            .map(|_| crate::linalg::standard_normal(&mut rng) * 4.0)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for act in &acts {
            let strict = !matches!(act, Activation::Relu);
            for w in xs.windows(2) {
                if w[0] == w[1] {
                    continue;
                }
                let (a, b) = (act.scalar(w[0]), act.scalar(w[1]));
                assert!(a <= b);
                if strict {
                    assert!(a < b, "{} not strict at {:?}", act.kind_name(), w);
                }
            }
        }
    }

    #[test]
    fn falsifier_finds_shift_identity_for_linear() {
        // x = 2(x - a) - (x - 2a) exactly, for any a != 0.
        let report =
            falsify_assumption2(&Activation::Linear, 2, SampleGrid::default(), 1e-10, 3).unwrap();
        assert!(report.found, "best residual {}", report.best_residual);
        assert!(report.best_residual <= 1e-10);
    }

    #[test]
    fn falsifier_rejects_piecewise_linear_and_elu() {
        for act in [
            Activation::leaky_relu(0.01).unwrap(),
            Activation::Relu,
            Activation::elu(1.0).unwrap(),
        ] {
            let report =
                falsify_assumption2(&act, 3, SampleGrid::default(), 1e-6, 3).unwrap();
            assert!(
                !report.found,
                "{} unexpectedly matched with residual {}",
                act.kind_name(),
                report.best_residual
            );
        }
    }

    #[test]
    fn falsifier_verdicts_match_flags() {
        for act in [
            Activation::leaky_relu(0.01).unwrap(),
            Activation::Relu,
            Activation::elu(1.0).unwrap(),
            Activation::Linear,
        ] {
            let report =
                falsify_assumption2(&act, 2, SampleGrid::default(), 1e-6, 11).unwrap();
            assert_eq!(report.found, !act.satisfies_a2(), "{}", act.kind_name());
        }
    }

    #[test]
    fn serde_roundtrip() {
        let act = Activation::leaky_relu(0.05).unwrap();
        let s = serde_json::to_string(&act).unwrap();
        assert_eq!(s, r#"{"kind":"leaky_relu","param":0.05}"#);
        let back: Activation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, act);
        let relu: Activation = serde_json::from_str(r#"{"kind":"relu"}"#).unwrap();
        assert_eq!(relu, Activation::Relu);
    }
}
