//! Architecture specification, parameter container, layerwise forward
//! evaluation, convex losses, width-hypothesis validation, and near-infimal
//! loss targets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Square,
    CrossEntropy,
}

/// Static architecture: widths [n_0 = d, n_1, ..., n_L = m], activation, loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpecJson", into = "NetworkSpecJson")]
pub struct NetworkSpec {
    widths: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
}

#[derive(Serialize, Deserialize)]
struct NetworkSpecJson {
    widths: Vec<usize>,
    activation: Activation,
    loss: LossKind,
}

impl From<NetworkSpec> for NetworkSpecJson {
    fn from(s: NetworkSpec) -> Self {
        NetworkSpecJson {
            widths: s.widths,
            activation: s.activation,
            loss: s.loss,
        }
    }
}

impl TryFrom<NetworkSpecJson> for NetworkSpec {
    type Error = Error;
    fn try_from(j: NetworkSpecJson) -> Result<Self> {
        NetworkSpec::new(j.widths, j.activation, j.loss)
    }
}

impl NetworkSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::InvalidInput(
                "a network needs at least two weight layers (three widths)".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidInput("all widths must be >= 1".into()));
        }
        Ok(NetworkSpec {
            widths,
            activation,
            loss,
        })
    }

    /// Number of weight layers L.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Width n_k for k in [0, L].
    pub fn width(&self, k: usize) -> usize {
        self.widths[k]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// One layer's parameters: weight n_{l-1} x n_l and bias as an n_l x 1 column.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Matrix,
}

impl Layer {
    pub fn new(w: Matrix, b: Matrix) -> Self {
        Layer { w, b }
    }
}

/// The point theta = (W_l, b_l)_{l=1..L} in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Serialize for Layer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LayerJson {
            w: mat_to_rows(&self.w),
            b: self.b.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Layer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = LayerJson::deserialize(d)?;
        let w = rows_to_mat(&raw.w).map_err(serde::de::Error::custom)?;
        let b = DMatrix::from_column_slice(raw.b.len(), 1, &raw.b);
        Ok(Layer::new(w, b))
    }
}

/// Serde adapter for matrix fields in payload structs: nested row arrays.
pub mod mat_serde {
    use super::{mat_to_rows, rows_to_mat, Matrix};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        // Zero-width matrices keep a row count through one empty row marker.
        if m.ncols() == 0 {
            let marker: Vec<Vec<f64>> = vec![vec![]; m.nrows()];
            return marker.serialize(s);
        }
        mat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if !rows.is_empty() && rows[0].is_empty() {
            return Ok(Matrix::zeros(rows.len(), 0));
        }
        rows_to_mat(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn mat_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_to_mat(rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("matrix needs at least one row".into()));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(Error::InvalidInput("matrix needs at least one column".into()));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("ragged rows in matrix".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

impl Params {
    /// Seeded standard-normal initialization scaled by 1/sqrt(fan_in).
    pub fn random_init(spec: &NetworkSpec, seed: u64) -> Params {
        let mut rng = linalg::rng_from(seed, 0x1A17);
        let mut layers = Vec::with_capacity(spec.num_layers());
        for l in 1..=spec.num_layers() {
            let fan_in = spec.width(l - 1) as f64;
            let scale = 1.0 / fan_in.sqrt();
            let w = linalg::random_normal_matrix(spec.width(l - 1), spec.width(l), &mut rng)
                * scale;
            let b = linalg::random_normal_matrix(spec.width(l), 1, &mut rng) * 0.1;
            layers.push(Layer::new(w, b));
        }
        Params { layers }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(Error::InvalidParams(format!(
                "expected {} layers, got {}",
                spec.num_layers(),
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let l = i + 1;
            let want_w = (spec.width(l - 1), spec.width(l));
            if layer.w.shape() != want_w {
                return Err(Error::InvalidParams(format!(
                    "layer {l}: W has shape {:?}, expected {:?}",
                    layer.w.shape(),
                    want_w
                )));
            }
            if layer.b.shape() != (spec.width(l), 1) {
                return Err(Error::InvalidParams(format!(
                    "layer {l}: b has shape {:?}, expected ({}, 1)",
                    layer.b.shape(),
                    spec.width(l)
                )));
            }
            linalg::ensure_finite(&layer.w, &format!("W_{l}"))?;
            linalg::ensure_finite(&layer.b, &format!("b_{l}"))?;
        }
        Ok(())
    }

    /// Largest absolute entry difference across all layers.
    pub fn max_norm_diff(&self, other: &Params) -> f64 {
        if self.layers.len() != other.layers.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.w.shape() != b.w.shape() || a.b.shape() != b.b.shape() {
                return f64::INFINITY;
            }
            for (x, y) in a.w.iter().zip(b.w.iter()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.b.iter().zip(b.b.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// Frobenius norm of the whole parameter vector.
    pub fn frobenius_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.norm_squared() + l.b.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn lerp(&self, other: &Params, t: f64) -> Params {
        Params {
            layers: self
                .layers
                .iter()
                .zip(&other.layers)
                .map(|(a, b)| Layer::new(linalg::lerp(&a.w, &b.w, t), linalg::lerp(&a.b, &b.b, t)))
                .collect(),
        }
    }
}

fn min_pairwise_row_gap(m: &Matrix) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.nrows() {
            let d = (m.row(i) - m.row(j)).norm();
            gap = gap.min(d);
        }
    }
    gap
}

/// Training data: inputs X (N x d) and targets Y (N x m). Rows of X must be
/// pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Matrix,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    y: Vec<Vec<f64>>,
}

impl Serialize for Dataset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetJson {
            x: mat_to_rows(&self.x),
            y: mat_to_rows(&self.y),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DatasetJson::deserialize(d)?;
        let x = rows_to_mat(&raw.x).map_err(serde::de::Error::custom)?;
        let y = rows_to_mat(&raw.y).map_err(serde::de::Error::custom)?;
        Dataset::new(x, y).map_err(serde::de::Error::custom)
    }
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Dataset> {
        linalg::ensure_finite(&x, "X")?;
        linalg::ensure_finite(&y, "Y")?;
        if x.nrows() != y.nrows() {
            return Err(Error::InvalidInput(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        let max_row_norm = (0..x.nrows())
            .map(|i| x.row(i).norm())
            .fold(0.0_f64, f64::max);
        if x.nrows() > 1 {
            let gap = min_pairwise_row_gap(&x);
            if gap <= 1e-9 * (1.0 + max_row_norm) {
                return Err(Error::InvalidInput(format!(
                    "training samples must be distinct (min row gap {gap:.3e})"
                )));
            }
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn num_samples(&self) -> usize {
        self.x.nrows()
    }
}

/// Loss value with the infimum of the outer convex loss it can approach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossValue {
    pub value: f64,
    pub lower_bound_p_star: f64,
}

/// F_k for the subnetwork whose input is `input` and whose layers are `layers`;
/// `upto` counts layers of the slice to apply and `last_is_affine` marks
/// whether the final applied layer skips the activation (the network output
/// layer does).
pub fn forward_from(
    input: &Matrix,
    activation: &Activation,
    layers: &[Layer],
    upto: usize,
    output_layer_index: usize,
) -> Result<Matrix> {
    let mut f = input.clone();
    let n = input.nrows();
    let ones = DMatrix::from_element(n, 1, 1.0);
    for (i, layer) in layers.iter().take(upto).enumerate() {
        if f.ncols() != layer.w.nrows() {
            return Err(Error::InvalidParams(format!(
                "layer {} weight shape {:?} does not accept width {}",
                i + 1,
                layer.w.shape(),
                f.ncols()
            )));
        }
        let pre = &f * &layer.w + &ones * layer.b.transpose();
        f = if i + 1 == output_layer_index {
            pre
        } else {
            activation.apply(&pre)
        };
    }
    Ok(f)
}

/// Network output at layer k (k = 0 returns X unchanged; k = L is affine).
pub fn forward_to_layer(
    spec: &NetworkSpec,
    params: &Params,
    data: &Dataset,
    k: usize,
) -> Result<Matrix> {
    if k > spec.num_layers() {
        return Err(Error::InvalidInput(format!(
            "layer index {k} exceeds L = {}",
            spec.num_layers()
        )));
    }
    params.validate(spec)?;
    forward_from(
        data.x(),
        &spec.activation,
        &params.layers,
        k,
        spec.num_layers(),
    )
}

fn one_hot_classes(y: &Matrix) -> Result<Vec<usize>> {
    let mut classes = Vec::with_capacity(y.nrows());
    for i in 0..y.nrows() {
        let mut ones = 0usize;
        let mut class = 0usize;
        for j in 0..y.ncols() {
            let v = y[(i, j)];
            if v == 1.0 {
                ones += 1;
                class = j;
            } else if v != 0.0 {
                return Err(Error::InvalidTarget(format!(
                    "cross-entropy requires one-hot Y; row {i} has entry {v}"
                )));
            }
        }
        if ones != 1 {
            return Err(Error::InvalidTarget(format!(
                "cross-entropy requires one-hot Y; row {i} has {ones} ones"
            )));
        }
        classes.push(class);
    }
    Ok(classes)
}

/// The convex outer loss phi applied to a candidate network output.
pub fn loss_of_output(loss: LossKind, output: &Matrix, data: &Dataset) -> Result<f64> {
    match loss {
        LossKind::Square => {
            let d = output - data.y();
            Ok(0.5 * d.norm_squared())
        }
        LossKind::CrossEntropy => {
            let classes = one_hot_classes(data.y())?;
            let n = output.nrows();
            let mut total = 0.0;
            for i in 0..n {
                let row = output.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max
                    + row
                        .iter()
                        .map(|&z| (z - max).exp())
                        .sum::<f64>()
                        .ln();
                total += lse - output[(i, classes[i])];
            }
            Ok(total / n as f64)
        }
    }
}

pub fn loss(spec: &NetworkSpec, params: &Params, data: &Dataset) -> Result<LossValue> {
    let f_l = forward_to_layer(spec, params, data, spec.num_layers())?;
    let value = loss_of_output(spec.loss, &f_l, data)?;
    debug_assert!(value >= -1e-12, "loss fell below its infimum: {value}");
    Ok(LossValue {
        value,
        lower_bound_p_star: 0.0,
    })
}

/// An output matrix with loss at most `epsilon`: the targets themselves for
/// square loss, scaled one-hot logits for cross-entropy.
pub fn loss_target(spec: &NetworkSpec, data: &Dataset, epsilon: f64) -> Result<Matrix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidEpsilon(format!(
            "epsilon must exceed p* = 0, got {epsilon}"
        )));
    }
    match spec.loss {
        LossKind::Square => Ok(data.y().clone()),
        LossKind::CrossEntropy => {
            one_hot_classes(data.y())?;
            let m = data.y().ncols();
            // Per-sample loss of t * one-hot logits is log(1 + (m-1) e^-t).
            let t = if m <= 1 {
                0.0
            } else {
                (((m - 1) as f64) / epsilon.exp_m1()).ln().max(0.0)
            };
            Ok(data.y() * t)
        }
    }
}

/// Which theorem's hypotheses to validate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Full-rank data, strictly decreasing widths: sublevel sets connected.
    LinData,
    /// One hidden layer k with n_k >= N: no bad local valleys.
    NoBadValley { k: usize },
    /// First hidden layer >= 2N wide: sublevel sets connected.
    WideFirst,
    /// All hidden layers >= N wide (activation assumption 2 only): descent.
    AllWideDescend,
    /// All hidden layers >= 2N wide: connection.
    AllWideConnect,
}

#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub clauses: Vec<Clause>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| !c.passed)
    }

    /// Error carrying the first failing clause, if any.
    pub fn into_result(self) -> Result<HypothesisReport> {
        match self.first_failure() {
            None => Ok(self),
            Some(c) => Err(Error::HypothesisFailed {
                clause: c.name.clone(),
                detail: if c.detail.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", c.detail)
                },
            }),
        }
    }
}

fn strict_chain(widths: &[usize], from: usize, to: usize) -> bool {
    (from..to).all(|i| widths[i] > widths[i + 1])
}

/// Checks each clause of the chosen theorem; never errors, the report carries
/// per-clause verdicts with the first failing clause named.
pub fn validate_hypotheses(spec: &NetworkSpec, data: &Dataset, theorem: Theorem) -> HypothesisReport {
    let l = spec.num_layers();
    let n = data.num_samples();
    let w = spec.widths();
    let mut clauses = Vec::new();
    let mut clause = |name: &str, passed: bool, detail: String| {
        clauses.push(Clause {
            name: name.to_string(),
            passed,
            detail,
        });
    };
    let a1 = spec.activation.satisfies_a1();
    let a2 = spec.activation.satisfies_a2();
    let a1_detail = format!("activation {}", spec.activation.kind_name());
    match theorem {
        Theorem::LinData => {
            clause("L >= 2", l >= 2, format!("L = {l}"));
            clause("activation satisfies Assumption 1", a1, a1_detail);
            let rank_x = linalg::numerical_rank(data.x(), linalg::DEFAULT_RANK_TOL)
                .map(|r| r.rank)
                .unwrap_or(0);
            clause(
                "rank(X) = N",
                rank_x == n,
                format!("rank(X) = {rank_x}, N = {n}"),
            );
            clause(
                "n_1 > ... > n_L",
                strict_chain(w, 1, l),
                format!("widths {:?}", &w[1..]),
            );
        }
        Theorem::NoBadValley { k } => {
            clause("1 <= k <= L-1", (1..l).contains(&k), format!("k = {k}, L = {l}"));
            clause("activation satisfies Assumption 1", a1, a1_detail);
            clause(
                "activation satisfies Assumption 2",
                a2,
                format!("activation {}", spec.activation.kind_name()),
            );
            if (1..l).contains(&k) {
                clause("n_k >= N", w[k] >= n, format!("n_{k} = {}, N = {n}", w[k]));
                clause(
                    "n_{k+1} > ... > n_L",
                    strict_chain(w, k + 1, l),
                    format!("widths {:?}", &w[k + 1..]),
                );
            }
        }
        Theorem::WideFirst => {
            clause("activation satisfies Assumption 1", a1, a1_detail);
            clause(
                "activation satisfies Assumption 2",
                a2,
                format!("activation {}", spec.activation.kind_name()),
            );
            clause(
                "n_1 >= 2N",
                w[1] >= 2 * n,
                format!("n_1 = {}, N = {n}", w[1]),
            );
            clause(
                "n_2 > ... > n_L",
                strict_chain(w, 2, l),
                format!("widths {:?}", &w[2..]),
            );
        }
        Theorem::AllWideDescend | Theorem::AllWideConnect => {
            clause(
                "activation satisfies Assumption 2",
                a2,
                format!("activation {}", spec.activation.kind_name()),
            );
            let k_min = w[1..l].iter().copied().min().unwrap_or(0);
            if matches!(theorem, Theorem::AllWideDescend) {
                clause("K >= N", k_min >= n, format!("K = {k_min}, N = {n}"));
            } else {
                clause("K >= 2N", k_min >= 2 * n, format!("K = {k_min}, N = {n}"));
            }
        }
    }
    HypothesisReport { clauses }
}
