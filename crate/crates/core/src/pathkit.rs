//! Representation, composition, sampling, and certification of continuous
//! parameter paths.
//!
//! A path is an ordered list of closed-form segments, each a map from
//! lambda in [0, 1] to a full parameter point, with a per-segment loss
//! contract. Certification samples the loss along every segment and checks
//! the contracts numerically; it records failures instead of throwing.

use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::constructions::canonical::solve_first_layer;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::network::{self, mat_serde, Dataset, Layer, NetworkSpec, Params};

/// Maximum endpoint gap tolerated between chained segments (max-norm).
pub const CHAIN_TOL: f64 = 1e-10;

/// Loss contract a segment (or whole path) promises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contract {
    LossConstant,
    LossNonincreasing,
    LossBounded { bound: f64 },
}

impl Contract {
    /// Contract algebra for concatenation.
    pub fn merge(self, other: Contract) -> Contract {
        use Contract::*;
        match (self, other) {
            (LossConstant, LossConstant) => LossConstant,
            (LossConstant | LossNonincreasing, LossConstant | LossNonincreasing) => {
                LossNonincreasing
            }
            (a, b) => {
                let bound = |c: Contract| match c {
                    LossBounded { bound } => bound,
                    _ => f64::NEG_INFINITY,
                };
                LossBounded {
                    bound: bound(a).max(bound(b)),
                }
            }
        }
    }
}

/// Closed-form matrix curve on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixCurve {
    Constant {
        #[serde(with = "mat_serde")]
        value: Matrix,
    },
    Line {
        #[serde(with = "mat_serde")]
        from: Matrix,
        #[serde(with = "mat_serde")]
        to: Matrix,
    },
    /// Two straight legs with the waypoint at lambda = 1/2.
    TwoPiece {
        #[serde(with = "mat_serde")]
        from: Matrix,
        #[serde(with = "mat_serde")]
        mid: Matrix,
        #[serde(with = "mat_serde")]
        to: Matrix,
    },
}

impl MatrixCurve {
    pub fn at(&self, lambda: f64) -> Matrix {
        match self {
            MatrixCurve::Constant { value } => value.clone(),
            MatrixCurve::Line { from, to } => linalg::lerp(from, to, lambda),
            MatrixCurve::TwoPiece { from, mid, to } => {
                if lambda <= 0.5 {
                    linalg::lerp(from, mid, lambda * 2.0)
                } else {
                    linalg::lerp(mid, to, lambda * 2.0 - 1.0)
                }
            }
        }
    }

    pub fn reversed(&self) -> MatrixCurve {
        match self {
            MatrixCurve::Constant { value } => MatrixCurve::Constant {
                value: value.clone(),
            },
            MatrixCurve::Line { from, to } => MatrixCurve::Line {
                from: to.clone(),
                to: from.clone(),
            },
            MatrixCurve::TwoPiece { from, mid, to } => MatrixCurve::TwoPiece {
                from: to.clone(),
                mid: mid.clone(),
                to: from.clone(),
            },
        }
    }

    fn is_two_piece(&self) -> bool {
        matches!(self, MatrixCurve::TwoPiece { .. })
    }
}

/// Weight and bias curves of one moving layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub weight: MatrixCurve,
    pub bias: MatrixCurve,
}

impl LayerCurve {
    pub fn constant(layer: &Layer) -> LayerCurve {
        LayerCurve {
            weight: MatrixCurve::Constant {
                value: layer.w.clone(),
            },
            bias: MatrixCurve::Constant {
                value: layer.b.clone(),
            },
        }
    }

    pub fn at(&self, lambda: f64) -> Layer {
        Layer::new(self.weight.at(lambda), self.bias.at(lambda))
    }

    fn reversed(&self) -> LayerCurve {
        LayerCurve {
            weight: self.weight.reversed(),
            bias: self.bias.reversed(),
        }
    }
}

/// Closed-form data of one segment.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentForm {
    /// Constant point.
    Frozen { point: Params },
    /// Straight line in full parameter space.
    LinearInParams { start: Params, end: Params },
    /// The layer right above `prefix` is re-solved at every lambda so the
    /// output of the deepest moving layer equals the affine target
    /// A(lambda) = (1 - lambda) target_start + lambda target_end, while
    /// `upper` layers follow their own closed-form curves and `tail` layers
    /// stay fixed.
    HRetarget {
        /// Subnet input: X itself or the (fixed) output below the solved layer.
        input: Matrix,
        activation: Activation,
        /// Fixed layers below the solved one.
        prefix: Vec<Layer>,
        /// Curves for the layers between the solved layer and the target layer.
        upper: Vec<LayerCurve>,
        target_start: Matrix,
        target_end: Matrix,
        /// Fixed layers above the target layer.
        tail: Vec<Layer>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    pub form: SegmentForm,
    pub contract: Contract,
}

impl PathSegment {
    pub fn frozen(point: Params) -> PathSegment {
        PathSegment {
            form: SegmentForm::Frozen { point },
            contract: Contract::LossConstant,
        }
    }

    pub fn linear(start: Params, end: Params, contract: Contract) -> PathSegment {
        PathSegment {
            form: SegmentForm::LinearInParams { start, end },
            contract,
        }
    }

    pub fn kind(&self) -> &'static str {
        match &self.form {
            SegmentForm::Frozen { .. } => "frozen",
            SegmentForm::LinearInParams { .. } => "linear_in_params",
            SegmentForm::HRetarget { upper, .. } => {
                if upper.iter().any(|c| c.weight.is_two_piece() || c.bias.is_two_piece()) {
                    "matrix_two_piece_detour"
                } else {
                    "first_layer_h_retarget"
                }
            }
        }
    }

    pub fn eval(&self, lambda: f64) -> Result<Params> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        match &self.form {
            SegmentForm::Frozen { point } => Ok(point.clone()),
            SegmentForm::LinearInParams { start, end } => Ok(start.lerp(end, lambda)),
            SegmentForm::HRetarget {
                input,
                activation,
                prefix,
                upper,
                target_start,
                target_end,
                tail,
            } => {
                let target = linalg::lerp(target_start, target_end, lambda);
                let upper_now: Vec<Layer> = upper.iter().map(|c| c.at(lambda)).collect();
                let target_is_output = tail.is_empty();
                let (w, b) =
                    solve_first_layer(input, activation, &upper_now, &target, target_is_output)?;
                let mut layers = Vec::with_capacity(prefix.len() + 1 + upper.len() + tail.len());
                layers.extend(prefix.iter().cloned());
                layers.push(Layer::new(w, b));
                layers.extend(upper_now);
                layers.extend(tail.iter().cloned());
                Ok(Params { layers })
            }
        }
    }

    pub fn start(&self) -> Result<Params> {
        self.eval(0.0)
    }

    pub fn end(&self) -> Result<Params> {
        self.eval(1.0)
    }

    pub fn reversed(&self) -> Result<PathSegment> {
        let contract = match self.contract {
            Contract::LossConstant => Contract::LossConstant,
            Contract::LossBounded { bound } => Contract::LossBounded { bound },
            Contract::LossNonincreasing => {
                return Err(Error::InvalidInput(
                    "cannot reverse a loss_nonincreasing segment".into(),
                ))
            }
        };
        let form = match &self.form {
            SegmentForm::Frozen { point } => SegmentForm::Frozen {
                point: point.clone(),
            },
            SegmentForm::LinearInParams { start, end } => SegmentForm::LinearInParams {
                start: end.clone(),
                end: start.clone(),
            },
            SegmentForm::HRetarget {
                input,
                activation,
                prefix,
                upper,
                target_start,
                target_end,
                tail,
            } => SegmentForm::HRetarget {
                input: input.clone(),
                activation: *activation,
                prefix: prefix.clone(),
                upper: upper.iter().map(|c| c.reversed()).collect(),
                target_start: target_end.clone(),
                target_end: target_start.clone(),
                tail: tail.clone(),
            },
        };
        Ok(PathSegment { form, contract })
    }
}

/// Machine-checkable note attached to a path by its construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub description: String,
    pub passed: bool,
}

/// An ordered chain of segments with a global loss contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPath {
    segments: Vec<PathSegment>,
    pub contract: Contract,
    pub checks: Vec<PathCheck>,
}

impl ParamPath {
    /// Builds a path, validating chain continuity between segment endpoints.
    pub fn new(segments: Vec<PathSegment>, contract: Contract) -> Result<ParamPath> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("a path needs at least one segment".into()));
        }
        for pair in segments.windows(2) {
            let gap = pair[0].end()?.max_norm_diff(&pair[1].start()?);
            if !(gap <= CHAIN_TOL) {
                return Err(Error::Discontinuity {
                    gap,
                    tol: CHAIN_TOL,
                });
            }
        }
        Ok(ParamPath {
            segments,
            contract,
            checks: Vec::new(),
        })
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn with_checks(mut self, checks: Vec<PathCheck>) -> ParamPath {
        self.checks = checks;
        self
    }

    pub fn start(&self) -> Result<Params> {
        self.segments[0].start()
    }

    pub fn end(&self) -> Result<Params> {
        self.segments.last().unwrap().end()
    }

    /// Maps global t in [0, 1] to (segment, local lambda) by uniform
    /// per-segment allocation and evaluates the closed form.
    pub fn evaluate(&self, t: f64) -> Result<Params> {
        let (i, lambda) = self.locate(t)?;
        self.segments[i].eval(lambda)
    }

    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "global t must lie in [0, 1], got {t}"
            )));
        }
        let s = self.segments.len() as f64;
        let scaled = t * s;
        let i = (scaled.floor() as usize).min(self.segments.len() - 1);
        Ok((i, scaled - i as f64))
    }

    /// Concatenate two paths; endpoints must agree within CHAIN_TOL.
    pub fn concat(mut self, other: ParamPath) -> Result<ParamPath> {
        let gap = self.end()?.max_norm_diff(&other.start()?);
        if !(gap <= CHAIN_TOL) {
            return Err(Error::Discontinuity {
                gap,
                tol: CHAIN_TOL,
            });
        }
        let contract = self.contract.merge(other.contract);
        self.segments.extend(other.segments);
        self.checks.extend(other.checks);
        self.contract = contract;
        Ok(self)
    }

    /// Traverse backwards. Only constant and bounded contracts reverse.
    pub fn reversed(&self) -> Result<ParamPath> {
        let contract = match self.contract {
            Contract::LossConstant => Contract::LossConstant,
            Contract::LossBounded { bound } => Contract::LossBounded { bound },
            Contract::LossNonincreasing => {
                return Err(Error::InvalidInput(
                    "cannot reverse a loss_nonincreasing path".into(),
                ))
            }
        };
        let mut segments = Vec::with_capacity(self.segments.len());
        for seg in self.segments.iter().rev() {
            segments.push(seg.reversed()?);
        }
        Ok(ParamPath {
            segments,
            contract,
            checks: self.checks.clone(),
        })
    }
}

/// Sampled evidence that a path met its contracts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathCertificate {
    pub samples_per_segment: usize,
    pub tol: f64,
    pub max_loss_observed: f64,
    /// Worst |phi(lambda) - phi(0)| over loss_constant segments, relative to
    /// 1 + |phi(0)|.
    pub max_constant_drift: f64,
    /// Worst positive loss increase between consecutive ordered samples on
    /// loss_nonincreasing segments, relative.
    pub worst_monotonicity_violation: f64,
    /// Worst positive excess over a declared bound, relative.
    pub worst_bound_excess: f64,
    pub rank_checks: Vec<PathCheck>,
    pub passed: bool,
}

fn chebyshev_lobatto(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Sample each segment at Chebyshev-spaced points plus endpoints, evaluate the
/// loss, and check every contract. Failures are recorded in the certificate.
pub fn certify(
    path: &ParamPath,
    spec: &NetworkSpec,
    data: &Dataset,
    samples_per_segment: usize,
    tol: f64,
) -> Result<PathCertificate> {
    if samples_per_segment < 16 {
        return Err(Error::InvalidInput(format!(
            "samples_per_segment must be >= 16, got {samples_per_segment}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let lambdas = chebyshev_lobatto(samples_per_segment);
    let mut rank_checks = path.checks.clone();
    let mut max_loss = f64::NEG_INFINITY;
    let mut max_drift = 0.0_f64;
    let mut worst_monotone = 0.0_f64;
    let mut worst_bound = 0.0_f64;
    let mut eval_ok = true;
    let mut all_losses: Vec<f64> = Vec::new();

    for (i, seg) in path.segments().iter().enumerate() {
        let mut losses = Vec::with_capacity(lambdas.len());
        let mut failed = false;
        for &l in &lambdas {
            let phi = seg
                .eval(l)
                .and_then(|p| network::loss(spec, &p, data))
                .map(|v| v.value);
            match phi {
                Ok(v) => losses.push(v),
                Err(e) => {
                    rank_checks.push(PathCheck {
                        description: format!("segment {i} evaluation at lambda {l:.4}: {e}"),
                        passed: false,
                    });
                    failed = true;
                    eval_ok = false;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        for &v in &losses {
            max_loss = max_loss.max(v);
        }
        match seg.contract {
            Contract::LossConstant => {
                let base = losses[0];
                for &v in &losses {
                    max_drift = max_drift.max((v - base).abs() / (1.0 + base.abs()));
                }
            }
            Contract::LossNonincreasing => {
                for w in losses.windows(2) {
                    let rise = (w[1] - w[0]) / (1.0 + w[0].abs());
                    worst_monotone = worst_monotone.max(rise);
                }
            }
            Contract::LossBounded { bound } => {
                for &v in &losses {
                    worst_bound = worst_bound.max((v - bound) / (1.0 + bound.abs()));
                }
            }
        }
        all_losses.extend_from_slice(&losses);
    }

    // Global contract across the whole ordered sample sequence.
    if eval_ok && !all_losses.is_empty() {
        match path.contract {
            Contract::LossConstant => {
                let base = all_losses[0];
                for &v in &all_losses {
                    max_drift = max_drift.max((v - base).abs() / (1.0 + base.abs()));
                }
            }
            Contract::LossNonincreasing => {
                for w in all_losses.windows(2) {
                    let rise = (w[1] - w[0]) / (1.0 + w[0].abs());
                    worst_monotone = worst_monotone.max(rise);
                }
            }
            Contract::LossBounded { bound } => {
                for &v in &all_losses {
                    worst_bound = worst_bound.max((v - bound) / (1.0 + bound.abs()));
                }
            }
        }
    }

    // Re-assert chain continuity.
    let mut worst_gap = 0.0_f64;
    for pair in path.segments().windows(2) {
        if let (Ok(a), Ok(b)) = (pair[0].end(), pair[1].start()) {
            worst_gap = worst_gap.max(a.max_norm_diff(&b));
        }
    }
    rank_checks.push(PathCheck {
        description: format!("chain continuity: worst endpoint gap {worst_gap:.3e}"),
        passed: worst_gap <= CHAIN_TOL,
    });

    let passed = eval_ok
        && max_drift <= tol
        && worst_monotone <= tol
        && worst_bound <= tol
        && rank_checks.iter().all(|c| c.passed);
    Ok(PathCertificate {
        samples_per_segment,
        tol,
        max_loss_observed: if max_loss.is_finite() { max_loss } else { f64::NAN },
        max_constant_drift: max_drift,
        worst_monotonicity_violation: worst_monotone,
        worst_bound_excess: worst_bound,
        rank_checks,
        passed,
    })
}

/// One row of a loss trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub loss: f64,
    pub segment: usize,
    pub kind: &'static str,
}

/// Loss trace at `num_points` uniform global positions.
pub fn export_trace(
    path: &ParamPath,
    spec: &NetworkSpec,
    data: &Dataset,
    num_points: usize,
) -> Result<Vec<TraceRow>> {
    if num_points < 2 {
        return Err(Error::InvalidInput("num_points must be >= 2".into()));
    }
    let mut rows = Vec::with_capacity(num_points);
    for j in 0..num_points {
        let t = j as f64 / (num_points - 1) as f64;
        let (seg, lambda) = path.locate(t)?;
        let params = path.segments()[seg].eval(lambda)?;
        let loss = network::loss(spec, &params, data)?.value;
        rows.push(TraceRow {
            t,
            loss,
            segment: seg,
            kind: path.segments()[seg].kind(),
        });
    }
    Ok(rows)
}

/// CSV rendering with header `t,loss,segment,kind`.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("t,loss,segment,kind\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.t, r.loss, r.segment, r.kind));
    }
    out
}

// ---------------------------------------------------------------------------
// Manifest serialization: {"contract": ..., "segments": [{kind, contract,
// payload}, ...], "checks": [...]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FrozenPayload {
    point: Params,
}

#[derive(Serialize, Deserialize)]
struct LinearPayload {
    start: Params,
    end: Params,
}

#[derive(Serialize, Deserialize)]
struct HRetargetPayload {
    #[serde(with = "mat_serde")]
    input: Matrix,
    activation: Activation,
    prefix: Vec<Layer>,
    upper: Vec<LayerCurve>,
    #[serde(with = "mat_serde")]
    target_start: Matrix,
    #[serde(with = "mat_serde")]
    target_end: Matrix,
    tail: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct SegmentJson {
    kind: String,
    contract: Contract,
    payload: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct PathJson {
    contract: Contract,
    segments: Vec<SegmentJson>,
    checks: Vec<PathCheck>,
}

impl Serialize for ParamPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let mut segments = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            let payload = match &seg.form {
                SegmentForm::Frozen { point } => serde_json::to_value(FrozenPayload {
                    point: point.clone(),
                }),
                SegmentForm::LinearInParams { start, end } => {
                    serde_json::to_value(LinearPayload {
                        start: start.clone(),
                        end: end.clone(),
                    })
                }
                SegmentForm::HRetarget {
                    input,
                    activation,
                    prefix,
                    upper,
                    target_start,
                    target_end,
                    tail,
                } => serde_json::to_value(HRetargetPayload {
                    input: input.clone(),
                    activation: *activation,
                    prefix: prefix.clone(),
                    upper: upper.clone(),
                    target_start: target_start.clone(),
                    target_end: target_end.clone(),
                    tail: tail.clone(),
                }),
            }
            .map_err(S::Error::custom)?;
            segments.push(SegmentJson {
                kind: seg.kind().to_string(),
                contract: seg.contract,
                payload,
            });
        }
        PathJson {
            contract: self.contract,
            segments,
            checks: self.checks.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = PathJson::deserialize(d)?;
        let mut segments = Vec::with_capacity(raw.segments.len());
        for sj in raw.segments {
            let form = match sj.kind.as_str() {
                "frozen" => {
                    let p: FrozenPayload =
                        serde_json::from_value(sj.payload).map_err(D::Error::custom)?;
                    SegmentForm::Frozen { point: p.point }
                }
                "linear_in_params" => {
                    let p: LinearPayload =
                        serde_json::from_value(sj.payload).map_err(D::Error::custom)?;
                    SegmentForm::LinearInParams {
                        start: p.start,
                        end: p.end,
                    }
                }
                "first_layer_h_retarget" | "matrix_two_piece_detour" => {
                    let p: HRetargetPayload =
                        serde_json::from_value(sj.payload).map_err(D::Error::custom)?;
                    SegmentForm::HRetarget {
                        input: p.input,
                        activation: p.activation,
                        prefix: p.prefix,
                        upper: p.upper,
                        target_start: p.target_start,
                        target_end: p.target_end,
                        tail: p.tail,
                    }
                }
                other => {
                    return Err(D::Error::custom(format!("unknown segment kind {other}")))
                }
            };
            segments.push(PathSegment {
                form,
                contract: sj.contract,
            });
        }
        ParamPath::new(segments, raw.contract)
            .map(|p| p.with_checks(raw.checks))
            .map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::network::{LossKind, NetworkSpec};

    fn leaky_spec(widths: &[usize]) -> NetworkSpec {
        NetworkSpec::new(
            widths.to_vec(),
            Activation::leaky_relu(0.01).unwrap(),
            LossKind::Square,
        )
        .unwrap()
    }

    fn seeded(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = linalg::rng_from(seed, 0xD0);
        Dataset::new(
            linalg::random_normal_matrix(n, d, &mut rng),
            linalg::random_normal_matrix(n, m, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn frozen_segment_is_constant() {
        let spec = leaky_spec(&[2, 3, 2]);
        let p = Params::random_init(&spec, 1);
        let path = ParamPath::new(vec![PathSegment::frozen(p.clone())], Contract::LossConstant)
            .unwrap();
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(path.evaluate(t).unwrap(), p);
        }
    }

    #[test]
    fn two_equal_linear_segments_hit_waypoint_at_half() {
        let spec = leaky_spec(&[2, 3, 2]);
        let a = Params::random_init(&spec, 1);
        let b = Params::random_init(&spec, 2);
        let c = Params::random_init(&spec, 3);
        let path = ParamPath::new(
            vec![
                PathSegment::linear(a.clone(), b.clone(), Contract::LossBounded { bound: 1e9 }),
                PathSegment::linear(b.clone(), c.clone(), Contract::LossBounded { bound: 1e9 }),
            ],
            Contract::LossBounded { bound: 1e9 },
        )
        .unwrap();
        assert!(path.evaluate(0.5).unwrap().max_norm_diff(&b) < 1e-12);
        assert_eq!(path.evaluate(0.0).unwrap(), a);
        assert_eq!(path.evaluate(1.0).unwrap(), c);
    }

    #[test]
    fn concat_rejects_gap_and_reports_it() {
        let spec = leaky_spec(&[2, 3, 2]);
        let a = Params::random_init(&spec, 1);
        let mut b = a.clone();
        b.layers[0].w[(0, 0)] += 0.1;
        let p1 = ParamPath::new(vec![PathSegment::frozen(a)], Contract::LossConstant).unwrap();
        let p2 = ParamPath::new(vec![PathSegment::frozen(b)], Contract::LossConstant).unwrap();
        match p1.concat(p2) {
            Err(Error::Discontinuity { gap, .. }) => {
                assert!((gap - 0.1).abs() < 1e-12);
            }
            other => panic!("expected discontinuity error, got {other:?}"),
        }
    }

    #[test]
    fn concat_contract_algebra() {
        use Contract::*;
        assert_eq!(LossConstant.merge(LossConstant), LossConstant);
        assert_eq!(LossConstant.merge(LossNonincreasing), LossNonincreasing);
        assert_eq!(
            LossNonincreasing.merge(LossBounded { bound: 2.0 }),
            LossBounded { bound: 2.0 }
        );
        assert_eq!(
            LossBounded { bound: 1.0 }.merge(LossBounded { bound: 3.0 }),
            LossBounded { bound: 3.0 }
        );
    }

    #[test]
    fn concat_of_path_and_its_reverse_closes_the_loop() {
        let spec = leaky_spec(&[2, 3, 2]);
        let a = Params::random_init(&spec, 5);
        let b = Params::random_init(&spec, 6);
        let p = ParamPath::new(
            vec![PathSegment::linear(
                a.clone(),
                b,
                Contract::LossBounded { bound: 1e9 },
            )],
            Contract::LossBounded { bound: 1e9 },
        )
        .unwrap();
        let loop_path = p.clone().concat(p.reversed().unwrap()).unwrap();
        assert_eq!(loop_path.start().unwrap(), a);
        assert_eq!(loop_path.end().unwrap(), a);
    }

    #[test]
    fn certify_frozen_has_zero_drift() {
        let spec = leaky_spec(&[2, 3, 2]);
        let data = seeded(3, 2, 2, 1);
        let p = Params::random_init(&spec, 1);
        let path =
            ParamPath::new(vec![PathSegment::frozen(p)], Contract::LossConstant).unwrap();
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed);
        assert_eq!(cert.max_constant_drift, 0.0);
    }

    #[test]
    fn certify_flags_corrupted_constant_segment() {
        let spec = leaky_spec(&[2, 3, 2]);
        let data = seeded(3, 2, 2, 1);
        let a = Params::random_init(&spec, 1);
        let mut b = a.clone();
        b.layers[1].w[(0, 0)] += 2.0; // loss visibly moves along this line
        let path = ParamPath::new(
            vec![PathSegment::linear(a, b, Contract::LossConstant)],
            Contract::LossConstant,
        )
        .unwrap();
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(!cert.passed);
        assert!(cert.max_constant_drift > 1e-6);
    }

    #[test]
    fn trace_row_count_and_flatness() {
        let spec = leaky_spec(&[2, 3, 2]);
        let data = seeded(3, 2, 2, 1);
        let p = Params::random_init(&spec, 1);
        let path =
            ParamPath::new(vec![PathSegment::frozen(p)], Contract::LossConstant).unwrap();
        let rows = export_trace(&path, &spec, &data, 17).unwrap();
        assert_eq!(rows.len(), 17);
        let min = rows.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r.loss).fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min <= 1e-12);
        let csv = trace_to_csv(&rows);
        assert!(csv.starts_with("t,loss,segment,kind\n"));
        assert_eq!(csv.lines().count(), 18);
    }

    #[test]
    fn manifest_roundtrip() {
        let spec = leaky_spec(&[2, 3, 2]);
        let a = Params::random_init(&spec, 8);
        let b = Params::random_init(&spec, 9);
        let path = ParamPath::new(
            vec![PathSegment::linear(a, b, Contract::LossBounded { bound: 4.5 })],
            Contract::LossBounded { bound: 4.5 },
        )
        .unwrap()
        .with_checks(vec![PathCheck {
            description: "example".into(),
            passed: true,
        }]);
        let s = serde_json::to_string(&path).unwrap();
        let back: ParamPath = serde_json::from_str(&s).unwrap();
        assert_eq!(back, path);
        assert!(s.contains("\"kind\":\"linear_in_params\""));
    }
}
