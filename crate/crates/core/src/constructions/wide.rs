//! Wide-layer machinery: generic-position nudges, bias moves that raise the
//! feature rank one column at a time, full layer-output rank repair, and the
//! three-stage equalization that copies one layer's weights onto a target
//! while the downstream product stays fixed.

use nalgebra::{DMatrix, DVector};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, RankReport};
use crate::network::{self, Dataset, NetworkSpec, Params};
use crate::pathkit::{Contract, ParamPath, PathCheck, PathSegment};

use super::rewire::rewire_redundant_columns;
use super::PathBuilder;

const RANK_TOL: f64 = linalg::DEFAULT_RANK_TOL;
/// Smallest normalized singular value an augmented column set must clear for
/// a bias candidate to count as a rank increase.
const BIAS_RANK_FLOOR: f64 = 1e-3;
const DISTINCT_REL: f64 = 1e-8;

fn ones(n: usize) -> Matrix {
    DMatrix::from_element(n, 1, 1.0)
}

fn has_distinct_entries(v: &DVector<f64>) -> bool {
    let scale = 1.0 + v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            if (v[i] - v[j]).abs() <= DISTINCT_REL * scale {
                return false;
            }
        }
    }
    true
}

fn has_distinct_rows(m: &Matrix) -> bool {
    let scale = 1.0
        + (0..m.nrows())
            .map(|i| m.row(i).norm())
            .fold(0.0_f64, f64::max);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.nrows() {
            if (m.row(i) - m.row(j)).norm() <= 1e-9 * scale {
                return false;
            }
        }
    }
    true
}

/// Point at a wide layer where the feature matrix reached full row rank.
#[derive(Debug, Clone)]
pub struct WideLayerWitness {
    pub layer: usize,
    pub rank_report: RankReport,
    pub params: Params,
}

/// Piecewise-linear curve over (W, b, V) given by waypoints.
#[derive(Debug, Clone)]
pub struct TripleCurve {
    pub waypoints: Vec<(Matrix, Matrix, Matrix)>,
}

impl TripleCurve {
    pub fn eval(&self, lambda: f64) -> (Matrix, Matrix, Matrix) {
        piecewise(&self.waypoints, lambda, |a, b, t| {
            (
                linalg::lerp(&a.0, &b.0, t),
                linalg::lerp(&a.1, &b.1, t),
                linalg::lerp(&a.2, &b.2, t),
            )
        })
    }

    pub fn end(&self) -> &(Matrix, Matrix, Matrix) {
        self.waypoints.last().unwrap()
    }

    pub fn is_frozen(&self) -> bool {
        self.waypoints.len() == 1
    }
}

/// Piecewise-linear curve over (W, V) given by waypoints.
#[derive(Debug, Clone)]
pub struct PairCurve {
    pub waypoints: Vec<(Matrix, Matrix)>,
}

impl PairCurve {
    pub fn eval(&self, lambda: f64) -> (Matrix, Matrix) {
        piecewise(&self.waypoints, lambda, |a, b, t| {
            (linalg::lerp(&a.0, &b.0, t), linalg::lerp(&a.1, &b.1, t))
        })
    }

    pub fn end(&self) -> &(Matrix, Matrix) {
        self.waypoints.last().unwrap()
    }
}

fn piecewise<T, F: Fn(&T, &T, f64) -> T>(waypoints: &[T], lambda: f64, lerp: F) -> T
where
    T: Clone,
{
    if waypoints.len() == 1 {
        return waypoints[0].clone();
    }
    let legs = waypoints.len() - 1;
    let scaled = lambda.clamp(0.0, 1.0) * legs as f64;
    let i = (scaled.floor() as usize).min(legs - 1);
    lerp(&waypoints[i], &waypoints[i + 1], scaled - i as f64)
}

/// Best bias for one column: candidates from the dyadic grid plus seeded
/// normal draws, scored by the smallest singular value of the normalized
/// accepted-plus-candidate column set. Returns the best candidate clearing
/// the rank floor.
fn search_bias(
    act: &Activation,
    accepted: &[DVector<f64>],
    pre_col: &DVector<f64>,
    budget: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(f64, f64)> {
    use rand::RngExt;
    let mut candidates: Vec<f64> = Vec::with_capacity(budget);
    'grid: for i in -4..=8 {
        let mag = 2.0_f64.powi(i);
        for beta in [mag, -mag] {
            if candidates.len() >= budget {
                break 'grid;
            }
            candidates.push(beta);
        }
    }
    while candidates.len() < budget {
        candidates.push(linalg::standard_normal(rng) * (1.0 + 2.0 * rng.random::<f64>()));
    }
    let n = pre_col.len();
    let mut best: Option<(f64, f64)> = None;
    for &beta in &candidates {
        let col = pre_col.map(|v| act.scalar(v + beta));
        let norm = col.norm();
        if norm == 0.0 || !col.iter().all(|v| v.is_finite()) {
            continue;
        }
        let mut m = DMatrix::zeros(n, accepted.len() + 1);
        for (j, a) in accepted.iter().enumerate() {
            m.set_column(j, a);
        }
        m.set_column(accepted.len(), &(col / norm));
        let (smin, _) = linalg::extreme_singular_values(&m);
        if best.is_none_or(|(_, s)| smin > s) {
            best = Some((beta, smin));
        }
    }
    match best {
        Some((beta, score)) if score > BIAS_RANK_FLOOR => Ok((beta, score)),
        _ => Err(Error::SearchFailure {
            achieved: accepted.len(),
            needed: accepted.len() + 1,
            budget,
        }),
    }
}

fn normalized(col: DVector<f64>) -> DVector<f64> {
    let n = col.norm();
    if n == 0.0 {
        col
    } else {
        col / n
    }
}

/// Lemma-style layer repair on raw matrices: rewire V off the deficient
/// feature columns, refresh the freed weight columns so pre-activations have
/// distinct entries, then move biases until the feature matrix has rank N.
/// The product Z = sigma(X W + 1 b^T) V is invariant along the whole curve.
pub fn make_layer_output_full_rank(
    x_in: &Matrix,
    act: &Activation,
    w: &Matrix,
    b: &Matrix,
    v: &Matrix,
    budget: usize,
    seed: u64,
) -> Result<TripleCurve> {
    linalg::ensure_finite(x_in, "repair input")?;
    linalg::ensure_finite(w, "repair W")?;
    linalg::ensure_finite(b, "repair b")?;
    linalg::ensure_finite(v, "repair V")?;
    if !act.satisfies_a2() {
        return Err(Error::UnsupportedActivation(format!(
            "{} can be rebuilt from its own shifts; rank repair needs Assumption 2",
            act.kind_name()
        )));
    }
    let n_samples = x_in.nrows();
    let width = w.ncols();
    if width < n_samples {
        return Err(Error::HypothesisFailed {
            clause: "n_k >= N".into(),
            detail: format!(" (width {width} < N = {n_samples})"),
        });
    }
    if !has_distinct_rows(x_in) {
        return Err(Error::Degenerate(
            "repair input must have pairwise distinct rows".into(),
        ));
    }
    if budget == 0 {
        return Err(Error::SearchFailure {
            achieved: 0,
            needed: n_samples,
            budget,
        });
    }

    let f0 = act.apply(&(x_in * w + ones(n_samples) * b.transpose()));
    let report = linalg::numerical_rank(&f0, RANK_TOL)?;
    if report.rank == n_samples {
        return Ok(TripleCurve {
            waypoints: vec![(w.clone(), b.clone(), v.clone())],
        });
    }

    let mut waypoints = vec![(w.clone(), b.clone(), v.clone())];
    let basis = linalg::independent_column_basis(&f0, RANK_TOL)?;
    let curve = rewire_redundant_columns(&f0, v, &basis, RANK_TOL)?;
    let v1 = curve.end();
    waypoints.push((w.clone(), b.clone(), v1.clone()));

    let needed = n_samples - report.rank;
    let chosen: Vec<usize> = curve.complement.iter().copied().take(needed).collect();

    // Refresh freed weight columns whose pre-activations collide.
    let mut rng = linalg::rng_from(seed, 0x51DE);
    let mut w1 = w.clone();
    let mut changed = false;
    for &j in &chosen {
        let mut pre = DVector::from_fn(n_samples, |i, _| (x_in * w1.column(j))[(i, 0)]);
        let mut tries = 0;
        while !has_distinct_entries(&pre) {
            tries += 1;
            if tries > 64 {
                return Err(Error::Degenerate(format!(
                    "could not draw a weight column with distinct pre-activations (column {j})"
                )));
            }
            let fresh = DVector::from_fn(w1.nrows(), |_, _| linalg::standard_normal(&mut rng));
            w1.set_column(j, &fresh);
            pre = DVector::from_fn(n_samples, |i, _| (x_in * w1.column(j))[(i, 0)]);
            changed = true;
        }
    }
    if changed {
        waypoints.push((w1.clone(), b.clone(), v1.clone()));
    }

    // Bias moves, one rank increment per chosen column.
    let mut accepted: Vec<DVector<f64>> = basis
        .iter()
        .map(|&j| normalized(f0.column(j).clone_owned()))
        .collect();
    let mut b1 = b.clone();
    for &j in &chosen {
        let pre = DVector::from_fn(n_samples, |i, _| (x_in * w1.column(j))[(i, 0)]);
        let (beta, _score) = search_bias(act, &accepted, &pre, budget, &mut rng)?;
        b1[(j, 0)] = beta;
        waypoints.push((w1.clone(), b1.clone(), v1.clone()));
        accepted.push(normalized(pre.map(|x| act.scalar(x + beta))));
    }

    let f_end = act.apply(&(x_in * &w1 + ones(n_samples) * b1.transpose()));
    let final_rank = linalg::numerical_rank(&f_end, RANK_TOL)?.rank;
    if final_rank != n_samples {
        return Err(Error::Internal(format!(
            "layer repair ended at rank {final_rank} instead of {n_samples}"
        )));
    }
    Ok(TripleCurve { waypoints })
}

/// Three-stage copy that ends with W equal to `w_prime` exactly while the
/// product sigma(X W) V never moves. Requires width >= 2N and both feature
/// matrices full row rank.
pub fn equalize_layer(
    x_in: &Matrix,
    act: &Activation,
    w: &Matrix,
    v: &Matrix,
    w_prime: &Matrix,
    tol: f64,
) -> Result<PairCurve> {
    linalg::ensure_finite(x_in, "equalize input")?;
    linalg::ensure_finite(w, "equalize W")?;
    linalg::ensure_finite(v, "equalize V")?;
    linalg::ensure_finite(w_prime, "equalize W'")?;
    if w.shape() != w_prime.shape() {
        return Err(Error::InvalidInput(format!(
            "W and W' shapes differ: {:?} vs {:?}",
            w.shape(),
            w_prime.shape()
        )));
    }
    let n_samples = x_in.nrows();
    let width = w.ncols();
    if width < 2 * n_samples {
        return Err(Error::HypothesisFailed {
            clause: "n >= 2N".into(),
            detail: format!(" (width {width}, N = {n_samples})"),
        });
    }
    let f = act.apply(&(x_in * w));
    let f_prime = act.apply(&(x_in * w_prime));
    for (name, mat) in [("sigma(X W)", &f), ("sigma(X W')", &f_prime)] {
        let rank = linalg::numerical_rank(mat, tol)?.rank;
        if rank != n_samples {
            return Err(Error::HypothesisFailed {
                clause: "rank(sigma(X W)) = N".into(),
                detail: format!(" ({name} has rank {rank}, N = {n_samples})"),
            });
        }
    }
    if w == w_prime {
        return Ok(PairCurve {
            waypoints: vec![(w.clone(), v.clone())],
        });
    }

    let set_i = linalg::independent_column_basis(&f, tol)?;
    let set_i_prime = linalg::independent_column_basis(&f_prime, tol)?;
    let in_i = |j: usize| set_i.binary_search(&j).is_ok();
    let comp_i: Vec<usize> = (0..width).filter(|&j| !in_i(j)).collect();
    // K: target-basis columns already sitting in the complement; J: the rest.
    let k_set: Vec<usize> = set_i_prime.iter().copied().filter(|&j| !in_i(j)).collect();
    let j_set: Vec<usize> = set_i_prime.iter().copied().filter(|&j| in_i(j)).collect();
    let spare: Vec<usize> = comp_i
        .iter()
        .copied()
        .filter(|j| !k_set.contains(j))
        .take(j_set.len())
        .collect();
    if spare.len() < j_set.len() {
        return Err(Error::Internal("equalization ran out of spare columns".into()));
    }

    let mut waypoints = vec![(w.clone(), v.clone())];

    // Stage A: decouple the product from the complement of I, then copy the
    // target basis columns into that complement.
    let v1 = rewire_redundant_columns(&f, v, &set_i, tol)?.end();
    waypoints.push((w.clone(), v1.clone()));
    let mut w1 = w.clone();
    for &j in &k_set {
        w1.set_column(j, &w_prime.column(j));
    }
    for (&slot, &j) in spare.iter().zip(&j_set) {
        w1.set_column(slot, &w_prime.column(j));
    }
    waypoints.push((w1.clone(), v1.clone()));

    // Stage B: decouple from I, then copy the remaining target-basis columns
    // into their own positions.
    let f1 = act.apply(&(x_in * &w1));
    let v2 = rewire_redundant_columns(&f1, &v1, &comp_i, tol)?.end();
    waypoints.push((w1.clone(), v2.clone()));
    let mut w2 = w1.clone();
    for &j in &j_set {
        w2.set_column(j, &w_prime.column(j));
    }
    waypoints.push((w2.clone(), v2.clone()));

    // Stage C: decouple from the complement of I', then copy everything else.
    let f2 = act.apply(&(x_in * &w2));
    let v3 = rewire_redundant_columns(&f2, &v2, &set_i_prime, tol)?.end();
    waypoints.push((w2.clone(), v3.clone()));
    let mut w3 = w2.clone();
    for j in 0..width {
        if set_i_prime.binary_search(&j).is_err() {
            w3.set_column(j, &w_prime.column(j));
        }
    }
    debug_assert_eq!(&w3, w_prime);
    waypoints.push((w_prime.clone(), v3));

    Ok(PairCurve { waypoints })
}

fn v_pre_activation(
    spec: &NetworkSpec,
    params: &Params,
    data: &Dataset,
    k: usize,
) -> Result<Matrix> {
    let f_prev = network::forward_to_layer(spec, params, data, k - 1)?;
    Ok(&f_prev * &params.layers[k - 1].w)
}

/// Loss-constant path that raises rank(F_k) to N by rewiring the next layer
/// off the deficient columns and then moving one bias per missing rank.
pub fn bias_rank_boost(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    k: usize,
    search_budget: usize,
    seed: u64,
) -> Result<(ParamPath, WideLayerWitness)> {
    params.validate(spec)?;
    let l_total = spec.num_layers();
    if !(1..l_total).contains(&k) {
        return Err(Error::InvalidInput(format!(
            "wide layer index must lie in [1, L-1], got {k}"
        )));
    }
    if !spec.activation.satisfies_a2() {
        return Err(Error::UnsupportedActivation(format!(
            "{} fails Assumption 2",
            spec.activation.kind_name()
        )));
    }
    let n = data.num_samples();
    if spec.width(k) < n {
        return Err(Error::HypothesisFailed {
            clause: "n_k >= N".into(),
            detail: format!(" (n_{k} = {}, N = {n})", spec.width(k)),
        });
    }
    if search_budget == 0 {
        return Err(Error::SearchFailure {
            achieved: 0,
            needed: n,
            budget: 0,
        });
    }

    let f_k = network::forward_to_layer(spec, params, data, k)?;
    let report = linalg::numerical_rank(&f_k, RANK_TOL)?;
    let mut builder = PathBuilder::new(params.clone());
    if report.rank == n {
        builder.check(format!("rank(F_{k}) = N = {n} already"), true);
        let path = builder.finish(Contract::LossConstant)?;
        return Ok((
            path,
            WideLayerWitness {
                layer: k,
                rank_report: report,
                params: params.clone(),
            },
        ));
    }

    let v_pre = v_pre_activation(spec, params, data, k)?;
    for j in 0..v_pre.ncols() {
        if !has_distinct_entries(&v_pre.column(j).clone_owned()) {
            return Err(Error::Degenerate(format!(
                "pre-activation column {j} at layer {k} has tied entries; \
                 apply distinct_rows_nudge first"
            )));
        }
    }

    // Rewire the next layer so the loss ignores the deficient columns.
    let basis = linalg::independent_column_basis(&f_k, RANK_TOL)?;
    let curve = rewire_redundant_columns(&f_k, &params.layers[k].w, &basis, RANK_TOL)?;
    let mut next = builder.current().clone();
    next.layers[k].w = curve.end();
    builder.push_linear_to(next, Contract::LossConstant)?;

    let needed = n - report.rank;
    let chosen: Vec<usize> = curve.complement.iter().copied().take(needed).collect();
    let mut accepted: Vec<DVector<f64>> = basis
        .iter()
        .map(|&j| normalized(f_k.column(j).clone_owned()))
        .collect();
    let mut rng = linalg::rng_from(seed, 0xB1A5);
    for &j in &chosen {
        let pre = v_pre.column(j).clone_owned();
        let (beta, score) = search_bias(&spec.activation, &accepted, &pre, search_budget, &mut rng)?;
        let mut next = builder.current().clone();
        next.layers[k - 1].b[(j, 0)] = beta;
        builder.push_linear_to(next, Contract::LossConstant)?;
        accepted.push(normalized(pre.map(|x| spec.activation.scalar(x + beta))));
        builder.check(
            format!("bias move at layer {k} column {j}: normalized min sv {score:.3e}"),
            true,
        );
    }

    let end = builder.current().clone();
    let f_end = network::forward_to_layer(spec, &end, data, k)?;
    let final_report = linalg::numerical_rank(&f_end, RANK_TOL)?;
    if final_report.rank != n {
        return Err(Error::Internal(format!(
            "bias boost ended at rank {} instead of {n}",
            final_report.rank
        )));
    }
    builder.check(format!("rank(F_{k}) = N = {n} after bias boost"), true);
    let path = builder.finish(Contract::LossConstant)?;
    Ok((
        path,
        WideLayerWitness {
            layer: k,
            rank_report: final_report,
            params: end,
        },
    ))
}

fn degeneracy_free(
    spec: &NetworkSpec,
    params: &Params,
    data: &Dataset,
    k: usize,
) -> Result<bool> {
    for l in 1..k {
        let f_l = network::forward_to_layer(spec, params, data, l)?;
        if !has_distinct_rows(&f_l) {
            return Ok(false);
        }
    }
    let v_pre = v_pre_activation(spec, params, data, k)?;
    for j in 0..v_pre.ncols() {
        if !has_distinct_entries(&v_pre.column(j).clone_owned()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Perturb the first k weight matrices by seeded uniform noise until the
/// intermediate outputs have distinct rows and every pre-activation column at
/// layer k has distinct entries. The loss change is measured along the
/// straight segment and recorded in the contract, never assumed.
pub fn distinct_rows_nudge(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    k: usize,
    magnitude: f64,
    seed: u64,
) -> Result<(ParamPath, Params)> {
    params.validate(spec)?;
    if !(1..=spec.num_layers()).contains(&k) {
        return Err(Error::InvalidInput(format!(
            "layer index must lie in [1, L], got {k}"
        )));
    }
    if !(magnitude > 0.0) {
        return Err(Error::InvalidInput("magnitude must be positive".into()));
    }
    if degeneracy_free(spec, params, data, k)? {
        let builder = PathBuilder::new(params.clone());
        return Ok((builder.finish(Contract::LossConstant)?, params.clone()));
    }
    use rand::RngExt;
    for attempt in 0..8u32 {
        let mag = magnitude / 2.0_f64.powi(attempt as i32);
        let mut rng = linalg::rng_from(seed, 0x4D6E + attempt as u64);
        let mut nudged = params.clone();
        for l in 1..=k {
            let layer = &mut nudged.layers[l - 1];
            layer.w = layer.w.map(|x| x + (rng.random::<f64>() * 2.0 - 1.0) * mag);
        }
        if degeneracy_free(spec, &nudged, data, k)? {
            // Measure the segment's actual loss excursion.
            let mut measured = f64::NEG_INFINITY;
            for s in 0..=32 {
                let lam = s as f64 / 32.0;
                let p = params.lerp(&nudged, lam);
                measured = measured.max(network::loss(spec, &p, data)?.value);
            }
            let mut builder = PathBuilder::new(params.clone());
            builder.push_linear_to(
                nudged.clone(),
                Contract::LossBounded { bound: measured },
            )?;
            builder.check(
                format!("nudge magnitude {mag:.3e}, measured loss bound {measured:.6e}"),
                true,
            );
            let path = builder.finish(Contract::LossBounded { bound: measured })?;
            return Ok((path, nudged));
        }
    }
    Err(Error::Degenerate(format!(
        "could not reach distinct rows at layer {k} within 8 halved nudges"
    )))
}

// ---------------------------------------------------------------------------
// Params-level wrappers used by the pipelines.
// ---------------------------------------------------------------------------

pub(crate) fn stack_bias(w: &Matrix, b: &Matrix) -> Matrix {
    let mut out = DMatrix::zeros(w.nrows() + 1, w.ncols());
    out.view_mut((0, 0), w.shape()).copy_from(w);
    for j in 0..w.ncols() {
        out[(w.nrows(), j)] = b[(j, 0)];
    }
    out
}

fn unstack_bias(stacked: &Matrix) -> (Matrix, Matrix) {
    let d = stacked.nrows() - 1;
    (
        stacked.rows(0, d).clone_owned(),
        Matrix::from_fn(stacked.ncols(), 1, |j, _| stacked[(d, j)]),
    )
}

/// Repair rank(F_l) = N via the matrix-level curve, lifted to straight
/// loss-constant segments over the full parameter vector.
pub(crate) fn repair_layer_rank(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    l: usize,
    budget: usize,
    seed: u64,
) -> Result<(Vec<PathSegment>, Params, Vec<PathCheck>)> {
    debug_assert!(l >= 1 && l < spec.num_layers());
    let input = network::forward_to_layer(spec, params, data, l - 1)?;
    let curve = make_layer_output_full_rank(
        &input,
        &spec.activation,
        &params.layers[l - 1].w,
        &params.layers[l - 1].b,
        &params.layers[l].w,
        budget,
        seed,
    )?;
    let mut builder = PathBuilder::new(params.clone());
    for wp in curve.waypoints.iter().skip(1) {
        let mut next = builder.current().clone();
        next.layers[l - 1].w = wp.0.clone();
        next.layers[l - 1].b = wp.1.clone();
        next.layers[l].w = wp.2.clone();
        builder.push_linear_to(next, Contract::LossConstant)?;
    }
    let n = data.num_samples();
    builder.check(format!("rank(F_{l}) = N = {n} after layer repair"), true);
    Ok(builder.into_parts())
}

/// Equalize layer l of `params` onto the corresponding layer of `target`,
/// moving (W_l, b_l, W_{l+1}) through the three-stage copy.
pub(crate) fn equalize_layer_on_params(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    target: &Params,
    l: usize,
) -> Result<(Vec<PathSegment>, Params, Vec<PathCheck>)> {
    debug_assert!(l >= 1 && l < spec.num_layers());
    let input = network::forward_to_layer(spec, params, data, l - 1)?;
    let x_aug = super::canonical::augment_ones(&input);
    let stacked = stack_bias(&params.layers[l - 1].w, &params.layers[l - 1].b);
    let stacked_target = stack_bias(&target.layers[l - 1].w, &target.layers[l - 1].b);
    let curve = equalize_layer(
        &x_aug,
        &spec.activation,
        &stacked,
        &params.layers[l].w,
        &stacked_target,
        RANK_TOL,
    )?;
    let mut builder = PathBuilder::new(params.clone());
    for wp in curve.waypoints.iter().skip(1) {
        let (w_l, b_l) = unstack_bias(&wp.0);
        let mut next = builder.current().clone();
        next.layers[l - 1].w = w_l;
        next.layers[l - 1].b = b_l;
        next.layers[l].w = wp.1.clone();
        builder.push_linear_to(next, Contract::LossConstant)?;
    }
    let exact = builder.current().layers[l - 1].w == target.layers[l - 1].w
        && builder.current().layers[l - 1].b == target.layers[l - 1].b;
    builder.check(format!("layer {l} equalized onto target exactly"), exact);
    if !exact {
        return Err(Error::Internal(format!(
            "equalization of layer {l} missed the target"
        )));
    }
    Ok(builder.into_parts())
}
