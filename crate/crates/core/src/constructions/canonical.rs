//! The canonical first-layer map: reconstruct a subnet's first layer in closed
//! form so that a prescribed output appears at a chosen layer, given
//! full-column-rank weights in between. Also the loss-constant paths that move
//! any point into that canonical form, and the convex retarget curves built on
//! top of it.

use nalgebra::DMatrix;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::network::{self, Dataset, Layer, NetworkSpec, Params};
use crate::pathkit::{Contract, LayerCurve, ParamPath, PathSegment, SegmentForm};

use super::{PathBuilder, COND_WARN};

/// Relative cutoff for the pseudo-inverses inside closed-form solves.
pub(crate) const SOLVE_CUTOFF: f64 = 1e-13;

/// [m, 1_N]: the input matrix augmented with a column of ones so weights and
/// biases solve jointly.
pub fn augment_ones(m: &Matrix) -> Matrix {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols() + 1);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    for i in 0..m.nrows() {
        out[(i, m.ncols())] = 1.0;
    }
    out
}

/// One backward step of the canonical recursion: from a desired output of
/// `layer` to the desired output of the layer below it.
pub(crate) fn backward_one_step(
    target: &Matrix,
    layer: &Layer,
    layer_is_output: bool,
    activation: &Activation,
) -> Result<Matrix> {
    let pre = if layer_is_output {
        target.clone()
    } else {
        activation.invert(target)?
    };
    let n = pre.nrows();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let rhs = pre - ones * layer.b.transpose();
    Ok(rhs * linalg::pseudo_inverse(&layer.w, SOLVE_CUTOFF)?)
}

/// Solve the first layer of a subnet so that the output at the deepest layer
/// of `upper` (or of the solved layer itself when `upper` is empty) equals
/// `target`. `target_is_output` marks that deepest layer as the affine
/// network output.
pub(crate) fn solve_first_layer(
    input: &Matrix,
    activation: &Activation,
    upper: &[Layer],
    target: &Matrix,
    target_is_output: bool,
) -> Result<(Matrix, Matrix)> {
    let mut desired = target.clone();
    for (idx, layer) in upper.iter().enumerate().rev() {
        let is_last = idx == upper.len() - 1;
        desired = backward_one_step(&desired, layer, is_last && target_is_output, activation)?;
    }
    let solved_is_output = upper.is_empty() && target_is_output;
    let pre = if solved_is_output {
        desired
    } else {
        activation.invert(&desired)?
    };
    let aug = augment_ones(input);
    let stacked = linalg::pseudo_inverse(&aug, SOLVE_CUTOFF)? * pre;
    let d = input.ncols();
    let w = stacked.rows(0, d).clone_owned();
    let b = Matrix::from_fn(stacked.ncols(), 1, |j, _| stacked[(d, j)]);
    Ok((w, b))
}

/// Condition numbers of the weights an h-solve inverts, recorded as one
/// summary note; large values warn rather than fail.
pub(crate) fn condition_checks(upper: &[Layer], label: &str) -> Vec<crate::pathkit::PathCheck> {
    if upper.is_empty() {
        return Vec::new();
    }
    let mut worst = 0.0_f64;
    let mut singular = None;
    for (i, layer) in upper.iter().enumerate() {
        let (smin, smax) = linalg::extreme_singular_values(&layer.w);
        if smin <= 0.0 {
            singular = Some(i);
            break;
        }
        worst = worst.max(smax / smin);
    }
    let check = match singular {
        Some(i) => crate::pathkit::PathCheck {
            description: format!("{label}: inverted weight {i} is singular"),
            passed: false,
        },
        None => crate::pathkit::PathCheck {
            description: if worst >= COND_WARN {
                format!(
                    "warning: {label}: worst inverted-weight condition number {worst:.3e} >= {COND_WARN:.0e}"
                )
            } else {
                format!("{label}: worst inverted-weight condition number {worst:.3e}")
            },
            passed: true,
        },
    };
    vec![check]
}

fn check_upper_full_column_rank(upper: &[Layer], first_abs: usize) -> Result<()> {
    for (i, layer) in upper.iter().enumerate() {
        let cols = layer.w.ncols();
        let report = linalg::numerical_rank(&layer.w, linalg::DEFAULT_RANK_TOL)?;
        if report.rank < cols {
            return Err(Error::RankDeficient(format!(
                "W_{} has rank {} < {} and cannot be left-inverted",
                first_abs + i,
                report.rank,
                cols
            )));
        }
    }
    Ok(())
}

/// The canonical map: given full-rank upper layers 2..k and a target output A
/// at layer k, return the first layer (W_1, b_1) realizing it.
pub fn map_h(
    spec: &NetworkSpec,
    data: &Dataset,
    upper: &[Layer],
    a: &Matrix,
    k: usize,
) -> Result<(Matrix, Matrix)> {
    let l_total = spec.num_layers();
    if !(2..=l_total).contains(&k) {
        return Err(Error::InvalidInput(format!(
            "target layer k must lie in [2, L], got {k}"
        )));
    }
    if upper.len() != k - 1 {
        return Err(Error::InvalidParams(format!(
            "expected {} upper layers for k = {k}, got {}",
            k - 1,
            upper.len()
        )));
    }
    if !spec.activation.satisfies_a1() {
        return Err(Error::UnsupportedActivation(format!(
            "{} has no continuous inverse on R",
            spec.activation.kind_name()
        )));
    }
    let n = data.num_samples();
    let rank_x = linalg::numerical_rank(data.x(), linalg::DEFAULT_RANK_TOL)?.rank;
    if rank_x < n {
        return Err(Error::RankDeficient(format!(
            "rank(X) = {rank_x} < N = {n}; the stacked first-layer solve needs full row rank"
        )));
    }
    // Full column rank of the upper weights is what the backward solve needs;
    // width growth makes it impossible outright.
    for l in 1..k {
        if spec.width(l) < spec.width(l + 1) {
            return Err(Error::HypothesisFailed {
                clause: "n_1 >= ... >= n_k".into(),
                detail: format!(" (n_{l} = {} < n_{} = {})", spec.width(l), l + 1, spec.width(l + 1)),
            });
        }
    }
    check_upper_full_column_rank(upper, 2)?;
    if a.shape() != (n, spec.width(k)) {
        return Err(Error::InvalidInput(format!(
            "target has shape {:?}, expected ({n}, {})",
            a.shape(),
            spec.width(k)
        )));
    }
    solve_first_layer(data.x(), &spec.activation, upper, a, k == l_total)
}

/// Forward outputs C_start .. C_j of the subnet at fixed params.
fn layer_outputs(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    upto: usize,
) -> Result<Vec<Matrix>> {
    let mut outs = Vec::with_capacity(upto + 1);
    for k in 0..=upto {
        outs.push(network::forward_to_layer(spec, params, data, k)?);
    }
    Ok(outs)
}

/// Build one h-retarget segment over the full parameter vector.
///
/// Layers 1..start-1 of `base` stay fixed, layer `start` is re-solved, layers
/// start+1..=k follow `upper` curves, layers k+1..L stay fixed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn h_segment(
    spec: &NetworkSpec,
    data: &Dataset,
    base: &Params,
    start: usize,
    k: usize,
    upper: Vec<LayerCurve>,
    target_start: Matrix,
    target_end: Matrix,
    contract: Contract,
) -> Result<PathSegment> {
    debug_assert!(start >= 1 && k >= start && k <= spec.num_layers());
    debug_assert_eq!(upper.len(), k - start);
    let input = network::forward_to_layer(spec, base, data, start - 1)?;
    let prefix: Vec<Layer> = base.layers[..start - 1].to_vec();
    let tail: Vec<Layer> = base.layers[k..].to_vec();
    Ok(PathSegment {
        form: SegmentForm::HRetarget {
            input,
            activation: spec.activation,
            prefix,
            upper,
            target_start,
            target_end,
            tail,
        },
        contract,
    })
}

/// Loss-constant canonicalization of the subnet starting at layer `start`
/// against its output at layer `j`: a chain of closed-form segments ending at
/// the point whose first subnet layer is the canonical solve of F_j.
///
/// Stage 1 moves the first layer straight onto the stacked least-norm solution
/// of its own output (the solution set is affine, so the line stays inside
/// it). Stage i then moves the output at layer i-1 straight onto the canonical
/// backward image of F_i while the first layer tracks the closed-form solve,
/// which pins F_i and everything above it.
pub(crate) fn canonicalize_on_subnet(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    start: usize,
    j: usize,
) -> Result<(Vec<PathSegment>, Params, Vec<crate::pathkit::PathCheck>)> {
    let l_total = spec.num_layers();
    debug_assert!(start >= 1 && j >= start && j <= l_total);
    params.validate(spec)?;
    let input = network::forward_to_layer(spec, params, data, start - 1)?;
    let n = data.num_samples();
    let aug = augment_ones(&input);
    let aug_rank = linalg::numerical_rank(&aug, linalg::DEFAULT_RANK_TOL)?.rank;
    if aug_rank < n {
        return Err(Error::RankDeficient(format!(
            "subnet input (layer {}) has augmented rank {aug_rank} < N = {n}",
            start - 1
        )));
    }
    let outs = layer_outputs(spec, data, params, j)?;
    let mut builder = PathBuilder::new(params.clone());
    let mut checks =
        condition_checks(&params.layers[start..j.max(start)], &format!("canonicalize layers {start}..{j}"));

    // Stage 1: straight line onto the stacked solve of the current F_start.
    let c_start = &outs[start];
    let solved_is_output = start == l_total;
    let pre = if solved_is_output {
        c_start.clone()
    } else {
        spec.activation.invert(c_start)?
    };
    let stacked = linalg::pseudo_inverse(&aug, SOLVE_CUTOFF)? * pre;
    let d_in = input.ncols();
    let mut canonical = params.clone();
    canonical.layers[start - 1] = Layer::new(
        stacked.rows(0, d_in).clone_owned(),
        Matrix::from_fn(stacked.ncols(), 1, |j, _| stacked[(d_in, j)]),
    );
    if canonical.max_norm_diff(builder.current()) > 0.0 {
        builder.push_linear_to(canonical, Contract::LossConstant)?;
    }

    // Stages start+1 ..= j: retarget the output below layer i onto the
    // canonical backward image of C_i.
    for i in (start + 1)..=j {
        let target_layer = i - 1;
        let a0 = outs[target_layer].clone();
        let a1 = backward_one_step(
            &outs[i],
            &params.layers[i - 1],
            i == l_total,
            &spec.activation,
        )?;
        if (&a1 - &a0).norm() == 0.0 {
            continue;
        }
        let upper: Vec<LayerCurve> = params.layers[start..target_layer]
            .iter()
            .map(LayerCurve::constant)
            .collect();
        let seg = h_segment(
            spec,
            data,
            builder.current(),
            start,
            target_layer,
            upper,
            a0,
            a1,
            Contract::LossConstant,
        )?;
        builder.push(seg)?;
    }

    let (segments, end, more_checks) = builder.into_parts();
    checks.extend(more_checks);
    Ok((segments, end, checks))
}

/// One-segment retarget of the layer-k output from its current value to
/// `a_target`, holding layers 2..k fixed and re-solving the first layer.
/// The params must already be in canonical form for their current F_k.
pub fn retarget_first_layer_path(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    k: usize,
    a_target: &Matrix,
) -> Result<ParamPath> {
    params.validate(spec)?;
    let l_total = spec.num_layers();
    if !(2..=l_total).contains(&k) {
        return Err(Error::InvalidInput(format!(
            "target layer k must lie in [2, L], got {k}"
        )));
    }
    let upper = &params.layers[1..k];
    let f_k = network::forward_to_layer(spec, params, data, k)?;
    let (w_can, b_can) = map_h(spec, data, upper, &f_k, k)?;
    let gap = (&w_can - &params.layers[0].w)
        .abs()
        .max()
        .max((&b_can - &params.layers[0].b).abs().max());
    if gap > 1e-8 {
        return Err(Error::InvalidParams(format!(
            "first layer is not in canonical form for its current output (gap {gap:.3e}); \
             canonicalize before retargeting"
        )));
    }
    if a_target.shape() != f_k.shape() {
        return Err(Error::InvalidInput(format!(
            "target shape {:?} does not match F_k shape {:?}",
            a_target.shape(),
            f_k.shape()
        )));
    }
    let identity_target = (a_target - &f_k).norm() == 0.0;
    let contract = if identity_target {
        Contract::LossConstant
    } else if k == l_total {
        let phi_now = network::loss(spec, params, data)?.value;
        let phi_target = network::loss_of_output(spec.loss, a_target, data)?;
        if spec.loss == network::LossKind::Square && a_target == data.y() {
            Contract::LossNonincreasing
        } else {
            Contract::LossBounded {
                bound: phi_now.max(phi_target),
            }
        }
    } else {
        // No convexity argument below the output layer; measure the bound.
        let seg = h_segment(
            spec,
            data,
            params,
            1,
            k,
            params.layers[1..k].iter().map(LayerCurve::constant).collect(),
            f_k.clone(),
            a_target.clone(),
            Contract::LossConstant,
        )?;
        let mut measured = f64::NEG_INFINITY;
        for s in 0..257 {
            let lam = s as f64 / 256.0;
            let p = seg.eval(lam)?;
            measured = measured.max(network::loss(spec, &p, data)?.value);
        }
        Contract::LossBounded {
            bound: measured + 1e-9 * (1.0 + measured.abs()),
        }
    };
    let upper_curves: Vec<LayerCurve> = params.layers[1..k].iter().map(LayerCurve::constant).collect();
    let seg = h_segment(
        spec,
        data,
        params,
        1,
        k,
        upper_curves,
        f_k,
        a_target.clone(),
        contract,
    )?;
    let mut builder = PathBuilder::new(params.clone());
    builder.push(seg)?;
    let global = contract;
    builder.finish(global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::network::LossKind;

    fn leaky_spec(widths: &[usize], loss: LossKind) -> NetworkSpec {
        NetworkSpec::new(widths.to_vec(), Activation::leaky_relu(0.01).unwrap(), loss).unwrap()
    }

    fn full_rank_data(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = linalg::rng_from(seed, 0xDA);
        loop {
            let x = linalg::random_normal_matrix(n, d, &mut rng);
            if linalg::numerical_rank(&x, 1e-9).unwrap().rank == n.min(d) {
                let y = linalg::random_normal_matrix(n, m, &mut rng);
                return Dataset::new(x, y).unwrap();
            }
        }
    }

    /// Draw params whose upper weights are comfortably full rank.
    fn full_rank_params(spec: &NetworkSpec, seed: u64) -> Params {
        let mut salt = 0;
        loop {
            let p = Params::random_init(spec, seed.wrapping_add(salt));
            let ok = (2..=spec.num_layers()).all(|l| {
                let w = &p.layers[l - 1].w;
                let r = linalg::numerical_rank(w, 1e-9).unwrap();
                r.rank == w.ncols().min(w.nrows())
                    && r.min_singular_value > 1e-4 * r.max_singular_value.max(1.0)
            });
            if ok {
                return p;
            }
            salt += 1;
        }
    }

    #[test]
    fn map_h_scalar_hand_case() {
        // N = 1, d = 1, X = [1], two layers of width 1, W_2 = [1], b_2 = 0.
        // Target output 5 must be reproduced exactly: the stacked solve gives
        // [W_1; b_1] = pinv([1, 1]) * 5 = [2.5; 2.5].
        let spec = leaky_spec(&[1, 1, 1], LossKind::Square);
        let data = Dataset::new(
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::from_row_slice(1, 1, &[0.0]),
        )
        .unwrap();
        let upper = vec![Layer::new(
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::zeros(1, 1),
        )];
        let a = Matrix::from_row_slice(1, 1, &[5.0]);
        let (w1, b1) = map_h(&spec, &data, &upper, &a, 2).unwrap();
        assert!((w1[(0, 0)] - 2.5).abs() < 1e-12);
        assert!((b1[(0, 0)] - 2.5).abs() < 1e-12);
        let params = Params {
            layers: vec![Layer::new(w1, b1), upper[0].clone()],
        };
        let f2 = network::forward_to_layer(&spec, &params, &data, 2).unwrap();
        assert!((f2[(0, 0)] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn map_h_reproduces_targets_at_every_layer() {
        let spec = leaky_spec(&[4, 7, 5, 3], LossKind::Square);
        let data = full_rank_data(4, 4, 3, 3);
        for k in 2..=3 {
            let donor = full_rank_params(&spec, 17 + k as u64);
            let upper: Vec<Layer> = donor.layers[1..k].to_vec();
            let mut rng = linalg::rng_from(50 + k as u64, 1);
            let a = linalg::random_normal_matrix(4, spec.width(k), &mut rng);
            let (w1, b1) = map_h(&spec, &data, &upper, &a, k).unwrap();
            let mut layers = vec![Layer::new(w1, b1)];
            layers.extend(donor.layers[1..].iter().cloned());
            let params = Params { layers };
            let f_k = network::forward_to_layer(&spec, &params, &data, k).unwrap();
            let resid = (&f_k - &a).norm();
            assert!(
                resid <= 1e-8 * (1.0 + a.norm()),
                "k={k} residual {resid:.3e}"
            );
        }
    }

    #[test]
    fn map_h_round_trip_preserves_current_output() {
        let spec = leaky_spec(&[3, 6, 4, 2], LossKind::Square);
        let data = full_rank_data(3, 3, 2, 5);
        let params = full_rank_params(&spec, 9);
        let k = 3;
        let f_k = network::forward_to_layer(&spec, &params, &data, k).unwrap();
        let (w1, b1) = map_h(&spec, &data, &params.layers[1..k], &f_k, k).unwrap();
        let mut layers = vec![Layer::new(w1, b1)];
        layers.extend(params.layers[1..].iter().cloned());
        let rebuilt = Params { layers };
        let f_k_after = network::forward_to_layer(&spec, &rebuilt, &data, k).unwrap();
        assert!((&f_k_after - &f_k).norm() <= 1e-7 * (1.0 + f_k.norm()));
    }

    #[test]
    fn map_h_rejects_rank_deficient_data() {
        let spec = leaky_spec(&[2, 4, 3, 2], LossKind::Square);
        // Three samples in two input dimensions: rank(X) <= 2 < 3.
        let x = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = Matrix::zeros(3, 2);
        let data = Dataset::new(x, y).unwrap();
        let params = Params::random_init(&spec, 1);
        let f = network::forward_to_layer(&spec, &params, &data, 2).unwrap();
        assert!(matches!(
            map_h(&spec, &data, &params.layers[1..2], &f, 2),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn map_h_rejects_non_invertible_activation() {
        let spec = NetworkSpec::new(vec![2, 4, 2], Activation::Relu, LossKind::Square).unwrap();
        let data = full_rank_data(2, 2, 2, 8);
        let params = Params::random_init(&spec, 1);
        let f = network::forward_to_layer(&spec, &params, &data, 2).unwrap();
        assert!(matches!(
            map_h(&spec, &data, &params.layers[1..2], &f, 2),
            Err(Error::UnsupportedActivation(_))
        ));
    }

    #[test]
    fn map_h_rejects_non_monotone_widths() {
        let spec = leaky_spec(&[3, 4, 5, 2], LossKind::Square);
        let data = full_rank_data(3, 3, 2, 8);
        let params = Params::random_init(&spec, 1);
        let f = network::forward_to_layer(&spec, &params, &data, 3).unwrap();
        assert!(matches!(
            map_h(&spec, &data, &params.layers[1..3], &f, 3),
            Err(Error::HypothesisFailed { .. })
        ));
    }

    #[test]
    fn canonicalization_chain_is_loss_constant() {
        let spec = leaky_spec(&[4, 7, 5, 3], LossKind::Square);
        let data = full_rank_data(4, 4, 3, 13);
        let params = full_rank_params(&spec, 21);
        let (segments, end, _checks) =
            canonicalize_on_subnet(&spec, &data, &params, 1, spec.num_layers()).unwrap();
        let path = ParamPath::new(segments, Contract::LossConstant).unwrap();
        let cert = crate::pathkit::certify(&path, &spec, &data, 48, 1e-6).unwrap();
        assert!(cert.passed, "drift {:.3e}", cert.max_constant_drift);
        // End point is the canonical solve of F_L.
        let f_l = network::forward_to_layer(&spec, &params, &data, 3).unwrap();
        let (w1, b1) = map_h(&spec, &data, &params.layers[1..], &f_l, 3).unwrap();
        assert!((&end.layers[0].w - &w1).norm() < 1e-9);
        assert!((&end.layers[0].b - &b1).norm() < 1e-9);
        // Upper layers untouched.
        for l in 1..3 {
            assert_eq!(end.layers[l], params.layers[l]);
        }
    }

    #[test]
    fn retarget_identity_is_loss_constant() {
        let spec = leaky_spec(&[3, 6, 4, 2], LossKind::Square);
        let data = full_rank_data(3, 3, 2, 31);
        let params = full_rank_params(&spec, 33);
        let (_, canonical, _) = canonicalize_on_subnet(&spec, &data, &params, 1, 3).unwrap();
        let f3 = network::forward_to_layer(&spec, &canonical, &data, 3).unwrap();
        let path = retarget_first_layer_path(&spec, &data, &canonical, 3, &f3).unwrap();
        let cert = crate::pathkit::certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed);
        assert!(cert.max_constant_drift <= 1e-8);
    }

    #[test]
    fn retarget_to_loss_target_descends() {
        let spec = leaky_spec(&[3, 6, 4, 2], LossKind::Square);
        let data = full_rank_data(3, 3, 2, 41);
        let params = full_rank_params(&spec, 43);
        let (_, canonical, _) = canonicalize_on_subnet(&spec, &data, &params, 1, 3).unwrap();
        let target = network::loss_target(&spec, &data, 1e-9).unwrap();
        let path = retarget_first_layer_path(&spec, &data, &canonical, 3, &target).unwrap();
        let start_loss = network::loss(&spec, &canonical, &data).unwrap().value;
        let end = path.end().unwrap();
        let end_loss = network::loss(&spec, &end, &data).unwrap().value;
        assert!(end_loss <= 1e-9 * (1.0 + start_loss) + 1e-12);
        // Midpoint output is the midpoint of the targets.
        let mid = path.evaluate(0.5).unwrap();
        let f_mid = network::forward_to_layer(&spec, &mid, &data, 3).unwrap();
        let f_start = network::forward_to_layer(&spec, &canonical, &data, 3).unwrap();
        let expect = (&f_start + &target) * 0.5;
        assert!((&f_mid - &expect).norm() <= 1e-8 * (1.0 + expect.norm()));
        let cert = crate::pathkit::certify(&path, &spec, &data, 48, 1e-6).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn retarget_requires_canonical_form() {
        let spec = leaky_spec(&[3, 6, 4, 2], LossKind::Square);
        let data = full_rank_data(3, 3, 2, 51);
        let params = full_rank_params(&spec, 53);
        let f3 = network::forward_to_layer(&spec, &params, &data, 3).unwrap();
        // Generic params are essentially never canonical.
        assert!(matches!(
            retarget_first_layer_path(&spec, &data, &params, 3, &f3),
            Err(Error::InvalidParams(_))
        ));
    }
}
