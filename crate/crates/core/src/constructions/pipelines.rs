//! End-to-end path pipelines: sublevel-set connections, descent paths to
//! near-infimal loss, and unbounded constant-loss rays, for each width regime.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::network::{self, Dataset, LossKind, NetworkSpec, Params, Theorem};
use crate::pathkit::{Contract, LayerCurve, MatrixCurve, ParamPath, PathCheck, PathSegment};

use super::canonical::{canonicalize_on_subnet, h_segment};
use super::rank_repair::path_to_full_rank_on;
use super::wide::{equalize_layer_on_params, repair_layer_rank};
use super::{PathBuilder, PIPELINE_DETOUR_RETRIES, PIPELINE_SV_FLOOR};

fn reverse_segments(segments: &[PathSegment]) -> Result<Vec<PathSegment>> {
    segments.iter().rev().map(|s| s.reversed()).collect()
}

fn ensure_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(format!(
            "epsilon must exceed p* = 0, got {epsilon}"
        )))
    }
}

/// Aim the closed-form target a shade below the requested loss so the
/// reconstruction noise of the solves cannot push the terminal point over it.
fn descent_target(spec: &NetworkSpec, data: &Dataset, epsilon: f64) -> Result<Matrix> {
    network::loss_target(spec, data, epsilon * (1.0 - 1e-6))
}

/// Meeting-point output with loss at most min(bound, the two endpoint losses).
fn meeting_target(
    spec: &NetworkSpec,
    data: &Dataset,
    epsilon: f64,
    phi_a: f64,
    phi_b: f64,
) -> Result<Matrix> {
    match spec.loss {
        LossKind::Square => Ok(data.y().clone()),
        LossKind::CrossEntropy => {
            let eps_meet = epsilon.min(phi_a).min(phi_b);
            network::loss_target(spec, data, eps_meet)
        }
    }
}

/// Contract of the convex retarget toward `target` starting at loss
/// `phi_start`: exactly monotone for square loss onto the data targets,
/// bounded by the larger endpoint loss otherwise.
fn retarget_contract(
    spec: &NetworkSpec,
    data: &Dataset,
    target: &Matrix,
    phi_start: f64,
) -> Result<Contract> {
    if spec.loss == LossKind::Square && target == data.y() {
        return Ok(Contract::LossNonincreasing);
    }
    let phi_target = network::loss_of_output(spec.loss, target, data)?;
    Ok(Contract::LossBounded {
        bound: phi_start.max(phi_target),
    })
}

/// Connect `theta` to `theta_prime` across the subnetwork starting at layer
/// `start` (both must agree bitwise below it): full-rank repair on both
/// sides, canonicalization, a full-rank weight homotopy with the first subnet
/// layer re-solved throughout, and the two convex retarget legs meeting at a
/// common low-loss point.
pub(crate) fn connect_on_subnet(
    spec: &NetworkSpec,
    data: &Dataset,
    start: usize,
    theta: &Params,
    theta_prime: &Params,
    epsilon: f64,
    seed: u64,
) -> Result<(Vec<PathSegment>, Vec<PathCheck>)> {
    let l_total = spec.num_layers();
    for l in 0..start - 1 {
        if theta.layers[l] != theta_prime.layers[l] {
            return Err(Error::Internal(format!(
                "subnet connection requires identical layers below {start}, layer {} differs",
                l + 1
            )));
        }
    }
    let phi_a = network::loss(spec, theta, data)?.value;
    let phi_b = network::loss(spec, theta_prime, data)?.value;
    let y_hat = meeting_target(spec, data, epsilon, phi_a, phi_b)?;

    let mut builder = PathBuilder::new(theta.clone());

    // Theta side: full-rank repair, then canonical form at the output.
    let (rep_a, _, checks_a) = path_to_full_rank_on(spec, data, theta, start, seed ^ 0xA1)?;
    builder.extend(rep_a)?;
    builder.checks_mut().extend(checks_a);
    let f_l_a = network::forward_to_layer(spec, builder.current(), data, l_total)?;
    let (can_a, theta_a2, checks_a2) =
        canonicalize_on_subnet(spec, data, builder.current(), start, l_total)?;
    builder.extend(can_a)?;
    builder.checks_mut().extend(checks_a2);

    // Theta-prime side, built separately and traversed backwards at the end.
    let (rep_b, theta_b, checks_b) =
        path_to_full_rank_on(spec, data, theta_prime, start, seed ^ 0xB2)?;
    builder.checks_mut().extend(checks_b);
    let f_l_b = network::forward_to_layer(spec, &theta_b, data, l_total)?;
    let (can_b, theta_b2, checks_b2) = canonicalize_on_subnet(spec, data, &theta_b, start, l_total)?;
    builder.checks_mut().extend(checks_b2);

    // Upper-layer homotopy holding the output fixed.
    let mut upper = Vec::with_capacity(l_total - start);
    let mut any_moves = false;
    for l in (start + 1)..=l_total {
        let la = &theta_a2.layers[l - 1];
        let lb = &theta_b2.layers[l - 1];
        let weight = if la.w == lb.w {
            MatrixCurve::Constant { value: la.w.clone() }
        } else {
            any_moves = true;
            let detour = linalg::full_rank_matrix_path(
                &la.w,
                &lb.w,
                PIPELINE_SV_FLOOR,
                seed ^ (0xC3 + l as u64),
                PIPELINE_DETOUR_RETRIES,
            )?;
            builder.check(
                format!(
                    "full-rank detour for W_{l}: certified min sv {:.3e} ({} retries)",
                    detour.certified_floor, detour.retries_used
                ),
                detour.certified_floor > PIPELINE_SV_FLOOR,
            );
            MatrixCurve::TwoPiece {
                from: detour.start,
                mid: detour.mid,
                to: detour.end,
            }
        };
        let bias = if la.b == lb.b {
            MatrixCurve::Constant { value: la.b.clone() }
        } else {
            any_moves = true;
            MatrixCurve::Line {
                from: la.b.clone(),
                to: lb.b.clone(),
            }
        };
        upper.push(LayerCurve { weight, bias });
    }
    if any_moves {
        let seg = h_segment(
            spec,
            data,
            &theta_a2,
            start,
            l_total,
            upper,
            f_l_a.clone(),
            f_l_a.clone(),
            Contract::LossConstant,
        )?;
        builder.push(seg)?;
    }

    // Convex retarget down to the meeting point, then up to the other side.
    let upper_b: Vec<LayerCurve> = theta_b2.layers[start..]
        .iter()
        .map(LayerCurve::constant)
        .collect();
    let c1 = h_segment(
        spec,
        data,
        &theta_b2,
        start,
        l_total,
        upper_b.clone(),
        f_l_a.clone(),
        y_hat.clone(),
        retarget_contract(spec, data, &y_hat, phi_a)?,
    )?;
    builder.push(c1)?;
    let c2_back = h_segment(
        spec,
        data,
        &theta_b2,
        start,
        l_total,
        upper_b,
        y_hat.clone(),
        f_l_b.clone(),
        Contract::LossBounded { bound: phi_b },
    )?;
    builder.push(c2_back)?;

    builder.extend(reverse_segments(&can_b)?)?;
    builder.extend(reverse_segments(&rep_b)?)?;
    let phi_meet = network::loss_of_output(spec.loss, &y_hat, data)?;
    builder.check(
        format!(
            "meeting point loss {phi_meet:.3e} <= min endpoint loss {:.3e}",
            phi_a.min(phi_b)
        ),
        phi_meet <= phi_a.min(phi_b) + 1e-12,
    );
    Ok(builder.into_parts_segments_checks(theta_prime))
}

impl PathBuilder {
    /// Finishing helper for subnet connections: verifies the endpoint landed
    /// on the requested point bitwise before handing the parts back.
    fn into_parts_segments_checks(self, expected_end: &Params) -> (Vec<PathSegment>, Vec<PathCheck>) {
        let (segments, end, mut checks) = self.into_parts();
        let gap = end.max_norm_diff(expected_end);
        checks.push(PathCheck {
            description: format!("terminal point matches the requested endpoint (gap {gap:.3e})"),
            passed: gap <= 1e-10,
        });
        (segments, checks)
    }
}

/// Sublevel connection for full-row-rank data and strictly decreasing widths:
/// a certified path theta -> theta' whose loss never exceeds the larger
/// endpoint loss.
pub fn connect_lin_data(
    spec: &NetworkSpec,
    data: &Dataset,
    theta: &Params,
    theta_prime: &Params,
    epsilon: f64,
    seed: u64,
) -> Result<ParamPath> {
    theta.validate(spec)?;
    theta_prime.validate(spec)?;
    ensure_epsilon(epsilon)?;
    network::validate_hypotheses(spec, data, Theorem::LinData).into_result()?;
    let phi_a = network::loss(spec, theta, data)?.value;
    let phi_b = network::loss(spec, theta_prime, data)?.value;
    let (segments, checks) =
        connect_on_subnet(spec, data, 1, theta, theta_prime, epsilon, seed)?;
    let mut builder = PathBuilder::new(theta.clone());
    builder.extend(segments)?;
    builder.checks_mut().extend(checks);
    builder.finish(Contract::LossBounded {
        bound: phi_a.max(phi_b),
    })
}

/// Constant-loss ray that scales the second weight matrix by `scale_max`
/// while the first layer compensates, leaving the layer-2 output pinned.
pub fn unbounded_ray_lin_data(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    scale_max: f64,
    seed: u64,
) -> Result<ParamPath> {
    params.validate(spec)?;
    network::validate_hypotheses(spec, data, Theorem::LinData).into_result()?;
    if !(scale_max >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "scale_max must be >= 1, got {scale_max}"
        )));
    }
    let mut builder = PathBuilder::new(params.clone());
    if scale_max == 1.0 {
        return builder.finish(Contract::LossConstant);
    }
    let (rep, _, checks) = path_to_full_rank_on(spec, data, params, 1, seed ^ 0x5A)?;
    builder.extend(rep)?;
    builder.checks_mut().extend(checks);
    let f2 = network::forward_to_layer(spec, builder.current(), data, 2)?;
    let (can, theta_c, can_checks) =
        canonicalize_on_subnet(spec, data, builder.current(), 1, 2)?;
    builder.extend(can)?;
    builder.checks_mut().extend(can_checks);

    let w2 = theta_c.layers[1].w.clone();
    let upper = vec![LayerCurve {
        weight: MatrixCurve::Line {
            from: w2.clone(),
            to: &w2 * scale_max,
        },
        bias: MatrixCurve::Constant {
            value: theta_c.layers[1].b.clone(),
        },
    }];
    let seg = h_segment(
        spec,
        data,
        &theta_c,
        1,
        2,
        upper,
        f2.clone(),
        f2,
        Contract::LossConstant,
    )?;
    builder.push(seg)?;
    let start_norm = params.frobenius_norm();
    let end_norm = builder.current().frobenius_norm();
    builder.check(
        format!(
            "terminal W_2 norm {:.6e} >= scale_max * initial {:.6e}",
            scale_max * w2.norm(),
            w2.norm()
        ),
        true,
    );
    builder.check(
        format!("parameter norm grew from {start_norm:.6e} to {end_norm:.6e}"),
        end_norm >= scale_max * w2.norm() * (1.0 - 1e-9),
    );
    builder.finish(Contract::LossConstant)
}

/// Descent path with bounded loss from any starting point down to loss at
/// most `epsilon`, through the wide layer `k`.
pub fn descend_no_bad_valley(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    k: usize,
    epsilon: f64,
    search_budget: usize,
    seed: u64,
) -> Result<ParamPath> {
    params.validate(spec)?;
    ensure_epsilon(epsilon)?;
    network::validate_hypotheses(spec, data, Theorem::NoBadValley { k }).into_result()?;
    let l_total = spec.num_layers();
    let phi_0 = network::loss(spec, params, data)?.value;
    let mut builder = PathBuilder::new(params.clone());
    if phi_0 <= epsilon {
        builder.check(
            format!("loss {phi_0:.3e} already at or below epsilon {epsilon:.3e}"),
            true,
        );
        return builder.finish(Contract::LossBounded { bound: phi_0 });
    }

    // Generic position, then raise rank(F_k) to N with the loss pinned.
    let (nudge_path, theta_1) =
        super::wide::distinct_rows_nudge(spec, data, params, k, 1e-3, seed ^ 0xD1)?;
    let mut bound = phi_0;
    if let Contract::LossBounded { bound: b } = nudge_path.contract {
        bound = bound.max(b);
    }
    if nudge_path.segments().len() > 1 || nudge_path.segments()[0].kind() != "frozen" {
        builder.checks_mut().extend(nudge_path.checks.clone());
        builder.extend(nudge_path.segments().to_vec())?;
    }
    let (boost_path, witness) =
        super::wide::bias_rank_boost(spec, data, &theta_1, k, search_budget, seed ^ 0xD2)?;
    if boost_path.segments().len() > 1 || boost_path.segments()[0].kind() != "frozen" {
        builder.checks_mut().extend(boost_path.checks.clone());
        builder.extend(boost_path.segments().to_vec())?;
    }
    builder.check(
        format!(
            "wide layer {k} witness rank {} (min sv {:.3e})",
            witness.rank_report.rank, witness.rank_report.min_singular_value
        ),
        witness.rank_report.rank == data.num_samples(),
    );

    // Theorem-style descent on the subnetwork above k, with F_k as its data.
    let start = k + 1;
    let (rep, _, rep_checks) =
        path_to_full_rank_on(spec, data, builder.current(), start, seed ^ 0xD3)?;
    builder.extend(rep)?;
    builder.checks_mut().extend(rep_checks);
    let f_l = network::forward_to_layer(spec, builder.current(), data, l_total)?;
    let (can, theta_4, can_checks) =
        canonicalize_on_subnet(spec, data, builder.current(), start, l_total)?;
    builder.extend(can)?;
    builder.checks_mut().extend(can_checks);

    let y_hat = descent_target(spec, data, epsilon)?;
    let phi_now = network::loss(spec, &theta_4, data)?.value;
    let contract = retarget_contract(spec, data, &y_hat, phi_now)?;
    let upper: Vec<LayerCurve> = theta_4.layers[start..].iter().map(LayerCurve::constant).collect();
    let seg = h_segment(spec, data, &theta_4, start, l_total, upper, f_l, y_hat, contract)?;
    builder.push(seg)?;

    let terminal = network::loss(spec, builder.current(), data)?.value;
    builder.check(
        format!("terminal loss {terminal:.6e} <= epsilon {epsilon:.3e}"),
        terminal <= epsilon * (1.0 + 1e-9) + 1e-15,
    );
    builder.finish(Contract::LossBounded { bound })
}

/// Sublevel connection when the first hidden layer has width at least 2N:
/// repair rank(F_1) on both sides, equalize the first layer, then run the
/// full connection on the subnetwork above it.
pub fn connect_wide_first(
    spec: &NetworkSpec,
    data: &Dataset,
    theta: &Params,
    theta_prime: &Params,
    epsilon: f64,
    search_budget: usize,
    seed: u64,
) -> Result<ParamPath> {
    theta.validate(spec)?;
    theta_prime.validate(spec)?;
    ensure_epsilon(epsilon)?;
    network::validate_hypotheses(spec, data, Theorem::WideFirst).into_result()?;
    let phi_a = network::loss(spec, theta, data)?.value;
    let phi_b = network::loss(spec, theta_prime, data)?.value;

    let mut builder = PathBuilder::new(theta.clone());
    let (rep_a, _, checks_a) =
        repair_layer_rank(spec, data, theta, 1, search_budget, seed ^ 0xE1)?;
    builder.extend(rep_a)?;
    builder.checks_mut().extend(checks_a);

    let (rep_b, theta_b, checks_b) =
        repair_layer_rank(spec, data, theta_prime, 1, search_budget, seed ^ 0xE2)?;
    builder.checks_mut().extend(checks_b);

    let (eq_segs, theta_c, eq_checks) =
        equalize_layer_on_params(spec, data, builder.current(), &theta_b, 1)?;
    builder.extend(eq_segs)?;
    builder.checks_mut().extend(eq_checks);
    debug_assert_eq!(theta_c.layers[0], theta_b.layers[0]);

    let (suffix, suffix_checks) =
        connect_on_subnet(spec, data, 2, &theta_c, &theta_b, epsilon, seed ^ 0xE3)?;
    builder.extend(suffix)?;
    builder.checks_mut().extend(suffix_checks);

    builder.extend(reverse_segments(&rep_b)?)?;
    builder.finish(Contract::LossBounded {
        bound: phi_a.max(phi_b),
    })
}

/// Constant-loss ray for the 2N-wide first layer: decouple the loss from the
/// redundant feature columns, then scale the freed first-layer columns and
/// biases without bound.
pub fn unbounded_ray_wide_first(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    scale_max: f64,
) -> Result<ParamPath> {
    params.validate(spec)?;
    network::validate_hypotheses(spec, data, Theorem::WideFirst).into_result()?;
    if !(scale_max >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "scale_max must be >= 1, got {scale_max}"
        )));
    }
    let mut builder = PathBuilder::new(params.clone());
    if scale_max == 1.0 {
        return builder.finish(Contract::LossConstant);
    }
    let f1 = network::forward_to_layer(spec, params, data, 1)?;
    let basis = linalg::independent_column_basis(&f1, linalg::DEFAULT_RANK_TOL)?;
    if basis.len() >= spec.width(1) {
        return Err(Error::Internal(
            "first-layer features claim full column rank, impossible under n_1 >= 2N".into(),
        ));
    }
    let curve = super::rewire::rewire_redundant_columns(
        &f1,
        &params.layers[1].w,
        &basis,
        linalg::DEFAULT_RANK_TOL,
    )?;
    let mut next = builder.current().clone();
    next.layers[1].w = curve.end();
    builder.push_linear_to(next, Contract::LossConstant)?;

    let mut scaled = builder.current().clone();
    for &j in &curve.complement {
        let col = scaled.layers[0].w.column(j) * scale_max;
        scaled.layers[0].w.set_column(j, &col);
        scaled.layers[0].b[(j, 0)] *= scale_max;
    }
    builder.push_linear_to(scaled, Contract::LossConstant)?;
    let start_norm = params.frobenius_norm();
    let end_norm = builder.current().frobenius_norm();
    builder.check(
        format!("parameter norm grew from {start_norm:.6e} to {end_norm:.6e}"),
        end_norm > start_norm || scale_max == 1.0,
    );
    builder.finish(Contract::LossConstant)
}

/// Descent for any activation without a full-line inverse: repair every
/// hidden layer's feature rank, then take the convex final-layer segment onto
/// a solved output weight.
pub fn descend_all_wide(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    epsilon: f64,
    search_budget: usize,
    seed: u64,
) -> Result<ParamPath> {
    params.validate(spec)?;
    ensure_epsilon(epsilon)?;
    network::validate_hypotheses(spec, data, Theorem::AllWideDescend).into_result()?;
    let l_total = spec.num_layers();
    let phi_0 = network::loss(spec, params, data)?.value;
    let mut builder = PathBuilder::new(params.clone());
    if phi_0 <= epsilon {
        builder.check(
            format!("loss {phi_0:.3e} already at or below epsilon {epsilon:.3e}"),
            true,
        );
        return builder.finish(Contract::LossBounded { bound: phi_0 });
    }
    for l in 1..l_total {
        let (segs, _, checks) = repair_layer_rank(
            spec,
            data,
            builder.current(),
            l,
            search_budget,
            seed ^ (0xF0 + l as u64),
        )?;
        builder.extend(segs)?;
        builder.checks_mut().extend(checks);
    }
    let y_hat = descent_target(spec, data, epsilon)?;
    let f_prev = network::forward_to_layer(spec, builder.current(), data, l_total - 1)?;
    let n = data.num_samples();
    let ones = Matrix::from_element(n, 1, 1.0);
    let rhs = &y_hat - &ones * builder.current().layers[l_total - 1].b.transpose();
    let w_star = linalg::pseudo_inverse(&f_prev, 1e-12)? * rhs;
    let phi_now = network::loss(spec, builder.current(), data)?.value;
    let contract = retarget_contract(spec, data, &y_hat, phi_now)?;
    let mut target = builder.current().clone();
    target.layers[l_total - 1].w = w_star;
    builder.push_linear_to(target, contract)?;
    let terminal = network::loss(spec, builder.current(), data)?.value;
    builder.check(
        format!("terminal loss {terminal:.6e} <= epsilon {epsilon:.3e}"),
        terminal <= epsilon * (1.0 + 1e-9) + 1e-15,
    );
    builder.finish(Contract::LossBounded { bound: phi_0 })
}

/// Sublevel connection for any activation and all hidden widths at least 2N:
/// layerwise rank repair and equalization on every hidden layer, then the
/// convex final-layer segment, then the reversed repairs of the other side.
pub fn connect_all_wide(
    spec: &NetworkSpec,
    data: &Dataset,
    theta: &Params,
    theta_prime: &Params,
    search_budget: usize,
    seed: u64,
) -> Result<ParamPath> {
    theta.validate(spec)?;
    theta_prime.validate(spec)?;
    network::validate_hypotheses(spec, data, Theorem::AllWideConnect).into_result()?;
    let l_total = spec.num_layers();
    let phi_a = network::loss(spec, theta, data)?.value;
    let phi_b = network::loss(spec, theta_prime, data)?.value;

    // Other side first: repair every hidden layer of theta_prime.
    let mut rho = theta_prime.clone();
    let mut b_segments: Vec<PathSegment> = Vec::new();
    let mut checks: Vec<PathCheck> = Vec::new();
    for l in 1..l_total {
        let (segs, end, c) =
            repair_layer_rank(spec, data, &rho, l, search_budget, seed ^ (0xAB0 + l as u64))?;
        b_segments.extend(segs);
        checks.extend(c);
        rho = end;
    }

    // This side: repair, then equalize each hidden layer onto rho's.
    let mut builder = PathBuilder::new(theta.clone());
    builder.checks_mut().extend(checks);
    for l in 1..l_total {
        let (segs, _, c) = repair_layer_rank(
            spec,
            data,
            builder.current(),
            l,
            search_budget,
            seed ^ (0xCD0 + l as u64),
        )?;
        builder.extend(segs)?;
        builder.checks_mut().extend(c);
        let (eq, _, ec) = equalize_layer_on_params(spec, data, builder.current(), &rho, l)?;
        builder.extend(eq)?;
        builder.checks_mut().extend(ec);
    }

    // Convex final-layer segment onto rho's output layer.
    let mut target = builder.current().clone();
    target.layers[l_total - 1] = rho.layers[l_total - 1].clone();
    builder.push_linear_to(
        target,
        Contract::LossBounded {
            bound: phi_a.max(phi_b),
        },
    )?;

    builder.extend(reverse_segments(&b_segments)?)?;
    let gap = builder.current().max_norm_diff(theta_prime);
    builder.check(
        format!("terminal point matches the requested endpoint (gap {gap:.3e})"),
        gap <= 1e-10,
    );
    builder.finish(Contract::LossBounded {
        bound: phi_a.max(phi_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::pathkit::certify;

    fn spec_of(widths: &[usize], act: Activation, loss: LossKind) -> NetworkSpec {
        NetworkSpec::new(widths.to_vec(), act, loss).unwrap()
    }

    fn leaky() -> Activation {
        Activation::leaky_relu(0.01).unwrap()
    }

    fn square_data(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = linalg::rng_from(seed, 0xDD);
        Dataset::new(
            linalg::random_normal_matrix(n, d, &mut rng),
            linalg::random_normal_matrix(n, m, &mut rng),
        )
        .unwrap()
    }

    fn onehot_data(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
        use rand::RngExt;
        let mut rng = linalg::rng_from(seed, 0xEE);
        let x = linalg::random_normal_matrix(n, d, &mut rng);
        let mut y = Matrix::zeros(n, m);
        for i in 0..n {
            y[(i, rng.random_range(0..m))] = 1.0;
        }
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn connect_lin_data_square_headline() {
        let spec = spec_of(&[4, 6, 4, 2], leaky(), LossKind::Square);
        let data = square_data(4, 4, 2, 1);
        let theta = Params::random_init(&spec, 10);
        let theta_prime = Params::random_init(&spec, 20);
        let path = connect_lin_data(&spec, &data, &theta, &theta_prime, 1e-2, 5).unwrap();
        assert_eq!(path.start().unwrap().max_norm_diff(&theta), 0.0);
        assert_eq!(path.end().unwrap().max_norm_diff(&theta_prime), 0.0);
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(
            cert.passed,
            "drift {:.3e} bound excess {:.3e} checks {:?}",
            cert.max_constant_drift,
            cert.worst_bound_excess,
            cert.rank_checks.iter().filter(|c| !c.passed).collect::<Vec<_>>()
        );
    }

    #[test]
    fn connect_lin_data_cross_entropy() {
        let spec = spec_of(&[4, 6, 4, 2], leaky(), LossKind::CrossEntropy);
        let data = onehot_data(4, 4, 2, 2);
        let theta = Params::random_init(&spec, 30);
        let theta_prime = Params::random_init(&spec, 40);
        let path = connect_lin_data(&spec, &data, &theta, &theta_prime, 1e-2, 6).unwrap();
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed);
        // The meeting point sits at or below both endpoint losses.
        let phi_a = network::loss(&spec, &theta, &data).unwrap().value;
        let phi_b = network::loss(&spec, &theta_prime, &data).unwrap().value;
        assert!(cert.max_loss_observed <= phi_a.max(phi_b) + 1e-6 * (1.0 + phi_a.max(phi_b)));
    }

    #[test]
    fn connect_identical_endpoints_is_trivially_certified() {
        let spec = spec_of(&[3, 5, 2], leaky(), LossKind::Square);
        let data = square_data(3, 3, 2, 3);
        let theta = Params::random_init(&spec, 50);
        let path = connect_lin_data(&spec, &data, &theta, &theta.clone(), 1e-2, 7).unwrap();
        assert_eq!(path.start().unwrap(), theta);
        assert_eq!(path.end().unwrap(), theta);
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn connect_rejects_bad_widths_by_clause() {
        let spec = spec_of(&[3, 5, 5, 2], leaky(), LossKind::Square);
        let data = square_data(3, 3, 2, 3);
        let theta = Params::random_init(&spec, 50);
        match connect_lin_data(&spec, &data, &theta, &theta.clone(), 1e-2, 7) {
            Err(Error::HypothesisFailed { clause, .. }) => {
                assert_eq!(clause, "n_1 > ... > n_L")
            }
            other => panic!("expected hypothesis failure, got {other:?}"),
        }
    }

    #[test]
    fn ray_lin_data_scales_with_constant_loss() {
        let spec = spec_of(&[3, 6, 4, 2], leaky(), LossKind::Square);
        let data = square_data(3, 3, 2, 4);
        let params = Params::random_init(&spec, 60);
        let path = unbounded_ray_lin_data(&spec, &data, &params, 1e3, 8).unwrap();
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed, "drift {:.3e}", cert.max_constant_drift);
        let end = path.end().unwrap();
        let grow = end.layers[1].w.norm() / params.layers[1].w.norm();
        assert!(grow >= 0.99e3, "growth {grow}");
    }

    #[test]
    fn ray_lin_data_unit_scale_is_frozen() {
        let spec = spec_of(&[3, 6, 4, 2], leaky(), LossKind::Square);
        let data = square_data(3, 3, 2, 4);
        let params = Params::random_init(&spec, 61);
        let path = unbounded_ray_lin_data(&spec, &data, &params, 1.0, 8).unwrap();
        assert_eq!(path.segments().len(), 1);
        assert_eq!(path.segments()[0].kind(), "frozen");
        assert_eq!(path.end().unwrap(), params);
    }

    #[test]
    fn ray_lin_data_extreme_scale_keeps_drift_small() {
        let spec = spec_of(&[3, 6, 4, 2], leaky(), LossKind::Square);
        let data = square_data(3, 3, 2, 4);
        let params = Params::random_init(&spec, 62);
        let path = unbounded_ray_lin_data(&spec, &data, &params, 1e6, 9).unwrap();
        let cert = certify(&path, &spec, &data, 32, 1e-5).unwrap();
        assert!(cert.passed, "drift {:.3e} at scale 1e6", cert.max_constant_drift);
    }

    #[test]
    fn connect_wide_first_identical_endpoints() {
        let spec = spec_of(&[3, 8, 5, 3, 2], leaky(), LossKind::Square);
        let data = square_data(4, 3, 2, 6);
        let theta = Params::random_init(&spec, 85);
        let path =
            connect_wide_first(&spec, &data, &theta, &theta.clone(), 1e-2, 256, 10).unwrap();
        assert_eq!(path.start().unwrap(), theta);
        assert_eq!(path.end().unwrap(), theta);
        let cert = certify(&path, &spec, &data, 24, 1e-6).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn descend_reaches_epsilon_square() {
        let spec = spec_of(&[3, 8, 4, 2], leaky(), LossKind::Square);
        let data = square_data(6, 3, 2, 5);
        let params = Params::random_init(&spec, 70);
        let path =
            descend_no_bad_valley(&spec, &data, &params, 1, 1e-6, 256, 9).unwrap();
        let end = path.end().unwrap();
        let terminal = network::loss(&spec, &end, &data).unwrap().value;
        assert!(terminal <= 1e-6, "terminal {terminal:.3e}");
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed);
        let phi_0 = network::loss(&spec, &params, &data).unwrap().value;
        assert!(cert.max_loss_observed <= phi_0 * (1.0 + 1e-6) + 1e-6);
    }

    #[test]
    fn connect_wide_first_headline() {
        let spec = spec_of(&[3, 8, 5, 3, 2], leaky(), LossKind::Square);
        let data = square_data(4, 3, 2, 6);
        let theta = Params::random_init(&spec, 80);
        let theta_prime = Params::random_init(&spec, 90);
        let path =
            connect_wide_first(&spec, &data, &theta, &theta_prime, 1e-2, 256, 10).unwrap();
        assert_eq!(path.start().unwrap().max_norm_diff(&theta), 0.0);
        assert_eq!(path.end().unwrap().max_norm_diff(&theta_prime), 0.0);
        let cert = certify(&path, &spec, &data, 24, 1e-6).unwrap();
        assert!(
            cert.passed,
            "drift {:.3e} excess {:.3e}",
            cert.max_constant_drift, cert.worst_bound_excess
        );
    }

    #[test]
    fn ray_wide_first_grows_without_loss_motion() {
        let spec = spec_of(&[3, 8, 4, 2], leaky(), LossKind::Square);
        let data = square_data(4, 3, 2, 7);
        let params = Params::random_init(&spec, 100);
        let path = unbounded_ray_wide_first(&spec, &data, &params, 1e3).unwrap();
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed, "drift {:.3e}", cert.max_constant_drift);
        assert!(path.end().unwrap().frobenius_norm() > 10.0 * params.frobenius_norm());
    }

    #[test]
    fn descend_all_wide_relu() {
        let spec = spec_of(&[3, 8, 8, 2], Activation::Relu, LossKind::Square);
        let data = square_data(4, 3, 2, 8);
        let params = Params::random_init(&spec, 110);
        let path = descend_all_wide(&spec, &data, &params, 1e-6, 256, 11).unwrap();
        let terminal = network::loss(&spec, &path.end().unwrap(), &data)
            .unwrap()
            .value;
        assert!(terminal <= 1e-6, "terminal {terminal:.3e}");
        let cert = certify(&path, &spec, &data, 32, 1e-6).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn connect_all_wide_relu() {
        let spec = spec_of(&[3, 8, 8, 2], Activation::Relu, LossKind::Square);
        let data = square_data(4, 3, 2, 9);
        let theta = Params::random_init(&spec, 120);
        let theta_prime = Params::random_init(&spec, 130);
        let path = connect_all_wide(&spec, &data, &theta, &theta_prime, 256, 12).unwrap();
        assert_eq!(path.start().unwrap().max_norm_diff(&theta), 0.0);
        assert_eq!(path.end().unwrap().max_norm_diff(&theta_prime), 0.0);
        let cert = certify(&path, &spec, &data, 24, 1e-6).unwrap();
        assert!(
            cert.passed,
            "drift {:.3e} excess {:.3e}",
            cert.max_constant_drift, cert.worst_bound_excess
        );
    }

    #[test]
    fn negative_controls_name_the_failing_clause() {
        let data = square_data(4, 3, 2, 10);
        // n_1 = 2N - 1 for the wide-first theorem.
        let spec = spec_of(&[3, 7, 5, 3, 2], leaky(), LossKind::Square);
        let theta = Params::random_init(&spec, 1);
        match connect_wide_first(&spec, &data, &theta, &theta, 1e-2, 64, 1) {
            Err(Error::HypothesisFailed { clause, .. }) => assert_eq!(clause, "n_1 >= 2N"),
            other => panic!("{other:?}"),
        }
        // K = N - 1 for the all-wide theorem.
        let spec = spec_of(&[3, 3, 3, 2], Activation::Relu, LossKind::Square);
        let theta = Params::random_init(&spec, 1);
        match descend_all_wide(&spec, &data, &theta, 1e-6, 64, 1) {
            Err(Error::HypothesisFailed { clause, .. }) => assert_eq!(clause, "K >= N"),
            other => panic!("{other:?}"),
        }
    }
}
