//! Loss-constant paths that end at a point where every weight matrix above
//! the first layer has full rank: canonicalize the first layer, slide the
//! feature columns off the dependent rows of the next weight matrix, then
//! refill the freed rows with a well-conditioned completion.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::network::{self, Dataset, NetworkSpec, Params, Theorem};
use crate::pathkit::{Contract, LayerCurve, ParamPath, PathCheck, PathSegment};

use super::canonical::{canonicalize_on_subnet, h_segment};
use super::PathBuilder;

const RANK_TOL: f64 = linalg::DEFAULT_RANK_TOL;
/// Relative singular-value margin a completed weight matrix must clear.
const COMPLETION_FLOOR: f64 = 1e-6;

/// Replacement rows for the freed block: a seeded random orthonormal frame,
/// scaled to the kept block, retried until the completed matrix clears the
/// rank floor.
fn complete_rows(
    w: &Matrix,
    kept_rows: &[usize],
    freed_rows: &[usize],
    seed: u64,
) -> Result<Matrix> {
    let cols = w.ncols();
    let kept = w.select_rows(kept_rows.iter());
    let scale = if kept_rows.is_empty() {
        1.0
    } else {
        linalg::extreme_singular_values(&kept).1.max(1e-6)
    };
    for attempt in 0..16u64 {
        let mut rng = linalg::rng_from(seed, 0xC0A1 + attempt);
        let frame_rows = freed_rows.len().min(cols);
        let g = linalg::random_normal_matrix(freed_rows.len(), cols, &mut rng);
        // Orthonormalize the first `frame_rows` rows; leave the rest zero.
        let mut q: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(frame_rows);
        for i in 0..freed_rows.len() {
            if q.len() == frame_rows {
                break;
            }
            let mut v = g.row(i).transpose();
            for _ in 0..2 {
                for qi in &q {
                    let c = qi.dot(&v);
                    v -= qi * c;
                }
            }
            let norm = v.norm();
            if norm > 1e-8 {
                q.push(v / norm);
            }
        }
        let mut candidate = w.clone();
        for (slot, &row) in freed_rows.iter().enumerate() {
            for c in 0..cols {
                let val = if slot < q.len() { q[slot][c] * scale } else { 0.0 };
                candidate[(row, c)] = val;
            }
        }
        let report = linalg::numerical_rank(&candidate, RANK_TOL)?;
        let healthy = report.rank == cols
            && report.min_singular_value > COMPLETION_FLOOR * report.max_singular_value.max(1.0);
        if healthy {
            return Ok(candidate);
        }
    }
    Err(Error::Internal(
        "could not complete the freed weight rows to full rank".into(),
    ))
}

/// Independent rows of `w` (lowest-index greedy) and the coefficient matrix E
/// with w(freed, :) = E * w(kept, :).
fn row_dependency(w: &Matrix) -> Result<(Vec<usize>, Vec<usize>, Matrix)> {
    let wt = w.transpose();
    let kept = linalg::independent_column_basis(&wt, RANK_TOL)?;
    let freed: Vec<usize> = (0..w.nrows()).filter(|i| !kept.contains(i)).collect();
    let e = linalg::coefficient_matrix(&wt, &kept, RANK_TOL)?.transpose();
    Ok((kept, freed, e))
}

/// Subnet-level full-rank repair: returns segments, the endpoint, and checks.
/// Layers start+1..=L of the endpoint all have full column rank.
pub(crate) fn path_to_full_rank_on(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    start: usize,
    seed: u64,
) -> Result<(Vec<PathSegment>, Params, Vec<PathCheck>)> {
    let l_total = spec.num_layers();
    let mut builder = PathBuilder::new(params.clone());
    for (step, k_rep) in ((start + 1)..=l_total).enumerate() {
        let w = &builder.current().layers[k_rep - 1].w;
        let (rows, cols) = w.shape();
        let report = linalg::numerical_rank(w, RANK_TOL)?;
        if report.rank == rows.min(cols) {
            builder.check(
                format!(
                    "W_{k_rep} already full rank ({} of {})",
                    report.rank,
                    rows.min(cols)
                ),
                true,
            );
            continue;
        }

        // Move the first subnet layer into canonical form against the output
        // just below the deficient weight matrix.
        let (can_segs, _, can_checks) =
            canonicalize_on_subnet(spec, data, builder.current(), start, k_rep - 1)?;
        builder.extend(can_segs)?;
        builder.checks_mut().extend(can_checks);

        // Slide the feature columns off the dependent rows.
        let base = builder.current().clone();
        let c = network::forward_to_layer(spec, &base, data, k_rep - 1)?;
        let w_cur = base.layers[k_rep - 1].w.clone();
        let (kept, freed, e) = row_dependency(&w_cur)?;
        let absorbed = c.select_columns(freed.iter()) * &e; // N x |kept|
        let mut a_end = DMatrix::zeros(c.nrows(), c.ncols());
        for (pos, &bi) in kept.iter().enumerate() {
            for i in 0..c.nrows() {
                a_end[(i, bi)] = c[(i, bi)] + absorbed[(i, pos)];
            }
        }
        let upper: Vec<LayerCurve> = base.layers[start..k_rep - 1]
            .iter()
            .map(LayerCurve::constant)
            .collect();
        let seg = h_segment(
            spec,
            data,
            &base,
            start,
            k_rep - 1,
            upper,
            c.clone(),
            a_end,
            Contract::LossConstant,
        )?;
        builder.push(seg)?;

        // The freed rows no longer touch the loss; refill them.
        let completed = complete_rows(&w_cur, &kept, &freed, seed.wrapping_add(step as u64))?;
        let mut next = builder.current().clone();
        next.layers[k_rep - 1].w = completed;
        builder.push_linear_to(next, Contract::LossConstant)?;

        let final_report =
            linalg::numerical_rank(&builder.current().layers[k_rep - 1].w, RANK_TOL)?;
        builder.check(
            format!(
                "W_{k_rep} repaired to rank {} (min sv {:.3e})",
                final_report.rank, final_report.min_singular_value
            ),
            final_report.rank == rows.min(cols),
        );
    }
    Ok(builder.into_parts())
}

/// Loss-constant path from `params` to a point where W_2..W_L all have full
/// rank (the full-rank property every connection pipeline needs).
pub fn path_to_full_rank(
    spec: &NetworkSpec,
    data: &Dataset,
    params: &Params,
    seed: u64,
) -> Result<(ParamPath, Params)> {
    params.validate(spec)?;
    network::validate_hypotheses(spec, data, Theorem::LinData).into_result()?;
    let (segments, end, checks) = path_to_full_rank_on(spec, data, params, 1, seed)?;
    let mut builder = PathBuilder::new(params.clone());
    builder.extend(segments)?;
    builder.checks_mut().extend(checks);
    let path = builder.finish(Contract::LossConstant)?;
    debug_assert_eq!(path.end()?.max_norm_diff(&end), 0.0);
    Ok((path, end))
}
