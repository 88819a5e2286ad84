//! Executable path constructions: canonical first-layer solves, rank-repair
//! curves, column rewiring, bias rank boosts, layer equalization, sublevel
//! connection pipelines, descent paths, and unbounded rays.

pub mod canonical;
pub mod pipelines;
pub mod rank_repair;
pub mod rewire;
pub mod wide;

pub use canonical::{map_h, retarget_first_layer_path};
pub use pipelines::{
    connect_all_wide, connect_lin_data, connect_wide_first, descend_all_wide,
    descend_no_bad_valley, unbounded_ray_lin_data, unbounded_ray_wide_first,
};
pub use rank_repair::path_to_full_rank;
pub use rewire::{rewire_redundant_columns, RewireCurve};
pub use wide::{
    bias_rank_boost, distinct_rows_nudge, equalize_layer, make_layer_output_full_rank, PairCurve,
    TripleCurve, WideLayerWitness,
};

use crate::error::{Error, Result};
use crate::network::Params;
use crate::pathkit::{Contract, ParamPath, PathCheck, PathSegment};

/// Default per-column candidate budget for bias searches.
pub const DEFAULT_SEARCH_BUDGET: usize = 256;

/// Relative singular-value floor demanded of full-rank weight detours inside
/// the connection pipelines.
pub(crate) const PIPELINE_SV_FLOOR: f64 = 1e-4;
pub(crate) const PIPELINE_DETOUR_RETRIES: usize = 24;

/// Condition number above which an h-solve gets a warning note.
pub(crate) const COND_WARN: f64 = 1e8;

/// Accumulates segments while enforcing chain continuity, tracking the
/// current endpoint and construction-time checks.
pub(crate) struct PathBuilder {
    start: Params,
    segments: Vec<PathSegment>,
    checks: Vec<PathCheck>,
    current: Params,
}

impl PathBuilder {
    pub fn new(start: Params) -> Self {
        PathBuilder {
            current: start.clone(),
            start,
            segments: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn current(&self) -> &Params {
        &self.current
    }

    pub fn push(&mut self, segment: PathSegment) -> Result<()> {
        let seg_start = segment.start()?;
        let gap = seg_start.max_norm_diff(&self.current);
        if !(gap <= crate::pathkit::CHAIN_TOL) {
            return Err(Error::Internal(format!(
                "construction produced a discontinuous segment (gap {gap:.3e})"
            )));
        }
        self.current = segment.end()?;
        self.segments.push(segment);
        Ok(())
    }

    /// Straight segment from the current point to `end`.
    pub fn push_linear_to(&mut self, end: Params, contract: Contract) -> Result<()> {
        let seg = PathSegment::linear(self.current.clone(), end, contract);
        self.current = seg.end()?;
        self.segments.push(seg);
        Ok(())
    }

    pub fn extend(&mut self, segments: Vec<PathSegment>) -> Result<()> {
        for seg in segments {
            self.push(seg)?;
        }
        Ok(())
    }

    pub fn check(&mut self, description: impl Into<String>, passed: bool) {
        self.checks.push(PathCheck {
            description: description.into(),
            passed,
        });
    }

    pub fn checks_mut(&mut self) -> &mut Vec<PathCheck> {
        &mut self.checks
    }

    /// Finish with the given global contract; an empty builder yields a
    /// frozen path at the start point.
    pub fn finish(self, contract: Contract) -> Result<ParamPath> {
        let segments = if self.segments.is_empty() {
            vec![PathSegment::frozen(self.start)]
        } else {
            self.segments
        };
        Ok(ParamPath::new(segments, contract)?.with_checks(self.checks))
    }

    pub fn into_parts(self) -> (Vec<PathSegment>, Params, Vec<PathCheck>) {
        (self.segments, self.current, self.checks)
    }
}
