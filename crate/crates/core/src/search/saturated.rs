//! Equal mass at the grid points nearest the peaks of the spline basis.

use std::sync::Arc;

use crate::basis::CubicBSpline;
use crate::design::{DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};

/// Indices of the space points assigned to each spline peak, in peak order.
///
/// A peak whose nearest point is already taken moves to the closest free
/// point; [`DesignError::DuplicateSnap`] is returned only when no free point
/// remains.
pub fn saturated_indices(spline: &CubicBSpline, space: &DesignSpace) -> Result<Vec<usize>> {
    let x = space.points();
    let mut taken = vec![false; x.len()];
    let mut out = Vec::new();
    for peak in spline.peak_locations() {
        let mut order: Vec<usize> = (0..x.len()).collect();
        // distance first, then the smaller abscissa
        order.sort_by(|&a, &b| (x[a] - peak).abs().total_cmp(&(x[b] - peak).abs()).then(a.cmp(&b)));
        let i = order.into_iter().find(|&i| !taken[i]).ok_or(DesignError::DuplicateSnap)?;
        taken[i] = true;
        out.push(i);
    }
    Ok(out)
}

pub fn saturated_design(spline: &CubicBSpline, space: Arc<DesignSpace>) -> Result<DesignMeasure> {
    if !space.is_discrete() {
        return Err(DesignError::InvalidSpace("saturated designs live on discrete spaces".into()));
    }
    let idx = saturated_indices(spline, &space)?;
    let mut w = vec![0.0; space.len()];
    let p = idx.len() as f64;
    for i in idx {
        w[i] = 1.0 / p;
    }
    DesignMeasure::new(space, w)
}
