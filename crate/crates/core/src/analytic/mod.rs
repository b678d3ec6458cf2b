//! Closed-form and variational design constructions.

use std::sync::Arc;

use crate::design::{DesignMeasure, DesignSpace};
use crate::error::Result;
use crate::variance::VarianceFunction;

pub mod quadratic;
pub mod straight_line;

pub use quadratic::{
    quadratic_moments, solve_quadratic_continuous, DensityFamilyParams, NormalizationMode, QuadraticMomentSet,
    QuadraticOptions, QuadraticSolution,
};
pub use straight_line::{
    solve_straight_line_discrete, StraightLineBranch, StraightLineMultipliers, StraightLineOptions,
    StraightLineSolution,
};

/// Weights (or density) proportional to `sigma`; minimizes the maximum bias.
pub fn minbias_design(space: Arc<DesignSpace>, sigma: &VarianceFunction) -> Result<DesignMeasure> {
    let v = sigma.values(&space);
    DesignMeasure::normalized(space, v)
}

/// Equal weights `1/N`, or the density `1/vol`.
pub fn uniform_design(space: Arc<DesignSpace>) -> Result<DesignMeasure> {
    let n = space.len();
    DesignMeasure::normalized(space, vec![1.0; n])
}
