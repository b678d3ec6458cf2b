//! Variance (scale) functions and their normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::DesignSpace;
use crate::error::{DesignError, Result};

/// Unnormalized shapes of the fixed variance functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaShape {
    /// `(1 + |x|)^{-1}`
    Reciprocal,
    /// `1`
    Constant,
    /// `0.2 + |x|`
    Vee,
    /// `1 + (x/2)^2`
    Bowl,
    /// `0.2 + x`, for nonnegative domains
    ShiftedLinear,
    /// `1 / (1 + x)`, for nonnegative domains
    InverseLinear,
}

impl SigmaShape {
    pub const ALL: [SigmaShape; 6] = [
        SigmaShape::Reciprocal,
        SigmaShape::Constant,
        SigmaShape::Vee,
        SigmaShape::Bowl,
        SigmaShape::ShiftedLinear,
        SigmaShape::InverseLinear,
    ];

    /// The four symmetric shapes used on `[-1, 1]`.
    pub const SYMMETRIC: [SigmaShape; 4] = [
        SigmaShape::Reciprocal,
        SigmaShape::Constant,
        SigmaShape::Vee,
        SigmaShape::Bowl,
    ];

    pub fn raw(self, x: f64) -> f64 {
        match self {
            SigmaShape::Reciprocal => 1.0 / (1.0 + x.abs()),
            SigmaShape::Constant => 1.0,
            SigmaShape::Vee => 0.2 + x.abs(),
            SigmaShape::Bowl => 1.0 + (x / 2.0).powi(2),
            SigmaShape::ShiftedLinear => 0.2 + x,
            SigmaShape::InverseLinear => 1.0 / (1.0 + x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaShape::Reciprocal => "reciprocal",
            SigmaShape::Constant => "constant",
            SigmaShape::Vee => "vee",
            SigmaShape::Bowl => "bowl",
            SigmaShape::ShiftedLinear => "shifted-linear",
            SigmaShape::InverseLinear => "inverse-linear",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            SigmaShape::Reciprocal => "(1+|x|)^-1",
            SigmaShape::Constant => "1",
            SigmaShape::Vee => "0.2+|x|",
            SigmaShape::Bowl => "1+(x/2)^2",
            SigmaShape::ShiftedLinear => "0.2+x",
            SigmaShape::InverseLinear => "1/(1+x)",
        }
    }

    pub fn is_even(self) -> bool {
        !matches!(self, SigmaShape::ShiftedLinear | SigmaShape::InverseLinear)
    }
}

impl fmt::Display for SigmaShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SigmaShape {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        SigmaShape::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| DesignError::InvalidParameter {
                name: "sigma",
                reason: format!("unknown variance preset `{s}`"),
            })
    }
}

/// A fixed variance function rescaled so that its mean square over the space
/// is one (`N^{-1} sum sigma^2 = 1`, or `int sigma^2 dx = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceFunction {
    shape: SigmaShape,
    scale: f64,
}

impl VarianceFunction {
    pub fn normalized(shape: SigmaShape, space: &DesignSpace) -> Result<Self> {
        for &x in space.points() {
            let v = shape.raw(x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(DesignError::NonPositiveSigma { x, value: v });
            }
        }
        let ms = space.average(|x| shape.raw(x).powi(2));
        Ok(Self { shape, scale: 1.0 / ms.sqrt() })
    }

    pub fn shape(&self) -> SigmaShape {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.scale * self.shape.raw(x)
    }

    pub fn values(&self, space: &DesignSpace) -> Vec<f64> {
        space.points().iter().map(|&x| self.eval(x)).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.shape == SigmaShape::Constant
    }
}

/// Either a fixed variance function, or the design-coupled class
/// `sigma_xi(x | r) = c_r xi(x)^{r/2}` indexed by the exponent `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VarianceSpec {
    Fixed(VarianceFunction),
    DesignCoupled { r: f64 },
}
