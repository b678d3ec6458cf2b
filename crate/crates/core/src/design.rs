//! Design spaces, design measures and their n-point implementations.
//!
//! A space is either a finite ordered point set (discrete) or an interval
//! carrying a uniform trapezoid grid (continuous). Both are handled through
//! two per-node weight vectors:
//!
//! * the *averaging* weight `a_i`, with `sum a_i g(x_i)` standing for
//!   `N^{-1} sum g(x_i)` (discrete) or `int g dx` (continuous);
//! * the *summing* weight `b_i`, equal to 1 for discrete spaces and to the
//!   trapezoid weight for continuous ones, so that `sum b_i l_i g(x_i)` is
//!   `sum xi_i g(x_i)` or `int m g dx` for the measure's values `l_i`.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

pub const DEFAULT_GRID_NODES: usize = 2001;

/// Tolerance on the total mass of a discrete measure.
pub const DISCRETE_MASS_TOL: f64 = 1e-12;
/// Tolerance on the integral of a continuous density.
pub const CONTINUOUS_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    kind: SpaceKind,
    points: Vec<f64>,
    bounds: (f64, f64),
    average_weights: Vec<f64>,
    sum_weights: Vec<f64>,
}

impl DesignSpace {
    /// A discrete space on the given strictly increasing abscissae.
    pub fn discrete(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(DesignError::InvalidSpace(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(DesignError::InvalidSpace("non-finite abscissa".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DesignError::InvalidSpace(
                "points must be strictly increasing".into(),
            ));
        }
        let n = points.len();
        let bounds = (points[0], points[n - 1]);
        Ok(Self {
            kind: SpaceKind::Discrete,
            points,
            bounds,
            average_weights: vec![1.0 / n as f64; n],
            sum_weights: vec![1.0; n],
        })
    }

    /// `n` equispaced points spanning `[lo, hi]`, endpoints included.
    pub fn discrete_grid(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 2 {
            return Err(DesignError::InvalidSpace(format!(
                "grid needs lo < hi and n >= 2 (lo={lo}, hi={hi}, n={n})"
            )));
        }
        Self::discrete(equispaced(lo, hi, n))
    }

    /// The interval `[lo, hi]` with an `nodes`-point composite trapezoid rule.
    pub fn continuous(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(DesignError::InvalidSpace(format!(
                "interval [{lo}, {hi}] is empty or unbounded"
            )));
        }
        if nodes < 3 {
            return Err(DesignError::InvalidSpace(
                "quadrature grid needs at least 3 nodes".into(),
            ));
        }
        let points = equispaced(lo, hi, nodes);
        let h = (hi - lo) / (nodes - 1) as f64;
        let mut w = vec![h; nodes];
        w[0] = 0.5 * h;
        w[nodes - 1] = 0.5 * h;
        Ok(Self {
            kind: SpaceKind::Continuous,
            points,
            bounds: (lo, hi),
            average_weights: w.clone(),
            sum_weights: w,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn is_discrete(&self) -> bool {
        self.kind == SpaceKind::Discrete
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Lebesgue measure of the interval (continuous) or N (discrete).
    pub fn volume(&self) -> f64 {
        match self.kind {
            SpaceKind::Discrete => self.points.len() as f64,
            SpaceKind::Continuous => self.bounds.1 - self.bounds.0,
        }
    }

    pub fn average_weights(&self) -> &[f64] {
        &self.average_weights
    }

    pub fn sum_weights(&self) -> &[f64] {
        &self.sum_weights
    }

    /// Index of the mirror image `-x_i` for every point, if the point set is
    /// closed under negation.
    pub fn mirror_indices(&self) -> Option<Vec<usize>> {
        let n = self.points.len();
        let scale = self.bounds.0.abs().max(self.bounds.1.abs()).max(1.0);
        (0..n)
            .map(|i| {
                let j = n - 1 - i;
                ((self.points[i] + self.points[j]).abs() <= 1e-12 * scale).then_some(j)
            })
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.mirror_indices().is_some()
    }

    /// Index of the point closest to `x`; ties go to the smaller abscissa.
    pub fn nearest_index(&self, x: f64) -> usize {
        let pts = &self.points;
        let pos = pts.partition_point(|&p| p < x);
        if pos == 0 {
            return 0;
        }
        if pos == pts.len() {
            return pts.len() - 1;
        }
        if (x - pts[pos - 1]) <= (pts[pos] - x) {
            pos - 1
        } else {
            pos
        }
    }

    /// Quadrature of `g` over the space (averaging weights).
    pub fn average<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.points
            .iter()
            .zip(&self.average_weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

pub(crate) fn equispaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
        .collect()
}

/// Probability weights on a discrete space, or density values at the nodes
/// of a continuous one.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMeasure {
    space: Arc<DesignSpace>,
    values: Vec<f64>,
}

impl DesignMeasure {
    pub fn new(space: Arc<DesignSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(DesignError::InvalidMeasure(format!(
                "{} values for a space of {} points",
                values.len(),
                space.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(DesignError::InvalidMeasure(format!(
                "value {v} at index {i} is negative or non-finite"
            )));
        }
        let measure = Self { space, values };
        let mass = measure.total_mass();
        let tol = match measure.space.kind() {
            SpaceKind::Discrete => DISCRETE_MASS_TOL,
            SpaceKind::Continuous => CONTINUOUS_MASS_TOL,
        };
        if (mass - 1.0).abs() > tol {
            return Err(DesignError::InvalidMeasure(format!(
                "total mass {mass} differs from 1"
            )));
        }
        Ok(measure)
    }

    /// Rescales nonnegative values to unit mass before validating.
    pub fn normalized(space: Arc<DesignSpace>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(DesignError::InvalidMeasure(format!(
                "{} values for a space of {} points",
                values.len(),
                space.len()
            )));
        }
        let mass: f64 = values
            .iter()
            .zip(space.sum_weights())
            .map(|(v, w)| v * w)
            .sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(DesignError::InvalidMeasure(format!(
                "cannot normalize values of total mass {mass}"
            )));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(space, values)
    }

    /// Empirical measure of an exact design given as indices into the space.
    pub fn from_indices(space: Arc<DesignSpace>, indices: &[usize]) -> Result<Self> {
        if !space.is_discrete() {
            return Err(DesignError::InvalidMeasure(
                "exact designs live on discrete spaces".into(),
            ));
        }
        if indices.is_empty() {
            return Err(DesignError::InvalidMeasure("empty exact design".into()));
        }
        let mut counts = vec![0.0; space.len()];
        for &i in indices {
            *counts.get_mut(i).ok_or_else(|| {
                DesignError::InvalidMeasure(format!("index {i} outside the space"))
            })? += 1.0;
        }
        let n = indices.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        Self::new(space, counts)
    }

    /// Empirical measure of an exact design given as abscissae, each snapped
    /// to its nearest space point.
    pub fn from_points(space: Arc<DesignSpace>, xs: &[f64]) -> Result<Self> {
        let idx: Vec<usize> = xs.iter().map(|&x| space.nearest_index(x)).collect();
        Self::from_indices(space, &idx)
    }

    pub fn space(&self) -> &Arc<DesignSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.sum_weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Indices of the nodes carrying positive weight or density.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] > 0.0).collect()
    }

    /// Probability mass attached to each node (weights, or density times
    /// trapezoid weight).
    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.space.sum_weights())
            .map(|(v, w)| v * w)
            .collect()
    }

    /// Cumulative distribution function evaluated at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let pts = self.space.points();
        match self.space.kind() {
            SpaceKind::Discrete => pts
                .iter()
                .zip(&self.values)
                .take_while(|(p, _)| **p <= x)
                .map(|(_, v)| v)
                .sum::<f64>()
                .min(1.0),
            SpaceKind::Continuous => {
                let mut acc = 0.0;
                for k in 0..pts.len() - 1 {
                    let (x0, x1) = (pts[k], pts[k + 1]);
                    let (m0, m1) = (self.values[k], self.values[k + 1]);
                    if x >= x1 {
                        acc += 0.5 * (m0 + m1) * (x1 - x0);
                    } else {
                        if x > x0 {
                            let s = x - x0;
                            let slope = (m1 - m0) / (x1 - x0);
                            acc += m0 * s + 0.5 * slope * s * s;
                        }
                        break;
                    }
                }
                acc.min(1.0)
            }
        }
    }

    /// Generalized inverse of the CDF, `inf { x : F(x) >= u }`.
    pub fn quantile(&self, u: f64) -> f64 {
        let pts = self.space.points();
        let u = u.clamp(0.0, 1.0);
        match self.space.kind() {
            SpaceKind::Discrete => {
                // The smallest point whose CDF reaches u; an exact tie at a
                // CDF jump therefore resolves to the smaller abscissa.
                let mut acc = 0.0;
                let mut last = 0;
                for (i, &v) in self.values.iter().enumerate() {
                    if v > 0.0 {
                        acc += v;
                        last = i;
                        if acc >= u - 1e-12 && u > 0.0 {
                            return pts[i];
                        }
                    }
                }
                if u == 0.0 {
                    let first = self.values.iter().position(|&v| v > 0.0).unwrap_or(0);
                    return pts[first];
                }
                pts[last]
            }
            SpaceKind::Continuous => {
                let mut acc = 0.0;
                for k in 0..pts.len() - 1 {
                    let (x0, x1) = (pts[k], pts[k + 1]);
                    let (m0, m1) = (self.values[k], self.values[k + 1]);
                    let cell = 0.5 * (m0 + m1) * (x1 - x0);
                    if cell > 0.0 && acc + cell >= u {
                        let target = (u - acc).max(0.0);
                        let h = x1 - x0;
                        let slope = (m1 - m0) / h;
                        // solve m0 s + slope s^2 / 2 = target for s in [0, h]
                        let s = if slope.abs() < 1e-14 * (m0.abs() + 1.0) {
                            target / m0
                        } else {
                            let disc = (m0 * m0 + 2.0 * slope * target).max(0.0);
                            2.0 * target / (m0 + disc.sqrt())
                        };
                        return (x0 + s.clamp(0.0, h)).min(x1);
                    }
                    acc += cell;
                }
                let last = self.values.iter().rposition(|&v| v > 0.0).unwrap_or(pts.len() - 1);
                pts[last]
            }
        }
    }

    /// Sample serialization as `x,weight` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "weight"])?;
        for (x, v) in self.space.points().iter().zip(&self.values) {
            wtr.write_record([format_f64(*x), format_f64(*v)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `x,weight` rows, skipping `#` comment lines. The abscissae
    /// define a discrete space unless `continuous` is set, in which case they
    /// must form a uniform grid.
    pub fn read_csv<R: Read>(r: R, continuous: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| DesignError::Parse(format!("missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| DesignError::Parse(e.to_string()))
            };
            xs.push(parse(0)?);
            vs.push(parse(1)?);
        }
        let space = if continuous {
            let n = xs.len();
            if n < 3 {
                return Err(DesignError::Parse("continuous design needs >= 3 rows".into()));
            }
            let s = DesignSpace::continuous(xs[0], xs[n - 1], n)?;
            let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
            if s.points().iter().zip(&xs).any(|(a, b)| (a - b).abs() > 1e-9 * h) {
                return Err(DesignError::Parse("abscissae are not a uniform grid".into()));
            }
            s
        } else {
            DesignSpace::discrete(xs)?
        };
        Self::new(Arc::new(space), vs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MeasureDto::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dto: MeasureDto = serde_json::from_str(s)?;
        dto.try_into()
    }
}

/// Shortest representation that parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasureDto {
    kind: SpaceKind,
    bounds: [f64; 2],
    points: Vec<f64>,
    values: Vec<f64>,
}

impl From<&DesignMeasure> for MeasureDto {
    fn from(m: &DesignMeasure) -> Self {
        let (lo, hi) = m.space.bounds();
        Self {
            kind: m.space.kind(),
            bounds: [lo, hi],
            points: m.space.points().to_vec(),
            values: m.values.clone(),
        }
    }
}

impl TryFrom<MeasureDto> for DesignMeasure {
    type Error = DesignError;

    fn try_from(d: MeasureDto) -> Result<Self> {
        let space = match d.kind {
            SpaceKind::Discrete => DesignSpace::discrete(d.points)?,
            SpaceKind::Continuous => DesignSpace::continuous(d.bounds[0], d.bounds[1], d.points.len())?,
        };
        DesignMeasure::new(Arc::new(space), d.values)
    }
}

/// Places `n` points at the quantiles `(i - 1/2)/n` of the measure.
///
/// On a discrete space every quantile is already a space point; on a
/// continuous space the exact inverse of the piecewise-quadratic CDF is used.
pub fn implement_design(measure: &DesignMeasure, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(DesignError::InvalidParameter {
            name: "n",
            reason: "must be at least 1".into(),
        });
    }
    let mut xs: Vec<f64> = (1..=n)
        .map(|i| measure.quantile((i as f64 - 0.5) / n as f64))
        .collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    Ok(xs)
}

/// [`implement_design`] returning indices into a discrete space.
pub fn implement_indices(measure: &DesignMeasure, n: usize) -> Result<Vec<usize>> {
    let space = measure.space();
    Ok(implement_design(measure, n)?
        .into_iter()
        .map(|x| space.nearest_index(x))
        .collect())
}
