//! Regressor bases: monomials and clamped cubic B-splines.

use nalgebra::DMatrix;

use crate::error::{DesignError, Result};

/// Internal knots used for the reference growth-curve fit on `[0, 18]`.
pub const BESTKNOTS: [f64; 12] = [0.2, 0.5, 1.0, 1.5, 2.0, 5.0, 8.0, 10.0, 11.5, 13.0, 14.5, 16.0];
/// Internal knots of the reduced basis the experimenter fits on `[0, 18]`.
pub const DESKNOTS: [f64; 8] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0];

pub const KNOT_PRESETS: [&str; 2] = ["bestknots", "desknots"];

/// Internal knots for a named preset, together with its domain.
pub fn knot_preset(name: &str) -> Option<(Vec<f64>, (f64, f64))> {
    match name {
        "bestknots" => Some((BESTKNOTS.to_vec(), (0.0, 18.0))),
        "desknots" => Some((DESKNOTS.to_vec(), (0.0, 18.0))),
        _ => None,
    }
}

const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicBSpline {
    lo: f64,
    hi: f64,
    internal: Vec<f64>,
    /// Full clamped knot vector: boundary knots repeated four times.
    knots: Vec<f64>,
}

impl CubicBSpline {
    pub fn new(lo: f64, hi: f64, internal: Vec<f64>) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(DesignError::InvalidBasis(format!("bad spline domain [{lo}, {hi}]")));
        }
        if internal.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DesignError::InvalidBasis(
                "internal knots must be strictly increasing".into(),
            ));
        }
        if internal.iter().any(|&k| !(k > lo && k < hi)) {
            return Err(DesignError::InvalidBasis(format!(
                "internal knots must lie strictly inside ({lo}, {hi})"
            )));
        }
        let mut knots = vec![lo; DEGREE + 1];
        knots.extend_from_slice(&internal);
        knots.extend(std::iter::repeat(hi).take(DEGREE + 1));
        Ok(Self { lo, hi, internal, knots })
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        let (internal, (lo, hi)) = knot_preset(name)
            .ok_or_else(|| DesignError::InvalidBasis(format!("unknown knot preset `{name}`")))?;
        Self::new(lo, hi, internal)
    }

    pub fn dimension(&self) -> usize {
        self.internal.len() + DEGREE + 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn internal_knots(&self) -> &[f64] {
        &self.internal
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Greville abscissae `(t_{j+1} + t_{j+2} + t_{j+3}) / 3`.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|j| self.knots[j + 1..j + 1 + DEGREE].iter().sum::<f64>() / DEGREE as f64)
            .collect()
    }

    /// Support interval `[t_j, t_{j+4}]` of the j-th B-spline.
    pub fn support(&self, j: usize) -> (f64, f64) {
        (self.knots[j], self.knots[j + DEGREE + 1])
    }

    fn span(&self, x: f64) -> usize {
        let p = self.dimension();
        if x >= self.hi {
            return p - 1;
        }
        // largest k in [3, p-1] with t_k <= x
        let k = self.knots.partition_point(|&t| t <= x) - 1;
        k.clamp(DEGREE, p - 1)
    }

    /// Writes all `p` basis values at `x` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        if !(x >= self.lo && x <= self.hi) {
            return Err(DesignError::OutOfDomain { x, lo: self.lo, hi: self.hi });
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let k = self.span(x);
        let t = &self.knots;
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (r, v) in n.iter().enumerate() {
            out[k - DEGREE + r] = *v;
        }
        Ok(())
    }

    pub fn eval_one(&self, j: usize, x: f64) -> f64 {
        let mut buf = vec![0.0; self.dimension()];
        match self.eval_into(x, &mut buf) {
            Ok(()) => buf[j],
            Err(_) => 0.0,
        }
    }

    /// Abscissa at which each basis function attains its maximum, by
    /// golden-section search on its support.
    pub fn peak_locations(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|j| {
                let (a, b) = self.support(j);
                let f = |x: f64| self.eval_one(j, x);
                let mut best = golden_section_max(f, a, b, 1e-8);
                // monotone end splines peak on the boundary itself
                for end in [a, b] {
                    if f(end) >= f(best) {
                        best = end;
                    }
                }
                best
            })
            .collect()
    }
}

/// Maximizer of a unimodal function on `[a, b]` to within `tol`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// `(1, x, ..., x^degree)`.
    Polynomial { degree: usize },
    CubicBSpline(CubicBSpline),
}

impl Basis {
    pub fn polynomial(degree: usize) -> Self {
        Basis::Polynomial { degree }
    }

    pub fn straight_line() -> Self {
        Basis::Polynomial { degree: 1 }
    }

    pub fn spline(lo: f64, hi: f64, internal: Vec<f64>) -> Result<Self> {
        Ok(Basis::CubicBSpline(CubicBSpline::new(lo, hi, internal)?))
    }

    pub fn dimension(&self) -> usize {
        match self {
            Basis::Polynomial { degree } => degree + 1,
            Basis::CubicBSpline(s) => s.dimension(),
        }
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        match self {
            Basis::Polynomial { .. } => {
                if !x.is_finite() {
                    return Err(DesignError::NonFiniteBasisValue { x });
                }
                let mut v = 1.0;
                for o in out.iter_mut() {
                    *o = v;
                    v *= x;
                }
                if out.iter().any(|o| !o.is_finite()) {
                    return Err(DesignError::NonFiniteBasisValue { x });
                }
                Ok(())
            }
            Basis::CubicBSpline(s) => s.eval_into(x, out),
        }
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Rows `f'(x_i)` for every abscissa.
    pub fn design_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.dimension();
        let mut m = DMatrix::zeros(xs.len(), p);
        let mut buf = vec![0.0; p];
        for (i, &x) in xs.iter().enumerate() {
            self.eval_into(x, &mut buf)?;
            for j in 0..p {
                m[(i, j)] = buf[j];
            }
        }
        Ok(m)
    }

    pub fn describe(&self) -> String {
        match self {
            Basis::Polynomial { degree } => format!("polynomial(degree={degree})"),
            Basis::CubicBSpline(s) => format!(
                "cubic-bspline([{}, {}], {} internal knots)",
                s.lo,
                s.hi,
                s.internal.len()
            ),
        }
    }
}
