//! Linear quantile regression solved exactly as a linear program.
//!
//! The check-loss objective is convex and piecewise linear; its minimum is
//! attained at a vertex `theta = X_h^{-1} y_h` for some set `h` of `p`
//! observations. The solver walks between such vertices along edges
//! `d = +-X_h^{-1} e_j`, choosing the edge of steepest one-sided descent and
//! stepping to the minimizing breakpoint (a weighted median). The starting
//! vertex depends on `X` only, so the fit is equivariant in `y`.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::Basis;
use crate::error::{DesignError, Result};

/// Check function total `sum r_i (tau - 1{r_i < 0})`.
pub fn check_loss(residuals: &[f64], tau: f64) -> f64 {
    residuals.iter().map(|&r| rho(r, tau)).sum()
}

fn rho(r: f64, tau: f64) -> f64 {
    if r < 0.0 {
        r * (tau - 1.0)
    } else {
        r * tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    /// Largest violation of nonnegativity among the one-sided directional
    /// derivatives along `+-e_j`.
    pub optimality_gap: f64,
}

impl QuantileFit {
    pub fn tolerance(&self) -> f64 {
        1e-7 * (1.0 + self.objective.abs())
    }
}

pub fn predict(fit: &QuantileFit, basis: &Basis, x: f64) -> Result<f64> {
    let f = basis.eval(x)?;
    Ok(f.iter().zip(&fit.theta_hat).map(|(a, b)| a * b).sum())
}

pub fn fit_quantile(x: &[f64], y: &[f64], basis: &Basis, tau: f64) -> Result<QuantileFit> {
    let xm = basis.design_matrix(x)?;
    fit_quantile_matrix(&xm, y, tau)
}

/// Upper bound on visited vertices of an optimal face.
const FACE_LIMIT: usize = 512;

struct Lp<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    tau: f64,
    zero_tol: f64,
}

struct Vertex {
    basis: Vec<usize>,
    inv: DMatrix<f64>,
    theta: DVector<f64>,
    resid: Vec<f64>,
}

impl<'a> Lp<'a> {
    fn vertex(&self, basis: Vec<usize>) -> Option<Vertex> {
        let p = basis.len();
        let xh = DMatrix::from_fn(p, p, |r, c| self.x[(basis[r], c)]);
        let inv = xh.clone().lu().try_inverse()?;
        let yh = DVector::from_iterator(p, basis.iter().map(|&i| self.y[i]));
        let theta = &inv * yh;
        let fitted = self.x * &theta;
        let mut resid: Vec<f64> = self.y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
        for &i in &basis {
            resid[i] = 0.0;
        }
        Some(Vertex { basis, inv, theta, resid })
    }

    /// One-sided derivative of the objective along `d`, given `u = X d`.
    fn slope(&self, v: &Vertex, u: &DVector<f64>) -> f64 {
        let tau = self.tau;
        let mut g = 0.0;
        for (i, &r) in v.resid.iter().enumerate() {
            let ui = u[i];
            let zero = r.abs() <= self.zero_tol || v.basis.contains(&i);
            g += if zero {
                // residual moves by -t u_i from zero
                if ui > 0.0 {
                    (1.0 - tau) * ui
                } else {
                    -tau * ui
                }
            } else if r > 0.0 {
                -tau * ui
            } else {
                (1.0 - tau) * ui
            };
        }
        g
    }

    fn edges(&self, v: &Vertex) -> Vec<(usize, f64, DVector<f64>, DVector<f64>)> {
        let p = v.basis.len();
        let mut out = Vec::with_capacity(2 * p);
        for j in 0..p {
            for s in [1.0, -1.0] {
                let d: DVector<f64> = v.inv.column(j) * s;
                let u = self.x * &d;
                let g = self.slope(v, &u);
                out.push((j, g, d, u));
            }
        }
        out
    }

    /// Breakpoints `t > 0` along the edge, with their slope increments.
    fn breakpoints(&self, v: &Vertex, u: &DVector<f64>) -> Vec<(f64, usize, f64)> {
        let mut bp: Vec<(f64, usize, f64)> = v
            .resid
            .iter()
            .enumerate()
            .filter(|(i, r)| r.abs() > self.zero_tol && !v.basis.contains(i))
            .filter_map(|(i, &r)| {
                let ui = u[i];
                (ui != 0.0 && r / ui > 0.0).then(|| (r / ui, i, ui.abs()))
            })
            .collect();
        bp.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        bp
    }

    fn replace(&self, v: &Vertex, j: usize, entering: usize) -> Option<Vertex> {
        let mut basis = v.basis.clone();
        basis[j] = entering;
        self.vertex(basis)
    }

    fn objective(&self, v: &Vertex) -> f64 {
        check_loss(&v.resid, self.tau)
    }
}

/// Rows forming a well-conditioned square submatrix, chosen by partial
/// pivoting on `X` alone.
fn initial_rows(x: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, p) = x.shape();
    let scale = x.amax().max(f64::MIN_POSITIVE);
    let mut work = x.clone();
    let mut used = vec![false; n];
    let mut rows = Vec::with_capacity(p);
    for c in 0..p {
        let (mut best, mut piv) = (usize::MAX, 0.0);
        for r in 0..n {
            if !used[r] && work[(r, c)].abs() > piv {
                piv = work[(r, c)].abs();
                best = r;
            }
        }
        if best == usize::MAX || piv <= 1e-12 * scale {
            return Err(DesignError::RankDeficient);
        }
        used[best] = true;
        rows.push(best);
        let prow = work.row(best).clone_owned();
        for r in 0..n {
            if !used[r] {
                let f = work[(r, c)] / prow[c];
                if f != 0.0 {
                    for k in c..p {
                        work[(r, k)] -= f * prow[k];
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Exact minimizer of `sum rho_tau(y_i - x_i' t)` for a design matrix `X`.
///
/// When the minimizers form a face, the lexicographically smallest vertex
/// of that face is returned.
pub fn fit_quantile_matrix(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<QuantileFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(DesignError::InvalidParameter { name: "tau", reason: format!("must lie in (0, 1), got {tau}") });
    }
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(DesignError::InvalidParameter {
            name: "y",
            reason: format!("{} responses for {n} design rows", y.len()),
        });
    }
    if n < p || p == 0 {
        return Err(DesignError::RankDeficient);
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(DesignError::InvalidParameter { name: "y", reason: "non-finite data".into() });
    }
    let yscale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lp = Lp { x, y, tau, zero_tol: 1e-11 * (1.0 + yscale) };

    let mut v = lp.vertex(initial_rows(x)?).ok_or(DesignError::RankDeficient)?;
    let max_iter = 50 * n + 1000;
    let mut iter = 0;
    loop {
        iter += 1;
        if iter > max_iter {
            return Err(DesignError::OptimizerStalled("quantile simplex iteration limit".into()));
        }
        let edges = lp.edges(&v);
        let Some((j, g, _, u)) = edges
            .into_iter()
            .filter(|e| e.1 < -1e-12 * (1.0 + e.3.amax()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        else {
            break;
        };
        let mut slope = g;
        let mut entering = None;
        for (_, i, inc) in lp.breakpoints(&v, &u) {
            slope += inc;
            if slope >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        let i = entering.ok_or(DesignError::Unbounded)?;
        let before = lp.objective(&v);
        let next = lp.replace(&v, j, i).ok_or(DesignError::RankDeficient)?;
        if lp.objective(&next) > before + 1e-12 * (1.0 + before.abs()) {
            break;
        }
        v = next;
    }

    let v = smallest_on_face(&lp, v);
    let theta: Vec<f64> = v.theta.iter().copied().collect();
    let resid: Vec<f64> = y.iter().zip((x * &v.theta).iter()).map(|(a, b)| a - b).collect();
    let objective = check_loss(&resid, tau);
    let optimality_gap = coordinate_gap(x, &resid, tau, lp.zero_tol);
    Ok(QuantileFit { tau, theta_hat: theta, objective, optimality_gap })
}

/// Walks the flat edges of the optimal face and keeps the vertex whose
/// coefficient vector is lexicographically smallest.
fn smallest_on_face<'a>(lp: &Lp<'a>, start: Vertex) -> Vertex {
    let obj0 = lp.objective(&start);
    let flat = |g: f64, u: &DVector<f64>| g.abs() <= 1e-10 * (1.0 + u.amax());
    let key = |b: &[usize]| -> Vec<usize> {
        let mut k = b.to_vec();
        k.sort_unstable();
        k
    };
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    seen.insert(key(&start.basis));
    let mut queue = VecDeque::new();
    let mut best = lp.vertex(start.basis.clone()).expect("start vertex is valid");
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        if seen.len() > FACE_LIMIT {
            break;
        }
        for (j, g, _, u) in lp.edges(&v) {
            if !flat(g, &u) {
                continue;
            }
            let Some(&(_, i, _)) = lp.breakpoints(&v, &u).first() else { continue };
            let Some(next) = lp.replace(&v, j, i) else { continue };
            if !seen.insert(key(&next.basis)) {
                continue;
            }
            if (lp.objective(&next) - obj0).abs() > 1e-10 * (1.0 + obj0.abs()) {
                continue;
            }
            let lex = next.theta.iter().zip(best.theta.iter()).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne());
            if lex == Some(std::cmp::Ordering::Less) {
                best = lp.vertex(next.basis.clone()).expect("valid vertex");
            }
            queue.push_back(next);
        }
    }
    best
}

/// `max(0, -min_{j, +-} D_{+-e_j} R(theta))` from the residuals at `theta`.
fn coordinate_gap(x: &DMatrix<f64>, resid: &[f64], tau: f64, zero_tol: f64) -> f64 {
    let p = x.ncols();
    let mut worst = 0.0f64;
    for j in 0..p {
        for s in [1.0, -1.0] {
            let mut g = 0.0;
            for (i, &r) in resid.iter().enumerate() {
                let ui = s * x[(i, j)];
                g += if r.abs() <= zero_tol {
                    if ui > 0.0 {
                        (1.0 - tau) * ui
                    } else {
                        -tau * ui
                    }
                } else if r > 0.0 {
                    -tau * ui
                } else {
                    (1.0 - tau) * ui
                };
            }
            worst = worst.max(-g);
        }
    }
    worst
}
