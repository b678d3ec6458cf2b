//! Minimax designs for straight-line regression on a symmetric discrete
//! space with a symmetric variance function.
//!
//! With `zeta_i = xi_i / sigma_i` the loss of a symmetric design reduces to
//! `(1 - nu){1/k1^2 + g0 g1/k2^2} + nu max{w1/k1^2, g0 w2/k2^2}` where
//! `k1 = sum zeta`, `k2 = sum x^2 zeta`, `g1 = sum x^2 sigma zeta`,
//! `w1 = sum zeta^2`, `w2 = sum x^2 zeta^2` and `g0 = N^{-1} sum x^2`.
//! For fixed `(g1, k1, k2)` the minimizing `zeta` is a positive part of a
//! function linear in three multipliers, so the search runs over those.

use std::sync::Arc;

use serde::Serialize;

use crate::basis::Basis;
use crate::design::{DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};
use crate::loss::{loss_fixed_sigma_with, LossConfig, LossReport};
use crate::moments::RegressorTable;
use crate::optim::{multistart, random_starts, NelderMeadOptions, DEFAULT_SEED};
use crate::variance::VarianceFunction;

/// Which root of `A T2` the objective carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StraightLineBranch {
    /// `w1/k1^2 >= g0 w2/k2^2` at the solution.
    Intercept,
    /// The mirrored case, `g0 w2/k2^2 >= w1/k1^2`.
    Slope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StraightLineMultipliers {
    pub lambda: [f64; 3],
    pub branch: StraightLineBranch,
    /// `1 / sum sigma {..}^+`, the scale of the stationary point.
    pub a: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl StraightLineMultipliers {
    pub fn intercept_root(&self) -> f64 {
        self.omega1 / (self.kappa1 * self.kappa1)
    }

    pub fn slope_root(&self) -> f64 {
        self.gamma0 * self.omega2 / (self.kappa2 * self.kappa2)
    }

    /// Residuals of the four side conditions recomputed from a design:
    /// `sum x^2 sigma zeta - g1`, `sum zeta - k1`, `sum x^2 zeta - k2`,
    /// `sum sigma zeta - 1`.
    pub fn side_condition_residuals(&self, design: &DesignMeasure, sigma: &VarianceFunction) -> [f64; 4] {
        let x = design.space().points();
        let mut r = [-self.gamma1, -self.kappa1, -self.kappa2, -1.0];
        for (i, &xi) in design.values().iter().enumerate() {
            let s = sigma.eval(x[i]);
            let z = xi / s;
            let x2 = x[i] * x[i];
            r[0] += x2 * s * z;
            r[1] += z;
            r[2] += x2 * z;
            r[3] += s * z;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StraightLineOptions {
    pub random_starts: usize,
    pub start_box: f64,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for StraightLineOptions {
    fn default() -> Self {
        Self {
            random_starts: 20,
            start_box: 10.0,
            seed: DEFAULT_SEED,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StraightLineSolution {
    pub design: DesignMeasure,
    pub multipliers: StraightLineMultipliers,
    pub loss: LossReport,
}

/// Symmetrized `x^2` and `sigma` at every point.
struct Problem {
    x2: Vec<f64>,
    sigma: Vec<f64>,
    gamma0: f64,
    nu: f64,
}

struct Eval {
    zeta: Vec<f64>,
    a: f64,
    gamma1: f64,
    kappa1: f64,
    kappa2: f64,
    omega1: f64,
    omega2: f64,
}

impl Problem {
    fn eval(&self, lambda: &[f64]) -> Option<Eval> {
        let mut zeta: Vec<f64> = self
            .x2
            .iter()
            .zip(&self.sigma)
            .map(|(&x2, &s)| ((1.0 + lambda[0] * x2) + s * (lambda[1] + lambda[2] * x2)).max(0.0))
            .collect();
        let denom: f64 = zeta.iter().zip(&self.sigma).map(|(z, s)| z * s).sum();
        if !(denom > 0.0) || !denom.is_finite() {
            return None;
        }
        let a = 1.0 / denom;
        zeta.iter_mut().for_each(|z| *z *= a);
        let (mut g1, mut k1, mut k2, mut w1, mut w2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&z, &x2), &s) in zeta.iter().zip(&self.x2).zip(&self.sigma) {
            g1 += x2 * s * z;
            k1 += z;
            k2 += x2 * z;
            w1 += z * z;
            w2 += x2 * z * z;
        }
        if !(k2 > 0.0) {
            return None;
        }
        Some(Eval { zeta, a, gamma1: g1, kappa1: k1, kappa2: k2, omega1: w1, omega2: w2 })
    }

    fn variance(&self, e: &Eval) -> f64 {
        1.0 / (e.kappa1 * e.kappa1) + self.gamma0 * e.gamma1 / (e.kappa2 * e.kappa2)
    }

    fn root(&self, e: &Eval, branch: StraightLineBranch) -> f64 {
        match branch {
            StraightLineBranch::Intercept => e.omega1 / (e.kappa1 * e.kappa1),
            StraightLineBranch::Slope => self.gamma0 * e.omega2 / (e.kappa2 * e.kappa2),
        }
    }

    fn objective(&self, lambda: &[f64], branch: StraightLineBranch) -> f64 {
        match self.eval(lambda) {
            Some(e) => (1.0 - self.nu) * self.variance(&e) + self.nu * self.root(&e, branch),
            None => f64::INFINITY,
        }
    }
}

/// Minimizes the maximized loss over symmetric designs for `f(x) = (1, x)'`.
///
/// The intercept branch is solved first; when its root does not dominate at
/// the optimum the slope branch is solved and checked in turn.
pub fn solve_straight_line_discrete(
    space: Arc<DesignSpace>,
    sigma: &VarianceFunction,
    config: &LossConfig,
    opts: &StraightLineOptions,
) -> Result<StraightLineSolution> {
    if !space.is_discrete() {
        return Err(DesignError::InvalidSpace("straight-line solver needs a discrete space".into()));
    }
    let mirror = space.mirror_indices().ok_or(DesignError::AsymmetricSpace)?;
    if !sigma.shape().is_even() {
        return Err(DesignError::InvalidParameter {
            name: "sigma",
            reason: format!("variance preset `{}` is not symmetric", sigma.shape()),
        });
    }
    let x = space.points();
    let sig = sigma.values(&space);
    let n = x.len();
    let problem = Problem {
        x2: (0..n).map(|i| 0.5 * (x[i] * x[i] + x[mirror[i]] * x[mirror[i]])).collect(),
        sigma: (0..n).map(|i| 0.5 * (sig[i] + sig[mirror[i]])).collect(),
        gamma0: x.iter().map(|v| v * v).sum::<f64>() / n as f64,
        nu: config.nu,
    };

    let feasible = |l: &[f64]| problem.eval(l).is_some();
    let mut starts = vec![vec![0.0; 3]];
    starts.extend(random_starts(3, -opts.start_box, opts.start_box, opts.random_starts, opts.seed, feasible));

    let scale_tol = |v: f64| 1e-9 * (1.0 + v.abs());
    for branch in [StraightLineBranch::Intercept, StraightLineBranch::Slope] {
        let (_, best) = multistart(|l| problem.objective(l, branch), &starts, &opts.nelder_mead)
            .ok_or_else(|| DesignError::OptimizerStalled("no feasible multiplier found".into()))?;
        let e = problem.eval(&best.x).expect("finite objective implies feasibility");
        let (own, other) = match branch {
            StraightLineBranch::Intercept => (problem.root(&e, branch), problem.root(&e, StraightLineBranch::Slope)),
            StraightLineBranch::Slope => (problem.root(&e, branch), problem.root(&e, StraightLineBranch::Intercept)),
        };
        if own < other - scale_tol(other) {
            continue;
        }
        let weights: Vec<f64> = e.zeta.iter().zip(&problem.sigma).map(|(z, s)| z * s).collect();
        let design = DesignMeasure::normalized(space.clone(), weights)?;
        let table = RegressorTable::new(&space, &Basis::straight_line())?;
        let loss = loss_fixed_sigma_with(&design, &table, &sig, config.nu)?;
        let multipliers = StraightLineMultipliers {
            lambda: [best.x[0], best.x[1], best.x[2]],
            branch,
            a: e.a,
            gamma0: problem.gamma0,
            gamma1: e.gamma1,
            kappa1: e.kappa1,
            kappa2: e.kappa2,
            omega1: e.omega1,
            omega2: e.omega2,
        };
        return Ok(StraightLineSolution { design, multipliers, loss });
    }
    Err(DesignError::BranchCheckFailed)
}
