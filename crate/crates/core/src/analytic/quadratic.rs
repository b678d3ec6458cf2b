//! Minimax densities for quadratic regression on `[-1, 1]` with a symmetric
//! variance function.
//!
//! For symmetric `m` and `sigma` the loss depends on `m` only through the
//! moments `mu_i = int x^i m`, `kappa_i = int x^i m/sigma` and
//! `omega_i = int x^i (m/sigma)^2`. The minimizing density belongs to the
//! ten-parameter family
//! `m(x; a) = ((q1 sigma + q2) / (a00 + q3/sigma))^+`,
//! `q_j = a0j + a2j x^2 + a4j x^4`.

use std::sync::Arc;

use serde::Serialize;

use crate::basis::Basis;
use crate::design::{DesignMeasure, DesignSpace, SpaceKind};
use crate::error::{DesignError, Result};
use crate::loss::{combine, loss_fixed_sigma_with, LossConfig, LossReport};
use crate::moments::RegressorTable;
use crate::optim::{multistart, random_starts, NelderMeadOptions, DEFAULT_SEED};
use crate::variance::VarianceFunction;

/// Coefficients `phi_ijk` expressing `A T0` and `A T2` in the moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiTable {
    pub phi_002: f64,
    pub phi_110: f64,
    pub phi_112: f64,
    pub phi_114: f64,
    pub phi_120: f64,
    pub phi_122: f64,
    pub phi_124: f64,
    pub phi_210: f64,
    pub phi_212: f64,
    pub phi_214: f64,
    pub phi_220: f64,
    pub phi_222: f64,
    pub phi_224: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticMomentSet {
    pub mu0: f64,
    pub mu2: f64,
    pub mu4: f64,
    pub kappa0: f64,
    pub kappa2: f64,
    pub kappa4: f64,
    pub omega0: f64,
    pub omega2: f64,
    pub omega4: f64,
    pub pi: f64,
    pub phi: PhiTable,
    pub psi11: f64,
    pub psi12: f64,
    pub psi21: f64,
    pub psi22: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
}

/// Moments of Lebesgue measure under the space's quadrature: `int 1`,
/// `int x^2 / int 1` and `int x^4 / int 1` (exactly 2, 1/3, 1/5).
#[derive(Debug, Clone, Copy)]
struct BaseMoments {
    c: f64,
    alpha2: f64,
    alpha4: f64,
}

impl BaseMoments {
    fn of(space: &DesignSpace) -> Self {
        let c = space.average(|_| 1.0);
        Self {
            c,
            alpha2: space.average(|x| x * x) / c,
            alpha4: space.average(|x| x.powi(4)) / c,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn moment_set(base: BaseMoments, mu: [f64; 3], kappa: [f64; 3], omega: [f64; 3]) -> Result<QuadraticMomentSet> {
    let [k0, k2, k4] = kappa;
    let det = k4 * k0 - k2 * k2;
    // relative guard: a two-point symmetric design makes det vanish up to
    // rounding, and the closed forms are then meaningless
    if !(det > 1e-9 * k4 * k0) || !(k2 > 0.0) || !det.is_finite() {
        return Err(DesignError::DegeneratePencil(det));
    }
    let BaseMoments { c, alpha2: t, alpha4: f } = base;
    let pi = c / (det * det);
    let phi = PhiTable {
        phi_002: c * t / (k2 * k2),
        phi_110: pi * (k4 * k4 - t * k4 * k2),
        phi_112: pi * (t * (k4 * k0 + k2 * k2) - 2.0 * k4 * k2),
        phi_114: pi * (k2 * k2 - t * k2 * k0),
        phi_120: pi * (t * k2 * k2 - k4 * k2),
        phi_122: pi * (k4 * k0 + k2 * k2 - 2.0 * t * k2 * k0),
        phi_124: pi * (t * k0 * k0 - k2 * k0),
        phi_210: pi * (t * k4 * k4 - f * k4 * k2),
        phi_212: pi * (f * (k4 * k0 + k2 * k2) - 2.0 * t * k4 * k2),
        phi_214: pi * (t * k2 * k2 - f * k2 * k0),
        phi_220: pi * (f * k2 * k2 - t * k4 * k2),
        phi_222: pi * (t * (k4 * k0 + k2 * k2) - 2.0 * f * k2 * k0),
        phi_224: pi * (f * k0 * k0 - t * k2 * k0),
    };
    let [w0, w2, w4] = omega;
    let p = &phi;
    let psi11 = p.phi_110 * w0 + p.phi_112 * w2 + p.phi_114 * w4;
    let psi12 = p.phi_120 * w0 + p.phi_122 * w2 + p.phi_124 * w4;
    let psi21 = p.phi_210 * w0 + p.phi_212 * w2 + p.phi_214 * w4;
    let psi22 = p.phi_220 * w0 + p.phi_222 * w2 + p.phi_224 * w4;
    let [m0, m2, m4] = mu;
    let rho0 = (p.phi_110 + p.phi_220) * m0 + (p.phi_002 + p.phi_112 + p.phi_222) * m2 + (p.phi_114 + p.phi_224) * m4;
    let rho1 = p.phi_002 * w2;
    let half_gap = 0.5 * (psi11 - psi22);
    let rho2 = 0.5 * (psi11 + psi22) + (half_gap * half_gap + psi12 * psi21).max(0.0).sqrt();
    Ok(QuadraticMomentSet {
        mu0: m0,
        mu2: m2,
        mu4: m4,
        kappa0: k0,
        kappa2: k2,
        kappa4: k4,
        omega0: w0,
        omega2: w2,
        omega4: w4,
        pi,
        phi,
        psi11,
        psi12,
        psi21,
        psi22,
        rho0,
        rho1,
        rho2,
    })
}

impl QuadraticMomentSet {
    /// `L_k = (1 - nu) rho0 + nu rho_k` for `k = 1, 2`.
    pub fn branch_loss(&self, k: u8, nu: f64) -> f64 {
        let rho = if k == 1 { self.rho1 } else { self.rho2 };
        combine(self.rho0, rho, nu)
    }

    pub fn loss(&self, nu: f64) -> f64 {
        combine(self.rho0, self.rho1.max(self.rho2), nu)
    }
}

/// Moments of a symmetric density on a symmetric interval.
pub fn quadratic_moments(m: &DesignMeasure, sigma: &VarianceFunction) -> Result<QuadraticMomentSet> {
    let space = m.space();
    let b = space.sum_weights();
    let x = space.points();
    let mut mu = [0.0; 3];
    let mut kappa = [0.0; 3];
    let mut omega = [0.0; 3];
    for (i, &l) in m.values().iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let s = sigma.eval(x[i]);
        let x2 = x[i] * x[i];
        let pw = [1.0, x2, x2 * x2];
        let r = l / s;
        for k in 0..3 {
            mu[k] += b[i] * pw[k] * l;
            kappa[k] += b[i] * pw[k] * r;
            omega[k] += b[i] * pw[k] * r * r;
        }
    }
    moment_set(BaseMoments::of(space), mu, kappa, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// `a01 = 1` before the unit-mass rescaling.
    Heteroscedastic,
    /// `a02 = 1`, `a01 = a21 = a41 = 0`, `a00 = 0` before rescaling.
    Homoscedastic,
}

/// Coefficients of `m(x; a)` in the order
/// `a00, a01, a21, a41, a02, a22, a42, a03, a23, a43`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityFamilyParams {
    pub a: [f64; 10],
    pub normalization_mode: NormalizationMode,
}

impl DensityFamilyParams {
    pub const NAMES: [&'static str; 10] = ["a00", "a01", "a21", "a41", "a02", "a22", "a42", "a03", "a23", "a43"];

    fn from_free(free: &[f64], mode: NormalizationMode) -> Self {
        let a = match mode {
            NormalizationMode::Heteroscedastic => [
                free[0], 1.0, free[1], free[2], free[3], free[4], free[5], free[6], free[7], free[8],
            ],
            NormalizationMode::Homoscedastic => [0.0, 0.0, 0.0, 0.0, 1.0, free[0], free[1], free[2], free[3], free[4]],
        };
        Self { a, normalization_mode: mode }
    }

    /// `m(x; a)` before any mass normalization; `None` at a pole.
    pub fn eval(&self, x: f64, sigma: f64) -> Option<f64> {
        let a = &self.a;
        let x2 = x * x;
        let x4 = x2 * x2;
        let q1 = a[1] + a[2] * x2 + a[3] * x4;
        let q2 = a[4] + a[5] * x2 + a[6] * x4;
        let q3 = a[7] + a[8] * x2 + a[9] * x4;
        let num = q1 * sigma + q2;
        let den = a[0] + q3 / sigma;
        let v = num / den;
        if !v.is_finite() {
            return None;
        }
        Some(v.max(0.0))
    }

    fn scale_numerator(&mut self, s: f64) {
        for k in 1..7 {
            self.a[k] *= s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOptions {
    pub random_starts: usize,
    pub start_box: f64,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for QuadraticOptions {
    fn default() -> Self {
        Self {
            random_starts: 20,
            start_box: 3.0,
            seed: DEFAULT_SEED,
            nelder_mead: NelderMeadOptions { max_evals: 8_000, restarts: 2, ..NelderMeadOptions::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSolution {
    pub design: DesignMeasure,
    pub params: DensityFamilyParams,
    pub moments: QuadraticMomentSet,
    /// 1 or 2: the root of `A T2` that is largest at the returned density.
    pub branch: u8,
    pub loss: LossReport,
}

struct Problem {
    x2: Vec<f64>,
    sigma: Vec<f64>,
    weights: Vec<f64>,
    base: BaseMoments,
    mode: NormalizationMode,
    nu: f64,
}

impl Problem {
    /// Unit-mass density values and the mass before normalization.
    fn density(&self, params: &DensityFamilyParams) -> Option<(Vec<f64>, f64)> {
        let mut m = Vec::with_capacity(self.x2.len());
        for (&x2, &s) in self.x2.iter().zip(&self.sigma) {
            m.push(params.eval(x2.sqrt(), s)?);
        }
        let mass: f64 = m.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        if !(mass > 1e-300) || !mass.is_finite() {
            return None;
        }
        m.iter_mut().for_each(|v| *v /= mass);
        Some((m, mass))
    }

    fn moments_of(&self, m: &[f64]) -> Option<QuadraticMomentSet> {
        let mut mu = [0.0; 3];
        let mut kappa = [0.0; 3];
        let mut omega = [0.0; 3];
        for i in 0..m.len() {
            if m[i] == 0.0 {
                continue;
            }
            let x2 = self.x2[i];
            let pw = [1.0, x2, x2 * x2];
            let r = m[i] / self.sigma[i];
            let w = self.weights[i];
            for k in 0..3 {
                mu[k] += w * pw[k] * m[i];
                kappa[k] += w * pw[k] * r;
                omega[k] += w * pw[k] * r * r;
            }
        }
        moment_set(self.base, mu, kappa, omega).ok()
    }

    fn evaluate(&self, free: &[f64]) -> Option<QuadraticMomentSet> {
        let params = DensityFamilyParams::from_free(free, self.mode);
        let (m, _) = self.density(&params)?;
        let ms = self.moments_of(&m)?;
        let ok = [ms.rho0, ms.rho1, ms.rho2].iter().all(|r| r.is_finite() && *r >= 0.0);
        ok.then_some(ms)
    }

    /// Branch-`k` loss plus an exact penalty keeping `rho_k` the larger root.
    fn branch_objective(&self, free: &[f64], k: u8) -> f64 {
        match self.evaluate(free) {
            Some(ms) => {
                let (own, other) = if k == 1 { (ms.rho1, ms.rho2) } else { (ms.rho2, ms.rho1) };
                ms.branch_loss(k, self.nu) + 2.0 * self.nu * (other - own).max(0.0)
            }
            None => f64::INFINITY,
        }
    }
}

/// Minimizes the maximized loss over the density family for
/// `f(x) = (1, x, x^2)'` on a symmetric continuous space.
///
/// Each branch is solved under the constraint that its own root of `A T2`
/// dominates; the branch with the smaller loss at its solution is returned
/// (branch 1 on ties).
pub fn solve_quadratic_continuous(
    space: Arc<DesignSpace>,
    sigma: &VarianceFunction,
    config: &LossConfig,
    opts: &QuadraticOptions,
) -> Result<QuadraticSolution> {
    if space.kind() != SpaceKind::Continuous {
        return Err(DesignError::InvalidSpace("quadratic solver needs a continuous space".into()));
    }
    if !space.is_symmetric() {
        return Err(DesignError::AsymmetricSpace);
    }
    if !sigma.shape().is_even() {
        return Err(DesignError::InvalidParameter {
            name: "sigma",
            reason: format!("variance preset `{}` is not symmetric", sigma.shape()),
        });
    }
    let mode = if sigma.is_constant() {
        NormalizationMode::Homoscedastic
    } else {
        NormalizationMode::Heteroscedastic
    };
    let x = space.points();
    let problem = Problem {
        x2: x.iter().map(|v| v * v).collect(),
        sigma: sigma.values(&space),
        weights: space.sum_weights().to_vec(),
        base: BaseMoments::of(&space),
        mode,
        nu: config.nu,
    };

    // Structured starts: minbias (m = sigma), near-uniform, m = sigma^2 and
    // a density concentrated toward the ends and the centre.
    let mut starts: Vec<Vec<f64>> = match mode {
        NormalizationMode::Heteroscedastic => vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            vec![1.0, -4.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ],
        NormalizationMode::Homoscedastic => vec![
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
            vec![-4.0, 4.0, 1.0, 0.0, 0.0],
            vec![-2.0, 2.0, 1.0, 0.0, 0.0],
        ],
    };
    let dim = starts[0].len();
    starts.extend(random_starts(dim, -opts.start_box, opts.start_box, opts.random_starts, opts.seed, |p| {
        problem.evaluate(p).is_some()
    }));

    let mut candidates = Vec::new();
    for k in [1u8, 2] {
        if let Some((_, best)) = multistart(|p| problem.branch_objective(p, k), &starts, &opts.nelder_mead) {
            if let Some(ms) = problem.evaluate(&best.x) {
                candidates.push((k, best.x, ms));
            }
        }
    }
    let (_, free, _) = candidates
        .into_iter()
        .min_by(|a, b| a.2.loss(config.nu).total_cmp(&b.2.loss(config.nu)).then(a.0.cmp(&b.0)))
        .ok_or_else(|| DesignError::OptimizerStalled("no feasible density parameters".into()))?;

    let mut params = DensityFamilyParams::from_free(&free, mode);
    let (values, mass) = problem.density(&params).ok_or(DesignError::NonDensityResult(0.0))?;
    params.scale_numerator(1.0 / mass);
    let design = DesignMeasure::new(space.clone(), values)?;
    let moments = quadratic_moments(&design, sigma)?;
    let table = RegressorTable::new(&space, &Basis::polynomial(2))?;
    let loss = loss_fixed_sigma_with(&design, &table, &problem.sigma, config.nu)?;
    let branch = if moments.rho1 >= moments.rho2 { 1 } else { 2 };
    Ok(QuadraticSolution { design, params, moments, branch, loss })
}
