//! Maximized mean-squared-error loss functionals.
//!
//! For a fixed variance function the loss maximized over the response
//! misspecification neighbourhood is
//! `L_nu = (1 - nu) tr(A T0) + nu ch_max(A T2)`.
//! The design-coupled variance class replaces `T0`, `T2` by the `S`-matrix
//! analogues, and [`worst_r_loss`] maximizes over its exponent.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::Basis;
use crate::design::{DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};
use crate::linalg::{ch_max_product, min_eigenvalue, rows_of, sandwich, spd_inverse, symmetrize, trace_product};
use crate::moments::{a_from_table, t_matrices_with, MomentMatrices, RegressorTable};
use crate::variance::VarianceFunction;

/// Standard normal density at zero, the default error density `g(0)`.
pub const STANDARD_NORMAL_AT_ZERO: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossConfig {
    pub nu: f64,
    pub tau: f64,
}

impl LossConfig {
    pub fn new(nu: f64) -> Result<Self> {
        Self::with_tau(nu, 0.5)
    }

    pub fn with_tau(nu: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(DesignError::InvalidParameter {
                name: "nu",
                reason: format!("must lie in [0, 1], got {nu}"),
            });
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(DesignError::InvalidParameter {
                name: "tau",
                reason: format!("must lie in (0, 1), got {tau}"),
            });
        }
        Ok(Self { nu, tau })
    }
}

/// Weight on bias implied by a misspecification bound `eta`, quantile
/// `tau` and error density at zero `g0` (with `sigma_0 = 1`).
pub fn nu_from_contamination(eta: f64, tau: f64, g0: f64) -> f64 {
    let e2 = eta * eta;
    if e2.is_infinite() {
        return 1.0;
    }
    e2 / (tau * (1.0 - tau) / (g0 * g0) + e2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub variance_term: f64,
    pub bias_term: f64,
    pub nu: f64,
    pub total: f64,
    pub moments: MomentMatrices,
}

impl LossReport {
    pub fn from_moments(moments: MomentMatrices, nu: f64) -> Self {
        let variance_term = trace_product(&moments.a, &moments.t0);
        let bias_term = ch_max_product(&moments.a, &moments.t2);
        Self {
            variance_term,
            bias_term,
            nu,
            total: combine(variance_term, bias_term, nu),
            moments,
        }
    }

    /// The same moments re-weighted at another `nu`.
    pub fn at_nu(&self, nu: f64) -> Self {
        Self {
            nu,
            total: combine(self.variance_term, self.bias_term, nu),
            ..self.clone()
        }
    }
}

pub fn combine(variance: f64, bias: f64, nu: f64) -> f64 {
    (1.0 - nu) * variance + nu * bias
}

pub fn loss_fixed_sigma(
    measure: &DesignMeasure,
    basis: &Basis,
    sigma: &VarianceFunction,
    config: &LossConfig,
) -> Result<LossReport> {
    let table = RegressorTable::new(measure.space(), basis)?;
    let sig = sigma.values(measure.space());
    loss_fixed_sigma_with(measure, &table, &sig, config.nu)
}

/// [`loss_fixed_sigma`] against a precomputed table and variance values.
pub fn loss_fixed_sigma_with(
    measure: &DesignMeasure,
    table: &RegressorTable,
    sigma: &[f64],
    nu: f64,
) -> Result<LossReport> {
    let mm = t_matrices_with(measure, table, sigma)?;
    Ok(LossReport::from_moments(mm, nu))
}

/// Normalizing constant `c_r^2` of the design-coupled variance class.
pub fn c_r_squared(measure: &DesignMeasure, r: f64) -> f64 {
    let a = measure.space().average_weights();
    let l = measure.values();
    let s: f64 = measure.support().iter().map(|&i| a[i] * l[i].powf(r)).sum();
    1.0 / s
}

pub fn loss_sigma0_class(
    measure: &DesignMeasure,
    basis: &Basis,
    r: f64,
    config: &LossConfig,
) -> Result<LossReport> {
    let table = RegressorTable::new(measure.space(), basis)?;
    loss_sigma0_class_with(measure, &table, r, config.nu)
}

pub fn loss_sigma0_class_with(
    measure: &DesignMeasure,
    table: &RegressorTable,
    r: f64,
    nu: f64,
) -> Result<LossReport> {
    let space = measure.space();
    let b = space.sum_weights();
    let l = measure.values();
    let supp = measure.support();
    let s0 = table.gram(supp.iter().map(|&i| (i, b[i] * l[i])));
    let e1 = 1.0 - r / 2.0;
    let s1 = table.gram(supp.iter().map(|&i| (i, b[i] * l[i].powf(e1))));
    let s2 = table.gram(supp.iter().map(|&i| (i, b[i] * l[i].powf(2.0 * e1))));
    let inv = spd_inverse(&s1, "S1")?;
    let c2 = c_r_squared(measure, r);
    let t0 = sandwich(&inv, &s0) * c2;
    let t2 = sandwich(&inv, &s2);
    let mm = MomentMatrices {
        a: symmetrize(&a_from_table(space, table)),
        t00: s0,
        t01: s1,
        t02: s2,
        t0,
        t2,
    };
    Ok(LossReport::from_moments(mm, nu))
}

/// Default exponent grid `{0, .25, ..., 2}`, which contains `r = 1`.
pub fn default_r_grid() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * 0.25).collect()
}

/// Maximizes the design-coupled loss over a finite grid of exponents.
/// Returns the maximizing exponent and its report; among exponents tied
/// with the maximum to rounding, `r = 1` is preferred, then the first.
pub fn worst_r_loss(
    measure: &DesignMeasure,
    basis: &Basis,
    config: &LossConfig,
    r_grid: &[f64],
) -> Result<(f64, LossReport)> {
    let table = RegressorTable::new(measure.space(), basis)?;
    worst_r_loss_with(measure, &table, config.nu, r_grid)
}

pub fn worst_r_loss_with(
    measure: &DesignMeasure,
    table: &RegressorTable,
    nu: f64,
    r_grid: &[f64],
) -> Result<(f64, LossReport)> {
    if !r_grid.iter().any(|&r| r == 1.0) {
        return Err(DesignError::InvalidParameter {
            name: "r_grid",
            reason: "must contain r = 1".into(),
        });
    }
    let reps: Vec<(f64, LossReport)> = r_grid
        .iter()
        .map(|&r| loss_sigma0_class_with(measure, table, r, nu).map(|rep| (r, rep)))
        .collect::<Result<_>>()?;
    let top = reps.iter().map(|(_, rep)| rep.total).fold(f64::NEG_INFINITY, f64::max);
    // values within rounding of the maximum are ties; r = 1 wins a tie
    let tied = |rep: &LossReport| rep.total >= top - 1e-12 * top.abs().max(1.0);
    let pick = reps
        .iter()
        .position(|(r, rep)| *r == 1.0 && tied(rep))
        .or_else(|| reps.iter().position(|(_, rep)| tied(rep)))
        .expect("grid is nonempty");
    Ok(reps.into_iter().nth(pick).expect("index in range"))
}

/// Moments of the limiting distribution of the quantile-regression estimate
/// under a misspecification `delta0` (given at the space points).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticMoments {
    pub mu0: Vec<f64>,
    #[serde(serialize_with = "ser_rows")]
    pub p0: DMatrix<f64>,
    #[serde(serialize_with = "ser_rows")]
    pub p1: DMatrix<f64>,
    #[serde(serialize_with = "ser_rows")]
    pub mse_matrix: DMatrix<f64>,
}

fn ser_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    rows_of(m).serialize(s)
}

pub fn asymptotic_mse_matrix(
    measure: &DesignMeasure,
    basis: &Basis,
    sigma: &VarianceFunction,
    delta0: &dyn Fn(f64) -> f64,
    tau: f64,
    g0: f64,
) -> Result<AsymptoticMoments> {
    let table = RegressorTable::new(measure.space(), basis)?;
    let space = measure.space();
    let sig = sigma.values(space);
    let delta: Vec<f64> = space.points().iter().map(|&x| delta0(x)).collect();
    asymptotic_mse_with(measure, &table, &sig, &delta, tau, g0)
}

pub fn asymptotic_mse_with(
    measure: &DesignMeasure,
    table: &RegressorTable,
    sigma: &[f64],
    delta: &[f64],
    tau: f64,
    g0: f64,
) -> Result<AsymptoticMoments> {
    let b = measure.space().sum_weights();
    let l = measure.values();
    let supp = measure.support();
    let p = table.dimension();
    let mut mu0 = DVector::zeros(p);
    for &i in &supp {
        let w = b[i] * l[i] * delta[i] / sigma[i];
        for (k, f) in table.row(i).iter().enumerate() {
            mu0[k] += w * f;
        }
    }
    let p0 = table.gram(supp.iter().map(|&i| (i, b[i] * l[i])));
    let p1 = table.gram(supp.iter().map(|&i| (i, b[i] * l[i] / sigma[i])));
    let inv = spd_inverse(&p1, "P1")?;
    let scale = tau * (1.0 - tau) / (g0 * g0);
    let inner = &p0 * scale + &mu0 * mu0.transpose();
    Ok(AsymptoticMoments {
        mu0: mu0.iter().copied().collect(),
        mse_matrix: sandwich(&inv, &inner),
        p0,
        p1,
    })
}

/// Smallest eigenvalue of `M_p^{-1} M_{p^2} M_p^{-1} - M_1^{-1}` where
/// `M_q = sum_{support} q(x) f f'` (sums, or trapezoid integrals on a
/// continuous space). Nonnegative for every positive weight function.
pub fn psd_gap(
    p_fn: &dyn Fn(f64) -> f64,
    basis: &Basis,
    space: &DesignSpace,
    support: &[usize],
) -> Result<f64> {
    let table = RegressorTable::new(space, basis)?;
    let b = space.sum_weights();
    let x = space.points();
    let m = |q: &dyn Fn(f64) -> f64| table.gram(support.iter().map(|&i| (i, b[i] * q(x[i]))));
    let mp = m(p_fn);
    let mp2 = m(&|t| p_fn(t).powi(2));
    let m1 = m(&|_| 1.0);
    let mp_inv = spd_inverse(&mp, "M_p")?;
    let m1_inv = spd_inverse(&m1, "M_1")?;
    Ok(min_eigenvalue(&(sandwich(&mp_inv, &mp2) - m1_inv)))
}
