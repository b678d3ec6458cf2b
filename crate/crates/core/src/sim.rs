//! Synthetic evaluation harness: misspecification draws, Monte-Carlo RMSE
//! tables and loss-versus-nu curves.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{Basis, CubicBSpline};
use crate::design::{format_f64, DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};
use crate::loss::{loss_fixed_sigma_with, LossReport};
use crate::moments::RegressorTable;
use crate::qreg::fit_quantile_matrix;
use crate::variance::{SigmaShape, VarianceFunction};

/// A misspecification `delta0` tabulated on the points of a design space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisspecFunction {
    pub values: Vec<f64>,
    pub eta: f64,
}

impl MisspecFunction {
    /// Largest `|avg delta0 f_j|` over the regressors.
    pub fn orthogonality_residual(&self, space: &DesignSpace, table: &RegressorTable) -> f64 {
        let a = space.average_weights();
        (0..table.dimension())
            .map(|j| {
                self.values.iter().enumerate().map(|(i, d)| a[i] * d * table.row(i)[j]).sum::<f64>().abs()
            })
            .fold(0.0, f64::max)
    }

    /// `avg delta0^2` over the space.
    pub fn mean_square(&self, space: &DesignSpace) -> f64 {
        let a = space.average_weights();
        self.values.iter().zip(a).map(|(d, w)| w * d * d).sum()
    }

    /// Checks orthogonality to the regressors and the norm bound.
    pub fn certify(&self, space: &DesignSpace, table: &RegressorTable) -> Result<()> {
        let orth = self.orthogonality_residual(space, table);
        if orth > 1e-8 {
            return Err(DesignError::InvalidParameter {
                name: "delta0",
                reason: format!("not orthogonal to the regressors (residual {orth:.3e})"),
            });
        }
        let ms = self.mean_square(space);
        if ms > self.eta * self.eta + 1e-8 {
            return Err(DesignError::InvalidParameter {
                name: "delta0",
                reason: format!("mean square {ms:.6e} exceeds eta^2 = {:.6e}", self.eta * self.eta),
            });
        }
        Ok(())
    }

    /// Builds `eta * Q2 c / |c|` from a complement basis.
    pub fn from_complement(q2: &DMatrix<f64>, c: &[f64], eta: f64) -> Self {
        let c = DVector::from_column_slice(c);
        let norm = c.norm();
        let values = if norm == 0.0 || eta == 0.0 {
            vec![0.0; q2.nrows()]
        } else {
            (q2 * c * (eta / norm)).iter().copied().collect()
        };
        Self { values, eta }
    }
}

/// `W^{1/2} F` with `W` the averaging weights of the space.
fn weighted_regressors(space: &DesignSpace, table: &RegressorTable) -> DMatrix<f64> {
    let a = space.average_weights();
    DMatrix::from_fn(table.len(), table.dimension(), |i, j| a[i].sqrt() * table.row(i)[j])
}

/// Columns `q` spanning the functions orthogonal to every regressor, with
/// `avg q_k q_l = 1{k = l}`.
pub fn complement_basis(space: &DesignSpace, basis: &Basis) -> Result<DMatrix<f64>> {
    let (n, p) = (space.len(), basis.dimension());
    if n <= p {
        return Err(DesignError::NoComplement { n, p });
    }
    let table = RegressorTable::new(space, basis)?;
    let q = weighted_regressors(space, &table).qr().q();
    let proj = DMatrix::identity(n, n) - &q * q.transpose();
    let svd = proj.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut cols: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] > 0.5).collect();
    cols.truncate(n - p);
    if cols.len() != n - p {
        return Err(DesignError::RankDeficient);
    }
    let a = space.average_weights();
    Ok(DMatrix::from_fn(n, cols.len(), |i, k| u[(i, cols[k])] / a[i].sqrt()))
}

/// Draws `delta0` uniformly on the sphere `avg delta0^2 = eta^2` inside the
/// orthogonal complement of the regressors.
pub fn sample_delta0<R: Rng>(space: &DesignSpace, basis: &Basis, eta: f64, rng: &mut R) -> Result<MisspecFunction> {
    let (n, p) = (space.len(), basis.dimension());
    if n <= p {
        return Err(DesignError::NoComplement { n, p });
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(DesignError::InvalidParameter { name: "eta", reason: format!("must be nonnegative, got {eta}") });
    }
    let table = RegressorTable::new(space, basis)?;
    let q = weighted_regressors(space, &table).qr().q();
    let mut u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    // two projection passes keep the orthogonality at rounding level
    for _ in 0..2 {
        let coef = q.transpose() * &u;
        u -= &q * coef;
    }
    let norm = u.norm();
    let a = space.average_weights();
    let values = if eta == 0.0 || norm == 0.0 {
        vec![0.0; n]
    } else {
        (0..n).map(|i| eta * u[i] / (norm * a[i].sqrt())).collect()
    };
    let m = MisspecFunction { values, eta };
    m.certify(space, &table)?;
    Ok(m)
}

/// Increasing concave reference curve, log-height-like on `[0, 18]`.
pub fn reference_growth(x: f64) -> f64 {
    3.9 + 1.25 * (1.0 - (-x / 4.0).exp()) / (1.0 - (-4.5f64).exp())
}

#[derive(Debug, Deserialize)]
struct TruthFixture {
    knots: String,
    coefficients: Vec<f64>,
}

const TRUTH_FIXTURE: &str = include_str!("../fixtures/truth_coefficients.json");

/// A spline curve used as the conditional median of the simulated response.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthCurve {
    pub basis: Basis,
    pub coefficients: Vec<f64>,
}

impl TruthCurve {
    /// The shipped curve on the `bestknots` spline.
    pub fn fixture() -> Result<Self> {
        let f: TruthFixture = serde_json::from_str(TRUTH_FIXTURE)?;
        let basis = Basis::CubicBSpline(CubicBSpline::from_preset(&f.knots)?);
        if basis.dimension() != f.coefficients.len() {
            return Err(DesignError::Parse("truth fixture has the wrong number of coefficients".into()));
        }
        Ok(Self { basis, coefficients: f.coefficients })
    }

    /// Spline on a knot preset whose coefficients are the reference curve at
    /// the Greville abscissae.
    pub fn for_preset(name: &str) -> Result<Self> {
        let s = CubicBSpline::from_preset(name)?;
        let coefficients = s.greville().into_iter().map(reference_growth).collect();
        Ok(Self { basis: Basis::CubicBSpline(s), coefficients })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.basis.eval(x)?.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub truth_knots: String,
    pub fit_knots: String,
    pub sigma: SigmaShape,
    /// Response standard deviation is `noise_sd` times the normalized preset.
    pub noise_sd: f64,
    pub taus: Vec<f64>,
    pub replications: usize,
    pub rng_seed: u64,
    pub rmse_grid: usize,
    pub nu_grid: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            truth_knots: "bestknots".into(),
            fit_knots: "desknots".into(),
            sigma: SigmaShape::ShiftedLinear,
            noise_sd: 0.04,
            taus: vec![0.05, 0.25, 0.5, 0.75, 0.95],
            replications: 100,
            rng_seed: crate::optim::DEFAULT_SEED,
            rmse_grid: 512,
            nu_grid: (0..=20).map(|k| k as f64 / 20.0).collect(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(DesignError::InvalidParameter { name, reason });
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("taus", "every tau must lie in (0, 1)".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd", format!("must be nonnegative, got {}", self.noise_sd));
        }
        if self.replications == 0 {
            return bad("replications", "must be positive".into());
        }
        if self.rmse_grid < 2 {
            return bad("rmse_grid", "needs at least two points".into());
        }
        if self.nu_grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("nu_grid", "values must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn truth(&self) -> Result<TruthCurve> {
        if self.truth_knots == "bestknots" {
            TruthCurve::fixture()
        } else {
            TruthCurve::for_preset(&self.truth_knots)
        }
    }
}

/// An exact design to evaluate: a label and its `n` abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDesign {
    pub name: String,
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub tau: f64,
    pub design: String,
    pub rmse_mean: f64,
    pub rmse_se: f64,
    /// Replicates skipped because the fit failed.
    #[serde(skip)]
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub nu: f64,
    pub design: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub table: Vec<RmseRow>,
    pub curves: Vec<CurvePoint>,
}

impl ScenarioResult {
    pub fn write_table_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tau", "design", "rmse_mean", "rmse_se"])?;
        for r in &self.table {
            out.write_record([format_f64(r.tau), r.design.clone(), format_f64(r.rmse_mean), format_f64(r.rmse_se)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_curves_csv<W: Write>(&self, w: W) -> Result<()> {
        write_curve_csv(&self.curves, w)
    }
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["nu", "design", "loss"])?;
    for c in curve {
        out.write_record([format_f64(c.nu), c.design.clone(), format_f64(c.loss)])?;
    }
    out.flush()?;
    Ok(())
}

/// `L_nu` of a design across a grid of weights, from a single evaluation of
/// both terms.
pub fn mse_vs_nu_curve(
    design: &DesignMeasure,
    basis: &Basis,
    sigma: &VarianceFunction,
    nu_grid: &[f64],
) -> Result<Vec<(f64, LossReport)>> {
    let table = RegressorTable::new(design.space(), basis)?;
    let sig = sigma.values(design.space());
    let base = loss_fixed_sigma_with(design, &table, &sig, 0.0)?;
    Ok(nu_grid.iter().map(|&nu| (nu, base.at_nu(nu))).collect())
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo RMSE of each design's fitted quantile curves, plus the
/// `L_nu` curve of every design on `space`.
///
/// Each replicate draws a fresh normal response at the design points around
/// the truth curve, fits every `tau` on the fit basis and measures the
/// root mean squared distance to the true conditional quantile over a
/// uniform grid.
pub fn run_scenario(config: &ScenarioConfig, space: &Arc<DesignSpace>, designs: &[NamedDesign]) -> Result<ScenarioResult> {
    config.validate()?;
    let truth = config.truth()?;
    let fit_basis = Basis::CubicBSpline(CubicBSpline::from_preset(&config.fit_knots)?);
    let sigma = VarianceFunction::normalized(config.sigma, space)?;
    let (lo, hi) = space.bounds();
    let grid: Vec<f64> = (0..config.rmse_grid)
        .map(|k| (lo + (hi - lo) * k as f64 / (config.rmse_grid - 1) as f64).min(hi))
        .collect();
    let grid_fit = fit_basis.design_matrix(&grid)?;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let truth_grid: Vec<f64> = grid.iter().map(|&x| truth.eval(x)).collect::<Result<_>>()?;
    let references: Vec<Vec<f64>> = config
        .taus
        .iter()
        .map(|&tau| {
            let z = std_normal.inverse_cdf(tau);
            grid.iter().zip(&truth_grid).map(|(&x, m)| m + config.noise_sd * sigma.eval(x) * z).collect()
        })
        .collect();

    let mut prepared = Vec::with_capacity(designs.len());
    for d in designs {
        let x = fit_basis.design_matrix(&d.points)?;
        let mean: Vec<f64> = d.points.iter().map(|&x| truth.eval(x)).collect::<Result<_>>()?;
        let sd: Vec<f64> = d.points.iter().map(|&x| config.noise_sd * sigma.eval(x)).collect();
        prepared.push((x, mean, sd));
    }

    let n_designs = designs.len() as u64;
    // rmse[replicate][design][tau], None when the fit failed
    let rmse: Vec<Vec<Vec<Option<f64>>>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| {
            prepared
                .iter()
                .enumerate()
                .map(|(d, (x, mean, sd))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
                    rng.set_stream(rep * n_designs + d as u64);
                    let y: Vec<f64> = mean
                        .iter()
                        .zip(sd)
                        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    config
                        .taus
                        .iter()
                        .zip(&references)
                        .map(|(&tau, reference)| {
                            let fit = fit_quantile_matrix(x, &y, tau).ok()?;
                            let theta = DVector::from_vec(fit.theta_hat);
                            let pred = &grid_fit * theta;
                            let ms = pred.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / grid.len() as f64;
                            Some(ms.sqrt())
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut table = Vec::new();
    for (t, &tau) in config.taus.iter().enumerate() {
        for (d, design) in designs.iter().enumerate() {
            let vals: Vec<f64> = rmse.iter().filter_map(|rep| rep[d][t]).collect();
            let (rmse_mean, rmse_se) = mean_se(&vals);
            table.push(RmseRow {
                tau,
                design: design.name.clone(),
                rmse_mean,
                rmse_se,
                failures: config.replications - vals.len(),
            });
        }
    }

    let mut curves = Vec::new();
    for design in designs {
        let measure = DesignMeasure::from_points(space.clone(), &design.points)?;
        for (nu, r) in mse_vs_nu_curve(&measure, &fit_basis, &sigma, &config.nu_grid)? {
            curves.push(CurvePoint { nu, design: design.name.clone(), loss: r.total });
        }
    }
    Ok(ScenarioResult { table, curves })
}
