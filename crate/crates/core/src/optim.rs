//! Derivative-free minimization (Nelder-Mead with restarts) and seeded
//! multi-start driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const DEFAULT_SEED: u64 = 1729;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex values spread less than `ftol * (1 + |f_best|)`.
    pub ftol: f64,
    /// ... and every vertex lies within `xtol` of the best one.
    pub xtol: f64,
    pub initial_step: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            ftol: 1e-13,
            xtol: 1e-10,
            initial_step: 0.5,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// One Nelder-Mead run with dimension-adaptive coefficients.
fn simplex_run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    f0: f64,
    step: f64,
    opts: &NelderMeadOptions,
    budget: usize,
) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut evals = 0usize;
    let eval = |f: &mut F, x: &[f64], evals: &mut usize| {
        *evals += 1;
        clean(f(x))
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for j in 0..n {
        let mut p = x0.to_vec();
        p[j] += if x0[j].abs() > 1.0 { step * x0[j].abs() } else { step };
        vals.push(eval(f, &p, &mut evals));
        pts.push(p);
    }
    let mut converged = false;
    while evals < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diam = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if vals[0].is_finite() && spread <= opts.ftol * (1.0 + vals[0].abs()) && diam <= opts.xtol {
            converged = true;
            break;
        }
        if !vals[0].is_finite() {
            break;
        }

        let mut c = vec![0.0; n];
        for p in &pts[..n] {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            c.iter().zip(&pts[n]).map(|(ci, wi)| ci + t * (ci - wi)).collect()
        };
        let xr = along(alpha);
        let fr = eval(f, &xr, &mut evals);
        if fr < vals[0] {
            let xe = along(alpha * beta);
            let fe = eval(f, &xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(alpha * gamma);
            let fc = eval(f, &xc, &mut evals);
            (xc, if fc <= fr { fc } else { f64::INFINITY })
        } else {
            let xc = along(-gamma);
            let fc = eval(f, &xc, &mut evals);
            (xc, if fc < vals[n] { fc } else { f64::INFINITY })
        };
        if fc.is_finite() {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        let best = pts[0].clone();
        for k in 1..=n {
            let shrunk: Vec<f64> = best.iter().zip(&pts[k]).map(|(b, p)| b + delta * (p - b)).collect();
            vals[k] = eval(f, &shrunk, &mut evals);
            pts[k] = shrunk;
        }
    }
    let i = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Minimum { x: pts[i].clone(), f: vals[i], evals, converged }
}

/// Nelder-Mead from `x0`, restarted around the incumbent until a restart
/// no longer improves it or the restart budget is spent.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let f0 = clean(f(x0));
    let mut best = Minimum { x: x0.to_vec(), f: f0, evals: 1, converged: false };
    if x0.is_empty() {
        best.converged = true;
        return best;
    }
    let mut step = opts.initial_step;
    for round in 0..=opts.restarts {
        if best.evals >= opts.max_evals {
            break;
        }
        let budget = opts.max_evals - best.evals;
        let run = simplex_run(&mut f, &best.x, best.f, step, opts, budget);
        let improved = run.f < best.f - opts.ftol * (1.0 + best.f.abs());
        best.evals += run.evals;
        if run.f <= best.f {
            best.x = run.x;
            best.f = run.f;
        }
        best.converged = run.converged;
        if round > 0 && !improved {
            break;
        }
        step *= 0.5;
    }
    best
}

/// Runs [`nelder_mead`] from every start in parallel and returns the best
/// result; ties go to the earliest start.
pub fn multistart<F>(f: F, starts: &[Vec<f64>], opts: &NelderMeadOptions) -> Option<(usize, Minimum)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let runs: Vec<Minimum> = starts.par_iter().map(|s| nelder_mead(&f, s, opts)).collect();
    runs.into_iter()
        .enumerate()
        .filter(|(_, m)| m.f.is_finite())
        .min_by(|(i, a), (j, b)| a.f.total_cmp(&b.f).then(i.cmp(j)))
}

/// `count` points drawn uniformly from the box `[lo, hi]^dim`, keeping only
/// those where `feasible` holds (at most `50 * count` draws).
pub fn random_starts(
    dim: usize,
    lo: f64,
    hi: f64,
    count: usize,
    seed: u64,
    feasible: impl Fn(&[f64]) -> bool,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count && draws < 50 * count.max(1) {
        draws += 1;
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(lo..hi)).collect();
        if feasible(&p) {
            out.push(p);
        }
    }
    out
}
