//! Compound uniform designs by best-improvement exchange.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::basis::Basis;
use crate::design::{DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};
use crate::linalg::{ch_max_product, spd_inverse, trace_product};
use crate::loss::{loss_sigma0_class_with, LossReport};
use crate::moments::{a_from_table, RegressorTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompoundDesign {
    /// Sorted indices of the `k_star` support points.
    pub support: Vec<usize>,
    pub k_star: usize,
    /// Value of `(1 - nu) N tr(A A_k^{-1}) + nu ch_max(A A_k^{-1})`.
    pub objective: f64,
    /// Loss of the uniform-on-support design at `r = 1`.
    pub loss: LossReport,
    /// The exact `n`-point design (abscissae, sorted).
    pub points: Vec<f64>,
    /// Objective after the start and after every accepted swap.
    pub history: Vec<f64>,
}

struct Objective<'a> {
    table: &'a RegressorTable,
    a: DMatrix<f64>,
    n_space: f64,
    nu: f64,
}

impl Objective<'_> {
    fn eval(&self, support: &[usize]) -> f64 {
        let a_k = self.table.gram(support.iter().map(|&i| (i, 1.0)));
        match spd_inverse(&a_k, "A_k") {
            Ok(inv) => {
                (1.0 - self.nu) * self.n_space * trace_product(&self.a, &inv) + self.nu * ch_max_product(&self.a, &inv)
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Exchange units: a point and its mirror image, or a single point.
fn units(space: &DesignSpace, symmetric: bool) -> Result<(Vec<Vec<usize>>, Option<usize>)> {
    let n = space.len();
    if !symmetric {
        return Ok(((0..n).map(|i| vec![i]).collect(), None));
    }
    let mirror = space.mirror_indices().ok_or(DesignError::AsymmetricSpace)?;
    let centre = (0..n).find(|&i| mirror[i] == i);
    let pairs = (0..n).filter(|&i| mirror[i] > i).map(|i| vec![i, mirror[i]]).collect();
    Ok((pairs, centre))
}

/// Units ordered by decreasing `|x|` (ties by index).
fn by_magnitude(space: &DesignSpace, units: &[Vec<usize>]) -> Vec<usize> {
    let x = space.points();
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| {
        let (xa, xb) = (x[units[a][0]].abs(), x[units[b][0]].abs());
        xb.total_cmp(&xa).then(a.cmp(&b))
    });
    order
}

/// The largest-`|x|` support of size `k` (with the centre when `k` is odd
/// in symmetric mode).
pub fn largest_magnitude_support(space: &DesignSpace, k: usize, symmetric: bool) -> Result<Vec<usize>> {
    let (units, centre) = units(space, symmetric)?;
    let mut support = Vec::with_capacity(k);
    let mut need = k;
    if symmetric && k % 2 == 1 {
        support.push(centre.ok_or(DesignError::NoSymmetricSupport { k })?);
        need -= 1;
    }
    for u in by_magnitude(space, &units) {
        if support.len() + units[u].len() > k {
            break;
        }
        if need == 0 {
            break;
        }
        support.extend(&units[u]);
        need -= units[u].len();
    }
    if support.len() != k {
        return Err(DesignError::NoSymmetricSupport { k });
    }
    support.sort_unstable();
    Ok(support)
}

/// Minimizes the compound objective over supports of size `min(n, N)`.
///
/// Starts from the largest-`|x|` support and repeatedly applies the unit
/// swap giving the largest decrease, until no swap decreases the objective.
pub fn exchange_compound(
    space: Arc<DesignSpace>,
    basis: &Basis,
    n: usize,
    nu: f64,
    symmetric: bool,
) -> Result<CompoundDesign> {
    if !space.is_discrete() {
        return Err(DesignError::InvalidSpace("compound designs live on discrete spaces".into()));
    }
    let big_n = space.len();
    let p = basis.dimension();
    let k = n.min(big_n);
    if k < p {
        return Err(DesignError::RankDeficientSupport { k, p });
    }
    let table = RegressorTable::new(&space, basis)?;
    let obj = Objective { table: &table, a: a_from_table(&space, &table), n_space: big_n as f64, nu };

    let (units, centre) = units(&space, symmetric)?;
    let start = largest_magnitude_support(&space, k, symmetric)?;
    let mut in_set: Vec<bool> = units.iter().map(|u| start.contains(&u[0])).collect();
    // in symmetric mode an odd support always holds the centre
    let fixed: Vec<usize> = match centre {
        Some(c) if k % 2 == 1 => vec![c],
        _ => Vec::new(),
    };

    let assemble = |in_set: &[bool]| -> Vec<usize> {
        let mut s: Vec<usize> = fixed.clone();
        for (u, &on) in units.iter().zip(in_set) {
            if on {
                s.extend(u);
            }
        }
        s.sort_unstable();
        s
    };
    let mut current = obj.eval(&assemble(&in_set));
    let mut history = vec![current];
    loop {
        let ins: Vec<usize> = (0..units.len()).filter(|&u| in_set[u]).collect();
        let outs: Vec<usize> = (0..units.len()).filter(|&u| !in_set[u]).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for &u in &ins {
            for &v in &outs {
                in_set[u] = false;
                in_set[v] = true;
                let val = obj.eval(&assemble(&in_set));
                in_set[u] = true;
                in_set[v] = false;
                if best.map_or(true, |(b, _, _)| val < b) {
                    best = Some((val, u, v));
                }
            }
        }
        match best {
            Some((val, u, v)) if val < current - 1e-12 * current.abs().max(1.0) || (!current.is_finite() && val.is_finite()) => {
                in_set[u] = false;
                in_set[v] = true;
                assert!(val <= current, "exchange increased the objective");
                current = val;
                history.push(current);
            }
            _ => break,
        }
    }
    if !current.is_finite() {
        return Err(DesignError::RankDeficientSupport { k, p });
    }
    let support = assemble(&in_set);
    let design = DesignMeasure::from_indices(space.clone(), &support)?;
    let loss = loss_sigma0_class_with(&design, &table, 1.0, nu)?;
    let points = exact_points(&space, &support, n, symmetric)?;
    Ok(CompoundDesign { support, k_star: k, objective: current, loss, points, history })
}

/// The exact `n`-point design: the support itself when `n <= N`; otherwise
/// `m` copies of every point plus the largest-`|x|` set of the remaining `t`.
fn exact_points(space: &DesignSpace, support: &[usize], n: usize, symmetric: bool) -> Result<Vec<f64>> {
    let x = space.points();
    let big_n = space.len();
    let mut idx: Vec<usize> = if n <= big_n {
        support.to_vec()
    } else {
        let (m, t) = (n / big_n, n % big_n);
        let mut v: Vec<usize> = (0..m).flat_map(|_| 0..big_n).collect();
        if t > 0 {
            v.extend(largest_magnitude_support(space, t, symmetric)?);
        }
        v
    };
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| x[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<DesignSpace> {
        Arc::new(DesignSpace::discrete_grid(-1.0, 1.0, n).unwrap())
    }

    #[test]
    fn five_point_grid_three_runs() {
        let c = exchange_compound(grid(5), &Basis::straight_line(), 3, 0.5, true).unwrap();
        assert_eq!(c.support, vec![0, 2, 4]);
        assert_eq!(c.points, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn even_n_takes_outer_pairs() {
        let s = grid(21);
        for n in [2, 4, 8, 12] {
            let c = exchange_compound(s.clone(), &Basis::straight_line(), n, 0.5, true).unwrap();
            let mut expect: Vec<usize> = (0..n / 2).chain(21 - n / 2..21).collect();
            expect.sort_unstable();
            assert_eq!(c.support, expect);
        }
    }

    #[test]
    fn history_is_non_increasing() {
        let c = exchange_compound(grid(15), &Basis::polynomial(3), 7, 0.3, false).unwrap();
        assert!(c.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(c.k_star, 7);
    }

    #[test]
    fn replication_beyond_space_size() {
        let c = exchange_compound(grid(5), &Basis::straight_line(), 13, 0.5, true).unwrap();
        assert_eq!(c.k_star, 5);
        assert_eq!(c.points.len(), 13);
        // two copies of every point plus {-1, 0, 1}
        let count = |v: f64| c.points.iter().filter(|&&x| x == v).count();
        assert_eq!((count(-1.0), count(-0.5), count(0.0)), (3, 2, 3));
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            exchange_compound(grid(5), &Basis::polynomial(2), 2, 0.5, true).unwrap_err(),
            DesignError::RankDeficientSupport { k: 2, p: 3 }
        );
    }

    #[test]
    fn odd_run_without_centre() {
        assert_eq!(
            exchange_compound(grid(6), &Basis::straight_line(), 3, 0.5, true).unwrap_err(),
            DesignError::NoSymmetricSupport { k: 3 }
        );
    }
}
