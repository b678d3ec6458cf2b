//! Moment matrices of a basis over a design space and design measure.

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::basis::Basis;
use crate::design::{DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};
use crate::linalg::{rows_of, sandwich, spd_inverse, symmetrize};
use crate::variance::VarianceFunction;

/// Basis values `f(x_i)` at every point of a space, computed once.
#[derive(Debug, Clone)]
pub struct RegressorTable {
    p: usize,
    rows: Vec<Vec<f64>>,
}

impl RegressorTable {
    pub fn new(space: &DesignSpace, basis: &Basis) -> Result<Self> {
        Self::from_points(space.points(), basis)
    }

    pub fn from_points(xs: &[f64], basis: &Basis) -> Result<Self> {
        let p = basis.dimension();
        let rows = xs
            .iter()
            .map(|&x| {
                let v = basis.eval(x)?;
                if v.iter().any(|b| !b.is_finite()) {
                    return Err(DesignError::NonFiniteBasisValue { x });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { p, rows })
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// `sum_i w_i f(x_i) f'(x_i)` over the listed `(index, weight)` pairs.
    pub fn gram<I: IntoIterator<Item = (usize, f64)>>(&self, weighted: I) -> DMatrix<f64> {
        let p = self.p;
        let mut m = DMatrix::zeros(p, p);
        for (i, w) in weighted {
            if w == 0.0 {
                continue;
            }
            let f = &self.rows[i];
            for a in 0..p {
                let fa = w * f[a];
                if fa == 0.0 {
                    continue;
                }
                for b in a..p {
                    m[(a, b)] += fa * f[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                m[(a, b)] = m[(b, a)];
            }
        }
        m
    }
}

/// `A = N^{-1} sum f f'` (discrete) or `int f f' dx` (continuous).
pub fn moment_matrix_a(space: &DesignSpace, basis: &Basis) -> Result<DMatrix<f64>> {
    let table = RegressorTable::new(space, basis)?;
    Ok(a_from_table(space, &table))
}

pub(crate) fn a_from_table(space: &DesignSpace, table: &RegressorTable) -> DMatrix<f64> {
    table.gram(space.average_weights().iter().copied().enumerate())
}

/// The matrices entering the maximized loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrices {
    pub a: DMatrix<f64>,
    pub t00: DMatrix<f64>,
    pub t01: DMatrix<f64>,
    pub t02: DMatrix<f64>,
    /// `T01^{-1} T00 T01^{-1}`, possibly scaled (see the design-coupled loss).
    pub t0: DMatrix<f64>,
    /// `T01^{-1} T02 T01^{-1}`.
    pub t2: DMatrix<f64>,
}

impl Serialize for MomentMatrices {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MomentMatrices", 6)?;
        st.serialize_field("A", &rows_of(&self.a))?;
        st.serialize_field("T00", &rows_of(&self.t00))?;
        st.serialize_field("T01", &rows_of(&self.t01))?;
        st.serialize_field("T02", &rows_of(&self.t02))?;
        st.serialize_field("T0", &rows_of(&self.t0))?;
        st.serialize_field("T2", &rows_of(&self.t2))?;
        st.end()
    }
}

/// Computes `T00`, `T0k` and the derived `T0`, `T2` for a fixed variance
/// function.
pub fn t_matrices(
    measure: &DesignMeasure,
    basis: &Basis,
    sigma: &VarianceFunction,
) -> Result<MomentMatrices> {
    let table = RegressorTable::new(measure.space(), basis)?;
    let sig = sigma.values(measure.space());
    t_matrices_with(measure, &table, &sig)
}

/// [`t_matrices`] against a precomputed regressor table and variance values.
pub fn t_matrices_with(
    measure: &DesignMeasure,
    table: &RegressorTable,
    sigma: &[f64],
) -> Result<MomentMatrices> {
    let space = measure.space();
    let b = space.sum_weights();
    let l = measure.values();
    for &i in &measure.support() {
        if !(sigma[i] > 0.0) {
            return Err(DesignError::NonPositiveSigma { x: space.points()[i], value: sigma[i] });
        }
    }
    let supp = measure.support();
    let t00 = table.gram(supp.iter().map(|&i| (i, b[i] * l[i])));
    let t01 = table.gram(supp.iter().map(|&i| (i, b[i] * (l[i] / sigma[i]))));
    let t02 = table.gram(supp.iter().map(|&i| (i, b[i] * (l[i] / sigma[i]).powi(2))));
    let inv = spd_inverse(&t01, "T01")?;
    let t0 = sandwich(&inv, &t00);
    let t2 = sandwich(&inv, &t02);
    Ok(MomentMatrices {
        a: symmetrize(&a_from_table(space, table)),
        t00,
        t01,
        t02,
        t0,
        t2,
    })
}
