//! Monomials of bounded total degree over standardised risk factors.

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::features::StandardizedFeatures;

/// Default cap on the number of design-matrix columns.
pub const DEFAULT_MAX_COLUMNS: usize = 5000;

/// `C(f + d, d)`, the number of monomials of total degree at most `d` in `f` variables.
pub fn monomial_count(f: usize, d: usize) -> usize {
    let mut c: u128 = 1;
    for k in 1..=d as u128 {
        c = c * (f as u128 + k) / k;
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

/// Graded-lexicographic monomial table.
///
/// Column 0 is the constant, columns `1..=F` the variables, and every later
/// column is an earlier column times one variable: a monomial is stored as a
/// non-decreasing variable list, degree by degree, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialTable {
    n_vars: usize,
    degree: usize,
    /// `(parent column, variable)` for every column after the linear block.
    higher: Vec<(usize, usize)>,
}

impl MonomialTable {
    pub fn new(n_vars: usize, degree: usize, max_columns: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Parameter("polynomial degree must be at least 1".into()));
        }
        let count = monomial_count(n_vars, degree);
        if count > max_columns {
            return Err(Error::BasisTooLarge {
                columns: count,
                cap: max_columns,
            });
        }
        // (column, last variable) of every monomial of the previous degree
        let mut previous: Vec<(usize, usize)> = (0..n_vars).map(|v| (1 + v, v)).collect();
        let mut higher = Vec::with_capacity(count.saturating_sub(1 + n_vars));
        let mut next_col = 1 + n_vars;
        for _ in 2..=degree {
            let mut current = Vec::new();
            for &(col, last) in &previous {
                for v in last..n_vars {
                    higher.push((col, v));
                    current.push((next_col, v));
                    next_col += 1;
                }
            }
            previous = current;
        }
        debug_assert_eq!(next_col, count);
        Ok(Self {
            n_vars,
            degree,
            higher,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn width(&self) -> usize {
        1 + self.n_vars + self.higher.len()
    }

    /// Evaluates all monomials. `out[1..=n_vars]` must already hold the variables.
    #[inline]
    pub(crate) fn fill_from_linear(&self, out: &mut [f64]) {
        out[0] = 1.0;
        let base = 1 + self.n_vars;
        for (k, &(parent, v)) in self.higher.iter().enumerate() {
            out[base + k] = out[parent] * out[1 + v];
        }
    }

    pub fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n_vars {
            return Err(Error::Shape {
                expected: self.n_vars,
                found: x.len(),
            });
        }
        out[1..=self.n_vars].copy_from_slice(x);
        self.fill_from_linear(out);
        Ok(())
    }

    /// Exponent vector of every column, for inspection.
    pub fn exponents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![0; self.n_vars]];
        for v in 0..self.n_vars {
            let mut e = vec![0; self.n_vars];
            e[v] = 1;
            out.push(e);
        }
        for &(parent, v) in &self.higher {
            let mut e = out[parent].clone();
            e[v] += 1;
            out.push(e);
        }
        out
    }
}

/// Design matrix of all monomials of degree at most `d` in the standardised features.
pub fn poly_features(x: &StandardizedFeatures, degree: usize) -> Result<DesignMatrix> {
    poly_features_capped(x, degree, DEFAULT_MAX_COLUMNS)
}

pub fn poly_features_capped(
    x: &StandardizedFeatures,
    degree: usize,
    max_columns: usize,
) -> Result<DesignMatrix> {
    let table = MonomialTable::new(x.cols(), degree, max_columns)?;
    let w = table.width();
    let mut values = vec![0.0; x.rows * w];
    for (p, row) in values.chunks_exact_mut(w).enumerate() {
        table.evaluate(x.row(p), row)?;
    }
    Ok(DesignMatrix {
        values,
        rows: x.rows,
        cols: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FactorMatrix, Standardizer};

    fn features(rows: &[Vec<f64>]) -> StandardizedFeatures {
        let cols = rows[0].len();
        StandardizedFeatures {
            values: rows.concat(),
            rows: rows.len(),
            standardizer: Standardizer {
                kept: (0..cols).collect(),
                means: vec![0.0; cols],
                stds: vec![1.0; cols],
                dropped: vec![],
                n_raw: cols,
            },
        }
    }

    #[test]
    fn published_basis_sizes() {
        // rho = 1, 2, 3 (M = 2..30) and 4 at the last regression date
        for (f, count) in [
            (1, 3),
            (2, 6),
            (1, 3),
            (2, 6),
            (3, 10),
            (4, 15),
            (9, 55),
            (19, 210),
            (29, 465),
            (49, 1275),
        ] {
            assert_eq!(monomial_count(f, 2), count);
            assert_eq!(MonomialTable::new(f, 2, 5000).unwrap().width(), count);
        }
    }

    #[test]
    fn graded_lex_order() {
        let t = MonomialTable::new(2, 2, 100).unwrap();
        assert_eq!(
            t.exponents(),
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        let x = features(&[vec![3.0, -2.0]]);
        let d = poly_features(&x, 2).unwrap();
        assert_eq!(d.row(0), &[1.0, 3.0, -2.0, 9.0, -6.0, 4.0]);
    }

    #[test]
    fn single_factor_quadratic() {
        let x = features(&[vec![0.5], vec![-1.0]]);
        let d = poly_features(&x, 2).unwrap();
        assert_eq!(d.cols, 3);
        assert_eq!(d.row(0), &[1.0, 0.5, 0.25]);
        assert_eq!(d.row(1), &[1.0, -1.0, 1.0]);
    }

    #[test]
    fn zero_vector_hits_constant_only() {
        for (f, deg) in [(1, 1), (4, 3), (7, 2)] {
            let x = features(&[vec![0.0; f]]);
            let d = poly_features(&x, deg).unwrap();
            assert_eq!(d.cols, monomial_count(f, deg));
            assert_eq!(d.row(0)[0], 1.0);
            assert!(d.row(0)[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn exponents_are_distinct_and_bounded() {
        let t = MonomialTable::new(5, 3, 1000).unwrap();
        let e = t.exponents();
        assert_eq!(e.len(), monomial_count(5, 3));
        let mut sorted = e.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), e.len());
        assert!(e.iter().all(|m| m.iter().sum::<usize>() <= 3));
        // degrees are non-decreasing along the columns
        let degrees: Vec<usize> = e.iter().map(|m| m.iter().sum()).collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            MonomialTable::new(120, 2, 5000),
            Err(Error::BasisTooLarge { columns: 7381, cap: 5000 })
        ));
        assert!(MonomialTable::new(3, 0, 10).is_err());
        let raw = FactorMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let x = crate::features::standardize(&raw).unwrap();
        assert!(matches!(
            poly_features_capped(&x, 2, 5),
            Err(Error::BasisTooLarge { columns: 6, cap: 5 })
        ));
    }
}
