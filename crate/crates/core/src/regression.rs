//! Least squares through a streamed QR factorisation of `[X | y]`.
//!
//! Rows are folded into the triangular factor chunk by chunk, so the design
//! matrix is never held in memory and the normal equations are never formed.

use faer::Mat;

use crate::error::{Error, Result};

/// Rows buffered before they are folded into the triangular factor.
fn chunk_rows(cols: usize) -> usize {
    (4 * (cols + 1)).max(2048)
}

/// Triangular factor `R` of `[X | y]` accumulated over a stream of rows.
#[derive(Debug, Clone)]
pub struct QrAccumulator {
    cols: usize,
    /// Upper-trapezoidal, at most `cols + 1` rows.
    r: Mat<f64>,
    buffer: Vec<f64>,
    rows: usize,
}

impl QrAccumulator {
    /// Accumulator for a design with `cols` columns (the target adds one more).
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            r: Mat::zeros(0, cols + 1),
            buffer: Vec::new(),
            rows: 0,
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of rows pushed so far.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        debug_assert_eq!(x.len(), self.cols);
        self.buffer.extend_from_slice(x);
        self.buffer.push(y);
        self.rows += 1;
        if self.buffer.len() >= chunk_rows(self.cols) * (self.cols + 1) {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.buffer.is_empty() {
            return;
        }
        let w = self.cols + 1;
        let new_rows = self.buffer.len() / w;
        let top = self.r.nrows();
        let buffer = &self.buffer;
        let r = &self.r;
        let stacked = Mat::from_fn(top + new_rows, w, |i, j| {
            if i < top {
                r[(i, j)]
            } else {
                buffer[(i - top) * w + j]
            }
        });
        self.r = triangular_factor(&stacked);
        self.buffer.clear();
    }

    /// Folds in the rows of another accumulator (order matters only at the
    /// rounding level; callers merge in a fixed order for reproducibility).
    pub fn merge(&mut self, mut other: QrAccumulator) {
        other.flush();
        self.flush();
        if other.r.nrows() == 0 {
            self.rows += other.rows;
            return;
        }
        let top = self.r.nrows();
        let w = self.cols + 1;
        let stacked = Mat::from_fn(top + other.r.nrows(), w, |i, j| {
            if i < top {
                self.r[(i, j)]
            } else {
                other.r[(i - top, j)]
            }
        });
        self.r = triangular_factor(&stacked);
        self.rows += other.rows;
    }

    /// Solves the accumulated problem.
    pub fn solve(mut self, ridge: Ridge) -> Result<Solution> {
        self.flush();
        solve_triangular_system(&self.r, self.cols, ridge)
    }
}

fn triangular_factor(a: &Mat<f64>) -> Mat<f64> {
    let qr = a.qr();
    let r = qr.thin_R();
    Mat::from_fn(r.nrows(), r.ncols(), |i, j| if j >= i { r[(i, j)] } else { 0.0 })
}

/// Regularisation of the least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `lambda = scale * mean diagonal of X^T X`; a zero scale gives plain least squares.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: Vec<f64>,
    /// Penalty actually applied.
    pub lambda: f64,
    /// Set when the unregularised problem was rank deficient and the
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
}

fn back_substitute(r: &Mat<f64>, n: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let d = r[(i, i)];
        if !(d.abs() > 1e-13 * scale) {
            return None;
        }
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / d;
    }
    Some(x)
}

/// Solves `min |X theta - y|^2 + lambda |theta|^2` from the factor of `[X | y]`.
fn solve_triangular_system(r: &Mat<f64>, cols: usize, ridge: Ridge) -> Result<Solution> {
    let k = r.nrows().min(cols);
    let mean_diag = if cols == 0 {
        0.0
    } else {
        let mut sq = 0.0;
        for i in 0..r.nrows() {
            for j in 0..cols {
                sq += r[(i, j)] * r[(i, j)];
            }
        }
        sq / cols as f64
    };
    let lambda = match ridge {
        Ridge::Relative(s) => s * mean_diag,
        Ridge::Absolute(l) => l,
    };
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter("ridge penalty must be non-negative".into()));
    }
    if cols == 0 {
        return Ok(Solution {
            theta: Vec::new(),
            lambda,
            rank_deficient: false,
        });
    }
    if lambda > 0.0 {
        // QR of [[R_X, z]; [sqrt(lambda) I, 0]]
        let sl = lambda.sqrt();
        let top = r.nrows();
        let aug = Mat::from_fn(top + cols, cols + 1, |i, j| {
            if i < top {
                r[(i, j)]
            } else if j == i - top {
                sl
            } else {
                0.0
            }
        });
        let f = triangular_factor(&aug);
        let rhs: Vec<f64> = (0..cols).map(|i| f[(i, cols)]).collect();
        if let Some(theta) = back_substitute(&f, cols, &rhs) {
            if theta.iter().all(|v| v.is_finite()) {
                return Ok(Solution {
                    theta,
                    lambda,
                    rank_deficient: false,
                });
            }
        }
        return Err(Error::Numerical("ridge system could not be solved".into()));
    }
    if k == cols {
        let rhs: Vec<f64> = (0..cols).map(|i| r[(i, cols)]).collect();
        if let Some(theta) = back_substitute(r, cols, &rhs) {
            return Ok(Solution {
                theta,
                lambda,
                rank_deficient: false,
            });
        }
    }
    log::warn!("rank-deficient regression; returning the minimum-norm solution");
    Ok(Solution {
        theta: min_norm(r, cols)?,
        lambda,
        rank_deficient: true,
    })
}

/// Minimum-norm least-squares solution from the thin SVD of `R_X`.
fn min_norm(r: &Mat<f64>, cols: usize) -> Result<Vec<f64>> {
    let rows = r.nrows();
    if rows == 0 {
        return Ok(vec![0.0; cols]);
    }
    let rx = Mat::from_fn(rows, cols, |i, j| r[(i, j)]);
    let svd = rx
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("singular value decomposition failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let s = s.column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let cutoff = smax * 1e-12 * rows.max(cols) as f64;
    let mut theta = vec![0.0; cols];
    for k in 0..s.nrows() {
        if s[k] <= cutoff {
            continue;
        }
        let mut coef = 0.0;
        for i in 0..rows {
            coef += u[(i, k)] * r[(i, cols)];
        }
        coef /= s[k];
        for (j, t) in theta.iter_mut().enumerate() {
            *t += coef * v[(j, k)];
        }
    }
    Ok(theta)
}

/// Least squares on an explicit design, for small problems and tests.
pub fn least_squares(x: &[f64], cols: usize, y: &[f64], ridge: Ridge) -> Result<Solution> {
    if cols == 0 || x.len() != y.len() * cols {
        return Err(Error::Shape {
            expected: y.len() * cols,
            found: x.len(),
        });
    }
    let mut acc = QrAccumulator::new(cols);
    for (row, &t) in x.chunks_exact(cols).zip(y) {
        acc.push(row, t);
    }
    acc.solve(ridge)
}
