//! Randomised feed-forward and recurrent feature maps with frozen hidden weights.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RffnnSpec {
    /// Number of hidden units `h - 1`.
    pub hidden: usize,
    /// Slope of the leaky ReLU on the negative half-line.
    pub slope: f64,
    pub weight_std: f64,
    pub seed: u64,
}

impl Default for RffnnSpec {
    fn default() -> Self {
        Self {
            hidden: 40,
            slope: 0.01,
            weight_std: 1.0,
            seed: 0,
        }
    }
}

impl RffnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Parameter("hidden size must be at least 1".into()));
        }
        if !(self.weight_std >= 0.0 && self.weight_std.is_finite()) {
            return Err(Error::Parameter("weight std must be non-negative".into()));
        }
        if !self.slope.is_finite() {
            return Err(Error::Parameter("leaky slope must be finite".into()));
        }
        Ok(())
    }
}

#[inline]
fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, len: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("finite non-negative std");
    (0..len).map(|_| dist.sample(rng)).collect()
}

/// Frozen hidden layer `x -> (leaky(A x + b), 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffnnLayer {
    /// Row-major `hidden x inputs`.
    a: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
    slope: f64,
}

impl RffnnLayer {
    /// Samples `A` and `b` from `N(0, weight_std^2)`; `stream` separates the
    /// independent layers built for different regression dates.
    pub fn sample(spec: &RffnnSpec, inputs: usize, stream: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream_rng(spec.seed, stream);
        let a = normal_matrix(&mut rng, spec.hidden * inputs, spec.weight_std);
        let b = normal_matrix(&mut rng, spec.hidden, spec.weight_std);
        Ok(Self {
            a,
            b,
            inputs,
            slope: spec.slope,
        })
    }

    pub fn from_parts(a: Vec<f64>, b: Vec<f64>, slope: f64) -> Result<Self> {
        if b.is_empty() || a.len() % b.len() != 0 {
            return Err(Error::Input("weight matrix does not match bias length".into()));
        }
        Ok(Self {
            inputs: a.len() / b.len(),
            a,
            b,
            slope,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    /// Output width `h`: hidden units plus the constant.
    pub fn width(&self) -> usize {
        self.b.len() + 1
    }

    #[inline]
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        let h = self.b.len();
        for k in 0..h {
            let row = &self.a[k * self.inputs..(k + 1) * self.inputs];
            let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b[k];
            out[k] = leaky_relu(z, self.slope);
        }
        out[h] = 1.0;
    }

    pub fn features_row(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::Shape {
                expected: self.inputs,
                found: x.len(),
            });
        }
        self.apply(x, out);
        Ok(())
    }
}

/// Random feed-forward features for every row of `x` (row-major, `cols` wide).
pub fn rffnn_features(x: &[f64], cols: usize, layer: &RffnnLayer) -> Result<DesignMatrix> {
    if cols != layer.inputs() {
        return Err(Error::Shape {
            expected: layer.inputs(),
            found: cols,
        });
    }
    let rows = if cols == 0 { 0 } else { x.len() / cols };
    let w = layer.width();
    let mut values = vec![0.0; rows * w];
    for (p, out) in values.chunks_exact_mut(w).enumerate() {
        layer.apply(&x[p * cols..(p + 1) * cols], out);
    }
    Ok(DesignMatrix { values, rows, cols: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrnnSpec {
    /// Number of hidden units `h - 1`.
    pub hidden: usize,
    pub input_std: f64,
    pub recurrent_std: f64,
    pub bias_std: f64,
    pub seed: u64,
}

impl Default for RrnnSpec {
    fn default() -> Self {
        Self {
            hidden: 20,
            input_std: 1e-4,
            recurrent_std: 0.3,
            bias_std: 1.0,
            seed: 0,
        }
    }
}

impl RrnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Parameter("hidden size must be at least 1".into()));
        }
        for s in [self.input_std, self.recurrent_std, self.bias_std] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Parameter("weight std must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Frozen recurrent cell `xi_j = tanh(A_x x_j + A_xi xi_{j-1} + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RrnnCell {
    a_x: Vec<f64>,
    a_xi: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
}

impl RrnnCell {
    pub fn sample(spec: &RrnnSpec, inputs: usize) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden;
        let mut rng = stream_rng(spec.seed, 0);
        let a_x = normal_matrix(&mut rng, h * inputs, spec.input_std);
        let a_xi = normal_matrix(&mut rng, h * h, spec.recurrent_std);
        let b = normal_matrix(&mut rng, h, spec.bias_std);
        Ok(Self { a_x, a_xi, b, inputs })
    }

    pub fn from_parts(a_x: Vec<f64>, a_xi: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let h = b.len();
        if h == 0 || a_xi.len() != h * h || a_x.len() % h != 0 {
            return Err(Error::Input("inconsistent recurrent weight shapes".into()));
        }
        Ok(Self {
            inputs: a_x.len() / h,
            a_x,
            a_xi,
            b,
        })
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// One step of the recurrence; `next` receives the new state.
    #[inline]
    pub(crate) fn step(&self, x: &[f64], xi: &[f64], next: &mut [f64]) {
        let h = self.b.len();
        for k in 0..h {
            let mut z = self.b[k];
            let wx = &self.a_x[k * self.inputs..(k + 1) * self.inputs];
            z += wx.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let wh = &self.a_xi[k * h..(k + 1) * h];
            z += wh.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>();
            next[k] = z.tanh();
        }
    }

    /// Runs the recurrence from `xi_{-1} = 0` over a sequence of inputs
    /// (`inputs` values per step) and returns the last state.
    pub(crate) fn run(&self, sequence: impl Iterator<Item = f64>, state: &mut [f64], tmp: &mut [f64]) {
        debug_assert_eq!(self.inputs, 1);
        state.iter_mut().for_each(|v| *v = 0.0);
        for x in sequence {
            self.step(&[x], state, tmp);
            state.copy_from_slice(tmp);
        }
    }
}

/// Inputs of all paths at one observation date: row-major `rows x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlice {
    pub date: usize,
    pub values: Vec<f64>,
}

/// Hidden state after feeding `slices` in order, with the constant appended.
pub fn rrnn_features(slices: &[TimeSlice], cell: &RrnnCell) -> Result<DesignMatrix> {
    let Some(first) = slices.first() else {
        return Err(Error::Input("no input slices".into()));
    };
    if slices.windows(2).any(|w| w[1].date <= w[0].date) {
        return Err(Error::Sequencing);
    }
    let d = cell.inputs();
    if d == 0 || first.values.len() % d != 0 {
        return Err(Error::Shape {
            expected: d,
            found: first.values.len(),
        });
    }
    let rows = first.values.len() / d;
    if slices.iter().any(|s| s.values.len() != rows * d) {
        return Err(Error::Input("slices have different row counts".into()));
    }
    let h = cell.hidden();
    let mut state = vec![0.0; rows * h];
    let mut tmp = vec![0.0; h];
    for slice in slices {
        for p in 0..rows {
            let xi = &mut state[p * h..(p + 1) * h];
            cell.step(&slice.values[p * d..(p + 1) * d], xi, &mut tmp);
            xi.copy_from_slice(&tmp);
        }
    }
    let w = h + 1;
    let mut values = vec![0.0; rows * w];
    for p in 0..rows {
        values[p * w..p * w + h].copy_from_slice(&state[p * h..(p + 1) * h]);
        values[p * w + h] = 1.0;
    }
    Ok(DesignMatrix { values, rows, cols: w })
}
