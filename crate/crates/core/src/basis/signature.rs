//! Lead-lag and time-joined embeddings of a series and their truncated signatures.
//!
//! Tensors are stored level by level (level 0 omitted), each level row-major
//! in the letters of the word: the entry of `e_{w_1} ... e_{w_k}` sits at
//! `sum_j w_j d^{k-j}` inside level `k`.

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::features::{FeatureFrame, RiskSet, RiskSetSpec};
use crate::model::PathBatch;

/// Highest truncation order accepted by default.
pub const DEFAULT_MAX_ORDER: usize = 6;

/// `sum_{k=1}^{n} d^k`, the signature length without the constant term.
pub fn signature_dim(dim: usize, order: usize) -> usize {
    (1..=order).map(|k| dim.pow(k as u32)).sum()
}

fn level_offsets(dim: usize, order: usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(order + 1);
    let mut acc = 0;
    for k in 1..=order {
        off.push(acc);
        acc += dim.pow(k as u32);
    }
    off.push(acc);
    off
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    dim: usize,
    /// Row-major vertex coordinates.
    vertices: Vec<f64>,
}

impl PiecewiseLinearPath {
    pub fn new(dim: usize, vertices: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("path dimension must be positive".into()));
        }
        if vertices.len() < 2 {
            return Err(Error::Input("a path needs at least two vertices".into()));
        }
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::Shape {
                expected: dim,
                found: vertices.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(0),
            });
        }
        Ok(Self {
            dim,
            vertices: vertices.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, k: usize) -> &[f64] {
        &self.vertices[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        self.vertices.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (1..self.len()).map(move |k| {
            self.vertex(k)
                .iter()
                .zip(self.vertex(k - 1))
                .map(|(a, b)| a - b)
                .collect()
        })
    }

    /// The path followed by `other`, joined by a straight segment if they do not meet.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        Ok(Self {
            dim: self.dim,
            vertices,
        })
    }

    pub fn reversed(&self) -> Self {
        let vertices = self.vertices.chunks(self.dim).rev().flatten().copied().collect();
        Self {
            dim: self.dim,
            vertices,
        }
    }

    /// Total 1-variation: the sum of the l1 lengths of the segments.
    pub fn one_variation(&self) -> f64 {
        self.increments()
            .map(|v| v.iter().map(|x| x.abs()).sum::<f64>())
            .sum()
    }
}

/// Lead-lag embedding: `(x_0, x_0) -> (x_1, x_0) -> (x_1, x_1) -> (x_2, x_1) -> ...`,
/// the lead coordinate moving first. `2 (L - 1) + 1` vertices.
pub fn lead_lag(series: &[f64]) -> Result<PiecewiseLinearPath> {
    if series.len() < 2 {
        return Err(Error::Input("lead-lag needs at least two observations".into()));
    }
    let mut vertices = Vec::with_capacity(2 * (2 * series.len() - 1));
    vertices.extend_from_slice(&[series[0], series[0]]);
    for w in series.windows(2) {
        vertices.extend_from_slice(&[w[1], w[0], w[1], w[1]]);
    }
    Ok(PiecewiseLinearPath { dim: 2, vertices })
}

/// Adds a time coordinate running uniformly from 0 to 1 over the vertices, after
/// a stub segment from the origin to `(0, lead_0, lag_0)`.
pub fn time_join(path: &PiecewiseLinearPath) -> Result<PiecewiseLinearPath> {
    if path.dim != 2 {
        return Err(Error::Input(format!(
            "time join expects a 2-dimensional path, got {}",
            path.dim
        )));
    }
    let k = path.len();
    let mut vertices = Vec::with_capacity(3 * (k + 1));
    vertices.extend_from_slice(&[0.0, 0.0, 0.0]);
    for j in 0..k {
        let tau = j as f64 / (k - 1) as f64;
        let v = path.vertex(j);
        vertices.extend_from_slice(&[tau, v[0], v[1]]);
    }
    Ok(PiecewiseLinearPath { dim: 3, vertices })
}

/// Element of the truncated tensor algebra with unit constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

impl TruncatedSignature {
    /// The signature of a constant path.
    pub fn identity(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            data: vec![0.0; signature_dim(dim, order)],
        }
    }

    /// `exp(v) = (1, v, v^2/2!, ..., v^n/n!)`, the signature of one straight segment.
    pub fn segment(v: &[f64], order: usize) -> Self {
        let mut s = Self::identity(v.len(), order);
        let mut scratch = SignatureScratch::new(v.len(), order);
        s.mul_segment(v, &mut scratch);
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let off = level_offsets(self.dim, self.order);
        &self.data[off[k - 1]..off[k]]
    }

    /// Levels `1..=n` concatenated.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// In place `self <- self (x) exp(v)`: appends a straight segment.
    pub fn mul_segment(&mut self, v: &[f64], scratch: &mut SignatureScratch) {
        mul_segment_in_place(&mut self.data, self.dim, self.order, v, scratch);
    }

    /// Chen product `self (x) other`, truncated at the common order.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.order != other.order {
            return Err(Error::Input("signatures of different shapes".into()));
        }
        let d = self.dim;
        let off = level_offsets(d, self.order);
        let mut data = vec![0.0; self.data.len()];
        for k in 1..=self.order {
            let out = &mut data[off[k - 1]..off[k]];
            // a_k and b_k against the unit constant terms
            for (o, (a, b)) in out
                .iter_mut()
                .zip(self.level(k).iter().zip(other.level(k)))
            {
                *o = a + b;
            }
            for m in 1..k {
                let a = self.level(m);
                let b = other.level(k - m);
                let nb = b.len();
                for (ia, &x) in a.iter().enumerate() {
                    let row = &mut out[ia * nb..(ia + 1) * nb];
                    for (o, &y) in row.iter_mut().zip(b) {
                        *o += x * y;
                    }
                }
            }
        }
        Ok(Self {
            dim: d,
            order: self.order,
            data,
        })
    }
}

/// Work buffers for in-place segment multiplication.
#[derive(Debug, Clone)]
pub struct SignatureScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SignatureScratch {
    pub fn new(dim: usize, order: usize) -> Self {
        let top = dim.pow(order as u32);
        Self {
            a: vec![0.0; top],
            b: vec![0.0; top],
        }
    }
}

/// Horner evaluation of `(sig (x) exp(v))_k = sum_{m<=k} sig_m (x) v^{k-m}/(k-m)!`,
/// level by level from the top so that lower levels are still the old ones.
pub(crate) fn mul_segment_in_place(
    data: &mut [f64],
    dim: usize,
    order: usize,
    v: &[f64],
    scratch: &mut SignatureScratch,
) {
    let off = level_offsets(dim, order);
    for k in (1..=order).rev() {
        // t_1 = a_1 + v / k
        let (t, next) = (&mut scratch.a, &mut scratch.b);
        let mut len = dim;
        for l in 0..dim {
            t[l] = data[off[0] + l] + v[l] / k as f64;
        }
        let mut cur = t;
        let mut nxt = next;
        for j in 2..=k {
            let scale = 1.0 / (k - j + 1) as f64;
            let level = &data[off[j - 1]..off[j]];
            for w in 0..len {
                let x = cur[w] * scale;
                let base = w * dim;
                for l in 0..dim {
                    nxt[base + l] = level[base + l] + x * v[l];
                }
            }
            len *= dim;
            std::mem::swap(&mut cur, &mut nxt);
        }
        data[off[k - 1]..off[k]].copy_from_slice(&cur[..len]);
    }
}

fn check_order(order: usize, cap: usize) -> Result<()> {
    if order == 0 || order > cap {
        return Err(Error::Order { order, cap });
    }
    Ok(())
}

/// Signature of a piecewise-linear path as the Chen product of its segment exponentials.
pub fn signature(path: &PiecewiseLinearPath, order: usize) -> Result<TruncatedSignature> {
    signature_capped(path, order, DEFAULT_MAX_ORDER)
}

pub fn signature_capped(
    path: &PiecewiseLinearPath,
    order: usize,
    max_order: usize,
) -> Result<TruncatedSignature> {
    check_order(order, max_order)?;
    let mut sig = TruncatedSignature::identity(path.dim, order);
    let mut scratch = SignatureScratch::new(path.dim, order);
    for v in path.increments() {
        sig.mul_segment(&v, &mut scratch);
    }
    Ok(sig)
}

/// Signature of the time-joined lead-lag path of a series, built incrementally.
///
/// Time advances by `time_step` on every lead or lag move instead of by
/// `1 / (2 (L - 1))`; [`SignatureStream::rescaled`] restores the uniform time
/// normalisation by scaling each word with `c^{#time letters}`. This keeps the
/// state extendable (and retractable) one observation at a time.
#[derive(Debug, Clone)]
pub(crate) struct SignatureStream {
    order: usize,
    time_step: f64,
    /// Number of time letters in every word, aligned with the tensor layout.
    time_letters: Vec<u8>,
}

pub(crate) const STREAM_DIM: usize = 3;

impl SignatureStream {
    pub fn new(order: usize, time_step: f64) -> Self {
        let mut time_letters = Vec::with_capacity(signature_dim(STREAM_DIM, order));
        let mut prev: Vec<u8> = vec![0];
        for _ in 1..=order {
            let mut cur = Vec::with_capacity(prev.len() * STREAM_DIM);
            for &p in &prev {
                cur.push(p + 1);
                cur.push(p);
                cur.push(p);
            }
            time_letters.extend_from_slice(&cur);
            prev = cur;
        }
        Self {
            order,
            time_step,
            time_letters,
        }
    }

    pub fn len(&self) -> usize {
        self.time_letters.len()
    }

    pub fn scratch(&self) -> SignatureScratch {
        SignatureScratch::new(STREAM_DIM, self.order)
    }

    /// Signature of the series from scratch.
    pub fn init(&self, series: &[f64], state: &mut [f64], scratch: &mut SignatureScratch) {
        state.iter_mut().for_each(|v| *v = 0.0);
        let x0 = series[0];
        mul_segment_in_place(state, STREAM_DIM, self.order, &[0.0, x0, x0], scratch);
        for w in series.windows(2) {
            self.push(w[1] - w[0], state, scratch);
        }
    }

    /// Appends one observation with increment `delta`: a lead move, then a lag move.
    pub fn push(&self, delta: f64, state: &mut [f64], scratch: &mut SignatureScratch) {
        let h = self.time_step;
        mul_segment_in_place(state, STREAM_DIM, self.order, &[h, delta, 0.0], scratch);
        mul_segment_in_place(state, STREAM_DIM, self.order, &[h, 0.0, delta], scratch);
    }

    /// Removes the last observation, whose increment was `delta`.
    pub fn pop(&self, delta: f64, state: &mut [f64], scratch: &mut SignatureScratch) {
        let h = self.time_step;
        mul_segment_in_place(state, STREAM_DIM, self.order, &[-h, 0.0, -delta], scratch);
        mul_segment_in_place(state, STREAM_DIM, self.order, &[-h, -delta, 0.0], scratch);
    }

    /// Writes the signature of the uniformly time-normalised path of a series of
    /// `points` observations.
    pub fn rescaled(&self, state: &[f64], points: usize, out: &mut [f64]) {
        if points < 2 {
            out[..state.len()].copy_from_slice(state);
            return;
        }
        let c = 1.0 / (2 * (points - 1)) as f64 / self.time_step;
        let mut powers = [1.0; DEFAULT_MAX_ORDER + 2];
        for t in 1..powers.len() {
            powers[t] = powers[t - 1] * c;
        }
        for ((o, &s), &t) in out.iter_mut().zip(state).zip(&self.time_letters) {
            *o = s * powers[t as usize];
        }
    }
}

/// Signature design matrix on the standardised log-prices of a streamed risk
/// set, with the statistics fitted on `batch` itself. Columns: levels `1..=n`,
/// the constant, then the standardised log window-average when `augment`.
pub fn signature_features(
    batch: &PathBatch,
    i: usize,
    spec: &RiskSetSpec,
    order: usize,
    augment: bool,
) -> Result<DesignMatrix> {
    check_order(order, DEFAULT_MAX_ORDER)?;
    if !spec.rho.is_stream() {
        return Err(Error::Spec(
            "signature features need the window or history risk set".into(),
        ));
    }
    if i > batch.last_date() {
        return Err(Error::OutOfRange {
            index: i,
            last: batch.last_date(),
        });
    }
    spec.check_date(i)?;
    let mut frame = FeatureFrame::fit(batch, *spec)?;
    if augment {
        frame = frame.with_average_stats(batch);
    }
    let stream = SignatureStream::new(order, 1.0);
    let sig_len = stream.len();
    let cols = sig_len + 1 + usize::from(augment);
    let dates = spec.stream_dates(i);
    let points = dates.clone().count();
    let mut values = vec![0.0; batch.n_paths() * cols];
    let mut state = vec![0.0; sig_len];
    let mut series = Vec::with_capacity(points);
    let mut scratch = stream.scratch();
    for (p, row) in values.chunks_exact_mut(cols).enumerate() {
        let path = batch.path(p);
        series.clear();
        series.extend(dates.clone().map(|j| frame.spot_z(path, j)));
        stream.init(&series, &mut state, &mut scratch);
        stream.rescaled(&state, points, &mut row[..sig_len]);
        row[sig_len] = 1.0;
        if augment {
            row[sig_len + 1] = frame.average_z(path, i);
        }
    }
    Ok(DesignMatrix {
        values,
        rows: batch.n_paths(),
        cols,
    })
}

/// Whether a risk set may feed a path-based basis.
pub(crate) fn require_stream(rho: RiskSet, family: &str) -> Result<()> {
    if rho.is_stream() {
        Ok(())
    } else {
        Err(Error::Spec(format!(
            "{family} bases are defined on the window or history risk sets only"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_paths, ModelParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_path(rng: &mut ChaCha8Rng, dim: usize, segments: usize) -> PiecewiseLinearPath {
        let vertices = (0..=segments)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        PiecewiseLinearPath::new(dim, vertices).unwrap()
    }

    /// Level-2 entries by direct quadrature of `int (X^a - X^a_0) dX^b`, exact on segments.
    fn level_two_direct(path: &PiecewiseLinearPath) -> Vec<f64> {
        let d = path.dim();
        let mut out = vec![0.0; d * d];
        let start = path.vertex(0).to_vec();
        for k in 1..path.len() {
            let a = path.vertex(k - 1);
            let b = path.vertex(k);
            for x in 0..d {
                for y in 0..d {
                    let mid = 0.5 * (a[x] + b[x]) - start[x];
                    out[x * d + y] += mid * (b[y] - a[y]);
                }
            }
        }
        out
    }

    #[test]
    fn linear_segment_closed_form() {
        let (a, b) = (0.7, -1.3);
        let path = PiecewiseLinearPath::new(2, vec![vec![0.0, 0.0], vec![a, b]]).unwrap();
        let s = signature(&path, 3).unwrap();
        assert_eq!(s.level(1), &[a, b]);
        let l2 = s.level(2);
        let expect = [a * a / 2.0, a * b / 2.0, a * b / 2.0, b * b / 2.0];
        for (x, y) in l2.iter().zip(expect) {
            assert!((x - y).abs() <= 1e-15);
        }
        assert!((s.level(3)[0] - a * a * a / 6.0).abs() <= 1e-15);
    }

    #[test]
    fn published_signature_widths() {
        assert_eq!(
            [2, 3, 4, 5].map(|n| signature_dim(3, n)),
            [12, 39, 120, 363]
        );
        for n in 1..=6 {
            assert_eq!(signature_dim(3, n) + 1, (3usize.pow(n as u32 + 1) - 1) / 2);
        }
    }

    #[test]
    fn order_cap() {
        let path = lead_lag(&[1.0, 2.0]).unwrap();
        assert_eq!(
            signature(&path, 7).unwrap_err(),
            Error::Order { order: 7, cap: 6 }
        );
        assert!(signature(&path, 0).is_err());
    }

    #[test]
    fn lead_lag_and_time_join_vertices() {
        let ll = lead_lag(&[0.0, 1.0]).unwrap();
        assert_eq!(ll.vertices(), vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let tj = time_join(&ll).unwrap();
        assert_eq!(
            tj.vertices(),
            vec![
                vec![0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![0.5, 1.0, 0.0],
                vec![1.0, 1.0, 1.0]
            ]
        );
        let ll = lead_lag(&[2.0, 3.0, 5.0]).unwrap();
        assert_eq!(ll.len(), 5);
        assert_eq!(ll.vertex(3), &[5.0, 3.0]);
        assert!(lead_lag(&[1.0]).is_err());
        assert!(time_join(&tj).is_err());
    }

    #[test]
    fn time_component_and_monotonicity() {
        let tj = time_join(&lead_lag(&[1.0, 0.5, 2.0, 1.5]).unwrap()).unwrap();
        let times: Vec<f64> = (1..tj.len()).map(|k| tj.vertex(k)[0]).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tj.vertex(0)[0], tj.vertex(1)[0]);
        let s = signature(&tj, 2).unwrap();
        assert!((s.level(1)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_series_has_trivial_spatial_signature() {
        let ll = lead_lag(&[3.0, 3.0, 3.0]).unwrap();
        let s = signature(&ll, 4).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn levy_area_is_half_the_quadratic_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let series: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = signature(&lead_lag(&series).unwrap(), 2).unwrap();
            let l2 = s.level(2);
            let area = 0.5 * (l2[1] - l2[2]);
            let qv: f64 = series.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            assert!((area - 0.5 * qv).abs() < 1e-12);
            // and the second level agrees with direct quadrature
            let direct = level_two_direct(&lead_lag(&series).unwrap());
            for (x, y) in l2.iter().zip(direct) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chen_identity_and_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = random_path(&mut rng, 3, 4);
            let q = random_path(&mut rng, 3, 3);
            // join q to the end point of p
            let shift: Vec<f64> = p
                .vertex(p.len() - 1)
                .iter()
                .zip(q.vertex(0))
                .map(|(a, b)| a - b)
                .collect();
            let q = PiecewiseLinearPath::new(
                3,
                q.vertices()
                    .into_iter()
                    .map(|v| v.iter().zip(&shift).map(|(a, b)| a + b).collect())
                    .collect(),
            )
            .unwrap();
            let joined = signature(&p.concat(&q).unwrap(), 5).unwrap();
            let product = signature(&p, 5).unwrap().concat(&signature(&q, 5).unwrap()).unwrap();
            for (a, b) in joined.as_slice().iter().zip(product.as_slice()) {
                assert!((a - b).abs() <= 1e-10);
            }
            let there_and_back = signature(&p.concat(&p.reversed()).unwrap(), 5).unwrap();
            assert!(there_and_back.as_slice().iter().all(|v| v.abs() <= 1e-10));
        }
    }

    #[test]
    fn stream_matches_time_joined_path() {
        let series = [0.3, -0.2, 0.9, 1.4, 0.1];
        let direct = signature(&time_join(&lead_lag(&series).unwrap()).unwrap(), 4).unwrap();
        for step in [1.0, 0.01] {
            let stream = SignatureStream::new(4, step);
            let mut state = vec![0.0; stream.len()];
            let mut scratch = stream.scratch();
            stream.init(&series, &mut state, &mut scratch);
            let mut out = vec![0.0; stream.len()];
            stream.rescaled(&state, series.len(), &mut out);
            for (a, b) in out.iter().zip(direct.as_slice()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn stream_push_and_pop_are_inverse() {
        let series = [0.3, -0.2, 0.9, 1.4, 0.1, -0.5];
        let stream = SignatureStream::new(5, 0.01);
        let mut scratch = stream.scratch();
        let mut full = vec![0.0; stream.len()];
        stream.init(&series, &mut full, &mut scratch);
        let mut shorter = vec![0.0; stream.len()];
        stream.init(&series[..4], &mut shorter, &mut scratch);
        let mut state = full.clone();
        stream.pop(series[5] - series[4], &mut state, &mut scratch);
        stream.pop(series[4] - series[3], &mut state, &mut scratch);
        for (a, b) in state.iter().zip(&shorter) {
            assert!((a - b).abs() <= 1e-10);
        }
        stream.push(series[4] - series[3], &mut state, &mut scratch);
        stream.push(series[5] - series[4], &mut state, &mut scratch);
        for (a, b) in state.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn feature_width_is_independent_of_window_and_date() {
        let batch = simulate_paths(&ModelParams::default(), 64, 3, false).unwrap();
        for (rho, m, i) in [
            (RiskSet::History, 2, 49),
            (RiskSet::History, 30, 35),
            (RiskSet::Window, 10, 30),
            (RiskSet::Window, 3, 2),
        ] {
            let spec = RiskSetSpec::new(rho, m).unwrap();
            let d = signature_features(&batch, i, &spec, 5, false).unwrap();
            assert_eq!(d.cols, 364);
            assert!(d.values.chunks(364).all(|r| r[363] == 1.0));
            let d = signature_features(&batch, i, &spec, 3, true).unwrap();
            assert_eq!(d.cols, 41);
        }
        let spec = RiskSetSpec::new(RiskSet::Spot, 2).unwrap();
        assert!(signature_features(&batch, 10, &spec, 3, false).is_err());
    }

    #[test]
    fn constant_prices_leave_only_time_powers() {
        let params = ModelParams {
            sigma: 0.0,
            r: 0.0,
            ..ModelParams::default()
        };
        let batch = simulate_paths(&params, 4, 1, false).unwrap();
        let spec = RiskSetSpec::new(RiskSet::History, 2).unwrap();
        let d = signature_features(&batch, 20, &spec, 3, false).unwrap();
        let stream = SignatureStream::new(3, 1.0);
        for (c, &t) in stream.time_letters.iter().enumerate() {
            let k = level_of(c, 3);
            let v = d.row(0)[c];
            if t as usize == k {
                let fact: f64 = (1..=k).map(|x| x as f64).product();
                assert!((v - 1.0 / fact).abs() < 1e-12);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    fn level_of(index: usize, order: usize) -> usize {
        let off = level_offsets(3, order);
        (1..=order).find(|&k| index < off[k]).unwrap()
    }

    proptest! {
        #[test]
        fn factorial_decay(seed in 0u64..500, segments in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let path = random_path(&mut rng, 3, segments);
            let l = path.one_variation();
            let s = signature(&path, 5).unwrap();
            let mut fact = 1.0;
            for k in 1..=5 {
                fact *= k as f64;
                let bound = l.powi(k as i32) / fact;
                prop_assert!(s.level(k).iter().all(|v| v.abs() <= bound * (1.0 + 1e-12)));
            }
        }
    }
}
