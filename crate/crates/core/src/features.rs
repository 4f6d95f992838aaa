//! Risk-factor sets and the log-standardisation applied before every regression.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PathBatch;
use crate::payoffs::window_average;

/// Choice of regression inputs at a date `T_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskSet {
    /// `S_{T_i}` only.
    Spot,
    /// `S_{T_i}` and the window average `A^avg_i(M)`.
    SpotAverage,
    /// `S_{T_{i-M+2}}, ..., S_{T_i}`.
    Window,
    /// `S_{T_1}, ..., S_{T_i}`.
    History,
}

impl RiskSet {
    pub fn from_index(rho: u8) -> Result<Self> {
        match rho {
            1 => Ok(RiskSet::Spot),
            2 => Ok(RiskSet::SpotAverage),
            3 => Ok(RiskSet::Window),
            4 => Ok(RiskSet::History),
            _ => Err(Error::Parameter(format!("risk set must be 1..=4, got {rho}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            RiskSet::Spot => 1,
            RiskSet::SpotAverage => 2,
            RiskSet::Window => 3,
            RiskSet::History => 4,
        }
    }

    /// Whether the set is a stream of consecutive observations.
    pub fn is_stream(self) -> bool {
        matches!(self, RiskSet::Window | RiskSet::History)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSetSpec {
    pub rho: RiskSet,
    pub window: usize,
}

impl RiskSetSpec {
    pub fn new(rho: RiskSet, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Parameter("window length must be at least 1".into()));
        }
        Ok(Self { rho, window })
    }

    /// The set actually used: with a one-day window the average and the window
    /// sets collapse to the spot.
    pub fn effective(&self) -> RiskSet {
        match (self.rho, self.window) {
            (RiskSet::SpotAverage | RiskSet::Window, 1) => RiskSet::Spot,
            (rho, _) => rho,
        }
    }

    pub fn check_date(&self, i: usize) -> Result<()> {
        if i + 1 < self.window {
            return Err(Error::WindowUnderflow {
                index: i,
                window: self.window,
            });
        }
        Ok(())
    }

    /// `F^rho_i`, the number of raw factors at date `i`.
    pub fn factor_count(&self, i: usize) -> usize {
        match self.effective() {
            RiskSet::Spot => 1,
            RiskSet::SpotAverage => 2,
            RiskSet::Window => self.window - 1,
            RiskSet::History => i,
        }
    }

    /// Grid dates whose spots enter the factor set at date `i` (the average of
    /// the `SpotAverage` set is not included).
    pub fn spot_dates(&self, i: usize) -> RangeInclusive<usize> {
        match self.effective() {
            RiskSet::Spot | RiskSet::SpotAverage => i..=i,
            RiskSet::Window => i + 2 - self.window..=i,
            #[allow(clippy::reversed_empty_ranges)]
            RiskSet::History if i == 0 => 1..=0,
            RiskSet::History => 1..=i,
        }
    }

    /// Dates of the observation stream fed to the path-based bases: the window
    /// spots for `Window`, the full history for `History`. At least one date.
    pub fn stream_dates(&self, i: usize) -> RangeInclusive<usize> {
        let dates = self.spot_dates(i);
        if dates.is_empty() {
            i..=i
        } else {
            dates
        }
    }

    pub fn fill_raw(&self, path: &[f64], i: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.spot_dates(i).map(|j| path[j]));
        if self.effective() == RiskSet::SpotAverage {
            out.push(window_average(path, i, self.window));
        }
    }
}

/// Row-major matrix of raw risk factors, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl FactorMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Input("ragged factor matrix".into()));
        }
        Ok(Self {
            values: rows.concat(),
            rows: rows.len(),
            cols,
        })
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p * self.cols..(p + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |p| self.values[p * self.cols + c])
    }
}

pub fn extract_risk_factors(batch: &PathBatch, i: usize, spec: &RiskSetSpec) -> Result<FactorMatrix> {
    if i > batch.last_date() {
        return Err(Error::OutOfRange {
            index: i,
            last: batch.last_date(),
        });
    }
    spec.check_date(i)?;
    let cols = spec.factor_count(i);
    let mut values = Vec::with_capacity(batch.n_paths() * cols);
    let mut row = Vec::with_capacity(cols);
    for path in batch.paths() {
        spec.fill_raw(path, i, &mut row);
        values.extend_from_slice(&row);
    }
    Ok(FactorMatrix {
        values,
        rows: batch.n_paths(),
        cols,
    })
}

/// Population mean and standard deviation of a column.
fn column_stats(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_degenerate(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(1.0))
}

/// Column statistics of the log-factors, captured on the fitting population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Raw column index of every retained column.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Raw column indices dropped for having zero spread.
    pub dropped: Vec<usize>,
    pub n_raw: usize,
}

impl Standardizer {
    pub fn fit(raw: &FactorMatrix) -> Result<Self> {
        if raw.rows < 2 {
            return Err(Error::Input("standardisation needs at least two rows".into()));
        }
        if raw.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Input("risk factors must be strictly positive".into()));
        }
        let mut out = Self {
            kept: Vec::new(),
            means: Vec::new(),
            stds: Vec::new(),
            dropped: Vec::new(),
            n_raw: raw.cols,
        };
        for c in 0..raw.cols {
            let (mean, std) = column_stats(raw.column(c).map(f64::ln));
            if is_degenerate(mean, std) {
                log::warn!("risk factor column {c} has zero spread and is dropped");
                out.dropped.push(c);
            } else {
                out.kept.push(c);
                out.means.push(mean);
                out.stds.push(std);
            }
        }
        Ok(out)
    }

    pub fn width(&self) -> usize {
        self.kept.len()
    }

    pub fn transform_row(&self, raw: &[f64], out: &mut [f64]) -> Result<()> {
        if raw.len() != self.n_raw {
            return Err(Error::Shape {
                expected: self.n_raw,
                found: raw.len(),
            });
        }
        for (k, &c) in self.kept.iter().enumerate() {
            out[k] = (raw[c].ln() - self.means[k]) / self.stds[k];
        }
        Ok(())
    }

    /// Recovers the retained raw factors from standardised values.
    pub fn inverse_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v * s + m).exp())
            .collect()
    }
}

/// Standardised log-factors together with the statistics used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedFeatures {
    pub values: Vec<f64>,
    pub rows: usize,
    pub standardizer: Standardizer,
}

impl StandardizedFeatures {
    pub fn cols(&self) -> usize {
        self.standardizer.width()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let w = self.cols();
        &self.values[p * w..(p + 1) * w]
    }
}

/// `X = (log raw - mean) / std` column by column; columns with no spread are
/// dropped and reported in [`Standardizer::dropped`].
pub fn standardize(raw: &FactorMatrix) -> Result<StandardizedFeatures> {
    let standardizer = Standardizer::fit(raw)?;
    let w = standardizer.width();
    let mut values = vec![0.0; raw.rows * w];
    for p in 0..raw.rows {
        standardizer.transform_row(raw.row(p), &mut values[p * w..(p + 1) * w])?;
    }
    Ok(StandardizedFeatures {
        values,
        rows: raw.rows,
        standardizer,
    })
}

/// Log-spot and log-average statistics for every grid date of a training batch.
///
/// Every factor set is made of spots and (for `SpotAverage`) the window average,
/// so the per-date statistics of [`standardize`] applied to
/// [`extract_risk_factors`] can all be read from this table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub spec: RiskSetSpec,
    /// `(mean, std)` of `log S_{T_j}`; `None` for columns without spread.
    spot: Vec<Option<(f64, f64)>>,
    /// `(mean, std)` of `log A^avg_i(M)` for `i >= M - 1`.
    average: Vec<Option<(f64, f64)>>,
}

impl FeatureFrame {
    pub fn fit(batch: &PathBatch, spec: RiskSetSpec) -> Result<Self> {
        if batch.n_paths() < 2 {
            return Err(Error::Input("standardisation needs at least two paths".into()));
        }
        let n_dates = batch.n_dates();
        let stats = |it: &dyn Fn(&[f64]) -> f64| {
            let (mean, std) = column_stats(batch.paths().map(|p| it(p).ln()));
            (!is_degenerate(mean, std)).then_some((mean, std))
        };
        let spot = (0..n_dates).map(|j| stats(&|p: &[f64]| p[j])).collect();
        let average = if spec.effective() == RiskSet::SpotAverage {
            (0..n_dates)
                .map(|i| {
                    if i + 1 < spec.window {
                        None
                    } else {
                        stats(&|p: &[f64]| window_average(p, i, spec.window))
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self { spec, spot, average })
    }

    pub fn n_dates(&self) -> usize {
        self.spot.len()
    }

    /// Number of retained standardised factors at date `i`.
    pub fn width(&self, i: usize) -> usize {
        let spots = self
            .spec
            .spot_dates(i)
            .filter(|&j| self.spot[j].is_some())
            .count();
        let avg = usize::from(
            self.spec.effective() == RiskSet::SpotAverage && self.average[i].is_some(),
        );
        spots + avg
    }

    /// Standardised factors of one path at date `i`, written to `out[..width(i)]`.
    pub fn factors(&self, path: &[f64], i: usize, out: &mut [f64]) {
        let mut k = 0;
        for j in self.spec.spot_dates(i) {
            if let Some((m, s)) = self.spot[j] {
                out[k] = (path[j].ln() - m) / s;
                k += 1;
            }
        }
        if self.spec.effective() == RiskSet::SpotAverage {
            if let Some((m, s)) = self.average[i] {
                out[k] = (window_average(path, i, self.spec.window).ln() - m) / s;
            }
        }
    }

    /// Standardised log-spot at date `j`, or 0 when the column has no spread.
    #[inline]
    pub fn spot_z(&self, path: &[f64], j: usize) -> f64 {
        match self.spot[j] {
            Some((m, s)) => (path[j].ln() - m) / s,
            None => 0.0,
        }
    }

    /// Standardised log window-average at date `i`, or 0 without spread.
    pub fn average_z(&self, path: &[f64], i: usize) -> f64 {
        match self.average.get(i).copied().flatten() {
            Some((m, s)) => (window_average(path, i, self.spec.window).ln() - m) / s,
            None => 0.0,
        }
    }

    /// Frame extended with window-average statistics, whatever the risk set.
    pub fn with_average_stats(mut self, batch: &PathBatch) -> Self {
        let m = self.spec.window;
        self.average = (0..batch.n_dates())
            .map(|i| {
                if i + 1 < m {
                    None
                } else {
                    let (mean, std) =
                        column_stats(batch.paths().map(|p| window_average(p, i, m).ln()));
                    (!is_degenerate(mean, std)).then_some((mean, std))
                }
            })
            .collect();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_paths, ModelParams};
    use std::f64::consts::E;

    #[test]
    fn factor_counts() {
        let cases = [
            (RiskSet::Spot, 30, 49, 1),
            (RiskSet::SpotAverage, 30, 49, 2),
            (RiskSet::Window, 30, 49, 29),
            (RiskSet::History, 30, 50, 50),
            (RiskSet::History, 2, 49, 49),
            (RiskSet::Window, 1, 7, 1),
            (RiskSet::SpotAverage, 1, 7, 1),
        ];
        for (rho, m, i, f) in cases {
            let spec = RiskSetSpec::new(rho, m).unwrap();
            assert_eq!(spec.factor_count(i), f, "{rho:?} M={m} i={i}");
        }
    }

    #[test]
    fn extraction_matches_definitions() {
        let params = ModelParams::default();
        let batch = simulate_paths(&params, 16, 4, false).unwrap();
        let rho1 = extract_risk_factors(&batch, 17, &RiskSetSpec::new(RiskSet::Spot, 5).unwrap())
            .unwrap();
        assert_eq!(rho1.cols, 1);
        assert_eq!(rho1.column(0).collect::<Vec<_>>(), batch.column(17));

        let rho3 = RiskSetSpec::new(RiskSet::Window, 30).unwrap();
        let f = extract_risk_factors(&batch, 49, &rho3).unwrap();
        assert_eq!(f.cols, 29);
        assert_eq!(f.row(3)[0], batch.price(3, 21));

        let rho4 = RiskSetSpec::new(RiskSet::History, 2).unwrap();
        let f = extract_risk_factors(&batch, 50, &rho4).unwrap();
        assert_eq!(f.cols, 50);
        assert_eq!(f.row(0)[0], batch.price(0, 1));

        assert!(matches!(
            extract_risk_factors(&batch, 3, &rho3),
            Err(Error::WindowUnderflow { .. })
        ));
        assert!(f.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn window_average_is_recoverable_from_window_set() {
        let batch = simulate_paths(&ModelParams::default(), 8, 2, false).unwrap();
        let m = 6;
        let i = 20;
        let avg = extract_risk_factors(&batch, i, &RiskSetSpec::new(RiskSet::SpotAverage, m).unwrap())
            .unwrap();
        let win =
            extract_risk_factors(&batch, i, &RiskSetSpec::new(RiskSet::Window, m).unwrap()).unwrap();
        for p in 0..8 {
            let excluded = batch.price(p, i + 1 - m);
            let total = excluded + win.row(p).iter().sum::<f64>();
            assert!((total / m as f64 - avg.row(p)[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_column_standardises_to_unit_pair() {
        let raw = FactorMatrix::from_rows(&[vec![E], vec![E.powi(3)]]).unwrap();
        let x = standardize(&raw).unwrap();
        assert!((x.values[0] + 1.0).abs() < 1e-12);
        assert!((x.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_dropped() {
        let raw = FactorMatrix::from_rows(&[vec![E, 2.0], vec![E, 3.0], vec![E, 5.0]]).unwrap();
        let x = standardize(&raw).unwrap();
        assert_eq!(x.standardizer.dropped, vec![0]);
        assert_eq!(x.cols(), 1);
    }

    #[test]
    fn rejects_invalid_raw_factors() {
        let raw = FactorMatrix::from_rows(&[vec![1.0], vec![-2.0]]).unwrap();
        assert!(standardize(&raw).is_err());
        let raw = FactorMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(standardize(&raw).is_err());
    }

    #[test]
    fn standardised_columns_have_unit_moments_and_invert() {
        let batch = simulate_paths(&ModelParams::default(), 500, 8, false).unwrap();
        let spec = RiskSetSpec::new(RiskSet::Window, 10).unwrap();
        let raw = extract_risk_factors(&batch, 30, &spec).unwrap();
        let x = standardize(&raw).unwrap();
        for c in 0..x.cols() {
            let col: Vec<f64> = (0..x.rows).map(|p| x.row(p)[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
        for p in 0..x.rows {
            let back = x.standardizer.inverse_row(x.row(p));
            for (a, b) in back.iter().zip(raw.row(p)) {
                assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn frame_reproduces_standardize() {
        let batch = simulate_paths(&ModelParams::default(), 300, 21, false).unwrap();
        for rho in [RiskSet::Spot, RiskSet::SpotAverage, RiskSet::Window, RiskSet::History] {
            let spec = RiskSetSpec::new(rho, 5).unwrap();
            let frame = FeatureFrame::fit(&batch, spec).unwrap();
            for i in [4, 11, 50] {
                let x = standardize(&extract_risk_factors(&batch, i, &spec).unwrap()).unwrap();
                assert_eq!(frame.width(i), x.cols());
                let mut out = vec![0.0; x.cols()];
                for p in [0, 7, 299] {
                    frame.factors(batch.path(p), i, &mut out);
                    assert_eq!(out.as_slice(), x.row(p), "{rho:?} i={i} p={p}");
                }
            }
        }
    }
}
