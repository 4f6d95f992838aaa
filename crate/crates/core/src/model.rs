//! Black-Scholes path generation on the observation grid and discounting.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the lognormal model and of the observation grid `T_0 = 0, ..., T_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub s0: f64,
    pub r: f64,
    pub q: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub steps: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            s0: 100.0,
            r: 0.05,
            q: 0.0,
            sigma: 0.3,
            maturity: 0.2,
            steps: 50,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::Parameter(format!("s0 must be positive, got {}", self.s0)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::Parameter(format!(
                "maturity must be positive, got {}",
                self.maturity
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        if self.steps == 0 {
            return Err(Error::Parameter("steps must be at least 1".into()));
        }
        if !self.r.is_finite() || !self.q.is_finite() {
            return Err(Error::Parameter("rates must be finite".into()));
        }
        Ok(())
    }

    pub fn with_spot(mut self, s0: f64) -> Self {
        self.s0 = s0;
        self
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        self.maturity * j as f64 / self.steps as f64
    }

    /// `e^{-r (T_j - T_i)}`, the ratio of bank-account values `B_{T_i} / B_{T_j}`.
    pub fn discount_factor(&self, i: usize, j: usize) -> Result<f64> {
        if i > j {
            return Err(Error::Index { i, j });
        }
        if j > self.steps {
            return Err(Error::OutOfRange {
                index: j,
                last: self.steps,
            });
        }
        Ok((-self.r * (self.time(j) - self.time(i))).exp())
    }

    /// Discount factors from `T_0` to every grid date.
    pub fn discount_curve(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|j| (-self.r * self.time(j)).exp())
            .collect()
    }
}

pub fn discount_factor(params: &ModelParams, i: usize, j: usize) -> Result<f64> {
    params.discount_factor(i, j)
}

/// Simulated spot prices, one row per path and one column per grid date.
///
/// Immutable after construction; rows are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    prices: Vec<f64>,
    n_paths: usize,
    n_dates: usize,
    seed: u64,
}

impl PathBatch {
    /// Builds a batch from explicit rows. All rows must have the same length and
    /// strictly positive entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_dates = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || n_dates < 2 {
            return Err(Error::Input("need at least one path with two dates".into()));
        }
        let mut prices = Vec::with_capacity(rows.len() * n_dates);
        for row in rows {
            if row.len() != n_dates {
                return Err(Error::Shape {
                    expected: n_dates,
                    found: row.len(),
                });
            }
            if row.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::Input("prices must be strictly positive".into()));
            }
            prices.extend_from_slice(row);
        }
        Ok(Self {
            prices,
            n_paths: rows.len(),
            n_dates,
            seed: 0,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Number of grid dates, `N + 1`.
    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    /// Index of the last grid date, `N`.
    pub fn last_date(&self) -> usize {
        self.n_dates - 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, p: usize) -> &[f64] {
        &self.prices[p * self.n_dates..(p + 1) * self.n_dates]
    }

    pub fn price(&self, p: usize, j: usize) -> f64 {
        self.prices[p * self.n_dates + j]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.prices.chunks_exact(self.n_dates)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.paths().map(|row| row[j]).collect()
    }

    /// Same paths with every price multiplied by `factor`. Lognormal paths scale
    /// linearly in the initial spot, so this re-uses the random numbers exactly.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Parameter(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self {
            prices: self.prices.iter().map(|s| s * factor).collect(),
            ..*self
        })
    }

    /// Rows multiplied by per-path factors.
    pub fn scaled_rows(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.n_paths {
            return Err(Error::Shape {
                expected: self.n_paths,
                found: factors.len(),
            });
        }
        if factors.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::Parameter("row factors must be positive".into()));
        }
        let mut prices = self.prices.clone();
        for (row, f) in prices.chunks_exact_mut(self.n_dates).zip(factors) {
            row.iter_mut().for_each(|s| *s *= f);
        }
        Ok(Self { prices, ..*self })
    }

    /// Writes the batch as CSV with header `path_id,t0,...,tN`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["path_id".to_string()];
        header.extend((0..self.n_dates).map(|j| format!("t{j}")));
        w.write_record(&header)?;
        for (p, row) in self.paths().enumerate() {
            let mut rec = vec![p.to_string()];
            rec.extend(row.iter().map(|s| format!("{s:.10}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// SplitMix64 finaliser, used to derive independent sub-seeds from a master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one stream of a counter-based family: the key comes from the
/// seed and the stream id from the path index, so rows can be filled in any order.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exact lognormal sampling `S_{j+1} = S_j exp((r - q - sigma^2/2) dt + sigma sqrt(dt) Z)`.
///
/// Path `p` draws its normals from stream `p` (or `p / 2` under antithetic
/// sampling, where odd paths use the negated draws of their even partner), so the
/// output does not depend on how rows are scheduled across threads.
pub fn simulate_paths(
    params: &ModelParams,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Result<PathBatch> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::Parameter("n_paths must be at least 1".into()));
    }
    if antithetic && n_paths % 2 != 0 {
        return Err(Error::Parameter(format!(
            "antithetic sampling needs an even path count, got {n_paths}"
        )));
    }
    let n_dates = params.steps + 1;
    let dt = params.dt();
    let drift = (params.r - params.q - 0.5 * params.sigma * params.sigma) * dt;
    let vol = params.sigma * dt.sqrt();
    let s0 = params.s0;

    let mut prices = vec![0.0; n_paths * n_dates];
    prices
        .par_chunks_mut(n_dates)
        .enumerate()
        .for_each(|(p, row)| {
            let (stream, sign) = if antithetic {
                ((p / 2) as u64, if p % 2 == 0 { 1.0 } else { -1.0 })
            } else {
                (p as u64, 1.0)
            };
            let mut rng = stream_rng(seed, stream);
            let mut log_return = 0.0;
            row[0] = s0;
            for s in row.iter_mut().skip(1) {
                let z: f64 = rng.sample(StandardNormal);
                log_return += drift + vol * sign * z;
                *s = s0 * log_return.exp();
            }
        });
    Ok(PathBatch {
        prices,
        n_paths,
        n_dates,
        seed,
    })
}

/// Paths started from individual initial spots, one per path, sharing the
/// random numbers of [`simulate_paths`] with the same seed.
pub fn simulate_paths_from_spots(
    params: &ModelParams,
    spots: &[f64],
    seed: u64,
) -> Result<PathBatch> {
    let unit = simulate_paths(&params.with_spot(1.0), spots.len(), seed, false)?;
    unit.scaled_rows(spots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_volatility_paths_grow_at_the_rate() {
        let params = ModelParams {
            sigma: 0.0,
            ..ModelParams::default()
        };
        let batch = simulate_paths(&params, 8, 3, false).unwrap();
        for row in batch.paths() {
            for (j, s) in row.iter().enumerate() {
                let expect = 100.0 * (0.05 * params.time(j)).exp();
                assert!((s - expect).abs() <= 1e-12 * expect, "{s} vs {expect}");
            }
        }
    }

    #[test]
    fn antithetic_pairs_mirror_log_returns() {
        let params = ModelParams::default();
        let batch = simulate_paths(&params, 6, 11, true).unwrap();
        let drift = (params.r - params.q - 0.5 * params.sigma.powi(2)) * params.dt();
        for m in 0..3 {
            let a = batch.path(2 * m);
            let b = batch.path(2 * m + 1);
            for j in 1..batch.n_dates() {
                let ra = (a[j] / a[j - 1]).ln() - drift;
                let rb = (b[j] / b[j - 1]).ln() - drift;
                assert!((ra + rb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn antithetic_needs_even_count() {
        let err = simulate_paths(&ModelParams::default(), 5, 1, true).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad_spot = ModelParams {
            s0: 0.0,
            ..ModelParams::default()
        };
        assert!(simulate_paths(&bad_spot, 4, 0, false).is_err());
        let bad_t = ModelParams {
            maturity: -1.0,
            ..ModelParams::default()
        };
        assert!(simulate_paths(&bad_t, 4, 0, false).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let params = ModelParams::default();
        let a = simulate_paths(&params, 64, 99, false).unwrap();
        let b = simulate_paths(&params, 64, 99, false).unwrap();
        let c = simulate_paths(&params, 64, 100, false).unwrap();
        let bytes = |x: &PathBatch| -> Vec<u8> {
            x.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
        };
        assert_eq!(bytes(&a), bytes(&b));
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn discount_factors() {
        let params = ModelParams::default();
        assert_eq!(params.discount_factor(7, 7).unwrap(), 1.0);
        let full = params.discount_factor(0, 50).unwrap();
        assert!((full - (-0.01f64).exp()).abs() < 1e-15);
        let composed =
            params.discount_factor(3, 20).unwrap() * params.discount_factor(20, 41).unwrap();
        assert!((composed - params.discount_factor(3, 41).unwrap()).abs() < 1e-15);
        assert!(matches!(
            params.discount_factor(5, 2),
            Err(Error::Index { i: 5, j: 2 })
        ));
    }

    #[test]
    fn csv_dump_has_header() {
        let batch = PathBatch::from_rows(&[vec![100.0, 101.0], vec![100.0, 99.5]]).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,t0,t1\n0,100.0000000000,101.0000000000\n"));
    }

    #[test]
    fn row_scaling_matches_direct_simulation() {
        let params = ModelParams::default();
        let direct = simulate_paths(&params.with_spot(80.0), 10, 5, false).unwrap();
        let scaled = simulate_paths(&params.with_spot(1.0), 10, 5, false)
            .unwrap()
            .scaled(80.0)
            .unwrap();
        for (a, b) in direct.as_slice().iter().zip(scaled.as_slice()) {
            assert!((a - b).abs() < 1e-12 * a);
        }
    }
}
