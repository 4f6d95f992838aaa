//! Least-squares Monte Carlo: backward regression of pathwise continuation
//! values, forward pricing with the fitted exercise policy, and repeated runs.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, FittedBasis};
use crate::error::{Error, Result};
use crate::features::{RiskSet, RiskSetSpec};
use crate::model::{derive_seed, simulate_paths, ModelParams, PathBatch};
use crate::payoffs::{CertificateSpec, OptionSpec, COUPONS_PER_YEAR};
use crate::regression::{QrAccumulator, Ridge};

/// Paths per block of the parallel loops. Fixed, so that results do not
/// depend on the number of threads.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    /// Ridge penalty as a multiple of the mean diagonal of the Gram matrix.
    pub ridge_scale: f64,
    /// Regress on in-the-money paths only (options).
    pub itm_filter: bool,
    /// Share of the simulated paths used to fit the policy.
    pub train_fraction: f64,
    /// Dates with fewer usable paths are not regressed; the holder continues there.
    pub min_regression_paths: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            ridge_scale: 1e-8,
            itm_filter: true,
            train_fraction: 0.2,
            min_regression_paths: 32,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return Err(Error::Parameter("ridge scale must be non-negative".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.min_regression_paths == 0 {
            return Err(Error::Parameter("min_regression_paths must be positive".into()));
        }
        Ok(())
    }

    /// Split of `n_paths` into training and evaluation paths.
    pub fn split(&self, n_paths: usize) -> (usize, usize) {
        let train = ((n_paths as f64) * self.train_fraction).round() as usize;
        let train = train.clamp(1, n_paths.saturating_sub(1));
        (train, n_paths - train)
    }
}

/// A contract priced by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Product {
    /// Exercised by the holder: the value is a maximum.
    Option(OptionSpec),
    /// Called by the issuer: the value is a minimum.
    Certificate(CertificateSpec),
}

impl Product {
    pub fn label(&self) -> String {
        match self {
            Product::Option(o) => o.kind.label().to_string(),
            Product::Certificate(c) => c.kind.label().to_string(),
        }
    }

    pub fn window(&self) -> usize {
        match self {
            Product::Option(o) => o.window,
            Product::Certificate(_) => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Product::Option(o) => o.validate(),
            Product::Certificate(c) => c.validate(),
        }
    }

    /// The risk set used for `basis`: certificates always regress on the spots
    /// observed on all payment dates so far.
    fn risk_set(&self, basis: &BasisSpec) -> Result<RiskSetSpec> {
        match self {
            Product::Option(o) => RiskSetSpec::new(basis.rho, o.window),
            Product::Certificate(_) => RiskSetSpec::new(RiskSet::History, 1),
        }
    }

    fn basis_for(&self, basis: &BasisSpec) -> BasisSpec {
        match self {
            Product::Option(_) => *basis,
            Product::Certificate(_) => BasisSpec {
                rho: RiskSet::History,
                ..*basis
            },
        }
    }

    /// First date with an exercise (or call) decision.
    pub fn first_decision_date(&self) -> usize {
        match self {
            Product::Option(o) => o.first_exercise_date(),
            Product::Certificate(_) => 1,
        }
    }

    fn check_grid(&self, params: &ModelParams, batch: &PathBatch) -> Result<()> {
        if batch.n_dates() != params.steps + 1 {
            return Err(Error::Shape {
                expected: params.steps + 1,
                found: batch.n_dates(),
            });
        }
        match self {
            Product::Option(o) => {
                if o.first_exercise_date() > params.steps {
                    return Err(Error::WindowUnderflow {
                        index: params.steps,
                        window: o.window,
                    });
                }
            }
            Product::Certificate(c) => {
                if c.n_dates() != params.steps {
                    return Err(Error::Spec(format!(
                        "certificate has {} payment dates but the grid has {} steps",
                        c.n_dates(),
                        params.steps
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Quarterly grid of a certificate, with the other model parameters kept.
pub fn certificate_params(base: &ModelParams, spec: &CertificateSpec) -> ModelParams {
    ModelParams {
        maturity: spec.n_dates() as f64 / COUPONS_PER_YEAR as f64,
        steps: spec.n_dates(),
        ..*base
    }
}

/// Fitted continuation-value regressions, one per decision date.
#[derive(Debug, Clone)]
pub struct ExercisePolicy {
    product: Product,
    basis: FittedBasis,
    /// `None` where no regression was fitted; the contract is then continued.
    coefficients: Vec<Option<Vec<f64>>>,
    first_date: usize,
    rank_deficient_dates: Vec<usize>,
    in_sample_price: f64,
}

impl ExercisePolicy {
    pub fn product(&self) -> &Product {
        &self.product
    }

    pub fn basis(&self) -> &FittedBasis {
        &self.basis
    }

    pub fn coefficients(&self, i: usize) -> Option<&[f64]> {
        self.coefficients.get(i).and_then(|c| c.as_deref())
    }

    /// Decision dates on which a regression was fitted.
    pub fn regression_dates(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&i| self.coefficients[i].is_some())
            .collect()
    }

    pub fn first_date(&self) -> usize {
        self.first_date
    }

    /// Dates whose unregularised regression was rank deficient.
    pub fn rank_deficient_dates(&self) -> &[usize] {
        &self.rank_deficient_dates
    }

    /// Average of the pathwise values of the backward pass on the training paths.
    pub fn in_sample_price(&self) -> f64 {
        self.in_sample_price
    }

    /// The same policy with every regression removed: the contract is never
    /// exercised (or called) before maturity.
    pub fn hold_to_maturity(&self) -> Self {
        Self {
            coefficients: vec![None; self.coefficients.len()],
            ..self.clone()
        }
    }

    /// The same policy without its regression at date `i`, where the contract
    /// is then always continued.
    pub fn without_date(&self, i: usize) -> Self {
        let mut out = self.clone();
        if let Some(c) = out.coefficients.get_mut(i) {
            *c = None;
        }
        out
    }

    /// Estimated continuation value at date `i`, for a design row.
    fn continuation(&self, i: usize, row: &[f64]) -> Option<f64> {
        self.coefficients[i]
            .as_ref()
            .map(|theta| theta.iter().zip(row).map(|(a, b)| a * b).sum())
    }
}

/// Per-path basis states for the training batch, moved backward date by date.
struct StateCursor<'a> {
    basis: &'a FittedBasis,
    batch: &'a PathBatch,
    len: usize,
    states: Vec<f64>,
    date: Option<usize>,
    /// States at every `interval`-th date, for bases that cannot move backward.
    checkpoints: Vec<Vec<f64>>,
    interval: usize,
}

impl<'a> StateCursor<'a> {
    fn new(basis: &'a FittedBasis, batch: &'a PathBatch) -> Self {
        let len = basis.state_len();
        let interval = ((batch.n_dates() as f64).sqrt().ceil() as usize).max(1);
        Self {
            basis,
            batch,
            len,
            states: vec![0.0; len * batch.n_paths()],
            date: None,
            checkpoints: Vec::new(),
            interval,
        }
    }

    fn state(&self, p: usize) -> &[f64] {
        &self.states[p * self.len..(p + 1) * self.len]
    }

    fn build_checkpoints(&mut self) {
        let (basis, batch, len, interval) = (self.basis, self.batch, self.len, self.interval);
        let last = batch.last_date();
        let count = last / interval + 1;
        let mut cps = vec![vec![0.0; len * batch.n_paths()]; count];
        // path-major fill, then transpose into checkpoint-major storage
        let per_path: Vec<Vec<f64>> = (0..batch.n_paths())
            .into_par_iter()
            .with_min_len(256)
            .map_init(
                || basis.scratch(),
                |scratch, p| {
                    let path = batch.path(p);
                    let mut out = vec![0.0; len * count];
                    let mut st = vec![0.0; len];
                    basis.init_state(path, 0, &mut st, scratch);
                    for i in 0..=last {
                        if i % interval == 0 {
                            let c = i / interval;
                            out[c * len..(c + 1) * len].copy_from_slice(&st);
                        }
                        if i < last {
                            basis.advance(path, i, &mut st, scratch);
                        }
                    }
                    out
                },
            )
            .collect();
        for (p, out) in per_path.iter().enumerate() {
            for (c, cp) in cps.iter_mut().enumerate() {
                cp[p * len..(p + 1) * len].copy_from_slice(&out[c * len..(c + 1) * len]);
            }
        }
        self.checkpoints = cps;
    }

    fn move_to(&mut self, i: usize) {
        if self.len == 0 || self.date == Some(i) {
            return;
        }
        let (basis, batch, len) = (self.basis, self.batch, self.len);
        if basis.can_retreat() {
            let step_back = self.date == Some(i + 1);
            self.states
                .par_chunks_mut(len * BLOCK)
                .enumerate()
                .for_each(|(b, chunk)| {
                    let mut scratch = basis.scratch();
                    for (k, st) in chunk.chunks_exact_mut(len).enumerate() {
                        let path = batch.path(b * BLOCK + k);
                        if step_back {
                            basis.retreat(path, i + 1, st, &mut scratch);
                        } else {
                            basis.init_state(path, i, st, &mut scratch);
                        }
                    }
                });
        } else {
            if self.checkpoints.is_empty() {
                self.build_checkpoints();
            }
            let c = i / self.interval;
            let from = c * self.interval;
            let cp = &self.checkpoints[c];
            self.states
                .par_chunks_mut(len * BLOCK)
                .enumerate()
                .for_each(|(b, chunk)| {
                    let mut scratch = basis.scratch();
                    for (k, st) in chunk.chunks_exact_mut(len).enumerate() {
                        let p = b * BLOCK + k;
                        let path = batch.path(p);
                        st.copy_from_slice(&cp[p * len..(p + 1) * len]);
                        for j in from..i {
                            basis.advance(path, j, st, &mut scratch);
                        }
                    }
                });
        }
        self.date = Some(i);
    }
}

/// Regression of `values` on the basis at date `i` over the paths selected by
/// `use_path`, accumulated in fixed blocks and merged in block order.
fn regress(
    basis: &FittedBasis,
    batch: &PathBatch,
    cursor: &StateCursor<'_>,
    i: usize,
    values: &[f64],
    use_path: &(dyn Fn(usize) -> bool + Sync),
    ridge: Ridge,
) -> Result<(Vec<f64>, bool)> {
    let cols = basis.width(i);
    let parts: Vec<QrAccumulator> = (0..batch.n_paths().div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = QrAccumulator::new(cols);
            let mut scratch = basis.scratch();
            let mut row = vec![0.0; cols];
            let end = ((b + 1) * BLOCK).min(batch.n_paths());
            for p in b * BLOCK..end {
                if use_path(p) {
                    basis.features(batch.path(p), i, cursor.state(p), &mut row, &mut scratch);
                    acc.push(&row, values[p]);
                }
            }
            acc
        })
        .collect();
    let mut acc = QrAccumulator::new(cols);
    for part in parts {
        acc.merge(part);
    }
    let solution = acc.solve(ridge)?;
    Ok((solution.theta, solution.rank_deficient))
}

/// Decision dates of a product on a grid with `last` as final date.
fn decision_dates(product: &Product, last: usize) -> std::ops::Range<usize> {
    product.first_decision_date()..last
}

/// Backward induction on the training paths.
///
/// Options: `V_N = Psi_N`, and at each exercise date the holder exercises iff
/// `Psi_i > 0` and `Psi_i` exceeds the regressed continuation value; otherwise
/// the discounted realised value is carried. Certificates: `V_N = gamma_N +
/// Psi^C_N`, and `V_i = gamma_i + min(1, continuation)`, the issuer calling
/// whenever the regressed continuation value exceeds the principal.
pub fn fit_policy(
    params: &ModelParams,
    train: &PathBatch,
    product: &Product,
    basis: &BasisSpec,
    cfg: &RegressionConfig,
) -> Result<ExercisePolicy> {
    params.validate()?;
    product.validate()?;
    cfg.validate()?;
    product.check_grid(params, train)?;
    let basis_spec = product.basis_for(basis);
    let risk = product.risk_set(&basis_spec)?;
    let last = train.last_date();
    let dates = decision_dates(product, last);
    let fitted = FittedBasis::fit(&basis_spec, train, risk, dates.clone())?;
    let ridge = Ridge::Relative(cfg.ridge_scale);
    let n = train.n_paths();
    let mut coefficients: Vec<Option<Vec<f64>>> = vec![None; last + 1];
    let mut rank_deficient_dates = Vec::new();
    let mut cursor = StateCursor::new(&fitted, train);

    let coupons: Vec<Vec<f64>> = match product {
        Product::Certificate(c) => train.paths().map(|p| c.coupon_stream(p)).collect(),
        Product::Option(_) => Vec::new(),
    };

    let mut values: Vec<f64> = match product {
        Product::Option(o) => train.paths().map(|p| o.payoff(p, last)).collect(),
        Product::Certificate(c) => train
            .paths()
            .zip(&coupons)
            .map(|(p, g)| g[last] + c.redemption_unchecked(p, last))
            .collect(),
    };

    for i in dates.clone().rev() {
        let df = params.discount_factor(i, i + 1)?;
        values.iter_mut().for_each(|v| *v *= df);
        match product {
            Product::Option(o) => {
                let itm = |p: usize| o.payoff(train.path(p), i) > 0.0;
                let selected = if cfg.itm_filter {
                    (0..n).filter(|&p| itm(p)).count()
                } else {
                    n
                };
                if selected < cfg.min_regression_paths {
                    continue;
                }
                cursor.move_to(i);
                let use_path = |p: usize| !cfg.itm_filter || itm(p);
                let (theta, deficient) = regress(&fitted, train, &cursor, i, &values, &use_path, ridge)?;
                if deficient {
                    rank_deficient_dates.push(i);
                }
                let cursor_ref = &cursor;
                let fitted_ref = &fitted;
                values
                    .par_chunks_mut(BLOCK)
                    .enumerate()
                    .for_each(|(b, chunk)| {
                        let mut scratch = fitted_ref.scratch();
                        let mut row = vec![0.0; theta.len()];
                        for (k, v) in chunk.iter_mut().enumerate() {
                            let p = b * BLOCK + k;
                            let path = train.path(p);
                            let psi = o.payoff(path, i);
                            if psi > 0.0 {
                                fitted_ref.features(path, i, cursor_ref.state(p), &mut row, &mut scratch);
                                let c: f64 = theta.iter().zip(&row).map(|(a, b)| a * b).sum();
                                if psi > c {
                                    *v = psi;
                                }
                            }
                        }
                    });
                coefficients[i] = Some(theta);
            }
            Product::Certificate(_) => {
                if n >= cfg.min_regression_paths {
                    cursor.move_to(i);
                    let (theta, deficient) =
                        regress(&fitted, train, &cursor, i, &values, &|_| true, ridge)?;
                    if deficient {
                        rank_deficient_dates.push(i);
                    }
                    let cursor_ref = &cursor;
                    let fitted_ref = &fitted;
                    values
                        .par_chunks_mut(BLOCK)
                        .enumerate()
                        .for_each(|(b, chunk)| {
                            let mut scratch = fitted_ref.scratch();
                            let mut row = vec![0.0; theta.len()];
                            for (k, v) in chunk.iter_mut().enumerate() {
                                let p = b * BLOCK + k;
                                fitted_ref.features(
                                    train.path(p),
                                    i,
                                    cursor_ref.state(p),
                                    &mut row,
                                    &mut scratch,
                                );
                                let c: f64 = theta.iter().zip(&row).map(|(a, b)| a * b).sum();
                                if c > 1.0 {
                                    *v = 1.0;
                                }
                            }
                        });
                    coefficients[i] = Some(theta);
                }
                for (v, g) in values.iter_mut().zip(&coupons) {
                    *v += g[i];
                }
            }
        }
    }
    // discount from the first decision date back to inception
    let first = dates.start.min(last);
    let df0 = params.discount_factor(0, first)?;
    let in_sample_price = values.iter().sum::<f64>() / n as f64 * df0;
    if !rank_deficient_dates.is_empty() {
        log::warn!(
            "regression was rank deficient on {} dates",
            rank_deficient_dates.len()
        );
    }
    Ok(ExercisePolicy {
        product: product.clone(),
        basis: fitted,
        coefficients,
        first_date: product.first_decision_date(),
        rank_deficient_dates,
        in_sample_price,
    })
}

/// Discounted cash flows of every path under a policy, with the stopping dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseValues {
    pub values: Vec<f64>,
    pub stop_dates: Vec<usize>,
}

impl PathwiseValues {
    pub fn estimate(&self) -> PriceEstimate {
        PriceEstimate::from_paths(&self.values)
    }

    /// Share of paths stopped on `date`.
    pub fn stopped_on(&self, date: usize) -> f64 {
        self.stop_dates.iter().filter(|&&d| d == date).count() as f64 / self.stop_dates.len() as f64
    }
}

/// Forward pass: each path stops on the first decision date where the policy
/// exercises (or calls).
pub fn pathwise_values(
    params: &ModelParams,
    eval: &PathBatch,
    policy: &ExercisePolicy,
) -> Result<PathwiseValues> {
    let product = &policy.product;
    product.check_grid(params, eval)?;
    let last = eval.last_date();
    let disc = params.discount_curve();
    let basis = &policy.basis;
    let stateful = basis.state_len() > 0;
    let first = policy.first_date.min(last);
    let results: Vec<(f64, usize)> = (0..eval.n_paths())
        .into_par_iter()
        .with_min_len(256)
        .map_init(
            || {
                (
                    basis.scratch(),
                    vec![0.0; basis.max_width()],
                    vec![0.0; basis.state_len()],
                )
            },
            |(scratch, row, state), p| {
                let path = eval.path(p);
                if stateful {
                    basis.init_state(path, first, state, scratch);
                }
                match product {
                    Product::Option(o) => {
                        for i in first..last {
                            let psi = o.payoff(path, i);
                            if psi > 0.0 && policy.coefficients[i].is_some() {
                                let w = basis.width(i);
                                basis.features(path, i, state, &mut row[..w], scratch);
                                let c = policy.continuation(i, &row[..w]).unwrap_or(f64::INFINITY);
                                if psi > c {
                                    return (disc[i] * psi, i);
                                }
                            }
                            if stateful {
                                basis.advance(path, i, state, scratch);
                            }
                        }
                        (disc[last] * o.payoff(path, last), last)
                    }
                    Product::Certificate(c) => {
                        let g = c.coupon_stream(path);
                        let mut pv = 0.0;
                        for i in first..last {
                            pv += disc[i] * g[i];
                            if policy.coefficients[i].is_some() {
                                let w = basis.width(i);
                                basis.features(path, i, state, &mut row[..w], scratch);
                                if policy.continuation(i, &row[..w]).unwrap_or(0.0) > 1.0 {
                                    return (pv + disc[i], i);
                                }
                            }
                            if stateful {
                                basis.advance(path, i, state, scratch);
                            }
                        }
                        (pv + disc[last] * (g[last] + c.redemption_unchecked(path, last)), last)
                    }
                }
            },
        )
        .collect();
    let (values, stop_dates) = results.into_iter().unzip();
    Ok(PathwiseValues { values, stop_dates })
}

/// Mean and standard error of a Monte Carlo price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub price: f64,
    pub std_error: f64,
    /// Paths per run used for pricing.
    pub n_paths: usize,
    pub n_runs: usize,
    pub run_prices: Vec<f64>,
    /// Seconds spent fitting the policy (median over runs).
    pub fit_seconds: f64,
    /// Seconds spent in the forward pricing pass (median over runs).
    pub price_seconds: f64,
}

impl PriceEstimate {
    /// Sample mean and path-level standard error.
    pub fn from_paths(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            price: mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
            n_runs: 1,
            run_prices: vec![mean],
            fit_seconds: 0.0,
            price_seconds: 0.0,
        }
    }

    /// Combines independent runs: mean of the run prices, with standard error
    /// `std(run prices) / sqrt(runs)`; a single run keeps its path-level error.
    pub fn combine(runs: &[PriceEstimate]) -> Result<Self> {
        let Some(first) = runs.first() else {
            return Err(Error::Input("no runs to combine".into()));
        };
        if runs.len() == 1 {
            return Ok(first.clone());
        }
        let prices: Vec<f64> = runs.iter().map(|r| r.price).collect();
        let k = prices.len() as f64;
        let mean = prices.iter().sum::<f64>() / k;
        let var = prices.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Ok(Self {
            price: mean,
            std_error: (var / k).sqrt(),
            n_paths: first.n_paths,
            n_runs: runs.len(),
            run_prices: prices,
            fit_seconds: median(runs.iter().map(|r| r.fit_seconds).collect()),
            price_seconds: median(runs.iter().map(|r| r.price_seconds).collect()),
        })
    }

    /// Regression plus pricing time.
    pub fn algorithm_seconds(&self) -> f64 {
        self.fit_seconds + self.price_seconds
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Out-of-sample price with a fitted policy.
pub fn price_with_policy(
    params: &ModelParams,
    eval: &PathBatch,
    product: &Product,
    policy: &ExercisePolicy,
) -> Result<PriceEstimate> {
    if product != &policy.product {
        return Err(Error::Spec("policy was fitted for a different product".into()));
    }
    let start = Instant::now();
    let mut est = pathwise_values(params, eval, policy)?.estimate();
    est.price_seconds = start.elapsed().as_secs_f64();
    Ok(est)
}

/// Fit on `train`, price on `eval`.
pub fn price(
    params: &ModelParams,
    train: &PathBatch,
    eval: &PathBatch,
    product: &Product,
    basis: &BasisSpec,
    cfg: &RegressionConfig,
) -> Result<PriceEstimate> {
    let start = Instant::now();
    let policy = fit_policy(params, train, product, basis, cfg)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let mut est = price_with_policy(params, eval, product, &policy)?;
    est.fit_seconds = fit_seconds;
    Ok(est)
}

/// Callable certificate price: issuer-optimal calls fitted on `train`, priced on `eval`.
pub fn price_certificate(
    params: &ModelParams,
    train: &PathBatch,
    eval: &PathBatch,
    spec: &CertificateSpec,
    basis: &BasisSpec,
    cfg: &RegressionConfig,
) -> Result<PriceEstimate> {
    price(params, train, eval, &Product::Certificate(spec.clone()), basis, cfg)
}

/// Discounted coupons plus final redemption, without any call.
pub fn certificate_without_call(
    params: &ModelParams,
    batch: &PathBatch,
    spec: &CertificateSpec,
) -> Result<PriceEstimate> {
    let product = Product::Certificate(spec.clone());
    product.validate()?;
    product.check_grid(params, batch)?;
    let disc = params.discount_curve();
    let last = batch.last_date();
    let values: Vec<f64> = batch
        .paths()
        .map(|p| {
            let g = spec.coupon_stream(p);
            (1..=last).map(|i| disc[i] * g[i]).sum::<f64>()
                + disc[last] * spec.redemption_unchecked(p, last)
        })
        .collect();
    Ok(PriceEstimate::from_paths(&values))
}

/// Discounted exercise value at maturity.
pub fn european_price(params: &ModelParams, batch: &PathBatch, spec: &OptionSpec) -> Result<PriceEstimate> {
    let product = Product::Option(*spec);
    product.validate()?;
    product.check_grid(params, batch)?;
    let last = batch.last_date();
    let df = params.discount_factor(0, last)?;
    let values: Vec<f64> = batch.paths().map(|p| df * spec.payoff(p, last)).collect();
    Ok(PriceEstimate::from_paths(&values))
}

/// Sizes and seeds of a repeated pricing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Simulated paths per run, split by the regression config's train fraction.
    pub n_paths: usize,
    pub n_runs: usize,
    pub master_seed: u64,
    pub antithetic: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n_paths: 400_000,
            n_runs: 10,
            master_seed: 0,
            antithetic: false,
        }
    }
}

/// Seeds of run `k`: training paths, evaluation paths and random basis weights.
pub fn run_seeds(master: u64, k: usize) -> (u64, u64, u64) {
    let run = derive_seed(master, k as u64);
    (derive_seed(run, 1), derive_seed(run, 2), derive_seed(run, 3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub estimate: PriceEstimate,
    /// Median seconds of regression plus pricing per run (path generation excluded).
    pub median_seconds: f64,
    /// Median seconds of path generation per run.
    pub simulation_seconds: f64,
}

/// Independent fit-and-price runs with seeds derived from the master seed.
pub fn run_experiment(
    params: &ModelParams,
    product: &Product,
    basis: &BasisSpec,
    cfg: &RegressionConfig,
    exp: &ExperimentSpec,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if exp.n_runs == 0 {
        return Err(Error::Parameter("n_runs must be at least 1".into()));
    }
    let (n_train, n_eval) = cfg.split(exp.n_paths);
    let round = |n: usize| if exp.antithetic { n + n % 2 } else { n };
    let runs: Vec<(PriceEstimate, f64)> = (0..exp.n_runs)
        .into_par_iter()
        .map(|k| {
            let (train_seed, eval_seed, weight_seed) = run_seeds(exp.master_seed, k);
            let start = Instant::now();
            let train = simulate_paths(params, round(n_train), train_seed, exp.antithetic)?;
            let eval = simulate_paths(params, round(n_eval), eval_seed, exp.antithetic)?;
            let sim = start.elapsed().as_secs_f64();
            let est = price(params, &train, &eval, product, &basis.reseeded(weight_seed), cfg)?;
            Ok((est, sim))
        })
        .collect::<Result<_>>()?;
    let sims: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let ests: Vec<PriceEstimate> = runs.into_iter().map(|r| r.0).collect();
    let median_seconds = median(ests.iter().map(PriceEstimate::algorithm_seconds).collect());
    Ok(ExperimentResult {
        estimate: PriceEstimate::combine(&ests)?,
        median_seconds,
        simulation_seconds: median(sims),
    })
}
