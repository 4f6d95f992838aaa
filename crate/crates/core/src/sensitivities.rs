//! Delta and Gamma: Chebyshev interpolation of the price over the initial spot
//! (with the interval moved off the exercise-at-inception boundary), and
//! regression of pathwise values on a randomised initial spot.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::lsmc::{fit_policy, pathwise_values, ExercisePolicy, Product, RegressionConfig};
use crate::model::{stream_rng, ModelParams, PathBatch};
use crate::regression::{least_squares, Ridge};

/// Price at one spot, with the share of paths stopped on the first decision date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEval {
    pub price: f64,
    pub std_error: f64,
    pub inception_exercise: f64,
}

/// Price as a function of the initial spot.
pub trait SpotPricer: Sync {
    fn evaluate(&self, spot: f64) -> Result<NodeEval>;
}

impl<F> SpotPricer for F
where
    F: Fn(f64) -> Result<NodeEval> + Sync,
{
    fn evaluate(&self, spot: f64) -> Result<NodeEval> {
        self(spot)
    }
}

/// Chebyshev points of the first kind on `[a, b]`, in increasing order.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    (0..n)
        .rev()
        .map(|k| m + h * (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64).cos())
        .collect()
}

/// Polynomial interpolant `sum_j c_j T_j(x)` on `[a, b]` through the values at
/// the Chebyshev nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevInterpolant {
    pub a: f64,
    pub b: f64,
    /// Coefficients with the constant term already halved.
    pub coeffs: Vec<f64>,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl ChebyshevInterpolant {
    /// `values[k]` is the function at `chebyshev_nodes(a, b, n)[k]`.
    pub fn fit(a: f64, b: f64, values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 || !(a < b) {
            return Err(Error::Parameter("interpolation needs nodes and a < b".into()));
        }
        let nodes = chebyshev_nodes(a, b, n);
        // node k in increasing order is the cosine point with index n - 1 - k
        let mut coeffs = vec![0.0; n];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, &f) in values.iter().enumerate() {
                let idx = n - 1 - k;
                s += f * (std::f64::consts::PI * (j * (2 * idx + 1)) as f64 / (2 * n) as f64).cos();
            }
            *c = 2.0 * s / n as f64;
        }
        coeffs[0] *= 0.5;
        Ok(Self {
            a,
            b,
            coeffs,
            nodes,
            values: values.to_vec(),
        })
    }

    fn to_unit(&self, s: f64) -> f64 {
        (2.0 * s - self.a - self.b) / (self.b - self.a)
    }

    fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
    }

    /// Coefficients of the derivative in the unit variable.
    fn differentiate(coeffs: &[f64]) -> Vec<f64> {
        let n = coeffs.len();
        if n <= 1 {
            return vec![0.0];
        }
        // full (unhalved) convention for the recurrence
        let mut c = coeffs.to_vec();
        c[0] *= 2.0;
        let mut d = vec![0.0; n + 1];
        for j in (1..n).rev() {
            d[j - 1] = d[j + 1] + 2.0 * j as f64 * c[j];
        }
        d.truncate(n - 1);
        d[0] *= 0.5;
        d
    }

    pub fn value(&self, s: f64) -> f64 {
        Self::clenshaw(&self.coeffs, self.to_unit(s))
    }

    /// `order`-th derivative in the spot.
    pub fn derivative(&self, s: f64, order: usize) -> f64 {
        let mut c = self.coeffs.clone();
        for _ in 0..order {
            c = Self::differentiate(&c);
        }
        let scale = (2.0 / (self.b - self.a)).powi(order as i32);
        scale * Self::clenshaw(&c, self.to_unit(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreekMethod {
    Chebyshev,
    Regression,
    Tree,
}

impl GreekMethod {
    pub fn label(self) -> &'static str {
        match self {
            GreekMethod::Chebyshev => "chebyshev",
            GreekMethod::Regression => "regression",
            GreekMethod::Tree => "tree",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSided {
    pub left_delta: f64,
    pub left_gamma: f64,
    pub right_delta: f64,
    pub right_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreekReport {
    pub delta: f64,
    pub gamma: f64,
    pub method: GreekMethod,
    /// Spot interval of the interpolation or of the randomised spots.
    pub interval: (f64, f64),
    /// Exercise-at-inception boundary found inside the initial interval.
    pub boundary: Option<f64>,
    /// Both one-sided Greeks when the spot sits on the boundary.
    pub one_sided: Option<OneSided>,
    /// `(spot, price, std_error)` at every node.
    pub nodes: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChebyshevConfig {
    pub nodes: usize,
    /// Interval width as a fraction of the spot.
    pub width: f64,
    /// Move the interval off an exercise-at-inception boundary.
    pub adaptive: bool,
    /// Share of paths exercising at the first date above which the product
    /// counts as exercised at inception.
    pub inception_threshold: f64,
    /// Bisection tolerance on the boundary, as a fraction of the spot.
    pub boundary_tolerance: f64,
}

impl Default for ChebyshevConfig {
    fn default() -> Self {
        Self {
            nodes: 7,
            width: 0.10,
            adaptive: true,
            inception_threshold: 0.5,
            boundary_tolerance: 1e-3,
        }
    }
}

impl ChebyshevConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 {
            return Err(Error::Parameter("at least three nodes are needed for Gamma".into()));
        }
        if !(self.width > 0.0 && self.width < 1.0) {
            return Err(Error::Parameter("interval width must lie in (0, 1)".into()));
        }
        if !(self.boundary_tolerance > 0.0) {
            return Err(Error::Parameter("boundary tolerance must be positive".into()));
        }
        Ok(())
    }
}

fn evaluate_nodes(pricer: &dyn SpotPricer, spots: &[f64]) -> Result<Vec<NodeEval>> {
    spots
        .par_iter()
        .enumerate()
        .map(|(k, &s)| {
            pricer.evaluate(s).map_err(|e| Error::Node {
                node: k,
                spot: s,
                source: Box::new(e),
            })
        })
        .collect()
}

fn interpolate(pricer: &dyn SpotPricer, a: f64, b: f64, n: usize) -> Result<(ChebyshevInterpolant, Vec<NodeEval>)> {
    let spots = chebyshev_nodes(a, b, n);
    let evals = evaluate_nodes(pricer, &spots)?;
    let values: Vec<f64> = evals.iter().map(|e| e.price).collect();
    Ok((ChebyshevInterpolant::fit(a, b, &values)?, evals))
}

/// Delta and Gamma of the Chebyshev interpolant of `pricer` around `s0`.
pub fn chebyshev_greeks(pricer: &dyn SpotPricer, s0: f64, cfg: &ChebyshevConfig) -> Result<GreekReport> {
    cfg.validate()?;
    if !(s0 > 0.0) {
        return Err(Error::Parameter("spot must be positive".into()));
    }
    let w = cfg.width * s0;
    let (mut a, mut b) = (s0 - 0.5 * w, s0 + 0.5 * w);
    let (mut interp, mut evals) = interpolate(pricer, a, b, cfg.nodes)?;
    let mut boundary = None;
    let mut one_sided = None;

    let exercised = |e: &NodeEval| e.inception_exercise > cfg.inception_threshold;
    let flags: Vec<bool> = evals.iter().map(exercised).collect();
    if cfg.adaptive && flags.windows(2).any(|f| f[0] != f[1]) {
        // the change of regime closest to the spot
        let k = (0..flags.len() - 1)
            .filter(|&k| flags[k] != flags[k + 1])
            .min_by(|&x, &y| {
                let mx = 0.5 * (interp.nodes[x] + interp.nodes[x + 1]);
                let my = 0.5 * (interp.nodes[y] + interp.nodes[y + 1]);
                (mx - s0).abs().total_cmp(&(my - s0).abs())
            })
            .expect("a change exists");
        let (mut lo, mut hi) = (interp.nodes[k], interp.nodes[k + 1]);
        let lo_flag = flags[k];
        let tol = cfg.boundary_tolerance * s0;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let e = pricer.evaluate(mid).map_err(|e| Error::Node {
                node: usize::MAX,
                spot: mid,
                source: Box::new(e),
            })?;
            if exercised(&e) == lo_flag {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let edge = 0.5 * (lo + hi);
        boundary = Some(edge);
        if (edge - s0).abs() <= tol {
            let (left, _) = interpolate(pricer, edge - w, edge, cfg.nodes)?;
            let (right, right_evals) = interpolate(pricer, edge, edge + w, cfg.nodes)?;
            one_sided = Some(OneSided {
                left_delta: left.derivative(s0.min(edge), 1),
                left_gamma: left.derivative(s0.min(edge), 2),
                right_delta: right.derivative(s0.max(edge), 1),
                right_gamma: right.derivative(s0.max(edge), 2),
            });
            a = edge;
            b = edge + w;
            interp = right;
            evals = right_evals;
        } else {
            if s0 < edge {
                a = edge - w;
                b = edge;
            } else {
                a = edge;
                b = edge + w;
            }
            let (i2, e2) = interpolate(pricer, a, b, cfg.nodes)?;
            interp = i2;
            evals = e2;
        }
    }
    let at = s0.clamp(a, b);
    let (delta, gamma) = match one_sided {
        Some(o) if s0 < boundary.unwrap_or(s0) => (o.left_delta, o.left_gamma),
        Some(o) => (o.right_delta, o.right_gamma),
        None => (interp.derivative(at, 1), interp.derivative(at, 2)),
    };
    if !gamma.is_finite() || !delta.is_finite() {
        return Err(Error::Numerical("non-finite Greeks".into()));
    }
    Ok(GreekReport {
        delta,
        gamma,
        method: GreekMethod::Chebyshev,
        interval: (a, b),
        boundary,
        one_sided,
        nodes: interp
            .nodes
            .iter()
            .zip(&evals)
            .map(|(&s, e)| (s, e.price, e.std_error))
            .collect(),
    })
}

/// Pathwise discounted values for paths started at the given spots.
pub trait RandomSpotPricer: Sync {
    fn pathwise(&self, spots: &[f64]) -> Result<Vec<f64>>;
}

/// Spots drawn uniformly on `[s0 (1 - eps), s0 (1 + eps)]`.
pub fn uniform_spots(s0: f64, epsilon: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!(
            "epsilon must lie in (0, 1) to keep spots positive, got {epsilon}"
        )));
    }
    if !(s0 > 0.0) {
        return Err(Error::Parameter("spot must be positive".into()));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    Ok((0..n)
        .map(|_| s0 * (1.0 + epsilon * rng.random_range(-1.0..1.0)))
        .collect())
}

/// Greeks from a quadratic regression of pathwise values on the initial spot.
pub fn regression_greeks_from_samples(spots: &[f64], values: &[f64], s0: f64, epsilon: f64) -> Result<GreekReport> {
    if spots.len() != values.len() || spots.len() < 3 {
        return Err(Error::Input("need matching spots and values, at least three".into()));
    }
    let scale = s0 * epsilon;
    let x: Vec<f64> = spots
        .iter()
        .flat_map(|&s| {
            let u = (s - s0) / scale;
            [1.0, u, u * u]
        })
        .collect();
    let sol = least_squares(&x, 3, values, Ridge::Relative(0.0))?;
    Ok(GreekReport {
        delta: sol.theta[1] / scale,
        gamma: 2.0 * sol.theta[2] / (scale * scale),
        method: GreekMethod::Regression,
        interval: (s0 - scale, s0 + scale),
        boundary: None,
        one_sided: None,
        nodes: Vec::new(),
    })
}

/// Randomised-spot regression Greeks with `n_paths` spots drawn from `seed`.
pub fn regression_greeks(
    pricer: &dyn RandomSpotPricer,
    s0: f64,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<GreekReport> {
    let spots = uniform_spots(s0, epsilon, n_paths, seed)?;
    let values = pricer.pathwise(&spots)?;
    regression_greeks_from_samples(&spots, &values, s0, epsilon)
}

/// LSMC price at any spot by rescaling paths simulated from a unit spot, so
/// that all spots share the same random numbers.
///
/// The exercise policy is fitted once and shared by every node, so node prices
/// lie on one smooth curve instead of each re-drawing the regression noise.
/// Training paths start from spots spread uniformly over `s0 (1 +- spread)`,
/// which puts the whole node interval inside the fitted region. A decision at
/// inception sees a single spot, so there the exercise value is compared with
/// the pricing-path mean of holding.
pub struct LsmcSpotPricer<'a> {
    params: ModelParams,
    policy: ExercisePolicy,
    held: ExercisePolicy,
    unit_eval: &'a PathBatch,
}

impl<'a> LsmcSpotPricer<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        params: ModelParams,
        product: &Product,
        basis: &BasisSpec,
        cfg: &RegressionConfig,
        unit_train: &PathBatch,
        unit_eval: &'a PathBatch,
        spread: f64,
        seed: u64,
    ) -> Result<Self> {
        let spots = uniform_spots(params.s0, spread, unit_train.n_paths(), seed)?;
        let train = unit_train.scaled_rows(&spots)?;
        let policy = fit_policy(&params, &train, product, basis, cfg)?;
        let held = policy.without_date(0);
        Ok(Self {
            params,
            policy,
            held,
            unit_eval,
        })
    }
}

impl SpotPricer for LsmcSpotPricer<'_> {
    fn evaluate(&self, spot: f64) -> Result<NodeEval> {
        let params = self.params.with_spot(spot);
        let eval = self.unit_eval.scaled(spot)?;
        let first = self.policy.first_date();
        match self.policy.product() {
            Product::Option(o) if first == 0 => {
                let hold = pathwise_values(&params, &eval, &self.held)?.estimate();
                let now = o.payoff(eval.path(0), 0);
                Ok(if now > 0.0 && now > hold.price {
                    NodeEval {
                        price: now,
                        std_error: 0.0,
                        inception_exercise: 1.0,
                    }
                } else {
                    NodeEval {
                        price: hold.price,
                        std_error: hold.std_error,
                        inception_exercise: 0.0,
                    }
                })
            }
            _ => {
                let values = pathwise_values(&params, &eval, &self.policy)?;
                let est = values.estimate();
                Ok(NodeEval {
                    price: est.price,
                    std_error: est.std_error,
                    inception_exercise: values.stopped_on(first),
                })
            }
        }
    }
}

/// LSMC with randomised initial spots: the policy is fitted on training paths
/// with their own random spots, then evaluated on the requested spots.
pub struct LsmcRandomSpotPricer<'a> {
    pub params: ModelParams,
    pub product: Product,
    pub basis: BasisSpec,
    pub cfg: RegressionConfig,
    pub unit_train: &'a PathBatch,
    pub unit_eval: &'a PathBatch,
    pub train_spots: Vec<f64>,
}

impl RandomSpotPricer for LsmcRandomSpotPricer<'_> {
    fn pathwise(&self, spots: &[f64]) -> Result<Vec<f64>> {
        if spots.len() != self.unit_eval.n_paths() || self.train_spots.len() != self.unit_train.n_paths() {
            return Err(Error::Shape {
                expected: self.unit_eval.n_paths(),
                found: spots.len(),
            });
        }
        let train = self.unit_train.scaled_rows(&self.train_spots)?;
        let eval = self.unit_eval.scaled_rows(spots)?;
        let policy = fit_policy(&self.params, &train, &self.product, &self.basis, &self.cfg)?;
        Ok(pathwise_values(&self.params, &eval, &policy)?.values)
    }
}
