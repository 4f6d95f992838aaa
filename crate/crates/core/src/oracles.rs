//! Reference pricers: Cox-Ross-Rubinstein trees and Black-Scholes closed forms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionType {
    Call,
    Put,
}

impl OptionType {
    fn payoff(self, s: f64, k: f64) -> f64 {
        match self {
            OptionType::Call => (s - k).max(0.0),
            OptionType::Put => (k - s).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exercise {
    European,
    American,
    /// Exercise on `n` equally spaced dates after inception and at inception
    /// itself; the tree steps must be a multiple of `n`.
    Bermudan(usize),
}

/// Binomial tree over `[0, params.maturity]`; `params.steps` is not used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub steps: usize,
    pub params: ModelParams,
    pub option: OptionType,
    pub strike: f64,
    pub exercise: Exercise,
}

impl TreeSpec {
    pub fn american(params: ModelParams, option: OptionType, strike: f64, steps: usize) -> Self {
        Self {
            steps,
            params,
            option,
            strike,
            exercise: Exercise::American,
        }
    }

    pub fn with_exercise(mut self, exercise: Exercise) -> Self {
        self.exercise = exercise;
        self
    }

    pub fn with_spot(mut self, s0: f64) -> Self {
        self.params.s0 = s0;
        self
    }
}

fn exercisable(exercise: Exercise, steps: usize, k: usize) -> Result<bool> {
    Ok(match exercise {
        Exercise::European => k == steps,
        Exercise::American => true,
        Exercise::Bermudan(n) => {
            if n == 0 || steps % n != 0 {
                return Err(Error::Parameter(format!(
                    "{steps} tree steps are not a multiple of {n} exercise dates"
                )));
            }
            k % (steps / n) == 0
        }
    })
}

/// CRR tree with `u = e^{sigma sqrt(dt)}`, `d = 1/u`.
pub fn tree_price(spec: &TreeSpec) -> Result<f64> {
    let p = &spec.params;
    p.validate()?;
    if spec.steps == 0 {
        return Err(Error::Parameter("tree needs at least one step".into()));
    }
    if !(spec.strike >= 0.0 && spec.strike.is_finite()) {
        return Err(Error::Parameter("strike must be non-negative".into()));
    }
    let n = spec.steps;
    exercisable(spec.exercise, n, 0)?;
    let dt = p.maturity / n as f64;
    let disc = (-p.r * dt).exp();
    let growth = ((p.r - p.q) * dt).exp();

    if p.sigma == 0.0 {
        // deterministic: the best exercise date along the forward curve
        let mut best: f64 = 0.0;
        for k in 0..=n {
            if exercisable(spec.exercise, n, k)? {
                let s = p.s0 * growth.powi(k as i32);
                best = best.max(disc.powi(k as i32) * spec.option.payoff(s, spec.strike));
            }
        }
        return Ok(best);
    }

    let u = (p.sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let prob = (growth - d) / (u - d);
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Stability(prob));
    }
    let (pu, pd) = (disc * prob, disc * (1.0 - prob));
    let spot = |k: usize, j: usize| p.s0 * u.powi(2 * j as i32 - k as i32);
    let mut v: Vec<f64> = (0..=n).map(|j| spec.option.payoff(spot(n, j), spec.strike)).collect();
    for k in (0..n).rev() {
        let early = exercisable(spec.exercise, n, k)?;
        for j in 0..=k {
            let cont = pu * v[j + 1] + pd * v[j];
            v[j] = if early {
                cont.max(spec.option.payoff(spot(k, j), spec.strike))
            } else {
                cont
            };
        }
    }
    Ok(v[0])
}

pub fn tree_price_american(spec: &TreeSpec) -> Result<f64> {
    tree_price(&spec.with_exercise(Exercise::American))
}

/// Delta and Gamma by central differences of trees rebuilt at `s0 (1 +- bump)`.
pub fn tree_greeks(spec: &TreeSpec, bump: f64) -> Result<(f64, f64)> {
    if !(bump > 0.0 && bump < 1.0) {
        return Err(Error::Parameter("bump must lie in (0, 1)".into()));
    }
    let s0 = spec.params.s0;
    let h = bump * s0;
    let up = tree_price(&spec.with_spot(s0 + h))?;
    let mid = tree_price(spec)?;
    let down = tree_price(&spec.with_spot(s0 - h))?;
    Ok(((up - down) / (2.0 * h), (up - 2.0 * mid + down) / (h * h)))
}

/// Black-Scholes price of a European option with continuous rates `r` and `q`.
pub fn bs_price(params: &ModelParams, strike: f64, option: OptionType) -> Result<f64> {
    params.validate()?;
    if !(params.sigma > 0.0) {
        return Err(Error::Parameter("closed form needs sigma > 0".into()));
    }
    if !(strike >= 0.0 && strike.is_finite()) {
        return Err(Error::Parameter("strike must be non-negative".into()));
    }
    let t = params.maturity;
    let fwd_df = (-params.q * t).exp();
    let df = (-params.r * t).exp();
    if strike == 0.0 {
        return Ok(match option {
            OptionType::Call => params.s0 * fwd_df,
            OptionType::Put => 0.0,
        });
    }
    let sd = params.sigma * t.sqrt();
    let d1 = ((params.s0 / strike).ln() + (params.r - params.q + 0.5 * params.sigma.powi(2)) * t) / sd;
    let d2 = d1 - sd;
    let n = Normal::standard();
    Ok(match option {
        OptionType::Call => params.s0 * fwd_df * n.cdf(d1) - strike * df * n.cdf(d2),
        OptionType::Put => strike * df * n.cdf(-d2) - params.s0 * fwd_df * n.cdf(-d1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn worthless_and_deterministic_cases() {
        let put = TreeSpec::american(defaults(), OptionType::Put, 1e-9, 200);
        assert!(tree_price(&put).unwrap() < 1e-12);
        let flat = ModelParams {
            sigma: 0.0,
            ..defaults()
        };
        let out = TreeSpec::american(flat, OptionType::Put, 95.0, 100);
        assert_eq!(tree_price(&out).unwrap(), 0.0);
        let deep = TreeSpec::american(flat, OptionType::Put, 120.0, 100);
        assert!((tree_price(&deep).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_probability_is_reported() {
        let p = ModelParams {
            sigma: 0.01,
            r: 0.5,
            maturity: 1.0,
            ..defaults()
        };
        let spec = TreeSpec::american(p, OptionType::Put, 100.0, 10);
        assert!(matches!(tree_price(&spec), Err(Error::Stability(_))));
    }

    #[test]
    fn put_call_parity_and_limits() {
        for q in [0.0, 0.03] {
            let p = ModelParams { q, ..defaults() };
            for k in [60.0, 100.0, 140.0] {
                let c = bs_price(&p, k, OptionType::Call).unwrap();
                let put = bs_price(&p, k, OptionType::Put).unwrap();
                let parity = p.s0 * (-q * p.maturity).exp() - k * (-p.r * p.maturity).exp();
                assert!((c - put - parity).abs() < 1e-12);
            }
            let c = bs_price(&p, 1e-12, OptionType::Call).unwrap();
            assert!((c - p.s0 * (-q * p.maturity).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn european_tree_converges_to_closed_form() {
        let p = defaults();
        for option in [OptionType::Call, OptionType::Put] {
            let tree = tree_price(
                &TreeSpec::american(p, option, 100.0, 5000).with_exercise(Exercise::European),
            )
            .unwrap();
            let bs = bs_price(&p, 100.0, option).unwrap();
            assert!((tree - bs).abs() < 1e-3 * bs, "{option:?}: {tree} vs {bs}");
        }
    }

    #[test]
    fn american_tree_self_consistency() {
        let spec = TreeSpec::american(defaults(), OptionType::Put, 100.0, 5000);
        let coarse = tree_price(&spec).unwrap();
        let fine = tree_price(&TreeSpec { steps: 10_000, ..spec }).unwrap();
        assert!((coarse - fine).abs() < 1e-3 * fine);
    }

    #[test]
    fn exercise_styles_are_ordered() {
        let p = defaults();
        let base = TreeSpec::american(p, OptionType::Put, 100.0, 1000);
        let am = tree_price(&base).unwrap();
        let berm = tree_price(&base.with_exercise(Exercise::Bermudan(50))).unwrap();
        let eu = tree_price(&base.with_exercise(Exercise::European)).unwrap();
        assert!(am >= berm && berm >= eu);
        // an American call without dividends is never exercised early
        let call = TreeSpec::american(p, OptionType::Call, 100.0, 1000);
        let c_am = tree_price(&call).unwrap();
        let c_eu = tree_price(&call.with_exercise(Exercise::European)).unwrap();
        assert!((c_am - c_eu).abs() < 1e-12);
        assert!(tree_price(&base.with_exercise(Exercise::Bermudan(7))).is_err());
    }

    #[test]
    fn put_value_grows_with_volatility_and_maturity() {
        let mut last = 0.0;
        for sigma in [0.1, 0.2, 0.3, 0.5] {
            let p = ModelParams { sigma, ..defaults() };
            let v = tree_price(&TreeSpec::american(p, OptionType::Put, 100.0, 500)).unwrap();
            assert!(v >= last);
            last = v;
        }
        let mut last = 0.0;
        for maturity in [0.1, 0.2, 0.5, 1.0] {
            let p = ModelParams { maturity, ..defaults() };
            let v = tree_price(&TreeSpec::american(p, OptionType::Put, 100.0, 500)).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn tree_greeks_in_the_tails() {
        let deep_itm = TreeSpec::american(defaults().with_spot(60.0), OptionType::Put, 100.0, 2000);
        let (delta, _) = tree_greeks(&deep_itm, 0.005).unwrap();
        assert!((delta + 1.0).abs() < 0.01);
        let otm = TreeSpec::american(defaults().with_spot(140.0), OptionType::Put, 100.0, 2000);
        let (_, gamma) = tree_greeks(&otm, 0.005).unwrap();
        assert!(gamma >= 0.0 && gamma < 0.01);
    }

    #[test]
    fn closed_form_needs_volatility() {
        let p = ModelParams {
            sigma: 0.0,
            ..defaults()
        };
        assert!(bs_price(&p, 100.0, OptionType::Call).is_err());
    }
}
