//! Fast oracle checks run by `amerasian selftest`.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::signature::{signature, PiecewiseLinearPath};
use crate::basis::{BasisSpec, FittedBasis};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::features::{RiskSet, RiskSetSpec};
use crate::lsmc::{run_experiment, ExperimentSpec, Product, RegressionConfig};
use crate::model::{simulate_paths, ModelParams};
use crate::oracles::{bs_price, tree_price_american, OptionType, TreeSpec};
use crate::payoffs::{ExtremaPrefactor, OptionKind, OptionSpec};
use crate::sensitivities::{chebyshev_greeks, ChebyshevConfig, NodeEval};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Degree-2 polynomial width at the last regression date `N - 1`.
pub fn poly_width(rho: RiskSet, window: usize, params: &ModelParams) -> Result<usize> {
    let batch = simulate_paths(params, 8, 1, false)?;
    let risk = RiskSetSpec::new(rho, window)?;
    let date = params.steps - 1;
    let basis = FittedBasis::fit(&BasisSpec::polynomial(2, rho), &batch, risk, [date])?;
    Ok(basis.width(date))
}

/// Signature width with the lead-lag, time-joined stream and its constant.
pub fn signature_width(order: usize, params: &ModelParams) -> Result<usize> {
    let batch = simulate_paths(params, 8, 1, false)?;
    let risk = RiskSetSpec::new(RiskSet::History, 1)?;
    let date = params.steps - 1;
    let basis = FittedBasis::fit(&BasisSpec::signature(order, false, RiskSet::History), &batch, risk, [date])?;
    // the constant column is not part of the signature count
    Ok(basis.width(date) - 1)
}

pub const TABLE_WINDOWS: [usize; 7] = [2, 3, 4, 5, 10, 20, 30];

/// Published polynomial widths, rows rho 1..4 over `TABLE_WINDOWS`.
pub const POLY_WIDTHS: [[usize; 7]; 4] = [
    [3, 3, 3, 3, 3, 3, 3],
    [6, 6, 6, 6, 6, 6, 6],
    [3, 6, 10, 15, 55, 210, 465],
    [1275, 1275, 1275, 1275, 1275, 1275, 1275],
];

/// Published signature widths for orders 2..=5 of a 3-dimensional stream.
pub const SIGNATURE_WIDTHS: [usize; 4] = [12, 39, 120, 363];

fn random_path(rng: &mut ChaCha8Rng, segments: usize, start: Option<&[f64]>) -> Result<PiecewiseLinearPath> {
    let mut vertices: Vec<Vec<f64>> = (0..=segments)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    if let Some(s) = start {
        vertices[0] = s.to_vec();
    }
    PiecewiseLinearPath::new(3, vertices)
}

/// Largest deviation from Chen's identity and from the reversal property at order 5.
pub fn chen_deviation(n_paths: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_paths {
        let p = random_path(&mut rng, 4, None)?;
        let q = random_path(&mut rng, 3, Some(p.vertex(p.len() - 1)))?;
        let joined = signature(&p.concat(&q)?, 5)?;
        let product = signature(&p, 5)?.concat(&signature(&q, 5)?)?;
        for (a, b) in joined.as_slice().iter().zip(product.as_slice()) {
            worst = worst.max((a - b).abs());
        }
        let back = signature(&p.concat(&p.reversed())?, 5)?;
        for v in back.as_slice() {
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}

/// Largest deviation of a straight segment's signature from `v^{(x)k} / k!`.
pub fn linear_deviation(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        let sig = signature(&PiecewiseLinearPath::new(3, vec![a, b])?, 5)?;
        let mut level = vec![1.0];
        for k in 1..=5usize {
            level = level
                .iter()
                .flat_map(|x| v.iter().map(move |y| x * y / k as f64))
                .collect();
            for (x, y) in sig.level(k).iter().zip(&level) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(worst)
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, e.to_string()));
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every check; a configuration file, when given, is validated first and
/// supplies the model parameters.
pub fn run_selftest(config: Option<&Path>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut params = ModelParams::default();
    if let Some(path) = config {
        out.push(check("config", || {
            let cfg = ExperimentConfig::load(path)?;
            params = cfg.model;
            Ok((true, format!("{} parsed", path.display())))
        }));
    }
    let table = ModelParams::default();
    out.push(check("polynomial_widths", || {
        let mut bad = Vec::new();
        for (r, row) in POLY_WIDTHS.iter().enumerate() {
            let rho = RiskSet::from_index(r as u8 + 1)?;
            for (&m, &want) in TABLE_WINDOWS.iter().zip(row) {
                let got = poly_width(rho, m, &table)?;
                if got != want {
                    bad.push(format!("rho{} M={m}: {got} != {want}", r + 1));
                }
            }
        }
        Ok((bad.is_empty(), if bad.is_empty() { "28 widths match".into() } else { bad.join("; ") }))
    }));
    out.push(check("signature_widths", || {
        let got = (2..=5).map(|n| signature_width(n, &table)).collect::<Result<Vec<_>>>()?;
        Ok((got == SIGNATURE_WIDTHS, format!("{got:?}")))
    }));
    out.push(check("chen_identity", || {
        let dev = chen_deviation(50, 3)?.max(linear_deviation(4)?);
        Ok((dev <= 1e-10, format!("max deviation {dev:.2e}")))
    }));
    out.push(check("chebyshev_exactness", || {
        let quad = |s: f64| {
            Ok(NodeEval {
                price: (s - 100.0).powi(2),
                std_error: 0.0,
                inception_exercise: 0.0,
            })
        };
        let r = chebyshev_greeks(&quad, 110.0, &ChebyshevConfig::default())?;
        let ok = (r.delta - 20.0).abs() < 1e-8 && (r.gamma - 2.0).abs() < 1e-9;
        Ok((ok, format!("delta {:.10}, gamma {:.10}", r.delta, r.gamma)))
    }));

    let cfg = RegressionConfig::default();
    let exp = ExperimentSpec {
        n_paths: 40_000,
        n_runs: 2,
        master_seed: 1,
        antithetic: false,
    };
    let basis = BasisSpec::polynomial(2, RiskSet::SpotAverage);
    out.push(check("american_put_vs_tree", || {
        let k = params.s0;
        let product = Product::Option(OptionSpec::american_put(k)?);
        let est = run_experiment(&params, &product, &basis, &cfg, &exp)?.estimate;
        let tree = tree_price_american(&TreeSpec::american(params, OptionType::Put, k, 2000))?;
        let rel = (est.price - tree).abs() / tree;
        Ok((rel <= 0.01, format!("lsmc {:.4} vs tree {tree:.4} ({:.2}%)", est.price, 100.0 * rel)))
    }));
    out.push(check("lookback_call_vs_closed_form", || {
        let k = params.s0;
        if params.q != 0.0 {
            return Err(Error::Config("needs q = 0".into()));
        }
        let spec = OptionSpec::new(OptionKind::LookbackFixed, 1, Some(k))?.with_prefactor(ExtremaPrefactor::Plain);
        // a quadratic in log-spot under-fits the convex call continuation value
        let quartic = BasisSpec::polynomial(4, RiskSet::Spot);
        let est = run_experiment(&params, &Product::Option(spec), &quartic, &cfg, &exp)?.estimate;
        let bs = bs_price(&params, k, OptionType::Call)?;
        // spurious early exercise only ever costs value; at this path budget
        // the low bias stays within a few percent
        let ok = est.price <= bs + 4.0 * est.std_error && est.price >= 0.97 * bs;
        Ok((ok, format!("lsmc {:.4} vs {bs:.4}", est.price)))
    }));
    out.push(check("floating_asian_unit_window", || {
        let spec = OptionSpec::new(OptionKind::AsianFloating, 1, None)?;
        let small = ExperimentSpec { n_paths: 5000, ..exp };
        let est = run_experiment(&params, &Product::Option(spec), &basis, &cfg, &small)?.estimate;
        Ok((est.price == 0.0, format!("price {}", est.price)))
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        let results = run_selftest(None);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn bad_config_names_the_check() {
        let dir = std::env::temp_dir().join(format!("amerasian-selftest-{}", std::process::id()));
        std::fs::write(&dir, "[model]\nsigma = -1\n").unwrap();
        let results = run_selftest(Some(&dir));
        std::fs::remove_file(&dir).ok();
        assert_eq!(results[0].name, "config");
        assert!(!results[0].passed);
        assert!(results[1..].iter().all(|r| r.passed));
    }
}
