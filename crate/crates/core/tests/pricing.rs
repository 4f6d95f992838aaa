use amerasian::basis::BasisSpec;
use amerasian::features::RiskSet;
use amerasian::lsmc::{
    certificate_params, european_price, fit_policy, pathwise_values, price, ExercisePolicy, Product,
    RegressionConfig,
};
use amerasian::model::{simulate_paths, ModelParams, PathBatch};
use amerasian::oracles::{tree_price, Exercise, OptionType, TreeSpec};
use amerasian::payoffs::{CertificateKind, CertificateSpec, OptionKind, OptionSpec};
use amerasian::regression::{least_squares, Ridge};

fn params() -> ModelParams {
    ModelParams::default()
}

fn batches(p: &ModelParams, n_train: usize, n_eval: usize) -> (PathBatch, PathBatch) {
    (
        simulate_paths(p, n_train, 101, false).unwrap(),
        simulate_paths(p, n_eval, 202, false).unwrap(),
    )
}

#[test]
fn discounted_spot_is_a_martingale() {
    let p = params();
    let batch = simulate_paths(&p, 100_000, 5, false).unwrap();
    let last = batch.last_date();
    let df = (-(p.r - p.q) * p.maturity).exp();
    let xs: Vec<f64> = batch.paths().map(|path| df * path[last]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - p.s0).abs() <= 4.0 * se, "{mean} vs {} (se {se})", p.s0);
}

// With no volatility every path is the same, so the regression recovers the
// continuation value exactly and the price is the best discounted payoff over
// the admissible dates, found here by enumeration.
#[test]
fn deterministic_paths_match_exhaustive_stopping() {
    let p = ModelParams {
        sigma: 0.0,
        steps: 8,
        maturity: 0.5,
        ..params()
    };
    let (train, eval) = batches(&p, 64, 64);
    let disc = p.discount_curve();
    for (kind, m, strike) in [
        (OptionKind::AsianFixed, 3, Some(104.0)),
        (OptionKind::LookbackFixed, 2, Some(98.0)),
        (OptionKind::AsianFixed, 1, Some(101.0)),
    ] {
        let spec = OptionSpec::new(kind, m, strike).unwrap();
        let path = eval.path(0);
        let best = (spec.first_exercise_date()..=eval.last_date())
            .map(|i| disc[i] * spec.exercise_value(path, i).unwrap())
            .fold(0.0, f64::max);
        let est = price(
            &p,
            &train,
            &eval,
            &Product::Option(spec),
            &BasisSpec::polynomial(2, RiskSet::Spot),
            &RegressionConfig {
                min_regression_paths: 1,
                ..RegressionConfig::default()
            },
        )
        .unwrap();
        assert!((est.price - best).abs() < 1e-9, "{kind:?}: {} vs {best}", est.price);
    }
}

#[test]
fn put_price_is_a_lower_bound_of_the_tree() {
    let p = params();
    let (train, eval) = batches(&p, 40_000, 160_000);
    let spec = OptionSpec::american_put(100.0).unwrap();
    let est = price(
        &p,
        &train,
        &eval,
        &Product::Option(spec),
        &BasisSpec::polynomial(2, RiskSet::SpotAverage),
        &RegressionConfig::default(),
    )
    .unwrap();
    let bermudan = tree_price(
        &TreeSpec::american(p, OptionType::Put, 100.0, 2000).with_exercise(Exercise::Bermudan(p.steps)),
    )
    .unwrap();
    assert!(est.price <= bermudan + 3.0 * est.std_error, "{} vs {bermudan}", est.price);
    assert!(est.price >= 0.98 * bermudan);
}

#[test]
fn early_exercise_dominates_the_european_payoff() {
    let p = params();
    let (train, eval) = batches(&p, 20_000, 80_000);
    for (kind, m, strike) in [
        (OptionKind::AsianFixed, 5, Some(100.0)),
        (OptionKind::AsianFloating, 5, None),
        (OptionKind::LookbackFixed, 3, Some(100.0)),
        (OptionKind::LookbackFloating, 10, None),
    ] {
        let spec = OptionSpec::new(kind, m, strike).unwrap();
        let american = price(
            &p,
            &train,
            &eval,
            &Product::Option(spec),
            &BasisSpec::polynomial(2, RiskSet::SpotAverage),
            &RegressionConfig::default(),
        )
        .unwrap();
        let european = european_price(&p, &eval, &spec).unwrap();
        assert!(
            american.price >= european.price - 3.0 * american.std_error,
            "{kind:?}: {} < {}",
            american.price,
            european.price
        );
    }
}

#[test]
fn certificate_value_never_exceeds_coupons_plus_principal() {
    for kind in [CertificateKind::Snowball, CertificateKind::LockIn] {
        let spec = CertificateSpec::quarterly(kind, 2, 0.025, 0.9, 0.3, 100.0).unwrap();
        let p = certificate_params(&params(), &spec);
        let (train, eval) = batches(&p, 4000, 4000);
        let policy = fit_policy(
            &p,
            &train,
            &Product::Certificate(spec.clone()),
            &BasisSpec::polynomial(2, RiskSet::History),
            &RegressionConfig::default(),
        )
        .unwrap();
        let cap = spec.coupons.iter().sum::<f64>() + 1.0;
        let values = pathwise_values(&p, &eval, &policy).unwrap().values;
        assert!(values.iter().all(|&v| (0.0..=cap + 1e-12).contains(&v)), "{kind:?}");
    }
}

fn decisions(policy: &ExercisePolicy, batch: &PathBatch, spec: &OptionSpec, i: usize, scale: f64) -> Vec<bool> {
    let design = policy.basis().design(batch, i);
    let cols = design.cols;
    let rescaled: Vec<f64> = design
        .values
        .chunks_exact(cols)
        .flat_map(|row| row.iter().enumerate().map(move |(j, &x)| if j == 0 { x } else { scale * x }))
        .collect();
    let itm: Vec<usize> = (0..batch.n_paths())
        .filter(|&p| spec.exercise_value(batch.path(p), i).unwrap() > 0.0)
        .collect();
    // regress next-date payoffs: any fixed target works for the invariance
    let x: Vec<f64> = itm.iter().flat_map(|&p| rescaled[p * cols..(p + 1) * cols].to_vec()).collect();
    let y: Vec<f64> = itm
        .iter()
        .map(|&p| spec.exercise_value(batch.path(p), i + 1).unwrap())
        .collect();
    let theta = least_squares(&x, cols, &y, Ridge::Relative(0.0)).unwrap().theta;
    itm.iter()
        .map(|&p| {
            let row = &rescaled[p * cols..(p + 1) * cols];
            let c: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum();
            spec.exercise_value(batch.path(p), i).unwrap() > c
        })
        .collect()
}

#[test]
fn rescaling_the_basis_keeps_exercise_decisions() {
    let p = params();
    let (train, _) = batches(&p, 5000, 10);
    let spec = OptionSpec::new(OptionKind::AsianFixed, 4, Some(100.0)).unwrap();
    let policy = fit_policy(
        &p,
        &train,
        &Product::Option(spec),
        &BasisSpec::polynomial(2, RiskSet::Window),
        &RegressionConfig::default(),
    )
    .unwrap();
    for i in [10, 30, 48] {
        let base = decisions(&policy, &train, &spec, i, 1.0);
        for scale in [0.01, 7.5] {
            let other = decisions(&policy, &train, &spec, i, scale);
            let flips = base.iter().zip(&other).filter(|(a, b)| a != b).count();
            assert_eq!(flips, 0, "date {i}, scale {scale}");
        }
    }
}
