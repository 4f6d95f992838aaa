//! Grid runners behind the command line: prices over (product x basis x M) and
//! Greek surfaces over moneyness, with their CSV formats.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::basis::{BasisFamily, BasisSpec};
use crate::config::{ExperimentConfig, GridProduct};
use crate::error::{Error, Result};
use crate::features::RiskSet;
use crate::lsmc::{run_experiment, run_seeds, ExperimentSpec, Product};
use crate::model::{derive_seed, simulate_paths, PathBatch};
use crate::oracles::{tree_greeks, OptionType, TreeSpec};
use crate::payoffs::OptionKind;
use crate::sensitivities::{
    chebyshev_greeks, regression_greeks, uniform_spots, GreekMethod, GreekReport, LsmcRandomSpotPricer,
    LsmcSpotPricer,
};

pub const PRICE_HEADER: [&str; 8] = ["product", "basis", "rho", "M", "price", "std_err", "time_s", "seed"];
pub const GREEK_HEADER: [&str; 6] = ["product", "M", "moneyness", "delta", "gamma", "method"];

/// Column label of a basis, e.g. `poly_d2`, `rffnn_h40`, `signature_n5`.
pub fn basis_label(spec: &BasisSpec) -> String {
    match spec.family {
        BasisFamily::Polynomial { degree } => format!("poly_d{degree}"),
        BasisFamily::Rffnn(s) => format!("rffnn_h{}", s.hidden),
        BasisFamily::Rrnn(s) => format!("rrnn_h{}", s.hidden),
        BasisFamily::Signature { order, augment } => {
            format!("signature_n{order}{}", if augment { "_aug" } else { "" })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceRow {
    pub product: String,
    pub basis: String,
    pub rho: u8,
    pub window: usize,
    /// `None` where the cell failed numerically.
    pub price: Option<f64>,
    pub std_error: Option<f64>,
    /// `None` when failed or when timing is switched off.
    pub time_s: Option<f64>,
    pub seed: u64,
}

fn cell(product: &GridProduct, basis: &BasisSpec) -> (String, u8) {
    let rho = match product.product {
        Product::Certificate(_) => RiskSet::History.index(),
        Product::Option(_) => basis.rho.index(),
    };
    (basis_label(basis), rho)
}

/// Prices every (product, basis) cell. Cells share the master seed, hence the
/// simulated paths. Numerical failures become empty cells; anything else aborts.
pub fn price_grid(cfg: &ExperimentConfig) -> Result<Vec<PriceRow>> {
    cfg.validate()?;
    let products = cfg.products()?;
    let bases = cfg.bases()?;
    let exp = ExperimentSpec {
        n_paths: cfg.run.n_paths,
        n_runs: cfg.run.n_runs,
        master_seed: cfg.run.seed,
        antithetic: cfg.run.antithetic,
    };
    let mut rows = Vec::with_capacity(products.len() * bases.len());
    for product in &products {
        for basis in &bases {
            let (label, rho) = cell(product, basis);
            let mut row = PriceRow {
                product: product.label.clone(),
                basis: label,
                rho,
                window: product.window,
                price: None,
                std_error: None,
                time_s: None,
                seed: cfg.run.seed,
            };
            match run_experiment(&product.params, &product.product, basis, &cfg.regression, &exp) {
                Ok(res) => {
                    row.price = Some(res.estimate.price);
                    row.std_error = Some(res.estimate.std_error);
                    row.time_s = cfg.output.timing.then_some(res.median_seconds);
                }
                Err(e) if e.is_numerical() => {
                    warn!("{} / {} / M={}: {e}", row.product, row.basis, row.window);
                }
                Err(e) => return Err(e),
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

fn fmt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => "NA".to_string(),
    }
}

pub fn write_price_csv<W: Write>(rows: &[PriceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PRICE_HEADER)?;
    for r in rows {
        let time = match (r.price, r.time_s) {
            (None, _) => "NA".to_string(),
            (Some(_), None) => String::new(),
            (Some(_), t) => fmt(t),
        };
        w.write_record([
            r.product.clone(),
            r.basis.clone(),
            r.rho.to_string(),
            r.window.to_string(),
            fmt(r.price),
            fmt(r.std_error),
            time,
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    match s {
        "NA" | "" => Ok(None),
        _ => s
            .parse()
            .map(Some)
            .map_err(|_| Error::Input(format!("bad {what} `{s}`"))),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Input(format!("bad {what} `{s}`")))
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = r.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Input(format!("unexpected header {header:?}")));
    }
    Ok(())
}

pub fn read_price_csv<R: Read>(input: R) -> Result<Vec<PriceRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &PRICE_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(PriceRow {
                product: rec[0].to_string(),
                basis: rec[1].to_string(),
                rho: parse(&rec[2], "rho")?,
                window: parse(&rec[3], "M")?,
                price: parse_opt(&rec[4], "price")?,
                std_error: parse_opt(&rec[5], "std_err")?,
                time_s: parse_opt(&rec[6], "time_s")?,
                seed: parse(&rec[7], "seed")?,
            })
        })
        .collect()
}

/// Greeks at one moneyness, averaged over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GreekPoint {
    pub product: String,
    pub window: usize,
    /// Spot over strike (or over the reference level of strikeless products).
    pub moneyness: f64,
    pub method: GreekMethod,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    /// Standard deviations across runs.
    pub delta_std: f64,
    pub gamma_std: f64,
    pub reports: Vec<GreekReport>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn point(product: &GridProduct, moneyness: f64, method: GreekMethod, runs: Result<Vec<GreekReport>>) -> Result<GreekPoint> {
    let mut p = GreekPoint {
        product: product.label.clone(),
        window: product.window,
        moneyness,
        method,
        delta: None,
        gamma: None,
        delta_std: f64::NAN,
        gamma_std: f64::NAN,
        reports: Vec::new(),
    };
    match runs {
        Ok(reports) => {
            let d: Vec<f64> = reports.iter().map(|r| r.delta).collect();
            let g: Vec<f64> = reports.iter().map(|r| r.gamma).collect();
            let (dm, ds) = mean_std(&d);
            let (gm, gs) = mean_std(&g);
            p.delta = Some(dm);
            p.gamma = Some(gm);
            p.delta_std = ds;
            p.gamma_std = gs;
            p.reports = reports;
        }
        Err(e) if e.is_numerical() => warn!("{} M={} moneyness {moneyness}: {e}", p.product, p.window),
        Err(e) => return Err(e),
    }
    Ok(p)
}

fn tree_put(product: &GridProduct) -> Result<f64> {
    match product.product {
        Product::Option(o) if o.kind == OptionKind::AsianFixed && o.window == 1 => Ok(o.strike.unwrap_or(product.reference)),
        _ => Err(Error::Config("the tree method prices the American put only".into())),
    }
}

/// Delta and Gamma over the configured moneyness grid for every window of the
/// product, using the first configured basis.
pub fn greek_surface(cfg: &ExperimentConfig, method: GreekMethod) -> Result<Vec<GreekPoint>> {
    cfg.validate()?;
    let products = cfg.products()?;
    let g = &cfg.greeks;
    if method == GreekMethod::Tree {
        let mut out = Vec::new();
        for product in &products {
            let strike = tree_put(product)?;
            for &m in &g.moneyness {
                let spec = TreeSpec::american(product.params.with_spot(m * strike), OptionType::Put, strike, g.tree_steps);
                let res = tree_greeks(&spec, g.tree_bump).map(|(delta, gamma)| {
                    vec![GreekReport {
                        delta,
                        gamma,
                        method,
                        interval: (m * strike * (1.0 - g.tree_bump), m * strike * (1.0 + g.tree_bump)),
                        boundary: None,
                        one_sided: None,
                        nodes: Vec::new(),
                    }]
                });
                out.push(point(product, m, method, res)?);
            }
        }
        return Ok(out);
    }
    let basis = *cfg
        .bases()?
        .first()
        .ok_or_else(|| Error::Config("greeks need a [[basis]] entry".into()))?;
    let cheb = g.chebyshev();
    let mut out = Vec::new();
    for product in &products {
        let unit = product.params.with_spot(1.0);
        let n_paths = match method {
            GreekMethod::Regression => g.regression_paths,
            _ => g.node_paths,
        };
        let (n_train, n_eval) = cfg.regression.split(n_paths);
        let round = |n: usize| if cfg.run.antithetic { n + n % 2 } else { n };
        // runs[k][moneyness]
        let runs: Vec<Vec<Result<GreekReport>>> = (0..g.n_runs)
            .into_par_iter()
            .map(|k| {
                let (train_seed, eval_seed, weight_seed) = run_seeds(cfg.run.seed, k);
                let train = simulate_paths(&unit, round(n_train), train_seed, cfg.run.antithetic);
                let eval = simulate_paths(&unit, round(n_eval), eval_seed, cfg.run.antithetic);
                let (train, eval) = match (train, eval) {
                    (Ok(t), Ok(e)) => (t, e),
                    (Err(e), _) | (_, Err(e)) => return vec![Err(e); g.moneyness.len()],
                };
                let basis = basis.reseeded(weight_seed);
                g.moneyness
                    .iter()
                    .enumerate()
                    .map(|(j, &m)| {
                        let spot = m * product.reference;
                        surface_point(cfg, product, &basis, method, &cheb, &train, &eval, spot, derive_seed(weight_seed, j as u64))
                    })
                    .collect()
            })
            .collect();
        for (j, &m) in g.moneyness.iter().enumerate() {
            let res: Result<Vec<GreekReport>> = runs.iter().map(|r| r[j].clone()).collect();
            out.push(point(product, m, method, res)?);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn surface_point(
    cfg: &ExperimentConfig,
    product: &GridProduct,
    basis: &BasisSpec,
    method: GreekMethod,
    cheb: &crate::sensitivities::ChebyshevConfig,
    unit_train: &PathBatch,
    unit_eval: &PathBatch,
    spot: f64,
    seed: u64,
) -> Result<GreekReport> {
    let params = product.params.with_spot(spot);
    match method {
        GreekMethod::Chebyshev => {
            let pricer = LsmcSpotPricer::fit(
                params,
                &product.product,
                basis,
                &cfg.regression,
                unit_train,
                unit_eval,
                cheb.width,
                seed,
            )?;
            chebyshev_greeks(&pricer, spot, cheb)
        }
        GreekMethod::Regression => {
            let eps = cfg.greeks.epsilon;
            let pricer = LsmcRandomSpotPricer {
                params,
                product: product.product.clone(),
                basis: *basis,
                cfg: cfg.regression,
                unit_train,
                unit_eval,
                train_spots: uniform_spots(spot, eps, unit_train.n_paths(), derive_seed(seed, 1))?,
            };
            regression_greeks(&pricer, spot, eps, unit_eval.n_paths(), derive_seed(seed, 2))
        }
        GreekMethod::Tree => unreachable!(),
    }
}

pub fn write_greek_csv<W: Write>(points: &[GreekPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GREEK_HEADER)?;
    for p in points {
        w.write_record([
            p.product.clone(),
            p.window.to_string(),
            format!("{:.6}", p.moneyness),
            fmt(p.delta),
            fmt(p.gamma),
            p.method.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the Greek CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct GreekRow {
    pub product: String,
    pub window: usize,
    pub moneyness: f64,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub method: GreekMethod,
}

pub fn read_greek_csv<R: Read>(input: R) -> Result<Vec<GreekRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &GREEK_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let method = match &rec[5] {
                "chebyshev" => GreekMethod::Chebyshev,
                "regression" => GreekMethod::Regression,
                "tree" => GreekMethod::Tree,
                other => return Err(Error::Input(format!("bad method `{other}`"))),
            };
            Ok(GreekRow {
                product: rec[0].to_string(),
                window: parse(&rec[1], "M")?,
                moneyness: parse(&rec[2], "moneyness")?,
                delta: parse_opt(&rec[3], "delta")?,
                gamma: parse_opt(&rec[4], "gamma")?,
                method,
            })
        })
        .collect()
}

/// Writes the training paths of the first run of the first grid product.
pub fn dump_paths(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let products = cfg.products()?;
    let Some(product) = products.first() else {
        return Err(Error::Config("nothing to simulate".into()));
    };
    let (n_train, _) = cfg.regression.split(cfg.run.n_paths);
    let (train_seed, _, _) = run_seeds(cfg.run.seed, 0);
    let batch = simulate_paths(&product.params, n_train, train_seed, cfg.run.antithetic)?;
    let file = std::fs::File::create(path)?;
    batch.write_csv(std::io::BufWriter::new(file))
}
