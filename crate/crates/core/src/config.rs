//! Experiment configuration: a TOML file with `[model]`, `[product]`,
//! `[[basis]]`, `[regression]`, `[run]`, `[greeks]` and `[output]` sections.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec};
use crate::basis::poly::DEFAULT_MAX_COLUMNS;
use crate::basis::random_nets::{RffnnSpec, RrnnSpec};
use crate::error::{Error, Result};
use crate::features::RiskSet;
use crate::lsmc::{certificate_params, Product, RegressionConfig};
use crate::model::ModelParams;
use crate::payoffs::{CertificateKind, CertificateSpec, ExtremaPrefactor, OptionKind, OptionSpec};
use crate::sensitivities::ChebyshevConfig;

/// Every key with its default, as shown by `--help`.
pub const CONFIG_REFERENCE: &str = r#"[model]
s0 = 100.0            # initial spot
r = 0.05              # risk-free rate (continuous)
q = 0.0               # dividend yield (continuous)
sigma = 0.3           # volatility
maturity = 0.2        # years (ignored for certificates: quarterly grid)
steps = 50            # observation dates after inception

[product]
kind = "asian_fixed"  # american_put | asian_fixed | asian_floating | lookback_fixed
                      # | lookback_floating | snowball | lock_in
strike = 100.0        # fixed-strike options only
windows = [1]         # moving-window lengths M (options)
lookback_extrema_prefactor = "paper"   # paper (1/M on min/max) | plain
years = [1]           # certificate maturities in years (quarterly coupons)
coupon = 0.023        # certificate coupon per quarter
coupon_barrier = 1.0  # performance level paying a coupon
capital_barrier = 0.35
reference = <s0>      # performance reference level

[[basis]]             # one table per basis; default: polynomial degree 2, rho 2
family = "polynomial" # polynomial | rffnn | rrnn | signature
rho = 2               # risk set 1..4 (certificates always use 4)
degree = 2            # polynomial
max_columns = 5000    # polynomial column cap
hidden = 40           # rffnn (default 40) / rrnn (default 20)
slope = 0.01          # rffnn leaky-ReLU slope
weight_std = 1.0      # rffnn
input_std = 1e-4      # rrnn
recurrent_std = 0.3   # rrnn
bias_std = 1.0        # rrnn
seed = 0              # rffnn / rrnn weight stream
order = 5             # signature truncation order
augment = false       # signature: append the standardised window average

[regression]
ridge_scale = 1e-8
itm_filter = true
train_fraction = 0.2
min_regression_paths = 32

[run]
n_paths = 400000      # per run, split into training and pricing paths
n_runs = 10
seed = 0              # master seed
antithetic = false

[greeks]
moneyness = [0.60, 0.65, ..., 1.40]   # spot / strike (17 points)
nodes = 7
width = 0.10          # Chebyshev interval, fraction of spot
adaptive = true
inception_threshold = 0.5
boundary_tolerance = 1e-3
node_paths = 25000    # per node and run
n_runs = 10
epsilon = 0.05        # regression method: spots uniform on s (1 +- epsilon)
regression_paths = 175000
tree_steps = 5000
tree_bump = 0.005

[output]
prices = <unset>      # price CSV path (--out wins; stdout when neither is set)
greeks = <unset>      # Greek CSV path, same rules
timing = true         # false leaves time_s empty so reruns are byte-identical
paths = <unset>       # optional CSV dump of the first run's training paths
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    AmericanPut,
    AsianFixed,
    AsianFloating,
    LookbackFixed,
    LookbackFloating,
    Snowball,
    LockIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductConfig {
    pub kind: ProductKind,
    pub strike: Option<f64>,
    pub windows: Vec<usize>,
    pub lookback_extrema_prefactor: ExtremaPrefactor,
    pub years: Vec<usize>,
    pub coupon: f64,
    pub coupon_barrier: f64,
    pub capital_barrier: f64,
    pub reference: Option<f64>,
}

impl Default for ProductConfig {
    fn default() -> Self {
        Self {
            kind: ProductKind::AsianFixed,
            strike: Some(100.0),
            windows: vec![1],
            lookback_extrema_prefactor: ExtremaPrefactor::Paper,
            years: vec![1],
            coupon: 0.023,
            coupon_barrier: 1.0,
            capital_barrier: 0.35,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Polynomial,
    Rffnn,
    Rrnn,
    Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub family: FamilyName,
    #[serde(default = "default_rho")]
    pub rho: u8,
    pub degree: Option<usize>,
    pub max_columns: Option<usize>,
    pub hidden: Option<usize>,
    pub slope: Option<f64>,
    pub weight_std: Option<f64>,
    pub input_std: Option<f64>,
    pub recurrent_std: Option<f64>,
    pub bias_std: Option<f64>,
    pub seed: Option<u64>,
    pub order: Option<usize>,
    pub augment: Option<bool>,
}

fn default_rho() -> u8 {
    2
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            family: FamilyName::Polynomial,
            rho: 2,
            degree: None,
            max_columns: None,
            hidden: None,
            slope: None,
            weight_std: None,
            input_std: None,
            recurrent_std: None,
            bias_std: None,
            seed: None,
            order: None,
            augment: None,
        }
    }
}

impl BasisConfig {
    pub fn to_spec(&self) -> Result<BasisSpec> {
        let rho = RiskSet::from_index(self.rho).map_err(|e| Error::Config(e.to_string()))?;
        let b = self;
        let reject = |present: &[(&str, bool)]| -> Result<()> {
            match present.iter().find(|(_, p)| *p) {
                Some((key, _)) => Err(Error::Config(format!(
                    "key `{key}` does not apply to the {:?} basis",
                    b.family
                ))),
                None => Ok(()),
            }
        };
        let poly_keys = [("degree", b.degree.is_some()), ("max_columns", b.max_columns.is_some())];
        let ffnn_keys = [("slope", b.slope.is_some()), ("weight_std", b.weight_std.is_some())];
        let rnn_keys = [
            ("input_std", b.input_std.is_some()),
            ("recurrent_std", b.recurrent_std.is_some()),
            ("bias_std", b.bias_std.is_some()),
        ];
        let net_keys = [("hidden", b.hidden.is_some()), ("seed", b.seed.is_some())];
        let sig_keys = [("order", b.order.is_some()), ("augment", b.augment.is_some())];
        let family = match b.family {
            FamilyName::Polynomial => {
                reject(&[ffnn_keys.as_slice(), &rnn_keys, &net_keys, &sig_keys].concat())?;
                BasisFamily::Polynomial {
                    degree: b.degree.unwrap_or(2),
                }
            }
            FamilyName::Rffnn => {
                reject(&[poly_keys.as_slice(), &rnn_keys, &sig_keys].concat())?;
                let d = RffnnSpec::default();
                BasisFamily::Rffnn(RffnnSpec {
                    hidden: b.hidden.unwrap_or(d.hidden),
                    slope: b.slope.unwrap_or(d.slope),
                    weight_std: b.weight_std.unwrap_or(d.weight_std),
                    seed: b.seed.unwrap_or(d.seed),
                })
            }
            FamilyName::Rrnn => {
                reject(&[poly_keys.as_slice(), &ffnn_keys, &sig_keys].concat())?;
                let d = RrnnSpec::default();
                BasisFamily::Rrnn(RrnnSpec {
                    hidden: b.hidden.unwrap_or(d.hidden),
                    input_std: b.input_std.unwrap_or(d.input_std),
                    recurrent_std: b.recurrent_std.unwrap_or(d.recurrent_std),
                    bias_std: b.bias_std.unwrap_or(d.bias_std),
                    seed: b.seed.unwrap_or(d.seed),
                })
            }
            FamilyName::Signature => {
                reject(&[poly_keys.as_slice(), &ffnn_keys, &rnn_keys, &net_keys].concat())?;
                BasisFamily::Signature {
                    order: b.order.unwrap_or(5),
                    augment: b.augment.unwrap_or(false),
                }
            }
        };
        let spec = BasisSpec {
            family,
            rho,
            max_columns: b.max_columns.unwrap_or(DEFAULT_MAX_COLUMNS),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_paths: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_paths: 400_000,
            n_runs: 10,
            seed: 0,
            antithetic: false,
        }
    }
}

pub fn default_moneyness() -> Vec<f64> {
    (0..17).map(|k| (60 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreeksConfig {
    pub moneyness: Vec<f64>,
    pub nodes: usize,
    pub width: f64,
    pub adaptive: bool,
    pub inception_threshold: f64,
    pub boundary_tolerance: f64,
    pub node_paths: usize,
    pub n_runs: usize,
    pub epsilon: f64,
    pub regression_paths: usize,
    pub tree_steps: usize,
    pub tree_bump: f64,
}

impl Default for GreeksConfig {
    fn default() -> Self {
        let c = ChebyshevConfig::default();
        Self {
            moneyness: default_moneyness(),
            nodes: c.nodes,
            width: c.width,
            adaptive: c.adaptive,
            inception_threshold: c.inception_threshold,
            boundary_tolerance: c.boundary_tolerance,
            node_paths: 25_000,
            n_runs: 10,
            epsilon: 0.05,
            regression_paths: 175_000,
            tree_steps: 5000,
            tree_bump: 0.005,
        }
    }
}

impl GreeksConfig {
    pub fn chebyshev(&self) -> ChebyshevConfig {
        ChebyshevConfig {
            nodes: self.nodes,
            width: self.width,
            adaptive: self.adaptive,
            inception_threshold: self.inception_threshold,
            boundary_tolerance: self.boundary_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub prices: Option<PathBuf>,
    pub greeks: Option<PathBuf>,
    pub timing: bool,
    pub paths: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            prices: None,
            greeks: None,
            timing: true,
            paths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub product: ProductConfig,
    pub basis: Vec<BasisConfig>,
    pub regression: RegressionConfig,
    pub run: RunConfig,
    pub greeks: GreeksConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            product: ProductConfig::default(),
            basis: vec![BasisConfig::default()],
            regression: RegressionConfig::default(),
            run: RunConfig::default(),
            greeks: GreeksConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// One priced contract of the grid, with the model it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProduct {
    /// Product column of the CSV.
    pub label: String,
    /// Window column of the CSV (0 for certificates).
    pub window: usize,
    pub params: ModelParams,
    pub product: Product,
    /// Level that moneyness is measured against.
    pub reference: f64,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked before any simulation.
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(config_err)?;
        self.regression.validate().map_err(config_err)?;
        if self.run.n_runs == 0 || self.run.n_paths < 2 {
            return Err(Error::Config("run needs n_runs >= 1 and n_paths >= 2".into()));
        }
        self.greeks.chebyshev().validate().map_err(config_err)?;
        if self.greeks.n_runs == 0 || self.greeks.node_paths < 2 || self.greeks.regression_paths < 3 {
            return Err(Error::Config("greeks need n_runs >= 1 and enough paths".into()));
        }
        if !(self.greeks.epsilon > 0.0 && self.greeks.epsilon < 1.0) {
            return Err(Error::Config("greeks epsilon must lie in (0, 1)".into()));
        }
        if !(self.greeks.tree_bump > 0.0 && self.greeks.tree_bump < 1.0) || self.greeks.tree_steps == 0 {
            return Err(Error::Config("tree_bump must lie in (0, 1) and tree_steps >= 1".into()));
        }
        if self.greeks.moneyness.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Config("moneyness values must be positive".into()));
        }
        for b in &self.basis {
            b.to_spec()?;
        }
        self.products()?;
        Ok(())
    }

    pub fn bases(&self) -> Result<Vec<BasisSpec>> {
        self.basis.iter().map(BasisConfig::to_spec).collect()
    }

    fn is_certificate(&self) -> bool {
        matches!(self.product.kind, ProductKind::Snowball | ProductKind::LockIn)
    }

    /// The product axis of the grid: one entry per window (options) or per
    /// maturity (certificates).
    pub fn products(&self) -> Result<Vec<GridProduct>> {
        let p = &self.product;
        if self.is_certificate() {
            let kind = if p.kind == ProductKind::Snowball {
                CertificateKind::Snowball
            } else {
                CertificateKind::LockIn
            };
            let reference = p.reference.unwrap_or(self.model.s0);
            return p
                .years
                .iter()
                .map(|&years| {
                    let spec = CertificateSpec::quarterly(
                        kind,
                        years,
                        p.coupon,
                        p.coupon_barrier,
                        p.capital_barrier,
                        reference,
                    )
                    .map_err(config_err)?;
                    Ok(GridProduct {
                        label: format!("{}_{}y", kind.label(), years),
                        window: 0,
                        params: certificate_params(&self.model, &spec),
                        product: Product::Certificate(spec),
                        reference,
                    })
                })
                .collect();
        }
        let (kind, windows) = match p.kind {
            ProductKind::AmericanPut => {
                if p.windows.iter().any(|&m| m != 1) {
                    return Err(Error::Config("american_put has a one-day window".into()));
                }
                (OptionKind::AsianFixed, vec![1])
            }
            ProductKind::AsianFixed => (OptionKind::AsianFixed, p.windows.clone()),
            ProductKind::AsianFloating => (OptionKind::AsianFloating, p.windows.clone()),
            ProductKind::LookbackFixed => (OptionKind::LookbackFixed, p.windows.clone()),
            ProductKind::LookbackFloating => (OptionKind::LookbackFloating, p.windows.clone()),
            ProductKind::Snowball | ProductKind::LockIn => unreachable!(),
        };
        let strike = if kind.has_strike() {
            Some(p.strike.ok_or_else(|| Error::Config("fixed-strike products need `strike`".into()))?)
        } else {
            None
        };
        let label = match p.kind {
            ProductKind::AmericanPut => "american_put".to_string(),
            _ => kind.label().to_string(),
        };
        windows
            .iter()
            .map(|&m| {
                let spec = OptionSpec::new(kind, m, strike)
                    .map_err(config_err)?
                    .with_prefactor(p.lookback_extrema_prefactor);
                if spec.first_exercise_date() > self.model.steps {
                    return Err(Error::Config(format!(
                        "window {m} does not fit in {} steps",
                        self.model.steps
                    )));
                }
                Ok(GridProduct {
                    label: label.clone(),
                    window: m,
                    params: self.model,
                    product: Product::Option(spec),
                    reference: strike.unwrap_or(self.model.s0),
                })
            })
            .collect()
    }

    /// True when the price grid has no cells.
    pub fn grid_is_empty(&self) -> bool {
        self.basis.is_empty() || self.products().map_or(true, |p| p.is_empty())
    }
}
