//! Regression bases and their per-date evaluation on simulated paths.
//!
//! A [`BasisSpec`] is turned into a [`FittedBasis`] on a training batch: the
//! standardisation statistics are frozen, random weights are sampled, and the
//! basis can then produce design rows for any path (training or evaluation).
//! History-based recurrent and signature bases carry a per-path state that is
//! advanced date by date instead of being recomputed from the first date.

pub mod poly;
pub mod random_nets;
pub mod signature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureFrame, RiskSet, RiskSetSpec};
use crate::model::{derive_seed, PathBatch};
use poly::{MonomialTable, DEFAULT_MAX_COLUMNS};
use random_nets::{RffnnLayer, RffnnSpec, RrnnCell, RrnnSpec};
use signature::{require_stream, SignatureScratch, SignatureStream, DEFAULT_MAX_ORDER};

/// Row-major design matrix, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl DesignMatrix {
    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p * self.cols..(p + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisFamily {
    Polynomial {
        degree: usize,
    },
    Rffnn(RffnnSpec),
    Rrnn(RrnnSpec),
    Signature {
        order: usize,
        #[serde(default)]
        augment: bool,
    },
}

impl BasisFamily {
    pub fn label(&self) -> &'static str {
        match self {
            BasisFamily::Polynomial { .. } => "poly",
            BasisFamily::Rffnn(_) => "rffnn",
            BasisFamily::Rrnn(_) => "rrnn",
            BasisFamily::Signature { .. } => "signature",
        }
    }
}

/// A regression family together with its risk-factor set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub rho: RiskSet,
    /// Cap on the number of polynomial columns.
    pub max_columns: usize,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, rho: RiskSet) -> Self {
        Self {
            family,
            rho,
            max_columns: DEFAULT_MAX_COLUMNS,
        }
    }

    pub fn polynomial(degree: usize, rho: RiskSet) -> Self {
        Self::new(BasisFamily::Polynomial { degree }, rho)
    }

    pub fn rffnn(hidden: usize, rho: RiskSet) -> Self {
        Self::new(
            BasisFamily::Rffnn(RffnnSpec {
                hidden,
                ..RffnnSpec::default()
            }),
            rho,
        )
    }

    pub fn rrnn(hidden: usize, rho: RiskSet) -> Self {
        Self::new(
            BasisFamily::Rrnn(RrnnSpec {
                hidden,
                ..RrnnSpec::default()
            }),
            rho,
        )
    }

    pub fn signature(order: usize, augment: bool, rho: RiskSet) -> Self {
        Self::new(BasisFamily::Signature { order, augment }, rho)
    }

    pub fn label(&self) -> &'static str {
        self.family.label()
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            BasisFamily::Polynomial { degree } => {
                if degree == 0 {
                    return Err(Error::Parameter("polynomial degree must be at least 1".into()));
                }
            }
            BasisFamily::Rffnn(spec) => spec.validate()?,
            BasisFamily::Rrnn(spec) => {
                spec.validate()?;
                require_stream(self.rho, "recurrent")?;
            }
            BasisFamily::Signature { order, .. } => {
                if order == 0 || order > DEFAULT_MAX_ORDER {
                    return Err(Error::Order {
                        order,
                        cap: DEFAULT_MAX_ORDER,
                    });
                }
                require_stream(self.rho, "signature")?;
            }
        }
        Ok(())
    }

    /// Copy whose random weights are drawn from `seed` combined with the spec's own seed.
    pub fn reseeded(mut self, seed: u64) -> Self {
        match &mut self.family {
            BasisFamily::Rffnn(s) => s.seed = derive_seed(seed, s.seed),
            BasisFamily::Rrnn(s) => s.seed = derive_seed(seed, s.seed),
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Poly(Vec<Option<MonomialTable>>),
    Rffnn(Vec<Option<RffnnLayer>>),
    Rrnn(RrnnCell),
    Signature {
        stream: SignatureStream,
        augment: bool,
    },
}

/// Per-thread work buffers for feature evaluation.
#[derive(Debug, Clone)]
pub struct Scratch {
    x: Vec<f64>,
    series: Vec<f64>,
    tmp: Vec<f64>,
    state: Vec<f64>,
    sig: Option<SignatureScratch>,
}

/// A basis whose standardisation statistics and random weights are frozen.
#[derive(Debug, Clone)]
pub struct FittedBasis {
    frame: FeatureFrame,
    kind: Kind,
}

impl FittedBasis {
    /// Fits the basis on `train` for regressions on `dates`.
    pub fn fit(
        spec: &BasisSpec,
        train: &PathBatch,
        risk: RiskSetSpec,
        dates: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        spec.validate()?;
        if risk.rho != spec.rho {
            return Err(Error::Spec("risk set does not match the basis".into()));
        }
        let mut frame = FeatureFrame::fit(train, risk)?;
        let n_dates = train.n_dates();
        let dates: Vec<usize> = dates.into_iter().collect();
        for &i in &dates {
            if i >= n_dates {
                return Err(Error::OutOfRange {
                    index: i,
                    last: n_dates - 1,
                });
            }
            risk.check_date(i)?;
        }
        let kind = match spec.family {
            BasisFamily::Polynomial { degree } => {
                let mut tables = vec![None; n_dates];
                for &i in &dates {
                    tables[i] = Some(MonomialTable::new(frame.width(i), degree, spec.max_columns)?);
                }
                Kind::Poly(tables)
            }
            BasisFamily::Rffnn(s) => {
                let mut layers = vec![None; n_dates];
                for &i in &dates {
                    layers[i] = Some(RffnnLayer::sample(&s, frame.width(i), i as u64)?);
                }
                Kind::Rffnn(layers)
            }
            BasisFamily::Rrnn(s) => Kind::Rrnn(RrnnCell::sample(&s, 1)?),
            BasisFamily::Signature { order, augment } => {
                if augment {
                    frame = frame.with_average_stats(train);
                }
                let step = 1.0 / (2 * n_dates) as f64;
                Kind::Signature {
                    stream: SignatureStream::new(order, step),
                    augment,
                }
            }
        };
        Ok(Self { frame, kind })
    }

    pub fn frame(&self) -> &FeatureFrame {
        &self.frame
    }

    fn history(&self) -> bool {
        self.frame.spec.effective() == RiskSet::History
    }

    /// Number of design columns at date `i`.
    pub fn width(&self, i: usize) -> usize {
        match &self.kind {
            Kind::Poly(t) => t[i].as_ref().map_or(0, MonomialTable::width),
            Kind::Rffnn(l) => l[i].as_ref().map_or(0, RffnnLayer::width),
            Kind::Rrnn(c) => c.hidden() + 1,
            Kind::Signature { stream, augment } => stream.len() + 1 + usize::from(*augment),
        }
    }

    /// Largest design width over all dates.
    pub fn max_width(&self) -> usize {
        (0..self.frame.n_dates()).map(|i| self.width(i)).max().unwrap_or(0)
    }

    /// Length of the per-path state carried between dates (0 when stateless).
    pub fn state_len(&self) -> usize {
        match &self.kind {
            Kind::Rrnn(c) if self.history() => c.hidden(),
            Kind::Signature { stream, .. } if self.history() => stream.len(),
            _ => 0,
        }
    }

    /// Whether the state can be moved back one date without recomputation.
    pub fn can_retreat(&self) -> bool {
        matches!(self.kind, Kind::Signature { .. }) || self.state_len() == 0
    }

    pub fn scratch(&self) -> Scratch {
        let h = match &self.kind {
            Kind::Rrnn(c) => c.hidden(),
            _ => 0,
        };
        let sig = match &self.kind {
            Kind::Signature { stream, .. } => Some(stream.scratch()),
            _ => None,
        };
        let state_len = match &self.kind {
            Kind::Rrnn(c) => c.hidden(),
            Kind::Signature { stream, .. } => stream.len(),
            _ => 0,
        };
        Scratch {
            x: vec![0.0; self.frame.n_dates() + 2],
            series: Vec::with_capacity(self.frame.n_dates()),
            tmp: vec![0.0; h],
            state: vec![0.0; state_len],
            sig,
        }
    }

    fn fill_series(&self, path: &[f64], i: usize, series: &mut Vec<f64>) {
        series.clear();
        series.extend(
            self.frame
                .spec
                .stream_dates(i)
                .map(|j| self.frame.spot_z(path, j)),
        );
    }

    /// Computes the state at date `i` from scratch.
    fn compute_state(&self, path: &[f64], i: usize, state: &mut [f64], scratch: &mut Scratch) {
        self.fill_series(path, i, &mut scratch.series);
        match &self.kind {
            Kind::Rrnn(cell) => {
                cell.run(scratch.series.iter().copied(), state, &mut scratch.tmp);
            }
            Kind::Signature { stream, .. } => {
                let sig = scratch.sig.as_mut().expect("signature scratch");
                stream.init(&scratch.series, state, sig);
            }
            _ => {}
        }
    }

    pub fn init_state(&self, path: &[f64], i: usize, state: &mut [f64], scratch: &mut Scratch) {
        if self.state_len() > 0 {
            self.compute_state(path, i, state, scratch);
        }
    }

    /// Moves the state from date `i` to `i + 1`.
    pub fn advance(&self, path: &[f64], i: usize, state: &mut [f64], scratch: &mut Scratch) {
        if self.state_len() == 0 {
            return;
        }
        // the history stream restarts at the first date after inception
        if i == 0 {
            self.compute_state(path, 1, state, scratch);
            return;
        }
        let z_next = self.frame.spot_z(path, i + 1);
        match &self.kind {
            Kind::Rrnn(cell) => {
                cell.step(&[z_next], state, &mut scratch.tmp);
                state.copy_from_slice(&scratch.tmp);
            }
            Kind::Signature { stream, .. } => {
                let delta = z_next - self.frame.spot_z(path, i);
                stream.push(delta, state, scratch.sig.as_mut().expect("signature scratch"));
            }
            _ => {}
        }
    }

    /// Moves the state from date `i` to `i - 1`; requires [`Self::can_retreat`].
    pub fn retreat(&self, path: &[f64], i: usize, state: &mut [f64], scratch: &mut Scratch) {
        if self.state_len() == 0 {
            return;
        }
        if i <= 1 {
            self.compute_state(path, i.saturating_sub(1), state, scratch);
            return;
        }
        match &self.kind {
            Kind::Signature { stream, .. } => {
                let delta = self.frame.spot_z(path, i) - self.frame.spot_z(path, i - 1);
                stream.pop(delta, state, scratch.sig.as_mut().expect("signature scratch"));
            }
            _ => unreachable!("state of this basis cannot be retracted"),
        }
    }

    /// Design row at date `i`; `state` must be the state at `i` for stateful bases.
    pub fn features(
        &self,
        path: &[f64],
        i: usize,
        state: &[f64],
        out: &mut [f64],
        scratch: &mut Scratch,
    ) {
        match &self.kind {
            Kind::Poly(tables) => {
                let table = tables[i].as_ref().expect("no polynomial table for this date");
                let f = self.frame.width(i);
                self.frame.factors(path, i, &mut out[1..=f]);
                table.fill_from_linear(out);
            }
            Kind::Rffnn(layers) => {
                let layer = layers[i].as_ref().expect("no hidden layer for this date");
                let f = self.frame.width(i);
                self.frame.factors(path, i, &mut scratch.x[..f]);
                layer.apply(&scratch.x[..f], out);
            }
            Kind::Rrnn(cell) => {
                let h = cell.hidden();
                if self.state_len() > 0 {
                    out[..h].copy_from_slice(state);
                } else {
                    let mut st = std::mem::take(&mut scratch.state);
                    self.compute_state(path, i, &mut st, scratch);
                    out[..h].copy_from_slice(&st);
                    scratch.state = st;
                }
                out[h] = 1.0;
            }
            Kind::Signature { stream, augment } => {
                let n = stream.len();
                let points = self.frame.spec.stream_dates(i).count();
                if self.state_len() > 0 {
                    stream.rescaled(state, points, &mut out[..n]);
                } else {
                    let mut st = std::mem::take(&mut scratch.state);
                    self.compute_state(path, i, &mut st, scratch);
                    stream.rescaled(&st, points, &mut out[..n]);
                    scratch.state = st;
                }
                out[n] = 1.0;
                if *augment {
                    out[n + 1] = self.frame.average_z(path, i);
                }
            }
        }
    }

    /// Design matrix of a whole batch at date `i`, computing states from scratch.
    pub fn design(&self, batch: &PathBatch, i: usize) -> DesignMatrix {
        let cols = self.width(i);
        let mut scratch = self.scratch();
        let mut state = vec![0.0; self.state_len()];
        let mut values = vec![0.0; batch.n_paths() * cols];
        for (p, row) in values.chunks_exact_mut(cols).enumerate() {
            let path = batch.path(p);
            self.init_state(path, i, &mut state, &mut scratch);
            self.features(path, i, &state, row, &mut scratch);
        }
        DesignMatrix {
            values,
            rows: batch.n_paths(),
            cols,
        }
    }
}
