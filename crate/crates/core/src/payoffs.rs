//! Moving-window statistics, Asian/look-back exercise values and certificate cash flows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStat {
    Avg,
    Min,
    Max,
}

/// Whether the window minimum and maximum carry the `1/M` factor of the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremaPrefactor {
    /// `(1/M) min` and `(1/M) max`, as in the published payoff formulas.
    #[default]
    Paper,
    /// Plain window extrema.
    Plain,
}

fn check_window(len: usize, i: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Parameter("window length must be at least 1".into()));
    }
    if i >= len {
        return Err(Error::OutOfRange {
            index: i,
            last: len.saturating_sub(1),
        });
    }
    if i + 1 < m {
        return Err(Error::WindowUnderflow { index: i, window: m });
    }
    Ok(())
}

/// Window statistic over `S_{T_{i-M+1}}, ..., S_{T_i}` with the published
/// `1/M` prefactor on the extrema.
pub fn window_stat(path: &[f64], i: usize, m: usize, stat: WindowStat) -> Result<f64> {
    window_stat_with(path, i, m, stat, ExtremaPrefactor::Paper)
}

pub fn window_stat_with(
    path: &[f64],
    i: usize,
    m: usize,
    stat: WindowStat,
    prefactor: ExtremaPrefactor,
) -> Result<f64> {
    check_window(path.len(), i, m)?;
    Ok(window_stat_unchecked(path, i, m, stat, prefactor))
}

#[inline]
pub(crate) fn window_average(path: &[f64], i: usize, m: usize) -> f64 {
    path[i + 1 - m..=i].iter().sum::<f64>() / m as f64
}

#[inline]
fn window_stat_unchecked(
    path: &[f64],
    i: usize,
    m: usize,
    stat: WindowStat,
    prefactor: ExtremaPrefactor,
) -> f64 {
    let window = &path[i + 1 - m..=i];
    let scale = match prefactor {
        ExtremaPrefactor::Paper => 1.0 / m as f64,
        ExtremaPrefactor::Plain => 1.0,
    };
    match stat {
        WindowStat::Avg => window_average(path, i, m),
        WindowStat::Min => scale * window.iter().copied().fold(f64::INFINITY, f64::min),
        WindowStat::Max => scale * window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    /// `max(K - A^avg, 0)`
    AsianFixed,
    /// `max(S - A^avg, 0)`
    AsianFloating,
    /// `max(A^max - K, 0)`
    LookbackFixed,
    /// `max(S - A^min, 0)`
    LookbackFloating,
}

impl OptionKind {
    pub fn has_strike(self) -> bool {
        matches!(self, OptionKind::AsianFixed | OptionKind::LookbackFixed)
    }

    pub fn label(self) -> &'static str {
        match self {
            OptionKind::AsianFixed => "asian_fixed",
            OptionKind::AsianFloating => "asian_floating",
            OptionKind::LookbackFixed => "lookback_fixed",
            OptionKind::LookbackFloating => "lookback_floating",
        }
    }
}

/// A moving-window option exercisable on every grid date from `M - 1` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub window: usize,
    pub strike: Option<f64>,
    #[serde(default)]
    pub prefactor: ExtremaPrefactor,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, window: usize, strike: Option<f64>) -> Result<Self> {
        let spec = Self {
            kind,
            window,
            strike,
            prefactor: ExtremaPrefactor::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The American put with strike `K`: a fixed-strike Asian with a one-day window.
    pub fn american_put(strike: f64) -> Result<Self> {
        Self::new(OptionKind::AsianFixed, 1, Some(strike))
    }

    pub fn with_prefactor(mut self, prefactor: ExtremaPrefactor) -> Self {
        self.prefactor = prefactor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Parameter("window length must be at least 1".into()));
        }
        match (self.kind.has_strike(), self.strike) {
            (true, Some(k)) if k > 0.0 && k.is_finite() => Ok(()),
            (true, Some(k)) => Err(Error::Parameter(format!("strike must be positive, got {k}"))),
            (true, None) => Err(Error::Parameter(format!(
                "{} needs a strike",
                self.kind.label()
            ))),
            (false, _) => Ok(()),
        }
    }

    /// First date on which the window is fully observed.
    pub fn first_exercise_date(&self) -> usize {
        self.window - 1
    }

    pub fn exercise_value(&self, path: &[f64], i: usize) -> Result<f64> {
        check_window(path.len(), i, self.window)?;
        Ok(self.payoff(path, i))
    }

    /// Exercise value without bounds checks; `i` must satisfy `M - 1 <= i < path.len()`.
    #[inline]
    pub(crate) fn payoff(&self, path: &[f64], i: usize) -> f64 {
        let m = self.window;
        let k = self.strike.unwrap_or(0.0);
        let v = match self.kind {
            OptionKind::AsianFixed => k - window_average(path, i, m),
            OptionKind::AsianFloating => path[i] - window_average(path, i, m),
            OptionKind::LookbackFixed => {
                window_stat_unchecked(path, i, m, WindowStat::Max, self.prefactor) - k
            }
            OptionKind::LookbackFloating => {
                path[i] - window_stat_unchecked(path, i, m, WindowStat::Min, self.prefactor)
            }
        };
        v.max(0.0)
    }
}

pub fn exercise_value(spec: &OptionSpec, path: &[f64], i: usize) -> Result<f64> {
    spec.exercise_value(path, i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Snowball,
    LockIn,
}

impl CertificateKind {
    pub fn label(self) -> &'static str {
        match self {
            CertificateKind::Snowball => "snowball",
            CertificateKind::LockIn => "lock_in",
        }
    }
}

/// Callable certificate on a single underlying with quarterly payment dates
/// `T_1, ..., T_N`. The path passed to its methods is observed on
/// `T_0, T_1, ..., T_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSpec {
    pub kind: CertificateKind,
    /// Cash flows `c_1, ..., c_N` as fractions of the notional.
    pub coupons: Vec<f64>,
    /// Performance level `K` above which a coupon is paid.
    pub coupon_barrier: f64,
    /// Performance level `H` below which the principal is not fully redeemed.
    pub capital_barrier: f64,
    /// Reference level `s_0` of the performance `P(s) = s / s_0`.
    pub reference: f64,
}

/// Payment dates per year.
pub const COUPONS_PER_YEAR: usize = 4;

impl CertificateSpec {
    /// Certificate paying the same quarterly coupon for `years` years.
    pub fn quarterly(
        kind: CertificateKind,
        years: usize,
        coupon: f64,
        coupon_barrier: f64,
        capital_barrier: f64,
        reference: f64,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            coupons: vec![coupon; years * COUPONS_PER_YEAR],
            coupon_barrier,
            capital_barrier,
            reference,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coupons.is_empty() {
            return Err(Error::Parameter("certificate needs at least one payment date".into()));
        }
        if self.coupons.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::Parameter("coupons must be non-negative".into()));
        }
        if !(self.capital_barrier > 0.0 && self.capital_barrier <= 1.0) {
            return Err(Error::Parameter(format!(
                "capital barrier must lie in (0, 1], got {}",
                self.capital_barrier
            )));
        }
        if !(self.coupon_barrier > 0.0 && self.coupon_barrier.is_finite()) {
            return Err(Error::Parameter("coupon barrier must be positive".into()));
        }
        if !(self.reference > 0.0 && self.reference.is_finite()) {
            return Err(Error::Parameter("reference level must be positive".into()));
        }
        Ok(())
    }

    pub fn n_dates(&self) -> usize {
        self.coupons.len()
    }

    pub fn performance(&self, s: f64) -> f64 {
        s / self.reference
    }

    fn check_path(&self, path: &[f64], i: usize) -> Result<()> {
        let n = self.n_dates();
        if path.len() != n + 1 {
            return Err(Error::Shape {
                expected: n + 1,
                found: path.len(),
            });
        }
        if i == 0 || i > n {
            return Err(Error::OutOfRange { index: i, last: n });
        }
        Ok(())
    }

    /// Coupon `gamma_i` paid on payment date `i` (1-based).
    pub fn coupon(&self, path: &[f64], i: usize) -> Result<f64> {
        self.check_path(path, i)?;
        Ok(self.coupon_stream(path)[i])
    }

    /// All coupons along a path, indexed `0..=N` with a zero at `T_0`.
    pub fn coupon_stream(&self, path: &[f64]) -> Vec<f64> {
        let n = self.n_dates();
        let mut out = vec![0.0; n + 1];
        match self.kind {
            CertificateKind::Snowball => {
                // cash flows accrued since the last date above the barrier
                let mut accrued = 0.0;
                for i in 1..=n {
                    accrued += self.coupons[i - 1];
                    if self.performance(path[i]) > self.coupon_barrier {
                        out[i] = accrued;
                        accrued = 0.0;
                    }
                }
            }
            CertificateKind::LockIn => {
                let mut locked = false;
                for i in 1..=n {
                    locked |= self.performance(path[i]) > self.coupon_barrier;
                    if locked {
                        out[i] = self.coupons[i - 1];
                    }
                }
            }
        }
        out
    }

    /// Principal redeemed on date `i`: the full notional before maturity, and
    /// `phi(S_T, H)` at maturity.
    pub fn redemption(&self, path: &[f64], i: usize) -> Result<f64> {
        self.check_path(path, i)?;
        Ok(self.redemption_unchecked(path, i))
    }

    #[inline]
    pub(crate) fn redemption_unchecked(&self, path: &[f64], i: usize) -> f64 {
        if i < self.n_dates() {
            1.0
        } else {
            let p = self.performance(path[i]);
            if p > self.capital_barrier {
                1.0
            } else {
                p
            }
        }
    }
}

pub fn certificate_coupon(spec: &CertificateSpec, path: &[f64], i: usize) -> Result<f64> {
    spec.coupon(path, i)
}

pub fn certificate_redemption(spec: &CertificateSpec, path: &[f64], i: usize) -> Result<f64> {
    spec.redemption(path, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_statistics() {
        let s = [100.0, 110.0, 120.0];
        assert_eq!(window_stat(&s, 2, 2, WindowStat::Avg).unwrap(), 115.0);
        assert_eq!(window_stat(&s, 2, 2, WindowStat::Max).unwrap(), 60.0);
        assert_eq!(window_stat(&s, 2, 2, WindowStat::Min).unwrap(), 55.0);
        assert_eq!(
            window_stat_with(&s, 2, 2, WindowStat::Max, ExtremaPrefactor::Plain).unwrap(),
            120.0
        );
        for i in 0..3 {
            for stat in [WindowStat::Avg, WindowStat::Min, WindowStat::Max] {
                assert_eq!(window_stat(&s, i, 1, stat).unwrap(), s[i]);
            }
        }
        assert!(matches!(
            window_stat(&s, 1, 3, WindowStat::Avg),
            Err(Error::WindowUnderflow { index: 1, window: 3 })
        ));
    }

    #[test]
    fn option_payoffs() {
        let put = OptionSpec::new(OptionKind::AsianFixed, 2, Some(100.0)).unwrap();
        assert_eq!(put.exercise_value(&[100.0, 90.0, 80.0], 2).unwrap(), 15.0);

        let float = OptionSpec::new(OptionKind::AsianFloating, 1, None).unwrap();
        let lb = OptionSpec::new(OptionKind::LookbackFloating, 1, None).unwrap();
        let path = [100.0, 93.0, 117.0, 101.0];
        for i in 0..4 {
            assert_eq!(float.exercise_value(&path, i).unwrap(), 0.0);
            assert_eq!(lb.exercise_value(&path, i).unwrap(), 0.0);
        }
        assert!(put.exercise_value(&path, 0).is_err());
        assert!(OptionSpec::new(OptionKind::LookbackFixed, 3, None).is_err());
        assert!(OptionSpec::new(OptionKind::AsianFixed, 3, Some(-1.0)).is_err());
    }

    #[test]
    fn snowball_accumulates_missed_coupons() {
        let spec =
            CertificateSpec::quarterly(CertificateKind::Snowball, 1, 0.023, 1.0, 0.35, 100.0)
                .unwrap();
        let path = [100.0, 95.0, 90.0, 99.0, 104.0];
        for i in 1..=3 {
            assert_eq!(spec.coupon(&path, i).unwrap(), 0.0);
        }
        assert!((spec.coupon(&path, 4).unwrap() - 0.092).abs() < 1e-15);

        let up = [100.0, 101.0, 102.0, 103.0, 104.0];
        for i in 1..=4 {
            assert_eq!(spec.coupon(&up, i).unwrap(), 0.023);
        }
    }

    #[test]
    fn lock_in_pays_after_first_crossing() {
        let spec =
            CertificateSpec::quarterly(CertificateKind::LockIn, 1, 0.028, 1.0, 0.40, 100.0)
                .unwrap();
        let path = [100.0, 105.0, 80.0, 70.0, 60.0];
        for i in 1..=4 {
            assert_eq!(spec.coupon(&path, i).unwrap(), 0.028);
        }
        let never = [100.0, 99.0, 80.0, 70.0, 60.0];
        assert!(spec.coupon_stream(&never).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn redemption_at_and_before_maturity() {
        let spec =
            CertificateSpec::quarterly(CertificateKind::Snowball, 1, 0.023, 1.0, 0.35, 100.0)
                .unwrap();
        let high = [100.0, 90.0, 80.0, 100.0, 120.0];
        let low = [100.0, 90.0, 80.0, 40.0, 25.0];
        assert_eq!(spec.redemption(&low, 2).unwrap(), 1.0);
        assert_eq!(spec.redemption(&high, 4).unwrap(), 1.0);
        assert!((spec.redemption(&low, 4).unwrap() - 0.25).abs() < 1e-15);
        assert!(spec.redemption(&low, 0).is_err());
        assert!(spec.redemption(&low, 5).is_err());
    }

    fn path_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(50.0f64..150.0, len)
    }

    proptest! {
        #[test]
        fn floating_payoffs_are_homogeneous(path in path_strategy(12), lambda in 0.2f64..5.0, m in 1usize..6) {
            for kind in [OptionKind::AsianFloating, OptionKind::LookbackFloating] {
                let spec = OptionSpec::new(kind, m, None).unwrap();
                let scaled: Vec<f64> = path.iter().map(|s| s * lambda).collect();
                for i in m - 1..path.len() {
                    let a = spec.exercise_value(&path, i).unwrap();
                    let b = spec.exercise_value(&scaled, i).unwrap();
                    prop_assert!(a >= 0.0);
                    prop_assert!((b - lambda * a).abs() <= 1e-9 * (1.0 + b.abs()));
                }
            }
        }

        #[test]
        fn fixed_strike_monotonicity(path in path_strategy(10), bump in 0.0f64..20.0, m in 1usize..5, j in 0usize..10) {
            let put = OptionSpec::new(OptionKind::AsianFixed, m, Some(100.0)).unwrap();
            let call = OptionSpec::new(OptionKind::LookbackFixed, m, Some(100.0)).unwrap();
            let mut bumped = path.clone();
            bumped[j] += bump;
            for i in m - 1..path.len() {
                prop_assert!(put.exercise_value(&bumped, i).unwrap() <= put.exercise_value(&path, i).unwrap() + 1e-12);
                prop_assert!(call.exercise_value(&bumped, i).unwrap() >= call.exercise_value(&path, i).unwrap() - 1e-12);
            }
        }

        #[test]
        fn snowball_never_pays_more_than_accrued(path in path_strategy(9)) {
            let spec = CertificateSpec::quarterly(CertificateKind::Snowball, 2, 0.02, 1.0, 0.3, 100.0).unwrap();
            let coupons = spec.coupon_stream(&path);
            let mut paid = 0.0;
            for i in 1..=8 {
                paid += coupons[i];
                let accrued = 0.02 * i as f64;
                prop_assert!(paid <= accrued + 1e-12);
                let above = spec.performance(path[i]) > 1.0;
                prop_assert_eq!(above, (paid - accrued).abs() < 1e-12);
            }
        }
    }
}
