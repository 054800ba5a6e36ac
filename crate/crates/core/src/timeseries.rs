//! Equally spaced series, differencing and autocorrelation diagnostics.
//!
//! Everything here is a pure function of its inputs. The correlogram uses the
//! biased (divide-by-n) autocovariance so that every coefficient lies in
//! `[-1, 1]` and the implied Toeplitz matrix is positive semi-definite.

use thiserror::Error;

/// Default upper bound on the differencing order.
pub const DEFAULT_D_MAX: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeSeriesError {
    #[error("series contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("sampling interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("series too short: need more than {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("differencing order {d} exceeds the maximum {d_max}")]
    OrderTooHigh { d: usize, d_max: usize },
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("lag {lag} is out of range for a series of length {n}")]
    LagTooLarge { lag: usize, n: usize },
    #[error("Toeplitz system is singular at order {0}")]
    NumericalSingularity(usize),
    #[error("series is not stationary after {d_max} differences")]
    NotStationarizable { d_max: usize },
}

pub type Result<T> = std::result::Result<T, TimeSeriesError>;

/// An equally spaced sequence of finite values. Sample `i` sits at
/// `origin + i * interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    interval: f64,
    origin: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, interval: f64, origin: f64) -> Result<Self> {
        if !(interval.is_finite() && interval > 0.0) {
            return Err(TimeSeriesError::InvalidInterval(interval));
        }
        check_finite(&values)?;
        Ok(Self {
            values,
            interval,
            origin,
        })
    }

    /// Unit interval, origin zero.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1.0, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.origin + index as f64 * self.interval
    }

    /// Copy of samples `start..=end` sharing this series' grid.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries {
            values: self.values[start..=end].to_vec(),
            interval: self.interval,
            origin: self.time_at(start),
        }
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(TimeSeriesError::NonFinite(i)),
        None => Ok(()),
    }
}

/// A series differenced `d` times, together with what is needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedSeries {
    base: TimeSeries,
    d: usize,
    values: Vec<f64>,
    /// First value of each intermediate level: `[x_0, Δx_0, …, Δ^{d-1}x_0]`.
    heads: Vec<f64>,
}

impl DifferencedSeries {
    pub fn base(&self) -> &TimeSeries {
        &self.base
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn heads(&self) -> &[f64] {
        &self.heads
    }

    /// Rebuild the original values by repeated cumulative summation.
    pub fn undifference(&self) -> Vec<f64> {
        integrate(&self.values, &self.heads)
    }
}

/// One step of forward differencing.
pub fn diff_once(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Inverse of repeated differencing: `heads[k]` is the first element of the
/// level-`k` series.
pub fn integrate(values: &[f64], heads: &[f64]) -> Vec<f64> {
    let mut current = values.to_vec();
    for &head in heads.iter().rev() {
        let mut next = Vec::with_capacity(current.len() + 1);
        let mut acc = head;
        next.push(acc);
        for v in &current {
            acc += v;
            next.push(acc);
        }
        current = next;
    }
    current
}

/// `d`-th order difference with the default cap of [`DEFAULT_D_MAX`].
pub fn difference(series: &TimeSeries, d: usize) -> Result<DifferencedSeries> {
    difference_capped(series, d, DEFAULT_D_MAX)
}

pub fn difference_capped(series: &TimeSeries, d: usize, d_max: usize) -> Result<DifferencedSeries> {
    if d > d_max {
        return Err(TimeSeriesError::OrderTooHigh { d, d_max });
    }
    if series.len() <= d + 1 {
        return Err(TimeSeriesError::SeriesTooShort {
            needed: d + 1,
            got: series.len(),
        });
    }
    let mut heads = Vec::with_capacity(d);
    let mut values = series.values.clone();
    for _ in 0..d {
        heads.push(values[0]);
        values = diff_once(&values);
    }
    Ok(DifferencedSeries {
        base: series.clone(),
        d,
        values,
        heads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelogramKind {
    Acf,
    Pacf,
}

/// Coefficients indexed by lag, `coefficients[0]` being lag 0 (always 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelogramResult {
    pub kind: CorrelogramKind,
    pub max_lag: usize,
    pub coefficients: Vec<f64>,
    pub n: usize,
    /// Approximate 95% significance half-width, `2 / sqrt(n)`.
    pub band: f64,
}

impl CorrelogramResult {
    pub fn at(&self, lag: usize) -> f64 {
        self.coefficients[lag]
    }

    /// Fraction of lags `1..=max_lag` whose coefficient lies inside the band.
    pub fn fraction_inside_band(&self) -> f64 {
        let inside = self.coefficients[1..]
            .iter()
            .filter(|c| c.abs() <= self.band)
            .count();
        inside as f64 / self.max_lag as f64
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Biased sample autocovariances `γ_0..=γ_max_lag` around the sample mean.
pub fn autocovariances(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let m = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    (0..=max_lag)
        .map(|k| {
            let s: f64 = centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum();
            s / n as f64
        })
        .collect()
}

fn validate_lags(values: &[f64], max_lag: usize) -> Result<()> {
    check_finite(values)?;
    let n = values.len();
    if n < 2 {
        return Err(TimeSeriesError::SeriesTooShort { needed: 1, got: n });
    }
    if max_lag == 0 || max_lag >= n {
        return Err(TimeSeriesError::LagTooLarge { lag: max_lag, n });
    }
    Ok(())
}

fn normalized_autocorrelation(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let gamma = autocovariances(values, max_lag);
    if gamma[0] <= 0.0 {
        return Err(TimeSeriesError::DegenerateSeries);
    }
    let mut rho: Vec<f64> = gamma.iter().map(|g| g / gamma[0]).collect();
    rho[0] = 1.0;
    Ok(rho)
}

pub fn acf(values: &[f64], max_lag: usize) -> Result<CorrelogramResult> {
    validate_lags(values, max_lag)?;
    let coefficients = normalized_autocorrelation(values, max_lag)?;
    Ok(CorrelogramResult {
        kind: CorrelogramKind::Acf,
        max_lag,
        coefficients,
        n: values.len(),
        band: 2.0 / (values.len() as f64).sqrt(),
    })
}

/// Output of the Levinson-Durbin recursion up to some order.
#[derive(Debug, Clone, PartialEq)]
pub struct LevinsonDurbin {
    /// `phi[k]` is the order-k Yule-Walker coefficient vector (length k).
    pub phi: Vec<Vec<f64>>,
    /// Partial autocorrelations, `reflection[k-1]` at order k.
    pub reflection: Vec<f64>,
    /// One-step prediction error variance at each order, starting at order 0.
    pub error_variance: Vec<f64>,
}

/// Solves the Yule-Walker equations for orders `1..=order` on the given
/// autocovariances `gamma[0..=order]`.
pub fn levinson_durbin(gamma: &[f64], order: usize) -> Result<LevinsonDurbin> {
    debug_assert!(gamma.len() > order);
    let mut phi: Vec<Vec<f64>> = vec![Vec::new()];
    let mut reflection = Vec::with_capacity(order);
    let mut error_variance = vec![gamma[0]];
    if gamma[0] <= 0.0 {
        return Err(TimeSeriesError::DegenerateSeries);
    }
    for k in 1..=order {
        let prev = &phi[k - 1];
        let v = error_variance[k - 1];
        if v <= gamma[0] * 1e-14 {
            return Err(TimeSeriesError::NumericalSingularity(k));
        }
        let acc: f64 = prev
            .iter()
            .enumerate()
            .map(|(j, p)| p * gamma[k - 1 - j])
            .sum();
        let kappa = (gamma[k] - acc) / v;
        let mut next = Vec::with_capacity(k);
        for j in 0..k - 1 {
            next.push(prev[j] - kappa * prev[k - 2 - j]);
        }
        next.push(kappa);
        reflection.push(kappa);
        error_variance.push(v * (1.0 - kappa * kappa));
        phi.push(next);
    }
    Ok(LevinsonDurbin {
        phi,
        reflection,
        error_variance,
    })
}

pub fn pacf(values: &[f64], max_lag: usize) -> Result<CorrelogramResult> {
    validate_lags(values, max_lag)?;
    let gamma = autocovariances(values, max_lag);
    let ld = levinson_durbin(&gamma, max_lag)?;
    let mut coefficients = Vec::with_capacity(max_lag + 1);
    coefficients.push(1.0);
    coefficients.extend(ld.reflection);
    Ok(CorrelogramResult {
        kind: CorrelogramKind::Pacf,
        max_lag,
        coefficients,
        n: values.len(),
        band: 2.0 / (values.len() as f64).sqrt(),
    })
}

/// Quantitative stand-in for reading an ACF plot: a series counts as
/// stationary when its autocorrelation has dropped below `threshold` by lag
/// `window_start` and stays there through `inspected_lags`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityConfig {
    pub threshold: f64,
    pub window_start: usize,
    pub inspected_lags: usize,
}

impl Default for StationarityConfig {
    fn default() -> Self {
        Self {
            threshold: 0.4,
            window_start: 20,
            inspected_lags: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub stationary: bool,
    /// First lag from which `|ACF|` stays below the threshold up to the last
    /// inspected lag.
    pub decay_lag: Option<usize>,
    pub threshold: f64,
    pub window_start: usize,
    pub inspected_lags: usize,
}

pub fn assess_stationarity(
    values: &[f64],
    config: &StationarityConfig,
) -> Result<StationarityReport> {
    let n = values.len();
    let inspected = config.inspected_lags.min(n.saturating_sub(1)).max(1);
    let window_start = config.window_start.min(inspected).max(1);
    let correlogram = acf(values, inspected)?;
    let mut decay_lag = None;
    for k in (1..=inspected).rev() {
        if correlogram.at(k).abs() < config.threshold {
            decay_lag = Some(k);
        } else {
            break;
        }
    }
    Ok(StationarityReport {
        stationary: matches!(decay_lag, Some(k) if k <= window_start),
        decay_lag,
        threshold: config.threshold,
        window_start,
        inspected_lags: inspected,
    })
}

/// Smallest `d <= d_max` after which the series passes the stationarity check.
pub fn select_d(series: &TimeSeries, d_max: usize, config: &StationarityConfig) -> Result<usize> {
    for d in 0..=d_max {
        let differenced = difference_capped(series, d, d_max)?;
        if assess_stationarity(differenced.values(), config)?.stationary {
            return Ok(d);
        }
    }
    Err(TimeSeriesError::NotStationarizable { d_max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagPlot {
    pub lag: usize,
    pub pairs: Vec<(f64, f64)>,
    /// Pearson correlation of the pairs.
    pub correlation: f64,
}

pub fn lag_plot_pairs(values: &[f64], lag: usize) -> Result<LagPlot> {
    check_finite(values)?;
    let n = values.len();
    if lag == 0 || n <= lag + 1 {
        return Err(TimeSeriesError::LagTooLarge { lag, n });
    }
    let pairs: Vec<(f64, f64)> = values[..n - lag]
        .iter()
        .copied()
        .zip(values[lag..].iter().copied())
        .collect();
    let correlation = pearson(&pairs).ok_or(TimeSeriesError::DegenerateSeries)?;
    Ok(LagPlot {
        lag,
        pairs,
        correlation,
    })
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn difference_examples() {
        assert_eq!(
            difference(&ts(&[5., 5., 5., 5.]), 0).unwrap().values(),
            &[5., 5., 5., 5.]
        );
        assert_eq!(
            difference(&ts(&[1., 2., 3., 4.]), 1).unwrap().values(),
            &[1., 1., 1.]
        );
        assert_eq!(
            difference(&ts(&[1., 4., 9., 16.]), 2).unwrap().values(),
            &[2., 2.]
        );
    }

    #[test]
    fn difference_errors() {
        assert_eq!(
            difference(&ts(&[1., 2., 3., 4.]), 3).unwrap_err(),
            TimeSeriesError::OrderTooHigh { d: 3, d_max: 2 }
        );
        assert!(matches!(
            difference(&ts(&[1., 2.]), 1).unwrap_err(),
            TimeSeriesError::SeriesTooShort { .. }
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            TimeSeries::from_values(vec![1.0, f64::NAN]).unwrap_err(),
            TimeSeriesError::NonFinite(1)
        );
        assert!(TimeSeries::new(vec![1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn acf_small_examples() {
        let r = acf(&[1., 2., 3., 4.], 1).unwrap();
        assert_eq!(r.at(0), 1.0);
        assert!((r.at(1) - 0.25).abs() < 1e-15);
        let alt: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        // Direct evaluation: mean 0, lag-1 sum -99, denominator 100.
        assert!((acf(&alt, 1).unwrap().at(1) + 0.99).abs() < 1e-15);
    }

    #[test]
    fn acf_errors() {
        assert_eq!(
            acf(&[3., 3., 3.], 1).unwrap_err(),
            TimeSeriesError::DegenerateSeries
        );
        assert_eq!(
            acf(&[1., 2., 3.], 3).unwrap_err(),
            TimeSeriesError::LagTooLarge { lag: 3, n: 3 }
        );
        assert!(pacf(&[1., 2., 3.], 0).is_err());
    }

    #[test]
    fn pacf_lag_one_is_acf_lag_one() {
        let x = [0.3, -1.2, 2.5, 0.1, 0.7, -0.4, 1.9, -2.2];
        assert_eq!(pacf(&x, 3).unwrap().at(1), acf(&x, 3).unwrap().at(1));
    }

    #[test]
    fn levinson_durbin_detects_singularity() {
        // γ of a pure sinusoid-like sequence that makes order 2 perfectly predictable.
        let gamma = [1.0, 1.0, 1.0];
        assert_eq!(
            levinson_durbin(&gamma, 2).unwrap_err(),
            TimeSeriesError::NumericalSingularity(2)
        );
    }

    #[test]
    fn lag_plot_on_a_line() {
        let lp = lag_plot_pairs(&[1., 2., 3., 4., 5.], 1).unwrap();
        assert_eq!(lp.pairs, vec![(1., 2.), (2., 3.), (3., 4.), (4., 5.)]);
        assert!((lp.correlation - 1.0).abs() < 1e-12);
        assert!(lag_plot_pairs(&[1., 2., 3.], 2).is_err());
    }

    #[test]
    fn stationarity_short_series_clamps_window() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 7919) % 13) as f64).collect();
        let r = assess_stationarity(&x, &StationarityConfig::default()).unwrap();
        assert_eq!(r.inspected_lags, 29);
    }

    #[test]
    fn select_d_forced_failure() {
        let walk: Vec<f64> = (0..500)
            .map(|i| i as f64 * 0.5 + ((i * 31) % 7) as f64)
            .collect();
        assert_eq!(
            select_d(&ts(&walk), 0, &StationarityConfig::default()).unwrap_err(),
            TimeSeriesError::NotStationarizable { d_max: 0 }
        );
    }

    #[test]
    fn slice_keeps_grid() {
        let s = TimeSeries::new(vec![1., 2., 3., 4.], 2.0, 10.0).unwrap();
        let sub = s.slice(1, 2);
        assert_eq!(sub.values(), &[2., 3.]);
        assert_eq!(sub.origin(), 12.0);
        assert_eq!(sub.interval(), 2.0);
    }
}
