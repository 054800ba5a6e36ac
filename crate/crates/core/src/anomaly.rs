//! Confidence-interval testing of incoming readings and forecast substitution.
//!
//! Each node carries a [`NodeStreamState`]. A reading is compared with the
//! interval `μ ± z·σ` of the k-step forecast from the last accepted value,
//! where k counts the current run of anomalies. Rejected and missing readings
//! are replaced by the forecast point. A run reaching [`MAX_FORECAST_STEPS`]
//! triggers a refit and raises the node's fault flag.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::arima::{select_model, ArimaError, ArimaModel, ArimaState, Forecast, SelectionBounds};
use crate::timeseries::TimeSeries;

/// Longest run of consecutive substitutions before the model is refitted.
pub const MAX_FORECAST_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnomalyError {
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("standard error must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("percentage error is undefined for an actual value of zero")]
    DivisionByZero,
    #[error("node has no fitted model")]
    ModelMissing,
    #[error("forecast failed: {0}")]
    Forecast(ArimaError),
    #[error("refit after an anomaly run failed: {0}")]
    RefitFailed(ArimaError),
    #[error("initial fit failed: {0}")]
    TrainingFailed(ArimaError),
}

pub type Result<T> = std::result::Result<T, AnomalyError>;

/// Two-sided critical value of the standard normal for `level`.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(AnomalyError::InvalidLevel(level));
    }
    Ok(Normal::standard().inverse_cdf((1.0 + level) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub z: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn confidence_interval(mu: f64, sigma: f64, level: f64) -> Result<ConfidenceInterval> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(AnomalyError::InvalidSigma(sigma));
    }
    let z = z_value(level)?;
    Ok(ConfidenceInterval {
        lower: mu - z * sigma,
        upper: mu + z * sigma,
        level,
        z,
    })
}

/// `100 · |actual − forecast| / |actual|`.
pub fn error_percent(actual: f64, forecast: f64) -> Result<f64> {
    if actual == 0.0 {
        return Err(AnomalyError::DivisionByZero);
    }
    Ok(100.0 * (actual - forecast).abs() / actual.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Accepted,
    Rejected,
    SubstitutedMissing,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accepted => "accepted",
            Decision::Rejected => "rejected",
            Decision::SubstitutedMissing => "substituted_missing",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    /// Position of the reading on the node's sampling grid.
    pub index: usize,
    pub observed: Option<f64>,
    pub interval: ConfidenceInterval,
    pub decision: Decision,
    pub replacement: Option<f64>,
    pub forecast_step: usize,
}

impl Verdict {
    /// The value that goes into the cleaned stream.
    pub fn output_value(&self) -> f64 {
        match (self.replacement, self.observed) {
            (Some(r), _) => r,
            (None, Some(o)) => o,
            (None, None) => unreachable!("a missing reading always carries a replacement"),
        }
    }

    pub fn at(mut self, index: usize, forecast_step: usize) -> Self {
        self.index = index;
        self.forecast_step = forecast_step;
        self
    }
}

/// Accepts `observed` iff it lies inside `interval`; otherwise, or when the
/// reading is missing, substitutes `forecast_point`. The returned verdict has
/// index 0 and step 1 until placed with [`Verdict::at`].
pub fn test_reading(
    observed: Option<f64>,
    interval: &ConfidenceInterval,
    forecast_point: f64,
) -> Verdict {
    let (decision, replacement) = match observed {
        Some(x) if x.is_finite() && interval.contains(x) => (Decision::Accepted, None),
        Some(_) => (Decision::Rejected, Some(forecast_point)),
        None => (Decision::SubstitutedMissing, Some(forecast_point)),
    };
    Verdict {
        index: 0,
        observed,
        interval: *interval,
        decision,
        replacement,
        forecast_step: 1,
    }
}

/// What the model is refitted on once an anomaly run hits the step cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefitPolicy {
    /// The full history, substituted forecasts included.
    #[default]
    IncludeSubstituted,
    /// The history up to the start of the anomaly run.
    ExcludeAnomalousRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub level: f64,
    pub bounds: SelectionBounds,
    pub refit_policy: RefitPolicy,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            bounds: SelectionBounds::default(),
            refit_policy: RefitPolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeStreamState {
    node_id: u32,
    filter: Option<ArimaState>,
    history: Vec<f64>,
    consecutive_anomalies: usize,
    fault_flagged: bool,
    refits: usize,
    config: StreamConfig,
    /// Forecast from the last accepted origin, reused through an anomaly run.
    pending: Option<Forecast>,
}

impl NodeStreamState {
    /// A node without a model; [`process_reading`](Self::process_reading)
    /// fails with `ModelMissing` until one is installed.
    pub fn untrained(node_id: u32, config: StreamConfig) -> Result<Self> {
        z_value(config.level)?;
        Ok(Self {
            node_id,
            filter: None,
            history: Vec::new(),
            consecutive_anomalies: 0,
            fault_flagged: false,
            refits: 0,
            config,
            pending: None,
        })
    }

    pub fn with_model(
        node_id: u32,
        model: ArimaModel,
        history: Vec<f64>,
        config: StreamConfig,
    ) -> Result<Self> {
        let mut state = Self::untrained(node_id, config)?;
        state.filter =
            Some(ArimaState::with_history(model, &history).map_err(AnomalyError::Forecast)?);
        state.history = history;
        Ok(state)
    }

    /// Selects a model on `training` and starts the stream right after it.
    pub fn train(node_id: u32, training: &TimeSeries, config: StreamConfig) -> Result<Self> {
        let selection =
            select_model(training, &config.bounds).map_err(AnomalyError::TrainingFailed)?;
        Self::with_model(node_id, selection.model, training.values().to_vec(), config)
    }

    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    pub fn model(&self) -> Option<&ArimaModel> {
        self.filter.as_ref().map(|f| f.model())
    }

    /// Accepted and corrected values, training prefix included.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn consecutive_anomalies(&self) -> usize {
        self.consecutive_anomalies
    }

    pub fn fault_flagged(&self) -> bool {
        self.fault_flagged
    }

    pub fn clear_fault(&mut self) {
        self.fault_flagged = false;
    }

    pub fn refits(&self) -> usize {
        self.refits
    }

    pub fn level(&self) -> f64 {
        self.config.level
    }

    /// Tests the next grid slot's reading and appends the accepted or
    /// substituted value. On error the state is left untouched.
    pub fn process_reading(&mut self, observed: Option<f64>) -> Result<Verdict> {
        let filter = self.filter.as_ref().ok_or(AnomalyError::ModelMissing)?;
        let step = self.consecutive_anomalies + 1;
        let forecast = match &self.pending {
            Some(f) if step <= f.horizon => f.clone(),
            _ => filter
                .forecast(MAX_FORECAST_STEPS)
                .map_err(AnomalyError::Forecast)?,
        };
        let mu = forecast.points[step - 1];
        let interval = confidence_interval(mu, forecast.std_errors[step - 1], self.config.level)?;
        let verdict = test_reading(observed, &interval, mu).at(self.history.len(), step);
        let value = verdict.output_value();

        if verdict.decision == Decision::Accepted {
            self.append(value);
            self.consecutive_anomalies = 0;
            self.pending = None;
            return Ok(verdict);
        }

        if step == MAX_FORECAST_STEPS {
            let mut history = self.history.clone();
            history.push(value);
            let fit_on = match self.config.refit_policy {
                RefitPolicy::IncludeSubstituted => &history[..],
                RefitPolicy::ExcludeAnomalousRun => &history[..history.len() - MAX_FORECAST_STEPS],
            };
            let series = TimeSeries::from_values(fit_on.to_vec())
                .map_err(|e| AnomalyError::RefitFailed(e.into()))?;
            let model = select_model(&series, &self.config.bounds)
                .map_err(AnomalyError::RefitFailed)?
                .model;
            let filter =
                ArimaState::with_history(model, &history).map_err(AnomalyError::RefitFailed)?;
            self.filter = Some(filter);
            self.history = history;
            self.consecutive_anomalies = 0;
            self.pending = None;
            self.fault_flagged = true;
            self.refits += 1;
        } else {
            self.append(value);
            self.consecutive_anomalies = step;
            self.pending = Some(forecast);
        }
        Ok(verdict)
    }

    fn append(&mut self, value: f64) {
        self.history.push(value);
        if let Some(f) = self.filter.as_mut() {
            f.push(value);
        }
    }
}
