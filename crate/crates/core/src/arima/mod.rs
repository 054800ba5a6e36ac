//! ARIMA estimation, AIC order selection and forecasting.
//!
//! Orders are chosen in two stages: first the AR order by AIC over
//! Yule-Walker fits, then the MA order by AIC over innovations-algorithm fits
//! to the residuals of the chosen AR model.

mod document;
mod estimate;
mod forecast;
pub mod poly;

pub use document::{ModelDocument, DOCUMENT_FORMAT, DOCUMENT_VERSION};
pub use estimate::{fit_ar, fit_ma_on_residuals, ArFit, MaFit, Residuals};
pub use forecast::{forecast, ArimaState, Forecast, MAX_HORIZON};

use thiserror::Error;

use crate::timeseries::{
    self, acf, autocovariances, difference_capped, levinson_durbin, mean, StationarityConfig,
    TimeSeries, TimeSeriesError, DEFAULT_D_MAX,
};
use estimate::{ar_residuals, fit_ma_with, innovations_depth, Innovations};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArimaError {
    #[error(transparent)]
    Series(#[from] TimeSeriesError),
    #[error("innovation variance must be positive, got {0}")]
    DegenerateVariance(f64),
    #[error("innovations recursion broke down at step {0}")]
    NonConvergence(usize),
    #[error("no candidate order could be fitted")]
    AllFitsFailed,
    #[error("forecast horizon {h} exceeds the maximum {max}")]
    HorizonTooLarge { h: usize, max: usize },
    #[error("forecast horizon must be at least 1, got {0}")]
    InvalidHorizon(usize),
    #[error("history too short to forecast: need {needed} values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, ArimaError>;

/// `n ln(σ²) + 2k`.
pub fn aic(sigma2: f64, n: usize, k_params: usize) -> Result<f64> {
    if sigma2.is_nan() || sigma2 <= 0.0 || n == 0 {
        return Err(ArimaError::DegenerateVariance(sigma2));
    }
    Ok(n as f64 * sigma2.ln() + 2.0 * k_params as f64)
}

/// A fitted ARIMA(p, d, q) model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    d: usize,
    phi: Vec<f64>,
    theta: Vec<f64>,
    mean: f64,
    sigma2: f64,
    aic: f64,
    n_train: usize,
}

impl ArimaModel {
    /// Builds a model and computes its AIC from `sigma2` over `n_train`
    /// samples. A zero `sigma2` yields an AIC of negative infinity.
    pub fn new(
        d: usize,
        phi: Vec<f64>,
        theta: Vec<f64>,
        mean: f64,
        sigma2: f64,
        n_train: usize,
    ) -> Result<Self> {
        let k = phi.len() + theta.len() + 1;
        let aic = if sigma2 > 0.0 {
            aic(sigma2, n_train.max(1), k)?
        } else {
            f64::NEG_INFINITY
        };
        Self::with_aic(d, phi, theta, mean, sigma2, aic, n_train)
    }

    pub fn with_aic(
        d: usize,
        phi: Vec<f64>,
        theta: Vec<f64>,
        mean: f64,
        sigma2: f64,
        aic: f64,
        n_train: usize,
    ) -> Result<Self> {
        let bad = |msg: String| Err(ArimaError::InvalidModel(msg));
        if phi.iter().chain(&theta).any(|c| !c.is_finite()) || !mean.is_finite() {
            return bad("coefficients and mean must be finite".into());
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return bad(format!(
                "sigma2 must be finite and non-negative, got {sigma2}"
            ));
        }
        if n_train <= phi.len() + theta.len() + 1 {
            return bad(format!(
                "n_train {n_train} must exceed p + q + 1 = {}",
                phi.len() + theta.len() + 1
            ));
        }
        if !poly::ar_is_stationary(&phi) {
            return bad(format!(
                "AR coefficients {phi:?} are outside the stationary region"
            ));
        }
        Ok(Self {
            d,
            phi,
            theta,
            mean,
            sigma2,
            aic,
            n_train,
        })
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }

    pub fn order(&self) -> (usize, usize, usize) {
        (self.p(), self.d, self.q())
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn aic(&self) -> f64 {
        self.aic
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// One-step in-sample innovations over `series`, skipping the first `p`
    /// differenced values as burn-in.
    pub fn residuals(&self, series: &[f64]) -> Result<Residuals> {
        let state = ArimaState::with_history(self.clone(), series)?;
        let u = state.innovations();
        let burn = self.p().min(u.len());
        Ok(Residuals::new(u[burn..].to_vec()))
    }
}

impl std::fmt::Display for ArimaModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p(), self.d, self.q())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitenessConfig {
    pub lags: usize,
    /// Minimum fraction of lags inside the ±2/√n band to pass.
    pub min_fraction: f64,
}

impl Default for WhitenessConfig {
    fn default() -> Self {
        Self {
            lags: 20,
            min_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    pub lags: usize,
    pub band: f64,
    pub fraction_inside: f64,
    pub pass: bool,
}

fn whiteness(residuals: &Residuals, config: &WhitenessConfig) -> Result<WhitenessReport> {
    let n = residuals.len();
    let lags = config.lags.min(n.saturating_sub(1));
    if lags == 0 {
        return Err(TimeSeriesError::SeriesTooShort { needed: 2, got: n }.into());
    }
    let correlogram = acf(&residuals.values, lags)?;
    let fraction_inside = correlogram.fraction_inside_band();
    Ok(WhitenessReport {
        lags,
        band: correlogram.band,
        fraction_inside,
        pass: fraction_inside >= config.min_fraction,
    })
}

/// Checks that the model's in-sample innovations on `series` look like white
/// noise.
pub fn residual_diagnostics(
    model: &ArimaModel,
    series: &[f64],
    config: &WhitenessConfig,
) -> Result<WhitenessReport> {
    whiteness(&model.residuals(series)?, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionBounds {
    pub p_max: usize,
    pub q_max: usize,
    pub d_max: usize,
    pub min_train: usize,
    pub stationarity: StationarityConfig,
    pub whiteness: WhitenessConfig,
}

impl Default for SelectionBounds {
    fn default() -> Self {
        Self {
            p_max: 15,
            q_max: 35,
            d_max: DEFAULT_D_MAX,
            min_train: 200,
            stationarity: StationarityConfig::default(),
            whiteness: WhitenessConfig::default(),
        }
    }
}

/// AIC of one candidate order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub order: usize,
    pub sigma2: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    pub model: ArimaModel,
    pub residuals: Residuals,
    pub diagnostics: WhitenessReport,
    /// AR-stage candidates, by p.
    pub ar_candidates: Vec<Candidate>,
    /// MA-stage candidates on the chosen AR residuals, by q.
    pub ma_candidates: Vec<Candidate>,
}

/// Lowest AIC wins; ties go to the smaller order. Candidates arrive in
/// increasing order, so a strict comparison keeps the smallest.
fn best(candidates: &[Candidate]) -> Option<Candidate> {
    candidates.iter().copied().fold(None, |acc, c| match acc {
        Some(b) if b.aic <= c.aic => Some(b),
        _ => Some(c),
    })
}

/// Differencing order, then AR order, then MA order, each by its own rule.
pub fn select_model(series: &TimeSeries, bounds: &SelectionBounds) -> Result<ModelSelection> {
    let n_total = series.len();
    if n_total < bounds.min_train.max(3) {
        return Err(TimeSeriesError::SeriesTooShort {
            needed: bounds.min_train.max(3),
            got: n_total,
        }
        .into());
    }
    let d = timeseries::select_d(series, bounds.d_max, &bounds.stationarity)?;
    let differenced = difference_capped(series, d, bounds.d_max)?;
    let z = differenced.values();
    let n = z.len();

    // AR stage: all orders come out of one Levinson-Durbin pass.
    let p_cap = bounds.p_max.min(n.saturating_sub(3));
    let gamma = autocovariances(z, p_cap);
    let mut ar_candidates = Vec::new();
    let mut ld_order = p_cap;
    let ld = loop {
        match levinson_durbin(&gamma, ld_order) {
            Ok(ld) => break ld,
            Err(TimeSeriesError::NumericalSingularity(k)) if k > 1 => ld_order = k - 1,
            Err(_) => return Err(ArimaError::AllFitsFailed),
        }
    };
    for p in 0..=ld_order {
        if let Ok(a) = aic(ld.error_variance[p], n, p + 1) {
            ar_candidates.push(Candidate {
                order: p,
                sigma2: ld.error_variance[p],
                aic: a,
            });
        }
    }
    let p = best(&ar_candidates).ok_or(ArimaError::AllFitsFailed)?.order;
    let phi = ld.phi[p].clone();
    let m = mean(z);
    let centered: Vec<f64> = z.iter().map(|v| v - m).collect();
    let ar_resid = Residuals::new(ar_residuals(&centered, &phi));

    // MA stage on the AR residuals.
    let n_res = ar_resid.len();
    let q_cap = bounds.q_max.min(n_res.saturating_sub(3));
    let resid_mean = mean(&ar_resid.values);
    let resid_centered: Vec<f64> = ar_resid.values.iter().map(|v| v - resid_mean).collect();
    let depth = innovations_depth(q_cap, n_res);
    let table = if q_cap > 0 {
        let g = autocovariances(&ar_resid.values, depth);
        Innovations::run(&g, depth).ok()
    } else {
        None
    };
    let mut ma_candidates = Vec::new();
    let mut ma_fits = Vec::new();
    for q in 0..=q_cap {
        if q > 0 && table.is_none() {
            break;
        }
        let Ok(fit) = fit_ma_with(&resid_centered, table.as_ref(), q) else {
            continue;
        };
        if let Ok(a) = aic(fit.sigma2, n, p + q + 1) {
            ma_candidates.push(Candidate {
                order: q,
                sigma2: fit.sigma2,
                aic: a,
            });
            ma_fits.push(fit);
        }
    }
    let chosen = best(&ma_candidates).ok_or(ArimaError::AllFitsFailed)?;
    let fit = ma_fits
        .into_iter()
        .find(|f| f.theta.len() == chosen.order)
        .ok_or(ArimaError::AllFitsFailed)?;
    let model = ArimaModel::with_aic(d, phi, fit.theta, m, fit.sigma2, chosen.aic, n_total)?;
    let residuals = model.residuals(series.values())?;
    let diagnostics = whiteness(&residuals, &bounds.whiteness)?;
    Ok(ModelSelection {
        model,
        residuals,
        diagnostics,
        ar_candidates,
        ma_candidates,
    })
}
