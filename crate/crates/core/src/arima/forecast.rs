use super::poly::{integrate_ar, psi_weights};
use super::{ArimaError, ArimaModel, Result};
use crate::timeseries::{check_finite, TimeSeries};

/// Longest horizon accepted by [`forecast`].
pub const MAX_HORIZON: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub horizon: usize,
    /// Point forecasts on the original (undifferenced) scale.
    pub points: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Index of the last observed value in the history.
    pub origin_index: usize,
}

/// Running filter state for one model over a growing history. Appending a
/// value costs `O(p + q + d)`, so a stream never has to re-filter its past.
#[derive(Debug, Clone)]
pub struct ArimaState {
    model: ArimaModel,
    /// Last value seen at each differencing level `0..d`.
    level_last: Vec<f64>,
    /// Centred differenced values.
    z: Vec<f64>,
    /// One-step innovations aligned with `z`.
    u: Vec<f64>,
    observed: usize,
}

impl ArimaState {
    pub fn new(model: ArimaModel) -> Self {
        let d = model.d();
        Self {
            model,
            level_last: Vec::with_capacity(d),
            z: Vec::new(),
            u: Vec::new(),
            observed: 0,
        }
    }

    pub fn with_history(model: ArimaModel, history: &[f64]) -> Result<Self> {
        check_finite(history)?;
        let mut state = Self::new(model);
        for &x in history {
            state.push(x);
        }
        Ok(state)
    }

    pub fn model(&self) -> &ArimaModel {
        &self.model
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    /// In-sample innovations so far (one per differenced value).
    pub fn innovations(&self) -> &[f64] {
        &self.u
    }

    fn one_step_prediction(&self) -> f64 {
        let t = self.z.len();
        let ar: f64 = self
            .model
            .phi()
            .iter()
            .enumerate()
            .take(t)
            .map(|(i, c)| c * self.z[t - 1 - i])
            .sum();
        let ma: f64 = self
            .model
            .theta()
            .iter()
            .enumerate()
            .take(t)
            .map(|(j, c)| c * self.u[t - 1 - j])
            .sum();
        ar + ma
    }

    pub fn push(&mut self, x: f64) {
        self.observed += 1;
        let d = self.model.d();
        let mut cur = x;
        for k in 0..d {
            if k >= self.level_last.len() {
                self.level_last.push(cur);
                return;
            }
            let prev = self.level_last[k];
            self.level_last[k] = cur;
            cur -= prev;
        }
        let z = cur - self.model.mean();
        let u = z - self.one_step_prediction();
        self.z.push(z);
        self.u.push(u);
    }

    pub fn forecast(&self, h: usize) -> Result<Forecast> {
        if h == 0 {
            return Err(ArimaError::InvalidHorizon(h));
        }
        let model = &self.model;
        let (p, q, d) = (model.p(), model.q(), model.d());
        let needed = (p.max(q) + d).max(d + 1);
        if self.observed < needed {
            return Err(ArimaError::InsufficientHistory {
                needed,
                got: self.observed,
            });
        }
        let n = self.z.len();
        let mut zf: Vec<f64> = Vec::with_capacity(h);
        for k in 1..=h {
            let mut v = 0.0;
            for (i, c) in model.phi().iter().enumerate() {
                let lag = i + 1;
                v += c * if lag < k {
                    zf[k - 1 - lag]
                } else {
                    (n + k - 1).checked_sub(lag).map_or(0.0, |idx| self.z[idx])
                };
            }
            for (j, c) in model.theta().iter().enumerate().skip(k - 1) {
                if let Some(idx) = (n + k - 1).checked_sub(j + 1) {
                    v += c * self.u[idx];
                }
            }
            zf.push(v);
        }
        // Back to the differenced scale, then integrate d times.
        let mut path: Vec<f64> = zf.iter().map(|v| v + model.mean()).collect();
        for k in (0..d).rev() {
            let mut acc = self.level_last[k];
            for v in path.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        let phi_star = integrate_ar(model.phi(), d);
        let psi = psi_weights(&phi_star, model.theta(), h);
        let mut cumulative = 0.0;
        let std_errors = psi
            .iter()
            .map(|w| {
                cumulative += w * w;
                (model.sigma2() * cumulative).sqrt()
            })
            .collect();
        Ok(Forecast {
            horizon: h,
            points: path,
            std_errors,
            origin_index: self.observed - 1,
        })
    }
}

/// h-step forecast from the end of `history`, `1 <= h <= MAX_HORIZON`.
pub fn forecast(model: &ArimaModel, history: &TimeSeries, h: usize) -> Result<Forecast> {
    if h > MAX_HORIZON {
        return Err(ArimaError::HorizonTooLarge {
            h,
            max: MAX_HORIZON,
        });
    }
    ArimaState::with_history(model.clone(), history.values())?.forecast(h)
}
