//! Deterministic synthetic ARMA streams with optional spike injection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::arima::poly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid process spec: {0}")]
    InvalidProcessSpec(String),
}

/// `x_t - mean = Σ φ_i (x_{t-i} - mean) + e_t + Σ θ_j e_{t-j}` with
/// `e_t ~ N(0, sigma²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaProcess {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
}

impl ArmaProcess {
    pub fn new(
        phi: Vec<f64>,
        theta: Vec<f64>,
        mean: f64,
        sigma: f64,
    ) -> Result<Self, SimulationError> {
        if !(sigma.is_finite() && sigma >= 0.0) || !mean.is_finite() {
            return Err(SimulationError::InvalidProcessSpec(format!(
                "mean {mean} and sigma {sigma} must be finite, sigma non-negative"
            )));
        }
        if phi.iter().chain(&theta).any(|c| !c.is_finite()) {
            return Err(SimulationError::InvalidProcessSpec(
                "non-finite coefficient".into(),
            ));
        }
        if !poly::ar_is_stationary(&phi) {
            return Err(SimulationError::InvalidProcessSpec(format!(
                "AR coefficients {phi:?} are not stationary"
            )));
        }
        Ok(Self {
            phi,
            theta,
            mean,
            sigma,
        })
    }

    pub fn white_noise(mean: f64, sigma: f64) -> Self {
        Self {
            phi: Vec::new(),
            theta: Vec::new(),
            mean,
            sigma,
        }
    }

    fn burn_in(&self) -> usize {
        500 + 50 * (self.phi.len() + self.theta.len())
    }

    /// `n` samples from a fixed seed. Output depends only on the process and
    /// the seed.
    pub fn generate(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let burn = self.burn_in();
        let total = n + burn;
        let p = self.phi.len();
        let q = self.theta.len();
        let mut x = vec![0.0; total];
        let mut e = vec![0.0; total];
        for t in 0..total {
            e[t] = normal.sample(&mut rng);
            let mut v = e[t];
            for i in 0..p.min(t) {
                v += self.phi[i] * x[t - 1 - i];
            }
            for j in 0..q.min(t) {
                v += self.theta[j] * e[t - 1 - j];
            }
            x[t] = v;
        }
        x[burn..].iter().map(|v| v + self.mean).collect()
    }
}

/// Random walk `x_t = x_{t-1} + drift + e_t`, starting at zero.
pub fn random_walk(n: usize, drift: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let steps = ArmaProcess::white_noise(drift, sigma).generate(n, seed);
    steps
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub index: usize,
    pub clean: f64,
    pub injected: f64,
}

/// Adds `magnitude` at each index (sign alternating, starting positive).
/// Out-of-range indices are ignored.
pub fn inject_spikes(values: &mut [f64], indices: &[usize], magnitude: f64) -> Vec<Spike> {
    let mut out = Vec::with_capacity(indices.len());
    for (k, &index) in indices.iter().enumerate() {
        if let Some(v) = values.get_mut(index) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let clean = *v;
            *v += sign * magnitude;
            out.push(Spike {
                index,
                clean,
                injected: *v,
            });
        }
    }
    out
}
