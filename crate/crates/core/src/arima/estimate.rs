//! Two-stage estimation: Yule-Walker AR fit, then an innovations-algorithm MA
//! fit on the AR residuals.

use super::poly;
use super::{ArimaError, Result};
use crate::timeseries::{self, autocovariances, levinson_durbin, mean, TimeSeriesError};

/// In-sample one-step innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    /// Biased sample variance (around the residual mean).
    pub variance: f64,
}

impl Residuals {
    pub fn new(values: Vec<f64>) -> Self {
        let variance = if values.is_empty() {
            0.0
        } else {
            let m = mean(&values);
            values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
        };
        Self { values, variance }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn centered(&self) -> Vec<f64> {
        let m = mean(&self.values);
        self.values.iter().map(|v| v - m).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub phi: Vec<f64>,
    pub mean: f64,
    /// Yule-Walker prediction error variance at order p.
    pub innovation_variance: f64,
    pub residuals: Residuals,
}

/// AR(p) residuals `e_t = z_t - Σ φ_i z_{t-i}` for `t >= p` on a centred series.
pub(crate) fn ar_residuals(centered: &[f64], phi: &[f64]) -> Vec<f64> {
    let p = phi.len();
    (p..centered.len())
        .map(|t| {
            let pred: f64 = phi
                .iter()
                .enumerate()
                .map(|(i, c)| c * centered[t - 1 - i])
                .sum();
            centered[t] - pred
        })
        .collect()
}

fn too_short(needed: usize, got: usize) -> ArimaError {
    ArimaError::Series(TimeSeriesError::SeriesTooShort { needed, got })
}

/// Yule-Walker AR(p) fit around the sample mean.
pub fn fit_ar(values: &[f64], p: usize) -> Result<ArFit> {
    timeseries::check_finite(values)?;
    let n = values.len();
    if n <= p + 2 {
        return Err(too_short(p + 2, n));
    }
    let m = mean(values);
    let gamma = autocovariances(values, p);
    let ld = levinson_durbin(&gamma, p)?;
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    let phi = ld.phi[p].clone();
    let residuals = Residuals::new(ar_residuals(&centered, &phi));
    Ok(ArFit {
        phi,
        mean: m,
        innovation_variance: ld.error_variance[p],
        residuals,
    })
}

/// Triangular table of innovations-algorithm coefficients.
#[derive(Debug, Clone)]
pub(crate) struct Innovations {
    /// `rows[m][j-1]` = θ_{m,j}.
    rows: Vec<Vec<f64>>,
}

impl Innovations {
    pub(crate) fn run(gamma: &[f64], order: usize) -> Result<Self> {
        let mut v = Vec::with_capacity(order + 1);
        v.push(gamma[0]);
        if gamma[0].is_nan() || gamma[0] <= 0.0 {
            return Err(ArimaError::NonConvergence(0));
        }
        let mut rows: Vec<Vec<f64>> = vec![Vec::new()];
        for m in 1..=order {
            let mut row = vec![0.0; m];
            for k in 0..m {
                let mut acc = gamma[m - k];
                for j in 0..k {
                    acc -= rows[k][k - j - 1] * row[m - j - 1] * v[j];
                }
                row[m - k - 1] = acc / v[k];
            }
            let vm = gamma[0]
                - (0..m)
                    .map(|j| row[m - j - 1] * row[m - j - 1] * v[j])
                    .sum::<f64>();
            if !(vm.is_finite() && vm > 0.0) {
                return Err(ArimaError::NonConvergence(m));
            }
            v.push(vm);
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub(crate) fn theta(&self, m: usize, q: usize) -> Vec<f64> {
        self.rows[m][..q].to_vec()
    }
}

/// Recursion depth used to estimate an MA(q): deep enough that the leading
/// coefficients have settled.
pub(crate) fn innovations_depth(q: usize, n: usize) -> usize {
    (2 * q).max(q + 20).min(n.saturating_sub(1)).max(q)
}

/// `u_t = e_t - Σ θ_j u_{t-j}`, zero pre-sample innovations.
pub(crate) fn ma_filter(series: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut u = Vec::with_capacity(series.len());
    for (t, e) in series.iter().enumerate() {
        let mut v = *e;
        for (j, th) in theta.iter().enumerate().take(t) {
            v -= th * u[t - 1 - j];
        }
        u.push(v);
    }
    u
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaFit {
    pub theta: Vec<f64>,
    pub sigma2: f64,
    /// Innovations after inverting the fitted MA filter.
    pub innovations: Residuals,
}

pub(crate) fn fit_ma_with(
    centered: &[f64],
    table: Option<&Innovations>,
    q: usize,
) -> Result<MaFit> {
    let theta = if q == 0 {
        Vec::new()
    } else {
        let table = table.expect("innovations table required for q > 0");
        let m = innovations_depth(q, centered.len());
        let raw = table.theta(m, q);
        poly::reflect_to_invertible(&raw).0
    };
    let u = ma_filter(centered, &theta);
    let sigma2 = u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64;
    if !sigma2.is_finite() {
        return Err(ArimaError::NonConvergence(q));
    }
    Ok(MaFit {
        theta,
        sigma2,
        innovations: Residuals::new(u),
    })
}

/// MA(q) fit to AR residuals via the innovations algorithm, coerced to the
/// invertible region.
pub fn fit_ma_on_residuals(residuals: &Residuals, q: usize) -> Result<MaFit> {
    timeseries::check_finite(&residuals.values)?;
    let n = residuals.len();
    if n <= q + 2 {
        return Err(too_short(q + 2, n));
    }
    let centered = residuals.centered();
    if q == 0 {
        return fit_ma_with(&centered, None, 0);
    }
    let depth = innovations_depth(q, n);
    let gamma = autocovariances(&residuals.values, depth);
    let table = Innovations::run(&gamma, depth)?;
    fit_ma_with(&centered, Some(&table), q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::ArmaProcess;
    use crate::timeseries::acf;

    #[test]
    fn ar0_is_mean_only() {
        let x = [1.0, 3.0, 2.0, 6.0, 4.0];
        let fit = fit_ar(&x, 0).unwrap();
        assert!(fit.phi.is_empty());
        assert_eq!(fit.mean, 3.2);
        let expected: Vec<f64> = x.iter().map(|v| v - 3.2).collect();
        assert_eq!(fit.residuals.values, expected);
    }

    #[test]
    fn ar1_equals_lag_one_acf() {
        let x = ArmaProcess::new(vec![0.6], vec![], 2.0, 1.0)
            .unwrap()
            .generate(300, 3);
        let fit = fit_ar(&x, 1).unwrap();
        assert_eq!(fit.phi[0], acf(&x, 1).unwrap().at(1));
    }

    #[test]
    fn ar2_recovery() {
        let x = ArmaProcess::new(vec![0.5, 0.3], vec![], 0.0, 1.0)
            .unwrap()
            .generate(2000, 11);
        let fit = fit_ar(&x, 2).unwrap();
        assert!((fit.phi[0] - 0.5).abs() < 0.05, "{:?}", fit.phi);
        assert!((fit.phi[1] - 0.3).abs() < 0.05, "{:?}", fit.phi);
    }

    #[test]
    fn fit_ar_too_short() {
        assert!(fit_ar(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn ma0_variance_is_residual_variance() {
        let r = Residuals::new(vec![1.0, -2.0, 0.5, 0.25, 3.0]);
        let fit = fit_ma_on_residuals(&r, 0).unwrap();
        assert!(fit.theta.is_empty());
        assert!((fit.sigma2 - r.variance).abs() < 1e-12);
    }

    #[test]
    fn ma1_recovery() {
        let x = ArmaProcess::new(vec![], vec![0.6], 0.0, 1.0)
            .unwrap()
            .generate(5000, 5);
        let fit = fit_ma_on_residuals(&Residuals::new(x), 1).unwrap();
        assert!((fit.theta[0] - 0.6).abs() < 0.05, "{:?}", fit.theta);
        assert!((fit.sigma2 - 1.0).abs() < 0.1);
    }

    #[test]
    fn white_noise_ma3_near_zero() {
        let n = 2000;
        let band = 2.0 / (n as f64).sqrt();
        let mut inside = 0;
        let mut total = 0;
        for seed in 0..30 {
            let x = ArmaProcess::white_noise(0.0, 1.0).generate(n, seed);
            let fit = fit_ma_on_residuals(&Residuals::new(x), 3).unwrap();
            inside += fit.theta.iter().filter(|t| t.abs() <= band).count();
            total += 3;
        }
        assert!(inside as f64 / total as f64 >= 0.9, "{inside}/{total}");
    }

    #[test]
    fn innovations_on_exact_ma1_autocovariance() {
        // γ of MA(1) θ=0.5, σ²=1: γ0 = 1.25, γ1 = 0.5. θ_{m,1} → 0.5 as m grows.
        let mut gamma = vec![0.0; 41];
        gamma[0] = 1.25;
        gamma[1] = 0.5;
        let table = Innovations::run(&gamma, 40).unwrap();
        assert!((table.theta(40, 1)[0] - 0.5).abs() < 1e-9);
        assert!((table.theta(1, 1)[0] - 0.4).abs() < 1e-12);
    }
}
