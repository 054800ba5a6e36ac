//! Lag-polynomial helpers: stationarity/invertibility checks and root
//! reflection.

use nalgebra::{Complex, DMatrix};

/// True iff `1 - φ_1 z - … - φ_p z^p` has every root strictly outside the unit
/// circle. Uses the step-down (reverse Levinson) recursion: the polynomial is
/// stable iff every reflection coefficient has modulus below one.
pub fn ar_is_stationary(phi: &[f64]) -> bool {
    let mut a = phi.to_vec();
    while let Some(&k) = a.last() {
        if k.is_nan() || k.abs() >= 1.0 {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        let next: Vec<f64> = (0..m - 1)
            .map(|j| (a[j] + k * a[m - 2 - j]) / denom)
            .collect();
        a = next;
    }
    true
}

/// True iff `1 + θ_1 z + … + θ_q z^q` has every root strictly outside the
/// unit circle.
pub fn ma_is_invertible(theta: &[f64]) -> bool {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    ar_is_stationary(&neg)
}

/// Inverse roots of `1 + c_1 z + … + c_q z^q`, i.e. the roots of
/// `z^q + c_1 z^{q-1} + … + c_q`.
fn inverse_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let q = coeffs.len();
    let mut companion = DMatrix::<f64>::zeros(q, q);
    for (j, c) in coeffs.iter().enumerate() {
        companion[(0, j)] = -c;
    }
    for i in 1..q {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Coefficients `c_1..c_q` of `Π (z - r_i) = z^q + c_1 z^{q-1} + … + c_q`.
fn from_inverse_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    poly[1..].iter().map(|c| c.re).collect()
}

/// Reflects MA roots that lie inside the unit circle to their reciprocals.
/// Returns the new coefficients and the factor by which the innovation
/// variance must be multiplied to keep the autocovariance unchanged.
pub fn reflect_to_invertible(theta: &[f64]) -> (Vec<f64>, f64) {
    if theta.is_empty() || ma_is_invertible(theta) {
        return (theta.to_vec(), 1.0);
    }
    let mut scale = 1.0;
    let roots: Vec<Complex<f64>> = inverse_roots(theta)
        .into_iter()
        .map(|r| {
            let modulus = r.norm();
            if modulus > 1.0 {
                scale *= modulus * modulus;
                (Complex::new(1.0, 0.0) / r).conj()
            } else {
                r
            }
        })
        .collect();
    (from_inverse_roots(&roots), scale)
}

/// Multiplies `1 - Σ φ_i B^i` by `(1 - B)^d` and returns the resulting AR
/// coefficients in the same sign convention.
pub fn integrate_ar(phi: &[f64], d: usize) -> Vec<f64> {
    // Full polynomial with leading 1, in "1 - ..." form stored as plain coefficients.
    let mut poly: Vec<f64> = std::iter::once(1.0).chain(phi.iter().map(|p| -p)).collect();
    for _ in 0..d {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        poly = next;
    }
    poly[1..].iter().map(|c| -c).collect()
}

/// ψ-weights `ψ_0..ψ_{n-1}` of the causal MA(∞) form.
pub fn psi_weights(phi: &[f64], theta: &[f64], n: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n);
    for j in 0..n {
        if j == 0 {
            psi.push(1.0);
            continue;
        }
        let mut v = theta.get(j - 1).copied().unwrap_or(0.0);
        for i in 1..=phi.len().min(j) {
            v += phi[i - 1] * psi[j - i];
        }
        psi.push(v);
    }
    psi
}
