//! Huber-type smoothing of the Euclidean norm.
//!
//! `psi(r) = r^2 / (2 mu)` for `r <= mu` and `r - mu / 2` beyond, so
//! `0 <= r - psi(r) <= mu / 2` everywhere and the gradient of `psi(||v||)`
//! exists at `v = 0`.

/// `psi_mu(r)` for `r = ||v|| >= 0`.
pub fn smoothed_norm(r: f64, mu: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if r <= mu {
        r * r / (2.0 * mu)
    } else {
        r - mu / 2.0
    }
}

/// Scalar `s` such that the gradient of `psi_mu(||v||)` is `s * v`.
pub fn smoothed_norm_grad_factor(r: f64, mu: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if r <= mu {
        1.0 / mu
    } else {
        1.0 / r
    }
}
