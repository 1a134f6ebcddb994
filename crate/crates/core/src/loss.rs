//! Ranking and pointwise losses with their derivatives.
//!
//! Each `*_grad` returns the derivative with respect to the score
//! difference (pairwise losses) or the score (pointwise loss).

use crate::math::{sigmoid, softplus};

/// `-ln σ(r_pos - r_neg)`.
#[inline]
pub fn loss_bpr(r_pos: f64, r_neg: f64) -> f64 {
    softplus(-(r_pos - r_neg))
}

/// d loss_bpr / d (r_pos - r_neg) = -σ(-(r_pos - r_neg)).
#[inline]
pub fn loss_bpr_grad(r_pos: f64, r_neg: f64) -> f64 {
    -sigmoid(-(r_pos - r_neg))
}

/// `max(0, m - (r_pos - r_neg))`.
#[inline]
pub fn loss_hinge(r_pos: f64, r_neg: f64, margin: f64) -> f64 {
    let v = margin - (r_pos - r_neg);
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Subgradient; zero at the kink.
#[inline]
pub fn loss_hinge_grad(r_pos: f64, r_neg: f64, margin: f64) -> f64 {
    if margin - (r_pos - r_neg) > 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Binary cross-entropy of `σ(r)` against `label`.
#[inline]
pub fn loss_logistic(r: f64, label: bool) -> f64 {
    if label {
        softplus(-r)
    } else {
        softplus(r)
    }
}

/// d loss_logistic / d r = σ(r) - label.
#[inline]
pub fn loss_logistic_grad(r: f64, label: bool) -> f64 {
    if label {
        -sigmoid(-r)
    } else {
        sigmoid(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = core::f64::consts::LN_2;

    #[test]
    fn bpr_values() {
        assert!((loss_bpr(0.3, 0.3) - LN2).abs() < 1e-15);
        // Reference values: ln(1 + e^-10) and ln(1 + e^2) evaluated at 30
        // significant digits (mpmath).
        assert!((loss_bpr(10.0, 0.0) - 4.539889921686465e-5).abs() < 1e-18);
        assert!((loss_bpr(-2.0, 0.0) - 2.1269280110429727).abs() < 1e-14);
        assert!(loss_bpr(1000.0, -1000.0) >= 0.0);
        assert!((loss_bpr(-1000.0, 0.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn hinge_values() {
        assert_eq!(loss_hinge(1.0, 0.0, 0.5), 0.0);
        assert_eq!(loss_hinge(0.2, 0.2, 0.5), 0.5);
        assert!((loss_hinge(0.0, 0.3, 0.5) - 0.8).abs() < 1e-15);
        assert_eq!(loss_hinge_grad(1.0, 0.0, 0.5), 0.0);
        assert_eq!(loss_hinge_grad(0.0, 0.0, 0.5), -1.0);
    }

    #[test]
    fn logistic_values() {
        assert!((loss_logistic(0.0, true) - LN2).abs() < 1e-15);
        assert!(loss_logistic(800.0, true) < 1e-300);
        // ln(1 + e^1.5), mpmath reference.
        assert!((loss_logistic(1.5, false) - 1.7014132779827524).abs() < 1e-14);
        assert!((loss_logistic_grad(0.0, true) + 0.5).abs() < 1e-15);
        assert!((loss_logistic_grad(0.0, false) - 0.5).abs() < 1e-15);
    }
}
