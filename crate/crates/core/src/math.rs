//! Scalar helpers built on `libm` so the crate stays `no_std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `ln(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    let pos = if x > 0.0 { x } else { 0.0 };
    pos + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return sqrt(-2.0 * ln(u1)) * libm::cos(core::f64::consts::TAU * u2);
        }
    }
}

/// Ceiling of `fraction * n`, forgiving the last-bit error of the product.
pub fn ceil_fraction(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let c = libm::ceil(x - 1e-9);
    if c < 0.0 {
        0
    } else {
        (c as usize).min(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
    }

    #[test]
    fn sigmoid_symmetric() {
        for &x in &[0.0, 0.5, 3.0, 40.0, 800.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ceil_fraction_counts() {
        assert_eq!(ceil_fraction(0.1, 1000), 100);
        assert_eq!(ceil_fraction(0.1, 250), 25);
        assert_eq!(ceil_fraction(0.02, 250), 5);
        assert_eq!(ceil_fraction(1.0, 7), 7);
        assert_eq!(ceil_fraction(0.3, 7), 3);
    }
}
