//! Standard-normal helpers and the probit sign likelihood `Phi(z * m / nu)`.
//!
//! With `nu = 1e-6` the probit argument routinely reaches magnitudes of
//! 1e5 and beyond, so everything here works in log space and switches to the
//! asymptotic expansion of the log-CDF in the far left tail.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// Below this argument `ln Phi` uses the asymptotic series instead of `erfc`.
const LEFT_TAIL: f64 = -20.0;
/// Above this argument `Phi` is 1 to double precision.
const RIGHT_TAIL: f64 = 38.0;

/// Observed sign of a partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Positive => 1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Positive => Sign::Negative,
        }
    }

    pub fn from_value(v: i32) -> Option<Sign> {
        match v {
            -1 => Some(Sign::Negative),
            1 => Some(Sign::Positive),
            _ => None,
        }
    }
}

pub fn log_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

pub fn normal_pdf(z: f64) -> f64 {
    log_normal_pdf(z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    if z > RIGHT_TAIL {
        1.0
    } else {
        0.5 * erfc(-z * FRAC_1_SQRT_2)
    }
}

/// `1 - 1/z^2 + 3/z^4 - 15/z^6 + ...`, the Mills-ratio correction.
fn tail_series(z: f64) -> f64 {
    let w = 1.0 / (z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=6 {
        term *= -((2 * k - 1) as f64) * w;
        sum += term;
    }
    sum
}

/// `ln Phi(z)`, accurate across the whole real line.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < LEFT_TAIL {
        log_normal_pdf(z) - (-z).ln() + tail_series(z).ln()
    } else if z > 0.0 {
        (-0.5 * erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else {
        (0.5 * erfc(-z * FRAC_1_SQRT_2)).ln()
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z < LEFT_TAIL {
        -z / tail_series(z)
    } else {
        (log_normal_pdf(z) - log_normal_cdf(z)).exp()
    }
}

/// Probability of observing `sign` for a derivative latent value `z`.
///
/// `nu` controls the steepness; as it approaches zero the likelihood becomes
/// a unit step in `z * m`.
pub fn probit_likelihood(z: f64, sign: Sign, nu: f64) -> f64 {
    assert!(nu > 0.0, "probit scale must be positive");
    let a = z * sign.value() / nu;
    if a > RIGHT_TAIL {
        1.0
    } else {
        log_normal_cdf(a).exp()
    }
}

/// Normalizer and first two moments of `N(f | mean, var) * Phi(m f / nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn probit_tilted_moments(mean: f64, var: f64, sign: Sign, nu: f64) -> TiltedMoments {
    let m = sign.value();
    let s2 = nu * nu + var;
    let s = s2.sqrt();
    let z = m * mean / s;
    let r = inv_mills(z);
    TiltedMoments {
        log_z: log_normal_cdf(z),
        mean: mean + m * var * r / s,
        variance: var - var * var * r * (z + r) / s2,
    }
}
