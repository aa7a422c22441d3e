//! Anisotropic squared-exponential covariance and its derivative
//! cross-covariances.
//!
//! With `r = x1 - x2` and `k(x1, x2) = s * exp(-0.5 * sum_g r_g^2 / l_g^2)`:
//!
//! * `cov(df(x1)/dx1_g, f(x2))          = -r_g / l_g^2 * k`
//! * `cov(df(x1)/dx1_g, df(x2)/dx2_h)   = k * (delta_gh / l_g^2 - r_g r_h / (l_g^2 l_h^2))`
//!
//! Because differentiation is linear, the derivative of the process is again
//! a Gaussian process and these entries slot directly into a joint Gram
//! matrix over values and partial derivatives.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyperparams {
    /// Output scale squared.
    pub signal_variance: f64,
    /// One lengthscale per input dimension.
    pub lengthscales: Vec<f64>,
    /// Variance of the Gaussian observation noise on function values.
    pub noise_variance: f64,
    /// Diagonal stabilizer added to Gram matrices.
    pub jitter: f64,
}

impl KernelHyperparams {
    /// Builds hyperparameters with the default jitter of `1e-8 * signal_variance`.
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let hp = KernelHyperparams {
            signal_variance,
            jitter: 1e-8 * signal_variance,
            lengthscales,
            noise_variance,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn isotropic(dim: usize, signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.signal_variance) {
            return Err(Error::invalid(format!("signal_variance must be > 0, got {}", self.signal_variance)));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !finite_pos(**l)) {
            return Err(Error::invalid(format!("lengthscales must be > 0, got {l}")));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::invalid(format!("noise_variance must be >= 0, got {}", self.noise_variance)));
        }
        if !finite_pos(self.jitter) {
            return Err(Error::invalid(format!("jitter must be > 0, got {}", self.jitter)));
        }
        Ok(())
    }

    /// Packs `[ln s, ln l_1 .. ln l_d, ln noise]`.
    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.max(f64::MIN_POSITIVE).ln());
        v
    }

    /// Inverse of [`to_log_vec`](Self::to_log_vec); jitter is reset to its default.
    pub fn from_log_vec(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(Error::invalid("log-hyperparameter vector needs at least 3 entries"));
        }
        let d = v.len() - 2;
        Self::new(v[0].exp(), v[1..=d].iter().map(|x| x.exp()).collect(), v[d + 1].exp())
    }
}

/// Identifies one latent variable of the joint prior: either the function
/// value at a point, or a first partial derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatentIndex {
    Value { point: usize },
    Partial { point: usize, dim: usize },
}

impl LatentIndex {
    pub fn point(&self) -> usize {
        match *self {
            LatentIndex::Value { point } | LatentIndex::Partial { point, .. } => point,
        }
    }
}

fn check_dims(x1: &[f64], x2: &[f64], hp: &KernelHyperparams) -> Result<()> {
    let d = hp.dim();
    for x in [x1, x2] {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    Ok(())
}

fn check_index(g: usize, hp: &KernelHyperparams) -> Result<()> {
    if g >= hp.dim() {
        return Err(Error::invalid(format!("dimension index {g} out of range for d = {}", hp.dim())));
    }
    Ok(())
}

// Unchecked kernels used by the Gram assembly once the inputs are validated.

#[inline]
fn se(x1: &[f64], x2: &[f64], hp: &KernelHyperparams) -> f64 {
    let q: f64 = x1
        .iter()
        .zip(x2)
        .zip(&hp.lengthscales)
        .map(|((a, b), l)| {
            let r = (a - b) / l;
            r * r
        })
        .sum();
    hp.signal_variance * (-0.5 * q).exp()
}

#[inline]
fn se_d1(x1: &[f64], g: usize, x2: &[f64], hp: &KernelHyperparams) -> f64 {
    let l2 = hp.lengthscales[g] * hp.lengthscales[g];
    -(x1[g] - x2[g]) / l2 * se(x1, x2, hp)
}

#[inline]
fn se_d2(x1: &[f64], g: usize, x2: &[f64], h: usize, hp: &KernelHyperparams) -> f64 {
    let lg2 = hp.lengthscales[g] * hp.lengthscales[g];
    let lh2 = hp.lengthscales[h] * hp.lengthscales[h];
    let rg = x1[g] - x2[g];
    let rh = x1[h] - x2[h];
    let delta = if g == h { 1.0 / lg2 } else { 0.0 };
    se(x1, x2, hp) * (delta - rg * rh / (lg2 * lh2))
}

/// Covariance between two function values.
pub fn cov_ff(x1: &[f64], x2: &[f64], hp: &KernelHyperparams) -> Result<f64> {
    check_dims(x1, x2, hp)?;
    Ok(se(x1, x2, hp))
}

/// Covariance between `df(x1)/dx1_g` and `f(x2)`.
pub fn cov_df(x1: &[f64], g: usize, x2: &[f64], hp: &KernelHyperparams) -> Result<f64> {
    check_dims(x1, x2, hp)?;
    check_index(g, hp)?;
    Ok(se_d1(x1, g, x2, hp))
}

/// Covariance between `df(x1)/dx1_g` and `df(x2)/dx2_h`.
pub fn cov_dd(x1: &[f64], g: usize, x2: &[f64], h: usize, hp: &KernelHyperparams) -> Result<f64> {
    check_dims(x1, x2, hp)?;
    check_index(g, hp)?;
    check_index(h, hp)?;
    Ok(se_d2(x1, g, x2, h, hp))
}

/// Covariance between two arbitrary latents, inputs assumed validated.
#[inline]
pub(crate) fn cov_latent(a: LatentKind, xa: &[f64], b: LatentKind, xb: &[f64], hp: &KernelHyperparams) -> f64 {
    match (a, b) {
        (LatentKind::Value, LatentKind::Value) => se(xa, xb, hp),
        (LatentKind::Partial(g), LatentKind::Value) => se_d1(xa, g, xb, hp),
        (LatentKind::Value, LatentKind::Partial(h)) => se_d1(xb, h, xa, hp),
        (LatentKind::Partial(g), LatentKind::Partial(h)) => se_d2(xa, g, xb, h, hp),
    }
}

/// Point-free view of a latent, used when the coordinates are carried alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LatentKind {
    Value,
    Partial(usize),
}

impl From<LatentIndex> for LatentKind {
    fn from(l: LatentIndex) -> Self {
        match l {
            LatentIndex::Value { .. } => LatentKind::Value,
            LatentIndex::Partial { dim, .. } => LatentKind::Partial(dim),
        }
    }
}

fn validate_indices(indices: &[LatentIndex], points: &[Vec<f64>], hp: &KernelHyperparams) -> Result<()> {
    let d = hp.dim();
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
    }
    for idx in indices {
        if idx.point() >= points.len() {
            return Err(Error::invalid(format!(
                "latent references point {} but only {} points were given",
                idx.point(),
                points.len()
            )));
        }
        if let LatentIndex::Partial { dim, .. } = idx {
            check_index(*dim, hp)?;
        }
    }
    Ok(())
}

/// Prior covariance between every pair of latents in `indices`, without jitter.
pub fn cross_gram(
    rows: &[LatentIndex],
    cols: &[LatentIndex],
    points: &[Vec<f64>],
    hp: &KernelHyperparams,
) -> Result<DMatrix<f64>> {
    validate_indices(rows, points, hp)?;
    validate_indices(cols, points, hp)?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        let (ra, cb) = (rows[a], cols[b]);
        cov_latent(ra.into(), &points[ra.point()], cb.into(), &points[cb.point()], hp)
    }))
}

/// Joint prior Gram matrix over mixed value / derivative latents with
/// `hp.jitter` on the diagonal. The result is exactly symmetric.
pub fn build_joint_gram(indices: &[LatentIndex], points: &[Vec<f64>], hp: &KernelHyperparams) -> Result<DMatrix<f64>> {
    validate_indices(indices, points, hp)?;
    Ok(gram_unchecked(indices, points, hp, hp.jitter))
}

pub(crate) fn gram_unchecked(
    indices: &[LatentIndex],
    points: &[Vec<f64>],
    hp: &KernelHyperparams,
    jitter: f64,
) -> DMatrix<f64> {
    let n = indices.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        let ia = indices[a];
        let xa = &points[ia.point()];
        for b in 0..=a {
            let ib = indices[b];
            let v = cov_latent(ia.into(), xa, ib.into(), &points[ib.point()], hp);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
        k[(a, a)] += jitter;
    }
    k
}
