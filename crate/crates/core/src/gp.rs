//! Gaussian-process surrogate over function values and derivative-sign
//! observations.
//!
//! [`GpState`] owns the data and hyperparameters and caches one fit: the EP
//! site parameters for the sign observations and a Cholesky factor of the
//! resulting Gaussian regression system. Any mutation marks the cache stale;
//! prediction on a stale state is an error rather than a silent refit, so
//! that read-only prediction can be shared across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::ep::{self, EpDiagnostics, EpOptions, SiteParams, DEFAULT_NU};
use crate::error::{Error, Result};
use crate::kernel::{cov_latent, gram_unchecked, KernelHyperparams, LatentIndex, LatentKind};
use crate::linalg::{robust_cholesky, Factor};
use crate::optim::{minimize_box, BoxOptions};
use crate::probit::Sign;

/// A (possibly noisy) function evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Asserts the sign of `df/dx_dim` at `x`, without a function value.
#[derive(Debug, Clone, PartialEq)]
pub struct SignObservation {
    pub x: Vec<f64>,
    pub dim: usize,
    pub sign: Sign,
}

/// Marginal predictive distribution of latents at test points.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Present only when the full covariance was requested.
    pub covariance: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
struct Fit {
    points: Vec<Vec<f64>>,
    train: Vec<LatentIndex>,
    factor: FactorCache,
    alpha: DVector<f64>,
    log_marginal: f64,
    diagnostics: EpDiagnostics,
}

/// Cholesky factor stored as a plain lower-triangular matrix so the state stays `Clone`.
#[derive(Debug, Clone)]
struct FactorCache {
    l: DMatrix<f64>,
}

impl FactorCache {
    fn from_factor(f: &Factor) -> Self {
        FactorCache { l: f.chol.l() }
    }

    fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.solve_lower_triangular(b).expect("positive diagonal")
    }
}

#[derive(Debug, Clone)]
pub struct GpState {
    dim: usize,
    observations: Vec<Observation>,
    sign_observations: Vec<SignObservation>,
    /// Warm-start EP parameters, aligned with `sign_observations`.
    site_params: Vec<SiteParams>,
    hyper: KernelHyperparams,
    nu: f64,
    ep_options: EpOptions,
    fit: Option<Fit>,
}

impl GpState {
    pub fn new(hyper: KernelHyperparams) -> Result<Self> {
        hyper.validate()?;
        Ok(GpState {
            dim: hyper.dim(),
            observations: Vec::new(),
            sign_observations: Vec::new(),
            site_params: Vec::new(),
            hyper,
            nu: DEFAULT_NU,
            ep_options: EpOptions::default(),
            fit: None,
        })
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("probit scale nu must be > 0, got {nu}")));
        }
        self.nu = nu;
        self.fit = None;
        Ok(self)
    }

    pub fn with_ep_options(mut self, opts: EpOptions) -> Self {
        self.ep_options = opts;
        self.fit = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn ep_options(&self) -> &EpOptions {
        &self.ep_options
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hyper
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn sign_observations(&self) -> &[SignObservation] {
        &self.sign_observations
    }

    pub fn is_fitted(&self) -> bool {
        self.fit.is_some()
    }

    pub fn set_hyperparams(&mut self, hyper: KernelHyperparams) -> Result<()> {
        hyper.validate()?;
        if hyper.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: hyper.dim() });
        }
        self.hyper = hyper;
        self.fit = None;
        Ok(())
    }

    pub fn add_observation(&mut self, obs: Observation) -> Result<()> {
        if obs.x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: obs.x.len() });
        }
        if !obs.y.is_finite() || obs.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation must be finite"));
        }
        self.observations.push(obs);
        self.fit = None;
        Ok(())
    }

    pub fn add_sign_observation(&mut self, obs: SignObservation) -> Result<()> {
        if obs.x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: obs.x.len() });
        }
        if obs.dim >= self.dim {
            return Err(Error::invalid(format!("derivative dimension {} out of range", obs.dim)));
        }
        self.sign_observations.push(obs);
        self.site_params.push(SiteParams::default());
        self.fit = None;
        Ok(())
    }

    pub fn remove_sign_observation(&mut self, index: usize) -> SignObservation {
        self.site_params.remove(index);
        self.fit = None;
        self.sign_observations.remove(index)
    }

    /// Replaces every function value, keeping inputs; used for re-standardization.
    pub fn set_targets(&mut self, ys: &[f64]) -> Result<()> {
        if ys.len() != self.observations.len() {
            return Err(Error::DimensionMismatch { expected: self.observations.len(), got: ys.len() });
        }
        for (o, y) in self.observations.iter_mut().zip(ys) {
            o.y = *y;
        }
        self.fit = None;
        Ok(())
    }

    fn latents(&self) -> (Vec<Vec<f64>>, Vec<LatentIndex>) {
        let n = self.observations.len();
        let mut points: Vec<Vec<f64>> = self.observations.iter().map(|o| o.x.clone()).collect();
        let mut idx: Vec<LatentIndex> = (0..n).map(|point| LatentIndex::Value { point }).collect();
        for s in &self.sign_observations {
            points.push(s.x.clone());
            idx.push(LatentIndex::Partial { point: points.len() - 1, dim: s.dim });
        }
        (points, idx)
    }

    fn compute_fit(&self) -> Result<(Fit, Vec<SiteParams>)> {
        let (points, idx) = self.latents();
        let n = self.observations.len();
        let ys: Vec<f64> = self.observations.iter().map(|o| o.y).collect();
        let signs: Vec<(Sign, f64)> = self.sign_observations.iter().map(|s| (s.sign, self.nu)).collect();

        let max_jitter = 1e-2 * self.hyper.signal_variance;
        let mut jitter = self.hyper.jitter;
        loop {
            let gram = gram_unchecked(&idx, &points, &self.hyper, jitter);
            let attempt = ep::fit_sites(&gram, n, &ys, self.hyper.noise_variance, &signs, &self.site_params, &self.ep_options)
                .and_then(|sites| {
                    let (rows, targets, noise) = ep::pseudo_targets(n, &ys, self.hyper.noise_variance, &sites.params);
                    let m = rows.len();
                    let mut a = DMatrix::from_fn(m, m, |i, j| gram[(rows[i], rows[j])]);
                    for i in 0..m {
                        a[(i, i)] += noise[i];
                    }
                    // Escalation is handled by the outer loop so that EP and
                    // prediction always share one jitter level.
                    let factor = robust_cholesky(a, 0.0, 0.0)?;
                    let alpha = factor.solve(&DVector::from_vec(targets));
                    let fit = Fit {
                        points: points.clone(),
                        train: rows.iter().map(|r| idx[*r]).collect(),
                        factor: FactorCache::from_factor(&factor),
                        alpha,
                        log_marginal: sites.log_marginal,
                        diagnostics: sites.diagnostics.clone(),
                    };
                    Ok((fit, sites.params))
                });
            match attempt {
                Ok(r) => return Ok(r),
                Err(Error::NotPositiveDefinite { .. }) if jitter * 2.0 <= max_jitter => {
                    jitter *= 2.0;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Fits EP (when sign observations are present) and factorizes the
    /// regression system for the current data and hyperparameters.
    pub fn refit(&mut self) -> Result<&EpDiagnostics> {
        let (fit, params) = self.compute_fit()?;
        self.site_params = params;
        self.fit = Some(fit);
        Ok(&self.fit.as_ref().expect("just fitted").diagnostics)
    }

    fn fitted(&self) -> Result<&Fit> {
        self.fit.as_ref().ok_or(Error::Stale)
    }

    /// Approximate log marginal likelihood `ln p(y, m | X, X~)` of the current fit.
    pub fn log_marginal(&self) -> Result<f64> {
        Ok(self.fitted()?.log_marginal)
    }

    pub fn ep_diagnostics(&self) -> Result<&EpDiagnostics> {
        Ok(&self.fitted()?.diagnostics)
    }

    /// Exact Gaussian log marginal likelihood; only defined without sign observations.
    pub fn log_marginal_gaussian(&self) -> Result<f64> {
        if !self.sign_observations.is_empty() {
            return Err(Error::invalid("log_marginal_gaussian requires no sign observations"));
        }
        match &self.fit {
            Some(f) => Ok(f.log_marginal),
            None => Ok(self.compute_fit()?.0.log_marginal),
        }
    }

    fn predict_latent(&self, fit: &Fit, kind: LatentKind, x: &[f64]) -> (f64, f64, DVector<f64>) {
        let k = DVector::from_iterator(
            fit.train.len(),
            fit.train.iter().map(|t| cov_latent(kind, x, (*t).into(), &fit.points[t.point()], &self.hyper)),
        );
        let prior = cov_latent(kind, x, kind, x, &self.hyper);
        if fit.train.is_empty() {
            return (0.0, prior, k);
        }
        let mean = k.dot(&fit.alpha);
        let v = fit.factor.solve_lower(&k);
        let var = (prior - v.norm_squared()).max(0.0);
        (mean, var, v)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Predictive mean and variance of `f` at a single point.
    pub fn predict_point(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_point(x)?;
        let fit = self.fitted()?;
        let (m, v, _) = self.predict_latent(fit, LatentKind::Value, x);
        Ok((m, v))
    }

    /// Predictive marginals of the latent function at each test point.
    pub fn predict_f(&self, points: &[Vec<f64>]) -> Result<GpPosterior> {
        let fit = self.fitted()?;
        let mut mean = Vec::with_capacity(points.len());
        let mut variance = Vec::with_capacity(points.len());
        for x in points {
            self.check_point(x)?;
            let (m, v, _) = self.predict_latent(fit, LatentKind::Value, x);
            mean.push(m);
            variance.push(v);
        }
        Ok(GpPosterior { mean, variance, covariance: None })
    }

    /// Like [`predict_f`](Self::predict_f) but also returns the joint covariance.
    pub fn predict_f_joint(&self, points: &[Vec<f64>]) -> Result<GpPosterior> {
        let fit = self.fitted()?;
        let p = points.len();
        let mut mean = Vec::with_capacity(p);
        let mut vs = Vec::with_capacity(p);
        for x in points {
            self.check_point(x)?;
            let (m, _, v) = self.predict_latent(fit, LatentKind::Value, x);
            mean.push(m);
            vs.push(v);
        }
        let idx: Vec<LatentIndex> = (0..p).map(|point| LatentIndex::Value { point }).collect();
        let prior = gram_unchecked(&idx, points, &self.hyper, 0.0);
        let mut cov = prior;
        if !fit.train.is_empty() {
            for a in 0..p {
                for b in 0..=a {
                    let c = cov[(a, b)] - vs[a].dot(&vs[b]);
                    cov[(a, b)] = c;
                    cov[(b, a)] = c;
                }
            }
        }
        let variance = (0..p).map(|i| cov[(i, i)].max(0.0)).collect();
        Ok(GpPosterior { mean, variance, covariance: Some(cov) })
    }

    /// Predictive mean and variance of `df/dx_g` at `x`.
    pub fn predict_df(&self, x: &[f64], g: usize) -> Result<(f64, f64)> {
        self.check_point(x)?;
        if g >= self.dim {
            return Err(Error::invalid(format!("derivative dimension {g} out of range")));
        }
        let fit = self.fitted()?;
        let (m, v, _) = self.predict_latent(fit, LatentKind::Partial(g), x);
        Ok((m, v))
    }
}

/// Box over log-hyperparameters: `(low, high)` in natural units, searched in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperBounds {
    pub signal_variance: (f64, f64),
    pub lengthscale: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds { signal_variance: (1e-2, 1e2), lengthscale: (1e-2, 10.0), noise_variance: (1e-8, 1.0) }
    }
}

impl HyperBounds {
    fn log_box(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.signal_variance.0.ln()];
        let mut hi = vec![self.signal_variance.1.ln()];
        lo.extend(std::iter::repeat_n(self.lengthscale.0.ln(), dim));
        hi.extend(std::iter::repeat_n(self.lengthscale.1.ln(), dim));
        lo.push(self.noise_variance.0.ln());
        hi.push(self.noise_variance.1.ln());
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (a, b)) in [
            ("signal_variance", self.signal_variance),
            ("lengthscale", self.lengthscale),
            ("noise_variance", self.noise_variance),
        ] {
            if !(a > 0.0 && a < b && b.is_finite()) {
                return Err(Error::invalid(format!("bounds for {name} must satisfy 0 < low < high")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperFitOptions {
    pub bounds: HyperBounds,
    pub restarts: usize,
    pub local: BoxOptions,
}

impl Default for HyperFitOptions {
    fn default() -> Self {
        HyperFitOptions {
            bounds: HyperBounds::default(),
            restarts: 5,
            local: BoxOptions {
                max_evals: 150,
                fd_step: 1e-4,
                central_differences: true,
                gradient_tolerance: 1e-4,
                value_tolerance: 1e-9,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperFit {
    pub hyperparams: KernelHyperparams,
    pub log_marginal: f64,
    /// Objective (log marginal) at each multistart initial point.
    pub start_values: Vec<f64>,
    /// Set when no start produced a finite objective.
    pub warning: bool,
}

/// Maximizes the (EP-approximated when sign observations are present) log
/// marginal likelihood over the hyperparameters by multistart local search in
/// log space. The first start is the state's current hyperparameters clipped
/// to the bounds; the remaining starts are drawn uniformly from `rng`.
pub fn fit_hyperparams<R: Rng + ?Sized>(state: &GpState, opts: &HyperFitOptions, rng: &mut R) -> Result<HyperFit> {
    opts.bounds.validate()?;
    if state.observations.len() < 2 {
        return Err(Error::invalid("hyperparameter fitting needs at least two observations"));
    }
    let (lo, hi) = opts.bounds.log_box(state.dim);
    let mut work = state.clone();
    let objective = |v: &[f64]| -> f64 {
        let Ok(hp) = KernelHyperparams::from_log_vec(v) else {
            return f64::INFINITY;
        };
        work.hyper = hp;
        work.fit = None;
        match work.compute_fit() {
            Ok((fit, _)) if fit.log_marginal.is_finite() => -fit.log_marginal,
            _ => f64::INFINITY,
        }
    };
    let mut objective = objective;

    let mut starts = Vec::with_capacity(opts.restarts.max(1));
    let mut first = state.hyper.to_log_vec();
    for i in 0..first.len() {
        first[i] = first[i].clamp(lo[i], hi[i]);
    }
    starts.push(first);
    for _ in 1..opts.restarts.max(1) {
        starts.push((0..lo.len()).map(|i| rng.random_range(lo[i]..=hi[i])).collect());
    }

    let mut start_values = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        start_values.push(-objective(s));
        let r = minimize_box(&mut objective, s, &lo, &hi, &opts.local);
        if r.value.is_finite() && best.as_ref().is_none_or(|(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    match best {
        Some((x, v)) => Ok(HyperFit {
            hyperparams: KernelHyperparams::from_log_vec(&x)?,
            log_marginal: -v,
            start_values,
            warning: false,
        }),
        None => {
            tracing::warn!("hyperparameter fit failed from every start; keeping current values");
            Ok(HyperFit { hyperparams: state.hyper.clone(), log_marginal: f64::NAN, start_values, warning: true })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::cov_ff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state_1d(noise: f64, data: &[(f64, f64)]) -> GpState {
        let hp = KernelHyperparams::isotropic(1, 1.0, 0.3, noise).unwrap();
        let mut s = GpState::new(hp).unwrap();
        for (x, y) in data {
            s.add_observation(Observation { x: vec![*x], y: *y }).unwrap();
        }
        s.refit().unwrap();
        s
    }

    /// Dense conditioning oracle built from explicit inverses.
    fn dense_oracle(hp: &KernelHyperparams, data: &[(Vec<f64>, f64)], test: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = data.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            cov_ff(&data[i].0, &data[j].0, hp).unwrap() + if i == j { hp.noise_variance + hp.jitter } else { 0.0 }
        });
        let kinv = k.clone().try_inverse().unwrap();
        let y = DVector::from_iterator(n, data.iter().map(|d| d.1));
        let mut means = vec![];
        let mut vars = vec![];
        for t in test {
            let ks = DVector::from_iterator(n, data.iter().map(|d| cov_ff(t, &d.0, hp).unwrap()));
            means.push(ks.dot(&(&kinv * &y)));
            vars.push(hp.signal_variance - ks.dot(&(&kinv * &ks)));
        }
        let lml = -0.5 * y.dot(&(&kinv * &y)) - 0.5 * k.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        (means, vars, lml)
    }

    #[test]
    fn empty_state_returns_prior() {
        let s = state_1d(0.1, &[]);
        let p = s.predict_f(&[vec![0.2], vec![0.9]]).unwrap();
        assert_eq!(p.mean, vec![0.0, 0.0]);
        assert_eq!(p.variance, vec![1.0, 1.0]);
        let (m, v) = s.predict_df(&[0.5], 0).unwrap();
        assert_eq!(m, 0.0);
        assert!((v - 1.0 / 0.09).abs() < 1e-12);
        assert_eq!(s.log_marginal_gaussian().unwrap(), 0.0);
    }

    #[test]
    fn noiseless_interpolation() {
        let s = state_1d(0.0, &[(0.2, 1.5), (0.7, -0.3)]);
        let (m, v) = s.predict_point(&[0.2]).unwrap();
        assert!((m - 1.5).abs() < 1e-6);
        assert!(v < 1e-6);
    }

    #[test]
    fn single_observation_marginal() {
        let s = state_1d(0.05, &[(0.4, 0.0)]);
        let var = 1.0 + 0.05 + s.hyperparams().jitter;
        let want = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        assert!((s.log_marginal_gaussian().unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_oracle() {
        let data = [(0.1, 0.5), (0.45, -0.2), (0.8, 1.1)];
        let s = state_1d(0.01, &data);
        let d: Vec<(Vec<f64>, f64)> = data.iter().map(|(x, y)| (vec![*x], *y)).collect();
        let test: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
        let (m, v, lml) = dense_oracle(s.hyperparams(), &d, &test);
        let p = s.predict_f(&test).unwrap();
        for i in 0..test.len() {
            assert!((p.mean[i] - m[i]).abs() < 1e-8);
            assert!((p.variance[i] - v[i].max(0.0)).abs() < 1e-8);
        }
        assert!((s.log_marginal_gaussian().unwrap() - lml).abs() < 1e-10);
    }

    #[test]
    fn stale_state_is_an_error() {
        let mut s = state_1d(0.01, &[(0.1, 0.0)]);
        s.add_observation(Observation { x: vec![0.3], y: 1.0 }).unwrap();
        assert_eq!(s.predict_f(&[vec![0.5]]), Err(Error::Stale));
        s.add_sign_observation(SignObservation { x: vec![1.0], dim: 0, sign: Sign::Positive }).unwrap();
        assert!(s.log_marginal_gaussian().is_err());
        s.refit().unwrap();
        assert!(s.predict_f(&[vec![0.5]]).is_ok());
    }

    #[test]
    fn symmetric_data_gives_flat_derivative() {
        let s = state_1d(0.01, &[(0.3, 1.0), (0.7, 1.0), (0.5, -0.5)]);
        let (m, _) = s.predict_df(&[0.5], 0).unwrap();
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn derivative_mean_matches_finite_difference() {
        let s = state_1d(0.01, &[(0.1, 0.5), (0.4, -0.2), (0.9, 1.1)]);
        for x in [0.05, 0.3, 0.62, 0.97] {
            let h = 1e-5;
            let fp = s.predict_point(&[x + h]).unwrap().0;
            let fm = s.predict_point(&[x - h]).unwrap().0;
            let (m, _) = s.predict_df(&[x], 0).unwrap();
            assert!((m - (fp - fm) / (2.0 * h)).abs() < 1e-4);
        }
    }

    #[test]
    fn adding_observation_does_not_increase_variance_there() {
        let mut s = state_1d(0.01, &[(0.1, 0.5), (0.8, -0.3)]);
        let before = s.predict_point(&[0.45]).unwrap().1;
        s.add_observation(Observation { x: vec![0.45], y: 0.2 }).unwrap();
        s.refit().unwrap();
        assert!(s.predict_point(&[0.45]).unwrap().1 <= before);
    }

    #[test]
    fn joint_prediction_agrees_with_marginals() {
        let s = state_1d(0.01, &[(0.1, 0.5), (0.8, -0.3)]);
        let pts: Vec<Vec<f64>> = vec![vec![0.2], vec![0.5], vec![0.95]];
        let a = s.predict_f(&pts).unwrap();
        let b = s.predict_f_joint(&pts).unwrap();
        for i in 0..3 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-14);
            assert!((a.variance[i] - b.variance[i]).abs() < 1e-12);
        }
        let sub = s.predict_f(&pts[1..2]).unwrap();
        assert_eq!(sub.mean[0], a.mean[1]);
    }

    #[test]
    fn recovers_lengthscale_from_gp_sample() {
        // Draw n = 40 values from a GP with l = 0.5 and refit.
        let truth = KernelHyperparams::isotropic(1, 1.0, 0.5, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random::<f64>()]).collect();
        let idx: Vec<LatentIndex> = (0..40).map(|point| LatentIndex::Value { point }).collect();
        let mut k = gram_unchecked(&idx, &xs, &truth, 1e-4);
        for i in 0..40 {
            k[(i, i)] += 1e-6;
        }
        let l = k.cholesky().unwrap().l();
        let z = DVector::from_iterator(40, (0..40).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)));
        let y = l * z;
        let mut s = GpState::new(KernelHyperparams::isotropic(1, 1.0, 0.1, 0.01).unwrap()).unwrap();
        for i in 0..40 {
            s.add_observation(Observation { x: xs[i].clone(), y: y[i] }).unwrap();
        }
        let fit = fit_hyperparams(&s, &HyperFitOptions::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let ls = fit.hyperparams.lengthscales[0];
        assert!(ls > 0.25 && ls < 1.0, "fitted lengthscale {ls}");
        for v in &fit.start_values {
            assert!(fit.log_marginal >= *v - 1e-9);
        }
    }

    #[test]
    fn constant_data_fits_without_crashing() {
        let mut s = GpState::new(KernelHyperparams::isotropic(2, 1.0, 0.3, 0.01).unwrap()).unwrap();
        for i in 0..6 {
            s.add_observation(Observation { x: vec![i as f64 / 5.0, 0.5], y: 0.0 }).unwrap();
        }
        let opts = HyperFitOptions::default();
        let fit = fit_hyperparams(&s, &opts, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let hp = &fit.hyperparams;
        assert!(!fit.warning);
        assert!(hp.noise_variance <= 1e-6, "noise {}", hp.noise_variance);
        assert!(hp.signal_variance <= 0.05, "signal {}", hp.signal_variance);
        assert!(hp.signal_variance >= opts.bounds.signal_variance.0 * (1.0 - 1e-9));
        assert!(hp.noise_variance >= opts.bounds.noise_variance.0 * (1.0 - 1e-9));
    }

    #[test]
    fn fit_needs_two_points() {
        let s = state_1d(0.01, &[(0.1, 0.0)]);
        assert!(fit_hyperparams(&s, &HyperFitOptions::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
