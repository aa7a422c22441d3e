//! Expectation propagation for probit derivative-sign sites.
//!
//! The joint prior covers `n` function values followed by `q` derivative
//! latents. Function values carry an exact Gaussian likelihood, so the prior
//! of the derivative latents is first conditioned on `y` in closed form and
//! EP only iterates over the `q` probit sites. Each site is approximated by an
//! unnormalized Gaussian `exp(-tau/2 f^2 + loc f)` in natural parameters, which
//! keeps a zero-precision site well defined.
//!
//! The approximate log marginal likelihood is
//!
//! ```text
//! ln Z = ln N(y | 0, K_ff + s2 I)
//!      + sum_i c_i - 1/2 ln|B| - 1/2 mu0' T mu0 + loc' mu0 + 1/2 r' Sigma r
//! ```
//!
//! with `B = I + T^1/2 K0 T^1/2`, `r = loc - T mu0`, `(mu0, K0)` the
//! y-conditioned derivative prior and `c_i` the per-site log scale that makes
//! the site reproduce its tilted normalizer under its cavity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{GpState, Observation, SignObservation};
use crate::linalg::{robust_cholesky, symmetrize, Factor};
use crate::probit::{probit_tilted_moments, Sign};

/// Default probit steepness for virtual sign observations.
pub const DEFAULT_NU: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EpOptions {
    pub max_sweeps: usize,
    /// Weight given to the freshly computed site parameters in each update.
    pub damping: f64,
    /// Convergence threshold on the largest site-parameter change in a sweep,
    /// relative to the parameter's magnitude once that exceeds 1.
    pub tolerance: f64,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions { max_sweeps: 50, damping: 0.8, tolerance: 1e-6 }
    }
}

/// Natural parameters of one Gaussian site approximation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SiteParams {
    pub precision: f64,
    pub location: f64,
}

/// A probit sign likelihood on one derivative latent, with its current
/// Gaussian site approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitSite {
    pub sign: Sign,
    pub nu: f64,
    pub params: SiteParams,
}

impl ProbitSite {
    pub fn new(sign: Sign, nu: f64) -> Self {
        ProbitSite { sign, nu, params: SiteParams::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    /// Site updates skipped because the cavity variance was not positive.
    pub skipped_updates: usize,
    pub max_change: f64,
}

/// Gaussian approximation over all latents (values first, then sites).
#[derive(Debug, Clone)]
pub struct ApproxPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_marginal: f64,
    pub sites: Vec<ProbitSite>,
    pub diagnostics: EpDiagnostics,
}

/// Outcome of the site iteration, without the full joint covariance.
#[derive(Debug, Clone)]
pub(crate) struct SiteFit {
    pub params: Vec<SiteParams>,
    pub log_marginal: f64,
    pub diagnostics: EpDiagnostics,
}

fn value_block_factor(gram: &DMatrix<f64>, n: usize, noise: f64) -> Result<Factor> {
    let mut kvv = gram.view((0, 0), (n, n)).into_owned();
    let mut scale: f64 = 0.0;
    for i in 0..n {
        kvv[(i, i)] += noise;
        scale = scale.max(kvv[(i, i)]);
    }
    robust_cholesky(kvv, 1e-8 * scale, 1e-2 * scale)
}

/// Derivative-latent prior after conditioning on the value observations.
struct Conditioned {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_evidence: f64,
}

fn condition_on_values(gram: &DMatrix<f64>, n: usize, y: &[f64], noise: f64) -> Result<Conditioned> {
    let total = gram.nrows();
    let q = total - n;
    let mut cov = gram.view((n, n), (q, q)).into_owned();
    if n == 0 {
        return Ok(Conditioned { mean: DVector::zeros(q), cov, log_evidence: 0.0 });
    }
    let f = value_block_factor(gram, n, noise)?;
    let yv = DVector::from_column_slice(y);
    let w = f.solve_lower(&yv);
    let log_evidence = -0.5 * w.norm_squared() - 0.5 * f.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut mean = DVector::zeros(q);
    if q > 0 {
        let kvd = gram.view((0, n), (n, q)).into_owned();
        let v = f.solve_lower_mat(&kvd);
        mean = v.tr_mul(&w);
        cov -= v.tr_mul(&v);
        symmetrize(&mut cov);
    }
    Ok(Conditioned { mean, cov, log_evidence })
}

/// Posterior over the site latents for the given site parameters.
struct SitePosterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_det_b: f64,
}

fn site_posterior(prior: &Conditioned, params: &[SiteParams]) -> Result<SitePosterior> {
    let q = params.len();
    let sqrt_tau = DVector::from_iterator(q, params.iter().map(|p| p.precision.max(0.0).sqrt()));
    let mut b = DMatrix::identity(q, q);
    for i in 0..q {
        for j in 0..q {
            b[(i, j)] += sqrt_tau[i] * prior.cov[(i, j)] * sqrt_tau[j];
        }
    }
    let fb = robust_cholesky(b, 1e-12, 1e-6)?;
    // V = L^-1 S K0 ; Sigma = K0 - V'V
    let mut sk = prior.cov.clone();
    for i in 0..q {
        sk.row_mut(i).scale_mut(sqrt_tau[i]);
    }
    let v = fb.solve_lower_mat(&sk);
    let mut cov = &prior.cov - v.tr_mul(&v);
    symmetrize(&mut cov);
    let r = DVector::from_iterator(q, params.iter().enumerate().map(|(i, p)| p.location - p.precision * prior.mean[i]));
    let mean = &prior.mean + &cov * r;
    Ok(SitePosterior { mean, cov, log_det_b: fb.log_det() })
}

fn cavity(post: &SitePosterior, p: &SiteParams, i: usize) -> Option<(f64, f64)> {
    let sii = post.cov[(i, i)];
    let prec = 1.0 / sii - p.precision;
    if !(prec > 0.0 && prec.is_finite()) {
        return None;
    }
    let var = 1.0 / prec;
    Some((var * (post.mean[i] / sii - p.location), var))
}

fn log_marginal(prior: &Conditioned, post: &SitePosterior, signs: &[(Sign, f64)], params: &[SiteParams]) -> f64 {
    let mut total = prior.log_evidence - 0.5 * post.log_det_b;
    let mut r = DVector::zeros(params.len());
    for (i, p) in params.iter().enumerate() {
        let mu0 = prior.mean[i];
        total += -0.5 * p.precision * mu0 * mu0 + p.location * mu0;
        r[i] = p.location - p.precision * mu0;

        // A site whose cavity is degenerate is scored against the marginal.
        let (cm, cv) = cavity(post, p, i).unwrap_or((post.mean[i], post.cov[(i, i)]));
        let (sign, nu) = signs[i];
        let t = probit_tilted_moments(cm, cv, sign, nu);
        let denom = 1.0 + p.precision * cv;
        total += t.log_z + 0.5 * denom.ln()
            - (2.0 * cm * p.location + p.location * p.location * cv - cm * cm * p.precision) / (2.0 * denom);
    }
    total + 0.5 * r.dot(&(&post.cov * &r))
}

/// Runs the site iteration. `init` warm-starts the site parameters.
pub(crate) fn fit_sites(
    gram: &DMatrix<f64>,
    n_values: usize,
    y: &[f64],
    noise_variance: f64,
    signs: &[(Sign, f64)],
    init: &[SiteParams],
    opts: &EpOptions,
) -> Result<SiteFit> {
    let q = signs.len();
    if gram.nrows() != n_values + q || gram.ncols() != n_values + q {
        return Err(Error::invalid(format!(
            "gram is {}x{} but {} values and {} sites were given",
            gram.nrows(),
            gram.ncols(),
            n_values,
            q
        )));
    }
    if y.len() != n_values {
        return Err(Error::DimensionMismatch { expected: n_values, got: y.len() });
    }
    if !(0.0..=1.0).contains(&opts.damping) || opts.damping == 0.0 {
        return Err(Error::invalid(format!("EP damping must be in (0, 1], got {}", opts.damping)));
    }
    if let Some((_, nu)) = signs.iter().find(|(_, nu)| !(*nu > 0.0)) {
        return Err(Error::invalid(format!("probit scale must be > 0, got {nu}")));
    }

    let prior = condition_on_values(gram, n_values, y, noise_variance)?;
    let mut params: Vec<SiteParams> = if init.len() == q {
        init.iter().map(|p| SiteParams { precision: p.precision.max(0.0), location: p.location }).collect()
    } else {
        vec![SiteParams::default(); q]
    };
    let mut diagnostics = EpDiagnostics::default();
    if q == 0 {
        diagnostics.converged = true;
        return Ok(SiteFit { params, log_marginal: prior.log_evidence, diagnostics });
    }

    let mut post = site_posterior(&prior, &params)?;
    for sweep in 1..=opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        for i in 0..q {
            let Some((cm, cv)) = cavity(&post, &params[i], i) else {
                diagnostics.skipped_updates += 1;
                continue;
            };
            let (sign, nu) = signs[i];
            let t = probit_tilted_moments(cm, cv, sign, nu);
            if !(t.variance > 0.0 && t.variance.is_finite() && t.mean.is_finite()) {
                diagnostics.skipped_updates += 1;
                continue;
            }
            let new_prec = (1.0 / t.variance - 1.0 / cv).max(0.0);
            let new_loc = t.mean / t.variance - cm / cv;
            let old = params[i];
            let prec = (opts.damping * new_prec + (1.0 - opts.damping) * old.precision).max(0.0);
            let loc = opts.damping * new_loc + (1.0 - opts.damping) * old.location;
            let d_prec = prec - old.precision;
            let d_loc = loc - old.location;
            // Relative to magnitude: hard constraints drive precisions to 1e9 and
            // beyond, where an absolute threshold is below double resolution.
            max_change = max_change
                .max(d_prec.abs() / old.precision.abs().max(1.0))
                .max(d_loc.abs() / old.location.abs().max(1.0));
            params[i] = SiteParams { precision: prec, location: loc };

            // Rank-one refresh of the site posterior.
            let sii = post.cov[(i, i)];
            let c = d_prec / (1.0 + d_prec * sii);
            let si = post.cov.column(i).into_owned();
            let mi = post.mean[i];
            post.mean += &si * (d_loc * (1.0 - c * sii) - c * mi);
            post.cov -= &si * si.transpose() * c;
        }
        post = site_posterior(&prior, &params)?;
        diagnostics.sweeps = sweep;
        diagnostics.max_change = max_change;
        if max_change < opts.tolerance {
            diagnostics.converged = true;
            break;
        }
    }
    if !diagnostics.converged {
        tracing::debug!(sweeps = diagnostics.sweeps, max_change = diagnostics.max_change, "EP did not converge");
    }
    let log_marginal = log_marginal(&prior, &post, signs, &params);
    Ok(SiteFit { params, log_marginal, diagnostics })
}

/// Gaussian-regression view of a fitted EP state: value latents carry noise
/// `noise_variance`, sign sites with positive precision act as pseudo
/// observations `location / precision` with noise `1 / precision`.
pub(crate) fn pseudo_targets(
    n_values: usize,
    y: &[f64],
    noise_variance: f64,
    params: &[SiteParams],
) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut rows = Vec::with_capacity(n_values + params.len());
    let mut targets = Vec::with_capacity(rows.capacity());
    let mut noise = Vec::with_capacity(rows.capacity());
    for (i, yi) in y.iter().enumerate() {
        rows.push(i);
        targets.push(*yi);
        noise.push(noise_variance);
    }
    for (j, p) in params.iter().enumerate() {
        if p.precision > 0.0 {
            rows.push(n_values + j);
            targets.push(p.location / p.precision);
            noise.push(1.0 / p.precision);
        }
    }
    (rows, targets, noise)
}

/// Fits EP to a joint prior over `n_values` function values followed by one
/// derivative latent per entry of `sites`, and returns the Gaussian
/// approximation over every latent.
///
/// The parameters already stored in `sites` are used as the starting point.
pub fn ep_fit(
    gram: &DMatrix<f64>,
    n_values: usize,
    y: &[f64],
    noise_variance: f64,
    sites: &[ProbitSite],
    opts: &EpOptions,
) -> Result<ApproxPosterior> {
    let signs: Vec<(Sign, f64)> = sites.iter().map(|s| (s.sign, s.nu)).collect();
    let init: Vec<SiteParams> = sites.iter().map(|s| s.params).collect();
    let fit = fit_sites(gram, n_values, y, noise_variance, &signs, &init, opts)?;

    let (rows, targets, noise) = pseudo_targets(n_values, y, noise_variance, &fit.params);
    let total = gram.nrows();
    let m = rows.len();
    let mut a = DMatrix::from_fn(m, m, |i, j| gram[(rows[i], rows[j])]);
    for i in 0..m {
        a[(i, i)] += noise[i];
    }
    let (mean, mut covariance) = if m == 0 {
        (DVector::zeros(total), gram.clone())
    } else {
        let scale = (0..m).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let f = robust_cholesky(a, 1e-8 * scale, 1e-2 * scale)?;
        let k_train_all = DMatrix::from_fn(m, total, |i, j| gram[(rows[i], j)]);
        let alpha = f.solve(&DVector::from_vec(targets));
        let mean = k_train_all.tr_mul(&alpha);
        let v = f.solve_lower_mat(&k_train_all);
        (mean, gram - v.tr_mul(&v))
    };
    symmetrize(&mut covariance);

    let sites = sites
        .iter()
        .zip(&fit.params)
        .map(|(s, p)| ProbitSite { params: *p, ..*s })
        .collect();
    Ok(ApproxPosterior { mean, covariance, log_marginal: fit.log_marginal, sites, diagnostics: fit.diagnostics })
}

/// Energy gaps at or below this many nats count as a tie in [`sign_support`].
pub const SIGN_TIE_TOLERANCE: f64 = 1e-9;

/// Model-fit energy `E = -ln p(y, m | X, X~)` of a fitted state.
///
/// With a `holdout`, returns the conditional energy of the held-out values
/// given everything already in the state, `E(all) - E(state)`.
pub fn energy(state: &GpState, holdout: Option<&[Observation]>) -> Result<f64> {
    let base = -state.log_marginal()?;
    match holdout {
        None => Ok(base),
        Some([]) => Ok(0.0),
        Some(h) => {
            let mut aug = state.clone();
            for o in h {
                aug.add_observation(o.clone())?;
            }
            aug.refit()?;
            Ok(-aug.log_marginal()? - base)
        }
    }
}

/// Result of comparing the two possible sign observations at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSupport {
    /// Lower-energy sign, `None` on a tie.
    pub preferred: Option<Sign>,
    /// `E(other) - E(preferred)`, never negative.
    pub gap: f64,
    pub energy_positive: f64,
    pub energy_negative: f64,
}

impl SignSupport {
    /// Whether the data is at least neutral about observing `sign`.
    pub fn admits(&self, sign: Sign) -> bool {
        self.preferred.is_none_or(|p| p == sign)
    }
}

/// Fits the state once with `df/dx_j > 0` observed at `x` and once with
/// `df/dx_j < 0`, and reports which sign the existing data supports.
pub fn sign_support(state: &GpState, x: &[f64], j: usize) -> Result<SignSupport> {
    let energy_with = |sign: Sign| -> Result<f64> {
        let mut s = state.clone();
        s.add_sign_observation(SignObservation { x: x.to_vec(), dim: j, sign })?;
        s.refit()?;
        Ok(-s.log_marginal()?)
    };
    let energy_positive = energy_with(Sign::Positive)?;
    let energy_negative = energy_with(Sign::Negative)?;
    let diff = energy_negative - energy_positive;
    let preferred = if diff.abs() <= SIGN_TIE_TOLERANCE {
        None
    } else if diff > 0.0 {
        Some(Sign::Positive)
    } else {
        Some(Sign::Negative)
    };
    Ok(SignSupport { preferred, gap: diff.abs(), energy_positive, energy_negative })
}
