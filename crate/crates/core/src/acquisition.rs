//! Lower confidence bound acquisition, `mean - beta * sd`, minimized over the
//! box by multistart projected quasi-Newton search.

use std::f64::consts::PI;

use rand::Rng;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::gp::GpState;
use crate::optim::{minimize_box, shifted_halton, BoxOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum BetaSchedule {
    Constant(f64),
    /// `beta_n = 2 ln(n^(d/2 + 2) pi^2 / (3 delta))`.
    Theoretical { delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcbParams {
    pub schedule: BetaSchedule,
    /// Local searches per input dimension.
    pub starts_per_dim: usize,
    pub local: BoxOptions,
}

impl Default for LcbParams {
    fn default() -> Self {
        LcbParams {
            schedule: BetaSchedule::Constant(2.0),
            starts_per_dim: 10,
            local: BoxOptions { max_evals: 200, fd_step: 1e-6, ..BoxOptions::default() },
        }
    }
}

impl LcbParams {
    pub fn validate(&self) -> Result<()> {
        match self.schedule {
            BetaSchedule::Constant(b) if !(b >= 0.0 && b.is_finite()) => {
                Err(Error::invalid(format!("beta must be >= 0, got {b}")))
            }
            BetaSchedule::Theoretical { delta } if !(delta > 0.0 && delta < 1.0) => {
                Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")))
            }
            _ => Ok(()),
        }
    }

    /// Exploration weight at iteration `n` (1-based) in dimension `d`.
    pub fn beta(&self, n: usize, d: usize) -> f64 {
        match self.schedule {
            BetaSchedule::Constant(b) => b,
            BetaSchedule::Theoretical { delta } => {
                let n = n.max(1) as f64;
                let b = 2.0 * ((d as f64 / 2.0 + 2.0) * n.ln() + (PI * PI / (3.0 * delta)).ln());
                b.max(0.0)
            }
        }
    }
}

pub fn lcb_value(mean: f64, sd: f64, beta: f64) -> f64 {
    mean - beta * sd
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub value: f64,
    /// Acquisition at every multistart seed, in start order.
    pub seed_values: Vec<f64>,
    /// Set when every local search failed and a seed point was returned.
    pub warning: bool,
}

fn lcb_at(state: &GpState, x: &[f64], beta: f64) -> f64 {
    match state.predict_point(x) {
        Ok((m, v)) => lcb_value(m, v.sqrt(), beta),
        Err(_) => f64::INFINITY,
    }
}

/// Minimizes LCB over `domain`, whose coordinates must match the state's.
///
/// Seeds are `starts_per_dim * d` shifted-Halton points followed by
/// `incumbent` when given; the best local optimum wins, ties going to the
/// lowest start index.
pub fn propose_next<R: Rng + ?Sized>(
    state: &GpState,
    domain: &BoxDomain,
    params: &LcbParams,
    beta: f64,
    incumbent: Option<&[f64]>,
    rng: &mut R,
) -> Result<Proposal> {
    if domain.dim() != state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: domain.dim() });
    }
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta must be >= 0, got {beta}")));
    }
    if !state.is_fitted() {
        return Err(Error::Stale);
    }
    let d = domain.dim();
    let mut seeds: Vec<Vec<f64>> = shifted_halton(params.starts_per_dim.max(1) * d, d, rng)
        .into_iter()
        .map(|u| domain.from_unit(&u))
        .collect();
    if let Some(x) = incumbent {
        let mut x = x.to_vec();
        domain.clamp(&mut x);
        seeds.push(x);
    }

    let seed_values: Vec<f64> = seeds.iter().map(|s| lcb_at(state, s, beta)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &seeds {
        let r = minimize_box(|x| lcb_at(state, x, beta), s, domain.lower(), domain.upper(), &params.local);
        if r.value.is_finite() && best.as_ref().is_none_or(|(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    match best {
        Some((mut x, value)) => {
            domain.clamp(&mut x);
            Ok(Proposal { x, value, seed_values, warning: false })
        }
        None => {
            let (i, v) = seed_values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv <= *v => acc,
                    _ => Some((i, *v)),
                })
                .ok_or_else(|| Error::invalid("acquisition is not finite at any candidate"))?;
            tracing::warn!("all local acquisition searches failed; using best seed");
            Ok(Proposal { x: seeds[i].clone(), value: v, seed_values, warning: true })
        }
    }
}
