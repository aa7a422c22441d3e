//! The optimization loops.
//!
//! * VBO: plain GP-LCB.
//! * DBO: whenever a proposal lands within `epsilon_b` of the border, project
//!   it onto the border, add a virtual derivative-sign observation pointing
//!   outwards and propose again.
//! * ADBO: like DBO, but each virtual observation must first be supported by
//!   the data (energy check), and virtual observations close to a new real
//!   evaluation are removed.
//!
//! The surrogate works in the unit cube with standardized targets; traces are
//! reported in the objective's own coordinates.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{propose_next, LcbParams};
use crate::domain::BoxDomain;
use crate::ep::{sign_support, EpOptions, DEFAULT_NU};
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams, GpState, HyperFitOptions, Observation, SignObservation};
use crate::kernel::KernelHyperparams;
use crate::objectives::{add_noise, factorial_design, NoiseModel, Objective};
use crate::probit::Sign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Vbo,
    Dbo,
    Adbo,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vbo, Variant::Dbo, Variant::Adbo];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vbo => "VBO",
            Variant::Dbo => "DBO",
            Variant::Adbo => "ADBO",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VBO" => Ok(Variant::Vbo),
            "DBO" => Ok(Variant::Dbo),
            "ADBO" => Ok(Variant::Adbo),
            _ => Err(Error::invalid(format!("unknown variant {s:?} (expected VBO, DBO or ADBO)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    /// Outward-pointing derivative sign on this side.
    pub fn outward_sign(self) -> Sign {
        match self {
            Side::Lower => Sign::Negative,
            Side::Upper => Sign::Positive,
        }
    }
}

/// A derivative-sign observation placed on the border, in the coordinates of
/// the domain it was projected onto.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSignObservation {
    pub x: Vec<f64>,
    pub dim: usize,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    pub variant: Variant,
    /// Border threshold as a fraction of each edge.
    pub epsilon_b: f64,
    /// Virtual-observation removal radius, Euclidean on the unit cube.
    pub removal_radius: f64,
    /// Objective evaluations after the initial design.
    pub budget: usize,
    pub lcb: LcbParams,
    /// Virtual additions allowed per step before an evaluation is forced.
    pub max_virtual_retries: usize,
    pub seed: u64,
    pub noise: NoiseModel,
    /// Inset of the factorial initial design, as a fraction of each edge.
    pub init_inset: f64,
    pub nu: f64,
    /// Refit hyperparameters every this many steps.
    pub refit_stride: usize,
    pub hyper_fit: HyperFitOptions,
    pub ep: EpOptions,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            variant: Variant::Dbo,
            epsilon_b: 0.01,
            removal_radius: 0.01,
            budget: 30,
            lcb: LcbParams::default(),
            max_virtual_retries: 3,
            seed: 0,
            noise: NoiseModel::none(),
            init_inset: 0.01,
            nu: DEFAULT_NU,
            refit_stride: 1,
            hyper_fit: HyperFitOptions::default(),
            ep: EpOptions::default(),
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon_b) {
            return Err(Error::invalid(format!("epsilon_b must be in [0, 0.5), got {}", self.epsilon_b)));
        }
        if !(self.removal_radius >= 0.0 && self.removal_radius.is_finite()) {
            return Err(Error::invalid(format!("removal_radius must be >= 0, got {}", self.removal_radius)));
        }
        if !(0.0..0.5).contains(&self.init_inset) {
            return Err(Error::invalid(format!("init_inset must be in [0, 0.5), got {}", self.init_inset)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(format!("nu must be > 0, got {}", self.nu)));
        }
        if self.refit_stride == 0 {
            return Err(Error::invalid("refit_stride must be >= 1"));
        }
        if !(self.noise.std >= 0.0) {
            return Err(Error::invalid("noise std must be >= 0"));
        }
        self.lcb.validate()?;
        self.hyper_fit.bounds.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Evaluation,
    VirtualAdded,
    VirtualRemoved,
    VirtualRejected,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Evaluation => "evaluation",
            EventKind::VirtualAdded => "virtual_added",
            EventKind::VirtualRemoved => "virtual_removed",
            EventKind::VirtualRejected => "virtual_rejected",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evaluation" => Ok(EventKind::Evaluation),
            "virtual_added" => Ok(EventKind::VirtualAdded),
            "virtual_removed" => Ok(EventKind::VirtualRemoved),
            "virtual_rejected" => Ok(EventKind::VirtualRejected),
            _ => Err(Error::invalid(format!("unknown event kind {s:?}"))),
        }
    }
}

/// One trace record. `iteration` is 0 for the initial design and the step
/// number (from 1) afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub iteration: usize,
    pub kind: EventKind,
    pub point: Vec<f64>,
    /// Observed (noisy) value, evaluations only.
    pub y: Option<f64>,
    /// Best noise-free value seen so far; `None` before the first evaluation.
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BoTrace {
    pub events: Vec<TraceEvent>,
    /// Seconds since the run started, one per event. Not part of equality.
    pub wall_times: Vec<f64>,
}

impl PartialEq for BoTrace {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events
    }
}

impl BoTrace {
    pub fn evaluations(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Evaluation)
    }

    pub fn evaluation_count(&self) -> usize {
        self.evaluations().count()
    }

    pub fn final_incumbent(&self) -> Option<f64> {
        self.events.last().and_then(|e| e.incumbent)
    }
}

/// Dimensions of `x` within `epsilon_b` of a border, in dimension order. A
/// coordinate close to both sides (only possible for `epsilon_b >= 0.5`)
/// reports the nearer one.
pub fn near_boundary_dims(x: &[f64], domain: &BoxDomain, epsilon_b: f64) -> Vec<(usize, Side)> {
    let mut out = Vec::new();
    for (g, v) in x.iter().enumerate() {
        let tol = epsilon_b * domain.edge(g);
        let lo = v - domain.lower()[g];
        let hi = domain.upper()[g] - v;
        if lo <= tol && lo <= hi {
            out.push((g, Side::Lower));
        } else if hi <= tol {
            out.push((g, Side::Upper));
        }
    }
    out
}

/// Snaps the flagged coordinates onto their borders and returns one outward
/// sign observation per flagged dimension.
pub fn project_and_signs(
    x: &[f64],
    domain: &BoxDomain,
    dims: &[(usize, Side)],
) -> (Vec<f64>, Vec<VirtualSignObservation>) {
    let mut xt = x.to_vec();
    for (g, side) in dims {
        xt[*g] = match side {
            Side::Lower => domain.lower()[*g],
            Side::Upper => domain.upper()[*g],
        };
    }
    let obs = dims
        .iter()
        .map(|(g, side)| VirtualSignObservation { x: xt.clone(), dim: *g, sign: side.outward_sign() })
        .collect();
    (xt, obs)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Moves flagged coordinates to exactly `epsilon_b` inside their border.
fn clip_inside(x: &[f64], domain: &BoxDomain, dims: &[(usize, Side)], epsilon_b: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    for (g, side) in dims {
        let e = epsilon_b * domain.edge(*g);
        out[*g] = match side {
            Side::Lower => domain.lower()[*g] + e,
            Side::Upper => domain.upper()[*g] - e,
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Add,
    Reject,
}

/// Adds `candidate` unless the data favours the inward sign. Ties, and EP
/// failures, add.
pub fn adbo_gate(state: &GpState, candidate: &VirtualSignObservation) -> GateDecision {
    match sign_support(state, &candidate.x, candidate.dim) {
        Ok(s) if s.admits(candidate.sign) => GateDecision::Add,
        Ok(_) => GateDecision::Reject,
        Err(e) => {
            tracing::warn!(error = %e, "sign-support check failed; adding virtual observation");
            GateDecision::Add
        }
    }
}

/// Removes every sign observation within `radius` of `x` (strictly) and
/// returns them in their original order.
pub fn remove_conflicting_virtual(state: &mut GpState, x: &[f64], radius: f64) -> Vec<SignObservation> {
    let mut removed = Vec::new();
    let mut i = 0;
    while i < state.sign_observations().len() {
        if distance(&state.sign_observations()[i].x, x) < radius {
            removed.push(state.remove_sign_observation(i));
        } else {
            i += 1;
        }
    }
    removed
}

/// A failed run, with everything recorded before the failure.
#[derive(Debug)]
pub struct RunError {
    pub source: Error,
    pub trace: BoTrace,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "optimization run failed after {} events: {}", self.trace.events.len(), self.source)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Stateful optimizer; [`run`] drives it to completion.
pub struct Optimizer<'a> {
    objective: &'a dyn Objective,
    config: BoConfig,
    unit: BoxDomain,
    state: GpState,
    /// Raw observed values, aligned with the state's observations.
    raw_y: Vec<f64>,
    incumbent: Option<f64>,
    steps: usize,
    rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    trace: BoTrace,
    started: Instant,
}

impl<'a> Optimizer<'a> {
    pub fn new(objective: &'a dyn Objective, config: BoConfig) -> Result<Self> {
        config.validate()?;
        let d = objective.dim();
        let hyper = KernelHyperparams::isotropic(d, 1.0, 0.3, 1e-2)?;
        let state = GpState::new(hyper)?.with_nu(config.nu)?.with_ep_options(config.ep.clone());
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        // Noise draws come from their own stream so that variants sharing a
        // seed see the same noise sequence regardless of their RNG use.
        let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
        noise_rng.set_stream(1);
        Ok(Optimizer {
            objective,
            config,
            unit: BoxDomain::unit(d),
            state,
            raw_y: Vec::new(),
            incumbent: None,
            steps: 0,
            rng,
            noise_rng,
            trace: BoTrace::default(),
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &GpState {
        &self.state
    }

    pub fn trace(&self) -> &BoTrace {
        &self.trace
    }

    pub fn into_trace(self) -> BoTrace {
        self.trace
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &BoConfig {
        &self.config
    }

    fn record(&mut self, kind: EventKind, unit_x: &[f64], y: Option<f64>) {
        self.trace.events.push(TraceEvent {
            iteration: self.steps,
            kind,
            point: self.objective.domain().from_unit(unit_x),
            y,
            incumbent: self.incumbent,
        });
        self.trace.wall_times.push(self.started.elapsed().as_secs_f64());
    }

    fn evaluate(&mut self, unit_x: &[f64]) -> Result<()> {
        let x = self.objective.domain().from_unit(unit_x);
        let clean = self.objective.evaluate(&x)?;
        if !clean.is_finite() {
            return Err(Error::Objective(format!("non-finite value {clean} at {x:?}")));
        }
        let y = add_noise(clean, &self.config.noise, &mut self.noise_rng);
        self.incumbent = Some(self.incumbent.map_or(clean, |b| b.min(clean)));
        self.state.add_observation(Observation { x: unit_x.to_vec(), y })?;
        self.raw_y.push(y);
        self.record(EventKind::Evaluation, unit_x, Some(y));
        Ok(())
    }

    /// Evaluates the factorial initial design.
    pub fn initialize(&mut self) -> Result<()> {
        let design = factorial_design(&self.unit, self.config.init_inset)?;
        for x in design {
            self.evaluate(&x)?;
        }
        Ok(())
    }

    fn standardize(&mut self) -> Result<()> {
        let n = self.raw_y.len() as f64;
        let mean = self.raw_y.iter().sum::<f64>() / n;
        let var = self.raw_y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = self.raw_y.iter().map(|y| (y - mean) / sd).collect();
        self.state.set_targets(&ys)
    }

    fn fit_model(&mut self) -> Result<()> {
        self.standardize()?;
        if (self.steps - 1).is_multiple_of(self.config.refit_stride) && self.state.observations().len() >= 2 {
            let fit = fit_hyperparams(&self.state, &self.config.hyper_fit, &mut self.rng)?;
            if !fit.warning {
                self.state.set_hyperparams(fit.hyperparams)?;
            }
        }
        self.state.refit()?;
        Ok(())
    }

    fn best_observed(&self) -> Option<Vec<f64>> {
        let obs = self.state.observations();
        (0..obs.len())
            .min_by(|a, b| self.raw_y[*a].total_cmp(&self.raw_y[*b]))
            .map(|i| obs[i].x.clone())
    }

    fn duplicates_existing(&self, c: &VirtualSignObservation) -> bool {
        self.state
            .sign_observations()
            .iter()
            .any(|s| s.dim == c.dim && distance(&s.x, &c.x) < self.config.removal_radius)
    }

    /// Evaluates at `x`, first dropping nearby virtual observations (ADBO).
    fn evaluate_replacing(&mut self, x: &[f64]) -> Result<()> {
        let removed = remove_conflicting_virtual(&mut self.state, x, self.config.removal_radius);
        for r in removed {
            self.record(EventKind::VirtualRemoved, &r.x, None);
        }
        self.evaluate(x)
    }

    /// One optimization step: exactly one objective evaluation, possibly
    /// preceded by virtual-observation events.
    pub fn step(&mut self) -> Result<()> {
        if self.raw_y.is_empty() {
            return Err(Error::invalid("optimizer must be initialized before stepping"));
        }
        self.steps += 1;
        self.fit_model()?;
        let beta = self.config.lcb.beta(self.steps, self.unit.dim());
        let use_virtual = self.config.variant != Variant::Vbo && self.config.epsilon_b > 0.0;
        let mut retries = 0;
        loop {
            let hint = self.best_observed();
            let proposal = propose_next(&self.state, &self.unit, &self.config.lcb, beta, hint.as_deref(), &mut self.rng)?;
            let x = proposal.x;
            let dims = if use_virtual { near_boundary_dims(&x, &self.unit, self.config.epsilon_b) } else { vec![] };
            if dims.is_empty() {
                return match self.config.variant {
                    Variant::Adbo => self.evaluate_replacing(&x),
                    _ => self.evaluate(&x),
                };
            }
            if retries >= self.config.max_virtual_retries {
                let inside = clip_inside(&x, &self.unit, &dims, self.config.epsilon_b);
                return match self.config.variant {
                    Variant::Adbo => self.evaluate_replacing(&inside),
                    _ => self.evaluate(&inside),
                };
            }
            let (_, candidates) = project_and_signs(&x, &self.unit, &dims);
            let duplicate = candidates.iter().any(|c| self.duplicates_existing(c));
            match self.config.variant {
                Variant::Dbo if duplicate => {
                    let inside = clip_inside(&x, &self.unit, &dims, self.config.epsilon_b);
                    return self.evaluate(&inside);
                }
                Variant::Adbo if duplicate => return self.evaluate_replacing(&x),
                Variant::Adbo => {
                    let rejected: Vec<&VirtualSignObservation> =
                        candidates.iter().filter(|c| adbo_gate(&self.state, c) == GateDecision::Reject).collect();
                    if !rejected.is_empty() {
                        let points: Vec<Vec<f64>> = rejected.iter().map(|c| c.x.clone()).collect();
                        for p in points {
                            self.record(EventKind::VirtualRejected, &p, None);
                        }
                        return self.evaluate_replacing(&x);
                    }
                }
                _ => {}
            }
            for c in candidates {
                self.record(EventKind::VirtualAdded, &c.x, None);
                self.state.add_sign_observation(SignObservation { x: c.x, dim: c.dim, sign: c.sign })?;
            }
            let diag = self.state.refit()?;
            if !diag.converged {
                tracing::warn!(step = self.steps, max_change = diag.max_change, "EP did not converge after virtual addition");
            }
            retries += 1;
        }
    }
}

/// Runs the initial design followed by `config.budget` steps.
pub fn run(objective: &dyn Objective, config: &BoConfig) -> std::result::Result<BoTrace, RunError> {
    let mut opt = match Optimizer::new(objective, config.clone()) {
        Ok(o) => o,
        Err(source) => return Err(RunError { source, trace: BoTrace::default() }),
    };
    let outcome = (|| {
        opt.initialize()?;
        for _ in 0..config.budget {
            opt.step()?;
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(opt.into_trace()),
        Err(source) => Err(RunError { source, trace: opt.into_trace() }),
    }
}
