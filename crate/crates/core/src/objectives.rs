//! Synthetic objectives, observation noise and the initial design.
//!
//! Families:
//!
//! * `two_gaussian`: a fixed 2D function made of two interior Gaussian wells
//!   of unequal depth on the unit square.
//! * `mnd` / `mnd_border`: one randomly oriented Gaussian well in the unit
//!   cube, scaled so the minimum value is -1. The interior variant draws the
//!   centre from the central 80% of the box; the border variant places it on a
//!   uniformly chosen facet.
//! * `library`: three standard 3D multimodal test functions (Hartmann-3,
//!   Levy, Styblinski-Tang), selected by seed.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

/// A deterministic, noise-free function on a box.
pub trait Objective: Send + Sync {
    fn domain(&self) -> &BoxDomain;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn dim(&self) -> usize {
        self.domain().dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    TwoGaussian,
    Mnd,
    MndBorder,
    Library,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::TwoGaussian => "two_gaussian",
            Family::Mnd => "mnd",
            Family::MndBorder => "mnd_border",
            Family::Library => "library",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_gaussian" => Ok(Family::TwoGaussian),
            "mnd" => Ok(Family::Mnd),
            "mnd_border" => Ok(Family::MndBorder),
            "library" => Ok(Family::Library),
            _ => Err(Error::invalid(format!(
                "unknown suite {s:?} (expected two_gaussian, mnd, mnd_border or library)"
            ))),
        }
    }
}

/// `-weight * exp(-1/2 (x - c)' P (x - c))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Well {
    pub center: Vec<f64>,
    pub precision: DMatrix<f64>,
    pub weight: f64,
}

impl Well {
    fn value(&self, x: &[f64]) -> f64 {
        let r = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, c)| a - c));
        -self.weight * (-0.5 * r.dot(&(&self.precision * &r))).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Evaluator {
    Wells(Vec<Well>),
    Hartmann3,
    Levy,
    StyblinskiTang,
}

impl Evaluator {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Evaluator::Wells(ws) => ws.iter().map(|w| w.value(x)).sum(),
            Evaluator::Hartmann3 => hartmann3(x),
            Evaluator::Levy => levy(x),
            Evaluator::StyblinskiTang => x.iter().map(|v| 0.5 * (v.powi(4) - 16.0 * v * v + 5.0 * v)).sum(),
        }
    }
}

fn hartmann3(x: &[f64]) -> f64 {
    const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
    const A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
    const P: [[f64; 3]; 4] = [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.0381, 0.5743, 0.8828],
    ];
    -(0..4)
        .map(|i| {
            let s: f64 = (0..3).map(|j| A[i][j] * (x[j] - P[i][j]).powi(2)).sum();
            ALPHA[i] * (-s).exp()
        })
        .sum::<f64>()
}

fn levy(x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let mut s = (PI * w[0]).sin().powi(2);
    for wi in &w[..d - 1] {
        s += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
    }
    s + (w[d - 1] - 1.0).powi(2) * (1.0 + (2.0 * PI * w[d - 1]).sin().powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    /// Stable identifier of this instance, e.g. `mnd:17`.
    pub id: String,
    pub family: Family,
    domain: BoxDomain,
    evaluator: Evaluator,
    /// Global minimizer and its value.
    pub known_minimum: Option<(Vec<f64>, f64)>,
}

impl ObjectiveSpec {
    fn new(id: String, family: Family, domain: BoxDomain, evaluator: Evaluator, minimizer: Option<Vec<f64>>) -> Self {
        let known_minimum = minimizer.map(|x| {
            let v = evaluator.eval(&x);
            (x, v)
        });
        ObjectiveSpec { id, family, domain, evaluator, known_minimum }
    }

    /// The Gaussian wells, when this objective is built from them.
    pub fn wells(&self) -> Option<&[Well]> {
        match &self.evaluator {
            Evaluator::Wells(w) => Some(w),
            _ => None,
        }
    }
}

impl Objective for ObjectiveSpec {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch { expected: self.domain.dim(), got: x.len() });
        }
        Ok(self.evaluator.eval(x))
    }
}

fn isotropic_well(center: Vec<f64>, sd: f64, weight: f64) -> Well {
    let d = center.len();
    Well { center, precision: DMatrix::identity(d, d) / (sd * sd), weight }
}

/// Two interior Gaussian wells on the unit square. The deeper well at
/// (0.3, 0.35) holds the global minimum (about -1); the shallower one at
/// (0.72, 0.7) has depth 0.6.
pub fn two_gaussian_2d() -> ObjectiveSpec {
    let wells = vec![isotropic_well(vec![0.3, 0.35], 0.12, 1.0), isotropic_well(vec![0.72, 0.7], 0.1, 0.6)];
    ObjectiveSpec::new(
        "two_gaussian".into(),
        Family::TwoGaussian,
        BoxDomain::unit(2),
        Evaluator::Wells(wells),
        Some(vec![0.3, 0.35]),
    )
}

/// Distance from the border, as a fraction of the edge, that counts as "on the border".
pub const INTERIOR_MARGIN: f64 = 0.01;

/// Random oriented Gaussian well in the unit cube, deterministic per seed.
pub fn random_mnd(seed: u64, dim: usize, interior: bool) -> Result<ObjectiveSpec> {
    if dim == 0 {
        return Err(Error::invalid("random_mnd needs dim >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = BoxDomain::unit(dim);
    for _ in 0..1000 {
        let a = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let s = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.01;
        let eig = SymmetricEigen::new(s);
        // Orientation from A A' + 0.1^2 I, axis scales between 10% and 50% of the edge.
        let sds: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..0.5)).collect();
        let inv = DMatrix::from_diagonal(&DVector::from_iterator(dim, sds.iter().map(|s| 1.0 / (s * s))));
        let q: &DMatrix<f64> = &eig.eigenvectors;
        let mut precision = q * inv * q.transpose();
        precision = (&precision + precision.transpose()) * 0.5;

        let mut center: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..0.9)).collect();
        if !interior {
            let g = rng.random_range(0..dim);
            center[g] = if rng.random::<bool>() { 1.0 } else { 0.0 };
        } else if center.iter().any(|c| *c <= INTERIOR_MARGIN || *c >= 1.0 - INTERIOR_MARGIN) {
            continue;
        }
        let (family, tag) = if interior { (Family::Mnd, "mnd") } else { (Family::MndBorder, "mnd_border") };
        let well = Well { center: center.clone(), precision, weight: 1.0 };
        return Ok(ObjectiveSpec::new(
            format!("{tag}:{seed}"),
            family,
            domain,
            Evaluator::Wells(vec![well]),
            Some(center),
        ));
    }
    Err(Error::Construction(format!("no acceptable MND draw for seed {seed} after 1000 attempts")))
}

/// One of the three library functions in 3D, chosen by `seed % 3`.
pub fn library_function(seed: u64) -> ObjectiveSpec {
    match seed % 3 {
        0 => ObjectiveSpec::new(
            "library:hartmann3".into(),
            Family::Library,
            BoxDomain::unit(3),
            Evaluator::Hartmann3,
            Some(vec![0.114_614, 0.555_649, 0.852_547]),
        ),
        1 => ObjectiveSpec::new(
            "library:levy3".into(),
            Family::Library,
            BoxDomain::new(vec![-10.0; 3], vec![10.0; 3]).expect("valid box"),
            Evaluator::Levy,
            Some(vec![1.0; 3]),
        ),
        _ => ObjectiveSpec::new(
            "library:styblinski_tang3".into(),
            Family::Library,
            BoxDomain::new(vec![-5.0; 3], vec![5.0; 3]).expect("valid box"),
            Evaluator::StyblinskiTang,
            Some(vec![-2.903_534_027_771_177; 3]),
        ),
    }
}

/// Instance of `family` for `seed`. `two_gaussian` ignores the seed.
pub fn make_objective(family: Family, seed: u64) -> Result<ObjectiveSpec> {
    match family {
        Family::TwoGaussian => Ok(two_gaussian_2d()),
        Family::Mnd => random_mnd(seed, 3, true),
        Family::MndBorder => random_mnd(seed, 3, false),
        Family::Library => Ok(library_function(seed)),
    }
}

/// Additive Gaussian observation noise with standard deviation `std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub std: f64,
}

impl NoiseModel {
    pub fn new(std: f64) -> Result<Self> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(Error::invalid(format!("noise std must be >= 0, got {std}")));
        }
        Ok(NoiseModel { std })
    }

    pub fn none() -> Self {
        NoiseModel { std: 0.0 }
    }
}

pub fn add_noise<R: Rng + ?Sized>(y: f64, noise: &NoiseModel, rng: &mut R) -> f64 {
    if noise.std == 0.0 {
        return y;
    }
    let e: f64 = StandardNormal.sample(rng);
    y + noise.std * e
}

/// Two-level full factorial design: every combination of
/// `lower + inset * edge` and `upper - inset * edge`, first dimension most
/// significant.
pub fn factorial_design(domain: &BoxDomain, inset: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..0.5).contains(&inset) {
        return Err(Error::invalid(format!("inset must be in [0, 0.5), got {inset}")));
    }
    let d = domain.dim();
    if d > 20 {
        return Err(Error::invalid("factorial design limited to 20 dimensions"));
    }
    let levels: Vec<(f64, f64)> = (0..d)
        .map(|g| {
            let e = domain.edge(g);
            if inset == 0.0 {
                (domain.lower()[g], domain.upper()[g])
            } else {
                (domain.lower()[g] + inset * e, domain.upper()[g] - inset * e)
            }
        })
        .collect();
    Ok((0..1usize << d)
        .map(|i| (0..d).map(|g| if (i >> (d - 1 - g)) & 1 == 0 { levels[g].0 } else { levels[g].1 }).collect())
        .collect())
}
