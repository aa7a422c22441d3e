//! Small derivative-free-interface optimizers used for hyperparameter fitting
//! and acquisition search: a projected quasi-Newton method on a box with
//! finite-difference gradients, and a shifted Halton sequence for multistart
//! seeding.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxOptions {
    /// Budget of objective evaluations, gradient evaluations included.
    pub max_evals: usize,
    pub fd_step: f64,
    /// Central differences cost `2d` evaluations per gradient, forward `d`.
    pub central_differences: bool,
    /// Stop once the projected gradient's largest entry falls below this.
    pub gradient_tolerance: f64,
    /// Stop once a step improves the objective by less than this (relative).
    pub value_tolerance: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        BoxOptions {
            max_evals: 200,
            fd_step: 1e-6,
            central_differences: false,
            gradient_tolerance: 1e-6,
            value_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn gradient<F: FnMut(&[f64]) -> f64>(
    f: &mut Counted<F>,
    x: &[f64],
    fx: f64,
    lower: &[f64],
    upper: &[f64],
    opts: &BoxOptions,
) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = opts.fd_step * (1.0 + x[i].abs());
        let up_ok = x[i] + h <= upper[i];
        let down_ok = x[i] - h >= lower[i];
        g[i] = if opts.central_differences && up_ok && down_ok {
            probe[i] = x[i] + h;
            let fp = f.call(&probe);
            probe[i] = x[i] - h;
            let fm = f.call(&probe);
            (fp - fm) / (2.0 * h)
        } else if up_ok {
            probe[i] = x[i] + h;
            (f.call(&probe) - fx) / h
        } else {
            probe[i] = x[i] - h;
            (fx - f.call(&probe)) / h
        };
        probe[i] = x[i];
        if !g[i].is_finite() {
            g[i] = 0.0;
        }
    }
    g
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// The returned value is never worse than `f(clamp(x0))`.
pub fn minimize_box<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &BoxOptions,
) -> BoxResult {
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bounds must match the start point");
    let mut f = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut fx = f.call(&x);
    if !fx.is_finite() || n == 0 {
        return BoxResult { x, value: fx, evals: f.evals, converged: false };
    }
    let span: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut g = gradient(&mut f, &x, fx, lower, upper, opts);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;

    while f.evals < opts.max_evals {
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let pg = (0..n).filter(|i| free[*i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < opts.gradient_tolerance {
            converged = true;
            break;
        }

        let gv = DVector::from_iterator(n, (0..n).map(|i| if free[i] { g[i] } else { 0.0 }));
        let mut d = -(&h_inv * &gv);
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if d.dot(&gv) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            d = -gv.clone();
        }
        // Keep the first trial step within a quarter of the box.
        let mut alpha: f64 = 1.0;
        for i in 0..n {
            if d[i].abs() * alpha > 0.25 * span[i] {
                alpha = 0.25 * span[i] / d[i].abs();
            }
        }

        let mut accepted = None;
        while f.evals < opts.max_evals {
            let mut xt: Vec<f64> = (0..n).map(|i| x[i] + alpha * d[i]).collect();
            project(&mut xt, lower, upper);
            let decrease: f64 = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
            if xt == x {
                break;
            }
            let ft = f.call(&xt);
            if ft <= fx + 1e-4 * decrease.min(0.0) && ft < f64::INFINITY {
                accepted = Some((xt, ft));
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
        let Some((xt, ft)) = accepted else {
            converged = true;
            break;
        };
        let improvement = fx - ft;
        let gt = gradient(&mut f, &xt, ft, lower, upper, opts);
        let s = DVector::from_iterator(n, (0..n).map(|i| xt[i] - x[i]));
        let yv = DVector::from_iterator(n, (0..n).map(|i| gt[i] - g[i]));
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            h_inv += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = xt;
        fx = ft;
        g = gt;
        if improvement <= opts.value_tolerance * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
    }
    BoxResult { x, value: fx, evals: f.evals, converged }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    r
}

/// `count` points of a Halton sequence in `[0, 1)^dim` with a random
/// Cranley-Patterson shift drawn from `rng`.
pub fn shifted_halton<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|g| {
                    let v = radical_inverse(i, PRIMES[g]) + shift[g];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}
