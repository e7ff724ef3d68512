//! Numerics of the rank controllability condition.
//!
//! The `N`-step flow map `φ(N, 0, x, u)` is differentiated with respect to
//! the stacked input `(u(0), …, u(N−1))`, giving an `n × N·m` matrix whose
//! column blocks follow the time order (the `u(0)` block first). Rank is
//! counted relative to the largest singular value. Local steering solves
//! `φ(N, 0, x0, u) = 0` by minimal-norm Gauss–Newton.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const DEFAULT_TAU: f64 = 1e-8;

/// Central-difference step `ε_mach^{1/3} · max(1, |v|)`.
pub fn fd_step(v: f64) -> f64 {
    f64::EPSILON.cbrt() * v.abs().max(1.0)
}

fn check_stack(model: &SystemModel, u_stack: &[f64], horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if u_stack.len() != horizon * model.m() {
        return Err(Error::InvalidArgument(format!(
            "stacked input has length {}, expected N·m = {}",
            u_stack.len(),
            horizon * model.m()
        )));
    }
    Ok(())
}

fn ensure_finite(j: DMatrix<f64>) -> Result<DMatrix<f64>> {
    match j.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFiniteJacobian {
            row: p % j.nrows(),
            col: p / j.nrows(),
        }),
        None => Ok(j),
    }
}

/// Central finite differences of the flow map, one column per stacked input
/// component.
pub fn input_jacobian_fd(
    model: &SystemModel,
    x: &[f64],
    u_stack: &[f64],
    horizon: usize,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    check_stack(model, u_stack, horizon)?;
    let n = model.n();
    let cols = par::try_map_range(exec, u_stack.len(), |k| {
        let h = fd_step(u_stack[k]);
        let mut up = u_stack.to_vec();
        let mut down = u_stack.to_vec();
        up[k] += h;
        down[k] -= h;
        let (fp, fm) = (model.flow_stacked(x, &up)?, model.flow_stacked(x, &down)?);
        let width = up[k] - down[k];
        Ok::<_, Error>(fp.iter().zip(&fm).map(|(a, b)| (a - b) / width).collect::<Vec<f64>>())
    })?;
    ensure_finite(DMatrix::from_fn(n, u_stack.len(), |i, k| cols[k][i]))
}

/// Chain-rule composition of the model's closed-form Jacobians, or `None`
/// when the model has none.
pub fn input_jacobian_chain(
    model: &SystemModel,
    x: &[f64],
    u_stack: &[f64],
    horizon: usize,
) -> Result<Option<DMatrix<f64>>> {
    check_stack(model, u_stack, horizon)?;
    if !model.has_jacobian() {
        return Ok(None);
    }
    let (n, m) = (model.n(), model.m());
    let mut states = Vec::with_capacity(horizon);
    let mut state = x.to_vec();
    for (step, u) in u_stack.chunks(m).enumerate() {
        let next = model
            .evaluate(&state, u)
            .map_err(|source| Error::FlowStep { step, source })?;
        states.push(std::mem::replace(&mut state, next));
    }
    let mut jac = DMatrix::zeros(n, horizon * m);
    let mut sens = DMatrix::<f64>::identity(n, n);
    for k in (0..horizon).rev() {
        let (fx, fu) = model.partials(&states[k], &u_stack[k * m..(k + 1) * m]).unwrap();
        jac.view_mut((0, k * m), (n, m)).copy_from(&(&sens * fu));
        sens *= fx;
    }
    ensure_finite(jac).map(Some)
}

/// Input Jacobian of `φ(N, 0, x, ·)`: closed form when available, central
/// differences otherwise.
pub fn input_jacobian(model: &SystemModel, x: &[f64], u_stack: &[f64], horizon: usize) -> Result<DMatrix<f64>> {
    match input_jacobian_chain(model, x, u_stack, horizon)? {
        Some(j) => Ok(j),
        None => input_jacobian_fd(model, x, u_stack, horizon, Execution::Sequential),
    }
}

/// Singular values in nonincreasing order.
pub fn singular_values(j: &DMatrix<f64>) -> Vec<f64> {
    if j.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = j.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tau · σ_max`; 0 when `σ_max = 0`.
pub fn rank_from_singular_values(s: &[f64], tau: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > tau * top).count(),
        _ => 0,
    }
}

pub fn matrix_rank(j: &DMatrix<f64>, tau: f64) -> usize {
    rank_from_singular_values(&singular_values(j), tau)
}

/// Kalman controllability matrix `[B, AB, …, A^{N−1}B]`.
pub fn kalman_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    let (n, m) = (b.nrows(), b.ncols());
    let mut out = DMatrix::zeros(n, horizon * m);
    let mut block = b.clone();
    for k in 0..horizon {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// Halton points with a seeded Cranley–Patterson rotation, in `[0, 1)^dim`.
pub fn halton_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count)
        .map(|i| {
            primes
                .iter()
                .zip(&shift)
                .map(|(&p, s)| (radical_inverse(i as u64, p) + s).fract())
                .collect()
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankSample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub system: String,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub n: usize,
    pub tau: f64,
    pub radius: f64,
    pub seed: u64,
    /// Jacobian at the origin, row-major.
    pub jacobian: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Rank at the origin.
    pub rank: usize,
    /// Origin first, then the sampled neighborhood points.
    pub samples: Vec<RankSample>,
    pub holds_on_neighborhood: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankCheck {
    pub horizon: usize,
    pub radius: f64,
    pub samples: usize,
    pub tau: f64,
    pub seed: u64,
}

/// Rank of the input Jacobian at the origin and at quasi-random points of
/// the box of half-width `radius` around `(x, u) = 0`.
pub fn check_rank_condition(model: &SystemModel, check: &RankCheck, exec: Execution) -> Result<RankReport> {
    let RankCheck {
        horizon,
        radius,
        samples,
        tau,
        seed,
    } = *check;
    if samples == 0 || !(radius > 0.0) || horizon == 0 || !(tau >= 0.0) {
        return Err(Error::InvalidArgument(
            "rank check needs samples ≥ 1, radius > 0, N ≥ 1, tau ≥ 0".into(),
        ));
    }
    let (n, m) = (model.n(), model.m());
    let dim = n + horizon * m;
    let mut points = vec![vec![0.0; dim]];
    points.extend(
        halton_points(dim, samples, seed)
            .into_iter()
            .map(|p| p.into_iter().map(|v| (2.0 * v - 1.0) * radius).collect()),
    );
    let evaluated = par::try_map_range(exec, points.len(), |i| {
        let (x, u) = points[i].split_at(n);
        let j = input_jacobian(model, x, u, horizon)?;
        let s = singular_values(&j);
        let rank = rank_from_singular_values(&s, tau);
        Ok::<_, Error>((
            j,
            RankSample {
                x: x.to_vec(),
                u: u.to_vec(),
                singular_values: s,
                rank,
            },
        ))
    })?;
    let jac0 = &evaluated[0].0;
    let jacobian = (0..jac0.nrows())
        .map(|r| jac0.row(r).iter().copied().collect())
        .collect();
    let samples: Vec<RankSample> = evaluated.into_iter().map(|(_, s)| s).collect();
    Ok(RankReport {
        system: model.name().to_string(),
        horizon,
        n,
        tau,
        radius,
        seed,
        jacobian,
        singular_values: samples[0].singular_values.clone(),
        rank: samples[0].rank,
        holds_on_neighborhood: samples.iter().all(|s| s.rank == n),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringProblem {
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub initial_guess: Vec<f64>,
}

impl SteeringProblem {
    pub fn new(model: &SystemModel, x0: Vec<f64>, horizon: usize, initial_guess: Option<Vec<f64>>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if x0.len() != model.n() {
            return Err(Error::InvalidArgument(format!(
                "x0 has {} components, model has n={}",
                x0.len(),
                model.n()
            )));
        }
        let initial_guess = initial_guess.unwrap_or_else(|| vec![0.0; horizon * model.m()]);
        check_stack(model, &initial_guess, horizon)?;
        Ok(SteeringProblem {
            x0,
            horizon,
            initial_guess,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Steering {
    /// Stacked inputs `(u(0), …, u(N−1))`.
    pub inputs: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Minimal-norm Gauss–Newton on `φ(N, 0, x0, u) = 0`.
pub fn steer_to_origin(
    model: &SystemModel,
    problem: &SteeringProblem,
    tol: f64,
    max_iters: usize,
    tau: f64,
) -> Result<Steering> {
    let n = model.n();
    let mut u = problem.initial_guess.clone();
    check_stack(model, &u, problem.horizon)?;
    let mut iteration = 0;
    loop {
        let r = model.flow_stacked(&problem.x0, &u)?;
        let residual = DVector::from_column_slice(&r).norm();
        if residual <= tol {
            return Ok(Steering {
                inputs: u,
                iterations: iteration,
                residual,
            });
        }
        if iteration == max_iters {
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual,
            });
        }
        let j = input_jacobian(model, &problem.x0, &u, problem.horizon)?;
        let svd = j.svd(true, true);
        let top = svd.singular_values.max();
        let cutoff = tau * top;
        let rank = svd.singular_values.iter().filter(|&&s| top > 0.0 && s > cutoff).count();
        if rank < n {
            return Err(Error::SingularStep { iteration, rank, n });
        }
        let step = svd
            .solve(&DVector::from_column_slice(&r), cutoff)
            .map_err(|e| Error::InternalInconsistency(e.to_string()))?;
        for (ui, si) in u.iter_mut().zip(step.iter()) {
            *ui -= si;
        }
        iteration += 1;
    }
}
