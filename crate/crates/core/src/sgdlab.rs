//! SGD on quadratic objectives with γ-dependent gradient noise.
//!
//! f(θ) = ½ θᵀHθ with H = Q diag(λ) Qᵀ is L-smooth with L = max λ and
//! satisfies the PL inequality with μ = min λ exactly; θ* = 0.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    eigs: Vec<f64>,
    rotation_seed: u64,
    rotation: DMatrix<f64>,
    hessian: DMatrix<f64>,
}

impl QuadraticProblem {
    pub fn new(hessian_eigs: Vec<f64>, rotation_seed: u64) -> Result<Self> {
        if hessian_eigs.is_empty() {
            return Err(Error::Precondition("need at least one eigenvalue".into()));
        }
        if hessian_eigs.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Precondition("hessian eigenvalues must be positive".into()));
        }
        let dim = hessian_eigs.len();
        let rotation = random_orthogonal(dim, rotation_seed);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(hessian_eigs.clone()));
        let mut hessian = &rotation * diag * rotation.transpose();
        // symmetrize away rounding
        hessian = (&hessian + hessian.transpose()) * 0.5;
        Ok(Self {
            eigs: hessian_eigs,
            rotation_seed,
            rotation,
            hessian,
        })
    }

    /// Eigenvalues evenly spaced over `[mu, l_smooth]`.
    pub fn with_spread(dim: usize, mu: f64, l_smooth: f64, rotation_seed: u64) -> Result<Self> {
        if dim == 0 || mu > l_smooth {
            return Err(Error::Precondition("need dim >= 1 and mu <= L".into()));
        }
        let eigs = if dim == 1 {
            vec![mu]
        } else {
            (0..dim)
                .map(|i| mu + (l_smooth - mu) * i as f64 / (dim - 1) as f64)
                .collect()
        };
        Self::new(eigs, rotation_seed)
    }

    pub fn dim(&self) -> usize {
        self.eigs.len()
    }

    pub fn mu(&self) -> f64 {
        self.eigs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l_smooth(&self) -> f64 {
        self.eigs.iter().copied().fold(0.0, f64::max)
    }

    pub fn hessian_eigs(&self) -> &[f64] {
        &self.eigs
    }

    pub fn rotation_seed(&self) -> u64 {
        self.rotation_seed
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Unit eigenvector for `hessian_eigs()[i]`.
    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.rotation.column(i).into_owned()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.hessian * theta))
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.hessian * theta
    }

    /// Fixed start: the normalized all-ones vector.
    pub fn initial_point(&self) -> DVector<f64> {
        let d = self.dim();
        DVector::from_element(d, 1.0 / (d as f64).sqrt())
    }
}

fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    if dim == 1 {
        return DMatrix::identity(1, 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign-fix so the factor is uniquely determined
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma0_sq: f64,
    pub c: f64,
    pub gamma: f64,
}

impl NoiseModel {
    pub fn new(sigma0_sq: f64, c: f64, gamma: f64) -> Result<Self> {
        if !(sigma0_sq > 0.0) {
            return Err(Error::Precondition("sigma0_sq must be positive".into()));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Precondition("c must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Precondition("gamma must lie in [0, 1]".into()));
        }
        Ok(Self { sigma0_sq, c, gamma })
    }

    /// σ²(γ) = σ₀²(1 − cγ).
    pub fn variance(&self) -> f64 {
        (self.sigma0_sq * (1.0 - self.c * self.gamma)).max(0.0)
    }
}

/// Max over coordinates of the central-difference error against Hθ,
/// relative to 1 + |(Hθ)_i|.
pub fn grad_check(problem: &QuadraticProblem, point: &DVector<f64>, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Precondition("finite-difference step must be positive".into()));
    }
    if point.len() != problem.dim() {
        return Err(Error::Shape(format!(
            "point has dim {}, problem {}",
            point.len(),
            problem.dim()
        )));
    }
    let analytic = problem.gradient(point);
    let mut worst: f64 = 0.0;
    for i in 0..problem.dim() {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (problem.value(&plus) - problem.value(&minus)) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / (1.0 + analytic[i].abs()));
    }
    Ok(worst)
}

fn check_step(problem: &QuadraticProblem, alpha: f64) -> Result<()> {
    let upper = 2.0 / problem.l_smooth();
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::Precondition(format!("step size {alpha} outside (0, {upper})")));
    }
    Ok(())
}

/// Averages over the last `window` iterates, taken per seed first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub window: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdTrace {
    /// Index k holds the seed-average of f(θ_k) − f(θ*), for k = 0..=steps.
    pub mean_subopt: Vec<f64>,
    pub stderr: Vec<f64>,
    pub tail: TailStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub alpha: f64,
    pub steps: usize,
    pub n_seeds: usize,
    pub seed: u64,
    pub tail_window: usize,
}

impl SgdConfig {
    pub fn new(alpha: f64, steps: usize, n_seeds: usize, seed: u64) -> Self {
        Self {
            alpha,
            steps,
            n_seeds,
            seed,
            tail_window: 50,
        }
    }
}

/// One trajectory of θ_{k+1} = θ_k − α(Hθ_k + ξ_k), ξ_k ~ N(0, σ²/d · I).
fn trajectory(problem: &QuadraticProblem, variance: f64, cfg: &SgdConfig, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let sd = (variance / problem.dim() as f64).sqrt();
    let mut theta = problem.initial_point();
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(problem.value(&theta));
    for _ in 0..cfg.steps {
        let mut g = problem.gradient(&theta);
        if sd > 0.0 {
            for x in g.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += sd * z;
            }
        }
        theta.axpy(-cfg.alpha, &g, 1.0);
        out.push(problem.value(&theta));
    }
    out
}

fn mean_stderr(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_sgd(problem: &QuadraticProblem, noise: &NoiseModel, cfg: &SgdConfig) -> Result<SgdTrace> {
    check_step(problem, cfg.alpha)?;
    if cfg.n_seeds == 0 {
        return Err(Error::Precondition("need at least one seed".into()));
    }
    let variance = noise.variance();
    let runs: Vec<Vec<f64>> = (0..cfg.n_seeds as u64)
        .into_par_iter()
        .map(|s| trajectory(problem, variance, cfg, s))
        .collect();

    let mut mean_subopt = Vec::with_capacity(cfg.steps + 1);
    let mut stderr = Vec::with_capacity(cfg.steps + 1);
    for k in 0..=cfg.steps {
        let (m, se) = mean_stderr(runs.iter().map(|r| r[k]));
        mean_subopt.push(m);
        stderr.push(se);
    }
    let window = cfg.tail_window.clamp(1, cfg.steps + 1);
    let start = cfg.steps + 1 - window;
    let per_seed: Vec<f64> = runs
        .iter()
        .map(|r| r[start..].iter().sum::<f64>() / window as f64)
        .collect();
    let (tail_mean, tail_se) = mean_stderr(per_seed.iter().copied());
    Ok(SgdTrace {
        mean_subopt,
        stderr,
        tail: TailStats {
            window,
            mean: tail_mean,
            stderr: tail_se,
        },
    })
}

/// Noise floor αLσ²(γ)/(2μ).
pub fn error_floor(problem: &QuadraticProblem, noise: &NoiseModel, alpha: f64) -> f64 {
    alpha * problem.l_smooth() * noise.variance() / (2.0 * problem.mu())
}

/// (1 − αμ)^k · initial_gap + αLσ²(γ)/(2μ).
pub fn theorem2_bound(
    problem: &QuadraticProblem,
    noise: &NoiseModel,
    alpha: f64,
    k: usize,
    initial_gap: f64,
) -> Result<f64> {
    check_step(problem, alpha)?;
    let contraction = 1.0 - alpha * problem.mu();
    Ok(contraction.powi(k as i32) * initial_gap + error_floor(problem, noise, alpha))
}
