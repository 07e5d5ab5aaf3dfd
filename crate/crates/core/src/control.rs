//! Controllability and closed-loop stability of the agent network.
//!
//! The network is modelled as ẋ = Ax + Bu with u = −Kx folded into
//! A = −L − BK, where L is the graph Laplacian of the agent topology.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LAPLACIAN_TOL: f64 = 1e-9;

/// Agent order used by the shipped topologies.
pub const AGENT_NAMES: [&str; 5] = [
    "kg_master",
    "entity_extractor",
    "relation_extractor",
    "kr_distiller",
    "verifier",
];
const VERIFIER: usize = 4;

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Shape(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// L = D − W for a symmetric, non-negative adjacency with zero diagonal.
pub fn laplacian(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = adjacency.nrows();
    if n == 0 || adjacency.ncols() != n {
        return Err(Error::Shape("adjacency must be square and non-empty".into()));
    }
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::Precondition(format!("adjacency has a self-loop at {i}")));
        }
        for j in 0..n {
            let w = adjacency[(i, j)];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Precondition(format!(
                    "negative or non-finite weight at ({i}, {j})"
                )));
            }
            if w != adjacency[(j, i)] {
                return Err(Error::Precondition(format!("adjacency is asymmetric at ({i}, {j})")));
            }
        }
    }
    let mut l = -adjacency.clone();
    for i in 0..n {
        l[(i, i)] = adjacency.row(i).sum();
    }
    Ok(l)
}

/// Closed-loop linear system of n agents with m inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAgentSystem {
    laplacian: DMatrix<f64>,
    b: DMatrix<f64>,
    k_gain: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl LinearAgentSystem {
    pub fn new(laplacian: DMatrix<f64>, b: DMatrix<f64>, k_gain: DMatrix<f64>) -> Result<Self> {
        let n = laplacian.nrows();
        if laplacian.ncols() != n || b.nrows() != n || k_gain.ncols() != n || k_gain.nrows() != b.ncols() {
            return Err(Error::Shape(format!(
                "L is {}x{}, B is {}x{}, K is {}x{}",
                laplacian.nrows(),
                laplacian.ncols(),
                b.nrows(),
                b.ncols(),
                k_gain.nrows(),
                k_gain.ncols()
            )));
        }
        for i in 0..n {
            let row_sum: f64 = laplacian.row(i).sum();
            if row_sum.abs() > LAPLACIAN_TOL || laplacian[(i, i)] < 0.0 {
                return Err(Error::Precondition(format!("row {i} is not a Laplacian row")));
            }
            if (0..n).any(|j| j != i && laplacian[(i, j)] > 0.0) {
                return Err(Error::Precondition(format!("row {i} has a positive off-diagonal")));
            }
        }
        let a = -&laplacian - &b * &k_gain;
        Ok(Self {
            laplacian,
            b,
            k_gain,
            a,
        })
    }

    pub fn from_adjacency(adjacency: &DMatrix<f64>, b: DMatrix<f64>, k_gain: DMatrix<f64>) -> Result<Self> {
        Self::new(laplacian(adjacency)?, b, k_gain)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn k_gain(&self) -> &DMatrix<f64> {
        &self.k_gain
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
}

/// Adjacency plus optional input and gain matrices, as read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologySpec {
    pub adjacency: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
}

impl TopologySpec {
    /// Missing B drives the last node; missing K is 0.5 on every state.
    pub fn build(&self) -> Result<LinearAgentSystem> {
        let adj = to_matrix(&self.adjacency, "adjacency")?;
        let n = adj.nrows();
        let b = match &self.b {
            Some(b) => to_matrix(b, "b")?,
            None => {
                let mut b = DMatrix::zeros(n, 1);
                b[(n - 1, 0)] = 1.0;
                b
            }
        };
        let k = match &self.k {
            Some(k) => to_matrix(k, "k")?,
            None => DMatrix::from_element(b.ncols(), n, 0.5),
        };
        LinearAgentSystem::from_adjacency(&adj, b, k)
    }

    fn from_edges(n: usize, edges: &[(usize, usize)], driven: usize) -> Self {
        let mut adjacency = vec![vec![0.0; n]; n];
        for &(i, j) in edges {
            adjacency[i][j] = 1.0;
            adjacency[j][i] = 1.0;
        }
        let mut b = vec![vec![0.0]; n];
        b[driven][0] = 1.0;
        Self {
            adjacency,
            b: Some(b),
            k: Some(vec![vec![0.5; n]]),
        }
    }

    /// The shipped five-agent network: the extraction workflow as a chain
    /// (master, entity, relation, distiller, verifier) plus the verifier's
    /// refinement edge back to the entity extractor. The verifier is driven.
    pub fn workflow() -> Self {
        Self::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 1)], VERIFIER)
    }

    /// Star centred on the verifier, verifier driven. Leaf symmetry makes
    /// this uncontrollable (rank 2).
    pub fn star() -> Self {
        Self::from_edges(5, &[(4, 0), (4, 1), (4, 2), (4, 3)], VERIFIER)
    }

    pub fn path() -> Self {
        Self::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], VERIFIER)
    }

    pub fn complete() -> Self {
        let edges: Vec<_> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
        Self::from_edges(5, &edges, VERIFIER)
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "workflow" | "kgmasd" | "default" => Some(Self::workflow()),
            "star" => Some(Self::star()),
            "path" => Some(Self::path()),
            "complete" => Some(Self::complete()),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 4] = ["workflow", "star", "path", "complete"];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controllability {
    /// Columns B, AB, …, A^{n−1}B.
    pub q_c: DMatrix<f64>,
    pub rank: usize,
    pub controllable: bool,
}

pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape("A must be n x n and B must have n rows".into()));
    }
    let m = b.ncols();
    let mut q = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        q.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    Ok(q)
}

/// Numerical rank with the cutoff max(rows, cols) · ε · σ_max.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn controllability(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Controllability> {
    let q_c = controllability_matrix(a, b)?;
    let rank = numeric_rank(&q_c);
    Ok(Controllability {
        controllable: rank == a.nrows(),
        rank,
        q_c,
    })
}

// ---------------------------------------------------------------------------
// Exact rational path

pub fn to_rational(m: &DMatrix<f64>) -> Result<Vec<Vec<BigRational>>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| {
                    BigRational::from_float(m[(i, j)])
                        .ok_or_else(|| Error::Precondition(format!("non-finite entry at ({i}, {j})")))
                })
                .collect()
        })
        .collect()
}

fn rational_mul(a: &[Vec<BigRational>], b: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(BigRational::zero(), |acc, k| acc + &row[k] * &b[k][j]))
                .collect()
        })
        .collect()
}

/// Gaussian elimination over the rationals.
pub fn exact_rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..nrows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = BigRational::one() / &m[rank][col];
        for r in 0..nrows {
            if r != rank && !m[r][col].is_zero() {
                let factor = &m[r][col] * &inv;
                let pivot_row = m[rank].clone();
                for (cell, p) in m[r][col..ncols].iter_mut().zip(&pivot_row[col..ncols]) {
                    *cell -= &factor * p;
                }
            }
        }
        rank += 1;
        if rank == nrows {
            break;
        }
    }
    rank
}

/// rank [B AB … A^{n−1}B] computed entirely in exact arithmetic from the
/// binary values of A and B.
pub fn exact_controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape("A must be n x n and B must have n rows".into()));
    }
    let ar = to_rational(a)?;
    let mut block = to_rational(b)?;
    let m = b.ncols();
    let mut q: Vec<Vec<BigRational>> = vec![Vec::with_capacity(n * m); n];
    for _ in 0..n {
        for (qrow, brow) in q.iter_mut().zip(&block) {
            qrow.extend(brow.iter().cloned());
        }
        block = rational_mul(&ar, &block);
    }
    Ok(exact_rank(&q))
}

/// Converts a small integer-valued matrix for exact tests.
pub fn rational_from_ints(rows: &[Vec<i64>]) -> Vec<Vec<BigRational>> {
    rows.iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Spectra and simulation

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a general square matrix as (re, im), sorted by real part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    ev
}

/// Largest real part of the spectrum; negative means Hurwitz.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub converged: bool,
    /// Step at which the state stopped being finite.
    pub diverged_at: Option<usize>,
}

/// Fixed-step RK4 integration of ẋ = A x. The trajectory has `steps + 1`
/// samples including x0.
pub fn simulate_matrix(a: &DMatrix<f64>, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    let n = a.nrows();
    if a.ncols() != n || x0.len() != n {
        return Err(Error::Shape(format!(
            "A is {}x{}, x0 has {}",
            a.nrows(),
            a.ncols(),
            x0.len()
        )));
    }
    if !(dt > 0.0) || steps == 0 {
        return Err(Error::Precondition("need dt > 0 and steps >= 1".into()));
    }
    let mut x = nalgebra::DVector::from_column_slice(x0);
    let x0_norm = x.norm();
    let mut t = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    t.push(0.0);
    xs.push(x0.to_vec());
    let mut diverged_at = None;
    for step in 1..=steps {
        let k1 = a * &x;
        let k2 = a * (&x + &k1 * (dt / 2.0));
        let k3 = a * (&x + &k2 * (dt / 2.0));
        let k4 = a * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        t.push(step as f64 * dt);
        xs.push(x.iter().copied().collect());
        if x.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(step);
            break;
        }
    }
    let converged = diverged_at.is_none() && x.norm() <= 1e-3 * x0_norm;
    Ok(Trajectory {
        t,
        x: xs,
        converged,
        diverged_at,
    })
}

pub fn simulate(system: &LinearAgentSystem, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    simulate_matrix(system.a(), x0, dt, steps)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlReport {
    pub n: usize,
    pub laplacian: Vec<Vec<f64>>,
    pub laplacian_eigenvalues: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub a_eigenvalues: Vec<(f64, f64)>,
    pub spectral_abscissa: f64,
    pub rank_numeric: usize,
    pub rank_exact: usize,
    pub controllable: bool,
}

pub fn analyze(system: &LinearAgentSystem) -> Result<ControlReport> {
    let ctrl = controllability(system.a(), system.b())?;
    let rank_exact = exact_controllability_rank(system.a(), system.b())?;
    Ok(ControlReport {
        n: system.n(),
        laplacian: to_rows(system.laplacian()),
        laplacian_eigenvalues: symmetric_spectrum(system.laplacian()),
        a: to_rows(system.a()),
        a_eigenvalues: eigenvalues(system.a()),
        spectral_abscissa: spectral_abscissa(system.a()),
        rank_numeric: ctrl.rank,
        rank_exact,
        controllable: rank_exact == system.n(),
    })
}
