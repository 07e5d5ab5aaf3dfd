//! Exact information measures on finite joint tables over (Y, S).
//!
//! Y is the latent answer, S the observed state. Everything is computed by
//! enumeration in natural logs, so the checks below are deterministic.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;
const CLAMP_TOL: f64 = 1e-12;
/// Slack allowed by the monotonicity and Fano checks.
pub const CHECK_TOL: f64 = 1e-9;

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Joint probability table `p[y][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct DiscreteJoint {
    p: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JointRepr {
    p: Vec<Vec<f64>>,
}

impl TryFrom<JointRepr> for DiscreteJoint {
    type Error = Error;
    fn try_from(r: JointRepr) -> Result<Self> {
        DiscreteJoint::new(r.p)
    }
}

impl From<DiscreteJoint> for JointRepr {
    fn from(j: DiscreteJoint) -> Self {
        JointRepr { p: j.p }
    }
}

impl DiscreteJoint {
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidDistribution("|Y| must be at least 2".into()));
        }
        let s_card = p[0].len();
        if s_card == 0 || p.iter().any(|row| row.len() != s_card) {
            return Err(Error::InvalidDistribution("rows must share a positive length".into()));
        }
        if p.iter().flatten().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = p.iter().flatten().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total} != 1")));
        }
        Ok(Self { p })
    }

    /// Rescales non-negative weights to unit mass.
    pub fn normalized(mut weights: Vec<Vec<f64>>) -> Result<Self> {
        let total: f64 = weights.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        weights.iter_mut().flatten().for_each(|x| *x /= total);
        Self::new(weights)
    }

    /// Y and S independent with the given marginals.
    pub fn product(p_y: &[f64], p_s: &[f64]) -> Result<Self> {
        Self::new(p_y.iter().map(|a| p_s.iter().map(|b| a * b).collect()).collect())
    }

    /// S = Y with the given marginal.
    pub fn diagonal(p_y: &[f64]) -> Result<Self> {
        let n = p_y.len();
        Self::new(
            (0..n)
                .map(|y| (0..n).map(|s| if s == y { p_y[y] } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn y_card(&self) -> usize {
        self.p.len()
    }

    pub fn s_card(&self) -> usize {
        self.p[0].len()
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn p_y(&self) -> Vec<f64> {
        self.p.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn p_s(&self) -> Vec<f64> {
        (0..self.s_card())
            .map(|s| self.p.iter().map(|row| row[s]).sum())
            .collect()
    }

    pub fn entropy_y(&self) -> f64 {
        -self.p_y().into_iter().map(xlnx).sum::<f64>()
    }

    /// H(Y|S) = H(Y,S) − H(S).
    pub fn conditional_entropy(&self) -> f64 {
        let h_joint = -self.p.iter().flatten().copied().map(xlnx).sum::<f64>();
        let h_s = -self.p_s().into_iter().map(xlnx).sum::<f64>();
        (h_joint - h_s).max(0.0)
    }

    pub fn mutual_information(&self) -> f64 {
        (self.entropy_y() - self.conditional_entropy()).max(0.0)
    }

    /// Expected accuracy of the MAP predictor: Σ_s max_y p(y, s).
    pub fn bayes_accuracy(&self) -> f64 {
        (0..self.s_card())
            .map(|s| self.p.iter().map(|row| row[s]).fold(0.0, f64::max))
            .sum()
    }

    /// Expected log-score of the exact posterior, −H(Y|S).
    pub fn bayes_log_score(&self) -> f64 {
        -self.conditional_entropy()
    }
}

/// Row-stochastic Markov kernel `k[s][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct GarblingKernel {
    k: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    k: Vec<Vec<f64>>,
}

impl TryFrom<KernelRepr> for GarblingKernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        GarblingKernel::new(r.k)
    }
}

impl From<GarblingKernel> for KernelRepr {
    fn from(g: GarblingKernel) -> Self {
        KernelRepr { k: g.k }
    }
}

impl GarblingKernel {
    pub fn new(k: Vec<Vec<f64>>) -> Result<Self> {
        let out = k.first().map_or(0, Vec::len);
        if k.is_empty() || out == 0 || k.iter().any(|r| r.len() != out) {
            return Err(Error::InvalidDistribution(
                "kernel rows must share a positive length".into(),
            ));
        }
        for (i, row) in k.iter().enumerate() {
            if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "kernel row {i} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidDistribution(format!("kernel row {i} sums to {sum}")));
            }
        }
        Ok(Self { k })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            k: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Sends every observation to output 0.
    pub fn collapse(n: usize) -> Self {
        Self {
            k: (0..n)
                .map(|_| (0..n).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Binary symmetric channel with flip probability `eps`.
    pub fn binary_symmetric(eps: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])
    }

    pub fn rows(&self) -> usize {
        self.k.len()
    }

    pub fn cols(&self) -> usize {
        self.k[0].len()
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.k
    }
}

pub fn conditional_entropy(j: &DiscreteJoint) -> f64 {
    j.conditional_entropy()
}

/// Normalized mutual information I(Y;S)/H(Y).
pub fn gamma(j: &DiscreteJoint) -> Result<f64> {
    let h = j.entropy_y();
    if h <= 0.0 {
        return Err(Error::UndefinedGamma);
    }
    let g = (h - j.conditional_entropy()) / h;
    if !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&g) {
        return Err(Error::InvalidDistribution(format!("gamma {g} escaped [0, 1]")));
    }
    Ok(g.clamp(0.0, 1.0))
}

/// Pushes the observation through `k`: p'(y, s') = Σ_s p(y, s) k[s][s'].
pub fn garble(j: &DiscreteJoint, k: &GarblingKernel) -> Result<DiscreteJoint> {
    if k.rows() != j.s_card() {
        return Err(Error::Shape(format!(
            "kernel has {} rows but |S| = {}",
            k.rows(),
            j.s_card()
        )));
    }
    let p = j
        .table()
        .iter()
        .map(|row| {
            (0..k.cols())
                .map(|t| row.iter().zip(&k.k).map(|(p, kr)| p * kr[t]).sum())
                .collect()
        })
        .collect::<Vec<Vec<f64>>>();
    // renormalize away accumulated rounding so the result validates
    DiscreteJoint::normalized(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub logscore_before: f64,
    pub logscore_after: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub holds: bool,
}

/// Garbling the observation must not raise the Bayes log-score or the
/// Bayes accuracy.
pub fn check_theorem1(j: &DiscreteJoint, k: &GarblingKernel) -> Result<Theorem1Report> {
    let g = garble(j, k)?;
    let logscore_before = j.bayes_log_score();
    let logscore_after = g.bayes_log_score();
    let accuracy_before = j.bayes_accuracy();
    let accuracy_after = g.bayes_accuracy();
    Ok(Theorem1Report {
        logscore_before,
        logscore_after,
        accuracy_before,
        accuracy_after,
        holds: logscore_after <= logscore_before + CHECK_TOL && accuracy_after <= accuracy_before + CHECK_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoReport {
    pub bayes_error: f64,
    pub fano_lower: f64,
    pub holds: bool,
}

/// Bayes error against the bound (H(Y|S) − 1)/ln|Y|.
pub fn fano_check(j: &DiscreteJoint) -> FanoReport {
    let bayes_error = 1.0 - j.bayes_accuracy();
    let fano_lower = (j.conditional_entropy() - 1.0) / (j.y_card() as f64).ln();
    FanoReport {
        bayes_error,
        fano_lower,
        holds: bayes_error >= fano_lower - CHECK_TOL,
    }
}

/// Full γ report for a joint, as printed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaReport {
    pub y_card: usize,
    pub s_card: usize,
    pub entropy_y: f64,
    pub conditional_entropy: f64,
    pub mutual_information: f64,
    pub gamma: f64,
    pub bayes_accuracy: f64,
    pub fano: FanoReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem1: Option<Theorem1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_garbled: Option<f64>,
}

pub fn gamma_report(j: &DiscreteJoint, kernel: Option<&GarblingKernel>) -> Result<GammaReport> {
    let (theorem1, gamma_garbled) = match kernel {
        Some(k) => (Some(check_theorem1(j, k)?), Some(gamma(&garble(j, k)?)?)),
        None => (None, None),
    };
    Ok(GammaReport {
        y_card: j.y_card(),
        s_card: j.s_card(),
        entropy_y: j.entropy_y(),
        conditional_entropy: j.conditional_entropy(),
        mutual_information: j.mutual_information(),
        gamma: gamma(j)?,
        bayes_accuracy: j.bayes_accuracy(),
        fano: fano_check(j),
        theorem1,
        gamma_garbled,
    })
}

/// Random joint with Dirichlet(1) weights; roughly one in five entries is
/// zeroed to exercise sparse tables.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, y_card: usize, s_card: usize) -> DiscreteJoint {
    loop {
        let w: Vec<Vec<f64>> = (0..y_card)
            .map(|_| {
                (0..s_card)
                    .map(|_| if rng.random_bool(0.2) { 0.0 } else { Exp1.sample(rng) })
                    .collect()
            })
            .collect();
        let row_mass = w.iter().filter(|r| r.iter().sum::<f64>() > 0.0).count();
        // H(Y) > 0 needs at least two live outcomes
        if row_mass >= 2 {
            return DiscreteJoint::normalized(w).expect("positive weights");
        }
    }
}

pub fn random_kernel<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> GarblingKernel {
    let k = (0..rows)
        .map(|_| {
            let w: Vec<f64> = (0..cols).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = w.iter().sum();
            let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
            // pin the row sum exactly
            let head: f64 = row[..cols - 1].iter().sum();
            row[cols - 1] = (1.0 - head).max(0.0);
            row
        })
        .collect();
    GarblingKernel::new(k).expect("row-stochastic by construction")
}
