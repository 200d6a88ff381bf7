//! Carriage-state regularization by kernel mean matching.
//!
//! Positive samples are reweighted so that their weighted carriage-feature
//! mean embedding matches the negatives'. Weights solve
//!
//! ```text
//! min ½ wᵀ (K + λI) w − κᵀ w   s.t.  Σ w = n⁺,  0 ≤ w ≤ w_max
//! ```
//!
//! with `K` the RBF kernel over positives and `κᵢ = (n⁺/n⁻) Σⱼ k(C⁺ᵢ, C⁻ⱼ)`.
//! The ridge `λ` keeps the solution from chasing sampling noise: without it
//! two samples of one distribution already get strongly non-uniform
//! weights. Uniform weights minimize `‖w‖²` on the constraint set, so the
//! ridge never makes the weighted MMD worse than the unweighted one.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmmConfig {
    pub gamma: f64,
    pub w_max: f64,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the objective by less than this.
    pub tolerance: f64,
    /// Power iterations used to estimate the Lipschitz constant.
    pub power_iters: usize,
    /// `λ`, added to the kernel diagonal in the objective only.
    pub ridge: f64,
    pub projection_max_iters: usize,
    pub projection_tolerance: f64,
}

impl Default for KmmConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            w_max: 10.0,
            max_iters: 5000,
            tolerance: 1e-10,
            power_iters: 20,
            ridge: 1.0,
            projection_max_iters: 10_000,
            projection_tolerance: 1e-12,
        }
    }
}

impl KmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig("kernel width gamma must be positive".into()));
        }
        if !(self.w_max >= 1.0) {
            return Err(Error::InvalidConfig("w_max must be at least 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidConfig("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

/// `exp(−γ ‖a − b‖²)`
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(rbf(a, b, gamma))
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::exp(-gamma * d2)
}

fn check_group<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Result<()> {
    for r in rows {
        if r.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.as_ref().len(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmmProblem {
    /// Row-major n⁺ × n⁺ kernel matrix.
    pub kernel: Vec<f64>,
    pub kappa: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Diagonal term of the objective; `kernel` itself holds plain RBF values.
    pub ridge: f64,
}

impl KmmProblem {
    #[inline]
    pub fn kernel_row(&self, i: usize) -> &[f64] {
        &self.kernel[i * self.n_pos..(i + 1) * self.n_pos]
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let kw = self.mat_vec(w);
        0.5 * dot(w, &kw) - dot(&self.kappa, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.mat_vec(w);
        for (gi, ki) in g.iter_mut().zip(&self.kappa) {
            *gi -= ki;
        }
        g
    }

    fn mat_vec(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n_pos).map(|i| dot(self.kernel_row(i), w) + self.ridge * w[i]).collect()
    }
}

pub fn build_problem<P: AsRef<[f64]>, N: AsRef<[f64]>>(
    positives: &[P],
    negatives: &[N],
    cfg: &KmmConfig,
) -> Result<KmmProblem> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::EmptyGroup("no positive samples to reweight"));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyGroup("no negative samples to match"));
    }
    let dim = positives[0].as_ref().len();
    check_group(positives, dim)?;
    check_group(negatives, dim)?;
    let (n_pos, n_neg) = (positives.len(), negatives.len());
    let mut kernel = vec![0.0; n_pos * n_pos];
    for i in 0..n_pos {
        kernel[i * n_pos + i] = 1.0;
        for j in 0..i {
            let k = rbf(positives[i].as_ref(), positives[j].as_ref(), cfg.gamma);
            kernel[i * n_pos + j] = k;
            kernel[j * n_pos + i] = k;
        }
    }
    let ratio = n_pos as f64 / n_neg as f64;
    let kappa = positives
        .iter()
        .map(|p| ratio * negatives.iter().map(|q| rbf(p.as_ref(), q.as_ref(), cfg.gamma)).sum::<f64>())
        .collect();
    Ok(KmmProblem {
        kernel,
        kappa,
        n_pos,
        n_neg,
        ridge: cfg.ridge,
    })
}

/// Projection onto `{Σ w = total} ∩ [0, upper]ⁿ` by Dykstra's alternating
/// projections. The returned point is the last box iterate, so the box
/// holds exactly and the sum to within the stopping tolerance.
pub fn project_feasible(v: &[f64], total: f64, upper: f64, max_iters: usize, tol: f64) -> Vec<f64> {
    let n = v.len() as f64;
    let mut x = v.to_vec();
    let mut p = vec![0.0; v.len()];
    let mut q = vec![0.0; v.len()];
    let mut y = vec![0.0; v.len()];
    for _ in 0..max_iters.max(1) {
        for i in 0..x.len() {
            y[i] = (x[i] + p[i]).clamp(0.0, upper);
            p[i] = x[i] + p[i] - y[i];
        }
        let shift = (total - y.iter().zip(&q).map(|(a, b)| a + b).sum::<f64>()) / n;
        let mut change: f64 = 0.0;
        for i in 0..x.len() {
            let next = y[i] + q[i] + shift;
            q[i] = y[i] + q[i] - next;
            change = change.max((next - x[i]).abs());
            x[i] = next;
        }
        let gap: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap <= tol && change <= tol {
            break;
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmmSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out; the best iterate is still returned.
    pub converged: bool,
    /// `‖w − P(w − ∇f(w))‖₂`
    pub kkt_residual: f64,
}

fn lipschitz_estimate(problem: &KmmProblem, iters: usize) -> f64 {
    let n = problem.n_pos;
    let mut v = vec![1.0 / libm::sqrt(n as f64); n];
    let mut lambda = 1.0;
    for _ in 0..iters.max(1) {
        let kv = problem.mat_vec(&v);
        let norm = libm::sqrt(dot(&kv, &kv));
        if norm == 0.0 {
            break;
        }
        lambda = dot(&v, &kv);
        v = kv.into_iter().map(|x| x / norm).collect();
    }
    lambda.max(1e-12)
}

/// Projected gradient descent from the uniform weights.
///
/// Step size is `1/L`, with `L` from power iteration; a step that would
/// raise the objective is rejected and `L` doubled, so accepted iterates
/// never increase the objective.
pub fn solve(problem: &KmmProblem, cfg: &KmmConfig) -> Result<KmmSolution> {
    cfg.validate()?;
    let n = problem.n_pos;
    if n == 0 {
        return Err(Error::EmptyGroup("no positive samples to reweight"));
    }
    let total = n as f64;
    let project = |v: &[f64]| project_feasible(v, total, cfg.w_max, cfg.projection_max_iters, cfg.projection_tolerance);

    let mut w = vec![1.0; n];
    let mut f = problem.objective(&w);
    let mut lipschitz = lipschitz_estimate(problem, cfg.power_iters);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let g = problem.gradient(&w);
        let step: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - gi / lipschitz).collect();
        let candidate = project(&step);
        let fc = problem.objective(&candidate);
        if fc > f {
            lipschitz *= 2.0;
            if lipschitz > 1e12 {
                converged = true;
                break;
            }
            continue;
        }
        let decrease = f - fc;
        w = candidate;
        f = fc;
        if decrease < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let g = problem.gradient(&w);
    let probe: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - gi).collect();
    let projected = project(&probe);
    let kkt_residual = libm::sqrt(w.iter().zip(&projected).map(|(a, b)| (a - b) * (a - b)).sum());
    Ok(KmmSolution {
        weights: w,
        objective: f,
        iterations,
        converged,
        kkt_residual,
    })
}

/// Importance weights aligned with the input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub weights: Vec<f64>,
    pub converged: bool,
}

impl SampleWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            converged: true,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }
}

/// Unit weights for negatives, KMM weights for positives.
///
/// `features` should already be standardized: the kernel width applies to
/// them directly.
pub fn compute_sample_weights<R: AsRef<[f64]>>(features: &[R], labels: &[u8], cfg: &KmmConfig) -> Result<SampleWeights> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let positives: Vec<&[f64]> = features
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(f, _)| f.as_ref())
        .collect();
    let negatives: Vec<&[f64]> = features
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(f, _)| f.as_ref())
        .collect();
    if positives.is_empty() {
        return Err(Error::SingleLabel { missing: 1 });
    }
    if negatives.is_empty() {
        return Err(Error::SingleLabel { missing: 0 });
    }
    let problem = build_problem(&positives, &negatives, cfg)?;
    let solution = solve(&problem, cfg)?;
    let mut positive_weights = solution.weights.into_iter();
    let weights = labels
        .iter()
        .map(|&y| if y == 1 { positive_weights.next().unwrap_or(1.0) } else { 1.0 })
        .collect();
    Ok(SampleWeights {
        weights,
        converged: solution.converged,
    })
}

/// Squared MMD between the weighted positive and the negative embeddings.
pub fn mmd_squared<P: AsRef<[f64]>, N: AsRef<[f64]>>(
    positives: &[P],
    negatives: &[N],
    weights: &[f64],
    gamma: f64,
) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyGroup("MMD needs two non-empty groups"));
    }
    if weights.len() != positives.len() {
        return Err(Error::DimensionMismatch {
            expected: positives.len(),
            got: weights.len(),
        });
    }
    let dim = positives[0].as_ref().len();
    check_group(positives, dim)?;
    check_group(negatives, dim)?;
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let mut pp = 0.0;
    for (i, a) in positives.iter().enumerate() {
        for (j, b) in positives.iter().enumerate() {
            pp += weights[i] * weights[j] * rbf(a.as_ref(), b.as_ref(), gamma);
        }
    }
    let mut pn = 0.0;
    for (i, a) in positives.iter().enumerate() {
        for b in negatives {
            pn += weights[i] * rbf(a.as_ref(), b.as_ref(), gamma);
        }
    }
    let mut nn_sum = 0.0;
    for a in negatives {
        for b in negatives {
            nn_sum += rbf(a.as_ref(), b.as_ref(), gamma);
        }
    }
    Ok(pp / (np * np) - 2.0 * pn / (np * nn) + nn_sum / (nn * nn))
}
