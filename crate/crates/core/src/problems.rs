//! Objectives and stochastic gradient oracles.
//!
//! Noise is drawn from counter-based streams keyed by `(seed, worker, step)`,
//! so a gradient sample is a pure function of its inputs and does not depend
//! on evaluation order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::math;
use crate::mixing::MixingMatrix;
use crate::rng;

/// Eigenvalues closer than this are treated as one eigenspace.
pub const EIGEN_TIE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    /// `f_i(x) = ‖x‖²`, gradient noise `ξ ~ N(0, σ²/d·I)` independent per worker.
    QuadraticGaussian,
    /// `f_i(x) = ‖x‖²`, noise `diag(ξ)·V` shared across workers through `V`.
    QuadraticStructured,
    /// `f_i(x) = ½‖x − μ_i‖²`, no noise.
    Consensus,
}

/// Which eigenvector of `W` was chosen for a structured noise pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPick {
    pub eigenvalue: f64,
    /// Dimension of the eigenspace the vector was taken from.
    pub multiplicity: usize,
    /// Coordinate `k` whose unit vector was projected onto the eigenspace.
    pub anchor: usize,
    /// Unit-norm eigenvector.
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientOracle {
    pub n: usize,
    pub d: usize,
    pub kind: OracleKind,
    pub sigma2: f64,
    /// `d × n`, column `i` is `μ_i`.
    pub targets: Option<Matrix>,
    /// `d × n`; row `r` is the worker pattern scaled by `ξ_r`.
    pub noise_basis: Option<Matrix>,
    /// Eigenvectors behind `noise_basis`: `[λₙ, λ₂]`.
    pub eigen_picks: Option<[EigenPick; 2]>,
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub seed: u64,
}

pub fn make_quadratic_gaussian(n: usize, d: usize, sigma2: f64, seed: u64) -> Result<GradientOracle> {
    check_sizes(n, d)?;
    check_sigma2(sigma2)?;
    Ok(GradientOracle {
        n,
        d,
        kind: OracleKind::QuadraticGaussian,
        sigma2,
        targets: None,
        noise_basis: None,
        eigen_picks: None,
        smoothness: 2.0,
        strong_convexity: 2.0,
        seed,
    })
}

/// Structured noise built from the eigenvectors of `W` for `λₙ` (first `d/2`
/// rows) and `λ₂` (last `d/2` rows). Patterns are scaled to norm `√n`, so the
/// worker-averaged noise variance is `σ²`.
pub fn make_quadratic_structured(
    w: &MixingMatrix,
    d: usize,
    sigma2: f64,
    seed: u64,
) -> Result<GradientOracle> {
    let n = w.n();
    check_sizes(n, d)?;
    check_sigma2(sigma2)?;
    if d % 2 != 0 {
        bail!(InvalidParameter, "structured noise needs an even dimension, got d = {d}");
    }
    if n < 2 {
        bail!(InvalidParameter, "structured noise needs at least 2 workers");
    }
    let eig = w.eigen()?;
    let v = pick_eigenvector(&eig, n - 1);
    let u = pick_eigenvector(&eig, 1);
    let scale = math::sqrt(n as f64);
    let basis = Matrix::from_fn(d, n, |r, i| {
        let pattern = if r < d / 2 { &v.vector } else { &u.vector };
        scale * pattern[i]
    });
    Ok(GradientOracle {
        n,
        d,
        kind: OracleKind::QuadraticStructured,
        sigma2,
        targets: None,
        noise_basis: Some(basis),
        eigen_picks: Some([v, u]),
        smoothness: 2.0,
        strong_convexity: 2.0,
        seed,
    })
}

/// Targets as a `d × n` matrix, column `i` being `μ_i`.
pub fn make_consensus(targets: Matrix, seed: u64) -> Result<GradientOracle> {
    check_sizes(targets.cols(), targets.rows())?;
    if !targets.is_finite() {
        bail!(InvalidParameter, "consensus targets must be finite");
    }
    Ok(GradientOracle {
        n: targets.cols(),
        d: targets.rows(),
        kind: OracleKind::Consensus,
        sigma2: 0.0,
        targets: Some(targets),
        noise_basis: None,
        eigen_picks: None,
        smoothness: 1.0,
        strong_convexity: 1.0,
        seed,
    })
}

/// Consensus targets from a list of per-worker vectors.
pub fn make_consensus_from_rows(mus: &[Vec<f64>], seed: u64) -> Result<GradientOracle> {
    let Some(first) = mus.first() else {
        bail!(InvalidParameter, "no consensus targets");
    };
    let d = first.len();
    if let Some((i, m)) = mus.iter().enumerate().find(|(_, m)| m.len() != d) {
        bail!(
            DimensionMismatch,
            "target {i} has dimension {}, expected {d}",
            m.len()
        );
    }
    make_consensus(Matrix::from_fn(d, mus.len(), |r, i| mus[i][r]), seed)
}

fn check_sizes(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        bail!(InvalidParameter, "need n, d >= 1, got n = {n}, d = {d}");
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        bail!(InvalidParameter, "noise variance must be finite and >= 0, got {sigma2}");
    }
    Ok(())
}

/// Eigenvector for `eig.values[index]`, independent of how the solver
/// spanned a repeated eigenspace: project `e_k` onto the eigenspace for the
/// first `k` with a nonzero projection. The result is the unit vector of the
/// eigenspace whose first nonzero coordinate is largest, and that coordinate
/// is positive.
fn pick_eigenvector(eig: &SymmetricEigen, index: usize) -> EigenPick {
    let target = eig.values[index];
    let members: Vec<Vec<f64>> = (0..eig.values.len())
        .filter(|&k| k != 0 && math::abs(eig.values[k] - target) <= EIGEN_TIE_TOL)
        .map(|k| eig.vector(k))
        .collect();
    let n = eig.values.len();
    for anchor in 0..n {
        let mut q = vec![0.0; n];
        for v in &members {
            let coef = v[anchor];
            for (qi, vi) in q.iter_mut().zip(v) {
                *qi += coef * vi;
            }
        }
        let norm = math::sqrt(q.iter().map(|x| x * x).sum());
        if norm > 1e-8 {
            for qi in &mut q {
                *qi /= norm;
            }
            return EigenPick {
                eigenvalue: target,
                multiplicity: members.len(),
                anchor,
                vector: q,
            };
        }
    }
    unreachable!("an eigenspace has a nonzero projection of some unit vector")
}

impl GradientOracle {
    /// Same oracle with a different noise seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma2 == 0.0 || self.kind == OracleKind::Consensus
    }

    fn noise_std(&self) -> f64 {
        math::sqrt(self.sigma2 / self.d as f64)
    }

    fn check_point(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.d || x.cols() != self.n {
            bail!(
                DimensionMismatch,
                "iterate is {}x{}, oracle expects {}x{}",
                x.rows(),
                x.cols(),
                self.d,
                self.n
            );
        }
        Ok(())
    }

    /// `∇f_i(x)` into `out`.
    pub fn worker_gradient(&self, worker: usize, x: &[f64], out: &mut [f64]) {
        match self.kind {
            OracleKind::QuadraticGaussian | OracleKind::QuadraticStructured => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = 2.0 * xi;
                }
            }
            OracleKind::Consensus => {
                let mu = self.targets.as_ref().expect("consensus oracle has targets");
                for (r, (o, xi)) in out.iter_mut().zip(x).enumerate() {
                    *o = xi - mu[(r, worker)];
                }
            }
        }
    }

    /// `∇F_i(x, ξ_i^{(step)})` for a single worker.
    pub fn sample_worker(&self, worker: usize, x: &[f64], step: u64, out: &mut [f64]) {
        self.worker_gradient(worker, x, out);
        if self.is_deterministic() {
            return;
        }
        match self.kind {
            OracleKind::QuadraticGaussian => {
                let mut r = rng::stream(self.seed, worker as u64, step);
                let mut noise = vec![0.0; self.d];
                rng::fill_gaussian(&mut r, self.noise_std(), &mut noise);
                for (o, z) in out.iter_mut().zip(&noise) {
                    *o += z;
                }
            }
            OracleKind::QuadraticStructured => {
                let xi = self.shared_noise(step);
                let basis = self.noise_basis.as_ref().expect("structured oracle has a basis");
                for (r, o) in out.iter_mut().enumerate() {
                    *o += xi[r] * basis[(r, worker)];
                }
            }
            OracleKind::Consensus => {}
        }
    }

    fn shared_noise(&self, step: u64) -> Vec<f64> {
        let mut r = rng::stream(self.seed, rng::SHARED_NOISE_STREAM, step);
        let mut xi = vec![0.0; self.d];
        rng::fill_gaussian(&mut r, self.noise_std(), &mut xi);
        xi
    }

    /// Stochastic gradients of all workers at `x` (`d × n`) into `out`.
    pub fn sample_into(&self, x: &Matrix, step: u64, out: &mut Matrix) -> Result<()> {
        self.check_point(x)?;
        self.check_point(out)?;
        self.gradient_into(x, out);
        if self.is_deterministic() {
            return Ok(());
        }
        match self.kind {
            OracleKind::QuadraticGaussian => {
                let std = self.noise_std();
                let mut noise = vec![0.0; self.d];
                for i in 0..self.n {
                    let mut r = rng::stream(self.seed, i as u64, step);
                    rng::fill_gaussian(&mut r, std, &mut noise);
                    for (row, z) in noise.iter().enumerate() {
                        out[(row, i)] += z;
                    }
                }
            }
            OracleKind::QuadraticStructured => {
                let xi = self.shared_noise(step);
                let basis = self.noise_basis.as_ref().expect("structured oracle has a basis");
                for (row, z) in xi.iter().enumerate() {
                    for (o, b) in out.row_mut(row).iter_mut().zip(basis.row(row)) {
                        *o += z * b;
                    }
                }
            }
            OracleKind::Consensus => {}
        }
        Ok(())
    }

    pub fn sample(&self, x: &Matrix, step: u64) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.d, self.n);
        self.sample_into(x, step, &mut out)?;
        Ok(out)
    }

    fn gradient_into(&self, x: &Matrix, out: &mut Matrix) {
        match self.kind {
            OracleKind::QuadraticGaussian | OracleKind::QuadraticStructured => {
                for (o, xi) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    *o = 2.0 * xi;
                }
            }
            OracleKind::Consensus => {
                let mu = self.targets.as_ref().expect("consensus oracle has targets");
                for ((o, xi), m) in out
                    .as_mut_slice()
                    .iter_mut()
                    .zip(x.as_slice())
                    .zip(mu.as_slice())
                {
                    *o = xi - m;
                }
            }
        }
    }

    /// Noise-free gradients `∇f_i(x_i)` as a `d × n` matrix.
    pub fn full_gradient(&self, x: &Matrix) -> Result<Matrix> {
        self.check_point(x)?;
        let mut out = Matrix::zeros(self.d, self.n);
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    /// `f_i(x)`.
    pub fn worker_objective(&self, worker: usize, x: &[f64]) -> f64 {
        match self.kind {
            OracleKind::QuadraticGaussian | OracleKind::QuadraticStructured => {
                x.iter().map(|v| v * v).sum()
            }
            OracleKind::Consensus => {
                let mu = self.targets.as_ref().expect("consensus oracle has targets");
                0.5 * x
                    .iter()
                    .enumerate()
                    .map(|(r, v)| {
                        let e = v - mu[(r, worker)];
                        e * e
                    })
                    .sum::<f64>()
            }
        }
    }

    /// `f(x) = (1/n)Σ f_i(x)`.
    pub fn full_objective(&self, xbar: &[f64]) -> Result<f64> {
        if xbar.len() != self.d {
            bail!(DimensionMismatch, "point has dimension {}, expected {}", xbar.len(), self.d);
        }
        Ok((0..self.n).map(|i| self.worker_objective(i, xbar)).sum::<f64>() / self.n as f64)
    }

    /// `x*`.
    pub fn optimum(&self) -> Vec<f64> {
        match self.kind {
            OracleKind::QuadraticGaussian | OracleKind::QuadraticStructured => vec![0.0; self.d],
            OracleKind::Consensus => self
                .targets
                .as_ref()
                .expect("consensus oracle has targets")
                .column_mean(),
        }
    }

    /// `f* = f(x*)`.
    pub fn optimal_value(&self) -> f64 {
        self.full_objective(&self.optimum()).expect("optimum has dimension d")
    }

    /// `f(x) − f*` in closed form, free of the cancellation in
    /// `full_objective(x) − optimal_value()`.
    pub fn objective_gap(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            bail!(DimensionMismatch, "point has dimension {}, expected {}", x.len(), self.d);
        }
        Ok(match self.kind {
            OracleKind::QuadraticGaussian | OracleKind::QuadraticStructured => {
                x.iter().map(|v| v * v).sum()
            }
            OracleKind::Consensus => {
                let xstar = self.optimum();
                0.5 * x
                    .iter()
                    .zip(&xstar)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            }
        })
    }

    /// `(1/n)Σ f(x_i) − f*`, the objective gap averaged over worker models.
    pub fn worker_gap(&self, x: &Matrix) -> Result<f64> {
        self.check_point(x)?;
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.objective_gap(&x.column(i))?;
        }
        Ok(acc / self.n as f64)
    }

    /// `(1/n)Σ‖∇f_i(x*) − ∇f(x*)‖²` at the given point.
    pub fn heterogeneity(&self, xstar: &[f64]) -> Result<f64> {
        if xstar.len() != self.d {
            bail!(DimensionMismatch, "point has dimension {}, expected {}", xstar.len(), self.d);
        }
        let mut grads = vec![vec![0.0; self.d]; self.n];
        for (i, g) in grads.iter_mut().enumerate() {
            self.worker_gradient(i, xstar, g);
        }
        let mut mean = vec![0.0; self.d];
        for g in &grads {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / self.n as f64;
            }
        }
        let total: f64 = grads
            .iter()
            .map(|g| g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        Ok(total / self.n as f64)
    }

    /// Monte-Carlo estimate of `(1/n)Σ E‖∇F_i(x_i, ξ) − ∇f_i(x_i)‖²` from
    /// `samples` independent steps.
    pub fn noise_variance_estimate(&self, x: &Matrix, samples: u64) -> Result<f64> {
        if samples == 0 {
            bail!(InvalidParameter, "need at least one sample");
        }
        let exact = self.full_gradient(x)?;
        let mut g = Matrix::zeros(self.d, self.n);
        let mut acc = 0.0;
        for s in 0..samples {
            self.sample_into(x, s, &mut g)?;
            acc += g.sub(&exact)?.frobenius_norm_sq();
        }
        Ok(acc / (samples as f64 * self.n as f64))
    }

    /// Short human-readable description.
    pub fn describe(&self) -> alloc::string::String {
        format!(
            "{:?} n={} d={} sigma2={} L={} mu={}",
            self.kind, self.n, self.d, self.sigma2, self.smoothness, self.strong_convexity
        )
    }
}
