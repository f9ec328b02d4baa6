//! Gradient tracking and D-SGD as step functions over [`WorkerState`].
//!
//! Iterates are `d × n` matrices whose column `i` belongs to worker `i`, and
//! one gossip round is right-multiplication by `W`. The gradient sampled at
//! step `t` uses noise counter `t`, so the first sample (at initialization)
//! is step 0.

use alloc::format;
use alloc::vec;

use crate::error::{bail, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::metrics::{snapshot, RunTrace};
use crate::mixing::MixingMatrix;
use crate::problems::GradientOracle;

/// Iterates whose Frobenius norm exceeds this count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Gt,
    Dsgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gt => "gt",
            Algorithm::Dsgd => "dsgd",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    pub x: Matrix,
    /// Tracking variables; all zero under D-SGD.
    pub y: Matrix,
    /// Gradients sampled at the current `x`.
    pub g_prev: Matrix,
    pub t: u64,
    pub gamma: f64,
}

impl WorkerState {
    pub fn n(&self) -> usize {
        self.x.cols()
    }

    pub fn d(&self) -> usize {
        self.x.rows()
    }
}

fn check_start(x0: &Matrix, oracle: &GradientOracle, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        bail!(InvalidParameter, "stepsize must be positive and finite, got {gamma}");
    }
    if !x0.is_finite() {
        bail!(InvalidParameter, "initial iterate has non-finite entries");
    }
    if x0.rows() != oracle.d || x0.cols() != oracle.n {
        bail!(
            DimensionMismatch,
            "initial iterate is {}x{}, oracle expects {}x{}",
            x0.rows(),
            x0.cols(),
            oracle.d,
            oracle.n
        );
    }
    Ok(())
}

fn check_mixing(s: &WorkerState, w: &MixingMatrix) -> Result<()> {
    if w.n() != s.n() {
        bail!(
            DimensionMismatch,
            "mixing matrix has {} nodes, state has {} workers",
            w.n(),
            s.n()
        );
    }
    Ok(())
}

/// `y⁽⁰⁾ = g⁽⁰⁾ = ∇F(x⁽⁰⁾, ξ⁽⁰⁾)`.
pub fn gt_init(x0: Matrix, oracle: &GradientOracle, gamma: f64) -> Result<WorkerState> {
    check_start(&x0, oracle, gamma)?;
    let g = oracle.sample(&x0, 0)?;
    Ok(WorkerState {
        x: x0,
        y: g.clone(),
        g_prev: g,
        t: 0,
        gamma,
    })
}

pub fn dsgd_init(x0: Matrix, oracle: &GradientOracle, gamma: f64) -> Result<WorkerState> {
    check_start(&x0, oracle, gamma)?;
    let g = oracle.sample(&x0, 0)?;
    Ok(WorkerState {
        y: Matrix::zeros(x0.rows(), x0.cols()),
        x: x0,
        g_prev: g,
        t: 0,
        gamma,
    })
}

fn check_divergence(x: &Matrix, step: u64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Diverged {
            step,
            reason: "non-finite iterate".into(),
        });
    }
    let norm_sq = x.frobenius_norm_sq();
    if norm_sq > DIVERGENCE_NORM * DIVERGENCE_NORM {
        return Err(Error::Diverged {
            step,
            reason: format!("iterate norm {:.3e} exceeds {DIVERGENCE_NORM:e}", math::sqrt(norm_sq)),
        });
    }
    Ok(())
}

/// One gradient tracking step:
/// `X' = (X − γY)W`, `G' = ∇F(X', ξ⁽ᵗ⁺¹⁾)`, `Y' = YW + G' − G`.
pub fn gt_step(s: &mut WorkerState, w: &MixingMatrix, oracle: &GradientOracle) -> Result<()> {
    check_mixing(s, w)?;
    let step = s.t + 1;
    let mut pre = s.x.clone();
    for (p, y) in pre.as_mut_slice().iter_mut().zip(s.y.as_slice()) {
        *p -= s.gamma * y;
    }
    w.mix_into(&pre, &mut s.x);
    check_divergence(&s.x, step)?;

    // `pre` is reused for the new gradients, then swapped into `g_prev`.
    oracle.sample_into(&s.x, step, &mut pre)?;
    let mut mixed_y = Matrix::zeros(s.d(), s.n());
    w.mix_into(&s.y, &mut mixed_y);
    for ((y, m), (g, gp)) in s
        .y
        .as_mut_slice()
        .iter_mut()
        .zip(mixed_y.as_slice())
        .zip(pre.as_slice().iter().zip(s.g_prev.as_slice()))
    {
        *y = m + (g - gp);
    }
    core::mem::swap(&mut s.g_prev, &mut pre);
    s.t = step;
    Ok(())
}

/// One D-SGD step: `X' = (X − γG)W`, then `G` is resampled at `X'`.
pub fn dsgd_step(s: &mut WorkerState, w: &MixingMatrix, oracle: &GradientOracle) -> Result<()> {
    check_mixing(s, w)?;
    let step = s.t + 1;
    let mut pre = s.x.clone();
    for (p, g) in pre.as_mut_slice().iter_mut().zip(s.g_prev.as_slice()) {
        *p -= s.gamma * g;
    }
    w.mix_into(&pre, &mut s.x);
    check_divergence(&s.x, step)?;
    oracle.sample_into(&s.x, step, &mut s.g_prev)?;
    s.t = step;
    Ok(())
}

/// Gradient tracking written worker by worker, reading neighbor values from
/// the previous step and sampling each gradient separately.
pub fn gt_step_reference(
    s: &WorkerState,
    w: &MixingMatrix,
    oracle: &GradientOracle,
) -> Result<WorkerState> {
    check_mixing(s, w)?;
    let (d, n) = (s.d(), s.n());
    let step = s.t + 1;
    let mut next = s.clone();
    let mut xi = vec![0.0; d];
    let mut gi = vec![0.0; d];
    for i in 0..n {
        // x_i ← Σ_j w_ij (x_j − γ y_j)
        for (r, v) in xi.iter_mut().enumerate() {
            *v = (0..n)
                .map(|j| w.weight(i, j) * (s.x[(r, j)] - s.gamma * s.y[(r, j)]))
                .sum();
        }
        oracle.sample_worker(i, &xi, step, &mut gi);
        for r in 0..d {
            let mixed: f64 = (0..n).map(|j| w.weight(i, j) * s.y[(r, j)]).sum();
            next.x[(r, i)] = xi[r];
            next.y[(r, i)] = mixed + gi[r] - s.g_prev[(r, i)];
            next.g_prev[(r, i)] = gi[r];
        }
    }
    check_divergence(&next.x, step)?;
    next.t = step;
    Ok(next)
}

/// Gradient tracking in block form:
/// `[X', γY'] = [X, γY]·[[W, 0], [−W, W]] + γ[0, G' − G]`.
pub fn gt_step_matrix_form(
    s: &WorkerState,
    w: &MixingMatrix,
    oracle: &GradientOracle,
) -> Result<WorkerState> {
    check_mixing(s, w)?;
    let (d, n) = (s.d(), s.n());
    let step = s.t + 1;
    let g = s.gamma;
    let psi = Matrix::from_fn(d, 2 * n, |r, c| {
        if c < n {
            s.x[(r, c)]
        } else {
            g * s.y[(r, c - n)]
        }
    });
    let lifted = Matrix::from_fn(2 * n, 2 * n, |a, b| match (a < n, b < n) {
        (true, true) => w.weight(a, b),
        (true, false) => 0.0,
        (false, true) => -w.weight(a - n, b),
        (false, false) => w.weight(a - n, b - n),
    });
    let prod = psi.matmul(&lifted)?;
    let x = Matrix::from_fn(d, n, |r, c| prod[(r, c)]);
    check_divergence(&x, step)?;
    let g_new = oracle.sample(&x, step)?;
    let y = Matrix::from_fn(d, n, |r, c| {
        (prod[(r, n + c)] + g * (g_new[(r, c)] - s.g_prev[(r, c)])) / g
    });
    Ok(WorkerState {
        x,
        y,
        g_prev: g_new,
        t: step,
        gamma: g,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Number of steps; 0 records only the initial snapshot.
    pub steps: u64,
    pub gamma: f64,
    /// Snapshot stride; the final step is always recorded.
    pub record_every: u64,
    /// Drives the gradient noise, replacing the oracle's own seed.
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bail!(InvalidParameter, "stepsize must be positive and finite, got {}", self.gamma);
        }
        if self.record_every == 0 {
            bail!(InvalidParameter, "record_every must be at least 1");
        }
        Ok(())
    }
}

type StepFn = fn(&mut WorkerState, &MixingMatrix, &GradientOracle) -> Result<()>;

/// Runs `config.steps` steps from `x0` and returns the trace and final state.
pub fn run_with_state(
    config: &RunConfig,
    w: &MixingMatrix,
    oracle: &GradientOracle,
    x0: Matrix,
) -> Result<(RunTrace, WorkerState)> {
    config.validate()?;
    let oracle = oracle.with_seed(config.seed);
    let (mut state, step): (WorkerState, StepFn) = match config.algorithm {
        Algorithm::Gt => (gt_init(x0, &oracle, config.gamma)?, gt_step),
        Algorithm::Dsgd => (dsgd_init(x0, &oracle, config.gamma)?, dsgd_step),
    };
    check_mixing(&state, w)?;
    let mut trace = RunTrace::new(config.clone());
    trace.push(snapshot(&state, &oracle)?);
    while state.t < config.steps {
        step(&mut state, w, &oracle)?;
        if state.t % config.record_every == 0 || state.t == config.steps {
            trace.push(snapshot(&state, &oracle)?);
        }
    }
    Ok((trace, state))
}

pub fn run(
    config: &RunConfig,
    w: &MixingMatrix,
    oracle: &GradientOracle,
    x0: Matrix,
) -> Result<RunTrace> {
    run_with_state(config, w, oracle, x0).map(|(trace, _)| trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{build_fully_connected, build_ring_uniform};
    use crate::problems::{make_consensus_from_rows, make_quadratic_gaussian};

    #[test]
    fn single_node_is_sgd() {
        let o = make_quadratic_gaussian(1, 3, 0.5, 4).unwrap();
        let w = build_fully_connected(1).unwrap();
        let x0 = Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]]).unwrap();
        let mut s = gt_init(x0.clone(), &o, 0.1).unwrap();
        let mut x = x0;
        let mut g = o.sample(&x, 0).unwrap();
        for t in 1..=5 {
            gt_step(&mut s, &w, &o).unwrap();
            x = x.sub(&g.scaled(0.1)).unwrap();
            g = o.sample(&x, t).unwrap();
            assert!(s.x.max_abs_diff(&x) < 1e-15);
            assert!(s.y.max_abs_diff(&g) < 1e-15);
        }
    }

    #[test]
    fn two_node_consensus_trace() {
        let o = make_consensus_from_rows(&[vec![0.0], vec![2.0]], 0).unwrap();
        let w = build_fully_connected(2).unwrap();
        let gamma = 0.3;
        let mut s = gt_init(Matrix::zeros(1, 2), &o, gamma).unwrap();
        assert_eq!(s.y.as_slice(), &[0.0, -2.0]);
        gt_step(&mut s, &w, &o).unwrap();
        assert!((s.x.column_mean()[0] - gamma).abs() < 1e-15);
        gt_step(&mut s, &w, &o).unwrap();
        assert!((s.x.column_mean()[0] - (2.0 * gamma - gamma * gamma)).abs() < 1e-15);
    }

    #[test]
    fn reference_paths_agree() {
        let o = make_quadratic_gaussian(6, 3, 1.0, 9).unwrap();
        let w = build_ring_uniform(6).unwrap();
        let x0 = Matrix::from_fn(3, 6, |r, c| (r * 6 + c) as f64 / 10.0);
        let mut a = gt_init(x0, &o, 0.05).unwrap();
        let mut b = a.clone();
        let mut c = a.clone();
        for _ in 0..30 {
            gt_step(&mut a, &w, &o).unwrap();
            b = gt_step_reference(&b, &w, &o).unwrap();
            c = gt_step_matrix_form(&c, &w, &o).unwrap();
        }
        assert!(a.x.max_abs_diff(&b.x) < 1e-12 && a.y.max_abs_diff(&b.y) < 1e-12);
        assert!(a.x.max_abs_diff(&c.x) < 1e-12 && a.y.max_abs_diff(&c.y) < 1e-12);
        assert!(a.g_prev.max_abs_diff(&b.g_prev) < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let o = make_quadratic_gaussian(3, 2, 0.0, 0).unwrap();
        let w = build_ring_uniform(3).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::Gt,
            steps: 500,
            gamma: 3.0,
            record_every: 1,
            seed: 0,
        };
        let x0 = Matrix::from_fn(2, 3, |_, _| 1.0);
        match run(&cfg, &w, &o, x0) {
            Err(Error::Diverged { step, .. }) => assert!(step > 1 && step < 500),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_steps_records_initial_snapshot() {
        let o = make_quadratic_gaussian(4, 2, 1.0, 0).unwrap();
        let w = build_ring_uniform(4).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::Dsgd,
            steps: 0,
            gamma: 0.1,
            record_every: 1,
            seed: 1,
        };
        let trace = run(&cfg, &w, &o, Matrix::zeros(2, 4)).unwrap();
        assert_eq!(trace.snapshots.len(), 1);
        assert_eq!(trace.snapshots[0].t, 0);
    }

    #[test]
    fn snapshots_follow_stride_and_final_step() {
        let o = make_quadratic_gaussian(4, 2, 1.0, 0).unwrap();
        let w = build_ring_uniform(4).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::Gt,
            steps: 10,
            gamma: 0.1,
            record_every: 4,
            seed: 1,
        };
        let trace = run(&cfg, &w, &o, Matrix::zeros(2, 4)).unwrap();
        let ts: alloc::vec::Vec<u64> = trace.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, [0, 4, 8, 10]);
    }
}
