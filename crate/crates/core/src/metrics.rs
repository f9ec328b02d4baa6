//! Diagnostics of a run and the theoretical predictions they are compared to.

use alloc::vec::Vec;

use crate::algorithms::{RunConfig, WorkerState};
use crate::error::{bail, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::problems::GradientOracle;

/// Tail halves must agree to within this fraction of the larger one.
pub const STATIONARITY_REL_TOL: f64 = 0.2;
/// Tail halves closer than this agree regardless of their ratio.
pub const STATIONARITY_ABS_TOL: f64 = 1e-12;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const MIN_PLATEAU_SNAPSHOTS: usize = 10;
const MAX_BATCHES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub t: u64,
    /// `f(x̄) − f*`.
    pub opt_error: f64,
    /// `(1/n)‖X − X̄‖²_F + (γ²/n)‖Y − Ȳ‖²_F`.
    pub consensus_dist: f64,
    /// `‖x̄ − x*‖²`.
    pub mean_dist: f64,
    /// `(1/n)Σ f(x_i) − f*`.
    pub worker_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    OptError,
    ConsensusDist,
    MeanDist,
    WorkerError,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::OptError => "opt_error",
            Field::ConsensusDist => "consensus_dist",
            Field::MeanDist => "mean_dist_to_opt",
            Field::WorkerError => "worker_error",
        }
    }

    pub fn get(self, s: &Snapshot) -> f64 {
        match self {
            Field::OptError => s.opt_error,
            Field::ConsensusDist => s.consensus_dist,
            Field::MeanDist => s.mean_dist,
            Field::WorkerError => s.worker_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub snapshots: Vec<Snapshot>,
    pub config: RunConfig,
}

impl RunTrace {
    pub fn new(config: RunConfig) -> Self {
        Self {
            snapshots: Vec::new(),
            config,
        }
    }

    /// Appends a snapshot; `t` must increase.
    pub fn push(&mut self, s: Snapshot) {
        if let Some(last) = self.snapshots.last() {
            assert!(s.t > last.t, "snapshot times must increase");
        }
        self.snapshots.push(s);
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn values(&self, field: Field) -> Vec<f64> {
        self.snapshots.iter().map(|s| field.get(s)).collect()
    }
}

fn clamp(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

fn centered_norm_sq(m: &Matrix) -> f64 {
    let means = m.column_mean();
    let mut acc = 0.0;
    for (r, mean) in means.iter().enumerate() {
        for v in m.row(r) {
            acc += (v - mean) * (v - mean);
        }
    }
    acc
}

/// `(1/n)Σ‖x_i − x̄‖² + (γ²/n)Σ‖y_i − ȳ‖²`.
pub fn consensus_distance(s: &WorkerState) -> f64 {
    let n = s.n() as f64;
    (centered_norm_sq(&s.x) + s.gamma * s.gamma * centered_norm_sq(&s.y)) / n
}

pub fn snapshot(s: &WorkerState, oracle: &GradientOracle) -> Result<Snapshot> {
    let xbar = s.x.column_mean();
    let xstar = oracle.optimum();
    let mean_dist = xbar.iter().zip(&xstar).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Snapshot {
        t: s.t,
        opt_error: clamp(oracle.objective_gap(&xbar)?),
        consensus_dist: clamp(consensus_distance(s)),
        mean_dist: clamp(mean_dist),
        worker_error: clamp(oracle.worker_gap(&s.x)?),
    })
}

/// `γσ²/n + γ²σ²/(p·c²)`.
pub fn predict_noise_floor(gamma: f64, sigma2: f64, n: usize, p: f64, c: f64) -> f64 {
    gamma * sigma2 / n as f64 + gamma * gamma * sigma2 / (p * c * c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    StronglyConvex,
    Convex,
    NonConvex,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateInputs {
    pub l: f64,
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub p: f64,
    pub c: f64,
    /// `f(x̄⁽⁰⁾) − f*`.
    pub f0: f64,
    /// `‖x̄⁽⁰⁾ − x*‖²`.
    pub r0_sq: f64,
    /// `(1/n)Σ‖x_i⁽⁰⁾ − x̄⁽⁰⁾‖² + (1/(nL²))Σ‖y_i⁽⁰⁾ − ȳ⁽⁰⁾‖²`.
    pub rtilde0_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatePrediction {
    pub regime: Regime,
    pub epsilon: f64,
    /// Leading (noise), middle, and last (graph-dominated) terms.
    pub terms: [(&'static str, f64); 3],
    pub total: f64,
}

impl RatePrediction {
    pub fn leading(&self) -> f64 {
        self.terms[0].1
    }
}

/// Iteration counts to reach accuracy `epsilon`, with all hidden constants set
/// to 1. Only useful for comparisons at fixed problem constants.
pub fn predict_iterations(regime: Regime, inputs: &RateInputs, epsilon: f64) -> Result<RatePrediction> {
    let RateInputs {
        l,
        mu,
        sigma,
        n,
        p,
        c,
        f0,
        r0_sq,
        rtilde0_sq,
    } = *inputs;
    if !(epsilon > 0.0) {
        bail!(InvalidParameter, "epsilon must be positive, got {epsilon}");
    }
    if !(p > 0.0 && c > 0.0 && n > 0) {
        bail!(InvalidParameter, "need p, c > 0 and n >= 1");
    }
    if !(l >= 0.0 && sigma >= 0.0 && f0 >= 0.0 && r0_sq >= 0.0 && rtilde0_sq >= 0.0) {
        bail!(InvalidParameter, "L, sigma, F0, R0, and R~0 must be nonnegative");
    }
    let nf = n as f64;
    let pc = p * c;
    let terms = match regime {
        Regime::StronglyConvex => {
            if !(mu > 0.0) {
                bail!(InvalidParameter, "strongly convex rate needs mu > 0, got {mu}");
            }
            let log = math::ln(1.0 / epsilon).max(0.0);
            [
                ("noise", sigma * sigma / (mu * nf * epsilon)),
                ("transient", math::sqrt(l) * sigma / (mu * math::sqrt(p) * c * math::sqrt(epsilon))),
                ("graph", l / (mu * pc) * log),
            ]
        }
        Regime::Convex => {
            let e32 = epsilon * math::sqrt(epsilon);
            [
                ("noise", sigma * sigma / (nf * epsilon * epsilon) * r0_sq),
                ("transient", math::sqrt(l) * sigma / (math::sqrt(p) * c * e32) * r0_sq),
                ("graph", l * (r0_sq + rtilde0_sq) / (pc * epsilon)),
            ]
        }
        Regime::NonConvex => {
            let e32 = epsilon * math::sqrt(epsilon);
            [
                ("noise", sigma * sigma / (nf * epsilon) * l * f0),
                ("transient", sigma / ((math::sqrt(p) * c + p * math::sqrt(nf)) * e32) * l * f0),
                ("graph", l * (f0 + l * rtilde0_sq) / (pc * epsilon)),
            ]
        }
    };
    Ok(RatePrediction {
        regime,
        epsilon,
        total: terms.iter().map(|t| t.1).sum(),
        terms,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub field: Field,
    /// Mean over the tail.
    pub value: f64,
    /// Batch-means standard error of `value`.
    pub std_err: f64,
    pub first_half: f64,
    pub second_half: f64,
    pub tail_len: usize,
    /// Whether the two halves of the tail agree.
    pub stationary: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn plateau_estimate(trace: &RunTrace, tail_fraction: f64) -> Result<Plateau> {
    plateau_estimate_of(trace, Field::OptError, tail_fraction)
}

/// Mean of `field` over the last `⌈tail_fraction·len⌉` snapshots.
pub fn plateau_estimate_of(trace: &RunTrace, field: Field, tail_fraction: f64) -> Result<Plateau> {
    plateau_of_values(&trace.values(field), field, tail_fraction)
}

pub fn plateau_of_values(values: &[f64], field: Field, tail_fraction: f64) -> Result<Plateau> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        bail!(InvalidParameter, "tail fraction {tail_fraction} not in (0, 0.5]");
    }
    if values.len() < MIN_PLATEAU_SNAPSHOTS {
        bail!(
            InsufficientData,
            "{} snapshots, need at least {MIN_PLATEAU_SNAPSHOTS}",
            values.len()
        );
    }
    let k = (math::floor(values.len() as f64 * tail_fraction - 1e-9) as usize + 1).max(2);
    let tail = &values[values.len() - k..];
    let (a, b) = tail.split_at(k / 2);
    let (first_half, second_half) = (mean(a), mean(b));
    let gap = math::abs(first_half - second_half);
    let stationary = gap <= STATIONARITY_ABS_TOL
        || gap <= STATIONARITY_REL_TOL * math::abs(first_half).max(math::abs(second_half));

    let batches = MAX_BATCHES.min(k);
    let size = k / batches;
    let used = &tail[k - batches * size..];
    let means: Vec<f64> = used.chunks(size).map(mean).collect();
    let grand = mean(&means);
    let var = if batches > 1 {
        means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64
    } else {
        0.0
    };
    Ok(Plateau {
        field,
        value: mean(tail),
        std_err: math::sqrt(var / batches as f64),
        first_half,
        second_half,
        tail_len: k,
        stationary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln y = slope·ln x + intercept`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        bail!(DimensionMismatch, "{} x values, {} y values", xs.len(), ys.len());
    }
    if xs.len() < 3 {
        bail!(InsufficientData, "need at least 3 points, got {}", xs.len());
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        bail!(InvalidParameter, "log-log fit needs positive finite values, got {v}");
    }
    let lx: Vec<f64> = xs.iter().map(|v| math::ln(*v)).collect();
    let ly: Vec<f64> = ys.iter().map(|v| math::ln(*v)).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        bail!(InvalidParameter, "log-log fit needs at least two distinct x values");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - resid / syy };
    Ok(LogLogFit { slope, intercept, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::Algorithm;
    use alloc::vec;

    fn config() -> RunConfig {
        RunConfig {
            algorithm: Algorithm::Gt,
            steps: 1,
            gamma: 0.1,
            record_every: 1,
            seed: 0,
        }
    }

    fn trace_of(values: &[f64]) -> RunTrace {
        let mut t = RunTrace::new(config());
        for (i, v) in values.iter().enumerate() {
            t.push(Snapshot {
                t: i as u64,
                opt_error: *v,
                consensus_dist: 0.0,
                mean_dist: 0.0,
                worker_error: 0.0,
            });
        }
        t
    }

    fn state(x: Matrix, y: Matrix, gamma: f64) -> WorkerState {
        let g = y.clone();
        WorkerState { x, y, g_prev: g, t: 0, gamma }
    }

    #[test]
    fn consensus_distance_examples() {
        let s = state(
            Matrix::from_rows(&[vec![0.0, 2.0]]).unwrap(),
            Matrix::zeros(1, 2),
            0.1,
        );
        assert!((consensus_distance(&s) - 1.0).abs() < 1e-15);
        let s = state(
            Matrix::from_rows(&[vec![3.0, 3.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            0.5,
        );
        assert_eq!(consensus_distance(&s), 0.0);
        let s = state(
            Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[vec![-1.0, 1.0]]).unwrap(),
            0.5,
        );
        assert!((consensus_distance(&s) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn noise_floor_prediction() {
        let v = predict_noise_floor(0.01, 1.0, 300, 0.1, 8.0 / 9.0);
        let expected = 0.01 / 300.0 + 1e-4 / (0.1 * 64.0 / 81.0);
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 1.3e-3).abs() < 1e-4);
        let a = predict_noise_floor(0.01, 1.0, 1 << 40, 1.0, 1.0);
        assert!((a - 1e-4).abs() < 1e-12);
    }

    fn inputs() -> RateInputs {
        RateInputs {
            l: 2.0,
            mu: 2.0,
            sigma: 1.0,
            n: 10,
            p: 0.1,
            c: 0.9,
            f0: 1.0,
            r0_sq: 1.0,
            rtilde0_sq: 0.5,
        }
    }

    #[test]
    fn rate_prediction_shapes() {
        let mut inp = inputs();
        inp.sigma = 0.0;
        let r = predict_iterations(Regime::StronglyConvex, &inp, 1e-3).unwrap();
        assert_eq!(r.terms[0].1, 0.0);
        assert_eq!(r.terms[1].1, 0.0);
        assert!((r.total - 2.0 / (2.0 * 0.09) * (1e3f64).ln()).abs() < 1e-9);

        let mut inp = inputs();
        inp.mu = 0.0;
        assert!(predict_iterations(Regime::StronglyConvex, &inp, 1e-3).is_err());
        assert!(predict_iterations(Regime::Convex, &inp, 1e-3).is_ok());

        for regime in [Regime::StronglyConvex, Regime::Convex, Regime::NonConvex] {
            let a = predict_iterations(regime, &inputs(), 1e-2).unwrap();
            let mut half = inputs();
            half.p /= 2.0;
            let b = predict_iterations(regime, &half, 1e-2).unwrap();
            assert_eq!(a.leading(), b.leading());
            assert!(b.total > a.total);
            assert!(a.terms.iter().all(|t| t.1 >= 0.0));
        }
    }

    #[test]
    fn plateau_basics() {
        let p = plateau_estimate(&trace_of(&[0.3; 40]), 0.25).unwrap();
        assert!((p.value - 0.3).abs() < 1e-15);
        assert!(p.stationary);
        let vals: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let p = plateau_estimate(&trace_of(&vals), 0.5).unwrap();
        assert_eq!(p.tail_len, 5);
        assert_eq!(p.value, 8.0);
        assert!(plateau_estimate(&trace_of(&[1.0; 9]), 0.25).is_err());
        assert!(plateau_estimate(&trace_of(&[1.0; 20]), 0.6).is_err());
    }

    #[test]
    fn plateau_of_decaying_trace() {
        let vals: Vec<f64> = (1..=10_000).map(|t| 0.5 + 1.0 / t as f64).collect();
        let p = plateau_estimate(&trace_of(&vals), 0.25).unwrap();
        assert!((p.value - 0.5).abs() < 0.025 && p.stationary);
        let decaying: Vec<f64> = (0..40).map(|t| (-(t as f64) / 3.0).exp()).collect();
        assert!(!plateau_estimate(&trace_of(&decaying), 0.25).unwrap().stationary);
        let tiny: Vec<f64> = (0..40).map(|t| 1e-20 * (-(t as f64)).exp()).collect();
        assert!(plateau_estimate(&trace_of(&tiny), 0.25).unwrap().stationary);
    }

    #[test]
    fn loglog_examples() {
        let xs = [1.0, 2.0, 5.0, 10.0];
        let f = loglog_slope(&xs, &xs.map(|x| 2.0 * x)).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.intercept - 2f64.ln()).abs() < 1e-12);
        let f = loglog_slope(&xs, &xs.map(|x| 3.0 * x * x)).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(loglog_slope(&[1.0, 0.0, 2.0], &[1.0, 1.0, 2.0]).is_err());
    }
}
