//! Noise-floor sweeps and the consensus demo, split into independent cells so
//! a caller can run them in any order or in parallel.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::algorithms::{run_with_state, Algorithm, RunConfig};
use crate::error::{bail, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::metrics::{
    loglog_slope, plateau_estimate_of, predict_noise_floor, Field, LogLogFit, Plateau, RunTrace,
    DEFAULT_TAIL_FRACTION,
};
use crate::mixing::{
    build_fully_connected, build_interpolated_ring, build_ring_self_weight, build_ring_uniform,
    spectral_params, MixingMatrix, SpectralParams,
};
use crate::problems::{
    make_consensus, make_quadratic_gaussian, make_quadratic_structured, GradientOracle,
};
use crate::rng;

/// The control plateau may be at most this fraction of the smallest swept one.
pub const GUARD_RATIO: f64 = 0.1;
pub const DEFAULT_N: usize = 300;
pub const DEFAULT_D: usize = 100;
pub const DEFAULT_SIGMA2: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.02;
pub const DEFAULT_STEPS: u64 = 20_000;
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
pub const DEFAULT_SELF_WEIGHTS: [f64; 5] = [1.0 / 3.0, 0.2, 0.1, 0.05, 0.02];
/// Points in the default interpolation grid.
pub const DEFAULT_ALPHA_POINTS: usize = 6;
/// Ratio between the largest and smallest `p` of the default grid.
pub const DEFAULT_P_SPAN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// Uniform ring blended with the complete graph, indexed by `α`.
    P,
    /// Ring with varying self weight.
    C,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::P => "sweep-p",
            SweepMode::C => "sweep-c",
        }
    }

    pub fn param_name(self) -> &'static str {
        match self {
            SweepMode::P => "alpha",
            SweepMode::C => "self_weight",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Structured,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub n: usize,
    pub d: usize,
    pub sigma2: f64,
    pub gamma: f64,
    pub steps: u64,
    pub seeds: Vec<u64>,
    /// `α` values (sweep-p) or self weights (sweep-c).
    pub params: Vec<f64>,
    pub noise: NoiseKind,
    pub record_every: u64,
    pub tail_fraction: f64,
    /// Quantity whose plateau is measured.
    pub field: Field,
}

/// `α` values whose interpolated rings have `p` log-spaced over one decade,
/// starting from the plain ring (`α = 1`).
pub fn default_alphas(n: usize) -> Result<Vec<f64>> {
    let ring = spectral_params(&build_ring_uniform(n)?)?;
    // W̃_α = α·W̃_ring, so p(α) = 1 − α²(1 − p_ring).
    let rho_sq = 1.0 - ring.p;
    let k = DEFAULT_ALPHA_POINTS;
    Ok((0..k)
        .map(|j| {
            let p = ring.p * math::exp(math::ln(DEFAULT_P_SPAN) * j as f64 / (k - 1) as f64);
            math::sqrt((1.0 - p) / rho_sq).min(1.0)
        })
        .collect())
}

impl SweepSpec {
    pub fn defaults(mode: SweepMode) -> Result<Self> {
        let params = match mode {
            SweepMode::P => default_alphas(DEFAULT_N)?,
            SweepMode::C => DEFAULT_SELF_WEIGHTS.to_vec(),
        };
        Ok(Self {
            mode,
            n: DEFAULT_N,
            d: DEFAULT_D,
            sigma2: DEFAULT_SIGMA2,
            gamma: DEFAULT_GAMMA,
            steps: DEFAULT_STEPS,
            seeds: DEFAULT_SEEDS.to_vec(),
            params,
            noise: NoiseKind::Gaussian,
            record_every: DEFAULT_STEPS / 400,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            field: Field::WorkerError,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() || self.seeds.is_empty() {
            bail!(InvalidParameter, "parameter and seed lists must be non-empty");
        }
        if self.n < 3 || self.d == 0 {
            bail!(InvalidParameter, "need n >= 3 and d >= 1");
        }
        if !(self.sigma2 >= 0.0 && self.gamma > 0.0 && self.record_every > 0) {
            bail!(InvalidParameter, "need sigma2 >= 0, gamma > 0, record_every >= 1");
        }
        if self.noise == NoiseKind::Structured && self.d % 2 != 0 {
            bail!(InvalidParameter, "structured noise needs an even dimension");
        }
        for &v in &self.params {
            let ok = match self.mode {
                SweepMode::P => (0.0..=1.0).contains(&v),
                SweepMode::C => v > 0.0 && v < 1.0,
            };
            if !ok {
                bail!(InvalidParameter, "{} = {v} out of range", self.mode.param_name());
            }
        }
        Ok(())
    }

    pub fn mixing_for(&self, topology: Topology) -> Result<MixingMatrix> {
        match topology {
            Topology::Control => build_fully_connected(self.n),
            Topology::Swept(k) => {
                let v = self.params[k];
                match self.mode {
                    SweepMode::P => build_interpolated_ring(self.n, v),
                    SweepMode::C => build_ring_self_weight(self.n, v),
                }
            }
        }
    }

    pub fn oracle_for(&self, w: &MixingMatrix, seed: u64) -> Result<GradientOracle> {
        match self.noise {
            NoiseKind::Gaussian => make_quadratic_gaussian(self.n, self.d, self.sigma2, seed),
            NoiseKind::Structured => make_quadratic_structured(w, self.d, self.sigma2, seed),
        }
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            algorithm: Algorithm::Gt,
            steps: self.steps,
            gamma: self.gamma,
            record_every: self.record_every,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Index into `SweepSpec::params`.
    Swept(usize),
    /// Fully connected control run for the noise-floor guard.
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub topology: Topology,
    pub seed: u64,
}

/// All cells of a sweep in output order: swept topologies by parameter then
/// seed, followed by the control runs.
pub fn cells(spec: &SweepSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for k in 0..spec.params.len() {
        for &seed in &spec.seeds {
            out.push(Cell {
                topology: Topology::Swept(k),
                seed,
            });
        }
    }
    for &seed in &spec.seeds {
        out.push(Cell {
            topology: Topology::Control,
            seed,
        });
    }
    out
}

/// `x⁽⁰⁾` with i.i.d. standard normal entries.
pub fn initial_point(d: usize, n: usize, seed: u64) -> Matrix {
    let mut x = Matrix::zeros(d, n);
    let mut r = rng::stream(seed, rng::INIT_STREAM, 0);
    rng::fill_gaussian(&mut r, 1.0, x.as_mut_slice());
    x
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub params: SpectralParams,
    pub plateau: Plateau,
    pub trace: RunTrace,
}

pub fn run_cell(spec: &SweepSpec, cell: Cell) -> Result<CellResult> {
    let w = spec.mixing_for(cell.topology)?;
    let params = spectral_params(&w)?;
    let oracle = spec.oracle_for(&w, cell.seed)?;
    let x0 = initial_point(spec.d, spec.n, cell.seed);
    let (trace, _) = run_with_state(&spec.run_config(cell.seed), &w, &oracle, x0)?;
    let plateau = plateau_estimate_of(&trace, spec.field, spec.tail_fraction)?;
    Ok(CellResult {
        cell,
        params,
        plateau,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub p: f64,
    pub c: f64,
    /// Plateau averaged over seeds.
    pub plateau: f64,
    /// Standard error of the seed average.
    pub std_err: f64,
    pub predicted_floor: f64,
    /// Every seed passed the stationarity check.
    pub stationary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuardReport {
    pub control_plateau: f64,
    pub min_swept_plateau: f64,
    pub ratio: f64,
    pub stationary: bool,
    pub pass: bool,
    /// Why the guard failed, if it did.
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedFit {
    pub name: &'static str,
    pub fit: LogLogFit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub mode: SweepMode,
    pub rows: Vec<SweepRow>,
    pub guard: GuardReport,
    /// Empty when the guard failed.
    pub fits: Vec<NamedFit>,
}

impl SweepSummary {
    pub fn fit(&self, name: &str) -> Option<&LogLogFit> {
        self.fits.iter().find(|f| f.name == name).map(|f| &f.fit)
    }
}

struct SeedStats {
    mean: f64,
    std_err: f64,
    stationary: bool,
}

fn seed_stats(plateaus: &[&Plateau]) -> SeedStats {
    let k = plateaus.len() as f64;
    let mean = plateaus.iter().map(|p| p.value).sum::<f64>() / k;
    // Combine per-seed batch errors; seeds are independent.
    let var = plateaus.iter().map(|p| p.std_err * p.std_err).sum::<f64>() / (k * k);
    SeedStats {
        mean,
        std_err: math::sqrt(var),
        stationary: plateaus.iter().all(|p| p.stationary),
    }
}

/// Gathers cell results into rows, checks the control guard, and fits slopes.
pub fn summarize(spec: &SweepSpec, results: &[CellResult]) -> Result<SweepSummary> {
    let mut rows = Vec::with_capacity(spec.params.len());
    for (k, &param) in spec.params.iter().enumerate() {
        let mine: Vec<&CellResult> = results
            .iter()
            .filter(|r| r.cell.topology == Topology::Swept(k))
            .collect();
        let Some(first) = mine.first() else {
            bail!(InsufficientData, "no results for {} = {param}", spec.mode.param_name());
        };
        let stats = seed_stats(&mine.iter().map(|r| &r.plateau).collect::<Vec<_>>());
        let (p, c) = (first.params.p, first.params.c);
        rows.push(SweepRow {
            param,
            p,
            c,
            plateau: stats.mean,
            std_err: stats.std_err,
            predicted_floor: predict_noise_floor(spec.gamma, spec.sigma2, spec.n, p, c),
            stationary: stats.stationary,
        });
    }

    let control: Vec<&Plateau> = results
        .iter()
        .filter(|r| r.cell.topology == Topology::Control)
        .map(|r| &r.plateau)
        .collect();
    if control.is_empty() {
        bail!(InsufficientData, "no control runs");
    }
    let control = seed_stats(&control);
    let guard = guard(&rows, control.mean, control.stationary);

    let mut fits = Vec::new();
    if guard.pass {
        let ys: Vec<f64> = rows.iter().map(|r| r.plateau).collect();
        let inv = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let mut push = |name: &'static str, xs: Vec<f64>| -> Result<()> {
            fits.push(NamedFit {
                name,
                fit: loglog_slope(&xs, &ys)?,
            });
            Ok(())
        };
        match spec.mode {
            SweepMode::P => {
                push("inv_p", inv(&|r| 1.0 / r.p))?;
                push("inv_p2", inv(&|r| 1.0 / (r.p * r.p)))?;
            }
            SweepMode::C => {
                push("inv_pc", inv(&|r| 1.0 / (r.p * r.c)))?;
                push("inv_pc2", inv(&|r| 1.0 / (r.p * r.c * r.c)))?;
            }
        }
        push("predicted", inv(&|r| r.predicted_floor))?;
    }
    Ok(SweepSummary {
        mode: spec.mode,
        rows,
        guard,
        fits,
    })
}

/// The control plateau must be at most [`GUARD_RATIO`] times the smallest
/// swept plateau, and every run must have settled.
pub fn guard(rows: &[SweepRow], control_plateau: f64, control_stationary: bool) -> GuardReport {
    let min_swept = rows.iter().map(|r| r.plateau).fold(f64::INFINITY, f64::min);
    let ratio = if min_swept > 0.0 {
        control_plateau / min_swept
    } else {
        f64::INFINITY
    };
    let unsettled: Vec<String> = rows
        .iter()
        .filter(|r| !r.stationary)
        .map(|r| format!("{}", r.param))
        .collect();
    let message = if !(ratio <= GUARD_RATIO) {
        Some(format!(
            "fully connected control plateau {control_plateau:.4e} is {ratio:.3} of the smallest swept plateau {min_swept:.4e} (limit {GUARD_RATIO})"
        ))
    } else if !control_stationary {
        Some("fully connected control run did not settle".into())
    } else if !unsettled.is_empty() {
        Some(format!("runs did not settle for parameters [{}]", unsettled.join(", ")))
    } else {
        None
    };
    GuardReport {
        control_plateau,
        min_swept_plateau: min_swept,
        ratio,
        stationary: control_stationary && unsettled.is_empty(),
        pass: message.is_none(),
        message,
    }
}

/// Runs every cell sequentially.
pub fn run_sweep(spec: &SweepSpec) -> Result<(SweepSummary, Vec<CellResult>)> {
    spec.validate()?;
    let results = cells(spec)
        .into_iter()
        .map(|c| run_cell(spec, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(spec, &results)?, results))
}

/// `μ_i = (i + 1)·e_{i mod d}`.
pub fn default_consensus_targets(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(d, n, |r, i| if r == i % d { (i + 1) as f64 } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusDemo {
    pub params: SpectralParams,
    pub gamma: f64,
    pub gt: RunTrace,
    pub dsgd: RunTrace,
    /// `(1/n)Σ‖x_i − x*‖²` at the end of each run.
    pub gt_final: f64,
    pub dsgd_final: f64,
    /// Largest relative gap between GT's `‖x̄ᵗ − x*‖²` and `(1 − γ)²ᵗ‖x̄⁰ − x*‖²`
    /// over recorded `t ≤ 50`.
    pub closed_form_rel_err: f64,
}

fn worker_distance(x: &Matrix, xstar: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (r, s) in xstar.iter().enumerate() {
        for v in x.row(r) {
            acc += (v - s) * (v - s);
        }
    }
    acc / x.cols() as f64
}

/// GT and D-SGD side by side on a noiseless consensus problem from `x⁽⁰⁾ = 0`.
pub fn consensus_demo(
    w: &MixingMatrix,
    targets: Matrix,
    gamma: f64,
    steps: u64,
    record_every: u64,
) -> Result<ConsensusDemo> {
    if targets.cols() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} nodes",
            targets.cols(),
            w.n()
        )));
    }
    let params = spectral_params(w)?;
    let oracle = make_consensus(targets, 0)?;
    let xstar = oracle.optimum();
    let x0 = Matrix::zeros(oracle.d, oracle.n);
    let mut cfg = RunConfig {
        algorithm: Algorithm::Gt,
        steps,
        gamma,
        record_every,
        seed: 0,
    };
    let (gt, gt_state) = run_with_state(&cfg, w, &oracle, x0.clone())?;
    cfg.algorithm = Algorithm::Dsgd;
    let (dsgd, dsgd_state) = run_with_state(&cfg, w, &oracle, x0)?;

    let r0 = gt.snapshots[0].mean_dist;
    let mut closed_form_rel_err: f64 = 0.0;
    for s in gt.snapshots.iter().filter(|s| s.t <= 50) {
        let expected = math::powi((1.0 - gamma) * (1.0 - gamma), s.t) * r0;
        if expected > 0.0 {
            closed_form_rel_err = closed_form_rel_err.max(math::abs(s.mean_dist - expected) / expected);
        } else {
            closed_form_rel_err = closed_form_rel_err.max(s.mean_dist);
        }
    }
    Ok(ConsensusDemo {
        params,
        gamma,
        gt_final: worker_distance(&gt_state.x, &xstar),
        dsgd_final: worker_distance(&dsgd_state.x, &xstar),
        gt,
        dsgd,
        closed_form_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(mode: SweepMode) -> SweepSpec {
        let mut s = SweepSpec::defaults(mode).unwrap();
        s.n = 8;
        s.d = 4;
        s.steps = 400;
        s.record_every = 4;
        s.seeds = alloc::vec![1, 2];
        s.params = match mode {
            SweepMode::P => alloc::vec![1.0, 0.8],
            SweepMode::C => alloc::vec![0.3, 0.1],
        };
        s
    }

    #[test]
    fn default_alpha_grid_spans_a_decade() {
        let alphas = default_alphas(30).unwrap();
        assert_eq!(alphas.len(), DEFAULT_ALPHA_POINTS);
        assert!((alphas[0] - 1.0).abs() < 1e-12);
        let ps: Vec<f64> = alphas
            .iter()
            .map(|&a| spectral_params(&build_interpolated_ring(30, a).unwrap()).unwrap().p)
            .collect();
        assert!((ps[ps.len() - 1] / ps[0] - DEFAULT_P_SPAN).abs() < 1e-6);
        assert!(ps.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn cells_cover_grid_and_controls() {
        let s = small_spec(SweepMode::C);
        let c = cells(&s);
        assert_eq!(c.len(), 2 * 2 + 2);
        assert_eq!(c[0], Cell { topology: Topology::Swept(0), seed: 1 });
        assert_eq!(c[5], Cell { topology: Topology::Control, seed: 2 });
    }

    #[test]
    fn noiseless_sweep_reaches_zero() {
        let mut s = small_spec(SweepMode::P);
        s.sigma2 = 0.0;
        s.gamma = 0.1;
        s.steps = 3000;
        s.record_every = 30;
        let (summary, _) = run_sweep(&s).unwrap();
        assert!(summary.rows.iter().all(|r| r.plateau <= 1e-12), "{:?}", summary.rows);
    }

    #[test]
    fn sweep_is_deterministic() {
        let s = small_spec(SweepMode::C);
        let a = run_sweep(&s).unwrap();
        let b = run_sweep(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.rows.len(), 2);
        assert!(a.0.rows[1].c <= a.0.rows[0].c);
    }

    #[test]
    fn guard_flags_large_control() {
        let row = SweepRow {
            param: 1.0,
            p: 0.1,
            c: 1.0,
            plateau: 1e-3,
            std_err: 0.0,
            predicted_floor: 0.0,
            stationary: true,
        };
        assert!(guard(core::slice::from_ref(&row), 5e-5, true).pass);
        let g = guard(&[row], 5e-4, true);
        assert!(!g.pass && g.message.unwrap().contains("control"));
    }

    #[test]
    fn consensus_demo_small_ring() {
        let w = build_ring_uniform(20).unwrap();
        let p = spectral_params(&w).unwrap().p;
        let demo = consensus_demo(&w, default_consensus_targets(20, 20), p, 6000, 10).unwrap();
        assert!(demo.gt_final < 1e-12, "{}", demo.gt_final);
        assert!(demo.dsgd_final > 1e-6);
        assert!(demo.closed_form_rel_err < 1e-10, "{}", demo.closed_form_rel_err);
    }
}
