//! Lifted iteration matrices of gradient tracking and numerical checks of
//! their contraction and operator-norm bounds.
//!
//! With `W̃ = W − 𝟙𝟙ᵀ/n`, the consensus errors of gradient tracking evolve by
//! right-multiplication with `J = [[W̃, 0], [−W̃, W̃]]`, whose powers have the
//! block form `Jⁱ = [[W̃ⁱ, 0], [−i·W̃ⁱ, W̃ⁱ]]`. The checks here compare norms of
//! these objects against their closed-form bounds, both directly (explicit
//! matrix powers and power iteration) and through the spectrum of `W̃`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{spectral_norm_sq, symmetric_eigenvalues, Matrix};
use crate::math;
use crate::mixing::{spectral_params, MixingMatrix, SpectralParams};
use crate::rng;

/// Slack added to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-9;

/// `W − 𝟙𝟙ᵀ/n`.
pub fn tilde_w(w: &MixingMatrix) -> Matrix {
    let inv = 1.0 / w.n() as f64;
    Matrix::from_fn(w.n(), w.n(), |i, j| w.weight(i, j) - inv)
}

/// A `2n × 2n` matrix kept both as its four `n × n` blocks and assembled.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedMatrix {
    pub blocks: [[Matrix; 2]; 2],
    pub assembled: Matrix,
}

impl LiftedMatrix {
    pub fn from_blocks(blocks: [[Matrix; 2]; 2]) -> Self {
        let n = blocks[0][0].rows();
        let assembled = Matrix::from_fn(2 * n, 2 * n, |i, j| blocks[i / n][j / n][(i % n, j % n)]);
        Self { blocks, assembled }
    }
}

/// `J = [[W̃, 0], [−W̃, W̃]]`.
pub fn lifted_j(w: &MixingMatrix) -> LiftedMatrix {
    let t = tilde_w(w);
    LiftedMatrix::from_blocks([
        [t.clone(), Matrix::zeros(w.n(), w.n())],
        [t.scaled(-1.0), t],
    ])
}

/// `Jⁱ` from its block form `[[W̃ⁱ, 0], [−i·W̃ⁱ, W̃ⁱ]]`.
pub fn lifted_j_power(w: &MixingMatrix, i: u64) -> Result<LiftedMatrix> {
    let p = tilde_w(w).pow(i)?;
    Ok(LiftedMatrix::from_blocks([
        [p.clone(), Matrix::zeros(w.n(), w.n())],
        [p.scaled(-(i as f64)), p],
    ]))
}

/// Iteration matrix of gradient tracking on the consensus problem,
/// `[[W̃, −W̃], [γ(W − I), (1 − γ)W̃]]`.
pub fn lifted_consensus(w: &MixingMatrix, gamma: f64) -> LiftedMatrix {
    let n = w.n();
    let t = tilde_w(w);
    let w_minus_i = Matrix::from_fn(n, n, |i, j| {
        gamma * (w.weight(i, j) - if i == j { 1.0 } else { 0.0 })
    });
    LiftedMatrix::from_blocks([[t.clone(), t.scaled(-1.0)], [w_minus_i, t.scaled(1.0 - gamma)]])
}

/// `‖Jⁱ‖²` (squared spectral norm), computed on the assembled block form.
pub fn j_power_norm(w: &MixingMatrix, i: u64) -> Result<f64> {
    spectral_norm_sq(&lifted_j_power(w, i)?.assembled)
}

/// `(1 − p)ⁱ + i²(1 − p)ⁱ`.
pub fn j_power_bound(p: f64, i: u64) -> f64 {
    let q = math::powi(1.0 - p, i);
    q + (i as f64) * (i as f64) * q
}

/// `‖(i+1)·W̃ⁱ⁺¹ − i·W̃ⁱ‖²`.
pub fn diff_power_norm(w: &MixingMatrix, i: u64) -> Result<f64> {
    let t = tilde_w(w);
    let pi = t.pow(i)?;
    let pi1 = pi.matmul(&t)?;
    let m = pi1.scaled((i + 1) as f64).sub(&pi.scaled(i as f64))?;
    spectral_norm_sq(&m)
}

/// `‖i·W̃ⁱ‖²`.
pub fn scaled_power_norm(w: &MixingMatrix, i: u64) -> Result<f64> {
    let m = tilde_w(w).pow(i)?.scaled(i as f64);
    spectral_norm_sq(&m)
}

/// Largest squared singular value of `[[1, 0], [−i, 1]]`.
fn unit_lift_norm_sq(i: u64) -> f64 {
    let x = i as f64;
    (x * x + 2.0 + x * math::sqrt(x * x + 4.0)) / 2.0
}

/// Spectrum of `W̃`, from which the norms above follow in `O(n)` per power.
#[derive(Clone, Debug)]
pub struct TildeSpectrum {
    pub values: Vec<f64>,
    radius: f64,
}

impl TildeSpectrum {
    pub fn of(w: &MixingMatrix) -> Result<Self> {
        let values = symmetric_eigenvalues(&tilde_w(w))?;
        let radius = values.iter().fold(0.0, |m: f64, v| m.max(math::abs(*v)));
        Ok(Self { values, radius })
    }

    /// `‖W̃‖`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diff_power_norm(&self, i: u64) -> f64 {
        let k = i as f64;
        self.values
            .iter()
            .map(|&l| {
                let li = math::powi(l, i);
                let v = (k + 1.0) * li * l - k * li;
                v * v
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled_power_norm(&self, i: u64) -> f64 {
        let v = i as f64 * math::powi(self.radius, i);
        v * v
    }

    /// `‖Jⁱ‖² = ‖W̃‖²ⁱ · σ²_max([[1, 0], [−i, 1]])`, since `Jⁱ` is the Kronecker
    /// product of that 2×2 matrix with `W̃ⁱ`.
    pub fn j_power_norm(&self, i: u64) -> f64 {
        math::powi(self.radius * self.radius, i) * unit_lift_norm_sq(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyLemmaReport {
    pub tau: u64,
    pub norm_sq: f64,
    pub pass: bool,
}

/// `‖J^τ‖² ≤ 1/2` at `τ = τ(p)`.
pub fn verify_key_lemma(w: &MixingMatrix) -> Result<KeyLemmaReport> {
    let sp = spectral_params(w)?;
    let norm_sq = j_power_norm(w, sp.tau)?;
    Ok(KeyLemmaReport {
        tau: sp.tau,
        norm_sq,
        pass: norm_sq <= 0.5,
    })
}

/// Worst case of one norm sweep against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    /// Largest measured value over the sweep.
    pub max_value: f64,
    pub argmax: u64,
    /// Largest `value − bound` over the sweep; positive means violated.
    pub max_excess: f64,
    pub worst_i: u64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(bound: f64) -> Self {
        Self {
            bound,
            max_value: f64::NEG_INFINITY,
            argmax: 0,
            max_excess: f64::NEG_INFINITY,
            worst_i: 0,
            pass: true,
        }
    }

    fn record(&mut self, i: u64, value: f64, bound: f64) {
        if value > self.max_value {
            self.max_value = value;
            self.argmax = i;
        }
        let excess = value - bound;
        if excess > self.max_excess {
            self.max_excess = excess;
            self.worst_i = i;
        }
        if !(value <= bound + BOUND_SLACK) {
            self.pass = false;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormLemmaReport {
    pub p: f64,
    pub c: f64,
    pub tau: u64,
    /// Powers `i = 0..=max_i` were swept.
    pub max_i: u64,
    /// `‖(i+1)W̃ⁱ⁺¹ − iW̃ⁱ‖² ≤ 16/c²`.
    pub diff_power: BoundCheck,
    /// `‖iW̃ⁱ‖² ≤ 4/p²`.
    pub scaled_power: BoundCheck,
    /// `‖Jⁱ‖² ≤ (1 − p)ⁱ + i²(1 − p)ⁱ`; `bound` holds the value at `worst_i`.
    pub j_power: BoundCheck,
    /// Largest relative gap between the spectral route and explicit matrix
    /// powers at the sampled powers.
    pub cross_check_rel_err: f64,
}

/// Powers at which the explicit matrix route is compared with the spectral route.
fn cross_check_powers(tau: u64) -> Vec<u64> {
    let mut v = vec![0, 1, 2, 3, 5, 8];
    v.push(tau);
    v
}

/// Sweeps `i = 0..=max_i` (default `3τ`) over the three norm bounds.
pub fn verify_norm_lemmas(w: &MixingMatrix, max_i: Option<u64>) -> Result<NormLemmaReport> {
    let sp = spectral_params(w)?;
    let spectrum = TildeSpectrum::of(w)?;
    let max_i = max_i.unwrap_or(3 * sp.tau);

    let mut diff = BoundCheck::new(16.0 / (sp.c * sp.c));
    let mut scaled = BoundCheck::new(4.0 / (sp.p * sp.p));
    let mut jpow = BoundCheck::new(f64::NAN);
    for i in 0..=max_i {
        diff.record(i, spectrum.diff_power_norm(i), diff.bound);
        scaled.record(i, spectrum.scaled_power_norm(i), scaled.bound);
        jpow.record(i, spectrum.j_power_norm(i), j_power_bound(sp.p, i));
    }
    jpow.bound = j_power_bound(sp.p, jpow.worst_i);

    let mut cross: f64 = 0.0;
    for i in cross_check_powers(sp.tau) {
        let pairs = [
            (diff_power_norm(w, i)?, spectrum.diff_power_norm(i)),
            (scaled_power_norm(w, i)?, spectrum.scaled_power_norm(i)),
            (j_power_norm(w, i)?, spectrum.j_power_norm(i)),
        ];
        for (direct, spectral) in pairs {
            let scale = direct.abs().max(spectral.abs()).max(1e-300);
            if direct != spectral {
                cross = cross.max(math::abs(direct - spectral) / scale);
            }
        }
    }

    Ok(NormLemmaReport {
        p: sp.p,
        c: sp.c,
        tau: sp.tau,
        max_i,
        diff_power: diff,
        scaled_power: scaled,
        j_power: jpow,
        cross_check_rel_err: cross,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialStateReport {
    pub gamma: f64,
    pub samples: usize,
    pub max_t: u64,
    /// Largest `‖Ψ⁰Jᵗ‖²_F / (2‖ΔX⁰‖²_F + (3γ²/p²)‖ΔY⁰‖²_F)` seen.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks `‖Ψ⁰Jᵗ‖²_F ≤ 2‖ΔX⁰‖²_F + (3γ²/p²)‖ΔY⁰‖²_F` for `t = 0..=max_t` by
/// repeated right-multiplication with `J`. `Ψ⁰ = [ΔX⁰, γΔY⁰]` has `d` rows;
/// besides `samples` random centered draws, one extremal start puts `ΔY⁰` on
/// the eigenvector of `W̃` with largest `|λ|` and `ΔX⁰ = 0`.
pub fn verify_initial_state_bound(
    w: &MixingMatrix,
    params: &SpectralParams,
    gamma: f64,
    d: usize,
    samples: usize,
    max_t: u64,
    seed: u64,
) -> Result<InitialStateReport> {
    let n = w.n();
    let mut starts = Vec::with_capacity(samples + 1);
    let eig = crate::linalg::symmetric_eigen(&tilde_w(w))?;
    let top = if math::abs(eig.values[0]) >= math::abs(eig.values[n - 1]) {
        0
    } else {
        n - 1
    };
    let v = eig.vector(top);
    starts.push((Matrix::zeros(d, n), Matrix::from_fn(d, n, |_, i| v[i])));
    for s in 0..samples {
        let mut r = rng::stream(seed, rng::CHECK_STREAM, s as u64);
        let mut dx = Matrix::zeros(d, n);
        let mut dy = Matrix::zeros(d, n);
        rng::fill_gaussian(&mut r, 1.0, dx.as_mut_slice());
        rng::fill_gaussian(&mut r, 1.0, dy.as_mut_slice());
        center_rows(&mut dx);
        center_rows(&mut dy);
        starts.push((dx, dy));
    }

    let mut max_ratio: f64 = 0.0;
    for (dx, dy) in starts {
        let bound = 2.0 * dx.frobenius_norm_sq()
            + 3.0 * gamma * gamma / (params.p * params.p) * dy.frobenius_norm_sq();

        // Ψ = [a, b] with a = ΔX, b = γΔY; ΨJ = [(a − b)W̃, bW̃].
        let mut a = dx;
        let mut b = dy.scaled(gamma);
        let mut scratch = Matrix::zeros(d, n);
        for t in 0..=max_t {
            let value = a.frobenius_norm_sq() + b.frobenius_norm_sq();
            if bound > 0.0 {
                max_ratio = max_ratio.max(value / bound);
            }
            if t == max_t || value == 0.0 {
                break;
            }
            let diff = a.sub(&b)?;
            apply_tilde(w, &diff, &mut a);
            apply_tilde(w, &b, &mut scratch);
            core::mem::swap(&mut b, &mut scratch);
        }
    }
    Ok(InitialStateReport {
        gamma,
        samples: samples + 1,
        max_t,
        max_ratio,
        pass: max_ratio <= 1.0 + BOUND_SLACK,
    })
}

fn center_rows(m: &mut Matrix) {
    let means = m.column_mean();
    for (r, mean) in means.iter().enumerate() {
        for v in m.row_mut(r) {
            *v -= mean;
        }
    }
}

/// `out = x·W̃ = x·W − x̄𝟙ᵀ`.
fn apply_tilde(w: &MixingMatrix, x: &Matrix, out: &mut Matrix) {
    w.mix_into(x, out);
    let means = x.column_mean();
    for (r, mean) in means.iter().enumerate() {
        for v in out.row_mut(r) {
            *v -= mean;
        }
    }
}

/// The 2×2 block `[[λ, −λ], [γ(λ − 1), (1 − γ)λ]]` that governs one
/// eigen-direction of gradient tracking on the consensus problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusBlock {
    pub lambda: f64,
    pub gamma: f64,
    pub m: [[f64; 2]; 2],
    pub eigs: [Complex64; 2],
}

impl ConsensusBlock {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            m: [[lambda, -lambda], [gamma * (lambda - 1.0), (1.0 - gamma) * lambda]],
            eigs: consensus_block_eigs(lambda, gamma),
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigs[0].norm().max(self.eigs[1].norm())
    }
}

/// `λ − γλ/2 ∓ ½·√(γλ)·√(4 + (γ − 4)λ)` with principal complex square roots.
pub fn consensus_block_eigs(lambda: f64, gamma: f64) -> [Complex64; 2] {
    let center = Complex64::new(lambda - gamma * lambda / 2.0, 0.0);
    let a = Complex64::new(gamma * lambda, 0.0).sqrt();
    let b = Complex64::new(4.0 + (gamma - 4.0) * lambda, 0.0).sqrt();
    let half = a * b * 0.5;
    [center - half, center + half]
}

/// Eigenvalues of a real 2×2 matrix from its characteristic polynomial.
pub fn eig2x2(m: [[f64; 2]; 2]) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let mid = Complex64::new(tr / 2.0, 0.0);
    [mid - disc, mid + disc]
}

/// Distance between two unordered pairs of complex numbers.
pub fn pair_distance(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    let straight = (a[0] - b[0]).norm().max((a[1] - b[1]).norm());
    let swapped = (a[0] - b[1]).norm().max((a[1] - b[0]).norm());
    straight.min(swapped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusBoundPoint {
    pub lambda: f64,
    pub gamma: f64,
    pub max_modulus: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusBoundReport {
    pub grid_step: f64,
    pub points: usize,
    /// Largest `max_modulus − (|λ|/3 + 2/3)` on the grid.
    pub max_excess: f64,
    /// Grid points where the bound fails.
    pub violations: Vec<ConsensusBoundPoint>,
    /// Largest distance between closed-form and characteristic-polynomial eigenvalues.
    pub max_closed_form_err: f64,
    /// `λ` values where the modulus decreased as `γ` grew.
    pub monotonicity_violations: Vec<f64>,
    pub pass: bool,
}

pub const CONSENSUS_BOUND_SLACK: f64 = 1e-12;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
const MONOTONE_SUBGRID: usize = 25;

/// Grid check of `max|eig(M)| ≤ |λ|/3 + 2/3` at `γ = 1 − |λ|` for
/// `λ ∈ {−1 + h, …, 1 − h}`, plus a spot-check that the modulus does not
/// decrease in `γ` on `(0, 1 − |λ|]`.
pub fn verify_consensus_bound(grid_step: f64) -> Result<ConsensusBoundReport> {
    if !(grid_step > 0.0 && grid_step <= 0.01) {
        crate::error::bail!(InvalidParameter, "grid step {grid_step} not in (0, 0.01]");
    }
    let steps = math::floor(2.0 / grid_step + 0.5) as i64;
    let mut report = ConsensusBoundReport {
        grid_step,
        points: 0,
        max_excess: f64::NEG_INFINITY,
        violations: Vec::new(),
        max_closed_form_err: 0.0,
        monotonicity_violations: Vec::new(),
        pass: true,
    };
    for k in 1..steps {
        let lambda = -1.0 + k as f64 * grid_step;
        if lambda >= 1.0 {
            break;
        }
        let gamma = 1.0 - math::abs(lambda);
        let block = ConsensusBlock::new(lambda, gamma);
        let modulus = block.max_modulus();
        let bound = math::abs(lambda) / 3.0 + 2.0 / 3.0;
        report.points += 1;
        report.max_excess = report.max_excess.max(modulus - bound);
        if modulus > bound + CONSENSUS_BOUND_SLACK {
            report.violations.push(ConsensusBoundPoint {
                lambda,
                gamma,
                max_modulus: modulus,
                bound,
            });
        }
        report.max_closed_form_err = report
            .max_closed_form_err
            .max(pair_distance(block.eigs, eig2x2(block.m)));

        let mut prev = 0.0;
        for j in 1..=MONOTONE_SUBGRID {
            let g = gamma * j as f64 / MONOTONE_SUBGRID as f64;
            let m = ConsensusBlock::new(lambda, g).max_modulus();
            if m < prev - CONSENSUS_BOUND_SLACK {
                report.monotonicity_violations.push(lambda);
                break;
            }
            prev = m;
        }
    }
    report.pass = report.violations.is_empty()
        && report.max_closed_form_err <= CLOSED_FORM_TOL
        && report.monotonicity_violations.is_empty();
    Ok(report)
}
