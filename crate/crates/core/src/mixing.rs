//! Gossip mixing matrices and their spectral parameters.
//!
//! A mixing matrix is a symmetric, doubly stochastic, non-negative `n × n`
//! matrix whose off-diagonal support is the communication graph. Two
//! parameters summarize it: `p = 1 − max(|λ₂|, |λₙ|)²` governs how fast gossip
//! averaging contracts, and `c = 1 − min(λₙ, 0)²` measures how negative the
//! smallest eigenvalue is.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::graph::Graph;
use crate::linalg::{symmetric_eigen, symmetric_eigenvalues, Matrix, SymmetricEigen};
use crate::math;

/// Row-sum tolerance for double stochasticity.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Mixing parameters at or below this are treated as a disconnected graph.
pub const MIN_P: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct MixingMatrix {
    weights: Matrix,
    gossip: Gossip,
}

impl PartialEq for MixingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl MixingMatrix {
    /// Wraps `weights` after checking every mixing-matrix invariant.
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        let report = validate(&weights);
        if !report.is_valid() {
            if report.shape_ok
                && report.symmetric
                && report.doubly_stochastic
                && report.entries_in_range
                && !report.connected
            {
                return Err(Error::DisconnectedGraph {
                    p: report.p.unwrap_or(0.0),
                });
            }
            bail!(InvalidParameter, "not a mixing matrix: {}", report.failures.join("; "));
        }
        Ok(Self::new_unchecked(weights))
    }

    fn new_unchecked(weights: Matrix) -> Self {
        let gossip = Gossip::new(&weights);
        Self { weights, gossip }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Communication graph: `{i, j}` is an edge iff `w_ij > 0`.
    pub fn support(&self) -> Graph {
        let n = self.n();
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if self.weights[(i, j)] != 0.0 {
                    g.add_edge(i, j).expect("indices in range, i != j");
                }
            }
        }
        g
    }

    pub fn min_self_weight(&self) -> f64 {
        (0..self.n())
            .map(|i| self.weights[(i, i)])
            .fold(f64::INFINITY, f64::min)
    }

    /// `out = x · W` for a `d × n` matrix `x` whose columns are worker vectors.
    pub fn mix_into(&self, x: &Matrix, out: &mut Matrix) {
        self.gossip.apply(x, out);
    }

    pub fn mix(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        self.gossip.apply(x, &mut out);
        out
    }

    pub fn eigen(&self) -> Result<SymmetricEigen> {
        symmetric_eigen(&self.weights)
    }
}

/// `X·W` as a sparse product plus a constant offset: `W = S + b·𝟙𝟙ᵀ`, where
/// `b` is the most common entry when it is positive (dense blends with the
/// complete graph) and zero otherwise.
#[derive(Clone, Debug)]
struct Gossip {
    offset: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Gossip {
    fn new(w: &Matrix) -> Self {
        let n = w.rows();
        let min = w.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let at_min = w.as_slice().iter().filter(|&&v| v == min).count();
        let offset = if n > 0 && min > 0.0 && 2 * at_min >= n * n {
            min
        } else {
            0.0
        };
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for j in 0..n {
            for (i, &v) in w.row(j).iter().enumerate() {
                let s = v - offset;
                if s != 0.0 {
                    cols.push(i);
                    vals.push(s);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            offset,
            row_ptr,
            cols,
            vals,
        }
    }

    fn apply(&self, x: &Matrix, out: &mut Matrix) {
        let n = self.row_ptr.len() - 1;
        assert_eq!(x.cols(), n, "worker count mismatch");
        assert_eq!((out.rows(), out.cols()), (x.rows(), n));
        for r in 0..x.rows() {
            let xr = x.row(r);
            let base = if self.offset != 0.0 {
                self.offset * xr.iter().sum::<f64>()
            } else {
                0.0
            };
            let or = out.row_mut(r);
            for (j, o) in or.iter_mut().enumerate() {
                let mut acc = base;
                for k in self.row_ptr[j]..self.row_ptr[j + 1] {
                    acc += xr[self.cols[k]] * self.vals[k];
                }
                *o = acc;
            }
        }
    }
}

/// Builds a circulant ring matrix with the given self weight and neighbor weight.
fn ring_with(n: usize, self_weight: f64, neighbor: f64) -> Matrix {
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = self_weight;
        let j = (i + 1) % n;
        w[(i, j)] = neighbor;
        w[(j, i)] = neighbor;
    }
    w
}

/// Ring with weight 1/3 on self and on each neighbor.
pub fn build_ring_uniform(n: usize) -> Result<MixingMatrix> {
    if n < 3 {
        bail!(InvalidTopology, "ring needs n >= 3, got {n}");
    }
    let third = 1.0 / 3.0;
    MixingMatrix::from_weights(ring_with(n, third, third))
}

/// Ring with self weight `w` and `(1 − w)/2` on each neighbor.
pub fn build_ring_self_weight(n: usize, w: f64) -> Result<MixingMatrix> {
    if n < 3 {
        bail!(InvalidTopology, "ring needs n >= 3, got {n}");
    }
    if !(w > 0.0 && w < 1.0) {
        bail!(InvalidParameter, "self weight {w} not in (0, 1)");
    }
    MixingMatrix::from_weights(ring_with(n, w, (1.0 - w) / 2.0))
}

/// Uniform averaging over self and the four torus neighbors.
pub fn build_torus(rows: usize, cols: usize) -> Result<MixingMatrix> {
    let g = Graph::torus(rows, cols)?;
    let fifth = 1.0 / 5.0;
    let n = g.n();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = fifth;
        for &j in g.neighbors(i) {
            w[(i, j)] = fifth;
        }
    }
    MixingMatrix::from_weights(w)
}

pub fn build_fully_connected(n: usize) -> Result<MixingMatrix> {
    if n == 0 {
        bail!(InvalidTopology, "need at least one node");
    }
    let v = 1.0 / n as f64;
    MixingMatrix::from_weights(Matrix::from_fn(n, n, |_, _| v))
}

/// Metropolis–Hastings weights `w_ij = min{1/(deg i + 1), 1/(deg j + 1)}`.
pub fn build_metropolis_hastings(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    if n == 0 {
        bail!(InvalidTopology, "empty graph");
    }
    if !g.is_connected() {
        return Err(Error::DisconnectedGraph { p: 0.0 });
    }
    let mut w = Matrix::zeros(n, n);
    for (i, j) in g.edges() {
        let a = 1.0 / (g.degree(i) + 1) as f64;
        let b = 1.0 / (g.degree(j) + 1) as f64;
        let v = a.min(b);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_weights(w)
}

/// `α·Wa + (1 − α)·Wb`.
pub fn interpolate(wa: &MixingMatrix, wb: &MixingMatrix, alpha: f64) -> Result<MixingMatrix> {
    if wa.n() != wb.n() {
        bail!(InvalidParameter, "cannot blend {}-node and {}-node matrices", wa.n(), wb.n());
    }
    if !(0.0..=1.0).contains(&alpha) {
        bail!(InvalidParameter, "alpha {alpha} not in [0, 1]");
    }
    let beta = 1.0 - alpha;
    let a = wa.weights.as_slice();
    let b = wb.weights.as_slice();
    let data = a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect();
    let n = wa.n();
    MixingMatrix::from_weights(Matrix::from_row_major(n, n, data)?)
}

/// Uniform ring blended with the complete graph: `α·W_ring + (1 − α)·𝟙𝟙ᵀ/n`.
pub fn build_interpolated_ring(n: usize, alpha: f64) -> Result<MixingMatrix> {
    interpolate(&build_ring_uniform(n)?, &build_fully_connected(n)?, alpha)
}

/// Outcome of [`validate`]. Failures are collected, never raised.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub shape_ok: bool,
    pub symmetric: bool,
    pub doubly_stochastic: bool,
    pub max_row_sum_error: f64,
    pub entries_in_range: bool,
    pub connected: bool,
    /// Mixing parameter, when the spectrum could be computed.
    pub p: Option<f64>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate(w: &Matrix) -> ValidationReport {
    let mut failures = Vec::new();
    let shape_ok = w.is_square() && w.rows() > 0;
    if !shape_ok {
        failures.push(alloc::format!("shape {}x{} is not square and non-empty", w.rows(), w.cols()));
        return ValidationReport {
            shape_ok,
            symmetric: false,
            doubly_stochastic: false,
            max_row_sum_error: f64::NAN,
            entries_in_range: false,
            connected: false,
            p: None,
            failures,
        };
    }
    let n = w.rows();

    let mut symmetric = true;
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            if w[(i, j)] != w[(j, i)] {
                symmetric = false;
                failures.push(alloc::format!("asymmetric at ({i}, {j})"));
                break 'outer;
            }
        }
    }

    let entries_in_range = w.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v));
    if !entries_in_range {
        failures.push("entries outside [0, 1]".into());
    }

    let mut max_row_sum_error: f64 = 0.0;
    for i in 0..n {
        let s: f64 = w.row(i).iter().sum();
        max_row_sum_error = max_row_sum_error.max(math::abs(s - 1.0));
    }
    let doubly_stochastic = max_row_sum_error <= ROW_SUM_TOL;
    if !doubly_stochastic {
        failures.push(alloc::format!("row sums off by up to {max_row_sum_error:e}"));
    }

    let mut p = None;
    let mut connected = false;
    if symmetric && w.is_finite() {
        match symmetric_eigenvalues(w) {
            Ok(values) => {
                let value = mixing_parameters(&values).0;
                connected = value > MIN_P;
                p = Some(value);
            }
            Err(e) => failures.push(alloc::format!("{e}")),
        }
    }
    if !connected {
        failures.push(alloc::format!(
            "not connected or periodic (p = {:e})",
            p.unwrap_or(0.0)
        ));
    }

    ValidationReport {
        shape_ok,
        symmetric,
        doubly_stochastic,
        max_row_sum_error,
        entries_in_range,
        connected,
        p,
        failures,
    }
}

/// Spectrum of a mixing matrix and the quantities derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralParams {
    /// All eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub lambda_n: f64,
    /// Spectral gap `1 − max(|λ₂|, |λₙ|)`.
    pub delta: f64,
    pub p: f64,
    pub c: f64,
    /// Mixing time of the lifted iteration, see [`tau`].
    pub tau: u64,
}

/// Returns `(p, c, λ₂, λₙ)` from a descending spectrum.
fn mixing_parameters(values: &[f64]) -> (f64, f64, f64, f64) {
    let (l2, ln) = if values.len() >= 2 {
        (values[1], values[values.len() - 1])
    } else {
        (0.0, 0.0)
    };
    let rho = math::abs(l2).max(math::abs(ln));
    let neg = ln.min(0.0);
    (1.0 - rho * rho, 1.0 - neg * neg, l2, ln)
}

pub fn spectral_params(w: &MixingMatrix) -> Result<SpectralParams> {
    let eigenvalues = symmetric_eigenvalues(&w.weights)?;
    spectral_params_from_eigenvalues(eigenvalues)
}

/// Same as [`spectral_params`] for a spectrum that is already known.
pub fn spectral_params_from_eigenvalues(eigenvalues: Vec<f64>) -> Result<SpectralParams> {
    if eigenvalues.is_empty() {
        bail!(InvalidParameter, "empty spectrum");
    }
    if math::abs(eigenvalues[0] - 1.0) > 1e-10 {
        bail!(
            InvalidParameter,
            "largest eigenvalue {} is not 1; matrix is not doubly stochastic",
            eigenvalues[0]
        );
    }
    let (p, c, lambda2, lambda_n) = mixing_parameters(&eigenvalues);
    if p <= MIN_P {
        return Err(Error::DisconnectedGraph { p });
    }
    let delta = 1.0 - math::abs(lambda2).max(math::abs(lambda_n));
    Ok(SpectralParams {
        eigenvalues,
        lambda2,
        lambda_n,
        delta,
        p,
        c,
        tau: tau(p),
    })
}

/// `τ(p) = ⌊(2/p)·ln((50/p)(1 + ln(1/p)))⌋ + 1`, with `ln(1/p)` clamped at 0.
pub fn tau(p: f64) -> u64 {
    let inner = (50.0 / p) * (1.0 + math::ln(1.0 / p).max(0.0));
    math::floor(2.0 / p * math::ln(inner)) as u64 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn ring_eigs(n: usize, w: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|k| w + (1.0 - w) * (2.0 * PI * k as f64 / n as f64).cos())
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    fn assert_mixing_invariants(w: &MixingMatrix) {
        let m = w.weights();
        let n = w.n();
        for i in 0..n {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            for j in 0..n {
                assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
                assert!((0.0..=1.0).contains(&m[(i, j)]));
            }
        }
    }

    #[test]
    fn ring_of_three_is_complete() {
        let r = build_ring_uniform(3).unwrap();
        assert!(r.weights().as_slice().iter().all(|&v| v == 1.0 / 3.0));
        assert!(matches!(build_ring_uniform(2), Err(Error::InvalidTopology(_))));
    }

    #[test]
    fn ring_of_four_closed_form() {
        let sp = spectral_params(&build_ring_uniform(4).unwrap()).unwrap();
        let expect = [1.0, 1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0];
        for (a, b) in sp.eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((sp.p - 8.0 / 9.0).abs() < 1e-12);
        assert!((sp.c - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn large_ring_c_tends_to_eight_ninths() {
        let sp = spectral_params(&build_ring_uniform(300).unwrap()).unwrap();
        assert!((sp.c - 8.0 / 9.0).abs() < 1e-9);
        let sp = spectral_params(&build_ring_uniform(301).unwrap()).unwrap();
        assert!(sp.c > 8.0 / 9.0 && sp.c - 8.0 / 9.0 < 1e-3);
    }

    #[test]
    fn self_weight_ring() {
        let a = build_ring_self_weight(11, 1.0 / 3.0).unwrap();
        let b = build_ring_uniform(11).unwrap();
        assert!(a.weights().max_abs_diff(b.weights()) < 1e-16);
        assert!(build_ring_self_weight(5, 0.0).is_err());
        assert!(build_ring_self_weight(5, 1.0).is_err());
        let small = spectral_params(&build_ring_self_weight(20, 0.05).unwrap()).unwrap();
        let third = spectral_params(&build_ring_uniform(20).unwrap()).unwrap();
        assert!(small.c < third.c);
        for w in [0.02, 0.05, 0.2, 0.45] {
            let sp = spectral_params(&build_ring_self_weight(16, w).unwrap()).unwrap();
            assert!(sp.lambda_n >= 2.0 * w - 1.0 - 1e-12);
            assert!(sp.c >= (2.0 * w).min(1.0) - 1e-12);
            for (a, b) in sp.eigenvalues.iter().zip(ring_eigs(16, w)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn torus_closed_form() {
        let t = build_torus(3, 3).unwrap();
        assert_mixing_invariants(&t);
        let m = 5;
        let sp = spectral_params(&build_torus(m, m).unwrap()).unwrap();
        let mut expect = vec![];
        for j in 0..m {
            for k in 0..m {
                let a = 2.0 * PI * j as f64 / m as f64;
                let b = 2.0 * PI * k as f64 / m as f64;
                expect.push((1.0 + 2.0 * a.cos() + 2.0 * b.cos()) / 5.0);
            }
        }
        expect.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in sp.eigenvalues.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
        let p = 1.0 - expect[1].abs().max(expect[expect.len() - 1].abs()).powi(2);
        assert!((sp.p - p).abs() < 1e-10);
        assert!(sp.c >= 0.8 - 1e-12);
        assert!(build_torus(2, 3).is_err());
    }

    #[test]
    fn fully_connected() {
        let sp = spectral_params(&build_fully_connected(4).unwrap()).unwrap();
        assert!((sp.p - 1.0).abs() < 1e-12 && (sp.c - 1.0).abs() < 1e-12);
        assert!(sp.lambda2.abs() < 1e-12 && sp.lambda_n.abs() < 1e-12);
        let one = build_fully_connected(1).unwrap();
        assert_eq!(one.weights(), &Matrix::identity(1));
        let sp = spectral_params(&one).unwrap();
        assert_eq!(sp.p, 1.0);
        let sp = spectral_params(&build_fully_connected(10).unwrap()).unwrap();
        assert_eq!(sp.tau, 8);
    }

    #[test]
    fn metropolis_hastings_rules() {
        let ring = build_metropolis_hastings(&Graph::ring(9).unwrap()).unwrap();
        assert!(ring.weights().max_abs_diff(build_ring_uniform(9).unwrap().weights()) < 1e-15);

        let star = build_metropolis_hastings(&Graph::star(4).unwrap()).unwrap();
        assert!((star.weight(0, 0) - 0.25).abs() < 1e-15);
        for leaf in 1..4 {
            assert!((star.weight(leaf, leaf) - 0.75).abs() < 1e-15);
            assert!((star.weight(0, leaf) - 0.25).abs() < 1e-15);
        }

        let g = Graph::random_connected(30, 0.15, 2).unwrap();
        let w = build_metropolis_hastings(&g).unwrap();
        assert_mixing_invariants(&w);
        assert_eq!(w.support(), g);
        let rho = 1.0 / (g.max_degree() + 1) as f64;
        assert!(w.min_self_weight() >= rho - 1e-15);
        assert!(spectral_params(&w).unwrap().c > 0.0);

        let disconnected = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            build_metropolis_hastings(&disconnected),
            Err(Error::DisconnectedGraph { .. })
        ));
    }

    #[test]
    fn interpolation_endpoints_and_bounds() {
        let ring = build_ring_uniform(12).unwrap();
        let full = build_fully_connected(12).unwrap();
        assert_eq!(interpolate(&ring, &full, 1.0).unwrap(), ring);
        assert_eq!(interpolate(&ring, &full, 0.0).unwrap(), full);
        for k in 0..=10 {
            let a = k as f64 / 10.0;
            let w = interpolate(&ring, &full, a).unwrap();
            assert_mixing_invariants(&w);
            // Non-principal eigenvalues are α times the ring's, so λₙ ≥ −1/3.
            let sp = spectral_params(&w).unwrap();
            assert!(sp.lambda_n >= -1.0 / 3.0 - 1e-12);
            assert!(sp.c >= 8.0 / 9.0 - 1e-12);
        }
        assert!(interpolate(&ring, &build_ring_uniform(5).unwrap(), 0.5).is_err());
        assert!(interpolate(&ring, &full, 1.5).is_err());
    }

    #[test]
    fn tau_values() {
        assert_eq!(tau(1.0), 8);
        assert_eq!(tau(0.5), 21);
    }

    #[test]
    fn validation_reports() {
        let id = validate(&Matrix::identity(2));
        assert!(!id.connected && !id.is_valid());
        assert!(id.symmetric && id.doubly_stochastic);
        assert!(validate(build_ring_uniform(6).unwrap().weights()).is_valid());
        let mut bad = build_ring_uniform(6).unwrap().weights().clone();
        bad[(0, 0)] -= 0.1;
        let r = validate(&bad);
        assert!(!r.doubly_stochastic && !r.is_valid());
        assert!(matches!(
            MixingMatrix::from_weights(Matrix::identity(3)),
            Err(Error::DisconnectedGraph { .. })
        ));
        // Bipartite with zero self weight: λₙ = −1.
        let periodic = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(!validate(&periodic).connected);
    }

    #[test]
    fn gossip_matches_dense_product() {
        let mut s = 7u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let x = Matrix::from_fn(5, 30, |_, _| next());
        for w in [
            build_ring_uniform(30).unwrap(),
            build_interpolated_ring(30, 0.4).unwrap(),
            build_fully_connected(30).unwrap(),
            build_metropolis_hastings(&Graph::random_connected(30, 0.1, 1).unwrap()).unwrap(),
        ] {
            let dense = x.matmul(w.weights()).unwrap();
            assert!(w.mix(&x).max_abs_diff(&dense) < 1e-14);
        }
    }
}
