//! Undirected communication graphs.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;

use crate::error::{bail, Error, Result};
use crate::rng;

/// Simple undirected graph on nodes `0..n`. Self-loops are rejected and
/// neighbor lists are kept sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Inserts `{i, j}`. Duplicate edges are ignored.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        let n = self.n();
        if i >= n || j >= n {
            bail!(InvalidTopology, "edge ({i}, {j}) out of range for {n} nodes");
        }
        if i == j {
            bail!(InvalidTopology, "self-loop at node {i}");
        }
        for (a, b) in [(i, j), (j, i)] {
            if let Err(pos) = self.adjacency[a].binary_search(&b) {
                self.adjacency[a].insert(pos, b);
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency
            .get(i)
            .is_some_and(|nb| nb.binary_search(&j).is_ok())
    }

    /// Edges as `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            bail!(InvalidTopology, "a ring needs at least 3 nodes, got {n}");
        }
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn star(n: usize) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|i| (0, i)))
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            g.adjacency[i] = (0..n).filter(|&j| j != i).collect();
        }
        g
    }

    /// 2d torus; node `(r, c)` has index `r * cols + c`.
    pub fn torus(rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 || cols < 3 {
            bail!(
                InvalidTopology,
                "torus dimensions must be at least 3x3, got {rows}x{cols}"
            );
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut g = Self::empty(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                g.add_edge(idx(r, c), idx((r + 1) % rows, c))?;
                g.add_edge(idx(r, c), idx(r, (c + 1) % cols))?;
            }
        }
        Ok(g)
    }

    /// Erdős–Rényi graph with edge probability `edge_prob`, plus a random
    /// spanning path so the result is always connected. Deterministic in `seed`.
    pub fn random_connected(n: usize, edge_prob: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&edge_prob) {
            bail!(InvalidParameter, "edge probability {edge_prob} not in [0, 1]");
        }
        let mut r = rng::stream(seed, rng::GRAPH_STREAM, 0);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = r.random_range(0..=i);
            order.swap(i, j);
        }
        let mut g = Self::empty(n);
        for w in order.windows(2) {
            g.add_edge(w[0], w[1])?;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if r.random::<f64>() < edge_prob {
                    g.add_edge(i, j)?;
                }
            }
        }
        Ok(g)
    }

    /// Parses the adjacency-list format: line `i` lists the 0-based neighbors
    /// of node `i`, whitespace separated. Blank lines denote isolated nodes;
    /// lines starting with `#` are comments. Edges may be listed from either
    /// side or both.
    pub fn from_adjacency_list(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('#') {
                continue;
            }
            let mut row = Vec::new();
            for tok in trimmed.split_whitespace() {
                let j = tok.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: alloc::format!("not a node index: {tok:?}"),
                })?;
                row.push(j);
            }
            rows.push(row);
        }
        let n = rows.len();
        let mut g = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            for &j in row {
                if j >= n {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: alloc::format!("neighbor {j} out of range for {n} nodes"),
                    });
                }
                g.add_edge(i, j).map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: alloc::format!("{e}"),
                })?;
            }
        }
        Ok(g)
    }

    pub fn to_adjacency_list(&self) -> String {
        let mut out = String::new();
        for nb in &self.adjacency {
            let mut first = true;
            for j in nb {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{j}");
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_and_torus_degrees() {
        let r = Graph::ring(7).unwrap();
        assert!(r.degrees().iter().all(|&d| d == 2));
        assert_eq!(r.edge_count(), 7);
        let t = Graph::torus(3, 4).unwrap();
        assert!(t.degrees().iter().all(|&d| d == 4));
        assert_eq!(t.edge_count(), 24);
        assert!(Graph::torus(2, 5).is_err());
        assert!(Graph::ring(2).is_err());
    }

    #[test]
    fn self_loops_rejected() {
        let mut g = Graph::empty(3);
        assert!(g.add_edge(1, 1).is_err());
        assert!(g.add_edge(0, 3).is_err());
    }

    #[test]
    fn adjacency_round_trip() {
        let g = Graph::random_connected(12, 0.2, 4).unwrap();
        let text = g.to_adjacency_list();
        assert_eq!(Graph::from_adjacency_list(&text).unwrap(), g);
    }

    #[test]
    fn adjacency_parse_one_sided_and_errors() {
        let g = Graph::from_adjacency_list("1\n\n").unwrap();
        // "1\n\n": node 0 lists 1, node 1 blank.
        assert_eq!(g.n(), 2);
        assert!(g.has_edge(1, 0));
        assert!(Graph::from_adjacency_list("1 x\n0\n").is_err());
        assert!(Graph::from_adjacency_list("5\n0\n").is_err());
        assert!(Graph::from_adjacency_list("0\n").is_err());
    }

    #[test]
    fn random_graph_is_connected_and_seeded() {
        let a = Graph::random_connected(50, 0.05, 9).unwrap();
        let b = Graph::random_connected(50, 0.05, 9).unwrap();
        assert!(a.is_connected());
        assert_eq!(a, b);
        assert_ne!(a, Graph::random_connected(50, 0.05, 10).unwrap());
    }

    #[test]
    fn connectivity() {
        assert!(!Graph::empty(2).is_connected());
        assert!(Graph::star(5).unwrap().is_connected());
        assert!(Graph::empty(1).is_connected());
    }
}
