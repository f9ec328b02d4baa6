//! Topology descriptions shared by the subcommands.
//!
//! A topology is written as `kind:args`:
//!
//! ```text
//! ring:N            ring, weight 1/3 on self and each neighbor
//! ring:N:w=W        ring with self weight W
//! ring:N:alpha=A    ring blended with the complete graph
//! complete:N
//! torus:RxC
//! random:N[:Q]      random connected graph (edge probability Q), Metropolis-Hastings weights
//! file:PATH         adjacency list, Metropolis-Hastings weights
//! ```

use std::fmt;
use std::path::PathBuf;

use gtsim_core::mixing::{
    build_fully_connected, build_interpolated_ring, build_metropolis_hastings,
    build_ring_self_weight, build_ring_uniform, build_torus,
};
use gtsim_core::{Graph, MixingMatrix};

use crate::error::{CliError, CliResult};

pub const DEFAULT_EDGE_PROB: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySpec {
    Ring { n: usize },
    RingSelfWeight { n: usize, w: f64 },
    Interpolated { n: usize, alpha: f64 },
    Complete { n: usize },
    Torus { rows: usize, cols: usize },
    Random { n: usize, edge_prob: f64, seed: u64 },
    File { path: PathBuf },
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("{what}: cannot parse {s:?}")))
}

pub fn parse_torus_dims(s: &str) -> CliResult<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("torus dimensions must look like RxC, got {s:?}")))?;
    Ok((parse_num(r, "torus rows")?, parse_num(c, "torus cols")?))
}

impl TopologySpec {
    /// Parses `kind:args`; `seed` is used by `random`.
    pub fn parse(s: &str, seed: u64) -> CliResult<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "ring" => {
                let mut parts = rest.splitn(2, ':');
                let n = parse_num(parts.next().unwrap_or(""), "ring size")?;
                match parts.next() {
                    None => Ok(TopologySpec::Ring { n }),
                    Some(opt) => match opt.split_once('=') {
                        Some(("w", v)) => Ok(TopologySpec::RingSelfWeight {
                            n,
                            w: parse_num(v, "self weight")?,
                        }),
                        Some(("alpha", v)) => Ok(TopologySpec::Interpolated {
                            n,
                            alpha: parse_num(v, "alpha")?,
                        }),
                        _ => Err(usage(format!("unknown ring option {opt:?}"))),
                    },
                }
            }
            "complete" => Ok(TopologySpec::Complete {
                n: parse_num(rest, "node count")?,
            }),
            "torus" => {
                let (rows, cols) = parse_torus_dims(rest)?;
                Ok(TopologySpec::Torus { rows, cols })
            }
            "random" => {
                let (n, q) = rest.split_once(':').unwrap_or((rest, ""));
                let edge_prob = if q.is_empty() {
                    DEFAULT_EDGE_PROB
                } else {
                    parse_num(q, "edge probability")?
                };
                Ok(TopologySpec::Random {
                    n: parse_num(n, "node count")?,
                    edge_prob,
                    seed,
                })
            }
            "file" if !rest.is_empty() => Ok(TopologySpec::File {
                path: PathBuf::from(rest),
            }),
            _ => Err(usage(format!("unknown topology {s:?}"))),
        }
    }

    pub fn build(&self) -> CliResult<MixingMatrix> {
        Ok(match self {
            TopologySpec::Ring { n } => build_ring_uniform(*n)?,
            TopologySpec::RingSelfWeight { n, w } => build_ring_self_weight(*n, *w)?,
            TopologySpec::Interpolated { n, alpha } => build_interpolated_ring(*n, *alpha)?,
            TopologySpec::Complete { n } => build_fully_connected(*n)?,
            TopologySpec::Torus { rows, cols } => build_torus(*rows, *cols)?,
            TopologySpec::Random { n, edge_prob, seed } => {
                build_metropolis_hastings(&Graph::random_connected(*n, *edge_prob, *seed)?)?
            }
            TopologySpec::File { path } => {
                build_metropolis_hastings(&crate::output::read_adjacency(path)?)?
            }
        })
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Ring { n } => write!(f, "ring:{n}"),
            TopologySpec::RingSelfWeight { n, w } => write!(f, "ring:{n}:w={w}"),
            TopologySpec::Interpolated { n, alpha } => write!(f, "ring:{n}:alpha={alpha}"),
            TopologySpec::Complete { n } => write!(f, "complete:{n}"),
            TopologySpec::Torus { rows, cols } => write!(f, "torus:{rows}x{cols}"),
            TopologySpec::Random { n, edge_prob, .. } => write!(f, "random:{n}:{edge_prob}"),
            TopologySpec::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in ["ring:50", "ring:50:w=0.02", "ring:50:alpha=0.5", "complete:10", "torus:10x10", "random:50:0.2"] {
            assert_eq!(TopologySpec::parse(s, 1).unwrap().to_string(), s);
        }
        assert_eq!(
            TopologySpec::parse("random:30", 4).unwrap(),
            TopologySpec::Random { n: 30, edge_prob: DEFAULT_EDGE_PROB, seed: 4 }
        );
    }

    #[test]
    fn parse_errors() {
        for s in ["ring", "ring:x", "ring:5:beta=1", "torus:10", "mesh:4", "file:"] {
            assert!(TopologySpec::parse(s, 0).is_err(), "{s}");
        }
    }
}
