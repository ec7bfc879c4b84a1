//! Agent graphs, Laplacians and the mixing matrix `P = I - αL`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues_desc;
use crate::Scalar;

/// Tolerance used to call a Laplacian eigenvalue zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-10;

/// Undirected, unweighted agent graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: DMatrix<u8>,
    degrees: Vec<usize>,
    components: usize,
}

impl Topology {
    /// Circulant graph where `i ~ j` iff their circular distance is at most `k`.
    pub fn ring(n: usize, k: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("ring needs n >= 3, got {n}")));
        }
        if k == 0 || 2 * k >= n {
            return Err(Error::InvalidParameter(format!(
                "ring neighbors per side must satisfy 1 <= k < n/2, got k={k}, n={n}"
            )));
        }
        let mut adj = DMatrix::zeros(n, n);
        for i in 0..n {
            for s in 1..=k {
                let j = (i + s) % n;
                adj[(i, j)] = 1;
                adj[(j, i)] = 1;
            }
        }
        Self::from_adjacency(adj)
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        Self::from_adjacency(DMatrix::from_fn(n, n, |i, j| u8::from(i != j)))
    }

    /// Star with node 0 at the hub.
    pub fn star(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        Self::from_adjacency(DMatrix::from_fn(n, n, |i, j| {
            u8::from(i != j && (i == 0 || j == 0))
        }))
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut adj = DMatrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidAdjacency(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidAdjacency(format!("self-loop at node {u}")));
            }
            adj[(u, v)] = 1;
            adj[(v, u)] = 1;
        }
        Self::from_adjacency(adj)
    }

    /// Validates a symmetric 0/1 adjacency with zero diagonal.
    pub fn from_adjacency(adjacency: DMatrix<u8>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidAdjacency(format!(
                "expected a non-empty square matrix, got {}x{}",
                n,
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0 {
                return Err(Error::InvalidAdjacency(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a > 1 {
                    return Err(Error::InvalidAdjacency(format!("entry ({i}, {j}) is not 0/1")));
                }
                if a != adjacency[(j, i)] {
                    return Err(Error::InvalidAdjacency(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let degrees = (0..n)
            .map(|i| adjacency.row(i).iter().map(|&a| a as usize).sum())
            .collect();
        let components = count_components(&adjacency);
        Ok(Topology {
            adjacency,
            degrees,
            components,
        })
    }

    /// Parses `u v` lines (0-indexed). A `# nodes: N` comment fixes the node
    /// count, otherwise it is one more than the largest index seen.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut nodes: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("nodes:") {
                    nodes = Some(v.trim().parse().map_err(|_| Error::EdgeList {
                        line: line_no,
                        message: format!("bad node count `{}`", v.trim()),
                    })?);
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = |name: &str| -> Result<usize> {
                let tok = parts.next().ok_or_else(|| Error::EdgeList {
                    line: line_no,
                    message: format!("missing {name} endpoint"),
                })?;
                tok.parse().map_err(|_| Error::EdgeList {
                    line: line_no,
                    message: format!("`{tok}` is not a node index"),
                })
            };
            let u = next("first")?;
            let v = next("second")?;
            if parts.next().is_some() {
                return Err(Error::EdgeList {
                    line: line_no,
                    message: "expected exactly two fields".into(),
                });
            }
            edges.push((u, v));
        }
        let n = match nodes {
            Some(n) => n,
            None => edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0),
        };
        Self::from_edges(n, &edges)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`Topology::parse_edge_list`]; each edge is written once with `u < v`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes: {}\n", self.n());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<u8> {
        &self.adjacency
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// Edges with `u < v`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |u| {
            (u + 1..n)
                .filter(move |&v| self.adjacency[(u, v)] == 1)
                .map(move |v| (u, v))
        })
    }

    /// Number of connected components, found by breadth-first search.
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }

    /// `L = D - A`.
    pub fn laplacian<T: Scalar>(&self) -> DMatrix<T> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                T::from_count(self.degrees[i])
            } else if self.adjacency[(i, j)] == 1 {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Laplacian eigenvalues, largest first.
    pub fn laplacian_spectrum<T: Scalar>(&self) -> Vec<T> {
        sym_eigenvalues_desc(&self.laplacian::<T>())
    }
}

fn count_components(adj: &DMatrix<u8>) -> usize {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if adj[(u, v)] == 1 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    components
}

/// Symmetric doubly stochastic `P = I - αL`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix<T: Scalar> {
    weights: DMatrix<T>,
    alpha: T,
    topology: Topology,
}

impl<T: Scalar> MixingMatrix<T> {
    /// Requires a connected topology and `0 < α < 1/deg_max`. A single agent
    /// (no edges) accepts any positive `α` and yields `P = [1]`.
    pub fn new(topology: &Topology, alpha: T) -> Result<Self> {
        if !topology.is_connected() {
            return Err(Error::Disconnected {
                components: topology.components(),
            });
        }
        let max_degree = topology.max_degree();
        let bound = if max_degree == 0 {
            f64::INFINITY
        } else {
            1.0 / max_degree as f64
        };
        let ok = alpha > T::zero()
            && alpha.is_finite()
            && (max_degree == 0 || alpha * T::from_count(max_degree) < T::one());
        if !ok {
            return Err(Error::AlphaOutOfRange {
                alpha: alpha.as_f64(),
                max: bound,
                max_degree,
            });
        }
        let n = topology.n();
        let weights = DMatrix::identity(n, n) - topology.laplacian::<T>() * alpha;
        Ok(MixingMatrix {
            weights,
            alpha,
            topology: topology.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Eigenvalues of `P`, largest first.
    pub fn eigenvalues(&self) -> Vec<T> {
        sym_eigenvalues_desc(&self.weights)
    }

    /// `max(|λ₂(P)|, |λ_n(P)|)`, the per-step contraction of disagreement.
    pub fn consensus_rate(&self) -> T {
        let ev = self.eigenvalues();
        if ev.len() < 2 {
            return T::zero();
        }
        ev[1].abs().max(ev[ev.len() - 1].abs())
    }

    /// Largest deviation of any row or column sum from one.
    pub fn stochasticity_defect(&self) -> T {
        let ones = DVector::from_element(self.n(), T::one());
        let rows = &self.weights * &ones - &ones;
        let cols = self.weights.transpose() * &ones - &ones;
        rows.amax().max(cols.amax())
    }
}
