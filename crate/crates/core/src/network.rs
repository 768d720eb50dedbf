//! Undirected weighted communication graphs.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Undirected graph given by a symmetric nonnegative adjacency matrix with
/// zero diagonal. Nodes are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
    /// Positive-weight neighbours of each node, `(j, a_ij)`.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    /// Checks the structural invariants only; connectivity is a separate
    /// query (see [`Graph::connected`]).
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() || weights.nrows() == 0 {
            return Err(Error::InvalidGraph("adjacency matrix must be square and non-empty".into()));
        }
        let n = weights.nrows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self loop at node {i}")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!("bad weight {w} on ({i},{j})")));
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidGraph(format!("asymmetric weight on ({i},{j})")));
                }
            }
        }
        let neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| weights[(i, j)] > 0.0)
                    .map(|j| (j, weights[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self { weights, neighbors })
    }

    /// Like [`Graph::new`] but also rejects disconnected graphs.
    pub fn connected(weights: DMatrix<f64>) -> Result<Self> {
        let g = Self::new(weights)?;
        if !g.is_connected() {
            return Err(Error::GraphDisconnected);
        }
        Ok(g)
    }

    /// Builds from `(i, j, weight)` edges. Repeated edges accumulate.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(nodes, nodes);
        for &(i, j, a) in edges {
            if i >= nodes || j >= nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i},{j}) references a node outside 0..{nodes}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self loop at node {i}")));
            }
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) has weight {a}")));
            }
            w[(i, j)] += a;
            w[(j, i)] += a;
        }
        Self::new(w)
    }

    /// Unit-weight cycle `0 - 1 - … - (n-1) - 0`.
    pub fn cycle(n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges).expect("cycle is a valid graph")
    }

    /// Unit-weight path `0 - 1 - … - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n, &edges).expect("path is a valid graph")
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, a)| a).sum()
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.degree(i);
        }
        l
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = SymmetricEigen::new(self.laplacian()).eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Algebraic connectivity: the second-smallest Laplacian eigenvalue.
    pub fn lambda2(&self) -> Result<f64> {
        if !self.is_connected() {
            return Err(Error::GraphDisconnected);
        }
        if self.n_nodes() == 1 {
            return Err(Error::Domain("lambda2 is undefined for a single node".into()));
        }
        Ok(self.laplacian_spectrum()[1])
    }

    /// Breadth-first sweep from node 0 over positive-weight edges.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == n
    }
}
