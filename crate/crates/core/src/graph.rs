//! Signed communication digraphs between followers and a single leader.
//!
//! Row `i` of the weight matrix holds what follower `i` receives: `a[i][m] != 0`
//! means agent `i` listens to agent `m`, with a positive weight for cooperation
//! and a negative weight for antagonism. `leader[i]` is the signed weight of the
//! leader link into follower `i`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

/// Relative threshold below which `L + B` is treated as singular.
pub const SINGULARITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one follower")]
    Empty,
    #[error("weight matrix must be {n}x{n}, row {row} has {len} entries")]
    Shape { n: usize, row: usize, len: usize },
    #[error("leader weight vector has {len} entries, expected {n}")]
    LeaderShape { n: usize, len: usize },
    #[error("self-loop on agent {0}: diagonal weights must be zero")]
    SelfLoop(usize),
    #[error("non-finite weight at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("graph is not structurally balanced: edge {from} -> {to} contradicts the sign partition")]
    NotStructurallyBalanced { from: usize, to: usize },
    #[error("L + B is numerically singular (minimum singular value {min_singular:e})")]
    SingularMatrix { min_singular: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDigraph {
    weights: DMatrix<f64>,
    leader: Vec<f64>,
}

/// Two-camp assignment realising structural balance: `signs[i]` is `+1` for
/// agents that track the leader and `-1` for agents that track its negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaugePartition {
    signs: Vec<i8>,
}

impl GaugePartition {
    pub fn new(signs: Vec<i8>) -> Self {
        assert!(signs.iter().all(|s| *s == 1 || *s == -1), "gauge signs must be +1 or -1");
        Self { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, i: usize) -> f64 {
        f64::from(self.signs[i])
    }

    /// The diagonal gauge matrix `S`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.signs.len(),
            self.signs.iter().map(|s| f64::from(*s)),
        ))
    }

    /// Zero-based indices of the cooperative (+1) and antagonistic (-1) camps.
    pub fn groups(&self) -> (Vec<usize>, Vec<usize>) {
        let plus = (0..self.signs.len()).filter(|&i| self.signs[i] > 0).collect();
        let minus = (0..self.signs.len()).filter(|&i| self.signs[i] < 0).collect();
        (plus, minus)
    }
}

fn sign_of(w: f64) -> i8 {
    if w > 0.0 {
        1
    } else {
        -1
    }
}

impl SignedDigraph {
    pub fn new(weights: Vec<Vec<f64>>, leader: Vec<f64>) -> Result<Self, GraphError> {
        let n = weights.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for (row, r) in weights.iter().enumerate() {
            if r.len() != n {
                return Err(GraphError::Shape { n, row, len: r.len() });
            }
        }
        let flat: Vec<f64> = weights.into_iter().flatten().collect();
        Self::from_matrix(DMatrix::from_row_slice(n, n, &flat), leader)
    }

    pub fn from_matrix(weights: DMatrix<f64>, leader: Vec<f64>) -> Result<Self, GraphError> {
        let n = weights.nrows();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if weights.ncols() != n {
            return Err(GraphError::Shape { n, row: 0, len: weights.ncols() });
        }
        if leader.len() != n {
            return Err(GraphError::LeaderShape { n, len: leader.len() });
        }
        for i in 0..n {
            for m in 0..n {
                if !weights[(i, m)].is_finite() {
                    return Err(GraphError::NonFinite(i, m));
                }
            }
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop(i));
            }
            if !leader[i].is_finite() {
                return Err(GraphError::NonFinite(i, n));
            }
        }
        Ok(Self { weights, leader })
    }

    pub fn n(&self) -> usize {
        self.leader.len()
    }

    pub fn weight(&self, i: usize, m: usize) -> f64 {
        self.weights[(i, m)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn leader_weight(&self, i: usize) -> f64 {
        self.leader[i]
    }

    pub fn leader_weights(&self) -> &[f64] {
        &self.leader
    }

    /// Agents `m` with `a_im != 0`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&m| self.weights[(i, m)] != 0.0).collect()
    }

    pub fn in_degree(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = self.weights.row(i).iter().map(|w| w.abs()).sum();
        }
        d
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.in_degree() - &self.weights
    }

    /// `B = diag(|b_1|, ..., |b_N|)`.
    pub fn leader_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            b[(i, i)] = self.leader[i].abs();
        }
        b
    }

    /// `q_i = sum_m |a_im| + |b_i|`.
    pub fn total_weight(&self, i: usize) -> f64 {
        self.weights.row(i).iter().map(|w| w.abs()).sum::<f64>() + self.leader[i].abs()
    }

    /// Two-colours the undirected sign support by breadth-first search.
    ///
    /// The leader is a virtual node with sign `+1`; a leader link with `b_i < 0`
    /// forces follower `i` into the antagonistic camp. Components that touch no
    /// edge at all default to `+1`.
    pub fn gauge_partition(&self) -> Result<GaugePartition, GraphError> {
        let n = self.n();
        let leader = n;
        // adjacency over n + 1 nodes with the edge sign attached
        let mut adj: Vec<Vec<(usize, i8)>> = vec![Vec::new(); n + 1];
        for i in 0..n {
            for m in 0..n {
                let w = self.weights[(i, m)];
                if w != 0.0 {
                    adj[i].push((m, sign_of(w)));
                    adj[m].push((i, sign_of(w)));
                }
            }
            if self.leader[i] != 0.0 {
                let s = sign_of(self.leader[i]);
                adj[i].push((leader, s));
                adj[leader].push((i, s));
            }
        }

        let mut color: Vec<i8> = vec![0; n + 1];
        let mut queue = VecDeque::new();
        let order = std::iter::once(leader).chain(0..n);
        for root in order {
            if color[root] != 0 {
                continue;
            }
            color[root] = 1;
            queue.push_back(root);
            while let Some(v) = queue.pop_front() {
                for &(w, s) in &adj[v] {
                    let want = color[v] * s;
                    if color[w] == 0 {
                        color[w] = want;
                        queue.push_back(w);
                    } else if color[w] != want {
                        let (from, to) = if v == leader || w == leader {
                            (v.min(w), v.max(w))
                        } else {
                            (v, w)
                        };
                        return Err(GraphError::NotStructurallyBalanced { from, to });
                    }
                }
            }
        }
        color.truncate(n);
        Ok(GaugePartition::new(color))
    }

    /// True when every follower is reachable from the leader along directed edges.
    pub fn has_leader_rooted_spanning_tree(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for i in 0..n {
            if self.leader[i] != 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(m) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && self.weights[(i, m)] != 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Minimum singular value of `L + B`, the constant relating consensus
    /// errors to tracking errors: `||e|| <= ||z|| / h`.
    pub fn error_gain_constant(&self) -> Result<f64, GraphError> {
        let m = self.laplacian() + self.leader_matrix();
        let sv = m.singular_values();
        let max = sv.iter().cloned().fold(0.0_f64, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 || min < SINGULARITY_TOLERANCE * max {
            return Err(GraphError::SingularMatrix { min_singular: min });
        }
        Ok(min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(a: Vec<Vec<f64>>, b: Vec<f64>) -> SignedDigraph {
        SignedDigraph::new(a, b).unwrap()
    }

    #[test]
    fn in_degree_and_laplacian_small() {
        let gr = g(vec![vec![0.0, -1.0], vec![0.0, 0.0]], vec![1.0, 0.0]);
        let d = gr.in_degree();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let l = gr.laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn zero_graph_has_zero_matrices() {
        let gr = g(vec![vec![0.0; 3]; 3], vec![0.0; 3]);
        assert_eq!(gr.in_degree(), DMatrix::zeros(3, 3));
        assert_eq!(gr.laplacian(), DMatrix::zeros(3, 3));
        let single = g(vec![vec![0.0]], vec![1.0]);
        assert_eq!(single.laplacian(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn rejects_self_loops_and_bad_shapes() {
        assert_eq!(
            SignedDigraph::new(vec![vec![1.0]], vec![0.0]),
            Err(GraphError::SelfLoop(0))
        );
        assert!(matches!(
            SignedDigraph::new(vec![vec![0.0, 1.0], vec![0.0]], vec![0.0, 0.0]),
            Err(GraphError::Shape { .. })
        ));
        assert!(matches!(
            SignedDigraph::new(vec![vec![0.0, f64::NAN], vec![0.0, 0.0]], vec![0.0, 0.0]),
            Err(GraphError::NonFinite(0, 1))
        ));
    }

    #[test]
    fn total_weight_cases() {
        let gr = g(
            vec![vec![0.0, -1.0, 0.5], vec![0.0; 3], vec![0.0; 3]],
            vec![1.0, 0.0, -2.0],
        );
        assert_eq!(gr.total_weight(0), 2.5);
        assert_eq!(gr.total_weight(1), 0.0);
        assert_eq!(gr.total_weight(2), 2.0);
    }

    #[test]
    fn all_positive_is_one_camp() {
        let gr = g(
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0], vec![1.0, 0.0, 0.0]],
            vec![1.0, 0.0, 0.0],
        );
        assert_eq!(gr.gauge_partition().unwrap().signs(), &[1, 1, 1]);
    }

    #[test]
    fn unbalanced_triangle_is_rejected() {
        let gr = g(
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![-1.0, 0.0, 0.0]],
            vec![0.0; 3],
        );
        assert!(matches!(
            gr.gauge_partition(),
            Err(GraphError::NotStructurallyBalanced { .. })
        ));
    }

    #[test]
    fn leader_sign_must_agree_with_partition() {
        // 1 -> 0 cooperative, but leader says 0 and 1 are in opposite camps
        let gr = g(vec![vec![0.0, 1.0], vec![0.0, 0.0]], vec![1.0, -1.0]);
        assert!(gr.gauge_partition().is_err());
        let ok = g(vec![vec![0.0, -1.0], vec![0.0, 0.0]], vec![1.0, -1.0]);
        assert_eq!(ok.gauge_partition().unwrap().signs(), &[1, -1]);
    }

    #[test]
    fn isolated_nodes_default_positive() {
        let gr = g(vec![vec![0.0; 2]; 2], vec![0.0, 0.0]);
        assert_eq!(gr.gauge_partition().unwrap().signs(), &[1, 1]);
    }

    #[test]
    fn reachability() {
        let gr = g(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![1.0, 0.0]);
        assert!(gr.has_leader_rooted_spanning_tree());
        let no_leader = g(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0]);
        assert!(!no_leader.has_leader_rooted_spanning_tree());
        // edge points the wrong way: 1 hears nobody
        let wrong = g(vec![vec![0.0, 1.0], vec![0.0, 0.0]], vec![1.0, 0.0]);
        assert!(!wrong.has_leader_rooted_spanning_tree());
    }

    #[test]
    fn identity_gain_constant() {
        let gr = g(vec![vec![0.0; 3]; 3], vec![1.0, -1.0, 1.0]);
        assert!((gr.error_gain_constant().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_without_leader() {
        let gr = g(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0]);
        assert!(matches!(
            gr.error_gain_constant(),
            Err(GraphError::SingularMatrix { .. })
        ));
    }
}
