//! Undirected communication topology among observer nodes.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Dense symmetric adjacency without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    size: usize,
    adjacency: Vec<bool>,
}

impl Topology {
    /// Builds a topology from a nested 0/1 adjacency array.
    pub fn from_adjacency(rows: &[Vec<i64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::Adjacency("graph must have at least one node".into()));
        }
        let mut adjacency = vec![false; size * size];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::Adjacency(format!(
                    "row {} has {} entries, expected {size}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if i == j => {
                        return Err(Error::Adjacency(format!("self-loop at node {}", i + 1)));
                    }
                    1 => adjacency[i * size + j] = true,
                    other => {
                        return Err(Error::Adjacency(format!(
                            "entry ({}, {}) is {other}, expected 0 or 1",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        for i in 0..size {
            for j in 0..i {
                if adjacency[i * size + j] != adjacency[j * size + i] {
                    return Err(Error::Adjacency(format!(
                        "asymmetric entry between nodes {} and {}",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { size, adjacency })
    }

    /// Graph with `size` nodes and the given undirected edges (zero-based).
    pub fn from_edges(size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows = vec![vec![0i64; size]; size];
        for &(i, j) in edges {
            if i >= size || j >= size {
                return Err(Error::OutOfRange {
                    index: i.max(j),
                    len: size,
                });
            }
            rows[i][j] = 1;
            rows[j][i] = 1;
        }
        Self::from_adjacency(&rows)
    }

    /// Path graph `0 - 1 - ... - (size-1)`.
    pub fn path(size: usize) -> Self {
        let edges: Vec<_> = (1..size).map(|i| (i - 1, i)).collect();
        Self::from_edges(size, &edges).expect("path edges are in range")
    }

    pub fn node_count(&self) -> usize {
        self.size
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.size && j < self.size && self.adjacency[i * self.size + j]
    }

    /// Neighbors of `node` in ascending order.
    pub fn neighbors(&self, node: usize) -> Result<Vec<usize>> {
        if node >= self.size {
            return Err(Error::OutOfRange {
                index: node,
                len: self.size,
            });
        }
        Ok((0..self.size).filter(|&j| self.has_edge(node, j)).collect())
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count() / 2
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.size];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..self.size {
                if self.has_edge(i, j) && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_adjacency(&self) -> Vec<Vec<i64>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| i64::from(self.has_edge(i, j))).collect())
            .collect()
    }
}
