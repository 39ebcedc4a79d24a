use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected neighbourhood graph over `n` regions, 0-indexed internally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl AdjacencyGraph {
    /// Builds a graph from 0-indexed pairs. Duplicate and mirrored pairs collapse.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for (i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::Parse(format!("edge ({i}, {j}) out of range for {n} regions")));
            }
            if i == j {
                return Err(Error::Parse(format!("self-loop at region {}", i + 1)));
            }
            edges.insert((i.min(j), i.max(j)));
        }
        Ok(Self { n, edges })
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    /// Cycle graph on `n >= 3` regions.
    pub fn cycle(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    /// Parses the edge-list format: first line `n`, then one 1-indexed `i j`
    /// pair per line. Blank lines and `#` comments are ignored.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Parse(format!("bad region count '{header}'")))?;
        let mut pairs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                let tok = tok.ok_or_else(|| Error::Parse(format!("edge line {}: expected 'i j'", lineno + 2)))?;
                let v: usize = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("edge line {}: bad index '{tok}'", lineno + 2)))?;
                if v == 0 {
                    return Err(Error::Parse(format!("edge line {}: indices are 1-based", lineno + 2)));
                }
                Ok(v - 1)
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse(format!("edge line {}: trailing tokens", lineno + 2)));
            }
            pairs.push((i, j));
        }
        Self::new(n, pairs)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbour_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for &(i, j) in &self.edges {
            counts[i] += 1;
            counts[j] += 1;
        }
        counts
    }

    pub fn components(&self) -> usize {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.components() == 1
    }
}
