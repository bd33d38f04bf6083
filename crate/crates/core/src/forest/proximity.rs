use ndarray::Array2;

use crate::error::{Error, Result};

/// Pairwise co-occurrence counts over a set of trees. The proximity of
/// `i` and `j` is the fraction of trees that put both in the same terminal
/// node, counting every observation (in-bag or not).
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    n: usize,
    trees: u64,
    // upper triangle including the diagonal, row-major
    counts: Vec<u32>,
}

impl ProximityMatrix {
    pub fn empty(n: usize) -> Self {
        ProximityMatrix {
            n,
            trees: 0,
            counts: vec![0; n * (n + 1) / 2],
        }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * self.n - a * (a.saturating_sub(1)) / 2 + (b - a)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tree_count(&self) -> u64 {
        self.trees
    }

    /// Number of trees in which `i` and `j` share a terminal node.
    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[self.index(i, j)]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.trees == 0 {
            return 0.0;
        }
        f64::from(self.count(i, j)) / self.trees as f64
    }

    /// Adds one tree given the terminal id of every observation.
    pub fn add_tree(&mut self, terminal: &[u32]) {
        assert_eq!(terminal.len(), self.n, "terminal assignment length");
        let groups = group_by_terminal(terminal);
        for g in &groups {
            for (a, &i) in g.iter().enumerate() {
                let base = self.index(i, i);
                for &j in &g[a..] {
                    self.counts[base + (j - i)] += 1;
                }
            }
        }
        self.trees += 1;
    }

    /// Pools the trees of `other` into `self`.
    pub fn merge(&mut self, other: &ProximityMatrix) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch(format!(
                "proximity sizes {} and {}",
                self.n, other.n
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
        self.trees += other.trees;
        Ok(())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n;
        let mut out = Array2::zeros((n, n));
        if self.trees == 0 {
            return out;
        }
        let e = self.trees as f64;
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let v = f64::from(self.counts[k]) / e;
                out[[i, j]] = v;
                out[[j, i]] = v;
                k += 1;
            }
        }
        out
    }
}

// Groups of observation indices (ascending) sharing a terminal id.
fn group_by_terminal(terminal: &[u32]) -> Vec<Vec<usize>> {
    let m = terminal.iter().copied().max().map_or(0, |v| v as usize + 1);
    let mut groups = vec![Vec::new(); m];
    for (i, &t) in terminal.iter().enumerate() {
        groups[t as usize].push(i);
    }
    groups
}
