//! Undirected graphs, CSR storage and the normalized adjacency operator.
//!
//! Every filter in this crate iterates `spmv` against the symmetric
//! normalized adjacency `P = D^{-1/2} A D^{-1/2}`. The Laplacian is
//! `L = I - P`, so spectra of `P` live in `[-1, 1]` and those of `L` in
//! `[0, 2]`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Simple undirected graph with deduplicated edges stored as `(u, v)`, `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph, dropping duplicate and reversed edges.
    ///
    /// Self-loops and out-of-range ids are rejected.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n_nodes} nodes"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        if set.is_empty() {
            return Err(Error::InvalidGraph("empty edge set".into()));
        }
        Ok(Self {
            n_nodes,
            edges: set.into_iter().collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Sorted, deduplicated edges with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// FNV-1a over the sorted edge list (and node count), used to tie
    /// precomputed basis files to the graph that produced them.
    pub fn fnv_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.n_nodes as u64);
        for &(u, v) in &self.edges {
            feed(u as u64);
            feed(v as u64);
        }
        h
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n_nodes
    }
}

/// Parses the plain-text edge list format.
///
/// One `u v` pair per line, `#` comments, blank lines ignored. An optional
/// first data line `N <count>` fixes the node count; otherwise it is
/// `1 + max id`.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut declared: Option<usize> = None;
    let mut max_id = 0usize;
    let mut first_data_line = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let a = parts.next().unwrap_or_default();
        let b = parts.next().ok_or_else(|| Error::Format {
            line: line_no,
            msg: format!("expected two fields, got {line:?}"),
        })?;
        if parts.next().is_some() {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected two fields, got {line:?}"),
            });
        }
        if first_data_line && a == "N" {
            let n = b.parse::<usize>().map_err(|e| Error::Format {
                line: line_no,
                msg: format!("bad node count {b:?}: {e}"),
            })?;
            declared = Some(n);
            first_data_line = false;
            continue;
        }
        first_data_line = false;
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::Format {
                line: line_no,
                msg: format!("bad node id {s:?}: {e}"),
            })
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u == v {
            return Err(Error::Format {
                line: line_no,
                msg: format!("self-loop on node {u} rejected"),
            });
        }
        max_id = max_id.max(u).max(v);
        edges.push((u, v));
    }
    if edges.is_empty() {
        return Err(Error::InvalidGraph("empty edge set".into()));
    }
    let n = match declared {
        Some(n) if n <= max_id => {
            return Err(Error::InvalidGraph(format!(
                "header declares {n} nodes but id {max_id} appears"
            )))
        }
        Some(n) => n,
        None => max_id + 1,
    };
    Graph::new(n, edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text)
}

/// Writes a graph in the edge-list format, including the `N` header.
pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("N {}\n", g.n_nodes);
    for &(u, v) in &g.edges {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 4-neighbour lattice; node `(r, c)` has index `r * width + c`.
pub fn build_grid_graph(height: usize, width: usize) -> Result<Graph> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    if height * width < 2 {
        return Err(Error::InvalidGraph("1x1 grid has no edges".into()));
    }
    let mut edges = Vec::with_capacity(2 * height * width);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                edges.push((i, i + 1));
            }
            if r + 1 < height {
                edges.push((i, i + width));
            }
        }
    }
    Graph::new(height * width, edges)
}

pub fn path_graph(n: usize) -> Result<Graph> {
    Graph::new(n, (1..n).map(|i| (i - 1, i)))
}

/// Random connected graph: a uniformly shuffled random tree plus
/// `extra_edges` random chords (duplicates collapse).
pub fn random_connected_graph<R: Rng + ?Sized>(
    n: usize,
    extra_edges: usize,
    rng: &mut R,
) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid("random graph needs at least 2 nodes"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::with_capacity(n - 1 + extra_edges);
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        edges.push((order[i], parent));
    }
    for _ in 0..extra_edges {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push((u, v));
        }
    }
    Graph::new(n, edges)
}

/// Immutable CSR matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles a square CSR matrix from `(row, col, value)` triplets.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n || c >= n) {
            return Err(Error::invalid(format!("entry ({r}, {c}) outside {n}x{n}")));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`. Accumulates each row in ascending column order, so results
    /// are bit-reproducible.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n || y.len() != self.n {
            return Err(Error::invalid(format!(
                "spmv dimension mismatch: matrix {n}x{n}, x {}, y {}",
                x.len(),
                y.len(),
                n = self.n
            )));
        }
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *out = acc;
        }
        Ok(())
    }

    /// `y = A^T x`, scattered row by row.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::invalid("spmv_transpose dimension mismatch"));
        }
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                y[self.col_indices[k]] += self.values[k] * xi;
            }
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest absolute deviation `|A[i,j] - A[j,i]|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// How to treat nodes without neighbours when normalizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsolatedNodes {
    #[default]
    Reject,
    /// Add a unit self-loop to isolated nodes before normalization.
    SelfLoop,
}

/// `P = D^{-1/2} A D^{-1/2}` for the unweighted adjacency of `g`.
pub fn normalized_adjacency(g: &Graph, isolated: IsolatedNodes) -> Result<SparseMatrix> {
    let deg = g.degrees();
    let mut triplets = Vec::with_capacity(2 * g.edges.len());
    let mut weight = vec![0.0f64; g.n_nodes];
    for (i, &d) in deg.iter().enumerate() {
        if d == 0 {
            match isolated {
                IsolatedNodes::Reject => {
                    return Err(Error::InvalidGraph(format!(
                        "node {i} is isolated; enable the self-loop fallback to accept it"
                    )))
                }
                IsolatedNodes::SelfLoop => {
                    weight[i] = 1.0;
                    triplets.push((i, i, 1.0));
                }
            }
        } else {
            weight[i] = d as f64;
        }
    }
    for &(u, v) in &g.edges {
        // identical expression for both halves keeps the matrix exactly symmetric
        let val = 1.0 / (weight[u] * weight[v]).sqrt();
        triplets.push((u, v, val));
        triplets.push((v, u, val));
    }
    SparseMatrix::from_triplets(g.n_nodes, triplets)
}

/// `L = I - P`.
pub fn normalized_laplacian(p: &SparseMatrix) -> SparseMatrix {
    let mut triplets: Vec<(usize, usize, f64)> = (0..p.dim()).map(|i| (i, i, 1.0)).collect();
    for i in 0..p.dim() {
        for (j, v) in p.row(i) {
            triplets.push((i, j, -v));
        }
    }
    SparseMatrix::from_triplets(p.dim(), triplets).expect("indices in range")
}
