//! Content matrices, implicit ratings and item graphs: loading, corruption,
//! Laplacians and train/test splitting.
//!
//! File formats are line-oriented ASCII, space separated, 0-indexed:
//!
//! * bag-of-words: optional header `J B`, then one line `n idx:cnt ...` per item
//! * ratings: header `I J`, then one line `n id ...` per user
//! * graph: header `J E`, then `E` lines `u v`

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{BdlError, Result};
use crate::rng::block_rng;
use crate::scalar::Scalar;

/// Sparse nonnegative integer count matrix, one sorted row per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagOfWords {
    n_cols: usize,
    rows: Vec<Vec<(usize, u32)>>,
}

impl BagOfWords {
    /// Builds a matrix from per-row `(column, count)` lists. Rows are sorted;
    /// duplicate columns and out-of-range indices are rejected.
    pub fn new(n_cols: usize, rows: Vec<Vec<(usize, u32)>>) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (j, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(c, _)| c);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(BdlError::validation(format!(
                        "duplicate entry ({}, {})",
                        j, w[0].0
                    )));
                }
            }
            if let Some(&(c, _)) = row.last() {
                if c >= n_cols {
                    return Err(BdlError::validation(format!(
                        "row {}: column {} out of range for vocabulary size {}",
                        j, c, n_cols
                    )));
                }
            }
            out.push(row);
        }
        Ok(BagOfWords { n_cols, rows: out })
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        BagOfWords {
            n_cols,
            rows: vec![Vec::new(); n_rows],
        }
    }

    /// Rounds a dense nonnegative matrix to counts, dropping zeros.
    pub fn from_dense(m: &Array2<u32>) -> Self {
        let rows = m
            .outer_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (i, c))
                    .collect()
            })
            .collect();
        BagOfWords {
            n_cols: m.ncols(),
            rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, j: usize) -> &[(usize, u32)] {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[Vec<(usize, u32)>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, j: usize, c: usize) -> u32 {
        self.rows[j]
            .binary_search_by_key(&c, |&(col, _)| col)
            .map(|p| self.rows[j][p].1)
            .unwrap_or(0)
    }

    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n_rows(), self.n_cols));
        for (j, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[[j, c]] = T::of(v as f64);
            }
        }
        m
    }

    /// Dense view with each row divided by its maximum count, so entries lie
    /// in `[0, 1]`. Empty rows stay zero.
    pub fn normalized<T: Scalar>(&self) -> Array2<T> {
        self.normalized_by(self)
    }

    /// Dense view of `self` using the row maxima of `reference`. Used to put a
    /// corrupted twin on the same scale as its clean source.
    pub fn normalized_by<T: Scalar>(&self, reference: &BagOfWords) -> Array2<T> {
        let mut m = Array2::zeros((self.n_rows(), self.n_cols));
        for (j, row) in self.rows.iter().enumerate() {
            let max = reference.rows[j].iter().map(|&(_, v)| v).max().unwrap_or(0);
            if max == 0 {
                continue;
            }
            let scale = T::one() / T::of(max as f64);
            for &(c, v) in row {
                m[[j, c]] = T::of(v as f64) * scale;
            }
        }
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n_rows(), self.n_cols);
        for row in &self.rows {
            let _ = write!(s, "{}", row.len());
            for &(c, v) in row {
                let _ = write!(s, " {}:{}", c, v);
            }
            s.push('\n');
        }
        s
    }
}

/// Implicit-feedback matrix: the positive set per user plus the confidence
/// pair `a > b > 0` (`C_ij = a` on positives, `b` elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitRatings {
    n_items: usize,
    a: f64,
    b: f64,
    positives: Vec<Vec<usize>>,
}

impl ImplicitRatings {
    pub fn new(n_items: usize, positives: Vec<Vec<usize>>, a: f64, b: f64) -> Result<Self> {
        check_confidence(a, b)?;
        let mut out = Vec::with_capacity(positives.len());
        for (i, items) in positives.into_iter().enumerate() {
            let set: BTreeSet<usize> = items.into_iter().collect();
            if let Some(&j) = set.iter().next_back() {
                if j >= n_items {
                    return Err(BdlError::validation(format!(
                        "user {}: item id {} >= item count {}",
                        i, j, n_items
                    )));
                }
            }
            out.push(set.into_iter().collect());
        }
        Ok(ImplicitRatings {
            n_items,
            a,
            b,
            positives: out,
        })
    }

    pub fn n_users(&self) -> usize {
        self.positives.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Sorted positive item ids of user `i`.
    pub fn user(&self, i: usize) -> &[usize] {
        &self.positives[i]
    }

    pub fn positives(&self) -> &[Vec<usize>] {
        &self.positives
    }

    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        self.positives[i].binary_search(&j).is_ok()
    }

    pub fn rating(&self, i: usize, j: usize) -> f64 {
        if self.is_positive(i, j) {
            1.0
        } else {
            0.0
        }
    }

    pub fn confidence(&self, i: usize, j: usize) -> f64 {
        if self.is_positive(i, j) {
            self.a
        } else {
            self.b
        }
    }

    pub fn n_positive(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    /// Item-major view: for each item, the sorted users who rated it 1.
    pub fn by_item(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for (i, items) in self.positives.iter().enumerate() {
            for &j in items {
                cols[j].push(i);
            }
        }
        cols
    }

    pub fn with_confidence(&self, a: f64, b: f64) -> Result<Self> {
        check_confidence(a, b)?;
        Ok(ImplicitRatings {
            a,
            b,
            ..self.clone()
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n_users(), self.n_items);
        for items in &self.positives {
            let _ = write!(s, "{}", items.len());
            for j in items {
                let _ = write!(s, " {}", j);
            }
            s.push('\n');
        }
        s
    }
}

fn check_confidence(a: f64, b: f64) -> Result<()> {
    if !(a > b && b > 0.0) {
        return Err(BdlError::config(
            "a",
            format!("confidence constants must satisfy a > b > 0 (got a={}, b={})", a, b),
        ));
    }
    Ok(())
}

/// Undirected, unweighted item graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGraph {
    n_nodes: usize,
    neighbors: Vec<Vec<usize>>,
}

impl ItemGraph {
    /// Builds a graph from an edge list. Self-loops are rejected; repeated and
    /// reversed edges collapse to one link.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n_nodes];
        for &(u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(BdlError::validation(format!(
                    "edge ({}, {}) out of range for {} nodes",
                    u, v, n_nodes
                )));
            }
            if u == v {
                return Err(BdlError::validation(format!("self-loop on node {}", u)));
            }
            sets[u].insert(v);
            sets[v].insert(u);
        }
        Ok(ItemGraph {
            n_nodes,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Builds a graph from a dense binary adjacency matrix, which must be
    /// symmetric with a zero diagonal.
    pub fn from_adjacency(a: &Array2<u8>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(BdlError::validation("adjacency matrix is not square"));
        }
        let mut edges = Vec::new();
        for u in 0..n {
            if a[[u, u]] != 0 {
                return Err(BdlError::validation(format!("nonzero diagonal at {}", u)));
            }
            for v in 0..n {
                if a[[u, v]] > 1 {
                    return Err(BdlError::validation("adjacency entries must be 0 or 1"));
                }
                if a[[u, v]] != a[[v, u]] {
                    return Err(BdlError::validation(format!(
                        "adjacency is not symmetric at ({}, {})",
                        u, v
                    )));
                }
                if u < v && a[[u, v]] == 1 {
                    edges.push((u, v));
                }
            }
        }
        ItemGraph::from_edges(n, &edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for (u, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn adjacency(&self) -> Array2<u8> {
        let mut a = Array2::zeros((self.n_nodes, self.n_nodes));
        for (u, nb) in self.neighbors.iter().enumerate() {
            for &v in nb {
                a[[u, v]] = 1;
            }
        }
        a
    }

    /// Computes `y = (D − A) x` in `O(J + E)`.
    pub fn laplacian_apply<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        for (u, nb) in self.neighbors.iter().enumerate() {
            let mut acc = T::of_usize(nb.len()) * x[u];
            for &v in nb {
                acc -= x[v];
            }
            y[u] = acc;
        }
    }

    pub fn to_text(&self) -> String {
        let edges = self.edges();
        let mut s = format!("{} {}\n", self.n_nodes, edges.len());
        for (u, v) in edges {
            let _ = writeln!(s, "{} {}", u, v);
        }
        s
    }
}

/// Dense Laplacian `D − A` of a graph given by its adjacency matrix.
pub fn laplacian<T: Scalar>(adjacency: &Array2<u8>) -> Result<Array2<T>> {
    let g = ItemGraph::from_adjacency(adjacency)?;
    Ok(graph_laplacian(&g))
}

/// Dense Laplacian `D − A` of an already validated graph.
pub fn graph_laplacian<T: Scalar>(g: &ItemGraph) -> Array2<T> {
    let n = g.n_nodes();
    let mut l = Array2::zeros((n, n));
    for u in 0..n {
        l[[u, u]] = T::of_usize(g.degree(u));
        for &v in g.neighbors(u) {
            l[[u, v]] = -T::one();
        }
    }
    l
}

/// Masking-noise corruption parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub p: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(BdlError::Argument(format!(
                "mask probability {} outside [0, 1]",
                p
            )));
        }
        Ok(CorruptionSpec { p, seed })
    }
}

/// Sets each nonzero entry to zero independently with probability `p`.
/// A pure function of `(x, spec)`; row `j` draws from its own stream.
pub fn corrupt(x: &BagOfWords, spec: CorruptionSpec) -> BagOfWords {
    let rows = x
        .rows
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let mut rng = block_rng(spec.seed, 0xC0, j as u64);
            row.iter()
                .copied()
                .filter(|_| !rng.random_bool(spec.p))
                .collect()
        })
        .collect();
    BagOfWords {
        n_cols: x.n_cols,
        rows,
    }
}

/// Moves `held_out_per_user` random positives of every user who has strictly
/// more than that many into a test matrix.
pub fn split_ratings(
    r: &ImplicitRatings,
    held_out_per_user: usize,
    seed: u64,
) -> Result<(ImplicitRatings, ImplicitRatings)> {
    if held_out_per_user == 0 {
        return Err(BdlError::Argument("held_out_per_user must be >= 1".into()));
    }
    let mut train = Vec::with_capacity(r.n_users());
    let mut test = Vec::with_capacity(r.n_users());
    for (i, items) in r.positives.iter().enumerate() {
        if items.len() > held_out_per_user {
            let mut shuffled = items.clone();
            let mut rng = block_rng(seed, 0x5B, i as u64);
            shuffled.shuffle(&mut rng);
            let (held, kept) = shuffled.split_at(held_out_per_user);
            let mut held = held.to_vec();
            let mut kept = kept.to_vec();
            held.sort_unstable();
            kept.sort_unstable();
            test.push(held);
            train.push(kept);
        } else {
            train.push(items.clone());
            test.push(Vec::new());
        }
    }
    Ok((
        ImplicitRatings::new(r.n_items, train, r.a, r.b)?,
        ImplicitRatings::new(r.n_items, test, r.a, r.b)?,
    ))
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| BdlError::Parse {
        line,
        msg: format!("expected {} but found `{}`", what, tok),
    })
}

fn is_header(tokens: &[&str]) -> bool {
    tokens.len() == 2 && tokens.iter().all(|t| !t.contains(':'))
}

/// Parses bag-of-words text. The `J B` header is optional; without it the
/// vocabulary size is the largest index plus one.
pub fn parse_bow(text: &str) -> Result<BagOfWords> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let mut declared: Option<(usize, usize)> = None;
    if let Some((no, first)) = lines.peek().copied() {
        let toks: Vec<&str> = first.split_whitespace().collect();
        if is_header(&toks) {
            declared = Some((
                parse_usize(toks[0], no + 1, "item count")?,
                parse_usize(toks[1], no + 1, "vocabulary size")?,
            ));
            lines.next();
        }
    }
    let mut rows = Vec::new();
    let mut max_col = None;
    for (no, line) in lines {
        let no = no + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let n = parse_usize(toks[0], no, "pair count")?;
        if toks.len() - 1 != n {
            return Err(BdlError::Parse {
                line: no,
                msg: format!("declared {} pairs but found {}", n, toks.len() - 1),
            });
        }
        let mut row = Vec::with_capacity(n);
        for tok in &toks[1..] {
            let (idx, cnt) = tok.split_once(':').ok_or_else(|| BdlError::Parse {
                line: no,
                msg: format!("expected idx:cnt but found `{}`", tok),
            })?;
            let idx = parse_usize(idx, no, "column index")?;
            let cnt: i64 = cnt.parse().map_err(|_| BdlError::Parse {
                line: no,
                msg: format!("bad count `{}`", cnt),
            })?;
            if cnt < 0 {
                return Err(BdlError::validation(format!(
                    "line {}: negative count {}",
                    no, cnt
                )));
            }
            let cnt = u32::try_from(cnt).map_err(|_| BdlError::validation(format!(
                "line {}: count {} too large",
                no, cnt
            )))?;
            max_col = Some(max_col.map_or(idx, |m: usize| m.max(idx)));
            row.push((idx, cnt));
        }
        rows.push(row);
    }
    let n_cols = match declared {
        Some((j, b)) => {
            if j != rows.len() {
                return Err(BdlError::validation(format!(
                    "header declares {} rows but file has {}",
                    j,
                    rows.len()
                )));
            }
            b
        }
        None => max_col.map_or(0, |m| m + 1),
    };
    BagOfWords::new(n_cols, rows)
}

fn header(text: &str, what: &str) -> Result<(usize, usize, Vec<(usize, String)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| (n + 1, l.to_string()));
    let (no, first) = lines.next().ok_or_else(|| BdlError::Parse {
        line: 1,
        msg: format!("missing {} header", what),
    })?;
    let toks: Vec<&str> = first.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(BdlError::Parse {
            line: no,
            msg: format!("expected two-field {} header", what),
        });
    }
    let a = parse_usize(toks[0], no, "header count")?;
    let b = parse_usize(toks[1], no, "header count")?;
    Ok((a, b, lines.collect()))
}

/// Parses ratings text (`I J` header, then `n id ...` per user).
pub fn parse_ratings(text: &str, a: f64, b: f64) -> Result<ImplicitRatings> {
    check_confidence(a, b)?;
    let (n_users, n_items, lines) = header(text, "ratings")?;
    let mut users = Vec::with_capacity(n_users);
    for (no, line) in &lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let n = parse_usize(toks[0], *no, "item count")?;
        if toks.len() - 1 != n {
            return Err(BdlError::Parse {
                line: *no,
                msg: format!("declared {} items but found {}", n, toks.len() - 1),
            });
        }
        let items = toks[1..]
            .iter()
            .map(|t| parse_usize(t, *no, "item id"))
            .collect::<Result<Vec<_>>>()?;
        users.push(items);
    }
    if users.len() != n_users {
        return Err(BdlError::validation(format!(
            "header declares {} users but file has {}",
            n_users,
            users.len()
        )));
    }
    ImplicitRatings::new(n_items, users, a, b)
}

/// Parses graph text (`J E` header, then `E` lines `u v`).
pub fn parse_graph(text: &str) -> Result<ItemGraph> {
    let (n_nodes, n_edges, lines) = header(text, "graph")?;
    let mut edges = Vec::with_capacity(n_edges);
    for (no, line) in &lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(BdlError::Parse {
                line: *no,
                msg: "expected `u v`".into(),
            });
        }
        edges.push((
            parse_usize(toks[0], *no, "node id")?,
            parse_usize(toks[1], *no, "node id")?,
        ));
    }
    if edges.len() != n_edges {
        return Err(BdlError::validation(format!(
            "header declares {} edges but file has {}",
            n_edges,
            edges.len()
        )));
    }
    ItemGraph::from_edges(n_nodes, &edges)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| BdlError::io(path, e))
}

pub fn load_bow(path: impl AsRef<Path>) -> Result<BagOfWords> {
    parse_bow(&read(path.as_ref())?)
}

pub fn load_ratings(path: impl AsRef<Path>, a: f64, b: f64) -> Result<ImplicitRatings> {
    parse_ratings(&read(path.as_ref())?, a, b)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<ItemGraph> {
    parse_graph(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bow_line_transcribes() {
        let x = parse_bow("1 5\n2 0:3 4:1\n").unwrap();
        assert_eq!(x.n_rows(), 1);
        assert_eq!(x.get(0, 0), 3);
        assert_eq!(x.get(0, 4), 1);
        assert_eq!(x.get(0, 2), 0);
    }

    #[test]
    fn bow_empty_file_is_valid() {
        let x = parse_bow("").unwrap();
        assert_eq!(x.n_rows(), 0);
    }

    #[test]
    fn bow_index_beyond_header_rejected() {
        assert!(matches!(parse_bow("1 4\n1 5:2\n"), Err(BdlError::Validation(_))));
    }

    #[test]
    fn bow_pair_count_mismatch_reports_line() {
        match parse_bow("2 6\n1 0:1\n2 3:1\n") {
            Err(BdlError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn bow_negative_count_rejected() {
        assert!(matches!(parse_bow("1 0:-2\n"), Err(BdlError::Validation(_))));
    }

    #[test]
    fn bow_without_header_infers_vocabulary() {
        let x = parse_bow("2 0:3 4:1\n0\n").unwrap();
        assert_eq!((x.n_rows(), x.n_cols()), (2, 5));
    }

    #[test]
    fn normalized_rows_peak_at_one() {
        let x = parse_bow("2 0:3 4:1\n").unwrap();
        let m = x.normalized::<f64>();
        assert_eq!(m[[0, 0]], 1.0);
        assert!((m[[0, 4]] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ratings_line_transcribes() {
        let r = parse_ratings("2 10\n3 0 5 9\n0\n", 1.0, 0.01).unwrap();
        assert!(r.is_positive(0, 0) && r.is_positive(0, 5) && r.is_positive(0, 9));
        assert!(!r.is_positive(0, 1));
        assert_eq!(r.user(1).len(), 0);
        assert_eq!(r.confidence(0, 5), 1.0);
        assert_eq!(r.confidence(0, 4), 0.01);
    }

    #[test]
    fn ratings_confidence_order_enforced() {
        assert!(parse_ratings("1 3\n0\n", 1.0, 0.01).is_ok());
        assert!(matches!(
            parse_ratings("1 3\n0\n", 0.01, 1.0),
            Err(BdlError::Config { .. })
        ));
    }

    #[test]
    fn ratings_item_out_of_range() {
        assert!(matches!(
            parse_ratings("1 3\n1 3\n", 1.0, 0.01),
            Err(BdlError::Validation(_))
        ));
    }

    #[test]
    fn laplacian_single_edge() {
        let g = ItemGraph::from_edges(2, &[(0, 1)]).unwrap();
        let l: Array2<f64> = graph_laplacian(&g);
        assert_eq!(l, ndarray::array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_empty_graph_is_zero() {
        let l: Array2<f64> = laplacian(&Array2::zeros((3, 3))).unwrap();
        assert!(l.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_rejects_asymmetric() {
        let mut a = Array2::<u8>::zeros((2, 2));
        a[[0, 1]] = 1;
        assert!(matches!(laplacian::<f64>(&a), Err(BdlError::Validation(_))));
    }

    #[test]
    fn laplacian_apply_matches_dense() {
        let g = ItemGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)]).unwrap();
        let l: Array2<f64> = graph_laplacian(&g);
        let x = [0.3, -1.0, 2.5, 0.7];
        let mut y = [0.0; 4];
        g.laplacian_apply(&x, &mut y);
        let dense = l.dot(&ndarray::arr1(&x));
        for k in 0..4 {
            assert!((dense[k] - y[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn graph_text_round_trip() {
        let g = ItemGraph::from_edges(5, &[(0, 1), (3, 1), (4, 2)]).unwrap();
        assert_eq!(parse_graph(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn corrupt_extremes() {
        let x = parse_bow("3 0:1 2:4 5:2\n2 1:1 3:3\n").unwrap();
        assert_eq!(corrupt(&x, CorruptionSpec::new(0.0, 1).unwrap()), x);
        assert_eq!(corrupt(&x, CorruptionSpec::new(1.0, 1).unwrap()).nnz(), 0);
        assert!(CorruptionSpec::new(1.5, 1).is_err());
    }

    #[test]
    fn split_counts() {
        let r = ImplicitRatings::new(10, vec![vec![0, 1, 2, 3, 4], vec![7]], 1.0, 0.01).unwrap();
        let (train, test) = split_ratings(&r, 2, 3).unwrap();
        assert_eq!((train.user(0).len(), test.user(0).len()), (3, 2));
        assert_eq!((train.user(1).len(), test.user(1).len()), (1, 0));
        assert!(split_ratings(&r, 0, 3).is_err());
    }
}
