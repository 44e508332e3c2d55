//! PageRank / CheiRank power iteration, tracing to country and product
//! marginals, and rank orderings.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::Registry;

/// A square, column stochastic operator known only through its action on vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`. `y` has length [`LinearOperator::dim`] and is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, col) in self.column_iter().enumerate() {
            let xj = x[j];
            if xj != 0.0 {
                for (yi, g) in y.iter_mut().zip(col.iter()) {
                    *yi += g * xj;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on the L1 residual `|G P - P|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Argument(format!(
                "solver needs tol > 0 and max_iter >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Stationary probability vector with solver metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    probabilities: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl RankVector {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

impl std::ops::Index<usize> for RankVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.probabilities[i]
    }
}

fn l1_normalize(x: &mut [f64]) {
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
}

/// Power iteration from the uniform vector.
pub fn pagerank<G: LinearOperator + ?Sized>(g: &G, opts: SolverOptions) -> Result<RankVector> {
    let n = g.dim();
    pagerank_from(g, vec![1.0 / n as f64; n], opts)
}

/// Power iteration from an arbitrary nonnegative start vector.
///
/// Iterates `P <- G P` with renormalization until `|G P - P|_1 < tol`.
pub fn pagerank_from<G: LinearOperator + ?Sized>(
    g: &G,
    start: Vec<f64>,
    opts: SolverOptions,
) -> Result<RankVector> {
    opts.validate()?;
    let n = g.dim();
    if start.len() != n || n == 0 {
        return Err(Error::Argument(format!(
            "start vector has length {}, operator dimension {n}",
            start.len()
        )));
    }
    if start.iter().any(|v| !(*v >= 0.0)) || start.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Argument("start vector must be nonnegative and nonzero".into()));
    }
    let mut p = start;
    l1_normalize(&mut p);
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        g.apply(&p, &mut next);
        l1_normalize(&mut next);
        residual = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if residual < opts.tol {
            return Ok(RankVector {
                probabilities: p,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        what: "pagerank",
        iterations: opts.max_iter,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Country,
    Product,
}

impl Axis {
    pub fn len(self, reg: &Registry) -> usize {
        match self {
            Axis::Country => reg.n_countries(),
            Axis::Product => reg.n_products(),
        }
    }

    pub(crate) fn coordinate(self, reg: &Registry, node: usize) -> usize {
        let (c, p) = reg.node_of(node);
        match self {
            Axis::Country => c,
            Axis::Product => p,
        }
    }
}

/// Sums a node vector over products (country axis) or countries (product axis).
pub fn trace(p: &[f64], axis: Axis, registry: &Registry) -> Vec<f64> {
    assert_eq!(p.len(), registry.n_nodes(), "vector does not match registry");
    let mut out = vec![0.0; axis.len(registry)];
    for (i, v) in p.iter().enumerate() {
        out[axis.coordinate(registry, i)] += v;
    }
    out
}

/// Probabilities of one product across all countries (local ranking at fixed product).
pub fn restrict_to_product(p: &[f64], product: usize, registry: &Registry) -> Vec<f64> {
    (0..registry.n_countries())
        .map(|c| p[registry.node_index(c, product)])
        .collect()
}

/// Ordering by decreasing probability; `order()[k]` is the id at rank `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankIndex {
    order: Vec<usize>,
    rank_of: Vec<usize>,
}

impl RankIndex {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Zero based rank position of `id`.
    pub fn rank_of(&self, id: usize) -> usize {
        self.rank_of[id]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Stable decreasing sort; ties keep ascending id order.
pub fn order_indices(values: &[f64]) -> RankIndex {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank_of = vec![0; values.len()];
    for (k, &id) in order.iter().enumerate() {
        rank_of[id] = k;
    }
    RankIndex { order, rank_of }
}

/// Writes `node,country,product,probability,rank_index` (ids one based).
pub fn write_node_ranks(path: impl AsRef<Path>, p: &[f64], registry: &Registry) -> Result<()> {
    let idx = order_indices(p);
    write_lines(path.as_ref(), "node,country,product,probability,rank_index", |out| {
        for (i, v) in p.iter().enumerate() {
            let (c, q) = registry.node_of(i);
            writeln!(
                out,
                "{},{},{},{:e},{}",
                i + 1,
                registry.country(c),
                registry.product(q),
                v,
                idx.rank_of(i) + 1
            )?;
        }
        Ok(())
    })
}

/// Writes `<key>,probability,rank_index` for a marginal vector.
pub fn write_marginal(path: impl AsRef<Path>, key: &str, labels: &[String], p: &[f64]) -> Result<()> {
    let idx = order_indices(p);
    write_lines(path.as_ref(), &format!("{key},probability,rank_index"), |out| {
        for (i, v) in p.iter().enumerate() {
            writeln!(out, "{},{:e},{}", labels[i], v, idx.rank_of(i) + 1)?;
        }
        Ok(())
    })
}

pub(crate) fn write_lines(
    path: &Path,
    header: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}")
        .and_then(|_| body(&mut out))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
