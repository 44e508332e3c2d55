//! Reduced Google matrix of a node subset.
//!
//! For a selection `r` with complement `s` the reduced matrix is
//! `G_R = G_rr + G_rs (1 - G_ss)^{-1} G_sr`. The resolvent is split along the
//! leading eigenpair `(lambda_c, psi_R, psi_L)` of `G_ss`:
//!
//! ```text
//! (1 - G_ss)^{-1} = P_c / (1 - lambda_c) + Q_c sum_l (Q_c G_ss Q_c)^l Q_c
//! P_c = psi_R psi_L^T,   Q_c = 1 - P_c,   psi_L . psi_R = 1
//! ```
//!
//! which yields `G_R = G_rr + G_pr + G_qr`. `G_pr` has rank one; `G_qr`
//! collects the indirect paths through the complement and is summed as a
//! geometric series whose rate is the second eigenvalue of `G_ss`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmatrix::GoogleMatrix;
use crate::ingest::Registry;
use crate::rank::{pagerank, write_lines, LinearOperator, SolverOptions};

/// Default size limit for dense materialization in [`reduce_dense_oracle`].
pub const ORACLE_CAP: usize = 2000;

/// Entries of `G_R` down to this magnitude below zero are treated as rounding.
const NEGATIVE_SLACK: f64 = 1e-12;

/// Ordered set of distinct node ids; the order fixes rows and columns of
/// every reduced matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    nodes: Vec<usize>,
    n: usize,
}

impl Selection {
    pub fn new(nodes: Vec<usize>, n: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Argument("selection is empty".into()));
        }
        let mut seen = vec![false; n];
        for &i in &nodes {
            if i >= n {
                return Err(Error::Argument(format!("node {i} out of range (N = {n})")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Argument(format!("node {i} selected twice")));
            }
        }
        Ok(Selection { nodes, n })
    }

    pub fn all(n: usize) -> Self {
        Selection {
            nodes: (0..n).collect(),
            n,
        }
    }

    /// Nodes `country x product` for the given countries and products, grouped
    /// by country in the order given, followed by `extra`.
    pub fn country_products(
        registry: &Registry,
        countries: &[usize],
        products: &[usize],
        extra: &[usize],
    ) -> Result<Self> {
        let mut nodes: Vec<usize> = countries
            .iter()
            .flat_map(|&c| products.iter().map(move |&p| registry.node_index(c, p)))
            .collect();
        nodes.extend_from_slice(extra);
        Selection::new(nodes, registry.n_nodes())
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Size of the full network.
    pub fn network_size(&self) -> usize {
        self.n
    }

    pub fn complement_len(&self) -> usize {
        self.n - self.nodes.len()
    }

    /// Complement in ascending node order.
    pub fn complement(&self) -> Vec<usize> {
        let mut inside = vec![false; self.n];
        for &i in &self.nodes {
            inside[i] = true;
        }
        (0..self.n).filter(|&i| !inside[i]).collect()
    }

    pub fn labels(&self, registry: &Registry) -> Vec<String> {
        self.nodes.iter().map(|&i| registry.node_label(i)).collect()
    }

    /// Position of `node` within the selection.
    pub fn position(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&i| i == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    /// Stop the series once a term's L1 norm falls below this.
    pub series_tol: f64,
    pub max_terms: usize,
    /// L1 change between power iterations at which the eigenvectors are accepted.
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            series_tol: 1e-14,
            max_terms: 10_000,
            eigen_tol: 1e-13,
            eigen_max_iter: 1_000_000,
        }
    }
}

/// Sum of all elements divided by the matrix size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Weights {
    pub r: f64,
    pub rr: f64,
    pub pr: f64,
    pub qr: f64,
    pub qrd: f64,
    pub qrnd: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Leading eigenvalue of the complement block; NaN when the complement is empty.
    pub lambda_c: f64,
    /// Right eigenvector of `G_ss`, L1 normalized, complement order.
    pub psi_right: Vec<f64>,
    /// Left eigenvector of `G_ss` scaled so that `psi_left . psi_right = 1`.
    pub psi_left: Vec<f64>,
    pub eigen_iterations: (usize, usize),
    /// Largest number of series terms used by any column.
    pub series_terms: usize,
    /// Largest L1 norm of the last summed term over all columns.
    pub series_residual: f64,
    /// For each term index, the largest term norm over all columns.
    pub series_history: Vec<f64>,
    /// Tiny negative entries of `G_R` set to zero.
    pub clamped_entries: usize,
    pub min_entry: f64,
    /// L1 distance between the normalized column direction of `G_pr` and the
    /// PageRank of `G_R`.
    pub gpr_pagerank_distance: f64,
}

/// Reduced Google matrix and its components.
#[derive(Debug, Clone)]
pub struct ReducedSet {
    pub selection: Selection,
    pub g_r: DMatrix<f64>,
    pub g_rr: DMatrix<f64>,
    pub g_pr: DMatrix<f64>,
    pub g_qr: DMatrix<f64>,
    pub g_qrd: DMatrix<f64>,
    pub g_qrnd: DMatrix<f64>,
    pub weights: Weights,
    pub diagnostics: Diagnostics,
}

/// Component weight `(sum_ij M_ij) / N_r`.
pub fn component_weight(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.sum() / m.nrows() as f64
}

/// Splits a square matrix into its diagonal and off-diagonal parts.
pub fn split_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    assert_eq!(m.nrows(), m.ncols(), "split_qr needs a square matrix");
    let n = m.nrows();
    let diag = DMatrix::from_fn(n, n, |i, j| if i == j { m[(i, j)] } else { 0.0 });
    let off = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { m[(i, j)] });
    (diag, off)
}

/// Access to the blocks of `G` for a selection and its complement, through
/// full-size matrix-vector products.
struct Blocks<'a> {
    g: &'a GoogleMatrix,
    r: &'a [usize],
    s: Vec<usize>,
}

struct Scratch {
    full_in: Vec<f64>,
    full_out: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            full_in: vec![0.0; n],
            full_out: vec![0.0; n],
        }
    }
}

impl Blocks<'_> {
    fn scatter(idx: &[usize], x: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        for (&i, &v) in idx.iter().zip(x) {
            full[i] = v;
        }
    }

    fn gather(idx: &[usize], full: &[f64], y: &mut [f64]) {
        for (&i, v) in idx.iter().zip(y.iter_mut()) {
            *v = full[i];
        }
    }

    /// `y = G_ss x`
    fn ss(&self, x: &[f64], y: &mut [f64], w: &mut Scratch) {
        Self::scatter(&self.s, x, &mut w.full_in);
        self.g.apply(&w.full_in, &mut w.full_out);
        Self::gather(&self.s, &w.full_out, y);
    }

    /// `y = G_ss^T x`
    fn ss_t(&self, x: &[f64], y: &mut [f64], w: &mut Scratch) {
        Self::scatter(&self.s, x, &mut w.full_in);
        self.g.apply_transpose(&w.full_in, &mut w.full_out);
        Self::gather(&self.s, &w.full_out, y);
    }

    /// `y = G_rs x`
    fn rs(&self, x: &[f64], y: &mut [f64], w: &mut Scratch) {
        Self::scatter(&self.s, x, &mut w.full_in);
        self.g.apply(&w.full_in, &mut w.full_out);
        Self::gather(self.r, &w.full_out, y);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Power iteration on a nonnegative operator given by `step`; returns the
/// L1-normalized vector and the iteration count.
fn power_iteration(
    n: usize,
    tol: f64,
    max_iter: usize,
    what: &'static str,
    mut step: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, usize)> {
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut diff = f64::INFINITY;
    for it in 1..=max_iter {
        step(&x, &mut y);
        let s: f64 = y.iter().sum();
        if !(s > 0.0) {
            // nilpotent block: no mass ever returns to the complement
            return Err(Error::Numerical(format!("{what}: complement block annihilates the start vector")));
        }
        y.iter_mut().for_each(|v| *v /= s);
        diff = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut y);
        if diff < tol {
            return Ok((x, it));
        }
    }
    Err(Error::Convergence {
        what,
        iterations: max_iter,
        residual: diff,
    })
}

/// Reduced Google matrix of `sel` with its decomposition.
pub fn reduce(g: &GoogleMatrix, sel: &Selection, opts: ReduceOptions) -> Result<ReducedSet> {
    let n = g.dim();
    if sel.network_size() != n {
        return Err(Error::Argument(format!(
            "selection built for N = {}, matrix has N = {n}",
            sel.network_size()
        )));
    }
    let nr = sel.len();
    if nr == n {
        return Ok(trivial_reduction(g, sel));
    }

    let blocks = Blocks {
        g,
        r: sel.nodes(),
        s: sel.complement(),
    };
    let ns = blocks.s.len();
    let mut w = Scratch::new(n);

    let (psi_r, it_r) = power_iteration(ns, opts.eigen_tol, opts.eigen_max_iter, "right eigenvector of G_ss", |x, y| {
        blocks.ss(x, y, &mut w)
    })?;
    let (mut psi_l, it_l) = power_iteration(ns, opts.eigen_tol, opts.eigen_max_iter, "left eigenvector of G_ss", |x, y| {
        blocks.ss_t(x, y, &mut w)
    })?;
    let norm = dot(&psi_l, &psi_r);
    psi_l.iter_mut().for_each(|v| *v /= norm);
    let mut gss_psi = vec![0.0; ns];
    blocks.ss(&psi_r, &mut gss_psi, &mut w);
    let lambda_c = dot(&psi_l, &gss_psi);
    if !(lambda_c < 1.0) {
        return Err(Error::Numerical(format!(
            "leading eigenvalue of the complement block is {lambda_c}; the complement does not leak into the selection"
        )));
    }
    debug!("lambda_c = {lambda_c}, eigen iterations {it_r}/{it_l}");

    // G_pr = (G_rs psi_R)(psi_L^T G_sr) / (1 - lambda_c)
    let mut gpr_left = vec![0.0; nr];
    blocks.rs(&psi_r, &mut gpr_left, &mut w);

    let project = |x: &mut [f64]| {
        let c = dot(&psi_l, x);
        for (xi, pi) in x.iter_mut().zip(&psi_r) {
            *xi -= c * pi;
        }
    };

    struct ColumnResult {
        rr: Vec<f64>,
        pr_weight: f64,
        qr: Vec<f64>,
        history: Vec<f64>,
    }

    let columns: Vec<Result<ColumnResult>> = sel
        .nodes()
        .par_iter()
        .map(|&j| {
            let mut w = Scratch::new(n);
            let full = g.materialize_column(j);
            let mut rr = vec![0.0; nr];
            Blocks::gather(blocks.r, &full, &mut rr);
            let mut g_sr = vec![0.0; ns];
            Blocks::gather(&blocks.s, &full, &mut g_sr);
            let pr_weight = dot(&psi_l, &g_sr);

            let mut term = g_sr;
            project(&mut term);
            let mut acc = vec![0.0; ns];
            let mut next = vec![0.0; ns];
            let mut history = Vec::new();
            loop {
                let norm = l1(&term);
                history.push(norm);
                acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
                if norm < opts.series_tol {
                    break;
                }
                if history.len() >= opts.max_terms {
                    return Err(Error::Convergence {
                        what: "resolvent series",
                        iterations: history.len(),
                        residual: norm,
                    });
                }
                blocks.ss(&term, &mut next, &mut w);
                project(&mut next);
                std::mem::swap(&mut term, &mut next);
            }
            project(&mut acc);
            let mut qr = vec![0.0; nr];
            blocks.rs(&acc, &mut qr, &mut w);
            Ok(ColumnResult {
                rr,
                pr_weight,
                qr,
                history,
            })
        })
        .collect();

    let mut g_rr = DMatrix::zeros(nr, nr);
    let mut g_pr = DMatrix::zeros(nr, nr);
    let mut g_qr = DMatrix::zeros(nr, nr);
    let mut history: Vec<f64> = Vec::new();
    let mut series_residual: f64 = 0.0;
    let mut series_terms = 0;
    for (b, col) in columns.into_iter().enumerate() {
        let col = col?;
        for a in 0..nr {
            g_rr[(a, b)] = col.rr[a];
            g_pr[(a, b)] = gpr_left[a] * col.pr_weight / (1.0 - lambda_c);
            g_qr[(a, b)] = col.qr[a];
        }
        series_terms = series_terms.max(col.history.len());
        series_residual = series_residual.max(*col.history.last().unwrap_or(&0.0));
        if history.len() < col.history.len() {
            history.resize(col.history.len(), 0.0);
        }
        for (h, v) in history.iter_mut().zip(&col.history) {
            *h = h.max(*v);
        }
    }

    let mut g_r = &g_rr + &g_pr + &g_qr;
    let mut clamped = 0;
    let min_entry = g_r.min();
    for b in 0..nr {
        for a in 0..nr {
            let v = g_r[(a, b)];
            if (-NEGATIVE_SLACK..0.0).contains(&v) {
                g_r[(a, b)] = 0.0;
                g_qr[(a, b)] -= v;
                clamped += 1;
            }
        }
    }
    if min_entry < -NEGATIVE_SLACK {
        warn!("reduced matrix has entries down to {min_entry:e}; series or eigenvector accuracy is insufficient");
    }
    if clamped > 0 {
        debug!("clamped {clamped} rounding-level negative entries of G_R");
    }

    let gpr_pagerank_distance = gpr_distance(&g_r, &gpr_left);
    let diagnostics = Diagnostics {
        lambda_c,
        psi_right: psi_r,
        psi_left: psi_l,
        eigen_iterations: (it_r, it_l),
        series_terms,
        series_residual,
        series_history: history,
        clamped_entries: clamped,
        min_entry,
        gpr_pagerank_distance,
    };
    Ok(assemble(sel.clone(), g_r, g_rr, g_pr, g_qr, diagnostics))
}

fn gpr_distance(g_r: &DMatrix<f64>, direction: &[f64]) -> f64 {
    let s: f64 = direction.iter().sum();
    match pagerank(g_r, SolverOptions::default()) {
        Ok(p) if s > 0.0 => direction
            .iter()
            .zip(p.probabilities())
            .map(|(d, p)| (d / s - p).abs())
            .sum(),
        _ => f64::NAN,
    }
}

fn assemble(
    selection: Selection,
    g_r: DMatrix<f64>,
    g_rr: DMatrix<f64>,
    g_pr: DMatrix<f64>,
    g_qr: DMatrix<f64>,
    diagnostics: Diagnostics,
) -> ReducedSet {
    let (g_qrd, g_qrnd) = split_qr(&g_qr);
    let weights = Weights {
        r: component_weight(&g_r),
        rr: component_weight(&g_rr),
        pr: component_weight(&g_pr),
        qr: component_weight(&g_qr),
        qrd: component_weight(&g_qrd),
        qrnd: component_weight(&g_qrnd),
    };
    ReducedSet {
        selection,
        g_r,
        g_rr,
        g_pr,
        g_qr,
        g_qrd,
        g_qrnd,
        weights,
        diagnostics,
    }
}

fn selected_dense(g: &GoogleMatrix, sel: &Selection) -> DMatrix<f64> {
    let nr = sel.len();
    let mut m = DMatrix::zeros(nr, nr);
    for (b, &j) in sel.nodes().iter().enumerate() {
        let col = g.materialize_column(j);
        for (a, &i) in sel.nodes().iter().enumerate() {
            m[(a, b)] = col[i];
        }
    }
    m
}

fn trivial_reduction(g: &GoogleMatrix, sel: &Selection) -> ReducedSet {
    let nr = sel.len();
    let g_r = selected_dense(g, sel);
    let diagnostics = Diagnostics {
        lambda_c: f64::NAN,
        min_entry: g_r.min(),
        gpr_pagerank_distance: f64::NAN,
        ..Default::default()
    };
    assemble(
        sel.clone(),
        g_r.clone(),
        g_r,
        DMatrix::zeros(nr, nr),
        DMatrix::zeros(nr, nr),
        diagnostics,
    )
}

/// `G_rr + G_rs (1 - G_ss)^{-1} G_sr` by a dense LU solve.
pub fn reduce_dense_oracle(g: &GoogleMatrix, sel: &Selection, cap: usize) -> Result<DMatrix<f64>> {
    let n = g.dim();
    if n > cap {
        return Err(Error::Argument(format!("dense oracle refused: N = {n} exceeds cap {cap}")));
    }
    let dense = g.to_dense(cap)?;
    let r = sel.nodes();
    let s = sel.complement();
    let (nr, ns) = (r.len(), s.len());
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| dense[(rows[a], cols[b])])
    };
    let g_rr = block(r, r);
    if ns == 0 {
        return Ok(g_rr);
    }
    let g_rs = block(r, &s);
    let g_sr = block(&s, r);
    let one_minus_gss = DMatrix::identity(ns, ns) - block(&s, &s);
    let x = one_minus_gss
        .lu()
        .solve(&g_sr)
        .ok_or_else(|| Error::Numerical("1 - G_ss is singular".into()))?;
    debug_assert_eq!(x.shape(), (ns, nr));
    Ok(g_rr + g_rs * x)
}

/// Dense CSV: a header of node labels, then one line per row.
pub fn write_dense_csv(path: impl AsRef<Path>, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    write_lines(path.as_ref(), &labels.join(","), |out| {
        use std::io::Write;
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    })
}

impl ReducedSet {
    pub fn components(&self) -> [(&'static str, &DMatrix<f64>); 6] {
        [
            ("gr", &self.g_r),
            ("grr", &self.g_rr),
            ("gpr", &self.g_pr),
            ("gqr", &self.g_qr),
            ("gqrd", &self.g_qrd),
            ("gqrnd", &self.g_qrnd),
        ]
    }

    /// Key-value diagnostics sidecar.
    pub fn diagnostics_text(&self) -> String {
        let d = &self.diagnostics;
        let w = &self.weights;
        let mut out = String::new();
        let _ = writeln!(out, "n={}", self.selection.network_size());
        let _ = writeln!(out, "n_r={}", self.selection.len());
        let _ = writeln!(out, "lambda_c={:e}", d.lambda_c);
        let _ = writeln!(out, "eigen_iterations={},{}", d.eigen_iterations.0, d.eigen_iterations.1);
        let _ = writeln!(out, "series_terms={}", d.series_terms);
        let _ = writeln!(out, "residual={:e}", d.series_residual);
        let _ = writeln!(out, "clamped_entries={}", d.clamped_entries);
        let _ = writeln!(out, "min_entry={:e}", d.min_entry);
        let _ = writeln!(out, "gpr_pagerank_distance={:e}", d.gpr_pagerank_distance);
        for (k, v) in [
            ("W_R", w.r),
            ("W_rr", w.rr),
            ("W_pr", w.pr),
            ("W_qr", w.qr),
            ("W_qrd", w.qrd),
            ("W_qrnd", w.qrnd),
        ] {
            let _ = writeln!(out, "{k}={v:e}");
        }
        out
    }

    /// Writes `<prefix>_<component>.csv` for all six components and
    /// `<prefix>_diagnostics.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, prefix: &str, labels: &[String]) -> Result<()> {
        let dir = dir.as_ref();
        for (name, m) in self.components() {
            write_dense_csv(dir.join(format!("{prefix}_{name}.csv")), labels, m)?;
        }
        let path = dir.join(format!("{prefix}_diagnostics.txt"));
        fs::write(&path, self.diagnostics_text()).map_err(|e| Error::io(&path, e))
    }
}
