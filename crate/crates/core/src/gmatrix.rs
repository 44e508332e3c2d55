//! Column stochastic trade matrices and damped Google matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::{volumes, MoneyTensor, Registry};
use crate::rank::{pagerank, trace, Axis, LinearOperator, SolverOptions};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Direct flow (columns are exporters) or inverted flow (columns are importers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Direct,
    Inverted,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Direct => "direct",
            Direction::Inverted => "inverted",
        }
    }
}

/// Column of a [`StochasticMatrix`].
#[derive(Debug, Clone, Copy)]
pub enum Column<'a> {
    /// Every entry equals `1/N`.
    Dangling,
    Sparse { rows: &'a [usize], values: &'a [f64] },
}

/// Column stochastic matrix in compressed column form. Dangling columns
/// store nothing and act as the uniform column `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    direction: Direction,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    dangling: Vec<bool>,
}

impl StochasticMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_dangling(&self, j: usize) -> bool {
        self.dangling[j]
    }

    pub fn dangling_count(&self) -> usize {
        self.dangling.iter().filter(|d| **d).count()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize) -> Column<'_> {
        if self.dangling[j] {
            Column::Dangling
        } else {
            let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
            Column::Sparse {
                rows: &self.row_idx[a..b],
                values: &self.values[a..b],
            }
        }
    }

    /// Dense copy of column `j`.
    pub fn column_dense(&self, j: usize) -> Vec<f64> {
        match self.column(j) {
            Column::Dangling => vec![1.0 / self.n as f64; self.n],
            Column::Sparse { rows, values } => {
                let mut out = vec![0.0; self.n];
                for (&i, &v) in rows.iter().zip(values) {
                    out[i] += v;
                }
                out
            }
        }
    }

    /// `y = S x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut dangling_mass = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            if self.dangling[j] {
                dangling_mass += xj;
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
        if dangling_mass != 0.0 {
            let share = dangling_mass / self.n as f64;
            y.iter_mut().for_each(|v| *v += share);
        }
    }

    /// `y = S^T x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        let uniform = x.iter().sum::<f64>() / self.n as f64;
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = if self.dangling[j] {
                uniform
            } else {
                (self.col_ptr[j]..self.col_ptr[j + 1])
                    .map(|k| self.values[k] * x[self.row_idx[k]])
                    .sum()
            };
        }
    }

    /// Stored triples `(row, col, value)` in column order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |k| (self.row_idx[k], j, self.values[k]))
        })
    }
}

/// Builds `S` (direct) or `S*` (inverted) from the money tensor.
///
/// Direct column `(c', p)` holds `M^p_{c,c'} / V*^p_{c'}` at rows `(c, p)`; the
/// inverted column `(c', p)` holds `M^p_{c',c} / V^p_{c'}`. A column whose
/// source volume is zero is dangling.
pub fn build_stochastic(tensor: &MoneyTensor, direction: Direction) -> StochasticMatrix {
    let reg = tensor.registry();
    let n = reg.n_nodes();
    let vol = volumes(tensor);
    let source_vol = match direction {
        Direction::Direct => &vol.export_vol,
        Direction::Inverted => &vol.import_vol,
    };

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (k, m) in tensor.entries() {
        if m == 0.0 {
            continue;
        }
        let (col_country, row_country) = match direction {
            Direction::Direct => (k.exporter, k.importer),
            Direction::Inverted => (k.importer, k.exporter),
        };
        let j = reg.node_index(col_country, k.product);
        cols[j].push((reg.node_index(row_country, k.product), m));
    }

    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    let mut dangling = vec![false; n];
    col_ptr.push(0);
    for (j, mut col) in cols.into_iter().enumerate() {
        if source_vol[j] > 0.0 {
            col.sort_unstable_by_key(|e| e.0);
            // normalize by the column's own sum so it is stochastic to rounding
            let sum: f64 = col.iter().map(|e| e.1).sum();
            for (i, m) in col {
                row_idx.push(i);
                values.push(m / sum);
            }
        } else {
            dangling[j] = true;
        }
        col_ptr.push(row_idx.len());
    }
    StochasticMatrix {
        n,
        direction,
        col_ptr,
        row_idx,
        values,
        dangling,
    }
}

/// Teleportation distribution; entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizationVector(Vec<f64>);

impl PersonalizationVector {
    /// Validates nonnegativity and normalization (to 1e-12).
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Argument("personalization entries must be finite and >= 0".into()));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("personalization sums to {s}, expected 1")));
        }
        Ok(PersonalizationVector(v))
    }

    pub fn uniform(n: usize) -> Self {
        PersonalizationVector(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Volume based personalization: relative import (direct) or export
/// (inverted) volume per product within each country, each country weighted `1/N_c`.
///
/// A country with no volume in the relevant direction gets the uniform block
/// `1/(N_c N_p)`.
pub fn personalization_volume(tensor: &MoneyTensor, direction: Direction) -> PersonalizationVector {
    let reg = tensor.registry();
    let vol = volumes(tensor);
    let (node_vol, country_vol) = match direction {
        Direction::Direct => (&vol.import_vol, &vol.country_import),
        Direction::Inverted => (&vol.export_vol, &vol.country_export),
    };
    let nc = reg.n_countries() as f64;
    let np = reg.n_products();
    let mut v = vec![0.0; reg.n_nodes()];
    for c in 0..reg.n_countries() {
        let total = country_vol[c];
        if total > 0.0 {
            for p in 0..np {
                let i = reg.node_index(c, p);
                v[i] = node_vol[i] / (nc * total);
            }
        } else {
            warn!(
                "country {} has no {} volume; using a uniform personalization block",
                reg.country(c),
                match direction {
                    Direction::Direct => "import",
                    Direction::Inverted => "export",
                }
            );
            for p in 0..np {
                v[reg.node_index(c, p)] = 1.0 / (nc * np as f64);
            }
        }
    }
    PersonalizationVector(v)
}

/// Rank based personalization `v_i = P_p / N_c` from a product marginal.
pub fn personalization_rank(product_marginal: &[f64], registry: &Registry) -> Result<PersonalizationVector> {
    if product_marginal.len() != registry.n_products() {
        return Err(Error::Argument(format!(
            "product marginal has {} entries, registry {} products",
            product_marginal.len(),
            registry.n_products()
        )));
    }
    let s: f64 = product_marginal.iter().sum();
    if (s - 1.0).abs() > 1e-12 || product_marginal.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Argument(format!(
            "product marginal must be a probability vector (sum {s})"
        )));
    }
    let nc = registry.n_countries() as f64;
    let v = (0..registry.n_nodes())
        .map(|i| product_marginal[registry.node_of(i).1] / nc)
        .collect();
    Ok(PersonalizationVector(v))
}

/// `G = alpha S + (1 - alpha) v e^T`, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct GoogleMatrix {
    stochastic: StochasticMatrix,
    personalization: PersonalizationVector,
    alpha: f64,
}

pub fn assemble_google(s: StochasticMatrix, v: PersonalizationVector, alpha: f64) -> Result<GoogleMatrix> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Argument(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if s.dim() != v.len() {
        return Err(Error::Argument(format!(
            "matrix size {} does not match personalization size {}",
            s.dim(),
            v.len()
        )));
    }
    Ok(GoogleMatrix {
        stochastic: s,
        personalization: v,
        alpha,
    })
}

impl GoogleMatrix {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn stochastic(&self) -> &StochasticMatrix {
        &self.stochastic
    }

    pub fn personalization(&self) -> &PersonalizationVector {
        &self.personalization
    }

    pub fn direction(&self) -> Direction {
        self.stochastic.direction
    }

    /// `alpha S_j + (1 - alpha) v`.
    pub fn materialize_column(&self, j: usize) -> Vec<f64> {
        let mut col = self.stochastic.column_dense(j);
        let a = self.alpha;
        for (c, v) in col.iter_mut().zip(self.personalization.as_slice()) {
            *c = a * *c + (1.0 - a) * v;
        }
        col
    }

    /// `y = G^T x`.
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.stochastic.matvec_transpose(x, y);
        let a = self.alpha;
        let vx: f64 = self
            .personalization
            .as_slice()
            .iter()
            .zip(x)
            .map(|(v, x)| v * x)
            .sum();
        y.iter_mut().for_each(|yj| *yj = a * *yj + (1.0 - a) * vx);
    }

    /// Dense copy; refuses sizes above `cap`.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > cap {
            return Err(Error::Argument(format!(
                "refusing to materialize a {n}x{n} dense matrix (cap {cap})"
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m.set_column(j, &nalgebra::DVector::from_vec(self.materialize_column(j)));
        }
        Ok(m)
    }

    /// Writes the stochastic part as `row,col,value` triples (one based) and a
    /// sidecar with alpha, the dangling columns and the personalization vector.
    pub fn write_dump(&self, triples: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
        let triples = triples.as_ref();
        let mut out = String::from("row,col,value\n");
        for (i, j, v) in self.stochastic.triples() {
            let _ = writeln!(out, "{},{},{:e}", i + 1, j + 1, v);
        }
        fs::write(triples, out).map_err(|e| Error::io(triples, e))?;

        let sidecar = sidecar.as_ref();
        let mut out = String::new();
        let _ = writeln!(out, "alpha={:e}", self.alpha);
        let _ = writeln!(out, "direction={}", self.direction().name());
        let _ = writeln!(out, "size={}", self.dim());
        let dangling: Vec<String> = (0..self.dim())
            .filter(|&j| self.stochastic.dangling[j])
            .map(|j| (j + 1).to_string())
            .collect();
        let _ = writeln!(out, "dangling={}", dangling.join(","));
        out.push_str("personalization\n");
        for v in self.personalization.as_slice() {
            let _ = writeln!(out, "{v:e}");
        }
        fs::write(sidecar, out).map_err(|e| Error::io(sidecar, e))
    }
}

impl LinearOperator for GoogleMatrix {
    fn dim(&self) -> usize {
        self.stochastic.n
    }

    /// `G x = alpha S x + (1 - alpha) v (sum x)`.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.stochastic.matvec(x, y);
        let a = self.alpha;
        let mass: f64 = x.iter().sum();
        for (yi, vi) in y.iter_mut().zip(self.personalization.as_slice()) {
            *yi = a * *yi + (1.0 - a) * vi * mass;
        }
    }
}

/// Second iteration Google matrices `G` and `G*` of a trade tensor.
#[derive(Debug, Clone)]
pub struct WtnPair {
    pub direct: GoogleMatrix,
    pub inverted: GoogleMatrix,
}

impl WtnPair {
    pub fn get(&self, direction: Direction) -> &GoogleMatrix {
        match direction {
            Direction::Direct => &self.direct,
            Direction::Inverted => &self.inverted,
        }
    }
}

/// Two-pass construction: volume personalization first, then personalization
/// from the product marginals of the first pass PageRank and CheiRank.
pub fn build_wtn_pair(tensor: &MoneyTensor, alpha: f64, solver: SolverOptions) -> Result<WtnPair> {
    if !(volumes(tensor).total > 0.0) {
        return Err(Error::Domain("total trade volume is zero".into()));
    }
    let reg = tensor.registry();
    let mut second = Vec::with_capacity(2);
    for direction in [Direction::Direct, Direction::Inverted] {
        let s = build_stochastic(tensor, direction);
        let first = assemble_google(s, personalization_volume(tensor, direction), alpha)?;
        let p = pagerank(&first, solver)?;
        let pp = renormalized(trace(p.probabilities(), Axis::Product, reg));
        let v = personalization_rank(&pp, reg)?;
        second.push(assemble_google(first.stochastic, v, alpha)?);
    }
    let inverted = second.pop().expect("two directions");
    let direct = second.pop().expect("two directions");
    Ok(WtnPair { direct, inverted })
}

fn renormalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}
