//! Trade balance `B_c = (P*_c - P_c) / (P*_c + P_c)` and its sensitivity to a
//! `(1 + delta)` price factor.
//!
//! Three routes are provided:
//!
//! * [`reduced_balance_sensitivity`]: shock the source node inside the reduced
//!   matrices `G_R` and `G*_R` of `group x all products + source`;
//! * [`hat_balance_sensitivity`]: shock the bilateral money flows and use the
//!   volume ranks only;
//! * [`global_price_sensitivity`]: scale every flow of one product and rebuild
//!   the full matrices.
//!
//! Derivatives are central differences at `delta`; the report also carries the
//! Richardson estimate `|D(delta) - D(delta/2)| / 3`.

use std::io::Write;
use std::path::Path;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmatrix::build_wtn_pair;
use crate::ingest::{country_volumes, MoneyTensor, Registry};
use crate::rank::{pagerank, trace, write_lines, Axis, SolverOptions};
use crate::regomax::{reduce, ReduceOptions, ReducedSet, Selection};

pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Regomax,
    Hat,
    GlobalPrice,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Regomax => "regomax",
            Method::Hat => "hat",
            Method::GlobalPrice => "global-price",
        }
    }
}

/// Price shock on one (country, product) source node, observed on a group of countries.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSpec {
    pub source_country: usize,
    pub source_product: usize,
    pub group: Vec<usize>,
    pub delta: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    // the central difference evaluates 1 - delta, which must stay a valid factor
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Argument(format!("delta must be in [0, 1), got {delta}")));
    }
    Ok(())
}

fn check_group(registry: &Registry, group: &[usize]) -> Result<()> {
    if group.is_empty() {
        return Err(Error::Argument("country group is empty".into()));
    }
    let mut seen = vec![false; registry.n_countries()];
    for &c in group {
        if c >= registry.n_countries() {
            return Err(Error::Argument(format!("group country index {c} out of range")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::Argument(format!(
                "country {} listed twice in group",
                registry.country(c)
            )));
        }
    }
    Ok(())
}

impl ShockSpec {
    pub fn new(
        registry: &Registry,
        source_country: usize,
        source_product: usize,
        group: Vec<usize>,
        delta: f64,
    ) -> Result<Self> {
        check_delta(delta)?;
        check_group(registry, &group)?;
        if source_country >= registry.n_countries() || source_product >= registry.n_products() {
            return Err(Error::Argument("source node out of range".into()));
        }
        if group.contains(&source_country) {
            return Err(Error::Argument(format!(
                "source country {} is part of the group",
                registry.country(source_country)
            )));
        }
        Ok(ShockSpec {
            source_country,
            source_product,
            group,
            delta,
        })
    }

    /// Builds a spec from ISO country and SITC product codes.
    pub fn from_codes(
        registry: &Registry,
        source_country: &str,
        source_product: &str,
        group: &[impl AsRef<str>],
        delta: f64,
    ) -> Result<Self> {
        let country = |code: &str| {
            registry
                .country_index(code)
                .ok_or_else(|| Error::Argument(format!("unknown country code {code}")))
        };
        let src_c = country(source_country)?;
        let src_p = registry
            .product_index(source_product)
            .ok_or_else(|| Error::Argument(format!("unknown product code {source_product}")))?;
        let group = group
            .iter()
            .map(|c| country(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        ShockSpec::new(registry, src_c, src_p, group, delta)
    }

    pub fn source_node(&self, registry: &Registry) -> usize {
        registry.node_index(self.source_country, self.source_product)
    }

    pub fn source_label(&self, registry: &Registry) -> String {
        registry.node_label(self.source_node(registry))
    }

    /// All products of the group countries (grouped by country in group order),
    /// then the source node last.
    pub fn selection(&self, registry: &Registry) -> Result<Selection> {
        let products: Vec<usize> = (0..registry.n_products()).collect();
        Selection::country_products(registry, &self.group, &products, &[self.source_node(registry)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub country: String,
    /// Balance at `delta = 0`.
    pub balance: f64,
    pub derivative: f64,
    pub richardson_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub method: Method,
    pub source: String,
    pub delta: f64,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    pub fn row(&self, country: &str) -> Option<&SensitivityRow> {
        self.rows.iter().find(|r| r.country == country)
    }

    /// `country,balance,dB_ddelta,method,source,delta`, one row per group country.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(path.as_ref(), "country,balance,dB_ddelta,method,source,delta", |out| {
            for r in &self.rows {
                writeln!(
                    out,
                    "{},{:e},{:e},{},{},{:e}",
                    r.country,
                    r.balance,
                    r.derivative,
                    self.method.name(),
                    self.source,
                    self.delta
                )?;
            }
            Ok(())
        })
    }
}

/// `B_c = (P*_c - P_c) / (P*_c + P_c)` per entry.
pub fn balance(p_star: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    if p_star.len() != p.len() {
        return Err(Error::Argument("marginals differ in length".into()));
    }
    p_star
        .iter()
        .zip(p)
        .enumerate()
        .map(|(c, (&ps, &pc))| {
            if ps < 0.0 || pc < 0.0 {
                return Err(Error::Argument(format!("negative marginal at entry {c}")));
            }
            let denom = ps + pc;
            if !(denom > 0.0) {
                return Err(Error::Domain(format!("balance undefined for entry {c}: no trade")));
            }
            Ok((ps - pc) / denom)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensitivityOptions {
    pub solver: SolverOptions,
    pub reduce: ReduceOptions,
}

/// Direct reduced matrix with the source column's off-diagonal entries scaled
/// by `1 + delta` and the column renormalized.
pub fn shock_direct(m: &DMatrix<f64>, source: usize, delta: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    if delta == 0.0 {
        return out;
    }
    let mut col = out.column_mut(source);
    for (i, v) in col.iter_mut().enumerate() {
        if i != source {
            *v *= 1.0 + delta;
        }
    }
    let s = col.sum();
    col /= s;
    out
}

/// Inverted reduced matrix with the source row's off-diagonal entries scaled by
/// `1 + delta`; every column holding a scaled entry is renormalized.
pub fn shock_inverted(m: &DMatrix<f64>, source: usize, delta: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    if delta == 0.0 {
        return out;
    }
    for j in 0..out.ncols() {
        if j == source || out[(source, j)] == 0.0 {
            continue;
        }
        out[(source, j)] *= 1.0 + delta;
        let mut col = out.column_mut(j);
        let s = col.sum();
        col /= s;
    }
    out
}

/// Baseline reductions for a shock spec, computed once and reused for every delta.
#[derive(Debug, Clone)]
pub struct ShockBaseline {
    pub selection: Selection,
    pub direct: ReducedSet,
    pub inverted: ReducedSet,
    /// Position of the source node within the selection.
    pub source_position: usize,
    n_products: usize,
    group: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockedPair {
    pub direct: DMatrix<f64>,
    pub inverted: DMatrix<f64>,
}

impl ShockBaseline {
    pub fn new(tensor: &MoneyTensor, alpha: f64, spec: &ShockSpec, opts: SensitivityOptions) -> Result<Self> {
        let reg = tensor.registry();
        let selection = spec.selection(reg)?;
        let pair = build_wtn_pair(tensor, alpha, opts.solver)?;
        info!(
            "reducing N = {} onto N_r = {} nodes",
            selection.network_size(),
            selection.len()
        );
        let (direct, inverted) = rayon::join(
            || reduce(&pair.direct, &selection, opts.reduce),
            || reduce(&pair.inverted, &selection, opts.reduce),
        );
        Ok(ShockBaseline {
            source_position: selection.len() - 1,
            selection,
            direct: direct?,
            inverted: inverted?,
            n_products: reg.n_products(),
            group: spec.group.clone(),
        })
    }

    pub fn shocked(&self, delta: f64) -> ShockedPair {
        ShockedPair {
            direct: shock_direct(&self.direct.g_r, self.source_position, delta),
            inverted: shock_inverted(&self.inverted.g_r, self.source_position, delta),
        }
    }

    /// Group balances from the stationary vectors of a (shocked) reduced pair.
    fn balances(&self, pair: &ShockedPair, solver: SolverOptions) -> Result<Vec<f64>> {
        let p = pagerank(&pair.direct, solver)?;
        let p_star = pagerank(&pair.inverted, solver)?;
        let np = self.n_products;
        let country = |v: &[f64]| -> Vec<f64> {
            (0..self.group.len())
                .map(|k| v[k * np..(k + 1) * np].iter().sum())
                .collect()
        };
        balance(&country(p_star.probabilities()), &country(p.probabilities()))
    }
}

pub fn build_shock_matrices(
    tensor: &MoneyTensor,
    alpha: f64,
    spec: &ShockSpec,
    delta: f64,
    opts: SensitivityOptions,
) -> Result<ShockedPair> {
    check_delta(delta)?;
    Ok(ShockBaseline::new(tensor, alpha, spec, opts)?.shocked(delta))
}

/// Central differences at `delta` and `delta / 2` from a balance function.
fn central_differences(
    delta: f64,
    balances: impl Fn(f64) -> Result<Vec<f64>> + Sync,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let base = balances(0.0)?;
    if delta == 0.0 {
        let zeros = vec![0.0; base.len()];
        return Ok((base, zeros.clone(), zeros));
    }
    let steps = [delta, -delta, delta / 2.0, -delta / 2.0];
    let evals: Vec<Vec<f64>> = steps
        .par_iter()
        .map(|&h| balances(h))
        .collect::<Result<_>>()?;
    let diff = |a: &[f64], b: &[f64], h: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
    };
    let d1 = diff(&evals[0], &evals[1], delta);
    let d2 = diff(&evals[2], &evals[3], delta / 2.0);
    let err = d1.iter().zip(&d2).map(|(a, b)| (a - b).abs() / 3.0).collect();
    Ok((base, d1, err))
}

fn report(
    method: Method,
    source: String,
    delta: f64,
    registry: &Registry,
    group: &[usize],
    (base, deriv, err): (Vec<f64>, Vec<f64>, Vec<f64>),
) -> SensitivityReport {
    let rows = group
        .iter()
        .enumerate()
        .map(|(k, &c)| SensitivityRow {
            country: registry.country(c).to_string(),
            balance: base[k],
            derivative: deriv[k],
            richardson_error: err[k],
        })
        .collect();
    SensitivityReport {
        method,
        source,
        delta,
        rows,
    }
}

/// Balance sensitivity from the shocked reduced matrices.
pub fn reduced_balance_sensitivity(
    tensor: &MoneyTensor,
    alpha: f64,
    spec: &ShockSpec,
    opts: SensitivityOptions,
) -> Result<SensitivityReport> {
    let baseline = ShockBaseline::new(tensor, alpha, spec, opts)?;
    reduced_sensitivity_from(&baseline, tensor.registry(), spec, opts.solver)
}

/// As [`reduced_balance_sensitivity`], reusing a computed baseline.
pub fn reduced_sensitivity_from(
    baseline: &ShockBaseline,
    registry: &Registry,
    spec: &ShockSpec,
    solver: SolverOptions,
) -> Result<SensitivityReport> {
    check_delta(spec.delta)?;
    let diffs = central_differences(spec.delta, |h| baseline.balances(&baseline.shocked(h), solver))?;
    Ok(report(
        Method::Regomax,
        spec.source_label(registry),
        spec.delta,
        registry,
        &spec.group,
        diffs,
    ))
}

/// Balance sensitivity from ImportRank / ExportRank: the source's flows of the
/// source product into group countries are scaled by `1 + delta`.
pub fn hat_balance_sensitivity(tensor: &MoneyTensor, spec: &ShockSpec) -> Result<SensitivityReport> {
    check_delta(spec.delta)?;
    let reg = tensor.registry();
    let mut in_group = vec![false; reg.n_countries()];
    spec.group.iter().for_each(|&c| in_group[c] = true);
    let diffs = central_differences(spec.delta, |h| {
        let shocked = tensor.scaled(|k| {
            if k.product == spec.source_product && k.exporter == spec.source_country && in_group[k.importer] {
                1.0 + h
            } else {
                1.0
            }
        });
        let (export, import) = country_volumes(&shocked);
        let total: f64 = import.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("total trade volume is zero".into()));
        }
        let pick = |v: &[f64]| spec.group.iter().map(|&c| v[c] / total).collect::<Vec<_>>();
        balance(&pick(&export), &pick(&import))
    })?;
    Ok(report(Method::Hat, spec.source_label(reg), spec.delta, reg, &spec.group, diffs))
}

/// Balance sensitivity to a worldwide price change of one product: every flow
/// of `product` is scaled and the full matrices are rebuilt.
pub fn global_price_sensitivity(
    tensor: &MoneyTensor,
    alpha: f64,
    product: usize,
    group: &[usize],
    delta: f64,
    solver: SolverOptions,
) -> Result<SensitivityReport> {
    check_delta(delta)?;
    let reg = tensor.registry();
    check_group(reg, group)?;
    if product >= reg.n_products() {
        return Err(Error::Argument(format!("product index {product} out of range")));
    }
    let diffs = central_differences(delta, |h| {
        let shocked = tensor.scaled(|k| if k.product == product { 1.0 + h } else { 1.0 });
        let pair = build_wtn_pair(&shocked, alpha, solver)?;
        let (p, p_star) = rayon::join(|| pagerank(&pair.direct, solver), || pagerank(&pair.inverted, solver));
        let pc = trace(p?.probabilities(), Axis::Country, reg);
        let pc_star = trace(p_star?.probabilities(), Axis::Country, reg);
        let pick = |v: &[f64]| group.iter().map(|&c| v[c]).collect::<Vec<_>>();
        balance(&pick(&pc_star), &pick(&pc))
    })?;
    Ok(report(
        Method::GlobalPrice,
        format!("*:{}", reg.product(product)),
        delta,
        reg,
        group,
        diffs,
    ))
}
