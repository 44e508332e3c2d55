//! Dense reference implementations built straight from the tensor entries.
//! Nothing here calls the library's matrix, rank or reduction code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use regomax_core::{MoneyTensor, Registry};

/// Dense `S` (`inverted = false`) or `S*` from raw flows; empty columns are uniform.
pub fn dense_s(t: &MoneyTensor, inverted: bool) -> DMatrix<f64> {
    let reg = t.registry();
    let n = reg.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    for (k, v) in t.entries() {
        let (col_c, row_c) = if inverted { (k.importer, k.exporter) } else { (k.exporter, k.importer) };
        m[(reg.node_index(row_c, k.product), reg.node_index(col_c, k.product))] += v;
    }
    for j in 0..n {
        let s = m.column(j).sum();
        if s > 0.0 {
            m.column_mut(j).scale_mut(1.0 / s);
        } else {
            m.column_mut(j).fill(1.0 / n as f64);
        }
    }
    m
}

pub fn google(s: &DMatrix<f64>, v: &[f64], alpha: f64) -> DMatrix<f64> {
    let n = s.nrows();
    let v = DVector::from_column_slice(v);
    s * alpha + &v * DVector::from_element(n, 1.0).transpose() * (1.0 - alpha)
}

/// Stationary vector from the null space of `G - I` via SVD, normalized to sum 1.
pub fn stationary(g: &DMatrix<f64>) -> Vec<f64> {
    let n = g.nrows();
    let a = g - DMatrix::<f64>::identity(n, n);
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let x: Vec<f64> = vt.row(k).iter().copied().collect();
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

fn volume_personalization(t: &MoneyTensor, inverted: bool) -> Vec<f64> {
    let reg = t.registry();
    let (nc, np) = (reg.n_countries(), reg.n_products());
    let mut vol = vec![0.0; reg.n_nodes()];
    for (k, v) in t.entries() {
        let c = if inverted { k.exporter } else { k.importer };
        vol[reg.node_index(c, k.product)] += v;
    }
    let mut out = vec![0.0; reg.n_nodes()];
    for c in 0..nc {
        let total: f64 = (0..np).map(|p| vol[reg.node_index(c, p)]).sum();
        for p in 0..np {
            let i = reg.node_index(c, p);
            out[i] = if total > 0.0 {
                vol[i] / (nc as f64 * total)
            } else {
                1.0 / (nc * np) as f64
            };
        }
    }
    out
}

pub fn marginal(p: &[f64], reg: &Registry, by_country: bool) -> Vec<f64> {
    let len = if by_country { reg.n_countries() } else { reg.n_products() };
    let mut out = vec![0.0; len];
    for (i, x) in p.iter().enumerate() {
        let (c, q) = reg.node_of(i);
        out[if by_country { c } else { q }] += x;
    }
    out
}

/// Second pass `(G, G*)`: personalization from the first pass product marginals.
pub fn dense_pair(t: &MoneyTensor, alpha: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let reg = t.registry();
    let nc = reg.n_countries() as f64;
    let build = |inverted: bool| {
        let s = dense_s(t, inverted);
        let first = google(&s, &volume_personalization(t, inverted), alpha);
        let pp = marginal(&stationary(&first), reg, false);
        let v: Vec<f64> = (0..reg.n_nodes()).map(|i| pp[reg.node_of(i).1] / nc).collect();
        google(&s, &v, alpha)
    };
    (build(false), build(true))
}

/// `G_rr + G_rs (1 - G_ss)^{-1} G_sr` by dense LU.
pub fn reduce(g: &DMatrix<f64>, sel: &[usize]) -> DMatrix<f64> {
    let n = g.nrows();
    let comp: Vec<usize> = (0..n).filter(|i| !sel.contains(i)).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])])
    };
    let g_rr = pick(sel, sel);
    if comp.is_empty() {
        return g_rr;
    }
    let g_rs = pick(sel, &comp);
    let g_sr = pick(&comp, sel);
    let g_ss = pick(&comp, &comp);
    let a = DMatrix::<f64>::identity(comp.len(), comp.len()) - g_ss;
    let x = a.lu().solve(&g_sr).expect("I - G_ss is invertible");
    g_rr + g_rs * x
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn balance(p_star: &[f64], p: &[f64]) -> Vec<f64> {
    p_star.iter().zip(p).map(|(s, q)| (s - q) / (s + q)).collect()
}
