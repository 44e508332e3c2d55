//! Subcommand bodies. Every command rebuilds what it needs from the tensor.

use std::path::{Path, PathBuf};

use log::{info, warn};
use regomax_core::gmatrix::GoogleMatrix;
use regomax_core::netexport::{serialize_graph, top_links, GraphFormat, View};
use regomax_core::rank::{restrict_to_product, write_marginal, write_node_ranks};
use regomax_core::regomax::{self, ReduceOptions, ReducedSet, Selection};
use regomax_core::sensitivity::{
    global_price_sensitivity, hat_balance_sensitivity, reduced_balance_sensitivity, SensitivityOptions,
};
use regomax_core::{
    build_wtn_pair, hat_ranks, load_money_tensor, pagerank, synth_tensor, trace, volumes, Axis, MoneyTensor,
    Registry, ShockSpec, SolverOptions,
};

use crate::config::RunConfig;
use crate::CliError;

fn solver(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.tol,
        ..SolverOptions::default()
    }
}

fn reduce_options(cfg: &RunConfig) -> ReduceOptions {
    ReduceOptions {
        series_tol: cfg.series_tol,
        ..ReduceOptions::default()
    }
}

fn load(cfg: &RunConfig) -> Result<MoneyTensor, CliError> {
    let registry = cfg.registry.as_ref().map(Registry::load).transpose()?;
    let input = cfg.input()?;
    let tensor = load_money_tensor(input, cfg.year, registry.as_ref())?;
    let reg = tensor.registry();
    info!(
        "loaded {} flows for {}: {} countries x {} products",
        tensor.len(),
        tensor.year(),
        reg.n_countries(),
        reg.n_products()
    );
    Ok(tensor)
}

fn country(reg: &Registry, code: &str) -> Result<usize, CliError> {
    reg.country_index(code)
        .ok_or_else(|| CliError::Usage(format!("unknown country code {code}")))
}

fn product(reg: &Registry, code: &str) -> Result<usize, CliError> {
    reg.product_index(code)
        .ok_or_else(|| CliError::Usage(format!("unknown product code {code}")))
}

/// All nodes without a group. With a group: the group countries times the
/// source product (every product with `--all-products` or no source product),
/// followed by the source node when both source codes are given.
fn selection(cfg: &RunConfig, reg: &Registry) -> Result<Selection, CliError> {
    if cfg.group.is_empty() {
        return Ok(Selection::all(reg.n_nodes()));
    }
    let group = cfg
        .group
        .iter()
        .map(|c| country(reg, c))
        .collect::<Result<Vec<_>, _>>()?;
    let source_product = cfg.source_product.as_deref().map(|p| product(reg, p)).transpose()?;
    let products: Vec<usize> = match source_product {
        Some(p) if !cfg.all_products => vec![p],
        _ => (0..reg.n_products()).collect(),
    };
    let extra = match (cfg.source_country.as_deref(), source_product) {
        (Some(c), Some(p)) => vec![reg.node_index(country(reg, c)?, p)],
        _ => Vec::new(),
    };
    Ok(Selection::country_products(reg, &group, &products, &extra)?)
}

fn reduce_pair(cfg: &RunConfig, tensor: &MoneyTensor) -> Result<(Selection, ReducedSet, ReducedSet), CliError> {
    let reg = tensor.registry();
    let sel = selection(cfg, reg)?;
    let pair = build_wtn_pair(tensor, cfg.alpha, solver(cfg))?;
    info!("reducing onto {} of {} nodes", sel.len(), sel.network_size());
    let run = |g: &GoogleMatrix| regomax::reduce(g, &sel, reduce_options(cfg));
    let direct = run(&pair.direct)?;
    let inverted = run(&pair.inverted)?;
    Ok((sel, direct, inverted))
}

fn wrote(path: &Path) {
    info!("wrote {}", path.display());
}

pub fn rank(cfg: &RunConfig, dump_matrix: bool) -> Result<(), CliError> {
    let tensor = load(cfg)?;
    let reg = tensor.registry();
    let pair = build_wtn_pair(&tensor, cfg.alpha, solver(cfg))?;
    let p = pagerank(&pair.direct, solver(cfg))?;
    let p_star = pagerank(&pair.inverted, solver(cfg))?;
    info!("PageRank: {} iterations, CheiRank: {} iterations", p.iterations, p_star.iterations);
    let hat = hat_ranks(&volumes(&tensor), reg)?;

    let local = cfg.source_product.as_deref().map(|c| product(reg, c)).transpose()?;
    let out = &cfg.out_dir;
    for (name, v) in [
        ("pagerank", p.probabilities()),
        ("cheirank", p_star.probabilities()),
        ("importrank", &hat.p[..]),
        ("exportrank", &hat.p_star[..]),
    ] {
        let path = out.join(format!("{name}_nodes.csv"));
        write_node_ranks(&path, v, reg)?;
        wrote(&path);
        let path = out.join(format!("{name}_countries.csv"));
        write_marginal(&path, "country", reg.countries(), &trace(v, Axis::Country, reg))?;
        wrote(&path);
        let path = out.join(format!("{name}_products.csv"));
        write_marginal(&path, "product", reg.products(), &trace(v, Axis::Product, reg))?;
        wrote(&path);
        if let Some(prod) = local {
            let path = out.join(format!("{name}_product_{}.csv", reg.product(prod)));
            write_marginal(&path, "country", reg.countries(), &restrict_to_product(v, prod, reg))?;
            wrote(&path);
        }
    }
    if dump_matrix {
        for g in [&pair.direct, &pair.inverted] {
            let name = g.direction().name();
            let triples = out.join(format!("google_{name}.csv"));
            let sidecar = out.join(format!("google_{name}.txt"));
            g.write_dump(&triples, &sidecar)?;
            wrote(&triples);
        }
    }
    Ok(())
}

pub fn reduce(cfg: &RunConfig) -> Result<(), CliError> {
    let tensor = load(cfg)?;
    let (sel, direct, inverted) = reduce_pair(cfg, &tensor)?;
    let labels = sel.labels(tensor.registry());
    for (prefix, set) in [("direct", &direct), ("inverted", &inverted)] {
        info!(
            "{prefix}: lambda_c={:e}, {} series terms, W_pr={:.6}, W_rr={:.6}, W_qr={:.6}",
            set.diagnostics.lambda_c,
            set.diagnostics.series_terms,
            set.weights.pr,
            set.weights.rr,
            set.weights.qr
        );
        set.write(&cfg.out_dir, prefix, &labels)?;
        info!("wrote {prefix}_* into {}", cfg.out_dir.display());
    }
    Ok(())
}

pub fn sensitivity(cfg: &RunConfig, global_price: bool) -> Result<(), CliError> {
    let tensor = load(cfg)?;
    let reg = tensor.registry();
    let (Some(src_c), Some(src_p)) = (cfg.source_country.as_deref(), cfg.source_product.as_deref()) else {
        return Err(CliError::Usage("--source-country and --source-product are required".into()));
    };
    if cfg.group.is_empty() {
        return Err(CliError::Usage("--group is required".into()));
    }
    let spec = ShockSpec::from_codes(reg, src_c, src_p, &cfg.group, cfg.delta).map_err(usage)?;
    let opts = SensitivityOptions {
        solver: solver(cfg),
        reduce: reduce_options(cfg),
    };
    let mut reports = vec![
        reduced_balance_sensitivity(&tensor, cfg.alpha, &spec, opts)?,
        hat_balance_sensitivity(&tensor, &spec)?,
    ];
    if global_price {
        reports.push(global_price_sensitivity(
            &tensor,
            cfg.alpha,
            spec.source_product,
            &spec.group,
            cfg.delta,
            solver(cfg),
        )?);
    }
    for report in reports {
        let path = cfg.out_dir.join(format!("sensitivity_{}.csv", report.method.name()));
        report.write_csv(&path)?;
        wrote(&path);
    }
    Ok(())
}

fn usage(e: regomax_core::Error) -> CliError {
    match e {
        regomax_core::Error::Argument(m) => CliError::Usage(m),
        e => CliError::Core(e),
    }
}

pub fn network(cfg: &RunConfig) -> Result<(), CliError> {
    let tensor = load(cfg)?;
    let (sel, direct, inverted) = reduce_pair(cfg, &tensor)?;
    let labels = sel.labels(tensor.registry());
    if sel.len() < 2 {
        return Err(CliError::Usage("network needs a selection of at least two nodes".into()));
    }
    let k = cfg.k.min(sel.len() - 1);
    if k < cfg.k {
        warn!("--k {} exceeds the {} partners available, using {k}", cfg.k, sel.len() - 1);
    }
    for (set, view) in [(&direct, View::Import), (&inverted, View::Export)] {
        let edges = top_links(&set.g_r, &labels, k, view)?;
        for format in [GraphFormat::Dot, GraphFormat::EdgeCsv] {
            let path = cfg
                .out_dir
                .join(format!("network_{}.{}", view.name(), format.extension()));
            serialize_graph(&edges, format, &path)?;
            wrote(&path);
        }
    }
    Ok(())
}

pub fn synth(
    cfg: &RunConfig,
    countries: usize,
    products: usize,
    density: f64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let tensor = synth_tensor(cfg.seed, countries, products, density).map_err(usage)?;
    let path = out.unwrap_or_else(|| cfg.out_dir.join("synth.csv"));
    tensor.write_csv(&path)?;
    wrote(&path);
    let registry = path.with_extension("registry");
    tensor.registry().write(&registry)?;
    wrote(&registry);
    Ok(())
}
