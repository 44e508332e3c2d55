//! Run configuration: command line flags over an optional `key = value` file
//! over built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;

use crate::CliError;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_SERIES_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Key-value configuration file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Trade CSV (`year,product,exporter,importer,value_usd`).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Registry file fixing country and product order.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Year to select from the input; required when the file holds several.
    #[arg(long, global = true)]
    pub year: Option<i32>,
    /// Damping factor in (0, 1].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// L1 residual tolerance for PageRank and CheiRank.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Tolerance for the resolvent series of the reduction.
    #[arg(long, global = true)]
    pub series_tol: Option<f64>,
    /// Comma separated ISO country codes of the group of interest.
    #[arg(long, global = true, value_delimiter = ',')]
    pub group: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub source_country: Option<String>,
    #[arg(long, global = true)]
    pub source_product: Option<String>,
    /// Price increment used for the finite differences.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Partners kept per node in extracted networks.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Select every product of the group countries instead of the source product only.
    #[arg(long, global = true)]
    pub all_products: bool,
}

/// Validated settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub year: Option<i32>,
    pub alpha: f64,
    pub tol: f64,
    pub series_tol: f64,
    pub group: Vec<String>,
    pub source_country: Option<String>,
    pub source_product: Option<String>,
    pub delta: f64,
    pub k: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub all_products: bool,
}

fn parse_file(path: &PathBuf) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

struct Layered {
    file: BTreeMap<String, String>,
}

impl Layered {
    fn get<T: FromStr>(&mut self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        let from_file = self.file.remove(key);
        match (flag, from_file) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(s)) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config: invalid value {s:?} for {key}"))),
            (None, None) => Ok(None),
        }
    }
}

impl RunConfig {
    pub fn resolve(args: CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => parse_file(p)?,
            None => BTreeMap::new(),
        };
        let mut l = Layered { file };
        let group: Option<String> = l.get(args.group.map(|g| g.join(",")), "group")?;
        let cfg = RunConfig {
            input: l.get(args.input, "input")?,
            registry: l.get(args.registry, "registry")?,
            year: l.get(args.year, "year")?,
            alpha: l.get(args.alpha, "alpha")?.unwrap_or(DEFAULT_ALPHA),
            tol: l.get(args.tol, "tol")?.unwrap_or(DEFAULT_TOL),
            series_tol: l.get(args.series_tol, "series-tol")?.unwrap_or(DEFAULT_SERIES_TOL),
            group: group
                .map(|g| {
                    g.split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                })
                .unwrap_or_default(),
            source_country: l.get(args.source_country, "source-country")?,
            source_product: l.get(args.source_product, "source-product")?,
            delta: l.get(args.delta, "delta")?.unwrap_or(DEFAULT_DELTA),
            k: l.get(args.k, "k")?.unwrap_or(DEFAULT_K),
            out_dir: l.get(args.out_dir, "out-dir")?.unwrap_or_else(|| PathBuf::from(".")),
            seed: l.get(args.seed, "seed")?.unwrap_or(1),
            all_products: args.all_products || l.get(None, "all-products")?.unwrap_or(false),
        };
        if let Some(key) = l.file.keys().next() {
            return Err(CliError::Usage(format!("config: unknown key {key:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CliError::Usage(format!("--alpha must be in (0, 1], got {}", self.alpha)));
        }
        if [self.tol, self.series_tol].iter().any(|t| t.is_nan() || *t <= 0.0) {
            return Err(CliError::Usage("tolerances must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Usage(format!("--delta must be in (0, 1), got {}", self.delta)));
        }
        if self.k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&PathBuf, CliError> {
        self.input
            .as_ref()
            .ok_or_else(|| CliError::Usage("--input is required".into()))
    }
}
