use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use super::registry::{is_code, Registry};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["year", "product", "exporter", "importer", "value_usd"];

/// Key of one bilateral flow: `product` shipped from `exporter` to `importer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub product: usize,
    pub importer: usize,
    pub exporter: usize,
}

/// Per-product money matrices for one year, in USD.
///
/// Only strictly off-diagonal flows are stored; self trade never enters.
#[derive(Debug, Clone, PartialEq)]
pub struct MoneyTensor {
    year: i32,
    registry: Registry,
    entries: BTreeMap<FlowKey, f64>,
}

impl MoneyTensor {
    pub fn new(year: i32, registry: Registry) -> Self {
        MoneyTensor {
            year,
            registry,
            entries: BTreeMap::new(),
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Adds `value` to the flow of `product` from `exporter` to `importer`.
    ///
    /// Self trade is dropped with a warning. Returns an error for negative or
    /// non-finite values and out-of-range indices.
    pub fn add(&mut self, product: usize, importer: usize, exporter: usize, value: f64) -> Result<()> {
        let reg = &self.registry;
        if product >= reg.n_products() || importer >= reg.n_countries() || exporter >= reg.n_countries() {
            return Err(Error::Validation(format!(
                "flow index out of range: product {product}, importer {importer}, exporter {exporter}"
            )));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Validation(format!("invalid flow value {value}")));
        }
        if importer == exporter {
            warn!(
                "dropping self trade of {} for product {}",
                reg.country(importer),
                reg.product(product)
            );
            return Ok(());
        }
        *self
            .entries
            .entry(FlowKey {
                product,
                importer,
                exporter,
            })
            .or_insert(0.0) += value;
        Ok(())
    }

    pub fn get(&self, product: usize, importer: usize, exporter: usize) -> f64 {
        self.entries
            .get(&FlowKey {
                product,
                importer,
                exporter,
            })
            .copied()
            .unwrap_or(0.0)
    }

    /// Stored flows in `(product, importer, exporter)` order.
    pub fn entries(&self) -> impl Iterator<Item = (FlowKey, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn remove_where(&mut self, mut pred: impl FnMut(&FlowKey) -> bool) {
        self.entries.retain(|k, _| !pred(k));
    }

    /// Copy with every flow multiplied by `factor(key)`.
    pub fn scaled(&self, mut factor: impl FnMut(&FlowKey) -> f64) -> MoneyTensor {
        MoneyTensor {
            year: self.year,
            registry: self.registry.clone(),
            entries: self.entries.iter().map(|(k, v)| (*k, v * factor(k))).collect(),
        }
    }

    /// Writes the tensor in the input CSV format. Reading it back with the
    /// same registry reproduces the tensor exactly.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let reg = &self.registry;
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "{}", CSV_HEADER.join(","))?;
            for (k, v) in &self.entries {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    self.year,
                    reg.product(k.product),
                    reg.country(k.exporter),
                    reg.country(k.importer),
                    v
                )?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

struct Record {
    line: u64,
    product: String,
    exporter: String,
    importer: String,
    value: f64,
}

/// Loads trade records into a [`MoneyTensor`].
///
/// With `year = None` the file must contain a single year. Without an explicit
/// registry the country and product lists are the sorted union of codes seen.
/// Duplicate flows are summed.
pub fn load_money_tensor(
    path: impl AsRef<Path>,
    year: Option<i32>,
    registry: Option<&Registry>,
) -> Result<MoneyTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            kind => parse_err(line, format!("{kind:?}")),
        }
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(parse_err(
            1,
            format!("expected header `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut seen_year: Option<i32> = None;
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != CSV_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", CSV_HEADER.len(), rec.len()),
            ));
        }
        let rec_year: i32 = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid year {:?}", &rec[0])))?;
        match year {
            Some(y) if y != rec_year => continue,
            Some(_) => {}
            None => match seen_year {
                None => seen_year = Some(rec_year),
                Some(y) if y != rec_year => {
                    return Err(Error::Validation(format!(
                        "{}: records for several years ({y}, {rec_year}); select one",
                        path.display()
                    )))
                }
                Some(_) => {}
            },
        }
        for (col, name) in [(1, "product"), (2, "exporter"), (3, "importer")] {
            if !is_code(&rec[col]) {
                return Err(parse_err(line, format!("invalid {name} code {:?}", &rec[col])));
            }
        }
        let value: f64 = rec[4]
            .parse()
            .map_err(|_| parse_err(line, format!("non-numeric value {:?}", &rec[4])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(parse_err(line, format!("negative or non-finite value {value}")));
        }
        records.push(Record {
            line,
            product: rec[1].to_string(),
            exporter: rec[2].to_string(),
            importer: rec[3].to_string(),
            value,
        });
    }

    if records.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    let year = year.or(seen_year).expect("records imply a year");

    let registry = match registry {
        Some(r) => r.clone(),
        None => Registry::sorted(
            records
                .iter()
                .flat_map(|r| [r.exporter.clone(), r.importer.clone()]),
            records.iter().map(|r| r.product.clone()),
        )?,
    };

    let mut tensor = MoneyTensor::new(year, registry);
    for r in records {
        let reg = tensor.registry();
        let lookup = |code: &str, idx: Option<usize>, kind: &str| {
            idx.ok_or_else(|| {
                Error::Validation(format!(
                    "{}:{}: unknown {kind} code {code}",
                    path.display(),
                    r.line
                ))
            })
        };
        let p = lookup(&r.product, reg.product_index(&r.product), "product")?;
        let e = lookup(&r.exporter, reg.country_index(&r.exporter), "country")?;
        let i = lookup(&r.importer, reg.country_index(&r.importer), "country")?;
        tensor.add(p, i, e, r.value)?;
    }
    Ok(tensor)
}
