use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered country and product code lists fixing the node numbering.
///
/// Node `i` corresponds to `(country, product)` with
/// `i = country * n_products + product`, all indices zero based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    countries: Vec<String>,
    products: Vec<String>,
    country_ix: HashMap<String, usize>,
    product_ix: HashMap<String, usize>,
}

pub(crate) fn is_code(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_alphanumeric())
}

fn index_codes(kind: &str, codes: &[String]) -> Result<HashMap<String, usize>> {
    if codes.is_empty() {
        return Err(Error::Validation(format!("registry has no {kind}")));
    }
    let mut map = HashMap::with_capacity(codes.len());
    for (i, code) in codes.iter().enumerate() {
        if !is_code(code) {
            return Err(Error::Validation(format!(
                "invalid {kind} code {code:?}: expected two alphanumeric characters"
            )));
        }
        if map.insert(code.clone(), i).is_some() {
            return Err(Error::Validation(format!("duplicate {kind} code {code}")));
        }
    }
    Ok(map)
}

impl Registry {
    /// Registry with the given explicit order.
    pub fn new(countries: Vec<String>, products: Vec<String>) -> Result<Self> {
        let country_ix = index_codes("countries", &countries)?;
        let product_ix = index_codes("products", &products)?;
        Ok(Registry {
            countries,
            products,
            country_ix,
            product_ix,
        })
    }

    /// Registry with codes deduplicated and sorted lexicographically.
    pub fn sorted<C, P>(countries: C, products: P) -> Result<Self>
    where
        C: IntoIterator,
        C::Item: Into<String>,
        P: IntoIterator,
        P::Item: Into<String>,
    {
        let mut c: Vec<String> = countries.into_iter().map(Into::into).collect();
        let mut p: Vec<String> = products.into_iter().map(Into::into).collect();
        c.sort();
        c.dedup();
        p.sort();
        p.dedup();
        Registry::new(c, p)
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.countries.len() * self.products.len()
    }

    #[inline]
    pub fn node_index(&self, country: usize, product: usize) -> usize {
        debug_assert!(country < self.n_countries() && product < self.n_products());
        country * self.products.len() + product
    }

    /// Inverse of [`Registry::node_index`].
    #[inline]
    pub fn node_of(&self, node: usize) -> (usize, usize) {
        (node / self.products.len(), node % self.products.len())
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.country_ix.get(code).copied()
    }

    pub fn product_index(&self, code: &str) -> Option<usize> {
        self.product_ix.get(code).copied()
    }

    pub fn country(&self, c: usize) -> &str {
        &self.countries[c]
    }

    pub fn product(&self, p: usize) -> &str {
        &self.products[p]
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn products(&self) -> &[String] {
        &self.products
    }

    /// `country:product` label used in exported matrices and graphs.
    pub fn node_label(&self, node: usize) -> String {
        let (c, p) = self.node_of(node);
        format!("{}:{}", self.countries[c], self.products[p])
    }

    /// Reads a registry file: a `[countries]` section and a `[products]`
    /// section, one code per line. Blank lines and `#` comments are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        enum Section {
            None,
            Countries,
            Products,
        }
        let mut section = Section::None;
        let mut countries = Vec::new();
        let mut products = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno as u64 + 1,
                message,
            };
            match line.to_ascii_lowercase().as_str() {
                "[countries]" => section = Section::Countries,
                "[products]" => section = Section::Products,
                _ => match section {
                    Section::Countries => countries.push(line.to_string()),
                    Section::Products => products.push(line.to_string()),
                    Section::None => {
                        return Err(parse_err(format!(
                            "code {line:?} outside of a [countries] or [products] section"
                        )))
                    }
                },
            }
        }
        Registry::new(countries, products)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("[countries]\n");
        for c in &self.countries {
            let _ = writeln!(out, "{c}");
        }
        out.push_str("[products]\n");
        for p in &self.products {
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}
