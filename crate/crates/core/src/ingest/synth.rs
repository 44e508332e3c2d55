use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::registry::Registry;
use super::tensor::MoneyTensor;
use crate::error::{Error, Result};

pub const SYNTH_YEAR: i32 = 2016;

fn country_code(i: usize) -> String {
    let hi = (b'A' + (i / 26) as u8) as char;
    let lo = (b'A' + (i % 26) as u8) as char;
    format!("{hi}{lo}")
}

/// Deterministic random trade tensor for tests and fixtures.
///
/// Each off-diagonal flow is present with probability `density` and carries a
/// log-uniform value in `[1e3, 1e9)` USD. When `density < 1` one
/// (country, product) pair has all of its exports removed, so the dangling
/// column rule is exercised.
pub fn synth_tensor(seed: u64, n_countries: usize, n_products: usize, density: f64) -> Result<MoneyTensor> {
    if !(2..=26 * 26).contains(&n_countries) {
        return Err(Error::Argument(format!(
            "n_countries must be in 2..=676, got {n_countries}"
        )));
    }
    if !(1..=100).contains(&n_products) {
        return Err(Error::Argument(format!(
            "n_products must be in 1..=100, got {n_products}"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Argument(format!("density must be in (0, 1], got {density}")));
    }

    let registry = Registry::new(
        (0..n_countries).map(country_code).collect(),
        (0..n_products).map(|p| format!("{p:02}")).collect(),
    )?;
    let mut tensor = MoneyTensor::new(SYNTH_YEAR, registry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for p in 0..n_products {
        for importer in 0..n_countries {
            for exporter in 0..n_countries {
                if importer == exporter {
                    continue;
                }
                let present = density >= 1.0 || rng.random::<f64>() < density;
                if present {
                    let value = 10f64.powf(rng.random_range(3.0..9.0));
                    tensor.add(p, importer, exporter, value)?;
                }
            }
        }
    }

    if density < 1.0 {
        let c = rng.random_range(0..n_countries);
        let p = rng.random_range(0..n_products);
        tensor.remove_where(|k| k.exporter == c && k.product == p);
    }
    Ok(tensor)
}
