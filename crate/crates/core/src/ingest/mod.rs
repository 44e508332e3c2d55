//! Trade data: registry, money tensor, volume aggregates and the volume based
//! ImportRank / ExportRank baselines.

mod registry;
mod synth;
mod tensor;

pub use registry::Registry;
pub use synth::{synth_tensor, SYNTH_YEAR};
pub use tensor::{load_money_tensor, FlowKey, MoneyTensor, CSV_HEADER};

use crate::error::{Error, Result};
use crate::rank::{order_indices, trace, Axis, RankIndex};

/// Import and export volumes per node, country and product.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeTable {
    /// `V^p_c`: imports of product `p` by country `c`, indexed by node.
    pub import_vol: Vec<f64>,
    /// `V*^p_c`: exports of product `p` by country `c`, indexed by node.
    pub export_vol: Vec<f64>,
    pub country_import: Vec<f64>,
    pub country_export: Vec<f64>,
    pub product_import: Vec<f64>,
    pub product_export: Vec<f64>,
    pub total: f64,
}

pub fn volumes(tensor: &MoneyTensor) -> VolumeTable {
    let reg = tensor.registry();
    let n = reg.n_nodes();
    let mut import_vol = vec![0.0; n];
    let mut export_vol = vec![0.0; n];
    for (k, v) in tensor.entries() {
        import_vol[reg.node_index(k.importer, k.product)] += v;
        export_vol[reg.node_index(k.exporter, k.product)] += v;
    }
    let sum_by = |vol: &[f64], axis: Axis| {
        let mut out = vec![0.0; axis.len(reg)];
        for (i, v) in vol.iter().enumerate() {
            out[axis.coordinate(reg, i)] += v;
        }
        out
    };
    VolumeTable {
        country_import: sum_by(&import_vol, Axis::Country),
        country_export: sum_by(&export_vol, Axis::Country),
        product_import: sum_by(&import_vol, Axis::Product),
        product_export: sum_by(&export_vol, Axis::Product),
        total: import_vol.iter().sum(),
        import_vol,
        export_vol,
    }
}

/// ImportRank (`p`) and ExportRank (`p_star`) probabilities with their
/// country and product marginals and rank orderings.
#[derive(Debug, Clone)]
pub struct HatRankTable {
    pub p: Vec<f64>,
    pub p_star: Vec<f64>,
    pub country: Vec<f64>,
    pub country_star: Vec<f64>,
    pub product: Vec<f64>,
    pub product_star: Vec<f64>,
    pub k: RankIndex,
    pub k_star: RankIndex,
    pub k_country: RankIndex,
    pub k_country_star: RankIndex,
    pub k_product: RankIndex,
    pub k_product_star: RankIndex,
}

pub fn hat_ranks(volumes: &VolumeTable, registry: &Registry) -> Result<HatRankTable> {
    let total = volumes.total;
    if !(total > 0.0) {
        return Err(Error::Domain("total trade volume is zero".into()));
    }
    let p: Vec<f64> = volumes.import_vol.iter().map(|v| v / total).collect();
    let p_star: Vec<f64> = volumes.export_vol.iter().map(|v| v / total).collect();
    let country = trace(&p, Axis::Country, registry);
    let country_star = trace(&p_star, Axis::Country, registry);
    let product = trace(&p, Axis::Product, registry);
    let product_star = trace(&p_star, Axis::Product, registry);
    Ok(HatRankTable {
        k: order_indices(&p),
        k_star: order_indices(&p_star),
        k_country: order_indices(&country),
        k_country_star: order_indices(&country_star),
        k_product: order_indices(&product),
        k_product_star: order_indices(&product_star),
        p,
        p_star,
        country,
        country_star,
        product,
        product_star,
    })
}

/// Country balance from volumes alone: `(V*_c - V_c) / (V*_c + V_c)`.
pub(crate) fn country_volumes(tensor: &MoneyTensor) -> (Vec<f64>, Vec<f64>) {
    let vol = volumes(tensor);
    (vol.country_export, vol.country_import)
}
