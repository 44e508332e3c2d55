//! Google matrix analysis of multiproduct world trade.
//!
//! The pipeline goes from bilateral, per-product money flows to
//!
//! * direct and inverted Google matrices with volume based personalization
//!   ([`gmatrix`]),
//! * PageRank / CheiRank vectors and their country and product marginals
//!   ([`rank`]),
//! * the reduced Google matrix of a node subset together with its
//!   direct, projector and indirect components ([`regomax`]),
//! * trade balance sensitivities to a price shock on one exporter's
//!   product ([`sensitivity`]),
//! * top-k partner networks extracted from reduced matrices ([`netexport`]).
//!
//! Nodes are (country, product) pairs indexed as `country * n_products + product`
//! (zero based) everywhere in the library; files use one based ids.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gmatrix;
pub mod ingest;
pub mod netexport;
pub mod rank;
pub mod regomax;
pub mod sensitivity;

pub use error::{Error, Result};
pub use gmatrix::{
    assemble_google, build_stochastic, build_wtn_pair, personalization_rank,
    personalization_volume, Direction, GoogleMatrix, PersonalizationVector, StochasticMatrix,
    WtnPair, DEFAULT_ALPHA,
};
pub use ingest::{
    hat_ranks, load_money_tensor, synth_tensor, volumes, HatRankTable, MoneyTensor, Registry,
    VolumeTable,
};
pub use netexport::{serialize_graph, top_links, GraphFormat, TradeEdge, TradeEdgeList, View};
pub use rank::{order_indices, pagerank, trace, Axis, LinearOperator, RankIndex, RankVector, SolverOptions};
pub use regomax::{
    component_weight, reduce, reduce_dense_oracle, split_qr, ReduceOptions, ReducedSet, Selection,
};
pub use sensitivity::{
    balance, build_shock_matrices, global_price_sensitivity, hat_balance_sensitivity,
    reduced_balance_sensitivity, Method, SensitivityReport, ShockSpec,
};
