//! Estimating daily milk yield from a single (AM or PM) milking.
//!
//! The crate covers the whole pipeline: simulating herds from per-cow
//! milking curves ([`sim`]), binning milking intervals ([`grid`]), fitting
//! the eleven estimators M1 to M7B ([`models`]), deriving additive and
//! multiplicative correction-factor tables ([`factors`]) and scoring the
//! estimators on replicated train/test splits ([`bench`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `F32` variants for the narrower type.

// `!(x > 0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod error;
pub mod factors;
pub mod grid;
pub mod io;
pub mod lsq;
pub mod models;
pub mod moments;
pub mod record;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use models::{fit_model, fit_model_with, predict_daily, FitOptions, ModelId, PredictMode, Predictor};
pub use record::{PartialObservation, Provenance, Session};
pub use scalar::Scalar;
pub use sim::{simulate_herd, CurveForm, SimConfig};

pub type Record = record::MilkingRecord<f64>;
pub type Dataset = record::MilkingDataset<f64>;
pub type Observation = record::PartialObservation<f64>;
pub type Grid = grid::IntervalGrid<f64>;
pub type Moments = moments::BinMoments<f64>;
pub type Model = models::FittedModel<f64>;
pub type Factors = factors::FactorTable<f64>;
pub type Report = bench::BenchmarkReport<f64>;
pub type Metrics = bench::Metrics<f64>;

pub type RecordF32 = record::MilkingRecord<f32>;
pub type DatasetF32 = record::MilkingDataset<f32>;
pub type GridF32 = grid::IntervalGrid<f32>;
pub type ModelF32 = models::FittedModel<f32>;
pub type FactorsF32 = factors::FactorTable<f32>;
pub type ReportF32 = bench::BenchmarkReport<f32>;
