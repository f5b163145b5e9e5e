//! Seeded experiment drivers: hypothesis fit, mapping benchmark, noise model.
//!
//! Tile `i` of an experiment seeded with `s` is always drawn from stream
//! `(s, i)`, and per-tile results are gathered in index order before any
//! reduction, so outputs do not depend on the rayon thread count.

mod benchmark;
mod fit;
mod noise;

pub use benchmark::{nf_benchmark, BenchmarkConfig, BenchmarkOutcome, BenchmarkRow};
pub use fit::{hypothesis_fit, least_squares_fit, FitConfig, FitOutcome, FitPoint, FitReport};
pub use noise::{
    accuracy_proxy, accuracy_sweep, calibrate_eta, calibrate_eta_from_deficits, inject_noise,
    unit_deficits, AccuracyPoint, AccuracyReport, NoiseModel, NoiseReading,
};

use rand::Rng;
use rayon::prelude::*;

use crate::bitslice::{quantize, QuantizedTile, WeightDistribution};
use crate::crossbar::{default_significances, BitTile, CrossbarGeometry, Dataflow, WeightMatrix};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Standard deviation of the half-normal weight magnitudes used for
/// DNN-like tiles: trained layers sit well inside the `[0, 1)` fixed-point
/// range, so their high-order planes are nearly empty.
pub const DNN_WEIGHT_SIGMA: f64 = 0.05;
pub const DNN_BITS: usize = 8;

/// Tile whose cells are independently active with probability `1 - sparsity`.
pub fn gen_random_tile<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    sparsity: f64,
    rng: &mut R,
) -> Result<BitTile> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::Data(format!("sparsity must lie in [0, 1], got {sparsity}")));
    }
    let geometry = CrossbarGeometry::new(rows, cols, Dataflow::Conventional)?;
    let density = 1.0 - sparsity;
    let active = (0..rows * cols).map(|_| rng.gen::<f64>() < density).collect();
    BitTile::new(geometry, default_significances(cols), 1, active)
}

/// Random weight matrix with `rows x weights_per_row` magnitudes drawn from `dist`.
pub fn sample_weights<R: Rng + ?Sized>(
    dist: &WeightDistribution,
    rows: usize,
    weights_per_row: usize,
    rng: &mut R,
) -> Result<WeightMatrix> {
    let sampler = dist.sampler()?;
    let values = (0..rows * weights_per_row).map(|_| sampler.sample(rng)).collect();
    WeightMatrix::new(rows, weights_per_row, values)
}

/// Quantized tile of weights drawn from `dist`: `cols / bits` weights per row,
/// significances `0..bits`.
pub fn gen_dnn_like_tile<R: Rng + ?Sized>(
    dist: &WeightDistribution,
    rows: usize,
    cols: usize,
    bits: usize,
    rng: &mut R,
) -> Result<QuantizedTile> {
    if bits == 0 || !cols.is_multiple_of(bits) {
        return Err(Error::Geometry(format!(
            "{cols} columns cannot hold whole {bits}-bit weights"
        )));
    }
    let weights = sample_weights(dist, rows, cols / bits, rng)?;
    quantize(&weights, &default_significances(bits))
}

pub fn random_tiles(n: usize, rows: usize, cols: usize, sparsity: f64, seed: u64) -> Result<Vec<BitTile>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| gen_random_tile(rows, cols, sparsity, &mut stream_rng(seed, i)))
        .collect()
}

pub fn dnn_tiles(
    dist: &WeightDistribution,
    n: usize,
    rows: usize,
    cols: usize,
    bits: usize,
    seed: u64,
) -> Result<Vec<BitTile>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| gen_dnn_like_tile(dist, rows, cols, bits, &mut stream_rng(seed, i)).map(|q| q.tile))
        .collect()
}
