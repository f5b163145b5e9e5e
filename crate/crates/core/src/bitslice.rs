//! Bit-sliced quantization and column-density statistics.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{BitTile, CrossbarGeometry, Dataflow, WeightMatrix};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// A weight matrix mapped onto a tile, with the factor that undoes normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTile {
    pub tile: BitTile,
    pub scale: f64,
}

/// Power-of-two factor that brings `max_abs` strictly below `2^(1 - e0)`.
fn normalization_scale(max_abs: f64, e0: i32) -> f64 {
    let limit = 2f64.powi(1 - e0);
    let mut scale = 1.0;
    while max_abs / scale >= limit {
        scale *= 2.0;
    }
    scale
}

/// Greedy binary expansion of `magnitude` over the given significances,
/// truncating toward zero. Returns the bits, highest order first.
pub fn expand_bits(magnitude: f64, significances: &[i32]) -> Vec<bool> {
    let mut residual = magnitude;
    significances
        .iter()
        .map(|&e| {
            let step = 2f64.powi(-e);
            if residual >= step {
                residual -= step;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Quantizes the magnitudes of `weights` into a bit-sliced tile.
///
/// Row `i` of the matrix becomes tile row `i`; each of its weights occupies one
/// column per significance, bit-plane major. Magnitudes are divided by the
/// smallest power of two that fits them under `2^(1 - e0)` (1 when they
/// already fit) and that factor is returned as `scale`. With contiguous
/// significances the truncation residual stays below `scale * 2^-e_last`.
pub fn quantize(weights: &WeightMatrix, significances: &[i32]) -> Result<QuantizedTile> {
    if significances.is_empty() {
        return Err(Error::Data("at least one significance is required".into()));
    }
    if weights.rows() == 0 || weights.cols() == 0 {
        return Err(Error::Data("weight matrix is empty".into()));
    }
    if let Some(i) = weights.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite weight at index {i}")));
    }
    let bits = significances.len();
    let groups = weights.cols();
    let geometry = CrossbarGeometry::new(weights.rows(), groups * bits, Dataflow::Conventional)?;
    let scale = normalization_scale(weights.max_abs(), significances[0]);

    let cols = geometry.cols();
    let mut active = vec![false; weights.rows() * cols];
    for i in 0..weights.rows() {
        for g in 0..groups {
            let expansion = expand_bits(weights.get(i, g).abs() / scale, significances);
            for (b, bit) in expansion.into_iter().enumerate() {
                active[i * cols + b * groups + g] = bit;
            }
        }
    }
    let tile = BitTile::new(geometry, significances.to_vec(), groups, active)?;
    Ok(QuantizedTile { tile, scale })
}

/// Reconstructs weight magnitudes from a tile: `w = scale * Σ_b bit * 2^-e_b`.
pub fn dequantize(tile: &BitTile, scale: f64) -> WeightMatrix {
    let groups = tile.weights_per_row();
    let mut out = WeightMatrix::zeros(tile.rows(), groups);
    for (j, c) in tile.active_cells() {
        let g = tile.column_weight(c);
        let v = out.get(j, g) + 2f64.powi(-tile.column_significance(c));
        out.set(j, g, v);
    }
    if scale != 1.0 {
        for j in 0..tile.rows() {
            for g in 0..groups {
                out.set(j, g, out.get(j, g) * scale);
            }
        }
    }
    out
}

/// Fraction of active cells in each logical column.
pub fn column_density(tile: &BitTile) -> Vec<f64> {
    let mut counts = vec![0usize; tile.cols()];
    for (_, c) in tile.active_cells() {
        counts[c] += 1;
    }
    let rows = tile.rows() as f64;
    counts.into_iter().map(|n| n as f64 / rows).collect()
}

/// Nonnegative weight-magnitude distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Exponential { lambda: f64 },
    HalfNormal { sigma: f64 },
    Empirical { samples: Vec<f64> },
}

impl WeightDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightDistribution::Exponential { lambda } if !(*lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::Data(format!("exponential rate must be positive, got {lambda}")))
            }
            WeightDistribution::HalfNormal { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::Data(format!("half-normal scale must be positive, got {sigma}")))
            }
            WeightDistribution::Empirical { samples } => {
                if samples.is_empty() {
                    Err(Error::Data("empirical distribution has no samples".into()))
                } else if samples.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    Err(Error::Data("empirical samples must be finite and nonnegative".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Density at zero, `f(0)`. Only defined for the analytic families.
    pub fn density_at_zero(&self) -> Result<f64> {
        match self {
            WeightDistribution::Exponential { lambda } => Ok(*lambda),
            WeightDistribution::HalfNormal { sigma } => {
                Ok((2.0 / std::f64::consts::PI).sqrt() / sigma)
            }
            WeightDistribution::Empirical { .. } => Err(Error::Unsupported(
                "an empirical distribution has no verifiable density".into(),
            )),
        }
    }

    pub fn sampler(&self) -> Result<Sampler<'_>> {
        self.validate()?;
        Ok(match self {
            WeightDistribution::Exponential { lambda } => {
                Sampler::Exponential(Exp::new(*lambda).expect("validated rate"))
            }
            WeightDistribution::HalfNormal { sigma } => {
                Sampler::HalfNormal(Normal::new(0.0, *sigma).expect("validated scale"))
            }
            WeightDistribution::Empirical { samples } => Sampler::Empirical(samples),
        })
    }
}

pub enum Sampler<'a> {
    Exponential(Exp<f64>),
    HalfNormal(Normal<f64>),
    Empirical(&'a [f64]),
}

impl Sampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exponential(d) => d.sample(rng),
            Sampler::HalfNormal(d) => d.sample(rng).abs(),
            Sampler::Empirical(s) => s[rng.gen_range(0..s.len())],
        }
    }
}

/// Interval-partition bit indicator with period `L = 2^-k`: one on the upper
/// half of every period, i.e. the `2^-(k+1)` digit of `w`.
#[inline]
pub fn fractional_bit(w: f64, k: u32) -> bool {
    let scaled = (w * 2f64.powi(k as i32 + 1)).floor();
    scaled % 2.0 == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityColumn {
    pub k: u32,
    pub p_hat: f64,
    pub bound: f64,
    /// Binomial standard error of `p_hat`.
    pub sigma: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub distribution: WeightDistribution,
    pub n: u64,
    pub f0: f64,
    pub columns: Vec<SparsityColumn>,
}

impl SparsityReport {
    pub fn all_ok(&self) -> bool {
        self.columns.iter().all(|c| c.ok)
    }
}

const CHUNK: u64 = 1 << 14;

/// Samples `n` weights and checks `|p_k - 1/2| <= f(0) / 2^(2+k)` and
/// `p_k < 1/2` for `k = 0..bits`, each with a 3-sigma binomial allowance.
pub fn verify_theorem1(
    dist: &WeightDistribution,
    n: u64,
    bits: u32,
    seed: u64,
) -> Result<SparsityReport> {
    let f0 = dist.density_at_zero()?;
    if n < 10_000 {
        return Err(Error::Data(format!("need at least 10^4 samples, got {n}")));
    }
    let sampler = dist.sampler()?;
    let chunks = n.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream_rng(seed, chunk);
            let len = CHUNK.min(n - chunk * CHUNK);
            let mut counts = vec![0u64; bits as usize];
            for _ in 0..len {
                let w = sampler.sample(&mut rng);
                for (k, count) in counts.iter_mut().enumerate() {
                    *count += fractional_bit(w, k as u32) as u64;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; bits as usize],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let columns = counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let p_hat = count as f64 / n as f64;
            let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
            let bound = f0 / 2f64.powi(2 + k as i32);
            let ok = (p_hat - 0.5).abs() <= bound + 3.0 * sigma && p_hat < 0.5 + 3.0 * sigma;
            SparsityColumn {
                k: k as u32,
                p_hat,
                bound,
                sigma,
                ok,
            }
        })
        .collect();

    Ok(SparsityReport {
        distribution: dist.clone(),
        n,
        f0,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> WeightMatrix {
        WeightMatrix::new(1, 1, vec![w]).unwrap()
    }

    fn bits(q: &QuantizedTile) -> Vec<bool> {
        q.tile.row(0).to_vec()
    }

    #[test]
    fn exact_expansion() {
        let q = quantize(&single(0.625), &[1, 2, 3]).unwrap();
        assert_eq!(bits(&q), vec![true, false, true]);
        assert_eq!(q.scale, 1.0);
        assert_eq!(dequantize(&q.tile, q.scale).get(0, 0), 0.625);
    }

    #[test]
    fn zero_weight_has_no_bits() {
        let q = quantize(&single(0.0), &[1, 2, 3]).unwrap();
        assert_eq!(q.tile.active_count(), 0);
        assert_eq!(dequantize(&q.tile, q.scale).get(0, 0), 0.0);
    }

    #[test]
    fn truncation_residual() {
        let q = quantize(&single(0.9), &[1, 2, 3]).unwrap();
        assert_eq!(bits(&q), vec![true, true, true]);
        let w = dequantize(&q.tile, q.scale).get(0, 0);
        assert_eq!(w, 0.875);
        assert!((0.9 - w - 0.025).abs() < 1e-12);
        assert!(0.9 - w < 0.125);
    }

    #[test]
    fn oversized_weights_are_scaled_by_powers_of_two() {
        let m = WeightMatrix::new(1, 2, vec![3.0, -0.5]).unwrap();
        let q = quantize(&m, &[1, 2, 3, 4]).unwrap();
        assert_eq!(q.scale, 4.0);
        let back = dequantize(&q.tile, q.scale);
        assert_eq!(back.get(0, 0), 3.0);
        assert_eq!(back.get(0, 1), 0.5);
    }

    #[test]
    fn columns_are_bit_plane_major() {
        let m = WeightMatrix::new(1, 2, vec![0.5, 0.25]).unwrap();
        let q = quantize(&m, &[1, 2]).unwrap();
        // plane 2^-1: [w0, w1], plane 2^-2: [w0, w1]
        assert_eq!(q.tile.row(0), &[true, false, false, true]);
    }

    #[test]
    fn non_finite_rejected() {
        let m = WeightMatrix::zeros(1, 1);
        assert!(quantize(&m, &[]).is_err());
        // WeightMatrix::new already refuses NaN, so there is no way to build one here.
        assert!(WeightMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn density_extremes() {
        let full = BitTile::from_rows(&[[1u8, 1, 1], [1, 1, 1]], Dataflow::Conventional).unwrap();
        assert_eq!(column_density(&full), vec![1.0; 3]);
        let empty = BitTile::from_rows(&[[0u8, 0, 0], [0, 0, 0]], Dataflow::Conventional).unwrap();
        assert_eq!(column_density(&empty), vec![0.0; 3]);
        let mixed = BitTile::from_rows(&[[1u8, 0, 1], [0, 0, 1]], Dataflow::Conventional).unwrap();
        assert_eq!(column_density(&mixed), vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn fractional_bit_partition() {
        assert!(!fractional_bit(0.49, 0));
        assert!(fractional_bit(0.5, 0));
        assert!(fractional_bit(1.7, 0));
        assert!(!fractional_bit(2.2, 0));
        // k = 1 has period 1/2, set on [1/4, 1/2)
        assert!(fractional_bit(0.3, 1));
        assert!(!fractional_bit(0.55, 1));
    }

    #[test]
    fn density_at_zero() {
        let hn = WeightDistribution::HalfNormal { sigma: 1.0 };
        assert!((hn.density_at_zero().unwrap() - 0.797_884_560_802_865_4).abs() < 1e-12);
        assert_eq!(WeightDistribution::Exponential { lambda: 2.0 }.density_at_zero().unwrap(), 2.0);
    }

    #[test]
    fn empirical_is_unsupported() {
        let d = WeightDistribution::Empirical { samples: vec![0.1, 0.2] };
        assert!(matches!(verify_theorem1(&d, 100_000, 4, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn too_few_samples() {
        let d = WeightDistribution::Exponential { lambda: 1.0 };
        assert!(verify_theorem1(&d, 100, 4, 1).is_err());
    }

    #[test]
    fn report_is_seed_deterministic() {
        let d = WeightDistribution::HalfNormal { sigma: 0.5 };
        let a = verify_theorem1(&d, 50_000, 6, 11).unwrap();
        let b = verify_theorem1(&d, 50_000, 6, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.all_ok());
        let bounds: Vec<f64> = a.columns.iter().map(|c| c.bound).collect();
        for w in bounds.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        }
    }
}
