//! Position-dependent weight noise and its calibration against the mesh.
//!
//! Each active cell's contribution is scaled by `1 - η d`, where `d` is its
//! Manhattan distance after mapping. The coefficient `η` is fitted so that
//! the per-column current deficits predicted by this rule match the deficits
//! of the solved mesh.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::mdm_map;
use crate::bitslice::{dequantize, quantize};
use crate::circuit::measured_nf;
use crate::crossbar::{BitTile, MdmPlan, ResistanceParams, WeightMatrix};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// How the per-cell perturbation depends on placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseReading {
    /// Scale by `1 - η d` with `d` the cell's Manhattan distance.
    #[default]
    Distance,
    /// Scale every active cell by `1 - η`, independent of placement.
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub eta: f64,
    #[serde(default)]
    pub reading: NoiseReading,
}

impl NoiseModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::Model(format!("eta must be finite and >= 0, got {eta}")));
        }
        Ok(Self {
            eta,
            reading: NoiseReading::Distance,
        })
    }

    pub fn with_reading(self, reading: NoiseReading) -> Self {
        Self { reading, ..self }
    }

    fn factor(&self, distance: usize) -> f64 {
        match self.reading {
            NoiseReading::Distance => 1.0 - self.eta * distance as f64,
            NoiseReading::Indicator => 1.0 - self.eta,
        }
    }

    /// Checks that no cell of a `rows x cols` tile is driven negative.
    pub fn check(&self, rows: usize, cols: usize) -> Result<()> {
        let worst = match self.reading {
            NoiseReading::Distance => self.eta * (rows + cols - 2) as f64,
            NoiseReading::Indicator => self.eta,
        };
        if !(self.eta >= 0.0) || worst >= 1.0 {
            return Err(Error::Model(format!(
                "eta {} times the largest distance of a {rows}x{cols} tile reaches {worst}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Predicted deficit of each logical column for `η = 1`:
/// `Σ_j δ(j, c) (V_in / R_on) d(j, c)`.
pub fn unit_deficits(tile: &BitTile, params: &ResistanceParams) -> Vec<f64> {
    let g = tile.geometry();
    let per_unit = params.v_in / params.r_on;
    let mut out = vec![0.0; tile.cols()];
    for (j, c) in tile.active_cells() {
        out[c] += per_unit * (j + g.physical_col(c)) as f64;
    }
    out
}

/// Closed-form least squares `η = Σ a b / Σ a²`.
pub fn calibrate_eta_from_deficits(unit: &[f64], measured: &[f64]) -> Result<f64> {
    if unit.len() != measured.len() {
        return Err(Error::Calibration(format!(
            "{} predicted deficits against {} measured",
            unit.len(),
            measured.len()
        )));
    }
    let (ab, aa) = unit
        .iter()
        .zip(measured)
        .fold((0.0, 0.0), |(ab, aa), (a, b)| (ab + a * b, aa + a * a));
    if aa == 0.0 {
        return Err(Error::Calibration(
            "no active cell away from the rails; eta is unidentifiable".into(),
        ));
    }
    Ok(ab / aa)
}

/// Fits `η` to the column deficits of the solved meshes of `tiles`.
pub fn calibrate_eta(tiles: &[BitTile], params: &ResistanceParams) -> Result<NoiseModel> {
    params.validate()?;
    let columns = tiles
        .par_iter()
        .map(|tile| {
            let m = measured_nf(tile, params)?;
            let measured: Vec<f64> = m.deficit.iter().map(|d| d.abs()).collect();
            Ok((unit_deficits(tile, params), measured))
        })
        .collect::<Result<Vec<_>>>()?;
    let (unit, measured): (Vec<f64>, Vec<f64>) = columns
        .into_iter()
        .flat_map(|(a, b)| a.into_iter().zip(b))
        .unzip();
    NoiseModel::new(calibrate_eta_from_deficits(&unit, &measured)?.max(0.0))
}

/// Weights read back from a tile placed by `plan`, each active cell scaled
/// by the noise factor of its mapped position. Rows stay in logical order.
pub fn inject_noise(tile: &BitTile, plan: &MdmPlan, model: &NoiseModel, scale: f64) -> Result<WeightMatrix> {
    if plan.rows() != tile.rows() {
        return Err(Error::Geometry(format!(
            "plan covers {} rows but the tile has {}",
            plan.rows(),
            tile.rows()
        )));
    }
    model.check(tile.rows(), tile.cols())?;
    let placed = tile.geometry().with_dataflow(plan.dataflow());
    let mut out = WeightMatrix::zeros(tile.rows(), tile.weights_per_row());
    for (rho, c) in tile.active_cells() {
        let distance = plan.position(rho) + placed.physical_col(c);
        let g = tile.column_weight(c);
        let v = 2f64.powi(-tile.column_significance(c)) * model.factor(distance);
        out.set(rho, g, out.get(rho, g) + v);
    }
    if scale != 1.0 {
        for rho in 0..out.rows() {
            for g in 0..out.cols() {
                out.set(rho, g, out.get(rho, g) * scale);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub eta: f64,
    pub baseline_err: f64,
    pub mdm_err: f64,
    pub trials: usize,
    pub discarded: usize,
    pub per_trial: Vec<(f64, f64)>,
}

impl AccuracyReport {
    pub fn improved_or_tied_fraction(&self) -> f64 {
        if self.per_trial.is_empty() {
            return 0.0;
        }
        let hits = self.per_trial.iter().filter(|(b, m)| m <= b).count();
        hits as f64 / self.per_trial.len() as f64
    }
}

fn relative_error(noisy: &[f64], ideal: &[f64], ideal_norm: f64) -> f64 {
    let diff: f64 = noisy.iter().zip(ideal).map(|(a, b)| (a - b).powi(2)).sum();
    diff.sqrt() / ideal_norm
}

/// Matrix-vector error of the noisy crossbar under identity and MDM placement.
///
/// Inputs are uniform on `[0, 1)`, one stream per trial; trials whose ideal
/// output vanishes are discarded and counted.
pub fn accuracy_proxy(
    weights: &WeightMatrix,
    significances: &[i32],
    model: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<AccuracyReport> {
    if trials < 30 {
        return Err(Error::Data(format!("accuracy proxy needs at least 30 trials, got {trials}")));
    }
    let q = quantize(weights, significances)?;
    let tile = &q.tile;
    model.check(tile.rows(), tile.cols())?;
    let identity = MdmPlan::identity(tile.rows(), tile.dataflow());
    let (mdm, _) = mdm_map(tile);
    let ideal = dequantize(tile, q.scale);
    let base = inject_noise(tile, &identity, model, q.scale)?;
    let mapped = inject_noise(tile, &mdm, model, q.scale)?;

    let mut per_trial = Vec::with_capacity(trials);
    let mut discarded = 0;
    for t in 0..trials as u64 {
        let mut rng = stream_rng(seed, t);
        let x: Vec<f64> = (0..tile.rows()).map(|_| rng.gen::<f64>()).collect();
        let y = ideal.transpose_mul(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            discarded += 1;
            continue;
        }
        per_trial.push((
            relative_error(&base.transpose_mul(&x), &y, norm),
            relative_error(&mapped.transpose_mul(&x), &y, norm),
        ));
    }
    let kept = per_trial.len().max(1) as f64;
    Ok(AccuracyReport {
        eta: model.eta,
        baseline_err: per_trial.iter().map(|p| p.0).sum::<f64>() / kept,
        mdm_err: per_trial.iter().map(|p| p.1).sum::<f64>() / kept,
        trials,
        discarded,
        per_trial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub eta: f64,
    pub baseline_err: f64,
    pub mdm_err: f64,
}

pub fn accuracy_sweep(
    weights: &WeightMatrix,
    significances: &[i32],
    etas: &[f64],
    reading: NoiseReading,
    trials: usize,
    seed: u64,
) -> Result<Vec<AccuracyPoint>> {
    etas.iter()
        .map(|&eta| {
            let model = NoiseModel::new(eta)?.with_reading(reading);
            let r = accuracy_proxy(weights, significances, &model, trials, seed)?;
            Ok(AccuracyPoint {
                eta,
                baseline_err: r.baseline_err,
                mdm_err: r.mdm_err,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{CrossbarGeometry, Dataflow};

    #[test]
    fn zero_eta_is_exact_dequantization() {
        let tile = BitTile::from_rows(&[[1u8, 0, 1], [0, 1, 1]], Dataflow::Conventional).unwrap();
        let plan = MdmPlan::identity(2, Dataflow::Conventional);
        let noisy = inject_noise(&tile, &plan, &NoiseModel::new(0.0).unwrap(), 1.0).unwrap();
        assert_eq!(noisy, dequantize(&tile, 1.0));
    }

    #[test]
    fn rail_cell_is_unperturbed() {
        let tile = BitTile::from_rows(&[[1u8, 0], [0, 0]], Dataflow::Conventional).unwrap();
        let plan = MdmPlan::identity(2, Dataflow::Conventional);
        let noisy = inject_noise(&tile, &plan, &NoiseModel::new(0.01).unwrap(), 1.0).unwrap();
        assert_eq!(noisy.get(0, 0), 1.0);
    }

    #[test]
    fn distance_ten_half_bit() {
        // 2^-1 bit at physical (j, k) = (9, 1) on an 11-row, 2-column tile.
        let g = CrossbarGeometry::new(11, 2, Dataflow::Conventional).unwrap();
        let tile = BitTile::new(g, vec![0, 1], 1, {
            let mut a = vec![false; 22];
            a[9 * 2 + 1] = true;
            a
        })
        .unwrap();
        let plan = MdmPlan::identity(11, Dataflow::Conventional);
        let noisy = inject_noise(&tile, &plan, &NoiseModel::new(2e-3).unwrap(), 1.0).unwrap();
        assert!((noisy.get(9, 0) - 0.49).abs() < 1e-15);
    }

    #[test]
    fn placement_uses_the_plan() {
        let tile = BitTile::from_rows(&[[1u8, 0], [0, 0]], Dataflow::Conventional).unwrap();
        let plan = MdmPlan::new(vec![1, 0], Dataflow::Reversed, Dataflow::Conventional).unwrap();
        let model = NoiseModel::new(0.1).unwrap();
        let noisy = inject_noise(&tile, &plan, &model, 1.0).unwrap();
        // moved to row 1, physical column 1
        assert!((noisy.get(0, 0) - 0.8).abs() < 1e-15);
        let flat = inject_noise(&tile, &plan, &model.with_reading(NoiseReading::Indicator), 1.0).unwrap();
        assert!((flat.get(0, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn model_precondition() {
        let tile = BitTile::from_rows(&[[1u8, 1], [1, 1]], Dataflow::Conventional).unwrap();
        let plan = MdmPlan::identity(2, Dataflow::Conventional);
        assert!(matches!(
            inject_noise(&tile, &plan, &NoiseModel::new(0.5).unwrap(), 1.0),
            Err(Error::Model(_))
        ));
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn synthetic_calibration_recovers_eta() {
        let unit: Vec<f64> = (0..50).map(|i| 1e-6 * (i as f64 + 0.5).sqrt()).collect();
        let measured: Vec<f64> = unit.iter().map(|a| a * 1e-3).collect();
        let eta = calibrate_eta_from_deficits(&unit, &measured).unwrap();
        assert!((eta - 1e-3).abs() / 1e-3 < 1e-9);
    }

    #[test]
    fn calibration_needs_signal() {
        assert!(calibrate_eta_from_deficits(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(calibrate_eta_from_deficits(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_resistance_calibrates_to_zero() {
        let tiles = crate::experiments::random_tiles(10, 8, 8, 0.7, 2).unwrap();
        let p = ResistanceParams::default().with_r(0.0).unwrap();
        assert_eq!(calibrate_eta(&tiles, &p).unwrap().eta, 0.0);
    }

    #[test]
    fn zero_eta_proxy_has_no_error() {
        let w = WeightMatrix::new(4, 2, vec![0.1, 0.2, 0.3, 0.05, 0.0, 0.4, 0.25, 0.125]).unwrap();
        let r = accuracy_proxy(&w, &[0, 1, 2, 3, 4, 5], &NoiseModel::new(0.0).unwrap(), 30, 1).unwrap();
        assert_eq!(r.baseline_err, 0.0);
        assert_eq!(r.mdm_err, 0.0);
        assert!(accuracy_proxy(&w, &[0, 1], &NoiseModel::new(0.0).unwrap(), 5, 1).is_err());
    }

    #[test]
    fn zero_output_trials_are_discarded() {
        let w = WeightMatrix::zeros(3, 2);
        let r = accuracy_proxy(&w, &[0, 1, 2], &NoiseModel::new(0.01).unwrap(), 30, 1).unwrap();
        assert_eq!(r.discarded, 30);
        assert!(r.per_trial.is_empty());
    }
}
