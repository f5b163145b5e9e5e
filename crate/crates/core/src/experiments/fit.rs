use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::analytic_nf;
use crate::circuit::measured_nf;
use crate::crossbar::ResistanceParams;
use crate::error::{Error, Result};
use crate::experiments::random_tiles;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub predicted_nf: f64,
    pub measured_nf: f64,
}

/// Ordinary least squares `measured ≈ slope * predicted + intercept`, with
/// residuals expressed relative to the measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub residual_mean_pct: f64,
    pub residual_std_pct: f64,
    pub r_squared: f64,
    pub n_tiles: usize,
}

pub fn least_squares_fit(points: &[FitPoint]) -> Result<FitReport> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Fit(format!("need at least two points, got {n}")));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.predicted_nf).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.measured_nf).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.predicted_nf - mean_x;
        let dy = p.measured_nf - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (slope, intercept) = if sxx > 0.0 {
        let slope = sxy / sxx;
        (slope, mean_y - slope * mean_x)
    } else if syy == 0.0 {
        // every point coincides; the constant map is exact
        (0.0, mean_y)
    } else {
        return Err(Error::Fit(
            "predictor has zero variance but the measurements do not".into(),
        ));
    };

    let residuals: Vec<f64> = points
        .iter()
        .filter_map(|p| {
            let fitted = slope * p.predicted_nf + intercept;
            if p.measured_nf != 0.0 {
                Some(100.0 * (p.measured_nf - fitted) / p.measured_nf)
            } else if fitted == 0.0 {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let (mean, std) = mean_std(&residuals);
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.measured_nf - slope * p.predicted_nf - intercept).powi(2))
        .sum();
    Ok(FitReport {
        slope,
        intercept,
        residual_mean_pct: mean,
        residual_std_pct: std,
        r_squared: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
        n_tiles: n,
    })
}

/// Mean and sample standard deviation; zeros for fewer than two values.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_tiles: usize,
    pub rows: usize,
    pub cols: usize,
    pub sparsity: f64,
    pub params: ResistanceParams,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_tiles: 500,
            rows: 64,
            cols: 64,
            sparsity: 0.8,
            params: ResistanceParams::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub config: FitConfig,
    pub report: FitReport,
    #[serde(skip)]
    pub points: Vec<FitPoint>,
}

/// Solves `n_tiles` random tiles and regresses measured on predicted nonideality.
pub fn hypothesis_fit(config: &FitConfig) -> Result<FitOutcome> {
    if config.n_tiles < 30 {
        return Err(Error::Fit(format!(
            "hypothesis fit needs at least 30 tiles, got {}",
            config.n_tiles
        )));
    }
    config.params.validate()?;
    let tiles = random_tiles(config.n_tiles, config.rows, config.cols, config.sparsity, config.seed)?;
    let points = tiles
        .par_iter()
        .map(|tile| {
            Ok(FitPoint {
                predicted_nf: analytic_nf(tile, &config.params).nf_sum,
                measured_nf: measured_nf(tile, &config.params)?.aggregate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = least_squares_fit(&points)?;
    Ok(FitOutcome {
        config: config.clone(),
        report,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> FitPoint {
        FitPoint {
            predicted_nf: x,
            measured_nf: y,
        }
    }

    #[test]
    fn exact_line_has_zero_residuals() {
        let pts: Vec<_> = (1..10).map(|i| pt(i as f64, 3.0 * i as f64 + 0.5)).collect();
        let f = least_squares_fit(&pts).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept - 0.5).abs() < 1e-12);
        assert!(f.residual_std_pct.abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_point_is_a_perfect_fit() {
        let f = least_squares_fit(&[pt(2.0, 5.0), pt(2.0, 5.0)]).unwrap();
        assert_eq!(f.residual_mean_pct, 0.0);
        assert_eq!(f.residual_std_pct, 0.0);
    }

    #[test]
    fn all_zero_measurements() {
        let f = least_squares_fit(&[pt(0.0, 0.0), pt(0.0, 0.0), pt(0.0, 0.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.intercept, 0.0);
    }

    #[test]
    fn degenerate_predictor_errors() {
        assert!(matches!(
            least_squares_fit(&[pt(1.0, 1.0), pt(1.0, 2.0)]),
            Err(Error::Fit(_))
        ));
        assert!(least_squares_fit(&[pt(1.0, 1.0)]).is_err());
    }

    #[test]
    fn too_few_tiles() {
        let cfg = FitConfig {
            n_tiles: 10,
            ..FitConfig::default()
        };
        assert!(hypothesis_fit(&cfg).is_err());
    }

    #[test]
    fn zero_wire_resistance_fits_flat() {
        let cfg = FitConfig {
            n_tiles: 30,
            rows: 6,
            cols: 6,
            params: ResistanceParams::default().with_r(0.0).unwrap(),
            ..FitConfig::default()
        };
        let out = hypothesis_fit(&cfg).unwrap();
        assert!(out.points.iter().all(|p| p.measured_nf == 0.0));
        assert_eq!(out.report.slope, 0.0);
    }
}
