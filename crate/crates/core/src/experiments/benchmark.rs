use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{distance_sum, mdm_map_oriented};
use crate::circuit::measured_nf;
use crate::crossbar::{BitTile, Dataflow, ResistanceParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub dataflow: Dataflow,
    pub mdm: bool,
}

impl BenchmarkConfig {
    pub const ALL: [BenchmarkConfig; 4] = [
        BenchmarkConfig { dataflow: Dataflow::Conventional, mdm: false },
        BenchmarkConfig { dataflow: Dataflow::Reversed, mdm: false },
        BenchmarkConfig { dataflow: Dataflow::Conventional, mdm: true },
        BenchmarkConfig { dataflow: Dataflow::Reversed, mdm: true },
    ];

    pub fn label(&self) -> String {
        format!("{}+{}", self.dataflow, if self.mdm { "mdm" } else { "identity" })
    }

    fn layout(&self, tile: &BitTile) -> BitTile {
        if self.mdm {
            mdm_map_oriented(tile, self.dataflow).1
        } else {
            tile.with_dataflow(self.dataflow)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub config: String,
    pub mean_nf: f64,
    /// Percent reduction against `conventional+identity`; `None` when the
    /// baseline is zero.
    pub reduction_pct: Option<f64>,
    pub mean_distance_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub rows: Vec<BenchmarkRow>,
    pub n_tiles: usize,
    /// Row sorting never raised the predicted nonideality of any tile.
    pub mdm_never_worse: bool,
    /// Reductions could not be computed because the baseline vanished.
    pub undefined_reductions: bool,
}

impl BenchmarkOutcome {
    pub fn row(&self, dataflow: Dataflow, mdm: bool) -> &BenchmarkRow {
        let label = BenchmarkConfig { dataflow, mdm }.label();
        self.rows.iter().find(|r| r.config == label).expect("all four configurations present")
    }
}

/// Measured nonideality of every tile under the four layouts
/// {conventional, reversed} x {identity, row sort}.
pub fn nf_benchmark(tiles: &[BitTile], params: &ResistanceParams) -> Result<BenchmarkOutcome> {
    if tiles.len() < 30 {
        return Err(Error::Data(format!(
            "benchmark needs at least 30 tiles, got {}",
            tiles.len()
        )));
    }
    params.validate()?;
    let per_tile = tiles
        .par_iter()
        .map(|tile| {
            BenchmarkConfig::ALL
                .iter()
                .map(|cfg| {
                    let laid_out = cfg.layout(tile);
                    Ok((measured_nf(&laid_out, params)?.aggregate, distance_sum(&laid_out)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n = tiles.len() as f64;
    let means: Vec<(f64, f64)> = (0..BenchmarkConfig::ALL.len())
        .map(|i| {
            let nf = per_tile.iter().map(|t| t[i].0).sum::<f64>() / n;
            let dist = per_tile.iter().map(|t| t[i].1 as f64).sum::<f64>() / n;
            (nf, dist)
        })
        .collect();
    let baseline = means[0].0;
    let rows = BenchmarkConfig::ALL
        .iter()
        .zip(&means)
        .map(|(cfg, &(mean_nf, mean_distance_sum))| BenchmarkRow {
            config: cfg.label(),
            mean_nf,
            reduction_pct: (baseline > 0.0).then(|| 100.0 * (baseline - mean_nf) / baseline),
            mean_distance_sum,
        })
        .collect();
    let mdm_never_worse = per_tile.iter().all(|t| t[2].1 <= t[0].1 && t[3].1 <= t[1].1);
    Ok(BenchmarkOutcome {
        rows,
        n_tiles: tiles.len(),
        mdm_never_worse,
        undefined_reductions: baseline <= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::CrossbarGeometry;
    use crate::experiments::random_tiles;

    #[test]
    fn empty_tiles_flag_undefined_reductions() {
        let g = CrossbarGeometry::new(4, 4, Dataflow::Conventional).unwrap();
        let tiles = vec![BitTile::empty(g); 30];
        let p = ResistanceParams::new(2.5, 3e5, f64::INFINITY, 1.0).unwrap();
        let out = nf_benchmark(&tiles, &p).unwrap();
        assert!(out.undefined_reductions);
        assert!(out.rows.iter().all(|r| r.mean_nf == 0.0 && r.reduction_pct.is_none()));
    }

    #[test]
    fn baseline_reduction_is_zero() {
        let tiles = random_tiles(30, 8, 8, 0.7, 3).unwrap();
        let out = nf_benchmark(&tiles, &ResistanceParams::default()).unwrap();
        assert_eq!(out.rows[0].config, "conventional+identity");
        assert_eq!(out.rows[0].reduction_pct, Some(0.0));
        assert!(out.mdm_never_worse);
    }

    #[test]
    fn needs_thirty_tiles() {
        let tiles = random_tiles(5, 4, 4, 0.5, 1).unwrap();
        assert!(nf_benchmark(&tiles, &ResistanceParams::default()).is_err());
    }
}
