//! First-order nonideality prediction and the Manhattan distance mapper.
//!
//! The predicted nonideality of a tile is `(r / R_on) * Σ δ(j, k) (j + k)`.
//! Splitting the sum by row gives `Σ_ρ (π(ρ) n_ρ + c_ρ)`, where `n_ρ` is the
//! number of active cells in row `ρ` and `c_ρ` the sum of their physical column
//! distances. `c_ρ` depends only on the orientation and `π` only enters through
//! `Σ π(ρ) n_ρ`, which the rearrangement inequality minimizes by placing the
//! densest rows nearest the output rail.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::crossbar::{BitTile, Dataflow, MdmPlan, ResistanceParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowScore {
    pub row: usize,
    pub active_count: usize,
    pub column_sum: usize,
}

impl RowScore {
    /// Sort key: ascending order of this key puts rows in mapping order.
    pub fn key(&self) -> (i64, usize, usize) {
        (-(self.active_count as i64), self.column_sum, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfPrediction {
    pub nf_sum: f64,
    pub nf_normalized: f64,
    pub r_over_ron: f64,
}

/// `Σ δ(j, k) (j + k)` over active cells, using the tile's orientation.
pub fn distance_sum(tile: &BitTile) -> u64 {
    let g = tile.geometry();
    tile.active_cells()
        .map(|(j, c)| (j + g.physical_col(c)) as u64)
        .sum()
}

pub fn analytic_nf(tile: &BitTile, params: &ResistanceParams) -> NfPrediction {
    let ratio = params.r_over_ron();
    let nf_sum = ratio * distance_sum(tile) as f64;
    let n = tile.active_count().max(1) as f64;
    NfPrediction {
        nf_sum,
        nf_normalized: nf_sum / n,
        r_over_ron: ratio,
    }
}

pub fn row_scores(tile: &BitTile) -> Vec<RowScore> {
    let g = tile.geometry();
    (0..tile.rows())
        .map(|j| {
            let (active_count, column_sum) = tile
                .row(j)
                .iter()
                .enumerate()
                .filter(|(_, &a)| a)
                .fold((0, 0), |(n, s), (c, _)| (n + 1, s + g.physical_col(c)));
            RowScore {
                row: j,
                active_count,
                column_sum,
            }
        })
        .collect()
}

/// `Σ_ρ c_ρ` if the tile were read with `dataflow`.
fn column_term(tile: &BitTile, dataflow: Dataflow) -> usize {
    let g = tile.geometry().with_dataflow(dataflow);
    tile.active_cells().map(|(_, c)| g.physical_col(c)).sum()
}

/// Orientation with the smaller column-distance term; ties go to `Reversed`.
pub fn choose_dataflow(tile: &BitTile) -> Dataflow {
    if column_term(tile, Dataflow::Reversed) <= column_term(tile, Dataflow::Conventional) {
        Dataflow::Reversed
    } else {
        Dataflow::Conventional
    }
}

/// Full mapping: pick the orientation, score rows, sort them.
pub fn mdm_map(tile: &BitTile) -> (MdmPlan, BitTile) {
    mdm_map_oriented(tile, choose_dataflow(tile))
}

/// Row sort under a fixed orientation.
pub fn mdm_map_oriented(tile: &BitTile, dataflow: Dataflow) -> (MdmPlan, BitTile) {
    let oriented = tile.with_dataflow(dataflow);
    let mut scores = row_scores(&oriented);
    scores.sort_by_key(RowScore::key);
    let mut perm = vec![0; tile.rows()];
    for (position, score) in scores.iter().enumerate() {
        perm[score.row] = position;
    }
    let plan = MdmPlan::new(perm, dataflow, tile.dataflow()).expect("sorted scores form a permutation");
    let mapped = apply_plan(&plan, tile).expect("plan built from this tile");
    (plan, mapped)
}

fn check_plan(plan: &MdmPlan, tile: &BitTile) -> Result<()> {
    if plan.rows() != tile.rows() {
        return Err(Error::Geometry(format!(
            "plan covers {} rows but the tile has {}",
            plan.rows(),
            tile.rows()
        )));
    }
    Ok(())
}

/// Moves logical row `ρ` to physical row `π(ρ)` and switches orientation.
pub fn apply_plan(plan: &MdmPlan, tile: &BitTile) -> Result<BitTile> {
    check_plan(plan, tile)?;
    if tile.dataflow() != plan.source_dataflow() {
        return Err(Error::Geometry(format!(
            "plan was computed for a {} tile, got a {} one",
            plan.source_dataflow(),
            tile.dataflow()
        )));
    }
    let cols = tile.cols();
    let src = tile.raw_active();
    let mut active = vec![false; src.len()];
    for (rho, &j) in plan.row_perm().iter().enumerate() {
        active[j * cols..(j + 1) * cols].copy_from_slice(&src[rho * cols..(rho + 1) * cols]);
    }
    Ok(tile.with_active(active).with_dataflow(plan.dataflow()))
}

/// Undoes [`apply_plan`].
pub fn invert_plan(plan: &MdmPlan, tile: &BitTile) -> Result<BitTile> {
    check_plan(plan, tile)?;
    if tile.dataflow() != plan.dataflow() {
        return Err(Error::Geometry(format!(
            "plan produces {} tiles, got a {} one",
            plan.dataflow(),
            tile.dataflow()
        )));
    }
    let cols = tile.cols();
    let src = tile.raw_active();
    let mut active = vec![false; src.len()];
    for (rho, &j) in plan.row_perm().iter().enumerate() {
        active[rho * cols..(rho + 1) * cols].copy_from_slice(&src[j * cols..(j + 1) * cols]);
    }
    Ok(tile.with_active(active).with_dataflow(plan.source_dataflow()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOptimum {
    pub nf_sum: f64,
    pub distance_sum: u64,
    pub row_perm: Vec<usize>,
    pub dataflow: Dataflow,
}

pub const BRUTE_FORCE_MAX_ROWS: usize = 9;

/// Exhaustive minimum of the predicted nonideality over every row
/// permutation and both orientations.
pub fn brute_force_optimal_nf(tile: &BitTile, params: &ResistanceParams) -> Result<BruteForceOptimum> {
    let rows = tile.rows();
    if rows > BRUTE_FORCE_MAX_ROWS {
        return Err(Error::Size(format!(
            "exhaustive search is limited to {BRUTE_FORCE_MAX_ROWS} rows, got {rows}"
        )));
    }
    let mut best: Option<(u64, Vec<usize>, Dataflow)> = None;
    for dataflow in [Dataflow::Conventional, Dataflow::Reversed] {
        let source = tile.dataflow();
        for perm in (0..rows).permutations(rows) {
            let plan = MdmPlan::new(perm, dataflow, source)?;
            let sum = distance_sum(&apply_plan(&plan, tile)?);
            if best.as_ref().is_none_or(|(b, _, _)| sum < *b) {
                best = Some((sum, plan.row_perm().to_vec(), dataflow));
            }
        }
    }
    let (sum, row_perm, dataflow) = best.expect("at least one permutation");
    Ok(BruteForceOptimum {
        nf_sum: params.r_over_ron() * sum as f64,
        distance_sum: sum,
        row_perm,
        dataflow,
    })
}
