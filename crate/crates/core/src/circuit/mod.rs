//! Resistive-mesh model of a crossbar with parasitic wire resistance.
//!
//! Every crosspoint owns a row node and a column node joined by the device.
//! Neighbouring row nodes along a word line and neighbouring column nodes
//! along a bit line are joined by one wire segment of resistance `r`. The row
//! node touching the input rail is held at its drive voltage and the column
//! node touching the output rail at 0 V (virtual ground), so both are
//! eliminated, leaving `2JK - J - K` unknowns.
//!
//! The solver works on the deviation from the ideal operating point (row
//! nodes at their drive, column nodes at ground). Its right-hand side is just
//! the device currents, which keeps the small current deficits we care about
//! well above round-off.

mod netlist;
pub mod solver;

pub use netlist::write_netlist;

use serde::{Deserialize, Serialize};

use crate::crossbar::{antidiagonal_transpose, BitTile, ResistanceParams};
use crate::error::{Error, Result};
use solver::{default_iteration_cap, dense_solve, pcg, CsrMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
/// Tolerance used when comparing two solves against each other.
pub const TIGHT_TOL: f64 = 1e-12;

/// Conductance system of one tile, indexed by physical position.
#[derive(Debug, Clone)]
pub struct MeshSystem {
    rows: usize,
    cols: usize,
    wire_g: f64,
    device_g: Vec<f64>,
    drives: Vec<f64>,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    deviation_rhs: Vec<f64>,
    reference: Vec<f64>,
}

impl MeshSystem {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Right-hand side of `G v = b` in absolute node voltages.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn drives(&self) -> &[f64] {
        &self.drives
    }

    pub fn wire_conductance(&self) -> f64 {
        self.wire_g
    }

    /// Device conductance at physical row `j`, physical column `k`.
    pub fn device_conductance(&self, j: usize, k: usize) -> f64 {
        self.device_g[j * self.cols + k]
    }

    /// Unknown index of the row node at `(j, k)`, `None` if rail-fixed.
    pub fn row_node(&self, j: usize, k: usize) -> Option<usize> {
        (k > 0).then(|| j * (self.cols - 1) + k - 1)
    }

    /// Unknown index of the column node at `(j, k)`, `None` if rail-fixed.
    pub fn col_node(&self, j: usize, k: usize) -> Option<usize> {
        (j > 0).then(|| self.rows * (self.cols - 1) + (j - 1) * self.cols + k)
    }

    fn row_dev(&self, x: &[f64], j: usize, k: usize) -> f64 {
        self.row_node(j, k).map_or(0.0, |i| x[i])
    }

    fn col_dev(&self, x: &[f64], j: usize, k: usize) -> f64 {
        self.col_node(j, k).map_or(0.0, |i| x[i])
    }

    /// Ideal (zero wire resistance) current of physical column `k`.
    pub fn ideal_column_current(&self, k: usize) -> f64 {
        (0..self.rows)
            .map(|j| self.device_conductance(j, k) * self.drives[j])
            .sum()
    }
}

/// Assembles the nodal equations for `tile` driven row-wise by `inputs`.
pub fn build_mesh(tile: &BitTile, params: &ResistanceParams, inputs: &[f64]) -> Result<MeshSystem> {
    params.validate()?;
    let (rows, cols) = (tile.rows(), tile.cols());
    if inputs.len() != rows {
        return Err(Error::Geometry(format!(
            "{} drive voltages for {rows} rows",
            inputs.len()
        )));
    }
    if params.r == 0.0 {
        return Err(Error::Params(
            "zero wire resistance has no mesh; use the ideal current path".into(),
        ));
    }
    let geometry = tile.geometry();
    let mut device_g = vec![0.0; rows * cols];
    for j in 0..rows {
        for k in 0..cols {
            let c = geometry.logical_col(k);
            device_g[j * cols + k] = params.device_conductance(tile.is_active(j, c));
        }
    }

    let mut system = MeshSystem {
        rows,
        cols,
        wire_g: 1.0 / params.r,
        device_g,
        drives: inputs.to_vec(),
        matrix: CsrMatrix::from_rows(Vec::new()),
        rhs: Vec::new(),
        deviation_rhs: Vec::new(),
        reference: Vec::new(),
    };
    let n = 2 * rows * cols - rows - cols;
    let gw = system.wire_g;
    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut rhs = vec![0.0; n];
    let mut deviation_rhs = vec![0.0; n];
    let mut reference = vec![0.0; n];

    for j in 0..rows {
        let v = inputs[j];
        for k in 0..cols {
            let g = system.device_conductance(j, k);
            if let Some(u) = system.row_node(j, k) {
                let row = &mut entries[u];
                let mut diag = gw + g;
                match system.row_node(j, k - 1) {
                    Some(w) => row.push((w, -gw)),
                    None => rhs[u] += gw * v,
                }
                if k + 1 < cols {
                    diag += gw;
                    row.push((system.row_node(j, k + 1).unwrap(), -gw));
                }
                if let Some(w) = system.col_node(j, k) {
                    row.push((w, -g));
                }
                row.push((u, diag));
                reference[u] = v;
                deviation_rhs[u] = -g * v;
            }
            if let Some(u) = system.col_node(j, k) {
                let row = &mut entries[u];
                let mut diag = gw + g;
                if let Some(w) = system.col_node(j - 1, k) {
                    row.push((w, -gw));
                }
                if j + 1 < rows {
                    diag += gw;
                    row.push((system.col_node(j + 1, k).unwrap(), -gw));
                }
                match system.row_node(j, k) {
                    Some(w) => row.push((w, -g)),
                    None => rhs[u] += g * v,
                }
                row.push((u, diag));
                deviation_rhs[u] = g * v;
            }
        }
    }
    system.matrix = CsrMatrix::from_rows(entries);
    system.rhs = rhs;
    system.deviation_rhs = deviation_rhs;
    system.reference = reference;
    Ok(system)
}

/// Node voltages of a solved mesh, stored as deviations from the ideal point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSolution {
    pub deviation: Vec<f64>,
    pub iterations: usize,
    /// `‖G x - f‖ / ‖f‖` of the deviation system.
    pub relative_residual: f64,
}

impl MeshSolution {
    pub fn voltages(&self, system: &MeshSystem) -> Vec<f64> {
        system
            .reference
            .iter()
            .zip(&self.deviation)
            .map(|(r, d)| r + d)
            .collect()
    }

    /// Current deficit (actual minus ideal) of each physical column.
    pub fn column_deficits(&self, system: &MeshSystem) -> Vec<f64> {
        let x = &self.deviation;
        (0..system.cols)
            .map(|k| {
                (0..system.rows)
                    .map(|j| {
                        system.device_conductance(j, k)
                            * (system.row_dev(x, j, k) - system.col_dev(x, j, k))
                    })
                    .sum()
            })
            .collect()
    }

    /// Currents delivered by each row driver.
    pub fn input_currents(&self, system: &MeshSystem) -> Vec<f64> {
        let x = &self.deviation;
        (0..system.rows)
            .map(|j| {
                let device = system.device_conductance(j, 0) * (system.drives[j] - system.col_dev(x, j, 0));
                let wire = if system.cols > 1 {
                    -system.wire_g * system.row_dev(x, j, 1)
                } else {
                    0.0
                };
                device + wire
            })
            .collect()
    }

    /// Currents sunk by each column's virtual ground, by physical column.
    pub fn output_currents(&self, system: &MeshSystem) -> Vec<f64> {
        let x = &self.deviation;
        (0..system.cols)
            .map(|k| {
                let device = system.device_conductance(0, k) * (system.drives[0] + system.row_dev(x, 0, k));
                let wire = if system.rows > 1 {
                    system.wire_g * system.col_dev(x, 1, k)
                } else {
                    0.0
                };
                device + wire
            })
            .collect()
    }

    /// Relative residual of the absolute-voltage system `G v = b`.
    pub fn absolute_residual(&self, system: &MeshSystem) -> f64 {
        let v = self.voltages(system);
        let gv = system.matrix.mul(&v);
        let num: f64 = gv.iter().zip(&system.rhs).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = system.rhs.iter().map(|b| b * b).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Iterative solve to relative residual `tol`.
pub fn solve_mesh(system: &MeshSystem, tol: f64) -> Result<MeshSolution> {
    let cap = default_iteration_cap(system.unknowns());
    let out = pcg(&system.matrix, &system.deviation_rhs, tol, cap)?;
    Ok(MeshSolution {
        deviation: out.x,
        iterations: out.iterations,
        relative_residual: out.relative_residual,
    })
}

/// Direct dense solve, for cross-checking the iterative path on small meshes.
pub fn solve_mesh_dense(system: &MeshSystem) -> Result<MeshSolution> {
    let x = dense_solve(&system.matrix, &system.deviation_rhs)?;
    let gx = system.matrix.mul(&x);
    let num: f64 = gx.iter().zip(&system.deviation_rhs).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = system.deviation_rhs.iter().map(|b| b * b).sum();
    Ok(MeshSolution {
        deviation: x,
        iterations: 0,
        relative_residual: if den == 0.0 { 0.0 } else { (num / den).sqrt() },
    })
}

/// Measured nonideality of one tile, reported per logical column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfMeasurement {
    pub ideal: Vec<f64>,
    pub actual: Vec<f64>,
    /// `actual - ideal`; nonpositive for nonnegative drives.
    pub deficit: Vec<f64>,
    /// `|Δi / i0|`, or `None` for columns with no ideal current.
    pub per_column: Vec<Option<f64>>,
    /// `Σ|Δi| / Σ|i0|` over the columns that carry current.
    pub aggregate: f64,
    pub excluded_columns: Vec<usize>,
    pub iterations: usize,
}

pub fn measured_nf(tile: &BitTile, params: &ResistanceParams) -> Result<NfMeasurement> {
    measured_nf_with(tile, params, &vec![params.v_in; tile.rows()], DEFAULT_TOL)
}

pub fn measured_nf_with(
    tile: &BitTile,
    params: &ResistanceParams,
    inputs: &[f64],
    tol: f64,
) -> Result<NfMeasurement> {
    params.validate()?;
    if inputs.len() != tile.rows() {
        return Err(Error::Geometry(format!(
            "{} drive voltages for {} rows",
            inputs.len(),
            tile.rows()
        )));
    }
    let geometry = tile.geometry();
    let ideal: Vec<f64> = (0..tile.cols())
        .map(|c| {
            (0..tile.rows())
                .map(|j| params.device_conductance(tile.is_active(j, c)) * inputs[j])
                .sum()
        })
        .collect();

    let (deficit, iterations) = if params.r == 0.0 {
        (vec![0.0; tile.cols()], 0)
    } else {
        let system = build_mesh(tile, params, inputs)?;
        let solution = solve_mesh(&system, tol)?;
        let physical = solution.column_deficits(&system);
        let logical = (0..tile.cols()).map(|c| physical[geometry.physical_col(c)]).collect();
        (logical, solution.iterations)
    };

    let mut per_column = Vec::with_capacity(tile.cols());
    let mut excluded_columns = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (c, (&i0, &di)) in ideal.iter().zip(&deficit).enumerate() {
        if i0 == 0.0 {
            per_column.push(None);
            excluded_columns.push(c);
        } else {
            per_column.push(Some((di / i0).abs()));
            num += di.abs();
            den += i0.abs();
        }
    }
    let actual = ideal.iter().zip(&deficit).map(|(a, b)| a + b).collect();
    Ok(NfMeasurement {
        ideal,
        actual,
        deficit,
        per_column,
        aggregate: if den > 0.0 { num / den } else { 0.0 },
        excluded_columns,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub nf_a: f64,
    pub nf_b: f64,
    pub gap: f64,
}

/// Compares a square tile against its anti-diagonal transpose.
pub fn symmetry_check(tile: &BitTile, params: &ResistanceParams) -> Result<SymmetryCheck> {
    let transposed = antidiagonal_transpose(tile)?;
    let drives = vec![params.v_in; tile.rows()];
    let nf_a = measured_nf_with(tile, params, &drives, TIGHT_TOL)?.aggregate;
    let nf_b = measured_nf_with(&transposed, params, &drives, TIGHT_TOL)?.aggregate;
    let scale = nf_a.max(nf_b);
    Ok(SymmetryCheck {
        nf_a,
        nf_b,
        gap: if scale > 0.0 { (nf_a - nf_b).abs() / scale } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{CrossbarGeometry, Dataflow};

    fn open(r: f64) -> ResistanceParams {
        ResistanceParams::new(r, 3.0e5, f64::INFINITY, 1.0).unwrap()
    }

    #[test]
    fn one_by_one_is_ideal() {
        let tile = BitTile::from_rows(&[[1u8]], Dataflow::Conventional).unwrap();
        let p = ResistanceParams::default();
        let system = build_mesh(&tile, &p, &[1.0]).unwrap();
        assert_eq!(system.unknowns(), 0);
        let m = measured_nf(&tile, &p).unwrap();
        assert_eq!(m.actual[0], 1.0 / 3.0e5);
        assert_eq!(m.aggregate, 0.0);
    }

    #[test]
    fn unknown_count() {
        let g = CrossbarGeometry::new(5, 7, Dataflow::Conventional).unwrap();
        let system = build_mesh(&BitTile::empty(g), &ResistanceParams::default(), &[1.0; 5]).unwrap();
        assert_eq!(system.unknowns(), 2 * 5 * 7 - 5 - 7);
        assert!(system.matrix().is_symmetric(1e-15));
        assert!(system.matrix().is_diagonally_dominant());
    }

    #[test]
    fn one_by_two_hand_elimination() {
        // Free nodes: row node a at (0,1), column node b at (0,1) is rail-fixed, so only a.
        // Cell (0,1) active: a = V g_w / (g_w + g_on).
        let tile = BitTile::from_rows(&[[0u8, 1]], Dataflow::Conventional).unwrap();
        let p = open(2.5);
        let system = build_mesh(&tile, &p, &[1.0]).unwrap();
        assert_eq!(system.unknowns(), 1);
        let sol = solve_mesh(&system, 1e-14).unwrap();
        let gw = 1.0 / 2.5;
        let gon = 1.0 / 3.0e5;
        let a = gw / (gw + gon);
        assert!((sol.voltages(&system)[0] - a).abs() < 1e-15);
        let m = measured_nf(&tile, &p).unwrap();
        assert!((m.actual[1] - a * gon).abs() < 1e-20);
        assert_eq!(m.per_column[0], None);
        assert_eq!(m.excluded_columns, vec![0]);
    }

    #[test]
    fn two_by_one_hand_elimination() {
        // Column node at (1,0) is the lone unknown; the device at (1,0) is driven directly.
        let tile = BitTile::from_rows(&[[0u8], [1]], Dataflow::Conventional).unwrap();
        let p = open(2.5);
        let m = measured_nf(&tile, &p).unwrap();
        let expected = 1.0 / (3.0e5 + 2.5);
        assert!((m.actual[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn zero_resistance_is_exactly_ideal() {
        let tile = BitTile::from_rows(&[[1u8, 1], [0, 1]], Dataflow::Conventional).unwrap();
        let p = ResistanceParams::default().with_r(0.0).unwrap();
        let m = measured_nf(&tile, &p).unwrap();
        assert_eq!(m.aggregate, 0.0);
        assert_eq!(m.actual, m.ideal);
        assert!(build_mesh(&tile, &p, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_drive_gives_zero_voltages() {
        let tile = BitTile::from_rows(&[[1u8, 0, 1], [0, 1, 1]], Dataflow::Conventional).unwrap();
        let system = build_mesh(&tile, &ResistanceParams::default(), &[0.0, 0.0]).unwrap();
        let sol = solve_mesh(&system, DEFAULT_TOL).unwrap();
        assert!(sol.voltages(&system).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_inactive_single_row_series_paths() {
        // One row: column k's device sees k row segments and no column segment,
        // and with a single row nothing else loads the wire except other devices.
        let tile = BitTile::from_rows(&[[0u8, 0, 0, 0]], Dataflow::Conventional).unwrap();
        let p = ResistanceParams::default();
        let m = measured_nf(&tile, &p).unwrap();
        for (k, &i) in m.actual.iter().enumerate() {
            let series = 1.0 / (p.r_off + k as f64 * p.r);
            assert!((i - series).abs() / series < 1e-5, "column {k}: {i} vs {series}");
        }
    }

    #[test]
    fn wrong_drive_length() {
        let tile = BitTile::from_rows(&[[1u8, 0]], Dataflow::Conventional).unwrap();
        assert!(build_mesh(&tile, &ResistanceParams::default(), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn reversal_moves_the_rail_side() {
        let tile = BitTile::from_rows(&[[1u8, 0, 0, 0]], Dataflow::Conventional).unwrap();
        let p = open(2.5);
        let conv = measured_nf(&tile, &p).unwrap();
        let rev = measured_nf(&tile.with_dataflow(Dataflow::Reversed), &p).unwrap();
        assert!(conv.aggregate < 1e-15);
        let expected = 3.0 * 2.5 / (3.0e5 + 3.0 * 2.5);
        assert!((rev.aggregate - expected).abs() / expected < 1e-8);
    }

    #[test]
    fn symmetry_on_rectangular_tile_fails() {
        let tile = BitTile::from_rows(&[[1u8, 0, 0]], Dataflow::Conventional).unwrap();
        assert!(matches!(
            symmetry_check(&tile, &ResistanceParams::default()),
            Err(Error::Geometry(_))
        ));
    }
}
