//! Mesh solver against an independent dense nodal analysis over every node.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use mdm_core::circuit::{build_mesh, measured_nf, measured_nf_with, solve_mesh, solve_mesh_dense, DEFAULT_TOL};
use mdm_core::crossbar::{BitTile, CrossbarGeometry, Dataflow, ResistanceParams};
use mdm_core::experiments::random_tiles;

/// Column currents of a conventional tile from a plain full-node nodal solve.
///
/// Row node (j, 0) sits on the driver and column node (0, k) on the virtual
/// ground; every other crosspoint contributes one row and one column node.
fn reference_currents(tile: &BitTile, params: &ResistanceParams, drives: &[f64]) -> Vec<f64> {
    let (rows, cols) = (tile.rows(), tile.cols());
    let row_id = |j: usize, k: usize| j * cols + k;
    let col_id = |j: usize, k: usize| rows * cols + j * cols + k;
    let n = 2 * rows * cols;
    let gw = 1.0 / params.r;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let stamp = |a: &mut DMatrix<f64>, p: usize, q: usize, g: f64| {
        a[(p, p)] += g;
        a[(q, q)] += g;
        a[(p, q)] -= g;
        a[(q, p)] -= g;
    };
    for j in 0..rows {
        for k in 0..cols {
            let g = params.device_conductance(tile.is_active(j, k));
            stamp(&mut a, row_id(j, k), col_id(j, k), g);
            if k > 0 {
                stamp(&mut a, row_id(j, k - 1), row_id(j, k), gw);
            }
            if j > 0 {
                stamp(&mut a, col_id(j - 1, k), col_id(j, k), gw);
            }
        }
    }
    // Fixed nodes: replace their equations with identity rows.
    let mut b = DVector::<f64>::zeros(n);
    let mut fixed = vec![None; n];
    for j in 0..rows {
        fixed[row_id(j, 0)] = Some(drives[j]);
    }
    for k in 0..cols {
        fixed[col_id(0, k)] = Some(0.0);
    }
    for (i, f) in fixed.iter().enumerate() {
        if let Some(v) = *f {
            a.row_mut(i).fill(0.0);
            a[(i, i)] = 1.0;
            b[i] = v;
        }
    }
    let x = a.lu().solve(&b).expect("nonsingular nodal matrix");
    (0..cols)
        .map(|k| {
            let device = params.device_conductance(tile.is_active(0, k)) * x[row_id(0, k)];
            let wire = if rows > 1 { gw * x[col_id(1, k)] } else { 0.0 };
            device + wire
        })
        .collect()
}

fn assert_close(a: f64, b: f64, rel: f64) {
    let scale = a.abs().max(b.abs()).max(1e-300);
    assert!((a - b).abs() / scale <= rel, "{a} vs {b}");
}

#[test]
fn two_by_two_matches_nodal_analysis() {
    let tile = BitTile::from_rows(&[[1u8, 1], [1, 0]], Dataflow::Conventional).unwrap();
    let params = ResistanceParams::new(1000.0, 2.0e5, 2.0e6, 1.0).unwrap();
    let system = build_mesh(&tile, &params, &[1.0, 1.0]).unwrap();
    assert_eq!(system.unknowns(), 4);
    let reference = reference_currents(&tile, &params, &[1.0, 1.0]);
    let m = measured_nf(&tile, &params).unwrap();
    for k in 0..2 {
        assert_close(m.actual[k], reference[k], 1e-9);
    }
}

#[test]
fn random_meshes_match_nodal_analysis() {
    let params = ResistanceParams::default().with_r(50.0).unwrap();
    for (i, tile) in random_tiles(6, 6, 5, 0.5, 21).unwrap().iter().enumerate() {
        let drives: Vec<f64> = (0..tile.rows()).map(|j| 0.2 + 0.1 * ((i + j) % 7) as f64).collect();
        let reference = reference_currents(tile, &params, &drives);
        let m = measured_nf_with(tile, &params, &drives, DEFAULT_TOL).unwrap();
        for k in 0..tile.cols() {
            assert_close(m.actual[k], reference[k], 1e-8);
        }
    }
}

#[test]
fn reversed_tile_matches_mirrored_reference() {
    let params = ResistanceParams::default().with_r(20.0).unwrap();
    let tile = &random_tiles(1, 5, 6, 0.6, 3).unwrap()[0];
    let reversed = tile.with_dataflow(Dataflow::Reversed);
    // The physical layout of `reversed` is the mirror image of `tile`.
    let geometry = CrossbarGeometry::new(5, 6, Dataflow::Conventional).unwrap();
    let mirrored = BitTile::from_cells(geometry, tile.active_cells().map(|(j, c)| (j, 5 - c))).unwrap();
    let reference = reference_currents(&mirrored, &params, &[1.0; 5]);
    let m = measured_nf(&reversed, &params).unwrap();
    for c in 0..6 {
        assert_close(m.actual[c], reference[5 - c], 1e-8);
    }
}

#[test]
fn pcg_agrees_with_dense_cholesky() {
    let params = ResistanceParams::default();
    for tile in random_tiles(5, 24, 24, 0.7, 5).unwrap() {
        let system = build_mesh(&tile, &params, &vec![1.0; 24]).unwrap();
        let iterative = solve_mesh(&system, 1e-12).unwrap();
        let dense = solve_mesh_dense(&system).unwrap();
        let (a, b) = (iterative.column_deficits(&system), dense.column_deficits(&system));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-12), "{x} vs {y}");
        }
    }
}

#[test]
fn current_is_conserved() {
    let params = ResistanceParams::default();
    for tile in random_tiles(5, 32, 32, 0.8, 8).unwrap() {
        let system = build_mesh(&tile, &params, &vec![1.0; 32]).unwrap();
        let solution = solve_mesh(&system, DEFAULT_TOL).unwrap();
        let inflow: f64 = solution.input_currents(&system).iter().sum();
        let outflow: f64 = solution.output_currents(&system).iter().sum();
        assert!((inflow - outflow).abs() / inflow <= 10.0 * DEFAULT_TOL, "{inflow} vs {outflow}");
    }
}

#[test]
fn nf_grows_with_wire_resistance() {
    for tile in random_tiles(5, 16, 16, 0.7, 9).unwrap() {
        let nfs: Vec<f64> = [0.0, 1.25, 2.5, 5.0]
            .iter()
            .map(|&r| measured_nf(&tile, &ResistanceParams::default().with_r(r).unwrap()).unwrap().aggregate)
            .collect();
        assert_eq!(nfs[0], 0.0);
        assert!(nfs.windows(2).all(|w| w[0] < w[1]), "{nfs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn small_meshes_match_nodal_analysis(
        rows in 1usize..5,
        cols in 1usize..5,
        bits in proptest::collection::vec(any::<bool>(), 16),
        r in 0.5f64..200.0,
    ) {
        let geometry = CrossbarGeometry::new(rows, cols, Dataflow::Conventional).unwrap();
        let cells = (0..rows).flat_map(|j| (0..cols).map(move |k| (j, k))).filter(|&(j, k)| bits[j * 4 + k]);
        let tile = BitTile::from_cells(geometry, cells).unwrap();
        let params = ResistanceParams::default().with_r(r).unwrap();
        let reference = reference_currents(&tile, &params, &vec![1.0; rows]);
        let m = measured_nf(&tile, &params).unwrap();
        for k in 0..cols {
            let scale = reference[k].abs().max(1e-300);
            prop_assert!((m.actual[k] - reference[k]).abs() / scale <= 1e-8);
        }
    }
}
