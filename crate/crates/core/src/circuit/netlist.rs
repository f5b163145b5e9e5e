use std::fmt::Write as _;

use crate::crossbar::{BitTile, ResistanceParams};
use crate::error::Result;

/// SPICE deck for the parasitic crossbar.
///
/// Row drivers are `V` sources on `in<j>`, each bit line ends in a 0 V sense
/// source so column currents can be probed, and every device and wire
/// segment is one `R<id> <node+> <node-> <ohms>` line. Open devices are omitted.
pub fn write_netlist(tile: &BitTile, params: &ResistanceParams, inputs: &[f64]) -> Result<String> {
    params.validate()?;
    let (rows, cols) = (tile.rows(), tile.cols());
    if inputs.len() != rows {
        return Err(crate::Error::Geometry(format!(
            "{} drive voltages for {rows} rows",
            inputs.len()
        )));
    }
    let geometry = tile.geometry();
    let row_name = |j: usize, k: usize| {
        if k == 0 {
            format!("in{j}")
        } else {
            format!("r{j}_{k}")
        }
    };
    let col_name = |j: usize, k: usize| {
        if j == 0 {
            format!("out{k}")
        } else {
            format!("c{j}_{k}")
        }
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "* crossbar {rows}x{cols} {} r={} ron={} roff={}",
        geometry.dataflow(),
        params.r,
        params.r_on,
        if params.r_off.is_infinite() {
            "open".to_string()
        } else {
            params.r_off.to_string()
        }
    );
    for (j, v) in inputs.iter().enumerate() {
        let _ = writeln!(out, "V{j} in{j} 0 DC {v}");
    }
    for k in 0..cols {
        let _ = writeln!(out, "VS{k} out{k} 0 DC 0");
    }

    let mut id = 0usize;
    let mut resistor = |out: &mut String, a: String, b: String, ohms: f64| {
        let _ = writeln!(out, "R{id} {a} {b} {ohms}");
        id += 1;
    };
    for j in 0..rows {
        for k in 0..cols {
            let ohms = if tile.is_active(j, geometry.logical_col(k)) {
                params.r_on
            } else {
                params.r_off
            };
            if ohms.is_finite() {
                resistor(&mut out, row_name(j, k), col_name(j, k), ohms);
            }
            if k + 1 < cols {
                resistor(&mut out, row_name(j, k), row_name(j, k + 1), params.r);
            }
            if j + 1 < rows {
                resistor(&mut out, col_name(j + 1, k), col_name(j, k), params.r);
            }
        }
    }
    out.push_str(".op\n.end\n");
    Ok(out)
}
