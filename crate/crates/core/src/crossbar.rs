//! Crossbar domain types and index conventions.
//!
//! A crossbar has `rows` word lines (driven from the input rail) and `cols`
//! bit lines (sensed at the output rail). Cell `(j, k)` sits `j` column-wire
//! segments away from the output rail and `k` row-wire segments away from the
//! input rail. The crosspoint touching a rail terminal is at distance zero.
//!
//! Tiles are stored by *logical* column. The dataflow orientation decides
//! which physical column a logical column lands on: `Conventional` keeps
//! `k = c`, `Reversed` mirrors it to `k = K - 1 - c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataflow {
    #[default]
    Conventional,
    Reversed,
}

impl Dataflow {
    pub fn flipped(self) -> Self {
        match self {
            Dataflow::Conventional => Dataflow::Reversed,
            Dataflow::Reversed => Dataflow::Conventional,
        }
    }
}

impl std::fmt::Display for Dataflow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dataflow::Conventional => f.write_str("conventional"),
            Dataflow::Reversed => f.write_str("reversed"),
        }
    }
}

impl std::str::FromStr for Dataflow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Dataflow::Conventional),
            "reversed" => Ok(Dataflow::Reversed),
            other => Err(Error::Data(format!("unknown dataflow `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct CrossbarGeometry {
    rows: usize,
    cols: usize,
    dataflow: Dataflow,
}

#[derive(Deserialize)]
struct RawGeometry {
    rows: usize,
    cols: usize,
    #[serde(default)]
    dataflow: Dataflow,
}

impl TryFrom<RawGeometry> for CrossbarGeometry {
    type Error = Error;

    fn try_from(raw: RawGeometry) -> Result<Self> {
        CrossbarGeometry::new(raw.rows, raw.cols, raw.dataflow)
    }
}

impl CrossbarGeometry {
    pub fn new(rows: usize, cols: usize, dataflow: Dataflow) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Geometry(format!(
                "crossbar must have at least one row and column, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            dataflow,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dataflow(&self) -> Dataflow {
        self.dataflow
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn with_dataflow(self, dataflow: Dataflow) -> Self {
        Self { dataflow, ..self }
    }

    /// Number of row-wire segments between logical column `col` and the input rail.
    #[inline]
    pub fn physical_col(&self, col: usize) -> usize {
        match self.dataflow {
            Dataflow::Conventional => col,
            Dataflow::Reversed => self.cols - 1 - col,
        }
    }

    /// Inverse of [`physical_col`](Self::physical_col); the mirror is an involution.
    #[inline]
    pub fn logical_col(&self, physical: usize) -> usize {
        self.physical_col(physical)
    }

    fn check(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Index {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

/// Manhattan distance of the cell at row `j`, logical column `k`, from the I/O rails.
pub fn manhattan_distance(geometry: &CrossbarGeometry, j: usize, k: usize) -> Result<usize> {
    geometry.check(j, k)?;
    Ok(j + geometry.physical_col(k))
}

/// Electrical parameters of the crossbar. `r_off` may be infinite, which
/// models inactive cells as open circuits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ResistanceParams {
    pub r: f64,
    pub r_on: f64,
    #[serde(serialize_with = "ser_open")]
    pub r_off: f64,
    pub v_in: f64,
}

#[derive(Deserialize)]
struct RawParams {
    r: f64,
    r_on: f64,
    r_off: Option<f64>,
    v_in: f64,
}

fn ser_open<S: serde::Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if value.is_infinite() {
        s.serialize_none()
    } else {
        s.serialize_f64(*value)
    }
}

impl TryFrom<RawParams> for ResistanceParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ResistanceParams::new(raw.r, raw.r_on, raw.r_off.unwrap_or(f64::INFINITY), raw.v_in)
    }
}

impl Default for ResistanceParams {
    fn default() -> Self {
        Self {
            r: 2.5,
            r_on: 3.0e5,
            r_off: 3.0e6,
            v_in: 1.0,
        }
    }
}

impl ResistanceParams {
    pub fn new(r: f64, r_on: f64, r_off: f64, v_in: f64) -> Result<Self> {
        let params = Self {
            r,
            r_on,
            r_off,
            v_in,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::Params(format!("wire resistance must be >= 0, got {}", self.r)));
        }
        if !(self.r_on.is_finite() && self.r_on > 0.0) {
            return Err(Error::Params(format!("R_on must be positive, got {}", self.r_on)));
        }
        // Linearization needs r << R_on.
        if self.r >= self.r_on / 100.0 {
            return Err(Error::Params(format!(
                "wire resistance {} must stay below R_on/100 = {}",
                self.r,
                self.r_on / 100.0
            )));
        }
        if self.r_off.is_nan() || self.r_off <= self.r_on {
            return Err(Error::Params(format!(
                "R_off ({}) must exceed R_on ({})",
                self.r_off, self.r_on
            )));
        }
        if !self.v_in.is_finite() {
            return Err(Error::Params("drive voltage must be finite".into()));
        }
        Ok(())
    }

    pub fn r_over_ron(&self) -> f64 {
        self.r / self.r_on
    }

    pub fn with_r(self, r: f64) -> Result<Self> {
        Self::new(r, self.r_on, self.r_off, self.v_in)
    }

    pub fn g_on(&self) -> f64 {
        1.0 / self.r_on
    }

    /// Zero when inactive devices are open.
    pub fn g_off(&self) -> f64 {
        if self.r_off.is_infinite() {
            0.0
        } else {
            1.0 / self.r_off
        }
    }

    pub fn device_conductance(&self, active: bool) -> f64 {
        if active {
            self.g_on()
        } else {
            self.g_off()
        }
    }
}

/// Binary active-cell pattern of one crossbar tile.
///
/// Each row holds `weights_per_row` weights laid out bit-plane major: logical
/// column `c` carries bit plane `c / weights_per_row` of weight
/// `c % weights_per_row`, so every higher-order plane sits before every
/// lower-order plane. Plane `b` is worth `2^-significances[b]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TileJson", into = "TileJson")]
pub struct BitTile {
    geometry: CrossbarGeometry,
    significances: Vec<i32>,
    weights_per_row: usize,
    active: Vec<bool>,
}

impl BitTile {
    pub fn new(
        geometry: CrossbarGeometry,
        significances: Vec<i32>,
        weights_per_row: usize,
        active: Vec<bool>,
    ) -> Result<Self> {
        if weights_per_row == 0 {
            return Err(Error::Geometry("weights_per_row must be positive".into()));
        }
        if significances.len() * weights_per_row != geometry.cols() {
            return Err(Error::Geometry(format!(
                "{} significances x {} weights per row does not cover {} columns",
                significances.len(),
                weights_per_row,
                geometry.cols()
            )));
        }
        if significances.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Geometry(
                "significances must be strictly increasing (higher-order first)".into(),
            ));
        }
        if active.len() != geometry.rows() * geometry.cols() {
            return Err(Error::Geometry(format!(
                "cell pattern has {} entries, expected {}",
                active.len(),
                geometry.rows() * geometry.cols()
            )));
        }
        Ok(Self {
            geometry,
            significances,
            weights_per_row,
            active,
        })
    }

    /// All-inactive tile with one weight per row and significances `0..cols`.
    pub fn empty(geometry: CrossbarGeometry) -> Self {
        let cols = geometry.cols();
        Self {
            geometry,
            significances: default_significances(cols),
            weights_per_row: 1,
            active: vec![false; geometry.rows() * cols],
        }
    }

    pub fn from_cells(
        geometry: CrossbarGeometry,
        cells: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut tile = Self::empty(geometry);
        for (j, c) in cells {
            tile.set(j, c, true)?;
        }
        Ok(tile)
    }

    /// Builds a tile from a row-major 0/1 matrix.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R], dataflow: Dataflow) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let geometry = CrossbarGeometry::new(rows.len(), cols, dataflow)?;
        let mut active = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Geometry("ragged bit matrix".into()));
            }
            active.extend(row.iter().map(|&b| b != 0));
        }
        Self::new(geometry, default_significances(cols), 1, active)
    }

    pub fn geometry(&self) -> &CrossbarGeometry {
        &self.geometry
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows()
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols()
    }

    pub fn dataflow(&self) -> Dataflow {
        self.geometry.dataflow()
    }

    pub fn significances(&self) -> &[i32] {
        &self.significances
    }

    pub fn weights_per_row(&self) -> usize {
        self.weights_per_row
    }

    pub fn bits_per_weight(&self) -> usize {
        self.significances.len()
    }

    /// Exponent `e` such that logical column `col` is worth `2^-e`.
    pub fn column_significance(&self, col: usize) -> i32 {
        self.significances[col / self.weights_per_row]
    }

    /// Weight index within a row that logical column `col` belongs to.
    pub fn column_weight(&self, col: usize) -> usize {
        col % self.weights_per_row
    }

    /// Logical column holding bit plane `bit` of weight `weight`.
    pub fn column_of(&self, weight: usize, bit: usize) -> usize {
        bit * self.weights_per_row + weight
    }

    #[inline]
    pub fn is_active(&self, j: usize, c: usize) -> bool {
        self.active[j * self.cols() + c]
    }

    pub fn get(&self, j: usize, c: usize) -> Result<bool> {
        self.geometry.check(j, c)?;
        Ok(self.is_active(j, c))
    }

    pub fn set(&mut self, j: usize, c: usize, value: bool) -> Result<()> {
        self.geometry.check(j, c)?;
        let cols = self.cols();
        self.active[j * cols + c] = value;
        Ok(())
    }

    pub fn row(&self, j: usize) -> &[bool] {
        let cols = self.cols();
        &self.active[j * cols..(j + 1) * cols]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Active cells as `(row, logical column)`, row-major.
    pub fn active_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols();
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(move |(i, _)| (i / cols, i % cols))
    }

    pub fn with_dataflow(&self, dataflow: Dataflow) -> Self {
        Self {
            geometry: self.geometry.with_dataflow(dataflow),
            ..self.clone()
        }
    }

    pub(crate) fn with_active(&self, active: Vec<bool>) -> Self {
        debug_assert_eq!(active.len(), self.active.len());
        Self {
            active,
            ..self.clone()
        }
    }

    pub(crate) fn raw_active(&self) -> &[bool] {
        &self.active
    }
}

pub fn default_significances(bits: usize) -> Vec<i32> {
    (0..bits as i32).collect()
}

#[derive(Serialize, Deserialize)]
struct TileJson {
    rows: usize,
    cols: usize,
    dataflow: Dataflow,
    significances: Vec<i32>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    weights_per_row: usize,
    active: Vec<[usize; 2]>,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

impl TryFrom<TileJson> for BitTile {
    type Error = Error;

    fn try_from(raw: TileJson) -> Result<Self> {
        let geometry = CrossbarGeometry::new(raw.rows, raw.cols, raw.dataflow)?;
        let mut active = vec![false; raw.rows * raw.cols];
        for [j, c] in raw.active {
            geometry.check(j, c)?;
            active[j * raw.cols + c] = true;
        }
        BitTile::new(geometry, raw.significances, raw.weights_per_row, active)
    }
}

impl From<BitTile> for TileJson {
    fn from(tile: BitTile) -> Self {
        TileJson {
            rows: tile.rows(),
            cols: tile.cols(),
            dataflow: tile.dataflow(),
            weights_per_row: tile.weights_per_row,
            active: tile.active_cells().map(|(j, c)| [j, c]).collect(),
            significances: tile.significances,
        }
    }
}

/// Swaps each active cell's distances to the input and output rails.
///
/// Requires a square tile; orientation and significances are kept as they are.
pub fn antidiagonal_transpose(tile: &BitTile) -> Result<BitTile> {
    let geometry = *tile.geometry();
    if !geometry.is_square() {
        return Err(Error::Geometry(format!(
            "anti-diagonal transpose needs a square tile, got {}x{}",
            geometry.rows(),
            geometry.cols()
        )));
    }
    let n = geometry.rows();
    let mut active = vec![false; n * n];
    for (j, c) in tile.active_cells() {
        let k = geometry.physical_col(c);
        active[k * n + geometry.logical_col(j)] = true;
    }
    Ok(tile.with_active(active))
}

/// Dense real matrix, row-major. Rows map to crossbar rows, columns to the
/// weights stored on each row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Data(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite weight at ({}, {})",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Data("ragged weight matrix".into()));
        }
        let n = rows.len();
        Self::new(n, cols, rows.into_iter().flatten().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// `y = Wᵀ x`: the column outputs of a crossbar whose rows are driven by `x`.
    pub fn transpose_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "input length must match row count");
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (yj, &w) in y.iter_mut().zip(self.row(i)) {
                *yj += w * xi;
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Row placement plus dataflow orientation produced by the mapper.
///
/// Logical row `ρ` moves to physical row `row_perm[ρ]`; the tile is then read
/// with orientation `dataflow`. `source_dataflow` records the orientation the
/// plan was computed from so it can be undone exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlanJson")]
pub struct MdmPlan {
    row_perm: Vec<usize>,
    dataflow: Dataflow,
    source_dataflow: Dataflow,
}

#[derive(Deserialize)]
struct PlanJson {
    row_perm: Vec<usize>,
    dataflow: Dataflow,
    #[serde(default)]
    source_dataflow: Dataflow,
}

impl TryFrom<PlanJson> for MdmPlan {
    type Error = Error;

    fn try_from(raw: PlanJson) -> Result<Self> {
        MdmPlan::new(raw.row_perm, raw.dataflow, raw.source_dataflow)
    }
}

impl MdmPlan {
    pub fn new(row_perm: Vec<usize>, dataflow: Dataflow, source_dataflow: Dataflow) -> Result<Self> {
        let mut seen = vec![false; row_perm.len()];
        for &p in &row_perm {
            if p >= row_perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Geometry(format!(
                    "row permutation {row_perm:?} is not a bijection"
                )));
            }
        }
        Ok(Self {
            row_perm,
            dataflow,
            source_dataflow,
        })
    }

    pub fn identity(rows: usize, dataflow: Dataflow) -> Self {
        Self {
            row_perm: (0..rows).collect(),
            dataflow,
            source_dataflow: dataflow,
        }
    }

    pub fn row_perm(&self) -> &[usize] {
        &self.row_perm
    }

    pub fn dataflow(&self) -> Dataflow {
        self.dataflow
    }

    pub fn source_dataflow(&self) -> Dataflow {
        self.source_dataflow
    }

    pub fn rows(&self) -> usize {
        self.row_perm.len()
    }

    /// Physical row of logical row `row`.
    pub fn position(&self, row: usize) -> usize {
        self.row_perm[row]
    }

    pub fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.row_perm.len()];
        for (rho, &j) in self.row_perm.iter().enumerate() {
            inv[j] = rho;
        }
        inv
    }
}
