use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use mdm_core::analytic::{analytic_nf, mdm_map, mdm_map_oriented};
use mdm_core::bitslice::{dequantize, quantize, verify_theorem1, WeightDistribution};
use mdm_core::circuit::{measured_nf, write_netlist};
use mdm_core::crossbar::{default_significances, BitTile, CrossbarGeometry, Dataflow, ResistanceParams};
use mdm_core::experiments::{
    accuracy_sweep, calibrate_eta, dnn_tiles, hypothesis_fit, nf_benchmark, random_tiles, sample_weights,
    FitConfig, NoiseModel, NoiseReading, DNN_BITS, DNN_WEIGHT_SIGMA,
};
use mdm_core::io::{
    read_weights_csv, to_json_pretty, write_accuracy_csv, write_benchmark_csv, write_scatter_csv, write_weights_csv,
    NfReport,
};
use mdm_core::rng::stream_rng;
use mdm_core::Error;

#[derive(Parser)]
#[command(name = "mdm", version, about = "Parasitic-resistance analysis and row mapping for bit-sliced crossbars")]
struct Cli {
    /// Worker threads for tile-level parallelism (results do not depend on it).
    #[arg(long, global = true, env = "MDM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bit-slice a weight CSV into a tile.
    Quantize {
        weights: PathBuf,
        #[arg(long, default_value_t = 8)]
        bits: usize,
        /// Significance of the leading bit plane (its value is 2^-msb).
        #[arg(long, default_value_t = 1)]
        msb: i32,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Rebuild weight magnitudes from a tile.
    Dequantize {
        tile: PathBuf,
        /// Overrides the scale stored in the tile file.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compute the MDM row permutation and orientation for a tile.
    Map {
        tile: PathBuf,
        /// Keep this orientation instead of choosing one.
        #[arg(long)]
        dataflow: Option<Dataflow>,
        #[arg(long, default_value = "plan.json")]
        plan: PathBuf,
        #[arg(long, short, default_value = "mapped-tile.json")]
        out: PathBuf,
    },
    /// First-order nonideality prediction.
    Nf(TileArgs),
    /// Full resistive-mesh solve, with the prediction alongside.
    Simulate {
        #[command(flatten)]
        tile: TileArgs,
        /// Also write the mesh as a SPICE resistor list.
        #[arg(long)]
        netlist: Option<PathBuf>,
    },
    /// Check the bit-sparsity bound on sampled weights.
    Sparsity {
        #[arg(long, value_enum, default_value_t = DistKind::Exponential)]
        dist: DistKind,
        /// Rate for `exponential`, sigma for `half-normal`.
        #[arg(long, default_value_t = 1.0)]
        param: f64,
        #[arg(long, default_value_t = 1_000_000)]
        n: u64,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Regress measured against predicted nonideality on random tiles.
    Fit {
        #[command(flatten)]
        gen: RandomTiles,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, short, default_value = "fit-report.json")]
        out: PathBuf,
        #[arg(long, default_value = "scatter.csv")]
        scatter: PathBuf,
    },
    /// Mean nonideality under the four dataflow/mapping configurations.
    Benchmark {
        #[command(flatten)]
        gen: DnnTiles,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Fit the noise coefficient eta against simulated deficits.
    Calibrate {
        #[command(flatten)]
        gen: DnnTiles,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Matrix-vector error with and without MDM across eta values.
    Accuracy {
        /// Weight CSV; sampled from a half-normal when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        rows: usize,
        #[arg(long, default_value_t = 8)]
        groups: usize,
        #[arg(long, default_value_t = DNN_WEIGHT_SIGMA)]
        sigma: f64,
        #[arg(long, default_value_t = DNN_BITS)]
        bits: usize,
        /// Comma-separated eta values.
        #[arg(long, value_delimiter = ',', required_unless_present = "model")]
        eta: Vec<f64>,
        /// Noise model written by `calibrate`.
        #[arg(long, conflicts_with = "eta")]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Reading::Distance)]
        reading: Reading,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TileArgs {
    /// Tile JSON; without it an empty `--rows x --cols` tile is used.
    tile: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    cols: usize,
    /// Read the tile in this orientation.
    #[arg(long)]
    dataflow: Option<Dataflow>,
    /// Apply the MDM mapping before evaluating.
    #[arg(long)]
    mdm: bool,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParamArgs {
    /// Wire segment resistance (ohm).
    #[arg(long, default_value_t = 2.5)]
    r: f64,
    #[arg(long, default_value_t = 3.0e5)]
    ron: f64,
    /// `inf` leaves inactive devices open.
    #[arg(long, default_value_t = 3.0e6)]
    roff: f64,
    #[arg(long, default_value_t = 1.0)]
    vin: f64,
}

impl ParamArgs {
    fn params(&self) -> mdm_core::Result<ResistanceParams> {
        ResistanceParams::new(self.r, self.ron, self.roff, self.vin)
    }
}

#[derive(Args)]
struct RandomTiles {
    #[arg(long, default_value_t = 500)]
    tiles: usize,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    cols: usize,
    #[arg(long, default_value_t = 0.8)]
    sparsity: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct DnnTiles {
    #[arg(long, default_value_t = 100)]
    tiles: usize,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    cols: usize,
    #[arg(long, default_value_t = DNN_BITS)]
    bits: usize,
    /// Half-normal weight sigma.
    #[arg(long, default_value_t = DNN_WEIGHT_SIGMA)]
    sigma: f64,
    /// Use uniformly random tiles at this sparsity instead of quantized weights.
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long, default_value_t = 11)]
    seed: u64,
}

impl DnnTiles {
    fn generate(&self) -> mdm_core::Result<Vec<BitTile>> {
        match self.sparsity {
            Some(s) => random_tiles(self.tiles, self.rows, self.cols, s, self.seed),
            None => {
                let dist = WeightDistribution::HalfNormal { sigma: self.sigma };
                dnn_tiles(&dist, self.tiles, self.rows, self.cols, self.bits, self.seed)
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistKind {
    Exponential,
    HalfNormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reading {
    Distance,
    Indicator,
}

#[derive(Serialize)]
struct CalibrationReport {
    #[serde(flatten)]
    model: NoiseModel,
    n_tiles: usize,
    rows: usize,
    cols: usize,
    params: ResistanceParams,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn read_json(path: &Path) -> CliResult<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn load_tile(path: &Path) -> CliResult<BitTile> {
    Ok(serde_json::from_value(read_json(path)?)?)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> mdm_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn cmd_tile(args: &TileArgs, simulate: bool, netlist: Option<&Path>) -> CliResult {
    let params = args.params.params()?;
    let mut tile = match &args.tile {
        Some(p) => load_tile(p)?,
        None if args.mdm => return Err(Failure::Usage("--mdm needs a tile to map".into())),
        None => BitTile::empty(CrossbarGeometry::new(args.rows, args.cols, Dataflow::Conventional)?),
    };
    if let Some(df) = args.dataflow {
        tile = tile.with_dataflow(df);
    }
    if args.mdm {
        tile = mdm_map(&tile).1;
    }
    let predicted = analytic_nf(&tile, &params);
    let measured = if simulate { Some(measured_nf(&tile, &params)?) } else { None };
    if let Some(path) = netlist {
        fs::write(path, write_netlist(&tile, &params, &vec![params.v_in; tile.rows()])?)?;
    }
    let report = NfReport::new(*tile.geometry(), params, &predicted, measured.as_ref());
    emit(args.out.as_deref(), to_json_pretty(&report)?.as_bytes())
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Quantize { weights, bits, msb, out } => {
            let w = read_weights_csv(fs::File::open(weights)?)?;
            let significances: Vec<i32> = (msb..).take(bits).collect();
            let q = quantize(&w, &significances)?;
            let mut json = serde_json::to_value(&q.tile)?;
            json["scale"] = q.scale.into();
            emit(out.as_deref(), to_json_pretty(&json)?.as_bytes())
        }
        Command::Dequantize { tile, scale, out } => {
            let json = read_json(&tile)?;
            let scale = scale.or_else(|| json.get("scale").and_then(Value::as_f64)).unwrap_or(1.0);
            let tile: BitTile = serde_json::from_value(json)?;
            let bytes = csv_bytes(|b| write_weights_csv(&dequantize(&tile, scale), b))?;
            emit(out.as_deref(), &bytes)
        }
        Command::Map { tile, dataflow, plan, out } => {
            let tile = load_tile(&tile)?;
            let (p, mapped) = match dataflow {
                Some(df) => mdm_map_oriented(&tile, df),
                None => mdm_map(&tile),
            };
            fs::write(plan, to_json_pretty(&p)?)?;
            fs::write(out, to_json_pretty(&mapped)?)?;
            Ok(())
        }
        Command::Nf(args) => cmd_tile(&args, false, None),
        Command::Simulate { tile, netlist } => cmd_tile(&tile, true, netlist.as_deref()),
        Command::Sparsity { dist, param, n, bits, seed, out } => {
            let dist = match dist {
                DistKind::Exponential => WeightDistribution::Exponential { lambda: param },
                DistKind::HalfNormal => WeightDistribution::HalfNormal { sigma: param },
            };
            let report = verify_theorem1(&dist, n, bits, seed)?;
            emit(out.as_deref(), to_json_pretty(&report)?.as_bytes())
        }
        Command::Fit { gen, params, out, scatter } => {
            let config = FitConfig {
                n_tiles: gen.tiles,
                rows: gen.rows,
                cols: gen.cols,
                sparsity: gen.sparsity,
                params: params.params()?,
                seed: gen.seed,
            };
            let outcome = hypothesis_fit(&config)?;
            fs::write(out, to_json_pretty(&outcome)?)?;
            fs::write(scatter, csv_bytes(|b| write_scatter_csv(&outcome.points, b))?)?;
            Ok(())
        }
        Command::Benchmark { gen, params, out } => {
            let outcome = nf_benchmark(&gen.generate()?, &params.params()?)?;
            emit(out.as_deref(), &csv_bytes(|b| write_benchmark_csv(&outcome.rows, b))?)
        }
        Command::Calibrate { gen, params, out } => {
            let params = params.params()?;
            let model = calibrate_eta(&gen.generate()?, &params)?;
            let report = CalibrationReport {
                model,
                n_tiles: gen.tiles,
                rows: gen.rows,
                cols: gen.cols,
                params,
            };
            emit(out.as_deref(), to_json_pretty(&report)?.as_bytes())
        }
        Command::Accuracy {
            weights,
            rows,
            groups,
            sigma,
            bits,
            eta,
            model,
            reading,
            trials,
            seed,
            out,
        } => {
            let w = match weights {
                Some(p) => read_weights_csv(fs::File::open(p)?)?,
                None => {
                    let dist = WeightDistribution::HalfNormal { sigma };
                    sample_weights(&dist, rows, groups, &mut stream_rng(seed, u64::MAX))?
                }
            };
            let etas = match model {
                Some(p) => vec![serde_json::from_value::<NoiseModel>(read_json(&p)?)?.eta],
                None => eta,
            };
            let reading = match reading {
                Reading::Distance => NoiseReading::Distance,
                Reading::Indicator => NoiseReading::Indicator,
            };
            let points = accuracy_sweep(&w, &default_significances(bits), &etas, reading, trials, seed)?;
            emit(out.as_deref(), &csv_bytes(|b| write_accuracy_csv(&points, b))?)
        }
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.render().to_string().trim_end().to_owned(), 2),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("usage", e.to_string(), 2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => fail("usage", m, 2),
        Err(Failure::Core(e)) => fail(e.kind(), e.to_string(), 1),
    }
}
