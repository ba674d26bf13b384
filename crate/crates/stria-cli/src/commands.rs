//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stria_core::block::{BlockShape, StriaBlock};
use stria_core::cost::{
    add_count, mult_count, rot_counts, striablock_rot, CalibrationTable, CostReport, LayerSpec,
    OpCounts,
};
use stria_core::engine::{OpLedger, SimContext};
use stria_core::gen;
use stria_core::mimo::{mimo_conv, select_scheme, KernelMatrix, MimoScheme};
use stria_core::oracle::{max_abs_diff, mimo_conv_plain};
use stria_core::packing::{pack, unpack, FeatureTensor};
use stria_core::planner::{
    self, compare_networks, plan_network, NetworkCost, NetworkSpec, ScheduleParams, StagePlan,
};
use stria_core::scalar::Slot;
use stria_core::{io as core_io, Error};

use crate::util::{parse_block_spec, parse_layer_spec, spatial_for_capacity, ReportHeader};

/// Simulation failed an oracle comparison (exit code 1) rather than
/// erroring on inputs.
#[derive(Debug)]
pub enum CliError {
    OracleMismatch(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Core(err)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn mismatch(msg: impl Into<String>) -> CliError {
    CliError::OracleMismatch(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Float,
}

// --- simulate ----------------------------------------------------------------

#[derive(Debug, Serialize)]
struct SimulateConfig {
    target: String,
    mode: Mode,
    slots: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    header: ReportHeader,
    target: String,
    mode: Mode,
    slots: usize,
    ledger: OpLedger,
    expected_in_rot: Option<u64>,
    expected_ex_rot: Option<u64>,
    oracle_max_abs_diff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_mode_max_abs_diff: Option<f64>,
    pass: bool,
}

pub struct SimulateArgs {
    pub block: Option<String>,
    pub layer: Option<String>,
    pub network: Option<PathBuf>,
    pub mode: Mode,
    pub seed: u64,
    pub slots: usize,
    pub out: Option<PathBuf>,
}

struct SimRun<S: Slot> {
    input: FeatureTensor<S>,
    output: FeatureTensor<S>,
    ledger: OpLedger,
    oracle_diff: f64,
}

fn tolerance<S: Slot>() -> f64 {
    if S::EXACT {
        0.0
    } else {
        1e-5
    }
}

fn simulate_block<S: Slot>(
    shape: BlockShape,
    slots: usize,
    seed: u64,
) -> CliResult<SimRun<S>> {
    let (w, h) = spatial_for_capacity(slots, shape.c_n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block: StriaBlock<S> = gen::random_block(&mut rng, shape);
    let input = gen::random_tensor::<S>(&mut rng, shape.d, w, h, 3);
    let mut ctx = SimContext::<S>::new(slots)?;
    let (output, ledger) = block.eval_encrypted(&input, &mut ctx)?;
    let plain = block.eval_plain(&input, false)?;
    let oracle_diff = max_abs_diff(&output, &plain);
    Ok(SimRun {
        input,
        output,
        ledger,
        oracle_diff,
    })
}

fn simulate_layer<S: Slot>(
    layer: &LayerSpec,
    c_n: usize,
    slots: usize,
    seed: u64,
) -> CliResult<SimRun<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix: KernelMatrix<S> = random_matrix_for(layer, c_n, &mut rng);
    let input = gen::random_tensor::<S>(&mut rng, layer.c_i, layer.w, layer.h, 3);
    let mut ctx = SimContext::<S>::new(slots)?;
    let (ciphers, layout) = pack(&input, &ctx)?;
    if layout.c_n != c_n {
        return Err(Error::Config(format!(
            "slots {slots} give capacity {} at {}x{}, spec says {c_n}",
            layout.c_n, layer.w, layer.h
        ))
        .into());
    }
    let scheme = select_scheme(layer.c_i, layer.c_o, layer.k_w, layer.k_h);
    let before = ctx.ledger_snapshot();
    let outs = mimo_conv(&mut ctx, &ciphers, &matrix, &layout, scheme)?;
    let ledger = ctx.ledger_since(&before);
    let mut out_layout = layout.clone();
    out_layout.channels = layer.c_o;
    out_layout.channel_order = (0..layer.c_o).collect();
    let output = unpack(&outs, &out_layout)?;
    let output = if layer.stride > 1 {
        output.subsample(layer.stride)
    } else {
        output
    };
    let plain = mimo_conv_plain(&input, &matrix)?;
    let plain = if layer.stride > 1 {
        plain.subsample(layer.stride)
    } else {
        plain
    };
    // the other scheme must agree in value
    let other = match scheme {
        MimoScheme::OutputRotation => MimoScheme::InputRotation,
        MimoScheme::InputRotation => MimoScheme::OutputRotation,
    };
    let alt = mimo_conv(&mut ctx, &ciphers, &matrix, &layout, other)?;
    let alt_out = unpack(&alt, &out_layout)?;
    let alt_out = if layer.stride > 1 {
        alt_out.subsample(layer.stride)
    } else {
        alt_out
    };
    let oracle_diff = max_abs_diff(&output, &plain).max(max_abs_diff(&output, &alt_out));
    Ok(SimRun {
        input,
        output,
        ledger,
        oracle_diff,
    })
}

fn random_matrix_for<S: Slot>(
    layer: &LayerSpec,
    c_n: usize,
    rng: &mut ChaCha8Rng,
) -> KernelMatrix<S> {
    use stria_core::cost::LayerMatrixPattern;
    match layer.matrix {
        LayerMatrixPattern::Dense => KernelMatrix::dense_from_fn(layer.c_o, layer.c_i, |_, _| {
            gen::random_kernel(rng, layer.k_h, layer.k_w, layer.kernel, 4)
        })
        .expect("valid dims"),
        LayerMatrixPattern::ExRotFree => {
            KernelMatrix::exrot_free_from_fn(layer.c_o, layer.c_i, c_n, |_, _| {
                gen::random_kernel(rng, layer.k_h, layer.k_w, layer.kernel, 4)
            })
            .expect("valid dims")
        }
    }
}

struct NetworkRun<S: Slot> {
    ledger: OpLedger,
    oracle_diff: f64,
    expected: OpCounts,
    /// Final output of each stage's block chain.
    stage_outputs: Vec<FeatureTensor<S>>,
}

/// Chain the blocks of each stage; inter-stage transitions are explicit
/// re-packs outside the counted model, so every stage starts from a fresh
/// seeded tensor.
fn simulate_network<S: Slot>(network: &NetworkSpec, seed: u64) -> CliResult<NetworkRun<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = OpLedger::default();
    let mut worst = 0.0f64;
    let mut expected = OpCounts::default();
    let mut stage_outputs = Vec::with_capacity(network.stages.len());
    for stage in &network.stages {
        let shape = BlockShape::new(stage.d, stage.e, stage.c_n)?;
        let mut plain = gen::random_tensor::<S>(&mut rng, stage.d, stage.hw, stage.hw, 2);
        let mut encrypted = plain.clone();
        for _ in 0..stage.blocks {
            let block: StriaBlock<S> = gen::random_block(&mut rng, shape);
            let mut ctx = SimContext::<S>::new(network.slots)?;
            let (out, ledger) = block.eval_encrypted(&encrypted, &mut ctx)?;
            total += ledger;
            plain = block.eval_plain(&plain, false)?;
            worst = worst.max(max_abs_diff(&out, &plain));
            encrypted = out;
            let rot = striablock_rot(stage.d, stage.e, stage.c_n)?;
            expected.in_rot += rot.in_rot;
            expected.ex_rot += rot.ex_rot;
        }
        stage_outputs.push(encrypted);
    }
    Ok(NetworkRun {
        ledger: total,
        oracle_diff: worst,
        expected,
        stage_outputs,
    })
}

pub fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    let (target, ledger, oracle_diff, cross_diff, expected, tensors) = match (
        &args.block,
        &args.layer,
        &args.network,
    ) {
        (Some(spec), None, None) => {
            let (d, e, c_n) = parse_block_spec(spec)?;
            let shape = BlockShape::new(d, e, c_n)?;
            let rot = shape.rot_counts()?;
            let exact = simulate_block::<i64>(shape, args.slots, args.seed)?;
            let cross = match args.mode {
                Mode::Exact => None,
                Mode::Float => {
                    let float = simulate_block::<f64>(shape, args.slots, args.seed)?;
                    if float.oracle_diff > tolerance::<f64>() {
                        return Err(mismatch(format!(
                            "float oracle diff {}",
                            float.oracle_diff
                        )));
                    }
                    Some(max_abs_diff_f64(&exact.output, &float.output))
                }
            };
            (
                format!("block d={d},e={e},cn={c_n}"),
                exact.ledger,
                exact.oracle_diff,
                cross,
                Some((rot.in_rot, rot.ex_rot)),
                Some((exact.input, exact.output)),
            )
        }
        (None, Some(spec), None) => {
            let arg = parse_layer_spec(spec, args.slots)?;
            let counts = rot_counts(&arg.layer, arg.c_n);
            let exact = simulate_layer::<i64>(&arg.layer, arg.c_n, args.slots, args.seed)?;
            let cross = match args.mode {
                Mode::Exact => None,
                Mode::Float => {
                    let float = simulate_layer::<f64>(&arg.layer, arg.c_n, args.slots, args.seed)?;
                    if float.oracle_diff > tolerance::<f64>() {
                        return Err(mismatch(format!(
                            "float oracle diff {}",
                            float.oracle_diff
                        )));
                    }
                    Some(max_abs_diff_f64(&exact.output, &float.output))
                }
            };
            (
                format!("layer {spec}"),
                exact.ledger,
                exact.oracle_diff,
                cross,
                Some((counts.ledger_in(), counts.ledger_ex())),
                Some((exact.input, exact.output)),
            )
        }
        (None, None, Some(path)) => {
            let network = read_network(path)?;
            let exact = simulate_network::<i64>(&network, args.seed)?;
            let cross = match args.mode {
                Mode::Exact => None,
                Mode::Float => {
                    let float = simulate_network::<f64>(&network, args.seed)?;
                    if float.oracle_diff > tolerance::<f64>() {
                        return Err(mismatch(format!("float oracle diff {}", float.oracle_diff)));
                    }
                    if float.ledger != exact.ledger {
                        return Err(mismatch("float and exact ledgers disagree"));
                    }
                    let diff = exact
                        .stage_outputs
                        .iter()
                        .zip(&float.stage_outputs)
                        .map(|(a, b)| max_abs_diff_f64(a, b))
                        .fold(0.0, f64::max);
                    Some(diff)
                }
            };
            (
                format!("network {}", path.display()),
                exact.ledger,
                exact.oracle_diff,
                cross,
                Some((exact.expected.in_rot, exact.expected.ex_rot)),
                None,
            )
        }
        _ => {
            return Err(Error::Config(
                "simulate needs exactly one of --block, --layer, --network".into(),
            )
            .into())
        }
    };
    let config = SimulateConfig {
        target: target.clone(),
        mode: args.mode,
        slots: args.slots,
        seed: args.seed,
    };
    let mut pass = oracle_diff <= tolerance::<i64>();
    if let Some((in_rot, ex_rot)) = expected {
        pass &= ledger.in_rot == in_rot && ledger.ex_rot == ex_rot;
    }
    if let Some(diff) = cross_diff {
        pass &= diff < 1e-5;
    }
    let summary = SimulateSummary {
        header: ReportHeader::new(&config, args.seed),
        target,
        mode: args.mode,
        slots: args.slots,
        ledger,
        expected_in_rot: expected.map(|e| e.0),
        expected_ex_rot: expected.map(|e| e.1),
        oracle_max_abs_diff: oracle_diff,
        cross_mode_max_abs_diff: cross_diff,
        pass,
    };
    let summary_json = to_pretty_json(&summary)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        fs::write(dir.join("summary.json"), &summary_json).map_err(Error::from)?;
        fs::write(dir.join("ledger.json"), to_pretty_json(&ledger)?).map_err(Error::from)?;
        if let Some((input, output)) = tensors {
            core_io::write_tensor(&dir.join("input.ftn"), &input, 0)?;
            core_io::write_tensor(&dir.join("output.ftn"), &output, 0)?;
        }
    }
    println!("{summary_json}");
    if !pass {
        return Err(mismatch(format!(
            "oracle max |diff| = {oracle_diff}, ledger = {ledger:?}"
        )));
    }
    Ok(())
}

fn max_abs_diff_f64<A: Slot, B: Slot>(a: &FeatureTensor<A>, b: &FeatureTensor<B>) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
        .fold(0.0, f64::max)
}

// --- count ---------------------------------------------------------------------

pub struct CountArgs {
    pub block: Option<String>,
    pub layer: Option<String>,
    pub network: Option<PathBuf>,
    pub sweep: bool,
    pub verify: bool,
    pub threads: usize,
    pub slots: usize,
    pub seed: u64,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CountConfig {
    target: String,
    slots: usize,
    verify: bool,
}

fn load_calibration(path: &Option<PathBuf>) -> CliResult<CalibrationTable> {
    match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            Ok(core_io::calibration_from_string(&text)?)
        }
        None => Ok(CalibrationTable::paper_defaults()),
    }
}

pub fn run_count(args: CountArgs) -> CliResult<()> {
    let calib = load_calibration(&args.calibration)?;
    if args.sweep {
        return run_count_sweep(&args);
    }
    let (target, report) = if let Some(spec) = &args.block {
        let (d, e, c_n) = parse_block_spec(spec)?;
        striablock_rot(d, e, c_n)?; // validates the shape
        let network = NetworkSpec {
            input: 0,
            slots: args.slots,
            stages: vec![stria_core::planner::Stage {
                hw: spatial_for_capacity(args.slots, c_n)?.0,
                d,
                blocks: 1,
                e,
                c_n,
            }],
            stem: None,
            head: None,
        };
        if args.verify {
            verify_block(d, e, c_n, args.seed)?;
        }
        (format!("block {spec}"), planner::report(&network, &calib)?)
    } else if let Some(spec) = &args.layer {
        let arg = parse_layer_spec(spec, args.slots)?;
        if args.verify {
            verify_layer(&arg.layer, arg.c_n, args.seed)?;
        }
        let report =
            planner::report_layers("layer", std::slice::from_ref(&arg.layer), args.slots, &calib)?;
        (format!("layer {spec}"), report)
    } else if let Some(path) = &args.network {
        let network = read_network(path)?;
        if args.verify {
            let run = simulate_network::<i64>(&network, args.seed)?;
            if run.oracle_diff != 0.0 {
                return Err(mismatch(format!("network oracle diff {}", run.oracle_diff)));
            }
            if run.ledger.in_rot != run.expected.in_rot
                || run.ledger.ex_rot != run.expected.ex_rot
            {
                return Err(mismatch(format!(
                    "network ledger {:?} does not match formulas {:?}",
                    (run.ledger.in_rot, run.ledger.ex_rot),
                    (run.expected.in_rot, run.expected.ex_rot)
                )));
            }
        }
        (
            format!("network {}", path.display()),
            planner::report(&network, &calib)?,
        )
    } else {
        return Err(Error::Config(
            "count needs one of --block, --layer, --network, --sweep".into(),
        )
        .into());
    };
    emit_report(&target, &report, args.verify, args.slots, &args.out)?;
    Ok(())
}

fn emit_report(
    target: &str,
    report: &CostReport,
    verified: bool,
    slots: usize,
    out: &Option<PathBuf>,
) -> CliResult<()> {
    let config = CountConfig {
        target: target.to_string(),
        slots,
        verify: verified,
    };
    #[derive(Serialize)]
    struct CountSummary<'a> {
        header: ReportHeader,
        target: &'a str,
        verified: bool,
        report: &'a CostReport,
    }
    let summary = CountSummary {
        header: ReportHeader::new(&config, 0),
        target,
        verified,
        report,
    };
    let json = to_pretty_json(&summary)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        fs::write(dir.join("report.json"), &json).map_err(Error::from)?;
        fs::write(dir.join("report.csv"), report.to_csv()).map_err(Error::from)?;
    }
    println!("{json}");
    Ok(())
}

/// Simulate one layer at desk scale and require ledger/formula equality.
fn verify_layer(layer: &LayerSpec, c_n: usize, seed: u64) -> CliResult<()> {
    // shrink the spatial footprint: counts do not depend on it
    let footprint = if layer.k_w.max(layer.k_h) <= 3 { 16 } else { 64 };
    let slots = c_n * footprint;
    let side = (footprint as f64).sqrt() as usize;
    let mut small = layer.clone();
    small.w = side;
    small.h = side;
    let counts = rot_counts(&small, c_n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix: KernelMatrix<i64> = random_matrix_for(&small, c_n, &mut rng);
    let input = gen::random_tensor::<i64>(&mut rng, small.c_i, side, side, 3);
    let plain = mimo_conv_plain(&input, &matrix)?;
    for scheme in [MimoScheme::OutputRotation, MimoScheme::InputRotation] {
        let mut ctx = SimContext::<i64>::new(slots)?;
        let (ciphers, layout) = pack(&input, &ctx)?;
        let before = ctx.ledger_snapshot();
        let outs = mimo_conv(&mut ctx, &ciphers, &matrix, &layout, scheme)?;
        let ledger = ctx.ledger_since(&before);
        let mut out_layout = layout.clone();
        out_layout.channels = small.c_o;
        out_layout.channel_order = (0..small.c_o).collect();
        if unpack(&outs, &out_layout)? != plain {
            return Err(mismatch(format!("{scheme:?} output differs from oracle")));
        }
        let (want_in, want_ex) = match scheme {
            MimoScheme::OutputRotation => (counts.in_rot, counts.ex_rot_output),
            MimoScheme::InputRotation => {
                (counts.in_rot_input_total, counts.ex_rot_input_alignment)
            }
        };
        if ledger.in_rot != want_in || ledger.ex_rot != want_ex {
            return Err(mismatch(format!(
                "{scheme:?} ledger ({}, {}) != formulas ({want_in}, {want_ex})",
                ledger.in_rot, ledger.ex_rot
            )));
        }
        if ledger.mult != mult_count(&small, c_n) || ledger.add != add_count(&small, c_n) {
            return Err(mismatch(format!(
                "{scheme:?} mult/add ledger ({}, {}) != formulas ({}, {})",
                ledger.mult,
                ledger.add,
                mult_count(&small, c_n),
                add_count(&small, c_n)
            )));
        }
    }
    Ok(())
}

fn verify_block(d: usize, e: usize, c_n: usize, seed: u64) -> CliResult<()> {
    let shape = BlockShape::new(d, e, c_n)?;
    let slots = c_n * 16;
    let run = simulate_block::<i64>(shape, slots, seed)?;
    if run.oracle_diff != 0.0 {
        return Err(mismatch(format!("block oracle diff {}", run.oracle_diff)));
    }
    let rot = shape.rot_counts()?;
    if run.ledger.in_rot != rot.in_rot || run.ledger.ex_rot != rot.ex_rot {
        return Err(mismatch(format!(
            "block ledger ({}, {}) != formulas ({}, {})",
            run.ledger.in_rot, run.ledger.ex_rot, rot.in_rot, rot.ex_rot
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    c_i: usize,
    c_o: usize,
    c_n: usize,
    k: usize,
    in_rot: u64,
    ex_rot_output: u64,
    ex_rot_input: u64,
    ex_rot_chosen: u64,
    mult: u64,
    verified: bool,
}

fn run_count_sweep(args: &CountArgs) -> CliResult<()> {
    let dims = [4usize, 8, 16, 32];
    let mut configs = Vec::new();
    for c_i in dims {
        for c_o in dims {
            for c_n in [2usize, 4, 8] {
                for k in [1usize, 3] {
                    configs.push((c_i, c_o, c_n, k));
                }
            }
        }
    }
    let threads = args.threads.max(1);
    let seed = args.seed;
    let verify = args.verify;
    let chunk = configs.len().div_ceil(threads);
    let results: Vec<CliResult<Vec<SweepRow>>> = std::thread::scope(|scope| {
        configs
            .chunks(chunk)
            .map(|chunk| {
                scope.spawn(move || {
                    let mut rows = Vec::with_capacity(chunk.len());
                    for &(c_i, c_o, c_n, k) in chunk {
                        let layer = LayerSpec::conv(c_i, c_o, k, 4, 4);
                        let counts = rot_counts(&layer, c_n);
                        if verify {
                            verify_layer(&layer, c_n, seed)?;
                        }
                        rows.push(SweepRow {
                            c_i,
                            c_o,
                            c_n,
                            k,
                            in_rot: counts.in_rot,
                            ex_rot_output: counts.ex_rot_output,
                            ex_rot_input: counts.ex_rot_input,
                            ex_rot_chosen: counts.ex_rot_chosen,
                            mult: mult_count(&layer, c_n),
                            verified: verify,
                        });
                    }
                    Ok(rows)
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|handle| handle.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut rows = Vec::with_capacity(configs.len());
    for result in results {
        rows.extend(result?);
    }
    let mut csv = String::from("c_i,c_o,c_n,k,in_rot,ex_rot_output,ex_rot_input,ex_rot_chosen,mult,verified\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.c_i,
            r.c_o,
            r.c_n,
            r.k,
            r.in_rot,
            r.ex_rot_output,
            r.ex_rot_input,
            r.ex_rot_chosen,
            r.mult,
            r.verified
        ));
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        fs::write(dir.join("sweep.csv"), &csv).map_err(Error::from)?;
    }
    println!(
        "sweep: {} configurations{}",
        rows.len(),
        if verify { ", all ledgers verified" } else { "" }
    );
    Ok(())
}

// --- plan ----------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
pub struct PlanFile {
    pub input: usize,
    #[serde(default)]
    pub slots: Option<usize>,
    pub stages: Vec<StagePlan>,
    #[serde(default)]
    pub stem: Option<LayerSpec>,
    #[serde(default)]
    pub head: Option<LayerSpec>,
}

pub struct PlanArgs {
    pub preset: Option<String>,
    pub spec: Option<PathBuf>,
    pub e_min: usize,
    pub e_max: usize,
    pub budget: f64,
    pub slots: usize,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn run_plan(args: PlanArgs) -> CliResult<()> {
    let calib = load_calibration(&args.calibration)?;
    let (name, file) = match (&args.preset, &args.spec) {
        (Some(name), None) => {
            let stages = match name.as_str() {
                "imagenet" => planner::imagenet_preset(),
                "tiny-imagenet" => planner::tiny_imagenet_preset(),
                "cifar" => planner::cifar_preset(),
                other => {
                    return Err(Error::Config(format!(
                        "unknown preset {other:?} (imagenet, tiny-imagenet, cifar)"
                    ))
                    .into())
                }
            };
            let input = match name.as_str() {
                "imagenet" => 224,
                "tiny-imagenet" => 64,
                _ => 32,
            };
            (
                name.clone(),
                PlanFile {
                    input,
                    slots: Some(args.slots),
                    stages,
                    stem: None,
                    head: None,
                },
            )
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            let file: PlanFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                msg: e.to_string(),
            })?;
            (
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "plan".into()),
                file,
            )
        }
        _ => {
            return Err(Error::Config("plan needs exactly one of --preset, --spec".into()).into())
        }
    };
    let params = ScheduleParams {
        e_min: args.e_min,
        e_max: args.e_max,
        budget_coef: args.budget,
    };
    let slots = file.slots.unwrap_or(args.slots);
    let network = plan_network(file.input, slots, &file.stages, &params, file.stem, file.head)?;
    let report = planner::report(&network, &calib)?;
    let ladder: Vec<usize> = network.stages.iter().map(|s| s.e).collect();
    println!(
        "plan {name}: capacities {:?}, expansion schedule {ladder:?}",
        network.stages.iter().map(|s| s.c_n).collect::<Vec<_>>()
    );
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        fs::write(dir.join("network.json"), to_pretty_json(&network)?).map_err(Error::from)?;
        emit_report(&format!("plan {name}"), &report, false, slots, &Some(dir.clone()))?;
    } else {
        emit_report(&format!("plan {name}"), &report, false, slots, &None)?;
    }
    Ok(())
}

fn read_network(path: &Path) -> CliResult<NetworkSpec> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        msg: e.to_string(),
    })?)
}

// --- calibrate --------------------------------------------------------------------

pub struct CalibrateArgs {
    pub paper_defaults: bool,
    pub input: Option<PathBuf>,
    pub query_cn: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn run_calibrate(args: CalibrateArgs) -> CliResult<()> {
    let calib = match (&args.paper_defaults, &args.input) {
        (true, None) => CalibrationTable::paper_defaults(),
        (false, Some(path)) => {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            core_io::calibration_from_string(&text)?
        }
        _ => {
            return Err(Error::Config(
                "calibrate needs exactly one of --paper-defaults, --input".into(),
            )
            .into())
        }
    };
    calib.validate()?;
    if let Some(c_n) = args.query_cn {
        let in_rot = calib.in_rot_cost(c_n);
        let ex_rot = calib.ex_rot_cost(c_n);
        println!(
            "c_n={c_n}: in_rot_ms={:.4}{} ex_rot_ms={:.4}{}",
            in_rot.ms,
            if in_rot.clamped { " (clamped)" } else { "" },
            ex_rot.ms,
            if ex_rot.clamped { " (clamped)" } else { "" },
        );
    }
    let text = core_io::calibration_to_string(&calib);
    if let Some(path) = &args.out {
        fs::write(path, &text).map_err(Error::from)?;
    } else {
        print!("{text}");
    }
    Ok(())
}

// --- compare ----------------------------------------------------------------------

pub struct CompareArgs {
    pub networks: Vec<PathBuf>,
    pub layer_files: Vec<PathBuf>,
    pub slots: usize,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn run_compare(args: CompareArgs) -> CliResult<()> {
    let calib = load_calibration(&args.calibration)?;
    let mut entries = Vec::new();
    for path in &args.networks {
        let network = read_network(path)?;
        let report = planner::report(&network, &calib)?;
        entries.push(NetworkCost::from_report(&stem_name(path), &report));
    }
    for path in &args.layer_files {
        let text = fs::read_to_string(path).map_err(Error::from)?;
        let layers: Vec<LayerSpec> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let report = planner::report_layers(&stem_name(path), &layers, args.slots, &calib)?;
        entries.push(NetworkCost::from_report(&stem_name(path), &report));
    }
    if entries.len() < 2 {
        return Err(Error::Config("compare needs at least two inputs".into()).into());
    }
    let table = compare_networks(entries);
    let json = to_pretty_json(&table)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        fs::write(dir.join("comparison.json"), &json).map_err(Error::from)?;
    }
    println!("{json}");
    for reversal in &table.reversals {
        println!(
            "reversal: {} is cheaper in FLOPs but {} is cheaper under packed HE",
            reversal.cheaper_flops, reversal.cheaper_he
        );
    }
    Ok(())
}

fn stem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn to_pretty_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut json = serde_json::to_string_pretty(value).map_err(|e| {
        CliError::Core(Error::Config(format!("serialization failed: {e}")))
    })?;
    json.push('\n');
    Ok(json)
}
