//! File formats: tensors, kernels, kernel matrices, block weights and
//! calibration tables.
//!
//! Tensors use a small binary container — magic, dims, scale, then
//! little-endian 64-bit fixed-point values — plus a plain-text CSV loader
//! for small test data. Kernels and kernel matrices are structured text;
//! cross kernels serialize only their backbone weights. Block weights live
//! in a directory of kernel-matrix files with a JSON manifest; the importer
//! re-validates mask membership on load.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::block::{BlockShape, StriaBlock};
use crate::cost::CalibrationTable;
use crate::error::{Error, Result};
use crate::kernel::{KernelPattern, KernelSpec};
use crate::mimo::{KernelMatrix, MatrixPattern};
use crate::packing::FeatureTensor;
use crate::scalar::Slot;

const TENSOR_MAGIC: &[u8; 4] = b"FTN1";

fn parse_err(context: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        msg: msg.into(),
    }
}

// --- tensors ---------------------------------------------------------------

/// Write a fixed-point tensor: header (magic, c, w, h, scale_bits) then
/// `c*h*w` little-endian i64 values.
pub fn write_tensor(path: &Path, tensor: &FeatureTensor<i64>, scale_bits: u32) -> Result<()> {
    let mut out = Vec::with_capacity(20 + tensor.values().len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    for dim in [
        tensor.channels() as u32,
        tensor.width() as u32,
        tensor.height() as u32,
        scale_bits,
    ] {
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for v in tensor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a fixed-point tensor and its declared scale.
pub fn read_tensor(path: &Path) -> Result<(FeatureTensor<i64>, u32)> {
    let ctx = path.display().to_string();
    let mut file = fs::File::open(path)?;
    let mut header = [0u8; 20];
    file.read_exact(&mut header)
        .map_err(|_| parse_err(&ctx, "truncated header"))?;
    if &header[0..4] != TENSOR_MAGIC {
        return Err(parse_err(&ctx, "bad magic"));
    }
    let dim = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (c, w, h, scale_bits) = (dim(0) as usize, dim(1) as usize, dim(2) as usize, dim(3));
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != c * w * h * 8 {
        return Err(parse_err(
            &ctx,
            format!("expected {} values, found {} bytes", c * w * h, raw.len()),
        ));
    }
    let data = raw
        .chunks_exact(8)
        .map(|b| i64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((FeatureTensor::new(c, w, h, data)?, scale_bits))
}

/// CSV test-tensor loader: first line `c,w,h`, then one row of `w` values
/// per line, channels concatenated. Values may be integers or decimals.
pub fn read_tensor_csv<S: Slot>(path: &Path) -> Result<FeatureTensor<S>> {
    let ctx = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err(&ctx, "empty file"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| parse_err(&ctx, "bad header")))
        .collect::<Result<_>>()?;
    let [c, w, h] = dims[..] else {
        return Err(parse_err(&ctx, "header must be c,w,h"));
    };
    let mut data = Vec::with_capacity(c * w * h);
    for line in lines {
        for token in line.split(',') {
            data.push(parse_scalar(token.trim(), &ctx)?);
        }
    }
    if data.len() != c * w * h {
        return Err(parse_err(
            &ctx,
            format!("expected {} values, got {}", c * w * h, data.len()),
        ));
    }
    FeatureTensor::new(c, w, h, data)
}

fn parse_scalar<S: Slot>(token: &str, ctx: &str) -> Result<S> {
    if let Ok(v) = token.parse::<i64>() {
        return Ok(S::from_fixed(v));
    }
    // dyadic decimals stay exact across all scalar modes
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(ctx, format!("bad value {token:?}")))?;
    let scaled = (v * 4096.0).round() as i64;
    Ok(S::from_fixed(scaled).mul_ratio(1, 4096))
}

// --- kernels ---------------------------------------------------------------

fn format_weight<S: Slot>(w: &S) -> String {
    w.to_string()
}

/// Kernel text form. Regular kernels list the full grid; cross kernels list
/// only the backbone (column including center, then row without it).
pub fn kernel_to_string<S: Slot>(kernel: &KernelSpec<S>) -> String {
    let mut out = String::new();
    match kernel.pattern() {
        KernelPattern::Regular => {
            out.push_str(&format!("pattern regular {} {}\n", kernel.k_h(), kernel.k_w()));
            let ch = (kernel.k_h() / 2) as i64;
            let cw = (kernel.k_w() / 2) as i64;
            for dy in -ch..=ch {
                let row: Vec<String> = (-cw..=cw)
                    .map(|dx| format_weight(kernel.weight_at(dy, dx).expect("dense")))
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        KernelPattern::Cross => {
            out.push_str(&format!("pattern cross {} {}\n", kernel.k_h(), kernel.k_w()));
            let ch = (kernel.k_h() / 2) as i64;
            let cw = (kernel.k_w() / 2) as i64;
            let col: Vec<String> = (-ch..=ch)
                .map(|dy| format_weight(kernel.weight_at(dy, 0).expect("backbone")))
                .collect();
            out.push_str(&format!("col {}\n", col.join(" ")));
            let row: Vec<String> = (-cw..=cw)
                .filter(|&dx| dx != 0)
                .map(|dx| format_weight(kernel.weight_at(0, dx).expect("backbone")))
                .collect();
            out.push_str(&format!("row {}\n", row.join(" ")));
        }
    }
    out
}

fn parse_weights<S: Slot>(line: &str, ctx: &str) -> Result<Vec<S>> {
    line.split_whitespace()
        .map(|t| parse_scalar(t, ctx))
        .collect()
}

/// Parse one kernel from lines; consumes exactly the kernel's lines.
fn parse_kernel<'a, S: Slot>(
    lines: &mut impl Iterator<Item = &'a str>,
    ctx: &str,
) -> Result<KernelSpec<S>> {
    let header = lines
        .next()
        .ok_or_else(|| parse_err(ctx, "missing kernel header"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let ["pattern", pattern, k_h, k_w] = tokens[..] else {
        return Err(parse_err(ctx, format!("bad kernel header {header:?}")));
    };
    let k_h: usize = k_h.parse().map_err(|_| parse_err(ctx, "bad k_h"))?;
    let k_w: usize = k_w.parse().map_err(|_| parse_err(ctx, "bad k_w"))?;
    match pattern {
        "regular" => {
            let mut weights = Vec::with_capacity(k_h * k_w);
            for _ in 0..k_h {
                let line = lines
                    .next()
                    .ok_or_else(|| parse_err(ctx, "truncated kernel grid"))?;
                weights.extend(parse_weights::<S>(line, ctx)?);
            }
            KernelSpec::regular(k_h, k_w, weights)
        }
        "cross" => {
            let col_line = lines
                .next()
                .ok_or_else(|| parse_err(ctx, "missing col line"))?;
            let row_line = lines
                .next()
                .ok_or_else(|| parse_err(ctx, "missing row line"))?;
            let col = parse_weights::<S>(
                col_line
                    .strip_prefix("col")
                    .ok_or_else(|| parse_err(ctx, "expected col line"))?,
                ctx,
            )?;
            let row = parse_weights::<S>(
                row_line
                    .strip_prefix("row")
                    .ok_or_else(|| parse_err(ctx, "expected row line"))?,
                ctx,
            )?;
            KernelSpec::cross(k_h, k_w, col, row)
        }
        other => Err(parse_err(ctx, format!("unknown pattern {other:?}"))),
    }
}

pub fn kernel_from_string<S: Slot>(text: &str) -> Result<KernelSpec<S>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    parse_kernel(&mut lines, "kernel")
}

// --- kernel matrices --------------------------------------------------------

/// Kernel-matrix text form: a header `matrix <c_o> <c_i> <pattern...>`
/// followed by a sparse entry list.
pub fn matrix_to_string<S: Slot>(matrix: &KernelMatrix<S>) -> String {
    let pattern = match matrix.pattern() {
        MatrixPattern::Dense => "dense".to_string(),
        MatrixPattern::ExRotFree { c_n } => format!("exrot_free {c_n}"),
        MatrixPattern::Sparse => "sparse".to_string(),
    };
    let mut out = format!("matrix {} {} {pattern}\n", matrix.c_o(), matrix.c_i());
    for (row, col, kernel) in matrix.present() {
        out.push_str(&format!("entry {row} {col}\n"));
        out.push_str(&kernel_to_string(kernel));
    }
    out
}

pub fn matrix_from_string<S: Slot>(text: &str) -> Result<KernelMatrix<S>> {
    let ctx = "kernel matrix";
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let header = lines.next().ok_or_else(|| parse_err(ctx, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 4 || tokens[0] != "matrix" {
        return Err(parse_err(ctx, format!("bad matrix header {header:?}")));
    }
    let c_o: usize = tokens[1].parse().map_err(|_| parse_err(ctx, "bad c_o"))?;
    let c_i: usize = tokens[2].parse().map_err(|_| parse_err(ctx, "bad c_i"))?;
    let pattern = match tokens[3] {
        "dense" => MatrixPattern::Dense,
        "sparse" => MatrixPattern::Sparse,
        "exrot_free" => {
            let c_n = tokens
                .get(4)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(ctx, "exrot_free needs a capacity"))?;
            MatrixPattern::ExRotFree { c_n }
        }
        other => return Err(parse_err(ctx, format!("unknown pattern {other:?}"))),
    };
    let mut entries: Vec<Option<KernelSpec<S>>> = vec![None; c_o * c_i];
    while let Some(line) = lines.next() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let ["entry", row, col] = tokens[..] else {
            return Err(parse_err(ctx, format!("expected entry line, got {line:?}")));
        };
        let row: usize = row.parse().map_err(|_| parse_err(ctx, "bad row"))?;
        let col: usize = col.parse().map_err(|_| parse_err(ctx, "bad col"))?;
        if row >= c_o || col >= c_i {
            return Err(parse_err(ctx, format!("entry ({row}, {col}) out of range")));
        }
        entries[row * c_i + col] = Some(parse_kernel(&mut lines, ctx)?);
    }
    KernelMatrix::from_entries(c_o, c_i, pattern, entries)
}

// --- block weight container --------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct BlockManifest {
    d: usize,
    e: usize,
    c_n: usize,
    layers: Vec<String>,
}

/// Write a block as a directory: `manifest.json` plus one kernel-matrix
/// file per layer.
pub fn write_block<S: Slot>(dir: &Path, block: &StriaBlock<S>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let shape = block.shape();
    let manifest = BlockManifest {
        d: shape.d,
        e: shape.e,
        c_n: shape.c_n,
        layers: vec!["expand.km".into(), "mid.km".into(), "project.km".into()],
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| parse_err("manifest", e.to_string()))?;
    fs::write(dir.join("manifest.json"), manifest_json)?;
    for (name, matrix) in [
        ("expand.km", block.expand()),
        ("mid.km", block.mid()),
        ("project.km", block.project()),
    ] {
        let mut file = fs::File::create(dir.join(name))?;
        file.write_all(matrix_to_string(matrix).as_bytes())?;
    }
    Ok(())
}

/// Load a block, re-validating shapes and mask membership; weights outside
/// the mask are rejected.
pub fn read_block<S: Slot>(dir: &Path) -> Result<StriaBlock<S>> {
    let manifest_path = dir.join("manifest.json");
    let manifest: BlockManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .map_err(|e| parse_err(&manifest_path.display().to_string(), e.to_string()))?;
    if manifest.layers.len() != 3 {
        return Err(parse_err("manifest", "expected exactly three layers"));
    }
    let shape = BlockShape::new(manifest.d, manifest.e, manifest.c_n)?;
    let mut matrices = Vec::with_capacity(3);
    for name in &manifest.layers {
        matrices.push(matrix_from_string::<S>(&fs::read_to_string(dir.join(name))?)?);
    }
    let project = matrices.pop().expect("three layers");
    let mid = matrices.pop().expect("three layers");
    let expand = matrices.pop().expect("three layers");
    StriaBlock::from_matrices(shape, expand, mid, project)
}

// --- calibration tables -------------------------------------------------------

/// Calibration text form: one `<table> <key> <ms>` line per measured point
/// plus scalar `mult_ms`/`add_ms` lines.
pub fn calibration_to_string(calib: &CalibrationTable) -> String {
    let mut out = String::new();
    for (name, table) in [
        ("in_rot_ms", &calib.in_rot_ms),
        ("ex_rot_ms", &calib.ex_rot_ms),
        ("cross_tapset_ms", &calib.cross_tapset_ms),
        ("regular_tapset_ms", &calib.regular_tapset_ms),
    ] {
        for (key, value) in table {
            out.push_str(&format!("{name} {key} {value}\n"));
        }
    }
    out.push_str(&format!("mult_ms {}\n", calib.mult_ms));
    out.push_str(&format!("add_ms {}\n", calib.add_ms));
    out
}

pub fn calibration_from_string(text: &str) -> Result<CalibrationTable> {
    let ctx = "calibration";
    let mut calib = CalibrationTable {
        in_rot_ms: Vec::new(),
        ex_rot_ms: Vec::new(),
        cross_tapset_ms: Vec::new(),
        regular_tapset_ms: Vec::new(),
        mult_ms: CalibrationTable::paper_defaults().mult_ms,
        add_ms: CalibrationTable::paper_defaults().add_ms,
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[..] {
            [name @ ("mult_ms" | "add_ms"), value] => {
                let value: f64 = value.parse().map_err(|_| parse_err(ctx, "bad value"))?;
                if name == "mult_ms" {
                    calib.mult_ms = value;
                } else {
                    calib.add_ms = value;
                }
            }
            [name, key, value] => {
                let key: usize = key.parse().map_err(|_| parse_err(ctx, "bad key"))?;
                let value: f64 = value.parse().map_err(|_| parse_err(ctx, "bad value"))?;
                let table = match name {
                    "in_rot_ms" => &mut calib.in_rot_ms,
                    "ex_rot_ms" => &mut calib.ex_rot_ms,
                    "cross_tapset_ms" => &mut calib.cross_tapset_ms,
                    "regular_tapset_ms" => &mut calib.regular_tapset_ms,
                    other => return Err(parse_err(ctx, format!("unknown table {other:?}"))),
                };
                table.push((key, value));
            }
            _ => return Err(parse_err(ctx, format!("bad line {line:?}"))),
        }
    }
    calib.validate()?;
    Ok(calib)
}
