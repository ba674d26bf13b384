//! Closed-form operation counts, calibrated per-op times and cost reports.
//!
//! The rotation formulas come in two flavors. The *tap-exact* fields count
//! the rotations the slot engines actually perform (a cross kernel has
//! `k_w + k_h - 2` nonzero tap offsets — its center needs none) and are the
//! quantities the simulator ledgers must reproduce. The *literal* fields
//! keep the dense complexity-table form, which bills `k_w + k_h - 1` taps
//! for a cross kernel and attributes the input-rotation scheme's extra tap
//! rotations to its ex-Rot aggregate. Acceptance binds to the tap-exact
//! variant; the literal one is reported alongside.
//!
//! Non-divisible channel counts are zero-padded to whole ciphertexts, so
//! every formula is written in terms of ciphertext (pack) counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelPattern;
use crate::mimo::MimoScheme;

/// Kernel-matrix sparsity flag at the analytic layer level. Independent of
/// the kernel flag: a layer may be exRot-Free with cross kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerMatrixPattern {
    #[serde(rename = "dense")]
    Dense,
    #[serde(rename = "exrot_free")]
    ExRotFree,
}

/// Analytic description of one convolutional layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub c_i: usize,
    pub c_o: usize,
    pub k_w: usize,
    pub k_h: usize,
    pub w: usize,
    pub h: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_kernel_pattern", with = "kernel_pattern_serde")]
    pub kernel: KernelPattern,
    #[serde(default = "default_matrix_pattern")]
    pub matrix: LayerMatrixPattern,
}

fn default_stride() -> usize {
    1
}

fn default_kernel_pattern() -> KernelPattern {
    KernelPattern::Regular
}

fn default_matrix_pattern() -> LayerMatrixPattern {
    LayerMatrixPattern::Dense
}

mod kernel_pattern_serde {
    use super::KernelPattern;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<Ser: Serializer>(p: &KernelPattern, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.serialize_str(match p {
            KernelPattern::Regular => "regular",
            KernelPattern::Cross => "cross",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<KernelPattern, D::Error> {
        match String::deserialize(d)?.as_str() {
            "regular" => Ok(KernelPattern::Regular),
            "cross" => Ok(KernelPattern::Cross),
            other => Err(serde::de::Error::custom(format!(
                "unknown kernel pattern {other:?}"
            ))),
        }
    }
}

impl LayerSpec {
    pub fn conv(c_i: usize, c_o: usize, k: usize, w: usize, h: usize) -> Self {
        Self {
            c_i,
            c_o,
            k_w: k,
            k_h: k,
            w,
            h,
            stride: 1,
            kernel: KernelPattern::Regular,
            matrix: LayerMatrixPattern::Dense,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelPattern) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_matrix(mut self, matrix: LayerMatrixPattern) -> Self {
        self.matrix = matrix;
        self
    }

    /// Parameters per kernel, i.e. taps including the center.
    pub fn taps(&self) -> usize {
        match self.kernel {
            KernelPattern::Regular => self.k_w * self.k_h,
            KernelPattern::Cross => self.k_w + self.k_h - 1,
        }
    }

    /// Taps that need a rotation.
    pub fn nonzero_taps(&self) -> usize {
        self.taps() - 1
    }
}

/// Plaintext floating-point cost of a layer. Deliberately independent of
/// the HE pattern flags: the striated layer is the capacity-equivalent of
/// its dense counterpart, so pattern changes leave FLOPs untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsCount {
    /// (2 c_i k_w k_h - 1) · H · W · c_o
    pub exact: u64,
    /// 2 k_w k_h · c_i c_o · H W
    pub approx: u64,
}

pub fn flops(layer: &LayerSpec) -> FlopsCount {
    let k = (layer.k_w * layer.k_h) as u64;
    let hw = (layer.w * layer.h) as u64;
    let (c_i, c_o) = (layer.c_i as u64, layer.c_o as u64);
    FlopsCount {
        exact: (2 * c_i * k - 1) * hw * c_o,
        approx: 2 * k * c_i * c_o * hw,
    }
}

/// Rotation counts of one layer at packing capacity `c_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotCounts {
    /// Output-rotation-scheme in-Rot: one rotation per nonzero tap per
    /// input ciphertext (tap-exact).
    pub in_rot: u64,
    /// Literal complexity-table in-Rot. Identical for regular kernels but
    /// billing a cross kernel for all `k_w + k_h - 1` taps, although its
    /// center needs no rotation. The simulator ledgers match the tap-exact
    /// field.
    pub in_rot_table: u64,
    /// Output-rotation-scheme ex-Rot: `(c_n - 1)` per output ciphertext.
    pub ex_rot_output: u64,
    /// Input-rotation-scheme ex-Rot aggregate in the literal dense form:
    /// `(c_n - 1) k_w k_h` per input ciphertext. It folds the extra tap
    /// rotations of realigned inputs into the ex-Rot bill.
    pub ex_rot_input: u64,
    /// Ledger ex-Rot under the input-rotation scheme: only the channel
    /// realignments, `(c_n - 1)` per input ciphertext.
    pub ex_rot_input_alignment: u64,
    /// Ledger in-Rot under the input-rotation scheme: tap rotations over
    /// the original and every realigned input copy.
    pub in_rot_input_total: u64,
    /// Cheaper ex-Rot bill: `((c_n-1)/c_n) min(k_w k_h c_i, c_o)`; zero for
    /// exRot-Free layers.
    pub ex_rot_chosen: u64,
    pub scheme: MimoScheme,
}

impl RotCounts {
    /// In-Rot the simulator ledger shows under the selected scheme.
    pub fn ledger_in(&self) -> u64 {
        match self.scheme {
            MimoScheme::OutputRotation => self.in_rot,
            MimoScheme::InputRotation => self.in_rot_input_total,
        }
    }

    /// Ex-Rot the simulator ledger shows under the selected scheme. The
    /// fields are already zero for exRot-Free layers.
    pub fn ledger_ex(&self) -> u64 {
        match self.scheme {
            MimoScheme::OutputRotation => self.ex_rot_output,
            MimoScheme::InputRotation => self.ex_rot_input_alignment,
        }
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

pub fn rot_counts(layer: &LayerSpec, c_n: usize) -> RotCounts {
    assert!(c_n >= 1, "packing capacity must be at least 1");
    let packs_i = ceil_div(layer.c_i, c_n) as u64;
    let packs_o = ceil_div(layer.c_o, c_n) as u64;
    let nz = layer.nonzero_taps() as u64;
    let k_lit = (layer.k_w * layer.k_h) as u64;
    let exrot_free = layer.matrix == LayerMatrixPattern::ExRotFree;
    let diag = c_n as u64 - 1;
    let scheme = crate::mimo::select_scheme(layer.c_i, layer.c_o, layer.k_w, layer.k_h);
    let (ex_out, ex_in, ex_align, in_input) = if exrot_free {
        (0, 0, 0, packs_i * nz)
    } else {
        (
            packs_o * diag,
            packs_i * diag * k_lit,
            packs_i * diag,
            packs_i * c_n as u64 * nz,
        )
    };
    let literal_taps = match layer.kernel {
        KernelPattern::Regular => nz,
        KernelPattern::Cross => layer.taps() as u64,
    };
    RotCounts {
        in_rot: packs_i * nz,
        in_rot_table: packs_i * literal_taps,
        ex_rot_output: ex_out,
        ex_rot_input: ex_in,
        ex_rot_input_alignment: ex_align,
        in_rot_input_total: in_input,
        ex_rot_chosen: ex_out.min(ex_in),
        scheme,
    }
}

/// Plaintext-multiplication count of one layer at capacity `c_n`.
pub fn mult_count(layer: &LayerSpec, c_n: usize) -> u64 {
    let packs_i = ceil_div(layer.c_i, c_n) as u64;
    let packs_o = ceil_div(layer.c_o, c_n) as u64;
    let taps = layer.taps() as u64;
    match layer.matrix {
        LayerMatrixPattern::Dense => packs_i * packs_o * c_n as u64 * taps,
        LayerMatrixPattern::ExRotFree => packs_i * packs_o * taps,
    }
}

/// Addition count of one layer: every product is accumulated, one running
/// sum per output ciphertext.
pub fn add_count(layer: &LayerSpec, c_n: usize) -> u64 {
    let packs_o = ceil_div(layer.c_o, c_n) as u64;
    mult_count(layer, c_n).saturating_sub(packs_o)
}

/// In-Rot/ex-Rot totals of one inverted-residual block (1x1 expand to
/// `e*D`, exRot-Free cross 3x3, 1x1 project back to `D`) at capacity `c_n`.
///
/// Divisible dims reduce to the closed form `(4/c_n) e D` in-Rot plus
/// `((c_n-1)/c_n) 2 D` ex-Rot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRot {
    pub in_rot: u64,
    pub ex_rot: u64,
}

impl BlockRot {
    pub fn total(&self) -> u64 {
        self.in_rot + self.ex_rot
    }
}

/// Analytic layers of one block, in evaluation order.
pub fn striablock_layers(d: usize, e: usize, hw: usize) -> [LayerSpec; 3] {
    let inner = e * d;
    [
        LayerSpec::conv(d, inner, 1, hw, hw),
        LayerSpec::conv(inner, inner, 3, hw, hw)
            .with_kernel(KernelPattern::Cross)
            .with_matrix(LayerMatrixPattern::ExRotFree),
        LayerSpec::conv(inner, d, 1, hw, hw),
    ]
}

pub fn striablock_rot(d: usize, e: usize, c_n: usize) -> Result<BlockRot> {
    if d == 0 || e == 0 || c_n == 0 {
        return Err(Error::Config("block dims must be positive".into()));
    }
    if e * d < c_n {
        return Err(Error::Config(format!(
            "inner width {} below packing capacity {c_n}: the mask degenerates",
            e * d
        )));
    }
    let mut in_rot = 0;
    let mut ex_rot = 0;
    for layer in striablock_layers(d, e, 4) {
        let counts = rot_counts(&layer, c_n);
        in_rot += counts.ledger_in();
        ex_rot += counts.ledger_ex();
    }
    Ok(BlockRot { in_rot, ex_rot })
}

/// Proportionality coefficient between a block's base dimension and its
/// rotation count: `2 ((c_n-1)/c_n + 2e/c_n)`. Its e-slope is `4/c_n`, so
/// shallow stages (small `c_n`) are far more sensitive to the scaling
/// factor than deep ones.
pub fn sensitivity_coefficient(e: f64, c_n: f64) -> f64 {
    2.0 * ((c_n - 1.0) / c_n + 2.0 * e / c_n)
}

/// Measured per-op costs, keyed by capacity (rotations) or padded input
/// dimension (whole tap sets), with log2-linear interpolation between keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub in_rot_ms: Vec<(usize, f64)>,
    pub ex_rot_ms: Vec<(usize, f64)>,
    pub cross_tapset_ms: Vec<(usize, f64)>,
    pub regular_tapset_ms: Vec<(usize, f64)>,
    /// Free parameter; no measured per-op figure backs it. Defaults to a
    /// tenth of the shallow-stage in-Rot cost and never feeds a count
    /// check.
    pub mult_ms: f64,
    /// Small constant keeping additions below half a percent of the
    /// estimated total on the preset networks.
    pub add_ms: f64,
}

impl CalibrationTable {
    /// The built-in reference measurement set (AMD 3995, 4 threads).
    /// Ratios are the meaningful content; the absolute numbers do not
    /// transfer across hardware.
    pub fn paper_defaults() -> Self {
        Self {
            in_rot_ms: vec![
                (2, 16.10),
                (8, 13.13),
                (32, 11.48),
                (128, 9.68),
                (512, 8.82),
            ],
            ex_rot_ms: vec![
                (2, 5.71),
                (8, 7.50),
                (32, 11.30),
                (128, 14.50),
                (512, 18.93),
            ],
            cross_tapset_ms: vec![
                (4, 23.27),
                (8, 22.78),
                (16, 23.80),
                (32, 23.93),
                (64, 23.94),
            ],
            regular_tapset_ms: vec![
                (4, 70.58),
                (8, 77.41),
                (16, 91.85),
                (32, 105.00),
                (64, 128.85),
            ],
            mult_ms: 1.61,
            add_ms: 0.005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, table) in [
            ("in_rot_ms", &self.in_rot_ms),
            ("ex_rot_ms", &self.ex_rot_ms),
            ("cross_tapset_ms", &self.cross_tapset_ms),
            ("regular_tapset_ms", &self.regular_tapset_ms),
        ] {
            if table.is_empty() {
                return Err(Error::Config(format!("calibration table {name} is empty")));
            }
            let mut prev = 0usize;
            for &(key, value) in table {
                if key <= prev {
                    return Err(Error::Config(format!(
                        "calibration table {name} keys must strictly increase"
                    )));
                }
                if !value.is_finite() || value <= 0.0 {
                    return Err(Error::Config(format!(
                        "calibration table {name} entry at {key} must be positive, got {value}"
                    )));
                }
                prev = key;
            }
        }
        if self.mult_ms <= 0.0 || self.add_ms <= 0.0 {
            return Err(Error::Config("per-op costs must be positive".into()));
        }
        Ok(())
    }

    pub fn in_rot_cost(&self, c_n: usize) -> Interpolated {
        interpolate(&self.in_rot_ms, c_n)
    }

    pub fn ex_rot_cost(&self, c_n: usize) -> Interpolated {
        interpolate(&self.ex_rot_ms, c_n)
    }

    /// Whole-kernel tap-set cost at padded input dimension `n_dim`.
    pub fn tapset_cost(&self, pattern: KernelPattern, n_dim: usize) -> Interpolated {
        match pattern {
            KernelPattern::Cross => interpolate(&self.cross_tapset_ms, n_dim),
            KernelPattern::Regular => interpolate(&self.regular_tapset_ms, n_dim),
        }
    }
}

/// An interpolated calibration value; `clamped` marks queries outside the
/// measured key range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interpolated {
    pub ms: f64,
    pub clamped: bool,
}

fn interpolate(table: &[(usize, f64)], key: usize) -> Interpolated {
    let first = table.first().expect("validated non-empty");
    let last = table.last().expect("validated non-empty");
    if key <= first.0 {
        return Interpolated {
            ms: first.1,
            clamped: key < first.0,
        };
    }
    if key >= last.0 {
        return Interpolated {
            ms: last.1,
            clamped: key > last.0,
        };
    }
    let idx = table.partition_point(|&(k, _)| k <= key);
    let (k0, v0) = table[idx - 1];
    let (k1, v1) = table[idx];
    if k0 == key {
        return Interpolated { ms: v0, clamped: false };
    }
    let t = ((key as f64).log2() - (k0 as f64).log2()) / ((k1 as f64).log2() - (k0 as f64).log2());
    Interpolated {
        ms: v0 + (v1 - v0) * t,
        clamped: false,
    }
}

/// Operation totals a time estimate is computed from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub in_rot: u64,
    pub ex_rot: u64,
    pub mult: u64,
    pub add: u64,
}

impl OpCounts {
    pub fn accumulate(&mut self, other: &OpCounts) {
        self.in_rot += other.in_rot;
        self.ex_rot += other.ex_rot;
        self.mult += other.mult;
        self.add += other.add;
    }
}

/// Milliseconds for the given counts at capacity `c_n`.
pub fn estimate_time(counts: &OpCounts, c_n: usize, calib: &CalibrationTable) -> Interpolated {
    let in_rot = calib.in_rot_cost(c_n);
    let ex_rot = calib.ex_rot_cost(c_n);
    Interpolated {
        ms: counts.in_rot as f64 * in_rot.ms
            + counts.ex_rot as f64 * ex_rot.ms
            + counts.mult as f64 * calib.mult_ms
            + counts.add as f64 * calib.add_ms,
        clamped: (counts.in_rot > 0 && in_rot.clamped) || (counts.ex_rot > 0 && ex_rot.clamped),
    }
}

/// Cost row for one layer of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub c_i: usize,
    pub c_o: usize,
    pub k_w: usize,
    pub k_h: usize,
    pub hw: usize,
    pub c_n: usize,
    pub scheme: String,
    pub dominance: String,
    pub in_rot: u64,
    pub ex_rot: u64,
    pub mult: u64,
    pub add: u64,
    pub flops: u64,
    pub est_ms: f64,
    pub clamped: bool,
}

/// Per-layer and aggregate cost report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total: OpCounts,
    pub total_flops: u64,
    pub total_est_ms: f64,
    pub warnings: Vec<String>,
}

impl CostReport {
    pub fn from_layers(layers: Vec<LayerCost>, warnings: Vec<String>) -> Self {
        let mut total = OpCounts::default();
        let mut total_flops = 0u64;
        let mut total_est_ms = 0.0;
        for layer in &layers {
            total.accumulate(&OpCounts {
                in_rot: layer.in_rot,
                ex_rot: layer.ex_rot,
                mult: layer.mult,
                add: layer.add,
            });
            total_flops += layer.flops;
            total_est_ms += layer.est_ms;
        }
        Self {
            layers,
            total,
            total_flops,
            total_est_ms,
            warnings,
        }
    }

    /// Per-layer rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "name,c_i,c_o,k_w,k_h,hw,c_n,scheme,dominance,in_rot,ex_rot,mult,add,flops,est_ms,clamped\n",
        );
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{}\n",
                l.name,
                l.c_i,
                l.c_o,
                l.k_w,
                l.k_h,
                l.hw,
                l.c_n,
                l.scheme,
                l.dominance,
                l.in_rot,
                l.ex_rot,
                l.mult,
                l.add,
                l.flops,
                l.est_ms,
                l.clamped
            ));
        }
        out.push_str(&format!(
            "total,,,,,,,,,{},{},{},{},{},{:.6},\n",
            self.total.in_rot,
            self.total.ex_rot,
            self.total.mult,
            self.total.add,
            self.total_flops,
            self.total_est_ms
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flops_examples() {
        let unit = LayerSpec::conv(1, 1, 1, 1, 1);
        assert_eq!(flops(&unit).exact, 1);
        let layer = LayerSpec::conv(64, 64, 3, 56, 56);
        // (2*64*9 - 1) * 3136 * 64
        assert_eq!(flops(&layer).exact, 231_010_304);
        assert_eq!(flops(&layer).approx, 2 * 9 * 64 * 64 * 3136);
        let doubled = LayerSpec::conv(64, 128, 3, 56, 56);
        assert_eq!(flops(&doubled).exact, 2 * flops(&layer).exact);
    }

    #[test]
    fn rot_counts_dense_example() {
        let layer = LayerSpec::conv(4, 4, 3, 4, 4);
        let counts = rot_counts(&layer, 2);
        assert_eq!(counts.in_rot, 16);
        assert_eq!(counts.ex_rot_output, 2);
        assert_eq!(counts.ex_rot_input, 18);
        assert_eq!(counts.ex_rot_chosen, 2);
        assert_eq!(counts.scheme, MimoScheme::OutputRotation);
    }

    #[test]
    fn capacity_one_never_ex_rotates() {
        for k in [1usize, 3, 5] {
            let layer = LayerSpec::conv(16, 48, k, 8, 8);
            let counts = rot_counts(&layer, 1);
            assert_eq!(counts.ex_rot_output, 0);
            assert_eq!(counts.ex_rot_input, 0);
            assert_eq!(counts.ex_rot_chosen, 0);
        }
    }

    #[test]
    fn cross_exrot_free_tap_exact_vs_literal() {
        let layer = LayerSpec::conv(64, 64, 3, 16, 16)
            .with_kernel(KernelPattern::Cross)
            .with_matrix(LayerMatrixPattern::ExRotFree);
        let counts = rot_counts(&layer, 2);
        assert_eq!(counts.in_rot, 64 * 4 / 2);
        assert_eq!(counts.in_rot_table, 64 * 5 / 2);
        assert_eq!(counts.ex_rot_chosen, 0);
        assert_eq!(counts.ledger_ex(), 0);
    }

    #[test]
    fn mult_count_table_rows() {
        let dense = LayerSpec::conv(4, 4, 3, 4, 4);
        assert_eq!(mult_count(&dense, 2), 72);
        let masked = dense.clone().with_matrix(LayerMatrixPattern::ExRotFree);
        assert_eq!(mult_count(&masked, 2), 36);
        assert_eq!(mult_count(&dense, 1), mult_count(&masked, 1));
    }

    #[test]
    fn striablock_rot_reproduces_block_rows() {
        for (d, e, c_n, expect_in, expect_ex) in [
            (32, 2, 2, 128, 32),
            (64, 4, 8, 128, 112),
            (128, 6, 32, 96, 248),
            (256, 8, 128, 64, 508),
        ] {
            let rot = striablock_rot(d, e, c_n).unwrap();
            assert_eq!((rot.in_rot, rot.ex_rot), (expect_in, expect_ex));
        }
    }

    #[test]
    fn striablock_rot_closed_form_on_divisible_dims() {
        for d in [8usize, 16, 32, 64] {
            for e in 1..=8usize {
                for c_n in [1usize, 2, 4, 8] {
                    if e * d < c_n {
                        continue;
                    }
                    let rot = striablock_rot(d, e, c_n).unwrap();
                    assert_eq!(rot.in_rot as usize, 4 * e * d / c_n);
                    assert_eq!(rot.ex_rot as usize, (c_n - 1) * 2 * d / c_n);
                }
            }
        }
    }

    #[test]
    fn striablock_rejects_degenerate_mask() {
        assert!(matches!(
            striablock_rot(2, 1, 8),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sensitivity_coefficient_values() {
        assert_eq!(sensitivity_coefficient(1.0, 2.0), 3.0);
        // e-slope is 4/c_n
        let slope = |c_n: f64| {
            sensitivity_coefficient(2.0, c_n) - sensitivity_coefficient(1.0, c_n)
        };
        assert!((slope(2.0) - 2.0).abs() < 1e-12);
        assert!((slope(512.0) - 4.0 / 512.0).abs() < 1e-12);
        assert!((slope(2.0) / slope(512.0) - 256.0).abs() < 1e-9);
        // flat in e as capacity grows
        let far = sensitivity_coefficient(100.0, 1e12) - sensitivity_coefficient(1.0, 1e12);
        assert!(far.abs() < 1e-9);
    }

    #[test]
    fn calibration_lookup_and_interpolation() {
        let calib = CalibrationTable::paper_defaults();
        calib.validate().unwrap();
        assert_eq!(calib.in_rot_cost(2).ms, 16.10);
        let mid = calib.in_rot_cost(16);
        assert!(!mid.clamped);
        assert!((mid.ms - 12.305).abs() < 1e-9);
        let low = calib.in_rot_cost(1);
        assert!(low.clamped);
        assert_eq!(low.ms, 16.10);
        let ratio = calib.tapset_cost(KernelPattern::Cross, 64).ms
            / calib.tapset_cost(KernelPattern::Regular, 64).ms;
        assert!((ratio - 0.19).abs() < 0.005);
    }

    #[test]
    fn rotation_costs_trend_opposite_ways_with_depth() {
        let calib = CalibrationTable::paper_defaults();
        let ladder = [2usize, 8, 32, 128, 512];
        for pair in ladder.windows(2) {
            assert!(calib.in_rot_cost(pair[0]).ms > calib.in_rot_cost(pair[1]).ms);
            assert!(calib.ex_rot_cost(pair[0]).ms < calib.ex_rot_cost(pair[1]).ms);
        }
    }

    #[test]
    fn tapset_ratio_ladder_within_half_a_point() {
        let calib = CalibrationTable::paper_defaults();
        for (n_dim, percent) in [(4usize, 33.0), (8, 29.0), (16, 26.0), (32, 23.0), (64, 19.0)] {
            let ratio = calib.tapset_cost(KernelPattern::Cross, n_dim).ms
                / calib.tapset_cost(KernelPattern::Regular, n_dim).ms;
            assert!(
                (ratio * 100.0 - percent).abs() <= 0.5,
                "ratio at N={n_dim} is {:.2}%, expected about {percent}%",
                ratio * 100.0
            );
        }
    }

    #[test]
    fn negative_calibration_entry_rejected() {
        let mut calib = CalibrationTable::paper_defaults();
        calib.ex_rot_ms[1].1 = -1.0;
        assert!(matches!(calib.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn estimate_time_basics() {
        let calib = CalibrationTable::paper_defaults();
        let zero = OpCounts::default();
        assert_eq!(estimate_time(&zero, 2, &calib).ms, 0.0);
        let one_in = OpCounts {
            in_rot: 1,
            ..OpCounts::default()
        };
        assert_eq!(estimate_time(&one_in, 2, &calib).ms, 16.10);
        // monotone in every count
        let more = OpCounts {
            in_rot: 2,
            ex_rot: 1,
            mult: 5,
            add: 9,
        };
        assert!(estimate_time(&more, 2, &calib).ms > 16.10);
        // capacity 1 sits outside the table: clamped flag raised
        assert!(estimate_time(&one_in, 1, &calib).clamped);
        assert!(!estimate_time(&zero, 1, &calib).clamped);
    }
}
