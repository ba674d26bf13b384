//! Multi-input multi-output packed convolution.
//!
//! A kernel matrix entry at (row, col) convolves input channel `col` into
//! output channel `row`. With `c_n` channels per ciphertext, the engine
//! gathers entries along the generalized diagonals of each `c_n x c_n`
//! block: the entries of diagonal offset `d` all produce intermediate
//! ciphertexts misaligned by the same `d` channel blocks.
//!
//! Two schemes realign them:
//!
//! * **Output rotation** (the default): per output ciphertext, the
//!   contributions of one diagonal are accumulated across all input
//!   ciphertexts first, then realigned with a single ex-Rot. Diagonal 0 is
//!   already aligned and rotates nothing.
//! * **Input rotation**: each input ciphertext is realigned once per
//!   nonzero diagonal (charged as ex-Rot) and every realigned copy then
//!   pays its own tap rotations (charged as in-Rot).
//!
//! Both schemes produce identical values; only the ledgers differ. A matrix
//! whose support lies inside the exRot-Free mask — entries with
//! `row ≡ col (mod c_n)` — uses only diagonal 0 and performs zero ex-Rot
//! under either scheme.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{RotKind, SimCipher, SimContext};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::packing::PackLayout;
use crate::scalar::Slot;
use crate::siso::tap_plaintext;

/// Which MIMO realignment scheme to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimoScheme {
    OutputRotation,
    InputRotation,
}

/// Declared sparsity pattern of a kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixPattern {
    /// Every (row, col) entry present.
    Dense,
    /// Entries only where `row ≡ col (mod c_n)`.
    ExRotFree { c_n: usize },
    /// Arbitrary support (block-diagonal groupings, imported nets).
    Sparse,
}

/// The exRot-Free support set: all (row, col) with `row ≡ col (mod c_n)`.
/// Equivalently rows `k + c_n*i` paired with columns `k + c_n*j` for every
/// residue `k`.
pub fn exrot_free_mask(c_i: usize, c_o: usize, c_n: usize) -> BTreeSet<(usize, usize)> {
    let mut mask = BTreeSet::new();
    for row in 0..c_o {
        for col in 0..c_i {
            if row % c_n == col % c_n {
                mask.insert((row, col));
            }
        }
    }
    mask
}

/// A `c_o x c_i` grid of optional kernels with uniform kernel dims.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<S: Slot> {
    c_o: usize,
    c_i: usize,
    k_h: usize,
    k_w: usize,
    pattern: MatrixPattern,
    entries: Vec<Option<KernelSpec<S>>>,
}

impl<S: Slot> KernelMatrix<S> {
    pub fn from_entries(
        c_o: usize,
        c_i: usize,
        pattern: MatrixPattern,
        entries: Vec<Option<KernelSpec<S>>>,
    ) -> Result<Self> {
        if c_o == 0 || c_i == 0 {
            return Err(Error::Shape("kernel matrix dims must be positive".into()));
        }
        if entries.len() != c_o * c_i {
            return Err(Error::Shape(format!(
                "expected {} entries for {c_o}x{c_i}, got {}",
                c_o * c_i,
                entries.len()
            )));
        }
        let dims = entries
            .iter()
            .flatten()
            .map(|k| (k.k_h(), k.k_w()))
            .next()
            .ok_or_else(|| Error::Pattern("kernel matrix has no entries".into()))?;
        for kernel in entries.iter().flatten() {
            if (kernel.k_h(), kernel.k_w()) != dims {
                return Err(Error::Shape("mixed kernel dims in one matrix".into()));
            }
        }
        let matrix = Self {
            c_o,
            c_i,
            k_h: dims.0,
            k_w: dims.1,
            pattern,
            entries,
        };
        matrix.validate_pattern()?;
        Ok(matrix)
    }

    pub fn dense_from_fn(
        c_o: usize,
        c_i: usize,
        mut f: impl FnMut(usize, usize) -> KernelSpec<S>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(c_o * c_i);
        for row in 0..c_o {
            for col in 0..c_i {
                entries.push(Some(f(row, col)));
            }
        }
        Self::from_entries(c_o, c_i, MatrixPattern::Dense, entries)
    }

    pub fn exrot_free_from_fn(
        c_o: usize,
        c_i: usize,
        c_n: usize,
        mut f: impl FnMut(usize, usize) -> KernelSpec<S>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(c_o * c_i);
        for row in 0..c_o {
            for col in 0..c_i {
                entries.push((row % c_n == col % c_n).then(|| f(row, col)));
            }
        }
        Self::from_entries(c_o, c_i, MatrixPattern::ExRotFree { c_n }, entries)
    }

    pub fn sparse_from_fn(
        c_o: usize,
        c_i: usize,
        mut f: impl FnMut(usize, usize) -> Option<KernelSpec<S>>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(c_o * c_i);
        for row in 0..c_o {
            for col in 0..c_i {
                entries.push(f(row, col));
            }
        }
        Self::from_entries(c_o, c_i, MatrixPattern::Sparse, entries)
    }

    fn validate_pattern(&self) -> Result<()> {
        match self.pattern {
            MatrixPattern::Dense => {
                if self.entries.iter().any(|e| e.is_none()) {
                    return Err(Error::Pattern("dense matrix has absent entries".into()));
                }
            }
            MatrixPattern::ExRotFree { c_n } => {
                if c_n == 0 {
                    return Err(Error::Pattern("exrot_free capacity must be >= 1".into()));
                }
                for (row, col, _) in self.present() {
                    if row % c_n != col % c_n {
                        return Err(Error::Pattern(format!(
                            "entry ({row}, {col}) violates the exRot-Free mask at c_n={c_n}"
                        )));
                    }
                }
            }
            MatrixPattern::Sparse => {}
        }
        Ok(())
    }

    pub fn c_o(&self) -> usize {
        self.c_o
    }

    pub fn c_i(&self) -> usize {
        self.c_i
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn pattern(&self) -> MatrixPattern {
        self.pattern
    }

    pub fn entry(&self, row: usize, col: usize) -> Option<&KernelSpec<S>> {
        self.entries[row * self.c_i + col].as_ref()
    }

    pub fn present(&self) -> impl Iterator<Item = (usize, usize, &KernelSpec<S>)> {
        let c_i = self.c_i;
        self.entries
            .iter()
            .enumerate()
            .filter_map(move |(idx, e)| e.as_ref().map(|k| (idx / c_i, idx % c_i, k)))
    }

    pub fn param_count(&self) -> usize {
        self.present().map(|(_, _, k)| k.param_count()).sum()
    }

    /// Tap positions used anywhere in the matrix.
    pub(crate) fn tap_union(&self) -> BTreeSet<(i64, i64)> {
        self.present()
            .flat_map(|(_, _, k)| k.present().map(|(dy, dx, _)| (dy, dx)))
            .collect()
    }

    /// Map every present kernel, keeping the support and pattern.
    pub fn map_kernels(
        &self,
        mut f: impl FnMut(usize, usize, &KernelSpec<S>) -> KernelSpec<S>,
    ) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(idx, e)| {
                e.as_ref()
                    .map(|k| f(idx / self.c_i, idx % self.c_i, k))
            })
            .collect();
        Self::from_entries(self.c_o, self.c_i, self.pattern, entries)
    }
}

/// Pick the cheaper realignment scheme: output rotation iff
/// `c_o <= k_w*k_h*c_i`, ties going to output rotation.
pub fn select_scheme(c_i: usize, c_o: usize, k_w: usize, k_h: usize) -> MimoScheme {
    if c_o <= k_w * k_h * c_i {
        MimoScheme::OutputRotation
    } else {
        MimoScheme::InputRotation
    }
}

struct MimoGeometry {
    c_n: usize,
    block: usize,
    packs_i: usize,
    packs_o: usize,
    /// For dense matrices, the matrix-wide tap union: a dense matrix is
    /// treated as zero-padded to whole ciphertexts, so every diagonal group
    /// exists with the full tap set and ledger counts follow the ceiling
    /// formulas even when `c_n` does not divide the channel counts. Sparse
    /// supports exploit their sparsity instead; absent entries cost nothing.
    dense_taps: Option<BTreeSet<(i64, i64)>>,
}

fn geometry<S: Slot>(matrix: &KernelMatrix<S>, layout: &PackLayout) -> Result<MimoGeometry> {
    if layout.tiles_per_channel != 1 {
        return Err(Error::Geometry(
            "convolution engines require whole channels per ciphertext (tiled packing unsupported)"
                .into(),
        ));
    }
    if layout.channels != matrix.c_i() {
        return Err(Error::Shape(format!(
            "layout packs {} channels, matrix expects {}",
            layout.channels,
            matrix.c_i()
        )));
    }
    let c_n = layout.c_n;
    Ok(MimoGeometry {
        c_n,
        block: layout.block_size(),
        packs_i: matrix.c_i().div_ceil(c_n),
        packs_o: matrix.c_o().div_ceil(c_n),
        dense_taps: (matrix.pattern() == MatrixPattern::Dense).then(|| matrix.tap_union()),
    })
}

/// Tap positions used by one diagonal group.
fn group_taps<S: Slot>(
    matrix: &KernelMatrix<S>,
    geo: &MimoGeometry,
    g: usize,
    h: usize,
    d: usize,
) -> BTreeSet<(i64, i64)> {
    if let Some(taps) = &geo.dense_taps {
        return taps.clone();
    }
    let mut taps = BTreeSet::new();
    for b in 0..geo.c_n {
        let col = h * geo.c_n + b;
        let row = g * geo.c_n + (b + d) % geo.c_n;
        if col >= matrix.c_i() || row >= matrix.c_o() {
            continue;
        }
        if let Some(kernel) = matrix.entry(row, col) {
            taps.extend(kernel.present().map(|(dy, dx, _)| (dy, dx)));
        }
    }
    taps
}

/// Tap-rotated copies of one ciphertext, keyed by (dy, dx).
type TapRotations<S> = BTreeMap<(i64, i64), SimCipher<S>>;

fn rotate_taps<S: Slot>(
    ctx: &mut SimContext<S>,
    cipher: &SimCipher<S>,
    layout: &PackLayout,
    taps: &BTreeSet<(i64, i64)>,
) -> Result<TapRotations<S>> {
    let mut rotated = BTreeMap::new();
    for &(dy, dx) in taps {
        let offset = dy * layout.padded_w as i64 + dx;
        let cipher = if offset == 0 {
            cipher.clone()
        } else {
            ctx.rotate(cipher, offset, RotKind::In)?
        };
        rotated.insert((dy, dx), cipher);
    }
    Ok(rotated)
}

/// Grouped output-rotation MIMO convolution.
pub fn mimo_conv_output_rot<S: Slot>(
    ctx: &mut SimContext<S>,
    inputs: &[SimCipher<S>],
    matrix: &KernelMatrix<S>,
    layout: &PackLayout,
) -> Result<Vec<SimCipher<S>>> {
    let geo = geometry(matrix, layout)?;
    if inputs.len() != geo.packs_i {
        return Err(Error::Shape(format!(
            "expected {} input ciphertexts, got {}",
            geo.packs_i,
            inputs.len()
        )));
    }
    // Tap rotations are shared by every group consuming an input ciphertext.
    let mut rotated_inputs = Vec::with_capacity(geo.packs_i);
    for (h, input) in inputs.iter().enumerate() {
        let mut needed = BTreeSet::new();
        for g in 0..geo.packs_o {
            for d in 0..geo.c_n {
                needed.extend(group_taps(matrix, &geo, g, h, d));
            }
        }
        rotated_inputs.push(rotate_taps(ctx, input, layout, &needed)?);
    }
    let mut outputs = Vec::with_capacity(geo.packs_o);
    for g in 0..geo.packs_o {
        // Accumulate each diagonal across all input ciphertexts, then
        // realign the sum once; this is what keeps ex-Rot at (c_n - 1) per
        // output ciphertext regardless of c_i.
        let mut aligned: Option<SimCipher<S>> = None;
        for d in 0..geo.c_n {
            let mut acc: Option<SimCipher<S>> = None;
            for (h, rotated) in rotated_inputs.iter().enumerate() {
                let taps = group_taps(matrix, &geo, g, h, d);
                for &(dy, dx) in &taps {
                    let plain = tap_plaintext(ctx, layout, dy, dx, |b| {
                        let col = h * geo.c_n + b;
                        let row = g * geo.c_n + (b + d) % geo.c_n;
                        if col >= matrix.c_i() || row >= matrix.c_o() {
                            return None;
                        }
                        matrix
                            .entry(row, col)
                            .and_then(|k| k.weight_at(dy, dx))
                            .cloned()
                    })?;
                    let term = ctx.mult_plain(&rotated[&(dy, dx)], &plain)?;
                    acc = Some(match acc {
                        Some(prev) => ctx.add(&prev, &term)?,
                        None => term,
                    });
                }
            }
            let Some(acc) = acc else { continue };
            let contribution = if d == 0 {
                acc
            } else {
                ctx.rotate(&acc, -((d * geo.block) as i64), RotKind::Ex)?
            };
            aligned = Some(match aligned {
                Some(prev) => ctx.add(&prev, &contribution)?,
                None => contribution,
            });
        }
        outputs.push(match aligned {
            Some(cipher) => cipher,
            None => zero_like(ctx, inputs),
        });
    }
    Ok(outputs)
}

/// Input-rotation MIMO convolution: inputs are realigned instead of
/// outputs. Each input ciphertext gains one channel-realignment rotation
/// per nonzero diagonal in use, and every realigned copy pays its own tap
/// rotations.
pub fn mimo_conv_input_rot<S: Slot>(
    ctx: &mut SimContext<S>,
    inputs: &[SimCipher<S>],
    matrix: &KernelMatrix<S>,
    layout: &PackLayout,
) -> Result<Vec<SimCipher<S>>> {
    let geo = geometry(matrix, layout)?;
    if inputs.len() != geo.packs_i {
        return Err(Error::Shape(format!(
            "expected {} input ciphertexts, got {}",
            geo.packs_i,
            inputs.len()
        )));
    }
    // (h, d) -> tap-rotated copies of the d-realigned input ciphertext h.
    let mut versions: BTreeMap<(usize, usize), TapRotations<S>> = BTreeMap::new();
    for (h, input) in inputs.iter().enumerate() {
        for d in 0..geo.c_n {
            let mut taps = BTreeSet::new();
            for g in 0..geo.packs_o {
                taps.extend(group_taps(matrix, &geo, g, h, d));
            }
            if taps.is_empty() {
                continue;
            }
            let base = if d == 0 {
                input.clone()
            } else {
                ctx.rotate(input, -((d * geo.block) as i64), RotKind::Ex)?
            };
            versions.insert((h, d), rotate_taps(ctx, &base, layout, &taps)?);
        }
    }
    let mut outputs = Vec::with_capacity(geo.packs_o);
    for g in 0..geo.packs_o {
        let mut acc: Option<SimCipher<S>> = None;
        for h in 0..geo.packs_i {
            for d in 0..geo.c_n {
                let taps = group_taps(matrix, &geo, g, h, d);
                if taps.is_empty() {
                    continue;
                }
                let rotated = &versions[&(h, d)];
                for &(dy, dx) in &taps {
                    // The d-realigned input holds channel (a - d) mod c_n in
                    // block a, so the intermediate is already output-aligned.
                    let plain = tap_plaintext(ctx, layout, dy, dx, |a| {
                        let row = g * geo.c_n + a;
                        let col = h * geo.c_n + (a + geo.c_n - d % geo.c_n) % geo.c_n;
                        if col >= matrix.c_i() || row >= matrix.c_o() {
                            return None;
                        }
                        matrix
                            .entry(row, col)
                            .and_then(|k| k.weight_at(dy, dx))
                            .cloned()
                    })?;
                    let term = ctx.mult_plain(&rotated[&(dy, dx)], &plain)?;
                    acc = Some(match acc {
                        Some(prev) => ctx.add(&prev, &term)?,
                        None => term,
                    });
                }
            }
        }
        outputs.push(match acc {
            Some(cipher) => cipher,
            None => zero_like(ctx, inputs),
        });
    }
    Ok(outputs)
}

/// Run the scheme selected by [`select_scheme`].
pub fn mimo_conv<S: Slot>(
    ctx: &mut SimContext<S>,
    inputs: &[SimCipher<S>],
    matrix: &KernelMatrix<S>,
    layout: &PackLayout,
    scheme: MimoScheme,
) -> Result<Vec<SimCipher<S>>> {
    match scheme {
        MimoScheme::OutputRotation => mimo_conv_output_rot(ctx, inputs, matrix, layout),
        MimoScheme::InputRotation => mimo_conv_input_rot(ctx, inputs, matrix, layout),
    }
}

fn zero_like<S: Slot>(ctx: &SimContext<S>, inputs: &[SimCipher<S>]) -> SimCipher<S> {
    ctx.zero_cipher_with_bits(inputs[0].scale_bits())
}

/// Rotation counts for a block-diagonal kernel matrix with dense
/// `group_size x group_size` blocks, e.g. depthwise and grouped
/// convolutions. A group that stays within one channel residue
/// (`group_size = 1`) touches no nonzero diagonal and needs no ex-Rot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthwiseCounts {
    pub in_rot: u64,
    pub ex_rot_output_scheme: u64,
    pub ex_rot_input_scheme: u64,
    /// Count under the cheaper scheme.
    pub ex_rot_chosen: u64,
}

pub fn depthwise_counts(
    c: usize,
    c_n: usize,
    k_w: usize,
    k_h: usize,
    group_size: usize,
) -> Result<DepthwiseCounts> {
    if group_size == 0 || !c.is_multiple_of(group_size) {
        return Err(Error::Config(format!(
            "group size {group_size} must divide {c} channels"
        )));
    }
    let packs = c.div_ceil(c_n);
    // Distinct nonzero diagonals a g x g block touches modulo c_n.
    let diagonals = (2 * (group_size - 1)).min(c_n - 1) as u64;
    let out = packs as u64 * diagonals;
    let input = packs as u64 * diagonals * (k_w * k_h) as u64;
    Ok(DepthwiseCounts {
        in_rot: packs as u64 * (k_w * k_h - 1) as u64,
        ex_rot_output_scheme: out,
        ex_rot_input_scheme: input,
        ex_rot_chosen: out.min(input),
    })
}
