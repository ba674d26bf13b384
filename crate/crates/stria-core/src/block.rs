//! Inverted-residual building block and its two equivalent forms.
//!
//! A block is a 1x1 expansion from `D` to `e*D` channels, a 3x3 layer whose
//! kernel matrix lives inside the exRot-Free mask and whose kernels are
//! cross-shaped, and a 1x1 projection back to `D`, plus an identity skip.
//!
//! The masked 3x3 layer has two interchangeable representations. The
//! *inference form* keeps the masked matrix as-is and is what the packed
//! engines evaluate; its ex-Rot count is zero by construction. The
//! *training form* splits the mask diagonals into depthwise sub-layers —
//! family `j` convolves the input with its channels cyclically shifted by
//! `j * c_n` — and further splits every cross kernel into a `(k_h, 1)` and
//! a `(1, k_w)` sub-kernel. Both forms compute the same function; the
//! training form simply exposes plain depthwise convolutions to an
//! optimizer. Reassembly merges the separable halves back (summing the two
//! center weights) and re-slots each diagonal family, recovering the
//! original weights exactly.
//!
//! No biases or normalization layers: weight import expects them folded.

use crate::cost::{striablock_rot, BlockRot};
use crate::engine::{OpLedger, SimContext};
use crate::error::{Error, Result};
use crate::kernel::{merge_cross, CenterSplit, KernelPattern, KernelSpec};
use crate::mimo::{mimo_conv, select_scheme, KernelMatrix, MatrixPattern};
use crate::oracle::{add_tensors, mimo_conv_plain};
use crate::packing::{pack, unpack, FeatureTensor, PackLayout};
use crate::scalar::{relu, Slot};

/// Analytic dimensions of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    /// Base (input and output) channel count.
    pub d: usize,
    /// Expansion ratio of the inner width.
    pub e: usize,
    /// Channel packing capacity the mask is built for.
    pub c_n: usize,
}

impl BlockShape {
    pub fn new(d: usize, e: usize, c_n: usize) -> Result<Self> {
        let shape = Self { d, e, c_n };
        shape.validate()?;
        Ok(shape)
    }

    pub fn inner(&self) -> usize {
        self.d * self.e
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.e == 0 || self.c_n == 0 {
            return Err(Error::Config("block dims must be positive".into()));
        }
        if self.inner() < self.c_n {
            return Err(Error::Config(format!(
                "inner width {} below packing capacity {}: the mask degenerates",
                self.inner(),
                self.c_n
            )));
        }
        if !self.inner().is_multiple_of(self.c_n) {
            return Err(Error::Config(format!(
                "inner width {} must be a multiple of the packing capacity {}",
                self.inner(),
                self.c_n
            )));
        }
        Ok(())
    }

    /// Diagonal families of the masked layer.
    pub fn family_count(&self) -> usize {
        self.inner() / self.c_n
    }

    /// Predicted (in-Rot, ex-Rot) ledger split.
    pub fn rot_counts(&self) -> Result<BlockRot> {
        striablock_rot(self.d, self.e, self.c_n)
    }
}

/// A block in inference form.
#[derive(Debug, Clone, PartialEq)]
pub struct StriaBlock<S: Slot> {
    shape: BlockShape,
    expand: KernelMatrix<S>,
    mid: KernelMatrix<S>,
    project: KernelMatrix<S>,
}

impl<S: Slot> StriaBlock<S> {
    pub fn from_matrices(
        shape: BlockShape,
        expand: KernelMatrix<S>,
        mid: KernelMatrix<S>,
        project: KernelMatrix<S>,
    ) -> Result<Self> {
        shape.validate()?;
        let inner = shape.inner();
        if expand.c_i() != shape.d || expand.c_o() != inner || expand.k_w() != 1 {
            return Err(Error::Shape("expansion layer must be 1x1 D -> e*D".into()));
        }
        if project.c_i() != inner || project.c_o() != shape.d || project.k_w() != 1 {
            return Err(Error::Shape("projection layer must be 1x1 e*D -> D".into()));
        }
        if mid.c_i() != inner || mid.c_o() != inner {
            return Err(Error::Shape("masked layer must be e*D -> e*D".into()));
        }
        if mid.pattern() != (MatrixPattern::ExRotFree { c_n: shape.c_n }) {
            return Err(Error::Pattern(format!(
                "masked layer must declare the exRot-Free pattern at c_n={}",
                shape.c_n
            )));
        }
        for (row, col, kernel) in mid.present() {
            if row % shape.c_n != col % shape.c_n {
                return Err(Error::Pattern(format!(
                    "masked layer entry ({row}, {col}) lies outside the mask"
                )));
            }
            if kernel.pattern() != KernelPattern::Cross {
                return Err(Error::Pattern(format!(
                    "masked layer entry ({row}, {col}) is not a cross kernel"
                )));
            }
        }
        Ok(Self {
            shape,
            expand,
            mid,
            project,
        })
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn expand(&self) -> &KernelMatrix<S> {
        &self.expand
    }

    pub fn mid(&self) -> &KernelMatrix<S> {
        &self.mid
    }

    pub fn project(&self) -> &KernelMatrix<S> {
        &self.project
    }

    pub fn param_count(&self) -> usize {
        self.expand.param_count() + self.mid.param_count() + self.project.param_count()
    }

    /// Split the masked layer into shifted depthwise families and separable
    /// kernel halves. Any split fraction round-trips: the second center is
    /// the exact complement of the first.
    pub fn to_training_form(&self, split: CenterSplit) -> Result<TrainingForm<S>> {
        let inner = self.shape.inner();
        let c_n = self.shape.c_n;
        let mut families = Vec::with_capacity(self.shape.family_count());
        for j in 0..self.shape.family_count() {
            let shift = j * c_n;
            let mut kernels = Vec::with_capacity(inner);
            for r in 0..inner {
                let col = (r + shift) % inner;
                let kernel = self.mid.entry(r, col).ok_or_else(|| {
                    Error::Pattern(format!("mask entry ({r}, {col}) is absent"))
                })?;
                let (vertical, horizontal) = kernel.decompose_cross(split)?;
                kernels.push(SeparableKernel {
                    vertical,
                    horizontal,
                });
            }
            families.push(DepthwiseFamily { shift, kernels });
        }
        Ok(TrainingForm {
            shape: self.shape,
            expand: self.expand.clone(),
            families,
            project: self.project.clone(),
        })
    }

    /// Plain forward pass: expand, masked 3x3, project, identity skip.
    /// Activations (if enabled) sit after the first two layers only.
    pub fn eval_plain(&self, x: &FeatureTensor<S>, activation: bool) -> Result<FeatureTensor<S>> {
        let expanded = maybe_relu(mimo_conv_plain(x, &self.expand)?, activation);
        let mid = maybe_relu(mimo_conv_plain(&expanded, &self.mid)?, activation);
        let projected = mimo_conv_plain(&mid, &self.project)?;
        add_tensors(&projected, x)
    }

    /// Packed forward pass under the per-layer cheaper MIMO scheme. The
    /// returned ledger covers exactly this block: the masked layer
    /// contributes no ex-Rot, the two 1x1 layers one realignment pass each.
    pub fn eval_encrypted(
        &self,
        x: &FeatureTensor<S>,
        ctx: &mut SimContext<S>,
    ) -> Result<(FeatureTensor<S>, OpLedger)> {
        let before = ctx.ledger_snapshot();
        let (input_ciphers, layout) = pack(x, ctx)?;
        if layout.c_n != self.shape.c_n {
            return Err(Error::Config(format!(
                "layout capacity {} does not match block capacity {}",
                layout.c_n, self.shape.c_n
            )));
        }
        let mut ciphers = input_ciphers.clone();
        for matrix in [&self.expand, &self.mid, &self.project] {
            let scheme = select_scheme(matrix.c_i(), matrix.c_o(), matrix.k_w(), matrix.k_h());
            let in_layout = layout_for(&layout, matrix.c_i());
            ciphers = mimo_conv(ctx, &ciphers, matrix, &in_layout, scheme)?;
        }
        // identity skip: one Add per output ciphertext
        for (out, skip) in ciphers.iter_mut().zip(&input_ciphers) {
            *out = ctx.add(out, skip)?;
        }
        let out_layout = layout_for(&layout, self.shape.d);
        let tensor = unpack(&ciphers, &out_layout)?;
        Ok((tensor, ctx.ledger_since(&before)))
    }
}

fn maybe_relu<S: Slot>(tensor: FeatureTensor<S>, activation: bool) -> FeatureTensor<S> {
    if !activation {
        return tensor;
    }
    let data = tensor.values().iter().map(relu).collect();
    FeatureTensor::new(tensor.channels(), tensor.width(), tensor.height(), data)
        .expect("shape unchanged")
}

fn layout_for(layout: &PackLayout, channels: usize) -> PackLayout {
    let mut out = layout.clone();
    out.channels = channels;
    out.channel_order = (0..channels).collect();
    out
}

/// The two separable halves of one cross kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernel<S: Slot> {
    pub vertical: KernelSpec<S>,
    pub horizontal: KernelSpec<S>,
}

/// One diagonal family of the masked layer, as a depthwise layer over a
/// channel-shifted input.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseFamily<S: Slot> {
    /// Input channels are rotated by this many positions before the
    /// depthwise convolution.
    pub shift: usize,
    /// Kernel for output channel `r`, applied to shifted channel `r`.
    pub kernels: Vec<SeparableKernel<S>>,
}

/// A block in training form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingForm<S: Slot> {
    shape: BlockShape,
    expand: KernelMatrix<S>,
    families: Vec<DepthwiseFamily<S>>,
    project: KernelMatrix<S>,
}

impl<S: Slot> TrainingForm<S> {
    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn families(&self) -> &[DepthwiseFamily<S>] {
        &self.families
    }

    pub fn families_mut(&mut self) -> &mut [DepthwiseFamily<S>] {
        &mut self.families
    }

    /// Separable halves store the center twice, so the training form holds
    /// exactly one extra weight per cross kernel.
    pub fn param_count(&self) -> usize {
        let mid: usize = self
            .families
            .iter()
            .flat_map(|f| &f.kernels)
            .map(|k| k.vertical.param_count() + k.horizontal.param_count())
            .sum();
        self.expand.param_count() + mid + self.project.param_count()
    }

    /// Reassemble the inference form: merge each separable pair and place
    /// it back on its mask diagonal.
    pub fn to_inference_form(&self) -> Result<StriaBlock<S>> {
        let inner = self.shape.inner();
        if self.families.len() != self.shape.family_count() {
            return Err(Error::Shape(format!(
                "expected {} diagonal families, got {}",
                self.shape.family_count(),
                self.families.len()
            )));
        }
        let mut entries: Vec<Option<KernelSpec<S>>> = vec![None; inner * inner];
        for (j, family) in self.families.iter().enumerate() {
            if family.shift != j * self.shape.c_n {
                return Err(Error::Shape(format!(
                    "family {j} has shift {}, expected {}",
                    family.shift,
                    j * self.shape.c_n
                )));
            }
            if family.kernels.len() != inner {
                return Err(Error::Shape(format!(
                    "family {j} has {} kernels, expected {inner}",
                    family.kernels.len()
                )));
            }
            for (r, pair) in family.kernels.iter().enumerate() {
                let col = (r + family.shift) % inner;
                entries[r * inner + col] = Some(merge_cross(&pair.vertical, &pair.horizontal)?);
            }
        }
        let mid = KernelMatrix::from_entries(
            inner,
            inner,
            MatrixPattern::ExRotFree {
                c_n: self.shape.c_n,
            },
            entries,
        )?;
        StriaBlock::from_matrices(self.shape, self.expand.clone(), mid, self.project.clone())
    }

    /// Plain forward pass of the decomposed form. Functionally equal to the
    /// inference form on every input.
    pub fn eval_plain(&self, x: &FeatureTensor<S>, activation: bool) -> Result<FeatureTensor<S>> {
        let expanded = maybe_relu(mimo_conv_plain(x, &self.expand)?, activation);
        let inner = self.shape.inner();
        let (w, h) = (expanded.width(), expanded.height());
        let mut mid = FeatureTensor::<S>::zeros(inner, w, h);
        for family in &self.families {
            let shifted = expanded.reorder_channels(family.shift)?;
            for (r, pair) in family.kernels.iter().enumerate() {
                let v = crate::oracle::conv2d_same(&shifted, r, &pair.vertical);
                let hz = crate::oracle::conv2d_same(&shifted, r, &pair.horizontal);
                for y in 0..h {
                    for x_ in 0..w {
                        let sum = mid.get(r, y, x_).clone()
                            + v.get(0, y, x_).clone()
                            + hz.get(0, y, x_).clone();
                        mid.set(r, y, x_, sum);
                    }
                }
            }
        }
        let mid = maybe_relu(mid, activation);
        let projected = mimo_conv_plain(&mid, &self.project)?;
        add_tensors(&projected, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn sample_block(d: usize, e: usize, c_n: usize, seed: u64) -> StriaBlock<i64> {
        let shape = BlockShape::new(d, e, c_n).unwrap();
        gen::random_block(&mut StdRng::seed_from_u64(seed), shape)
    }

    #[test]
    fn family_shifts_follow_the_mask_diagonals() {
        let block = sample_block(4, 4, 4, 1);
        let tf = block.to_training_form(CenterSplit::HALF).unwrap();
        let shifts: Vec<usize> = tf.families().iter().map(|f| f.shift).collect();
        assert_eq!(shifts, vec![0, 4, 8, 12]);
    }

    #[test]
    fn degenerate_single_family_when_capacity_equals_inner() {
        let block = sample_block(2, 2, 4, 2);
        let tf = block.to_training_form(CenterSplit::HALF).unwrap();
        assert_eq!(tf.families().len(), 1);
        assert_eq!(tf.families()[0].shift, 0);
    }

    #[test]
    fn mask_degeneracy_is_a_config_error() {
        assert!(matches!(
            BlockShape::new(2, 1, 8),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forms_agree_on_random_inputs() {
        let mut rng = StdRng::seed_from_u64(3);
        let block = sample_block(4, 2, 2, 4);
        let tf = block.to_training_form(CenterSplit::HALF).unwrap();
        for _ in 0..5 {
            let x = gen::random_tensor::<i64>(&mut rng, 4, 5, 5, 6);
            let a = block.eval_plain(&x, false).unwrap();
            let b = tf.eval_plain(&x, false).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn forms_agree_with_activation_enabled() {
        let mut rng = StdRng::seed_from_u64(5);
        let block = sample_block(4, 2, 2, 6);
        let tf = block.to_training_form(CenterSplit::HALF).unwrap();
        let x = gen::random_tensor::<i64>(&mut rng, 4, 4, 4, 6);
        assert_eq!(
            block.eval_plain(&x, true).unwrap(),
            tf.eval_plain(&x, true).unwrap()
        );
    }

    #[test]
    fn roundtrip_is_weight_identical_for_any_split() {
        let block = sample_block(4, 3, 2, 7);
        for (num, den) in [(0, 1), (1, 2), (2, 5), (1, 1)] {
            let split = CenterSplit::new(num, den).unwrap();
            let back = block
                .to_training_form(split)
                .unwrap()
                .to_inference_form()
                .unwrap();
            assert_eq!(back, block);
        }
    }

    #[test]
    fn perturbing_one_sub_center_shifts_the_merged_center() {
        let block = sample_block(2, 2, 2, 8);
        let mut tf = block.to_training_form(CenterSplit::HALF).unwrap();
        let original = *block.mid().entry(0, 0).unwrap().weight_at(0, 0).unwrap();
        let pair = &mut tf.families_mut()[0].kernels[0];
        let mut column = Vec::new();
        for dy in -1..=1 {
            let w = *pair.vertical.weight_at(dy, 0).unwrap();
            column.push(if dy == 0 { w + 5 } else { w });
        }
        pair.vertical = KernelSpec::regular(3, 1, column).unwrap();
        let back = tf.to_inference_form().unwrap();
        assert_eq!(
            *back.mid().entry(0, 0).unwrap().weight_at(0, 0).unwrap(),
            original + 5
        );
    }

    #[test]
    fn hand_built_four_channel_transform() {
        // 4x4 masked layer at capacity 2: the support splits into the
        // aligned diagonal family and the family shifted by one capacity
        // block, entries (r, (r + 2) mod 4).
        let shape = BlockShape::new(2, 2, 2).unwrap();
        let one = |w: i64| KernelSpec::regular(1, 1, vec![w]).unwrap();
        let expand = KernelMatrix::dense_from_fn(4, 2, |r, c| one((r + 2 * c) as i64 + 1)).unwrap();
        let project = KernelMatrix::dense_from_fn(2, 4, |r, c| one((2 * r + c) as i64 - 3)).unwrap();
        let mid = KernelMatrix::exrot_free_from_fn(4, 4, 2, |r, c| {
            let base = (4 * r + c) as i64;
            KernelSpec::cross(
                3,
                3,
                vec![base + 1, 2, base + 3],
                vec![base + 4, base + 5],
            )
            .unwrap()
        })
        .unwrap();
        let block = StriaBlock::from_matrices(shape, expand, mid, project).unwrap();
        let tf = block.to_training_form(CenterSplit::HALF).unwrap();
        assert_eq!(tf.families().len(), 2);
        assert_eq!(tf.families()[0].shift, 0);
        assert_eq!(tf.families()[1].shift, 2);
        // family 0 holds the aligned diagonal: its kernel for output 0 is
        // the (0, 0) entry with center 2 split evenly
        let pair = &tf.families()[0].kernels[0];
        assert_eq!(pair.vertical.weight_at(-1, 0), Some(&1));
        assert_eq!(pair.vertical.weight_at(0, 0), Some(&1));
        assert_eq!(pair.vertical.weight_at(1, 0), Some(&3));
        assert_eq!(pair.horizontal.weight_at(0, -1), Some(&4));
        assert_eq!(pair.horizontal.weight_at(0, 0), Some(&1));
        assert_eq!(pair.horizontal.weight_at(0, 1), Some(&5));
        // family 1 holds entry (0, 2) for output 0
        let pair = &tf.families()[1].kernels[0];
        assert_eq!(pair.horizontal.weight_at(0, -1), Some(&6));
        // the decomposed form evaluates identically and reassembles exactly
        let mut rng = StdRng::seed_from_u64(99);
        let x = gen::random_tensor::<i64>(&mut rng, 2, 4, 4, 5);
        assert_eq!(
            tf.eval_plain(&x, false).unwrap(),
            block.eval_plain(&x, false).unwrap()
        );
        assert_eq!(tf.to_inference_form().unwrap(), block);
    }

    #[test]
    fn zero_input_maps_to_zero() {
        let block = sample_block(4, 2, 2, 9);
        let x = FeatureTensor::<i64>::zeros(4, 4, 4);
        let out = block.eval_plain(&x, false).unwrap();
        assert!(out.values().iter().all(|v| *v == 0));
    }

    #[test]
    fn identity_kernels_pass_through_up_to_fan_in() {
        // expansion places the input on every inner channel, the masked
        // layer convolves with a center-only cross of weight 1, and the
        // projection sums e copies back; with the skip the output is
        // (e + 1) * x.
        let shape = BlockShape::new(2, 2, 2).unwrap();
        let one = || KernelSpec::regular(1, 1, vec![1]).unwrap();
        let center_cross = || KernelSpec::cross(3, 3, vec![0, 1, 0], vec![0, 0]).unwrap();
        let expand = KernelMatrix::sparse_from_fn(4, 2, |r, c| (r % 2 == c).then(one)).unwrap();
        let mid = KernelMatrix::exrot_free_from_fn(4, 4, 2, |r, c| {
            if r == c {
                center_cross()
            } else {
                KernelSpec::cross(3, 3, vec![0, 0, 0], vec![0, 0]).unwrap()
            }
        })
        .unwrap();
        let project = KernelMatrix::sparse_from_fn(2, 4, |r, c| (c % 2 == r).then(one)).unwrap();
        let block = StriaBlock::from_matrices(shape, expand, mid, project).unwrap();
        let x = FeatureTensor::<i64>::new(2, 2, 2, vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let out = block.eval_plain(&x, false).unwrap();
        for (got, want) in out.values().iter().zip(x.values()) {
            assert_eq!(*got, 3 * want);
        }
    }

    #[test]
    fn mid_matrix_outside_mask_is_rejected() {
        let shape = BlockShape::new(2, 2, 2).unwrap();
        let mut rng = StdRng::seed_from_u64(10);
        let good: StriaBlock<i64> = gen::random_block(&mut rng, shape);
        let bad_mid = KernelMatrix::sparse_from_fn(4, 4, |r, c| {
            ((r + c) % 2 == 0 || (r == 0 && c == 1))
                .then(|| gen::random_cross(&mut StdRng::seed_from_u64(11), 3, 3, 4))
        })
        .unwrap();
        let err = StriaBlock::from_matrices(
            shape,
            good.expand().clone(),
            bad_mid,
            good.project().clone(),
        );
        assert!(matches!(err, Err(Error::Pattern(_))));
    }

    #[test]
    fn training_form_has_one_extra_weight_per_cross_kernel() {
        let block = sample_block(4, 2, 2, 12);
        let tf = block.to_training_form(CenterSplit::HALF).unwrap();
        let cross_kernels = block.shape().inner() * block.shape().inner() / block.shape().c_n;
        assert_eq!(block.mid().present().count(), cross_kernels);
        assert_eq!(tf.param_count(), block.param_count() + cross_kernels);
        // closed-form parameter count of the inference form
        let (d, inner, c_n) = (4, 8, 2);
        assert_eq!(
            block.param_count(),
            d * inner + (3 + 3 - 1) * inner * inner / c_n + inner * d
        );
    }

    #[test]
    fn encrypted_matches_plain_and_block_rot_split() {
        let mut rng = StdRng::seed_from_u64(13);
        let block = sample_block(8, 2, 4, 14);
        // 4x4 maps at n=64: capacity 4
        let x = gen::random_tensor::<i64>(&mut rng, 8, 4, 4, 5);
        let mut ctx = SimContext::<i64>::new(64).unwrap();
        let (out, ledger) = block.eval_encrypted(&x, &mut ctx).unwrap();
        assert_eq!(out, block.eval_plain(&x, false).unwrap());
        let predicted = block.shape().rot_counts().unwrap();
        assert_eq!(ledger.in_rot, predicted.in_rot);
        assert_eq!(ledger.ex_rot, predicted.ex_rot);
    }

    #[test]
    fn capacity_one_blocks_never_ex_rotate() {
        let mut rng = StdRng::seed_from_u64(15);
        let block = sample_block(4, 2, 1, 16);
        let x = gen::random_tensor::<i64>(&mut rng, 4, 4, 4, 5);
        // n = 16 at 4x4 blocks: capacity 1
        let mut ctx = SimContext::<i64>::new(16).unwrap();
        let (_, ledger) = block.eval_encrypted(&x, &mut ctx).unwrap();
        assert_eq!(ledger.ex_rot, 0);
    }
}
