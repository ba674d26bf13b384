//! Single-input single-output convolution on packed slots.
//!
//! One rotation per distinct nonzero tap offset, one plaintext
//! multiplication per tap, then accumulation. Boundary handling is
//! same-padding with zeros, enforced by folding a 0/1 validity mask into
//! each tap's weight plaintext — so masking costs no extra Mult and the
//! output's pad region stays zero. The mask is periodic per channel block,
//! which is what lets one tap rotation serve every channel packed in the
//! ciphertext.

use crate::engine::{Plaintext, RotKind, SimCipher, SimContext};
use crate::error::{Error, Result};
use crate::kernel::{kernel_taps, KernelSpec};
use crate::packing::PackLayout;
use crate::scalar::Slot;

/// Weight-times-mask plaintext for one tap: slot `s` (at block position
/// `(y, x)`) holds `weight` iff both `(y, x)` and `(y+dy, x+dx)` lie inside
/// the original `W x H` region.
pub(crate) fn tap_plaintext<S: Slot>(
    ctx: &SimContext<S>,
    layout: &PackLayout,
    dy: i64,
    dx: i64,
    weight_for_block: impl Fn(usize) -> Option<S>,
) -> Result<Plaintext<S>> {
    let block = layout.block_size();
    let n = ctx.slot_count();
    let mut values = vec![S::zero(); n];
    for (b, chunk) in values.chunks_mut(block).enumerate() {
        let Some(weight) = weight_for_block(b) else {
            continue;
        };
        for y in 0..layout.height {
            let sy = y as i64 + dy;
            if sy < 0 || sy >= layout.height as i64 {
                continue;
            }
            for x in 0..layout.width {
                let sx = x as i64 + dx;
                if sx < 0 || sx >= layout.width as i64 {
                    continue;
                }
                chunk[y * layout.padded_w + x] = weight.clone();
            }
        }
    }
    ctx.plaintext(&values)
}

fn require_untiled(layout: &PackLayout) -> Result<()> {
    if layout.tiles_per_channel != 1 {
        return Err(Error::Geometry(
            "convolution engines require whole channels per ciphertext (tiled packing unsupported)"
                .into(),
        ));
    }
    Ok(())
}

/// Convolve a packed ciphertext with one kernel, applied simultaneously to
/// every channel block it holds. Charges exactly one in-Rot per distinct
/// nonzero tap offset.
pub fn siso_conv<S: Slot>(
    ctx: &mut SimContext<S>,
    cipher: &SimCipher<S>,
    kernel: &KernelSpec<S>,
    layout: &PackLayout,
) -> Result<SimCipher<S>> {
    require_untiled(layout)?;
    let taps = kernel_taps(kernel, layout)?;
    let mut acc: Option<SimCipher<S>> = None;
    for tap in &taps.taps {
        let rotated = if tap.offset == 0 {
            cipher.clone()
        } else {
            ctx.rotate(cipher, tap.offset, RotKind::In)?
        };
        let weight = tap.weight.clone();
        let plain = tap_plaintext(ctx, layout, tap.dy, tap.dx, |_| Some(weight.clone()))?;
        let term = ctx.mult_plain(&rotated, &plain)?;
        acc = Some(match acc {
            Some(prev) => ctx.add(&prev, &term)?,
            None => term,
        });
    }
    acc.ok_or_else(|| Error::Pattern("kernel has no weights".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::conv2d_same;
    use crate::packing::{pack, unpack, FeatureTensor};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(rng: &mut StdRng, c: usize, w: usize, h: usize) -> FeatureTensor<i64> {
        let data = (0..c * w * h).map(|_| rng.gen_range(-9..=9)).collect();
        FeatureTensor::new(c, w, h, data).unwrap()
    }

    fn run_siso(
        tensor: &FeatureTensor<i64>,
        kernel: &KernelSpec<i64>,
        slots: usize,
    ) -> (FeatureTensor<i64>, crate::engine::OpLedger) {
        let mut ctx = SimContext::<i64>::new(slots).unwrap();
        let (ciphers, layout) = pack(tensor, &ctx).unwrap();
        let before = ctx.ledger_snapshot();
        let outs: Vec<_> = ciphers
            .iter()
            .map(|c| siso_conv(&mut ctx, c, kernel, &layout).unwrap())
            .collect();
        let delta = ctx.ledger_since(&before);
        (unpack(&outs, &layout).unwrap(), delta)
    }

    #[test]
    fn impulse_matches_oracle() {
        let mut input = FeatureTensor::<i64>::zeros(1, 5, 5);
        input.set(0, 2, 2, 1);
        let kernel = KernelSpec::regular(3, 3, (1..=9).collect()).unwrap();
        let (got, _) = run_siso(&input, &kernel, 64);
        assert_eq!(got, conv2d_same(&input, 0, &kernel));
    }

    #[test]
    fn random_regular_conv_matches_oracle_with_eight_in_rots() {
        let mut rng = StdRng::seed_from_u64(11);
        let input = random_tensor(&mut rng, 1, 5, 5);
        let weights = (0..9).map(|_| rng.gen_range(-5..=5)).collect();
        let kernel = KernelSpec::regular(3, 3, weights).unwrap();
        let (got, delta) = run_siso(&input, &kernel, 64);
        assert_eq!(got, conv2d_same(&input, 0, &kernel));
        assert_eq!(delta.in_rot, 8);
        assert_eq!(delta.ex_rot, 0);
        assert_eq!(delta.mult, 9);
    }

    #[test]
    fn cross_conv_matches_masked_oracle_with_four_in_rots() {
        let mut rng = StdRng::seed_from_u64(12);
        let input = random_tensor(&mut rng, 1, 6, 6);
        let kernel = KernelSpec::cross(
            3,
            3,
            (0..3).map(|_| rng.gen_range(-5..=5)).collect(),
            (0..2).map(|_| rng.gen_range(-5..=5)).collect(),
        )
        .unwrap();
        let (got, delta) = run_siso(&input, &kernel, 64);
        // absent positions behave exactly like zero weights
        assert_eq!(got, conv2d_same(&input, 0, &kernel));
        assert_eq!(delta.in_rot, 4);
        assert_eq!(delta.mult, 5);
    }

    #[test]
    fn in_rot_count_law_over_kernel_sizes() {
        let mut rng = StdRng::seed_from_u64(13);
        let input = random_tensor(&mut rng, 1, 8, 8);
        for (k_h, k_w) in [(1, 1), (1, 3), (3, 3), (3, 5), (5, 5)] {
            let reg = KernelSpec::regular(
                k_h,
                k_w,
                (0..k_h * k_w).map(|_| rng.gen_range(-3..=3)).collect(),
            )
            .unwrap();
            let (_, delta) = run_siso(&input, &reg, 64);
            assert_eq!(delta.in_rot as usize, k_w * k_h - 1);
            let cross = KernelSpec::cross(
                k_h,
                k_w,
                (0..k_h).map(|_| rng.gen_range(-3..=3)).collect(),
                (0..k_w - 1).map(|_| rng.gen_range(-3..=3)).collect(),
            )
            .unwrap();
            let (_, delta) = run_siso(&input, &cross, 64);
            assert_eq!(delta.in_rot as usize, k_w + k_h - 2);
        }
    }

    #[test]
    fn packed_channels_convolve_independently() {
        let mut rng = StdRng::seed_from_u64(14);
        let input = random_tensor(&mut rng, 4, 3, 3);
        let kernel = KernelSpec::regular(3, 3, (0..9).map(|_| rng.gen_range(-4..=4)).collect())
            .unwrap();
        // whole pack in one ciphertext: capacity 4 at 4x4 blocks
        let (packed, delta) = run_siso(&input, &kernel, 64);
        assert_eq!(delta.in_rot, 8); // one ciphertext, count independent of content
        for c in 0..4 {
            let single = FeatureTensor::new(
                1,
                3,
                3,
                (0..9)
                    .map(|i| *input.get(c, i / 3, i % 3))
                    .collect(),
            )
            .unwrap();
            let expect = conv2d_same(&single, 0, &kernel);
            for y in 0..3 {
                for x in 0..3 {
                    assert_eq!(packed.get(c, y, x), expect.get(0, y, x));
                }
            }
        }
    }

    #[test]
    fn linearity_in_the_input() {
        let mut rng = StdRng::seed_from_u64(15);
        let x = random_tensor(&mut rng, 1, 4, 4);
        let y = random_tensor(&mut rng, 1, 4, 4);
        let kernel = KernelSpec::regular(3, 3, (0..9).map(|_| rng.gen_range(-4..=4)).collect())
            .unwrap();
        let (alpha, beta) = (3i64, -2i64);
        let combined = FeatureTensor::new(
            1,
            4,
            4,
            x.values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        )
        .unwrap();
        let (out_combined, _) = run_siso(&combined, &kernel, 16);
        let (out_x, _) = run_siso(&x, &kernel, 16);
        let (out_y, _) = run_siso(&y, &kernel, 16);
        for (c, (a, b)) in out_combined
            .values()
            .iter()
            .zip(out_x.values().iter().zip(out_y.values()))
        {
            assert_eq!(*c, alpha * a + beta * b);
        }
    }

    #[test]
    fn cross_decomposition_sums_to_cross_conv() {
        let mut rng = StdRng::seed_from_u64(16);
        let input = random_tensor(&mut rng, 1, 5, 5);
        let kernel = KernelSpec::cross(
            3,
            3,
            (0..3).map(|_| rng.gen_range(-5..=5)).collect(),
            (0..2).map(|_| rng.gen_range(-5..=5)).collect(),
        )
        .unwrap();
        let (v, h) = kernel
            .decompose_cross(crate::kernel::CenterSplit::HALF)
            .unwrap();
        let (full, _) = run_siso(&input, &kernel, 64);
        let (out_v, _) = run_siso(&input, &v, 64);
        let (out_h, _) = run_siso(&input, &h, 64);
        for ((f, a), b) in full.values().iter().zip(out_v.values()).zip(out_h.values()) {
            assert_eq!(*f, a + b);
        }
    }

    #[test]
    fn tiled_layout_rejected() {
        let tensor = FeatureTensor::<i64>::zeros(1, 8, 8);
        let mut ctx = SimContext::<i64>::with_scale_bits(16, 0).unwrap();
        let (ciphers, layout) = pack(&tensor, &ctx).unwrap();
        let kernel = KernelSpec::regular(3, 3, vec![1; 9]).unwrap();
        assert!(matches!(
            siso_conv(&mut ctx, &ciphers[0], &kernel, &layout),
            Err(Error::Geometry(_))
        ));
    }
}
