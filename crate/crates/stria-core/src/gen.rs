//! Deterministic generation of test tensors, kernels and blocks.
//!
//! Values are small integers lifted into the slot domain, so the same seed
//! yields the same data in every scalar mode and fixed-point, rational and
//! float runs stay bit-comparable.

use rand::Rng;

use crate::block::{BlockShape, StriaBlock};
use crate::kernel::{KernelPattern, KernelSpec};
use crate::mimo::KernelMatrix;
use crate::packing::FeatureTensor;
use crate::scalar::Slot;

pub fn random_tensor<S: Slot>(
    rng: &mut impl Rng,
    channels: usize,
    width: usize,
    height: usize,
    magnitude: i64,
) -> FeatureTensor<S> {
    let data = (0..channels * width * height)
        .map(|_| S::from_fixed(rng.gen_range(-magnitude..=magnitude)))
        .collect();
    FeatureTensor::new(channels, width, height, data).expect("consistent dims")
}

pub fn random_regular<S: Slot>(
    rng: &mut impl Rng,
    k_h: usize,
    k_w: usize,
    magnitude: i64,
) -> KernelSpec<S> {
    let weights = (0..k_h * k_w)
        .map(|_| S::from_fixed(rng.gen_range(-magnitude..=magnitude)))
        .collect();
    KernelSpec::regular(k_h, k_w, weights).expect("odd dims")
}

pub fn random_cross<S: Slot>(
    rng: &mut impl Rng,
    k_h: usize,
    k_w: usize,
    magnitude: i64,
) -> KernelSpec<S> {
    let column = (0..k_h)
        .map(|_| S::from_fixed(rng.gen_range(-magnitude..=magnitude)))
        .collect();
    let row = (0..k_w - 1)
        .map(|_| S::from_fixed(rng.gen_range(-magnitude..=magnitude)))
        .collect();
    KernelSpec::cross(k_h, k_w, column, row).expect("odd dims")
}

pub fn random_kernel<S: Slot>(
    rng: &mut impl Rng,
    k_h: usize,
    k_w: usize,
    pattern: KernelPattern,
    magnitude: i64,
) -> KernelSpec<S> {
    match pattern {
        KernelPattern::Regular => random_regular(rng, k_h, k_w, magnitude),
        KernelPattern::Cross => random_cross(rng, k_h, k_w, magnitude),
    }
}

pub fn random_dense_matrix<S: Slot>(
    rng: &mut impl Rng,
    c_o: usize,
    c_i: usize,
    k: usize,
    magnitude: i64,
) -> KernelMatrix<S> {
    KernelMatrix::dense_from_fn(c_o, c_i, |_, _| random_regular(rng, k, k, magnitude))
        .expect("valid dims")
}

pub fn random_exrot_free_matrix<S: Slot>(
    rng: &mut impl Rng,
    c_o: usize,
    c_i: usize,
    c_n: usize,
    k: usize,
    pattern: KernelPattern,
    magnitude: i64,
) -> KernelMatrix<S> {
    KernelMatrix::exrot_free_from_fn(c_o, c_i, c_n, |_, _| {
        random_kernel(rng, k, k, pattern, magnitude)
    })
    .expect("valid dims")
}

/// A block with random integer weights in [-4, 4].
pub fn random_block<S: Slot>(rng: &mut impl Rng, shape: BlockShape) -> StriaBlock<S> {
    let inner = shape.inner();
    let expand = random_matrix_1x1(rng, inner, shape.d);
    let mid = random_exrot_free_matrix(rng, inner, inner, shape.c_n, 3, KernelPattern::Cross, 4);
    let project = random_matrix_1x1(rng, shape.d, inner);
    StriaBlock::from_matrices(shape, expand, mid, project).expect("generated matrices are valid")
}

fn random_matrix_1x1<S: Slot>(rng: &mut impl Rng, c_o: usize, c_i: usize) -> KernelMatrix<S> {
    KernelMatrix::dense_from_fn(c_o, c_i, |_, _| random_regular(rng, 1, 1, 4))
        .expect("valid dims")
}
