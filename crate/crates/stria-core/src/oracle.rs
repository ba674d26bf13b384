//! Plaintext reference convolutions.
//!
//! Direct nested-loop implementations, deliberately independent of the slot
//! engines: every engine result is checked against these. Same-padding with
//! zeros, matching the boundary masks the engines fold into their tap
//! plaintexts.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::mimo::KernelMatrix;
use crate::packing::FeatureTensor;
use crate::scalar::Slot;

/// Same-padding 2D convolution of a single channel.
pub fn conv2d_same<S: Slot>(
    input: &FeatureTensor<S>,
    channel: usize,
    kernel: &KernelSpec<S>,
) -> FeatureTensor<S> {
    let (w, h) = (input.width(), input.height());
    let mut out = FeatureTensor::zeros(1, w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (dy, dx, weight) in kernel.present() {
                let sy = y as i64 + dy;
                let sx = x as i64 + dx;
                if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                    continue;
                }
                acc = acc + input.get(channel, sy as usize, sx as usize).clone() * weight.clone();
            }
            out.set(0, y, x, acc);
        }
    }
    out
}

/// Plain MIMO convolution: output channel `o` is the sum over input
/// channels of the per-pair convolutions for the present kernel entries.
pub fn mimo_conv_plain<S: Slot>(
    input: &FeatureTensor<S>,
    matrix: &KernelMatrix<S>,
) -> Result<FeatureTensor<S>> {
    if input.channels() != matrix.c_i() {
        return Err(Error::Shape(format!(
            "matrix expects {} input channels, tensor has {}",
            matrix.c_i(),
            input.channels()
        )));
    }
    let (w, h) = (input.width(), input.height());
    let mut out = FeatureTensor::<S>::zeros(matrix.c_o(), w, h);
    for o in 0..matrix.c_o() {
        for i in 0..matrix.c_i() {
            let Some(kernel) = matrix.entry(o, i) else {
                continue;
            };
            let partial = conv2d_same(input, i, kernel);
            for y in 0..h {
                for x in 0..w {
                    let v = out.get(o, y, x).clone() + partial.get(0, y, x).clone();
                    out.set(o, y, x, v);
                }
            }
        }
    }
    Ok(out)
}

/// Element-wise tensor sum, for residual paths.
pub fn add_tensors<S: Slot>(a: &FeatureTensor<S>, b: &FeatureTensor<S>) -> Result<FeatureTensor<S>> {
    if a.channels() != b.channels() || a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape("tensor shapes differ".into()));
    }
    let data = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x.clone() + y.clone())
        .collect();
    FeatureTensor::new(a.channels(), a.width(), a.height(), data)
}

/// Max absolute difference between two tensors, viewed as f64.
pub fn max_abs_diff<S: Slot>(a: &FeatureTensor<S>, b: &FeatureTensor<S>) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
        .fold(0.0, f64::max)
}
