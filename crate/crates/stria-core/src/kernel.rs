//! 2D convolution kernels: regular grids and cross-backbone kernels.
//!
//! A cross kernel keeps weights only on the central row and central column.
//! Positions off the backbone carry no parameters at all (they are absent,
//! not zero), which is what removes the expensive corner-tap rotations. A
//! cross kernel is equivalent to the sum of a `(k_h, 1)` and a `(1, k_w)`
//! sub-kernel that together split the center weight; the split fraction is
//! arbitrary because merging adds the two centers back.

use crate::error::{Error, Result};
use crate::packing::PackLayout;
use crate::scalar::Slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPattern {
    Regular,
    Cross,
}

/// Center-weight split fraction used when exporting a cross kernel to its
/// separable training form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CenterSplit {
    pub num: i64,
    pub den: i64,
}

impl CenterSplit {
    pub const HALF: CenterSplit = CenterSplit { num: 1, den: 2 };

    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den <= 0 || num < 0 || num > den {
            return Err(Error::Config(format!(
                "center split {num}/{den} must lie in [0, 1]"
            )));
        }
        Ok(Self { num, den })
    }
}

/// One 2D kernel with odd dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<S: Slot> {
    k_w: usize,
    k_h: usize,
    pattern: KernelPattern,
    /// Row-major `k_h x k_w`; `None` marks absent (non-parameter) positions.
    entries: Vec<Option<S>>,
}

impl<S: Slot> KernelSpec<S> {
    /// Dense kernel from row-major weights.
    pub fn regular(k_h: usize, k_w: usize, weights: Vec<S>) -> Result<Self> {
        check_odd_dims(k_h, k_w)?;
        if weights.len() != k_h * k_w {
            return Err(Error::Shape(format!(
                "expected {} weights for {k_h}x{k_w}, got {}",
                k_h * k_w,
                weights.len()
            )));
        }
        Ok(Self {
            k_w,
            k_h,
            pattern: KernelPattern::Regular,
            entries: weights.into_iter().map(Some).collect(),
        })
    }

    /// Cross kernel from its backbone: the full central column (top to
    /// bottom, `k_h` values) and the central row with the center position
    /// omitted (`k_w - 1` values, left then right).
    pub fn cross(k_h: usize, k_w: usize, column: Vec<S>, row_wo_center: Vec<S>) -> Result<Self> {
        check_odd_dims(k_h, k_w)?;
        if column.len() != k_h || row_wo_center.len() != k_w - 1 {
            return Err(Error::Shape(format!(
                "cross {k_h}x{k_w} needs {k_h} column and {} row weights",
                k_w - 1
            )));
        }
        let cy = k_h / 2;
        let cx = k_w / 2;
        let mut entries = vec![None; k_h * k_w];
        for (y, w) in column.into_iter().enumerate() {
            entries[y * k_w + cx] = Some(w);
        }
        let mut row = row_wo_center.into_iter();
        for x in 0..k_w {
            if x != cx {
                entries[cy * k_w + x] = Some(row.next().expect("length checked"));
            }
        }
        Ok(Self {
            k_w,
            k_h,
            pattern: KernelPattern::Cross,
            entries,
        })
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn pattern(&self) -> KernelPattern {
        self.pattern
    }

    /// Weight at offset (dy, dx) from the center, if a parameter exists there.
    pub fn weight_at(&self, dy: i64, dx: i64) -> Option<&S> {
        let y = dy + (self.k_h / 2) as i64;
        let x = dx + (self.k_w / 2) as i64;
        if y < 0 || x < 0 || y >= self.k_h as i64 || x >= self.k_w as i64 {
            return None;
        }
        self.entries[y as usize * self.k_w + x as usize].as_ref()
    }

    /// Present (dy, dx, weight) triples.
    pub fn present(&self) -> impl Iterator<Item = (i64, i64, &S)> {
        let cy = (self.k_h / 2) as i64;
        let cx = (self.k_w / 2) as i64;
        let k_w = self.k_w as i64;
        self.entries.iter().enumerate().filter_map(move |(i, w)| {
            w.as_ref()
                .map(|w| ((i as i64 / k_w) - cy, (i as i64 % k_w) - cx, w))
        })
    }

    /// Number of parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Split a cross kernel into vertical `(k_h, 1)` and horizontal
    /// `(1, k_w)` sub-kernels. The vertical center gets `split` of the
    /// original center; the horizontal center gets the exact complement, so
    /// the decomposition sums back to the original in every scalar mode.
    pub fn decompose_cross(&self, split: CenterSplit) -> Result<(KernelSpec<S>, KernelSpec<S>)> {
        if self.pattern != KernelPattern::Cross {
            return Err(Error::Pattern("decompose requires a cross kernel".into()));
        }
        let center = self.weight_at(0, 0).expect("cross has a center").clone();
        let v_center = center.mul_ratio(split.num, split.den);
        let h_center = center - v_center.clone();
        let mut column = Vec::with_capacity(self.k_h);
        for dy in -((self.k_h / 2) as i64)..=(self.k_h / 2) as i64 {
            if dy == 0 {
                column.push(v_center.clone());
            } else {
                column.push(self.weight_at(dy, 0).expect("backbone").clone());
            }
        }
        let mut row = Vec::with_capacity(self.k_w);
        for dx in -((self.k_w / 2) as i64)..=(self.k_w / 2) as i64 {
            if dx == 0 {
                row.push(h_center.clone());
            } else {
                row.push(self.weight_at(0, dx).expect("backbone").clone());
            }
        }
        let vertical = KernelSpec::regular(self.k_h, 1, column)?;
        let horizontal = KernelSpec::regular(1, self.k_w, row)?;
        Ok((vertical, horizontal))
    }
}

/// Reassemble a cross kernel from its separable halves: backbone weights
/// are copied, the center is the sum of the two sub-centers.
pub fn merge_cross<S: Slot>(
    vertical: &KernelSpec<S>,
    horizontal: &KernelSpec<S>,
) -> Result<KernelSpec<S>> {
    if vertical.k_w != 1 || horizontal.k_h != 1 {
        return Err(Error::Shape(format!(
            "expected (k_h,1) and (1,k_w) sub-kernels, got {}x{} and {}x{}",
            vertical.k_h, vertical.k_w, horizontal.k_h, horizontal.k_w
        )));
    }
    let k_h = vertical.k_h;
    let k_w = horizontal.k_w;
    check_odd_dims(k_h, k_w)?;
    let center = vertical.weight_at(0, 0).expect("present").clone()
        + horizontal.weight_at(0, 0).expect("present").clone();
    let mut column = Vec::with_capacity(k_h);
    for dy in -((k_h / 2) as i64)..=(k_h / 2) as i64 {
        if dy == 0 {
            column.push(center.clone());
        } else {
            column.push(vertical.weight_at(dy, 0).expect("present").clone());
        }
    }
    let mut row = Vec::with_capacity(k_w - 1);
    for dx in -((k_w / 2) as i64)..=(k_w / 2) as i64 {
        if dx != 0 {
            row.push(horizontal.weight_at(0, dx).expect("present").clone());
        }
    }
    KernelSpec::cross(k_h, k_w, column, row)
}

fn check_odd_dims(k_h: usize, k_w: usize) -> Result<()> {
    if k_h == 0 || k_w == 0 || k_h.is_multiple_of(2) || k_w.is_multiple_of(2) {
        return Err(Error::Pattern(format!(
            "kernel dims must be odd and positive, got {k_h}x{k_w}"
        )));
    }
    Ok(())
}

/// One rotation tap of a kernel placed on a packed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tap<S: Slot> {
    /// Slot rotation offset `dy * N_w + dx`.
    pub offset: i64,
    pub dy: i64,
    pub dx: i64,
    pub weight: S,
}

/// The taps of one kernel under a pack layout; offsets are distinct and the
/// center tap has offset 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet<S: Slot> {
    pub taps: Vec<Tap<S>>,
}

impl<S: Slot> TapSet<S> {
    /// Rotations a convolution with this tap set performs per ciphertext.
    pub fn rotation_count(&self) -> usize {
        self.taps.iter().filter(|t| t.offset != 0).count()
    }

    pub fn offsets(&self) -> Vec<i64> {
        self.taps.iter().map(|t| t.offset).collect()
    }
}

/// Compute the tap set of a kernel over a packed channel: one tap per
/// present weight, at offset `dy * N_w + dx` relative to the center.
pub fn kernel_taps<S: Slot>(kernel: &KernelSpec<S>, layout: &PackLayout) -> Result<TapSet<S>> {
    if kernel.k_w() > layout.padded_w || kernel.k_h() > layout.padded_h {
        return Err(Error::Geometry(format!(
            "{}x{} kernel does not fit {}x{} padded channel",
            kernel.k_h(),
            kernel.k_w(),
            layout.padded_h,
            layout.padded_w
        )));
    }
    let taps = kernel
        .present()
        .map(|(dy, dx, w)| Tap {
            offset: dy * layout.padded_w as i64 + dx,
            dy,
            dx,
            weight: w.clone(),
        })
        .collect();
    Ok(TapSet { taps })
}
