//! Channel packing: feature tensors to and from packed ciphertexts.
//!
//! Each channel is padded to a power-of-two `N_w x N_h` footprint and laid
//! out row-major inside a slot block. When a padded channel fits the
//! ciphertext, `c_n = n / (N_w * N_h)` channels share one ciphertext; this
//! quotient is the channel packing capacity. Channels larger than one
//! ciphertext are split row-major across `tiles_per_channel` ciphertexts at
//! capacity 1 (the engines reject that regime; it exists for stem-scale
//! tensors only).
//!
//! Outputs of strided layers are re-packed explicitly between layers; the
//! simulation treats that as free, while real packed HE would pay for it.

use crate::engine::{SimCipher, SimContext};
use crate::error::{Error, Result};
use crate::scalar::Slot;

/// A `c x H x W` value grid, channel-major, rows inside channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<S: Slot> {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<S>,
}

impl<S: Slot> FeatureTensor<S> {
    pub fn new(channels: usize, width: usize, height: usize, data: Vec<S>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * width * height {
            return Err(Error::Shape(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * width * height,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            width,
            height,
            data,
        })
    }

    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![S::zero(); channels * width * height],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> &S {
        &self.data[(channel * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, channel: usize, y: usize, x: usize, value: S) {
        self.data[(channel * self.height + y) * self.width + x] = value;
    }

    /// Sum of all entries, used by the packing conservation check.
    pub fn sum(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, v| acc + v.clone())
    }

    /// Cyclic channel shift: output channel `k` is input channel
    /// `(k + shift) mod c`.
    pub fn reorder_channels(&self, shift: usize) -> Result<FeatureTensor<S>> {
        if shift >= self.channels {
            return Err(Error::Shape(format!(
                "channel shift {shift} out of range for {} channels",
                self.channels
            )));
        }
        let plane = self.width * self.height;
        let mut data = Vec::with_capacity(self.data.len());
        for k in 0..self.channels {
            let src = (k + shift) % self.channels;
            data.extend_from_slice(&self.data[src * plane..(src + 1) * plane]);
        }
        Ok(FeatureTensor {
            channels: self.channels,
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Keep every `stride`-th row and column. Strided convolutions run at
    /// stride 1 in slot space and subsample when leaving it.
    pub fn subsample(&self, stride: usize) -> FeatureTensor<S> {
        if stride <= 1 {
            return self.clone();
        }
        let out_w = self.width.div_ceil(stride);
        let out_h = self.height.div_ceil(stride);
        let mut out = FeatureTensor::zeros(self.channels, out_w, out_h);
        for c in 0..self.channels {
            for y in 0..out_h {
                for x in 0..out_w {
                    out.set(c, y, x, self.get(c, y * stride, x * stride).clone());
                }
            }
        }
        out
    }
}

/// Slot geometry of a packed tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackLayout {
    pub slot_count: usize,
    /// Original spatial dims; slots outside them are zero padding.
    pub width: usize,
    pub height: usize,
    pub padded_w: usize,
    pub padded_h: usize,
    /// Channels per ciphertext.
    pub c_n: usize,
    /// Ciphertexts one channel spans; > 1 only in the tiled regime.
    pub tiles_per_channel: usize,
    pub channels: usize,
    /// Packing order: slot block `k` of a ciphertext holds tensor channel
    /// `channel_order[...]`. Identity unless a reordering is requested.
    pub channel_order: Vec<usize>,
}

impl PackLayout {
    pub fn new(slot_count: usize, channels: usize, width: usize, height: usize) -> Result<Self> {
        if !slot_count.is_power_of_two() {
            return Err(Error::SlotCountNotPowerOfTwo(slot_count));
        }
        let (padded_w, padded_h) = padded_dims(width, height);
        let area = padded_w * padded_h;
        let (c_n, tiles_per_channel) = if area <= slot_count {
            (slot_count / area, 1)
        } else {
            (1, area / slot_count)
        };
        Ok(Self {
            slot_count,
            width,
            height,
            padded_w,
            padded_h,
            c_n,
            tiles_per_channel,
            channels,
            channel_order: (0..channels).collect(),
        })
    }

    pub fn with_channel_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.channels];
        if order.len() != self.channels {
            return Err(Error::Shape("channel order length mismatch".into()));
        }
        for &c in &order {
            if c >= self.channels || seen[c] {
                return Err(Error::Shape("channel order is not a permutation".into()));
            }
            seen[c] = true;
        }
        self.channel_order = order;
        Ok(self)
    }

    /// Slots one padded channel occupies.
    pub fn block_size(&self) -> usize {
        self.padded_w * self.padded_h
    }

    /// Number of ciphertexts the packed tensor spans.
    pub fn cipher_count(&self) -> usize {
        if self.tiles_per_channel > 1 {
            self.channels * self.tiles_per_channel
        } else {
            self.channels.div_ceil(self.c_n)
        }
    }
}

/// Least powers of two covering the spatial dims.
pub fn padded_dims(width: usize, height: usize) -> (usize, usize) {
    (width.next_power_of_two(), height.next_power_of_two())
}

/// Channels one ciphertext can hold at the given spatial size.
pub fn channel_capacity(slot_count: usize, width: usize, height: usize) -> usize {
    let (pw, ph) = padded_dims(width, height);
    let area = pw * ph;
    if area <= slot_count {
        slot_count / area
    } else {
        1
    }
}

/// Pack a tensor into ciphertexts under the context's slot count. Channel
/// `k` of a ciphertext occupies slot block `[k*N_w*N_h, (k+1)*N_w*N_h)`,
/// row-major with zero padding on the right and bottom.
pub fn pack<S: Slot>(
    tensor: &FeatureTensor<S>,
    ctx: &SimContext<S>,
) -> Result<(Vec<SimCipher<S>>, PackLayout)> {
    let layout = PackLayout::new(
        ctx.slot_count(),
        tensor.channels(),
        tensor.width(),
        tensor.height(),
    )?;
    let ciphers = pack_with_layout(tensor, ctx, &layout)?;
    Ok((ciphers, layout))
}

pub fn pack_with_layout<S: Slot>(
    tensor: &FeatureTensor<S>,
    ctx: &SimContext<S>,
    layout: &PackLayout,
) -> Result<Vec<SimCipher<S>>> {
    if tensor.channels() != layout.channels
        || tensor.width() != layout.width
        || tensor.height() != layout.height
    {
        return Err(Error::Shape("tensor does not match layout".into()));
    }
    if layout.slot_count != ctx.slot_count() {
        return Err(Error::ContextMismatch {
            left: layout.slot_count,
            right: ctx.slot_count(),
        });
    }
    let block = layout.block_size();
    let mut ciphers = Vec::with_capacity(layout.cipher_count());
    if layout.tiles_per_channel > 1 {
        // Tiled regime: row-major contiguous split of each padded channel.
        for &ch in &layout.channel_order {
            let mut padded = vec![S::zero(); block];
            for y in 0..layout.height {
                for x in 0..layout.width {
                    padded[y * layout.padded_w + x] = tensor.get(ch, y, x).clone();
                }
            }
            for tile in padded.chunks(layout.slot_count) {
                ciphers.push(ctx.new_cipher(tile)?);
            }
        }
        return Ok(ciphers);
    }
    for pack_idx in 0..layout.cipher_count() {
        let mut values = vec![S::zero(); layout.slot_count];
        for slot_ch in 0..layout.c_n {
            let logical = pack_idx * layout.c_n + slot_ch;
            if logical >= layout.channels {
                break;
            }
            let ch = layout.channel_order[logical];
            let base = slot_ch * block;
            for y in 0..layout.height {
                for x in 0..layout.width {
                    values[base + y * layout.padded_w + x] = tensor.get(ch, y, x).clone();
                }
            }
        }
        ciphers.push(ctx.new_cipher(&values)?);
    }
    Ok(ciphers)
}

/// Exact inverse of [`pack`]: pad slots are discarded, the encoding scale
/// is divided back out.
pub fn unpack<S: Slot>(ciphers: &[SimCipher<S>], layout: &PackLayout) -> Result<FeatureTensor<S>> {
    if ciphers.len() != layout.cipher_count() {
        return Err(Error::Shape(format!(
            "layout expects {} ciphertexts, got {}",
            layout.cipher_count(),
            ciphers.len()
        )));
    }
    let block = layout.block_size();
    let mut tensor = FeatureTensor::zeros(layout.channels, layout.width, layout.height);
    if layout.tiles_per_channel > 1 {
        for (logical, tiles) in ciphers.chunks(layout.tiles_per_channel).enumerate() {
            let ch = layout.channel_order[logical];
            let mut padded = Vec::with_capacity(block);
            for cipher in tiles {
                padded.extend(cipher.unscaled());
            }
            for y in 0..layout.height {
                for x in 0..layout.width {
                    tensor.set(ch, y, x, padded[y * layout.padded_w + x].clone());
                }
            }
        }
        return Ok(tensor);
    }
    for (pack_idx, cipher) in ciphers.iter().enumerate() {
        let slots = cipher.unscaled();
        for slot_ch in 0..layout.c_n {
            let logical = pack_idx * layout.c_n + slot_ch;
            if logical >= layout.channels {
                break;
            }
            let ch = layout.channel_order[logical];
            let base = slot_ch * block;
            for y in 0..layout.height {
                for x in 0..layout.width {
                    tensor.set(ch, y, x, slots[base + y * layout.padded_w + x].clone());
                }
            }
        }
    }
    Ok(tensor)
}
