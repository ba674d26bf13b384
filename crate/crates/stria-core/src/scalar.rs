//! Slot scalar abstraction.
//!
//! Every engine, packing and transform routine is generic over the slot
//! scalar. Four instantiations are supported:
//!
//! * `i64` — fixed-point integers at a power-of-two scale, the default
//!   simulation mode. All count verification runs here.
//! * [`num_rational::BigRational`] — arbitrary-precision rationals for
//!   associativity/overflow audits and exact separable-kernel splits.
//! * `f32` / `f64` — float modes for training-form interop.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};

/// Scalar type a ciphertext slot can hold.
pub trait Slot:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
{
    /// Whether arithmetic in this type is exact (no rounding drift).
    const EXACT: bool;

    /// Default encoding scale, expressed in bits (slot value = raw * 2^bits).
    const DEFAULT_SCALE_BITS: u32;

    /// Scale-bit budget before a multiplication reports a precision error.
    const DEFAULT_BIT_BUDGET: u32;

    /// Lift a small integer into the slot domain.
    fn from_fixed(value: i64) -> Self;

    /// Lossy view for diffs and report summaries.
    fn to_f64_lossy(&self) -> f64;

    /// `self / divisor`, required to be exact for the values that occur
    /// inside the engine (unscaling by the encoding scale).
    fn div_exact(&self, divisor: &Self) -> Self;

    /// `self * num / den`. Exact for rationals and floats; truncates in
    /// integer mode (callers that need exact roundtrips use complements).
    fn mul_ratio(&self, num: i64, den: i64) -> Self;
}

impl Slot for i64 {
    const EXACT: bool = true;
    const DEFAULT_SCALE_BITS: u32 = 12;
    const DEFAULT_BIT_BUDGET: u32 = 40;

    fn from_fixed(value: i64) -> Self {
        value
    }

    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }

    fn div_exact(&self, divisor: &Self) -> Self {
        debug_assert!(
            self % divisor == 0,
            "inexact fixed-point division: {self} / {divisor}"
        );
        self / divisor
    }

    fn mul_ratio(&self, num: i64, den: i64) -> Self {
        ((*self as i128 * num as i128) / den as i128) as i64
    }
}

impl Slot for BigRational {
    const EXACT: bool = true;
    const DEFAULT_SCALE_BITS: u32 = 0;
    const DEFAULT_BIT_BUDGET: u32 = u32::MAX;

    fn from_fixed(value: i64) -> Self {
        BigRational::from_i64(value).expect("i64 always lifts into BigRational")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn div_exact(&self, divisor: &Self) -> Self {
        self / divisor
    }

    fn mul_ratio(&self, num: i64, den: i64) -> Self {
        self * BigRational::new(num.into(), den.into())
    }
}

macro_rules! impl_slot_float {
    ($t:ty) => {
        impl Slot for $t {
            const EXACT: bool = false;
            const DEFAULT_SCALE_BITS: u32 = 0;
            const DEFAULT_BIT_BUDGET: u32 = u32::MAX;

            fn from_fixed(value: i64) -> Self {
                value as $t
            }

            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }

            fn div_exact(&self, divisor: &Self) -> Self {
                self / divisor
            }

            fn mul_ratio(&self, num: i64, den: i64) -> Self {
                self * (num as $t) / (den as $t)
            }
        }
    };
}

impl_slot_float!(f32);
impl_slot_float!(f64);

/// 2^bits in the slot domain.
pub fn pow2_scale<S: Slot>(bits: u32) -> S {
    assert!(bits < 63, "scale bits out of range");
    S::from_fixed(1i64 << bits)
}

/// Rectified value, used only by the optional plain-evaluation activation.
pub fn relu<S: Slot>(value: &S) -> S {
    if *value < S::zero() {
        S::zero()
    } else {
        value.clone()
    }
}
