//! Packed-ciphertext SIMD simulator and rotation-cost toolkit.
//!
//! Everything a packed-HE backend does to a convolutional layer is modeled
//! here without cryptography: ciphertexts are slot vectors, the three
//! fundamental operations (rotate, add, plaintext multiply) are exact and
//! instrumented, and closed-form complexity formulas are checked against
//! the instrumented ledgers. On top of the engines sit the rotation-minimal
//! structures — exRot-Free kernel matrices, cross kernels, inverted
//! residual blocks with their training/inference form transform — and a
//! planner that schedules expansion factors against the channel packing
//! capacity and prices whole networks from calibrated per-op costs.
//!
//! Core math is generic over the slot scalar (see [`scalar::Slot`]);
//! fixed-point `i64` is the default mode, `BigRational` the audit mode,
//! `f32`/`f64` the training-interop modes.

pub mod block;
pub mod cost;
pub mod engine;
pub mod error;
pub mod gen;
pub mod io;
pub mod kernel;
pub mod mimo;
pub mod oracle;
pub mod packing;
pub mod planner;
pub mod scalar;
pub mod siso;

pub use error::{Error, Result};
pub use scalar::Slot;

/// Arbitrary-precision rational slot scalar.
pub type Rational = num_rational::BigRational;

/// Default exact simulation context (fixed-point `i64` slots).
pub type ExactContext = engine::SimContext<i64>;
pub type ExactCipher = engine::SimCipher<i64>;
pub type ExactTensor = packing::FeatureTensor<i64>;

/// Arbitrary-precision context for associativity and overflow audits.
pub type RationalContext = engine::SimContext<Rational>;

/// 32-bit float context for training-form interop.
pub type FloatContext = engine::SimContext<f32>;
pub type FloatTensor = packing::FeatureTensor<f32>;

/// Default ciphertext slot count.
pub const DEFAULT_SLOT_COUNT: usize = 8192;
