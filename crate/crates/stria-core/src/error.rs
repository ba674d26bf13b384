//! Crate-wide error type.

use std::fmt;
use std::io;

/// Errors from simulation, packing, transforms and planning.
#[derive(Debug)]
pub enum Error {
    /// Slot counts must be powers of two.
    SlotCountNotPowerOfTwo(usize),
    /// More values than slots.
    Capacity { len: usize, slots: usize },
    /// Two ciphertexts from incompatible contexts (slot counts differ).
    ContextMismatch { left: usize, right: usize },
    /// Adding ciphertexts at different fixed-point scales.
    ScaleMismatch { left: u32, right: u32 },
    /// Accumulated scale exceeds the declared bit budget.
    Precision { scale_bits: u32, budget: u32 },
    /// Rotation offset outside (-n, n).
    RotationRange { offset: i64, slots: usize },
    /// Kernel does not fit the packed channel geometry, or tiled packing
    /// was handed to an engine that requires whole channels per ciphertext.
    Geometry(String),
    /// Tensor/matrix shape disagreement.
    Shape(String),
    /// Kernel or kernel-matrix pattern violation (even dims, mask
    /// membership, holes in a dense matrix).
    Pattern(String),
    /// Invalid configuration value.
    Config(String),
    /// Planner could not satisfy the scaling budget at a stage.
    InfeasibleStage { stage: usize, detail: String },
    /// File format error.
    Parse { context: String, msg: String },
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SlotCountNotPowerOfTwo(n) => {
                write!(f, "slot count {n} is not a power of two")
            }
            Self::Capacity { len, slots } => {
                write!(f, "{len} values exceed {slots} slots")
            }
            Self::ContextMismatch { left, right } => {
                write!(f, "ciphertexts from different contexts: {left} vs {right} slots")
            }
            Self::ScaleMismatch { left, right } => {
                write!(f, "scale mismatch: 2^{left} vs 2^{right}")
            }
            Self::Precision { scale_bits, budget } => {
                write!(f, "scale 2^{scale_bits} exceeds bit budget {budget}")
            }
            Self::RotationRange { offset, slots } => {
                write!(f, "rotation offset {offset} out of range for {slots} slots")
            }
            Self::Geometry(msg) => write!(f, "geometry: {msg}"),
            Self::Shape(msg) => write!(f, "shape: {msg}"),
            Self::Pattern(msg) => write!(f, "pattern: {msg}"),
            Self::Config(msg) => write!(f, "config: {msg}"),
            Self::InfeasibleStage { stage, detail } => {
                write!(f, "stage {stage}: infeasible scaling budget ({detail})")
            }
            Self::Parse { context, msg } => write!(f, "parse {context}: {msg}"),
            Self::Io(err) => write!(f, "io: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Self::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
