//! Slot-vector simulation of the three packed-HE primitives.
//!
//! A [`SimCipher`] is a fixed-length vector of exact scalars standing in for
//! one packed ciphertext. The context exposes exactly three value-changing
//! operations — [`SimContext::rotate`], [`SimContext::add`] and
//! [`SimContext::mult_plain`] — and counts each of them in an [`OpLedger`].
//! Rotation counts are split by the caller-declared role: in-Rot for tap
//! alignment inside one convolution, ex-Rot for channel realignment across
//! intermediate ciphertexts.
//!
//! No noise or level tracking is modeled; the simulator is a
//! semantics-and-count model. Slot values are immutable after creation and
//! all operations are pure except for the ledger increments, so parallel
//! runs use one context per worker and merge ledgers by addition.

use std::io::Write;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{pow2_scale, Slot};

/// Which rotation counter an operation charges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotKind {
    /// Tap-alignment rotation inside a single-channel convolution.
    In,
    /// Channel-realignment rotation between intermediate ciphertexts.
    Ex,
}

/// Counters of the fundamental operations performed by one engine run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpLedger {
    pub in_rot: u64,
    pub ex_rot: u64,
    pub mult: u64,
    pub add: u64,
}

impl OpLedger {
    /// Component-wise difference `after - before`.
    pub fn diff(before: &OpLedger, after: &OpLedger) -> OpLedger {
        OpLedger {
            in_rot: after.in_rot - before.in_rot,
            ex_rot: after.ex_rot - before.ex_rot,
            mult: after.mult - before.mult,
            add: after.add - before.add,
        }
    }

    /// Total rotation count regardless of role.
    pub fn rotations(&self) -> u64 {
        self.in_rot + self.ex_rot
    }

    pub fn is_zero(&self) -> bool {
        *self == OpLedger::default()
    }
}

impl AddAssign for OpLedger {
    fn add_assign(&mut self, rhs: OpLedger) {
        self.in_rot += rhs.in_rot;
        self.ex_rot += rhs.ex_rot;
        self.mult += rhs.mult;
        self.add += rhs.add;
    }
}

/// One packed ciphertext: `slot_count` scalars plus scale bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SimCipher<S: Slot> {
    slots: Vec<S>,
    scale_bits: u32,
}

impl<S: Slot> SimCipher<S> {
    pub fn slots(&self) -> &[S] {
        &self.slots
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Accumulated fixed-point scale, in bits.
    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    /// Slot values divided back by the accumulated scale.
    pub fn unscaled(&self) -> Vec<S> {
        let scale: S = pow2_scale(self.scale_bits);
        self.slots.iter().map(|v| v.div_exact(&scale)).collect()
    }

    /// Debug dump: one slot per line, for diffing.
    pub fn write_slots<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for slot in &self.slots {
            writeln!(out, "{slot}")?;
        }
        Ok(())
    }
}

/// Plaintext operand for [`SimContext::mult_plain`]. The engine never
/// multiplies two ciphertexts; CNN inference has no such operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Plaintext<S: Slot> {
    slots: Vec<S>,
    scale_bits: u32,
}

impl<S: Slot> Plaintext<S> {
    pub fn slots(&self) -> &[S] {
        &self.slots
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }
}

/// Simulation context: slot geometry, encoding scale and the op ledger.
///
/// All ciphertexts created under one context share its slot count. Contexts
/// are not shared across threads; merge per-worker ledgers instead.
#[derive(Debug, Clone)]
pub struct SimContext<S: Slot> {
    slot_count: usize,
    scale_bits: u32,
    bit_budget: u32,
    ledger: OpLedger,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Slot> SimContext<S> {
    /// Context with the scalar type's default scale (2^12 for fixed-point).
    pub fn new(slot_count: usize) -> Result<Self> {
        Self::with_scale_bits(slot_count, S::DEFAULT_SCALE_BITS)
    }

    pub fn with_scale_bits(slot_count: usize, scale_bits: u32) -> Result<Self> {
        if !slot_count.is_power_of_two() {
            return Err(Error::SlotCountNotPowerOfTwo(slot_count));
        }
        Ok(Self {
            slot_count,
            scale_bits,
            bit_budget: S::DEFAULT_BIT_BUDGET,
            ledger: OpLedger::default(),
            _marker: std::marker::PhantomData,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    /// Encoding scale in bits; the scale itself is `2^scale_bits` > 0.
    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn set_bit_budget(&mut self, budget: u32) {
        self.bit_budget = budget;
    }

    /// Immutable copy of the current counters.
    pub fn ledger_snapshot(&self) -> OpLedger {
        self.ledger
    }

    /// Counter delta accumulated since `before`.
    pub fn ledger_since(&self, before: &OpLedger) -> OpLedger {
        OpLedger::diff(before, &self.ledger)
    }

    /// Encode values into a fresh ciphertext: slot i holds `values[i] * 2^scale_bits`,
    /// remaining slots are zero.
    pub fn new_cipher(&self, values: &[S]) -> Result<SimCipher<S>> {
        if values.len() > self.slot_count {
            return Err(Error::Capacity {
                len: values.len(),
                slots: self.slot_count,
            });
        }
        let scale: S = pow2_scale(self.scale_bits);
        let mut slots = Vec::with_capacity(self.slot_count);
        for v in values {
            slots.push(v.clone() * scale.clone());
        }
        slots.resize(self.slot_count, S::zero());
        Ok(SimCipher {
            slots,
            scale_bits: self.scale_bits,
        })
    }

    pub fn zero_cipher(&self) -> SimCipher<S> {
        self.zero_cipher_with_bits(self.scale_bits)
    }

    /// All-zero ciphertext at an explicit accumulated scale, for summing
    /// with products of already-scaled ciphertexts.
    pub fn zero_cipher_with_bits(&self, scale_bits: u32) -> SimCipher<S> {
        SimCipher {
            slots: vec![S::zero(); self.slot_count],
            scale_bits,
        }
    }

    /// Unscaled plaintext vector (scale 1), e.g. masks and integer weights.
    pub fn plaintext(&self, values: &[S]) -> Result<Plaintext<S>> {
        self.plaintext_scaled(values, 0)
    }

    /// Plaintext whose entries are already multiplied by `2^scale_bits`.
    pub fn plaintext_scaled(&self, values: &[S], scale_bits: u32) -> Result<Plaintext<S>> {
        if values.len() != self.slot_count {
            return Err(Error::ContextMismatch {
                left: values.len(),
                right: self.slot_count,
            });
        }
        Ok(Plaintext {
            slots: values.to_vec(),
            scale_bits,
        })
    }

    /// Cyclic slot shift: result slot `j` holds input slot `(j + offset) mod n`,
    /// so a positive offset is a left rotation. Offset 0 performs no work and
    /// increments nothing; every other offset charges the `kind` counter once.
    pub fn rotate(&mut self, cipher: &SimCipher<S>, offset: i64, kind: RotKind) -> Result<SimCipher<S>> {
        self.check_cipher(cipher)?;
        let n = self.slot_count as i64;
        if offset.abs() >= n {
            return Err(Error::RotationRange {
                offset,
                slots: self.slot_count,
            });
        }
        if offset == 0 {
            return Ok(cipher.clone());
        }
        let n = self.slot_count;
        let shift = offset.rem_euclid(n as i64) as usize;
        let mut slots = Vec::with_capacity(n);
        slots.extend_from_slice(&cipher.slots[shift..]);
        slots.extend_from_slice(&cipher.slots[..shift]);
        match kind {
            RotKind::In => self.ledger.in_rot += 1,
            RotKind::Ex => self.ledger.ex_rot += 1,
        }
        Ok(SimCipher {
            slots,
            scale_bits: cipher.scale_bits,
        })
    }

    /// Slot-wise sum of two ciphertexts at the same scale.
    pub fn add(&mut self, a: &SimCipher<S>, b: &SimCipher<S>) -> Result<SimCipher<S>> {
        self.check_cipher(a)?;
        self.check_cipher(b)?;
        if a.scale_bits != b.scale_bits {
            return Err(Error::ScaleMismatch {
                left: a.scale_bits,
                right: b.scale_bits,
            });
        }
        let slots = a
            .slots
            .iter()
            .zip(&b.slots)
            .map(|(x, y)| x.clone() + y.clone())
            .collect();
        self.ledger.add += 1;
        Ok(SimCipher {
            slots,
            scale_bits: a.scale_bits,
        })
    }

    /// Slot-wise ciphertext × plaintext product. The result scale is the
    /// product of the operand scales; exceeding the bit budget is an error.
    pub fn mult_plain(&mut self, cipher: &SimCipher<S>, plain: &Plaintext<S>) -> Result<SimCipher<S>> {
        self.check_cipher(cipher)?;
        if plain.slots.len() != self.slot_count {
            return Err(Error::ContextMismatch {
                left: plain.slots.len(),
                right: self.slot_count,
            });
        }
        let scale_bits = cipher.scale_bits + plain.scale_bits;
        if scale_bits > self.bit_budget {
            return Err(Error::Precision {
                scale_bits,
                budget: self.bit_budget,
            });
        }
        let slots = cipher
            .slots
            .iter()
            .zip(&plain.slots)
            .map(|(x, y)| x.clone() * y.clone())
            .collect();
        self.ledger.mult += 1;
        Ok(SimCipher {
            slots,
            scale_bits,
        })
    }

    fn check_cipher(&self, cipher: &SimCipher<S>) -> Result<()> {
        if cipher.slots.len() != self.slot_count {
            return Err(Error::ContextMismatch {
                left: cipher.slots.len(),
                right: self.slot_count,
            });
        }
        Ok(())
    }
}
