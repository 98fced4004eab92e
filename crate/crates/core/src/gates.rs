//! Fingerprints of the discrete decisions taken during a forward pass.
//!
//! Sorting, cutoffs, ReLU activity, visibility and sampling cells make the
//! objectives piecewise smooth. Gradient checking compares fingerprints of
//! perturbed evaluations to tell whether a finite-difference stencil crossed
//! one of those boundaries.

/// Running FNV-1a hash of gate decisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateTrace {
    state: u64,
}

impl Default for GateTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl GateTrace {
    pub const fn new() -> Self {
        Self {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }

    #[inline]
    pub fn record(&mut self, value: u64) {
        for b in value.to_le_bytes() {
            self.state ^= u64::from(b);
            self.state = self.state.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    #[inline]
    pub fn record_bool(&mut self, value: bool) {
        self.record(value as u64);
    }

    pub fn merge(&mut self, other: &GateTrace) {
        self.record(other.state);
    }

    pub fn digest(&self) -> u64 {
        self.state
    }
}
