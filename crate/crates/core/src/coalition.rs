use std::fmt;

use crate::error::{Error, Result};

/// Widest coalition a mask can describe.
pub const MAX_MASK_WIDTH: usize = 64;

/// A subset of the players `0..width`, stored as a bitset.
///
/// Bit `i` set means player `i` is present in the coalition.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionMask {
    bits: u64,
    width: u8,
}

impl CoalitionMask {
    /// Mask with no players present.
    pub fn empty(width: usize) -> Self {
        assert!(width <= MAX_MASK_WIDTH, "mask width {width} over {MAX_MASK_WIDTH}");
        Self {
            bits: 0,
            width: width as u8,
        }
    }

    /// Mask with every player present.
    pub fn full(width: usize) -> Self {
        let mut mask = Self::empty(width);
        mask.bits = low_bits(width);
        mask
    }

    pub fn from_bits(bits: u64, width: usize) -> Result<Self> {
        if width > MAX_MASK_WIDTH {
            return Err(Error::PlayerCapExceeded {
                found: width,
                cap: MAX_MASK_WIDTH,
            });
        }
        if bits & !low_bits(width) != 0 {
            return Err(Error::MaskWidthMismatch {
                expected: width,
                got: (64 - bits.leading_zeros()) as usize,
            });
        }
        Ok(Self {
            bits,
            width: width as u8,
        })
    }

    pub fn from_players(players: impl IntoIterator<Item = usize>, width: usize) -> Result<Self> {
        let mut mask = Self::empty(width);
        for p in players {
            if p >= width {
                return Err(Error::MaskWidthMismatch {
                    expected: width,
                    got: p + 1,
                });
            }
            mask.bits |= 1 << p;
        }
        Ok(mask)
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn width(self) -> usize {
        self.width as usize
    }

    pub fn contains(self, player: usize) -> bool {
        player < self.width() && self.bits & (1 << player) != 0
    }

    #[must_use]
    pub fn with(self, player: usize) -> Self {
        debug_assert!(player < self.width());
        Self {
            bits: self.bits | (1 << player),
            ..self
        }
    }

    #[must_use]
    pub fn without(self, player: usize) -> Self {
        debug_assert!(player < self.width());
        Self {
            bits: self.bits & !(1 << player),
            ..self
        }
    }

    /// Number of players present.
    pub fn size(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn is_full(self) -> bool {
        self.bits == low_bits(self.width())
    }

    /// Present players in ascending order.
    pub fn players(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.width()).filter(move |&i| bits & (1 << i) != 0)
    }
}

fn low_bits(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl fmt::Debug for CoalitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoalitionMask(")?;
        for i in 0..self.width() {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}
