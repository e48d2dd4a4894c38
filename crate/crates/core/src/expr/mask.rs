use super::library::TokenLibrary;
use crate::error::{Error, Result};

/// Open-slot bookkeeping for a partial pre-order sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotCount {
    pub len: usize,
    pub open: usize,
}

impl SlotCount {
    pub const EMPTY: SlotCount = SlotCount { len: 0, open: 1 };

    pub fn push(self, arity: usize) -> SlotCount {
        SlotCount { len: self.len + 1, open: self.open - 1 + arity }
    }

    pub fn is_complete(self) -> bool {
        self.open == 0
    }

    /// Appending a token of `arity` still leaves a completion within `max_length`.
    #[inline]
    pub fn admits(self, arity: usize, max_length: usize) -> bool {
        // Each open slot needs at least one more leaf.
        self.open > 0 && self.len + 1 + (self.open - 1 + arity) <= max_length
    }

    pub fn of(partial: &[usize], lib: &TokenLibrary) -> Result<SlotCount> {
        let mut s = SlotCount::EMPTY;
        for (i, &t) in partial.iter().enumerate() {
            if s.is_complete() {
                return Err(Error::TrailingTokens { used: i, len: partial.len() });
            }
            if t >= lib.len() {
                return Err(Error::UnknownToken(format!("#{t}")));
            }
            s = s.push(lib.arity(t));
        }
        Ok(s)
    }
}

/// Which library tokens may follow `partial` (indices into `lib`) and still
/// complete within the length cap. A complete prefix admits nothing.
pub fn valid_next_tokens(partial: &[usize], lib: &TokenLibrary) -> Result<Vec<bool>> {
    let s = SlotCount::of(partial, lib)?;
    if s.len + s.open > lib.max_length() {
        return Err(Error::InfeasiblePrefix { len: s.len, open: s.open, max_length: lib.max_length() });
    }
    Ok(lib.tokens().iter().map(|t| s.admits(t.arity(), lib.max_length())).collect())
}
