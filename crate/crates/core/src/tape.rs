//! Shared outcomes for collective decisions.

use std::fmt;

/// A sequence of collective decisions. Every rank reads the same tape.
///
/// Each loop iteration consumes one entry (`true` enters the body, `false`
/// leaves the loop) and each choice consumes one entry (`true` takes the
/// first branch).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DecisionTape(pub Vec<bool>);

impl DecisionTape {
    pub fn new(decisions: Vec<bool>) -> Self {
        DecisionTape(decisions)
    }

    /// Appends entries for a loop that runs `n` times and then exits.
    pub fn loop_iters(mut self, n: usize) -> Self {
        self.0.extend(std::iter::repeat_n(true, n));
        self.0.push(false);
        self
    }

    pub fn choice(mut self, take_first: bool) -> Self {
        self.0.push(take_first);
        self
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0.get(i).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cursor(&self) -> TapeCursor<'_> {
        TapeCursor { tape: self, pos: 0 }
    }
}

impl fmt::Display for DecisionTape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(if *d { "1" } else { "0" })?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone)]
pub struct TapeCursor<'a> {
    tape: &'a DecisionTape,
    pos: usize,
}

impl TapeCursor<'_> {
    pub fn next_decision(&mut self) -> Option<bool> {
        let d = self.tape.get(self.pos)?;
        self.pos += 1;
        Some(d)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}
