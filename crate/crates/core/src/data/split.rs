use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Chronological split of one series (0-based exclusive ends).
///
/// Training uses `[0, train_end)`, i.e. everything but the last two
/// horizons; validation scores `[train_end, val_end)`; test scores the final
/// horizon `[val_end, test_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_end: usize,
    pub val_end: usize,
    pub test_end: usize,
}

impl SplitSpec {
    /// Offset of the first value of the `C + H` window that ends at the
    /// split's final index, if the series is long enough.
    pub fn eval_window_start(&self, split: Split, context: usize, horizon: usize) -> Option<usize> {
        let end = match split {
            Split::Validation => self.val_end,
            Split::Test => self.test_end,
            Split::Train => self.train_end,
        };
        end.checked_sub(context + horizon)
    }

    /// Number of complete `C + H` windows inside the training region.
    pub fn training_windows(&self, context: usize, horizon: usize) -> usize {
        (self.train_end + 1).saturating_sub(context + horizon)
    }
}

/// Split a series of `len` values for horizon `horizon`; the test window
/// needs at least `context + horizon` values.
pub fn chronological_split(len: usize, context: usize, horizon: usize) -> Result<SplitSpec> {
    if horizon == 0 || context == 0 {
        return Err(Error::Argument("context and horizon must be positive".into()));
    }
    if len < context + horizon {
        return Err(Error::Dataset(format!(
            "series of length {len} shorter than context {context} + horizon {horizon}"
        )));
    }
    Ok(SplitSpec {
        train_end: len.saturating_sub(2 * horizon),
        val_end: len - horizon,
        test_end: len,
    })
}
