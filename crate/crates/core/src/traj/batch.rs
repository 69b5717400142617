use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// A contiguous run of `len` frames of one episode starting at `offset`.
/// Step `k` of the window observes frame `offset + k`; for `k >= 1` the
/// transition into it carries `actions[offset + k - 1]`, the matching
/// reward and continue flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub episode: usize,
    pub offset: usize,
    pub len: usize,
}

pub struct BatchIter<'a> {
    ds: &'a Dataset,
    batch: usize,
    seq_len: usize,
    /// (episode, number of valid offsets), cumulative in `cum`.
    eligible: Vec<(usize, usize)>,
    cum: Vec<usize>,
    rng: ChaCha8Rng,
}

/// Endless iterator of batches of `batch_size` windows of `seq_len` frames,
/// drawn uniformly over all valid (episode, offset) pairs. Episodes shorter
/// than `seq_len` frames are never sampled.
pub fn batch_sequences(ds: &Dataset, batch_size: usize, seq_len: usize, rng: ChaCha8Rng) -> Result<BatchIter<'_>> {
    if batch_size == 0 || seq_len == 0 {
        return Err(Error::InvalidArgument("batch size and sequence length must be positive".into()));
    }
    let eligible: Vec<(usize, usize)> = ds
        .episodes
        .iter()
        .enumerate()
        .filter(|(_, e)| e.frames.len() >= seq_len)
        .map(|(i, e)| (i, e.frames.len() - seq_len + 1))
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no episode has at least {seq_len} frames"
        )));
    }
    let mut cum = Vec::with_capacity(eligible.len());
    let mut acc = 0;
    for (_, k) in &eligible {
        acc += k;
        cum.push(acc);
    }
    Ok(BatchIter {
        ds,
        batch: batch_size,
        seq_len,
        eligible,
        cum,
        rng,
    })
}

impl BatchIter<'_> {
    /// Number of distinct windows.
    pub fn population(&self) -> usize {
        *self.cum.last().unwrap()
    }

    pub fn dataset(&self) -> &Dataset {
        self.ds
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Vec<Window>;

    fn next(&mut self) -> Option<Vec<Window>> {
        let total = self.population();
        Some(
            (0..self.batch)
                .map(|_| {
                    let u = self.rng.gen_range(0..total);
                    let slot = self.cum.partition_point(|&c| c <= u);
                    let before = if slot == 0 { 0 } else { self.cum[slot - 1] };
                    Window {
                        episode: self.eligible[slot].0,
                        offset: u - before,
                        len: self.seq_len,
                    }
                })
                .collect(),
        )
    }
}
