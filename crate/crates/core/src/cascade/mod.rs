//! Interactive Cascade reconciliation with one-time-pad encrypted parities.
//!
//! Pass `p` (1-based) shuffles the key positions with a seeded permutation
//! and cuts them into blocks of `k_p = k_1 * 2^(p-1)`, with
//! `k_1 = ceil(0.73 / qber)`. Odd blocks are bisected (BINARY) and Bob flips
//! the located bit; from pass 2 on every earlier block containing a flipped
//! bit becomes odd and is revisited through a FIFO work queue. Relative
//! parities are read off the two encrypted announcements, so neither party
//! ever learns the other's absolute parity.

mod party;
mod transcript;

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use party::{Announcement, Channel, LocalChannel, Message, PadPool, PartyState, Reply, Session};
pub use transcript::{
    digest_hex, DuplicatePad, Role, Transcript, TranscriptEntry, TranscriptError,
};

use crate::bitlinalg::{BitVec, DimensionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("one-time pad exhausted after {capacity} bits")]
    PadExhausted { capacity: usize },
    #[error("pad holds {available} unused bits but the session budget is {budget}")]
    InsufficientPad { budget: usize, available: usize },
    #[error("parties used different pad bits ({alice} vs {bob})")]
    PadDesync { alice: usize, bob: usize },
    #[error("block has even relative parity")]
    EvenParity,
    #[error("qber estimate {0} outside [0, 0.5)")]
    InvalidEstimate(f64),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub passes: usize,
    /// `k_1 = ceil(block_constant / qber)`.
    pub block_constant: f64,
    /// Factor by which the error budget exceeds the expected error count.
    pub error_headroom: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            passes: 4,
            block_constant: 0.73,
            error_headroom: 1.5,
        }
    }
}

impl CascadeConfig {
    pub fn first_block_size(&self, n: usize, qber: f64) -> usize {
        if qber <= 0.0 {
            return n.max(1);
        }
        ((self.block_constant / qber).ceil() as usize).clamp(1, n.max(1))
    }

    /// Block size of each pass, capped at `n`.
    pub fn block_sizes(&self, n: usize, qber: f64) -> Vec<usize> {
        let k1 = self.first_block_size(n, qber);
        (0..self.passes)
            .map(|p| k1.saturating_mul(1 << p.min(62)).min(n.max(1)))
            .collect()
    }

    /// Pad bits reserved for a run: every block parity of every announced
    /// pass plus `ceil(headroom * qber * n)` bisections of at most
    /// `ceil(log2 k_1) + passes - 1` steps each.
    pub fn pad_budget(&self, n: usize, qber: f64) -> usize {
        let sizes = self.block_sizes(n, qber);
        let blocks: usize = announced_passes(&sizes, n)
            .map(|k| n.div_ceil(k))
            .sum();
        let expected_errors = ceil_tolerant(self.error_headroom * qber * n as f64);
        let bisection = ceil_log2(sizes.first().copied().unwrap_or(1)) + self.passes.saturating_sub(1);
        blocks + expected_errors * bisection
    }
}

/// Ceiling that ignores floating-point noise just above an integer.
fn ceil_tolerant(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

fn ceil_log2(k: usize) -> usize {
    k.max(1).next_power_of_two().trailing_zeros() as usize
}

/// Passes that need announcements. Once an earlier pass exists, a pass whose
/// single block is the whole key is skipped: every earlier block is even when
/// a pass ends, so the whole-key relative parity is known to be even.
fn announced_passes(sizes: &[usize], n: usize) -> impl Iterator<Item = usize> + '_ {
    sizes
        .iter()
        .enumerate()
        .filter(move |&(p, &k)| p == 0 || k < n)
        .map(|(_, &k)| k)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeStats {
    pub first_block: usize,
    pub passes_run: usize,
    pub block_parities: usize,
    pub binary_calls: usize,
    pub bisection_parities: usize,
    pub corrections: usize,
    /// Set when the estimate was zero: blocks span the whole key, so an even
    /// number of errors goes unseen until verification.
    pub residual_possible: bool,
}

impl CascadeStats {
    pub fn leakage(&self) -> usize {
        self.block_parities + self.bisection_parities
    }
}

#[derive(Debug, Clone)]
pub struct CascadeRun {
    pub bob_key: BitVec,
    pub transcript: Transcript,
    pub pool: PadPool,
    pub stats: CascadeStats,
}

/// A run that stopped early, with everything announced up to that point.
#[derive(Debug, Clone, Error)]
#[error("cascade aborted: {error}")]
pub struct CascadeFailure {
    pub error: CascadeError,
    pub transcript: Transcript,
    pub stats: CascadeStats,
}

/// Number of encrypted announcements, i.e. pre-shared bits consumed.
pub fn leakage(transcript: &Transcript) -> usize {
    transcript.leakage()
}

/// Bisects a block already known to have odd relative parity, announcing the
/// left half (rounded up) at each step. Returns a disagreeing position.
fn locate_error<C: Channel>(
    session: &mut Session<C>,
    round: u32,
    block: &[usize],
) -> Result<(usize, usize), CascadeError> {
    let mut current = block;
    let mut steps = 0;
    while current.len() > 1 {
        let (left, right) = current.split_at(current.len().div_ceil(2));
        let odd = session.exchange_parity(round, left)?;
        steps += 1;
        current = if odd { left } else { right };
    }
    Ok((current[0], steps))
}

/// BINARY on a standalone block: announces the block parity, then bisects.
/// Both keys are left unchanged.
pub fn run_binary(
    alice: &BitVec,
    bob: &BitVec,
    block: &[usize],
    pool: PadPool,
) -> Result<(usize, Transcript, PadPool), CascadeError> {
    if block.is_empty() {
        return Err(CascadeError::EvenParity);
    }
    let channel = LocalChannel::new(alice.clone(), bob.clone(), pool)?;
    let mut session = Session::new(channel, alice.len());
    if !session.exchange_parity(1, block)? {
        return Err(CascadeError::EvenParity);
    }
    let (index, _) = locate_error(&mut session, 1, block)?;
    let (channel, transcript) = session.into_parts();
    let (alice_party, _) = channel.into_parties();
    Ok((index, transcript, alice_party.into_parts().1))
}

struct Pass {
    size: usize,
    order: Vec<usize>,
    block_of: Vec<usize>,
    odd: Vec<Option<bool>>,
}

impl Pass {
    fn new(size: usize, order: Vec<usize>) -> Self {
        let mut block_of = vec![0; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            block_of[i] = pos / size;
        }
        let blocks = order.len().div_ceil(size);
        Self {
            size,
            order,
            block_of,
            odd: vec![None; blocks],
        }
    }

    fn block(&self, b: usize) -> &[usize] {
        let end = ((b + 1) * self.size).min(self.order.len());
        &self.order[b * self.size..end]
    }
}

struct Driver<C: Channel> {
    session: Session<C>,
    passes: Vec<Pass>,
    stats: CascadeStats,
}

impl<C: Channel> Driver<C> {
    fn run(&mut self, sizes: &[usize], seed: u64) -> Result<(), CascadeError> {
        let n = self.session.key_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (p, &size) in sizes.iter().enumerate() {
            if p > 0 && size >= n {
                continue;
            }
            let round = p as u32 + 1;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            self.passes.push(Pass::new(size, order));
            self.stats.passes_run += 1;
            let current = self.passes.len() - 1;
            for b in 0..self.passes[current].odd.len() {
                let block = self.passes[current].block(b).to_vec();
                let odd = self.session.exchange_parity(round, &block)?;
                self.stats.block_parities += 1;
                self.passes[current].odd[b] = Some(odd);
                if odd {
                    self.cascade_from(round, current, b)?;
                }
            }
        }
        Ok(())
    }

    /// Corrects block `(pass, b)` and every block the correction turns odd.
    fn cascade_from(&mut self, round: u32, pass: usize, b: usize) -> Result<(), CascadeError> {
        let mut queue = VecDeque::from([(pass, b)]);
        while let Some((p, blk)) = queue.pop_front() {
            if self.passes[p].odd[blk] != Some(true) {
                continue;
            }
            let block = self.passes[p].block(blk).to_vec();
            let (index, steps) = locate_error(&mut self.session, round, &block)?;
            self.stats.binary_calls += 1;
            self.stats.bisection_parities += steps;
            self.session.correct(index)?;
            self.stats.corrections += 1;
            for (q, other) in self.passes.iter_mut().enumerate() {
                let ob = other.block_of[index];
                if let Some(odd) = other.odd[ob] {
                    other.odd[ob] = Some(!odd);
                    if !odd {
                        queue.push_back((q, ob));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reconciles Bob's key to Alice's. Every parity is encrypted with the next
/// bit of `pool`; the pool must hold at least
/// [`CascadeConfig::pad_budget`] unused bits.
pub fn run_cascade(
    alice: &BitVec,
    bob: &BitVec,
    qber_estimate: f64,
    cfg: &CascadeConfig,
    pool: PadPool,
    seed: u64,
) -> Result<CascadeRun, CascadeFailure> {
    let fail = |error| CascadeFailure {
        error,
        transcript: Transcript::new(),
        stats: CascadeStats::default(),
    };
    if !(0.0..0.5).contains(&qber_estimate) {
        return Err(fail(CascadeError::InvalidEstimate(qber_estimate)));
    }
    let n = alice.len();
    let budget = cfg.pad_budget(n, qber_estimate);
    if pool.remaining() < budget {
        return Err(fail(CascadeError::InsufficientPad {
            budget,
            available: pool.remaining(),
        }));
    }
    let channel = LocalChannel::new(alice.clone(), bob.clone(), pool).map_err(fail)?;
    let sizes = cfg.block_sizes(n, qber_estimate);
    let mut driver = Driver {
        session: Session::new(channel, n),
        passes: Vec::new(),
        stats: CascadeStats {
            first_block: sizes.first().copied().unwrap_or(0),
            residual_possible: qber_estimate == 0.0,
            ..CascadeStats::default()
        },
    };
    let outcome = if n == 0 { Ok(()) } else { driver.run(&sizes, seed) };
    let Driver { session, stats, .. } = driver;
    let (channel, transcript) = session.into_parts();
    if let Err(error) = outcome {
        return Err(CascadeFailure {
            error,
            transcript,
            stats,
        });
    }
    let (alice_party, bob_party) = channel.into_parties();
    let (_, pool) = alice_party.into_parts();
    let (bob_key, _) = bob_party.into_parts();
    Ok(CascadeRun {
        bob_key,
        transcript,
        pool,
        stats,
    })
}

/// Re-runs a session from its recorded inputs and checks that it reproduces
/// `recorded` entry for entry. Also checks every announcement of Alice (whose
/// key never changes) against her key and the pad directly.
pub fn replay_matches(
    recorded: &Transcript,
    alice: &BitVec,
    bob: &BitVec,
    qber_estimate: f64,
    cfg: &CascadeConfig,
    pool: &PadPool,
    seed: u64,
) -> bool {
    let alice_consistent = recorded.entries().iter().all(|e| {
        let parity = alice.masked_parity(&e.mask).unwrap_or(false);
        match e.pad_index {
            Some(i) if i < pool.len() => e.bit == parity ^ pool.bit(i),
            Some(_) => false,
            None => e.bit == parity,
        }
    });
    let rerun = match run_cascade(alice, bob, qber_estimate, cfg, pool.clone(), seed) {
        Ok(run) => run.transcript,
        Err(failure) => failure.transcript,
    };
    alice_consistent && &rerun == recorded
}
