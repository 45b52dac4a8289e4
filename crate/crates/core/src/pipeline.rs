//! End-to-end prepare-and-measure session.
//!
//! Stages: transmission over a Pauli channel, sifting, disjoint per-basis
//! test samples, Cascade with encrypted parities, encrypted verification,
//! and privacy amplification by a random linear hash. The ledger tracks
//! `net = n − t − s` where `s` counts pad bits spent on announcements.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bellsim::{sample_pattern, BellError, BellPattern, IidPauli, PauliChannel};
use crate::bitlinalg::{BitMatrix, BitVec, DimensionError};
use crate::cascade::{
    run_cascade, CascadeConfig, CascadeError, CascadeStats, LocalChannel, PadPool, Session,
    Transcript,
};
use crate::csscode::binary_entropy;
use crate::pauli::{PauliError, PauliOp, StabilizerSet};

/// Round number given to verification exchanges in the transcript.
pub const VERIFY_ROUND: u32 = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] BellError),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

/// Channel description as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    Identity,
    /// Depolarizing with total error probability `p`.
    Depolarizing { p: f64 },
    /// Depolarizing with flip and phase error rates both equal to `qber`.
    Qber { qber: f64 },
    Iid {
        #[serde(rename = "pI")]
        p_i: f64,
        #[serde(rename = "pX")]
        p_x: f64,
        #[serde(rename = "pY")]
        p_y: f64,
        #[serde(rename = "pZ")]
        p_z: f64,
    },
}

impl ChannelSpec {
    pub fn to_channel(&self) -> PauliChannel {
        match *self {
            ChannelSpec::Identity => PauliChannel::identity(),
            ChannelSpec::Depolarizing { p } => PauliChannel::depolarizing(p),
            ChannelSpec::Qber { qber } => PauliChannel::Iid(IidPauli::with_qber(qber)),
            ChannelSpec::Iid { p_i, p_x, p_y, p_z } => {
                PauliChannel::Iid(IidPauli { p_i, p_x, p_y, p_z })
            }
        }
    }
}

fn default_threshold() -> f64 {
    0.11
}
fn default_delta() -> f64 {
    1e-6
}
fn default_verify_rounds() -> usize {
    50
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Total signals `M`.
    pub signals: usize,
    /// Test positions drawn from each basis.
    pub test_sample: usize,
    pub channel: ChannelSpec,
    /// Abort threshold on the X-basis (phase) error rate.
    #[serde(default = "default_threshold")]
    pub max_p_x: f64,
    /// Abort threshold on the Z-basis (flip) error rate.
    #[serde(default = "default_threshold")]
    pub max_p_z: f64,
    /// Failure probability in the Hoeffding deviation.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub cascade: CascadeConfig,
    /// Lower bound on the error rate handed to Cascade.
    #[serde(default)]
    pub min_cascade_qber: f64,
    /// Extra hash parities on top of the sampling margin.
    #[serde(default)]
    pub pa_extra_bits: usize,
    #[serde(default = "default_verify_rounds")]
    pub verify_rounds: usize,
    /// Rank the announced masks to cross-check net against the coset rate.
    #[serde(default = "default_true")]
    pub coset_check: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(signals: usize, test_sample: usize, channel: ChannelSpec, seed: u64) -> Self {
        Self {
            signals,
            test_sample,
            channel,
            max_p_x: default_threshold(),
            max_p_z: default_threshold(),
            delta: default_delta(),
            cascade: CascadeConfig::default(),
            min_cascade_qber: 0.0,
            pa_extra_bits: 0,
            verify_rounds: default_verify_rounds(),
            coset_check: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if 2 * self.test_sample >= self.signals {
            return bad(format!(
                "2 * test_sample ({}) must be below signals ({})",
                2 * self.test_sample,
                self.signals
            ));
        }
        if self.test_sample == 0 {
            return bad("test_sample must be positive".into());
        }
        for (name, v) in [("max_p_x", self.max_p_x), ("max_p_z", self.max_p_z)] {
            if !(v > 0.0 && v < 0.5) {
                return bad(format!("{name} = {v} outside (0, 0.5)"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} outside (0, 1)", self.delta));
        }
        if !(0.0..0.5).contains(&self.min_cascade_qber) {
            return bad(format!("min_cascade_qber = {} outside [0, 0.5)", self.min_cascade_qber));
        }
        if self.cascade.passes == 0 || self.cascade.block_constant <= 0.0 {
            return bad("cascade needs at least one pass and a positive block constant".into());
        }
        self.channel.to_channel().validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.gen() {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transmission {
    pub alice_bits: BitVec,
    pub alice_bases: Vec<Basis>,
    pub bob_bits: BitVec,
    pub bob_bases: Vec<Basis>,
    /// Error pattern the channel left on the equivalent EPR pairs.
    pub pattern: BellPattern,
}

/// Sends `M` signals. When bases agree, Bob's bit is Alice's XOR the flip
/// bit (Z basis) or the phase bit (X basis) of the pair's error label;
/// otherwise it is a fair coin.
pub fn simulate_transmission(cfg: &SessionConfig, seed: u64) -> Result<Transmission, PipelineError> {
    let m = cfg.signals;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = sample_pattern(m, &cfg.channel.to_channel(), &mut rng)?;
    let alice_bits = BitVec::random(m, &mut rng);
    let alice_bases: Vec<Basis> = (0..m).map(|_| Basis::random(&mut rng)).collect();
    let bob_bases: Vec<Basis> = (0..m).map(|_| Basis::random(&mut rng)).collect();
    let mut bob_bits = BitVec::zeros(m);
    for i in 0..m {
        let bit = if alice_bases[i] == bob_bases[i] {
            let err = match alice_bases[i] {
                Basis::Z => pattern.flip_bits().get(i),
                Basis::X => pattern.phase_bits().get(i),
            };
            alice_bits.get(i) ^ err
        } else {
            rng.gen()
        };
        bob_bits.set(i, bit);
    }
    Ok(Transmission {
        alice_bits,
        alice_bases,
        bob_bits,
        bob_bases,
        pattern,
    })
}

#[derive(Debug, Clone)]
pub struct Sifted {
    pub alice: BitVec,
    pub bob: BitVec,
    pub bases: Vec<Basis>,
    /// Signal index of each sifted position.
    pub positions: Vec<usize>,
}

impl Sifted {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn sift(tx: &Transmission) -> Sifted {
    let positions: Vec<usize> = (0..tx.alice_bases.len())
        .filter(|&i| tx.alice_bases[i] == tx.bob_bases[i])
        .collect();
    Sifted {
        alice: tx.alice_bits.select(&positions),
        bob: tx.bob_bits.select(&positions),
        bases: positions.iter().map(|&i| tx.alice_bases[i]).collect(),
        positions,
    }
}

/// Hoeffding deviation `sqrt(ln(1/δ) / 2m)`.
pub fn hoeffding_epsilon(m: usize, delta: f64) -> f64 {
    ((1.0 / delta).ln() / (2.0 * m as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEstimate {
    pub p_z: f64,
    pub p_x: f64,
    pub epsilon: f64,
    pub tested: usize,
    pub abort: bool,
    pub reason: Option<String>,
}

/// Key material left after the test positions are removed.
#[derive(Debug, Clone)]
pub struct RawKey {
    pub alice: BitVec,
    pub bob: BitVec,
}

/// Draws `m` test positions from each basis without replacement, estimates
/// both error rates, and removes the tested positions from the key.
pub fn estimate_and_test(
    sifted: &Sifted,
    cfg: &SessionConfig,
    seed: u64,
) -> (SampleEstimate, RawKey) {
    let m = cfg.test_sample;
    let by_basis = |b: Basis| -> Vec<usize> {
        (0..sifted.len()).filter(|&i| sifted.bases[i] == b).collect()
    };
    let z_pos = by_basis(Basis::Z);
    let x_pos = by_basis(Basis::X);
    let epsilon = hoeffding_epsilon(m, cfg.delta);
    if z_pos.len() < m || x_pos.len() < m {
        let est = SampleEstimate {
            p_z: f64::NAN,
            p_x: f64::NAN,
            epsilon,
            tested: 0,
            abort: true,
            reason: Some(format!(
                "need {m} sifted positions per basis, have {} (Z) and {} (X)",
                z_pos.len(),
                x_pos.len()
            )),
        };
        let empty = RawKey {
            alice: BitVec::zeros(0),
            bob: BitVec::zeros(0),
        };
        return (est, empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = vec![false; sifted.len()];
    let mut rate = |pos: &[usize], tested: &mut [bool]| -> f64 {
        let picks = sample(&mut rng, pos.len(), m);
        let mut errors = 0;
        for k in picks.iter() {
            let i = pos[k];
            tested[i] = true;
            errors += usize::from(sifted.alice.get(i) != sifted.bob.get(i));
        }
        errors as f64 / m as f64
    };
    let p_z = rate(&z_pos, &mut tested);
    let p_x = rate(&x_pos, &mut tested);
    let mut reasons = Vec::new();
    if p_z + epsilon > cfg.max_p_z {
        reasons.push(format!("p_z {p_z:.4} + {epsilon:.4} exceeds {}", cfg.max_p_z));
    }
    if p_x + epsilon > cfg.max_p_x {
        reasons.push(format!("p_x {p_x:.4} + {epsilon:.4} exceeds {}", cfg.max_p_x));
    }
    let keep: Vec<usize> = (0..sifted.len()).filter(|&i| !tested[i]).collect();
    let key = RawKey {
        alice: sifted.alice.select(&keep),
        bob: sifted.bob.select(&keep),
    };
    let est = SampleEstimate {
        p_z,
        p_x,
        epsilon,
        tested: 2 * m,
        abort: !reasons.is_empty(),
        reason: (!reasons.is_empty()).then(|| reasons.join("; ")),
    };
    (est, key)
}

/// Random linear hash `G = [I | R] P` with `P` a column permutation and `R`
/// uniform, so `G` has full row rank `n − t` and for every nonzero `x` the
/// chance that `Gx = 0` over `R` is at most `2^-(n−t)`.
#[derive(Debug, Clone)]
pub struct PrivacyHash {
    n: usize,
    t: usize,
    /// Column `perm[j]` of `G` is column `j` of `[I | R]`.
    perm: Vec<usize>,
    /// The `(n − t) × t` block `R`, stored by rows.
    r: BitMatrix,
}

impl PrivacyHash {
    pub fn new(n: usize, t: usize, seed: u64) -> Self {
        let t = t.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let r = BitMatrix::random(n - t, t, &mut rng);
        Self { n, t, perm, r }
    }

    /// Output length `n − t`.
    pub fn rows(&self) -> usize {
        self.n - self.t
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn apply(&self, key: &BitVec) -> Result<BitVec, DimensionError> {
        if key.len() != self.n {
            return Err(DimensionError::LengthMismatch {
                left: self.n,
                right: key.len(),
            });
        }
        let k = self.rows();
        let tail = BitVec::from_bools(
            &self.perm[k..].iter().map(|&c| key.get(c)).collect::<Vec<_>>(),
        );
        let mut out = self.r.mul_vec(&tail)?;
        for i in 0..k {
            if key.get(self.perm[i]) {
                out.flip(i);
            }
        }
        Ok(out)
    }

    /// `G` as an explicit matrix.
    pub fn matrix(&self) -> BitMatrix {
        let k = self.rows();
        let rows = (0..k)
            .map(|i| {
                let mut row = BitVec::zeros(self.n);
                row.set(self.perm[i], true);
                for j in self.r.row(i).iter_ones() {
                    row.set(self.perm[k + j], true);
                }
                row
            })
            .collect();
        BitMatrix::from_rows(rows).unwrap_or_else(|_| BitMatrix::empty(self.n))
    }

    /// A basis of `ker G`: `t` vectors whose parities the hash discards.
    /// These are the supports of the X-type operators of the hash layer.
    pub fn kernel_rows(&self) -> Vec<BitVec> {
        let k = self.rows();
        let rt = self.r.transpose();
        (0..self.t)
            .map(|j| {
                let mut v = BitVec::zeros(self.n);
                v.set(self.perm[k + j], true);
                if k > 0 {
                    for i in rt.row(j).iter_ones() {
                        v.set(self.perm[i], true);
                    }
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Amplified {
    pub key: BitVec,
    pub hash: PrivacyHash,
    /// Set when `t ≥ n` left nothing.
    pub empty: bool,
}

pub fn privacy_amplify(key: &BitVec, t: usize, seed: u64) -> Amplified {
    let hash = PrivacyHash::new(key.len(), t, seed);
    let out = hash.apply(key).expect("hash built for this length");
    Amplified {
        empty: out.is_empty(),
        key: out,
        hash,
    }
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub equal: bool,
    /// False when no rounds were run, so equality is vacuous.
    pub verified: bool,
    pub transcript: Transcript,
    pub pool: PadPool,
}

/// Compares `rounds` uniformly random parities, each encrypted with a fresh
/// pad bit.
pub fn verify_equal(
    alice: &BitVec,
    bob: &BitVec,
    rounds: usize,
    pool: PadPool,
    seed: u64,
) -> Result<Verification, CascadeError> {
    let n = alice.len();
    let channel = LocalChannel::new(alice.clone(), bob.clone(), pool)?;
    let mut session = Session::new(channel, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut equal = true;
    for _ in 0..rounds {
        let mask = BitVec::random(n, &mut rng);
        if session.exchange_mask(VERIFY_ROUND, mask)? {
            equal = false;
        }
    }
    let (channel, transcript) = session.into_parts();
    let (alice_party, _) = channel.into_parties();
    Ok(Verification {
        equal,
        verified: rounds > 0,
        transcript,
        pool: alice_party.into_parts().1,
    })
}

/// `net = n − t − s`; negative when announcements cost more than the hash
/// leaves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyLedger {
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub gross: usize,
    pub net: i64,
}

impl KeyLedger {
    pub fn new(n: usize, s: usize, t: usize) -> Self {
        let t = t.min(n);
        Self {
            n,
            s,
            t,
            gross: n - t,
            net: (n - t) as i64 - s as i64,
        }
    }

    /// Ledger of a session that produced nothing but spent `s` pad bits.
    pub fn sunk(s: usize) -> Self {
        Self::new(0, s, 0)
    }

    pub fn is_consistent(&self) -> bool {
        self.gross + self.t == self.n && self.net == self.gross as i64 - self.s as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Sampling,
    Reconciliation,
    Verification,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Sampling => "sampling",
            Stage::Reconciliation => "reconciliation",
            Stage::Verification => "verification",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub signals: usize,
    pub sifted: usize,
    pub discarded: usize,
    pub tested: usize,
    pub reconciled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadUsage {
    pub capacity: usize,
    pub consumed: usize,
    pub cascade: usize,
    pub verification: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashInfo {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
}

/// Net key length against the coset count of the matched code pair. C1 is
/// the kernel of the announced masks, C2 the kernel of the hash, so the
/// coset rate is `(n − rank Z) − t`. It differs from `net` only by the
/// linear dependencies among announced masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetCheck {
    pub mask_rank: usize,
    pub coset_rate: i64,
    pub net: i64,
    pub margin: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub p_z: Option<f64>,
    pub p_x: Option<f64>,
    pub epsilon: f64,
    pub cascade_qber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SessionConfig,
    pub aborted: bool,
    pub abort: Option<AbortInfo>,
    pub estimates: Estimates,
    pub counts: Counts,
    pub ledger: KeyLedger,
    /// Sampling margin included in `t`.
    pub pa_margin: usize,
    pub pad: PadUsage,
    pub cascade: Option<CascadeStats>,
    /// Cascade left disagreements that verification had to catch.
    pub residual_error: bool,
    pub keys_equal: bool,
    /// Verification ran at least one round.
    pub verified: bool,
    pub hash: Option<HashInfo>,
    pub empty_key: bool,
    pub coset_check: Option<CosetCheck>,
    pub transcript_digest: String,
    pub transcript_entries: usize,
    /// SHA-256 of Alice's final key; absent when the session aborted.
    pub final_key_digest: Option<String>,
    pub final_key_len: usize,
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub report: RunReport,
    pub transcript: Transcript,
    /// Public hash of a completed session.
    pub hash: Option<PrivacyHash>,
    pub final_keys: Option<(BitVec, BitVec)>,
}

/// Per-stage seeds drawn in a fixed order from the session seed.
#[derive(Debug, Clone, Copy)]
struct StageSeeds {
    transmission: u64,
    sampling: u64,
    pad: u64,
    cascade: u64,
    verification: u64,
    hash: u64,
}

impl StageSeeds {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            transmission: rng.next_u64(),
            sampling: rng.next_u64(),
            pad: rng.next_u64(),
            cascade: rng.next_u64(),
            verification: rng.next_u64(),
            hash: rng.next_u64(),
        }
    }
}

/// `t = ⌈n H₂(p̂_X)⌉ + margin` with the margin covering the sampling
/// deviation plus any configured extra, capped at `n`.
pub fn hash_length(n: usize, p_x: f64, epsilon: f64, extra: usize) -> (usize, usize) {
    let base = (n as f64 * binary_entropy(p_x)).ceil() as usize;
    let bound = (n as f64 * binary_entropy((p_x + epsilon).min(0.5))).ceil() as usize;
    let margin = bound.saturating_sub(base) + extra;
    ((base + margin).min(n), margin)
}

/// Z-type operators for every announced mask followed by X-type operators
/// for every discarded hash parity.
pub fn analysis_operators(transcript: &Transcript, hash: &PrivacyHash) -> StabilizerSet {
    let ops: Vec<PauliOp> = transcript
        .masks()
        .map(|m| PauliOp::z_type(m.clone()))
        .chain(hash.kernel_rows().into_iter().map(PauliOp::x_type))
        .collect();
    StabilizerSet::new(ops).expect("all operators share the key length")
}

pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutput, PipelineError> {
    cfg.validate()?;
    let seeds = StageSeeds::new(cfg.seed);
    let tx = simulate_transmission(cfg, seeds.transmission)?;
    let sifted = sift(&tx);
    let (est, raw) = estimate_and_test(&sifted, cfg, seeds.sampling);
    let n = raw.alice.len();
    let mut report = RunReport {
        config: cfg.clone(),
        aborted: false,
        abort: None,
        estimates: Estimates {
            p_z: est.p_z.is_finite().then_some(est.p_z),
            p_x: est.p_x.is_finite().then_some(est.p_x),
            epsilon: est.epsilon,
            cascade_qber: None,
        },
        counts: Counts {
            signals: cfg.signals,
            sifted: sifted.len(),
            discarded: cfg.signals - sifted.len(),
            tested: est.tested,
            reconciled: n,
        },
        ledger: KeyLedger::default(),
        pa_margin: 0,
        pad: PadUsage {
            capacity: 0,
            consumed: 0,
            cascade: 0,
            verification: 0,
        },
        cascade: None,
        residual_error: false,
        keys_equal: false,
        verified: false,
        hash: None,
        empty_key: false,
        coset_check: None,
        transcript_digest: Transcript::new().digest(),
        transcript_entries: 0,
        final_key_digest: None,
        final_key_len: 0,
    };
    let abort = |mut report: RunReport, stage, reason: String, transcript: Transcript| {
        report.aborted = true;
        report.abort = Some(AbortInfo { stage, reason });
        report.pad.consumed = transcript.leakage();
        report.ledger = KeyLedger::sunk(transcript.leakage());
        report.transcript_digest = transcript.digest();
        report.transcript_entries = transcript.len();
        SessionOutput {
            report,
            transcript,
            hash: None,
            final_keys: None,
        }
    };
    if est.abort {
        let reason = est.reason.clone().unwrap_or_default();
        return Ok(abort(report, Stage::Sampling, reason, Transcript::new()));
    }

    let q = est.p_z.max(est.p_x).max(cfg.min_cascade_qber);
    report.estimates.cascade_qber = Some(q);
    let capacity = cfg.cascade.pad_budget(n, q) + cfg.verify_rounds;
    report.pad.capacity = capacity;
    let pool = PadPool::random(capacity, seeds.pad);
    let run = match run_cascade(&raw.alice, &raw.bob, q, &cfg.cascade, pool, seeds.cascade) {
        Ok(run) => run,
        Err(failure) => {
            report.cascade = Some(failure.stats.clone());
            report.pad.cascade = failure.transcript.leakage();
            let reason = failure.error.to_string();
            return Ok(abort(report, Stage::Reconciliation, reason, failure.transcript));
        }
    };
    report.residual_error = run.bob_key != raw.alice;
    report.pad.cascade = run.transcript.leakage();
    report.cascade = Some(run.stats.clone());
    let mut transcript = run.transcript;

    let check = verify_equal(
        &raw.alice,
        &run.bob_key,
        cfg.verify_rounds,
        run.pool,
        seeds.verification,
    );
    let check = match check {
        Ok(v) => v,
        Err(e) => return Ok(abort(report, Stage::Verification, e.to_string(), transcript)),
    };
    report.pad.verification = check.transcript.leakage();
    transcript.extend(check.transcript);
    report.verified = check.verified;
    report.keys_equal = check.equal;
    if !check.equal {
        let reason = format!("{} verification parities disagree", cfg.verify_rounds);
        return Ok(abort(report, Stage::Verification, reason, transcript));
    }

    let p_x = est.p_x;
    let (t, margin) = hash_length(n, p_x, est.epsilon, cfg.pa_extra_bits);
    let pa = privacy_amplify(&raw.alice, t, seeds.hash);
    let bob_final = pa.hash.apply(&run.bob_key)?;
    let s = transcript.leakage();
    let ledger = KeyLedger::new(n, s, t);
    if cfg.coset_check {
        let mask_rank = if transcript.is_empty() {
            0
        } else {
            BitMatrix::from_rows(transcript.masks().cloned().collect())?.rank()
        };
        let coset_rate = (n - mask_rank) as i64 - t as i64;
        report.coset_check = Some(CosetCheck {
            mask_rank,
            coset_rate,
            net: ledger.net,
            margin,
            holds: (ledger.net - coset_rate).unsigned_abs() as usize <= margin,
        });
    }
    report.pad.consumed = s;
    report.ledger = ledger;
    report.pa_margin = margin;
    report.hash = Some(HashInfo {
        seed: seeds.hash,
        rows: pa.hash.rows(),
        cols: pa.hash.cols(),
    });
    report.empty_key = pa.empty;
    report.keys_equal = pa.key == bob_final;
    report.final_key_digest = Some(crate::cascade::digest_hex(pa.key.to_string().as_bytes()));
    report.final_key_len = pa.key.len();
    report.transcript_digest = transcript.digest();
    report.transcript_entries = transcript.len();
    Ok(SessionOutput {
        report,
        transcript,
        hash: Some(pa.hash),
        final_keys: Some((pa.key, bob_final)),
    })
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub qber: f64,
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub gross: usize,
    pub net: i64,
    pub aborted: bool,
    pub keys_equal: bool,
    pub seed: u64,
}

impl SweepRow {
    pub const HEADER: &'static str = "qber,n,s,t,gross,net,aborted,keys_equal,seed";

    pub fn from_report(qber: f64, report: &RunReport) -> Self {
        let l = report.ledger;
        Self {
            qber,
            n: l.n,
            s: l.s,
            t: l.t,
            gross: l.gross,
            net: l.net,
            aborted: report.aborted,
            keys_equal: report.keys_equal,
            seed: report.config.seed,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.qber, self.n, self.s, self.t, self.gross, self.net, self.aborted, self.keys_equal, self.seed
        )
    }
}
