//! Bell-diagonal simulation of `N` shared EPR pairs.
//!
//! Each pair carries a two-bit label `(a, b)`: `a` is the phase bit and `b`
//! the flip bit, so `00 = Φ+`, `01 = Ψ+`, `10 = Φ-`, `11 = Ψ-`. A Pauli
//! applied by the channel to Bob's half toggles `b` for X, `a` for Z and
//! both for Y. Symmetric CSS-like measurements read parities of these bits.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitlinalg::{BitVec, DimensionError};
use crate::pauli::{CssType, PauliOp};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest `N` for which all `4^N` patterns are enumerated.
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BellError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("channel probabilities must lie in [0, 1] and sum to 1 (sum = {sum})")]
    Unnormalized { sum: f64 },
    #[error("operator {op} is not Z-type or X-type")]
    UnsupportedOperator { op: String },
    #[error("ancilla pool exhausted")]
    AncillaExhausted,
    #[error("exhaustive enumeration limited to N <= {EXHAUSTIVE_LIMIT}, got {n}")]
    UnsupportedScale { n: usize },
}

/// The BDSW label of `N` Bell pairs.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BellPattern {
    phase: BitVec,
    flip: BitVec,
}

impl BellPattern {
    pub fn new(phase: BitVec, flip: BitVec) -> Result<Self, BellError> {
        if phase.len() != flip.len() {
            return Err(DimensionError::LengthMismatch {
                left: phase.len(),
                right: flip.len(),
            }
            .into());
        }
        Ok(Self { phase, flip })
    }

    /// `N` perfect EPR pairs.
    pub fn perfect(n: usize) -> Self {
        Self {
            phase: BitVec::zeros(n),
            flip: BitVec::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// Phase bits `a`.
    pub fn phase_bits(&self) -> &BitVec {
        &self.phase
    }

    /// Flip bits `b`.
    pub fn flip_bits(&self) -> &BitVec {
        &self.flip
    }

    pub fn is_perfect(&self) -> bool {
        self.phase.is_zero() && self.flip.is_zero()
    }

    /// Applies a Pauli error to Bob's halves.
    pub fn apply_pauli(&mut self, op: &PauliOp) -> Result<(), BellError> {
        self.flip.xor_in_place(op.x_mask())?;
        self.phase.xor_in_place(op.z_mask())?;
        Ok(())
    }

    /// Pattern for pair labels given as `(a, b)` tuples.
    pub fn from_labels(labels: &[(bool, bool)]) -> Self {
        let phase = BitVec::from_bools(&labels.iter().map(|l| l.0).collect::<Vec<_>>());
        let flip = BitVec::from_bools(&labels.iter().map(|l| l.1).collect::<Vec<_>>());
        Self { phase, flip }
    }
}

impl fmt::Display for BellPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={}; b={}", self.phase, self.flip)
    }
}

impl fmt::Debug for BellPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BellPattern({self})")
    }
}

/// Outcome of a ±1-valued observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_parity(odd: bool) -> Self {
        if odd {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn is_minus(self) -> bool {
        self == Sign::Minus
    }

    pub fn value(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        Sign::from_parity(self.is_minus() != rhs.is_minus())
    }
}

/// One term of a correlated Pauli strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureTerm {
    pub prob: f64,
    pub pauli: String,
}

/// Single-pair probabilities applied independently to every pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidPauli {
    #[serde(rename = "pI")]
    pub p_i: f64,
    #[serde(rename = "pX")]
    pub p_x: f64,
    #[serde(rename = "pY")]
    pub p_y: f64,
    #[serde(rename = "pZ")]
    pub p_z: f64,
}

impl IidPauli {
    /// `p_X = p_Y = p_Z = q / 3`. Flip and phase rates are both `2q/3`.
    pub fn depolarizing(q: f64) -> Self {
        Self {
            p_i: 1.0 - q,
            p_x: q / 3.0,
            p_y: q / 3.0,
            p_z: q / 3.0,
        }
    }

    /// Depolarizing channel whose flip (and phase) error rate equals `qber`.
    pub fn with_qber(qber: f64) -> Self {
        Self::depolarizing(1.5 * qber)
    }

    pub fn flip_rate(&self) -> f64 {
        self.p_x + self.p_y
    }

    pub fn phase_rate(&self) -> f64 {
        self.p_z + self.p_y
    }

    fn probs(&self) -> [f64; 4] {
        [self.p_i, self.p_x, self.p_y, self.p_z]
    }
}

/// Eve's correlated Pauli strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum PauliChannel {
    Iid(IidPauli),
    Mixture(Vec<(f64, PauliOp)>),
}

impl PauliChannel {
    pub fn identity() -> Self {
        PauliChannel::Iid(IidPauli {
            p_i: 1.0,
            p_x: 0.0,
            p_y: 0.0,
            p_z: 0.0,
        })
    }

    pub fn depolarizing(q: f64) -> Self {
        PauliChannel::Iid(IidPauli::depolarizing(q))
    }

    pub fn from_terms(terms: &[MixtureTerm]) -> Result<Self, crate::pauli::PauliError> {
        terms
            .iter()
            .map(|t| Ok((t.prob, t.pauli.parse()?)))
            .collect::<Result<Vec<_>, _>>()
            .map(PauliChannel::Mixture)
    }

    pub fn validate(&self) -> Result<(), BellError> {
        let probs: Vec<f64> = match self {
            PauliChannel::Iid(p) => p.probs().to_vec(),
            PauliChannel::Mixture(terms) => terms.iter().map(|t| t.0).collect(),
        };
        let sum: f64 = probs.iter().sum();
        let in_range = probs.iter().all(|p| (0.0..=1.0).contains(p));
        if !in_range || (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(BellError::Unnormalized { sum });
        }
        Ok(())
    }

    fn check_mixture_len(&self, n: usize) -> Result<(), BellError> {
        if let PauliChannel::Mixture(terms) = self {
            if let Some((_, op)) = terms.iter().find(|t| t.1.num_qubits() != n) {
                return Err(DimensionError::LengthMismatch {
                    left: n,
                    right: op.num_qubits(),
                }
                .into());
            }
        }
        Ok(())
    }
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` past the last cumulative value; take the last
    // outcome with nonzero weight.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples the error pattern Eve's strategy leaves on `n` pairs.
pub fn apply_channel(n: usize, channel: &PauliChannel, seed: u64) -> Result<BellPattern, BellError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_pattern(n, channel, &mut rng)
}

pub fn sample_pattern<R: Rng + ?Sized>(
    n: usize,
    channel: &PauliChannel,
    rng: &mut R,
) -> Result<BellPattern, BellError> {
    channel.validate()?;
    channel.check_mixture_len(n)?;
    let mut pattern = BellPattern::perfect(n);
    match channel {
        PauliChannel::Iid(p) => {
            let probs = p.probs();
            for j in 0..n {
                match pick(&probs, rng.gen::<f64>()) {
                    1 => pattern.flip.set(j, true),
                    2 => {
                        pattern.flip.set(j, true);
                        pattern.phase.set(j, true);
                    }
                    3 => pattern.phase.set(j, true),
                    _ => {}
                }
            }
        }
        PauliChannel::Mixture(terms) => {
            let probs: Vec<f64> = terms.iter().map(|t| t.0).collect();
            pattern.apply_pauli(&terms[pick(&probs, rng.gen::<f64>())].1)?;
        }
    }
    Ok(pattern)
}

/// Eigenvalue of the symmetric operator `m ⊗ m` on the pattern.
pub fn measure_symmetric(pattern: &BellPattern, m: &PauliOp) -> Result<Sign, BellError> {
    if m.css_type() == CssType::Mixed {
        return Err(BellError::UnsupportedOperator { op: m.to_string() });
    }
    y_free_eigenvalue(pattern, m)
}

/// `P ⊗ P` on a Bell-diagonal label has eigenvalue `(-1)^(x·a + z·b)` when
/// `P` has no Y site; Y sites would add a global sign, which is not modelled.
fn y_free_eigenvalue(pattern: &BellPattern, op: &PauliOp) -> Result<Sign, BellError> {
    if !op.x_mask().and(op.z_mask())?.is_zero() {
        return Err(BellError::UnsupportedOperator { op: op.to_string() });
    }
    let odd = pattern.phase.masked_parity(op.x_mask())? ^ pattern.flip.masked_parity(op.z_mask())?;
    Ok(Sign::from_parity(odd))
}

/// Pre-shared perfect EPR pairs (equivalently, secret pad bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AncillaPool {
    remaining: usize,
}

impl AncillaPool {
    pub fn new(remaining: usize) -> Self {
        Self { remaining }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    fn take(&mut self) -> Result<(), BellError> {
        self.remaining = self
            .remaining
            .checked_sub(1)
            .ok_or(BellError::AncillaExhausted)?;
        Ok(())
    }
}

/// Broadcast outcomes of one breeding measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BreedOutcome {
    pub alice: Sign,
    pub bob: Sign,
}

impl BreedOutcome {
    /// The relative outcome, which is all that is learned about the data.
    pub fn relative(&self) -> Sign {
        self.alice * self.bob
    }
}

/// Learns the eigenvalue of `m ⊗ m` by consuming one ancilla pair.
///
/// The ancilla is appended to the data as an extra pair labelled `00`, and
/// each side measures `m ⊗ Z` on data plus its ancilla half. A Bell-diagonal
/// label is an eigenstate of every symmetric Pauli, so the joint label (and
/// hence the data label) is left as it was. Individual outcomes are uniform:
/// Alice's local result on a Bell pair is a fair coin.
pub fn breed_measure(
    pattern: &BellPattern,
    m: &PauliOp,
    pool: &mut AncillaPool,
    seed: u64,
) -> Result<(BreedOutcome, BellPattern), BellError> {
    if !matches!(m.css_type(), CssType::ZType | CssType::XType) {
        return Err(BellError::UnsupportedOperator { op: m.to_string() });
    }
    if m.num_qubits() != pattern.len() {
        return Err(DimensionError::LengthMismatch {
            left: pattern.len(),
            right: m.num_qubits(),
        }
        .into());
    }
    pool.take()?;

    let ancilla = BellPattern::perfect(1);
    let joint = BellPattern {
        phase: pattern.phase.concat(&ancilla.phase),
        flip: pattern.flip.concat(&ancilla.flip),
    };
    // Each side measures m ⊗ Z on (data, own ancilla half).
    let extended = PauliOp::new(
        m.x_mask().concat(&BitVec::zeros(1)),
        m.z_mask().concat(&BitVec::ones(1)),
    )
    .expect("equal lengths");
    let joint_eigenvalue = y_free_eigenvalue(&joint, &extended)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alice = Sign::from_parity(rng.gen());
    let bob = alice * joint_eigenvalue;

    let data = BellPattern {
        phase: joint.phase.select(&(0..pattern.len()).collect::<Vec<_>>()),
        flip: joint.flip.select(&(0..pattern.len()).collect::<Vec<_>>()),
    };
    Ok((BreedOutcome { alice, bob }, data))
}

fn weight_probabilities(n: usize, t_flip: usize, t_phase: usize, p: &IidPauli) -> f64 {
    // dp[f][ph]: probability of exactly f flips and ph phase errors among the
    // pairs seen so far, with counts beyond the thresholds dropped.
    let (tf, tp) = (t_flip.min(n), t_phase.min(n));
    let mut dp = vec![vec![0.0f64; tp + 1]; tf + 1];
    dp[0][0] = 1.0;
    for _ in 0..n {
        let mut next = vec![vec![0.0f64; tp + 1]; tf + 1];
        for f in 0..=tf {
            for ph in 0..=tp {
                let w = dp[f][ph];
                if w == 0.0 {
                    continue;
                }
                next[f][ph] += w * p.p_i;
                if f < tf {
                    next[f + 1][ph] += w * p.p_x;
                }
                if ph < tp {
                    next[f][ph + 1] += w * p.p_z;
                }
                if f < tf && ph < tp {
                    next[f + 1][ph + 1] += w * p.p_y;
                }
            }
        }
        dp = next;
    }
    dp.iter().flatten().sum()
}

/// Probability that the channel leaves at most `t_flip` flip bits and at
/// most `t_phase` phase bits set, i.e. `tr(Π ρ)` for the good subspace.
pub fn good_space_weight(
    channel: &PauliChannel,
    n: usize,
    t_flip: usize,
    t_phase: usize,
) -> Result<f64, BellError> {
    channel.validate()?;
    channel.check_mixture_len(n)?;
    Ok(match channel {
        PauliChannel::Iid(p) => weight_probabilities(n, t_flip, t_phase, p),
        PauliChannel::Mixture(terms) => terms
            .iter()
            .filter(|(_, op)| {
                op.x_mask().count_ones() <= t_flip && op.z_mask().count_ones() <= t_phase
            })
            .map(|t| t.0)
            .sum(),
    })
}

/// Same quantity by summing over all `4^N` Pauli patterns.
pub fn good_space_weight_exhaustive(
    channel: &PauliChannel,
    n: usize,
    t_flip: usize,
    t_phase: usize,
) -> Result<f64, BellError> {
    channel.validate()?;
    if n > EXHAUSTIVE_LIMIT {
        return Err(BellError::UnsupportedScale { n });
    }
    let p = match channel {
        PauliChannel::Iid(p) => *p,
        PauliChannel::Mixture(_) => return good_space_weight(channel, n, t_flip, t_phase),
    };
    let probs = p.probs();
    let mut total = 0.0;
    // Two bits per pair: 0 = I, 1 = X, 2 = Y, 3 = Z.
    for code in 0u64..(1u64 << (2 * n)) {
        let (mut flips, mut phases, mut weight) = (0, 0, 1.0);
        for j in 0..n {
            let k = ((code >> (2 * j)) & 3) as usize;
            weight *= probs[k];
            flips += usize::from(k == 1 || k == 2);
            phases += usize::from(k == 2 || k == 3);
        }
        if flips <= t_flip && phases <= t_phase {
            total += weight;
        }
    }
    Ok(total)
}

/// An error-correcting map on Bell patterns with a guaranteed radius.
pub trait Corrector {
    /// Every pattern with at most this many (flip, phase) errors is mapped
    /// to the perfect pattern.
    fn radius(&self) -> (usize, usize);

    fn correct(&self, pattern: &BellPattern) -> Result<BellPattern, BellError>;
}

/// Corrects one flip and one phase error on `n` pairs from the syndromes of
/// neighbouring `ZZ` and `XX` checks.
#[derive(Debug, Clone)]
pub struct RepetitionCorrector {
    z_checks: Vec<PauliOp>,
    x_checks: Vec<PauliOp>,
}

impl RepetitionCorrector {
    pub fn new(n: usize) -> Self {
        let pair = |j: usize| BitVec::from_indices(n, [j, j + 1]);
        Self {
            z_checks: (0..n.saturating_sub(1)).map(|j| PauliOp::z_type(pair(j))).collect(),
            x_checks: (0..n.saturating_sub(1)).map(|j| PauliOp::x_type(pair(j))).collect(),
        }
    }

    /// Syndrome of a single error at `j` on the chain of neighbour checks
    /// has bits `j-1` and `j`; this inverts that map.
    fn locate(syndrome: &[bool], n: usize) -> Option<usize> {
        let ones: Vec<usize> = (0..syndrome.len()).filter(|&k| syndrome[k]).collect();
        match ones.as_slice() {
            [] => None,
            [0] => Some(0),
            [k] if *k == n - 2 => Some(n - 1),
            [k, l] if l - k == 1 => Some(*l),
            // Not a single-error syndrome; flip the first end of the chain.
            _ => Some(ones[0]),
        }
    }
}

impl Corrector for RepetitionCorrector {
    fn radius(&self) -> (usize, usize) {
        // Two pairs give both single errors the same syndrome.
        if self.z_checks.len() >= 2 {
            (1, 1)
        } else {
            (0, 0)
        }
    }

    fn correct(&self, pattern: &BellPattern) -> Result<BellPattern, BellError> {
        let n = pattern.len();
        let mut out = pattern.clone();
        if n <= 2 {
            return Ok(out);
        }
        let z_syn = self
            .z_checks
            .iter()
            .map(|m| measure_symmetric(pattern, m).map(Sign::is_minus))
            .collect::<Result<Vec<_>, _>>()?;
        let x_syn = self
            .x_checks
            .iter()
            .map(|m| measure_symmetric(pattern, m).map(Sign::is_minus))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(j) = Self::locate(&z_syn, n) {
            out.flip.flip(j);
        }
        if let Some(j) = Self::locate(&x_syn, n) {
            out.phase.flip(j);
        }
        Ok(out)
    }
}

/// Monte-Carlo recovery success against the good-subspace bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityReport {
    pub trials: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub bound: f64,
    /// Binomial standard deviation of the success fraction at the bound.
    pub sigma: f64,
    pub holds: bool,
}

pub fn fidelity_bound_check<C: Corrector>(
    channel: &PauliChannel,
    n: usize,
    corrector: &C,
    trials: usize,
    seed: u64,
) -> Result<FidelityReport, BellError> {
    let (t_flip, t_phase) = corrector.radius();
    let bound = good_space_weight(channel, n, t_flip, t_phase)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0;
    for _ in 0..trials {
        let pattern = sample_pattern(n, channel, &mut rng)?;
        if corrector.correct(&pattern)?.is_perfect() {
            successes += 1;
        }
    }
    let success_fraction = if trials == 0 {
        1.0
    } else {
        successes as f64 / trials as f64
    };
    let sigma = (bound * (1.0 - bound) / trials.max(1) as f64).sqrt();
    Ok(FidelityReport {
        trials,
        successes,
        success_fraction,
        bound,
        sigma,
        holds: success_fraction >= bound - 3.0 * sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_patterns(n: usize) -> impl Iterator<Item = BellPattern> {
        (0u32..(1 << (2 * n))).map(move |code| {
            let labels: Vec<(bool, bool)> = (0..n)
                .map(|j| (code >> (2 * j) & 1 == 1, code >> (2 * j + 1) & 1 == 1))
                .collect();
            BellPattern::from_labels(&labels)
        })
    }

    fn css_ops(n: usize) -> Vec<PauliOp> {
        let mut ops = Vec::new();
        for m in 1u32..(1 << n) {
            let mask = BitVec::from_indices(n, (0..n).filter(|i| m >> i & 1 == 1));
            ops.push(PauliOp::z_type(mask.clone()));
            ops.push(PauliOp::x_type(mask));
        }
        ops
    }

    #[test]
    fn channel_examples() {
        let p = apply_channel(20, &PauliChannel::identity(), 5).unwrap();
        assert!(p.is_perfect());
        let flip = PauliChannel::Iid(IidPauli { p_i: 0.0, p_x: 1.0, p_y: 0.0, p_z: 0.0 });
        let p = apply_channel(20, &flip, 5).unwrap();
        assert!(p.phase_bits().is_zero());
        assert_eq!(p.flip_bits().count_ones(), 20);
        assert_eq!(apply_channel(9, &flip, 1), apply_channel(9, &flip, 1));
    }

    #[test]
    fn unnormalized_channel_rejected() {
        let bad = PauliChannel::Iid(IidPauli { p_i: 0.5, p_x: 0.4, p_y: 0.0, p_z: 0.0 });
        assert!(matches!(apply_channel(3, &bad, 0), Err(BellError::Unnormalized { .. })));
        let neg = PauliChannel::Iid(IidPauli { p_i: 1.1, p_x: -0.1, p_y: 0.0, p_z: 0.0 });
        assert!(neg.validate().is_err());
        let mix = PauliChannel::Mixture(vec![(0.5, "XI".parse().unwrap())]);
        assert!(mix.validate().is_err());
    }

    #[test]
    fn depolarizing_flip_frequency() {
        let q = 0.3;
        let n = 100_000;
        let p = apply_channel(n, &PauliChannel::depolarizing(q), 77).unwrap();
        let expected = 2.0 * q / 3.0;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        let freq = p.flip_bits().count_ones() as f64 / n as f64;
        assert!((freq - expected).abs() < 3.0 * sigma, "{freq} vs {expected}");
    }

    #[test]
    fn mixture_channel_applies_listed_op() {
        let ch = PauliChannel::Mixture(vec![(1.0, "XYZI".parse().unwrap())]);
        let p = apply_channel(4, &ch, 3).unwrap();
        assert_eq!(p.to_string(), "a=0110; b=1100");
        assert!(apply_channel(3, &ch, 3).is_err());
    }

    #[test]
    fn measure_examples() {
        let psi_plus = BellPattern::from_labels(&[(false, true)]);
        assert_eq!(measure_symmetric(&psi_plus, &"Z".parse().unwrap()).unwrap(), Sign::Minus);
        let phi_minus = BellPattern::from_labels(&[(true, false)]);
        assert_eq!(measure_symmetric(&phi_minus, &"X".parse().unwrap()).unwrap(), Sign::Minus);
        let two = BellPattern::from_labels(&[(false, true), (false, true)]);
        assert_eq!(measure_symmetric(&two, &"ZZ".parse().unwrap()).unwrap(), Sign::Plus);
        assert!(matches!(
            measure_symmetric(&two, &"YI".parse().unwrap()),
            Err(BellError::UnsupportedOperator { .. })
        ));
    }

    #[test]
    fn z_reads_flip_bits_only_and_x_reads_phase_bits_only() {
        for pattern in all_patterns(3) {
            for m in css_ops(3) {
                let mut no_phase = pattern.clone();
                no_phase.phase = BitVec::zeros(3);
                let mut no_flip = pattern.clone();
                no_flip.flip = BitVec::zeros(3);
                let v = measure_symmetric(&pattern, &m).unwrap();
                match m.css_type() {
                    CssType::ZType => assert_eq!(v, measure_symmetric(&no_phase, &m).unwrap()),
                    _ => assert_eq!(v, measure_symmetric(&no_flip, &m).unwrap()),
                }
            }
        }
    }

    #[test]
    fn breed_examples() {
        let perfect = BellPattern::perfect(3);
        let mut pool = AncillaPool::new(50);
        for seed in 0..20 {
            for m in css_ops(3) {
                let (out, _) = breed_measure(&perfect, &m, &mut pool.clone(), seed).unwrap();
                assert_eq!(out.relative(), Sign::Plus);
            }
        }
        let flipped = BellPattern::from_labels(&[(false, true), (false, false)]);
        let z1: PauliOp = "ZI".parse().unwrap();
        let mut alice_minus = 0;
        for seed in 0..40 {
            let (out, after) = breed_measure(&flipped, &z1, &mut pool, seed).unwrap();
            assert_eq!(out.relative(), Sign::Minus);
            assert_eq!(after, flipped);
            alice_minus += usize::from(out.alice.is_minus());
        }
        assert!(alice_minus > 0 && alice_minus < 40);
        assert_eq!(pool.remaining(), 10);
    }

    #[test]
    fn breed_errors() {
        let p = BellPattern::perfect(2);
        let mut empty = AncillaPool::new(0);
        assert_eq!(
            breed_measure(&p, &"ZZ".parse().unwrap(), &mut empty, 0).unwrap_err(),
            BellError::AncillaExhausted
        );
        let mut pool = AncillaPool::new(1);
        assert!(matches!(
            breed_measure(&p, &"XZ".parse().unwrap(), &mut pool, 0),
            Err(BellError::UnsupportedOperator { .. })
        ));
        assert_eq!(pool.remaining(), 1, "rejected measurement consumes nothing");
    }

    #[test]
    fn breed_alice_outcome_is_balanced() {
        let p = BellPattern::from_labels(&[(true, true), (false, true)]);
        let m: PauliOp = "ZZ".parse().unwrap();
        let runs = 10_000;
        let mut pool = AncillaPool::new(runs);
        let sum: i32 = (0..runs as u64)
            .map(|seed| breed_measure(&p, &m, &mut pool, seed).unwrap().0.alice.value())
            .sum();
        let mean = sum as f64 / runs as f64;
        // Var of a ±1 fair coin is 1.
        assert!(mean.abs() < 3.0 / (runs as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn good_space_examples() {
        let id = PauliChannel::identity();
        assert_eq!(good_space_weight(&id, 7, 0, 0).unwrap(), 1.0);
        let dep = PauliChannel::depolarizing(0.4);
        assert!((good_space_weight(&dep, 6, 6, 6).unwrap() - 1.0).abs() < 1e-12);

        // N = 3, q = 0.3, thresholds (1, 1):
        // brute force over the 64 single-pair-label triples.
        let q = 0.3;
        let probs = [1.0 - q, q / 3.0, q / 3.0, q / 3.0];
        let mut brute = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let ks = [a, b, c];
                    let flips = ks.iter().filter(|&&k| k == 1 || k == 2).count();
                    let phases = ks.iter().filter(|&&k| k == 2 || k == 3).count();
                    if flips <= 1 && phases <= 1 {
                        brute += probs[a] * probs[b] * probs[c];
                    }
                }
            }
        }
        let w = good_space_weight(&PauliChannel::depolarizing(q), 3, 1, 1).unwrap();
        assert!((w - brute).abs() < 1e-15, "{w} vs {brute}");
        // Closed form: (1-q)^3 + 3(1-q)^2 q + 6(1-q)(q/3)^2 (one X and one Z
        // on different pairs, ordered) = 0.343 + 0.441 + 0.042.
        assert!((brute - 0.826).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_scale_limit() {
        assert!(matches!(
            good_space_weight_exhaustive(&PauliChannel::identity(), 13, 1, 1),
            Err(BellError::UnsupportedScale { n: 13 })
        ));
    }

    #[test]
    fn repetition_corrector_fixes_all_good_patterns() {
        assert_eq!(RepetitionCorrector::new(2).radius(), (0, 0));
        for n in 3..=5 {
            let c = RepetitionCorrector::new(n);
            for p in all_patterns(n) {
                let good = p.flip_bits().count_ones() <= 1 && p.phase_bits().count_ones() <= 1;
                if good {
                    assert!(c.correct(&p).unwrap().is_perfect(), "{p}");
                }
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        let rep = fidelity_bound_check(&PauliChannel::identity(), 4, &RepetitionCorrector::new(4), 500, 1)
            .unwrap();
        assert_eq!((rep.success_fraction, rep.bound), (1.0, 1.0));

        let rep = fidelity_bound_check(
            &PauliChannel::depolarizing(0.05),
            3,
            &RepetitionCorrector::new(3),
            20_000,
            2,
        )
        .unwrap();
        assert!(rep.holds, "{rep:?}");

        let bad = PauliChannel::Mixture(vec![(1.0, "XXI".parse().unwrap())]);
        let rep = fidelity_bound_check(&bad, 3, &RepetitionCorrector::new(3), 100, 3).unwrap();
        assert_eq!((rep.success_fraction, rep.bound), (0.0, 0.0));
        assert!(rep.holds);
    }
}
