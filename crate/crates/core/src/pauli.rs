//! Pauli operators in symplectic form and local-commutation analysis of
//! symmetric stabilizer measurement sets.
//!
//! A symmetric measurement `M = M^A ⊗ M^B` is described by a single
//! [`PauliOp`]; the commutation questions below are about the local factor
//! on one side. Phases are not tracked.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::bitlinalg::{BitVec, DimensionError};

/// Largest number of deletion candidates handled by exhaustive search.
pub const EXACT_SEARCH_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PauliError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("invalid Pauli character {found:?} at position {position}")]
    InvalidChar { position: usize, found: char },
    #[error("operator {index} ({op}) is not CSS-like")]
    NotCssLike { index: usize, op: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CssType {
    ZType,
    XType,
    Mixed,
    Identity,
}

impl CssType {
    pub fn is_css_like(self) -> bool {
        self != CssType::Mixed
    }
}

impl fmt::Display for CssType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CssType::ZType => "Z-type",
            CssType::XType => "X-type",
            CssType::Mixed => "mixed",
            CssType::Identity => "identity",
        })
    }
}

/// Pauli operator on `n` qubits as an (x-mask, z-mask) pair.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliOp {
    x: BitVec,
    z: BitVec,
}

impl PauliOp {
    pub fn new(x: BitVec, z: BitVec) -> Result<Self, PauliError> {
        if x.len() != z.len() {
            return Err(DimensionError::LengthMismatch {
                left: x.len(),
                right: z.len(),
            }
            .into());
        }
        Ok(Self { x, z })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            x: BitVec::zeros(n),
            z: BitVec::zeros(n),
        }
    }

    /// Product of `Z` over the support of `mask`.
    pub fn z_type(mask: BitVec) -> Self {
        Self {
            x: BitVec::zeros(mask.len()),
            z: mask,
        }
    }

    /// Product of `X` over the support of `mask`.
    pub fn x_type(mask: BitVec) -> Self {
        Self {
            z: BitVec::zeros(mask.len()),
            x: mask,
        }
    }

    pub fn single_z(n: usize, site: usize) -> Self {
        Self::z_type(BitVec::from_indices(n, [site]))
    }

    pub fn single_x(n: usize, site: usize) -> Self {
        Self::x_type(BitVec::from_indices(n, [site]))
    }

    pub fn num_qubits(&self) -> usize {
        self.x.len()
    }

    pub fn x_mask(&self) -> &BitVec {
        &self.x
    }

    pub fn z_mask(&self) -> &BitVec {
        &self.z
    }

    /// Support of the operator (sites carrying X, Y or Z).
    pub fn support(&self) -> BitVec {
        let mut s = self.x.clone();
        for i in self.z.iter_ones() {
            s.set(i, true);
        }
        s
    }

    pub fn css_type(&self) -> CssType {
        match (self.x.is_zero(), self.z.is_zero()) {
            (true, true) => CssType::Identity,
            (true, false) => CssType::ZType,
            (false, true) => CssType::XType,
            (false, false) => CssType::Mixed,
        }
    }

    /// Symplectic inner product `<p.x, q.z> + <p.z, q.x>` is zero.
    pub fn commutes(&self, other: &Self) -> Result<bool, PauliError> {
        let a = self.x.masked_parity(&other.z)?;
        let b = self.z.masked_parity(&other.x)?;
        Ok(a == b)
    }
}

impl fmt::Display for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.num_qubits())
            .map(|i| match (self.x.get(i), self.z.get(i)) {
                (false, false) => 'I',
                (true, false) => 'X',
                (true, true) => 'Y',
                (false, true) => 'Z',
            })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliOp({self})")
    }
}

impl FromStr for PauliOp {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = s.chars().count();
        let mut x = BitVec::zeros(n);
        let mut z = BitVec::zeros(n);
        for (i, c) in s.chars().enumerate() {
            match c {
                'I' => {}
                'X' => x.set(i, true),
                'Z' => z.set(i, true),
                'Y' => {
                    x.set(i, true);
                    z.set(i, true);
                }
                found => return Err(PauliError::InvalidChar { position: i, found }),
            }
        }
        Ok(Self { x, z })
    }
}

/// Ordered list of operators on a common number of qubits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StabilizerSet {
    ops: Vec<PauliOp>,
}

impl StabilizerSet {
    pub fn new(ops: Vec<PauliOp>) -> Result<Self, PauliError> {
        if let Some(first) = ops.first() {
            let n = first.num_qubits();
            if let Some(bad) = ops.iter().find(|op| op.num_qubits() != n) {
                return Err(DimensionError::LengthMismatch {
                    left: n,
                    right: bad.num_qubits(),
                }
                .into());
            }
        }
        Ok(Self { ops })
    }

    /// One operator per non-empty line; `#` starts a comment.
    pub fn parse_lines(text: &str) -> Result<Self, PauliError> {
        let ops = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<PauliOp>, _>>()?;
        Self::new(ops)
    }

    pub fn ops(&self) -> &[PauliOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Every pair `(i, j)`, `i < j`, whose local factors anticommute.
    ///
    /// Pure Z-type and pure X-type operators commute among themselves, so
    /// only pairs of differing type are tested.
    pub fn anticommuting_pairs(&self) -> Vec<(usize, usize)> {
        let types: Vec<CssType> = self.ops.iter().map(PauliOp::css_type).collect();
        let mut edges = Vec::new();
        for i in 0..self.ops.len() {
            for j in i + 1..self.ops.len() {
                let same_pure = types[i] == types[j]
                    && matches!(types[i], CssType::ZType | CssType::XType);
                if same_pure || types[i] == CssType::Identity || types[j] == CssType::Identity {
                    continue;
                }
                if !self.ops[i].commutes(&self.ops[j]).expect("common length") {
                    edges.push((i, j));
                }
            }
        }
        edges
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperatorClass {
    pub index: usize,
    pub op: String,
    pub css_type: CssType,
    pub css_like: bool,
}

/// Symmetry and CSS-likeness of a measurement set, plus its local
/// commutation graph (edges join anticommuting operators).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymmetryReport {
    pub operators: Vec<OperatorClass>,
    pub edges: Vec<(usize, usize)>,
    pub all_css_like: bool,
    pub locally_commuting: bool,
}

pub fn is_symmetric_protocol_valid(set: &StabilizerSet) -> SymmetryReport {
    let operators: Vec<OperatorClass> = set
        .ops()
        .iter()
        .enumerate()
        .map(|(index, op)| {
            let css_type = op.css_type();
            OperatorClass {
                index,
                op: op.to_string(),
                css_type,
                css_like: css_type.is_css_like(),
            }
        })
        .collect();
    let edges = set.anticommuting_pairs();
    SymmetryReport {
        all_css_like: operators.iter().all(|o| o.css_like),
        locally_commuting: edges.is_empty(),
        operators,
        edges,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum NoncommutingSet {
    /// Deleting `members` (indices of Z-type operators) leaves the rest
    /// locally commuting. `exact` is false when the greedy fallback ran, in
    /// which case `members` may not be minimal.
    Found { members: Vec<usize>, exact: bool },
    /// Some anticommuting pair has no Z-type endpoint.
    Infeasible { blocking_edge: (usize, usize) },
}

impl NoncommutingSet {
    pub fn r(&self) -> Option<usize> {
        match self {
            NoncommutingSet::Found { members, .. } => Some(members.len()),
            NoncommutingSet::Infeasible { .. } => None,
        }
    }

    pub fn members(&self) -> &[usize] {
        match self {
            NoncommutingSet::Found { members, .. } => members,
            NoncommutingSet::Infeasible { .. } => &[],
        }
    }
}

/// Smallest set of Z-type operators whose removal restores pairwise local
/// commutation.
pub fn find_noncommuting_set(set: &StabilizerSet) -> Result<NoncommutingSet, PauliError> {
    for (index, op) in set.ops().iter().enumerate() {
        if !op.css_type().is_css_like() {
            return Err(PauliError::NotCssLike {
                index,
                op: op.to_string(),
            });
        }
    }
    let edges = set.anticommuting_pairs();
    noncommuting_from_edges(set, &edges)
}

fn noncommuting_from_edges(
    set: &StabilizerSet,
    edges: &[(usize, usize)],
) -> Result<NoncommutingSet, PauliError> {
    let deletable = |i: usize| set.ops()[i].css_type() == CssType::ZType;

    if let Some(&blocking_edge) = edges.iter().find(|&&(i, j)| !deletable(i) && !deletable(j)) {
        return Ok(NoncommutingSet::Infeasible { blocking_edge });
    }

    let mut candidates: Vec<usize> = edges
        .iter()
        .flat_map(|&(i, j)| [i, j])
        .filter(|&i| deletable(i))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    if candidates.len() <= EXACT_SEARCH_LIMIT {
        Ok(exact_cover(&candidates, edges))
    } else {
        Ok(greedy_cover(set.len(), &candidates, edges))
    }
}

/// Enumerates candidate subsets in order of increasing size; the first one
/// touching every edge is minimal.
fn exact_cover(candidates: &[usize], edges: &[(usize, usize)]) -> NoncommutingSet {
    let pos = |op: usize| candidates.binary_search(&op).ok();
    // Each edge as a bitmask over candidate positions.
    let edge_masks: Vec<u32> = edges
        .iter()
        .map(|&(i, j)| {
            [pos(i), pos(j)]
                .into_iter()
                .flatten()
                .fold(0u32, |m, p| m | 1 << p)
        })
        .collect();
    let c = candidates.len();
    for size in 0..=c {
        let mut found = None;
        for_each_combination(c, size, |subset| {
            if edge_masks.iter().all(|&e| e & subset != 0) {
                found = Some(subset);
                true
            } else {
                false
            }
        });
        if let Some(subset) = found {
            let members = (0..c)
                .filter(|&p| subset >> p & 1 == 1)
                .map(|p| candidates[p])
                .collect();
            return NoncommutingSet::Found {
                members,
                exact: true,
            };
        }
    }
    unreachable!("the full candidate set always covers every edge")
}

/// Visits `size`-subsets of `0..n` as bitmasks in increasing order (Gosper's
/// hack); stops when `visit` returns true.
fn for_each_combination(n: usize, size: usize, mut visit: impl FnMut(u32) -> bool) {
    if size == 0 {
        visit(0);
        return;
    }
    let limit = 1u64 << n;
    let mut subset: u64 = (1 << size) - 1;
    while subset < limit {
        if visit(subset as u32) {
            return;
        }
        let low = subset & subset.wrapping_neg();
        let ripple = subset + low;
        subset = (((ripple ^ subset) >> 2) / low) | ripple;
    }
}

/// Repeatedly deletes the candidate of highest remaining degree, lowest index
/// first on ties.
fn greedy_cover(n_ops: usize, candidates: &[usize], edges: &[(usize, usize)]) -> NoncommutingSet {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_ops];
    for (e, &(i, j)) in edges.iter().enumerate() {
        adjacency[i].push(e);
        adjacency[j].push(e);
    }
    let mut alive = vec![true; edges.len()];
    let mut degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut remaining = edges.len();
    let mut members = Vec::new();
    while remaining > 0 {
        let best = *candidates
            .iter()
            .filter(|&&c| degree[c] > 0)
            .max_by_key(|&&c| (degree[c], std::cmp::Reverse(c)))
            .expect("every live edge has a Z-type endpoint");
        members.push(best);
        for &e in &adjacency[best] {
            if alive[e] {
                alive[e] = false;
                remaining -= 1;
                let (i, j) = edges[e];
                degree[i] -= 1;
                degree[j] -= 1;
            }
        }
    }
    members.sort_unstable();
    NoncommutingSet::Found {
        members,
        exact: false,
    }
}
