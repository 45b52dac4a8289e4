//! The two reconciling parties and the synchronous channel between them.
//!
//! Each party owns its key and its copy of the shared pad. A public session
//! drives the exchange: for every parity query Alice answers first, then Bob,
//! each with `parity(key, mask) ⊕ pad[cursor]`. Only these encrypted bits and
//! Bob's correction acknowledgements cross the channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::transcript::{Role, Transcript, TranscriptEntry};
use super::CascadeError;
use crate::bitlinalg::BitVec;

/// Pre-shared secret string consumed front to back, one bit per announcement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadPool {
    pad: BitVec,
    cursor: usize,
}

impl PadPool {
    pub fn new(pad: BitVec) -> Self {
        Self { pad, cursor: 0 }
    }

    /// Uniformly random pad of `len` bits.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(BitVec::random(len, &mut rng))
    }

    pub fn len(&self) -> usize {
        self.pad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pad.is_empty()
    }

    /// Index of the next unused bit; equally the number consumed so far.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.pad.len() - self.cursor
    }

    pub fn bit(&self, index: usize) -> bool {
        self.pad.get(index)
    }

    /// Next unused bit and its index.
    pub fn take(&mut self) -> Result<(usize, bool), CascadeError> {
        if self.cursor >= self.pad.len() {
            return Err(CascadeError::PadExhausted {
                capacity: self.pad.len(),
            });
        }
        let i = self.cursor;
        self.cursor += 1;
        Ok((i, self.pad.get(i)))
    }
}

/// One encrypted parity announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Announcement {
    pub bit: bool,
    pub pad_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Parity { mask: BitVec },
    Flip { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Parity(Announcement),
    Ack,
}

pub struct PartyState {
    role: Role,
    key: BitVec,
    pad: PadPool,
}

impl PartyState {
    pub fn new(role: Role, key: BitVec, pad: PadPool) -> Self {
        Self { role, key, pad }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn key(&self) -> &BitVec {
        &self.key
    }

    pub fn pad(&self) -> &PadPool {
        &self.pad
    }

    pub fn into_parts(self) -> (BitVec, PadPool) {
        (self.key, self.pad)
    }

    /// `parity(key, mask) ⊕ pad[cursor]`; advances the pad cursor.
    pub fn announce_parity(&mut self, mask: &BitVec) -> Result<Announcement, CascadeError> {
        let parity = self.key.masked_parity(mask)?;
        let (pad_index, pad_bit) = self.pad.take()?;
        Ok(Announcement {
            bit: parity ^ pad_bit,
            pad_index,
        })
    }

    pub fn handle(&mut self, msg: &Message) -> Result<Reply, CascadeError> {
        match msg {
            Message::Parity { mask } => self.announce_parity(mask).map(Reply::Parity),
            Message::Flip { index } => {
                if self.role != Role::Bob {
                    return Err(CascadeError::Protocol("only Bob corrects his key".into()));
                }
                if *index >= self.key.len() {
                    return Err(CascadeError::Protocol(format!("flip index {index} out of range")));
                }
                self.key.flip(*index);
                Ok(Reply::Ack)
            }
        }
    }
}

/// Synchronous request/response transport to one of the two parties.
pub trait Channel {
    fn request(&mut self, to: Role, msg: &Message) -> Result<Reply, CascadeError>;
}

/// In-process transport holding both parties. Parity queries must strictly
/// alternate Alice → Bob with the same mask.
pub struct LocalChannel {
    alice: PartyState,
    bob: PartyState,
    pending: Option<BitVec>,
}

impl LocalChannel {
    pub fn new(alice_key: BitVec, bob_key: BitVec, pool: PadPool) -> Result<Self, CascadeError> {
        if alice_key.len() != bob_key.len() {
            return Err(CascadeError::Dimension(
                crate::bitlinalg::DimensionError::LengthMismatch {
                    left: alice_key.len(),
                    right: bob_key.len(),
                },
            ));
        }
        Ok(Self {
            alice: PartyState::new(Role::Alice, alice_key, pool.clone()),
            bob: PartyState::new(Role::Bob, bob_key, pool),
            pending: None,
        })
    }

    pub fn alice(&self) -> &PartyState {
        &self.alice
    }

    pub fn bob(&self) -> &PartyState {
        &self.bob
    }

    pub fn into_parties(self) -> (PartyState, PartyState) {
        (self.alice, self.bob)
    }
}

impl Channel for LocalChannel {
    fn request(&mut self, to: Role, msg: &Message) -> Result<Reply, CascadeError> {
        match (to, msg, &self.pending) {
            (Role::Alice, Message::Parity { mask }, None) => {
                let reply = self.alice.handle(msg)?;
                self.pending = Some(mask.clone());
                Ok(reply)
            }
            (Role::Bob, Message::Parity { mask }, Some(expected)) if mask == expected => {
                self.pending = None;
                self.bob.handle(msg)
            }
            (_, Message::Flip { .. }, None) => match to {
                Role::Bob => self.bob.handle(msg),
                Role::Alice => self.alice.handle(msg),
            },
            _ => Err(CascadeError::Protocol(format!(
                "out-of-order request to {to}: {msg:?}"
            ))),
        }
    }
}

/// Public side of a reconciliation session: issues queries over a channel
/// and records every exchange.
pub struct Session<C: Channel> {
    channel: C,
    transcript: Transcript,
    len: usize,
}

impl<C: Channel> Session<C> {
    pub fn new(channel: C, len: usize) -> Self {
        Self {
            channel,
            transcript: Transcript::new(),
            len,
        }
    }

    pub fn key_len(&self) -> usize {
        self.len
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn channel(&self) -> &C {
        &self.channel
    }

    pub fn into_parts(self) -> (C, Transcript) {
        (self.channel, self.transcript)
    }

    /// Both parties announce the encrypted parity of `indices`; returns the
    /// relative parity read off the public bits.
    pub fn exchange_parity(&mut self, round: u32, indices: &[usize]) -> Result<bool, CascadeError> {
        let mask = BitVec::from_indices(self.len, indices.iter().copied());
        self.exchange_mask(round, mask)
    }

    pub fn exchange_mask(&mut self, round: u32, mask: BitVec) -> Result<bool, CascadeError> {
        let msg = Message::Parity { mask };
        let Reply::Parity(a) = self.channel.request(Role::Alice, &msg)? else {
            return Err(CascadeError::Protocol("Alice did not answer a parity query".into()));
        };
        let Reply::Parity(b) = self.channel.request(Role::Bob, &msg)? else {
            return Err(CascadeError::Protocol("Bob did not answer a parity query".into()));
        };
        if a.pad_index != b.pad_index {
            return Err(CascadeError::PadDesync {
                alice: a.pad_index,
                bob: b.pad_index,
            });
        }
        let Message::Parity { mask } = msg else { unreachable!() };
        let entry = TranscriptEntry {
            round,
            sender: Role::Alice,
            mask,
            bit: a.bit,
            reply: b.bit,
            encrypted: true,
            pad_index: Some(a.pad_index),
        };
        let relative = entry.relative_parity();
        self.transcript.push(entry);
        Ok(relative)
    }

    pub fn correct(&mut self, index: usize) -> Result<(), CascadeError> {
        match self.channel.request(Role::Bob, &Message::Flip { index })? {
            Reply::Ack => Ok(()),
            Reply::Parity(_) => Err(CascadeError::Protocol("unexpected parity reply".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    #[test]
    fn announce_examples() {
        // key parity 1 under mask, pad bit 0 then 1
        let mut p = PartyState::new(Role::Alice, bv("1000"), PadPool::new(bv("01")));
        let mask = bv("1100");
        assert_eq!(p.announce_parity(&mask).unwrap(), Announcement { bit: true, pad_index: 0 });
        assert_eq!(p.announce_parity(&mask).unwrap(), Announcement { bit: false, pad_index: 1 });
        assert!(matches!(
            p.announce_parity(&mask),
            Err(CascadeError::PadExhausted { capacity: 2 })
        ));
    }

    #[test]
    fn pads_cancel_for_equal_keys() {
        for pad in ["0", "1"] {
            let mut a = PartyState::new(Role::Alice, bv("1011"), PadPool::new(bv(pad)));
            let mut b = PartyState::new(Role::Bob, bv("1011"), PadPool::new(bv(pad)));
            let mask = bv("1110");
            let ya = a.announce_parity(&mask).unwrap();
            let yb = b.announce_parity(&mask).unwrap();
            assert!(!(ya.bit ^ yb.bit));
        }
    }

    #[test]
    fn channel_enforces_alternation() {
        let mut ch = LocalChannel::new(bv("10"), bv("11"), PadPool::new(bv("0000"))).unwrap();
        let m1 = Message::Parity { mask: bv("10") };
        let m2 = Message::Parity { mask: bv("01") };
        assert!(ch.request(Role::Bob, &m1).is_err());
        ch.request(Role::Alice, &m1).unwrap();
        assert!(ch.request(Role::Alice, &m1).is_err());
        assert!(ch.request(Role::Bob, &m2).is_err());
        assert!(ch.request(Role::Bob, &Message::Flip { index: 0 }).is_err());
        ch.request(Role::Bob, &m1).unwrap();
        assert!(ch.request(Role::Alice, &Message::Flip { index: 0 }).is_err());
        assert_eq!(ch.request(Role::Bob, &Message::Flip { index: 1 }).unwrap(), Reply::Ack);
        assert_eq!(ch.bob().key(), &bv("10"));
    }

    #[test]
    fn session_records_relative_parity() {
        let ch = LocalChannel::new(bv("1010"), bv("1000"), PadPool::random(8, 3)).unwrap();
        let mut s = Session::new(ch, 4);
        assert!(s.exchange_parity(1, &[0, 1, 2]).unwrap());
        assert!(!s.exchange_parity(1, &[0, 1]).unwrap());
        let t = s.transcript();
        assert_eq!(t.len(), 2);
        assert_eq!(t.entries()[1].pad_index, Some(1));
        assert_eq!(t.entries()[0].mask, bv("1110"));
    }
}
