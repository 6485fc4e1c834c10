//! Measurement schedules, random streams and outcome tapes.
//!
//! A trajectory is fully determined by two independent ChaCha8 streams keyed
//! on `(seed, stream)`: one draws the schedule (which sites get an X
//! measurement and which get a bond round), the other draws every
//! nondeterministic measurement outcome and every feedback coin in canonical
//! event order. Engines never touch an RNG directly; they pull randomness
//! through an [`OutcomeSource`], which can sample, record, or replay.

use std::convert::Infallible;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, ReplayError, Result};
use crate::lattice::{Dimension, Lattice};

/// SplitMix64 finalizer, used to derive independent keys from a master seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a list of words into a seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Schedule = 0x5343_4845_4455_4c45,
    Outcomes = 0x4f55_5443_4f4d_4553,
}

/// Counter-based random stream: `(seed, stream)` names an independent,
/// reproducible sequence; the position inside it is ChaCha's block counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RandomStream { seed, stream }
    }

    fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.seed ^ purpose as u64));
        rng.set_stream(self.stream);
        rng
    }

    pub fn schedule_rng(&self) -> ChaCha8Rng {
        self.rng(Purpose::Schedule)
    }

    pub fn outcome_rng(&self) -> ChaCha8Rng {
        self.rng(Purpose::Outcomes)
    }

    /// Fresh sampler over this stream's outcome sequence.
    pub fn sampler(&self) -> Sampler<ChaCha8Rng> {
        Sampler::new(self.outcome_rng())
    }
}

/// A projective measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    #[inline]
    pub fn from_bit(minus: bool) -> Self {
        if minus {
            Outcome::Minus
        } else {
            Outcome::Plus
        }
    }

    #[inline]
    pub fn is_minus(self) -> bool {
        self == Outcome::Minus
    }

    #[inline]
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }
}

impl std::ops::Mul for Outcome {
    type Output = Outcome;

    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Outcome) -> Outcome {
        Outcome::from_bit(self.is_minus() ^ rhs.is_minus())
    }
}

impl std::ops::Neg for Outcome {
    type Output = Outcome;

    fn neg(self) -> Outcome {
        Outcome::from_bit(!self.is_minus())
    }
}

impl From<Outcome> for i8 {
    fn from(o: Outcome) -> i8 {
        o.value()
    }
}

impl TryFrom<i8> for Outcome {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            _ => Err(format!("outcome must be +1 or -1, got {v}")),
        }
    }
}

/// Initial product state of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Every qubit in |0⟩.
    AllZero,
    /// Every qubit in |+⟩.
    AllPlus,
}

/// One site update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    MeasureX(usize),
    BondRound(usize),
}

impl Event {
    #[inline]
    pub fn site(self) -> usize {
        match self {
            Event::MeasureX(s) | Event::BondRound(s) => s,
        }
    }

    #[inline]
    pub fn is_bond_round(self) -> bool {
        matches!(self, Event::BondRound(_))
    }
}

/// Order in which sites are visited within a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteOrder {
    #[default]
    Raster,
    /// A fresh uniformly random permutation every sweep.
    Random,
}

/// The realized schedule of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    dimension: Dimension,
    size: usize,
    sites: usize,
    p: f64,
    stream: RandomStream,
    sweeps: usize,
    order: SiteOrder,
    /// Bit k set iff event k is a bond round.
    kinds: Vec<u64>,
    /// Visiting order, only stored for [`SiteOrder::Random`].
    visit: Option<Vec<u32>>,
}

impl Schedule {
    /// Draws a raster-order schedule.
    pub fn generate(lattice: &Lattice, p: f64, sweeps: usize, stream: RandomStream) -> Result<Self> {
        Self::generate_with_order(lattice, p, sweeps, stream, SiteOrder::Raster)
    }

    pub fn generate_with_order(
        lattice: &Lattice,
        p: f64,
        sweeps: usize,
        stream: RandomStream,
        order: SiteOrder,
    ) -> Result<Self> {
        check_probability(p)?;
        let n = lattice.sites();
        let total = n * sweeps;
        let mut rng = stream.schedule_rng();
        let mut kinds = vec![0u64; total.div_ceil(64)];
        let mut visit = match order {
            SiteOrder::Raster => None,
            SiteOrder::Random => Some(Vec::with_capacity(total)),
        };
        let mut perm: Vec<u32> = (0..n as u32).collect();
        for sweep in 0..sweeps {
            if let Some(v) = visit.as_mut() {
                perm.shuffle(&mut rng);
                v.extend_from_slice(&perm);
            }
            for k in sweep * n..(sweep + 1) * n {
                if rng.random_bool(p) {
                    kinds[k / 64] |= 1 << (k % 64);
                }
            }
        }
        Ok(Schedule {
            dimension: lattice.dimension(),
            size: lattice.size(),
            sites: n,
            p,
            stream,
            sweeps,
            order,
            kinds,
            visit,
        })
    }

    /// Builds a schedule from explicit events (tests and hand-made tapes).
    pub fn from_events(lattice: &Lattice, p: f64, stream: RandomStream, events: &[Event]) -> Result<Self> {
        Self::build(lattice, p, stream, events, None)
    }

    fn build(
        lattice: &Lattice,
        p: f64,
        stream: RandomStream,
        events: &[Event],
        order: Option<SiteOrder>,
    ) -> Result<Self> {
        check_probability(p)?;
        let n = lattice.sites();
        if !events.len().is_multiple_of(n) {
            return Err(Error::InvalidParameter(format!(
                "{} events do not fill whole sweeps of {n} sites",
                events.len()
            )));
        }
        let sweeps = events.len() / n;
        let is_raster = events.iter().enumerate().all(|(k, e)| e.site() == k % n);
        let raster = match order {
            None => is_raster,
            Some(SiteOrder::Raster) if !is_raster => {
                return Err(Error::InvalidParameter("events are not in raster order".into()))
            }
            Some(o) => o == SiteOrder::Raster,
        };
        if !is_raster {
            for sweep in events.chunks(n) {
                let mut seen = vec![false; n];
                for e in sweep {
                    let s = e.site();
                    if s >= n || std::mem::replace(&mut seen[s], true) {
                        return Err(Error::InvalidParameter(
                            "each sweep must visit every site exactly once".into(),
                        ));
                    }
                }
            }
        }
        let mut kinds = vec![0u64; events.len().div_ceil(64)];
        for (k, e) in events.iter().enumerate() {
            if e.is_bond_round() {
                kinds[k / 64] |= 1 << (k % 64);
            }
        }
        Ok(Schedule {
            dimension: lattice.dimension(),
            size: lattice.size(),
            sites: n,
            p,
            stream,
            sweeps,
            order: if raster { SiteOrder::Raster } else { SiteOrder::Random },
            kinds,
            visit: (!raster).then(|| events.iter().map(|e| e.site() as u32).collect()),
        })
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn stream(&self) -> RandomStream {
        self.stream
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn order(&self) -> SiteOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.sites * self.sweeps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matches(&self, lattice: &Lattice) -> bool {
        self.dimension == lattice.dimension() && self.size == lattice.size()
    }

    #[inline]
    pub fn event(&self, k: usize) -> Event {
        let site = match &self.visit {
            None => k % self.sites,
            Some(v) => v[k] as usize,
        };
        if self.kinds[k / 64] >> (k % 64) & 1 == 1 {
            Event::BondRound(site)
        } else {
            Event::MeasureX(site)
        }
    }

    pub fn events(&self) -> impl ExactSizeIterator<Item = Event> + '_ {
        (0..self.len()).map(move |k| self.event(k))
    }

    /// Events of one sweep.
    pub fn sweep(&self, t: usize) -> impl ExactSizeIterator<Item = Event> + '_ {
        (t * self.sites..(t + 1) * self.sites).map(move |k| self.event(k))
    }

    pub fn bond_round_count(&self) -> usize {
        self.kinds.iter().map(|w| w.count_ones() as usize).sum()
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")))
    }
}

/// Where engines obtain measurement outcomes and feedback coins.
///
/// `random_outcome` is called only for outcomes the engine knows to be
/// uniformly random; `deterministic_outcome` reports outcomes fixed by the
/// state and consumes no randomness.
pub trait OutcomeSource {
    type Error: Into<Error>;

    fn random_outcome(&mut self) -> Result<Outcome, Self::Error>;

    fn deterministic_outcome(&mut self, outcome: Outcome) -> Result<(), Self::Error>;

    /// Fair coin for the tied-feedback branch; `true` means apply the flip.
    fn coin(&mut self) -> Result<bool, Self::Error>;
}

impl From<Infallible> for Error {
    fn from(e: Infallible) -> Error {
        match e {}
    }
}

/// Draws fair bits from an RNG, 64 at a time.
#[derive(Clone, Debug)]
pub struct Sampler<R> {
    rng: R,
    bits: u64,
    left: u32,
}

impl<R: RngCore> Sampler<R> {
    pub fn new(rng: R) -> Self {
        Sampler { rng, bits: 0, left: 0 }
    }

    #[inline]
    pub fn bit(&mut self) -> bool {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        b
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

impl<R: RngCore> OutcomeSource for Sampler<R> {
    type Error = Infallible;

    #[inline]
    fn random_outcome(&mut self) -> Result<Outcome, Infallible> {
        Ok(Outcome::from_bit(self.bit()))
    }

    #[inline]
    fn deterministic_outcome(&mut self, _: Outcome) -> Result<(), Infallible> {
        Ok(())
    }

    #[inline]
    fn coin(&mut self) -> Result<bool, Infallible> {
        Ok(self.bit())
    }
}

/// One stochastic choice made during a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapeEntry {
    Random(Outcome),
    Deterministic(Outcome),
    Coin(bool),
}

impl TapeEntry {
    fn kind_name(self) -> &'static str {
        match self {
            TapeEntry::Random(_) => "random outcome",
            TapeEntry::Deterministic(_) => "deterministic outcome",
            TapeEntry::Coin(_) => "coin",
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            TapeEntry::Random(o) => o.is_minus() as u8,
            TapeEntry::Deterministic(o) => 2 | o.is_minus() as u8,
            TapeEntry::Coin(c) => 4 | c as u8,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 | 1 => TapeEntry::Random(Outcome::from_bit(b == 1)),
            2 | 3 => TapeEntry::Deterministic(Outcome::from_bit(b == 3)),
            4 | 5 => TapeEntry::Coin(b == 5),
            _ => return Err(Error::Tape(format!("unknown entry byte {b:#04x}"))),
        })
    }
}

/// Every measurement outcome and feedback coin of one trajectory, in
/// canonical event order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTape {
    pub entries: Vec<TapeEntry>,
}

impl OutcomeTape {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Measurement outcomes only (coins dropped).
    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.entries.iter().filter_map(|e| match *e {
            TapeEntry::Random(o) | TapeEntry::Deterministic(o) => Some(o),
            TapeEntry::Coin(_) => None,
        })
    }

    pub fn replayer(&self) -> Replayer<'_> {
        Replayer::new(self)
    }
}

/// Wraps a source and writes everything it hands out onto a tape.
#[derive(Debug)]
pub struct Recorder<S> {
    inner: S,
    tape: OutcomeTape,
}

impl<S: OutcomeSource> Recorder<S> {
    pub fn new(inner: S) -> Self {
        Recorder {
            inner,
            tape: OutcomeTape::default(),
        }
    }

    pub fn into_tape(self) -> OutcomeTape {
        self.tape
    }

    pub fn tape(&self) -> &OutcomeTape {
        &self.tape
    }
}

impl<S: OutcomeSource> OutcomeSource for Recorder<S> {
    type Error = S::Error;

    fn random_outcome(&mut self) -> Result<Outcome, S::Error> {
        let o = self.inner.random_outcome()?;
        self.tape.entries.push(TapeEntry::Random(o));
        Ok(o)
    }

    fn deterministic_outcome(&mut self, outcome: Outcome) -> Result<(), S::Error> {
        self.inner.deterministic_outcome(outcome)?;
        self.tape.entries.push(TapeEntry::Deterministic(outcome));
        Ok(())
    }

    fn coin(&mut self) -> Result<bool, S::Error> {
        let c = self.inner.coin()?;
        self.tape.entries.push(TapeEntry::Coin(c));
        Ok(c)
    }
}

/// Feeds a recorded tape back to an engine, checking that the engine makes
/// the same kind of choice at every step and predicts the same deterministic
/// outcomes.
#[derive(Debug)]
pub struct Replayer<'a> {
    tape: &'a OutcomeTape,
    next: usize,
}

impl<'a> Replayer<'a> {
    pub fn new(tape: &'a OutcomeTape) -> Self {
        Replayer { tape, next: 0 }
    }

    pub fn position(&self) -> usize {
        self.next
    }

    /// Errors unless the whole tape was consumed.
    pub fn finish(&self) -> Result<(), ReplayError> {
        match self.tape.len() - self.next {
            0 => Ok(()),
            left => Err(ReplayError::Unconsumed(left)),
        }
    }

    fn take(&mut self, expected: &'static str) -> Result<TapeEntry, ReplayError> {
        let entry = *self
            .tape
            .entries
            .get(self.next)
            .ok_or(ReplayError::Exhausted(self.next))?;
        if entry.kind_name() != expected {
            return Err(ReplayError::KindMismatch {
                index: self.next,
                expected,
                found: entry.kind_name(),
            });
        }
        self.next += 1;
        Ok(entry)
    }
}

impl OutcomeSource for Replayer<'_> {
    type Error = ReplayError;

    fn random_outcome(&mut self) -> Result<Outcome, ReplayError> {
        match self.take("random outcome")? {
            TapeEntry::Random(o) => Ok(o),
            _ => unreachable!(),
        }
    }

    fn deterministic_outcome(&mut self, outcome: Outcome) -> Result<(), ReplayError> {
        let index = self.next;
        match self.take("deterministic outcome")? {
            TapeEntry::Deterministic(o) if o == outcome => Ok(()),
            TapeEntry::Deterministic(o) => Err(ReplayError::OutcomeMismatch {
                index,
                engine: outcome.value(),
                tape: o.value(),
            }),
            _ => unreachable!(),
        }
    }

    fn coin(&mut self) -> Result<bool, ReplayError> {
        match self.take("coin")? {
            TapeEntry::Coin(c) => Ok(c),
            _ => unreachable!(),
        }
    }
}

/// A fixed script of random outcomes and coins, for forcing specific
/// branches in tests. Deterministic outcomes are accepted unchecked.
#[derive(Clone, Debug, Default)]
pub struct Scripted {
    outcomes: std::collections::VecDeque<Outcome>,
    coins: std::collections::VecDeque<bool>,
}

impl Scripted {
    pub fn new(outcomes: &[Outcome], coins: &[bool]) -> Self {
        Scripted {
            outcomes: outcomes.iter().copied().collect(),
            coins: coins.iter().copied().collect(),
        }
    }

    pub fn outcomes(outcomes: &[Outcome]) -> Self {
        Self::new(outcomes, &[])
    }

    pub fn is_spent(&self) -> bool {
        self.outcomes.is_empty() && self.coins.is_empty()
    }
}

impl OutcomeSource for Scripted {
    type Error = ReplayError;

    fn random_outcome(&mut self) -> Result<Outcome, ReplayError> {
        self.outcomes.pop_front().ok_or(ReplayError::Exhausted(0))
    }

    fn deterministic_outcome(&mut self, _: Outcome) -> Result<(), ReplayError> {
        Ok(())
    }

    fn coin(&mut self) -> Result<bool, ReplayError> {
        self.coins.pop_front().ok_or(ReplayError::Exhausted(0))
    }
}

/// Header of a serialized trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapeHeader {
    pub dimension: Dimension,
    pub size: usize,
    pub p: f64,
    pub seed: u64,
    pub stream: u64,
    pub sweeps: usize,
    pub initial: Initial,
    pub order: SiteOrder,
}

/// A self-contained replayable trajectory: header, schedule and outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTape {
    pub header: TapeHeader,
    pub schedule: Schedule,
    pub outcomes: OutcomeTape,
}

const MAGIC: &[u8; 4] = b"AITP";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct TapeJson {
    version: u16,
    header: TapeHeader,
    /// Site visited by each event.
    sites: Vec<u32>,
    /// `true` for bond rounds, `false` for X measurements.
    bond_rounds: Vec<bool>,
    outcomes: Vec<TapeEntry>,
}

impl TrajectoryTape {
    pub fn new(schedule: Schedule, initial: Initial, outcomes: OutcomeTape) -> Self {
        let stream = schedule.stream();
        TrajectoryTape {
            header: TapeHeader {
                dimension: schedule.dimension(),
                size: schedule.size(),
                p: schedule.p(),
                seed: stream.seed,
                stream: stream.stream,
                sweeps: schedule.sweeps(),
                initial,
                order: schedule.order(),
            },
            schedule,
            outcomes,
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.header.dimension, self.header.size)
    }

    /// Binary encoding; see the README for the byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(h.dimension.as_u8());
        out.push(match h.initial {
            Initial::AllZero => 0,
            Initial::AllPlus => 1,
        });
        out.push(match h.order {
            SiteOrder::Raster => 0,
            SiteOrder::Random => 1,
        });
        out.extend_from_slice(&(h.size as u32).to_le_bytes());
        out.extend_from_slice(&(h.sweeps as u32).to_le_bytes());
        out.extend_from_slice(&h.p.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        out.extend_from_slice(&h.stream.to_le_bytes());
        let n = self.schedule.len();
        out.extend_from_slice(&(n as u64).to_le_bytes());
        if let Some(v) = &self.schedule.visit {
            for s in v {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        let mut packed = vec![0u8; n.div_ceil(8)];
        for (k, e) in self.schedule.events().enumerate() {
            if e.is_bond_round() {
                packed[k / 8] |= 1 << (k % 8);
            }
        }
        out.extend_from_slice(&packed);
        out.extend_from_slice(&(self.outcomes.len() as u64).to_le_bytes());
        out.extend(self.outcomes.entries.iter().map(|e| e.to_byte()));
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest[..8]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + 4 {
            return Err(Error::Tape("truncated".into()));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 8);
        if Sha256::digest(body)[..8] != *sum {
            return Err(Error::Checksum);
        }
        let mut r = ByteReader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Tape("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Tape(format!("unsupported version {version}")));
        }
        let dimension = Dimension::try_from(r.u8()?)?;
        let initial = match r.u8()? {
            0 => Initial::AllZero,
            1 => Initial::AllPlus,
            b => return Err(Error::Tape(format!("bad initial-state byte {b}"))),
        };
        let order = match r.u8()? {
            0 => SiteOrder::Raster,
            1 => SiteOrder::Random,
            b => return Err(Error::Tape(format!("bad site-order byte {b}"))),
        };
        let size = u32::from_le_bytes(r.array()?) as usize;
        let sweeps = u32::from_le_bytes(r.array()?) as usize;
        let p = f64::from_le_bytes(r.array()?);
        let seed = u64::from_le_bytes(r.array()?);
        let stream = u64::from_le_bytes(r.array()?);
        let n = u64::from_le_bytes(r.array()?) as usize;
        let lattice = Lattice::new(dimension, size)?;
        if n != lattice.sites() * sweeps {
            return Err(Error::Tape(format!("event count {n} inconsistent with header")));
        }
        let sites: Vec<usize> = match order {
            SiteOrder::Raster => (0..n).map(|k| k % lattice.sites()).collect(),
            SiteOrder::Random => (0..n)
                .map(|_| r.array().map(|b| u32::from_le_bytes(b) as usize))
                .collect::<Result<_>>()?,
        };
        let packed = r.take(n.div_ceil(8))?;
        let events: Vec<Event> = sites
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                if packed[k / 8] >> (k % 8) & 1 == 1 {
                    Event::BondRound(s)
                } else {
                    Event::MeasureX(s)
                }
            })
            .collect();
        let m = u64::from_le_bytes(r.array()?) as usize;
        let entries = r
            .take(m)?
            .iter()
            .map(|&b| TapeEntry::from_byte(b))
            .collect::<Result<_>>()?;
        if r.pos != body.len() {
            return Err(Error::Tape("trailing bytes".into()));
        }
        let schedule = Schedule::build(&lattice, p, RandomStream::new(seed, stream), &events, Some(order))?;
        Ok(TrajectoryTape {
            header: TapeHeader {
                dimension,
                size,
                p,
                seed,
                stream,
                sweeps,
                initial,
                order,
            },
            schedule,
            outcomes: OutcomeTape { entries },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TapeJson {
            version: VERSION,
            header: self.header,
            sites: self.schedule.events().map(|e| e.site() as u32).collect(),
            bond_rounds: self.schedule.events().map(Event::is_bond_round).collect(),
            outcomes: self.outcomes.entries.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TapeJson = serde_json::from_str(text)?;
        if doc.version != VERSION || doc.sites.len() != doc.bond_rounds.len() {
            return Err(Error::Tape("inconsistent JSON tape".into()));
        }
        let h = doc.header;
        let lattice = Lattice::new(h.dimension, h.size)?;
        let events: Vec<Event> = doc
            .sites
            .iter()
            .zip(&doc.bond_rounds)
            .map(|(&s, &b)| {
                let s = s as usize;
                if b {
                    Event::BondRound(s)
                } else {
                    Event::MeasureX(s)
                }
            })
            .collect();
        let schedule = Schedule::build(
            &lattice,
            h.p,
            RandomStream::new(h.seed, h.stream),
            &events,
            Some(h.order),
        )?;
        if schedule.sweeps() != h.sweeps {
            return Err(Error::Tape("sweep count inconsistent with header".into()));
        }
        Ok(TrajectoryTape {
            header: h,
            schedule,
            outcomes: OutcomeTape { entries: doc.outcomes },
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Tape("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(l: usize) -> Lattice {
        Lattice::ring(l).unwrap()
    }

    #[test]
    fn extreme_probabilities() {
        let lat = ring(8);
        let s0 = Schedule::generate(&lat, 0.0, 5, RandomStream::new(1, 0)).unwrap();
        assert!(s0.events().all(|e| matches!(e, Event::MeasureX(_))));
        let s1 = Schedule::generate(&lat, 1.0, 5, RandomStream::new(1, 0)).unwrap();
        assert!(s1.events().all(Event::is_bond_round));
        assert!(Schedule::generate(&lat, 1.5, 1, RandomStream::new(1, 0)).is_err());
    }

    #[test]
    fn schedule_is_reproducible() {
        let lat = Lattice::torus(5).unwrap();
        let a = Schedule::generate(&lat, 0.5, 20, RandomStream::new(42, 3)).unwrap();
        let b = Schedule::generate(&lat, 0.5, 20, RandomStream::new(42, 3)).unwrap();
        let c = Schedule::generate(&lat, 0.5, 20, RandomStream::new(42, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sweeps_visit_every_site_once() {
        let lat = ring(12);
        for order in [SiteOrder::Raster, SiteOrder::Random] {
            let s = Schedule::generate_with_order(&lat, 0.3, 7, RandomStream::new(9, 9), order).unwrap();
            for t in 0..7 {
                let mut sites: Vec<_> = s.sweep(t).map(Event::site).collect();
                sites.sort();
                assert_eq!(sites, (0..12).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn bond_round_fraction_matches_p() {
        let lat = ring(100);
        let p = 0.37;
        let s = Schedule::generate(&lat, p, 400, RandomStream::new(5, 1)).unwrap();
        let n = s.len() as f64;
        let frac = s.bond_round_count() as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((frac - p).abs() < 5.0 * sigma, "{frac} vs {p}");
    }

    #[test]
    fn replay_checks_kinds_and_deterministic_values() {
        let tape = OutcomeTape {
            entries: vec![
                TapeEntry::Random(Outcome::Minus),
                TapeEntry::Deterministic(Outcome::Plus),
                TapeEntry::Coin(true),
            ],
        };
        let mut r = tape.replayer();
        assert_eq!(r.random_outcome(), Ok(Outcome::Minus));
        assert_eq!(r.deterministic_outcome(Outcome::Plus), Ok(()));
        assert!(r.finish().is_err());
        assert_eq!(r.coin(), Ok(true));
        assert_eq!(r.finish(), Ok(()));
        assert_eq!(r.coin(), Err(ReplayError::Exhausted(3)));

        let mut r = tape.replayer();
        assert!(matches!(r.coin(), Err(ReplayError::KindMismatch { .. })));
        let mut r = tape.replayer();
        r.random_outcome().unwrap();
        assert!(matches!(
            r.deterministic_outcome(Outcome::Minus),
            Err(ReplayError::OutcomeMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn empty_schedule_empty_tape() {
        let lat = ring(4);
        let s = Schedule::generate(&lat, 0.5, 0, RandomStream::new(0, 0)).unwrap();
        assert!(s.is_empty());
        let t = TrajectoryTape::new(s, Initial::AllZero, OutcomeTape::default());
        let back = TrajectoryTape::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn corrupt_tape_fails_checksum() {
        let lat = ring(8);
        let s = Schedule::generate(&lat, 0.5, 3, RandomStream::new(7, 1)).unwrap();
        let t = TrajectoryTape::new(
            s,
            Initial::AllZero,
            OutcomeTape {
                entries: vec![TapeEntry::Coin(false); 5],
            },
        );
        let mut bytes = t.to_bytes();
        bytes[20] ^= 0x10;
        assert!(matches!(TrajectoryTape::from_bytes(&bytes), Err(Error::Checksum)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn entry() -> impl Strategy<Value = TapeEntry> {
            prop_oneof![
                any::<bool>().prop_map(|b| TapeEntry::Random(Outcome::from_bit(b))),
                any::<bool>().prop_map(|b| TapeEntry::Deterministic(Outcome::from_bit(b))),
                any::<bool>().prop_map(TapeEntry::Coin),
            ]
        }

        proptest! {
            #[test]
            fn tape_roundtrips(
                dim2 in any::<bool>(),
                size in 4usize..7,
                sweeps in 0usize..4,
                p in 0.0f64..=1.0,
                seed in any::<u64>(),
                random_order in any::<bool>(),
                entries in proptest::collection::vec(entry(), 0..64),
            ) {
                let dim = if dim2 { Dimension::Two } else { Dimension::One };
                let lat = Lattice::new(dim, size).unwrap();
                let order = if random_order { SiteOrder::Random } else { SiteOrder::Raster };
                let s = Schedule::generate_with_order(&lat, p, sweeps, RandomStream::new(seed, 3), order).unwrap();
                let t = TrajectoryTape::new(s, Initial::AllPlus, OutcomeTape { entries });
                prop_assert_eq!(&TrajectoryTape::from_bytes(&t.to_bytes()).unwrap(), &t);
                prop_assert_eq!(&TrajectoryTape::from_json(&t.to_json().unwrap()).unwrap(), &t);
            }
        }
    }
}
