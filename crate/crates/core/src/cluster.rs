//! Background-plus-GHZ-cluster simulation of the adaptive circuit.
//!
//! Every state reachable by the circuit is a product of Z eigenstates
//! ("background" sites) and GHZ-like factors `(|s⟩ + σ|s̄⟩)/√2` over disjoint
//! clusters. The state is stored as one bit per site plus a cluster registry:
//!
//! * a background site's bit is its Z value (`0` for `+1`);
//! * a member's bit is its entry of `s`; only bits relative to the cluster's
//!   representative (first member) are physical, since `s` and `s̄` describe
//!   the same factor with the same sign `σ`.
//!
//! Reading relative bits through the representative means no update ever has
//! to re-gauge a whole cluster. Merges relabel the smaller cluster into the
//! larger one, so a sweep costs amortized `O(N log N)` at worst.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::schedule::{Event, Initial, Outcome, OutcomeSource, OutcomeTape, Recorder, Schedule};

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, Default)]
struct Cluster {
    members: Vec<u32>,
    minus: bool,
}

/// Handle of a live cluster. Only valid until the next mutation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClusterId(u32);

/// What a single site currently belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteTag {
    /// Z eigenstate with eigenvalue `z`.
    Background(Outcome),
    /// GHZ cluster member; `relative_bit` is the site's bit of `s` in the gauge
    /// where the representative's bit is 0.
    Member { cluster: ClusterId, relative_bit: bool },
}

#[derive(Clone, Debug)]
pub struct ClusterState {
    dimension: crate::lattice::Dimension,
    size: usize,
    cluster_of: Vec<u32>,
    bit: Vec<bool>,
    pos: Vec<u32>,
    clusters: Vec<Cluster>,
    free: Vec<u32>,
}

impl ClusterState {
    pub fn new(lattice: &Lattice, initial: Initial) -> Self {
        let n = lattice.sites();
        let mut state = ClusterState {
            dimension: lattice.dimension(),
            size: lattice.size(),
            cluster_of: vec![NONE; n],
            bit: vec![false; n],
            pos: vec![0; n],
            clusters: Vec::with_capacity(n),
            free: Vec::new(),
        };
        if initial == Initial::AllPlus {
            for s in 0..n {
                state.make_singleton(s, Outcome::Plus);
            }
        }
        state
    }

    pub fn sites(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn matches(&self, lattice: &Lattice) -> bool {
        self.dimension == lattice.dimension() && self.size == lattice.size()
    }

    #[inline]
    pub fn is_background(&self, site: usize) -> bool {
        self.cluster_of[site] == NONE
    }

    pub fn tag(&self, site: usize) -> SiteTag {
        match self.cluster_of[site] {
            NONE => SiteTag::Background(Outcome::from_bit(self.bit[site])),
            c => SiteTag::Member {
                cluster: ClusterId(c),
                relative_bit: self.bit[site] ^ self.bit[self.clusters[c as usize].members[0] as usize],
            },
        }
    }

    /// Z value of a background site.
    pub fn z(&self, site: usize) -> Option<Outcome> {
        self.is_background(site).then(|| Outcome::from_bit(self.bit[site]))
    }

    /// Cluster containing `site`, if any.
    pub fn cluster_id(&self, site: usize) -> Option<ClusterId> {
        match self.cluster_of[site] {
            NONE => None,
            c => Some(ClusterId(c)),
        }
    }

    pub fn members(&self, id: ClusterId) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.clusters[id.0 as usize].members.iter().map(|&s| s as usize)
    }

    pub fn cluster_size(&self, id: ClusterId) -> usize {
        self.clusters[id.0 as usize].members.len()
    }

    pub fn sign(&self, id: ClusterId) -> Outcome {
        Outcome::from_bit(self.clusters[id.0 as usize].minus)
    }

    /// Whether two cluster members have equal bits of `s`.
    #[inline]
    pub fn same_bit(&self, a: usize, b: usize) -> bool {
        self.bit[a] == self.bit[b]
    }

    /// Live clusters, in registry order.
    pub fn cluster_ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.members.is_empty())
            .map(|(i, _)| ClusterId(i as u32))
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len() - self.free.len()
    }

    pub fn background_count(&self) -> usize {
        self.cluster_of.iter().filter(|&&c| c == NONE).count()
    }

    fn alloc(&mut self) -> u32 {
        match self.free.pop() {
            Some(id) => id,
            None => {
                self.clusters.push(Cluster::default());
                (self.clusters.len() - 1) as u32
            }
        }
    }

    fn release(&mut self, id: u32) {
        let c = &mut self.clusters[id as usize];
        c.members.clear();
        c.minus = false;
        self.free.push(id);
    }

    fn make_singleton(&mut self, site: usize, sign: Outcome) {
        let id = self.alloc();
        let c = &mut self.clusters[id as usize];
        c.members.push(site as u32);
        c.minus = sign.is_minus();
        self.cluster_of[site] = id;
        self.pos[site] = 0;
        self.bit[site] = false;
    }

    /// Measures `X` on `site`.
    ///
    /// A background site is born as a singleton; a singleton returns its sign
    /// deterministically; a site in a larger cluster splits off, and the
    /// remainder's sign is multiplied by the outcome.
    pub fn measure_x<S: OutcomeSource>(&mut self, site: usize, src: &mut S) -> Result<Outcome, S::Error> {
        let c = self.cluster_of[site];
        if c == NONE {
            let m = src.random_outcome()?;
            self.make_singleton(site, m);
            return Ok(m);
        }
        let cluster = &mut self.clusters[c as usize];
        if cluster.members.len() == 1 {
            let m = Outcome::from_bit(cluster.minus);
            src.deterministic_outcome(m)?;
            return Ok(m);
        }
        let m = src.random_outcome()?;
        let idx = self.pos[site] as usize;
        cluster.members.swap_remove(idx);
        if let Some(&moved) = cluster.members.get(idx) {
            self.pos[moved as usize] = idx as u32;
        }
        cluster.minus ^= m.is_minus();
        self.make_singleton(site, m);
        Ok(m)
    }

    /// Measures `Z_i Z_j` for neighboring sites.
    pub fn measure_bond<S: OutcomeSource>(
        &mut self,
        lattice: &Lattice,
        i: usize,
        j: usize,
        src: &mut S,
    ) -> Result<Outcome> {
        if i == j || !lattice.are_neighbors(i, j) {
            return Err(Error::InvalidOperation(format!("sites {i} and {j} are not a bond")));
        }
        self.bond(i, j, src).map_err(Into::into)
    }

    #[inline]
    fn bond<S: OutcomeSource>(&mut self, i: usize, j: usize, src: &mut S) -> Result<Outcome, S::Error> {
        let (ci, cj) = (self.cluster_of[i], self.cluster_of[j]);
        if ci == cj {
            // both background, or both in one cluster: parity of the stored bits
            let m = Outcome::from_bit(self.bit[i] ^ self.bit[j]);
            src.deterministic_outcome(m)?;
            return Ok(m);
        }
        let m = src.random_outcome()?;
        match (ci == NONE, cj == NONE) {
            (false, false) => self.merge(i, j, m),
            (true, false) => self.collapse(i, j, m),
            (false, true) => self.collapse(j, i, m),
            (true, true) => unreachable!(),
        }
        Ok(m)
    }

    fn merge(&mut self, i: usize, j: usize, m: Outcome) {
        let (ci, cj) = (self.cluster_of[i], self.cluster_of[j]);
        let flip = self.bit[i] ^ self.bit[j] ^ m.is_minus();
        let (big, small) = if self.clusters[ci as usize].members.len() >= self.clusters[cj as usize].members.len() {
            (ci, cj)
        } else {
            (cj, ci)
        };
        let moved = std::mem::take(&mut self.clusters[small as usize].members);
        let small_minus = self.clusters[small as usize].minus;
        let target = &mut self.clusters[big as usize];
        target.minus ^= small_minus;
        for &k in &moved {
            let k = k as usize;
            self.bit[k] ^= flip;
            self.cluster_of[k] = big;
            self.pos[k] = target.members.len() as u32;
            target.members.push(k as u32);
        }
        self.clusters[small as usize].members = moved;
        self.release(small);
    }

    /// Background site `bg` and cluster member `j` measured with outcome `m`:
    /// the whole cluster collapses onto the branch with `Z_j = m z_bg`.
    fn collapse(&mut self, bg: usize, j: usize, m: Outcome) {
        let c = self.cluster_of[j];
        let zj = self.bit[bg] ^ m.is_minus();
        let bj = self.bit[j];
        let members = std::mem::take(&mut self.clusters[c as usize].members);
        for &k in &members {
            let k = k as usize;
            self.bit[k] = zj ^ self.bit[k] ^ bj;
            self.cluster_of[k] = NONE;
        }
        self.clusters[c as usize].members = members;
        self.release(c);
    }

    /// Applies the Pauli `X` to `site`. Cluster signs are untouched.
    #[inline]
    pub fn apply_x(&mut self, site: usize) {
        self.bit[site] ^= true;
    }

    /// One site update: an X measurement, or a bond round followed by the
    /// majority feedback (flip on a strict majority of `-1` bonds, fair coin
    /// on a tie).
    #[inline]
    pub fn site_update<S: OutcomeSource>(
        &mut self,
        lattice: &Lattice,
        event: Event,
        src: &mut S,
    ) -> Result<(), S::Error> {
        match event {
            Event::MeasureX(site) => {
                self.measure_x(site, src)?;
            }
            Event::BondRound(site) => {
                let neighbors = lattice.neighbors(site);
                let mut minus = 0;
                for &j in neighbors {
                    minus += self.bond(site, j, src)?.is_minus() as usize;
                }
                let plus = neighbors.len() - minus;
                if minus > plus || (minus == plus && src.coin()?) {
                    self.apply_x(site);
                }
            }
        }
        Ok(())
    }

    /// Runs a whole schedule, pulling randomness from `src`.
    pub fn run<S: OutcomeSource>(&mut self, lattice: &Lattice, schedule: &Schedule, src: &mut S) -> Result<()> {
        if !self.matches(lattice) || !schedule.matches(lattice) {
            return Err(Error::InvalidOperation("schedule, lattice and state disagree".into()));
        }
        for event in schedule.events() {
            self.site_update(lattice, event, src).map_err(Into::into)?;
        }
        Ok(())
    }

    /// Runs a schedule sampling from its own outcome stream and returns the
    /// recorded tape.
    pub fn run_recorded(&mut self, lattice: &Lattice, schedule: &Schedule) -> Result<OutcomeTape> {
        let mut rec = Recorder::new(schedule.stream().sampler());
        self.run(lattice, schedule, &mut rec)?;
        Ok(rec.into_tape())
    }

    /// Replays a recorded tape, failing on any divergence.
    pub fn replay(&mut self, lattice: &Lattice, schedule: &Schedule, tape: &OutcomeTape) -> Result<()> {
        let mut r = tape.replayer();
        self.run(lattice, schedule, &mut r)?;
        r.finish()?;
        Ok(())
    }

    /// Gauge-fixed, order-independent description of the state.
    pub fn canonical(&self) -> CanonicalState {
        let n = self.sites();
        let background = (0..n)
            .filter(|&s| self.is_background(s))
            .map(|s| (s, Outcome::from_bit(self.bit[s])))
            .collect();
        let mut clusters: Vec<CanonicalCluster> = self
            .cluster_ids()
            .map(|id| {
                let mut members: Vec<usize> = self.members(id).collect();
                members.sort_unstable();
                let anchor = self.bit[members[0]];
                let pattern = members.iter().map(|&s| self.bit[s] ^ anchor).collect();
                CanonicalCluster {
                    members,
                    pattern,
                    sign: self.sign(id),
                }
            })
            .collect();
        clusters.sort_unstable_by_key(|c| c.members[0]);
        CanonicalState { background, clusters }
    }

    /// Site partition with signs and bits dropped.
    pub fn partition(&self) -> SitePartition {
        let c = self.canonical();
        SitePartition {
            background: c.background.iter().map(|&(s, _)| s).collect(),
            clusters: c.clusters.into_iter().map(|c| c.members).collect(),
        }
    }

    /// Rebuilds a state from its canonical description.
    pub fn from_canonical(lattice: &Lattice, canon: &CanonicalState) -> Result<Self> {
        let n = lattice.sites();
        let mut state = ClusterState::new(lattice, Initial::AllZero);
        let mut seen = vec![false; n];
        let mut mark = |s: usize| -> Result<()> {
            if s >= n || std::mem::replace(&mut seen[s], true) {
                Err(Error::InvalidParameter(format!("site {s} repeated or out of range")))
            } else {
                Ok(())
            }
        };
        for &(s, z) in &canon.background {
            mark(s)?;
            state.bit[s] = z.is_minus();
        }
        for c in &canon.clusters {
            if c.members.is_empty() || c.members.len() != c.pattern.len() {
                return Err(Error::InvalidParameter("malformed cluster".into()));
            }
            let id = state.alloc();
            for (k, (&s, &b)) in c.members.iter().zip(&c.pattern).enumerate() {
                mark(s)?;
                state.cluster_of[s] = id;
                state.bit[s] = b;
                state.pos[s] = k as u32;
                state.clusters[id as usize].members.push(s as u32);
            }
            state.clusters[id as usize].minus = c.sign.is_minus();
        }
        if seen.iter().any(|&b| !b) {
            return Err(Error::InvalidParameter(
                "canonical state does not cover every site".into(),
            ));
        }
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.canonical())?)
    }

    /// Checks that tags and registry agree.
    pub fn check_integrity(&self) -> std::result::Result<(), String> {
        let mut counted = 0;
        for (id, c) in self.clusters.iter().enumerate() {
            let freed = self.free.contains(&(id as u32));
            if freed != c.members.is_empty() {
                return Err(format!("cluster {id} free-list state inconsistent"));
            }
            for (k, &s) in c.members.iter().enumerate() {
                let s = s as usize;
                if self.cluster_of[s] != id as u32 {
                    return Err(format!(
                        "site {s} listed in cluster {id} but tagged {}",
                        self.cluster_of[s]
                    ));
                }
                if self.pos[s] as usize != k {
                    return Err(format!("site {s} position index stale"));
                }
                counted += 1;
            }
        }
        let members = self.cluster_of.iter().filter(|&&c| c != NONE).count();
        if members != counted {
            return Err(format!("{members} member tags but {counted} registry entries"));
        }
        if self.background_count() + counted != self.sites() {
            return Err("site count mismatch".into());
        }
        Ok(())
    }
}

impl PartialEq for ClusterState {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalCluster {
    /// Sorted member sites.
    pub members: Vec<usize>,
    /// Bits of `s` relative to the first member (so `pattern[0] == false`).
    pub pattern: Vec<bool>,
    pub sign: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalState {
    /// Background sites and their Z values, sorted by site.
    pub background: Vec<(usize, Outcome)>,
    /// Clusters sorted by smallest member.
    pub clusters: Vec<CanonicalCluster>,
}

/// Background set plus cluster partition, without any sign information.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitePartition {
    pub background: Vec<usize>,
    pub clusters: Vec<Vec<usize>>,
}
