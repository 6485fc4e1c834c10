//! Exact stabilizer-tableau oracle.
//!
//! `n` Hermitian Pauli generators stored as bit-packed X and Z rows with a sign
//! bit (`x = z = 1` encodes `Y`). Only measurements and `X` flips occur, so
//! no destabilizer rows are kept; deterministic outcomes are resolved by
//! Gaussian elimination over GF(2) with phase tracking.

use crate::cluster::{CanonicalCluster, CanonicalState, ClusterState};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::schedule::{Event, Initial, Outcome, OutcomeSource, OutcomeTape, Recorder, Schedule};

/// A Hermitian Pauli string `±P₁⊗…⊗Pₙ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    x: Vec<u64>,
    z: Vec<u64>,
    minus: bool,
}

#[inline]
fn words(n: usize) -> usize {
    n.div_ceil(64)
}

#[inline]
fn get(v: &[u64], i: usize) -> bool {
    v[i / 64] >> (i % 64) & 1 == 1
}

#[inline]
fn flip(v: &mut [u64], i: usize) {
    v[i / 64] ^= 1 << (i % 64);
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString {
            x: vec![0; words(n)],
            z: vec![0; words(n)],
            minus: false,
        }
    }

    pub fn x(n: usize, site: usize) -> Self {
        let mut p = Self::identity(n);
        flip(&mut p.x, site);
        p
    }

    pub fn z(n: usize, site: usize) -> Self {
        let mut p = Self::identity(n);
        flip(&mut p.z, site);
        p
    }

    pub fn zz(n: usize, i: usize, j: usize) -> Self {
        let mut p = Self::z(n, i);
        flip(&mut p.z, j);
        p
    }

    /// `∏ X` over the given sites.
    pub fn x_product(n: usize, sites: impl IntoIterator<Item = usize>) -> Self {
        let mut p = Self::identity(n);
        for s in sites {
            flip(&mut p.x, s);
        }
        p
    }

    pub fn with_sign(mut self, sign: Outcome) -> Self {
        self.minus = sign.is_minus();
        self
    }

    pub fn sign(&self) -> Outcome {
        Outcome::from_bit(self.minus)
    }

    pub fn x_bit(&self, i: usize) -> bool {
        get(&self.x, i)
    }

    pub fn z_bit(&self, i: usize) -> bool {
        get(&self.z, i)
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let mut parity = 0u32;
        for k in 0..self.x.len() {
            parity ^= ((self.x[k] & other.z[k]) ^ (self.z[k] & other.x[k])).count_ones() & 1;
        }
        parity == 0
    }

    /// Replaces `self` by `other · self`. The two must commute.
    pub fn mul_assign_left(&mut self, other: &PauliString) {
        // exponent of i accumulated by the single-qubit products
        let mut e: i32 = 2 * (self.minus as i32 + other.minus as i32);
        for k in 0..self.x.len() {
            let support = (other.x[k] | other.z[k]) & (self.x[k] | self.z[k]);
            let mut bits = support;
            while bits != 0 {
                let b = bits.trailing_zeros();
                bits &= bits - 1;
                let (x1, z1) = ((other.x[k] >> b) & 1, (other.z[k] >> b) & 1);
                let (x2, z2) = ((self.x[k] >> b) & 1, (self.z[k] >> b) & 1);
                e += phase_exponent(x1, z1, x2, z2);
            }
            self.x[k] ^= other.x[k];
            self.z[k] ^= other.z[k];
        }
        let e = e.rem_euclid(4);
        debug_assert!(e % 2 == 0, "product of anticommuting Paulis");
        self.minus = e == 2;
    }
}

/// Power of `i` picked up by the product `(x1,z1)·(x2,z2)` of single-qubit
/// Paulis.
#[inline]
fn phase_exponent(x1: u64, z1: u64, x2: u64, z2: u64) -> i32 {
    let (x1, z1, x2, z2) = (x1 as i32, z1 as i32, x2 as i32, z2 as i32);
    match (x1, z1) {
        (0, 0) => 0,
        (1, 1) => z2 - x2,
        (1, 0) => z2 * (2 * x2 - 1),
        _ => x2 * (1 - 2 * z2),
    }
}

/// Row-echelon copy of a stabilizer group, for membership and sign queries.
#[derive(Clone, Debug)]
pub struct EchelonGroup {
    n: usize,
    /// `(pivot column, row)`; columns `0..n` are X bits, `n..2n` are Z bits.
    rows: Vec<(usize, PauliString)>,
}

impl EchelonGroup {
    fn new(n: usize, gens: &[PauliString]) -> Self {
        let mut pool: Vec<PauliString> = gens.to_vec();
        let mut rows = Vec::with_capacity(n);
        for col in 0..2 * n {
            let has = |p: &PauliString| if col < n { p.x_bit(col) } else { p.z_bit(col - n) };
            let Some(idx) = pool.iter().position(has) else {
                continue;
            };
            let pivot = pool.swap_remove(idx);
            for p in pool.iter_mut().filter(|p| has(p)) {
                p.mul_assign_left(&pivot);
            }
            rows.push((col, pivot));
        }
        EchelonGroup { n, rows }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// `Some(s)` if `s·P` (with `P` taken unsigned) is in the group.
    pub fn sign_of(&self, target: &PauliString) -> Option<Outcome> {
        let n = self.n;
        let mut residual = target.clone();
        residual.minus = false;
        let mut acc = PauliString::identity(n);
        for (col, row) in &self.rows {
            let hit = if *col < n {
                residual.x_bit(*col)
            } else {
                residual.z_bit(*col - n)
            };
            if hit {
                for k in 0..residual.x.len() {
                    residual.x[k] ^= row.x[k];
                    residual.z[k] ^= row.z[k];
                }
                acc.mul_assign_left(row);
            }
        }
        residual.is_identity().then(|| acc.sign())
    }
}

/// Stabilizer tableau of an `n`-qubit pure state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tableau {
    n: usize,
    gens: Vec<PauliString>,
}

impl Tableau {
    pub fn new(n: usize, initial: Initial) -> Self {
        assert!(n >= 1, "tableau needs at least one qubit");
        let gens = (0..n)
            .map(|i| match initial {
                Initial::AllZero => PauliString::z(n, i),
                Initial::AllPlus => PauliString::x(n, i),
            })
            .collect();
        Tableau { n, gens }
    }

    pub fn from_generators(n: usize, gens: Vec<PauliString>) -> Result<Self> {
        let t = Tableau { n, gens };
        t.check_invariants().map_err(Error::InvalidParameter)?;
        Ok(t)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.gens
    }

    pub fn group(&self) -> EchelonGroup {
        EchelonGroup::new(self.n, &self.gens)
    }

    /// Generators commute, are independent, and do not generate `-I`.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.gens.len() != self.n {
            return Err(format!("{} generators for {} qubits", self.gens.len(), self.n));
        }
        for (a, g) in self.gens.iter().enumerate() {
            for h in &self.gens[a + 1..] {
                if !g.commutes_with(h) {
                    return Err("generators do not commute".into());
                }
            }
        }
        let group = self.group();
        if group.rank() != self.n {
            return Err(format!("rank {} < {}", group.rank(), self.n));
        }
        Ok(())
    }

    /// Measures a Pauli string, updating the state.
    pub fn measure_pauli<S: OutcomeSource>(&mut self, pauli: &PauliString, src: &mut S) -> Result<Outcome, S::Error> {
        let mut anti = self
            .gens
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.commutes_with(pauli))
            .map(|(k, _)| k);
        let Some(first) = anti.next() else {
            let sign = self
                .group()
                .sign_of(pauli)
                .expect("an operator commuting with a maximal stabilizer group belongs to it");
            src.deterministic_outcome(sign)?;
            return Ok(sign);
        };
        let rest: Vec<usize> = anti.collect();
        let pivot = self.gens[first].clone();
        for k in rest {
            self.gens[k].mul_assign_left(&pivot);
        }
        let m = src.random_outcome()?;
        self.gens[first] = pauli.clone().with_sign(m);
        Ok(m)
    }

    /// `X` on one site: flips the sign of every generator with a Z component
    /// there.
    pub fn apply_x(&mut self, site: usize) {
        for g in &mut self.gens {
            if g.z_bit(site) {
                g.minus ^= true;
            }
        }
    }

    /// Same update rule as the cluster engine, expressed through Pauli
    /// measurements.
    pub fn site_update<S: OutcomeSource>(
        &mut self,
        lattice: &Lattice,
        event: Event,
        src: &mut S,
    ) -> Result<(), S::Error> {
        let n = self.n;
        match event {
            Event::MeasureX(site) => {
                self.measure_pauli(&PauliString::x(n, site), src)?;
            }
            Event::BondRound(site) => {
                let neighbors = lattice.neighbors(site);
                let mut minus = 0;
                for &j in neighbors {
                    minus += self.measure_pauli(&PauliString::zz(n, site, j), src)?.is_minus() as usize;
                }
                let plus = neighbors.len() - minus;
                if minus > plus || (minus == plus && src.coin()?) {
                    self.apply_x(site);
                }
            }
        }
        Ok(())
    }

    pub fn run<S: OutcomeSource>(&mut self, lattice: &Lattice, schedule: &Schedule, src: &mut S) -> Result<()> {
        if lattice.sites() != self.n || !schedule.matches(lattice) {
            return Err(Error::InvalidOperation("schedule, lattice and tableau disagree".into()));
        }
        for event in schedule.events() {
            self.site_update(lattice, event, src).map_err(Into::into)?;
        }
        Ok(())
    }

    pub fn run_recorded(&mut self, lattice: &Lattice, schedule: &Schedule) -> Result<OutcomeTape> {
        let mut rec = Recorder::new(schedule.stream().sampler());
        self.run(lattice, schedule, &mut rec)?;
        Ok(rec.into_tape())
    }

    pub fn replay(&mut self, lattice: &Lattice, schedule: &Schedule, tape: &OutcomeTape) -> Result<()> {
        let mut r = tape.replayer();
        self.run(lattice, schedule, &mut r)?;
        r.finish()?;
        Ok(())
    }

    /// Entanglement entropy of a region in bits: rank of the generators
    /// restricted to the region, minus the region size.
    pub fn entropy(&self, region: &[usize]) -> usize {
        let m = region.len();
        let restricted: Vec<PauliString> = self
            .gens
            .iter()
            .map(|g| {
                let mut r = PauliString::identity(m);
                for (k, &s) in region.iter().enumerate() {
                    if g.x_bit(s) {
                        flip(&mut r.x, k);
                    }
                    if g.z_bit(s) {
                        flip(&mut r.z, k);
                    }
                }
                r
            })
            .collect();
        gf2_rank(m, restricted) - m
    }

    /// `⟨P⟩` for a Pauli string: its sign if `±P` stabilizes the state, else 0.
    pub fn expectation(&self, pauli: &PauliString) -> i8 {
        self.expectation_in(&self.group(), pauli)
    }

    fn expectation_in(&self, group: &EchelonGroup, pauli: &PauliString) -> i8 {
        if self.gens.iter().any(|g| !g.commutes_with(pauli)) {
            return 0;
        }
        group.sign_of(pauli).map_or(0, Outcome::value)
    }

    /// Recovers the background-plus-GHZ description of the state.
    ///
    /// Fails if the stabilizer group is not generated by single-site `±Z`,
    /// intra-cluster `±ZZ`, and one `±∏X` per cluster.
    pub fn extract_partition(&self, lattice: &Lattice) -> Result<ClusterState> {
        ClusterState::from_canonical(lattice, &self.canonical_state()?)
    }

    pub fn canonical_state(&self) -> Result<CanonicalState> {
        let n = self.n;
        let group = self.group();
        let mut background = Vec::new();
        let mut rest = Vec::new();
        for i in 0..n {
            match self.expectation_in(&group, &PauliString::z(n, i)) {
                0 => rest.push(i),
                z => background.push((i, Outcome::from_bit(z < 0))),
            }
        }
        let mut assigned = vec![false; n];
        let mut clusters = Vec::new();
        for (a, &i) in rest.iter().enumerate() {
            if assigned[i] {
                continue;
            }
            let mut members = vec![i];
            let mut pattern = vec![false];
            for &j in &rest[a + 1..] {
                if assigned[j] {
                    continue;
                }
                match self.expectation_in(&group, &PauliString::zz(n, i, j)) {
                    0 => {}
                    v => {
                        assigned[j] = true;
                        members.push(j);
                        pattern.push(v < 0);
                    }
                }
            }
            let sign = match self.expectation_in(&group, &PauliString::x_product(n, members.iter().copied())) {
                0 => {
                    return Err(Error::NotClusterForm(format!(
                        "no X-type stabilizer on the cluster containing site {i}"
                    )))
                }
                v => Outcome::from_bit(v < 0),
            };
            clusters.push(CanonicalCluster { members, pattern, sign });
        }
        clusters.sort_unstable_by_key(|c| c.members[0]);
        Ok(CanonicalState { background, clusters })
    }
}

/// Rank over GF(2) of the `2m`-column matrix of Pauli rows (phases ignored).
fn gf2_rank(m: usize, rows: Vec<PauliString>) -> usize {
    let w = words(m);
    let mut pool: Vec<Vec<u64>> = rows.into_iter().map(|r| r.x.into_iter().chain(r.z).collect()).collect();
    let mut rank = 0;
    for col in 0..2 * m {
        let (word, bit) = if col < m {
            (col / 64, col % 64)
        } else {
            (w + (col - m) / 64, (col - m) % 64)
        };
        let has = |r: &Vec<u64>| r[word] >> bit & 1 == 1;
        let Some(idx) = pool.iter().position(has) else {
            continue;
        };
        let pivot = pool.swap_remove(idx);
        for r in pool.iter_mut().filter(|r| has(r)) {
            for (a, b) in r.iter_mut().zip(&pivot) {
                *a ^= b;
            }
        }
        rank += 1;
    }
    rank
}
