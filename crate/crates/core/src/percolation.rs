//! Space-time percolation picture of the cluster dynamics.
//!
//! Each site carries a current space-time node. An `X` measurement cuts the
//! temporal bond, so the site moves to a fresh node; a bond round activates
//! the spatial bonds to all neighbors, so the current nodes are joined. A
//! final site whose node is connected to the initial time slice is in the
//! background; final sites that are connected to each other but not to the
//! initial slice share a GHZ cluster.

use std::collections::BTreeMap;

use crate::cluster::SitePartition;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::schedule::{Event, Initial, Schedule};

/// Union–find over dynamically created space-time nodes.
#[derive(Clone, Debug)]
pub struct SpaceTimeForest {
    parent: Vec<u32>,
    rank: Vec<u8>,
    /// Root flag: set connects to the initial slice.
    anchored: Vec<bool>,
    current: Vec<u32>,
}

impl SpaceTimeForest {
    /// One initial-slice node per site, starting from `|0…0⟩`.
    pub fn new(lattice: &Lattice) -> Self {
        Self::with_initial(lattice, Initial::AllZero)
    }

    /// From `|+…+⟩` the initial slice carries no `Z` eigenstates, so its
    /// nodes are not anchored.
    pub fn with_initial(lattice: &Lattice, initial: Initial) -> Self {
        let n = lattice.sites();
        SpaceTimeForest {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            anchored: vec![initial == Initial::AllZero; n],
            current: (0..n as u32).collect(),
        }
    }

    pub fn sites(&self) -> usize {
        self.current.len()
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    fn find(&mut self, mut a: u32) -> u32 {
        let mut root = a;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[a as usize] != root {
            let next = self.parent[a as usize];
            self.parent[a as usize] = root;
            a = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
        self.anchored[hi as usize] |= self.anchored[lo as usize];
    }

    #[inline]
    pub fn ingest_event(&mut self, lattice: &Lattice, event: Event) {
        match event {
            Event::MeasureX(site) => {
                let node = self.parent.len() as u32;
                self.parent.push(node);
                self.rank.push(0);
                self.anchored.push(false);
                self.current[site] = node;
            }
            Event::BondRound(site) => {
                let a = self.current[site];
                for &j in lattice.neighbors(site) {
                    self.union(a, self.current[j]);
                }
            }
        }
    }

    pub fn ingest(&mut self, lattice: &Lattice, schedule: &Schedule) -> Result<()> {
        if !schedule.matches(lattice) || lattice.sites() != self.sites() {
            return Err(Error::InvalidOperation("schedule and forest disagree".into()));
        }
        for e in schedule.events() {
            self.ingest_event(lattice, e);
        }
        Ok(())
    }

    /// Current nodes grouped into background and clusters.
    pub fn classify(&mut self) -> SitePartition {
        let n = self.sites();
        let mut background = Vec::new();
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for site in 0..n {
            let root = self.find(self.current[site]);
            if self.anchored[root as usize] {
                background.push(site);
            } else {
                groups.entry(root).or_default().push(site);
            }
        }
        let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
        clusters.sort_unstable_by_key(|c| c[0]);
        SitePartition { background, clusters }
    }

    pub fn observables(&mut self) -> PercolationObservables {
        let part = self.classify();
        let n = self.sites() as f64;
        PercolationObservables {
            has_background: !part.background.is_empty(),
            background_fraction: part.background.len() as f64 / n,
            largest_cluster_fraction: part.clusters.iter().map(Vec::len).max().unwrap_or(0) as f64 / n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PercolationObservables {
    /// Some final site connects to the initial slice, i.e. `|⟨U⟩| = 0`.
    pub has_background: bool,
    pub background_fraction: f64,
    /// Largest GHZ cluster (not connected to the initial slice) over `N`.
    pub largest_cluster_fraction: f64,
}
