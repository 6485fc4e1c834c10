//! Periodic chains and square tori.
//!
//! Sites are indexed in raster order, `site = row * L + col`. Neighbors are
//! listed in a fixed canonical order (left, right, and in 2d also up, down);
//! every engine walks bonds in that order, which is what makes recorded
//! outcome tapes portable between engines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial dimension of the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn as_u8(self) -> u8 {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }

    pub fn coordination(self) -> usize {
        match self {
            Dimension::One => 2,
            Dimension::Two => 4,
        }
    }
}

impl TryFrom<u8> for Dimension {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            d => Err(Error::InvalidLattice(format!("unsupported dimension {d}"))),
        }
    }
}

impl From<Dimension> for u8 {
    fn from(d: Dimension) -> u8 {
        d.as_u8()
    }
}

/// A periodic lattice with a flattened neighbor table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    dimension: Dimension,
    size: usize,
    neighbors: Vec<usize>,
}

impl Lattice {
    /// Builds a ring of `size` sites (1d) or a `size × size` torus (2d).
    ///
    /// Rings need at least four sites and tori at least three per side;
    /// anything smaller has coinciding neighbors.
    pub fn new(dimension: Dimension, size: usize) -> Result<Self> {
        let min = match dimension {
            Dimension::One => 4,
            Dimension::Two => 3,
        };
        if size < min {
            return Err(Error::InvalidLattice(format!(
                "linear size {size} below minimum {min} for {}d lattice",
                dimension.as_u8()
            )));
        }
        let neighbors = match dimension {
            Dimension::One => (0..size)
                .flat_map(|i| [(i + size - 1) % size, (i + 1) % size])
                .collect(),
            Dimension::Two => {
                let mut table = Vec::with_capacity(4 * size * size);
                for row in 0..size {
                    for col in 0..size {
                        table.push(row * size + (col + size - 1) % size);
                        table.push(row * size + (col + 1) % size);
                        table.push(((row + size - 1) % size) * size + col);
                        table.push(((row + 1) % size) * size + col);
                    }
                }
                table
            }
        };
        Ok(Lattice {
            dimension,
            size,
            neighbors,
        })
    }

    pub fn ring(size: usize) -> Result<Self> {
        Self::new(Dimension::One, size)
    }

    pub fn torus(size: usize) -> Result<Self> {
        Self::new(Dimension::Two, size)
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// Linear size `L`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of sites `N`.
    pub fn sites(&self) -> usize {
        match self.dimension {
            Dimension::One => self.size,
            Dimension::Two => self.size * self.size,
        }
    }

    pub fn coordination(&self) -> usize {
        self.dimension.coordination()
    }

    /// Neighbors of `site` in canonical order.
    #[inline]
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let z = self.coordination();
        &self.neighbors[site * z..(site + 1) * z]
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        a < self.sites() && self.neighbors(a).contains(&b)
    }

    /// All bonds `(i, j)` with `i < j`, sorted.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut bonds: Vec<_> = (0..self.sites())
            .flat_map(|i| self.neighbors(i).iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
            .collect();
        bonds.sort_unstable();
        bonds
    }

    /// Column of a site (its position along the chain in 1d).
    pub fn column(&self, site: usize) -> usize {
        site % self.size
    }

    /// The reference pair used for the long-range correlator: site 0 and the
    /// site half the system away along the first axis.
    pub fn half_distance_pair(&self) -> (usize, usize) {
        (0, self.size / 2)
    }

    /// Splits the lattice into four equal contiguous arcs (1d) or column slabs
    /// (2d), labelled A, B, C, D in cyclic order.
    pub fn quarter_partition(&self) -> Result<RegionPartition> {
        if !self.size.is_multiple_of(4) {
            return Err(Error::InvalidLattice(format!(
                "linear size {} is not divisible by 4",
                self.size
            )));
        }
        let width = self.size / 4;
        let mut regions: [Vec<usize>; 4] = Default::default();
        for site in 0..self.sites() {
            regions[self.column(site) / width].push(site);
        }
        let label = (0..self.sites()).map(|s| (self.column(s) / width) as u8).collect();
        Ok(RegionPartition { regions, label })
    }
}

/// Four disjoint regions covering the lattice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionPartition {
    regions: [Vec<usize>; 4],
    label: Vec<u8>,
}

/// Region names for [`RegionPartition`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
}

impl RegionPartition {
    pub fn region(&self, r: Region) -> &[usize] {
        &self.regions[r as usize]
    }

    /// Region index (0..4) of a site.
    #[inline]
    pub fn label(&self, site: usize) -> u8 {
        self.label[site]
    }

    /// Union of the selected regions as a site mask.
    pub fn mask(&self, which: &[Region]) -> Vec<bool> {
        let bits: u8 = which.iter().fold(0, |acc, &r| acc | 1 << r as u8);
        self.label.iter().map(|&l| bits & (1 << l) != 0).collect()
    }

    /// Geometry tag recorded in output metadata.
    pub fn geometry(&self) -> &'static str {
        "contiguous-quarters-along-columns"
    }
}
