//! Diagnostics of a single trajectory and their ensemble averages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::error::Error;
use crate::lattice::{Lattice, RegionPartition};
use crate::tableau::{PauliString, Tableau};

/// Number of clusters with members both inside and outside `region`.
pub fn entropy(state: &ClusterState, region: &[bool]) -> usize {
    state
        .cluster_ids()
        .filter(|&c| {
            let mut inside = false;
            let mut outside = false;
            for s in state.members(c) {
                if region[s] {
                    inside = true;
                } else {
                    outside = true;
                }
                if inside && outside {
                    return true;
                }
            }
            false
        })
        .count()
}

/// Region-touch mask (bit r set if the cluster has a member in region r) of
/// every cluster.
fn region_masks<'a>(state: &'a ClusterState, partition: &'a RegionPartition) -> impl Iterator<Item = u8> + 'a {
    state
        .cluster_ids()
        .map(move |c| state.members(c).fold(0u8, |m, s| m | 1 << partition.label(s)))
}

/// `S_A + S_B + S_C + S_ABC − S_AB − S_BC − S_AC`, with each entropy counted
/// from the clusters' region masks.
pub fn tripartite_information(state: &ClusterState, partition: &RegionPartition) -> i64 {
    const A: u8 = 1;
    const B: u8 = 2;
    const C: u8 = 4;
    let terms: [(u8, i64); 7] = [
        (A, 1),
        (B, 1),
        (C, 1),
        (A | B | C, 1),
        (A | B, -1),
        (B | C, -1),
        (A | C, -1),
    ];
    let mut s = [0i64; 7];
    for mask in region_masks(state, partition) {
        for (k, &(region, _)) in terms.iter().enumerate() {
            // cuts the boundary iff it touches the region and its complement
            if mask & region != 0 && mask & !region & 0xf != 0 {
                s[k] += 1;
            }
        }
    }
    terms.iter().zip(s).map(|(&(_, w), v)| w * v).sum()
}

/// `⟨∏X⟩`: zero with any background site present, else the product of the
/// cluster signs.
pub fn expectation_u(state: &ClusterState) -> i8 {
    if state.background_count() > 0 {
        return 0;
    }
    state.cluster_ids().map(|c| state.sign(c).value()).product()
}

/// `⟨Σ Zᵢ⟩`; cluster members contribute nothing.
pub fn magnetization(state: &ClusterState) -> i64 {
    (0..state.sites())
        .filter_map(|s| state.z(s))
        .map(|z| z.value() as i64)
        .sum()
}

/// `⟨Zᵢ Zⱼ⟩`.
pub fn zz_correlator(state: &ClusterState, i: usize, j: usize) -> i8 {
    match (state.cluster_id(i), state.cluster_id(j)) {
        (None, None) => (state.z(i).unwrap() * state.z(j).unwrap()).value(),
        (Some(a), Some(b)) if a == b => {
            if state.same_bit(i, j) {
                1
            } else {
                -1
            }
        }
        _ => 0,
    }
}

/// The same diagnostics computed from a tableau, for oracle comparisons.
pub mod from_tableau {
    use super::*;

    pub fn entropy(t: &Tableau, region: &[bool]) -> usize {
        let sites: Vec<usize> = (0..t.qubits()).filter(|&s| region[s]).collect();
        t.entropy(&sites)
    }

    pub fn tripartite_information(t: &Tableau, partition: &RegionPartition) -> i64 {
        use crate::lattice::Region::*;
        let s = |r: &[crate::lattice::Region]| entropy(t, &partition.mask(r)) as i64;
        s(&[A]) + s(&[B]) + s(&[C]) + s(&[A, B, C]) - s(&[A, B]) - s(&[B, C]) - s(&[A, C])
    }

    pub fn expectation_u(t: &Tableau) -> i8 {
        t.expectation(&PauliString::x_product(t.qubits(), 0..t.qubits()))
    }

    pub fn magnetization(t: &Tableau) -> i64 {
        let n = t.qubits();
        (0..n).map(|i| t.expectation(&PauliString::z(n, i)) as i64).sum()
    }

    pub fn zz_correlator(t: &Tableau, i: usize, j: usize) -> i8 {
        if i == j {
            return 1;
        }
        t.expectation(&PauliString::zz(t.qubits(), i, j))
    }
}

/// Everything recorded about one trajectory's final state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryObservables {
    /// `None` when the lattice cannot be split into quarters.
    pub tripartite_info: Option<i64>,
    pub abs_u: u8,
    pub u_sign: i8,
    pub magnetization: i64,
    pub zz_half: i8,
    pub background_fraction: f64,
    pub sites: usize,
}

impl TrajectoryObservables {
    pub fn measure(state: &ClusterState, lattice: &Lattice, partition: Option<&RegionPartition>) -> Self {
        let u = expectation_u(state);
        let (a, b) = lattice.half_distance_pair();
        TrajectoryObservables {
            tripartite_info: partition.map(|p| tripartite_information(state, p)),
            abs_u: u.unsigned_abs(),
            u_sign: u,
            magnetization: magnetization(state),
            zz_half: zz_correlator(state, a, b),
            background_fraction: state.background_count() as f64 / state.sites() as f64,
            sites: state.sites(),
        }
    }

    /// Flattens into named per-trajectory values (magnetizations per site).
    pub fn record(&self) -> Record {
        let n = self.sites as f64;
        let mut r = Record::default();
        if let Some(i) = self.tripartite_info {
            r.set(Observable::TripartiteInfo, i as f64);
        }
        r.set(Observable::AbsU, self.abs_u as f64);
        r.set(Observable::U, self.u_sign as f64);
        r.set(Observable::M, self.magnetization as f64 / n);
        r.set(Observable::AbsM, self.magnetization.abs() as f64 / n);
        r.set(Observable::Zz, self.zz_half as f64);
        r.set(Observable::ZzSq, (self.zz_half as f64).powi(2));
        r.set(Observable::BackgroundFraction, self.background_fraction);
        r
    }
}

/// Names of the ensemble-averaged quantities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    TripartiteInfo,
    AbsU,
    U,
    /// Signed magnetization per site.
    M,
    /// Absolute magnetization per site.
    AbsM,
    Zz,
    /// Edwards–Anderson-style `⟨Z Z⟩²`.
    ZzSq,
    BackgroundFraction,
    LargestClusterFraction,
}

impl Observable {
    pub const ALL: [Observable; 9] = [
        Observable::TripartiteInfo,
        Observable::AbsU,
        Observable::U,
        Observable::M,
        Observable::AbsM,
        Observable::Zz,
        Observable::ZzSq,
        Observable::BackgroundFraction,
        Observable::LargestClusterFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observable::TripartiteInfo => "tripartite_info",
            Observable::AbsU => "abs_u",
            Observable::U => "u",
            Observable::M => "m",
            Observable::AbsM => "abs_m",
            Observable::Zz => "zz",
            Observable::ZzSq => "zz_sq",
            Observable::BackgroundFraction => "background_fraction",
            Observable::LargestClusterFraction => "largest_cluster_fraction",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown observable {s:?}")))
    }
}

/// Per-trajectory values, some of which may be absent for a given engine.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Record {
    values: [Option<f64>; 9],
}

impl Record {
    pub fn set(&mut self, o: Observable, v: f64) {
        self.values[o.index()] = Some(v);
    }

    pub fn get(&self, o: Observable) -> Option<f64> {
        self.values[o.index()]
    }

    /// Component-wise mean of several records (time averaging).
    pub fn average(records: &[Record]) -> Record {
        let mut out = Record::default();
        for o in Observable::ALL {
            let vals: Vec<f64> = records.iter().filter_map(|r| r.get(o)).collect();
            if !vals.is_empty() {
                out.set(o, vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        out
    }
}

/// Running sums for a sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean (sample variance with `n − 1`).
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Mean and standard error of one observable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Accumulators for every observable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnsembleStats {
    acc: [Accumulator; 9],
}

impl EnsembleStats {
    pub fn push(&mut self, r: &Record) {
        for o in Observable::ALL {
            if let Some(v) = r.get(o) {
                self.acc[o.index()].push(v);
            }
        }
    }

    pub fn merge(&mut self, other: &EnsembleStats) {
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.merge(b);
        }
    }

    pub fn estimate(&self, o: Observable) -> Option<Estimate> {
        let a = &self.acc[o.index()];
        (a.n > 0).then(|| Estimate {
            mean: a.mean(),
            stderr: a.stderr(),
            n: a.n,
        })
    }

    pub fn estimates(&self) -> Vec<(Observable, Estimate)> {
        Observable::ALL
            .into_iter()
            .filter_map(|o| self.estimate(o).map(|e| (o, e)))
            .collect()
    }
}

/// Reduces a batch of trajectory records in order.
pub fn ensemble_reduce<'a>(records: impl IntoIterator<Item = &'a Record>) -> EnsembleStats {
    let mut s = EnsembleStats::default();
    for r in records {
        s.push(r);
    }
    s
}
