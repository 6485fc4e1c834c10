//! Verification suites: cluster engine against the tableau and percolation
//! oracles, the dephasing identities of the channels, and the equality of
//! the averaged quantum and classical dynamics.

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, SitePartition};
use crate::dense::{verify_reduction, verify_relations, ReductionReport, RelationReport};
use crate::error::{Error, Result};
use crate::lattice::{Dimension, Lattice, Region};
use crate::mvc::kernel_discrepancy;
use crate::observables::{self, from_tableau};
use crate::percolation::SpaceTimeForest;
use crate::schedule::{Initial, RandomStream, Schedule, TrajectoryTape};
use crate::tableau::Tableau;

/// First disagreement found by a suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub seed: u64,
    pub stream: u64,
    pub p: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub dimension: Dimension,
    pub size: usize,
    pub sweeps: usize,
    pub tapes: usize,
    /// Canonical state (partition, patterns, signs, z values) differs.
    pub state_mismatches: usize,
    pub observable_mismatches: usize,
    pub percolation_mismatches: usize,
    /// Tableau replay of the cluster engine's tape failed.
    pub replay_failures: usize,
    pub first_mismatch: Option<Mismatch>,
    pub passed: bool,
}

/// Observable values from both engines, compared as a whole.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableSet {
    pub entropies: Vec<usize>,
    pub tripartite_info: Option<i64>,
    pub u: i8,
    pub magnetization: i64,
    pub z: Vec<i8>,
    pub zz: Vec<i8>,
}

const ENTROPY_REGIONS: [&[Region]; 7] = [
    &[Region::A],
    &[Region::B],
    &[Region::C],
    &[Region::A, Region::B, Region::C],
    &[Region::A, Region::B],
    &[Region::B, Region::C],
    &[Region::A, Region::C],
];

pub fn cluster_observables(st: &ClusterState, lattice: &Lattice) -> ObservableSet {
    let n = lattice.sites();
    let part = lattice.quarter_partition().ok();
    ObservableSet {
        entropies: part
            .iter()
            .flat_map(|p| {
                ENTROPY_REGIONS
                    .iter()
                    .map(move |r| observables::entropy(st, &p.mask(r)))
            })
            .collect(),
        tripartite_info: part.as_ref().map(|p| observables::tripartite_information(st, p)),
        u: observables::expectation_u(st),
        magnetization: observables::magnetization(st),
        z: (0..n).map(|i| st.z(i).map_or(0, |z| z.value())).collect(),
        zz: (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| observables::zz_correlator(st, i, j))
            .collect(),
    }
}

pub fn tableau_observables(t: &Tableau, lattice: &Lattice) -> ObservableSet {
    use crate::tableau::PauliString;
    let n = lattice.sites();
    let part = lattice.quarter_partition().ok();
    ObservableSet {
        entropies: part
            .iter()
            .flat_map(|p| {
                ENTROPY_REGIONS
                    .iter()
                    .map(move |r| from_tableau::entropy(t, &p.mask(r)))
            })
            .collect(),
        tripartite_info: part.as_ref().map(|p| from_tableau::tripartite_information(t, p)),
        u: from_tableau::expectation_u(t),
        magnetization: from_tableau::magnetization(t),
        z: (0..n).map(|i| t.expectation(&PauliString::z(n, i))).collect(),
        zz: (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| from_tableau::zz_correlator(t, i, j))
            .collect(),
    }
}

/// Runs `tapes` cluster trajectories with `p` cycling over `0.1, …, 0.9` and
/// alternating initial states, replays each tape through the tableau, and
/// compares states, observables and the percolation partition.
pub fn verify_oracles(lattice: &Lattice, sweeps: usize, tapes: usize, seed: u64) -> Result<OracleReport> {
    let n = lattice.sites();
    if n > 64 {
        return Err(Error::InvalidParameter(
            "the tableau oracle is limited to 64 qubits here".into(),
        ));
    }
    let mut report = OracleReport {
        dimension: lattice.dimension(),
        size: lattice.size(),
        sweeps,
        tapes,
        state_mismatches: 0,
        observable_mismatches: 0,
        percolation_mismatches: 0,
        replay_failures: 0,
        first_mismatch: None,
        passed: false,
    };
    for k in 0..tapes as u64 {
        let p = (1 + k % 9) as f64 / 10.0;
        let initial = if k % 2 == 0 { Initial::AllZero } else { Initial::AllPlus };
        let stream = RandomStream::new(seed, k);
        let sched = Schedule::generate(lattice, p, sweeps, stream)?;
        let mut st = ClusterState::new(lattice, initial);
        let tape = st.run_recorded(lattice, &sched)?;
        let note = |report: &mut OracleReport, reason: String| {
            if report.first_mismatch.is_none() {
                report.first_mismatch = Some(Mismatch {
                    seed,
                    stream: k,
                    p,
                    reason,
                });
            }
        };
        if let Err(m) = st.check_integrity() {
            report.state_mismatches += 1;
            note(&mut report, format!("cluster integrity: {m}"));
            continue;
        }

        let mut t = Tableau::new(n, initial);
        if let Err(e) = t.replay(lattice, &sched, &tape) {
            report.replay_failures += 1;
            note(&mut report, format!("tableau replay: {e}"));
            continue;
        }
        match t.canonical_state() {
            Ok(c) if c == st.canonical() => {}
            Ok(_) => {
                report.state_mismatches += 1;
                note(&mut report, "canonical states differ".into());
            }
            Err(e) => {
                report.state_mismatches += 1;
                note(&mut report, format!("tableau state not in cluster form: {e}"));
            }
        }
        let (a, b) = (cluster_observables(&st, lattice), tableau_observables(&t, lattice));
        if a != b {
            report.observable_mismatches += 1;
            note(&mut report, format!("observables differ: cluster {a:?}, tableau {b:?}"));
        }

        let mut f = SpaceTimeForest::with_initial(lattice, initial);
        f.ingest(lattice, &sched)?;
        let part = f.classify();
        if part != st.partition() || f.observables().has_background != (observables::expectation_u(&st) == 0) {
            report.percolation_mismatches += 1;
            note(&mut report, "percolation partition differs".into());
        }
    }
    report.passed =
        report.state_mismatches + report.observable_mismatches + report.percolation_mismatches + report.replay_failures
            == 0;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelReport {
    pub relations: Vec<RelationReport>,
    pub passed: bool,
}

/// Channel identities on rings of each size.
pub fn verify_channels(sizes: &[usize], trials: usize, seed: u64) -> Result<ChannelReport> {
    let relations = sizes
        .iter()
        .map(|&n| verify_relations(n, trials, seed ^ n as u64))
        .collect::<Result<Vec<_>>>()?;
    let passed = relations.iter().all(|r| r.passed);
    Ok(ChannelReport { relations, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelCheck {
    pub dimension: Dimension,
    pub p: f64,
    pub max_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub reductions: Vec<ReductionReport>,
    /// Single-site kernels of the two majority-vote formulations.
    pub kernels: Vec<KernelCheck>,
    pub passed: bool,
}

pub const KERNEL_TOLERANCE: f64 = 1e-15;

/// Quantum versus classical evolution on rings, and the kernel identity of
/// the two majority-vote formulations.
pub fn verify_equivalence(
    sizes: &[usize],
    ps: &[f64],
    sweeps: usize,
    schedules: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let mut reductions = Vec::new();
    for &n in sizes {
        let lat = Lattice::ring(n)?;
        for &p in ps {
            reductions.push(verify_reduction(&lat, p, sweeps, schedules, seed)?);
        }
    }
    let mut kernels = Vec::new();
    for lat in [Lattice::ring(4)?, Lattice::torus(3)?] {
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            kernels.push(KernelCheck {
                dimension: lat.dimension(),
                p,
                max_difference: kernel_discrepancy(&lat, p),
            });
        }
    }
    let passed = reductions.iter().all(|r| r.passed) && kernels.iter().all(|k| k.max_difference <= KERNEL_TOLERANCE);
    Ok(EquivalenceReport {
        reductions,
        kernels,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayEngine {
    Cluster,
    Tableau,
    Percolation,
}

/// Final state of a replayed trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayReport {
    pub engine: ReplayEngine,
    pub partition: SitePartition,
    /// Absent for percolation, which carries no signs.
    pub observables: Option<ObservableSet>,
}

/// Replays a recorded trajectory through one engine; deterministic outcomes
/// on the tape must agree with the engine's.
pub fn replay_tape(tape: &TrajectoryTape, engine: ReplayEngine) -> Result<ReplayReport> {
    let lattice = tape.lattice()?;
    let initial = tape.header.initial;
    match engine {
        ReplayEngine::Cluster => {
            let mut st = ClusterState::new(&lattice, initial);
            st.replay(&lattice, &tape.schedule, &tape.outcomes)?;
            Ok(ReplayReport {
                engine,
                partition: st.partition(),
                observables: Some(cluster_observables(&st, &lattice)),
            })
        }
        ReplayEngine::Tableau => {
            let mut t = Tableau::new(lattice.sites(), initial);
            t.replay(&lattice, &tape.schedule, &tape.outcomes)?;
            let canon = t.canonical_state()?;
            let partition = SitePartition {
                background: canon.background.iter().map(|&(s, _)| s).collect(),
                clusters: canon.clusters.iter().map(|c| c.members.clone()).collect(),
            };
            Ok(ReplayReport {
                engine,
                partition,
                observables: Some(tableau_observables(&t, &lattice)),
            })
        }
        ReplayEngine::Percolation => {
            let mut f = SpaceTimeForest::with_initial(&lattice, initial);
            f.ingest(&lattice, &tape.schedule)?;
            Ok(ReplayReport {
                engine,
                partition: f.classify(),
                observables: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracles_agree_on_small_lattices() {
        let r = verify_oracles(&Lattice::ring(8).unwrap(), 12, 40, 1).unwrap();
        assert!(r.passed, "{r:?}");
        let r = verify_oracles(&Lattice::torus(4).unwrap(), 6, 20, 2).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn channels_pass() {
        assert!(verify_channels(&[1, 2], 5, 0).unwrap().passed);
    }

    #[test]
    fn equivalence_passes() {
        let r = verify_equivalence(&[4], &[0.5], 2, 3, 0).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.kernels.len(), 42);
    }

    #[test]
    fn replay_engines_agree() {
        let lat = Lattice::ring(8).unwrap();
        let sched = Schedule::generate(&lat, 0.5, 8, RandomStream::new(3, 4)).unwrap();
        let mut st = ClusterState::new(&lat, Initial::AllZero);
        let outcomes = st.run_recorded(&lat, &sched).unwrap();
        let tape = TrajectoryTape::new(sched, Initial::AllZero, outcomes);
        let c = replay_tape(&tape, ReplayEngine::Cluster).unwrap();
        let t = replay_tape(&tape, ReplayEngine::Tableau).unwrap();
        let p = replay_tape(&tape, ReplayEngine::Percolation).unwrap();
        assert_eq!(c.observables, t.observables);
        assert_eq!(c.partition, t.partition);
        assert_eq!(c.partition, p.partition);
        assert!(p.observables.is_none());
    }
}
