//! Trajectory ensembles over `(L, p)` grids.
//!
//! Trajectory `k` of the point `(L, p)` uses the random stream
//! `(derive_seed(seed, [L, bits(p)]), k)`, so results depend only on the
//! configuration and never on the number of workers.

use std::io::{Read, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::ClusterState;
use crate::error::{Error, Result};
use crate::lattice::{Dimension, Lattice, RegionPartition};
use crate::mvc::{apply_event, Draws, RngDraws, SpinConfig};
use crate::observables::{ensemble_reduce, Estimate, Observable, Record, TrajectoryObservables};
use crate::percolation::SpaceTimeForest;
use crate::schedule::{derive_seed, Initial, RandomStream, Schedule, SiteOrder};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Cluster,
    Mvc,
    Percolation,
}

/// Number of sweeps per trajectory, possibly growing with `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweeps {
    Fixed(usize),
    /// `round(factor · L^exponent)`.
    Scaled {
        factor: f64,
        exponent: f64,
    },
}

impl Default for Sweeps {
    fn default() -> Self {
        Sweeps::Scaled {
            factor: 4.0,
            exponent: 1.0,
        }
    }
}

impl Sweeps {
    pub fn resolve(self, size: usize) -> usize {
        match self {
            Sweeps::Fixed(n) => n,
            Sweeps::Scaled { factor, exponent } => (factor * (size as f64).powf(exponent)).round().max(1.0) as usize,
        }
    }

    pub fn scaled_by(self, m: f64) -> Sweeps {
        match self {
            Sweeps::Fixed(n) => Sweeps::Fixed(((n as f64) * m).round() as usize),
            Sweeps::Scaled { factor, exponent } => Sweeps::Scaled {
                factor: factor * m,
                exponent,
            },
        }
    }
}

/// When observables are recorded along a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Final,
    /// Mean over sweeps `burn_in + stride, burn_in + 2·stride, …`.
    TimeAveraged { burn_in: usize, stride: usize },
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::Final => "final",
            Sampling::TimeAveraged { .. } => "time_averaged",
        }
    }

    fn samples_at(self, sweep: usize, total: usize) -> bool {
        match self {
            Sampling::Final => sweep == total,
            Sampling::TimeAveraged { burn_in, stride } => sweep > burn_in && (sweep - burn_in).is_multiple_of(stride),
        }
    }
}

/// A `p` grid, either listed or as an inclusive range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if *step <= 0.0 {
                    return vec![*start];
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // rounding to 12 digits keeps 0.3 + 2·0.01 printable as 0.32
                (0..=n)
                    .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                    .collect()
            }
        }
    }
}

fn default_traj() -> usize {
    1000
}

fn default_initial() -> Initial {
    Initial::AllZero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub engine: Engine,
    pub dimension: Dimension,
    /// Linear sizes `L`.
    pub sizes: Vec<usize>,
    pub p: Grid,
    #[serde(default)]
    pub sweeps: Sweeps,
    #[serde(default = "default_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_initial")]
    pub initial: Initial,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub order: SiteOrder,
    /// Output file stem; not part of the configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker cap; not part of the configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Run the engine's integrity check on every final state.
    #[serde(default)]
    pub check_states: bool,
}

impl RunConfig {
    pub fn new(engine: Engine, dimension: Dimension, sizes: Vec<usize>, p: Vec<f64>, n_traj: usize, seed: u64) -> Self {
        RunConfig {
            engine,
            dimension,
            sizes,
            p: Grid::List(p),
            sweeps: Sweeps::default(),
            n_traj,
            seed,
            initial: Initial::AllZero,
            sampling: Sampling::Final,
            order: SiteOrder::Raster,
            output: None,
            workers: None,
            check_states: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sizes.is_empty() {
            return bad("no system sizes".into());
        }
        for &l in &self.sizes {
            Lattice::new(self.dimension, l).map_err(|e| Error::Config(e.to_string()))?;
        }
        let ps = self.p.values();
        if ps.is_empty() {
            return bad("empty p grid".into());
        }
        if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("p = {p} outside [0, 1]"));
        }
        if self.n_traj == 0 {
            return bad("n_traj must be at least 1".into());
        }
        if let Some(&l) = self.sizes.iter().find(|&&l| self.sweeps.resolve(l) == 0) {
            return bad(format!("zero sweeps at L = {l}"));
        }
        if let Sampling::TimeAveraged { burn_in, stride } = self.sampling {
            if stride == 0 {
                return bad("stride must be at least 1".into());
            }
            if let Some(&l) = self.sizes.iter().find(|&&l| self.sweeps.resolve(l) < burn_in + stride) {
                return bad(format!("no samples after burn-in at L = {l}"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.engine == Engine::Mvc && self.order != SiteOrder::Raster {
            return bad("the majority-vote engine runs in raster order".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration without output path and worker cap.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.workers = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn point_seed(&self, size: usize, p: f64) -> u64 {
        derive_seed(self.seed, &[size as u64, p.to_bits()])
    }
}

/// Ensemble estimates at one `(L, p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub dimension: Dimension,
    pub size: usize,
    pub p: f64,
    pub sweeps: usize,
    pub n_traj: usize,
    pub estimates: Vec<(Observable, Estimate)>,
}

impl PointResult {
    pub fn get(&self, o: Observable) -> Option<Estimate> {
        self.estimates.iter().find(|(k, _)| *k == o).map(|&(_, e)| e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: RunConfig,
    pub config_hash: String,
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn point(&self, size: usize, p: f64) -> Option<&PointResult> {
        self.points.iter().find(|r| r.size == size && r.p == p)
    }

    /// One row per point and observable.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.points {
            for (o, e) in &r.estimates {
                out.write_record([
                    r.dimension.as_u8().to_string(),
                    r.size.to_string(),
                    r.p.to_string(),
                    r.sweeps.to_string(),
                    r.n_traj.to_string(),
                    o.to_string(),
                    e.mean.to_string(),
                    e.stderr.to_string(),
                    self.config.sampling.name().to_string(),
                    self.config.seed.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Sidecar describing how the CSV was produced.
    pub fn metadata(&self) -> serde_json::Value {
        let geometry = if self.config.sizes.iter().all(|l| l % 4 == 0) {
            "contiguous-quarters-along-columns"
        } else {
            "none"
        };
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "config": self.config,
            "region_geometry": geometry,
            "csv_columns": CSV_HEADER,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write_files(&self, stem: &std::path::Path) -> Result<(PathBuf, PathBuf)> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        std::fs::write(&json_path, serde_json::to_string_pretty(&self.metadata())?)?;
        Ok((csv_path, json_path))
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "dimension",
    "L",
    "p",
    "sweeps",
    "n_traj",
    "observable",
    "mean",
    "stderr",
    "sampling_mode",
    "seed",
];

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CsvRow {
    pub dimension: u8,
    #[serde(rename = "L")]
    pub size: usize,
    pub p: f64,
    pub sweeps: usize,
    pub n_traj: usize,
    pub observable: String,
    pub mean: f64,
    pub stderr: f64,
    pub sampling_mode: String,
    pub seed: u64,
}

pub fn read_csv(r: impl Read) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!(
            "unexpected CSV header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    for row in &rows {
        row.observable.parse::<Observable>()?;
    }
    Ok(rows)
}

/// Runs one trajectory and returns its (possibly time-averaged) record.
pub fn run_trajectory(
    config: &RunConfig,
    lattice: &Lattice,
    partition: Option<&RegionPartition>,
    p: f64,
    sweeps: usize,
    stream: RandomStream,
) -> Result<Record> {
    let wrap = |e: Error| Error::Trajectory {
        seed: stream.seed,
        stream: stream.stream,
        message: e.to_string(),
    };
    let sched = Schedule::generate_with_order(lattice, p, sweeps, stream, config.order).map_err(wrap)?;
    let mut samples = Vec::new();
    match config.engine {
        Engine::Cluster => {
            let mut st = ClusterState::new(lattice, config.initial);
            let mut src = stream.sampler();
            for t in 0..sweeps {
                for e in sched.sweep(t) {
                    st.site_update(lattice, e, &mut src).map_err(|e| wrap(e.into()))?;
                }
                if config.sampling.samples_at(t + 1, sweeps) {
                    samples.push(cluster_record(&st, lattice, partition));
                }
            }
            if config.check_states {
                st.check_integrity().map_err(|m| wrap(Error::InvalidOperation(m)))?;
            }
        }
        Engine::Percolation => {
            let mut f = SpaceTimeForest::with_initial(lattice, config.initial);
            for t in 0..sweeps {
                for e in sched.sweep(t) {
                    f.ingest_event(lattice, e);
                }
                if config.sampling.samples_at(t + 1, sweeps) {
                    samples.push(percolation_record(&mut f, partition));
                }
            }
        }
        Engine::Mvc => {
            let mut draws = RngDraws(stream.outcome_rng());
            let n = lattice.sites();
            let mut spins = match config.initial {
                Initial::AllZero => SpinConfig::uniform(n, 1),
                Initial::AllPlus => SpinConfig::from_spins((0..n).map(|_| draws.spin()).collect())?,
            };
            for t in 0..sweeps {
                for e in sched.sweep(t) {
                    apply_event(&mut spins, lattice, e, &mut draws);
                }
                if config.sampling.samples_at(t + 1, sweeps) {
                    samples.push(mvc_record(&spins, lattice));
                }
            }
        }
    }
    Ok(Record::average(&samples))
}

fn cluster_record(st: &ClusterState, lattice: &Lattice, partition: Option<&RegionPartition>) -> Record {
    let mut r = TrajectoryObservables::measure(st, lattice, partition).record();
    let largest = st.cluster_ids().map(|c| st.cluster_size(c)).max().unwrap_or(0);
    r.set(Observable::LargestClusterFraction, largest as f64 / st.sites() as f64);
    r
}

fn percolation_record(f: &mut SpaceTimeForest, partition: Option<&RegionPartition>) -> Record {
    let obs = f.observables();
    let mut r = Record::default();
    r.set(Observable::AbsU, if obs.has_background { 0.0 } else { 1.0 });
    r.set(Observable::BackgroundFraction, obs.background_fraction);
    r.set(Observable::LargestClusterFraction, obs.largest_cluster_fraction);
    if let Some(part) = partition {
        let spanning = f
            .classify()
            .clusters
            .iter()
            .filter(|c| c.iter().fold(0u8, |m, &s| m | 1 << part.label(s)) == 0xf)
            .count();
        r.set(Observable::TripartiteInfo, spanning as f64);
    }
    r
}

fn mvc_record(spins: &SpinConfig, lattice: &Lattice) -> Record {
    let mut r = Record::default();
    let m = spins.magnetization();
    let (a, b) = lattice.half_distance_pair();
    let zz = (spins.get(a) * spins.get(b)) as f64;
    r.set(Observable::M, m);
    r.set(Observable::AbsM, m.abs());
    r.set(Observable::Zz, zz);
    r.set(Observable::ZzSq, zz * zz);
    r
}

/// Runs every `(L, p)` point of the configuration.
pub fn run_sweep(config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    let work = || -> Result<Vec<PointResult>> {
        let mut points = Vec::new();
        for &size in &config.sizes {
            let lattice = Lattice::new(config.dimension, size)?;
            let partition = lattice.quarter_partition().ok();
            let sweeps = config.sweeps.resolve(size);
            for p in config.p.values() {
                let seed = config.point_seed(size, p);
                let records = (0..config.n_traj as u64)
                    .into_par_iter()
                    .map(|k| {
                        run_trajectory(
                            config,
                            &lattice,
                            partition.as_ref(),
                            p,
                            sweeps,
                            RandomStream::new(seed, k),
                        )
                    })
                    .collect::<Result<Vec<Record>>>()?;
                let stats = ensemble_reduce(&records);
                points.push(PointResult {
                    dimension: config.dimension,
                    size,
                    p,
                    sweeps,
                    n_traj: config.n_traj,
                    estimates: stats.estimates(),
                });
            }
        }
        Ok(points)
    };
    let points = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(SweepResult {
        config: config.clone(),
        config_hash: config.hash(),
        points,
    })
}

/// Estimates of one observable at one point for each sweep multiplier.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceEntry {
    pub size: usize,
    pub p: f64,
    pub observable: Observable,
    pub multipliers: Vec<f64>,
    pub sweeps: Vec<usize>,
    pub estimates: Vec<Estimate>,
    /// Smallest multiplier whose estimate agrees with every longer run
    /// within two combined standard errors.
    pub converged_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    /// Set when some observable has not settled at the first multiplier.
    pub flagged: bool,
}

/// Reruns the configuration with sweeps scaled by each multiplier.
pub fn convergence_check(config: &RunConfig, multipliers: &[f64]) -> Result<ConvergenceReport> {
    if multipliers.is_empty() {
        return Err(Error::Config("no multipliers".into()));
    }
    let runs = multipliers
        .iter()
        .map(|&m| {
            let mut c = config.clone();
            c.sweeps = config.sweeps.scaled_by(m);
            run_sweep(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    for (k, first) in runs[0].points.iter().enumerate() {
        for &(o, _) in &first.estimates {
            let estimates: Vec<Estimate> = runs.iter().map(|r| r.points[k].get(o).unwrap()).collect();
            let settled = |i: usize| {
                estimates[i + 1..].iter().all(|b| {
                    let a = estimates[i];
                    (a.mean - b.mean).abs() <= 2.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
                })
            };
            let converged_at = (0..estimates.len()).find(|&i| settled(i)).map(|i| multipliers[i]);
            entries.push(ConvergenceEntry {
                size: first.size,
                p: first.p,
                observable: o,
                multipliers: multipliers.to_vec(),
                sweeps: runs.iter().map(|r| r.points[k].sweeps).collect(),
                estimates,
                converged_at,
            });
        }
    }
    let flagged = entries.iter().any(|e| e.converged_at != Some(multipliers[0]));
    Ok(ConvergenceReport { entries, flagged })
}
