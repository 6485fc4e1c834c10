//! Classical majority-vote dynamics.
//!
//! Two formulations: with noise `q` a spin joins its neighbors' strict
//! majority with probability `1 − q`; with probability `p` it joins the
//! majority and otherwise it is reset uniformly. Ties are always resolved
//! uniformly. The two agree at `q = (1 − p)/2`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::schedule::{Event, RandomStream, Schedule, SiteOrder};

/// One spin per site, each `+1` or `−1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn uniform(n: usize, spin: i8) -> Self {
        debug_assert!(spin == 1 || spin == -1);
        SpinConfig { spins: vec![spin; n] }
    }

    pub fn from_spins(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter("spins must be +1 or -1".into()));
        }
        Ok(SpinConfig { spins })
    }

    /// Bit `i` of `index` set means spin `i` is `−1`.
    pub fn from_index(n: usize, index: usize) -> Self {
        SpinConfig {
            spins: (0..n).map(|i| if index >> i & 1 == 1 { -1 } else { 1 }).collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &s)| acc | ((s < 0) as usize) << i)
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, i: usize) -> i8 {
        self.spins[i]
    }

    pub fn set(&mut self, i: usize, s: i8) {
        self.spins[i] = s;
    }

    pub fn total(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    /// `Σ sᵢ / N`.
    pub fn magnetization(&self) -> f64 {
        self.total() as f64 / self.spins.len() as f64
    }

    /// Sign of the strict neighbor majority, or `None` on a tie.
    pub fn majority(&self, lattice: &Lattice, site: usize) -> Option<i8> {
        let sum: i32 = lattice.neighbors(site).iter().map(|&j| self.spins[j] as i32).sum();
        match sum {
            0 => None,
            s if s > 0 => Some(1),
            _ => Some(-1),
        }
    }
}

/// The random decisions a single-site update needs.
pub trait Draws {
    /// `true` with probability `prob`.
    fn bernoulli(&mut self, prob: f64) -> bool;

    fn spin(&mut self) -> i8 {
        if self.bernoulli(0.5) {
            -1
        } else {
            1
        }
    }
}

/// [`Draws`] backed by an RNG.
pub struct RngDraws<R>(pub R);

impl<R: Rng> Draws for RngDraws<R> {
    #[inline]
    fn bernoulli(&mut self, prob: f64) -> bool {
        self.0.random_bool(prob)
    }

    #[inline]
    fn spin(&mut self) -> i8 {
        if self.0.random::<bool>() {
            -1
        } else {
            1
        }
    }
}

/// Noise formulation: strict majority adopted with probability `1 − q`, the
/// minority with probability `q`; uniform on a tie.
#[inline]
pub fn mvc_step_q<D: Draws + ?Sized>(config: &mut SpinConfig, lattice: &Lattice, site: usize, q: f64, draws: &mut D) {
    let s = match config.majority(lattice, site) {
        Some(maj) => {
            if draws.bernoulli(q) {
                -maj
            } else {
                maj
            }
        }
        None => draws.spin(),
    };
    config.set(site, s);
}

/// Probability formulation: with probability `1 − p` a uniform reset,
/// otherwise the strict majority or a uniform reset on a tie.
#[inline]
pub fn mvc_step_p<D: Draws + ?Sized>(config: &mut SpinConfig, lattice: &Lattice, site: usize, p: f64, draws: &mut D) {
    if draws.bernoulli(p) {
        apply_majority(config, lattice, site, draws);
    } else {
        config.set(site, draws.spin());
    }
}

#[inline]
fn apply_majority<D: Draws + ?Sized>(config: &mut SpinConfig, lattice: &Lattice, site: usize, draws: &mut D) {
    let s = match config.majority(lattice, site) {
        Some(m) => m,
        None => draws.spin(),
    };
    config.set(site, s);
}

/// Applies one scheduled event: `MeasureX` resets the spin uniformly, a bond
/// round sets it to the neighbor majority.
#[inline]
pub fn apply_event<D: Draws + ?Sized>(config: &mut SpinConfig, lattice: &Lattice, event: Event, draws: &mut D) {
    match event {
        Event::MeasureX(site) => config.set(site, draws.spin()),
        Event::BondRound(site) => apply_majority(config, lattice, site, draws),
    }
}

/// Replays a fixed branch sequence, recording the probability of the path;
/// used to enumerate a single update exhaustively.
struct BranchWalker {
    path: Vec<bool>,
    pos: usize,
    weight: f64,
}

impl Draws for BranchWalker {
    fn bernoulli(&mut self, prob: f64) -> bool {
        if self.pos == self.path.len() {
            self.path.push(false);
        }
        let b = self.path[self.pos];
        self.pos += 1;
        self.weight *= if b { prob } else { 1.0 - prob };
        b
    }
}

/// Probability that `step` leaves `site` at `+1`, found by walking every
/// branch of its random decisions.
pub fn exact_up_probability(
    config: &SpinConfig,
    site: usize,
    mut step: impl FnMut(&mut SpinConfig, &mut dyn Draws),
) -> f64 {
    let mut total = 0.0;
    let mut path: Vec<bool> = Vec::new();
    loop {
        let mut w = BranchWalker {
            path: std::mem::take(&mut path),
            pos: 0,
            weight: 1.0,
        };
        let mut c = config.clone();
        step(&mut c, &mut w);
        if c.get(site) == 1 {
            total += w.weight;
        }
        path = w.path;
        path.truncate(w.pos);
        // next branch in depth-first order
        while path.last() == Some(&true) {
            path.pop();
        }
        match path.last_mut() {
            Some(b) => *b = true,
            None => break,
        }
    }
    total
}

/// Largest difference between the two formulations' single-site kernels at
/// `q = (1 − p)/2`, over every neighbor pattern and current spin of site 0.
pub fn kernel_discrepancy(lattice: &Lattice, p: f64) -> f64 {
    let q = (1.0 - p) / 2.0;
    let nb = lattice.neighbors(0).to_vec();
    let mut worst: f64 = 0.0;
    for pattern in 0..1usize << nb.len() {
        for own in [1i8, -1] {
            let mut c = SpinConfig::uniform(lattice.sites(), 1);
            c.set(0, own);
            for (k, &j) in nb.iter().enumerate() {
                c.set(j, if pattern >> k & 1 == 1 { -1 } else { 1 });
            }
            let a = exact_up_probability(&c, 0, |c, d| mvc_step_q(c, lattice, 0, q, d));
            let b = exact_up_probability(&c, 0, |c, d| mvc_step_p(c, lattice, 0, p, d));
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Formulation {
    NoiseQ(f64),
    ProbP(f64),
}

impl Formulation {
    /// The `p` of the equivalent probability formulation.
    pub fn equivalent_p(self) -> f64 {
        match self {
            Formulation::NoiseQ(q) => 1.0 - 2.0 * q,
            Formulation::ProbP(p) => p,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvcInitial {
    #[default]
    AllUp,
    AllDown,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvcConfig {
    pub formulation: Formulation,
    pub lattice: Lattice,
    pub sweeps: usize,
    pub initial: MvcInitial,
}

impl MvcConfig {
    pub fn validate(&self) -> Result<()> {
        match self.formulation {
            Formulation::NoiseQ(q) if !(0.0..0.5).contains(&q) => {
                Err(Error::InvalidParameter(format!("noise q = {q} outside [0, 1/2)")))
            }
            Formulation::ProbP(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidParameter(format!("probability p = {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// Final configuration and the magnetization after every sweep (index 0 is
/// the initial state).
#[derive(Clone, Debug, PartialEq)]
pub struct MvcRun {
    pub spins: SpinConfig,
    pub magnetization: Vec<f64>,
}

/// Runs raster-order sweeps. The probability formulation follows the same
/// schedule a circuit trajectory with this stream would see; reset spins
/// come from the stream's outcome generator.
pub fn run_mvc(config: &MvcConfig, stream: RandomStream) -> Result<MvcRun> {
    run_mvc_observed(config, stream, |_, _| {})
}

/// As [`run_mvc`], calling `observe(t, spins)` after every sweep `t ≥ 1`.
pub fn run_mvc_observed(
    config: &MvcConfig,
    stream: RandomStream,
    mut observe: impl FnMut(usize, &SpinConfig),
) -> Result<MvcRun> {
    config.validate()?;
    let lat = &config.lattice;
    let n = lat.sites();
    let mut draws = RngDraws(stream.outcome_rng());
    let mut spins = match config.initial {
        MvcInitial::AllUp => SpinConfig::uniform(n, 1),
        MvcInitial::AllDown => SpinConfig::uniform(n, -1),
        MvcInitial::Random => SpinConfig {
            spins: (0..n).map(|_| draws.spin()).collect(),
        },
    };
    let mut magnetization = Vec::with_capacity(config.sweeps + 1);
    magnetization.push(spins.magnetization());
    match config.formulation {
        Formulation::ProbP(p) => {
            let sched = Schedule::generate_with_order(lat, p, config.sweeps, stream, SiteOrder::Raster)?;
            for t in 0..config.sweeps {
                for e in sched.sweep(t) {
                    apply_event(&mut spins, lat, e, &mut draws);
                }
                magnetization.push(spins.magnetization());
                observe(t + 1, &spins);
            }
        }
        Formulation::NoiseQ(q) => {
            for t in 0..config.sweeps {
                for site in 0..n {
                    mvc_step_q(&mut spins, lat, site, q, &mut draws);
                }
                magnetization.push(spins.magnetization());
                observe(t + 1, &spins);
            }
        }
    }
    Ok(MvcRun { spins, magnetization })
}

/// Writes `trajectory,sweep,m` rows.
pub fn write_history_csv(w: impl Write, runs: &[MvcRun]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trajectory", "sweep", "m"])?;
    for (k, run) in runs.iter().enumerate() {
        for (t, m) in run.magnetization.iter().enumerate() {
            out.write_record([k.to_string(), t.to_string(), m.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Probability of every configuration, evolved exactly. Feasible for small
/// lattices only.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    sites: usize,
    probs: Vec<f64>,
}

impl ExactDistribution {
    pub const MAX_SITES: usize = 16;

    pub fn new(lattice: &Lattice, start: &SpinConfig) -> Result<Self> {
        let n = lattice.sites();
        if n > Self::MAX_SITES || start.len() != n {
            return Err(Error::InvalidParameter(format!(
                "exact distribution needs a matching configuration and at most {} sites",
                Self::MAX_SITES
            )));
        }
        let mut probs = vec![0.0; 1 << n];
        probs[start.index()] = 1.0;
        Ok(ExactDistribution { sites: n, probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn spin(index: usize, i: usize) -> i32 {
        if index >> i & 1 == 1 {
            -1
        } else {
            1
        }
    }

    fn reset(&self, site: usize) -> Vec<f64> {
        let m = 1 << site;
        (0..self.probs.len())
            .map(|a| 0.5 * (self.probs[a] + self.probs[a ^ m]))
            .collect()
    }

    fn majority(&self, lattice: &Lattice, site: usize) -> Vec<f64> {
        let m = 1 << site;
        let mut out = vec![0.0; self.probs.len()];
        for (a, &w) in self.probs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let sum: i32 = lattice.neighbors(site).iter().map(|&j| Self::spin(a, j)).sum();
            let up = a & !m;
            let down = a | m;
            match sum.signum() {
                1 => out[up] += w,
                -1 => out[down] += w,
                _ => {
                    out[up] += 0.5 * w;
                    out[down] += 0.5 * w;
                }
            }
        }
        out
    }

    pub fn apply_event(&mut self, lattice: &Lattice, event: Event) {
        self.probs = match event {
            Event::MeasureX(site) => self.reset(site),
            Event::BondRound(site) => self.majority(lattice, site),
        };
    }

    /// One site update averaged over the schedule: `(1 − p)·reset + p·majority`.
    pub fn apply_mixture(&mut self, lattice: &Lattice, site: usize, p: f64) {
        let r = self.reset(site);
        let f = self.majority(lattice, site);
        self.probs = r.iter().zip(&f).map(|(a, b)| (1.0 - p) * a + p * b).collect();
    }

    pub fn mean_magnetization(&self) -> f64 {
        let n = self.sites as f64;
        self.probs
            .iter()
            .enumerate()
            .map(|(a, &w)| w * (n - 2.0 * a.count_ones() as f64) / n)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixed(Vec<bool>);

    impl Draws for Fixed {
        fn bernoulli(&mut self, _: f64) -> bool {
            self.0.remove(0)
        }
    }

    fn torus_with_neighbors(spins: [i8; 4]) -> (Lattice, SpinConfig) {
        let lat = Lattice::torus(3).unwrap();
        let mut c = SpinConfig::uniform(9, 1);
        // center site 4: left 3, right 5, up 1, down 7
        for (k, &j) in lat.neighbors(4).iter().enumerate() {
            c.set(j, spins[k]);
        }
        (lat, c)
    }

    #[test]
    fn strict_majority_without_noise() {
        let (lat, mut c) = torus_with_neighbors([1, 1, 1, -1]);
        c.set(4, -1);
        mvc_step_q(&mut c, &lat, 4, 0.0, &mut Fixed(vec![false]));
        assert_eq!(c.get(4), 1);
        let (lat, mut c) = torus_with_neighbors([-1, -1, -1, 1]);
        mvc_step_p(&mut c, &lat, 4, 1.0, &mut Fixed(vec![true]));
        assert_eq!(c.get(4), -1);
    }

    #[test]
    fn tie_is_uniform() {
        let (lat, c) = torus_with_neighbors([1, 1, -1, -1]);
        let pq = exact_up_probability(&c, 4, |c, d| mvc_step_q(c, &lat, 4, 0.1, d));
        let pp = exact_up_probability(&c, 4, |c, d| mvc_step_p(c, &lat, 4, 0.8, d));
        assert!((pq - 0.5).abs() < 1e-15 && (pp - 0.5).abs() < 1e-15);
    }

    #[test]
    fn limits() {
        let (lat, c) = torus_with_neighbors([1, 1, 1, 1]);
        let half = exact_up_probability(&c, 4, |c, d| mvc_step_q(c, &lat, 4, 0.5, d));
        assert!((half - 0.5).abs() < 1e-15);
        let reset = exact_up_probability(&c, 4, |c, d| mvc_step_p(c, &lat, 4, 0.0, d));
        assert!((reset - 0.5).abs() < 1e-15);
    }

    #[test]
    fn agree_with_majority_probability() {
        let (lat, c) = torus_with_neighbors([1, 1, 1, -1]);
        for p in [0.0, 0.3, 0.85, 1.0] {
            let up = exact_up_probability(&c, 4, |c, d| mvc_step_p(c, &lat, 4, p, d));
            assert!((up - (p + (1.0 - p) / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn formulations_have_identical_kernels() {
        for lat in [Lattice::ring(4).unwrap(), Lattice::torus(3).unwrap()] {
            for k in 0..=20 {
                let p = k as f64 / 20.0;
                assert!(kernel_discrepancy(&lat, p) < 1e-15, "p = {p}");
            }
        }
    }

    #[test]
    fn fixed_point_at_p_one() {
        let cfg = MvcConfig {
            formulation: Formulation::ProbP(1.0),
            lattice: Lattice::torus(16).unwrap(),
            sweeps: 10,
            initial: MvcInitial::AllUp,
        };
        let run = run_mvc(&cfg, RandomStream::new(1, 1)).unwrap();
        assert!(run.magnetization.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn p_zero_gives_iid_spins() {
        let cfg = MvcConfig {
            formulation: Formulation::ProbP(0.0),
            lattice: Lattice::torus(32).unwrap(),
            sweeps: 3,
            initial: MvcInitial::AllUp,
        };
        let run = run_mvc(&cfg, RandomStream::new(5, 0)).unwrap();
        assert!(run.magnetization.last().unwrap().abs() < 5.0 / 32.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut cfg = MvcConfig {
            formulation: Formulation::NoiseQ(0.5),
            lattice: Lattice::ring(8).unwrap(),
            sweeps: 1,
            initial: MvcInitial::AllUp,
        };
        assert!(run_mvc(&cfg, RandomStream::new(0, 0)).is_err());
        cfg.formulation = Formulation::ProbP(1.5);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn symmetric_start_has_zero_mean() {
        let lat = Lattice::torus(8).unwrap();
        let cfg = MvcConfig {
            formulation: Formulation::NoiseQ(0.1),
            lattice: lat,
            sweeps: 20,
            initial: MvcInitial::Random,
        };
        let ms: Vec<f64> = (0..400)
            .map(|k| {
                *run_mvc(&cfg, RandomStream::new(3, k))
                    .unwrap()
                    .magnetization
                    .last()
                    .unwrap()
            })
            .collect();
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        let var = ms.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (ms.len() - 1) as f64;
        assert!(mean.abs() < 4.0 * (var / ms.len() as f64).sqrt());
    }

    #[test]
    fn exact_distribution_matches_sampling() {
        let lat = Lattice::ring(4).unwrap();
        let stream = RandomStream::new(11, 0);
        let sched = Schedule::generate(&lat, 0.6, 3, stream).unwrap();
        let mut exact = ExactDistribution::new(&lat, &SpinConfig::uniform(4, 1)).unwrap();
        for e in sched.events() {
            exact.apply_event(&lat, e);
        }
        assert!((exact.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 40_000;
        let mut counts = [0usize; 16];
        for _ in 0..trials {
            let mut c = SpinConfig::uniform(4, 1);
            let mut d = RngDraws(&mut rng);
            for e in sched.events() {
                apply_event(&mut c, &lat, e, &mut d);
            }
            counts[c.index()] += 1;
        }
        for (a, &k) in counts.iter().enumerate() {
            let f = k as f64 / trials as f64;
            let pr = exact.probs()[a];
            assert!((f - pr).abs() < 5.0 * (pr * (1.0 - pr) / trials as f64).sqrt() + 1e-9);
        }
    }

    #[test]
    fn history_csv() {
        let run = MvcRun {
            spins: SpinConfig::uniform(2, 1),
            magnetization: vec![1.0, 0.0],
        };
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &[run]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "trajectory,sweep,m\n0,0,1\n0,1,0\n");
    }
}
