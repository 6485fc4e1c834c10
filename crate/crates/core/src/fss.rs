//! Finite-size scaling: crossing points and data collapse.
//!
//! Collapse quality follows Houdayer and Hartmann: every rescaled point is
//! compared with a weighted local-linear fit through the nearest points of
//! the other curves, three on each side, and the squared residuals are
//! normalized by the combined variance. A perfect collapse of noisy data
//! scores about one.

use std::io::Write;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{CsvRow, SweepResult};
use crate::error::{Error, Result};
use crate::observables::Observable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub p: f64,
    pub y: f64,
    pub stderr: f64,
}

/// One system size's observable as a function of `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub size: usize,
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    pub fn new(size: usize, points: Vec<ScalingPoint>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].p <= w[0].p) {
            return Err(Error::Fss(format!(
                "p values of the L = {size} curve are not strictly increasing"
            )));
        }
        if points.iter().any(|pt| pt.stderr.is_nan() || pt.stderr < 0.0 || !pt.y.is_finite()) {
            return Err(Error::Fss(format!("invalid value or stderr in the L = {size} curve")));
        }
        Ok(ScalingCurve { size, points })
    }

    pub fn p_range(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.p, self.points.last()?.p))
    }

    /// Cubic Lagrange interpolation through the four grid points around `p`
    /// (fewer near a short curve); `None` outside the grid.
    pub fn interpolate(&self, p: f64) -> Option<f64> {
        let (lo, hi) = self.p_range()?;
        if p < lo || p > hi {
            return None;
        }
        let n = self.points.len();
        if n == 1 {
            return Some(self.points[0].y);
        }
        let i = self.points.partition_point(|pt| pt.p <= p).clamp(1, n - 1) - 1;
        let start = i.saturating_sub(1).min(n.saturating_sub(4));
        let stencil = &self.points[start..(start + 4).min(n)];
        let mut y = 0.0;
        for (a, pa) in stencil.iter().enumerate() {
            let mut w = 1.0;
            for (b, pb) in stencil.iter().enumerate() {
                if a != b {
                    w *= (p - pb.p) / (pa.p - pb.p);
                }
            }
            y += w * pa.y;
        }
        Some(y)
    }

    fn perturbed(&self, rng: &mut ChaCha8Rng) -> ScalingCurve {
        let points = self
            .points
            .iter()
            .map(|pt| {
                let y = if pt.stderr > 0.0 {
                    Normal::new(pt.y, pt.stderr).unwrap().sample(rng)
                } else {
                    pt.y
                };
                ScalingPoint { y, ..*pt }
            })
            .collect();
        ScalingCurve {
            size: self.size,
            points,
        }
    }
}

/// Groups rows of one observable into curves ordered by `L`.
pub fn curves_from_rows(rows: &[CsvRow], observable: Observable) -> Result<Vec<ScalingCurve>> {
    let name = observable.name();
    let mut by_size: std::collections::BTreeMap<usize, Vec<ScalingPoint>> = Default::default();
    let mut dims = rows.iter().filter(|r| r.observable == name).map(|r| r.dimension);
    if let Some(d) = dims.next() {
        if dims.any(|e| e != d) {
            return Err(Error::Fss("rows mix dimensions".into()));
        }
    }
    for r in rows.iter().filter(|r| r.observable == name) {
        by_size.entry(r.size).or_default().push(ScalingPoint {
            p: r.p,
            y: r.mean,
            stderr: r.stderr,
        });
    }
    by_size
        .into_iter()
        .map(|(size, mut pts)| {
            pts.sort_by(|a, b| a.p.total_cmp(&b.p));
            ScalingCurve::new(size, pts)
        })
        .collect()
}

pub fn curves_from_sweep(result: &SweepResult, observable: Observable) -> Result<Vec<ScalingCurve>> {
    let mut by_size: std::collections::BTreeMap<usize, Vec<ScalingPoint>> = Default::default();
    for pt in &result.points {
        if let Some(e) = pt.get(observable) {
            by_size.entry(pt.size).or_default().push(ScalingPoint {
                p: pt.p,
                y: e.mean,
                stderr: e.stderr,
            });
        }
    }
    by_size
        .into_iter()
        .map(|(size, mut pts)| {
            pts.sort_by(|a, b| a.p.total_cmp(&b.p));
            ScalingCurve::new(size, pts)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingOptions {
    pub bootstrap: usize,
    pub seed: u64,
    /// Restricts the search to `[lo, hi]`.
    pub window: Option<(f64, f64)>,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions {
            bootstrap: 200,
            seed: 0,
            window: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCrossing {
    pub sizes: (usize, usize),
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingResult {
    /// Mean of the pairwise crossings.
    pub p_c: f64,
    /// Bootstrap standard deviation of `p_c`.
    pub error: f64,
    /// Largest minus smallest pairwise crossing.
    pub spread: f64,
    pub pairs: Vec<PairCrossing>,
    pub bootstrap: usize,
    pub bootstrap_failures: usize,
}

/// Crossing of two curves: among the sign changes of their interpolated
/// difference on the merged grid, the one where the difference changes
/// fastest.
fn pair_crossing(a: &ScalingCurve, b: &ScalingCurve, window: Option<(f64, f64)>) -> Option<f64> {
    let (alo, ahi) = a.p_range()?;
    let (blo, bhi) = b.p_range()?;
    let (mut lo, mut hi) = (alo.max(blo), ahi.min(bhi));
    if let Some((wlo, whi)) = window {
        lo = lo.max(wlo);
        hi = hi.min(whi);
    }
    if lo >= hi {
        return None;
    }
    let diff = |p: f64| Some(b.interpolate(p)? - a.interpolate(p)?);
    let mut grid: Vec<f64> = a
        .points
        .iter()
        .chain(&b.points)
        .map(|pt| pt.p)
        .filter(|&p| p >= lo && p <= hi)
        .chain([lo, hi])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let d: Vec<f64> = grid.iter().map(|&p| diff(p)).collect::<Option<_>>()?;

    let mut best: Option<(f64, f64)> = None;
    let mut last: Option<usize> = None;
    for k in 0..grid.len() {
        if d[k] == 0.0 {
            continue;
        }
        if let Some(j) = last {
            if d[j].signum() != d[k].signum() {
                let p = if k == j + 1 {
                    bisect(&diff, grid[j], grid[k], d[j])
                } else {
                    // zeros at the grid points strictly between
                    grid[j + 1..k].iter().sum::<f64>() / (k - j - 1) as f64
                };
                let slope = (d[k] - d[j]).abs() / (grid[k] - grid[j]);
                if best.is_none_or(|(_, s)| slope > s) {
                    best = Some((p, slope));
                }
            }
        }
        last = Some(k);
    }
    best.map(|(p, _)| p)
}

fn bisect(f: &impl Fn(f64) -> Option<f64>, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid).unwrap_or(0.0);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn crossings(curves: &[ScalingCurve], window: Option<(f64, f64)>) -> Vec<PairCrossing> {
    let mut out = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            if let Some(p) = pair_crossing(&curves[i], &curves[j], window) {
                out.push(PairCrossing {
                    sizes: (curves[i].size, curves[j].size),
                    p,
                });
            }
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn sample_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Pairwise crossings of the curves, aggregated, with a parametric bootstrap
/// over the points' standard errors.
pub fn find_crossing(curves: &[ScalingCurve], options: &CrossingOptions) -> Result<CrossingResult> {
    if curves.len() < 2 {
        return Err(Error::Fss("a crossing needs at least two curves".into()));
    }
    let pairs = crossings(curves, options.window);
    if pairs.is_empty() {
        return Err(Error::Fss("no crossing in window".into()));
    }
    let ps: Vec<f64> = pairs.iter().map(|c| c.p).collect();
    let p_c = mean(&ps);
    let spread =
        ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ps.iter().cloned().fold(f64::INFINITY, f64::min);
    let samples: Vec<Option<f64>> = (0..options.bootstrap as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(options.seed, k);
            let noisy: Vec<ScalingCurve> = curves.iter().map(|c| c.perturbed(&mut rng)).collect();
            let cs = crossings(&noisy, options.window);
            (!cs.is_empty()).then(|| mean(&cs.iter().map(|c| c.p).collect::<Vec<_>>()))
        })
        .collect();
    let ok: Vec<f64> = samples.iter().flatten().copied().collect();
    Ok(CrossingResult {
        p_c,
        error: std_dev(&ok),
        spread,
        pairs,
        bootstrap: ok.len(),
        bootstrap_failures: samples.len() - ok.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub p_c: f64,
    pub nu: f64,
    /// Zero for dimensionless observables.
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledPoint {
    pub size: usize,
    pub x: f64,
    pub y: f64,
    pub stderr: f64,
}

/// `x = (p − p_c) L^{1/ν}`, `y·L^{β/ν}`; points with zero standard error
/// are dropped.
pub fn rescale(curves: &[ScalingCurve], params: ScalingParams) -> Vec<RescaledPoint> {
    let mut out = Vec::new();
    for c in curves {
        let l = c.size as f64;
        let sx = l.powf(1.0 / params.nu);
        let sy = l.powf(params.beta / params.nu);
        for pt in c.points.iter().filter(|pt| pt.stderr > 0.0) {
            out.push(RescaledPoint {
                size: c.size,
                x: (pt.p - params.p_c) * sx,
                y: pt.y * sy,
                stderr: pt.stderr * sy,
            });
        }
    }
    out
}

pub fn write_rescaled_csv(w: impl Write, points: &[RescaledPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["L", "x", "y", "stderr"])?;
    for pt in points {
        out.write_record([
            pt.size.to_string(),
            pt.x.to_string(),
            pt.y.to_string(),
            pt.stderr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Neighbors on each side taken into a local master-curve fit.
pub const NEIGHBORS_PER_SIDE: usize = 3;

/// Mean normalized squared residual of each point against a local fit of
/// the other curves. Fails with fewer than two curves or no overlap.
pub fn collapse_quality(curves: &[ScalingCurve], params: ScalingParams) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::Fss("collapse needs at least two curves".into()));
    }
    if params.nu.is_nan() || params.nu <= 0.0 {
        return Err(Error::Fss(format!("nu = {} must be positive", params.nu)));
    }
    let mut pts = rescale(curves, params);
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut left = Vec::with_capacity(NEIGHBORS_PER_SIDE);
    let mut right = Vec::with_capacity(NEIGHBORS_PER_SIDE);
    for (i, pt) in pts.iter().enumerate() {
        left.clear();
        right.clear();
        for q in pts[..i].iter().rev() {
            if left.len() == NEIGHBORS_PER_SIDE {
                break;
            }
            if q.size != pt.size {
                left.push(q);
            }
        }
        for q in &pts[i + 1..] {
            if right.len() == NEIGHBORS_PER_SIDE {
                break;
            }
            if q.size != pt.size {
                right.push(q);
            }
        }
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let (mut k, mut kx, mut ky, mut kxx, mut kxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for q in left.iter().chain(&right) {
            let w = 1.0 / (q.stderr * q.stderr);
            k += w;
            kx += w * q.x;
            ky += w * q.y;
            kxx += w * q.x * q.x;
            kxy += w * q.x * q.y;
        }
        let det = k * kxx - kx * kx;
        if det.is_nan() || det <= 0.0 {
            continue;
        }
        let x = pt.x;
        let fit = (kxx * ky - kx * kxy) / det + x * (k * kxy - kx * ky) / det;
        let var = (kxx - 2.0 * x * kx + x * x * k) / det;
        sum += (pt.y - fit).powi(2) / (pt.stderr * pt.stderr + var);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Fss("curves do not overlap after rescaling".into()));
    }
    Ok(sum / count as f64)
}

/// A collapse parameter, fixed or searched within bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Fixed(f64),
    Free { lo: f64, hi: f64 },
}

impl Param {
    fn is_free(self) -> bool {
        matches!(self, Param::Free { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseSpec {
    pub p_c: Param,
    pub nu: Param,
    pub beta: Param,
    /// Grid points per free parameter for the initial search.
    pub grid: usize,
    pub bootstrap: usize,
    /// Two-sided level of the percentile intervals.
    pub ci_level: f64,
    pub seed: u64,
}

impl CollapseSpec {
    pub fn new(p_c: Param, nu: Param, beta: Param) -> Self {
        CollapseSpec {
            p_c,
            nu,
            beta,
            grid: 9,
            bootstrap: 200,
            ci_level: 0.95,
            seed: 0,
        }
    }

    fn params(&self) -> [Param; 3] {
        [self.p_c, self.nu, self.beta]
    }

    fn free(&self) -> Vec<usize> {
        (0..3).filter(|&k| self.params()[k].is_free()).collect()
    }

    fn assemble(&self, free: &[usize], x: &[f64]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (k, p) in self.params().iter().enumerate() {
            if let Param::Fixed(f) = p {
                v[k] = *f;
            }
        }
        for (slot, &k) in free.iter().enumerate() {
            v[k] = x[slot];
        }
        v
    }

    fn validate(&self) -> Result<()> {
        for p in self.params() {
            if let Param::Free { lo, hi } = p {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(Error::Fss(format!("empty bounds [{lo}, {hi}]")));
                }
            }
        }
        if self.grid < 2 && !self.free().is_empty() {
            return Err(Error::Fss("grid needs at least two points per parameter".into()));
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::Fss("ci_level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub p_c: f64,
    pub nu: f64,
    pub beta: f64,
    pub quality: f64,
    /// False when a free parameter ends on its bound.
    pub converged: bool,
    pub at_bound: Vec<String>,
    /// Percentile intervals of the free parameters; `None` for fixed ones.
    pub ci_p_c: Option<Interval>,
    pub ci_nu: Option<Interval>,
    pub ci_beta: Option<Interval>,
    pub ci_level: f64,
    pub bootstrap: usize,
    pub bootstrap_failures: usize,
}

impl CollapseResult {
    pub fn params(&self) -> ScalingParams {
        ScalingParams {
            p_c: self.p_c,
            nu: self.nu,
            beta: self.beta,
        }
    }

    /// Whether every free parameter's interval covers the given value.
    pub fn covers(&self, truth: ScalingParams) -> bool {
        [
            (self.ci_p_c, truth.p_c),
            (self.ci_nu, truth.nu),
            (self.ci_beta, truth.beta),
        ]
        .iter()
        .all(|(ci, v)| ci.is_none_or(|c| c.contains(*v)))
    }
}

const NAMES: [&str; 3] = ["p_c", "nu", "beta"];
const OUTSIDE: f64 = 1e30;

struct Objective<'a> {
    curves: &'a [ScalingCurve],
    spec: &'a CollapseSpec,
    free: &'a [usize],
}

impl Objective<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        for (slot, &k) in self.free.iter().enumerate() {
            if let Param::Free { lo, hi } = self.spec.params()[k] {
                if x[slot] < lo || x[slot] > hi {
                    return OUTSIDE;
                }
            }
        }
        let v = self.spec.assemble(self.free, x);
        collapse_quality(
            self.curves,
            ScalingParams {
                p_c: v[0],
                nu: v[1],
                beta: v[2],
            },
        )
        .unwrap_or(OUTSIDE)
    }
}

fn simplex(obj: &Objective, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let params = obj.spec.params();
    let mut vertices = vec![start.to_vec()];
    for (slot, &k) in obj.free.iter().enumerate() {
        if let Param::Free { lo, hi } = params[k] {
            let step = 0.05 * (hi - lo);
            let mut v = start.to_vec();
            // step inward so the simplex starts inside the bounds
            v[slot] = if v[slot] + step <= hi {
                v[slot] + step
            } else {
                v[slot] - step
            };
            vertices.push(v);
        }
    }
    let solver = NelderMead::new(vertices)
        .with_sd_tolerance(1e-10)
        .map_err(|e| Error::Fss(e.to_string()))?;
    let res = Executor::new(obj, solver)
        .configure(|s| s.max_iters(600))
        .run()
        .map_err(|e| Error::Fss(e.to_string()))?;
    let state = res.state();
    let best = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    Ok((best, state.get_best_cost()))
}

impl CostFunction for &Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(x))
    }
}

fn refine(obj: &Objective, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (x, _) = simplex(obj, start)?;
    // one restart to escape a collapsed simplex
    simplex(obj, &x)
}

fn grid_search(obj: &Objective) -> (Vec<f64>, f64) {
    let params = obj.spec.params();
    let axes: Vec<Vec<f64>> = obj
        .free
        .iter()
        .map(|&k| match params[k] {
            Param::Free { lo, hi } => (0..obj.spec.grid)
                .map(|g| lo + (hi - lo) * g as f64 / (obj.spec.grid - 1) as f64)
                .collect(),
            Param::Fixed(_) => unreachable!(),
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let best = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let x: Vec<f64> = axes
                .iter()
                .map(|a| {
                    let v = a[idx % a.len()];
                    idx /= a.len();
                    v
                })
                .collect();
            let q = obj.eval(&x);
            (x, q)
        })
        .reduce_with(|a, b| if b.1 < a.1 { b } else { a });
    best.unwrap_or_else(|| (Vec::new(), obj.eval(&[])))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Grid search followed by simplex refinement, then a parametric bootstrap
/// that repeats the full search on every resample.
pub fn optimize_collapse(curves: &[ScalingCurve], spec: &CollapseSpec) -> Result<CollapseResult> {
    spec.validate()?;
    if curves.len() < 2 {
        return Err(Error::Fss("collapse needs at least two curves".into()));
    }
    let free = spec.free();
    let obj = Objective {
        curves,
        spec,
        free: &free,
    };
    let (x, quality) = if free.is_empty() {
        (Vec::new(), obj.eval(&[]))
    } else {
        let (start, _) = grid_search(&obj);
        refine(&obj, &start)?
    };
    if quality >= OUTSIDE {
        return Err(Error::Fss(
            "no parameters inside the bounds give overlapping curves".into(),
        ));
    }
    let v = spec.assemble(&free, &x);
    let params = spec.params();
    let at_bound: Vec<String> = free
        .iter()
        .enumerate()
        .filter(|&(slot, &k)| match params[k] {
            Param::Free { lo, hi } => {
                let tol = 1e-3 * (hi - lo);
                x[slot] - lo < tol || hi - x[slot] < tol
            }
            Param::Fixed(_) => false,
        })
        .map(|(_, &k)| NAMES[k].to_string())
        .collect();

    let samples: Vec<Option<Vec<f64>>> = if free.is_empty() {
        Vec::new()
    } else {
        (0..spec.bootstrap as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = sample_rng(spec.seed, b);
                let noisy: Vec<ScalingCurve> = curves.iter().map(|c| c.perturbed(&mut rng)).collect();
                let o = Objective {
                    curves: &noisy,
                    spec,
                    free: &free,
                };
                let (start, _) = grid_search(&o);
                refine(&o, &start).ok().filter(|(_, q)| *q < OUTSIDE).map(|(xb, _)| xb)
            })
            .collect()
    };
    let ok: Vec<&Vec<f64>> = samples.iter().flatten().collect();
    let mut cis: [Option<Interval>; 3] = [None; 3];
    if !ok.is_empty() {
        let tail = (1.0 - spec.ci_level) / 2.0;
        for (slot, &k) in free.iter().enumerate() {
            let mut vals: Vec<f64> = ok.iter().map(|s| s[slot]).collect();
            vals.sort_by(f64::total_cmp);
            cis[k] = Some(Interval {
                lo: quantile(&vals, tail),
                hi: quantile(&vals, 1.0 - tail),
            });
        }
    }
    Ok(CollapseResult {
        p_c: v[0],
        nu: v[1],
        beta: v[2],
        quality,
        converged: at_bound.is_empty(),
        at_bound,
        ci_p_c: cis[0],
        ci_nu: cis[1],
        ci_beta: cis[2],
        ci_level: spec.ci_level,
        bootstrap: ok.len(),
        bootstrap_failures: samples.len() - ok.len(),
    })
}

/// Curves sampled from `y = L^{−β/ν} f((p − p_c) L^{1/ν})` with Gaussian
/// noise of relative size `noise` (absolute floor `1e-4`).
pub fn synthetic_curves(
    truth: ScalingParams,
    sizes: &[usize],
    ps: &[f64],
    f: impl Fn(f64) -> f64,
    noise: f64,
    seed: u64,
) -> Vec<ScalingCurve> {
    let mut rng = sample_rng(seed, u64::MAX);
    sizes
        .iter()
        .map(|&l| {
            let lf = l as f64;
            let points = ps
                .iter()
                .map(|&p| {
                    let x = (p - truth.p_c) * lf.powf(1.0 / truth.nu);
                    let y = lf.powf(-truth.beta / truth.nu) * f(x);
                    let stderr = (noise * y.abs()).max(1e-4);
                    let y = y + Normal::new(0.0, stderr).unwrap().sample(&mut rng);
                    ScalingPoint { p, y, stderr }
                })
                .collect();
            ScalingCurve { size: l, points }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(size: usize, slope: f64) -> ScalingCurve {
        let points = (0..11)
            .map(|k| {
                let p = 0.3 + 0.02 * k as f64;
                ScalingPoint {
                    p,
                    y: slope * (p - 0.4),
                    stderr: 0.01,
                }
            })
            .collect();
        ScalingCurve::new(size, points).unwrap()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    fn magnetization_like(x: f64) -> f64 {
        // smooth, positive, increasing
        1.0 / (1.0 + (-1.5 * x).exp())
    }

    #[test]
    fn lines_cross_exactly() {
        let r = find_crossing(
            &[line(8, 1.0), line(16, 2.0)],
            &CrossingOptions {
                bootstrap: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.p_c - 0.4).abs() < 1e-12, "{}", r.p_c);
        assert!(r.error < 0.02);
    }

    #[test]
    fn crossing_between_grid_points() {
        let mut a = line(8, 1.0);
        let mut b = line(16, 2.0);
        a.points.iter_mut().for_each(|pt| pt.y -= 0.0123);
        b.points.iter_mut().for_each(|pt| pt.y -= 0.0246);
        // b - a = (p - 0.4) - 0.0123 vanishes at 0.4123
        let r = find_crossing(
            &[a, b],
            &CrossingOptions {
                bootstrap: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.p_c - 0.4123).abs() < 1e-10);
    }

    #[test]
    fn identical_curves_do_not_cross() {
        let err = find_crossing(&[line(8, 1.0), line(16, 1.0)], &CrossingOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no crossing"));
        assert!(find_crossing(&[line(8, 1.0)], &CrossingOptions::default()).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_cubics() {
        let f = |p: f64| 2.0 * p.powi(3) - p + 0.5;
        let c = ScalingCurve::new(
            4,
            grid(0.0, 1.0, 7)
                .into_iter()
                .map(|p| ScalingPoint {
                    p,
                    y: f(p),
                    stderr: 0.1,
                })
                .collect(),
        )
        .unwrap();
        for p in [0.0, 0.05, 0.33, 0.71, 1.0] {
            assert!((c.interpolate(p).unwrap() - f(p)).abs() < 1e-12);
        }
        assert!(c.interpolate(1.01).is_none());
    }

    #[test]
    fn crossing_converges_with_grid_refinement() {
        let truth = ScalingParams {
            p_c: 0.413,
            nu: 1.3,
            beta: 0.0,
        };
        let f = |x: f64| 0.3 + x.tanh();
        let mut errs = Vec::new();
        for n in [4, 31] {
            let cs = synthetic_curves(truth, &[64, 128], &grid(0.35, 0.47, n), f, 0.0, 1);
            let r = find_crossing(
                &cs,
                &CrossingOptions {
                    bootstrap: 0,
                    ..Default::default()
                },
            )
            .unwrap();
            errs.push((r.p_c - truth.p_c).abs());
        }
        assert!(errs[1] < errs[0] && errs[1] < 1e-4, "{errs:?}");
    }

    #[test]
    fn quality_is_one_at_truth_and_grows_off_truth() {
        let truth = ScalingParams {
            p_c: 0.85,
            nu: 1.0,
            beta: 0.125,
        };
        let cs = synthetic_curves(
            truth,
            &[12, 16, 24, 32],
            &grid(0.78, 0.92, 29),
            magnetization_like,
            0.01,
            3,
        );
        let q0 = collapse_quality(&cs, truth).unwrap();
        assert!((0.5..2.0).contains(&q0), "{q0}");
        let q1 = collapse_quality(&cs, ScalingParams { nu: 1.3, ..truth }).unwrap();
        assert!(q1 >= 2.0 * q0, "{q0} {q1}");
    }

    #[test]
    fn quality_needs_two_curves() {
        let truth = ScalingParams {
            p_c: 0.85,
            nu: 1.0,
            beta: 0.0,
        };
        let cs = synthetic_curves(truth, &[12], &grid(0.8, 0.9, 5), magnetization_like, 0.01, 0);
        assert!(collapse_quality(&cs, truth).is_err());
    }

    #[test]
    fn quality_invariances() {
        let truth = ScalingParams {
            p_c: 0.85,
            nu: 1.0,
            beta: 0.125,
        };
        let cs = synthetic_curves(truth, &[12, 16, 24], &grid(0.8, 0.9, 11), magnetization_like, 0.02, 4);
        let trial = ScalingParams {
            p_c: 0.84,
            nu: 1.1,
            beta: 0.1,
        };
        let q = collapse_quality(&cs, trial).unwrap();
        let mut rev = cs.clone();
        rev.reverse();
        assert!((collapse_quality(&rev, trial).unwrap() - q).abs() < 1e-12 * q.max(1.0));
        let scaled: Vec<ScalingCurve> = cs
            .iter()
            .map(|c| ScalingCurve {
                size: c.size,
                points: c
                    .points
                    .iter()
                    .map(|pt| ScalingPoint {
                        stderr: 2.0 * pt.stderr,
                        ..*pt
                    })
                    .collect(),
            })
            .collect();
        assert!((collapse_quality(&scaled, trial).unwrap() - q / 4.0).abs() < 1e-10 * q.max(1.0));
        let free = CollapseSpec {
            bootstrap: 0,
            ..CollapseSpec::new(
                Param::Free { lo: 0.8, hi: 0.9 },
                Param::Free { lo: 0.5, hi: 2.0 },
                Param::Free { lo: 0.0, hi: 0.4 },
            )
        };
        let a = optimize_collapse(&cs, &free).unwrap();
        let b = optimize_collapse(&scaled, &free).unwrap();
        assert!(
            (a.p_c - b.p_c).abs() < 1e-3 && (a.nu - b.nu).abs() < 1e-2,
            "{a:?} {b:?}"
        );
    }

    #[test]
    fn recovers_planted_parameters() {
        let truth = ScalingParams {
            p_c: 0.85,
            nu: 1.0,
            beta: 0.125,
        };
        let cs = synthetic_curves(truth, &[12, 16, 24], &grid(0.8, 0.9, 11), magnetization_like, 0.01, 5);
        let spec = CollapseSpec::new(
            Param::Free { lo: 0.8, hi: 0.9 },
            Param::Free { lo: 0.5, hi: 2.0 },
            Param::Free { lo: 0.0, hi: 0.4 },
        );
        let r = optimize_collapse(&cs, &spec).unwrap();
        assert!(r.converged);
        assert!(
            (r.p_c - 0.85).abs() < 0.01 && (r.nu - 1.0).abs() < 0.2 && (r.beta - 0.125).abs() < 0.05,
            "{r:?}"
        );
        assert_eq!(r.bootstrap + r.bootstrap_failures, 200);
        assert!(r.ci_nu.unwrap().lo <= r.nu && r.nu <= r.ci_nu.unwrap().hi);
    }

    #[test]
    fn boundary_optimum_is_flagged() {
        let truth = ScalingParams {
            p_c: 0.85,
            nu: 1.0,
            beta: 0.0,
        };
        let cs = synthetic_curves(truth, &[12, 16, 24], &grid(0.8, 0.9, 11), magnetization_like, 0.01, 6);
        let spec = CollapseSpec {
            bootstrap: 0,
            ..CollapseSpec::new(Param::Free { lo: 0.86, hi: 0.9 }, Param::Fixed(1.0), Param::Fixed(0.0))
        };
        let r = optimize_collapse(&cs, &spec).unwrap();
        assert!(!r.converged && r.at_bound == vec!["p_c".to_string()], "{r:?}");
    }

    #[test]
    fn fixed_parameters_are_kept() {
        let truth = ScalingParams {
            p_c: 0.4,
            nu: 4.0 / 3.0,
            beta: 0.0,
        };
        let cs = synthetic_curves(truth, &[32, 64, 128], &grid(0.3, 0.5, 11), |x| (-x * x).exp(), 0.02, 7);
        let spec = CollapseSpec {
            bootstrap: 20,
            ..CollapseSpec::new(
                Param::Free { lo: 0.3, hi: 0.5 },
                Param::Fixed(4.0 / 3.0),
                Param::Fixed(0.0),
            )
        };
        let r = optimize_collapse(&cs, &spec).unwrap();
        assert_eq!((r.nu, r.beta), (4.0 / 3.0, 0.0));
        assert!(r.ci_nu.is_none() && r.ci_p_c.is_some());
        assert!((r.p_c - 0.4).abs() < 0.01);
    }

    #[test]
    fn rescaled_csv() {
        let pts = [RescaledPoint {
            size: 8,
            x: -0.5,
            y: 0.25,
            stderr: 0.125,
        }];
        let mut buf = Vec::new();
        write_rescaled_csv(&mut buf, &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "L,x,y,stderr\n8,-0.5,0.25,0.125\n");
    }

    #[test]
    fn rejects_unsorted_curves() {
        let pts = vec![
            ScalingPoint {
                p: 0.5,
                y: 0.0,
                stderr: 0.1,
            },
            ScalingPoint {
                p: 0.4,
                y: 0.0,
                stderr: 0.1,
            },
        ];
        assert!(ScalingCurve::new(8, pts).is_err());
    }
}
