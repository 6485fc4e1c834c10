//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release -p adaptive-ising --test acceptance`.

use std::time::{Duration, Instant};

use adaptive_ising::ensemble::{run_sweep, Engine, RunConfig, SweepResult, Sweeps};
use adaptive_ising::fss::{
    curves_from_sweep, find_crossing, optimize_collapse, synthetic_curves, CollapseResult, CollapseSpec,
    CrossingOptions, Param, ScalingCurve, ScalingParams,
};
use adaptive_ising::lattice::{Dimension, Lattice};
use adaptive_ising::mvc::{kernel_discrepancy, run_mvc, Formulation, MvcConfig, MvcInitial};
use adaptive_ising::observables::Observable;
use adaptive_ising::schedule::RandomStream;
use adaptive_ising::verify::{verify_channels, verify_equivalence, verify_oracles};

struct Outcome {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { id, passed, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n)
        .map(|k| ((start + step * k as f64) * 1e6).round() / 1e6)
        .collect()
}

fn collapse(curves: &[ScalingCurve], p_c: Param, nu: Param, beta: Param, bootstrap: usize) -> CollapseResult {
    let spec = CollapseSpec {
        bootstrap,
        ..CollapseSpec::new(p_c, nu, beta)
    };
    optimize_collapse(curves, &spec).expect("collapse")
}

fn c1() -> Outcome {
    let t = Instant::now();
    let r = verify_channels(&[1, 2, 4], 200, 1).unwrap();
    let el = t.elapsed();
    let dev = r
        .relations
        .iter()
        .map(|x| x.x_d_vs_d_t.max(x.d_f_vs_f_d))
        .fold(0.0, f64::max);
    outcome(
        "1",
        r.passed && dev < 1e-10 && within(el, 30),
        format!(
            "channel identities n=1,2,4, max deviation {dev:.2e} (< 1e-10), {:.1} s (< 30 s)",
            el.as_secs_f64()
        ),
    )
}

fn c2() -> Outcome {
    let t = Instant::now();
    let r = verify_equivalence(&[4, 5], &[0.2, 0.5, 0.8], 6, 100, 2).unwrap();
    let el = t.elapsed();
    let fixed = r
        .reductions
        .iter()
        .map(|x| x.fixed_schedule_distance)
        .fold(0.0, f64::max);
    let avg = r.reductions.iter().map(|x| x.averaged_distance).fold(0.0, f64::max);
    outcome(
        "2",
        r.passed && fixed < 1e-9 && avg < 1e-9 && within(el, 120),
        format!(
            "quantum-classical reduction n=4,5, fixed-schedule {fixed:.2e}, averaged {avg:.2e} (< 1e-9), {:.1} s (< 120 s)",
            el.as_secs_f64()
        ),
    )
}

fn c3() -> Outcome {
    let t = Instant::now();
    let a = verify_oracles(&Lattice::ring(12).unwrap(), 24, 500, 3).unwrap();
    let b = verify_oracles(&Lattice::torus(4).unwrap(), 16, 500, 4).unwrap();
    let el = t.elapsed();
    let mismatches = |r: &adaptive_ising::verify::OracleReport| {
        r.state_mismatches + r.observable_mismatches + r.percolation_mismatches + r.replay_failures
    };
    let total = mismatches(&a) + mismatches(&b);
    outcome(
        "3",
        a.passed && b.passed && total == 0 && within(el, 120),
        format!(
            "engine equivalence 1d L=12 and 2d L=4, {} tapes, {total} mismatches, {:.1} s (< 120 s)",
            a.tapes + b.tapes,
            el.as_secs_f64()
        ),
    )
}

/// 1d sweep shared by criteria 4 and 5.
fn sweep_1d() -> SweepResult {
    let mut ps = range(0.30, 0.50, 0.02);
    ps.extend([0.395, 0.405, 0.41, 0.415, 0.425]);
    ps.sort_by(f64::total_cmp);
    let config = RunConfig::new(Engine::Cluster, Dimension::One, vec![32, 64, 128], ps, 2000, 40);
    run_sweep(&config).unwrap()
}

fn c4(sweep: &SweepResult, el: Duration) -> (Outcome, f64) {
    let curves = curves_from_sweep(sweep, Observable::TripartiteInfo).unwrap();
    let crossing = find_crossing(
        &curves,
        &CrossingOptions {
            bootstrap: 200,
            seed: 41,
            window: None,
        },
    );
    let (p_e, pairs) = match &crossing {
        Ok(c) => (c.p_c, c.pairs.len()),
        Err(_) => (f64::NAN, 0),
    };
    let free = collapse(
        &curves,
        Param::Free { lo: 0.35, hi: 0.45 },
        Param::Free { lo: 0.5, hi: 3.0 },
        Param::Fixed(0.0),
        200,
    );
    let fixed = collapse(
        &curves,
        Param::Free { lo: 0.35, hi: 0.45 },
        Param::Fixed(4.0 / 3.0),
        Param::Fixed(0.0),
        0,
    );
    let ratio = fixed.quality / free.quality;
    let passed =
        pairs == 3 && (0.37..=0.44).contains(&p_e) && ratio <= 2.0 && (1.0..=1.7).contains(&free.nu) && free.converged;
    (
        outcome(
            "4",
            passed,
            format!(
                "1d I(A:B:C) crossing p_E = {p_e:.4} from {pairs}/3 pairs (in [0.37, 0.44]), free nu = {:.3} (in [1.0, 1.7]), \
                 Q(nu=4/3)/Q(free) = {ratio:.3} (<= 2), sweep {:.0} s",
                free.nu,
                el.as_secs_f64()
            ),
        ),
        p_e,
    )
}

/// First p at which the curve falls through one half, by linear interpolation.
fn half_height(curve: &ScalingCurve) -> Option<f64> {
    curve.points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.y >= 0.5 && b.y < 0.5).then(|| a.p + (a.y - 0.5) / (a.y - b.y) * (b.p - a.p))
    })
}

fn c5(sweep: &SweepResult, p_e: f64) -> Outcome {
    let u = |p: f64| {
        sweep
            .point(128, p)
            .and_then(|pt| pt.get(Observable::AbsU))
            .map_or(f64::NAN, |e| e.mean)
    };
    let (low, high) = (u(0.30), u(0.50));
    let curves = curves_from_sweep(sweep, Observable::AbsU).unwrap();
    let halves: Vec<f64> = curves.iter().map(|c| half_height(c).unwrap_or(f64::NAN)).collect();
    let gaps: Vec<f64> = halves.iter().map(|h| (h - p_e).abs()).collect();
    let drifting = gaps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        "5",
        low > 0.99 && high < 0.02 && drifting,
        format!(
            "|<U>| at L=128: {low:.4} at p=0.30 (> 0.99), {high:.4} at p=0.50 (< 0.02); half-height p for L=32,64,128 = \
             {:.4}, {:.4}, {:.4}, distance to p_E = {:.4}, {:.4}, {:.4} (decreasing)",
            halves[0], halves[1], halves[2], gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn sweeps_2d() -> Sweeps {
    Sweeps::Scaled {
        factor: 1.0,
        exponent: 2.0,
    }
}

fn collapse_2d(engine: Engine, seed: u64) -> (CollapseResult, Duration) {
    let t = Instant::now();
    let mut config = RunConfig::new(
        engine,
        Dimension::Two,
        vec![12, 16, 24],
        range(0.80, 0.90, 0.01),
        2000,
        seed,
    );
    config.sweeps = sweeps_2d();
    let sweep = run_sweep(&config).unwrap();
    let curves = curves_from_sweep(&sweep, Observable::AbsM).unwrap();
    let r = collapse(
        &curves,
        Param::Free { lo: 0.78, hi: 0.92 },
        Param::Free { lo: 0.5, hi: 2.0 },
        Param::Free { lo: 0.0, hi: 0.5 },
        200,
    );
    (r, t.elapsed())
}

fn c6(r: &CollapseResult, el: Duration) -> Outcome {
    outcome(
        "6",
        r.converged && (0.83..=0.87).contains(&r.p_c) && (0.8..=1.3).contains(&r.nu) && (0.08..=0.18).contains(&r.beta),
        format!(
            "2d |<M>|/N collapse p_O = {:.4} (in [0.83, 0.87]), nu = {:.3} (in [0.8, 1.3]), beta = {:.3} (in [0.08, 0.18]), {:.0} s",
            r.p_c,
            r.nu,
            r.beta,
            el.as_secs_f64()
        ),
    )
}

fn c7a() -> Outcome {
    let mut worst: f64 = 0.0;
    for lat in [
        Lattice::ring(4).unwrap(),
        Lattice::ring(7).unwrap(),
        Lattice::torus(3).unwrap(),
        Lattice::torus(5).unwrap(),
    ] {
        for k in 0..=40 {
            worst = worst.max(kernel_discrepancy(&lat, k as f64 / 40.0));
        }
    }
    outcome(
        "7a",
        worst <= 1e-15,
        format!("majority-vote kernels at q=(1-p)/2, all neighbor patterns, 1d and 2d: max difference {worst:.1e}"),
    )
}

fn c7b() -> Outcome {
    let mut diffs = Vec::new();
    let mut passed = true;
    let run = |engine, seed| {
        let mut config = RunConfig::new(engine, Dimension::Two, vec![16], vec![0.80, 0.90], 5000, seed);
        config.sweeps = sweeps_2d();
        run_sweep(&config).unwrap()
    };
    let (q, c) = (run(Engine::Cluster, 70), run(Engine::Mvc, 71));
    for p in [0.80, 0.90] {
        let a = q.point(16, p).unwrap().get(Observable::M).unwrap();
        let b = c.point(16, p).unwrap().get(Observable::M).unwrap();
        let z = (a.mean - b.mean).abs() / a.stderr.hypot(b.stderr);
        passed &= z <= 3.0;
        diffs.push(format!("p={p:.2}: {:.4} vs {:.4} ({z:.2} sigma)", a.mean, b.mean));
    }
    outcome(
        "7b",
        passed,
        format!("2d L=16 <M>/N circuit vs majority vote, {} (<= 3)", diffs.join(", ")),
    )
}

fn c7c(quantum: &CollapseResult, classical: &CollapseResult, el: Duration) -> Outcome {
    let dp = (classical.p_c - quantum.p_c).abs();
    let q = (1.0 - classical.p_c) / 2.0;
    outcome(
        "7c",
        classical.converged && (0.83..=0.87).contains(&classical.p_c) && dp <= 0.02,
        format!(
            "majority-vote 2d collapse p_O = {:.4} (q = {q:.4}), |dp| vs criterion 6 = {dp:.4} (<= 0.02), {:.0} s",
            classical.p_c,
            el.as_secs_f64()
        ),
    )
}

fn c8() -> Outcome {
    let lattice = Lattice::ring(256).unwrap();
    let n = lattice.sites() as f64;
    let bound = 5.0 / n.sqrt();
    let config = MvcConfig {
        formulation: Formulation::NoiseQ(0.02),
        lattice,
        sweeps: 16 * 256,
        initial: MvcInitial::AllUp,
    };
    let finals: Vec<f64> = (0..200)
        .map(|k| {
            *run_mvc(&config, RandomStream::new(80, k))
                .unwrap()
                .magnetization
                .last()
                .unwrap()
        })
        .collect();
    let runs = finals.len() as f64;
    let mean_abs = finals.iter().map(|m| m.abs()).sum::<f64>() / runs;
    let mean = finals.iter().sum::<f64>() / runs;
    let stderr = (finals.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (runs - 1.0) / runs).sqrt();
    let worst = finals.iter().map(|m| m.abs()).fold(0.0, f64::max);
    outcome(
        "8",
        mean_abs < bound && mean.abs() <= 3.0 * stderr,
        format!(
            "1d majority vote L=256 q=0.02 after 4096 sweeps, 200 runs: mean |m| {mean_abs:.4} (< {bound:.4}), \
             mean m {mean:.4} +- {stderr:.4} (within 3 stderr of 0), largest single |m| {worst:.4}"
        ),
    )
}

fn c9() -> Outcome {
    let truth = ScalingParams {
        p_c: 0.85,
        nu: 1.0,
        beta: 0.125,
    };
    let f = |x: f64| 1.0 / (1.0 + (-1.5 * x).exp());
    let ps = range(0.80, 0.90, 0.01);
    let level = 1.0 - 0.05 / 3.0;
    let mut covered = 0;
    for k in 0..100u64 {
        let curves = synthetic_curves(truth, &[12, 16, 24], &ps, f, 0.01, 900 + k);
        let spec = CollapseSpec {
            ci_level: level,
            seed: k,
            ..CollapseSpec::new(
                Param::Free { lo: 0.78, hi: 0.92 },
                Param::Free { lo: 0.5, hi: 2.0 },
                Param::Free { lo: 0.0, hi: 0.5 },
            )
        };
        let r = optimize_collapse(&curves, &spec).unwrap();
        covered += usize::from(r.covers(truth));
    }
    outcome(
        "9",
        covered >= 95,
        format!("planted (0.85, 1, 0.125) inside joint bootstrap intervals in {covered}/100 instances (>= 95)"),
    )
}

fn main() {
    let mut results = Vec::new();
    let mut emit = |o: Outcome| {
        println!(
            "{} criterion {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.detail
        );
        results.push(o.passed);
    };
    emit(c1());
    emit(c2());
    emit(c3());
    let t = Instant::now();
    let sweep = sweep_1d();
    let el = t.elapsed();
    let (o4, p_e) = c4(&sweep, el);
    emit(o4);
    emit(c5(&sweep, p_e));
    let (quantum, el6) = collapse_2d(Engine::Cluster, 60);
    emit(c6(&quantum, el6));
    emit(c7a());
    emit(c7b());
    let (classical, el7) = collapse_2d(Engine::Mvc, 61);
    emit(c7c(&quantum, &classical, el7));
    emit(c8());
    emit(c9());
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
