//! Dense density matrices on at most six qubits and the four channels of the
//! quantum-to-classical reduction: averaged `X` measurement, bond round with
//! feedback, classical reset and full `Z` dephasing.
//!
//! Basis index bit `i` set means qubit `i` is `|1⟩`.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::mvc::{ExactDistribution, SpinConfig};
use crate::schedule::{Event, RandomStream, Schedule};

pub type C64 = Complex<f64>;
pub type Matrix = DMatrix<C64>;

pub const MAX_QUBITS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    rho: Matrix,
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidParameter(format!(
            "dense oracle supports 1..={MAX_QUBITS} qubits, got {n}"
        )));
    }
    Ok(())
}

impl DensityMatrix {
    /// `|a⟩⟨a|` for a computational basis index `a`.
    pub fn basis(n: usize, a: usize) -> Result<Self> {
        check_qubits(n)?;
        let d = 1 << n;
        let mut rho = Matrix::zeros(d, d);
        rho[(a, a)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { n, rho })
    }

    pub fn from_matrix(n: usize, rho: Matrix) -> Result<Self> {
        check_qubits(n)?;
        if rho.shape() != (1 << n, 1 << n) {
            return Err(Error::InvalidParameter(
                "matrix shape does not match qubit count".into(),
            ));
        }
        Ok(DensityMatrix { n, rho })
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn pure(n: usize, psi: &[C64]) -> Result<Self> {
        check_qubits(n)?;
        let v = nalgebra::DVector::from_column_slice(psi);
        let rho = &v * v.adjoint();
        Self::from_matrix(n, rho)
    }

    /// Random full-rank state: a Gaussian pure state on a doubled system,
    /// traced over the ancilla.
    pub fn random_mixed(n: usize, rng: &mut impl Rng) -> Result<Self> {
        check_qubits(n)?;
        let d = 1 << n;
        let m = Matrix::from_fn(d, d, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let mut rho = &m * m.adjoint();
        let tr = rho.trace();
        rho /= tr;
        Ok(DensityMatrix { n, rho })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.rho[(a, a)].re).collect()
    }

    /// Largest off-diagonal modulus.
    pub fn max_off_diagonal(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                if a != b {
                    worst = worst.max(self.rho[(a, b)].norm());
                }
            }
        }
        worst
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let herm = (&self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(format!("not Hermitian: {herm:e}"));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(format!("trace {tr}"));
        }
        let lo = hermitian_part(&self.rho).symmetric_eigenvalues().min();
        if lo < -1e-10 {
            return Err(format!("negative eigenvalue {lo:e}"));
        }
        Ok(())
    }

    /// `‖self − other‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        trace_norm(&(&self.rho - &other.rho))
    }

    fn with(&self, rho: Matrix) -> Self {
        DensityMatrix { n: self.n, rho }
    }
}

fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Sum of absolute eigenvalues of the Hermitian part of `m`.
pub fn trace_norm(m: &Matrix) -> f64 {
    hermitian_part(m).symmetric_eigenvalues().iter().map(|e| e.abs()).sum()
}

/// `XᵢρXᵢ`, by permuting basis indices.
fn conjugate_x(rho: &Matrix, i: usize) -> Matrix {
    let m = 1 << i;
    Matrix::from_fn(rho.nrows(), rho.ncols(), |a, b| rho[(a ^ m, b ^ m)])
}

/// `Σ KρK†`.
pub fn apply_kraus(rho: &DensityMatrix, kraus: &[Matrix]) -> DensityMatrix {
    let d = rho.dim();
    let mut out = Matrix::zeros(d, d);
    for k in kraus {
        out += k * &rho.rho * k.adjoint();
    }
    rho.with(out)
}

/// `max |Σ K†K − I|`.
pub fn kraus_completeness_error(kraus: &[Matrix]) -> f64 {
    let d = kraus[0].nrows();
    let mut sum = Matrix::zeros(d, d);
    for k in kraus {
        sum += k.adjoint() * k;
    }
    (sum - Matrix::identity(d, d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn pauli_x(n: usize, i: usize) -> Matrix {
    let d = 1 << n;
    Matrix::from_fn(d, d, |a, b| {
        if a == b ^ (1 << i) {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn diagonal(n: usize, f: impl Fn(usize) -> f64) -> Matrix {
    let d = 1usize << n;
    Matrix::from_diagonal(&nalgebra::DVector::from_fn(d, |a, _| C64::new(f(a), 0.0)))
}

/// `P₊ = (1 + Xᵢ)/2`, `P₋ = (1 − Xᵢ)/2`.
pub fn kraus_x(n: usize, i: usize) -> Vec<Matrix> {
    let id = Matrix::identity(1 << n, 1 << n);
    let x = pauli_x(n, i);
    let h = C64::new(0.5, 0.0);
    vec![(&id + &x) * h, (&id - &x) * h]
}

/// One term per pattern of bond outcomes around `i`: the joint projector,
/// preceded by the feedback `Xᵢ` when `−1` outcomes are the strict majority,
/// split into `Xᵢ/√2` and `I/√2` on a tie.
pub fn kraus_f(n: usize, i: usize, neighbors: &[usize]) -> Vec<Matrix> {
    let k = neighbors.len();
    let x = pauli_x(n, i);
    let mut out = Vec::new();
    for pattern in 0..1usize << k {
        let proj = diagonal(n, |a| {
            let ok = neighbors.iter().enumerate().all(|(b, &j)| {
                let minus = (a >> i ^ a >> j) & 1 == 1;
                minus == (pattern >> b & 1 == 1)
            });
            ok as u8 as f64
        });
        let minus = pattern.count_ones() as usize;
        let plus = k - minus;
        if minus > plus {
            out.push(&x * proj);
        } else if minus == plus {
            let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            out.push(&x * &proj * r);
            out.push(proj * r);
        } else {
            out.push(proj);
        }
    }
    out
}

/// `|c⟩⟨d|ᵢ/√2` for all `c, d`.
pub fn kraus_t(n: usize, i: usize) -> Vec<Matrix> {
    let dim = 1usize << n;
    let m = 1 << i;
    let mut out = Vec::new();
    for c in 0..2 {
        for d in 0..2 {
            out.push(Matrix::from_fn(dim, dim, |a, b| {
                let hit = a & !m == b & !m && (a >> i & 1) == c && (b >> i & 1) == d;
                C64::new(if hit { std::f64::consts::FRAC_1_SQRT_2 } else { 0.0 }, 0.0)
            }));
        }
    }
    out
}

/// Projectors onto every computational basis state.
pub fn kraus_d(n: usize) -> Vec<Matrix> {
    (0..1usize << n)
        .map(|a| diagonal(n, |b| (a == b) as u8 as f64))
        .collect()
}

/// Neighbors of `i` on an `n`-site ring: none for one site, the single other
/// site twice for two.
pub fn ring_neighbors(n: usize, i: usize) -> Vec<usize> {
    match n {
        1 => vec![],
        _ => vec![(i + n - 1) % n, (i + 1) % n],
    }
}

/// Averaged `X` measurement on qubit `i`: `(ρ + XᵢρXᵢ)/2`.
pub fn channel_x(rho: &DensityMatrix, i: usize) -> DensityMatrix {
    let h = C64::new(0.5, 0.0);
    rho.with((&rho.rho + conjugate_x(&rho.rho, i)) * h)
}

/// Bond round with feedback on qubit `i` against the given neighbors.
pub fn channel_f_with(rho: &DensityMatrix, i: usize, neighbors: &[usize]) -> DensityMatrix {
    apply_kraus(rho, &kraus_f(rho.n, i, neighbors))
}

pub fn channel_f(rho: &DensityMatrix, i: usize, lattice: &Lattice) -> DensityMatrix {
    channel_f_with(rho, i, lattice.neighbors(i))
}

/// Classical reset of qubit `i`: `I/2 ⊗ Trᵢ ρ`.
pub fn channel_t(rho: &DensityMatrix, i: usize) -> DensityMatrix {
    let m = 1 << i;
    let d = rho.dim();
    let out = Matrix::from_fn(d, d, |a, b| {
        if (a ^ b) & m != 0 {
            return C64::new(0.0, 0.0);
        }
        let (a0, b0) = (a & !m, b & !m);
        (rho.rho[(a0, b0)] + rho.rho[(a0 | m, b0 | m)]) * 0.5
    });
    rho.with(out)
}

/// Full `Z` dephasing.
pub fn channel_d(rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    rho.with(Matrix::from_fn(d, d, |a, b| {
        if a == b {
            rho.rho[(a, a)]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationReport {
    pub qubits: usize,
    pub trials: usize,
    /// `max ‖𝒳ᵢ𝒟ρ − 𝒟𝒯ᵢρ‖₁`.
    pub x_d_vs_d_t: f64,
    /// `max ‖𝒟ℱᵢρ − ℱᵢ𝒟ρ‖₁`.
    pub d_f_vs_f_d: f64,
    /// `max |Σ K†K − I|` over all four channels.
    pub kraus_completeness: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the two operator identities on random mixed states of an
/// `n`-qubit ring, for every site.
pub fn verify_relations(n: usize, trials: usize, seed: u64) -> Result<RelationReport> {
    check_qubits(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kraus = kraus_completeness_error(&kraus_d(n));
    for i in 0..n {
        let nb = ring_neighbors(n, i);
        for ks in [kraus_x(n, i), kraus_f(n, i, &nb), kraus_t(n, i)] {
            kraus = kraus.max(kraus_completeness_error(&ks));
        }
    }
    let (mut r1, mut r2) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let rho = DensityMatrix::random_mixed(n, &mut rng)?;
        let d = channel_d(&rho);
        for i in 0..n {
            let nb = ring_neighbors(n, i);
            r1 = r1.max(channel_x(&d, i).trace_distance(&channel_d(&channel_t(&rho, i))));
            r2 = r2.max(channel_d(&channel_f_with(&rho, i, &nb)).trace_distance(&channel_f_with(&d, i, &nb)));
        }
    }
    let tolerance = 1e-10;
    Ok(RelationReport {
        qubits: n,
        trials,
        x_d_vs_d_t: r1,
        d_f_vs_f_d: r2,
        kraus_completeness: kraus,
        tolerance,
        passed: r1 < tolerance && r2 < tolerance && kraus < 1e-12,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    pub sites: usize,
    pub p: f64,
    pub sweeps: usize,
    pub schedules: usize,
    /// Largest `‖ρ_q − ρ_c‖₁` over the fixed schedules.
    pub fixed_schedule_distance: f64,
    /// `‖ρ_q − ρ_c‖₁` with every site update averaged over the schedule.
    pub averaged_distance: f64,
    /// Largest off-diagonal modulus of any `ρ_c`.
    pub classical_off_diagonal: f64,
    /// Largest difference between `diag ρ_c` and the exact majority-vote
    /// distribution.
    pub majority_vote_difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evolves `|0…0⟩` through the quantum string (`𝒳`/`ℱ`) and the classical
/// string (`𝒯`/`ℱ`) on random schedules of a ring, and once with every site
/// update averaged over its two branches.
pub fn verify_reduction(
    lattice: &Lattice,
    p: f64,
    sweeps: usize,
    schedules: usize,
    seed: u64,
) -> Result<ReductionReport> {
    let n = lattice.sites();
    check_qubits(n)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1]")));
    }
    let start = DensityMatrix::basis(n, 0)?;
    let up = SpinConfig::uniform(n, 1);
    let (mut fixed, mut offdiag, mut mv) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..schedules {
        let sched = Schedule::generate(lattice, p, sweeps, RandomStream::new(seed, k as u64))?;
        let mut q = start.clone();
        let mut c = start.clone();
        let mut exact = ExactDistribution::new(lattice, &up)?;
        for e in sched.events() {
            match e {
                Event::MeasureX(i) => {
                    q = channel_x(&q, i);
                    c = channel_t(&c, i);
                }
                Event::BondRound(i) => {
                    q = channel_f(&q, i, lattice);
                    c = channel_f(&c, i, lattice);
                }
            }
            exact.apply_event(lattice, e);
            fixed = fixed.max(q.trace_distance(&c));
            offdiag = offdiag.max(c.max_off_diagonal());
            mv = mv.max(max_abs_diff(&c.diagonal(), exact.probs()));
        }
    }
    let mut q = start.clone();
    let mut c = start;
    let mut exact = ExactDistribution::new(lattice, &up)?;
    let mut averaged = 0.0f64;
    for _ in 0..sweeps {
        for i in 0..n {
            let f = channel_f(&q, i, lattice);
            q = mix(&channel_x(&q, i), &f, p);
            let f = channel_f(&c, i, lattice);
            c = mix(&channel_t(&c, i), &f, p);
            exact.apply_mixture(lattice, i, p);
            averaged = averaged.max(q.trace_distance(&c));
            offdiag = offdiag.max(c.max_off_diagonal());
            mv = mv.max(max_abs_diff(&c.diagonal(), exact.probs()));
        }
    }
    let tolerance = 1e-9;
    Ok(ReductionReport {
        sites: n,
        p,
        sweeps,
        schedules,
        fixed_schedule_distance: fixed,
        averaged_distance: averaged,
        classical_off_diagonal: offdiag,
        majority_vote_difference: mv,
        tolerance,
        passed: fixed < tolerance && averaged < tolerance && offdiag < tolerance && mv < tolerance,
    })
}

/// `(1 − p)·a + p·b`.
fn mix(a: &DensityMatrix, b: &DensityMatrix, p: f64) -> DensityMatrix {
    a.with(&a.rho * C64::new(1.0 - p, 0.0) + &b.rho * C64::new(p, 0.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DensityMatrix, b: &DensityMatrix) -> bool {
        a.trace_distance(b) < 1e-12
    }

    fn maximally_mixed(n: usize) -> DensityMatrix {
        let d = 1 << n;
        DensityMatrix::from_matrix(n, Matrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0)).unwrap()
    }

    fn plus(n: usize) -> DensityMatrix {
        let d = 1 << n;
        let amp = C64::new((1.0 / d as f64).sqrt(), 0.0);
        DensityMatrix::pure(n, &vec![amp; d]).unwrap()
    }

    #[test]
    fn x_channel() {
        let zero = DensityMatrix::basis(1, 0).unwrap();
        assert!(close(&channel_x(&zero, 0), &maximally_mixed(1)));
        assert!(close(&channel_x(&plus(1), 0), &plus(1)));
    }

    #[test]
    fn t_channel() {
        let one = DensityMatrix::basis(1, 1).unwrap();
        assert!(close(&channel_t(&one, 0), &maximally_mixed(1)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityMatrix::random_mixed(3, &mut rng).unwrap();
        let t = channel_t(&rho, 1);
        assert!(close(&channel_t(&t, 1), &t));
        assert!(close(
            &channel_t(&channel_t(&rho, 0), 2),
            &channel_t(&channel_t(&rho, 2), 0)
        ));
    }

    #[test]
    fn d_channel() {
        assert!(close(&channel_d(&plus(1)), &maximally_mixed(1)));
        let b = DensityMatrix::basis(3, 5).unwrap();
        assert!(close(&channel_d(&b), &b));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = DensityMatrix::random_mixed(3, &mut rng).unwrap();
        let d = channel_d(&rho);
        assert_eq!(d.max_off_diagonal(), 0.0);
        assert!(close(&channel_d(&d), &d));
    }

    #[test]
    fn f_channel_on_basis_states() {
        let lat = Lattice::ring(4).unwrap();
        let zero = DensityMatrix::basis(4, 0).unwrap();
        for i in 0..4 {
            assert!(close(&channel_f(&zero, i, &lat), &zero));
        }
        // |0110⟩ with qubit k at bit k: qubits 1 and 2 are |1⟩
        let s = DensityMatrix::basis(4, 0b0110).unwrap();
        // qubit 2 has neighbors 1 (|1⟩) and 3 (|0⟩): tie, half flipped
        let out = channel_f(&s, 2, &lat);
        let expect = DensityMatrix::from_matrix(
            4,
            (DensityMatrix::basis(4, 0b0110).unwrap().rho + DensityMatrix::basis(4, 0b0010).unwrap().rho)
                * C64::new(0.5, 0.0),
        )
        .unwrap();
        assert!(close(&out, &expect));
        // qubit 1 of |0010⟩ sees two -1 bonds and is flipped back
        let lone = DensityMatrix::basis(4, 0b0010).unwrap();
        assert!(close(&channel_f(&lone, 1, &lat), &zero));
    }

    #[test]
    fn f_channel_matches_cluster_engine_on_classical_states() {
        use crate::cluster::ClusterState;
        use crate::schedule::{Initial, Outcome, Scripted};
        let lat = Lattice::ring(4).unwrap();
        for a in 0..16usize {
            for i in 0..4 {
                let rho = channel_f(&DensityMatrix::basis(4, a).unwrap(), i, &lat);
                let mut expect = [0.0; 16];
                for coin in [false, true] {
                    let mut st = ClusterState::new(&lat, Initial::AllZero);
                    for s in 0..4 {
                        if a >> s & 1 == 1 {
                            st.apply_x(s);
                        }
                    }
                    let mut src = Scripted::new(&[], &[coin]);
                    st.site_update(&lat, Event::BondRound(i), &mut src).unwrap();
                    let b = (0..4).fold(0, |acc, s| acc | ((st.z(s).unwrap() == Outcome::Minus) as usize) << s);
                    expect[b] += 0.5;
                }
                assert!(max_abs_diff(&rho.diagonal(), &expect) < 1e-12, "a={a:04b} i={i}");
                assert_eq!(rho.max_off_diagonal(), 0.0);
            }
        }
    }

    #[test]
    fn channels_preserve_trace() {
        let lat = Lattice::ring(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let rho = DensityMatrix::random_mixed(4, &mut rng).unwrap();
            rho.check_invariants().unwrap();
            for out in [
                channel_x(&rho, 1),
                channel_f(&rho, 2, &lat),
                channel_t(&rho, 3),
                channel_d(&rho),
            ] {
                assert!((out.trace().re - 1.0).abs() < 1e-12);
                out.check_invariants().unwrap();
            }
        }
    }

    #[test]
    fn closed_forms_match_kraus() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = DensityMatrix::random_mixed(3, &mut rng).unwrap();
        for i in 0..3 {
            assert!(close(&channel_x(&rho, i), &apply_kraus(&rho, &kraus_x(3, i))));
            assert!(close(&channel_t(&rho, i), &apply_kraus(&rho, &kraus_t(3, i))));
        }
        assert!(close(&channel_d(&rho), &apply_kraus(&rho, &kraus_d(3))));
    }

    #[test]
    fn kraus_sets_are_complete() {
        for n in 1..=4 {
            for i in 0..n {
                assert!(kraus_completeness_error(&kraus_f(n, i, &ring_neighbors(n, i))) < 1e-12);
                assert!(kraus_completeness_error(&kraus_x(n, i)) < 1e-12);
                assert!(kraus_completeness_error(&kraus_t(n, i)) < 1e-12);
            }
            assert!(kraus_completeness_error(&kraus_d(n)) < 1e-12);
        }
        let four = kraus_f(5, 0, &[1, 2, 3, 4]);
        assert!(kraus_completeness_error(&four) < 1e-12);
    }

    #[test]
    fn single_qubit_relation_gives_half_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let rho = DensityMatrix::random_mixed(1, &mut rng).unwrap();
            let half = maximally_mixed(1);
            assert!(close(&channel_x(&channel_d(&rho), 0), &half));
            assert!(close(&channel_d(&channel_t(&rho, 0)), &half));
        }
    }

    #[test]
    fn relations_hold() {
        for n in [1, 2, 4] {
            let r = verify_relations(n, 20, n as u64).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn relations_on_product_states() {
        let s = DensityMatrix::pure(
            2,
            &[
                C64::new(0.6, 0.0),
                C64::new(0.0, 0.8),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        for i in 0..2 {
            let nb = ring_neighbors(2, i);
            assert!(close(&channel_x(&channel_d(&s), i), &channel_d(&channel_t(&s, i))));
            assert!(close(
                &channel_d(&channel_f_with(&s, i, &nb)),
                &channel_f_with(&channel_d(&s), i, &nb)
            ));
        }
    }

    #[test]
    fn reduction_holds() {
        let lat = Lattice::ring(4).unwrap();
        let r = verify_reduction(&lat, 0.5, 6, 10, 1).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn p_one_is_a_fixed_point() {
        let lat = Lattice::ring(4).unwrap();
        let r = verify_reduction(&lat, 1.0, 3, 2, 2).unwrap();
        assert!(r.passed);
        let zero = DensityMatrix::basis(4, 0).unwrap();
        let mut q = zero.clone();
        for i in 0..4 {
            q = channel_f(&q, i, &lat);
        }
        assert!(close(&q, &zero));
    }

    #[test]
    fn rejects_too_many_qubits() {
        assert!(DensityMatrix::basis(7, 0).is_err());
        assert!(verify_relations(0, 1, 0).is_err());
    }
}
