//! Acceptance suite. Runs every criterion in sequence (the two-electron
//! solves need most of the memory budget), prints one line per criterion
//! and exits non-zero if any criterion fails.
//!
//! `cargo test -p vorotc-cli --test acceptance -- 3 7` runs a subset.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vorotc::eigensolve::dense_eigenvalues;
use vorotc::fvops::{laplacian, symmetrize_laplacian, SelfInteraction, DEFAULT_SELF_C0};
use vorotc::hamiltonian::ManyBodyOperator;
use vorotc::lcu::{self, walsh_onebody, walsh_twobody_diag, LcuDecomposition};
use vorotc::molgrid::{AngularKind, Molecule};
use vorotc::qcpe::{self, history_by_recurrence, random_real_spectrum, solve_padded, QcpeConfig};
use vorotc::transcorrelated::JastrowParams;
use vorotc::vec3::Vec3;
use vorotc::voronoi::{build_diagram, BoundingBox, VoronoiDiagram};
use vorotc::ANGSTROM_TO_BOHR;
use vorotc_cli::config::{GridConfig, SolverConfig};
use vorotc_cli::{convergence_scan, cusp, solve, RunConfig};

enum Status {
    Pass,
    Fail,
    /// Empirical check whose violations are reported rather than failed.
    Reported,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { status: if pass { Status::Pass } else { Status::Fail }, detail }
}

fn random_points(n: usize, half: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half)]).collect()
}

fn random_diagram(n: usize, seed: u64) -> VoronoiDiagram {
    build_diagram(&random_points(n, 1.0, seed), BoundingBox::new([-1.5; 3], [1.5; 3]).unwrap()).unwrap()
}

fn hydrogen_atom() -> Molecule {
    Molecule::from_charges(&[(1.0, [0.0; 3])]).unwrap()
}

fn regularized() -> SelfInteraction {
    SelfInteraction::Regularized { c0: DEFAULT_SELF_C0 }
}

fn c1_lattice_stencil() -> Outcome {
    let n = 5usize;
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push([i as f64, j as f64, k as f64]);
            }
        }
    }
    let d = build_diagram(&pts, BoundingBox::new([-0.5; 3], [n as f64 - 0.5; 3]).unwrap()).unwrap();
    let l = laplacian(&d).unwrap().to_dense();
    // 7-point stencil; walls carry no flux so edge cells lose their
    // missing neighbours
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut want = DMatrix::zeros(n * n * n, n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let m = idx(i, j, k);
                let c = [i as isize, j as isize, k as isize];
                for axis in 0..3 {
                    for s in [-1isize, 1] {
                        let mut q = c;
                        q[axis] += s;
                        if q.iter().all(|&x| (0..n as isize).contains(&x)) {
                            want[(m, idx(q[0] as usize, q[1] as usize, q[2] as usize))] = 1.0;
                            want[(m, m)] -= 1.0;
                        }
                    }
                }
            }
        }
    }
    let err = (&l - &want).amax();
    outcome(err <= 1e-12, format!("max entry deviation {err:.2e} over {} cells", n * n * n))
}

fn c2_similarity_spectrum() -> Outcome {
    let d = random_diagram(300, 2024);
    let l = laplacian(&d).unwrap();
    let lb = symmetrize_laplacian(&l, d.volumes()).unwrap();
    let asym = lb.asymmetry();
    let mut a: Vec<f64> = dense_eigenvalues(&l.to_dense()).unwrap().iter().map(|z| z.re).collect();
    let mut b: Vec<f64> = SymmetricEigen::new(lb.to_dense()).eigenvalues.iter().copied().collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    outcome(err <= 1e-9 && asym <= 1e-12, format!("spectrum deviation {err:.2e}, asymmetry {asym:.2e}"))
}

fn hydrogen_config(nu: f64, jastrow: Option<JastrowParams>) -> RunConfig {
    let mut cfg = RunConfig::from_json(r#"{"molecule":{"atoms":[{"Z":1,"xyz":[0,0,0]}]}}"#).unwrap();
    cfg.grid = GridConfig { n_radial: 10, alpha: 1.5, nu, angular: AngularKind::Lebedev { order: 50 }, merge_eps: 1e-9 };
    cfg.jastrow = jastrow;
    cfg.solver = SolverConfig { tol: 1e-8, ..Default::default() };
    cfg
}

fn c3_hydrogen_convergence() -> Outcome {
    let ladder = [4usize, 6, 8, 10, 12, 16, 20];
    let bare = convergence_scan(&hydrogen_config(1.0, None), &ladder, -0.5).unwrap();
    let tc = convergence_scan(&hydrogen_config(1.0, Some(JastrowParams::new(1.0, f64::INFINITY).unwrap())), &ladder, -0.5).unwrap();
    let monotone = bare.windows(2).all(|w| w[1].error.abs() < w[0].error.abs());
    let threshold = 5e-3;
    let first = |pts: &[vorotc_cli::ConvergencePoint]| pts.iter().find(|p| p.error.abs() <= threshold).map(|p| p.n);
    let (nb, nt) = (first(&bare), first(&tc));
    let fmt = |pts: &[vorotc_cli::ConvergencePoint]| pts.iter().map(|p| format!("{}:{:.2}", p.n, 1e3 * p.error)).collect::<Vec<_>>().join(" ");
    let pass = monotone
        && bare.iter().chain(&tc).all(|p| p.converged)
        && nb.is_some_and(|n| n <= 20_000)
        && matches!((nb, nt), (Some(b), Some(t)) if t < b);
    outcome(
        pass,
        format!("bare monotone={monotone}, first N<=5mHa bare={nb:?} tc={nt:?}; errors mHa bare [{}] tc [{}]", fmt(&bare), fmt(&tc)),
    )
}

fn c4_radial_exponent() -> Outcome {
    let mut errs = Vec::new();
    let mut n = 0;
    for nu in [1.0, 2.0, 3.0] {
        let p = &convergence_scan(&hydrogen_config(nu, None), &[80], -0.5).unwrap()[0];
        n = p.n;
        errs.push(p.error.abs());
    }
    let pass = n >= 4000 && errs[0] <= errs[1] && errs[1] <= errs[2];
    outcome(pass, format!("N={n}: |error| mHa nu=1 {:.3}, nu=2 {:.3}, nu=3 {:.3}", 1e3 * errs[0], 1e3 * errs[1], 1e3 * errs[2]))
}

fn c5_cusp_smoothing() -> Outcome {
    let he = Molecule::from_charges(&[(2.0, [0.0; 3])]).unwrap();
    let grid = GridConfig { n_radial: 16, alpha: 1.0, nu: 1.0, angular: AngularKind::GaussLegendre { n_theta: 4, n_phi: 16 }, merge_eps: 1e-9 };
    let cuts = cusp::cusp_cuts(&he, &grid, f64::INFINITY, &[None, Some(4.0), Some(2.0), Some(1.0)], 0.5, regularized(), &SolverConfig::default()).unwrap();
    let kinks: Vec<f64> = cuts.iter().map(|c| c.kink).collect();
    let monotone = kinks.windows(2).all(|w| w[1] < w[0]);
    let pass = monotone && cuts.iter().all(|c| c.converged) && grid.atom_spec().point_count() <= 2000;
    let detail = cuts
        .iter()
        .map(|c| format!("mu_ee={}: kink {:.4} E {:.5}", c.mu_ee.map_or("inf".into(), |m| m.to_string()), c.kink, c.energy))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, format!("N={}, {detail}", grid.atom_spec().point_count()))
}

fn c6_size_consistency() -> Outcome {
    let grid = GridConfig { n_radial: 30, alpha: 1.5, nu: 1.0, angular: AngularKind::Lebedev { order: 50 }, merge_eps: 1e-9 };
    let solver = SolverConfig::default();
    let h = solve(&hydrogen_atom(), &grid, 1, None, regularized(), &solver).unwrap();
    let r = 8.0 * ANGSTROM_TO_BOHR;
    let h2 = Molecule::from_charges(&[(1.0, [0.0, 0.0, -r / 2.0]), (1.0, [0.0, 0.0, r / 2.0])]).unwrap();
    let s = solve(&h2, &grid, 2, None, regularized(), &solver).unwrap();
    let diff = s.report.e_total - 2.0 * h.report.e_total;
    let pass = h.report.converged && s.report.converged && s.report.n == 3000 && diff.abs() <= 10e-3;
    outcome(
        pass,
        format!(
            "N={} E(H2,8A)={:.6} 2E(H)={:.6} diff {:.2} mHa ({} iterations)",
            s.report.n,
            s.report.e_total,
            2.0 * h.report.e_total,
            1e3 * diff,
            s.report.iterations
        ),
    )
}

/// Brute-force `Tr(P† A)/N^k` of every one- and two-register Walsh coefficient.
fn walsh_trace_error(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let w = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let pauli = |m: usize, k: usize| {
        DMatrix::from_fn(n, n, |r, c| if r == c ^ m { if (k & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 })
    };
    let omega = walsh_onebody(&t).unwrap();
    let gamma = walsh_twobody_diag(&w).unwrap();
    let wdiag = DMatrix::from_fn(n * n, n * n, |i, j| if i == j { w[(i / n, i % n)] } else { 0.0 });
    let mut err = 0.0f64;
    for m in 0..n {
        for k in 0..n {
            err = err.max(((pauli(m, k).transpose() * &t).trace() / n as f64 - omega[(m, k)]).abs());
            let zz = pauli(0, m).kronecker(&pauli(0, k));
            err = err.max(((zz * &wdiag).trace() / (n * n) as f64 - gamma[(m, k)]).abs());
        }
    }
    err
}

fn lcu_instances() -> Vec<(String, ManyBodyOperator)> {
    let mol = Molecule::from_charges(&[(1.0, [0.1, -0.05, 0.0])]).unwrap();
    let params = JastrowParams::new(1.0, 1.0).unwrap();
    let mut out = Vec::new();
    for &(n, eta) in &[(4usize, 2usize), (8, 2), (4, 3), (8, 3)] {
        let d = random_diagram(n, 100 + n as u64 + eta as u64);
        out.push((format!("herm N={n} eta={eta}"), ManyBodyOperator::hermitian(&d, &mol, eta, regularized()).unwrap()));
        out.push((format!("tc N={n} eta={eta}"), ManyBodyOperator::transcorrelated(&d, &mol, eta, &params, regularized()).unwrap()));
    }
    out
}

fn c7_lcu_correctness() -> Outcome {
    let mut recon = 0.0f64;
    let mut three_body_seen = false;
    for (_, op) in lcu_instances() {
        let h = op.dense_matrix().unwrap();
        let dec = LcuDecomposition::from_operator(&op).unwrap().prune_merge();
        three_body_seen |= dec.three_body.as_ref().is_some_and(|z| z.iter().any(|v| *v != 0.0));
        let mut tables = dec.clone();
        tables.shift = 0.0;
        let r = lcu::reconstruct(&tables).unwrap();
        recon = recon.max((r + DMatrix::identity(h.nrows(), h.nrows()) * dec.shift - &h).amax());
    }
    let trace = [4usize, 8].iter().map(|&n| walsh_trace_error(n, n as u64)).fold(0.0f64, f64::max);
    outcome(
        recon <= 1e-10 && trace <= 1e-12 && three_body_seen,
        format!("reconstruction {recon:.2e} (8 instances, TC three-body included: {three_body_seen}), Walsh vs trace {trace:.2e}"),
    )
}

fn c8_one_norm() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut lines = Vec::new();
    for (name, op) in lcu_instances() {
        let dec = LcuDecomposition::from_operator(&op).unwrap().prune_merge();
        let mut tables = dec.clone();
        tables.shift = 0.0;
        let r = lcu::reconstruct(&tables).unwrap();
        let rho = dense_eigenvalues(&r).unwrap().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let lambda = dec.one_norm().total;
        worst = worst.min(lambda / rho);
        lines.push(format!("{name}: {:.3}", lambda / rho));
    }
    outcome(worst >= 1.0, format!("min lambda/rho = {worst:.3} [{}]", lines.join(", ")))
}

fn c9_qcpe_statistics() -> Outcome {
    let (ups, upsp) = (256usize, 5usize);
    let run = |seed: u64, repeats: usize| {
        let h = random_real_spectrum(16, seed);
        let (e, psi, _) = vorotc_cli::ground_state_dense(&h).unwrap();
        let cfg = QcpeConfig { upsilon: ups, upsilon_prime: upsp, alpha: 2.5 * qcpe::spectral_norm(&h), repeats, measurement: Default::default() };
        let r = qcpe::qcpe_estimate(&h, &psi, &cfg, seed ^ 0x5eed, Some(e)).unwrap();
        (r, e, qcpe::accuracy_bound(&cfg))
    };
    let mut hits = 0;
    for t in 0..200u64 {
        let (r, _, _) = run(t, 1);
        hits += usize::from(r.success_rate == 1.0);
    }
    let rate = hits as f64 / 200.0;
    let mut good = 0;
    for b in 0..100u64 {
        let (r, e, bound) = run(1000 + b, 15);
        good += usize::from((r.e_estimate - e).abs() <= bound);
    }
    let batch = good as f64 / 100.0;
    outcome(rate >= 0.566 && batch >= 0.99, format!("single-shot success {rate:.3} (200 trials), median-of-15 within bound {batch:.2} (100 batches)"))
}

fn c10_history_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for (i, ups) in [4usize, 16, 64, 256, 1024].into_iter().enumerate() {
        let h = random_real_spectrum(8, 50 + i as u64);
        let alpha = 1.1 * qcpe::spectral_norm(&h);
        let psi = DVector::from_fn(8, |k, _| ((k + 1) as f64).cos());
        let a = solve_padded(&h, alpha, &psi, ups).unwrap();
        let b = history_by_recurrence(&h, alpha, &psi, ups).unwrap().to_rescaled(true);
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            worst = worst.max((x - y).amax());
        }
    }
    outcome(worst <= 1e-12, format!("max block deviation {worst:.2e} for upsilon up to 1024"))
}

fn c11_walk_phases() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
        let h = (&a + a.transpose()) * 0.5;
        let lambda = LcuDecomposition::hermitian(&h, None, 1).unwrap().one_norm().total;
        worst = worst.max(lcu::walk_spectrum_check(&h, lambda).unwrap().max_phase_error);
    }
    outcome(worst <= 1e-8, format!("max phase error {worst:.2e} over 5 matrices (lambda = LCU one-norm)"))
}

fn c12_tc_reality() -> Outcome {
    let mol = hydrogen_atom();
    let params = JastrowParams::new(1.0, 1.0).unwrap();
    let mut lines = Vec::new();
    let mut violations = 0;
    for seed in 0..5u64 {
        let d = random_diagram(10, 200 + seed);
        let op = ManyBodyOperator::transcorrelated(&d, &mol, 2, &params, regularized()).unwrap();
        let h = op.dense_matrix().unwrap();
        let norm = qcpe::spectral_norm(&h);
        let im = dense_eigenvalues(&h).unwrap().iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        let rel = im / norm;
        if rel > 1e-8 {
            violations += 1;
        }
        lines.push(format!("{rel:.1e}"));
    }
    Outcome {
        status: if violations == 0 { Status::Pass } else { Status::Reported },
        detail: format!("max|Im|/||H|| per instance [{}]; {violations}/5 above 1e-8", lines.join(", ")),
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "cubic-lattice stencil", c1_lattice_stencil),
        (2, "similarity spectrum", c2_similarity_spectrum),
        (3, "hydrogen convergence", c3_hydrogen_convergence),
        (4, "radial-exponent ordering", c4_radial_exponent),
        (5, "He cusp smoothing", c5_cusp_smoothing),
        (6, "H2 size consistency", c6_size_consistency),
        (7, "LCU correctness", c7_lcu_correctness),
        (8, "one-norm soundness", c8_one_norm),
        (9, "QCPE statistics", c9_qcpe_statistics),
        (10, "history-state equivalence", c10_history_equivalence),
        (11, "walk-operator phases", c11_walk_phases),
        (12, "TC spectrum reality", c12_tc_reality),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        let label = match o.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(id);
                "FAIL"
            }
            Status::Reported => "REPORTED",
        };
        println!("criterion {id:>2} {label:<8} {name} ({:.1}s): {}", t0.elapsed().as_secs_f64(), o.detail);
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
