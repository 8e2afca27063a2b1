//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 8 and 9 take hours on a laptop core and only run with
//! `RENYI_VMC_FULL=1`; otherwise they print SKIP. `RENYI_VMC_CRITERIA=6,7`
//! restricts the run to the listed criteria.

mod common;

use std::time::Instant;

use common::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renyi_vmc::ansatz::*;
use renyi_vmc::estimator::*;
use renyi_vmc::lattice::*;
use renyi_vmc::optimizer::*;
use renyi_vmc::oracle::*;
use renyi_vmc::sampler::*;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn tfim(geom: Geometry, hx: f64) -> IsingHamiltonian {
    build_hamiltonian(geom, 1.0, 0.5, hx).unwrap()
}

fn chain(n: usize) -> Geometry {
    Geometry::chain(n).unwrap()
}

fn full_run() -> bool {
    std::env::var("RENYI_VMC_FULL").map(|v| v == "1").unwrap_or(false)
}

// 1 ─────────────────────────────────────────────────────────────────────────

fn oracle_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_kkt, mut worst_gap) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let n = 1 + case % 6;
        let mut e: Vec<f64> = (0..1usize << n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        if n >= 2 && case % 3 == 0 {
            e[1] = e[0];
        }
        e.sort_by(f64::total_cmp);
        let beta = rng.gen_range(0.0..3.0);
        let p = renyi_weights(&e, beta);
        worst_kkt = worst_kkt.max(renyi_kkt_violation(&e, beta, &p));
        let pg = renyi_projected_gradient(&e, beta, 200_000);
        worst_gap = worst_gap.max((renyi_objective(&e, beta, &p) - renyi_objective(&e, beta, &pg)).abs());
    }
    verdict(
        worst_kkt <= 1e-8 && worst_gap <= 1e-6,
        format!("20 spectra: max KKT violation {worst_kkt:.1e}, max objective gap to projected gradient {worst_gap:.1e}"),
    )
}

// 2 ─────────────────────────────────────────────────────────────────────────

fn construction_validity() -> Verdict {
    let mut worst_asym = 0.0f64;
    let mut worst_neg = 0.0f64;
    let mut cases = 0;
    for seed in 0..20u64 {
        let n = 4 + (seed as usize % 5);
        for spec in small_specs(n) {
            let model = Ansatz::from_spec(&spec).unwrap();
            let rho = brute_force_rho(&model, &random_for(&spec, seed), BRUTE_FORCE_CAP).unwrap().normalized();
            worst_asym = worst_asym.max((&rho - rho.adjoint()).norm() / rho.norm());
            let eig = hermitian_eigenvalues(&rho);
            let max = eig[eig.len() - 1];
            worst_neg = worst_neg.max(-eig[0] / max);
            cases += 1;
        }
    }
    verdict(
        worst_asym <= 1e-12 && worst_neg <= 1e-10,
        format!("{cases} cases (4 ansätze × 20 seeds, N = 4..8): max ‖ρ−ρ†‖/‖ρ‖ {worst_asym:.1e}, max −λ_min/λ_max {worst_neg:.1e}"),
    )
}

// 3 ─────────────────────────────────────────────────────────────────────────

fn log_ratio(a: &LogAmplitude, b: &LogAmplitude) -> renyi_vmc::C64 {
    let d = a.phase - b.phase;
    let tau = 2.0 * std::f64::consts::PI;
    renyi_vmc::C64::new(a.log_modulus - b.log_modulus, d - tau * (d / tau).round())
}

fn gradient_fidelity() -> Verdict {
    let h = 1e-4;
    let stencil = |f: &mut dyn FnMut(f64) -> renyi_vmc::C64| (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) / (12.0 * h);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_log = 0.0f64;
    let mut n_params = 0;
    for spec in small_specs(4) {
        let model = Ansatz::from_spec(&spec).unwrap();
        let params = random_for(&spec, 17);
        for _ in 0..4 {
            let (s, sp) = (random_config(4, &mut rng), random_config(4, &mut rng));
            let (base, Some(an)) = log_derivative(&model, &params, &s, &sp) else { continue };
            let mut theta = params.clone();
            for i in 0..params.len() {
                let fd = stencil(&mut |d| {
                    theta[i] = params[i] + d;
                    let v = log_ratio(&model.log_element(&theta, &s, &sp), &base);
                    theta[i] = params[i];
                    v
                });
                worst_log = worst_log.max((fd - an[i]).norm() / an[i].norm().max(1.0));
                n_params += 1;
            }
        }
    }

    let ham = tfim(chain(4), 1.05);
    let mut worst_f = 0.0f64;
    for beta in [0.0, 0.5, 1.0] {
        for spec in small_specs(4) {
            let model = Ansatz::from_spec(&spec).unwrap();
            let params = random_for(&spec, 29);
            let d = exact_sampler(&model, &params, Target::Diagonal).unwrap().enumerate();
            let q = exact_sampler(&model, &params, Target::OffDiagonal).unwrap().enumerate();
            let g = grad_free_energy(&model, &params, &ham, beta, &d, &q).unwrap().gradient;
            let mut theta = params.clone();
            for i in 0..params.len() {
                let fd = stencil(&mut |dx| {
                    theta[i] = params[i] + dx;
                    let f = exact_ansatz_free_energy(&model, &theta, &ham, beta).unwrap().free_energy;
                    theta[i] = params[i];
                    renyi_vmc::C64::new(f, 0.0)
                })
                .re;
                worst_f = worst_f.max((fd - g[i]).abs() / g[i].abs().max(1.0));
            }
        }
    }
    verdict(
        worst_log <= 1e-6 && worst_f <= 1e-6,
        format!("log-derivatives: {n_params} comparisons, max rel. error {worst_log:.1e}; ∂F_R (β_R ∈ {{0, 0.5, 1}}): max rel. error {worst_f:.1e}"),
    )
}

// 4 ─────────────────────────────────────────────────────────────────────────

fn estimator_consistency() -> Verdict {
    let draws = 100_000;
    let (mut inside, mut total) = (0, 0);
    let mut worst_z = 0.0f64;
    for case in 0..40u64 {
        let n = 4 + (case as usize % 5);
        let spec = small_specs(n).swap_remove(case as usize % 4);
        let model = Ansatz::from_spec(&spec).unwrap();
        let params = random_for(&spec, 1000 + case);
        let geom = chain(n);
        let ham = tfim(geom.clone(), 1.05);
        let mx = transverse_magnetization(&geom);
        let rho = brute_force_rho(&model, &params, BRUTE_FORCE_CAP).unwrap().normalized();
        let dense = |op: &dyn Operator| -> f64 {
            let m = dense_matrix(op, BRUTE_FORCE_CAP).unwrap().map(|x| renyi_vmc::C64::new(x, 0.0));
            (m * &rho).trace().re
        };
        let exact = [dense(&ham), (&rho * &rho).trace().re, dense(&mx)];
        let sampler = exact_sampler(&model, &params, Target::Diagonal).unwrap();
        let a = sampler.draw(draws, 2 * case);
        let b = sampler.draw(draws, 2 * case + 1);
        let est = [
            estimate_observable(&model, &params, &ham, &a).unwrap(),
            estimate_purity(&model, &params, &a, &b).unwrap().purity,
            estimate_observable(&model, &params, &mx, &a).unwrap(),
        ];
        for (e, x) in est.iter().zip(exact) {
            let z = e.z_score(x).abs();
            worst_z = worst_z.max(z);
            inside += (z <= 3.0) as usize;
            total += 1;
        }
    }
    let frac = inside as f64 / total as f64;
    verdict(
        frac >= 0.95,
        format!("{inside}/{total} estimates (E, Γ, M_x over 40 cases) within 3 SE ({:.1}%), worst |z| {worst_z:.2}", 100.0 * frac),
    )
}

// 5 ─────────────────────────────────────────────────────────────────────────

fn sampler_stationarity() -> Verdict {
    let mut worst = 0.0f64;
    for spec in small_specs(3) {
        let model = Ansatz::from_spec(&spec).unwrap();
        let params = random_for(&spec, 5);
        for target in [Target::Diagonal, Target::OffDiagonal] {
            let k = metropolis_kernel(&model, &params, target).unwrap();
            let pi = exact_sampler(&model, &params, target).unwrap().probability_vector();
            let row = DMatrix::from_row_slice(1, pi.len(), &pi);
            let moved = &row * &k;
            worst = worst.max(moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    verdict(worst <= 1e-10, format!("4 ansätze × {{diag ρ, |ρ_ss′|²}} at N = 3: max |πK − π| {worst:.1e}"))
}

// 6 ─────────────────────────────────────────────────────────────────────────

fn problem_for(geom: &Geometry, hx: f64) -> Problem {
    Problem { hamiltonian: tfim(geom.clone(), hx), observables: standard_observables(geom) }
}

fn end_to_end() -> Verdict {
    let geom = chain(8);
    let problem = problem_for(&geom, 1.05);
    let spectrum = Spectrum::new(&problem.hamiltonian, 14, false).unwrap();
    let spec = AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&geom, 8, 2));
    let sampling = Sampling::Markov(SamplerConfig { chains: 16, samples_per_chain: 64, burn_in: 100, ..Default::default() });
    let config = OptimizerConfig { max_iterations: 600, convergence_threshold: 0.0, ..Default::default() };
    let options = RunOptions { exact_final: true, ..Default::default() };
    let betas = [0.2, 0.5, 1.0];
    let start = Instant::now();
    let points = sweep_beta(&spec, &problem, &betas, &sampling, &config, 1, options, &mut |_, _, _| Ok(())).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in &points {
        let target = exact_renyi(&spectrum, p.beta_r).unwrap().free_energy;
        let fin = p.outcome.final_estimates.as_ref().unwrap();
        let exact = fin.exact.as_ref().unwrap().free_energy;
        let rel = ((exact - target) / target).abs();
        ok &= rel <= 0.01;
        parts.push(format!(
            "β_R={}: F_R {exact:.4} (MC {:.4}±{:.4}) vs {target:.4}, rel. error {:.2}%",
            p.beta_r,
            fin.free_energy.mean,
            fin.free_energy.std_err,
            100.0 * rel
        ));
    }
    parts.push(format!("{:.0} s", start.elapsed().as_secs_f64()));
    verdict(ok, parts.join("; "))
}

// 7 ─────────────────────────────────────────────────────────────────────────

struct Beta0Case {
    name: &'static str,
    spec: AnsatzSpec,
    config: OptimizerConfig,
    samples_per_chain: usize,
}

fn beta0_cases() -> Vec<Beta0Case> {
    let geom = chain(8);
    let base = OptimizerConfig { convergence_threshold: 0.0, final_samples: 1024, warmup: 10, ..Default::default() };
    vec![
        Beta0Case {
            name: "MPDO D=2",
            spec: AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&geom, 2, 2)),
            config: OptimizerConfig { max_iterations: 400, decay_time: 50.0, ..base.clone() },
            samples_per_chain: 32,
        },
        Beta0Case {
            name: "SBDO n_s=2 D=2",
            spec: AnsatzSpec::Sbdo(SbdoSpec::snake(&geom, 2, 2, 2).unwrap()),
            config: OptimizerConfig { max_iterations: 400, decay_time: 50.0, ..base.clone() },
            samples_per_chain: 32,
        },
        Beta0Case {
            name: "EPDO w=2 χ=4",
            spec: AnsatzSpec::Epdo(EpdoSpec::for_geometry(&geom, 2, 4).unwrap()),
            config: OptimizerConfig { max_iterations: 2000, learning_rate: 0.02, decay_time: 200.0, ..base.clone() },
            samples_per_chain: 128,
        },
        Beta0Case {
            name: "RBM α=β=1",
            spec: AnsatzSpec::Rbm(RbmSpec::with_densities(8, 1.0, 1.0).unwrap()),
            config: OptimizerConfig { max_iterations: 3000, learning_rate: 0.03, decay_time: 300.0, ..base },
            samples_per_chain: 64,
        },
    ]
}

fn infinite_temperature() -> Verdict {
    let geom = chain(8);
    let problem = problem_for(&geom, 1.05);
    let options = RunOptions { exact_final: true, ..Default::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for case in beta0_cases() {
        let sampling =
            Sampling::Markov(SamplerConfig { chains: 8, samples_per_chain: case.samples_per_chain, burn_in: 50, ..Default::default() });
        let start = Instant::now();
        let out = run_optimization(&case.spec, &problem, 0.0, &sampling, &case.config, 3, None, options, &mut |_, _| Ok(())).unwrap();
        let s2 = out.final_estimates.unwrap().exact.unwrap().renyi_entropy / 8.0;
        let deficit = 2f64.ln() - s2;
        ok &= deficit.abs() <= 1e-3;
        parts.push(format!("{}: log2 − S₂/N = {deficit:.1e} ({:.0} s)", case.name, start.elapsed().as_secs_f64()));
    }
    verdict(ok, parts.join("; "))
}

// 8 ─────────────────────────────────────────────────────────────────────────

fn relative_error(spec: &AnsatzSpec, problem: &Problem, target: f64, seed: u64, config: &OptimizerConfig, sampling: &Sampling) -> f64 {
    let options = RunOptions { exact_final: true, ..Default::default() };
    let out = run_optimization(spec, problem, 1.0, sampling, config, seed, None, options, &mut |_, _| Ok(())).unwrap();
    let f = out.final_estimates.unwrap().exact.unwrap().free_energy;
    ((f - target) / target).abs()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn bond_dimension_scaling() -> Verdict {
    if !full_run() {
        return Verdict::Skip("several hours on one core; set RENYI_VMC_FULL=1".into());
    }
    let geom = chain(10);
    let problem = problem_for(&geom, 1.05);
    let target = exact_renyi(&Spectrum::new(&problem.hamiltonian, 14, false).unwrap(), 1.0).unwrap().free_energy;
    let sampling = Sampling::Markov(SamplerConfig { chains: 16, samples_per_chain: 64, burn_in: 100, ..Default::default() });
    let config = OptimizerConfig { max_iterations: 1000, convergence_threshold: 0.0, ..Default::default() };
    let mpdo: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&d| {
            median(
                (0..3)
                    .map(|s| {
                        relative_error(&AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&geom, d, 2)), &problem, target, s, &config, &sampling)
                    })
                    .collect(),
            )
        })
        .collect();
    let rbm: Vec<f64> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&a| {
            median(
                (0..3)
                    .map(|s| {
                        relative_error(
                            &AnsatzSpec::Rbm(RbmSpec::with_densities(10, a, a).unwrap()),
                            &problem,
                            target,
                            s,
                            &config,
                            &sampling,
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    let decreasing = mpdo.windows(2).all(|w| w[1] < w[0]) && mpdo[2] < 0.005;
    let (lo, hi) = rbm.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let saturated = hi < 2.0 * lo;
    let pct = |v: &[f64]| v.iter().map(|x| format!("{:.2}%", 100.0 * x)).collect::<Vec<_>>().join(", ");
    verdict(decreasing && saturated, format!("median rel. F_R error, MPDO D=2,4,8: {}; RBM α=β=1,2,3: {}", pct(&mpdo), pct(&rbm)))
}

// 9 ─────────────────────────────────────────────────────────────────────────

fn two_dimensional_stretch() -> Verdict {
    if !full_run() {
        return Verdict::Skip("stretch goal, not gated; set RENYI_VMC_FULL=1".into());
    }
    let geom = Geometry::square(4, 4).unwrap();
    let problem =
        Problem { hamiltonian: build_hamiltonian(geom.clone(), 1.0, 0.0, 3.0).unwrap(), observables: standard_observables(&geom) };
    let sampling = Sampling::Markov(SamplerConfig { chains: 16, samples_per_chain: 64, burn_in: 200, ..Default::default() });
    let config = OptimizerConfig { max_iterations: 1500, convergence_threshold: 0.0, ..Default::default() };
    let specs = [
        ("RBM α=β=1", AnsatzSpec::Rbm(RbmSpec::with_densities(16, 1.0, 1.0).unwrap()), -20.43),
        ("SnakeSBS n_s=2 D=8", AnsatzSpec::Sbdo(SbdoSpec::snake(&geom, 2, 8, 2).unwrap()), -20.42),
        ("SnakeSBS n_s=4 D=8", AnsatzSpec::Sbdo(SbdoSpec::snake(&geom, 4, 8, 2).unwrap()), -20.765),
        ("MPS D=32", AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&geom, 32, 2)), -20.813),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec, reference) in specs {
        let out = run_optimization(&spec, &problem, 0.4, &sampling, &config, 1, None, RunOptions::default(), &mut |_, _| Ok(())).unwrap();
        let f = out.final_estimates.unwrap().free_energy;
        let rel = ((f.mean - reference) / reference).abs();
        ok &= rel <= 0.01;
        parts.push(format!("{name}: {:.3}±{:.3} (reference {reference})", f.mean, f.std_err));
    }
    verdict(ok, parts.join("; "))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "oracle correctness", oracle_correctness),
        (2, "construction validity", construction_validity),
        (3, "gradient fidelity", gradient_fidelity),
        (4, "estimator consistency", estimator_consistency),
        (5, "sampler stationarity", sampler_stationarity),
        (6, "end-to-end optimization vs oracle", end_to_end),
        (7, "β_R = 0 limit", infinite_temperature),
        (8, "bond-dimension convergence vs RBM saturation", bond_dimension_scaling),
        (9, "2D stretch", two_dimensional_stretch),
    ];
    let selected: Option<Vec<u32>> =
        std::env::var("RENYI_VMC_CRITERIA").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // `cargo test -- --list` and friends pass flags; there are no sub-tests
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    for (id, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let line = match run() {
            Verdict::Pass(d) => format!("criterion {id} ({name}): PASS — {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                format!("criterion {id} ({name}): FAIL — {d}")
            }
            Verdict::Skip(d) => format!("criterion {id} ({name}): SKIP — {d}"),
        };
        println!("{line}");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
