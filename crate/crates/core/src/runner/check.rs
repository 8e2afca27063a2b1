//! Verification battery for a configured ansatz at small `N`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{brute_force_rho, log_derivative, rbm_cosh_as_string, Ansatz, AnsatzSpec, DensityModel, LogAmplitude, BRUTE_FORCE_CAP};
use crate::estimator::{estimate_observable, estimate_purity};
use crate::lattice::{dense_matrix, Operator};
use crate::optimizer::Problem;
use crate::sampler::{exact_sampler, metropolis_kernel, Target, EXACT_CAP};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured error, in the units of `tolerance`.
    pub error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: error <= tolerance, error, tolerance }
    }
}

/// Fault injection for exercising the battery itself.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CheckHooks {
    /// Scales every analytic log-derivative by `1 + 1e-3` before comparison.
    pub corrupt_gradient: bool,
}

fn random_config(n: usize, rng: &mut impl Rng) -> Vec<i8> {
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

/// `log ρ(θ′) − log ρ(θ)` with the phase difference wrapped to (−π, π].
fn log_ratio(a: &LogAmplitude, b: &LogAmplitude) -> C64 {
    let d = a.phase - b.phase;
    let wrapped = d - (2.0 * std::f64::consts::PI) * (d / (2.0 * std::f64::consts::PI)).round();
    C64::new(a.log_modulus - b.log_modulus, wrapped)
}

fn gradient_check(model: &Ansatz, params: &[f64], hooks: CheckHooks, rng: &mut ChaCha8Rng) -> f64 {
    let n = model.n_sites();
    let p = model.n_params();
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut theta = params.to_vec();
    for _ in 0..3 {
        let (s, sp) = (random_config(n, rng), random_config(n, rng));
        let (base, Some(mut analytic)) = log_derivative(model, params, &s, &sp) else { continue };
        if hooks.corrupt_gradient {
            analytic.iter_mut().for_each(|g| *g *= 1.0 + 1e-3);
        }
        let indices: Vec<usize> = if p <= 256 { (0..p).collect() } else { (0..64).map(|_| rng.gen_range(0..p)).collect() };
        for i in indices {
            let mut at = |delta: f64| {
                theta[i] = params[i] + delta;
                let v = log_ratio(&model.log_element(&theta, &s, &sp), &base);
                theta[i] = params[i];
                v
            };
            let fd = (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h);
            let err = (fd - analytic[i]).norm() / analytic[i].norm().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

fn hermitian_checks(model: &Ansatz, params: &[f64]) -> Result<(f64, f64)> {
    let rho = brute_force_rho(model, params, BRUTE_FORCE_CAP)?.normalized();
    let asym = (&rho - rho.adjoint()).norm() / rho.norm();
    let eig = rho.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((asym, (-min / max).max(0.0)))
}

fn estimator_checks(model: &Ansatz, params: &[f64], problem: &Problem) -> Result<(f64, f64)> {
    let n = model.n_sites();
    let rho = brute_force_rho(model, params, BRUTE_FORCE_CAP)?.normalized();
    let h = dense_matrix(&problem.hamiltonian, BRUTE_FORCE_CAP)?.map(|x| C64::new(x, 0.0));
    let exact_e = (&h * &rho).trace().re;
    let exact_purity = (&rho * &rho).trace().re;
    let all = exact_sampler(model, params, Target::Diagonal)?.enumerate();
    let e = estimate_observable(model, params, &problem.hamiltonian, &all)?.mean;
    let purity = estimate_purity(model, params, &all, &all)?.purity.mean;
    let e_err = (e - exact_e).abs() / exact_e.abs().max(n as f64);
    Ok((e_err, (purity - exact_purity).abs() / exact_purity))
}

fn stationarity(model: &Ansatz, params: &[f64], target: Target) -> Result<f64> {
    let k = metropolis_kernel(model, params, target)?;
    let pi = exact_sampler(model, params, target)?.probability_vector();
    let row = DMatrix::from_row_slice(1, pi.len(), &pi);
    let moved = &row * &k;
    Ok(moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Rebuilds RBM elements from 2×2 cosh strings and compares them with the
/// closed form.
fn cosh_check(model: &Ansatz, params: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
    let layout = model.layout();
    let blocks: std::collections::HashMap<&str, &[f64]> = layout.unpack(params).into_iter().collect();
    let c = |v: &[f64], i: usize| C64::new(v[2 * i], v[2 * i + 1]);
    let n = model.n_sites();
    let (vb, hb, hw, ab, aw) =
        (blocks["visible_bias"], blocks["hidden_bias"], blocks["hidden_weights"], blocks["ancilla_bias"], blocks["ancilla_weights"]);
    let (nh, na) = (hb.len() / 2, ab.len() / 2);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let (s, sp) = (random_config(n, rng), random_config(n, rng));
        let mut log = C64::new(0.0, 0.0);
        for j in 0..n {
            log += c(vb, j) * s[j] as f64 + c(vb, j).conj() * sp[j] as f64;
        }
        for k in 0..nh {
            let w: Vec<C64> = (0..n).map(|j| c(hw, k * n + j)).collect();
            let string = rbm_cosh_as_string(c(hb, k), &w);
            log += string.trace(&s).ln() + string.trace(&sp).conj().ln();
        }
        for k in 0..na {
            let mut w: Vec<C64> = (0..n).map(|j| c(aw, k * n + j)).collect();
            w.extend((0..n).map(|j| c(aw, k * n + j).conj()));
            let joint: Vec<i8> = s.iter().chain(&sp).cloned().collect();
            log += rbm_cosh_as_string(c(ab, k) + c(ab, k).conj(), &w).trace(&joint).ln();
        }
        let direct = model.log_element(params, &s, &sp);
        let rebuilt = LogAmplitude::from_log_complex(log);
        worst = worst.max(log_ratio(&rebuilt, &direct).norm());
    }
    Ok(worst)
}

/// Runs every check that applies to `spec`. Requires `N ≤ 10`; pair-kernel
/// stationarity is included for `N ≤ 5`.
pub fn run_checks(spec: &AnsatzSpec, params: &[f64], problem: &Problem, seed: u64, hooks: CheckHooks) -> Result<Vec<CheckResult>> {
    let model = Ansatz::from_spec(spec)?;
    let n = model.n_sites();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap { what: "check battery", n, cap: BRUTE_FORCE_CAP });
    }
    if problem.hamiltonian.n_sites() != n {
        return Err(Error::Incompatible("ansatz and Hamiltonian have different site counts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (asym, negativity) = hermitian_checks(&model, params)?;
    out.push(CheckResult::new("hermiticity", asym, 1e-12));
    out.push(CheckResult::new("positivity", negativity, 1e-10));
    out.push(CheckResult::new("gradient_vs_finite_difference", gradient_check(&model, params, hooks, &mut rng), 1e-6));
    let (e_err, p_err) = estimator_checks(&model, params, problem)?;
    out.push(CheckResult::new("energy_vs_brute_force", e_err, 1e-10));
    out.push(CheckResult::new("purity_vs_brute_force", p_err, 1e-10));
    out.push(CheckResult::new("diagonal_kernel_stationarity", stationarity(&model, params, Target::Diagonal)?, 1e-10));
    if n <= EXACT_CAP / 2 {
        out.push(CheckResult::new("pair_kernel_stationarity", stationarity(&model, params, Target::OffDiagonal)?, 1e-10));
    }
    if matches!(spec, AnsatzSpec::Rbm(_)) {
        out.push(CheckResult::new("rbm_cosh_identity", cosh_check(&model, params, &mut rng)?, 1e-10));
    }
    Ok(out)
}
