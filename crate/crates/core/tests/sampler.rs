mod common;

use std::collections::HashMap;

use common::*;
use renyi_vmc::ansatz::*;
use renyi_vmc::lattice::Geometry;
use renyi_vmc::sampler::*;

fn mpdo(n: usize) -> AnsatzSpec {
    AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&Geometry::chain(n).unwrap(), 2, 2))
}

fn empirical(samples: &Samples) -> HashMap<usize, f64> {
    let mut counts = HashMap::new();
    for k in 0..samples.len() {
        let (s, sp) = samples.pair(k);
        *counts.entry(state_index(samples.target, s, sp)).or_insert(0.0) += 1.0 / samples.len() as f64;
    }
    counts
}

fn total_variation(p: &[f64], q: &HashMap<usize, f64>) -> f64 {
    0.5 * p.iter().enumerate().map(|(i, &x)| (x - q.get(&i).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

#[test]
fn maximally_mixed_diagonal_always_accepts() {
    let spec = mpdo(5);
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = init(&spec, 0, 0.0).unwrap();
    let config = SamplerConfig { chains: 3, burn_in: 5, thinning: 2, samples_per_chain: 50, seed: 1 };
    let samples = run_chains(&config, Target::Diagonal, &model, &params).unwrap();
    assert!(samples.acceptance.iter().all(|&a| a == 1.0));
}

#[test]
fn maximally_mixed_pairs_stay_on_diagonal() {
    let spec = mpdo(4);
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = init(&spec, 0, 0.0).unwrap();
    let mut chain = ChainState::new(&model, &params, Target::OffDiagonal, 3, 0);
    chain.burned_in = true;
    for _ in 0..2000 {
        step_offdiagonal(&mut chain, &model, &params);
        assert_eq!(chain.s, chain.sp);
    }
    assert_eq!(chain.accepted[SINGLE_FLIP], 0);
    assert!(chain.proposed[SINGLE_FLIP] > 0);
    assert_eq!(chain.accepted[JOINT_FLIP], chain.proposed[JOINT_FLIP]);
}

#[test]
fn pure_state_accepts_every_pair_move() {
    let spec = AnsatzSpec::Rbm(RbmSpec { n_sites: 4, n_hidden: 2, n_ancilla: 2 });
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = init(&spec, 0, 0.0).unwrap();
    let config = SamplerConfig { chains: 2, burn_in: 2, thinning: 1, samples_per_chain: 200, seed: 9 };
    let samples = run_chains(&config, Target::OffDiagonal, &model, &params).unwrap();
    assert!(samples.acceptance.iter().all(|&a| a == 1.0));
}

#[test]
fn cached_density_stays_consistent() {
    for (k, spec) in small_specs(4).iter().enumerate() {
        let model = Ansatz::from_spec(spec).unwrap();
        let params = random_for(spec, k as u64);
        for target in [Target::Diagonal, Target::OffDiagonal] {
            let mut chain = ChainState::new(&model, &params, target, 5, k);
            for _ in 0..300 {
                match target {
                    Target::Diagonal => step_diagonal(&mut chain, &model, &params),
                    Target::OffDiagonal => step_offdiagonal(&mut chain, &model, &params),
                }
                assert!(chain.cache_error(&model, &params) <= 1e-10);
            }
        }
    }
}

#[test]
fn kernels_are_stationary_and_balanced() {
    for (k, spec) in small_specs(3).iter().enumerate() {
        let model = Ansatz::from_spec(spec).unwrap();
        let params = random_for(spec, 40 + k as u64);
        for target in [Target::Diagonal, Target::OffDiagonal] {
            let kernel = metropolis_kernel(&model, &params, target).unwrap();
            let pi = exact_sampler(&model, &params, target).unwrap().probability_vector();
            let size = pi.len();
            for r in 0..size {
                assert!((kernel.row(r).sum() - 1.0).abs() < 1e-12);
            }
            for j in 0..size {
                let flowed: f64 = (0..size).map(|i| pi[i] * kernel[(i, j)]).sum();
                assert!((flowed - pi[j]).abs() <= 1e-10, "{} {target:?}", spec.kind_name());
            }
            for i in 0..size {
                for j in 0..size {
                    assert!((pi[i] * kernel[(i, j)] - pi[j] * kernel[(j, i)]).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn diagonal_chain_matches_target_distribution() {
    let spec = mpdo(3);
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = random_for(&spec, 17);
    let config = SamplerConfig { chains: 8, burn_in: 50, thinning: 1, samples_per_chain: 25_000, seed: 4 };
    let samples = run_chains(&config, Target::Diagonal, &model, &params).unwrap();
    assert_eq!(samples.len(), 200_000);
    let exact = exact_sampler(&model, &params, Target::Diagonal).unwrap().probability_vector();
    let tv = total_variation(&exact, &empirical(&samples));
    assert!(tv < 0.02, "tv = {tv}");
}

#[test]
fn pair_chain_matches_target_distribution() {
    let spec = AnsatzSpec::Rbm(RbmSpec { n_sites: 3, n_hidden: 3, n_ancilla: 3 });
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = random_for(&spec, 23);
    let config = SamplerConfig { chains: 8, burn_in: 50, thinning: 1, samples_per_chain: 50_000, seed: 2 };
    let samples = run_chains(&config, Target::OffDiagonal, &model, &params).unwrap();
    let exact = exact_sampler(&model, &params, Target::OffDiagonal).unwrap();
    let tv = total_variation(&exact.probability_vector(), &empirical(&samples));
    assert!(tv < 0.03, "tv = {tv}");
    let iid = exact.draw(400_000, 8);
    let cross = total_variation(&exact.probability_vector(), &empirical(&iid));
    assert!(cross < 0.03);
}

#[test]
fn runs_are_deterministic_and_shaped() {
    let spec = small_specs(5)[2].clone();
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = random_for(&spec, 1);
    let config = SamplerConfig { chains: 4, burn_in: 10, thinning: 1, samples_per_chain: 100, seed: 77 };
    for target in [Target::Diagonal, Target::OffDiagonal] {
        let a = run_chains(&config, target, &model, &params).unwrap();
        let b = run_chains(&config, target, &model, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 400);
        assert_eq!(a.acceptance.len(), 4);
        let c = run_chains(&SamplerConfig { seed: 78, ..config.clone() }, target, &model, &params).unwrap();
        assert_ne!(a.configs, c.configs);
    }
    assert!(run_chains(&SamplerConfig { chains: 0, ..config }, Target::Diagonal, &model, &params).is_err());
}

#[test]
fn exact_sampler_of_uniform_target() {
    let spec = mpdo(6);
    let model = Ansatz::from_spec(&spec).unwrap();
    let params = init(&spec, 0, 0.0).unwrap();
    let sampler = exact_sampler(&model, &params, Target::Diagonal).unwrap();
    let draws = sampler.draw(100_000, 3);
    assert_eq!(draws.len(), 100_000);
    let entropy: f64 = empirical(&draws).values().map(|p| -p * p.ln()).sum();
    let max = 6.0 * 2f64.ln();
    assert!((entropy - max).abs() < 0.01 * max);
    assert_eq!(sampler.draw(17, 0).len(), 17);
    let pairs = exact_sampler(&model, &params, Target::OffDiagonal).unwrap();
    assert_eq!(pairs.support.len(), 64, "only diagonal pairs carry weight");
}

#[test]
fn exact_sampler_rejects_large_systems() {
    let spec = AnsatzSpec::Rbm(RbmSpec { n_sites: 11, n_hidden: 1, n_ancilla: 1 });
    let model = Ansatz::from_spec(&spec).unwrap();
    assert!(exact_sampler(&model, &random_for(&spec, 0), Target::Diagonal).is_err());
}
