//! Three small operations for the static page in `www/`. Every function
//! returns a JSON string; errors become a JS exception with the message.

use renyi_vmc::ansatz::{snake_strings, AnsatzSpec, MpdoSpec};
use renyi_vmc::lattice::{build_hamiltonian, standard_observables, Geometry};
use renyi_vmc::optimizer::{run_optimization, OptimizerConfig, Problem, RunOptions, Sampling};
use renyi_vmc::oracle::{exact_gibbs, exact_renyi, Spectrum};
use serde_json::json;
use wasm_bindgen::prelude::*;

// keeps the page responsive: 2^10 = 1024 levels diagonalize in about a second
const CURVE_CAP: usize = 10;
const OPTIMIZE_CAP: usize = 6;

fn js(e: renyi_vmc::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Energy and entropy per site of the Gibbs and Rényi ensembles on a chain
/// for `steps + 1` evenly spaced β in `[0, beta_max]`.
#[wasm_bindgen]
pub fn curves(n: usize, h_z: f64, h_x: f64, beta_max: f64, steps: usize) -> Result<String, JsError> {
    let ham = build_hamiltonian(Geometry::chain(n).map_err(js)?, 1.0, h_z, h_x).map_err(js)?;
    let spectrum = Spectrum::new(&ham, CURVE_CAP, false).map_err(js)?;
    let steps = steps.max(1);
    let mut rows = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let beta = beta_max * i as f64 / steps as f64;
        let g = exact_gibbs(&spectrum, beta).map_err(js)?;
        let r = exact_renyi(&spectrum, beta).map_err(js)?;
        let per = |x: f64| x / n as f64;
        rows.push(json!({
            "beta": beta,
            "gibbs_e": per(g.energy), "gibbs_s": per(g.entropy),
            "renyi_e": per(r.energy), "renyi_s2": per(r.entropy),
        }));
    }
    Ok(serde_json::Value::Array(rows).to_string())
}

/// Site orders of the first `n_s` snake strings on an `lx × ly` lattice.
#[wasm_bindgen]
pub fn snakes(lx: usize, ly: usize, n_s: usize) -> Result<String, JsError> {
    Ok(json!(snake_strings(lx, ly, n_s).map_err(js)?).to_string())
}

/// Optimize an MPDO on a short chain with exact enumeration instead of
/// sampling, so the trace is noise-free. Returns the per-iteration `F_R`
/// and the exact optimum for comparison.
#[wasm_bindgen]
pub fn optimize(n: usize, bond_dim: usize, beta_r: f64, iterations: usize, learning_rate: f64, seed: u64) -> Result<String, JsError> {
    if n > OPTIMIZE_CAP {
        return Err(JsError::new(&format!("the demo enumerates all states; use at most {OPTIMIZE_CAP} sites")));
    }
    let geom = Geometry::chain(n).map_err(js)?;
    let hamiltonian = build_hamiltonian(geom.clone(), 1.0, 0.5, 1.05).map_err(js)?;
    let target = exact_renyi(&Spectrum::new(&hamiltonian, OPTIMIZE_CAP, false).map_err(js)?, beta_r).map_err(js)?;
    let problem = Problem { hamiltonian, observables: standard_observables(&geom) };
    let spec = AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&geom, bond_dim, 2));
    let config = OptimizerConfig {
        max_iterations: iterations,
        learning_rate,
        entropy_every: 1,
        warmup: 10,
        decay_time: 200.0,
        convergence_threshold: 0.0,
        ..Default::default()
    };
    let mut trace = Vec::new();
    let outcome = run_optimization(&spec, &problem, beta_r, &Sampling::Exact, &config, seed, None, RunOptions::default(), &mut |r, _| {
        trace.push(json!({ "iteration": r.iteration, "free_energy": r.free_energy, "energy": r.energy }));
        Ok(())
    })
    .map_err(js)?;
    let fin = outcome.final_estimates.as_ref().map(|f| f.free_energy.mean);
    Ok(json!({ "trace": trace, "final": fin, "oracle": target.free_energy, "parameters": outcome.params.len() }).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_start_at_infinite_temperature() {
        let rows: serde_json::Value = serde_json::from_str(&curves(4, 0.5, 1.05, 2.0, 4).unwrap()).unwrap();
        assert_eq!(rows.as_array().unwrap().len(), 5);
        assert!((rows[0]["renyi_s2"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((rows[0]["gibbs_s"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn snakes_cover_the_lattice() {
        let paths: Vec<Vec<usize>> = serde_json::from_str(&snakes(3, 2, 2).unwrap()).unwrap();
        assert_eq!(paths.len(), 2);
        for p in paths {
            let mut sorted = p.clone();
            sorted.sort();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn optimize_approaches_the_oracle() {
        let out: serde_json::Value = serde_json::from_str(&optimize(4, 2, 0.5, 150, 0.05, 1).unwrap()).unwrap();
        let trace = out["trace"].as_array().unwrap();
        let first = trace[0]["free_energy"].as_f64().unwrap();
        let last = out["final"].as_f64().unwrap();
        assert!(last < first && last >= out["oracle"].as_f64().unwrap() - 1e-9);
    }
}
