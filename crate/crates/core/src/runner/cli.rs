use std::path::{Path, PathBuf};

use serde::Serialize;

use super::check::{run_checks, CheckHooks, CheckResult};
use super::output::*;
use super::{RunConfig, CODE_VERSION};
use crate::ansatz::init;
use crate::lattice::Operator;
use crate::optimizer::{final_estimates, run_optimization, sweep_beta, RunOptions, Status};
use crate::oracle::{exact_gibbs, exact_renyi, renyi_kkt_violation, EnsembleResult, Spectrum};
use crate::{Error, Result};

/// Largest `N` for the oracle (dense eigenvectors of a `2^N` matrix).
pub const ORACLE_CAP: usize = 12;

/// Scale of the random parameters used by `check`.
const CHECK_SCALE: f64 = 0.3;

#[derive(Clone, Debug, Default)]
pub struct CliOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub oracle: bool,
    pub checkpoint_every: Option<usize>,
    pub hooks: CheckHooks,
}

impl CliOptions {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Self { config: config.into(), ..Default::default() }
    }

    /// Loads the configuration with command-line overrides applied and
    /// creates the output directory.
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(every) = self.checkpoint_every {
            config.output.checkpoint_every = every;
        }
        if let Some(out) = &self.out {
            config.output.dir = out.display().to_string();
        }
        let dir = PathBuf::from(&config.output.dir);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("config.toml"), config.to_toml_string()?)?;
        Ok((config, dir))
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub summary: FinalRecord,
}

impl RunReport {
    pub fn aborted(&self) -> bool {
        matches!(self.summary.status, Status::Aborted(_))
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub out_dir: PathBuf,
    pub points: Vec<FinalRecord>,
}

impl SweepReport {
    pub fn aborted(&self) -> bool {
        self.points.iter().any(|p| matches!(p.status, Status::Aborted(_)))
    }
}

fn header(config: &RunConfig) -> RecordHeader {
    RecordHeader { config_hash: config.config_hash(), version: CODE_VERSION.into(), seed: config.seed }
}

fn iteration_line(h: &RecordHeader, beta_r: f64, record: &crate::optimizer::IterationRecord) -> IterationLine {
    IterationLine { kind: "iteration".into(), header: h.clone(), beta_r, record: record.clone() }
}

fn run_options(config: &RunConfig) -> RunOptions {
    RunOptions {
        wall_time: config.output.wall_time,
        exact_final: config.geometry().map(|g| g.n_sites() <= crate::ansatz::BRUTE_FORCE_CAP).unwrap_or(false),
    }
}

/// Optimizes at the single `β_R` of the configuration. Writes
/// `config.toml`, `records.ndjson`, `checkpoint.ckpt` and `summary.json`.
pub fn cli_run(opts: &CliOptions) -> Result<RunReport> {
    let (config, dir) = opts.resolve()?;
    let betas = config.objective.beta_r.values();
    if betas.len() != 1 {
        return Err(Error::Config(format!("run needs a single objective.beta_r, got {} values (use sweep)", betas.len())));
    }
    let beta = betas[0];
    let spec = config.ansatz_spec()?;
    let problem = config.problem()?;
    let hdr = header(&config);
    let mut records = RecordWriter::create(&dir.join("records.ndjson"))?;
    let every = config.output.checkpoint_every;
    let ckpt = checkpoint_path(&dir, None);
    let outcome = run_optimization(
        &spec,
        &problem,
        beta,
        &config.sampling(),
        &config.optimizer,
        config.seed,
        None,
        run_options(&config),
        &mut |r, params| {
            records.write(&iteration_line(&hdr, beta, r))?;
            if every > 0 && (r.iteration + 1) % every == 0 {
                save_checkpoint(&ckpt, &spec, params, config.seed)?;
            }
            Ok(())
        },
    )?;
    save_checkpoint(&ckpt, &spec, &outcome.params, config.seed)?;
    let summary = FinalRecord {
        kind: "final".into(),
        header: hdr,
        beta_r: beta,
        iterations: outcome.records.len(),
        status: outcome.status,
        estimates: outcome.final_estimates,
    };
    records.write(&summary)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunReport { out_dir: dir, summary })
}

#[derive(Serialize)]
struct OracleValues {
    e: f64,
    s2: f64,
    f: f64,
    observables: Vec<f64>,
}

fn oracle_values(config: &RunConfig, beta: f64, spectrum: &Spectrum) -> Result<OracleValues> {
    let problem = config.problem()?;
    let r = exact_renyi(spectrum, beta)?;
    let observables = problem.observables.iter().map(|o| spectrum.expectation(o, &r.weights)).collect::<Result<Vec<_>>>()?;
    Ok(OracleValues { e: r.energy, s2: r.entropy, f: r.free_energy, observables })
}

fn check_oracle_size(n: usize) -> Result<()> {
    if n > ORACLE_CAP {
        return Err(Error::SizeCap { what: "exact-diagonalization oracle", n, cap: ORACLE_CAP });
    }
    Ok(())
}

/// Optimizes at every `β_R` of the configuration, warm-starting each point
/// from the previous one, and writes `sweep.csv` (plus the files of `run`).
pub fn cli_sweep(opts: &CliOptions) -> Result<SweepReport> {
    let (config, dir) = opts.resolve()?;
    let betas = config.objective.beta_r.values();
    let spec = config.ansatz_spec()?;
    let problem = config.problem()?;
    let n = problem.hamiltonian.n_sites();
    let spectrum = if opts.oracle {
        check_oracle_size(n)?;
        Some(Spectrum::new(&problem.hamiltonian, ORACLE_CAP, true)?)
    } else {
        None
    };
    let hdr = header(&config);
    let mut records = RecordWriter::create(&dir.join("records.ndjson"))?;
    let every = config.output.checkpoint_every;
    let points = sweep_beta(
        &spec,
        &problem,
        &betas,
        &config.sampling(),
        &config.optimizer,
        config.seed,
        run_options(&config),
        &mut |beta, r, params| {
            records.write(&iteration_line(&hdr, beta, r))?;
            if every > 0 && (r.iteration + 1) % every == 0 {
                let i = betas.iter().position(|b| *b == beta).unwrap_or(0);
                save_checkpoint(&checkpoint_path(&dir, Some(i)), &spec, params, config.seed)?;
            }
            Ok(())
        },
    )?;

    let nf = n as f64;
    let mut finals = Vec::new();
    let mut rows = Vec::new();
    for (i, point) in points.into_iter().enumerate() {
        save_checkpoint(&checkpoint_path(&dir, Some(i)), &spec, &point.outcome.params, config.seed)?;
        let fin = FinalRecord {
            kind: "final".into(),
            header: hdr.clone(),
            beta_r: point.beta_r,
            iterations: point.outcome.records.len(),
            status: point.outcome.status,
            estimates: point.outcome.final_estimates,
        };
        records.write(&fin)?;
        let est = fin.estimates.as_ref();
        let per_site = |f: &dyn Fn(&crate::optimizer::FinalEstimates) -> crate::estimator::Estimate| {
            est.map(|e| {
                let v = f(e);
                (v.mean / nf, v.std_err / nf)
            })
        };
        let obs = |name: &str| est.and_then(|e| e.observables.iter().find(|(k, _)| k == name).map(|(_, v)| (v.mean, v.std_err)));
        let mut row = vec![format!("{}", point.beta_r)];
        for pair in
            [per_site(&|e| e.energy), per_site(&|e| e.renyi_entropy), per_site(&|e| e.free_energy), obs("m_x"), obs("c_xx"), obs("c_zz")]
        {
            row.push(cell(pair.map(|p| p.0)));
            row.push(cell(pair.map(|p| p.1)));
        }
        row.push(fin.iterations.to_string());
        row.push(match &fin.status {
            Status::Converged => "converged".into(),
            Status::MaxIterations => "max_iterations".into(),
            Status::Aborted(_) => "aborted".into(),
        });
        if let Some(spectrum) = &spectrum {
            let o = oracle_values(&config, point.beta_r, spectrum)?;
            row.push(cell(Some(o.e / nf)));
            row.push(cell(Some(o.s2 / nf)));
            row.push(cell(Some(o.f / nf)));
            row.extend(o.observables.iter().map(|v| cell(Some(*v))));
            let f = est.map(|e| e.exact.as_ref().map(|x| x.free_energy).unwrap_or(e.free_energy.mean));
            row.push(cell(f.map(|f| ((f - o.f) / o.f).abs())));
        }
        rows.push(row);
        finals.push(fin);
    }
    let mut columns: Vec<&str> = SWEEP_COLUMNS.to_vec();
    if spectrum.is_some() {
        columns.extend_from_slice(SWEEP_ORACLE_COLUMNS);
    }
    write_csv(&dir.join("sweep.csv"), &columns, &rows)?;
    write_json(&dir.join("summary.json"), &finals)?;
    Ok(SweepReport { out_dir: dir, points: finals })
}

fn oracle_grid(config: &RunConfig) -> Vec<f64> {
    config.objective.oracle_grid.clone().unwrap_or_else(|| (0..=40).map(|i| i as f64 / 10.0).collect())
}

/// Exact Gibbs and Rényi curves over the oracle grid, written to
/// `oracle.csv`. Returns the path and the number of rows.
pub fn cli_oracle(opts: &CliOptions) -> Result<(PathBuf, usize)> {
    let (config, dir) = opts.resolve()?;
    let problem = config.problem()?;
    let n = problem.hamiltonian.n_sites();
    check_oracle_size(n)?;
    let spectrum = Spectrum::new(&problem.hamiltonian, ORACLE_CAP, true)?;
    let nf = n as f64;
    let mut rows = Vec::new();
    for beta in oracle_grid(&config) {
        for result in [exact_gibbs(&spectrum, beta)?, exact_renyi(&spectrum, beta)?] {
            rows.push(oracle_row(&result, &spectrum, &problem.observables, nf)?);
        }
    }
    let path = dir.join("oracle.csv");
    write_csv(&path, ORACLE_COLUMNS, &rows)?;
    Ok((path, rows.len()))
}

fn oracle_row<O: Operator>(r: &EnsembleResult, spectrum: &Spectrum, observables: &[O], nf: f64) -> Result<Vec<String>> {
    use crate::oracle::EnsembleKind;
    let mut row = vec![
        match r.kind {
            EnsembleKind::Gibbs => "gibbs".to_string(),
            EnsembleKind::Renyi => "renyi".to_string(),
        },
        format!("{}", r.beta),
        cell(Some(r.energy / nf)),
        cell(Some(r.entropy / nf)),
        cell(Some(r.free_energy / nf)),
    ];
    for o in observables {
        row.push(cell(Some(spectrum.expectation(o, &r.weights)?)));
    }
    row.push(match r.kind {
        EnsembleKind::Gibbs => String::new(),
        EnsembleKind::Renyi => (renyi_kkt_violation(&spectrum.eigenvalues, r.beta, &r.weights) < 1e-8).to_string(),
    });
    Ok(row)
}

/// Runs the verification battery on freshly initialized random parameters
/// and writes `check.json`.
pub fn cli_check(opts: &CliOptions) -> Result<Vec<CheckResult>> {
    let (config, dir) = opts.resolve()?;
    let spec = config.ansatz_spec()?;
    let params = init(&spec, config.seed, CHECK_SCALE)?;
    let results = run_checks(&spec, &params, &config.problem()?, config.seed, opts.hooks)?;
    write_json(&dir.join("check.json"), &results)?;
    Ok(results)
}

/// Re-evaluates the final estimates of a saved checkpoint (used by tests and
/// for resuming analysis).
pub fn evaluate_checkpoint(config: &RunConfig, path: &Path) -> Result<crate::optimizer::FinalEstimates> {
    let ckpt = crate::ansatz::checkpoint::Checkpoint::load(path)?;
    let model = crate::ansatz::Ansatz::from_spec(&ckpt.header.ansatz)?;
    let beta = config.objective.beta_r.values()[0];
    final_estimates(&model, &ckpt.params, &config.problem()?, beta, &config.sampling(), config.optimizer.final_samples, config.seed, true)
}
