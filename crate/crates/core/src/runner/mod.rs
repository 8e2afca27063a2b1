//! Experiment configuration and the command-line operations.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! lattice = "chain"   # or "square" (then `ly` is required)
//! lx = 8
//! j = 1.0
//! h_z = 0.5
//! h_x = 1.05
//!
//! [ansatz]
//! kind = "mpdo"       # mpdo | epdo | sbdo | rbm
//! bond_dim = 8
//! kraus_dim = 2
//!
//! [objective]
//! beta_r = 1.0        # or a list for sweeps
//!
//! [sampler]           # optional
//! mode = "markov"     # or "exact" for small systems
//! chains = 16
//! samples_per_chain = 256
//!
//! [optimizer]         # optional, see `OptimizerConfig`
//! method = "adam"
//!
//! [output]            # optional
//! dir = "out"
//! checkpoint_every = 100
//! ```
//!
//! Unknown keys are rejected, and every problem in a file is reported at
//! once rather than one per attempt.

mod check;
mod cli;
mod output;

pub use check::{run_checks, CheckHooks, CheckResult};
pub use cli::{cli_check, cli_oracle, cli_run, cli_sweep, evaluate_checkpoint, CliOptions, RunReport, SweepReport, ORACLE_CAP};
pub use output::{FinalRecord, IterationLine, RecordHeader, ORACLE_COLUMNS, SWEEP_COLUMNS, SWEEP_ORACLE_COLUMNS};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{AnsatzSpec, EpdoSpec, MpdoSpec, RbmSpec, SbdoSpec};
use crate::lattice::{build_hamiltonian, standard_observables, Geometry};
use crate::optimizer::{OptimizerConfig, Problem, Sampling};
use crate::sampler::SamplerConfig;
use crate::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Chain,
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lattice: LatticeKind,
    pub lx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ly: Option<usize>,
    pub j: f64,
    pub h_z: f64,
    pub h_x: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    Mpdo,
    Epdo,
    Sbdo,
    Rbm,
}

/// Hyperparameters used by each kind:
///
/// | kind | keys |
/// |------|------|
/// | mpdo | `bond_dim`, `kraus_dim` |
/// | epdo | `width`, `kraus_dim` (default `2^(plaquette size)`) |
/// | sbdo | `strings` (1, 2 or 4), `bond_dim`, `kraus_dim` |
/// | rbm  | `alpha`, `beta` (hidden and ancilla densities) |
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSection {
    pub kind: AnsatzKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaList {
    One(f64),
    Many(Vec<f64>),
}

impl BetaList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BetaList::One(b) => vec![*b],
            BetaList::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub beta_r: BetaList,
    /// Inverse temperatures for `oracle`; defaults to 0, 0.1, …, 4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_grid: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    Markov,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub mode: SamplerMode,
    pub chains: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub samples_per_chain: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            mode: SamplerMode::Markov,
            chains: d.chains,
            burn_in: d.burn_in,
            thinning: d.thinning,
            samples_per_chain: d.samples_per_chain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Iterations between checkpoints; `0` writes only the final one.
    pub checkpoint_every: usize,
    /// Adds elapsed seconds to iteration records. Off by default so that
    /// reruns are byte-identical.
    pub wall_time: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), checkpoint_every: 100, wall_time: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub ansatz: AnsatzSection,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputSection,
}

/// `(section, allowed keys, required keys)`; `""` is the top level.
const SCHEMA: &[(&str, &[&str], &[&str])] = &[
    ("", &["seed", "model", "ansatz", "objective", "sampler", "optimizer", "output"], &["model", "ansatz", "objective"]),
    ("model", &["lattice", "lx", "ly", "j", "h_z", "h_x"], &["lattice", "lx", "j", "h_z", "h_x"]),
    ("ansatz", &["kind", "bond_dim", "kraus_dim", "width", "strings", "alpha", "beta"], &["kind"]),
    ("objective", &["beta_r", "oracle_grid"], &["beta_r"]),
    ("sampler", &["mode", "chains", "burn_in", "thinning", "samples_per_chain"], &[]),
    (
        "optimizer",
        &[
            "method",
            "learning_rate",
            "sr_shift",
            "max_iterations",
            "convergence_threshold",
            "convergence_window",
            "warmup",
            "decay_time",
            "entropy_every",
            "final_samples",
            "init_scale",
        ],
        &[],
    ),
    ("output", &["dir", "checkpoint_every", "wall_time"], &[]),
];

fn structural_errors(value: &toml::Value) -> Vec<String> {
    let mut errs = Vec::new();
    let Some(top) = value.as_table() else {
        return vec!["configuration must be a table".into()];
    };
    for (section, allowed, required) in SCHEMA {
        let table = if section.is_empty() {
            top
        } else {
            match top.get(*section) {
                Some(toml::Value::Table(t)) => t,
                Some(_) => {
                    errs.push(format!("[{section}] must be a table"));
                    continue;
                }
                None => continue,
            }
        };
        let prefix = if section.is_empty() { String::new() } else { format!("{section}.") };
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                errs.push(format!("unknown key `{prefix}{key}`"));
            }
        }
        for key in *required {
            if !table.contains_key(*key) {
                if section.is_empty() {
                    errs.push(format!("missing section [{key}]"));
                } else {
                    errs.push(format!("missing key `{prefix}{key}`"));
                }
            }
        }
    }
    errs
}

/// Drops unknown keys so that typed parsing can report its own problems
/// alongside them.
fn strip_unknown(value: &mut toml::Value) {
    let Some(top) = value.as_table_mut() else { return };
    for (section, allowed, _) in SCHEMA {
        let table = if section.is_empty() { Some(&mut *top) } else { top.get_mut(*section).and_then(|v| v.as_table_mut()) };
        if let Some(t) = table {
            t.retain(|k, _| allowed.iter().any(|a| *a == k));
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| Error::Validation(vec![format!("malformed TOML: {e}")]))?;
        let mut errs = structural_errors(&value);
        strip_unknown(&mut value);
        let missing_required = errs.iter().any(|e| e.starts_with("missing"));
        let config = if missing_required {
            None
        } else {
            match value.try_into::<RunConfig>() {
                Ok(c) => Some(c),
                Err(e) => {
                    errs.push(e.message().trim().to_string());
                    None
                }
            }
        };
        if let Some(c) = &config {
            errs.extend(c.validation_errors());
        }
        match config {
            Some(c) if errs.is_empty() => Ok(c),
            _ => Err(Error::Validation(errs)),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    /// Every semantic problem, in file order.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let m = &self.model;
        match (m.lattice, m.ly) {
            (LatticeKind::Chain, Some(_)) => errs.push("model.ly is only used by square lattices".into()),
            (LatticeKind::Square, None) => errs.push("model.ly is required for square lattices".into()),
            _ => {}
        }
        if let Err(e) = self.geometry() {
            errs.push(format!("model: {e}"));
        }
        for (name, v) in [("j", m.j), ("h_z", m.h_z), ("h_x", m.h_x)] {
            if !v.is_finite() {
                errs.push(format!("model.{name} must be finite"));
            }
        }

        let a = &self.ansatz;
        let (needs, uses): (&[&str], &[&str]) = match a.kind {
            AnsatzKind::Mpdo => (&["bond_dim", "kraus_dim"], &["bond_dim", "kraus_dim"]),
            AnsatzKind::Epdo => (&["width"], &["width", "kraus_dim"]),
            AnsatzKind::Sbdo => (&["strings", "bond_dim", "kraus_dim"], &["strings", "bond_dim", "kraus_dim"]),
            AnsatzKind::Rbm => (&["alpha", "beta"], &["alpha", "beta"]),
        };
        let present = [
            ("bond_dim", a.bond_dim.is_some()),
            ("kraus_dim", a.kraus_dim.is_some()),
            ("width", a.width.is_some()),
            ("strings", a.strings.is_some()),
            ("alpha", a.alpha.is_some()),
            ("beta", a.beta.is_some()),
        ];
        let kind = format!("{:?}", a.kind).to_lowercase();
        for (key, is_set) in present {
            if needs.contains(&key) && !is_set {
                errs.push(format!("ansatz.{key} is required for {kind}"));
            }
            if !uses.contains(&key) && is_set {
                errs.push(format!("ansatz.{key} is not used by {kind}"));
            }
        }
        if errs.iter().all(|e| !e.starts_with("ansatz.") && !e.starts_with("model")) {
            match self.ansatz_spec() {
                Ok(spec) => {
                    if let Err(e) = spec.validate() {
                        errs.push(format!("ansatz: {e}"));
                    }
                }
                Err(e) => errs.push(format!("ansatz: {e}")),
            }
        }

        let betas = self.objective.beta_r.values();
        if betas.is_empty() {
            errs.push("objective.beta_r is empty".into());
        }
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            errs.push("objective.beta_r values must be finite and non-negative".into());
        }
        if betas.windows(2).any(|w| !(w[0] < w[1])) {
            errs.push("objective.beta_r must be strictly ascending".into());
        }
        if let Some(grid) = &self.objective.oracle_grid {
            if grid.is_empty() || grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                errs.push("objective.oracle_grid must be a non-empty list of non-negative numbers".into());
            }
        }

        if self.sampler.mode == SamplerMode::Markov {
            match self.sampler_config().validate() {
                Err(Error::Validation(v)) => errs.extend(v),
                Err(e) => errs.push(e.to_string()),
                Ok(()) => {}
            }
        }
        errs.extend(self.optimizer.validation_errors());
        errs
    }

    pub fn geometry(&self) -> Result<Geometry> {
        match self.model.lattice {
            LatticeKind::Chain => Geometry::chain(self.model.lx),
            LatticeKind::Square => Geometry::square(self.model.lx, self.model.ly.unwrap_or(0)),
        }
    }

    pub fn ansatz_spec(&self) -> Result<AnsatzSpec> {
        let geom = self.geometry()?;
        let a = &self.ansatz;
        let need = |v: Option<usize>, key: &str| v.ok_or_else(|| Error::Config(format!("ansatz.{key} is required")));
        Ok(match a.kind {
            AnsatzKind::Mpdo => {
                AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&geom, need(a.bond_dim, "bond_dim")?, need(a.kraus_dim, "kraus_dim")?))
            }
            AnsatzKind::Epdo => {
                let width = need(a.width, "width")?;
                let mut spec = EpdoSpec::for_geometry(&geom, width, 1)?;
                spec.kraus_dim = a.kraus_dim.unwrap_or(1 << spec.plaquettes[0].len());
                AnsatzSpec::Epdo(spec)
            }
            AnsatzKind::Sbdo => AnsatzSpec::Sbdo(SbdoSpec::snake(
                &geom,
                need(a.strings, "strings")?,
                need(a.bond_dim, "bond_dim")?,
                need(a.kraus_dim, "kraus_dim")?,
            )?),
            AnsatzKind::Rbm => AnsatzSpec::Rbm(RbmSpec::with_densities(
                geom.n_sites(),
                a.alpha.ok_or_else(|| Error::Config("ansatz.alpha is required".into()))?,
                a.beta.ok_or_else(|| Error::Config("ansatz.beta is required".into()))?,
            )?),
        })
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            chains: s.chains,
            burn_in: s.burn_in,
            thinning: s.thinning,
            samples_per_chain: s.samples_per_chain,
            seed: self.seed,
        }
    }

    pub fn sampling(&self) -> Sampling {
        match self.sampler.mode {
            SamplerMode::Markov => Sampling::Markov(self.sampler_config()),
            SamplerMode::Exact => Sampling::Exact,
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let geom = self.geometry()?;
        Ok(Problem {
            observables: standard_observables(&geom),
            hamiltonian: build_hamiltonian(geom, self.model.j, self.model.h_z, self.model.h_x)?,
        })
    }

    /// SHA-256 over everything that determines the numbers except the seed:
    /// the model, ansatz, objective, sampler and optimizer sections.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            model: &'a ModelSection,
            ansatz: &'a AnsatzSection,
            objective: &'a ObjectiveSection,
            sampler: &'a SamplerSection,
            optimizer: &'a OptimizerConfig,
        }
        let canonical = serde_json::to_vec(&Hashed {
            model: &self.model,
            ansatz: &self.ansatz,
            objective: &self.objective,
            sampler: &self.sampler,
            optimizer: &self.optimizer,
        })
        .expect("configuration serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        lattice = "chain"
        lx = 4
        j = 1.0
        h_z = 0.5
        h_x = 1.05

        [ansatz]
        kind = "mpdo"
        bond_dim = 2
        kraus_dim = 2

        [objective]
        beta_r = 1.0
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.optimizer, OptimizerConfig::default());
        assert_eq!(c.output.checkpoint_every, 100);
        assert_eq!(c.objective.beta_r.values(), vec![1.0]);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::from_toml_str(MINIMAL).unwrap();
        c.objective.beta_r = BetaList::Many(vec![0.2, 0.5]);
        c.ansatz = AnsatzSection {
            kind: AnsatzKind::Rbm,
            bond_dim: None,
            kraus_dim: None,
            width: None,
            strings: None,
            alpha: Some(1.0),
            beta: Some(2.0),
        };
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn every_problem_is_reported() {
        let text = r#"
            sed = 3
            [model]
            lattice = "chain"
            lx = 4
            j = 1.0
            h_z = 0.5
            h_x = 1.05
            [ansatz]
            kind = "mpdo"
            bond_dim = 2
            kraus_dim = 2
            kraus_dimm = 3
            [objective]
            beta_r = [1.0, 0.5]
            [optimizer]
            learning_rate = -1.0
            sr_shift = 10.0
        "#;
        let Err(Error::Validation(errs)) = RunConfig::from_toml_str(text) else { panic!("expected validation errors") };
        let joined = errs.join("\n");
        for needle in ["`sed`", "`ansatz.kraus_dimm`", "ascending", "learning_rate", "sr_shift"] {
            assert!(joined.contains(needle), "{needle} missing from\n{joined}");
        }
        assert_eq!(errs.len(), 5);
    }

    #[test]
    fn missing_sections_and_misplaced_keys() {
        let Err(Error::Validation(errs)) = RunConfig::from_toml_str("[model]\nlattice = \"square\"\nlx = 3\nj = 1\nh_z = 0\nh_x = 1\n")
        else {
            panic!()
        };
        assert!(errs.iter().any(|e| e.contains("[ansatz]")));
        assert!(errs.iter().any(|e| e.contains("[objective]")));
        let text = MINIMAL.replace("kraus_dim = 2", "kraus_dim = 2\nalpha = 1.0").replace("lx = 4", "lx = 4\nly = 2");
        let Err(Error::Validation(errs)) = RunConfig::from_toml_str(&text) else { panic!() };
        assert!(errs.iter().any(|e| e.contains("ansatz.alpha is not used by mpdo")));
        assert!(errs.iter().any(|e| e.contains("model.ly")));
        let empty = MINIMAL.replace("beta_r = 1.0", "beta_r = []");
        let Err(Error::Validation(errs)) = RunConfig::from_toml_str(&empty) else { panic!() };
        assert!(errs.iter().any(|e| e.contains("empty")));
    }

    #[test]
    fn hash_ignores_seed_and_output() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.seed = 99;
        b.output.dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.model.h_x = 1.0;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn builds_every_ansatz_kind() {
        let base = RunConfig::from_toml_str(MINIMAL).unwrap();
        let none =
            AnsatzSection { kind: AnsatzKind::Mpdo, bond_dim: None, kraus_dim: None, width: None, strings: None, alpha: None, beta: None };
        let variants = [
            AnsatzSection { kind: AnsatzKind::Epdo, width: Some(2), ..none.clone() },
            AnsatzSection { kind: AnsatzKind::Sbdo, strings: Some(1), bond_dim: Some(2), kraus_dim: Some(2), ..none.clone() },
            AnsatzSection { kind: AnsatzKind::Rbm, alpha: Some(1.0), beta: Some(1.0), ..none.clone() },
        ];
        for a in variants {
            let c = RunConfig { ansatz: a, ..base.clone() };
            assert!(c.validation_errors().is_empty(), "{:?}", c.validation_errors());
            assert_eq!(c.ansatz_spec().unwrap().n_sites(), 4);
        }
        let c = RunConfig { ansatz: AnsatzSection { kind: AnsatzKind::Epdo, width: Some(2), ..none }, ..base };
        let AnsatzSpec::Epdo(spec) = c.ansatz_spec().unwrap() else { panic!() };
        assert_eq!(spec.kraus_dim, 4);
    }
}
