//! Purification-based density-matrix ansätze.
//!
//! Every ansatz returns unnormalized elements `ρ_ss′` in log form together
//! with analytic derivatives. Tensor-network ansätze carry real parameters,
//! the RBM carries complex parameters stored as `(re, im)` pairs. All of them
//! are Hermitian and positive semidefinite for any parameter values.

mod chain;
pub mod checkpoint;
mod epdo;
mod rbm;
mod strings;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{self, Geometry, GeometryKind};
use crate::{Error, Result, C64};

pub use chain::{LogReal, MatrixString};
pub use epdo::{default_plaquettes, Epdo};
pub use rbm::{log_2cosh, rbm_cosh_as_string, CoshString, Rbm};
pub use strings::{snake_strings, StringProduct};

/// Largest system [`brute_force_rho`] materializes by default.
pub const BRUTE_FORCE_CAP: usize = 10;

/// `ρ_ss′ = exp(log_modulus + i·phase)`; `log_modulus = -inf` is an exact
/// zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogAmplitude {
    pub log_modulus: f64,
    pub phase: f64,
}

fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::PI;
    let mut p = phi % (2.0 * PI);
    if p <= -PI {
        p += 2.0 * PI;
    } else if p > PI {
        p -= 2.0 * PI;
    }
    p
}

impl LogAmplitude {
    pub const ZERO: LogAmplitude = LogAmplitude { log_modulus: f64::NEG_INFINITY, phase: 0.0 };

    pub fn from_log_real(v: LogReal) -> Self {
        if v.is_zero() {
            return Self::ZERO;
        }
        let phase = if v.negative { std::f64::consts::PI } else { 0.0 };
        Self { log_modulus: v.log, phase }
    }

    pub fn from_log_complex(z: C64) -> Self {
        if z.re == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        Self { log_modulus: z.re, phase: wrap_phase(z.im) }
    }

    pub fn is_zero(&self) -> bool {
        self.log_modulus == f64::NEG_INFINITY
    }

    /// `ρ · e^{-shift}` as a complex number.
    pub fn to_complex_shifted(&self, shift: f64) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        C64::from_polar((self.log_modulus - shift).exp(), self.phase)
    }

    /// `ρ_a / ρ_b`.
    pub fn ratio(&self, other: &LogAmplitude) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        C64::from_polar((self.log_modulus - other.log_modulus).exp(), self.phase - other.phase)
    }
}

/// One named tensor inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn new(blocks: Vec<ParamBlock>) -> Self {
        Self { blocks }
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn unpack<'a>(&self, params: &'a [f64]) -> Vec<(&str, &'a [f64])> {
        self.blocks.iter().map(|b| (b.name.as_str(), &params[b.offset..b.offset + b.len()])).collect()
    }

    pub fn pack(&self, blocks: &[(&str, &[f64])]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.total_len()];
        if blocks.len() != self.blocks.len() {
            return Err(Error::Incompatible("block count does not match layout".into()));
        }
        for (b, (name, data)) in self.blocks.iter().zip(blocks) {
            if b.name != *name || b.len() != data.len() {
                return Err(Error::Incompatible(format!("block {name} does not match layout entry {}", b.name)));
            }
            out[b.offset..b.offset + b.len()].copy_from_slice(data);
        }
        Ok(out)
    }
}

/// Common interface of all density-matrix ansätze.
pub trait DensityModel: Send + Sync {
    fn n_sites(&self) -> usize;

    fn n_params(&self) -> usize;

    fn layout(&self) -> ParamLayout;

    /// Whether parameters are complex numbers stored as `(re, im)` pairs.
    fn is_complex(&self) -> bool {
        false
    }

    fn log_element(&self, params: &[f64], s: &[i8], sp: &[i8]) -> LogAmplitude;

    /// Writes `∂ρ_ss′/∂θ · e^{-scale}` into `grad` and returns the element
    /// together with `scale`. The scaled form stays finite when `ρ_ss′ = 0`
    /// while its derivative does not vanish.
    fn element_gradient(&self, params: &[f64], s: &[i8], sp: &[i8], grad: &mut [C64]) -> (LogAmplitude, f64);
}

/// Log-derivative `Δ_θ(s, s′) = ∂ log ρ_ss′ / ∂θ`; `None` for an exact zero
/// element.
pub fn log_derivative<M: DensityModel + ?Sized>(model: &M, params: &[f64], s: &[i8], sp: &[i8]) -> (LogAmplitude, Option<Vec<C64>>) {
    let mut grad = vec![C64::new(0.0, 0.0); model.n_params()];
    let (amp, scale) = model.element_gradient(params, s, sp, &mut grad);
    if amp.is_zero() {
        return (amp, None);
    }
    let k = C64::from_polar((scale - amp.log_modulus).exp(), -amp.phase);
    grad.iter_mut().for_each(|g| *g *= k);
    (amp, Some(grad))
}

/// Product rule for `ρ = Π_p f_p`. Given each factor and the log-scale of its
/// own derivative, returns a global scale `C` and multipliers `m_p` with
/// `∂ρ = e^C Σ_p m_p ∂̃f_p`.
pub(crate) fn product_rule(factors: &[LogReal], grad_scales: &[f64]) -> (f64, Vec<f64>) {
    let zeros: Vec<usize> = factors.iter().enumerate().filter(|(_, f)| f.is_zero()).map(|(i, _)| i).collect();
    let mut mult = vec![0.0; factors.len()];
    if zeros.len() >= 2 {
        return (0.0, mult);
    }
    let finite_sum: f64 = factors.iter().filter(|f| !f.is_zero()).map(|f| f.log).sum();
    let negatives = factors.iter().filter(|f| !f.is_zero() && f.negative).count();
    let mut terms: Vec<(usize, f64, bool)> = Vec::new();
    for (p, f) in factors.iter().enumerate() {
        if !zeros.is_empty() && zeros[0] != p {
            continue;
        }
        if !grad_scales[p].is_finite() {
            continue;
        }
        let (others, neg) =
            if f.is_zero() { (finite_sum, negatives % 2 == 1) } else { (finite_sum - f.log, (negatives - f.negative as usize) % 2 == 1) };
        terms.push((p, grad_scales[p] + others, neg));
    }
    let scale = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if scale == f64::NEG_INFINITY {
        return (0.0, mult);
    }
    for (p, c, neg) in terms {
        let v = (c - scale).exp();
        mult[p] = if neg { -v } else { v };
    }
    (scale, mult)
}

/// Matrix product density operator along a given site ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpdoSpec {
    pub n_sites: usize,
    pub bond_dim: usize,
    pub kraus_dim: usize,
    /// Order in which the chain visits the sites (a snake on square lattices).
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpdoSpec {
    pub n_sites: usize,
    pub plaquettes: Vec<Vec<usize>>,
    pub kraus_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbdoSpec {
    pub n_sites: usize,
    pub strings: Vec<Vec<usize>>,
    pub bond_dim: usize,
    pub kraus_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmSpec {
    pub n_sites: usize,
    pub n_hidden: usize,
    pub n_ancilla: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnsatzSpec {
    Mpdo(MpdoSpec),
    Epdo(EpdoSpec),
    Sbdo(SbdoSpec),
    Rbm(RbmSpec),
}

fn check_permutation_subset(n: usize, sites: &[usize], what: &str) -> Result<()> {
    let mut seen = vec![false; n];
    for &s in sites {
        if s >= n {
            return Err(Error::Config(format!("{what} references site {s} outside lattice of {n} sites")));
        }
        if seen[s] {
            return Err(Error::Config(format!("{what} visits site {s} twice")));
        }
        seen[s] = true;
    }
    Ok(())
}

fn check_cover(n: usize, groups: &[Vec<usize>], what: &str) -> Result<()> {
    let mut covered = vec![false; n];
    for g in groups {
        for &s in g {
            if s < n {
                covered[s] = true;
            }
        }
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::Config(format!("site {missing} is not covered by any {what}")));
    }
    Ok(())
}

impl MpdoSpec {
    /// Chain order on a chain, horizontal snake on a square lattice.
    pub fn for_geometry(geometry: &Geometry, bond_dim: usize, kraus_dim: usize) -> Self {
        let (lx, ly) = geometry.extents();
        let order = match geometry.kind() {
            GeometryKind::Chain => (0..lx).collect(),
            GeometryKind::Square => snake_strings(lx, ly, 1).expect("n_s = 1 is supported").remove(0),
        };
        Self { n_sites: geometry.n_sites(), bond_dim, kraus_dim, order }
    }
}

impl EpdoSpec {
    pub fn for_geometry(geometry: &Geometry, width: usize, kraus_dim: usize) -> Result<Self> {
        Ok(Self { n_sites: geometry.n_sites(), plaquettes: default_plaquettes(geometry, width)?, kraus_dim })
    }
}

impl SbdoSpec {
    pub fn snake(geometry: &Geometry, n_strings: usize, bond_dim: usize, kraus_dim: usize) -> Result<Self> {
        let (lx, ly) = geometry.extents();
        Ok(Self { n_sites: geometry.n_sites(), strings: snake_strings(lx, ly, n_strings)?, bond_dim, kraus_dim })
    }
}

impl RbmSpec {
    /// `N_h = round(αN)`, `N_a = round(βN)`.
    pub fn with_densities(n_sites: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config("RBM densities must be positive".into()));
        }
        let count = |d: f64| ((d * n_sites as f64).round() as usize).max(1);
        Ok(Self { n_sites, n_hidden: count(alpha), n_ancilla: count(beta) })
    }
}

impl AnsatzSpec {
    pub fn n_sites(&self) -> usize {
        match self {
            AnsatzSpec::Mpdo(s) => s.n_sites,
            AnsatzSpec::Epdo(s) => s.n_sites,
            AnsatzSpec::Sbdo(s) => s.n_sites,
            AnsatzSpec::Rbm(s) => s.n_sites,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AnsatzSpec::Mpdo(_) => "mpdo",
            AnsatzSpec::Epdo(_) => "epdo",
            AnsatzSpec::Sbdo(_) => "sbdo",
            AnsatzSpec::Rbm(_) => "rbm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bond_kraus = |d: usize, chi: usize| -> Result<()> {
            if d == 0 || chi == 0 {
                return Err(Error::Config("bond and Kraus dimensions must be at least 1".into()));
            }
            if chi > d * d {
                return Err(Error::Config(format!("Kraus dimension {chi} exceeds D² = {}", d * d)));
            }
            Ok(())
        };
        if self.n_sites() == 0 {
            return Err(Error::Config("ansatz needs at least one site".into()));
        }
        match self {
            AnsatzSpec::Mpdo(s) => {
                bond_kraus(s.bond_dim, s.kraus_dim)?;
                check_permutation_subset(s.n_sites, &s.order, "MPDO order")?;
                if s.order.len() != s.n_sites {
                    return Err(Error::Config("MPDO order must visit every site".into()));
                }
            }
            AnsatzSpec::Sbdo(s) => {
                bond_kraus(s.bond_dim, s.kraus_dim)?;
                if s.strings.is_empty() {
                    return Err(Error::Config("SBDO needs at least one string".into()));
                }
                for (i, st) in s.strings.iter().enumerate() {
                    if st.is_empty() {
                        return Err(Error::Config(format!("string {i} is empty")));
                    }
                    check_permutation_subset(s.n_sites, st, &format!("string {i}"))?;
                }
                check_cover(s.n_sites, &s.strings, "string")?;
            }
            AnsatzSpec::Epdo(s) => {
                if s.kraus_dim == 0 {
                    return Err(Error::Config("Kraus dimension must be at least 1".into()));
                }
                for (i, p) in s.plaquettes.iter().enumerate() {
                    if p.is_empty() || p.len() > 20 {
                        return Err(Error::Config(format!("plaquette {i} must have between 1 and 20 sites")));
                    }
                    check_permutation_subset(s.n_sites, p, &format!("plaquette {i}"))?;
                }
                check_cover(s.n_sites, &s.plaquettes, "plaquette")?;
            }
            AnsatzSpec::Rbm(s) => {
                if s.n_hidden == 0 || s.n_ancilla == 0 {
                    return Err(Error::Config("RBM needs at least one hidden and one ancilla unit".into()));
                }
            }
        }
        Ok(())
    }
}

/// A constructed ansatz ready for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Ansatz {
    Mpdo(StringProduct),
    Epdo(Epdo),
    Sbdo(StringProduct),
    Rbm(Rbm),
}

impl Ansatz {
    pub fn from_spec(spec: &AnsatzSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            AnsatzSpec::Mpdo(s) => Ansatz::Mpdo(StringProduct::new(s.n_sites, &[s.order.clone()], s.bond_dim, s.kraus_dim)),
            AnsatzSpec::Sbdo(s) => Ansatz::Sbdo(StringProduct::new(s.n_sites, &s.strings, s.bond_dim, s.kraus_dim)),
            AnsatzSpec::Epdo(s) => Ansatz::Epdo(Epdo::new(s.n_sites, s.plaquettes.clone(), s.kraus_dim)),
            AnsatzSpec::Rbm(s) => Ansatz::Rbm(Rbm::new(s.n_sites, s.n_hidden, s.n_ancilla)),
        })
    }

    fn inner(&self) -> &dyn DensityModel {
        match self {
            Ansatz::Mpdo(m) | Ansatz::Sbdo(m) => m,
            Ansatz::Epdo(m) => m,
            Ansatz::Rbm(m) => m,
        }
    }
}

impl DensityModel for Ansatz {
    fn n_sites(&self) -> usize {
        self.inner().n_sites()
    }

    fn n_params(&self) -> usize {
        self.inner().n_params()
    }

    fn layout(&self) -> ParamLayout {
        self.inner().layout()
    }

    fn is_complex(&self) -> bool {
        self.inner().is_complex()
    }

    fn log_element(&self, params: &[f64], s: &[i8], sp: &[i8]) -> LogAmplitude {
        self.inner().log_element(params, s, sp)
    }

    fn element_gradient(&self, params: &[f64], s: &[i8], sp: &[i8], grad: &mut [C64]) -> (LogAmplitude, f64) {
        self.inner().element_gradient(params, s, sp, grad)
    }
}

/// Initial parameters. Tensor strings start from copy-to-ancilla identities
/// (the maximally mixed state when `χ ≥ 2`) plus Gaussian noise of width
/// `scale`; plaquette tensors and RBM weights are i.i.d. Gaussian of width
/// `scale`. Deterministic in `seed`.
pub fn init(spec: &AnsatzSpec, seed: u64, scale: f64) -> Result<Vec<f64>> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::Config("initialization scale must be finite and non-negative".into()));
    }
    let ansatz = Ansatz::from_spec(spec)?;
    let mut params = vec![0.0; ansatz.n_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match &ansatz {
        Ansatz::Mpdo(m) | Ansatz::Sbdo(m) => m.init_identity(&mut params, scale, &mut rng),
        Ansatz::Epdo(m) => {
            if scale > 0.0 {
                m.init_random(&mut params, scale, &mut rng)
            }
        }
        Ansatz::Rbm(m) => {
            if scale > 0.0 {
                m.init_random(&mut params, scale, &mut rng)
            }
        }
    }
    Ok(params)
}

/// Embeds optimized small-model parameters into a larger model of the same
/// kind and lattice. With `noise = 0` the large model reproduces the small
/// model's `ρ` up to a global constant.
pub fn grow(params_small: &[f64], spec_small: &AnsatzSpec, spec_large: &AnsatzSpec, seed: u64, noise: f64) -> Result<Vec<f64>> {
    let small = Ansatz::from_spec(spec_small)?;
    let large = Ansatz::from_spec(spec_large)?;
    if params_small.len() != small.n_params() {
        return Err(Error::Incompatible("parameter vector does not match the small specification".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; large.n_params()];
    let bad = |msg: &str| Err(Error::Incompatible(msg.to_string()));
    match (spec_small, spec_large, &small, &large) {
        (AnsatzSpec::Mpdo(a), AnsatzSpec::Mpdo(b), Ansatz::Mpdo(sm), Ansatz::Mpdo(lg)) => {
            if a.n_sites != b.n_sites || a.order != b.order || a.bond_dim > b.bond_dim || a.kraus_dim > b.kraus_dim {
                return bad("MPDO growth needs the same ordering and non-decreasing D and χ");
            }
            lg.embed(&mut params, sm, params_small, noise, &mut rng);
        }
        (AnsatzSpec::Sbdo(a), AnsatzSpec::Sbdo(b), Ansatz::Sbdo(sm), Ansatz::Sbdo(lg)) => {
            if a.n_sites != b.n_sites || a.strings != b.strings || a.bond_dim > b.bond_dim || a.kraus_dim > b.kraus_dim {
                return bad("SBDO growth needs the same strings and non-decreasing D and χ");
            }
            lg.embed(&mut params, sm, params_small, noise, &mut rng);
        }
        (AnsatzSpec::Epdo(a), AnsatzSpec::Epdo(b), Ansatz::Epdo(sm), Ansatz::Epdo(lg)) => {
            if a.n_sites != b.n_sites || a.plaquettes != b.plaquettes || a.kraus_dim > b.kraus_dim {
                return bad("EPDO growth needs the same plaquettes and non-decreasing χ");
            }
            lg.embed(&mut params, sm, params_small, noise, &mut rng);
        }
        (AnsatzSpec::Rbm(a), AnsatzSpec::Rbm(b), Ansatz::Rbm(sm), Ansatz::Rbm(lg)) => {
            if a.n_sites != b.n_sites || a.n_hidden > b.n_hidden || a.n_ancilla > b.n_ancilla {
                return bad("RBM growth needs the same lattice and non-decreasing densities");
            }
            lg.embed(&mut params, sm, params_small, noise, &mut rng);
        }
        _ => return bad("growth requires both specifications to be of the same kind"),
    }
    Ok(params)
}

/// `ρ = e^{log_scale} · matrix`, rows indexed by `s`, columns by `s′`.
#[derive(Clone, Debug)]
pub struct DenseDensity {
    pub matrix: DMatrix<C64>,
    pub log_scale: f64,
}

impl DenseDensity {
    /// `ρ / tr ρ`.
    pub fn normalized(&self) -> DMatrix<C64> {
        let tr = self.matrix.trace();
        &self.matrix / tr
    }
}

/// Materializes every element of `ρ`. Test and oracle use only.
pub fn brute_force_rho<M: DensityModel + ?Sized>(model: &M, params: &[f64], cap: usize) -> Result<DenseDensity> {
    let n = model.n_sites();
    if n > cap {
        return Err(Error::SizeCap { what: "brute-force density matrix", n, cap });
    }
    let dim = 1usize << n;
    let configs: Vec<Vec<i8>> = (0..dim).map(|i| lattice::configuration_from_index(i, n)).collect();
    let rows = crate::par::map_indexed(dim, |r| (0..dim).map(|c| model.log_element(params, &configs[r], &configs[c])).collect::<Vec<_>>());
    let log_scale = rows.iter().flatten().map(|a| a.log_modulus).fold(f64::NEG_INFINITY, f64::max);
    let log_scale = if log_scale.is_finite() { log_scale } else { 0.0 };
    let matrix = DMatrix::from_fn(dim, dim, |r, c| rows[r][c].to_complex_shifted(log_scale));
    Ok(DenseDensity { matrix, log_scale })
}
