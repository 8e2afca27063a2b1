//! Restricted Boltzmann machine purification with hidden and ancilla layers.
//!
//! With complex visible biases `b^s`, hidden biases/weights `b^h`, `W^h` and
//! ancilla biases/weights `b^a`, `W^a`, summing the hidden layer and tracing
//! the ancillae gives
//!
//! ```text
//! log ρ_ss′ = Σ_j (b^s_j s_j + b̄^s_j s′_j)
//!           + Σ_i [ L(θ^h_i(s)) + conj L(θ^h_i(s′)) ]
//!           + Σ_k L(θ^a_k(s) + conj θ^a_k(s′))
//! ```
//!
//! with `L(z) = log 2cosh z` and `θ(x) = b + W·x`.
//!
//! Parameters are stored as interleaved `(re, im)` pairs in the order
//! `b^s (N) | b^h (N_h) | W^h (N_h×N) | b^a (N_a) | W^a (N_a×N)`, matrices
//! row-major. Gradients are `∂/∂Re θ` and `∂/∂Im θ` in the same layout.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DensityModel, LogAmplitude, ParamBlock, ParamLayout};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Rbm {
    n: usize,
    n_hidden: usize,
    n_ancilla: usize,
}

/// `log(2 cosh z)` without overflow.
pub fn log_2cosh(z: C64) -> C64 {
    let w = if z.re < 0.0 { -z } else { z };
    w + (C64::new(1.0, 0.0) + (-2.0 * w).exp()).ln()
}

struct Offsets {
    bs: usize,
    bh: usize,
    wh: usize,
    ba: usize,
    wa: usize,
    end: usize,
}

impl Rbm {
    pub fn new(n: usize, n_hidden: usize, n_ancilla: usize) -> Self {
        Self { n, n_hidden, n_ancilla }
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_ancilla(&self) -> usize {
        self.n_ancilla
    }

    fn offsets(&self) -> Offsets {
        let n = self.n;
        let bs = 0;
        let bh = bs + 2 * n;
        let wh = bh + 2 * self.n_hidden;
        let ba = wh + 2 * self.n_hidden * n;
        let wa = ba + 2 * self.n_ancilla;
        let end = wa + 2 * self.n_ancilla * n;
        Offsets { bs, bh, wh, ba, wa, end }
    }

    #[inline]
    fn c(params: &[f64], at: usize) -> C64 {
        C64::new(params[at], params[at + 1])
    }

    /// `θ_i(x) = b_i + Σ_j W_ij x_j` for one layer.
    fn fields(&self, params: &[f64], bias: usize, weights: usize, count: usize, x: &[i8]) -> Vec<C64> {
        (0..count)
            .map(|i| {
                let mut t = Self::c(params, bias + 2 * i);
                let row = weights + 2 * i * self.n;
                for (j, &xj) in x.iter().enumerate() {
                    let w = Self::c(params, row + 2 * j);
                    if xj > 0 {
                        t += w;
                    } else {
                        t -= w;
                    }
                }
                t
            })
            .collect()
    }

    fn log_value(&self, params: &[f64], s: &[i8], sp: &[i8]) -> (C64, Vec<C64>, Vec<C64>, Vec<C64>) {
        let o = self.offsets();
        let mut total = C64::new(0.0, 0.0);
        for j in 0..self.n {
            let b = Self::c(params, o.bs + 2 * j);
            total += b * s[j] as f64 + b.conj() * sp[j] as f64;
        }
        let hs = self.fields(params, o.bh, o.wh, self.n_hidden, s);
        let hsp = self.fields(params, o.bh, o.wh, self.n_hidden, sp);
        for (a, b) in hs.iter().zip(&hsp) {
            total += log_2cosh(*a) + log_2cosh(*b).conj();
        }
        let a_s = self.fields(params, o.ba, o.wa, self.n_ancilla, s);
        let a_sp = self.fields(params, o.ba, o.wa, self.n_ancilla, sp);
        let z: Vec<C64> = a_s.iter().zip(&a_sp).map(|(x, y)| x + y.conj()).collect();
        for zk in &z {
            total += log_2cosh(*zk);
        }
        (total, hs, hsp, z)
    }

    pub fn init_random<R: Rng>(&self, params: &mut [f64], scale: f64, rng: &mut R) {
        let dist = Normal::new(0.0, scale).expect("finite width");
        params.iter_mut().for_each(|x| *x = dist.sample(rng));
    }

    /// Copies `small` into the leading rows; new hidden/ancilla units get
    /// noise of width `noise` (zero for `noise = 0`).
    pub fn embed<R: Rng>(&self, params: &mut [f64], small: &Rbm, small_params: &[f64], noise: f64, rng: &mut R) {
        let dist = Normal::new(0.0, noise.max(0.0)).expect("finite width");
        let fill = |rng: &mut R| if noise > 0.0 { dist.sample(rng) } else { 0.0 };
        let (o, so) = (self.offsets(), small.offsets());
        params[o.bs..o.bh].copy_from_slice(&small_params[so.bs..so.bh]);
        for i in 0..self.n_hidden {
            for k in 0..2 {
                params[o.bh + 2 * i + k] = if i < small.n_hidden { small_params[so.bh + 2 * i + k] } else { fill(rng) };
            }
            for j in 0..2 * self.n {
                params[o.wh + 2 * i * self.n + j] = if i < small.n_hidden { small_params[so.wh + 2 * i * self.n + j] } else { fill(rng) };
            }
        }
        for k in 0..self.n_ancilla {
            for c in 0..2 {
                params[o.ba + 2 * k + c] = if k < small.n_ancilla { small_params[so.ba + 2 * k + c] } else { fill(rng) };
            }
            for j in 0..2 * self.n {
                params[o.wa + 2 * k * self.n + j] = if k < small.n_ancilla { small_params[so.wa + 2 * k * self.n + j] } else { fill(rng) };
            }
        }
    }
}

impl DensityModel for Rbm {
    fn n_sites(&self) -> usize {
        self.n
    }

    fn n_params(&self) -> usize {
        self.offsets().end
    }

    fn is_complex(&self) -> bool {
        true
    }

    fn layout(&self) -> ParamLayout {
        let o = self.offsets();
        let (n, h, a) = (self.n, self.n_hidden, self.n_ancilla);
        ParamLayout::new(vec![
            ParamBlock { name: "visible_bias".into(), offset: o.bs, shape: vec![n, 2] },
            ParamBlock { name: "hidden_bias".into(), offset: o.bh, shape: vec![h, 2] },
            ParamBlock { name: "hidden_weights".into(), offset: o.wh, shape: vec![h, n, 2] },
            ParamBlock { name: "ancilla_bias".into(), offset: o.ba, shape: vec![a, 2] },
            ParamBlock { name: "ancilla_weights".into(), offset: o.wa, shape: vec![a, n, 2] },
        ])
    }

    fn log_element(&self, params: &[f64], s: &[i8], sp: &[i8]) -> LogAmplitude {
        LogAmplitude::from_log_complex(self.log_value(params, s, sp).0)
    }

    fn element_gradient(&self, params: &[f64], s: &[i8], sp: &[i8], grad: &mut [C64]) -> (LogAmplitude, f64) {
        let (total, hs, hsp, z) = self.log_value(params, s, sp);
        let amp = LogAmplitude::from_log_complex(total);
        let phase = C64::from_polar(1.0, amp.phase);
        let o = self.offsets();
        let i = C64::new(0.0, 1.0);
        // Holomorphic (∂_w) and anti-holomorphic (∂_w̄) parts give
        // ∂/∂Re = ∂_w + ∂_w̄ and ∂/∂Im = i(∂_w − ∂_w̄).
        let mut put = |at: usize, dw: C64, dwbar: C64| {
            grad[at] = phase * (dw + dwbar);
            grad[at + 1] = phase * i * (dw - dwbar);
        };
        for j in 0..self.n {
            put(o.bs + 2 * j, C64::new(s[j] as f64, 0.0), C64::new(sp[j] as f64, 0.0));
        }
        for h in 0..self.n_hidden {
            let (ta, tb) = (hs[h].tanh(), hsp[h].tanh().conj());
            put(o.bh + 2 * h, ta, tb);
            for j in 0..self.n {
                put(o.wh + 2 * (h * self.n + j), ta * s[j] as f64, tb * sp[j] as f64);
            }
        }
        for k in 0..self.n_ancilla {
            let t = z[k].tanh();
            put(o.ba + 2 * k, t, t);
            for j in 0..self.n {
                put(o.wa + 2 * (k * self.n + j), t * s[j] as f64, t * sp[j] as f64);
            }
        }
        (amp, amp.log_modulus)
    }
}

/// The hidden factor `2cosh(b + Σ_j w_j s_j)` written as a trace of 2×2
/// diagonal matrices `diag(e^{w_j s_j + b/N}, e^{-w_j s_j - b/N})`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoshString {
    /// `[site][spin index (+1 → 0)]` → the two diagonal entries.
    pub diagonals: Vec<[[C64; 2]; 2]>,
}

pub fn rbm_cosh_as_string(bias: C64, weights: &[C64]) -> CoshString {
    let n = weights.len() as f64;
    let diagonals = weights
        .iter()
        .map(|&w| {
            let entry = |s: f64| {
                let x = w * s + bias / n;
                [x.exp(), (-x).exp()]
            };
            [entry(1.0), entry(-1.0)]
        })
        .collect();
    CoshString { diagonals }
}

impl CoshString {
    /// `tr Π_j A^{s_j}_j`.
    pub fn trace(&self, s: &[i8]) -> C64 {
        let mut d = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        for (m, &x) in self.diagonals.iter().zip(s) {
            let e = m[(x < 0) as usize];
            d[0] *= e[0];
            d[1] *= e[1];
        }
        d[0] + d[1]
    }
}
