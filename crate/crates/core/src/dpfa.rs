//! Deep Poisson factor analysis: Poisson count factorization whose binary
//! topic-usage matrix is the bottom layer of a sigmoid belief network.
//!
//! Generative model (Gamma distributions are shape–scale):
//!
//! ```text
//! φ_k ~ Dir(a_φ), r_k ~ Gamma(γ₀, 1/c₀), γ₀ ~ Gamma(e₀, 1/f₀), p_n ~ Beta(a₀, b₀)
//! h⁽ᴸ⁾_nk ~ Ber(σ(b⁽ᴸ⁾_k)),  h⁽ˡ⁾_nk ~ Ber(σ(h⁽ˡ⁺¹⁾_n w⁽ˡ⁾_k + b⁽ˡ⁾_k))
//! θ_nk ~ Gamma(r_k h⁽¹⁾_nk, p_n / (1 − p_n))      (θ_nk = 0 when h⁽¹⁾_nk = 0)
//! x_npk ~ Pois(φ_kp θ_nk h⁽¹⁾_nk),  x_np = Σ_k x_npk
//! ```
//!
//! Two backends are provided: full Gibbs (Metropolis steps where no
//! conjugate update exists) and a hybrid that keeps Gibbs for per-document
//! variables but moves the global parameters with a stochastic-gradient
//! Nosé–Hoover thermostat.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::corpus::BagOfWords;
use crate::error::{BdlError, Result};
use crate::mcmc::{log_scale_step, mala_step, tune_scale};
use crate::rng::{block_rng, child_seed, BdlRng};
use crate::scalar::Scalar;

/// Prior constants and sampler settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfaHyper {
    pub a_phi: f64,
    pub e0: f64,
    pub f0: f64,
    pub c0: f64,
    /// Beta prior on `p_n`.
    pub a0: f64,
    pub b0: f64,
    /// Prior variance of SBN weights and biases.
    pub sbn_prior_var: f64,
    /// SGNHT injected variance `D`.
    pub sgnht_d: f64,
    /// SGNHT step size `h`.
    pub sgnht_step: f64,
    /// SGNHT thermostat mass `M`; `None` uses the number of global parameters.
    pub sgnht_mass: Option<f64>,
}

impl Default for PfaHyper {
    fn default() -> Self {
        PfaHyper {
            a_phi: 0.5,
            e0: 1.0,
            f0: 1.0,
            c0: 1.0,
            a0: 1.0,
            b0: 1.0,
            sbn_prior_var: 1.0,
            sgnht_d: 1.0,
            sgnht_step: 1e-3,
            sgnht_mass: None,
        }
    }
}

impl PfaHyper {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("a_phi", self.a_phi),
            ("e0", self.e0),
            ("f0", self.f0),
            ("c0", self.c0),
            ("a0", self.a0),
            ("b0", self.b0),
            ("sbn_prior_var", self.sbn_prior_var),
            ("sgnht_d", self.sgnht_d),
            ("sgnht_step", self.sgnht_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BdlError::config(key, format!("must be finite and > 0, got {}", v)));
            }
        }
        if let Some(m) = self.sgnht_mass {
            if !(m > 0.0 && m.is_finite()) {
                return Err(BdlError::config("sgnht_mass", "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Sigmoid belief network over `H_1..H_L`. `weights[l-1]` (`K_{l+1} × K_l`)
/// links layer `l+1` to layer `l`; `biases[l-1]` has length `K_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbnParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl SbnParams {
    pub fn new(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        let p = SbnParams { weights, biases };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(BdlError::config("layers", "need at least one layer of positive width"));
        }
        let weights = widths.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases = widths.iter().map(|&k| Array1::zeros(k)).collect();
        SbnParams::new(weights, biases)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.biases.len();
        if l == 0 || self.weights.len() + 1 != l {
            return Err(BdlError::dim("an L-layer SBN needs L bias vectors and L-1 weight matrices"));
        }
        for (i, w) in self.weights.iter().enumerate() {
            if w.dim() != (self.biases[i + 1].len(), self.biases[i].len()) {
                return Err(BdlError::dim(format!("SBN weight {} has the wrong shape", i + 1)));
            }
        }
        let finite = self.weights.iter().flatten().chain(self.biases.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(BdlError::numeric("SBN parameters are not finite"));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.biases.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.biases.iter().map(|b| b.len()).collect()
    }

    /// Logits of layer `l` (1-based) for one document given the layer above.
    pub fn logits(&self, l: usize, above: Option<ArrayView1<'_, u8>>) -> Array1<f64> {
        let mut z = self.biases[l - 1].clone();
        if l < self.n_layers() {
            let above = above.expect("layer above required below the top");
            let w = &self.weights[l - 1];
            for (a, &h) in above.iter().enumerate() {
                if h == 1 {
                    z += &w.row(a);
                }
            }
        }
        z
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

fn sigmoid(x: f64) -> f64 {
    Scalar::sigmoid(x)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Full sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct PfaState {
    /// `K × P`, rows on the simplex.
    pub phi: Array2<f64>,
    /// `N × K`, nonnegative.
    pub theta: Array2<f64>,
    /// `H_1..H_L`, binary `N × K_l`.
    pub h: Vec<Array2<u8>>,
    pub r: Array1<f64>,
    pub gamma0: f64,
    pub p: Array1<f64>,
    pub sbn: SbnParams,
}

impl PfaState {
    pub fn n_topics(&self) -> usize {
        self.phi.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        self.sbn.validate()?;
        let (k, n) = (self.phi.nrows(), self.theta.nrows());
        if self.theta.ncols() != k || self.r.len() != k || self.p.len() != n {
            return Err(BdlError::dim("topic or document counts disagree across the state"));
        }
        if self.h.len() != self.sbn.n_layers() {
            return Err(BdlError::dim("H layers differ from SBN layers"));
        }
        for (l, h) in self.h.iter().enumerate() {
            if h.dim() != (n, self.sbn.biases[l].len()) {
                return Err(BdlError::dim(format!("H_{} has the wrong shape", l + 1)));
            }
            if h.iter().any(|&v| v > 1) {
                return Err(BdlError::validation(format!("H_{} is not binary", l + 1)));
            }
        }
        if self.h[0].ncols() != k {
            return Err(BdlError::dim("bottom SBN layer width must equal the topic count"));
        }
        for (i, row) in self.phi.axis_iter(Axis(0)).enumerate() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-12 || row.iter().any(|&v| !(v >= 0.0)) {
                return Err(BdlError::validation(format!("phi row {} is not on the simplex", i)));
            }
        }
        if self.theta.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(BdlError::validation("theta must be finite and nonnegative"));
        }
        if self.r.iter().any(|&v| !(v > 0.0) || !v.is_finite()) || !(self.gamma0 > 0.0) {
            return Err(BdlError::validation("r and gamma0 must be positive"));
        }
        if self.p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(BdlError::validation("p must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Poisson rates `(Θ ∘ H_1) Φ` for document `n`.
    pub fn rates(&self, n: usize) -> Array1<f64> {
        let w: Array1<f64> = self
            .theta
            .row(n)
            .iter()
            .zip(self.h[0].row(n))
            .map(|(&t, &h)| t * h as f64)
            .collect();
        w.dot(&self.phi)
    }
}

/// Draws `log G` for `G ~ Gamma(shape, 1)`, stable for tiny shapes via
/// `G = G' U^{1/shape}` with `G' ~ Gamma(shape + 1, 1)`.
fn log_gamma_draw(shape: f64, rng: &mut BdlRng) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid shape").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// Draws a point on the simplex from `Dir(alpha)` (log-space normalization).
pub fn dirichlet(alpha: ArrayView1<'_, f64>, rng: &mut BdlRng) -> Array1<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_draw(a, rng)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Array1<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let s = out.sum();
    out /= s;
    // Push the last rounding error into the largest entry.
    let err = 1.0 - out.sum();
    let arg = out.iter().enumerate().fold(0, |b, (i, &v)| if v > out[b] { i } else { b });
    out[arg] += err;
    out
}

/// Allocates `x_np` words across topics: `Multi(x_np; ζ)` with
/// `ζ_k ∝ φ_kp θ_nk`, hard-zeroed where `h_nk = 0`.
pub fn sample_counts(
    x_np: u32,
    phi_col: ArrayView1<'_, f64>,
    theta_row: ArrayView1<'_, f64>,
    h_row: ArrayView1<'_, u8>,
    rng: &mut BdlRng,
) -> Result<Vec<u32>> {
    let k = phi_col.len();
    let mut out = vec![0u32; k];
    if x_np == 0 {
        return Ok(out);
    }
    let zeta: Vec<f64> = (0..k)
        .map(|t| if h_row[t] == 1 { phi_col[t] * theta_row[t] } else { 0.0 })
        .collect();
    let total: f64 = zeta.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(BdlError::numeric(format!(
            "cannot allocate {} words: every topic has zero probability",
            x_np
        )));
    }
    let last = (0..k).rev().find(|&t| zeta[t] > 0.0).expect("positive total");
    let mut remaining = x_np as u64;
    let mut mass = total;
    for t in 0..k {
        if remaining == 0 {
            break;
        }
        if zeta[t] == 0.0 {
            continue;
        }
        if t == last {
            out[t] = remaining as u32;
            break;
        }
        let prob = (zeta[t] / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, prob).expect("valid binomial").sample(rng);
        out[t] = draw as u32;
        remaining -= draw;
        mass -= zeta[t];
    }
    Ok(out)
}

/// Word–topic and document–topic count statistics of an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `x_{n·k}`, `N × K`.
    pub doc_topic: Array2<u64>,
    /// `x_{·pk}`, `P × K`.
    pub word_topic: Array2<u64>,
    /// Per document, per nonzero entry, per topic counts.
    pub entries: Vec<Vec<Vec<u32>>>,
}

impl Allocation {
    /// True when every entry's topic counts resum to the observed count.
    pub fn conserves(&self, counts: &BagOfWords) -> bool {
        counts.rows().iter().zip(&self.entries).all(|(row, e)| {
            row.len() == e.len() && row.iter().zip(e).all(|(&(_, x), t)| t.iter().map(|&c| c as u64).sum::<u64>() == x as u64)
        })
    }
}

/// Allocates every document's words (parallel over documents, one stream each).
pub fn allocate(counts: &BagOfWords, state: &PfaState, seed: u64, phase: u64) -> Result<Allocation> {
    let k = state.n_topics();
    let per_doc: Vec<Vec<Vec<u32>>> = counts
        .rows()
        .par_iter()
        .enumerate()
        .map(|(n, row)| {
            let mut rng = block_rng(seed, phase, n as u64);
            row.iter()
                .map(|&(p, x)| sample_counts(x, state.phi.column(p), state.theta.row(n), state.h[0].row(n), &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut doc_topic = Array2::<u64>::zeros((counts.n_rows(), k));
    let mut word_topic = Array2::<u64>::zeros((counts.n_cols(), k));
    for (n, (row, alloc)) in counts.rows().iter().zip(&per_doc).enumerate() {
        for (&(p, _), topics) in row.iter().zip(alloc) {
            for (t, &c) in topics.iter().enumerate() {
                doc_topic[[n, t]] += c as u64;
                word_topic[[p, t]] += c as u64;
            }
        }
    }
    Ok(Allocation {
        doc_topic,
        word_topic,
        entries: per_doc,
    })
}

/// Draws every `φ_k ~ Dir(a_φ + x_{·1k}, …, a_φ + x_{·Pk})`.
pub fn sample_phi(word_topic: ArrayView2<'_, u64>, a_phi: f64, rng: &mut BdlRng) -> Array2<f64> {
    let (p, k) = word_topic.dim();
    let mut phi = Array2::<f64>::zeros((k, p));
    for t in 0..k {
        let alpha: Array1<f64> = word_topic.column(t).iter().map(|&c| a_phi + c as f64).collect();
        phi.row_mut(t).assign(&dirichlet(alpha.view(), rng));
    }
    phi
}

/// Draws `θ_nk ~ Gamma(r_k h_nk + x_{n·k}, p_n)` (shape–scale); a zero shape
/// gives exactly zero.
pub fn sample_theta(x_nk: u64, r_k: f64, h_nk: u8, p_n: f64, rng: &mut BdlRng) -> f64 {
    let shape = r_k * h_nk as f64 + x_nk as f64;
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, p_n).expect("valid gamma").sample(rng)
}

/// Draws `h⁽¹⁾_nk`: forced to 1 when the topic has words, otherwise
/// `Ber(π̃ / (π̃ + 1 − π))` with `π̃ = π (1 − p_n)^{r_k}` (θ integrated out).
pub fn sample_h1(x_nk: u64, pi: f64, r_k: f64, p_n: f64, rng: &mut BdlRng) -> u8 {
    if x_nk > 0 {
        return 1;
    }
    let prob = h1_probability(pi, r_k, p_n);
    u8::from(rng.random::<f64>() < prob)
}

/// `P(h⁽¹⁾_nk = 1 | x_{n·k} = 0)`.
pub fn h1_probability(pi: f64, r_k: f64, p_n: f64) -> f64 {
    if pi <= 0.0 {
        return 0.0;
    }
    if pi >= 1.0 {
        return 1.0;
    }
    let tilde = pi * (r_k * (1.0 - p_n).ln()).exp();
    tilde / (tilde + 1.0 - pi)
}

/// Log-likelihood of a child layer row given its parent row.
fn children_loglik(child: ArrayView1<'_, u8>, parent: ArrayView1<'_, u8>, w: &Array2<f64>, b: &Array1<f64>) -> f64 {
    let mut z = b.clone();
    for (a, &h) in parent.iter().enumerate() {
        if h == 1 {
            z += &w.row(a);
        }
    }
    z.iter().zip(child).map(|(&a, &c)| c as f64 * a - softplus(a)).sum()
}

/// Single-site Gibbs over the units of layer `l ≥ 2` for one document:
/// each unit is drawn exactly from its two-state conditional given its
/// prior (from layer `l+1`) and the likelihood of layer `l−1`.
pub fn sample_h_deep_row(
    l: usize,
    below: ArrayView1<'_, u8>,
    layer: &mut Array1<u8>,
    above: Option<ArrayView1<'_, u8>>,
    sbn: &SbnParams,
    rng: &mut BdlRng,
) {
    let prior = sbn.logits(l, above);
    let (w, b) = (&sbn.weights[l - 2], &sbn.biases[l - 2]);
    for k in 0..layer.len() {
        layer[k] = 1;
        let on = children_loglik(below, layer.view(), w, b);
        layer[k] = 0;
        let off = children_loglik(below, layer.view(), w, b);
        // log odds = prior logit + likelihood ratio
        let log_odds = prior[k] + on - off;
        layer[k] = u8::from(rng.random::<f64>() < sigmoid(log_odds));
    }
}

/// Resamples layer `l ≥ 2` for every document (parallel, one stream each).
pub fn sample_h_deep(l: usize, h: &mut [Array2<u8>], sbn: &SbnParams, seed: u64, phase: u64) {
    let n_layers = h.len();
    let rows: Vec<Array1<u8>> = (0..h[0].nrows())
        .into_par_iter()
        .map(|n| {
            let mut rng = block_rng(seed, phase, n as u64);
            let mut row = h[l - 1].row(n).to_owned();
            let above = if l < n_layers { Some(h[l].row(n)) } else { None };
            sample_h_deep_row(l, h[l - 2].row(n), &mut row, above, sbn, &mut rng);
            row
        })
        .collect();
    for (n, row) in rows.into_iter().enumerate() {
        h[l - 1].row_mut(n).assign(&row);
    }
}

/// Unnormalized log conditional of `r_k` with `θ` integrated out:
/// `Gamma(r; γ₀, 1/c₀) Π_{n: h_nk=1} NB(x_{n·k}; r, p_n)`.
pub fn r_log_conditional(r: f64, k: usize, doc_topic: ArrayView2<'_, u64>, h1: ArrayView2<'_, u8>, p: ArrayView1<'_, f64>, gamma0: f64, c0: f64) -> f64 {
    if !(r > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = (gamma0 - 1.0) * r.ln() - c0 * r;
    let lg_r = ln_gamma(r);
    for n in 0..h1.nrows() {
        if h1[[n, k]] == 1 {
            let x = doc_topic[[n, k]] as f64;
            lp += ln_gamma(x + r) - lg_r + r * (1.0 - p[n]).ln();
        }
    }
    lp
}

/// Unnormalized log conditional of `γ₀`: `Gamma(γ₀; e₀, 1/f₀) Π_k Gamma(r_k; γ₀, 1/c₀)`.
pub fn gamma0_log_conditional(g: f64, r: ArrayView1<'_, f64>, hyper: &PfaHyper) -> f64 {
    if !(g > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = (hyper.e0 - 1.0) * g.ln() - hyper.f0 * g;
    for &rk in r {
        lp += g * hyper.c0.ln() - ln_gamma(g) + (g - 1.0) * rk.ln();
    }
    lp
}

/// Acceptance counts from [`sample_r_gamma`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RGammaAcceptance {
    pub r_accepted: usize,
    pub r_proposed: usize,
    pub gamma0_accepted: bool,
}

/// Updates `r_k` and `γ₀` by log-scale random-walk Metropolis on their
/// exact conditionals, then every `p_n` by its conjugate
/// `Beta(a₀ + Σ_k x_{n·k}, b₀ + Σ_k r_k h_nk)`.
pub fn sample_r_gamma(
    doc_topic: ArrayView2<'_, u64>,
    state: &mut PfaState,
    hyper: &PfaHyper,
    r_scale: f64,
    gamma_scale: f64,
    rng: &mut BdlRng,
) -> RGammaAcceptance {
    let mut acc = RGammaAcceptance::default();
    for k in 0..state.r.len() {
        let (next, ok) = log_scale_step(
            state.r[k],
            r_scale,
            |r| r_log_conditional(r, k, doc_topic, state.h[0].view(), state.p.view(), state.gamma0, hyper.c0),
            rng,
        );
        state.r[k] = next;
        acc.r_proposed += 1;
        acc.r_accepted += ok as usize;
    }
    let r = state.r.clone();
    let (g, ok) = log_scale_step(state.gamma0, gamma_scale, |g| gamma0_log_conditional(g, r.view(), hyper), rng);
    state.gamma0 = g;
    acc.gamma0_accepted = ok;
    sample_p(doc_topic, state, hyper, rng);
    acc
}

fn sample_p(doc_topic: ArrayView2<'_, u64>, state: &mut PfaState, hyper: &PfaHyper, rng: &mut BdlRng) {
    for n in 0..state.p.len() {
        let words: f64 = doc_topic.row(n).iter().map(|&c| c as f64).sum();
        let rh: f64 = state.r.iter().zip(state.h[0].row(n)).map(|(&r, &h)| r * h as f64).sum();
        let draw: f64 = Beta::new(hyper.a0 + words, hyper.b0 + rh).expect("valid beta").sample(rng);
        // keep p strictly inside (0, 1) so later logs stay finite
        state.p[n] = draw.clamp(1e-12, 1.0 - 1e-12);
    }
}

/// Position, momentum and thermostat of the SGNHT dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnhtState {
    pub theta: Array1<f64>,
    pub v: Array1<f64>,
    pub xi: f64,
}

impl SgnhtState {
    /// Starts with zero momentum and the thermostat at `D`.
    pub fn new(theta: Array1<f64>, d: f64) -> Self {
        let v = Array1::zeros(theta.len());
        SgnhtState { theta, v, xi: d }
    }
}

/// One Euler–Maruyama step of
/// `dθ = v dt, dv = f dt − ξ v dt + √(2D) dW, dξ = (vᵀv/M − 1) dt`,
/// where `force` is the (stochastic) gradient of the log-posterior.
pub fn sgnht_step(state: &mut SgnhtState, force: ArrayView1<'_, f64>, d: f64, h: f64, mass: f64, rng: &mut BdlRng) -> Result<()> {
    if !(h > 0.0) {
        return Err(BdlError::Argument("SGNHT step size must be > 0".into()));
    }
    if force.len() != state.v.len() {
        return Err(BdlError::dim("force and momentum lengths differ"));
    }
    if force.iter().any(|f| !f.is_finite()) {
        return Err(BdlError::numeric("SGNHT gradient is not finite"));
    }
    let noise_sd = (2.0 * d * h).sqrt();
    let xi = state.xi;
    for (v, &f) in state.v.iter_mut().zip(force) {
        let z: f64 = if noise_sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        *v += h * f - h * xi * *v + noise_sd * z;
    }
    state.theta.scaled_add(h, &state.v);
    state.xi += h * (state.v.dot(&state.v) / mass - 1.0);
    Ok(())
}

/// Generates counts and the ground-truth state by ancestral sampling.
pub fn generate_synthetic(hyper: &PfaHyper, sbn: &SbnParams, n_docs: usize, vocab: usize, rng: &mut BdlRng) -> Result<(BagOfWords, PfaState)> {
    hyper.validate()?;
    sbn.validate()?;
    if n_docs == 0 || vocab == 0 {
        return Err(BdlError::config("n_docs", "document and vocabulary counts must be positive"));
    }
    let k = sbn.biases[0].len();
    let gamma0: f64 = Gamma::new(hyper.e0, 1.0 / hyper.f0).expect("valid gamma").sample(rng);
    let r: Array1<f64> = (0..k)
        .map(|_| Gamma::new(gamma0, 1.0 / hyper.c0).expect("valid gamma").sample(rng).max(f64::MIN_POSITIVE))
        .collect();
    let alpha = Array1::from_elem(vocab, hyper.a_phi);
    let mut phi = Array2::<f64>::zeros((k, vocab));
    for t in 0..k {
        phi.row_mut(t).assign(&dirichlet(alpha.view(), rng));
    }
    let p: Array1<f64> = (0..n_docs)
        .map(|_| {
            let d: f64 = Beta::new(hyper.a0, hyper.b0).expect("valid beta").sample(rng);
            d.clamp(1e-12, 1.0 - 1e-12)
        })
        .collect();
    let widths = sbn.widths();
    let n_layers = widths.len();
    let mut h: Vec<Array2<u8>> = widths.iter().map(|&w| Array2::zeros((n_docs, w))).collect();
    for n in 0..n_docs {
        for l in (1..=n_layers).rev() {
            let logits = if l == n_layers {
                sbn.logits(l, None)
            } else {
                sbn.logits(l, Some(h[l].row(n)))
            };
            for (kk, &z) in logits.iter().enumerate() {
                h[l - 1][[n, kk]] = u8::from(rng.random::<f64>() < sigmoid(z));
            }
        }
    }
    let mut theta = Array2::<f64>::zeros((n_docs, k));
    for n in 0..n_docs {
        let scale = p[n] / (1.0 - p[n]);
        for t in 0..k {
            if h[0][[n, t]] == 1 {
                theta[[n, t]] = Gamma::new(r[t], scale).expect("valid gamma").sample(rng);
            }
        }
    }
    let state = PfaState {
        phi,
        theta,
        h,
        r,
        gamma0,
        p,
        sbn: sbn.clone(),
    };
    let counts = sample_poisson_counts(&state, rng)?;
    Ok((counts, state))
}

/// Draws `x_np = Σ_k x_npk` with `x_npk ~ Pois(φ_kp θ_nk h_nk)`.
pub fn sample_poisson_counts(state: &PfaState, rng: &mut BdlRng) -> Result<BagOfWords> {
    let (k, vocab) = state.phi.dim();
    let mut rows = Vec::with_capacity(state.theta.nrows());
    for n in 0..state.theta.nrows() {
        let mut row = Vec::new();
        for p in 0..vocab {
            let mut x = 0u64;
            for t in 0..k {
                let rate = state.phi[[t, p]] * state.theta[[n, t]] * state.h[0][[n, t]] as f64;
                if rate > 0.0 {
                    x += rand_distr::Poisson::new(rate).expect("valid rate").sample(rng) as u64;
                }
            }
            if x > 0 {
                let x = u32::try_from(x).map_err(|_| BdlError::numeric("generated count overflows u32"))?;
                row.push((p, x));
            }
        }
        rows.push(row);
    }
    BagOfWords::new(vocab, rows)
}

/// Poisson log-likelihood of `counts` under the state's rates. Per-document
/// terms are computed in parallel and summed in document order, so the
/// result does not depend on the thread count.
pub fn poisson_loglik(counts: &BagOfWords, state: &PfaState) -> f64 {
    let per_doc: Vec<f64> = (0..counts.n_rows())
        .into_par_iter()
        .map(|n| {
            let rates = state.rates(n);
            let mut lp = -rates.sum();
            for &(p, x) in counts.row(n) {
                lp += x as f64 * rates[p].ln() - ln_gamma(x as f64 + 1.0);
            }
            lp
        })
        .collect();
    per_doc.iter().sum()
}

/// Mean per-word log predictive probability of held-out tokens, using each
/// document's normalized rates; documents with no rate mass are skipped.
pub fn heldout_per_word(heldout: &BagOfWords, state: &PfaState) -> f64 {
    let (mut lp, mut words) = (0.0, 0.0);
    for n in 0..heldout.n_rows() {
        let rates = state.rates(n);
        let total = rates.sum();
        if total <= 0.0 {
            continue;
        }
        for &(p, x) in heldout.row(n) {
            lp += x as f64 * (rates[p] / total).ln();
            words += x as f64;
        }
    }
    if words > 0.0 {
        lp / words
    } else {
        0.0
    }
}

/// Moves a random fraction of every document's tokens to a held-out matrix.
pub fn split_tokens(counts: &BagOfWords, fraction: f64, seed: u64) -> Result<(BagOfWords, BagOfWords)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(BdlError::Argument(format!("held-out fraction {} outside [0, 1)", fraction)));
    }
    let mut train = Vec::with_capacity(counts.n_rows());
    let mut test = Vec::with_capacity(counts.n_rows());
    for (n, row) in counts.rows().iter().enumerate() {
        let mut rng = block_rng(seed, 0xD0C, n as u64);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for &(p, x) in row {
            let held = Binomial::new(x as u64, fraction).expect("valid binomial").sample(&mut rng) as u32;
            if x - held > 0 {
                a.push((p, x - held));
            }
            if held > 0 {
                b.push((p, held));
            }
        }
        train.push(a);
        test.push(b);
    }
    Ok((BagOfWords::new(counts.n_cols(), train)?, BagOfWords::new(counts.n_cols(), test)?))
}

/// Inference backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpfaBackend {
    Gibbs,
    SgnhtHybrid,
}

impl DpfaBackend {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(DpfaBackend::Gibbs),
            "sgnht-hybrid" => Ok(DpfaBackend::SgnhtHybrid),
            other => Err(BdlError::config("backend", format!("unknown backend `{}` (gibbs | sgnht-hybrid)", other))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DpfaBackend::Gibbs => "gibbs",
            DpfaBackend::SgnhtHybrid => "sgnht-hybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpfaOptions {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub backend: DpfaBackend,
    pub seed: u64,
    /// SGNHT steps per sweep in the hybrid backend.
    pub sgnht_steps: usize,
    /// Initial log-scale proposal sd for `r_k` and `γ₀`.
    pub rate_step: f64,
    /// Initial Langevin step for SBN weight columns.
    pub sbn_step: f64,
}

impl Default for DpfaOptions {
    fn default() -> Self {
        DpfaOptions {
            sweeps: 500,
            burn_in: 250,
            thin: 10,
            backend: DpfaBackend::Gibbs,
            seed: 0,
            sgnht_steps: 10,
            rate_step: 0.3,
            sbn_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpfaTraceRow {
    pub sweep: usize,
    pub train_loglik: f64,
    pub heldout_per_word: Option<f64>,
    /// `None` when the backend does not use Metropolis steps for the block.
    pub r_acceptance: Option<f64>,
    pub sbn_acceptance: Option<f64>,
    pub active_topic_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpfaSample {
    pub sweep: usize,
    pub phi: Array2<f64>,
    pub r: Array1<f64>,
    pub gamma0: f64,
    pub sbn: SbnParams,
}

#[derive(Debug, Clone)]
pub struct DpfaRun {
    pub samples: Vec<DpfaSample>,
    pub trace: Vec<DpfaTraceRow>,
    pub state: PfaState,
}

/// Starting state: random topics, θ spread evenly over each document's
/// words, every topic active, unit rates and zero SBN parameters.
pub fn init_state(counts: &BagOfWords, widths: &[usize], seed: u64) -> Result<PfaState> {
    let sbn = SbnParams::zeros(widths)?;
    let k = widths[0];
    let n = counts.n_rows();
    let mut rng = block_rng(child_seed(seed, "dpfa-init"), 0, 0);
    let ones = Array1::from_elem(counts.n_cols(), 1.0);
    let mut phi = Array2::zeros((k, counts.n_cols()));
    for t in 0..k {
        phi.row_mut(t).assign(&dirichlet(ones.view(), &mut rng));
    }
    let mut theta = Array2::zeros((n, k));
    for (d, row) in counts.rows().iter().enumerate() {
        let len: f64 = row.iter().map(|&(_, x)| x as f64).sum();
        theta.row_mut(d).fill(len.max(1.0) / k as f64);
    }
    let h = widths.iter().map(|&w| Array2::from_elem((n, w), 1u8)).collect();
    Ok(PfaState {
        phi,
        theta,
        h,
        r: Array1::ones(k),
        gamma0: 1.0,
        p: Array1::from_elem(n, 0.5),
        sbn,
    })
}

fn check_invariants(counts: &BagOfWords, alloc: &Allocation, state: &PfaState, sweep: usize) -> Result<()> {
    if !alloc.conserves(counts) {
        return Err(BdlError::numeric(format!("allocation lost words at sweep {}", sweep)));
    }
    for ((n, t), &x) in alloc.doc_topic.indexed_iter() {
        if x > 0 && state.h[0][[n, t]] != 1 {
            return Err(BdlError::numeric(format!("topic {} has words but h = 0 in document {} at sweep {}", t, n, sweep)));
        }
    }
    for (t, row) in state.phi.axis_iter(Axis(0)).enumerate() {
        if (row.sum() - 1.0).abs() > 1e-12 {
            return Err(BdlError::numeric(format!("phi row {} left the simplex at sweep {}", t, sweep)));
        }
    }
    Ok(())
}

/// Layer-`l` SBN column target: inputs are `H_{l+1}` with a trailing 1
/// (only the 1 for the top layer), outputs are column `k` of `H_l`.
fn sbn_column_target(inputs: &Array2<f64>, targets: ArrayView1<'_, u8>, w: &Array1<f64>, prior_var: f64) -> (f64, Array1<f64>) {
    let z = inputs.dot(w);
    let mut lp = -0.5 * w.dot(w) / prior_var;
    let mut resid = Array1::<f64>::zeros(z.len());
    for ((r, &a), &h) in resid.iter_mut().zip(&z).zip(targets) {
        lp += h as f64 * a - softplus(a);
        *r = h as f64 - sigmoid(a);
    }
    let grad = inputs.t().dot(&resid) - &(w / prior_var);
    (lp, grad)
}

fn sbn_inputs(state: &PfaState, l: usize) -> Array2<f64> {
    let n = state.h[0].nrows();
    let above = if l < state.sbn.n_layers() { state.h[l].ncols() } else { 0 };
    let mut x = Array2::<f64>::ones((n, above + 1));
    if above > 0 {
        x.slice_mut(ndarray::s![.., ..above]).assign(&state.h[l].mapv(|v| v as f64));
    }
    x
}

fn sbn_column(sbn: &SbnParams, l: usize, k: usize) -> Array1<f64> {
    let mut col = Vec::new();
    if l < sbn.n_layers() {
        col.extend(sbn.weights[l - 1].column(k).iter());
    }
    col.push(sbn.biases[l - 1][k]);
    Array1::from(col)
}

fn set_sbn_column(sbn: &mut SbnParams, l: usize, k: usize, col: &Array1<f64>) {
    let n = col.len() - 1;
    if l < sbn.n_layers() {
        for a in 0..n {
            sbn.weights[l - 1][[a, k]] = col[a];
        }
    }
    sbn.biases[l - 1][k] = col[n];
}

/// One MALA update of every SBN column, layer by layer. Returns the
/// acceptance fraction per layer.
fn sample_sbn(state: &mut PfaState, hyper: &PfaHyper, steps: &[f64], rng: &mut BdlRng) -> Vec<f64> {
    let mut rates = Vec::with_capacity(state.sbn.n_layers());
    for l in 1..=state.sbn.n_layers() {
        let inputs = sbn_inputs(state, l);
        let width = state.sbn.biases[l - 1].len();
        let mut accepted = 0;
        for k in 0..width {
            let current = sbn_column(&state.sbn, l, k);
            let targets = state.h[l - 1].column(k);
            let (next, ok) = mala_step(&current, steps[l - 1], |w| sbn_column_target(&inputs, targets, w, hyper.sbn_prior_var), rng);
            if ok {
                set_sbn_column(&mut state.sbn, l, k, &next);
                accepted += 1;
            }
        }
        rates.push(accepted as f64 / width as f64);
    }
    rates
}

/// Unconstrained coordinates of the global parameters for SGNHT:
/// additive-logistic logits of each `φ_k` (last logit pinned at 0),
/// `log r_k`, `log γ₀`, then SBN weights and biases.
pub fn pack_globals(state: &PfaState) -> Array1<f64> {
    let (k, p) = state.phi.dim();
    let mut out = Vec::with_capacity(k * (p - 1) + k + 1 + state.sbn.n_params());
    for t in 0..k {
        let last = state.phi[[t, p - 1]].max(f64::MIN_POSITIVE).ln();
        for q in 0..p - 1 {
            out.push(state.phi[[t, q]].max(f64::MIN_POSITIVE).ln() - last);
        }
    }
    out.extend(state.r.iter().map(|r| r.ln()));
    out.push(state.gamma0.ln());
    for w in &state.sbn.weights {
        out.extend(w.iter());
    }
    for b in &state.sbn.biases {
        out.extend(b.iter());
    }
    Array1::from(out)
}

/// Inverse of [`pack_globals`].
pub fn unpack_globals(x: ArrayView1<'_, f64>, state: &mut PfaState) {
    let (k, p) = state.phi.dim();
    let mut i = 0;
    for t in 0..k {
        let logits: Vec<f64> = (0..p).map(|q| if q + 1 < p { x[i + q] } else { 0.0 }).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let s: f64 = e.iter().sum();
        for q in 0..p {
            state.phi[[t, q]] = e[q] / s;
        }
        let row_sum = state.phi.row(t).sum();
        let arg = (0..p).fold(0, |b, q| if state.phi[[t, q]] > state.phi[[t, b]] { q } else { b });
        state.phi[[t, arg]] += 1.0 - row_sum;
        i += p - 1;
    }
    for t in 0..k {
        state.r[t] = x[i].exp().max(f64::MIN_POSITIVE);
        i += 1;
    }
    state.gamma0 = x[i].exp().max(f64::MIN_POSITIVE);
    i += 1;
    for w in state.sbn.weights.iter_mut() {
        for v in w.iter_mut() {
            *v = x[i];
            i += 1;
        }
    }
    for b in state.sbn.biases.iter_mut() {
        for v in b.iter_mut() {
            *v = x[i];
            i += 1;
        }
    }
}

/// Gradient of the log-posterior of the globals (in packed coordinates,
/// Jacobians included) given the local variables.
pub fn globals_gradient(state: &PfaState, alloc: &Allocation, hyper: &PfaHyper) -> Array1<f64> {
    let (k, p) = state.phi.dim();
    let mut g = Vec::with_capacity(k * (p - 1) + k + 1 + state.sbn.n_params());
    for t in 0..k {
        let alpha_total: f64 = (0..p).map(|q| hyper.a_phi + alloc.word_topic[[q, t]] as f64).sum();
        for q in 0..p - 1 {
            g.push(hyper.a_phi + alloc.word_topic[[q, t]] as f64 - state.phi[[t, q]] * alpha_total);
        }
    }
    let psi_g = digamma(state.gamma0);
    for t in 0..k {
        let r = state.r[t];
        let psi_r = digamma(r);
        let mut s = 0.0;
        for n in 0..state.theta.nrows() {
            if state.h[0][[n, t]] == 1 {
                let scale = state.p[n] / (1.0 - state.p[n]);
                s += state.theta[[n, t]].max(f64::MIN_POSITIVE).ln() - scale.ln() - psi_r;
            }
        }
        g.push(state.gamma0 - hyper.c0 * r + r * s);
    }
    let sum_log_r: f64 = state.r.iter().map(|r| r.ln()).sum();
    g.push(hyper.e0 - hyper.f0 * state.gamma0 + state.gamma0 * (k as f64 * (hyper.c0.ln() - psi_g) + sum_log_r));
    // SBN: weights of every layer, then biases of every layer.
    let mut w_grads: Vec<Array2<f64>> = state.sbn.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut b_grads: Vec<Array1<f64>> = state.sbn.biases.iter().map(|b| Array1::zeros(b.len())).collect();
    for l in 1..=state.sbn.n_layers() {
        let inputs = sbn_inputs(state, l);
        for kk in 0..state.sbn.biases[l - 1].len() {
            let col = sbn_column(&state.sbn, l, kk);
            let (_, grad) = sbn_column_target(&inputs, state.h[l - 1].column(kk), &col, hyper.sbn_prior_var);
            let n_in = grad.len() - 1;
            if l < state.sbn.n_layers() {
                for a in 0..n_in {
                    w_grads[l - 1][[a, kk]] = grad[a];
                }
            }
            b_grads[l - 1][kk] = grad[n_in];
        }
    }
    for w in &w_grads {
        g.extend(w.iter());
    }
    for b in &b_grads {
        g.extend(b.iter());
    }
    Array1::from(g)
}

/// Runs the sampler. Each sweep: allocations, (Gibbs: `Φ`), `H_1` with `θ`
/// integrated out, (Gibbs: `r`, `γ₀`), `p`, `θ`, deeper layers, (Gibbs: SBN
/// columns; hybrid: SGNHT on all globals). Count conservation, h-forcing and
/// the simplex constraint are verified every sweep.
pub fn run_dpfa(counts: &BagOfWords, init: PfaState, hyper: &PfaHyper, opts: &DpfaOptions, heldout: Option<&BagOfWords>) -> Result<DpfaRun> {
    run_dpfa_observed(counts, init, hyper, opts, heldout, &mut |_, _| {})
}

pub fn run_dpfa_observed(
    counts: &BagOfWords,
    init: PfaState,
    hyper: &PfaHyper,
    opts: &DpfaOptions,
    heldout: Option<&BagOfWords>,
    observer: &mut dyn FnMut(&DpfaTraceRow, &PfaState),
) -> Result<DpfaRun> {
    hyper.validate()?;
    init.validate()?;
    if opts.sweeps <= opts.burn_in {
        return Err(BdlError::config("sweeps", "must exceed burn_in"));
    }
    if opts.thin == 0 {
        return Err(BdlError::config("thin", "must be >= 1"));
    }
    if counts.n_rows() != init.theta.nrows() || counts.n_cols() != init.phi.ncols() {
        return Err(BdlError::dim("counts do not match the state's documents and vocabulary"));
    }
    if let Some(h) = heldout {
        if h.n_rows() != counts.n_rows() || h.n_cols() != counts.n_cols() {
            return Err(BdlError::dim("held-out counts must share documents and vocabulary"));
        }
    }
    let seed = child_seed(opts.seed, "dpfa");
    let mut state = init;
    let n_layers = state.sbn.n_layers();
    let mut r_step = opts.rate_step;
    let mut g_step = opts.rate_step;
    let mut sbn_steps = vec![opts.sbn_step; n_layers];
    let mut sgnht: Option<SgnhtState> = None;
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(opts.sweeps);
    for sweep in 0..opts.sweeps {
        let phase = |kind: u64| ((sweep as u64) << 8) | kind;
        let mut rng = block_rng(seed, phase(0), 0);
        let alloc = allocate(counts, &state, seed, phase(1))?;
        if opts.backend == DpfaBackend::Gibbs {
            state.phi = sample_phi(alloc.word_topic.view(), hyper.a_phi, &mut rng);
        }

        // H_1 with θ integrated out, per document.
        let pi_rows: Vec<Array1<f64>> = (0..counts.n_rows())
            .map(|n| {
                let above = if n_layers > 1 { Some(state.h[1].row(n)) } else { None };
                state.sbn.logits(1, above).mapv(sigmoid)
            })
            .collect();
        let h1_rows: Vec<Array1<u8>> = (0..counts.n_rows())
            .into_par_iter()
            .map(|n| {
                let mut r = block_rng(seed, phase(2), n as u64);
                (0..state.n_topics())
                    .map(|t| sample_h1(alloc.doc_topic[[n, t]], pi_rows[n][t], state.r[t], state.p[n], &mut r))
                    .collect()
            })
            .collect();
        for (n, row) in h1_rows.into_iter().enumerate() {
            state.h[0].row_mut(n).assign(&row);
        }

        let mut r_rate = None;
        if opts.backend == DpfaBackend::Gibbs {
            let acc = sample_r_gamma(alloc.doc_topic.view(), &mut state, hyper, r_step, g_step, &mut rng);
            let rate = acc.r_accepted as f64 / acc.r_proposed.max(1) as f64;
            r_rate = Some(rate);
            if sweep < opts.burn_in {
                tune_scale(&mut r_step, rate);
                tune_scale(&mut g_step, if acc.gamma0_accepted { 1.0 } else { 0.0 });
            }
        } else {
            sample_p(alloc.doc_topic.view(), &mut state, hyper, &mut rng);
        }

        let theta_rows: Vec<Array1<f64>> = (0..counts.n_rows())
            .into_par_iter()
            .map(|n| {
                let mut r = block_rng(seed, phase(3), n as u64);
                (0..state.n_topics())
                    .map(|t| sample_theta(alloc.doc_topic[[n, t]], state.r[t], state.h[0][[n, t]], state.p[n], &mut r))
                    .collect()
            })
            .collect();
        for (n, row) in theta_rows.into_iter().enumerate() {
            state.theta.row_mut(n).assign(&row);
        }

        for l in 2..=n_layers {
            sample_h_deep(l, &mut state.h, &state.sbn, seed, phase(3 + l as u64));
        }
        check_invariants(counts, &alloc, &state, sweep)?;

        let sbn_rate;
        match opts.backend {
            DpfaBackend::Gibbs => {
                let rates = sample_sbn(&mut state, hyper, &sbn_steps, &mut rng);
                if sweep < opts.burn_in {
                    for (s, &r) in sbn_steps.iter_mut().zip(&rates) {
                        tune_scale(s, r);
                    }
                }
                sbn_rate = Some(rates.iter().sum::<f64>() / rates.len() as f64);
            }
            DpfaBackend::SgnhtHybrid => {
                let packed = pack_globals(&state);
                let dyn_state = sgnht.get_or_insert_with(|| SgnhtState::new(packed.clone(), hyper.sgnht_d));
                dyn_state.theta = packed;
                let mass = hyper.sgnht_mass.unwrap_or(dyn_state.theta.len() as f64);
                for _ in 0..opts.sgnht_steps {
                    unpack_globals(dyn_state.theta.view(), &mut state);
                    let force = globals_gradient(&state, &alloc, hyper);
                    sgnht_step(dyn_state, force.view(), hyper.sgnht_d, hyper.sgnht_step, mass, &mut rng)
                        .map_err(|e| e.context(format!("dpfa sweep {}", sweep)))?;
                }
                unpack_globals(dyn_state.theta.view(), &mut state);
                sbn_rate = None;
            }
        }

        let train_loglik = poisson_loglik(counts, &state);
        let row = DpfaTraceRow {
            sweep,
            train_loglik,
            heldout_per_word: heldout.map(|h| heldout_per_word(h, &state)),
            r_acceptance: r_rate,
            sbn_acceptance: sbn_rate,
            active_topic_fraction: state.h[0].iter().map(|&v| v as f64).sum::<f64>() / state.h[0].len() as f64,
        };
        if !train_loglik.is_finite() && train_loglik != f64::NEG_INFINITY {
            return Err(BdlError::numeric(format!("log-likelihood is not finite at sweep {}", sweep)));
        }
        observer(&row, &state);
        trace.push(row);
        if sweep >= opts.burn_in && (sweep - opts.burn_in).is_multiple_of(opts.thin) {
            samples.push(DpfaSample {
                sweep,
                phi: state.phi.clone(),
                r: state.r.clone(),
                gamma0: state.gamma0,
                sbn: state.sbn.clone(),
            });
        }
    }
    Ok(DpfaRun { samples, trace, state })
}

/// Top-`m` words of every topic as tab-separated lines `topic\tw1\tw2…`,
/// using `vocab` names when given and word ids otherwise.
pub fn export_topics(phi: ArrayView2<'_, f64>, vocab: Option<&[String]>, m: usize) -> String {
    let mut out = String::new();
    for (t, row) in phi.axis_iter(Axis(0)).enumerate() {
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        out.push_str(&t.to_string());
        for &w in idx.iter().take(m) {
            out.push('\t');
            match vocab {
                Some(v) if w < v.len() => out.push_str(&v[w]),
                _ => out.push_str(&w.to_string()),
            }
        }
        out.push('\n');
    }
    out
}
