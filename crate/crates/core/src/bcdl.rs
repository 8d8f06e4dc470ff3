//! Bayesian CDL: Metropolis-within-Gibbs over the generalized-SDAE CDL model
//! with finite `λ_s`, so activations are latent variables rather than
//! deterministic functions of the input.
//!
//! The joint log-density (constants dropped) is
//!
//! ```text
//! −λ_w/2 Σ_l ‖W⁺_l‖² − λ_s/2 Σ_l Σ_j ‖f_l(X_{l−1,j}) − X_{l,j}‖²
//! − λ_n/2 Σ_j ‖X_{L,j} − X_{c,j}‖² − λ_v/2 Σ_j ‖v_j − X_{L/2,j}‖²
//! − λ_u/2 Σ_i ‖u_i‖² − Σ_ij C_ij/2 (R_ij − u_iᵀv_j)²
//! ```
//!
//! where `W⁺_l` stacks weights and biases and `f_l` is the sigmoid layer map
//! (affine for the last layer). Users and items are drawn exactly from their
//! Gaussian conditionals; activations use random-walk Metropolis and weight
//! columns a Langevin proposal with Metropolis correction.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};
use rayon::prelude::*;

use crate::cdl::{ratings_term, row_system, CdlData, CdlModel};
use crate::corpus::ImplicitRatings;
use crate::error::{BdlError, Result};
use crate::linalg::Cholesky;
use crate::mcmc::{mala_step, metropolis_accept, standard_normal_vec, tune_scale};
use crate::net::{self, Hyperparams, NetParams};
use crate::rng::{block_rng, child_seed, BdlRng};
use crate::scalar::Scalar;

/// Current values of every sampled variable.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState<T> {
    pub params: NetParams<T>,
    /// `X_1..X_L`, each `J × K_l`.
    pub acts: Vec<Array2<T>>,
    pub u: Array2<T>,
    pub v: Array2<T>,
    /// Completed sweeps.
    pub step: u64,
    pub seed: u64,
}

impl<T: Scalar> GibbsState<T> {
    /// Starts the chain at a point estimate, with activations set to the
    /// deterministic forward pass.
    pub fn from_map(model: &CdlModel<T>, x0: ArrayView2<'_, T>, seed: u64) -> Result<Self> {
        let acts = net::forward(x0, &model.params, model.params.n_layers())?;
        Ok(GibbsState {
            params: model.params.clone(),
            acts,
            u: model.factors.u.clone(),
            v: model.factors.v.clone(),
            step: 0,
            seed,
        })
    }

    pub fn validate(&self, data: &CdlData<T>) -> Result<()> {
        self.params.validate()?;
        let n_layers = self.params.n_layers();
        if self.acts.len() != n_layers {
            return Err(BdlError::dim(format!(
                "{} activation layers for a {}-layer network",
                self.acts.len(),
                n_layers
            )));
        }
        let j = data.x0.nrows();
        for (l, a) in self.acts.iter().enumerate() {
            if a.dim() != (j, self.params.weights[l].ncols()) {
                return Err(BdlError::dim(format!("activation layer {} has the wrong shape", l + 1)));
            }
        }
        if self.v.nrows() != j || self.u.nrows() != data.ratings.n_users() {
            return Err(BdlError::dim("factor rows do not match the data"));
        }
        if self.u.ncols() != self.params.latent_width() || self.v.ncols() != self.params.latent_width() {
            return Err(BdlError::dim("factor width differs from the middle layer"));
        }
        Ok(())
    }

    fn input<'a>(&'a self, x0: &'a Array2<T>, l: usize) -> ArrayView2<'a, T> {
        if l == 1 {
            x0.view()
        } else {
            self.acts[l - 2].view()
        }
    }
}

/// Applies layer `l` (1-based) to a single row.
fn layer_row<T: Scalar>(x: ArrayView1<'_, T>, params: &NetParams<T>, l: usize) -> Array1<T> {
    let mut z = x.dot(&params.weights[l - 1]) + &params.biases[l - 1];
    if l < params.n_layers() {
        z.mapv_inplace(Scalar::sigmoid);
    }
    z
}

fn sq_dist<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}

/// Precision and mean of a factor row's Gaussian conditional, built from the
/// same system the MAP coordinate update solves.
fn row_posterior<T: Scalar>(
    gram: ArrayView2<'_, T>,
    others: ArrayView2<'_, T>,
    positives: &[usize],
    ratings: &ImplicitRatings,
    lambda: T,
    prior: Option<ArrayView1<'_, T>>,
) -> Result<(Cholesky<T>, Array1<T>)> {
    let (prec, rhs) = row_system(
        gram,
        others,
        positives,
        T::of(ratings.a()),
        T::of(ratings.b()),
        lambda,
        prior,
    );
    let chol = Cholesky::new(prec.view())
        .map_err(|e| BdlError::numeric(format!("conditional precision is not positive definite: {}", e)))?;
    let mean = chol.solve(rhs.view());
    Ok((chol, mean))
}

fn draw<T: Scalar>(chol: &Cholesky<T>, mean: Array1<T>, rng: &mut BdlRng) -> Array1<T> {
    let z = standard_normal_vec::<T>(mean.len(), rng);
    mean + chol.backward(z.view())
}

/// Mean of `p(u_i | R_i, V, λ_u)`; identical to the MAP user update.
pub fn cond_u_mean<T: Scalar>(i: usize, v: ArrayView2<'_, T>, ratings: &ImplicitRatings, lambda_u: T) -> Result<Array1<T>> {
    let gram = v.t().dot(&v);
    Ok(row_posterior(gram.view(), v, ratings.user(i), ratings, lambda_u, None)?.1)
}

/// Exact draw from `p(u_i | R_i, V, λ_u)`: precision `λ_u I + Σ_j C_ij v_j v_jᵀ`.
pub fn cond_u_sample<T: Scalar>(
    i: usize,
    v: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_u: T,
    rng: &mut BdlRng,
) -> Result<Array1<T>> {
    if !(lambda_u > T::zero()) {
        return Err(BdlError::Argument("lambda_u must be > 0".into()));
    }
    let gram = v.t().dot(&v);
    let (chol, mean) = row_posterior(gram.view(), v, ratings.user(i), ratings, lambda_u, None)?;
    Ok(draw(&chol, mean, rng))
}

fn item_users(ratings: &ImplicitRatings, j: usize) -> Vec<usize> {
    (0..ratings.n_users()).filter(|&i| ratings.is_positive(i, j)).collect()
}

/// Mean of `p(v_j | X_{L/2,j}, R_j, U, λ_v)`; identical to the MAP item update.
pub fn cond_v_mean<T: Scalar>(
    j: usize,
    u: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_v: T,
    middle: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    let gram = u.t().dot(&u);
    let users = item_users(ratings, j);
    Ok(row_posterior(gram.view(), u, &users, ratings, lambda_v, Some(middle))?.1)
}

/// Exact draw from `p(v_j | X_{L/2,j}, R_j, U, λ_v)`.
pub fn cond_v_sample<T: Scalar>(
    j: usize,
    u: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_v: T,
    middle: ArrayView1<'_, T>,
    rng: &mut BdlRng,
) -> Result<Array1<T>> {
    if !(lambda_v > T::zero()) {
        return Err(BdlError::Argument("lambda_v must be > 0".into()));
    }
    let gram = u.t().dot(&u);
    let users = item_users(ratings, j);
    let (chol, mean) = row_posterior(gram.view(), u, &users, ratings, lambda_v, Some(middle))?;
    Ok(draw(&chol, mean, rng))
}

/// Unnormalized log conditional of activation row `X_{l,j}` at value `x`.
pub fn activation_log_density<T: Scalar>(
    j: usize,
    l: usize,
    x: ArrayView1<'_, T>,
    state: &GibbsState<T>,
    data: &CdlData<T>,
    hyper: &Hyperparams<T>,
) -> T {
    let half = T::of(0.5);
    let params = &state.params;
    let n_layers = params.n_layers();
    let below = layer_row(state.input(&data.x0, l).row(j), params, l);
    let mut lp = -half * hyper.lambda_s * sq_dist(below.view(), x);
    if l < n_layers {
        let above = layer_row(x, params, l + 1);
        lp -= half * hyper.lambda_s * sq_dist(above.view(), state.acts[l].row(j));
    } else {
        lp -= half * hyper.lambda_n * sq_dist(x, data.xc.row(j));
    }
    if l == params.middle() {
        lp -= half * hyper.lambda_v * sq_dist(state.v.row(j), x);
    }
    lp
}

/// One random-walk Metropolis proposal for `X_{l,j}` with scale `step`.
/// Returns the resulting row and whether the proposal was accepted.
#[allow(clippy::too_many_arguments)]
pub fn activation_step<T: Scalar>(
    j: usize,
    l: usize,
    state: &GibbsState<T>,
    data: &CdlData<T>,
    hyper: &Hyperparams<T>,
    step: T,
    rng: &mut BdlRng,
) -> (Array1<T>, bool) {
    let current = state.acts[l - 1].row(j).to_owned();
    let proposal = &current + &(standard_normal_vec::<T>(current.len(), rng) * step);
    let log_ratio = activation_log_density(j, l, proposal.view(), state, data, hyper)
        - activation_log_density(j, l, current.view(), state, data, hyper);
    if metropolis_accept(log_ratio, rng) {
        (proposal, true)
    } else {
        (current, false)
    }
}

/// Random-walk Metropolis update of `X_{l,j}` in place.
pub fn mh_sample_activation<T: Scalar>(
    j: usize,
    l: usize,
    state: &mut GibbsState<T>,
    data: &CdlData<T>,
    hyper: &Hyperparams<T>,
    step: T,
    rng: &mut BdlRng,
) -> bool {
    let (row, accepted) = activation_step(j, l, state, data, hyper, step, rng);
    state.acts[l - 1].row_mut(j).assign(&row);
    accepted
}

/// Column `n` of layer `l` with its bias appended (`W⁺_{l,*n}`).
pub fn weight_column<T: Scalar>(params: &NetParams<T>, l: usize, n: usize) -> Array1<T> {
    let w = &params.weights[l - 1];
    let mut col = Array1::<T>::zeros(w.nrows() + 1);
    col.slice_mut(s![..w.nrows()]).assign(&w.column(n));
    col[w.nrows()] = params.biases[l - 1][n];
    col
}

fn set_weight_column<T: Scalar>(params: &mut NetParams<T>, l: usize, n: usize, col: ArrayView1<'_, T>) {
    let rows = params.weights[l - 1].nrows();
    params.weights[l - 1].column_mut(n).assign(&col.slice(s![..rows]));
    params.biases[l - 1][n] = col[rows];
}

/// Log conditional of `W⁺_{l,*n}` and its gradient:
/// `−λ_w/2 ‖w‖² − λ_s/2 Σ_j (f(X⁺_{l−1,j} w) − X_{l,jn})²`.
pub fn weight_log_density<T: Scalar>(
    l: usize,
    n: usize,
    w: ArrayView1<'_, T>,
    state: &GibbsState<T>,
    data: &CdlData<T>,
    hyper: &Hyperparams<T>,
) -> (T, Array1<T>) {
    let input = state.input(&data.x0, l);
    let k_in = input.ncols();
    let target = state.acts[l - 1].column(n);
    let last = l == state.params.n_layers();
    let pre = input.dot(&w.slice(s![..k_in])) + w[k_in];
    let half = T::of(0.5);
    let mut lp = -half * hyper.lambda_w * w.dot(&w);
    // Per-row derivative of the log-likelihood with respect to the pre-activation.
    let mut dpre = Array1::<T>::zeros(pre.len());
    Zip::from(&mut dpre).and(&pre).and(&target).for_each(|d, &a, &t| {
        let (out, slope) = if last {
            (a, T::one())
        } else {
            let s = a.sigmoid();
            (s, s * (T::one() - s))
        };
        let r = out - t;
        lp -= half * hyper.lambda_s * r * r;
        *d = -hyper.lambda_s * r * slope;
    });
    let mut grad = w.mapv(|x| -hyper.lambda_w * x);
    grad.slice_mut(s![..k_in]).scaled_add(T::one(), &input.t().dot(&dpre));
    grad[k_in] += dpre.sum();
    (lp, grad)
}

/// One Metropolis-adjusted Langevin update of `W⁺_{l,*n}` with step `eps`:
/// proposal `w' = w + ε ∇log p(w) + √(2ε) ξ`.
#[allow(clippy::too_many_arguments)]
pub fn mh_sample_weights<T: Scalar>(
    l: usize,
    n: usize,
    state: &mut GibbsState<T>,
    data: &CdlData<T>,
    hyper: &Hyperparams<T>,
    eps: T,
    rng: &mut BdlRng,
) -> bool {
    let current = weight_column(&state.params, l, n);
    let (next, accepted) = mala_step(
        &current,
        eps,
        |w| weight_log_density(l, n, w.view(), state, data, hyper),
        rng,
    );
    if accepted {
        set_weight_column(&mut state.params, l, n, next.view());
    }
    accepted
}

/// Joint log-density of the full state (constants dropped).
pub fn joint_log_density<T: Scalar>(state: &GibbsState<T>, data: &CdlData<T>, hyper: &Hyperparams<T>) -> T {
    let half = T::of(0.5);
    let params = &state.params;
    let mut lp = -half * hyper.lambda_w * params.sq_norm();
    for l in 1..=params.n_layers() {
        let input = state.input(&data.x0, l);
        let mut mean = input.dot(&params.weights[l - 1]) + &params.biases[l - 1];
        if l < params.n_layers() {
            mean.mapv_inplace(Scalar::sigmoid);
        }
        let d = &mean - &state.acts[l - 1];
        lp -= half * hyper.lambda_s * d.iter().fold(T::zero(), |s, &x| s + x * x);
    }
    let recon = &state.acts[params.n_layers() - 1] - &data.xc;
    lp -= half * hyper.lambda_n * recon.iter().fold(T::zero(), |s, &x| s + x * x);
    let tether = &state.v - &state.acts[params.middle() - 1];
    lp -= half * hyper.lambda_v * tether.iter().fold(T::zero(), |s, &x| s + x * x);
    lp -= half * hyper.lambda_u * state.u.iter().fold(T::zero(), |s, &x| s + x * x);
    lp + ratings_term(state.u.view(), state.v.view(), &data.ratings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOptions {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial random-walk scale for activations.
    pub activation_step: f64,
    /// Initial Langevin step for weight columns.
    pub weight_step: f64,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions {
            sweeps: 200,
            burn_in: 100,
            thin: 5,
            activation_step: 0.1,
            weight_step: 1e-3,
        }
    }
}

pub use crate::mcmc::TARGET_ACCEPTANCE;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsTraceRow {
    pub sweep: usize,
    pub log_density: f64,
    pub activation_acceptance: f64,
    pub weight_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSample<T> {
    pub sweep: usize,
    pub params: NetParams<T>,
    pub u: Array2<T>,
    pub v: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct GibbsRun<T> {
    pub samples: Vec<GibbsSample<T>>,
    pub trace: Vec<GibbsTraceRow>,
    pub state: GibbsState<T>,
    /// Final per-layer proposal scales (activations, weights).
    pub activation_steps: Vec<f64>,
    pub weight_steps: Vec<f64>,
}

/// Systematic-scan Metropolis-within-Gibbs: all `u_i`, all `v_j`, then the
/// activations layer by layer, then the weight columns layer by layer.
/// Item- and user-indexed blocks draw from independent per-block streams,
/// so the chain is reproducible regardless of thread count.
pub fn run_gibbs<T: Scalar>(
    data: &CdlData<T>,
    hyper: &Hyperparams<T>,
    init: GibbsState<T>,
    opts: &GibbsOptions,
) -> Result<GibbsRun<T>> {
    hyper.validate()?;
    if !(hyper.lambda_s > T::zero() && hyper.lambda_u > T::zero() && hyper.lambda_v > T::zero()) {
        return Err(BdlError::config("lambda_s", "sampling needs finite positive lambda_s, lambda_u, lambda_v"));
    }
    if opts.sweeps <= opts.burn_in {
        return Err(BdlError::config("sweeps", "must exceed burn_in"));
    }
    if opts.thin == 0 {
        return Err(BdlError::config("thin", "must be >= 1"));
    }
    init.validate(data)?;
    let mut state = init;
    let n_layers = state.params.n_layers();
    let mut act_steps = vec![opts.activation_step; n_layers];
    let mut w_steps = vec![opts.weight_step; n_layers];
    let seed = child_seed(state.seed, "bcdl");
    let by_item = data.ratings.by_item();
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(opts.sweeps);
    for sweep in 0..opts.sweeps {
        let phase = |kind: u64| (state.step << 8) | kind;
        let (pu, pv) = (phase(0), phase(1));
        let gram_v = state.v.t().dot(&state.v);
        let users: Vec<Array1<T>> = (0..data.ratings.n_users())
            .into_par_iter()
            .map(|i| {
                let (chol, mean) = row_posterior(
                    gram_v.view(),
                    state.v.view(),
                    data.ratings.user(i),
                    &data.ratings,
                    hyper.lambda_u,
                    None,
                )?;
                Ok(draw(&chol, mean, &mut block_rng(seed, pu, i as u64)))
            })
            .collect::<Result<_>>()?;
        for (i, row) in users.into_iter().enumerate() {
            state.u.row_mut(i).assign(&row);
        }
        let gram_u = state.u.t().dot(&state.u);
        let middle = &state.acts[state.params.middle() - 1];
        let items: Vec<Array1<T>> = (0..data.ratings.n_items())
            .into_par_iter()
            .map(|j| {
                let (chol, mean) = row_posterior(
                    gram_u.view(),
                    state.u.view(),
                    &by_item[j],
                    &data.ratings,
                    hyper.lambda_v,
                    Some(middle.row(j)),
                )?;
                Ok(draw(&chol, mean, &mut block_rng(seed, pv, j as u64)))
            })
            .collect::<Result<_>>()?;
        for (j, row) in items.into_iter().enumerate() {
            state.v.row_mut(j).assign(&row);
        }

        let mut act_rates = Vec::with_capacity(n_layers);
        for l in 1..=n_layers {
            let step = T::of(act_steps[l - 1]);
            let pl = phase(2 + l as u64);
            let rows: Vec<(Array1<T>, bool)> = (0..data.x0.nrows())
                .into_par_iter()
                .map(|j| {
                    activation_step(j, l, &state, data, hyper, step, &mut block_rng(seed, pl, j as u64))
                })
                .collect();
            let accepted = rows.iter().filter(|r| r.1).count();
            for (j, (row, _)) in rows.into_iter().enumerate() {
                state.acts[l - 1].row_mut(j).assign(&row);
            }
            act_rates.push(accepted as f64 / data.x0.nrows().max(1) as f64);
        }

        let mut w_rates = Vec::with_capacity(n_layers);
        let mut wrng = block_rng(seed, phase(0x80), 0);
        for l in 1..=n_layers {
            let eps = T::of(w_steps[l - 1]);
            let cols = state.params.weights[l - 1].ncols();
            let mut accepted = 0;
            for n in 0..cols {
                if mh_sample_weights(l, n, &mut state, data, hyper, eps, &mut wrng) {
                    accepted += 1;
                }
            }
            w_rates.push(accepted as f64 / cols as f64);
        }

        if sweep < opts.burn_in {
            for l in 0..n_layers {
                tune_scale(&mut act_steps[l], act_rates[l]);
                tune_scale(&mut w_steps[l], w_rates[l]);
            }
        }
        state.step += 1;
        let lp = joint_log_density(&state, data, hyper).as_f64();
        trace.push(GibbsTraceRow {
            sweep,
            log_density: lp,
            activation_acceptance: act_rates.iter().sum::<f64>() / n_layers as f64,
            weight_acceptance: w_rates.iter().sum::<f64>() / n_layers as f64,
        });
        if !lp.is_finite() {
            return Err(BdlError::numeric(format!(
                "joint log-density became non-finite at sweep {} (last finite trace row: {:?})",
                sweep,
                trace.iter().rev().find(|r| r.log_density.is_finite())
            )));
        }
        if sweep >= opts.burn_in && (sweep - opts.burn_in).is_multiple_of(opts.thin) {
            samples.push(GibbsSample {
                sweep,
                params: state.params.clone(),
                u: state.u.clone(),
                v: state.v.clone(),
            });
        }
    }
    Ok(GibbsRun {
        samples,
        trace,
        state,
        activation_steps: act_steps,
        weight_steps: w_steps,
    })
}

/// Posterior-mean score matrix `E[U Vᵀ]` averaged over retained samples.
pub fn posterior_mean_scores<T: Scalar>(samples: &[GibbsSample<T>]) -> Result<Array2<T>> {
    let first = samples
        .first()
        .ok_or_else(|| BdlError::Argument("no posterior samples retained".into()))?;
    let mut acc = Array2::<T>::zeros((first.u.nrows(), first.v.nrows()));
    for s in samples {
        acc += &s.u.dot(&s.v.t());
    }
    acc /= T::of_usize(samples.len());
    Ok(acc)
}

/// Posterior means of `U` and `V` (useful for checkpointing a summary).
pub fn posterior_mean_factors<T: Scalar>(samples: &[GibbsSample<T>]) -> Result<(Array2<T>, Array2<T>)> {
    let first = samples
        .first()
        .ok_or_else(|| BdlError::Argument("no posterior samples retained".into()))?;
    let mut u = Array2::<T>::zeros(first.u.raw_dim());
    let mut v = Array2::<T>::zeros(first.v.raw_dim());
    for s in samples {
        u += &s.u;
        v += &s.v;
    }
    let n = T::of_usize(samples.len());
    Ok((u / n, v / n))
}

