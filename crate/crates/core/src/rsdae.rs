//! Relational SDAE: an SDAE whose middle layer is tied, through a product of
//! Gaussians, to a relational latent matrix `S` (`K × J`) carrying a
//! graph-Laplacian matrix-variate prior. Trained by alternating exact-in-the-
//! limit `S` solves with network gradient passes (deterministic layers).
//!
//! The maximized log-likelihood is
//!
//! ```text
//! −λ_l/2 tr(S L_a Sᵀ) − λ_r/2 Σ_j ‖s_j − X_{L/2,j}ᵀ‖² − λ_w/2 Σ_l ‖W⁺_l‖²
//! − λ_n/2 Σ_j ‖X_{L,j} − X_{c,j}‖²
//! ```
//!
//! The Laplacian prior is improper (its precision is singular), so it is only
//! ever used as an unnormalized MAP penalty.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::cdl::{net_pass, sweep_tolerance};
use crate::corpus::ItemGraph;
use crate::error::{BdlError, Result};
use crate::net::{forward, Hyperparams, Momentum, NetParams};
use crate::rng::child_seed;
use crate::scalar::Scalar;

/// Default iteration cap of the steepest-descent row solver.
pub const MAX_STEEPEST_ITERS: usize = 200;
/// Residual norm at which the row solver stops early.
pub const STEEPEST_TOL: f64 = 1e-8;

fn laplacian_row<T: Scalar>(graph: &ItemGraph, x: ArrayView1<'_, T>) -> Array1<T> {
    let xs: Vec<T> = x.to_vec();
    let mut y = vec![T::zero(); xs.len()];
    graph.laplacian_apply(&xs, &mut y);
    Array1::from(y)
}

fn check_graph<T: Scalar>(s: ArrayView2<'_, T>, graph: &ItemGraph) -> Result<()> {
    if s.ncols() != graph.n_nodes() {
        return Err(BdlError::dim(format!(
            "relational matrix has {} columns, graph has {} nodes",
            s.ncols(),
            graph.n_nodes()
        )));
    }
    Ok(())
}

/// `−(λ_l/2) Σ_k S_kᵀ L_a S_k`, the Laplacian prior term with constants dropped.
pub fn matrix_normal_logdensity_term<T: Scalar>(s: ArrayView2<'_, T>, graph: &ItemGraph, lambda_l: T) -> Result<T> {
    check_graph(s, graph)?;
    let quad = s
        .axis_iter(Axis(0))
        .map(|row| row.dot(&laplacian_row(graph, row)))
        .fold(T::zero(), |a, b| a + b);
    Ok(-T::of(0.5) * lambda_l * quad)
}

/// Product of two isotropic Gaussians: precisions add and the mean is the
/// precision-weighted average.
pub fn pog_combine<T: Scalar>(
    mean1: ArrayView1<'_, T>,
    prec1: T,
    mean2: ArrayView1<'_, T>,
    prec2: T,
) -> Result<(Array1<T>, T)> {
    if !(prec1 > T::zero() && prec2 > T::zero()) {
        return Err(BdlError::Argument(format!(
            "precisions must be positive, got {} and {}",
            prec1, prec2
        )));
    }
    if mean1.len() != mean2.len() {
        return Err(BdlError::dim("Gaussian means differ in length"));
    }
    let prec = prec1 + prec2;
    let mean = (&mean1 * prec1 + &mean2 * prec2) / prec;
    Ok((mean, prec))
}

/// Result of the steepest-descent row solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SteepestSolve<T> {
    pub row: Array1<T>,
    /// `‖r(t)‖` for `t = 0..=iterations`.
    pub residual_norms: Vec<T>,
}

impl<T: Scalar> SteepestSolve<T> {
    pub fn iterations(&self) -> usize {
        self.residual_norms.len() - 1
    }
}

/// Solves `(λ_l L_a + λ_r I) s = λ_r x` by steepest descent with exact line
/// search, starting from `start`. Each iteration applies the Laplacian once,
/// costing `O(J + E)`.
pub fn s_update_steepest<T: Scalar>(
    graph: &ItemGraph,
    start: ArrayView1<'_, T>,
    midlayer_col: ArrayView1<'_, T>,
    lambda_l: T,
    lambda_r: T,
    max_iters: usize,
) -> Result<SteepestSolve<T>> {
    if !(lambda_r > T::zero()) {
        return Err(BdlError::Solve(
            "lambda_r must be > 0: the Laplacian alone is singular".into(),
        ));
    }
    if !(lambda_l >= T::zero()) {
        return Err(BdlError::Argument("lambda_l must be >= 0".into()));
    }
    let j = graph.n_nodes();
    if start.len() != j || midlayer_col.len() != j {
        return Err(BdlError::dim("row length differs from the graph size"));
    }
    let apply = |x: ArrayView1<'_, T>| -> Array1<T> {
        let mut y = laplacian_row(graph, x) * lambda_l;
        y.scaled_add(lambda_r, &x);
        y
    };
    let rhs = midlayer_col.mapv(|x| x * lambda_r);
    let mut s = start.to_owned();
    let mut r = &rhs - &apply(s.view());
    let mut norms = vec![r.dot(&r).sqrt()];
    let tol = T::of(STEEPEST_TOL);
    for _ in 0..max_iters {
        let rr = r.dot(&r);
        if rr.sqrt() <= tol {
            break;
        }
        let ar = apply(r.view());
        let delta = rr / r.dot(&ar);
        s.scaled_add(delta, &r);
        r.scaled_add(-delta, &ar);
        let norm = r.dot(&r).sqrt();
        if !norm.is_finite() {
            return Err(BdlError::numeric("steepest-descent residual is not finite"));
        }
        norms.push(norm);
    }
    Ok(SteepestSolve { row: s, residual_norms: norms })
}

/// Named terms of the RSDAE log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsdaeTerms<T> {
    pub laplacian: T,
    pub tether: T,
    pub weight_decay: T,
    pub reconstruction: T,
}

impl<T: Scalar> RsdaeTerms<T> {
    pub fn total(&self) -> T {
        self.laplacian + self.tether + self.weight_decay + self.reconstruction
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("laplacian", self.laplacian),
            ("tether", self.tether),
            ("weight_decay", self.weight_decay),
            ("reconstruction", self.reconstruction),
        ] {
            if !v.is_finite() {
                return Err(BdlError::numeric(format!("RSDAE objective term `{}` is {}", name, v)));
            }
        }
        Ok(())
    }
}

fn sq_diff<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}

/// Evaluates every term with deterministic (`λ_s → ∞`) activations.
pub fn rsdae_objective_terms<T: Scalar>(
    s: ArrayView2<'_, T>,
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    graph: &ItemGraph,
    hyper: &Hyperparams<T>,
) -> Result<RsdaeTerms<T>> {
    if s.nrows() != params.latent_width() || s.ncols() != x0.nrows() || xc.raw_dim() != x0.raw_dim() {
        return Err(BdlError::dim("relational matrix, content and network shapes disagree"));
    }
    let acts = forward(x0, params, params.n_layers())?;
    let half = T::of(0.5);
    let terms = RsdaeTerms {
        laplacian: matrix_normal_logdensity_term(s, graph, hyper.lambda_l)?,
        tether: -half * hyper.lambda_r * sq_diff(s.t(), acts[params.middle() - 1].view()),
        weight_decay: -half * hyper.lambda_w * params.sq_norm(),
        reconstruction: -half * hyper.lambda_n * sq_diff(acts[params.n_layers() - 1].view(), xc),
    };
    terms.check()?;
    Ok(terms)
}

pub fn rsdae_objective<T: Scalar>(
    s: ArrayView2<'_, T>,
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    graph: &ItemGraph,
    hyper: &Hyperparams<T>,
) -> Result<T> {
    Ok(rsdae_objective_terms(s, params, x0, xc, graph, hyper)?.total())
}

#[derive(Debug, Clone)]
pub struct RsdaeData<T> {
    pub x0: Array2<T>,
    pub xc: Array2<T>,
    pub graph: ItemGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsdaeOptions {
    pub epochs: usize,
    pub net_passes: usize,
    /// Plain-SDAE passes before `S` is initialized from the middle layer.
    pub pretrain_passes: usize,
    pub seed: u64,
    pub max_steepest_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsdaeEpoch<T> {
    pub epoch: usize,
    pub before_s: T,
    pub after_s: T,
    pub objective: T,
    /// Largest steepest-descent iteration count over the rows of `S`.
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RsdaeModel<T> {
    pub params: NetParams<T>,
    /// `K × J`; column `j` is `s_j`.
    pub s: Array2<T>,
    pub trace: Vec<RsdaeEpoch<T>>,
}

/// Middle-layer activations transposed to the `K × J` layout of `S`.
pub fn middle_layer<T: Scalar>(x0: ArrayView2<'_, T>, params: &NetParams<T>) -> Result<Array2<T>> {
    let mut acts = forward(x0, params, params.middle())?;
    Ok(acts.pop().expect("at least one layer").reversed_axes())
}

/// One sweep over the rows of `S`, each solved in parallel.
pub fn s_sweep<T: Scalar>(
    s: &mut Array2<T>,
    middle: ArrayView2<'_, T>,
    graph: &ItemGraph,
    lambda_l: T,
    lambda_r: T,
    max_iters: usize,
) -> Result<usize> {
    let solved: Vec<SteepestSolve<T>> = (0..s.nrows())
        .into_par_iter()
        .map(|k| s_update_steepest(graph, s.row(k), middle.row(k), lambda_l, lambda_r, max_iters))
        .collect::<Result<_>>()?;
    let mut worst = 0;
    for (k, sol) in solved.into_iter().enumerate() {
        worst = worst.max(sol.iterations());
        s.row_mut(k).assign(&sol.row);
    }
    Ok(worst)
}

/// Alternates `S` sweeps with network passes in which the middle layer is
/// pulled toward `s_j` with weight `λ_r`. With `λ_l = λ_r = 0` this is plain
/// SDAE training on the same pass schedule as [`crate::cdl::train_sdae`].
pub fn train_rsdae<T: Scalar>(
    data: &RsdaeData<T>,
    mut params: NetParams<T>,
    hyper: &Hyperparams<T>,
    opts: &RsdaeOptions,
) -> Result<RsdaeModel<T>> {
    hyper.validate()?;
    let coupled = hyper.lambda_r > T::zero();
    if !coupled && hyper.lambda_l > T::zero() {
        return Err(BdlError::config(
            "lambda_r",
            "must be > 0 when lambda_l > 0 (the Laplacian alone is singular)",
        ));
    }
    if data.x0.nrows() != data.graph.n_nodes() || data.xc.raw_dim() != data.x0.raw_dim() {
        return Err(BdlError::dim("content rows must match graph nodes"));
    }
    let net_seed = child_seed(opts.seed, "sdae");
    let mut momentum = Momentum::new(&params);
    let mut pass = 0u64;
    for _ in 0..opts.pretrain_passes {
        net_pass(
            data.x0.view(),
            data.xc.view(),
            &mut params,
            None,
            &mut momentum,
            hyper,
            T::zero(),
            hyper.lambda_n,
            net_seed,
            pass,
        )?;
        pass += 1;
    }
    let mut s = middle_layer(data.x0.view(), &params)?;
    let objective = |s: &Array2<T>, p: &NetParams<T>| {
        rsdae_objective(s.view(), p, data.x0.view(), data.xc.view(), &data.graph, hyper)
    };
    let mut trace = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let before_s = objective(&s, &params)?;
        let mut max_iterations = 0;
        if coupled {
            let middle = middle_layer(data.x0.view(), &params)?;
            max_iterations = s_sweep(
                &mut s,
                middle.view(),
                &data.graph,
                hyper.lambda_l,
                hyper.lambda_r,
                opts.max_steepest_iters,
            )?;
        }
        let after_s = objective(&s, &params)?;
        if after_s < before_s - sweep_tolerance(before_s) {
            return Err(BdlError::numeric(format!(
                "S sweep decreased the objective at epoch {} ({} -> {})",
                epoch, before_s, after_s
            )));
        }
        let targets = s.t().to_owned();
        for _ in 0..opts.net_passes {
            net_pass(
                data.x0.view(),
                data.xc.view(),
                &mut params,
                Some(targets.view()),
                &mut momentum,
                hyper,
                hyper.lambda_r,
                hyper.lambda_n,
                net_seed,
                pass,
            )?;
            pass += 1;
        }
        let record = RsdaeEpoch {
            epoch,
            before_s,
            after_s,
            objective: objective(&s, &params)?,
            max_iterations,
        };
        log::debug!("rsdae epoch {}: {:?}", epoch, record.objective);
        trace.push(record);
    }
    Ok(RsdaeModel { params, s, trace })
}

/// Cosine similarity between columns `a` and `b` of `S`.
pub fn column_cosine<T: Scalar>(s: ArrayView2<'_, T>, a: usize, b: usize) -> T {
    let (x, y) = (s.column(a), s.column(b));
    let denom = (x.dot(&x) * y.dot(&y)).sqrt();
    if denom == T::zero() {
        T::zero()
    } else {
        x.dot(&y) / denom
    }
}
