//! Marginalized CDL: a one-layer linear marginalized denoising autoencoder in
//! place of the SDAE, so every block has a closed-form solve. The symmetric
//! variant adds a second autoencoder over user attributes.
//!
//! Content is row-major (`X_c` is `J × B`), so the learned maps act on the
//! right: the reconstruction of item `j` is `X̃_0,j W_1` and its projection
//! tether is `‖v_jᵀ P_1 − X_c,j W_1‖²`. The log-likelihood maximized is
//!
//! ```text
//! L = −Σ_j E‖X̃_0,j W_1 − X_c,j‖² − Σ_ij C_ij/2 (R_ij − u_iᵀv_j)²
//!     − λ_u/2 Σ_i ‖u_i‖² − λ_v/2 Σ_j ‖v_jᵀ P_1 − X_c,j W_1‖²
//!   [ − Σ_i E‖Ỹ_0,i W_2 − Y_c,i‖² − λ_u/2 Σ_i ‖u_iᵀ P_2 − Y_c,i W_2‖² ]
//! ```
//!
//! with the expectation over masking noise taken analytically.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cdl::ratings_term;
use crate::corpus::ImplicitRatings;
use crate::error::{BdlError, Result};
use crate::linalg::{solve_spd_jittered, Cholesky};
use crate::rng::{block_rng, child_seed};
use crate::scalar::Scalar;

/// Ridge added to every normal-equation matrix before factorization.
pub const JITTER: f64 = 1e-8;

/// First and second moments of masked copies of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    /// `E[X̃] = (1 − p) X`
    pub lin: Array2<T>,
    /// `E[X̃ᵀX̃]`
    pub quad: Array2<T>,
}

/// Closed-form moments under independent masking with probability `p`:
/// off-diagonal entries of `E[X̃ᵀX̃]` scale by `(1 − p)²`, the diagonal by
/// `(1 − p)`.
pub fn expected_scatter<T: Scalar>(x: ArrayView2<'_, T>, p: T) -> Result<Moments<T>> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(BdlError::Argument(format!("mask probability {} outside [0, 1]", p)));
    }
    if p == T::one() {
        log::warn!("mask probability 1: corrupted input is identically zero");
    }
    let keep = T::one() - p;
    let scatter = x.t().dot(&x);
    let mut quad = scatter.mapv(|s| s * keep * keep);
    for d in 0..quad.nrows() {
        quad[[d, d]] = scatter[[d, d]] * keep;
    }
    Ok(Moments {
        lin: x.mapv(|v| v * keep),
        quad,
    })
}

/// `W = Q⁻¹ S` with `S = E[X̃]ᵀ X_c + (λ/2) X_cᵀ F P` and
/// `Q = E[X̃ᵀX̃] + (λ/2) X_cᵀ X_c`, the stationary point of the map's terms.
fn solve_map<T: Scalar>(
    xc: ArrayView2<'_, T>,
    moments: &Moments<T>,
    factors: ArrayView2<'_, T>,
    projection: ArrayView2<'_, T>,
    lambda: T,
) -> Result<Array2<T>> {
    let half = T::of(0.5) * lambda;
    let mut s = moments.lin.t().dot(&xc);
    s.scaled_add(half, &xc.t().dot(&factors.dot(&projection)));
    let mut q = moments.quad.clone();
    q.scaled_add(half, &xc.t().dot(&xc));
    solve_spd_jittered(q.view(), s.view(), T::of(JITTER))
}

/// Closed-form item-side map `W_1` given `V` and `P_1`.
pub fn solve_w1<T: Scalar>(
    xc: ArrayView2<'_, T>,
    x0_moments: &Moments<T>,
    v: ArrayView2<'_, T>,
    p1: ArrayView2<'_, T>,
    lambda_v: T,
) -> Result<Array2<T>> {
    check_map_shapes(xc, x0_moments, v, p1)?;
    solve_map(xc, x0_moments, v, p1, lambda_v)
}

/// Closed-form user-side map `W_2` given `U` and `P_2`.
pub fn solve_w2<T: Scalar>(
    yc: ArrayView2<'_, T>,
    y0_moments: &Moments<T>,
    u: ArrayView2<'_, T>,
    p2: ArrayView2<'_, T>,
    lambda_u: T,
) -> Result<Array2<T>> {
    check_map_shapes(yc, y0_moments, u, p2)?;
    solve_map(yc, y0_moments, u, p2, lambda_u)
}

fn check_map_shapes<T: Scalar>(
    xc: ArrayView2<'_, T>,
    m: &Moments<T>,
    f: ArrayView2<'_, T>,
    p: ArrayView2<'_, T>,
) -> Result<()> {
    let b = xc.ncols();
    if m.lin.raw_dim() != xc.raw_dim() || m.quad.dim() != (b, b) {
        return Err(BdlError::dim("moments do not match the clean content"));
    }
    if f.nrows() != xc.nrows() || p.nrows() != f.ncols() || p.ncols() != b {
        return Err(BdlError::dim("factor/projection shapes do not match the content"));
    }
    Ok(())
}

/// Gradient of `L` with respect to a content map (`W_1` or `W_2`):
/// `−2(E[X̃ᵀX̃] W − E[X̃]ᵀ X_c) − λ X_cᵀ (X_c W − F P)`.
pub fn map_gradient<T: Scalar>(
    w: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    moments: &Moments<T>,
    factors: ArrayView2<'_, T>,
    projection: ArrayView2<'_, T>,
    lambda: T,
) -> Array2<T> {
    let two = T::of(2.0);
    let mut g = (moments.quad.dot(&w) - moments.lin.t().dot(&xc)) * (-two);
    let resid = xc.dot(&w) - factors.dot(&projection);
    g.scaled_add(-lambda, &xc.t().dot(&resid));
    g
}

/// `−Σ E‖X̃ W − X_c‖²`, expanded with the analytic moments.
pub fn marginal_reconstruction<T: Scalar>(
    w: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    moments: &Moments<T>,
) -> T {
    let quad = (&w.t().dot(&moments.quad) * &w.t()).sum();
    let cross = (&moments.lin.t().dot(&xc) * &w).sum();
    let clean = xc.iter().fold(T::zero(), |s, &x| s + x * x);
    -(quad - T::of(2.0) * cross + clean)
}

fn tether<T: Scalar>(
    w: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    factors: ArrayView2<'_, T>,
    projection: ArrayView2<'_, T>,
    lambda: T,
) -> T {
    let resid = factors.dot(&projection) - xc.dot(&w);
    -T::of(0.5) * lambda * resid.iter().fold(T::zero(), |s, &x| s + x * x)
}

/// Optional user-attribute side of symmetric CDL.
#[derive(Debug, Clone)]
pub struct UserAttributes<T> {
    pub yc: Array2<T>,
    pub moments: Moments<T>,
}

#[derive(Debug, Clone)]
pub struct McdlData<T> {
    pub xc: Array2<T>,
    pub x0_moments: Moments<T>,
    pub ratings: ImplicitRatings,
    pub users: Option<UserAttributes<T>>,
}

impl<T: Scalar> McdlData<T> {
    /// Marginalizes masking noise of rate `p` over `x0` (and `y0`).
    pub fn new(
        x0: ArrayView2<'_, T>,
        xc: Array2<T>,
        ratings: ImplicitRatings,
        user_attrs: Option<(ArrayView2<'_, T>, Array2<T>)>,
        p: T,
    ) -> Result<Self> {
        let x0_moments = expected_scatter(x0, p)?;
        let users = match user_attrs {
            Some((y0, yc)) => Some(UserAttributes {
                moments: expected_scatter(y0, p)?,
                yc,
            }),
            None => None,
        };
        Ok(McdlData {
            xc,
            x0_moments,
            ratings,
            users,
        })
    }
}

/// Learned maps and projections.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalizedState<T> {
    pub w1: Array2<T>,
    pub p1: Array2<T>,
    pub w2: Option<Array2<T>>,
    pub p2: Option<Array2<T>>,
    pub u: Array2<T>,
    pub v: Array2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McdlHyper<T> {
    pub lambda_u: T,
    pub lambda_v: T,
}

/// Log-likelihood of the marginalized model; the user-attribute terms are
/// included only when both the data and the state carry them.
pub fn mcdl_objective<T: Scalar>(
    state: &MarginalizedState<T>,
    data: &McdlData<T>,
    hyper: &McdlHyper<T>,
) -> Result<T> {
    let half = T::of(0.5);
    let mut total = marginal_reconstruction(state.w1.view(), data.xc.view(), &data.x0_moments)
        + ratings_term(state.u.view(), state.v.view(), &data.ratings)
        - half * hyper.lambda_u * state.u.iter().fold(T::zero(), |s, &x| s + x * x)
        + tether(state.w1.view(), data.xc.view(), state.v.view(), state.p1.view(), hyper.lambda_v);
    if let (Some(users), Some(w2), Some(p2)) = (&data.users, &state.w2, &state.p2) {
        total += marginal_reconstruction(w2.view(), users.yc.view(), &users.moments)
            + tether(w2.view(), users.yc.view(), state.u.view(), p2.view(), hyper.lambda_u);
    }
    if !total.is_finite() {
        return Err(BdlError::numeric("marginalized CDL objective is not finite"));
    }
    Ok(total)
}

/// Least-squares projection `P = argmin Σ ‖f_rᵀ P − z_r‖²` with `Z = X_c W`.
pub fn solve_projection<T: Scalar>(
    factors: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    let z = xc.dot(&w);
    let gram = factors.t().dot(&factors);
    solve_spd_jittered(gram.view(), factors.t().dot(&z).view(), T::of(JITTER))
}

/// Row update for a factor tied to content through a projection:
/// maximizes `−Σ_s C_rs/2 (R_rs − f_rᵀ o_s)² − λ_prior/2 ‖f_r‖² − λ/2 ‖Pᵀ f_r − z_r‖²`.
#[allow(clippy::too_many_arguments)]
fn tied_rows<T: Scalar>(
    others: ArrayView2<'_, T>,
    positives: &[Vec<usize>],
    a: T,
    b: T,
    lambda_prior: T,
    projection: Option<(ArrayView2<'_, T>, ArrayView2<'_, T>, T)>,
) -> Result<Vec<Array1<T>>> {
    let k = others.ncols();
    let mut base = others.t().dot(&others) * b;
    for d in 0..k {
        base[[d, d]] += lambda_prior + T::of(JITTER);
    }
    let mut targets = None;
    if let Some((p, z, lambda)) = projection {
        base.scaled_add(lambda, &p.dot(&p.t()));
        targets = Some((p.dot(&z.t()), lambda));
    }
    positives
        .par_iter()
        .enumerate()
        .map(|(r, pos)| {
            let mut prec = base.clone();
            let mut rhs = Array1::<T>::zeros(k);
            for &s in pos {
                let o = others.row(s);
                for p in 0..k {
                    for q in 0..k {
                        prec[[p, q]] += (a - b) * o[p] * o[q];
                    }
                }
                rhs.scaled_add(a, &o);
            }
            if let Some((pz, lambda)) = &targets {
                rhs.scaled_add(*lambda, &pz.column(r));
            }
            Ok(Cholesky::new(prec.view())?.solve(rhs.view()))
        })
        .collect()
}

fn check<T: Scalar>(last: &mut T, block: &str, value: T, iter: usize) -> Result<()> {
    let tol = crate::cdl::sweep_tolerance(*last);
    if value < *last - tol {
        return Err(BdlError::numeric(format!(
            "{} update decreased the objective at iteration {} ({} -> {})",
            block, iter, *last, value
        )));
    }
    *last = value;
    Ok(())
}

fn assign<T: Scalar>(m: &mut Array2<T>, rows: Vec<Array1<T>>) {
    for (mut dst, src) in m.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdlOptions {
    pub iters: usize,
    pub latent: usize,
    pub seed: u64,
    pub init_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McdlRecord<T> {
    pub iter: usize,
    /// Objective after each block solve, in update order.
    pub objective: T,
}

#[derive(Debug, Clone)]
pub struct McdlModel<T> {
    pub state: MarginalizedState<T>,
    pub trace: Vec<McdlRecord<T>>,
    pub initial_objective: T,
}

/// Random initial state; the symmetric blocks are created when `data`
/// carries user attributes.
pub fn init_state<T: Scalar>(data: &McdlData<T>, opts: &McdlOptions) -> MarginalizedState<T> {
    let mut rng = block_rng(child_seed(opts.seed, "mcdl-init"), 0, 0);
    let mut draw = |r: usize, c: usize| {
        Array2::from_shape_simple_fn((r, c), || {
            let z: f64 = rng.sample(StandardNormal);
            T::of(z * opts.init_std)
        })
    };
    let b = data.xc.ncols();
    let k = opts.latent;
    let u = draw(data.ratings.n_users(), k);
    let v = draw(data.ratings.n_items(), k);
    let w1 = draw(b, b);
    let p1 = draw(k, b);
    let (w2, p2) = match &data.users {
        Some(users) => {
            let d = users.yc.ncols();
            (Some(draw(d, d)), Some(draw(k, d)))
        }
        None => (None, None),
    };
    MarginalizedState { w1, p1, w2, p2, u, v }
}

/// Block coordinate ascent: `W_1`, `P_1`, `V`, `U` (then `W_2`, `P_2` in
/// symmetric mode), each solved exactly. Every block is checked not to lower
/// the objective.
pub fn train_mcdl<T: Scalar>(
    data: &McdlData<T>,
    hyper: &McdlHyper<T>,
    opts: &McdlOptions,
) -> Result<McdlModel<T>> {
    train_mcdl_observed(data, hyper, opts, &mut |_, _| {})
}

pub fn train_mcdl_observed<T: Scalar>(
    data: &McdlData<T>,
    hyper: &McdlHyper<T>,
    opts: &McdlOptions,
    observer: &mut dyn FnMut(&McdlRecord<T>, &MarginalizedState<T>),
) -> Result<McdlModel<T>> {
    if data.xc.nrows() != data.ratings.n_items() {
        return Err(BdlError::dim("content rows must match rating items"));
    }
    if let Some(users) = &data.users {
        if users.yc.nrows() != data.ratings.n_users() {
            return Err(BdlError::dim("attribute rows must match rating users"));
        }
    }
    let mut s = init_state(data, opts);
    let initial_objective = mcdl_objective(&s, data, hyper)?;
    let a = T::of(data.ratings.a());
    let b = T::of(data.ratings.b());
    let by_item = data.ratings.by_item();
    let mut trace = Vec::with_capacity(opts.iters);
    let mut last = initial_objective;
    for iter in 0..opts.iters {
        s.w1 = solve_w1(data.xc.view(), &data.x0_moments, s.v.view(), s.p1.view(), hyper.lambda_v)?;
        check(&mut last, "W1", mcdl_objective(&s, data, hyper)?, iter)?;
        s.p1 = solve_projection(s.v.view(), data.xc.view(), s.w1.view())?;
        check(&mut last, "P1", mcdl_objective(&s, data, hyper)?, iter)?;

        let z = data.xc.dot(&s.w1);
        let rows = tied_rows(
            s.u.view(),
            &by_item,
            a,
            b,
            T::zero(),
            Some((s.p1.view(), z.view(), hyper.lambda_v)),
        )?;
        assign(&mut s.v, rows);
        check(&mut last, "V", mcdl_objective(&s, data, hyper)?, iter)?;

        let user_tie = match (&data.users, &s.w2, &s.p2) {
            (Some(users), Some(w2), Some(p2)) => Some((p2.clone(), users.yc.dot(w2))),
            _ => None,
        };
        let rows = tied_rows(
            s.v.view(),
            data.ratings.positives(),
            a,
            b,
            hyper.lambda_u,
            user_tie
                .as_ref()
                .map(|(p2, z2)| (p2.view(), z2.view(), hyper.lambda_u)),
        )?;
        assign(&mut s.u, rows);
        check(&mut last, "U", mcdl_objective(&s, data, hyper)?, iter)?;

        if let Some(users) = &data.users {
            let p2 = s.p2.as_ref().expect("symmetric state");
            s.w2 = Some(solve_w2(users.yc.view(), &users.moments, s.u.view(), p2.view(), hyper.lambda_u)?);
            check(&mut last, "W2", mcdl_objective(&s, data, hyper)?, iter)?;
            s.p2 = Some(solve_projection(
                s.u.view(),
                users.yc.view(),
                s.w2.as_ref().expect("just set").view(),
            )?);
            check(&mut last, "P2", mcdl_objective(&s, data, hyper)?, iter)?;
        }
        let record = McdlRecord {
            iter,
            objective: last,
        };
        observer(&record, &s);
        trace.push(record);
    }
    Ok(McdlModel {
        state: s,
        trace,
        initial_objective,
    })
}
