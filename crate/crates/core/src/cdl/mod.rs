//! Collaborative Deep Learning: a Bayesian SDAE on item content joined to
//! implicit-feedback matrix factorization through the item factors `V`.
//!
//! The MAP objective (λ_s → ∞) is
//!
//! ```text
//! L = −λ_u/2 Σ‖u_i‖² − λ_w/2 Σ(‖W_l‖² + ‖b_l‖²) − λ_v/2 Σ‖v_j − f_e(X_0,j)‖²
//!     − λ_n/2 Σ‖f_r(X_0,j) − X_c,j‖² − Σ_ij C_ij/2 (R_ij − u_iᵀv_j)²
//! ```
//!
//! and is maximized by alternating exact ridge solves for `U`, `V` with
//! gradient steps on the network.

mod eval;
mod rank;
mod train;

pub use eval::{predict, recall_at_m, top_m, RecallReport};
pub use rank::{cdr_objective_term, cdr_user_gradient, PreferenceSet};
pub(crate) use train::{net_pass, sweep_tolerance};
pub use train::{train_sdae, train_cdl, train_cdl_observed, CdlData, CdlMode, CdlModel, CdlOptions, EpochRecord};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::corpus::ImplicitRatings;
use crate::error::{BdlError, Result};
use crate::linalg::Cholesky;
use crate::net::{self, backprop, forward, Grads, Hyperparams, NetParams};
use crate::scalar::Scalar;

/// User and item latent factors, one row per user / item.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors<T> {
    pub u: Array2<T>,
    pub v: Array2<T>,
}

impl<T: Scalar> LatentFactors<T> {
    /// Item offsets `ε_j = v_j − f_e(X_0,j)`.
    pub fn offsets(&self, encoded: ArrayView2<'_, T>) -> Array2<T> {
        &self.v - &encoded
    }
}

/// The five terms of the CDL log-likelihood (each ≤ 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms<T> {
    pub user_prior: T,
    pub weight_decay: T,
    pub item_tether: T,
    pub reconstruction: T,
    pub ratings: T,
}

impl<T: Scalar> ObjectiveTerms<T> {
    pub fn total(&self) -> T {
        self.user_prior + self.weight_decay + self.item_tether + self.reconstruction + self.ratings
    }

    fn check(&self) -> Result<()> {
        let named = [
            ("user prior", self.user_prior),
            ("weight decay", self.weight_decay),
            ("item tether", self.item_tether),
            ("reconstruction", self.reconstruction),
            ("ratings", self.ratings),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(BdlError::numeric(format!("objective term `{}` is {}", name, v)));
            }
        }
        Ok(())
    }
}

/// `−Σ_ij C_ij/2 (R_ij − u_iᵀv_j)²` over the full `I × J` grid, computed as
/// `b/2 Σ_ij (u_iᵀv_j)²` plus per-positive corrections.
pub fn ratings_term<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
) -> T {
    let a = T::of(ratings.a());
    let b = T::of(ratings.b());
    let half = T::of(0.5);
    let gu = u.t().dot(&u);
    let gv = v.t().dot(&v);
    let all: T = (&gu * &gv).sum();
    let mut acc = b * all;
    for (i, items) in ratings.positives().iter().enumerate() {
        let ui = u.row(i);
        for &j in items {
            let s = ui.dot(&v.row(j));
            let r = T::one() - s;
            acc += a * r * r - b * s * s;
        }
    }
    -half * acc
}

fn terms_from<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    params: &NetParams<T>,
    encoded: ArrayView2<'_, T>,
    recon: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    hyper: &Hyperparams<T>,
) -> ObjectiveTerms<T> {
    let half = T::of(0.5);
    let user_prior = -half * hyper.lambda_u * u.iter().fold(T::zero(), |s, &x| s + x * x);
    let weight_decay = -half * hyper.lambda_w * params.sq_norm();
    let item_tether = -half
        * hyper.lambda_v
        * v.iter().zip(encoded.iter()).fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
    let reconstruction = -half
        * hyper.lambda_n
        * recon.iter().zip(xc.iter()).fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
    ObjectiveTerms {
        user_prior,
        weight_decay,
        item_tether,
        reconstruction,
        ratings: ratings_term(u, v, ratings),
    }
}

fn check_shapes<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
) -> Result<()> {
    let k = params.latent_width();
    if u.ncols() != k || v.ncols() != k {
        return Err(BdlError::dim(format!(
            "factor width must equal latent width {} (U has {}, V has {})",
            k,
            u.ncols(),
            v.ncols()
        )));
    }
    if u.nrows() != ratings.n_users() || v.nrows() != ratings.n_items() {
        return Err(BdlError::dim("factor rows must match the rating matrix"));
    }
    if x0.nrows() != v.nrows() || xc.raw_dim() != x0.raw_dim() {
        return Err(BdlError::dim("content matrices must have one row per item"));
    }
    Ok(())
}

/// Term-by-term CDL log-likelihood.
pub fn cdl_objective_terms<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    hyper: &Hyperparams<T>,
) -> Result<ObjectiveTerms<T>> {
    check_shapes(u, v, params, x0, xc, ratings)?;
    let acts = forward(x0, params, params.n_layers())?;
    let terms = terms_from(
        u,
        v,
        params,
        acts[params.middle() - 1].view(),
        acts[params.n_layers() - 1].view(),
        xc,
        ratings,
        hyper,
    );
    terms.check()?;
    Ok(terms)
}

/// CDL log-likelihood (higher is better).
pub fn cdl_objective<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    hyper: &Hyperparams<T>,
) -> Result<T> {
    Ok(cdl_objective_terms(u, v, params, x0, xc, ratings, hyper)?.total())
}

/// Normal equations of one row's ridge problem under implicit confidences:
/// precision `b·G + (a − b) Σ_{s∈pos} o_s o_sᵀ + λ I` and right-hand side
/// `a Σ_{s∈pos} o_s + λ·prior`, where `G = OᵀO` over all rows of `others`.
pub(crate) fn row_system<T: Scalar>(
    gram: ArrayView2<'_, T>,
    others: ArrayView2<'_, T>,
    positives: &[usize],
    a: T,
    b: T,
    lambda: T,
    prior: Option<ArrayView1<'_, T>>,
) -> (Array2<T>, Array1<T>) {
    let k = gram.nrows();
    let mut prec = gram.mapv(|x| x * b);
    let mut rhs = Array1::<T>::zeros(k);
    let extra = a - b;
    for &s in positives {
        let o = others.row(s);
        for p in 0..k {
            let op = o[p] * extra;
            for q in 0..k {
                prec[[p, q]] += op * o[q];
            }
        }
        rhs.scaled_add(a, &o);
    }
    for d in 0..k {
        prec[[d, d]] += lambda;
    }
    if let Some(m) = prior {
        rhs.scaled_add(lambda, &m);
    }
    (prec, rhs)
}

pub(crate) fn solve_row<T: Scalar>(prec: Array2<T>, rhs: Array1<T>) -> Result<Array1<T>> {
    Ok(Cholesky::new(prec.view())?.solve(rhs.view()))
}

/// Exact maximizer of the CDL objective in `u_i`:
/// `u_i = (Vᵀ C_i V + λ_u I)⁻¹ Vᵀ C_i R_i`.
pub fn update_user<T: Scalar>(
    i: usize,
    v: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_u: T,
) -> Result<Array1<T>> {
    let gram = v.t().dot(&v);
    let (prec, rhs) = row_system(
        gram.view(),
        v,
        ratings.user(i),
        T::of(ratings.a()),
        T::of(ratings.b()),
        lambda_u,
        None,
    );
    solve_row(prec, rhs)
}

/// Exact maximizer of the CDL objective in `v_j`:
/// `v_j = (Uᵀ C_j U + λ_v I)⁻¹ (Uᵀ C_j R_j + λ_v f_e(X_0,j))`.
pub fn update_item<T: Scalar>(
    j: usize,
    u: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_v: T,
    encoded: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    let users: Vec<usize> = (0..ratings.n_users())
        .filter(|&i| ratings.is_positive(i, j))
        .collect();
    let gram = u.t().dot(&u);
    let (prec, rhs) = row_system(
        gram.view(),
        u,
        &users,
        T::of(ratings.a()),
        T::of(ratings.b()),
        lambda_v,
        Some(encoded),
    );
    solve_row(prec, rhs)
}

/// Gradient of the objective with respect to `u_i`.
pub fn user_gradient<T: Scalar>(
    i: usize,
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_u: T,
) -> Array1<T> {
    let ui = u.row(i);
    let mut g = ui.mapv(|x| -lambda_u * x);
    for (j, vj) in v.axis_iter(Axis(0)).enumerate() {
        let c = T::of(ratings.confidence(i, j));
        let r = T::of(ratings.rating(i, j));
        g.scaled_add(c * (r - ui.dot(&vj)), &vj);
    }
    g
}

/// Gradient of the objective with respect to `v_j`.
pub fn item_gradient<T: Scalar>(
    j: usize,
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    ratings: &ImplicitRatings,
    lambda_v: T,
    encoded: ArrayView1<'_, T>,
) -> Array1<T> {
    let vj = v.row(j);
    let mut g = (&encoded - &vj).mapv(|x| lambda_v * x);
    for (i, ui) in u.axis_iter(Axis(0)).enumerate() {
        let c = T::of(ratings.confidence(i, j));
        let r = T::of(ratings.rating(i, j));
        g.scaled_add(c * (r - ui.dot(&vj)), &ui);
    }
    g
}

/// Gradient of the network part of `−L` (the loss minimized by backprop):
/// weight decay, the λ_v encoder-to-`V` term at layer `L/2` and the λ_n
/// reconstruction term at layer `L`, summed over the given rows.
pub fn net_gradients_cdl<T: Scalar>(
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    hyper: &Hyperparams<T>,
) -> Result<Grads<T>> {
    let mut g = net_data_gradients(params, x0, xc, v, hyper.lambda_v, hyper.lambda_n)?;
    g.add_weight_decay(params, hyper.lambda_w);
    Ok(g)
}

/// Two-headed backprop without weight decay.
pub(crate) fn net_data_gradients<T: Scalar>(
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    lambda_v: T,
    lambda_n: T,
) -> Result<Grads<T>> {
    if xc.raw_dim() != x0.raw_dim() || v.nrows() != x0.nrows() || v.ncols() != params.latent_width() {
        return Err(BdlError::dim("content, factors and network shapes disagree"));
    }
    let n = params.n_layers();
    let mid = params.middle();
    let acts = forward(x0, params, n)?;
    let mut injected: Vec<Option<Array2<T>>> = vec![None; n];
    if lambda_v != T::zero() {
        injected[mid - 1] = Some((&acts[mid - 1] - &v) * lambda_v);
    }
    if lambda_n != T::zero() {
        injected[n - 1] = Some((&acts[n - 1] - &xc) * lambda_n);
    }
    backprop(x0, params, &acts, &injected)
}

pub(crate) fn encode_rows<T: Scalar>(x0: ArrayView2<'_, T>, params: &NetParams<T>) -> Result<Array2<T>> {
    net::encode(x0, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scalar_user_update() {
        let r = ImplicitRatings::new(1, vec![vec![0]], 1.0, 0.01).unwrap();
        let u = update_user(0, array![[2.0]].view(), &r, 1.0).unwrap();
        assert!((u[0] - 0.4f64).abs() < 1e-15);
    }

    #[test]
    fn zero_items_give_zero_user() {
        let r = ImplicitRatings::new(3, vec![vec![0, 2]], 1.0, 0.01).unwrap();
        let u = update_user(0, Array2::<f64>::zeros((3, 2)).view(), &r, 0.5).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_item_update() {
        let r = ImplicitRatings::new(1, vec![vec![]], 1.0, 0.01).unwrap();
        let v = update_item(0, array![[1.0]].view(), &r, 1.0, array![0.5].view()).unwrap();
        assert!((v[0] - 0.5f64 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn zero_users_give_encoder_item() {
        let r = ImplicitRatings::new(2, vec![vec![1], vec![]], 1.0, 0.01).unwrap();
        let enc = array![0.3, -0.7];
        let v = update_item(1, Array2::<f64>::zeros((2, 2)).view(), &r, 10.0, enc.view()).unwrap();
        assert_eq!(v, enc);
    }

    #[test]
    fn huge_lambda_v_collapses_to_encoder() {
        let r = ImplicitRatings::new(1, vec![vec![0]], 1.0, 0.01).unwrap();
        let enc = array![0.25];
        let v = update_item(0, array![[1.0]].view(), &r, 1e12, enc.view()).unwrap();
        assert!((v[0] - 0.25f64).abs() < 1e-9);
    }

    #[test]
    fn singular_user_system_is_an_error() {
        let r = ImplicitRatings::new(2, vec![vec![0]], 1.0, 0.01).unwrap();
        assert!(matches!(
            update_user(0, Array2::<f64>::zeros((2, 2)).view(), &r, 0.0),
            Err(BdlError::Solve(_))
        ));
    }
}
