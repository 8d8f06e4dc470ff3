//! Collaborative deep ranking: the pointwise rating term is replaced by a
//! pairwise preference likelihood `Δ_ijk ~ N(u_iᵀv_j − u_iᵀv_k, C_ijk⁻¹)`
//! over pairs with `R_ij = 1`, `R_ik = 0`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::corpus::ImplicitRatings;
use crate::error::{BdlError, Result};
use crate::rng::block_rng;
use crate::scalar::Scalar;

use super::solve_row;

/// Per-user preference pairs `(j, k)` with a shared observed gap `Δ` and
/// confidence `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceSet<T> {
    pairs: Vec<Vec<(usize, usize)>>,
    delta: T,
    confidence: T,
}

impl<T: Scalar> PreferenceSet<T> {
    pub fn new(
        ratings: &ImplicitRatings,
        pairs: Vec<Vec<(usize, usize)>>,
        delta: T,
        confidence: T,
    ) -> Result<Self> {
        if pairs.len() != ratings.n_users() {
            return Err(BdlError::dim("one pair list per user required"));
        }
        for (i, list) in pairs.iter().enumerate() {
            for &(j, k) in list {
                if j >= ratings.n_items() || k >= ratings.n_items() {
                    return Err(BdlError::validation(format!("pair ({}, {}) out of range", j, k)));
                }
                if !(ratings.is_positive(i, j) && !ratings.is_positive(i, k)) {
                    return Err(BdlError::validation(format!(
                        "user {}: pair ({}, {}) does not satisfy R_ij > R_ik",
                        i, j, k
                    )));
                }
            }
        }
        if !(confidence > T::zero()) {
            return Err(BdlError::Argument("pair confidence must be positive".into()));
        }
        Ok(PreferenceSet {
            pairs,
            delta,
            confidence,
        })
    }

    /// Draws up to `max_per_user` distinct positive/negative pairs per user,
    /// uniformly; users whose full pair set is smaller get all of it.
    pub fn sample(
        ratings: &ImplicitRatings,
        max_per_user: usize,
        delta: T,
        confidence: T,
        seed: u64,
        round: u64,
    ) -> Result<Self> {
        let n_items = ratings.n_items();
        let mut pairs = Vec::with_capacity(ratings.n_users());
        for i in 0..ratings.n_users() {
            let pos = ratings.user(i);
            let n_neg = n_items - pos.len();
            let total = pos.len() * n_neg;
            if total == 0 {
                pairs.push(Vec::new());
                continue;
            }
            if total <= max_per_user {
                let list = pos
                    .iter()
                    .flat_map(|&j| {
                        (0..n_items)
                            .filter(move |k| pos.binary_search(k).is_err())
                            .map(move |k| (j, k))
                    })
                    .collect();
                pairs.push(list);
                continue;
            }
            let mut rng = block_rng(seed, 0xCD0000 + round, i as u64);
            let mut chosen = BTreeSet::new();
            let mut order = Vec::with_capacity(max_per_user);
            while order.len() < max_per_user {
                let j = pos[rng.random_range(0..pos.len())];
                let k = rng.random_range(0..n_items);
                if pos.binary_search(&k).is_ok() {
                    continue;
                }
                if chosen.insert((j, k)) {
                    order.push((j, k));
                }
            }
            pairs.push(order);
        }
        PreferenceSet::new(ratings, pairs, delta, confidence)
    }

    pub fn user(&self, i: usize) -> &[(usize, usize)] {
        &self.pairs[i]
    }

    pub fn n_users(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn confidence(&self) -> T {
        self.confidence
    }

    /// For every item, the `(user, other item, item is the preferred one)`
    /// triples it takes part in.
    pub(crate) fn by_item(&self, n_items: usize) -> Vec<Vec<(usize, usize, bool)>> {
        let mut out = vec![Vec::new(); n_items];
        for (i, list) in self.pairs.iter().enumerate() {
            for &(j, k) in list {
                out[j].push((i, k, true));
                out[k].push((i, j, false));
            }
        }
        out
    }
}

/// `−Σ_i Σ_{(j,k)∈P_i} C/2 (Δ − (u_iᵀv_j − u_iᵀv_k))²`.
pub fn cdr_objective_term<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    prefs: &PreferenceSet<T>,
) -> T {
    let half = T::of(0.5);
    let mut acc = T::zero();
    for i in 0..prefs.n_users() {
        let ui = u.row(i);
        for &(j, k) in prefs.user(i) {
            let r = prefs.delta - (ui.dot(&v.row(j)) - ui.dot(&v.row(k)));
            acc += r * r;
        }
    }
    -half * prefs.confidence * acc
}

/// Gradient of [`cdr_objective_term`] with respect to `u_i`.
pub fn cdr_user_gradient<T: Scalar>(
    i: usize,
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    prefs: &PreferenceSet<T>,
) -> Array1<T> {
    let ui = u.row(i);
    let mut g = Array1::zeros(u.ncols());
    for &(j, k) in prefs.user(i) {
        let d = &v.row(j) - &v.row(k);
        let r = prefs.delta - ui.dot(&d);
        g.scaled_add(prefs.confidence * r, &d);
    }
    g
}

/// Exact maximizer in `u_i` of the ranking objective plus the user prior.
pub(crate) fn update_user_cdr<T: Scalar>(
    i: usize,
    v: ArrayView2<'_, T>,
    prefs: &PreferenceSet<T>,
    lambda_u: T,
) -> Result<Array1<T>> {
    let k = v.ncols();
    let c = prefs.confidence;
    let mut prec = Array2::<T>::eye(k) * lambda_u;
    let mut rhs = Array1::<T>::zeros(k);
    for &(j, kk) in prefs.user(i) {
        let d = &v.row(j) - &v.row(kk);
        for p in 0..k {
            for q in 0..k {
                prec[[p, q]] += c * d[p] * d[q];
            }
        }
        rhs.scaled_add(c * prefs.delta, &d);
    }
    solve_row(prec, rhs)
}

/// Exact maximizer in `v_j` of the ranking objective plus the item tether,
/// holding every other item fixed.
pub(crate) fn update_item_cdr<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    involvement: &[(usize, usize, bool)],
    prefs: &PreferenceSet<T>,
    lambda_v: T,
    encoded: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    let k = v.ncols();
    let c = prefs.confidence;
    let mut prec = Array2::<T>::eye(k) * lambda_v;
    let mut rhs = encoded.mapv(|x| x * lambda_v);
    for &(i, other, preferred) in involvement {
        let ui = u.row(i);
        for p in 0..k {
            for q in 0..k {
                prec[[p, q]] += c * ui[p] * ui[q];
            }
        }
        let s = ui.dot(&v.row(other));
        let target = if preferred {
            prefs.delta + s
        } else {
            s - prefs.delta
        };
        rhs.scaled_add(c * target, &ui);
    }
    solve_row(prec, rhs)
}
