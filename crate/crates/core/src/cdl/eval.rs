use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::corpus::ImplicitRatings;
use crate::error::{BdlError, Result};
use crate::net::NetParams;
use crate::scalar::Scalar;

/// Dense `I × J` predicted ratings `u_iᵀ v_j`.
///
/// Items listed in `cold` have no training ratings, so their offset is zero
/// and they are scored with the encoder output alone: `u_iᵀ f_e(X_0,j)`.
/// `x0` is only read for cold items and may have more rows than `v` (new
/// items appended after the trained ones are always cold).
pub fn predict<T: Scalar>(
    u: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    cold: &[usize],
) -> Result<Array2<T>> {
    let n_items = x0.nrows().max(v.nrows());
    let mut item_vecs = Array2::<T>::zeros((n_items, u.ncols()));
    item_vecs.slice_mut(ndarray::s![..v.nrows(), ..]).assign(&v);
    let mut cold_rows: Vec<usize> = cold.to_vec();
    cold_rows.extend(v.nrows()..n_items);
    cold_rows.sort_unstable();
    cold_rows.dedup();
    if !cold_rows.is_empty() {
        if cold_rows.iter().any(|&j| j >= x0.nrows()) {
            return Err(BdlError::dim("cold item has no content row"));
        }
        let rows = x0.select(ndarray::Axis(0), &cold_rows);
        let enc = super::encode_rows(rows.view(), params)?;
        for (r, &j) in cold_rows.iter().enumerate() {
            item_vecs.row_mut(j).assign(&enc.row(r));
        }
    }
    Ok(u.dot(&item_vecs.t()))
}

/// Indices of the `m` best-scored items, skipping `exclude` (sorted). Ties
/// break toward the lower index.
pub fn top_m<T: Scalar>(scores: ArrayView1<'_, T>, exclude: &[usize], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len())
        .filter(|j| exclude.binary_search(j).is_err())
        .collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    if m < idx.len() {
        idx.select_nth_unstable_by(m, cmp);
        idx.truncate(m);
    }
    idx.sort_unstable_by(cmp);
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    /// `None` for users without test positives.
    pub per_user: Vec<Option<f64>>,
    pub mean: f64,
    pub n_evaluated: usize,
}

/// recall@M: per user, the share of held-out positives found in the top-M
/// list built from items not already positive in `train`. The mean is over
/// users with at least one test positive.
pub fn recall_at_m<T: Scalar>(
    scores: ArrayView2<'_, T>,
    train: &ImplicitRatings,
    test: &ImplicitRatings,
    m: usize,
) -> Result<RecallReport> {
    if m == 0 {
        return Err(BdlError::Argument("M must be positive".into()));
    }
    if scores.nrows() != test.n_users() || scores.ncols() != test.n_items() {
        return Err(BdlError::dim("score matrix does not match the test ratings"));
    }
    if train.n_users() != test.n_users() {
        return Err(BdlError::dim("train and test user counts differ"));
    }
    let mut per_user = Vec::with_capacity(test.n_users());
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..test.n_users() {
        let held = test.user(i);
        if held.is_empty() {
            per_user.push(None);
            continue;
        }
        let top = top_m(scores.row(i), train.user(i), m);
        let hits = top.iter().filter(|j| held.binary_search(j).is_ok()).count();
        let r = hits as f64 / held.len() as f64;
        sum += r;
        n += 1;
        per_user.push(Some(r));
    }
    Ok(RecallReport {
        per_user,
        mean: if n > 0 { sum / n as f64 } else { 0.0 },
        n_evaluated: n,
    })
}
