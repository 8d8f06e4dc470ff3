#![allow(dead_code)]

use bdl::corpus::ImplicitRatings;
use bdl::net::{Grads, NetParams};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random::<f64>())
}

pub fn gaussian(rows: usize, cols: usize, scale: f64, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = r.sample(rand_distr::StandardNormal);
        z * scale
    })
}

pub fn random_ratings(users: usize, items: usize, density: f64, r: &mut ChaCha8Rng) -> ImplicitRatings {
    let pos = (0..users)
        .map(|_| (0..items).filter(|_| r.random::<f64>() < density).collect())
        .collect();
    ImplicitRatings::new(items, pos, 1.0, 0.01).unwrap()
}

/// Central finite differences of `f` over every network parameter.
pub fn fd_net_gradient(
    params: &NetParams<f64>,
    h: f64,
    f: impl Fn(&NetParams<f64>) -> f64,
) -> Vec<f64> {
    let mut p = params.clone();
    (0..params.n_params())
        .map(|k| {
            let x = params.flat_get(k);
            p.flat_set(k, x + h);
            let up = f(&p);
            p.flat_set(k, x - h);
            let down = f(&p);
            p.flat_set(k, x);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(analytic: &Grads<f64>, numeric: &[f64], floor: f64) -> f64 {
    numeric
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let a = analytic.flat_get(k);
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
