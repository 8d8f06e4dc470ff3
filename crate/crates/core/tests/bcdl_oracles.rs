mod common;

use bdl::bcdl::{
    activation_log_density, cond_u_mean, cond_u_sample, cond_v_mean, cond_v_sample,
    joint_log_density, mh_sample_activation, mh_sample_weights, run_gibbs, weight_column,
    weight_log_density, GibbsOptions, GibbsState,
};
use bdl::cdl::{update_item, update_user, CdlData};
use bdl::net::{Hyperparams, NetParams};
use bdl::rng::seeded;
use common::{gaussian, random_ratings, rng, uniform};
use ndarray::{array, Array1, Array2};

#[test]
fn conjugate_means_equal_map_updates() {
    let mut r = rng(1);
    let ratings = random_ratings(10, 14, 0.25, &mut r);
    let u = gaussian(10, 3, 0.5, &mut r);
    let v = gaussian(14, 3, 0.5, &mut r);
    let enc = uniform(14, 3, &mut r);
    for i in 0..10 {
        assert_eq!(cond_u_mean(i, v.view(), &ratings, 0.3).unwrap(), update_user(i, v.view(), &ratings, 0.3).unwrap());
    }
    for j in 0..14 {
        assert_eq!(
            cond_v_mean(j, u.view(), &ratings, 2.0, enc.row(j)).unwrap(),
            update_item(j, u.view(), &ratings, 2.0, enc.row(j)).unwrap()
        );
    }
}

#[test]
fn zero_items_give_prior_draws() {
    let mut r = rng(2);
    let ratings = random_ratings(3, 5, 0.5, &mut r);
    let v = Array2::<f64>::zeros((5, 2));
    let lambda_u = 4.0;
    let mut g = seeded(3);
    let n = 10_000;
    let mut ss = [0.0; 2];
    for _ in 0..n {
        let d = cond_u_sample(0, v.view(), &ratings, lambda_u, &mut g).unwrap();
        ss[0] += d[0] * d[0];
        ss[1] += d[1] * d[1];
    }
    for s in ss {
        let var = s / n as f64;
        assert!((var * lambda_u - 1.0).abs() < 0.05, "variance {}", var);
    }
}

#[test]
fn item_draw_moments_match_inverse_precision() {
    let mut r = rng(4);
    let ratings = random_ratings(8, 6, 0.4, &mut r);
    let u = gaussian(8, 2, 0.7, &mut r);
    let mid = array![0.3, -0.2];
    let lambda_v = 1.5;
    // Independent precision oracle: λ_v I + Σ_i C_ij u_i u_iᵀ.
    let j = 2;
    let mut prec = Array2::<f64>::eye(2) * lambda_v;
    for i in 0..8 {
        let c = ratings.confidence(i, j);
        let ui = u.row(i);
        for p in 0..2 {
            for q in 0..2 {
                prec[[p, q]] += c * ui[p] * ui[q];
            }
        }
    }
    let det = prec[[0, 0]] * prec[[1, 1]] - prec[[0, 1]] * prec[[1, 0]];
    let cov = array![[prec[[1, 1]], -prec[[0, 1]]], [-prec[[1, 0]], prec[[0, 0]]]] / det;
    let mean = cond_v_mean(j, u.view(), &ratings, lambda_v, mid.view()).unwrap();
    let mut g = seeded(5);
    let n = 10_000;
    let mut acc = Array2::<f64>::zeros((2, 2));
    let mut avg = Array1::<f64>::zeros(2);
    for _ in 0..n {
        let d = cond_v_sample(j, u.view(), &ratings, lambda_v, mid.view(), &mut g).unwrap() - &mean;
        avg += &d;
        for p in 0..2 {
            for q in 0..2 {
                acc[[p, q]] += d[p] * d[q];
            }
        }
    }
    acc /= n as f64;
    avg /= n as f64;
    for p in 0..2 {
        assert!((acc[[p, p]] / cov[[p, p]] - 1.0).abs() < 0.05);
        assert!(avg[p].abs() < 4.0 * (cov[[p, p]] / n as f64).sqrt());
    }
    assert!((acc[[0, 1]] - cov[[0, 1]]).abs() < 0.05 * (cov[[0, 0]] * cov[[1, 1]]).sqrt());
}

/// One item, 1-unit two-layer net: the middle layer is layer 1.
fn unit_problem(lambda_s: f64) -> (CdlData<f64>, Hyperparams<f64>, GibbsState<f64>) {
    let ratings = bdl::corpus::ImplicitRatings::new(1, vec![vec![0]], 1.0, 0.01).unwrap();
    let data = CdlData {
        x0: array![[0.8]],
        xc: array![[0.6]],
        ratings,
    };
    let params = NetParams::new(vec![array![[1.5]], array![[0.7]]], vec![array![-0.2], array![0.1]]).unwrap();
    let hyper = Hyperparams {
        lambda_s,
        lambda_v: 2.0,
        lambda_n: 5.0,
        lambda_w: 1.0,
        ..Hyperparams::default()
    };
    let state = GibbsState {
        params,
        acts: vec![array![[0.5]], array![[0.4]]],
        u: array![[0.3]],
        v: array![[0.9]],
        step: 0,
        seed: 0,
    };
    (data, hyper, state)
}

/// Total variation between a histogram of samples and a density on the same grid.
fn tv_against_grid(samples: &[f64], lo: f64, hi: f64, bins: usize, log_density: impl Fn(f64) -> f64) -> f64 {
    let width = (hi - lo) / bins as f64;
    // Quadrature with 20 midpoints per bin.
    let sub = 20;
    let mut mass = vec![0.0; bins];
    for (b, m) in mass.iter_mut().enumerate() {
        for k in 0..sub {
            let x = lo + width * (b as f64 + (k as f64 + 0.5) / sub as f64);
            *m += log_density(x).exp();
        }
    }
    let z: f64 = mass.iter().sum();
    let mut hist = vec![0.0; bins];
    let mut outside = 0.0;
    for &x in samples {
        let b = ((x - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            hist[b as usize] += 1.0;
        } else {
            outside += 1.0;
        }
    }
    let n = samples.len() as f64;
    0.5 * (mass.iter().zip(&hist).map(|(m, h)| (m / z - h / n).abs()).sum::<f64>() + outside / n)
}

#[test]
fn activation_chain_matches_grid_quadrature() {
    let (data, hyper, mut state) = unit_problem(10.0);
    // Independent closed form of the layer-1 conditional on this net.
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let below = sig(0.8 * 1.5 - 0.2);
    let target = |x: f64| {
        -5.0 * (below - x).powi(2) - 5.0 * (0.7 * x + 0.1 - 0.4).powi(2) - 1.0 * (0.9 - x).powi(2)
    };
    let check = activation_log_density(0, 1, array![0.37].view(), &state, &data, &hyper);
    assert!((check - target(0.37)).abs() < 1e-12);
    let mut g = seeded(6);
    let n = 100_000;
    let mut xs = Vec::with_capacity(n);
    let mut accepted = 0;
    for _ in 0..n {
        if mh_sample_activation(0, 1, &mut state, &data, &hyper, 0.3, &mut g) {
            accepted += 1;
        }
        xs.push(state.acts[0][[0, 0]]);
    }
    assert!(accepted > n / 10);
    let tv = tv_against_grid(&xs, -0.5, 2.0, 50, target);
    assert!(tv <= 0.05, "TV {}", tv);
}

#[test]
fn zero_step_proposals_are_accepted() {
    let (data, hyper, mut state) = unit_problem(10.0);
    let mut g = seeded(7);
    let before = state.clone();
    assert!(mh_sample_activation(0, 2, &mut state, &data, &hyper, 0.0, &mut g));
    assert!(mh_sample_weights(1, 0, &mut state, &data, &hyper, 0.0, &mut g));
    assert_eq!(before, state);
}

#[test]
fn activations_concentrate_as_lambda_s_grows() {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mean_of_layer_two = |x1: f64| 0.7 * x1 + 0.1;
    let mut dists = Vec::new();
    for lambda_s in [10.0, 100.0, 1000.0] {
        let (data, hyper, mut state) = unit_problem(lambda_s);
        let mut g = seeded(8);
        let step = 1.0 / lambda_s.sqrt();
        let mut total = 0.0;
        let n = 20_000;
        for _ in 0..n {
            mh_sample_activation(0, 1, &mut state, &data, &hyper, step, &mut g);
            mh_sample_activation(0, 2, &mut state, &data, &hyper, step, &mut g);
            let x1 = state.acts[0][[0, 0]];
            let x2 = state.acts[1][[0, 0]];
            total += (x1 - sig(0.8 * 1.5 - 0.2)).abs() + (x2 - mean_of_layer_two(x1)).abs();
        }
        dists.push(total / n as f64);
    }
    assert!(dists[0] > dists[1] && dists[1] > dists[2], "{:?}", dists);
}

#[test]
fn weight_gradient_matches_finite_differences() {
    let mut r = rng(9);
    let params = NetParams::init_autoencoder(4, &[3], 0.5, &mut r).unwrap();
    let x0 = uniform(6, 4, &mut r);
    let data = CdlData {
        x0: x0.clone(),
        xc: x0.clone(),
        ratings: random_ratings(2, 6, 0.5, &mut r),
    };
    let acts = vec![uniform(6, 3, &mut r), uniform(6, 4, &mut r)];
    let state = GibbsState {
        params,
        acts,
        u: gaussian(2, 3, 0.1, &mut r),
        v: gaussian(6, 3, 0.1, &mut r),
        step: 0,
        seed: 0,
    };
    let hyper = Hyperparams::<f64>::default();
    for (l, n) in [(1, 0), (1, 2), (2, 1), (2, 3)] {
        let w = weight_column(&state.params, l, n);
        let (_, g) = weight_log_density(l, n, w.view(), &state, &data, &hyper);
        for k in 0..w.len() {
            let h = 1e-6;
            let mut up = w.clone();
            up[k] += h;
            let mut down = w.clone();
            down[k] -= h;
            let fd = (weight_log_density(l, n, up.view(), &state, &data, &hyper).0
                - weight_log_density(l, n, down.view(), &state, &data, &hyper).0)
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{} vs {}", fd, g[k]);
        }
    }
}

#[test]
fn weight_chain_without_data_matches_prior() {
    let (data, mut hyper, mut state) = unit_problem(10.0);
    hyper.lambda_s = 0.0;
    hyper.lambda_w = 2.0;
    let mut g = seeded(10);
    let n = 10_000;
    let thin = 5;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        for _ in 0..thin {
            mh_sample_weights(1, 0, &mut state, &data, &hyper, 0.4, &mut g);
        }
        let w = state.params.weights[0][[0, 0]];
        s1 += w;
        s2 += w * w;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!((var * hyper.lambda_w - 1.0).abs() < 0.05, "variance {}", var);
    assert!(mean.abs() < 0.05);
}

#[test]
fn weight_chain_matches_grid_quadrature() {
    // 1×1 layer with five items: the column is (weight, bias).
    let (mut data, hyper, mut state) = unit_problem(10.0);
    data.x0 = array![[0.1], [0.4], [0.9], [0.6], [0.2]];
    data.xc = array![[0.2], [0.5], [0.7], [0.1], [0.3]];
    data.ratings = bdl::corpus::ImplicitRatings::new(5, vec![vec![0]], 1.0, 0.01).unwrap();
    let x1 = array![0.45, 0.6, 0.8, 0.7, 0.5];
    state.acts = vec![x1.clone().insert_axis(ndarray::Axis(1)), Array2::zeros((5, 1))];
    state.v = Array2::zeros((5, 1));
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let log_joint = |w: f64, b: f64| {
        let mut lp = -0.5 * (w * w + b * b);
        for j in 0..5 {
            lp -= 5.0 * (sig(data.x0[[j, 0]] * w + b) - x1[j]).powi(2);
        }
        lp
    };
    let mut g = seeded(11);
    let n = 100_000;
    let mut ws = Vec::with_capacity(n);
    for _ in 0..n {
        mh_sample_weights(1, 0, &mut state, &data, &hyper, 0.3, &mut g);
        ws.push(state.params.weights[0][[0, 0]]);
    }
    // Marginal over the bias by quadrature.
    let marginal = |w: f64| {
        let mut s = 0.0;
        for k in 0..400 {
            let b = -5.0 + 10.0 * (k as f64 + 0.5) / 400.0;
            s += log_joint(w, b).exp();
        }
        s.ln()
    };
    let tv = tv_against_grid(&ws, -3.5, 4.5, 40, marginal);
    assert!(tv <= 0.05, "TV {}", tv);
}

fn tiny_gibbs_problem() -> (CdlData<f64>, Hyperparams<f64>, GibbsState<f64>) {
    let mut r = rng(12);
    let x0 = uniform(12, 6, &mut r);
    let data = CdlData {
        x0: x0.clone(),
        xc: x0,
        ratings: random_ratings(8, 12, 0.3, &mut r),
    };
    let params = NetParams::init_autoencoder(6, &[3], 0.3, &mut r).unwrap();
    let acts = bdl::net::forward(data.x0.view(), &params, 2).unwrap();
    let v = acts[0].clone();
    let state = GibbsState {
        params,
        acts,
        u: gaussian(8, 3, 0.1, &mut r),
        v,
        step: 0,
        seed: 42,
    };
    (data, Hyperparams::default(), state)
}

#[test]
fn gibbs_runs_are_reproducible() {
    let (data, hyper, state) = tiny_gibbs_problem();
    let opts = GibbsOptions { sweeps: 30, burn_in: 10, thin: 4, ..GibbsOptions::default() };
    let a = run_gibbs(&data, &hyper, state.clone(), &opts).unwrap();
    let b = run_gibbs(&data, &hyper, state, &opts).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.samples.len(), 5);
}

#[test]
fn log_density_trace_settles() {
    let (data, hyper, state) = tiny_gibbs_problem();
    let start = joint_log_density(&state, &data, &hyper);
    assert!(start.is_finite());
    let opts = GibbsOptions { sweeps: 400, burn_in: 100, thin: 10, ..GibbsOptions::default() };
    let run = run_gibbs(&data, &hyper, state, &opts).unwrap();
    let lp: Vec<f64> = run.trace.iter().map(|t| t.log_density).collect();
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
    };
    let q = lp.len() / 4;
    assert!(var(&lp[lp.len() - q..]) < var(&lp[..q]));
    let last = run.trace.last().unwrap();
    assert!(last.activation_acceptance > 0.1 && last.weight_acceptance > 0.05, "{:?}", last);
}

#[test]
fn rejects_degenerate_schedules() {
    let (data, hyper, state) = tiny_gibbs_problem();
    let opts = GibbsOptions { sweeps: 10, burn_in: 10, ..GibbsOptions::default() };
    assert!(run_gibbs(&data, &hyper, state, &opts).is_err());
}
