mod common;

use bdl::corpus::BagOfWords;
use bdl::dpfa::*;
use bdl::mcmc::log_scale_step;
use bdl::rng::seeded;
use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

fn ln_fact(x: u64) -> f64 {
    (1..=x).map(|k| (k as f64).ln()).sum()
}

/// Best-match mean cosine over all topic permutations (exhaustive, exact
/// for small K).
fn best_match_cosine(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let k = a.nrows();
    let cos = |i: usize, j: usize| {
        let (x, y) = (a.row(i), b.row(j));
        x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())
    };
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    perms(k)
        .iter()
        .map(|p| (0..k).map(|i| cos(i, p[i])).sum::<f64>() / k as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn manual_state(h: Array2<u8>, theta: Array2<f64>, phi: Array2<f64>) -> PfaState {
    let (n, k) = h.dim();
    PfaState {
        phi,
        theta,
        h: vec![h],
        r: Array1::ones(k),
        gamma0: 1.0,
        p: Array1::from_elem(n, 0.5),
        sbn: SbnParams::zeros(&[k]).unwrap(),
    }
}

#[test]
fn equal_split_allocation_matches_binomial_mean() {
    let mut r = seeded(11);
    let draws = 100_000;
    let mut first = 0u64;
    for _ in 0..draws {
        let a = sample_counts(5, array![0.5, 0.5].view(), array![1.0, 1.0].view(), array![1u8, 1].view(), &mut r).unwrap();
        assert_eq!(a.iter().sum::<u32>(), 5);
        first += a[0] as u64;
    }
    let share = first as f64 / (5 * draws) as f64;
    assert!((share - 0.5).abs() < 0.01, "share {}", share);
}

#[test]
fn dirichlet_concentrates_on_heavy_word() {
    let mut r = seeded(12);
    let mut wt = Array2::<u64>::zeros((5, 1));
    wt[[3, 0]] = 100_000;
    let mut mean = 0.0;
    for _ in 0..200 {
        let phi = sample_phi(wt.view(), 1.0, &mut r);
        assert!((phi.row(0).sum() - 1.0).abs() <= 1e-12);
        mean += phi[[0, 3]] / 200.0;
    }
    // Dirichlet mean (1 + 1e5) / (5 + 1e5)
    assert!(mean > 0.99);
    assert!((mean - 100_001.0 / 100_005.0).abs() < 1e-4);
}

#[test]
fn symmetric_dirichlet_component_means() {
    let mut r = seeded(13);
    let wt = Array2::<u64>::zeros((5, 1));
    let draws = 100_000;
    let mut mean = Array1::<f64>::zeros(5);
    for _ in 0..draws {
        let phi = sample_phi(wt.view(), 1.0, &mut r);
        assert!((phi.row(0).sum() - 1.0).abs() <= 1e-12);
        mean += &phi.row(0);
    }
    mean /= draws as f64;
    for &m in &mean {
        assert!((m - 0.2).abs() <= 0.002, "component mean {}", m);
    }
}

#[test]
fn tiny_dirichlet_shapes_stay_on_simplex() {
    let mut r = seeded(14);
    let alpha = Array1::from_elem(30, 1e-3);
    for _ in 0..1000 {
        let d = dirichlet(alpha.view(), &mut r);
        assert!((d.sum() - 1.0).abs() <= 1e-12);
        assert!(d.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}

#[test]
fn theta_prior_draw_mean() {
    let mut r = seeded(15);
    let (rk, p) = (2.5, 0.3);
    let draws = 100_000;
    let mean: f64 = (0..draws).map(|_| sample_theta(0, rk, 1, p, &mut r)).sum::<f64>() / draws as f64;
    assert!((mean / (rk * p) - 1.0).abs() < 0.02, "mean {}", mean);
    // shape grows linearly in x
    let m50: f64 = (0..20_000).map(|_| sample_theta(50, rk, 1, p, &mut r)).sum::<f64>() / 20_000.0;
    let m100: f64 = (0..20_000).map(|_| sample_theta(100, rk, 1, p, &mut r)).sum::<f64>() / 20_000.0;
    assert!(((m100 - m50) / (50.0 * p) - 1.0).abs() < 0.05);
}

#[test]
fn theta_conditional_matches_poisson_gamma_conjugacy() {
    // θ ~ Gamma(r, p/(1-p)), x ~ Pois(θ): E[θ | x] from simulation must
    // equal the mean of the sampler's conditional, (r + x) p.
    let mut r = seeded(16);
    let (rk, p) = (2.0, 0.4);
    let prior = Gamma::new(rk, p / (1.0 - p)).unwrap();
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for _ in 0..400_000 {
        let theta: f64 = prior.sample(&mut r);
        let x = Poisson::new(theta.max(1e-300)).unwrap().sample(&mut r) as usize;
        if x < 4 {
            sums[x] += theta;
            counts[x] += 1;
        }
    }
    for x in 0..4 {
        let empirical = sums[x] / counts[x] as f64;
        let draws: f64 = (0..50_000).map(|_| sample_theta(x as u64, rk, 1, p, &mut r)).sum::<f64>() / 50_000.0;
        assert!((empirical / ((rk + x as f64) * p) - 1.0).abs() < 0.02, "x={} empirical {}", x, empirical);
        assert!((draws / empirical - 1.0).abs() < 0.03);
    }
}

#[test]
fn h1_odds_match_plug_in_value() {
    let mut r = seeded(17);
    for _ in 0..1000 {
        assert_eq!(sample_h1(3, 0.01, 1.0, 0.5, &mut r), 1);
        assert_eq!(sample_h1(0, 0.0, 1.0, 0.5, &mut r), 0);
    }
    let draws = 200_000;
    let on: usize = (0..draws).map(|_| sample_h1(0, 0.5, 1.0, 0.5, &mut r) as usize).sum();
    assert!((on as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.01);
    // an all-on prior makes the update a no-op
    assert_eq!(h1_probability(1.0, 3.0, 0.9), 1.0);
}

fn two_layer_sbn(w: Array2<f64>, b1: Array1<f64>, b2: Array1<f64>) -> SbnParams {
    SbnParams::new(vec![w], vec![b1, b2]).unwrap()
}

#[test]
fn flat_likelihood_gives_prior_bernoulli() {
    let sbn = two_layer_sbn(Array2::zeros((1, 3)), array![0.3, -0.2, 1.0], array![0.8]);
    let mut r = seeded(18);
    let below = array![1u8, 0, 1];
    let draws = 100_000;
    let mut on = 0;
    for _ in 0..draws {
        let mut layer = array![0u8];
        sample_h_deep_row(2, below.view(), &mut layer, None, &sbn, &mut r);
        on += layer[0] as usize;
    }
    let sig = 1.0 / (1.0 + (-0.8f64).exp());
    assert!((on as f64 / draws as f64 - sig).abs() < 0.01);
}

#[test]
fn positive_weight_to_active_child_raises_posterior() {
    let sbn = two_layer_sbn(array![[3.0]], array![-1.0], array![0.0]);
    let mut r = seeded(19);
    let mut on = 0;
    for _ in 0..50_000 {
        let mut layer = array![0u8];
        sample_h_deep_row(2, array![1u8].view(), &mut layer, None, &sbn, &mut r);
        on += layer[0] as usize;
    }
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    // two-state enumeration: odds = prior odds × σ(2)/σ(-1)
    let odds = sig(2.0) / sig(-1.0);
    let exact = odds / (1.0 + odds);
    let freq = on as f64 / 50_000.0;
    assert!(freq > 0.5);
    assert!((freq - exact).abs() < 0.01, "freq {} exact {}", freq, exact);
}

#[test]
fn single_site_gibbs_matches_full_enumeration() {
    let w = array![[2.0, -1.5, 0.5], [-1.0, 1.0, 2.5]];
    let b1 = array![-0.5, 0.2, -1.0];
    let b2 = array![0.4, -0.3];
    let sbn = two_layer_sbn(w.clone(), b1.clone(), b2.clone());
    let below = array![1u8, 0, 1];
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let mut exact = [0.0; 4];
    for s in 0..4 {
        let h = [(s & 1) as f64, ((s >> 1) & 1) as f64];
        let mut lp = 0.0;
        for k in 0..2 {
            let q = sig(b2[k]);
            lp += if h[k] == 1.0 { q.ln() } else { (1.0 - q).ln() };
        }
        for c in 0..3 {
            let q = sig(h[0] * w[[0, c]] + h[1] * w[[1, c]] + b1[c]);
            lp += if below[c] == 1 { q.ln() } else { (1.0 - q).ln() };
        }
        exact[s] = lp.exp();
    }
    let z: f64 = exact.iter().sum();
    let mut r = seeded(20);
    let mut layer = array![0u8, 0];
    let mut freq = [0.0; 4];
    let sweeps = 100_000;
    for _ in 0..sweeps {
        sample_h_deep_row(2, below.view(), &mut layer, None, &sbn, &mut r);
        freq[(layer[0] + 2 * layer[1]) as usize] += 1.0 / sweeps as f64;
    }
    let tv: f64 = 0.5 * (0..4).map(|s| (freq[s] - exact[s] / z).abs()).sum::<f64>();
    assert!(tv <= 0.05, "tv {}", tv);
    assert!(tv <= 0.01, "tv {} (expected Monte Carlo noise only)", tv);
}

#[test]
fn r_conditional_matches_integrated_negative_binomial() {
    // Oracle: integrate θ out numerically, ∫ Pois(x; θ) Gamma(θ; r, p/(1-p)) dθ,
    // and compare log-density differences between two values of r.
    let (p, gamma0, c0) = (0.35, 1.7, 1.2);
    let xs = [0u64, 3, 7];
    let marginal = |r: f64, x: u64| -> f64 {
        let scale = p / (1.0 - p);
        let n = 200_000;
        let upper = 80.0;
        let h = upper / n as f64;
        let lg = statrs_ln_gamma(r);
        (1..n)
            .map(|i| {
                let t = i as f64 * h;
                let lp = x as f64 * t.ln() - t - ln_fact(x) + (r - 1.0) * t.ln() - t / scale - lg - r * scale.ln();
                lp.exp() * h
            })
            .sum::<f64>()
    };
    let prior = |r: f64| (gamma0 - 1.0) * r.ln() - c0 * r;
    let doc_topic = Array2::from_shape_vec((3, 1), xs.to_vec()).unwrap();
    let h1 = Array2::from_elem((3, 1), 1u8);
    let pv = Array1::from_elem(3, p);
    let oracle = |r: f64| prior(r) + xs.iter().map(|&x| marginal(r, x).ln()).sum::<f64>();
    let (ra, rb) = (1.3, 2.9);
    let impl_diff = r_log_conditional(ra, 0, doc_topic.view(), h1.view(), pv.view(), gamma0, c0)
        - r_log_conditional(rb, 0, doc_topic.view(), h1.view(), pv.view(), gamma0, c0);
    let oracle_diff = oracle(ra) - oracle(rb);
    assert!((impl_diff - oracle_diff).abs() < 1e-4, "{} vs {}", impl_diff, oracle_diff);
}

fn statrs_ln_gamma(x: f64) -> f64 {
    // Lanczos (g = 7, n = 9) as an independent implementation.
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - statrs_ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, &c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

#[test]
fn r_chain_matches_grid_quadrature() {
    let xs = [0u64, 2, 5, 1, 9, 0];
    let doc_topic = Array2::from_shape_vec((6, 1), xs.to_vec()).unwrap();
    let h1 = Array2::from_elem((6, 1), 1u8);
    let pv = array![0.3, 0.5, 0.6, 0.4, 0.7, 0.2];
    let (gamma0, c0) = (1.5, 1.0);
    let target = |r: f64| r_log_conditional(r, 0, doc_topic.view(), h1.view(), pv.view(), gamma0, c0);
    let bins = 60;
    let upper = 12.0;
    let width = upper / bins as f64;
    let mut exact = vec![0.0; bins];
    let sub = 50;
    for (b, e) in exact.iter_mut().enumerate() {
        for s in 0..sub {
            let r = (b as f64 + (s as f64 + 0.5) / sub as f64) * width;
            *e += target(r).exp();
        }
    }
    let z: f64 = exact.iter().sum();
    let mut rng = seeded(21);
    let mut r = 1.0;
    let mut hist = vec![0.0; bins];
    let steps = 400_000;
    for t in 0..steps + 5000 {
        r = log_scale_step(r, 0.6, target, &mut rng).0;
        if t >= 5000 && r < upper {
            hist[(r / width) as usize] += 1.0 / steps as f64;
        }
    }
    let tv: f64 = 0.5 * (0..bins).map(|b| (hist[b] - exact[b] / z).abs()).sum::<f64>();
    assert!(tv <= 0.05, "tv {}", tv);
}

#[test]
fn rates_without_data_follow_their_priors() {
    let hyper = PfaHyper {
        e0: 2.0,
        f0: 1.0,
        c0: 1.0,
        ..PfaHyper::default()
    };
    let mut state = PfaState {
        phi: Array2::from_elem((1, 2), 0.5),
        theta: Array2::zeros((0, 1)),
        h: vec![Array2::zeros((0, 1))],
        r: array![1.0],
        gamma0: 1.0,
        p: Array1::zeros(0),
        sbn: SbnParams::zeros(&[1]).unwrap(),
    };
    let doc_topic = Array2::<u64>::zeros((0, 1));
    let mut rng = seeded(22);
    let (mut sr, mut sg, mut accepted, n) = (0.0, 0.0, 0usize, 400_000);
    for t in 0..n + 2000 {
        let acc = sample_r_gamma(doc_topic.view(), &mut state, &hyper, 1.0, 1.0, &mut rng);
        if t >= 2000 {
            sr += state.r[0];
            sg += state.gamma0;
            accepted += acc.r_accepted;
        }
    }
    let (mr, mg) = (sr / n as f64, sg / n as f64);
    // γ₀ ~ Gamma(2, 1): mean 2; r | γ₀ ~ Gamma(γ₀, 1): marginal mean 2
    assert!((mg / 2.0 - 1.0).abs() < 0.05, "gamma0 mean {}", mg);
    assert!((mr / 2.0 - 1.0).abs() < 0.05, "r mean {}", mr);
    assert!(accepted > 0);
}

#[test]
fn self_proposal_always_accepted() {
    let mut rng = seeded(23);
    for _ in 0..100 {
        let (next, ok) = log_scale_step(2.0, 0.0, |r| -r * r, &mut rng);
        assert!(ok);
        assert_eq!(next, 2.0);
    }
}

#[test]
fn p_update_is_conjugate_beta() {
    let hyper = PfaHyper::default();
    let mut state = PfaState {
        phi: Array2::from_elem((2, 2), 0.5),
        theta: Array2::zeros((1, 2)),
        h: vec![array![[1u8, 0]]],
        r: array![2.0, 5.0],
        gamma0: 1.0,
        p: array![0.5],
        sbn: SbnParams::zeros(&[2]).unwrap(),
    };
    let doc_topic = array![[4u64, 0]];
    let mut rng = seeded(24);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let r = state.r.clone();
        sample_r_gamma(doc_topic.view(), &mut state, &hyper, 0.0, 0.0, &mut rng);
        assert_eq!(state.r, r, "zero-scale proposals leave r in place");
        sum += state.p[0];
    }
    // Beta(1 + 4, 1 + 2·1 + 5·0)
    let exact = 5.0 / 8.0;
    assert!((sum / n as f64 - exact).abs() < 0.005);
}

#[test]
fn sgnht_free_dynamics_and_fixed_point() {
    let mut rng = seeded(25);
    let mut s = SgnhtState {
        theta: array![0.0, 1.0],
        v: array![0.5, -1.0],
        xi: 0.0,
    };
    for step in 1..=10 {
        s.xi = 0.0;
        sgnht_step(&mut s, array![0.0, 0.0].view(), 0.0, 0.1, 1e9, &mut rng).unwrap();
        assert_eq!(s.v, array![0.5, -1.0]);
        assert!((s.theta[0] - 0.05 * step as f64).abs() < 1e-12);
    }
    let mut s = SgnhtState {
        theta: array![0.0],
        v: array![1.0],
        xi: 0.3,
    };
    sgnht_step(&mut s, array![0.3].view(), 0.0, 0.1, 1.0, &mut rng).unwrap();
    // f = ξ v keeps v = 1, so vᵀv/M = 1 and ξ is unchanged
    assert_eq!(s.xi, 0.3);
    assert!(sgnht_step(&mut s, array![f64::NAN].view(), 1.0, 0.1, 1.0, &mut rng).is_err());
    assert!(sgnht_step(&mut s, array![0.0].view(), 1.0, 0.0, 1.0, &mut rng).is_err());
}

#[test]
fn sgnht_samples_standard_gaussian() {
    let mut rng = seeded(26);
    let mut s = SgnhtState::new(array![0.0], 1.0);
    let (h, steps) = (0.01, 1_000_000);
    let (mut m1, mut m2, mut kin) = (0.0, 0.0, 0.0);
    for _ in 0..steps {
        let f = -&s.theta;
        sgnht_step(&mut s, f.view(), 1.0, h, 1.0, &mut rng).unwrap();
        m1 += s.theta[0];
        m2 += s.theta[0] * s.theta[0];
        kin += s.v.dot(&s.v);
    }
    let n = steps as f64;
    let var = m2 / n - (m1 / n).powi(2);
    assert!((var - 1.0).abs() <= 0.1, "variance {}", var);
    assert!((kin / n - 1.0).abs() <= 0.1, "thermostat {}", kin / n);
}

#[test]
fn inactive_topics_generate_nothing() {
    let mut rng = seeded(27);
    let state = manual_state(Array2::zeros((20, 2)), Array2::from_elem((20, 2), 5.0), Array2::from_elem((2, 4), 0.25));
    let x = sample_poisson_counts(&state, &mut rng).unwrap();
    assert_eq!(x.nnz(), 0);
}

#[test]
fn single_topic_row_sums_are_poisson() {
    let mut rng = seeded(28);
    let (n, lambda) = (5000, 7.0);
    let state = manual_state(Array2::ones((n, 1)), Array2::from_elem((n, 1), lambda), array![[0.2, 0.3, 0.5]]);
    let x = sample_poisson_counts(&state, &mut rng).unwrap();
    let mean = x.rows().iter().map(|r| r.iter().map(|&(_, c)| c as f64).sum::<f64>()).sum::<f64>() / n as f64;
    assert!((mean - lambda).abs() <= 3.0 * lambda.sqrt() / (n as f64).sqrt());
}

#[test]
fn generator_respects_topic_usage() {
    let hyper = PfaHyper::default();
    let sbn = SbnParams::new(vec![array![[4.0, -4.0, 0.0]]], vec![array![-2.0, 1.0, 0.0], array![0.0]]).unwrap();
    let mut rng = seeded(29);
    let (x, truth) = generate_synthetic(&hyper, &sbn, 100, 12, &mut rng).unwrap();
    truth.validate().unwrap();
    assert_eq!(x.n_rows(), 100);
    for ((n, k), &h) in truth.h[0].indexed_iter() {
        if h == 0 {
            assert_eq!(truth.theta[[n, k]], 0.0);
        }
    }
    assert!(generate_synthetic(&hyper, &sbn, 0, 12, &mut rng).is_err());
}

#[test]
fn all_one_usage_is_left_alone() {
    // With σ(b) ≈ 1 and every topic used, H never changes.
    let mut rng = seeded(30);
    let phi = array![[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]];
    let mut state = manual_state(Array2::ones((30, 2)), Array2::from_elem((30, 2), 20.0), phi);
    state.sbn.biases[0].fill(40.0);
    let x = sample_poisson_counts(&state, &mut rng).unwrap();
    let opts = DpfaOptions {
        sweeps: 20,
        burn_in: 10,
        thin: 1,
        ..DpfaOptions::default()
    };
    let run = run_dpfa_observed(&x, state, &PfaHyper::default(), &opts, None, &mut |_, s| {
        assert!(s.h[0].iter().all(|&v| v == 1));
    })
    .unwrap();
    assert!(run.trace.iter().all(|t| t.active_topic_fraction == 1.0));
}

fn recovery_problem(seed: u64) -> (BagOfWords, PfaState, PfaHyper) {
    let hyper = PfaHyper {
        a_phi: 0.3,
        e0: 20.0,
        f0: 2.0,
        a0: 18.0,
        b0: 2.0,
        ..PfaHyper::default()
    };
    let sbn = SbnParams::new(vec![], vec![array![0.5, 0.5, 0.5]]).unwrap();
    let mut rng = seeded(seed);
    let (x, truth) = generate_synthetic(&hyper, &sbn, 200, 30, &mut rng).unwrap();
    (x, truth, hyper)
}

#[test]
fn gibbs_recovers_planted_topics() {
    let (x, truth, hyper) = recovery_problem(31);
    let init = init_state(&x, &[3], 5).unwrap();
    let opts = DpfaOptions {
        sweeps: 2000,
        burn_in: 1000,
        thin: 50,
        seed: 5,
        ..DpfaOptions::default()
    };
    let run = run_dpfa(&x, init, &hyper, &opts, None).unwrap();
    let mut mean_phi = Array2::<f64>::zeros((3, 30));
    for s in &run.samples {
        mean_phi += &s.phi;
    }
    mean_phi /= run.samples.len() as f64;
    let score = best_match_cosine(&truth.phi, &mean_phi);
    assert!(score >= 0.9, "best-match cosine {}", score);
    let last = best_match_cosine(&truth.phi, &run.state.phi);
    assert!(last >= 0.9, "final-state cosine {}", last);
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let (x, _, hyper) = recovery_problem(32);
    let run = |seed: u64, backend: DpfaBackend| {
        let opts = DpfaOptions {
            sweeps: 30,
            burn_in: 10,
            thin: 5,
            seed,
            backend,
            ..DpfaOptions::default()
        };
        run_dpfa(&x, init_state(&x, &[3, 2], seed).unwrap(), &hyper, &opts, Some(&x)).unwrap()
    };
    for backend in [DpfaBackend::Gibbs, DpfaBackend::SgnhtHybrid] {
        let (a, b, c) = (run(1, backend), run(1, backend), run(2, backend));
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.state, b.state);
        assert_ne!(a.state.phi, c.state.phi);
        assert!(a.trace.iter().all(|t| t.train_loglik.is_finite()));
    }
}

#[test]
fn hybrid_backend_gradient_matches_finite_differences() {
    let (x, _, hyper) = recovery_problem(33);
    let mut state = init_state(&x, &[3, 2], 1).unwrap();
    let mut rng = seeded(34);
    for v in state.sbn.weights[0].iter_mut() {
        *v = rng.random::<f64>() - 0.5;
    }
    for n in 0..state.h[1].nrows() {
        state.h[1][[n, 0]] = (n % 2) as u8;
        state.h[0][[n, 2]] = (n % 3 != 0) as u8;
    }
    state.r = array![0.7, 1.9, 3.1];
    state.gamma0 = 1.4;
    state.p = Array1::from_shape_fn(state.p.len(), |n| 0.2 + 0.6 * (n as f64 / 200.0));
    let alloc = allocate(&x, &state, 3, 0);
    // θ must be positive wherever h is on for the Gamma density to exist.
    let alloc = match alloc {
        Ok(a) => a,
        Err(_) => {
            state.h[0].fill(1);
            allocate(&x, &state, 3, 0).unwrap()
        }
    };
    // log-posterior of the globals in packed coordinates (Jacobians included)
    let log_post = |s: &PfaState| -> f64 {
        let (k, p) = s.phi.dim();
        let mut lp = 0.0;
        for t in 0..k {
            for q in 0..p {
                // Dirichlet density × simplex Jacobian Π φ
                lp += (hyper.a_phi + alloc.word_topic[[q, t]] as f64) * s.phi[[t, q]].ln();
            }
        }
        for t in 0..k {
            let r = s.r[t];
            lp += s.gamma0 * r.ln() - hyper.c0 * r;
            for n in 0..s.theta.nrows() {
                if s.h[0][[n, t]] == 1 {
                    let sc = s.p[n] / (1.0 - s.p[n]);
                    lp += (r - 1.0) * s.theta[[n, t]].ln() - statrs_ln_gamma(r) - r * sc.ln();
                }
            }
        }
        let g = s.gamma0;
        lp += hyper.e0 * g.ln() - hyper.f0 * g;
        for _ in 0..k {
            lp += g * hyper.c0.ln() - statrs_ln_gamma(g);
        }
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        for l in 0..s.sbn.n_layers() {
            for n in 0..s.h[0].nrows() {
                let above = if l + 1 < s.sbn.n_layers() { Some(s.h[l + 1].row(n)) } else { None };
                let z = s.sbn.logits(l + 1, above);
                for (kk, &zz) in z.iter().enumerate() {
                    let q = sig(zz);
                    lp += if s.h[l][[n, kk]] == 1 { q.ln() } else { (1.0 - q).ln() };
                }
            }
        }
        for w in &s.sbn.weights {
            lp -= 0.5 * w.iter().map(|v| v * v).sum::<f64>() / hyper.sbn_prior_var;
        }
        for b in &s.sbn.biases {
            lp -= 0.5 * b.iter().map(|v| v * v).sum::<f64>() / hyper.sbn_prior_var;
        }
        lp
    };
    // θ at strictly positive values where h is on
    for ((n, t), v) in state.theta.indexed_iter_mut() {
        *v = if state.h[0][[n, t]] == 1 { 0.5 + (n % 7) as f64 + t as f64 } else { 0.0 };
    }
    let g = globals_gradient(&state, &alloc, &hyper);
    let x0 = pack_globals(&state);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..x0.len() {
        let mut a = state.clone();
        let mut b = state.clone();
        let mut xa = x0.clone();
        let mut xb = x0.clone();
        xa[i] += eps;
        xb[i] -= eps;
        unpack_globals(xa.view(), &mut a);
        unpack_globals(xb.view(), &mut b);
        let fd = (log_post(&a) - log_post(&b)) / (2.0 * eps);
        worst = worst.max((fd - g[i]).abs() / (1.0 + fd.abs()));
    }
    assert!(worst < 1e-5, "worst relative error {}", worst);
}

#[test]
fn token_split_preserves_totals() {
    let (x, _, _) = recovery_problem(35);
    let (train, test) = split_tokens(&x, 0.2, 9).unwrap();
    for n in 0..x.n_rows() {
        for p in 0..x.n_cols() {
            assert_eq!(train.get(n, p) + test.get(n, p), x.get(n, p));
        }
    }
    assert!(split_tokens(&x, 1.0, 9).is_err());
}

#[test]
fn topic_export_uses_vocabulary() {
    let phi = array![[0.7, 0.2, 0.1]];
    let vocab = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    assert_eq!(export_topics(phi.view(), Some(&vocab), 20), "0\ta\tb\tc\n");
}
