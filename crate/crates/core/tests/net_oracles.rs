mod common;

use bdl::net::{forward, mlp_gradients, sgd_step, Grads, Momentum, NetParams};
use common::*;
use ndarray::{array, Array2};
use proptest::prelude::*;

fn sq_err(p: &NetParams<f64>, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let out = forward(x.view(), p, p.n_layers()).unwrap().pop().unwrap();
    (&out - y).mapv(|d| d * d).sum()
}

#[test]
fn single_linear_unit_by_hand() {
    // two layers so the parameter set is valid; the hidden layer is silenced
    // by zeroing the output weight and only the affine bias path remains
    let p = NetParams::new(
        vec![array![[1.0]], array![[0.0]]],
        vec![array![0.0], array![1.0]],
    )
    .unwrap();
    // X_L = b_2 = 1, Y = 0: E = 1, dE/db_2 = 2
    let g = mlp_gradients(&p, array![[1.0]].view(), array![[0.0]].view()).unwrap();
    assert!((g.biases[1][0] - 2.0f64).abs() < 1e-15);
    // dE/dW_2 = h · 2 with h = σ(1)
    let h = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((g.weights[1][[0, 0]] - 2.0 * h).abs() < 1e-15);
}

#[test]
fn two_layer_six_unit_matches_finite_differences() {
    let mut r = rng(11);
    let p = NetParams::<f64>::init(&[6, 6, 6], 0.5, &mut r).unwrap();
    let x = uniform(5, 6, &mut r);
    let y = uniform(5, 6, &mut r);
    let g = mlp_gradients(&p, x.view(), y.view()).unwrap();
    let fd = fd_net_gradient(&p, 1e-5, |q| sq_err(q, &x, &y));
    let err = max_rel_err(&g, &fd, 1e-6);
    assert!(err <= 1e-4, "relative error {}", err);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_small_nets_match_finite_differences(
        seed in 0u64..10_000,
        hidden in 1usize..=8,
        input in 1usize..=8,
        rows in 1usize..=4,
    ) {
        let mut r = rng(seed);
        let p = NetParams::<f64>::init(&[input, hidden, input], 0.7, &mut r).unwrap();
        let x = uniform(rows, input, &mut r);
        let y = uniform(rows, input, &mut r);
        let g = mlp_gradients(&p, x.view(), y.view()).unwrap();
        let fd = fd_net_gradient(&p, 1e-5, |q| sq_err(q, &x, &y));
        prop_assert!(max_rel_err(&g, &fd, 1e-6) <= 1e-4);
    }

    #[test]
    fn activations_lie_strictly_inside_unit_interval(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let p = NetParams::<f64>::init_autoencoder(5, &[4, 3], 2.0, &mut r).unwrap();
        let x = gaussian(3, 5, 3.0, &mut r);
        let acts = forward(x.view(), &p, 4).unwrap();
        for a in &acts[..3] {
            prop_assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn momentum_sgd_converges_on_quadratic() {
    // f(w) = (w − 3)² on a single bias parameter, η = 0.1, μ = 0.9
    let mut p = NetParams::new(
        vec![array![[0.0]], array![[0.0]]],
        vec![array![0.0], array![0.0]],
    )
    .unwrap();
    let mut m = Momentum::new(&p);
    // scalar heavy-ball recurrence as the oracle
    let (mut w, mut buf) = (0.0f64, 0.0f64);
    for step in 1..=200 {
        let mut g = Grads::zeros_like(&p);
        g.biases[1][0] = 2.0 * (p.biases[1][0] - 3.0);
        sgd_step(&mut p, &g, &mut m, 0.1, 0.9).unwrap();
        buf = 0.9 * buf + 2.0 * (w - 3.0);
        w -= 0.1 * buf;
        assert!((p.biases[1][0] - w).abs() < 1e-12);
        if step == 100 {
            // the iteration contracts by sqrt(0.9) per step and is still
            // 8.6e-3 away from the optimum here
            assert!((w - 3.0085542333635478).abs() < 1e-12);
        }
    }
    assert!((p.biases[1][0] - 3.0).abs() < 1e-3);
}
