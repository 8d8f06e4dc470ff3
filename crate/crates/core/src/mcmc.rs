//! Metropolis–Hastings building blocks shared by the samplers.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::BdlRng;
use crate::scalar::Scalar;

/// Accepts with probability `min(1, exp(log_ratio))`; non-finite negative
/// ratios are rejected.
pub fn metropolis_accept<T: Scalar>(log_ratio: T, rng: &mut BdlRng) -> bool {
    if log_ratio >= T::zero() {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio.as_f64()
}

pub fn standard_normal_vec<T: Scalar>(n: usize, rng: &mut BdlRng) -> Array1<T> {
    Array1::from_shape_simple_fn(n, || {
        let z: f64 = rng.sample(StandardNormal);
        T::of(z)
    })
}

/// One Metropolis-adjusted Langevin step with proposal
/// `x' = x + ε ∇log p(x) + √(2ε) ξ`. `target` returns the log-density and
/// its gradient. Returns the new point and whether it was accepted; `ε = 0`
/// proposes the current point and is always accepted.
pub fn mala_step<T: Scalar>(
    current: &Array1<T>,
    eps: T,
    target: impl Fn(&Array1<T>) -> (T, Array1<T>),
    rng: &mut BdlRng,
) -> (Array1<T>, bool) {
    if eps <= T::zero() {
        return (current.clone(), true);
    }
    let (lp_cur, g_cur) = target(current);
    let noise = standard_normal_vec::<T>(current.len(), rng) * (T::of(2.0) * eps).sqrt();
    let proposal = current + &(&g_cur * eps) + &noise;
    let (lp_new, g_new) = target(&proposal);
    let log_q = |to: &Array1<T>, from: &Array1<T>, g_from: &Array1<T>| -> T {
        let mean = from + &(g_from * eps);
        let d = to - &mean;
        -d.dot(&d) / (T::of(4.0) * eps)
    };
    let log_ratio = lp_new - lp_cur + log_q(current, &proposal, &g_new) - log_q(&proposal, current, &g_cur);
    if metropolis_accept(log_ratio, rng) {
        (proposal, true)
    } else {
        (current.clone(), false)
    }
}

/// Random-walk Metropolis on `log x` for a positive scalar. `log_target` is
/// the log-density of `x` itself; the `log x` Jacobian is added here.
pub fn log_scale_step(current: f64, scale: f64, log_target: impl Fn(f64) -> f64, rng: &mut BdlRng) -> (f64, bool) {
    if scale <= 0.0 {
        return (current, true);
    }
    let z: f64 = rng.sample(StandardNormal);
    let proposal = current * (scale * z).exp();
    if !(proposal > 0.0 && proposal.is_finite()) {
        return (current, false);
    }
    let log_ratio = log_target(proposal) + proposal.ln() - log_target(current) - current.ln();
    if metropolis_accept(log_ratio, rng) {
        (proposal, true)
    } else {
        (current, false)
    }
}

/// Acceptance band targeted while tuning proposal scales during burn-in.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.23, 0.44);

/// Shrinks or grows a proposal scale toward the target acceptance band.
pub fn tune_scale(step: &mut f64, rate: f64) {
    if rate < TARGET_ACCEPTANCE.0 {
        *step *= 0.7;
    } else if rate > TARGET_ACCEPTANCE.1 {
        *step *= 1.4;
    }
}
