//! Perception component: the (generalized, λ_s → ∞) Bayesian SDAE as a
//! deterministic multilayer perceptron.
//!
//! Layers `1..L-1` apply the logistic sigmoid; layer `L` is affine. Rows of an
//! activation matrix are items, so a layer computes `X_l = σ(X_{l-1} W_l + b_l)`
//! with `W_l` of shape `K_{l-1} × K_l`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{BdlError, Result};
use crate::scalar::Scalar;

/// Weights and biases of an `L`-layer network (`L` even).
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> NetParams<T> {
    /// Validates and wraps layer tensors.
    pub fn new(weights: Vec<Array2<T>>, biases: Vec<Array1<T>>) -> Result<Self> {
        let p = NetParams { weights, biases };
        p.validate()?;
        Ok(p)
    }

    /// Zero-mean Gaussian initialization for an autoencoder with the given
    /// encoder widths; the decoder mirrors them. `encoder = [K_1, .., K]`
    /// yields `L = 2 · encoder.len()` layers.
    pub fn init_autoencoder<R: Rng + ?Sized>(
        input: usize,
        encoder: &[usize],
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if encoder.is_empty() {
            return Err(BdlError::Argument("autoencoder needs at least one hidden width".into()));
        }
        let mut widths = vec![input];
        widths.extend_from_slice(encoder);
        widths.extend(encoder.iter().rev().skip(1));
        widths.push(input);
        Self::init(&widths, std, rng)
    }

    /// Gaussian initialization for arbitrary chained widths `[K_0, .., K_L]`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], std: f64, rng: &mut R) -> Result<Self> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || {
                let z: f64 = rng.sample(StandardNormal);
                T::of(z * std)
            }));
            biases.push(Array1::zeros(w[1]));
        }
        Self::new(weights, biases)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        if l < 2 || !l.is_multiple_of(2) {
            return Err(BdlError::dim(format!("layer count {} must be even and >= 2", l)));
        }
        if self.biases.len() != l {
            return Err(BdlError::dim("one bias vector per layer required"));
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.ncols() != b.len() {
                return Err(BdlError::dim(format!(
                    "layer {}: weight has {} columns, bias has {}",
                    i + 1,
                    w.ncols(),
                    b.len()
                )));
            }
            if i + 1 < l && w.ncols() != self.weights[i + 1].nrows() {
                return Err(BdlError::dim(format!(
                    "layer {} output width {} does not feed layer {} input {}",
                    i + 1,
                    w.ncols(),
                    i + 2,
                    self.weights[i + 1].nrows()
                )));
            }
        }
        if self.input_width() != self.output_width() {
            return Err(BdlError::dim("autoencoder input and output widths differ"));
        }
        if self.weights.iter().flatten().chain(self.biases.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(BdlError::numeric("non-finite network parameter"));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn middle(&self) -> usize {
        self.n_layers() / 2
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_width(&self) -> usize {
        self.weights[self.n_layers() - 1].ncols()
    }

    /// Width `K = K_{L/2}` of the encoding.
    pub fn latent_width(&self) -> usize {
        self.weights[self.middle() - 1].ncols()
    }

    /// `Σ_l ‖W_l‖²_F + ‖b_l‖²`.
    pub fn sq_norm(&self) -> T {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameter `k` in a fixed flat order (weights then bias, layer by layer).
    pub fn flat_get(&self, k: usize) -> T {
        let mut k = k;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if k < w.len() {
                return w.as_slice().expect("standard layout")[k];
            }
            k -= w.len();
            if k < b.len() {
                return b[k];
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, k: usize, value: T) {
        let mut k = k;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if k < w.len() {
                w.as_slice_mut().expect("standard layout")[k] = value;
                return;
            }
            k -= w.len();
            if k < b.len() {
                b[k] = value;
                return;
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }
}

/// Per-layer gradients (same shapes as [`NetParams`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(p: &NetParams<T>) -> Self {
        Grads {
            weights: p.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: p.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, s: T) {
        self.weights.iter_mut().for_each(|w| w.mapv_inplace(|x| x * s));
        self.biases.iter_mut().for_each(|b| b.mapv_inplace(|x| x * s));
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, other: &Grads<T>, s: T) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(s, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(s, b);
        }
    }

    /// Adds the weight-decay gradient `λ_w W_l` (and `λ_w b_l`).
    pub fn add_weight_decay(&mut self, params: &NetParams<T>, lambda_w: T) {
        for (g, w) in self.weights.iter_mut().zip(&params.weights) {
            g.scaled_add(lambda_w, w);
        }
        for (g, b) in self.biases.iter_mut().zip(&params.biases) {
            g.scaled_add(lambda_w, b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .all(|x| x.is_finite())
    }

    pub fn flat_get(&self, k: usize) -> T {
        let mut k = k;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if k < w.len() {
                return w.as_slice().expect("standard layout")[k];
            }
            k -= w.len();
            if k < b.len() {
                return b[k];
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }

    pub fn max_abs(&self) -> T {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// Training hyperparameters shared by the CF and relational models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams<T> {
    pub lambda_w: T,
    pub lambda_n: T,
    pub lambda_v: T,
    pub lambda_u: T,
    pub lambda_s: T,
    pub lambda_r: T,
    pub lambda_l: T,
    pub a: T,
    pub b: T,
    pub learning_rate: T,
    pub momentum: T,
    pub corruption: T,
    pub batch_size: usize,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        Hyperparams {
            lambda_w: T::of(1e-4),
            lambda_n: T::of(1000.0),
            lambda_v: T::of(10.0),
            lambda_u: T::of(0.1),
            lambda_s: T::of(10.0),
            lambda_r: T::of(10.0),
            lambda_l: T::of(1.0),
            a: T::one(),
            b: T::of(0.01),
            learning_rate: T::of(0.01),
            momentum: T::of(0.9),
            corruption: T::of(0.3),
            batch_size: 128,
        }
    }
}

impl<T: Scalar> Hyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("lambda_w", self.lambda_w),
            ("lambda_n", self.lambda_n),
            ("lambda_v", self.lambda_v),
            ("lambda_u", self.lambda_u),
            ("lambda_s", self.lambda_s),
            ("lambda_r", self.lambda_r),
            ("lambda_l", self.lambda_l),
        ];
        for (name, v) in lambdas {
            if !(v >= T::zero()) || v.is_infinite() {
                return Err(BdlError::config(name, format!("must be finite and >= 0, got {}", v)));
            }
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(BdlError::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(BdlError::config("learning_rate", "must be > 0"));
        }
        if !(self.a > self.b && self.b > T::zero()) {
            return Err(BdlError::config("a", "confidence constants must satisfy a > b > 0"));
        }
        if !(self.corruption >= T::zero() && self.corruption <= T::one()) {
            return Err(BdlError::config("corruption", "must lie in [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(BdlError::config("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

fn check_input<T: Scalar>(x0: ArrayView2<'_, T>, params: &NetParams<T>) -> Result<()> {
    if x0.ncols() != params.input_width() {
        return Err(BdlError::dim(format!(
            "input has {} columns, network expects {}",
            x0.ncols(),
            params.input_width()
        )));
    }
    Ok(())
}

fn layer<T: Scalar>(x: ArrayView2<'_, T>, params: &NetParams<T>, l: usize) -> Array2<T> {
    let mut z = x.dot(&params.weights[l - 1]);
    z += &params.biases[l - 1];
    if l < params.n_layers() {
        z.mapv_inplace(Scalar::sigmoid);
    }
    z
}

/// Activations `X_1..X_upto` for the row batch `x0`.
pub fn forward<T: Scalar>(
    x0: ArrayView2<'_, T>,
    params: &NetParams<T>,
    upto: usize,
) -> Result<Vec<Array2<T>>> {
    check_input(x0, params)?;
    if upto > params.n_layers() {
        return Err(BdlError::dim(format!(
            "requested layer {} of a {}-layer network",
            upto,
            params.n_layers()
        )));
    }
    let mut acts: Vec<Array2<T>> = Vec::with_capacity(upto);
    for l in 1..=upto {
        let next = match acts.last() {
            Some(prev) => layer(prev.view(), params, l),
            None => layer(x0, params, l),
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(BdlError::numeric(format!("non-finite activation at layer {}", l)));
        }
        acts.push(next);
    }
    Ok(acts)
}

/// Encoder `f_e`: the activation of layer `L/2`.
pub fn encode<T: Scalar>(x0: ArrayView2<'_, T>, params: &NetParams<T>) -> Result<Array2<T>> {
    let mut acts = forward(x0, params, params.middle())?;
    Ok(acts.pop().expect("at least one layer"))
}

/// Encode-then-decode `f_r`: the activation of layer `L`.
pub fn reconstruct<T: Scalar>(x0: ArrayView2<'_, T>, params: &NetParams<T>) -> Result<Array2<T>> {
    let mut acts = forward(x0, params, params.n_layers())?;
    Ok(acts.pop().expect("at least one layer"))
}

/// Backpropagates arbitrary loss gradients injected at any layer.
///
/// `injected[l-1]`, when present, is `∂E/∂X_l` contributed directly by the
/// loss at layer `l`; contributions from layers above are accumulated by the
/// chain rule. Returns `∂E/∂W_l` and `∂E/∂b_l` summed over the batch.
pub fn backprop<T: Scalar>(
    x0: ArrayView2<'_, T>,
    params: &NetParams<T>,
    acts: &[Array2<T>],
    injected: &[Option<Array2<T>>],
) -> Result<Grads<T>> {
    let n = params.n_layers();
    if acts.len() != n || injected.len() != n {
        return Err(BdlError::dim("backprop needs activations and injections for every layer"));
    }
    let mut grads = Grads::zeros_like(params);
    let mut upstream: Option<Array2<T>> = None;
    for l in (1..=n).rev() {
        let mut g = match (upstream.take(), &injected[l - 1]) {
            (Some(u), Some(inj)) => u + inj,
            (Some(u), None) => u,
            (None, Some(inj)) => inj.clone(),
            (None, None) => Array2::zeros(acts[l - 1].raw_dim()),
        };
        if g.raw_dim() != acts[l - 1].raw_dim() {
            return Err(BdlError::dim(format!("gradient shape mismatch at layer {}", l)));
        }
        if l < n {
            Zip::from(&mut g)
                .and(&acts[l - 1])
                .for_each(|g, &x| *g = *g * x * (T::one() - x));
        }
        let below = if l == 1 { x0 } else { acts[l - 2].view() };
        grads.weights[l - 1] = below.t().dot(&g);
        grads.biases[l - 1] = g.sum_axis(Axis(0));
        if l > 1 {
            upstream = Some(g.dot(&params.weights[l - 1].t()));
        }
    }
    Ok(grads)
}

/// Gradients of `E = ‖X_L − Y‖²_F` with respect to every `W_l` and `b_l`
/// (no weight decay).
pub fn mlp_gradients<T: Scalar>(
    params: &NetParams<T>,
    x0: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
) -> Result<Grads<T>> {
    if target.ncols() != params.output_width() || target.nrows() != x0.nrows() {
        return Err(BdlError::dim("target shape does not match network output"));
    }
    let acts = forward(x0, params, params.n_layers())?;
    let mut injected: Vec<Option<Array2<T>>> = vec![None; params.n_layers()];
    let two = T::of(2.0);
    injected[params.n_layers() - 1] = Some((&acts[params.n_layers() - 1] - &target) * two);
    backprop(x0, params, &acts, &injected)
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum<T> {
    buffers: Grads<T>,
}

impl<T: Scalar> Momentum<T> {
    pub fn new(params: &NetParams<T>) -> Self {
        Momentum {
            buffers: Grads::zeros_like(params),
        }
    }

    pub fn buffers(&self) -> &Grads<T> {
        &self.buffers
    }
}

/// Heavy-ball step: `buf ← μ·buf + g`, `θ ← θ − η·buf`. Refuses non-finite
/// gradients without touching any state.
pub fn sgd_step<T: Scalar>(
    params: &mut NetParams<T>,
    grads: &Grads<T>,
    state: &mut Momentum<T>,
    learning_rate: T,
    momentum: T,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(BdlError::numeric("non-finite gradient; step refused"));
    }
    state.buffers.scale(momentum);
    state.buffers.add_scaled(grads, T::one());
    for (p, b) in params.weights.iter_mut().zip(&state.buffers.weights) {
        p.scaled_add(-learning_rate, b);
    }
    for (p, b) in params.biases.iter_mut().zip(&state.buffers.biases) {
        p.scaled_add(-learning_rate, b);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    fn zero_net(widths: &[usize]) -> NetParams<f64> {
        let weights = widths
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        let biases = widths[1..].iter().map(|&k| Array1::zeros(k)).collect();
        NetParams::new(weights, biases).unwrap()
    }

    #[test]
    fn zero_net_forward() {
        let p = zero_net(&[3, 2, 3]);
        let acts = forward(Array2::zeros((1, 3)).view(), &p, 2).unwrap();
        assert!(acts[0].iter().all(|&x| x == 0.5));
        assert!(acts[1].iter().all(|&x| x == 0.0));
        assert!(reconstruct(Array2::zeros((2, 3)).view(), &p).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_hidden_unit() {
        let p = NetParams::new(
            vec![array![[1.0]], array![[1.0]]],
            vec![array![0.0], array![0.0]],
        )
        .unwrap();
        let h = encode(array![[2.0]].view(), &p).unwrap();
        assert!((h[[0, 0]] - 0.880797f64).abs() < 1e-6);
    }

    #[test]
    fn six_layer_encode_is_third_layer() {
        let mut rng = seeded(3);
        let p = NetParams::<f64>::init_autoencoder(7, &[5, 4, 3], 0.3, &mut rng).unwrap();
        assert_eq!(p.n_layers(), 6);
        let x = Array2::from_shape_fn((4, 7), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin().abs());
        let acts = forward(x.view(), &p, 6).unwrap();
        assert_eq!(encode(x.view(), &p).unwrap(), acts[2]);
        assert_eq!(reconstruct(x.view(), &p).unwrap(), acts[5]);
        let half = forward(x.view(), &p, 3).unwrap();
        assert_eq!(&acts[..3], &half[..]);
    }

    #[test]
    fn shape_errors() {
        let p = zero_net(&[3, 2, 3]);
        assert!(matches!(forward(Array2::zeros((1, 4)).view(), &p, 2), Err(BdlError::Dimension(_))));
        assert!(matches!(forward(Array2::zeros((1, 3)).view(), &p, 3), Err(BdlError::Dimension(_))));
        assert!(NetParams::new(vec![Array2::<f64>::zeros((3, 3))], vec![Array1::zeros(3)]).is_err());
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let mut rng = seeded(5);
        let p = NetParams::<f64>::init_autoencoder(4, &[3], 0.5, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64 / 7.0);
        let y = reconstruct(x.view(), &p).unwrap();
        let g = mlp_gradients(&p, x.view(), y.view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn momentum_free_step_is_plain_sgd() {
        let mut p = zero_net(&[2, 1, 2]);
        let mut g = Grads::zeros_like(&p);
        g.weights[0][[0, 0]] = 2.0;
        let mut m = Momentum::new(&p);
        sgd_step(&mut p, &g, &mut m, 0.1, 0.0).unwrap();
        assert!((p.weights[0][[0, 0]] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_decays_buffers() {
        let mut p = zero_net(&[2, 1, 2]);
        let mut g = Grads::zeros_like(&p);
        g.biases[1][0] = 1.0;
        let mut m = Momentum::new(&p);
        sgd_step(&mut p, &g, &mut m, 0.1, 0.5).unwrap();
        let before = p.clone();
        let zero = Grads::zeros_like(&p);
        sgd_step(&mut p, &zero, &mut m, 0.0 + 1e-300, 0.5).unwrap();
        assert_eq!(m.buffers().biases[1][0], 0.5);
        assert_eq!(p.weights, before.weights);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut p = zero_net(&[2, 1, 2]);
        let mut g = Grads::zeros_like(&p);
        g.weights[1][[0, 0]] = f64::NAN;
        let mut m = Momentum::new(&p);
        let before = p.clone();
        assert!(matches!(sgd_step(&mut p, &g, &mut m, 0.1, 0.9), Err(BdlError::Numeric(_))));
        assert_eq!(p, before);
    }

    #[test]
    fn hyperparams_defaults_validate() {
        Hyperparams::<f64>::default().validate().unwrap();
        let h = Hyperparams::<f64> {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(h.validate().is_err());
    }
}
